//! One function per subcommand. Each returns the report printed on stdout.

use polysquare::diophantine::{
    certify_kronecker, lemma34_search, CertificateStatus, KroneckerCertificate, Lemma34Options,
    DEFAULT_CERTIFY_BUDGET, DEFAULT_SCAN_BUDGET, LEMMA34_CERTIFY_HEIGHT,
};
use polysquare::dynamics::{
    geodesic_flow, geodesic_flow_manifold, orbit, orbit_manifold, sweep, Direction2, Direction3,
    GeodesicTrace, OrbitTermination, Termination,
};
use polysquare::stats::{
    detect_decomposition, equivalence_check, star_discrepancy_2d, stepup,
    visiting_ratio_continuous, visiting_ratio_discrete, ShiftSpace, DEFAULT_BOX_BUDGET,
    DEFAULT_CHECKPOINTS, DEFAULT_SAMPLES_PER_AXIS,
};
use polysquare::{CubeBox, ManifoldPoint, PolysquareSurface, SquareBox, SurfacePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{surface_from_value, ExperimentConfig, InputRecord, Space};
use crate::error::CliError;
use crate::output::{envelope, Out};

pub const DEFAULT_HEIGHT: u64 = 100;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;
pub const DEFAULT_RESOLUTION: usize = 16;

pub struct Context {
    pub out: Out,
    pub seed: u64,
}

fn height(cfg: &ExperimentConfig) -> u64 {
    cfg.height.unwrap_or(DEFAULT_HEIGHT)
}

fn certify(cfg: &ExperimentConfig, v: &[f64]) -> Result<KroneckerCertificate, CliError> {
    Ok(certify_kronecker(
        v,
        height(cfg),
        cfg.certify_budget.unwrap_or(DEFAULT_CERTIFY_BUDGET),
    )?)
}

fn require_kronecker(c: &KroneckerCertificate, what: &str) -> Result<(), CliError> {
    match &c.status {
        CertificateStatus::NoRelationUpToH => Ok(()),
        CertificateStatus::RelationFound { coefficients } => Err(CliError::Config(format!(
            "{what} is not Kronecker at height {}: relation {coefficients:?}",
            c.height
        ))),
    }
}

fn checkpoints(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.checkpoints.clone().unwrap_or_else(|| DEFAULT_CHECKPOINTS.to_vec())
}

fn atomic_squares(p: &PolysquareSurface) -> Vec<SquareBox> {
    (0..p.squares()).map(SquareBox::full).collect()
}

fn atomic_cubes(p: &PolysquareSurface) -> Vec<CubeBox> {
    (0..p.squares()).map(CubeBox::full).collect()
}

fn quadrants(p: &PolysquareSurface) -> Vec<SquareBox> {
    let mut out = Vec::new();
    for sq in 0..p.squares() {
        for (x, y) in [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)] {
            out.push(SquareBox::new(p, sq, (x, x + 0.5), (y, y + 0.5)).expect("inside square"));
        }
    }
    out
}

fn octants(p: &PolysquareSurface) -> Vec<CubeBox> {
    quadrants(p)
        .into_iter()
        .flat_map(|b| [(0.0, 0.5), (0.5, 1.0)].map(|z| CubeBox::new(b, z).expect("inside cube")))
        .collect()
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

pub fn surface(cfg_value: &Value) -> Result<Value, CliError> {
    let spec = cfg_value.get("surface").unwrap_or(cfg_value);
    let p = surface_from_value(spec)?;
    let classes: Vec<Value> = p
        .vertex_classes()
        .iter()
        .map(|c| {
            json!({
                "corners": c.corners.len(),
                "cone_angle_over_pi": c.cycle_length() as f64 / 2.0,
                "singular": c.is_singular(),
                "members": c.corners.iter().map(|v| format!("{}:{:?}", v.square, v.corner)).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(json!({
        "summary": p.to_string(),
        "s": p.squares(),
        "h_gluings": p.h_gluings(),
        "v_gluings": p.v_gluings(),
        "singular_classes": p.singular_classes().count(),
        "euler_characteristic": p.euler_characteristic(),
        "genus": p.genus(),
        "vertex_classes": classes,
    }))
}

fn write_orbit_csv<P>(
    ctx: &Context,
    points: &[P],
    row: impl Fn(&P) -> Vec<String>,
    header: &[&str],
) -> Result<(), CliError> {
    if let Some(mut w) = ctx.out.csv("orbit.csv")? {
        w.write_record(header)?;
        for (i, p) in points.iter().enumerate() {
            let mut r = vec![i.to_string()];
            r.extend(row(p));
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn termination_json(t: OrbitTermination) -> Value {
    match t {
        OrbitTermination::Completed => json!({"termination": "Completed", "at": null}),
        OrbitTermination::PathologicalStart { index } => {
            json!({"termination": "PathologicalStart", "at": index})
        }
    }
}

pub fn orbit_cmd(cfg: &ExperimentConfig, ctx: &Context) -> Result<Value, CliError> {
    let mut inputs: Vec<InputRecord> = Vec::new();
    let p = cfg.surface()?;
    let v = cfg.step(&mut inputs)?;
    let w3 = match &cfg.w3 {
        Some(_) => Some(cfg.real("w3", &cfg.w3, &mut inputs)?),
        None => None,
    };
    let j = cfg.length_j()?;
    let start = cfg.start(&p)?;
    let comps: Vec<f64> = [v.v1, v.v2].into_iter().chain(w3).collect();
    let cert = certify(cfg, &comps)?;
    let marks = checkpoints(cfg);

    let (termination, report, discrepancy) = match w3 {
        None => {
            let sets = cfg.square_boxes(&p)?.unwrap_or_else(|| atomic_squares(&p));
            let orb = orbit(&p, start.base, v, j)?;
            write_orbit_csv(ctx, &orb.points, |q| vec![q.square.to_string(), fmt(q.x), fmt(q.y)], &[
                "index", "square", "x", "y",
            ])?;
            let report = if orb.is_empty() {
                None
            } else {
                Some(visiting_ratio_discrete(&orb.points, &sets, p.squares(), &marks)?)
            };
            let proj: Vec<(f64, f64)> = orb.points.iter().map(|q| q.project()).collect();
            let budget = cfg.discrepancy_budget.unwrap_or(DEFAULT_BOX_BUDGET);
            let disc = if proj.is_empty() {
                None
            } else {
                Some(star_discrepancy_2d(&proj, budget)?)
            };
            (orb.termination, report, disc)
        }
        Some(w3) => {
            let m = p.product_with_circle();
            let sets = cfg.cube_boxes(&p)?.unwrap_or_else(|| atomic_cubes(&p));
            let orb = orbit_manifold(&m, start, v, w3, j)?;
            write_orbit_csv(
                ctx,
                &orb.points,
                |q| vec![q.base.square.to_string(), fmt(q.base.x), fmt(q.base.y), fmt(q.z)],
                &["index", "square", "x", "y", "z"],
            )?;
            let report = if orb.is_empty() {
                None
            } else {
                Some(visiting_ratio_discrete(&orb.points, &sets, p.squares(), &marks)?)
            };
            (orb.termination, report, None)
        }
    };
    ctx.out.json("orbit.json", &termination_json(termination))?;
    if let Some(r) = &report {
        ctx.out.uniformity("", r)?;
    }
    let env = envelope(
        "orbit",
        height(cfg),
        &inputs,
        json!({
            "j": j,
            "s": p.squares(),
            "certificate": cert,
            "orbit": termination_json(termination),
            "uniformity": report,
            "star_discrepancy": discrepancy,
        }),
    );
    ctx.out.json("report.json", &env)?;
    if let OrbitTermination::PathologicalStart { index } = termination {
        return Err(CliError::Singular(format!("PathologicalStart at index {index}")));
    }
    Ok(env)
}

fn write_segments(ctx: &Context, trace: &GeodesicTrace) -> Result<(), CliError> {
    if let Some(mut w) = ctx.out.csv("segments.csv")? {
        let mut header = vec!["index", "square", "x0", "y0"];
        if trace.in_manifold {
            header.push("z0");
        }
        header.extend(["x1", "y1"]);
        if trace.in_manifold {
            header.push("z1");
        }
        header.extend(["duration", "offset"]);
        w.write_record(&header)?;
        for (i, s) in trace.segments.iter().enumerate() {
            let mut r = vec![i.to_string(), s.square.to_string(), fmt(s.start[0]), fmt(s.start[1])];
            if trace.in_manifold {
                r.push(fmt(s.start[2]));
            }
            r.extend([fmt(s.end[0]), fmt(s.end[1])]);
            if trace.in_manifold {
                r.push(fmt(s.end[2]));
            }
            r.extend([fmt(s.duration), fmt(s.offset)]);
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn geodesic_cmd(cfg: &ExperimentConfig, ctx: &Context) -> Result<Value, CliError> {
    let mut inputs: Vec<InputRecord> = Vec::new();
    let p = cfg.surface()?;
    let v = cfg.step(&mut inputs)?;
    let t = cfg.length_t()?;
    let start = cfg.start(&p)?;
    let marks = checkpoints(cfg);
    let (trace, report, cert) = match &cfg.v3 {
        None => {
            let sets = cfg.square_boxes(&p)?.unwrap_or_else(|| atomic_squares(&p));
            let cert = if v.v1 != 0.0 {
                Some(certify(cfg, &[v.v2 / v.v1])?)
            } else {
                None
            };
            let trace = geodesic_flow(&p, &start.base, v, t)?;
            let report = if trace.duration_sum() > 0.0 {
                Some(visiting_ratio_continuous(&trace, &sets, p.squares(), &marks)?)
            } else {
                None
            };
            (trace, report, cert)
        }
        Some(_) => {
            let v3 = cfg.real("v3", &cfg.v3, &mut inputs)?;
            let dir = Direction3::new(v.v1, v.v2, v3)
                .map_err(|e| CliError::Config(format!("field `v3`: {e}")))?;
            let m = p.product_with_circle();
            let sets = cfg.cube_boxes(&p)?.unwrap_or_else(|| atomic_cubes(&p));
            let cert = if v3 != 0.0 {
                Some(certify(cfg, &[v.v1 / v3, v.v2 / v3])?)
            } else {
                None
            };
            let trace = geodesic_flow_manifold(&m, &start, dir, t)?;
            let report = if trace.duration_sum() > 0.0 {
                Some(visiting_ratio_continuous(&trace, &sets, p.squares(), &marks)?)
            } else {
                None
            };
            (trace, report, cert)
        }
    };
    write_segments(ctx, &trace)?;
    if let Some(r) = &report {
        ctx.out.uniformity("", r)?;
    }
    let term = match trace.termination {
        Termination::Completed => json!({"termination": "Completed", "at": null}),
        Termination::HitSingularity { time, vertex } => json!({
            "termination": "HitSingularity",
            "at": time,
            "vertex": {"square": vertex.square, "corner": format!("{:?}", vertex.corner)},
        }),
    };
    let env = envelope(
        "geodesic",
        height(cfg),
        &inputs,
        json!({
            "t": t,
            "s": p.squares(),
            "segments": trace.segments.len(),
            "certificate": cert,
            "geodesic": term,
            "uniformity": report,
        }),
    );
    ctx.out.json("report.json", &env)?;
    if let Termination::HitSingularity { time, .. } = trace.termination {
        return Err(CliError::Singular(format!("HitSingularity at t={time}")));
    }
    Ok(env)
}

/// Monte-Carlo estimate of `λ(S*)` over `P × [0,1)`.
fn sweep_volume_mc(
    p: &PolysquareSurface,
    set: &SquareBox,
    v: Direction2,
    samples: usize,
    seed: u64,
) -> Result<Value, CliError> {
    let m = p.product_with_circle();
    let dir = Direction3::new(v.v1, v.v2, 1.0)?;
    let sw = sweep(set, dir, &m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = p.squares();
    let mut hits = 0usize;
    for _ in 0..samples {
        let base = SurfacePoint {
            square: rng.random_range(0..s),
            x: rng.random(),
            y: rng.random(),
        };
        let q = ManifoldPoint { base, z: rng.random() };
        if sw.contains(&q) {
            hits += 1;
        }
    }
    let prob = set.area() / s as f64;
    let est = hits as f64 / samples.max(1) as f64;
    let sigma = (prob * (1.0 - prob) / samples.max(1) as f64).sqrt();
    Ok(json!({
        "samples": samples,
        "seed": seed,
        "estimate": est * s as f64,
        "exact": sw.volume(),
        "sigma": sigma * s as f64,
        "within_3_sigma": (est - prob).abs() <= 3.0 * sigma,
    }))
}

pub fn equivalence_cmd(cfg: &ExperimentConfig, ctx: &Context) -> Result<Value, CliError> {
    let mut inputs: Vec<InputRecord> = Vec::new();
    let p = cfg.surface()?;
    let v = cfg.step(&mut inputs)?;
    let j = cfg.length_j()?;
    let start = cfg.start(&p)?.base;
    let sets = ExperimentConfig::require("test_sets", &cfg.square_boxes(&p)?)?.clone();
    let cert = certify(cfg, &[v.v1, v.v2])?;
    require_kronecker(&cert, "step")?;
    let samples = cfg.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES);

    let mut marks: Vec<usize> = checkpoints(cfg)
        .into_iter()
        .filter(|&c| c >= 1.0 && c < j as f64)
        .map(|c| c as usize)
        .collect();
    marks.push(j);
    marks.sort_unstable();
    marks.dedup();

    let mut rows = Vec::new();
    let mut trend_rows = Vec::new();
    for (i, s) in sets.iter().enumerate() {
        for &jc in &marks {
            let r = equivalence_check(&p, &start, v, s, jc)?;
            let dev = [r.ratio_discrete, r.ratio_continuous]
                .iter()
                .flatten()
                .map(|x| (x - 1.0).abs())
                .fold(0.0, f64::max);
            trend_rows.push(json!({
                "set": i, "j": jc, "count": r.count, "time": r.time, "residual": r.residual,
                "ratio_discrete": r.ratio_discrete, "ratio_continuous": r.ratio_continuous,
                "sup_deviation": dev,
            }));
            if jc == j {
                let mc = sweep_volume_mc(&p, s, v, samples, ctx.seed.wrapping_add(i as u64))?;
                rows.push((r, mc));
            }
        }
    }
    if let Some(mut w) = ctx.out.csv("equivalence.csv")? {
        w.write_record([
            "set", "square", "j", "count", "time", "g", "residual", "tolerance", "identity_holds",
            "ratio_discrete", "ratio_continuous",
        ])?;
        for (i, (r, _)) in rows.iter().enumerate() {
            let opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
            w.write_record([
                i.to_string(),
                sets[i].square.to_string(),
                r.j.to_string(),
                r.count.to_string(),
                fmt(r.time),
                fmt(r.g),
                fmt(r.residual),
                fmt(r.tolerance),
                r.identity_holds.to_string(),
                opt(r.ratio_discrete),
                opt(r.ratio_continuous),
            ])?;
        }
        w.flush()?;
    }
    let summary: Vec<Value> = marks
        .iter()
        .map(|&jc| {
            let at = trend_rows.iter().filter(|t| t["j"] == jc);
            let sup = at.clone().filter_map(|t| t["sup_deviation"].as_f64()).fold(0.0, f64::max);
            let res = at.filter_map(|t| t["residual"].as_f64()).fold(0.0, f64::max);
            json!({"j": jc, "sup_deviation": sup, "max_residual": res})
        })
        .collect();
    if let Some(mut w) = ctx.out.csv("trend.csv")? {
        w.write_record(["j", "sup_deviation", "max_residual"])?;
        for t in &summary {
            w.write_record(["j", "sup_deviation", "max_residual"].map(|k| t[k].to_string()))?;
        }
        w.flush()?;
    }
    if let Some(mut w) = ctx.out.csv("set_trend.csv")? {
        w.write_record([
            "set", "j", "count", "time", "residual", "ratio_discrete", "ratio_continuous",
            "sup_deviation",
        ])?;
        for t in &trend_rows {
            let cell = |k: &str| match &t[k] {
                Value::Null => String::new(),
                x => x.to_string(),
            };
            w.write_record(
                ["set", "j", "count", "time", "residual", "ratio_discrete", "ratio_continuous", "sup_deviation"]
                    .map(cell),
            )?;
        }
        w.flush()?;
    }
    let all_hold = rows.iter().all(|(r, _)| r.identity_holds);
    let env = envelope(
        "equivalence",
        height(cfg),
        &inputs,
        json!({
            "j": j,
            "certificate": cert,
            "identity_holds": all_hold,
            "sets": rows.iter().map(|(r, mc)| json!({"report": r, "sweep_volume_mc": mc})).collect::<Vec<_>>(),
            "trend": summary,
            "set_trend": trend_rows,
        }),
    );
    ctx.out.json("equivalence.json", &env)?;
    Ok(env)
}

pub fn stepup_cmd(cfg: &ExperimentConfig, ctx: &Context) -> Result<Value, CliError> {
    let mut inputs: Vec<InputRecord> = Vec::new();
    let p = cfg.surface()?;
    let v = cfg.step(&mut inputs)?;
    let w3 = cfg.real("w3", &cfg.w3, &mut inputs)?;
    let j = cfg.length_j()?;
    let start = cfg.start(&p)?;
    let base_cert = certify(cfg, &[v.v1, v.v2])?;
    require_kronecker(&base_cert, "step")?;
    let lift_cert = certify(cfg, &[v.v1, v.v2, w3])?;
    require_kronecker(&lift_cert, "lifted step (v1, v2, w3)")?;
    let psets = cfg.square_boxes(&p)?.unwrap_or_else(|| quadrants(&p));
    let msets = cfg.cube_boxes(&p)?.unwrap_or_else(|| octants(&p));
    let r = stepup(&p, start, v, w3, j, &psets, &msets, &checkpoints(cfg))?;
    ctx.out.uniformity("surface_", &r.surface)?;
    ctx.out.uniformity("manifold_", &r.manifold)?;
    let env = envelope(
        "stepup",
        height(cfg),
        &inputs,
        json!({
            "j": j,
            "certificates": {"base": base_cert, "lift": lift_cert},
            "report": r,
        }),
    );
    ctx.out.json("stepup.json", &env)?;
    Ok(env)
}

fn oracle_norm(x: f64) -> f64 {
    let f = x.rem_euclid(1.0);
    f.min(1.0 - f)
}

pub fn lemma34_cmd(cfg: &ExperimentConfig, ctx: &Context) -> Result<Value, CliError> {
    let mut inputs: Vec<InputRecord> = Vec::new();
    let v1 = cfg.real("v1", &cfg.v1, &mut inputs)?;
    let v2 = cfg.real("v2", &cfg.v2, &mut inputs)?;
    let w = cfg.real("w", &cfg.w, &mut inputs)?;
    let eps = *ExperimentConfig::require("eps", &cfg.eps)?;
    let opts = Lemma34Options {
        scan_budget: cfg.scan_budget.unwrap_or(DEFAULT_SCAN_BUDGET),
        certify_height: LEMMA34_CERTIFY_HEIGHT,
    };
    let r = lemma34_search(v1, v2, w, eps, opts)?;
    let bounds_ok = r
        .m_list
        .iter()
        .all(|&m| oracle_norm(m as f64 * v1) < eps && oracle_norm(m as f64 * v2) < eps);
    let mut z: Vec<f64> = r.m_list.iter().map(|&m| (m as f64 * w).rem_euclid(1.0)).collect();
    z.sort_by(f64::total_cmp);
    let gap = z
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(z[0] + 1.0 - z[z.len() - 1], f64::max);
    let env = envelope(
        "lemma34",
        LEMMA34_CERTIFY_HEIGHT,
        &inputs,
        json!({
            "search": r,
            "scan_budget": opts.scan_budget,
            "oracle": {"bounds_ok": bounds_ok, "max_gap": gap, "gap_ok": gap < eps || eps >= 1.0},
        }),
    );
    ctx.out.json("lemma34.json", &env)?;
    Ok(env)
}

pub fn decompose_cmd(cfg: &ExperimentConfig, ctx: &Context) -> Result<Value, CliError> {
    let mut inputs: Vec<InputRecord> = Vec::new();
    let p = cfg.surface()?;
    let v = cfg.step(&mut inputs)?;
    let resolution = cfg.resolution.unwrap_or(DEFAULT_RESOLUTION);
    let samples = cfg.samples_per_axis.unwrap_or(DEFAULT_SAMPLES_PER_AXIS);
    let space = cfg.space.unwrap_or(if cfg.w3.is_some() { Space::Manifold } else { Space::Surface });
    let m = p.product_with_circle();
    let (r, cert) = match space {
        Space::Surface => (
            detect_decomposition(ShiftSpace::Surface { surface: &p, v }, resolution, samples)?,
            certify(cfg, &[v.v1, v.v2])?,
        ),
        Space::Manifold => {
            let w3 = cfg.real("w3", &cfg.w3, &mut inputs)?;
            (
                detect_decomposition(ShiftSpace::Manifold { manifold: &m, v, w3 }, resolution, samples)?,
                certify(cfg, &[v.v1, v.v2, w3])?,
            )
        }
    };
    if let Some(mut w) = ctx.out.csv("components.csv")? {
        for row in r.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    let env = envelope(
        "decompose",
        height(cfg),
        &inputs,
        json!({
            "certificate": cert,
            "grid_resolution": r.grid_resolution,
            "samples_per_axis": r.samples_per_axis,
            "dimension": r.dimension,
            "k": r.k,
            "measures": r.measures,
            "closed": r.closed,
            "singular_cells": r.singular_cells,
        }),
    );
    ctx.out.json("decomposition.json", &env)?;
    ctx.out.json("components.json", &r.components)?;
    Ok(env)
}

pub fn certify_cmd(cfg: &ExperimentConfig, ctx: &Context) -> Result<Value, CliError> {
    let mut inputs: Vec<InputRecord> = Vec::new();
    let comps = ExperimentConfig::require("components", &cfg.components)?;
    let mut values = Vec::new();
    for (i, c) in comps.iter().enumerate() {
        let (x, rec) = c.resolve(&format!("components[{i}]"))?;
        values.push(x);
        inputs.push(rec);
    }
    let cert = certify(cfg, &values)?;
    let env = envelope(
        "certify",
        height(cfg),
        &inputs,
        json!({
            "certificate": cert,
            "kronecker": cert.is_kronecker(),
            "verified": cert.verify(),
            "budget": cfg.certify_budget.unwrap_or(DEFAULT_CERTIFY_BUDGET),
        }),
    );
    ctx.out.json("certificate.json", &env)?;
    Ok(env)
}
