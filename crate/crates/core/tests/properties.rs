use std::collections::BTreeSet;

use polysquare::diophantine::{
    certify_kronecker, lemma34_search, relation_residual, CertificateStatus, Lemma34Options,
    DEFAULT_CERTIFY_BUDGET,
};
use polysquare::dynamics::{
    frac, geodesic_flow, orbit, sweep, time_in_set, v_shift, w_shift, Direction2, Direction3,
    Termination,
};
use polysquare::geometry::{l_surface, torus, two_by_one};
use polysquare::stats::{
    detect_decomposition, equivalence_check, star_discrepancy_2d, ShiftSpace, VisitHistogram,
};
use polysquare::{ManifoldPoint, PolysquareSurface, SquareBox, SurfacePoint};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn surface(k: usize) -> PolysquareSurface {
    match k % 3 {
        0 => torus(),
        1 => two_by_one(),
        _ => l_surface(),
    }
}

fn unit() -> impl Strategy<Value = f64> {
    0.0..1.0f64
}

fn random_grid() -> impl Strategy<Value = Vec<(i64, i64)>> {
    proptest::collection::btree_set((0i64..4, 0i64..4), 1..12).prop_map(|s| s.into_iter().collect())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    let d = (a - b).abs();
    d < tol || (1.0 - d) < tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gluings_are_bijections(cells in random_grid()) {
        let p = PolysquareSurface::from_grid(cells).unwrap();
        for i in 0..p.squares() {
            prop_assert_eq!(p.left_of(p.right_of(i)), i);
            prop_assert_eq!(p.bottom_of(p.top_of(i)), i);
        }
    }

    #[test]
    fn cone_angle_accounting(cells in random_grid()) {
        let p = PolysquareSurface::from_grid(cells).unwrap();
        let excess: f64 = p
            .vertex_classes()
            .iter()
            .map(|c| c.cycle_length() as f64 / 4.0 - 1.0)
            .sum();
        prop_assert!((excess + p.euler_characteristic() as f64).abs() < 1e-12);
    }

    #[test]
    fn full_rectangles_are_flat(a in 1i64..6, b in 1i64..6) {
        let cells: Vec<(i64, i64)> = (0..a).flat_map(|c| (0..b).map(move |r| (c, r))).collect();
        let p = PolysquareSurface::from_grid(cells).unwrap();
        prop_assert!(!p.has_singularities());
    }

    #[test]
    fn lifts_project_back(k in 0usize..3, x in unit(), y in unit()) {
        let p = surface(k);
        let lifts = p.lifts_of((x, y)).unwrap();
        prop_assert_eq!(lifts.len(), p.squares());
        for q in lifts {
            prop_assert_eq!(q.project(), (x, y));
        }
    }

    #[test]
    fn flow_composes(
        k in 0usize..3, sq in 0usize..3, x in unit(), y in unit(),
        angle in 0.0..std::f64::consts::TAU, t1 in 0.0..5.0f64, t2 in 0.0..5.0f64,
    ) {
        let p = surface(k);
        let start = SurfacePoint::new(&p, sq % p.squares(), x, y).unwrap();
        let d = Direction2::new(angle.cos(), angle.sin()).unwrap();
        let whole = geodesic_flow(&p, &start, d, t1 + t2).unwrap();
        let first = geodesic_flow(&p, &start, d, t1).unwrap();
        prop_assume!(!whole.hit_singularity() && !first.hit_singularity());
        let mid = first.end_base.unwrap();
        let second = geodesic_flow(&p, &mid, d, t2).unwrap();
        prop_assume!(!second.hit_singularity());
        let (a, b) = (whole.end_base.unwrap(), second.end_base.unwrap());
        prop_assert_eq!(a.square, b.square);
        prop_assert!(close(a.x, b.x, 1e-9) && close(a.y, b.y, 1e-9));
    }

    #[test]
    fn unit_speed(
        k in 0usize..3, x in unit(), y in unit(),
        angle in 0.0..std::f64::consts::TAU, t in 0.0..50.0f64,
    ) {
        let p = surface(k);
        let start = SurfacePoint::new(&p, 0, x, y).unwrap();
        let d = Direction2::new(angle.cos(), angle.sin()).unwrap();
        let tr = geodesic_flow(&p, &start, d, t).unwrap();
        if tr.termination == Termination::Completed {
            prop_assert!((tr.duration_sum() - t).abs() < 1e-9);
        }
    }

    #[test]
    fn w_shift_projects_to_translation(
        k in 0usize..3, sq in 0usize..3, x in unit(), y in unit(), z in unit(),
        v1 in -3.0..3.0f64, v2 in -3.0..3.0f64, w3 in unit(),
    ) {
        let p = surface(k);
        let m = p.product_with_circle();
        let v = Direction2::new(v1, v2).unwrap();
        let pt = ManifoldPoint::new(SurfacePoint::new(&p, sq % p.squares(), x, y).unwrap(), z).unwrap();
        if let Ok(q) = w_shift(&m, &pt, v, w3) {
            prop_assert_eq!(q.project(), (frac(x + v1), frac(y + v2), frac(z + w3)));
        }
    }

    #[test]
    fn count_time_identity(
        k in 0usize..3, x in unit(), y in unit(), v1 in 0.01..1.0f64, v2 in 0.01..1.0f64,
        bx in 0.0..0.5f64, by in 0.0..0.5f64, w in 0.1..0.5f64, h in 0.1..0.5f64,
        j in 0usize..300,
    ) {
        let p = surface(k);
        let start = SurfacePoint::new(&p, 0, x, y).unwrap();
        let s = SquareBox::new(&p, p.squares() - 1, (bx, bx + w), (by, by + h)).unwrap();
        if let Ok(r) = equivalence_check(&p, &start, Direction2 { v1, v2 }, &s, j) {
            prop_assert!(r.residual <= 1e-9 * r.t.max(1.0), "{:?}", r);
        }
    }

    #[test]
    fn nesting_is_monotone(
        x in unit(), y in unit(), x0 in 0.0..0.4f64, w in 0.1..0.3f64, grow in 0.0..0.3f64,
    ) {
        let p = l_surface();
        let v = Direction2 { v1: frac(2f64.sqrt()), v2: frac(3f64.sqrt()) };
        let orb = orbit(&p, SurfacePoint::new(&p, 1, x, y).unwrap(), v, 2000).unwrap();
        let inner = SquareBox::new(&p, 2, (x0, x0 + w), (x0, x0 + w)).unwrap();
        let outer = SquareBox::new(&p, 2, (x0, x0 + w + grow), (x0 * 0.5, x0 + w + grow)).unwrap();
        prop_assert!(inner.is_subset_of(&outer));
        let h = VisitHistogram::from_points(&orb.points, &[inner, outer], 3).unwrap();
        prop_assert!(h.counts[0] <= h.counts[1]);
    }

    #[test]
    fn partitions_are_complete(
        cuts in proptest::collection::vec((0.05..0.95f64, 0.05..0.95f64), 3),
        x in unit(), y in unit(),
    ) {
        let p = l_surface();
        let v = Direction2 { v1: frac(2f64.sqrt()), v2: frac(3f64.sqrt()) };
        let orb = orbit(&p, SurfacePoint::new(&p, 0, x, y).unwrap(), v, 3000).unwrap();
        let mut sets = Vec::new();
        for (sq, &(cx, cy)) in cuts.iter().enumerate() {
            for xs in [(0.0, cx), (cx, 1.0)] {
                for ys in [(0.0, cy), (cy, 1.0)] {
                    sets.push(SquareBox::new(&p, sq, xs, ys).unwrap());
                }
            }
        }
        let h = VisitHistogram::from_points(&orb.points, &sets, 3).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<f64>(), 3000.0);
    }

    #[test]
    fn relations_verify(p1 in 1i64..20, q1 in 1i64..20, p2 in 1i64..20, q2 in 1i64..20) {
        let v = [p1 as f64 / q1 as f64, p2 as f64 / q2 as f64];
        let c = certify_kronecker(&v, 20, DEFAULT_CERTIFY_BUDGET).unwrap();
        match &c.status {
            CertificateStatus::RelationFound { coefficients } => {
                prop_assert!(c.verify());
                prop_assert!(relation_residual(coefficients, &v) < 1e-9);
            }
            CertificateStatus::NoRelationUpToH => prop_assert!(false, "rational input certified"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lemma34_results_pass_oracle(eps in 0.05..0.5f64, pick in 0usize..4) {
        let triples = [(2u64, 3u64, 5u64), (2, 5, 7), (3, 5, 7), (2, 3, 7)];
        let (a, b, c) = triples[pick];
        let (a, b, c) = ((a as f64).sqrt(), (b as f64).sqrt(), (c as f64).sqrt());
        let r = lemma34_search(a, b, c, eps, Lemma34Options::default()).unwrap();
        let norm = |x: f64| { let f = x.rem_euclid(1.0); f.min(1.0 - f) };
        for &m in &r.m_list {
            prop_assert!(norm(m as f64 * a) < eps && norm(m as f64 * b) < eps);
        }
        let mut z: Vec<f64> = r.m_list.iter().map(|&m| (m as f64 * c).rem_euclid(1.0)).collect();
        z.sort_by(|p, q| p.total_cmp(q));
        let mut gap = z[0] + 1.0 - z[z.len() - 1];
        for w in z.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        prop_assert!(gap < eps);
    }

    #[test]
    fn decomposition_measures_add_up(k in 0usize..3, a in 1u32..16, b in 0u32..16) {
        let p = surface(k);
        let v = Direction2 { v1: a as f64 / 16.0, v2: b as f64 / 16.0 };
        let r = detect_decomposition(ShiftSpace::Surface { surface: &p, v }, 16, 1).unwrap();
        let total: f64 = r.measures.iter().sum::<f64>()
            + r.singular_cells.len() as f64 * r.cell_measure;
        prop_assert!((total - p.area()).abs() < 1e-9);
        let cells: BTreeSet<usize> = r.components.iter().flatten().copied().collect();
        prop_assert_eq!(cells.len() + r.singular_cells.len(), p.squares() * 256);
        // Rational grid steps move centers onto centers, so a component can
        // only be open when its centers run into a cone point.
        if r.singular_cells.is_empty() {
            prop_assert!(r.closed.iter().all(|&c| c));
        }
        for (i, comp) in r.components.iter().enumerate() {
            if r.closed[i] {
                continue;
            }
            let c = comp[0];
            let mut pt = SurfacePoint {
                square: c / 256,
                x: ((c % 16) as f64 + 0.5) / 16.0,
                y: ((c / 16 % 16) as f64 + 0.5) / 16.0,
            };
            let mut hit = false;
            for _ in 0..p.squares() * 256 {
                match v_shift(&p, &pt, v) {
                    Ok(q) => pt = q,
                    Err(_) => {
                        hit = true;
                        break;
                    }
                }
            }
            prop_assert!(hit, "open component {} never meets a cone point", i);
        }
    }
}

#[test]
fn projected_orbit_discrepancy_matches_classical() {
    let p = l_surface();
    let v = Direction2 { v1: frac(2f64.sqrt()), v2: frac(3f64.sqrt()) };
    let start = SurfacePoint::new(&p, 2, 0.31, 0.77).unwrap();
    let orb = orbit(&p, start, v, 20_000).unwrap();
    let projected: Vec<(f64, f64)> = orb.points.iter().map(|q| q.project()).collect();
    let mut classical = Vec::with_capacity(20_000);
    let (mut x, mut y) = (0.31f64, 0.77f64);
    for j in 0..20_000 {
        if j > 0 {
            x += v.v1;
            x -= x.floor();
            y += v.v2;
            y -= y.floor();
        }
        classical.push((x, y));
    }
    let a = star_discrepancy_2d(&projected, 1 << 16).unwrap().value;
    let b = star_discrepancy_2d(&classical, 1 << 16).unwrap().value;
    assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
}

#[test]
fn v_shift_preserves_measure() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 100_000;
    for p in [torus(), two_by_one(), l_surface()] {
        let s = p.squares();
        let v = Direction2 { v1: frac(2f64.sqrt()), v2: frac(3f64.sqrt()) };
        let b = SquareBox::new(&p, s - 1, (0.2, 0.7), (0.1, 0.5)).unwrap();
        let mut hits = 0;
        for _ in 0..n {
            let x = SurfacePoint::new(&p, rng.random_range(0..s), rng.random(), rng.random()).unwrap();
            if b.contains(&v_shift(&p, &x, v).unwrap()) {
                hits += 1;
            }
        }
        let prob = b.area() / s as f64;
        let sigma = (prob * (1.0 - prob) / n as f64).sqrt();
        let frac_in = hits as f64 / n as f64;
        assert!((frac_in - prob).abs() <= 4.0 * sigma, "{frac_in} vs {prob}");
    }
}

#[test]
fn sweep_volume_by_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let p = l_surface();
    let m = p.product_with_circle();
    let s = SquareBox::new(&p, 0, (0.55, 0.95), (0.4, 0.9)).unwrap();
    let dir = Direction3::new(frac(2f64.sqrt()), frac(3f64.sqrt()), 1.0).unwrap();
    let sw = sweep(&s, dir, &m).unwrap();
    assert!((sw.volume() - s.area()).abs() < 1e-12);
    let n = 1_000_000;
    let mut hits = 0;
    for _ in 0..n {
        let base = SurfacePoint::new(&p, rng.random_range(0..3), rng.random(), rng.random()).unwrap();
        if sw.contains(&ManifoldPoint::new(base, rng.random()).unwrap()) {
            hits += 1;
        }
    }
    let prob = s.area() / 3.0;
    let sigma = (prob * (1.0 - prob) / n as f64).sqrt();
    let est = hits as f64 / n as f64;
    assert!((est - prob).abs() <= 3.0 * sigma, "{est} vs {prob}");
}

#[test]
fn sweep_time_matches_volume_on_long_geodesic() {
    let p = two_by_one();
    let m = p.product_with_circle();
    let s = SquareBox::new(&p, 1, (0.1, 0.6), (0.2, 0.9)).unwrap();
    let dir = Direction3::new(frac(3f64.sqrt()), frac(7f64.sqrt()), 1.0).unwrap();
    let sw = sweep(&s, dir, &m).unwrap();
    let start = ManifoldPoint::new(SurfacePoint::new(&p, 0, 0.4, 0.4).unwrap(), 0.0).unwrap();
    let t = 20_000.0;
    let tr = polysquare::geodesic_flow_manifold(&m, &start, dir, t).unwrap();
    let ratio = time_in_set(&tr, &sw) / (t * sw.volume() / 2.0);
    assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
}
