//! Visit statistics, discrepancy, and invariant-set detection.

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    geodesic_flow_manifold, orbit, sweep, time_in_set, v_shift, w_shift, Direction2, Direction3,
    FlowError, GeodesicTrace, OrbitTermination, SweepSet, Termination, TimeMeasure,
};
use crate::geometry::{
    CubeBox, ManifoldPoint, PolycubeManifold, PolysquareSurface, SquareBox, SurfacePoint,
};

/// Orbit lengths (or flow times) at which the trend is sampled.
pub const DEFAULT_CHECKPOINTS: [f64; 4] = [1e3, 1e4, 1e5, 1e6];

/// Relative tolerance of the count/time identity.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Default cap on anchored boxes examined by [`star_discrepancy_2d`].
pub const DEFAULT_BOX_BUDGET: usize = 1 << 18;

/// Sub-cell samples per axis used by [`detect_decomposition`].
pub const DEFAULT_SAMPLES_PER_AXIS: usize = 4;

/// Class of sets uniformity is tested against.
pub const TEST_CLASS: &str = "axis-parallel boxes in atomic cells, plus star discrepancy";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("test set {index} has zero measure")]
    ZeroMeasureSet { index: usize },
    #[error("no test sets given")]
    NoTestSets,
    #[error("input is empty")]
    EmptyInput,
    #[error("orbit point {index} is undefined: the supporting geodesic meets a cone point")]
    PathologicalStart { index: usize },
    #[error("geodesic meets a cone point at t={time}")]
    SingularGeodesic { time: f64 },
    #[error("histograms over different test sets cannot be merged")]
    MismatchedHistograms,
    #[error("resolution must be at least 8 cells per unit, got {0}")]
    InvalidResolution(usize),
    #[error("step length {step} is below half a cell diagonal {half_diagonal}")]
    ResolutionTooCoarse { step: f64, half_diagonal: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// A set with a Lebesgue measure, usable as a uniformity test set.
pub trait Measured {
    fn measure(&self) -> f64;
    fn label(&self) -> String;
}

/// Point membership for sets tested against a discrete orbit.
pub trait ContainsPoint<P>: Measured {
    fn contains_point(&self, p: &P) -> bool;
}

impl Measured for SquareBox {
    fn measure(&self) -> f64 {
        self.area()
    }
    fn label(&self) -> String {
        format!(
            "sq{}:[{},{})x[{},{})",
            self.square, self.x.0, self.x.1, self.y.0, self.y.1
        )
    }
}

impl ContainsPoint<SurfacePoint> for SquareBox {
    fn contains_point(&self, p: &SurfacePoint) -> bool {
        self.contains(p)
    }
}

impl Measured for CubeBox {
    fn measure(&self) -> f64 {
        self.volume()
    }
    fn label(&self) -> String {
        format!("{}x[{},{})", self.base.label(), self.z.0, self.z.1)
    }
}

impl ContainsPoint<ManifoldPoint> for CubeBox {
    fn contains_point(&self, p: &ManifoldPoint) -> bool {
        self.contains(p)
    }
}

impl Measured for SweepSet {
    fn measure(&self) -> f64 {
        self.volume()
    }
    fn label(&self) -> String {
        format!("sweep({})", self.base_set.label())
    }
}

impl ContainsPoint<ManifoldPoint> for SweepSet {
    fn contains_point(&self, p: &ManifoldPoint) -> bool {
        self.contains(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Visit counts of an orbit, total `J`.
    Discrete,
    /// Occupation times of a geodesic, total `T`.
    Continuous,
}

/// Per-set visit counts or occupation times. Merging is associative and
/// commutative, so chunked orbits can be accumulated independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitHistogram {
    pub mode: Mode,
    pub labels: Vec<String>,
    pub measures: Vec<f64>,
    pub counts: Vec<f64>,
    pub total: f64,
    pub s: usize,
}

impl VisitHistogram {
    fn empty<S: Measured>(mode: Mode, sets: &[S], s: usize) -> Result<Self, StatsError> {
        if sets.is_empty() {
            return Err(StatsError::NoTestSets);
        }
        if let Some(index) = sets.iter().position(|t| t.measure() <= 0.0) {
            return Err(StatsError::ZeroMeasureSet { index });
        }
        Ok(Self {
            mode,
            labels: sets.iter().map(|t| t.label()).collect(),
            measures: sets.iter().map(|t| t.measure()).collect(),
            counts: vec![0.0; sets.len()],
            total: 0.0,
            s,
        })
    }

    pub fn from_points<P, S: ContainsPoint<P>>(
        points: &[P],
        sets: &[S],
        s: usize,
    ) -> Result<Self, StatsError> {
        let mut h = Self::empty(Mode::Discrete, sets, s)?;
        for p in points {
            h.add_point(p, sets);
        }
        Ok(h)
    }

    fn add_point<P, S: ContainsPoint<P>>(&mut self, p: &P, sets: &[S]) {
        for (c, t) in self.counts.iter_mut().zip(sets) {
            if t.contains_point(p) {
                *c += 1.0;
            }
        }
        self.total += 1.0;
    }

    pub fn from_trace<S: Measured + TimeMeasure>(
        trace: &GeodesicTrace,
        sets: &[S],
        s: usize,
    ) -> Result<Self, StatsError> {
        let mut h = Self::empty(Mode::Continuous, sets, s)?;
        for (c, t) in h.counts.iter_mut().zip(sets) {
            *c = time_in_set(trace, t);
        }
        h.total = trace.duration_sum();
        Ok(h)
    }

    pub fn merge(&mut self, other: &VisitHistogram) -> Result<(), StatsError> {
        if self.mode != other.mode || self.labels != other.labels || self.s != other.s {
            return Err(StatsError::MismatchedHistograms);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn expected(&self, index: usize) -> f64 {
        self.total * self.measures[index] / self.s as f64
    }

    pub fn ratios(&self) -> Vec<f64> {
        (0..self.counts.len())
            .map(|i| self.counts[i] / self.expected(i))
            .collect()
    }

    pub fn sup_deviation(&self) -> f64 {
        self.ratios()
            .into_iter()
            .map(|r| (r - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn report(&self, trend: Vec<TrendPoint>) -> UniformityReport {
        let rows = (0..self.counts.len())
            .map(|i| SetRatio {
                label: self.labels[i].clone(),
                measure: self.measures[i],
                observed: self.counts[i],
                expected: self.expected(i),
                ratio: self.counts[i] / self.expected(i),
            })
            .collect();
        UniformityReport {
            mode: self.mode,
            s: self.s,
            total: self.total,
            rows,
            sup_deviation: self.sup_deviation(),
            trend,
            test_class: TEST_CLASS.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetRatio {
    pub label: String,
    pub measure: f64,
    pub observed: f64,
    pub expected: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub total: f64,
    pub sup_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub mode: Mode,
    pub s: usize,
    pub total: f64,
    pub rows: Vec<SetRatio>,
    pub sup_deviation: f64,
    pub trend: Vec<TrendPoint>,
    pub test_class: String,
}

/// Occurrence of `{j : x_j ∈ S}` against `J·λ(S)/s` for a discrete orbit.
///
/// The trend is sampled at each checkpoint not exceeding the orbit length,
/// and at the full length.
pub fn visiting_ratio_discrete<P, S: ContainsPoint<P>>(
    points: &[P],
    sets: &[S],
    s: usize,
    checkpoints: &[f64],
) -> Result<UniformityReport, StatsError> {
    if points.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut h = VisitHistogram::empty(Mode::Discrete, sets, s)?;
    let mut marks: Vec<usize> = checkpoints
        .iter()
        .filter(|&&c| c >= 1.0 && c <= points.len() as f64)
        .map(|&c| c as usize)
        .collect();
    marks.sort_unstable();
    marks.dedup();
    let mut next = marks.iter().peekable();
    let mut trend = Vec::new();
    for (j, p) in points.iter().enumerate() {
        h.add_point(p, sets);
        while next.peek().is_some_and(|&&m| m == j + 1) {
            next.next();
            trend.push(TrendPoint {
                total: h.total,
                sup_deviation: h.sup_deviation(),
            });
        }
    }
    if trend.last().is_none_or(|t| t.total != h.total) {
        trend.push(TrendPoint {
            total: h.total,
            sup_deviation: h.sup_deviation(),
        });
    }
    Ok(h.report(trend))
}

/// Occupation time of a geodesic against `T·λ(S)/s`.
pub fn visiting_ratio_continuous<S: Measured + TimeMeasure>(
    trace: &GeodesicTrace,
    sets: &[S],
    s: usize,
    checkpoints: &[f64],
) -> Result<UniformityReport, StatsError> {
    let mut h = VisitHistogram::empty(Mode::Continuous, sets, s)?;
    let total = trace.duration_sum();
    if total <= 0.0 {
        return Err(StatsError::EmptyInput);
    }
    let mut marks: Vec<f64> = checkpoints
        .iter()
        .copied()
        .filter(|&c| c > 0.0 && c <= total)
        .collect();
    marks.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut next = marks.iter().peekable();
    let mut trend = Vec::new();
    for seg in &trace.segments {
        let end = seg.offset + seg.duration;
        while let Some(&&c) = next.peek() {
            if c > end {
                break;
            }
            next.next();
            let part = seg.truncated(((c - seg.offset) / seg.duration).clamp(0.0, 1.0));
            let mut snap = h.clone();
            for (k, t) in snap.counts.iter_mut().zip(sets) {
                *k += t.segment_time(&part);
            }
            snap.total = c;
            trend.push(TrendPoint {
                total: c,
                sup_deviation: snap.sup_deviation(),
            });
        }
        for (k, t) in h.counts.iter_mut().zip(sets) {
            *k += t.segment_time(seg);
        }
        h.total += seg.duration;
    }
    if trend.last().is_none_or(|t| t.total != h.total) {
        trend.push(TrendPoint {
            total: h.total,
            sup_deviation: h.sup_deviation(),
        });
    }
    Ok(h.report(trend))
}

/// Fraction of orbit points lying in `set`.
pub fn birkhoff_average<P, S: ContainsPoint<P>>(points: &[P], set: &S) -> Result<f64, StatsError> {
    if points.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let hits = points.iter().filter(|p| set.contains_point(p)).count();
    Ok(hits as f64 / points.len() as f64)
}

/// Both sides of the count/time correspondence for a single test box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub j: usize,
    pub s: usize,
    /// `(v1² + v2² + 1)^{1/2}`, the flow time per circle period.
    pub g: f64,
    pub t: f64,
    pub count: usize,
    pub time: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub identity_holds: bool,
    pub area: f64,
    pub sweep_volume: f64,
    pub sweep_hits_singular_locus: bool,
    pub ratio_discrete: Option<f64>,
    pub ratio_continuous: Option<f64>,
}

/// Runs the orbit `v0 + jv`, `j < J`, and the geodesic from `(v0, 0)` along
/// `(v1, v2, 1)` for time `J·g`, and compares the count in `S` with the
/// occupation time of the sweep `S*`.
pub fn equivalence_check(
    surface: &PolysquareSurface,
    v0: &SurfacePoint,
    v: Direction2,
    set: &SquareBox,
    j: usize,
) -> Result<EquivalenceReport, StatsError> {
    let s = surface.squares();
    let dir = Direction3::new(v.v1, v.v2, 1.0)?;
    let g = dir.norm();
    let t = j as f64 * g;
    let manifold = surface.product_with_circle();
    let sweep_set = sweep(set, dir, &manifold)?;

    let orb = orbit(surface, *v0, v, j)?;
    if let OrbitTermination::PathologicalStart { index } = orb.termination {
        return Err(StatsError::PathologicalStart { index });
    }
    let count = orb.points.iter().filter(|p| set.contains(p)).count();

    let start = ManifoldPoint::new(*v0, 0.0).map_err(FlowError::from)?;
    let trace = geodesic_flow_manifold(&manifold, &start, dir, t)?;
    if let Termination::HitSingularity { time, .. } = trace.termination {
        return Err(StatsError::SingularGeodesic { time });
    }
    let time = time_in_set(&trace, &sweep_set);

    let residual = (time - g * count as f64).abs();
    let tolerance = IDENTITY_TOL * t;
    let area = set.area();
    let volume = sweep_set.volume();
    let (ratio_discrete, ratio_continuous) = if j == 0 {
        (None, None)
    } else {
        (
            Some(count as f64 / (j as f64 * area / s as f64)),
            Some(time / (t * volume / s as f64)),
        )
    };
    Ok(EquivalenceReport {
        j,
        s,
        g,
        t,
        count,
        time,
        residual,
        tolerance,
        identity_holds: residual <= tolerance,
        area,
        sweep_volume: volume,
        sweep_hits_singular_locus: sweep_set.hits_singular_locus,
        ratio_discrete,
        ratio_continuous,
    })
}

/// Uniformity of the `v`-orbit on `P` next to the `(v, w3)`-orbit on `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepUpReport {
    pub surface: UniformityReport,
    pub manifold: UniformityReport,
    /// The `M`-orbit's base points coincide bit for bit with the `P`-orbit.
    pub base_matches: bool,
    /// Kolmogorov–Smirnov distance of the `z`-marginal from uniform.
    pub z_ks: f64,
}

/// Runs both orbits from the same base start with matched length `j`.
#[allow(clippy::too_many_arguments)]
pub fn stepup(
    surface: &PolysquareSurface,
    start: ManifoldPoint,
    v: Direction2,
    w3: f64,
    j: usize,
    surface_sets: &[SquareBox],
    manifold_sets: &[CubeBox],
    checkpoints: &[f64],
) -> Result<StepUpReport, StatsError> {
    let s = surface.squares();
    let manifold = surface.product_with_circle();
    let po = orbit(surface, start.base, v, j)?;
    if let OrbitTermination::PathologicalStart { index } = po.termination {
        return Err(StatsError::PathologicalStart { index });
    }
    let mo = crate::dynamics::orbit_manifold(&manifold, start, v, w3, j)?;
    if let OrbitTermination::PathologicalStart { index } = mo.termination {
        return Err(StatsError::PathologicalStart { index });
    }
    let base_matches = po.points.len() == mo.points.len()
        && po.points.iter().zip(&mo.points).all(|(a, b)| {
            a.square == b.base.square
                && a.x.to_bits() == b.base.x.to_bits()
                && a.y.to_bits() == b.base.y.to_bits()
        });
    let zs: Vec<f64> = mo.points.iter().map(|p| p.z).collect();
    Ok(StepUpReport {
        surface: visiting_ratio_discrete(&po.points, surface_sets, s, checkpoints)?,
        manifold: visiting_ratio_discrete(&mo.points, manifold_sets, s, checkpoints)?,
        base_matches,
        z_ks: ks_uniform(&zs)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarDiscrepancy {
    pub value: f64,
    pub budget: usize,
    pub anchors_per_axis: usize,
    /// Every point coordinate was used as an anchor, so `value` is exact.
    pub exact: bool,
}

fn axis_anchors(coords: &[f64], m: usize) -> (Vec<f64>, bool) {
    let mut unique = coords.to_vec();
    unique.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    unique.dedup();
    let exact = unique.len() < m;
    let mut out = if exact {
        let mut u = unique;
        u.push(1.0);
        u
    } else {
        let picks = m - m / 2;
        let grid = m / 2;
        let mut u: Vec<f64> = (0..picks)
            .map(|i| {
                let k = if picks == 1 { 0 } else { i * (unique.len() - 1) / (picks - 1) };
                unique[k]
            })
            .collect();
        u.extend((1..=grid).map(|i| i as f64 / grid as f64));
        u
    };
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    out.dedup();
    (out, exact)
}

/// Star discrepancy of points in `[0,1)²` over anchored boxes `[0,a)×[0,b)`
/// and `[0,a]×[0,b]`.
///
/// Anchors on each axis are the point coordinates together with `1` when
/// they fit the budget, which gives the exact value; otherwise quantiles of
/// the coordinates mixed with a uniform grid.
pub fn star_discrepancy_2d(
    points: &[(f64, f64)],
    box_budget: usize,
) -> Result<StarDiscrepancy, StatsError> {
    if points.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let m = ((box_budget.max(1) as f64).sqrt().floor() as usize).max(1);
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (ax, ex) = axis_anchors(&xs, m);
    let (ay, ey) = axis_anchors(&ys, m);
    let (nx, ny) = (ax.len(), ay.len());
    let n = points.len() as f64;

    // open[i][j] counts points with x < ax[i], y < ay[j]; closed uses ≤.
    let mut open = vec![0u32; (nx + 1) * (ny + 1)];
    let mut closed = vec![0u32; (nx + 1) * (ny + 1)];
    let idx = |i: usize, j: usize| i * (ny + 1) + j;
    for &(x, y) in points {
        let (oi, oj) = (ax.partition_point(|&a| a <= x), ay.partition_point(|&a| a <= y));
        let (ci, cj) = (ax.partition_point(|&a| a < x), ay.partition_point(|&a| a < y));
        open[idx(oi, oj)] += 1;
        closed[idx(ci, cj)] += 1;
    }
    for grid in [&mut open, &mut closed] {
        for i in 0..=nx {
            for j in 0..=ny {
                let mut v = grid[idx(i, j)];
                if i > 0 {
                    v += grid[idx(i - 1, j)];
                }
                if j > 0 {
                    v += grid[idx(i, j - 1)];
                }
                if i > 0 && j > 0 {
                    v -= grid[idx(i - 1, j - 1)];
                }
                grid[idx(i, j)] = v;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            let vol = ax[i] * ay[j];
            let o = open[idx(i, j)] as f64 / n;
            let c = closed[idx(i, j)] as f64 / n;
            worst = worst.max((o - vol).abs()).max((c - vol).abs());
        }
    }
    Ok(StarDiscrepancy {
        value: worst,
        budget: box_budget,
        anchors_per_axis: m,
        exact: ex && ey,
    })
}

/// Kolmogorov–Smirnov distance of a sample from the uniform law on `[0,1)`.
pub fn ks_uniform(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len() as f64;
    Ok(v.iter().enumerate().fold(0.0, |d, (i, &z)| {
        d.max((i as f64 + 1.0) / n - z).max(z - i as f64 / n)
    }))
}

/// Space on which a shift acts, for [`detect_decomposition`].
#[derive(Debug, Clone, Copy)]
pub enum ShiftSpace<'a> {
    Surface {
        surface: &'a PolysquareSurface,
        v: Direction2,
    },
    Manifold {
        manifold: &'a PolycubeManifold,
        v: Direction2,
        w3: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub component: usize,
    pub cells: usize,
    pub measure: f64,
    pub closed: bool,
}

/// Strongly connected components of the discretized shift.
///
/// Cell ids are `square·r² + row·r + col` on a surface and
/// `square·r³ + layer·r² + row·r + col` on the manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub grid_resolution: usize,
    pub samples_per_axis: usize,
    pub dimension: usize,
    pub cell_measure: f64,
    pub components: Vec<Vec<usize>>,
    pub k: usize,
    pub measures: Vec<f64>,
    /// No sample of any member cell leaves the component.
    pub closed: Vec<bool>,
    /// Cells with a sample whose shift meets a cone point.
    pub singular_cells: Vec<usize>,
}

impl DecompositionReport {
    pub fn rows(&self) -> Vec<ComponentRow> {
        (0..self.k)
            .map(|i| ComponentRow {
                component: i,
                cells: self.components[i].len(),
                measure: self.measures[i],
                closed: self.closed[i],
            })
            .collect()
    }
}

/// Decomposes the grid of cells by the shift.
///
/// Each cell is represented by `n^d` evenly placed samples (`n = 1` is the
/// cell center); cell A points to B when the shift maps a sample of A into
/// B. Components are the strongly connected components of that graph.
pub fn detect_decomposition(
    space: ShiftSpace<'_>,
    resolution: usize,
    samples_per_axis: usize,
) -> Result<DecompositionReport, StatsError> {
    if resolution < 8 {
        return Err(StatsError::InvalidResolution(resolution));
    }
    let r = resolution;
    let n = samples_per_axis.max(1);
    let rf = r as f64;
    let (dim, squares, step) = match space {
        ShiftSpace::Surface { surface, v } => (2, surface.squares(), v.norm()),
        ShiftSpace::Manifold { manifold, v, w3 } => {
            (3, manifold.cubes(), v.v1.hypot(v.v2).hypot(w3))
        }
    };
    let half_diagonal = 0.5 * (dim as f64).sqrt() / rf;
    if !(step >= half_diagonal) {
        return Err(StatsError::ResolutionTooCoarse {
            step,
            half_diagonal,
        });
    }
    let per_square = r.pow(dim as u32);
    let cells = squares * per_square;
    let cell_of = |sq: usize, coords: &[f64]| {
        coords.iter().rev().fold(sq, |acc, &c| {
            acc * r + ((c * rf).floor() as usize).min(r - 1)
        })
    };
    let sample = |i: usize, a: usize| (i as f64 + (a as f64 + 0.5) / n as f64) / rf;

    let mut graph: DiGraph<usize, ()> = DiGraph::with_capacity(cells, cells * 2);
    for c in 0..cells {
        graph.add_node(c);
    }
    let mut singular = vec![false; cells];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for c in 0..cells {
        let sq = c / per_square;
        let rem = c % per_square;
        let col = rem % r;
        let row = (rem / r) % r;
        let layer = rem / (r * r);
        let mut targets: Vec<usize> = Vec::new();
        for a in 0..n {
            for b in 0..n {
                for l in 0..(if dim == 3 { n } else { 1 }) {
                    let (x, y) = (sample(col, a), sample(row, b));
                    let next = match space {
                        ShiftSpace::Surface { surface, v } => {
                            let p = SurfacePoint { square: sq, x, y };
                            v_shift(surface, &p, v).map(|q| cell_of(q.square, &[q.x, q.y]))
                        }
                        ShiftSpace::Manifold { manifold, v, w3 } => {
                            let p = ManifoldPoint {
                                base: SurfacePoint { square: sq, x, y },
                                z: sample(layer, l),
                            };
                            w_shift(manifold, &p, v, w3)
                                .map(|q| cell_of(q.base.square, &[q.base.x, q.base.y, q.z]))
                        }
                    };
                    match next {
                        Ok(t) => targets.push(t),
                        Err(FlowError::HitSingularity { .. }) => singular[c] = true,
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
        targets.sort_unstable();
        targets.dedup();
        edges.extend(targets.into_iter().map(|t| (c, t)));
    }
    for &(a, b) in &edges {
        if !singular[a] && !singular[b] {
            graph.add_edge(NodeIndex::new(a), NodeIndex::new(b), ());
        }
    }

    let mut components: Vec<Vec<usize>> = tarjan_scc(&graph)
        .into_iter()
        .map(|comp| {
            let mut cs: Vec<usize> = comp
                .into_iter()
                .map(|ix| graph[ix])
                .filter(|&c| !singular[c])
                .collect();
            cs.sort_unstable();
            cs
        })
        .filter(|cs| !cs.is_empty())
        .collect();
    components.sort_by_key(|cs| cs[0]);

    let mut owner = vec![usize::MAX; cells];
    for (i, cs) in components.iter().enumerate() {
        for &c in cs {
            owner[c] = i;
        }
    }
    let mut closed = vec![true; components.len()];
    for &(a, b) in &edges {
        if !singular[a] && owner[a] != owner[b] {
            closed[owner[a]] = false;
        }
    }
    let cell_measure = 1.0 / per_square as f64;
    let measures = components
        .iter()
        .map(|cs| cs.len() as f64 * cell_measure)
        .collect();
    Ok(DecompositionReport {
        grid_resolution: r,
        samples_per_axis: n,
        dimension: dim,
        cell_measure,
        k: components.len(),
        components,
        measures,
        closed,
        singular_cells: (0..cells).filter(|&c| singular[c]).collect(),
    })
}
