//! Straight-line flow on polysquare surfaces and on `P × [0,1)`.
//!
//! A displacement from a point in a square is unfolded over the integer grid:
//! the local coordinates of the end point are the start coordinates plus the
//! displacement, reduced mod 1, and the square it lands in is found by
//! replaying the grid-line crossings in order through the gluings. Passing
//! within [`SINGULAR_TOL`] of a cone point stops the flow.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    Corner, CubeBox, GeometryError, ManifoldPoint, PolycubeManifold, PolysquareSurface,
    SquareBox, SurfacePoint, Vertex,
};
use crate::polygon::{ConvexPolygon, HalfPlane};

/// Distance below which a path is deemed to meet a vertex.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Displacement components beyond this cannot resolve unit grid spacing.
const MAX_DISPLACEMENT: f64 = (1u64 << 40) as f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("direction must be a nonzero finite vector")]
    InvalidDirection,
    #[error("negative or non-finite flow time {0}")]
    InvalidTime(f64),
    #[error("path meets singular vertex {vertex:?} at t={time}")]
    HitSingularity { time: f64, vertex: Vertex },
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("sweep base must be a box in one atomic square with positive extent")]
    InvalidSweepBase,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Planar direction, also used as a step vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction2 {
    pub v1: f64,
    pub v2: f64,
}

pub type StepVector = Direction2;

impl Direction2 {
    pub fn new(v1: f64, v2: f64) -> Result<Self, FlowError> {
        if !(v1.is_finite() && v2.is_finite()) || (v1 == 0.0 && v2 == 0.0) {
            return Err(FlowError::InvalidDirection);
        }
        Ok(Self { v1, v2 })
    }

    pub fn norm(&self) -> f64 {
        self.v1.hypot(self.v2)
    }

    /// Components reduced into `[0,1)`.
    pub fn reduced_mod1(&self) -> Result<Self, FlowError> {
        Self::new(frac(self.v1), frac(self.v2))
    }

    /// `(v1, v2, 1)`.
    pub fn kronecker_direction(&self) -> Direction3 {
        Direction3 {
            v1: self.v1,
            v2: self.v2,
            v3: 1.0,
        }
    }

    /// Arc length of one step of the supporting geodesic in `P × [0,1)`.
    pub fn period_length(&self) -> f64 {
        (self.v1 * self.v1 + self.v2 * self.v2 + 1.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction3 {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

impl Direction3 {
    pub fn new(v1: f64, v2: f64, v3: f64) -> Result<Self, FlowError> {
        if !(v1.is_finite() && v2.is_finite() && v3.is_finite())
            || (v1 == 0.0 && v2 == 0.0 && v3 == 0.0)
        {
            return Err(FlowError::InvalidDirection);
        }
        Ok(Self { v1, v2, v3 })
    }

    pub fn norm(&self) -> f64 {
        (self.v1 * self.v1 + self.v2 * self.v2 + self.v3 * self.v3).sqrt()
    }

    /// Rescaled so that the circle component is 1.
    pub fn normal_form(&self) -> Result<Self, FlowError> {
        if self.v3 == 0.0 {
            return Err(FlowError::InvalidDirection);
        }
        Self::new(self.v1 / self.v3, self.v2 / self.v3, 1.0)
    }
}

/// `x − ⌊x⌋`, pinned into `[0,1)`.
pub fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Termination {
    Completed,
    HitSingularity { time: f64, vertex: Vertex },
}

/// A maximal straight piece of a geodesic inside one atomic square or cube.
///
/// Coordinates are local `(x, y, z)`; `z` is zero for traces on a surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub square: usize,
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub duration: f64,
    /// Time elapsed before the segment starts.
    pub offset: f64,
}

impl Segment {
    pub fn point_at(&self, frac: f64) -> [f64; 3] {
        [
            self.start[0] + frac * (self.end[0] - self.start[0]),
            self.start[1] + frac * (self.end[1] - self.start[1]),
            self.start[2] + frac * (self.end[2] - self.start[2]),
        ]
    }

    /// The first `frac` of this segment.
    pub fn truncated(&self, frac: f64) -> Segment {
        Segment {
            end: self.point_at(frac),
            duration: self.duration * frac,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicTrace {
    pub segments: Vec<Segment>,
    pub total_time: f64,
    pub termination: Termination,
    pub in_manifold: bool,
    pub end_base: Option<SurfacePoint>,
    pub end_z: Option<f64>,
}

impl GeodesicTrace {
    pub fn hit_singularity(&self) -> bool {
        matches!(self.termination, Termination::HitSingularity { .. })
    }

    pub fn end_manifold(&self) -> Option<ManifoldPoint> {
        Some(ManifoldPoint {
            base: self.end_base?,
            z: self.end_z?,
        })
    }

    pub fn duration_sum(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

/// A piece of the unfolded path in one square, in displacement fractions.
struct Piece {
    square: usize,
    from: f64,
    to: f64,
    start: [f64; 2],
    end: [f64; 2],
}

enum Outcome {
    Arrived(SurfacePoint),
    Singular { fraction: f64, vertex: Vertex },
}

/// Moves from `(square, x, y)` by displacement `d`, reporting every piece.
///
/// `x, y` may be 1.0 only when the displacement points back into the square,
/// which is how a path leaving a vertex is started.
fn advance(
    surface: &PolysquareSurface,
    square: usize,
    x: f64,
    y: f64,
    d: (f64, f64),
    check_start: bool,
    mut sink: impl FnMut(Piece),
) -> Result<Outcome, FlowError> {
    let (d1, d2) = d;
    if !(d1.is_finite() && d2.is_finite() && x.is_finite() && y.is_finite()) {
        return Err(FlowError::NumericalDegeneracy(
            "non-finite coordinates or displacement".into(),
        ));
    }
    if d1.abs() > MAX_DISPLACEMENT || d2.abs() > MAX_DISPLACEMENT {
        return Err(FlowError::NumericalDegeneracy(format!(
            "displacement ({d1}, {d2}) too long to resolve grid crossings"
        )));
    }
    let len = d1.hypot(d2);

    if check_start {
        for c in Corner::ALL {
            let (cx, cy) = c.position();
            if surface.is_singular(square, c) && (x - cx).hypot(y - cy) < SINGULAR_TOL {
                return Ok(Outcome::Singular {
                    fraction: 0.0,
                    vertex: Vertex { square, corner: c },
                });
            }
        }
    }
    if len == 0.0 {
        sink(Piece {
            square,
            from: 0.0,
            to: 1.0,
            start: [x, y],
            end: [x, y],
        });
        return Ok(Outcome::Arrived(SurfacePoint { square, x, y }));
    }

    // The half-open owner of a boundary point depends on where we head.
    let (mut sq, mut x, mut y) = (square, x, y);
    if x == 1.0 && d1 >= 0.0 {
        sq = surface.right_of(sq);
        x = 0.0;
    } else if x == 0.0 && d1 < 0.0 {
        sq = surface.left_of(sq);
        x = 1.0;
    }
    if y == 1.0 && d2 >= 0.0 {
        sq = surface.top_of(sq);
        y = 0.0;
    } else if y == 0.0 && d2 < 0.0 {
        sq = surface.bottom_of(sq);
        y = 1.0;
    }

    let (u1, u2) = (d1 / len, d2 / len);
    let ax = x + d1;
    let ay = y + d2;
    let mut kx = ax.floor();
    let mut ky = ay.floor();
    if d1 < 0.0 {
        kx = kx.min(0.0);
    }
    if d2 < 0.0 {
        ky = ky.min(0.0);
    }
    let nx = kx.abs() as u64;
    let ny = ky.abs() as u64;
    let sx = if d1 > 0.0 { 1i64 } else { -1 };
    let sy = if d2 > 0.0 { 1i64 } else { -1 };
    let xline = |i: u64| if d1 > 0.0 { (i + 1) as f64 } else { -(i as f64) };
    let yline = |j: u64| if d2 > 0.0 { (j + 1) as f64 } else { -(j as f64) };
    // Signed perpendicular offset of lattice point (gx, gy) from the line.
    let perp = |gx: f64, gy: f64| (gx - x) * u2 - (gy - y) * u1;
    let fraction_at = |gx: f64, gy: f64| (((gx - x) * d1 + (gy - y) * d2) / (len * len)).clamp(0.0, 1.0);

    let (mut col, mut row) = (0i64, 0i64);
    let (mut ix, mut iy) = (0u64, 0u64);
    let mut from = 0.0;
    let mut start = [x, y];

    enum Event {
        Vertical(f64),
        Horizontal(f64),
        Both(f64, f64),
    }

    loop {
        let event = match (ix < nx, iy < ny) {
            (false, false) => break,
            (true, false) => Event::Vertical(xline(ix)),
            (false, true) => Event::Horizontal(yline(iy)),
            (true, true) => {
                let (gx, gy) = (xline(ix), yline(iy));
                let p = perp(gx, gy);
                if p.abs() < SINGULAR_TOL {
                    Event::Both(gx, gy)
                } else if (p < 0.0) == (u1 * u2 > 0.0) {
                    Event::Vertical(gx)
                } else {
                    Event::Horizontal(gy)
                }
            }
        };

        match event {
            Event::Both(gx, gy) => {
                let t = fraction_at(gx, gy);
                let right = gx - col as f64 > 0.5;
                let top = gy - row as f64 > 0.5;
                let corner = Corner::from_sides(right, top);
                let end = [right as u8 as f64, top as u8 as f64];
                if t > from {
                    sink(Piece {
                        square: sq,
                        from,
                        to: t,
                        start,
                        end,
                    });
                }
                if surface.is_singular(sq, corner) {
                    return Ok(Outcome::Singular {
                        fraction: t,
                        vertex: Vertex { square: sq, corner },
                    });
                }
                sq = if sx > 0 { surface.right_of(sq) } else { surface.left_of(sq) };
                sq = if sy > 0 { surface.top_of(sq) } else { surface.bottom_of(sq) };
                col += sx;
                row += sy;
                start = [1.0 - end[0], 1.0 - end[1]];
                from = t;
                ix += 1;
                iy += 1;
            }
            Event::Vertical(gx) => {
                let t = ((gx - x) / d1).clamp(0.0, 1.0);
                let yc = y + t * d2;
                let gy = yc.round();
                if perp(gx, gy).abs() < SINGULAR_TOL {
                    if let Some(vertex) = corner_of(surface, sq, gx - col as f64, gy - row as f64) {
                        return Ok(singular_exit(&mut sink, sq, from, start, vertex, fraction_at(gx, gy)));
                    }
                }
                let yl = (yc - row as f64).clamp(0.0, 1.0);
                let xe = if sx > 0 { 1.0 } else { 0.0 };
                if t > from {
                    sink(Piece {
                        square: sq,
                        from,
                        to: t,
                        start,
                        end: [xe, yl],
                    });
                }
                sq = if sx > 0 { surface.right_of(sq) } else { surface.left_of(sq) };
                col += sx;
                start = [1.0 - xe, yl];
                from = t;
                ix += 1;
            }
            Event::Horizontal(gy) => {
                let t = ((gy - y) / d2).clamp(0.0, 1.0);
                let xc = x + t * d1;
                let gx = xc.round();
                if perp(gx, gy).abs() < SINGULAR_TOL {
                    if let Some(vertex) = corner_of(surface, sq, gx - col as f64, gy - row as f64) {
                        return Ok(singular_exit(&mut sink, sq, from, start, vertex, fraction_at(gx, gy)));
                    }
                }
                let xl = (xc - col as f64).clamp(0.0, 1.0);
                let ye = if sy > 0 { 1.0 } else { 0.0 };
                if t > from {
                    sink(Piece {
                        square: sq,
                        from,
                        to: t,
                        start,
                        end: [xl, ye],
                    });
                }
                sq = if sy > 0 { surface.top_of(sq) } else { surface.bottom_of(sq) };
                row += sy;
                start = [xl, 1.0 - ye];
                from = t;
                iy += 1;
            }
        }
    }

    if col as f64 != kx || row as f64 != ky {
        return Err(FlowError::NumericalDegeneracy(format!(
            "crossing replay ended in cell ({col}, {row}) instead of ({kx}, {ky})"
        )));
    }
    let mut fx = ax - kx;
    let mut fy = ay - ky;

    for c in Corner::ALL {
        let (cx, cy) = c.position();
        if surface.is_singular(sq, c) && (fx - cx).hypot(fy - cy) < SINGULAR_TOL {
            let vertex = Vertex { square: sq, corner: c };
            let t = fraction_at(cx + col as f64, cy + row as f64);
            return Ok(singular_exit(&mut sink, sq, from, start, vertex, t));
        }
    }
    if 1.0 > from {
        sink(Piece {
            square: sq,
            from,
            to: 1.0,
            start,
            end: [fx, fy],
        });
    }
    if fx >= 1.0 {
        sq = surface.right_of(sq);
        fx = 0.0;
    }
    if fy >= 1.0 {
        sq = surface.top_of(sq);
        fy = 0.0;
    }
    Ok(Outcome::Arrived(SurfacePoint {
        square: sq,
        x: fx,
        y: fy,
    }))
}

/// Singular vertex at local offset `(cx, cy)` of `square`, if that is a corner.
fn corner_of(surface: &PolysquareSurface, square: usize, cx: f64, cy: f64) -> Option<Vertex> {
    let side = |v: f64| {
        if v == 0.0 {
            Some(false)
        } else if v == 1.0 {
            Some(true)
        } else {
            None
        }
    };
    let corner = Corner::from_sides(side(cx)?, side(cy)?);
    surface
        .is_singular(square, corner)
        .then_some(Vertex { square, corner })
}

fn singular_exit(
    sink: &mut impl FnMut(Piece),
    square: usize,
    from: f64,
    start: [f64; 2],
    vertex: Vertex,
    fraction: f64,
) -> Outcome {
    if fraction > from {
        let (cx, cy) = vertex.corner.position();
        sink(Piece {
            square,
            from,
            to: fraction,
            start,
            end: [cx, cy],
        });
    }
    Outcome::Singular { fraction, vertex }
}

/// Unit-speed geodesic on `P` for the given arc length.
pub fn geodesic_flow(
    surface: &PolysquareSurface,
    start: &SurfacePoint,
    dir: Direction2,
    time: f64,
) -> Result<GeodesicTrace, FlowError> {
    if !(time >= 0.0 && time.is_finite()) {
        return Err(FlowError::InvalidTime(time));
    }
    surface.check_square(start.square)?;
    let n = dir.norm();
    let d = (time * dir.v1 / n, time * dir.v2 / n);
    let mut segments = Vec::new();
    let outcome = advance(surface, start.square, start.x, start.y, d, true, |p| {
        segments.push(Segment {
            square: p.square,
            start: [p.start[0], p.start[1], 0.0],
            end: [p.end[0], p.end[1], 0.0],
            duration: (p.to - p.from) * time,
            offset: p.from * time,
        })
    })?;
    let (termination, total_time, end_base) = match outcome {
        Outcome::Arrived(p) => (Termination::Completed, time, Some(p)),
        Outcome::Singular { fraction, vertex } => (
            Termination::HitSingularity {
                time: fraction * time,
                vertex,
            },
            fraction * time,
            None,
        ),
    };
    Ok(GeodesicTrace {
        segments,
        total_time,
        termination,
        in_manifold: false,
        end_base,
        end_z: None,
    })
}

/// Unit-speed geodesic in `M = P × [0,1)`.
pub fn geodesic_flow_manifold(
    manifold: &PolycubeManifold,
    start: &ManifoldPoint,
    dir: Direction3,
    time: f64,
) -> Result<GeodesicTrace, FlowError> {
    if !(time >= 0.0 && time.is_finite()) {
        return Err(FlowError::InvalidTime(time));
    }
    let surface = manifold.base();
    surface.check_square(start.base.square)?;
    let n = dir.norm();
    let d = (time * dir.v1 / n, time * dir.v2 / n);
    let dz = time * dir.v3 / n;
    let z0 = start.z;

    // Fractions at which z crosses an integer, in increasing order.
    let wraps: Vec<f64> = if dz > 0.0 {
        let k = (z0 + dz).floor() as u64;
        (1..=k).map(|k| (k as f64 - z0) / dz).collect()
    } else if dz < 0.0 {
        let k = (-(z0 + dz).floor()) as u64;
        (0..k).map(|k| (-(k as f64) - z0) / dz).collect()
    } else {
        Vec::new()
    };

    let mut pieces = Vec::new();
    let outcome = advance(
        surface,
        start.base.square,
        start.base.x,
        start.base.y,
        d,
        true,
        |p| pieces.push(p),
    )?;

    let mut segments = Vec::with_capacity(pieces.len() + wraps.len());
    let mut level = 0.0f64;
    let mut w = 0usize;
    let z_local = |t: f64, level: f64| (z0 + t * dz - level).clamp(0.0, 1.0);
    for p in pieces {
        let mut from = p.from;
        let mut start2 = p.start;
        let span = p.to - p.from;
        let at = |t: f64| {
            let f = if span > 0.0 { (t - p.from) / span } else { 0.0 };
            [
                p.start[0] + f * (p.end[0] - p.start[0]),
                p.start[1] + f * (p.end[1] - p.start[1]),
            ]
        };
        let mut zs = z_local(from, level);
        while w < wraps.len() && wraps[w] < p.to {
            let t = wraps[w].max(from);
            let ze = if dz > 0.0 { 1.0 } else { 0.0 };
            let e2 = at(t);
            if t > from {
                segments.push(Segment {
                    square: p.square,
                    start: [start2[0], start2[1], zs],
                    end: [e2[0], e2[1], ze],
                    duration: (t - from) * time,
                    offset: from * time,
                });
            }
            level += if dz > 0.0 { 1.0 } else { -1.0 };
            zs = 1.0 - ze;
            from = t;
            start2 = e2;
            w += 1;
        }
        if p.to > from {
            segments.push(Segment {
                square: p.square,
                start: [start2[0], start2[1], zs],
                end: [p.end[0], p.end[1], z_local(p.to, level)],
                duration: (p.to - from) * time,
                offset: from * time,
            });
        }
    }

    let (termination, total_time, end_base, end_z) = match outcome {
        Outcome::Arrived(p) => (Termination::Completed, time, Some(p), Some(frac(z0 + dz))),
        Outcome::Singular { fraction, vertex } => (
            Termination::HitSingularity {
                time: fraction * time,
                vertex,
            },
            fraction * time,
            None,
            None,
        ),
    };
    Ok(GeodesicTrace {
        segments,
        total_time,
        termination,
        in_manifold: true,
        end_base,
        end_z,
    })
}

/// The `v`-shift: follow the supporting geodesic for arc length `|v|`.
pub fn v_shift(
    surface: &PolysquareSurface,
    x: &SurfacePoint,
    v: Direction2,
) -> Result<SurfacePoint, FlowError> {
    match advance(surface, x.square, x.x, x.y, (v.v1, v.v2), true, |_| {})? {
        Outcome::Arrived(p) => Ok(p),
        Outcome::Singular { fraction, vertex } => Err(FlowError::HitSingularity {
            time: fraction * v.norm(),
            vertex,
        }),
    }
}

/// The `w`-shift `(x, z) ↦ (x + v, {z + w3})` on `P × [0,1)`.
pub fn w_shift(
    manifold: &PolycubeManifold,
    p: &ManifoldPoint,
    v: Direction2,
    w3: f64,
) -> Result<ManifoldPoint, FlowError> {
    let base = v_shift(manifold.base(), &p.base, v)?;
    Ok(ManifoldPoint {
        base,
        z: frac(p.z + w3),
    })
}

/// Starts a path at a vertex, heading into the given square.
///
/// The displacement must point strictly into `vertex.square` from its corner;
/// this is the reverse flow used to construct orbits that end on a cone point.
pub fn flow_from_vertex(
    surface: &PolysquareSurface,
    vertex: Vertex,
    displacement: (f64, f64),
) -> Result<SurfacePoint, FlowError> {
    surface.check_square(vertex.square)?;
    let (cx, cy) = vertex.corner.position();
    let inward = |c: f64, d: f64| if c == 0.0 { d > 0.0 } else { d < 0.0 };
    if !(inward(cx, displacement.0) && inward(cy, displacement.1)) {
        return Err(FlowError::InvalidDirection);
    }
    match advance(surface, vertex.square, cx, cy, displacement, false, |_| {})? {
        Outcome::Arrived(p) => Ok(p),
        Outcome::Singular { fraction, vertex } => Err(FlowError::HitSingularity {
            time: fraction * displacement.0.hypot(displacement.1),
            vertex,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum OrbitTermination {
    Completed,
    /// Point `index` does not exist: the supporting geodesic met a cone point.
    PathologicalStart { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit<P> {
    pub points: Vec<P>,
    pub termination: OrbitTermination,
}

impl<P> Orbit<P> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.termination == OrbitTermination::Completed
    }
}

fn starts_on_singularity(surface: &PolysquareSurface, p: &SurfacePoint) -> bool {
    Corner::ALL.iter().any(|&c| {
        let (cx, cy) = c.position();
        surface.is_singular(p.square, c) && (p.x - cx).hypot(p.y - cy) < SINGULAR_TOL
    })
}

/// The first `n` points `v0 + jv` of a Kronecker sequence on `P`.
pub fn orbit(
    surface: &PolysquareSurface,
    start: SurfacePoint,
    v: Direction2,
    n: usize,
) -> Result<Orbit<SurfacePoint>, FlowError> {
    surface.check_square(start.square)?;
    let mut points = Vec::with_capacity(n);
    if n == 0 {
        return Ok(Orbit {
            points,
            termination: OrbitTermination::Completed,
        });
    }
    if starts_on_singularity(surface, &start) {
        return Ok(Orbit {
            points,
            termination: OrbitTermination::PathologicalStart { index: 0 },
        });
    }
    let mut x = start;
    points.push(x);
    while points.len() < n {
        match v_shift(surface, &x, v) {
            Ok(next) => {
                x = next;
                points.push(x);
            }
            Err(FlowError::HitSingularity { .. }) => {
                let index = points.len();
                return Ok(Orbit {
                    points,
                    termination: OrbitTermination::PathologicalStart { index },
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Orbit {
        points,
        termination: OrbitTermination::Completed,
    })
}

/// The first `n` points of the `w`-shift orbit on `P × [0,1)`.
pub fn orbit_manifold(
    manifold: &PolycubeManifold,
    start: ManifoldPoint,
    v: Direction2,
    w3: f64,
    n: usize,
) -> Result<Orbit<ManifoldPoint>, FlowError> {
    let base = orbit(manifold.base(), start.base, v, n)?;
    let mut z = start.z;
    let points = base
        .points
        .into_iter()
        .enumerate()
        .map(|(j, b)| {
            if j > 0 {
                z = frac(z + w3);
            }
            ManifoldPoint { base: b, z }
        })
        .collect();
    Ok(Orbit {
        points,
        termination: base.termination,
    })
}

/// Sets whose occupation time along a geodesic can be measured exactly.
pub trait TimeMeasure {
    /// Time the segment spends inside the set.
    fn segment_time(&self, seg: &Segment) -> f64;
}

/// Parameter interval of `a + σ b`, `σ ∈ [0,1]`, inside `[lo, hi]`.
fn slab(a: f64, b: f64, lo: f64, hi: f64, range: &mut (f64, f64)) {
    if b == 0.0 {
        if a < lo || a >= hi {
            *range = (1.0, 0.0);
        }
        return;
    }
    let (mut s0, mut s1) = ((lo - a) / b, (hi - a) / b);
    if s0 > s1 {
        std::mem::swap(&mut s0, &mut s1);
    }
    range.0 = range.0.max(s0);
    range.1 = range.1.min(s1);
}

impl TimeMeasure for SquareBox {
    fn segment_time(&self, seg: &Segment) -> f64 {
        if seg.square != self.square {
            return 0.0;
        }
        let mut r = (0.0f64, 1.0f64);
        slab(seg.start[0], seg.end[0] - seg.start[0], self.x.0, self.x.1, &mut r);
        slab(seg.start[1], seg.end[1] - seg.start[1], self.y.0, self.y.1, &mut r);
        (r.1 - r.0).max(0.0) * seg.duration
    }
}

impl TimeMeasure for CubeBox {
    fn segment_time(&self, seg: &Segment) -> f64 {
        if seg.square != self.base.square {
            return 0.0;
        }
        let mut r = (0.0f64, 1.0f64);
        for k in 0..3 {
            let (lo, hi) = match k {
                0 => self.base.x,
                1 => self.base.y,
                _ => self.z,
            };
            slab(seg.start[k], seg.end[k] - seg.start[k], lo, hi, &mut r);
        }
        (r.1 - r.0).max(0.0) * seg.duration
    }
}

/// Measure of `{0 ≤ t ≤ T : L(t) ∈ set}` for the trace.
pub fn time_in_set(trace: &GeodesicTrace, set: &impl TimeMeasure) -> f64 {
    trace.segments.iter().map(|s| set.segment_time(s)).sum()
}

/// One convex cell of a sweep set inside a single atomic cube.
///
/// It holds the points `(u, z)` of cube `square` with
/// `u + offset − z·(v1, v2) ∈ piece`, where `piece ⊂ S` is expressed in the
/// local frame of the base square and `offset` is the unfolded grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Prism {
    pub square: usize,
    pub offset: (i64, i64),
    pub piece: ConvexPolygon,
    pub volume: f64,
    /// Range of `n·p` over the piece, `n` the unit normal of the sweep direction.
    band: (f64, f64),
}

type Constraint = ([f64; 2], f64, f64);

impl Prism {
    /// Half-open constraints `lo ≤ a·q < hi` on the pull-back `q = u − z·v`.
    ///
    /// Writing them against `q` rather than `q + offset` keeps one rounding
    /// of `q` for every prism, so neighbouring prisms share exact boundaries.
    fn constraints(&self, base: &SquareBox, n: [f64; 2]) -> [Constraint; 3] {
        let (cx, cy) = (self.offset.0 as f64, self.offset.1 as f64);
        let nc = n[0] * cx + n[1] * cy;
        [
            ([1.0, 0.0], base.x.0 - cx, base.x.1 - cx),
            ([0.0, 1.0], base.y.0 - cy, base.y.1 - cy),
            (n, self.band.0 - nc, self.band.1 - nc),
        ]
    }
}

/// `S*`: the box `S × {0}` swept along `(v1, v2, 1)` for one circle period.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSet {
    pub base_set: SquareBox,
    pub direction: Direction3,
    pub prisms: Vec<Prism>,
    /// The sweep passes over a singular vertical line; pieces are split there.
    pub hits_singular_locus: bool,
    normal: [f64; 2],
}

impl SweepSet {
    pub fn volume(&self) -> f64 {
        self.prisms.iter().map(|p| p.volume).sum()
    }

    fn pull_back(&self, u: [f64; 3]) -> [f64; 2] {
        [u[0] - u[2] * self.direction.v1, u[1] - u[2] * self.direction.v2]
    }

    pub fn contains(&self, p: &ManifoldPoint) -> bool {
        let q = self.pull_back([p.base.x, p.base.y, p.z]);
        self.prisms.iter().any(|pr| {
            pr.square == p.base.square
                && pr
                    .constraints(&self.base_set, self.normal)
                    .iter()
                    .all(|&(a, lo, hi)| {
                        let f = a[0] * q[0] + a[1] * q[1];
                        lo <= f && f < hi
                    })
        })
    }
}

impl TimeMeasure for SweepSet {
    fn segment_time(&self, seg: &Segment) -> f64 {
        let q0 = self.pull_back(seg.start);
        let q1 = self.pull_back(seg.end);
        // Along the sweep direction the pull-back is constant; drop the rounding.
        let b = [q1[0] - q0[0], q1[1] - q0[1]].map(|c| if c.abs() < 1e-12 { 0.0 } else { c });
        let mut total = 0.0;
        for pr in self.prisms.iter().filter(|p| p.square == seg.square) {
            let mut r = (0.0f64, 1.0f64);
            for (a, lo, hi) in pr.constraints(&self.base_set, self.normal) {
                let f0 = a[0] * q0[0] + a[1] * q0[1];
                let fb = a[0] * b[0] + a[1] * b[1];
                if fb == 0.0 {
                    if !(lo <= f0 && f0 < hi) {
                        r = (1.0, 0.0);
                    }
                } else {
                    let (t0, t1) = ((lo - f0) / fb, (hi - f0) / fb);
                    r.0 = r.0.max(t0.min(t1));
                    r.1 = r.1.min(t0.max(t1));
                }
            }
            total += (r.1 - r.0).max(0.0) * seg.duration;
        }
        total
    }
}

/// Area of `(piece + t·v) ∩ cell` as a function of `t`, integrated over `[0,1]`.
///
/// The area is piecewise quadratic in `t` with breaks where a vertex of one
/// polygon crosses an edge line of the other, so Simpson's rule on each piece
/// is exact. Returns the volume and the midpoint of the widest piece.
fn cell_volume(piece: &ConvexPolygon, v: (f64, f64), cell: (i64, i64)) -> (f64, Option<f64>) {
    let (c1, c2) = (cell.0 as f64, cell.1 as f64);
    let xr = (c1, c1 + 1.0);
    let yr = (c2, c2 + 1.0);
    let mut breaks = vec![0.0, 1.0];
    let mut push = |t: f64| {
        if t > 0.0 && t < 1.0 && t.is_finite() {
            breaks.push(t);
        }
    };
    for p in &piece.vertices {
        for b in [xr.0, xr.1] {
            if v.0 != 0.0 {
                push((b - p[0]) / v.0);
            }
        }
        for b in [yr.0, yr.1] {
            if v.1 != 0.0 {
                push((b - p[1]) / v.1);
            }
        }
    }
    for h in piece.half_planes() {
        let nv = h.normal[0] * v.0 + h.normal[1] * v.1;
        if nv != 0.0 {
            for q in [[xr.0, yr.0], [xr.1, yr.0], [xr.0, yr.1], [xr.1, yr.1]] {
                push((h.normal[0] * q[0] + h.normal[1] * q[1] - h.offset) / nv);
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    breaks.dedup();
    let area = |t: f64| piece.translate([t * v.0, t * v.1]).clip_rect(xr, yr).area().max(0.0);
    let mut vol = 0.0;
    let mut best = (0.0, None);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = 0.5 * (a + b);
        let am = area(m);
        vol += (b - a) / 6.0 * (area(a) + 4.0 * am + area(b));
        if am * (b - a) > best.0 {
            best = (am * (b - a), Some(m));
        }
    }
    (vol, best.1)
}

/// Sweeps `S × {0}` along `dir` (normalized to circle component 1) for one period.
pub fn sweep(
    base_set: &SquareBox,
    dir: Direction3,
    manifold: &PolycubeManifold,
) -> Result<SweepSet, FlowError> {
    let surface = manifold.base();
    surface.check_square(base_set.square)?;
    if base_set.area() <= 0.0 {
        return Err(FlowError::InvalidSweepBase);
    }
    let dir = dir.normal_form()?;
    let v = (dir.v1, dir.v2);
    let rect = ConvexPolygon::rect(base_set.x, base_set.y);
    let hull = rect.sweep_hull([v.0, v.1]);

    // Lattice points strictly inside the swept region.
    let ((x0, x1), (y0, y1)) = hull.bounds();
    let mut lattice = Vec::new();
    for gx in (x0.ceil() as i64)..=(x1.floor() as i64) {
        for gy in (y0.ceil() as i64)..=(y1.floor() as i64) {
            if hull.contains_strictly([gx as f64, gy as f64], 1e-14) {
                lattice.push((gx, gy));
            }
        }
    }

    // Split S along the shadow lines of those points so that no piece sweeps
    // across a vertex.
    let vn = v.0.hypot(v.1);
    let normal = if vn > 0.0 { [-v.1 / vn, v.0 / vn] } else { [0.0, 0.0] };
    let mut pieces = vec![(rect.clone(), (f64::NEG_INFINITY, f64::INFINITY))];
    if vn > 0.0 && !lattice.is_empty() {
        let n = normal;
        let mut offsets: Vec<f64> = lattice
            .iter()
            .map(|&(gx, gy)| n[0] * gx as f64 + n[1] * gy as f64)
            .collect();
        offsets.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        offsets.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        pieces.clear();
        let mut lower = f64::NEG_INFINITY;
        for &o in offsets.iter().chain(std::iter::once(&f64::INFINITY)) {
            let mut p = rect.clone();
            if lower.is_finite() {
                p = p.clip(HalfPlane {
                    normal: [-n[0], -n[1]],
                    offset: -lower,
                });
            }
            if o.is_finite() {
                p = p.clip(HalfPlane { normal: n, offset: o });
            }
            if p.area() > 1e-14 {
                pieces.push((p, (lower, o)));
            }
            lower = o;
        }
    }

    let mut prisms = Vec::new();
    for (piece, band) in pieces {
        let ph = piece.sweep_hull([v.0, v.1]);
        let ((px0, px1), (py0, py1)) = ph.bounds();
        for cx in (px0.floor() as i64)..=(px1.floor() as i64) {
            for cy in (py0.floor() as i64)..=(py1.floor() as i64) {
                let (volume, t_mid) = cell_volume(&piece, v, (cx, cy));
                let Some(t) = t_mid else { continue };
                if volume <= 1e-15 {
                    continue;
                }
                let square = locate_cell(surface, base_set.square, &piece, v, (cx, cy), t)?;
                prisms.push(Prism {
                    square,
                    offset: (cx, cy),
                    piece: piece.clone(),
                    band,
                    volume,
                });
            }
        }
    }

    let hits_singular_locus = lattice.iter().any(|&(gx, gy)| {
        prisms.iter().any(|p| {
            let (lx, ly) = (gx - p.offset.0, gy - p.offset.1);
            (0..=1).contains(&lx)
                && (0..=1).contains(&ly)
                && surface.is_singular(p.square, Corner::from_sides(lx == 1, ly == 1))
        })
    });

    Ok(SweepSet {
        base_set: *base_set,
        direction: dir,
        prisms,
        hits_singular_locus,
        normal,
    })
}

/// Square reached by unfolding cell `cell` of the sweep of `piece`.
fn locate_cell(
    surface: &PolysquareSurface,
    base_square: usize,
    piece: &ConvexPolygon,
    v: (f64, f64),
    cell: (i64, i64),
    t: f64,
) -> Result<usize, FlowError> {
    let (c1, c2) = (cell.0 as f64, cell.1 as f64);
    let region = piece
        .translate([t * v.0, t * v.1])
        .clip_rect((c1, c1 + 1.0), (c2, c2 + 1.0));
    let target = region.centroid();
    let origin = [target[0] - t * v.0, target[1] - t * v.1];
    let d = (t * v.0, t * v.1);
    match advance(surface, base_square, origin[0], origin[1], d, false, |_| {})? {
        Outcome::Arrived(p) => {
            let (ex, ey) = (target[0] - c1, target[1] - c2);
            if (p.x - ex).abs() > 1e-9 || (p.y - ey).abs() > 1e-9 {
                return Err(FlowError::NumericalDegeneracy(format!(
                    "sweep cell {cell:?} unfolds to ({}, {}), expected ({ex}, {ey})",
                    p.x, p.y
                )));
            }
            Ok(p.square)
        }
        Outcome::Singular { .. } => Err(FlowError::NumericalDegeneracy(format!(
            "sweep cell {cell:?} representative meets a cone point"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{l_surface, torus, two_by_one};

    fn pt(s: &PolysquareSurface, sq: usize, x: f64, y: f64) -> SurfacePoint {
        SurfacePoint::new(s, sq, x, y).unwrap()
    }

    #[test]
    fn torus_straight_line() {
        let t = torus();
        let dir = Direction2::new(1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()).unwrap();
        let tr = geodesic_flow(&t, &pt(&t, 0, 0.2, 0.3), dir, 0.1 * 5f64.sqrt()).unwrap();
        let e = tr.end_base.unwrap();
        assert!((e.x - 0.3).abs() < 1e-12 && (e.y - 0.5).abs() < 1e-12);
        assert_eq!(tr.termination, Termination::Completed);
    }

    #[test]
    fn torus_horizontal_wraps() {
        let t = torus();
        let tr = geodesic_flow(&t, &pt(&t, 0, 0.25, 0.5), Direction2::new(1.0, 0.0).unwrap(), 3.5)
            .unwrap();
        let e = tr.end_base.unwrap();
        assert_eq!((e.x, e.y), (0.75, 0.5));
        assert_eq!(tr.segments.len(), 4);
        assert!((tr.duration_sum() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn aimed_at_cone_point_stops() {
        let l = l_surface();
        let start = pt(&l, 0, 0.3, 0.4);
        let dir = Direction2::new(0.7, 0.6).unwrap();
        let tr = geodesic_flow(&l, &start, dir, 2.0).unwrap();
        match tr.termination {
            Termination::HitSingularity { time, vertex } => {
                assert!((time - 0.7f64.hypot(0.6)).abs() < 1e-12);
                assert_eq!(vertex, Vertex { square: 0, corner: Corner::TopRight });
            }
            t => panic!("{t:?}"),
        }
    }

    #[test]
    fn v_shift_examples() {
        let t = torus();
        let p = v_shift(&t, &pt(&t, 0, 0.9, 0.9), Direction2::new(0.2, 0.3).unwrap()).unwrap();
        assert!((p.x - 0.1).abs() < 1e-12 && (p.y - 0.2).abs() < 1e-12);

        let l = l_surface();
        let p = v_shift(&l, &pt(&l, 0, 0.9, 0.5), Direction2::new(0.2, 0.0).unwrap()).unwrap();
        assert_eq!(p.square, l.right_of(0));
        assert!((p.x - 0.1).abs() < 1e-12);
        assert_eq!(p.y, 0.5);
    }

    #[test]
    fn w_shift_examples() {
        let m = torus().product_with_circle();
        let b = pt(m.base(), 0, 0.9, 0.9);
        let p = w_shift(&m, &ManifoldPoint::new(b, 0.8).unwrap(), Direction2::new(0.2, 0.3).unwrap(), 0.5)
            .unwrap();
        assert!((p.base.x - 0.1).abs() < 1e-12 && (p.base.y - 0.2).abs() < 1e-12);
        assert!((p.z - 0.3).abs() < 1e-12);
    }

    #[test]
    fn boundary_ownership_is_half_open() {
        let l = l_surface();
        // Exactly onto the right edge: owned by the right neighbour at x = 0.
        let p = v_shift(&l, &pt(&l, 0, 0.5, 0.5), Direction2::new(0.5, 0.0).unwrap()).unwrap();
        assert_eq!((p.square, p.x, p.y), (1, 0.0, 0.5));
        // Leftwards from x = 0 crosses at once.
        let p = v_shift(&l, &pt(&l, 1, 0.0, 0.5), Direction2::new(-0.25, 0.0).unwrap()).unwrap();
        assert_eq!((p.square, p.x, p.y), (0, 0.75, 0.5));
    }

    #[test]
    fn regular_vertex_is_crossed_diagonally() {
        let s = two_by_one();
        let start = pt(&s, 0, 0.5, 0.5);
        let tr = geodesic_flow(&s, &start, Direction2::new(1.0, 1.0).unwrap(), 2f64.sqrt()).unwrap();
        assert_eq!(tr.termination, Termination::Completed);
        let e = tr.end_base.unwrap();
        assert_eq!(e.square, 1);
        assert!((e.x - 0.5).abs() < 1e-12 && (e.y - 0.5).abs() < 1e-12);
        assert_eq!(tr.segments.len(), 2);
    }

    #[test]
    fn reverse_flow_builds_pathological_start() {
        let l = l_surface();
        let v = Direction2::new(2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0).unwrap();
        let corner = Vertex { square: 0, corner: Corner::TopRight };
        let start = flow_from_vertex(&l, corner, (-7.0 * v.v1, -7.0 * v.v2)).unwrap();
        let o = orbit(&l, start, v, 100).unwrap();
        assert_eq!(o.termination, OrbitTermination::PathologicalStart { index: 7 });
        assert_eq!(o.len(), 7);
    }

    #[test]
    fn orbit_edge_cases() {
        let t = torus();
        let v = Direction2::new(2f64.sqrt(), 3f64.sqrt()).unwrap();
        assert!(orbit(&t, pt(&t, 0, 0.1, 0.1), v, 0).unwrap().is_empty());
        let o = orbit(&t, pt(&t, 0, 0.1, 0.1), v, 1000).unwrap();
        assert!(o.is_complete() && o.len() == 1000);
        let l = l_surface();
        let o = orbit(&l, pt(&l, 0, 0.0, 0.0), v, 10).unwrap();
        assert_eq!(o.termination, OrbitTermination::PathologicalStart { index: 0 });
    }

    #[test]
    fn manifold_geodesic_z_wraps() {
        let m = torus().product_with_circle();
        let start = ManifoldPoint::new(pt(m.base(), 0, 0.5, 0.5), 0.0).unwrap();
        let tr = geodesic_flow_manifold(&m, &start, Direction3::new(0.0, 0.0, 1.0).unwrap(), 2.5)
            .unwrap();
        assert_eq!(tr.segments.len(), 3);
        assert_eq!(tr.end_z, Some(0.5));
        assert!((tr.duration_sum() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn sweep_volume_is_base_area() {
        let m = torus().product_with_circle();
        let s = SquareBox::new(m.base(), 0, (0.1, 0.4), (0.2, 0.5)).unwrap();
        let dir = Direction3::new(2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0, 1.0).unwrap();
        let sw = sweep(&s, dir, &m).unwrap();
        assert!((sw.volume() - 0.09).abs() < 1e-12, "{}", sw.volume());

        let sw = sweep(&s, Direction3::new(0.0, 0.0, 1.0).unwrap(), &m).unwrap();
        assert_eq!(sw.prisms.len(), 1);
        assert!((sw.volume() - 0.09).abs() < 1e-15);
    }

    #[test]
    fn sweep_on_l_surface_splits_at_cone_point() {
        let m = l_surface().product_with_circle();
        let s = SquareBox::new(m.base(), 0, (0.5, 0.9), (0.5, 0.9)).unwrap();
        let sw = sweep(&s, Direction3::new(0.4, 0.3, 1.0).unwrap(), &m).unwrap();
        assert!(sw.hits_singular_locus);
        assert!((sw.volume() - 0.16).abs() < 1e-12);
        let squares: std::collections::BTreeSet<_> = sw.prisms.iter().map(|p| p.square).collect();
        assert_eq!(squares.len(), 3);
    }

    #[test]
    fn time_in_whole_cube_is_total() {
        let m = torus().product_with_circle();
        let start = ManifoldPoint::new(pt(m.base(), 0, 0.3, 0.6), 0.0).unwrap();
        let dir = Direction3::new(0.3, 0.7, 1.0).unwrap();
        let tr = geodesic_flow_manifold(&m, &start, dir, 10.0).unwrap();
        let full = SquareBox::full(0);
        let sw = sweep(&full, dir, &m).unwrap();
        assert!((time_in_set(&tr, &sw) - 10.0).abs() < 1e-9);
        assert!((time_in_set(&tr, &CubeBox::full(0)) - 10.0).abs() < 1e-9);
        let empty = SquareBox::new(m.base(), 0, (0.2, 0.2), (0.1, 0.9)).unwrap();
        assert_eq!(time_in_set(&tr, &CubeBox { base: empty, z: (0.0, 1.0) }), 0.0);
    }
}
