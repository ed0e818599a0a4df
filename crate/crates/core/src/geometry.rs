//! Polysquare translation surfaces and their products with the circle.
//!
//! A surface is a finite set of unit squares whose edges are identified in
//! pairs by translations: every right edge is glued to exactly one left edge
//! and every top edge to exactly one bottom edge. Points are addressed by a
//! square index and half-open local coordinates in `[0,1)²`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("surface specification contains no squares")]
    EmptySpec,
    #[error("{kind} gluing is not a perfect matching: {detail}")]
    NotAMatching { kind: &'static str, detail: String },
    #[error("square index {index} out of range for a surface with {squares} squares")]
    IndexOutOfRange { index: usize, squares: usize },
    #[error("coordinate {name}={value} outside [0,1)")]
    PointOutOfRange { name: &'static str, value: f64 },
    #[error("invalid surface spec field `{field}`: {reason}")]
    SpecField { field: String, reason: String },
    #[error("could not read surface spec: {0}")]
    Io(String),
}

/// The four corners of an atomic square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Corner {
    BottomLeft = 0,
    BottomRight = 1,
    TopLeft = 2,
    TopRight = 3,
}

impl Corner {
    pub const ALL: [Corner; 4] = [
        Corner::BottomLeft,
        Corner::BottomRight,
        Corner::TopLeft,
        Corner::TopRight,
    ];

    /// Corner at local position `(right, top)`.
    pub fn from_sides(right: bool, top: bool) -> Corner {
        match (right, top) {
            (false, false) => Corner::BottomLeft,
            (true, false) => Corner::BottomRight,
            (false, true) => Corner::TopLeft,
            (true, true) => Corner::TopRight,
        }
    }

    /// Local coordinates of the corner.
    pub fn position(self) -> (f64, f64) {
        match self {
            Corner::BottomLeft => (0.0, 0.0),
            Corner::BottomRight => (1.0, 0.0),
            Corner::TopLeft => (0.0, 1.0),
            Corner::TopRight => (1.0, 1.0),
        }
    }
}

/// A vertex descriptor: one corner of one square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pub square: usize,
    pub corner: Corner,
}

/// All corners identified to one point of the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexClass {
    pub corners: Vec<Vertex>,
}

impl VertexClass {
    /// Number of square corners around the vertex; 4 for a regular point.
    pub fn cycle_length(&self) -> usize {
        self.corners.len()
    }

    pub fn cone_angle(&self) -> f64 {
        self.corners.len() as f64 * std::f64::consts::FRAC_PI_2
    }

    pub fn is_singular(&self) -> bool {
        self.corners.len() != 4
    }
}

/// A finite polysquare translation surface.
#[derive(Debug, Clone, PartialEq)]
pub struct PolysquareSurface {
    anchors: Option<Vec<(i64, i64)>>,
    right: Vec<usize>,
    left: Vec<usize>,
    top: Vec<usize>,
    bottom: Vec<usize>,
    corner_class: Vec<usize>,
    classes: Vec<VertexClass>,
}

impl PolysquareSurface {
    /// Builds the surface of a finite set of grid cells `(col, row)`.
    ///
    /// Within each maximal horizontal run of cells the right edge of a cell
    /// is glued to the left edge of the next one, and the last right edge of
    /// the run wraps to its first left edge. Vertical runs are glued the same
    /// way. Squares are indexed by `(row, col)` in increasing order.
    pub fn from_grid<I>(cells: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = (i64, i64)>,
    {
        let cells: BTreeSet<(i64, i64)> = cells.into_iter().collect();
        if cells.is_empty() {
            return Err(GeometryError::EmptySpec);
        }
        let mut ordered: Vec<(i64, i64)> = cells.iter().copied().collect();
        ordered.sort_by_key(|&(c, r)| (r, c));
        let index: BTreeMap<(i64, i64), usize> =
            ordered.iter().enumerate().map(|(i, &c)| (c, i)).collect();

        let s = ordered.len();
        let mut right = vec![usize::MAX; s];
        let mut top = vec![usize::MAX; s];

        for (i, &(c, r)) in ordered.iter().enumerate() {
            right[i] = match index.get(&(c + 1, r)) {
                Some(&j) => j,
                None => {
                    let mut first = c;
                    while index.contains_key(&(first - 1, r)) {
                        first -= 1;
                    }
                    index[&(first, r)]
                }
            };
            top[i] = match index.get(&(c, r + 1)) {
                Some(&j) => j,
                None => {
                    let mut first = r;
                    while index.contains_key(&(c, first - 1)) {
                        first -= 1;
                    }
                    index[&(c, first)]
                }
            };
        }

        let mut surface = Self::assemble(right, top)?;
        surface.anchors = Some(ordered);
        Ok(surface)
    }

    /// Builds a surface from explicit gluings: `h_gluings[i]` is the square
    /// whose left edge is glued to the right edge of square `i`, and
    /// `v_gluings[i]` the square whose bottom edge is glued to the top of `i`.
    pub fn from_gluings(
        squares: usize,
        h_gluings: &[usize],
        v_gluings: &[usize],
    ) -> Result<Self, GeometryError> {
        if squares == 0 {
            return Err(GeometryError::EmptySpec);
        }
        for (kind, g) in [("horizontal", h_gluings), ("vertical", v_gluings)] {
            if g.len() != squares {
                return Err(GeometryError::NotAMatching {
                    kind,
                    detail: format!("{} entries for {} squares", g.len(), squares),
                });
            }
            if let Some(&bad) = g.iter().find(|&&j| j >= squares) {
                return Err(GeometryError::IndexOutOfRange {
                    index: bad,
                    squares,
                });
            }
        }
        Self::assemble(h_gluings.to_vec(), v_gluings.to_vec())
    }

    fn assemble(right: Vec<usize>, top: Vec<usize>) -> Result<Self, GeometryError> {
        let s = right.len();
        let left = invert(&right, "horizontal")?;
        let bottom = invert(&top, "vertical")?;

        // Union-find over the 4s corners.
        let mut parent: Vec<usize> = (0..4 * s).collect();
        fn find(parent: &mut [usize], mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        let mut union = |a: usize, b: usize| {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        };
        let id = |sq: usize, c: Corner| 4 * sq + c as usize;
        for i in 0..s {
            let r = right[i];
            union(id(i, Corner::BottomRight), id(r, Corner::BottomLeft));
            union(id(i, Corner::TopRight), id(r, Corner::TopLeft));
            let t = top[i];
            union(id(i, Corner::TopLeft), id(t, Corner::BottomLeft));
            union(id(i, Corner::TopRight), id(t, Corner::BottomRight));
        }

        let mut class_of_root: BTreeMap<usize, usize> = BTreeMap::new();
        let mut classes: Vec<VertexClass> = Vec::new();
        let mut corner_class = vec![0; 4 * s];
        for k in 0..4 * s {
            let root = find(&mut parent, k);
            let next = classes.len();
            let c = *class_of_root.entry(root).or_insert(next);
            if c == classes.len() {
                classes.push(VertexClass {
                    corners: Vec::new(),
                });
            }
            classes[c].corners.push(Vertex {
                square: k / 4,
                corner: Corner::ALL[k % 4],
            });
            corner_class[k] = c;
        }

        Ok(Self {
            anchors: None,
            right,
            left,
            top,
            bottom,
            corner_class,
            classes,
        })
    }

    /// Reads a surface spec from a JSON file; see [`SurfaceSpec`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| GeometryError::Io(format!("{}: {e}", path.as_ref().display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| GeometryError::Io(format!("{}: {e}", path.as_ref().display())))?;
        SurfaceSpec::from_json(&value)?.build()
    }

    /// Number of atomic squares, which is also the area of the surface.
    pub fn squares(&self) -> usize {
        self.right.len()
    }

    pub fn area(&self) -> f64 {
        self.squares() as f64
    }

    pub fn anchors(&self) -> Option<&[(i64, i64)]> {
        self.anchors.as_deref()
    }

    /// Square whose left edge is glued to the right edge of `square`.
    pub fn right_of(&self, square: usize) -> usize {
        self.right[square]
    }

    pub fn left_of(&self, square: usize) -> usize {
        self.left[square]
    }

    pub fn top_of(&self, square: usize) -> usize {
        self.top[square]
    }

    pub fn bottom_of(&self, square: usize) -> usize {
        self.bottom[square]
    }

    pub fn h_gluings(&self) -> &[usize] {
        &self.right
    }

    pub fn v_gluings(&self) -> &[usize] {
        &self.top
    }

    pub fn vertex_classes(&self) -> &[VertexClass] {
        &self.classes
    }

    pub fn vertex_class_of(&self, v: Vertex) -> &VertexClass {
        &self.classes[self.corner_class[4 * v.square + v.corner as usize]]
    }

    pub fn is_singular(&self, square: usize, corner: Corner) -> bool {
        self.classes[self.corner_class[4 * square + corner as usize]].is_singular()
    }

    /// Vertex classes with cone angle different from 2π.
    pub fn singular_classes(&self) -> impl Iterator<Item = &VertexClass> {
        self.classes.iter().filter(|c| c.is_singular())
    }

    /// Every corner descriptor lying on a singular vertex.
    pub fn singular_vertices(&self) -> BTreeSet<Vertex> {
        self.singular_classes()
            .flat_map(|c| c.corners.iter().copied())
            .collect()
    }

    pub fn has_singularities(&self) -> bool {
        self.singular_classes().next().is_some()
    }

    /// Euler characteristic of the square complex: V − E + F with E = 2F.
    pub fn euler_characteristic(&self) -> i64 {
        self.classes.len() as i64 - self.squares() as i64
    }

    pub fn genus(&self) -> i64 {
        (2 - self.euler_characteristic()) / 2
    }

    /// The `s` points, one per square, with local coordinates `q`.
    pub fn lifts_of(&self, q: (f64, f64)) -> Result<Vec<SurfacePoint>, GeometryError> {
        (0..self.squares())
            .map(|sq| SurfacePoint::new(self, sq, q.0, q.1))
            .collect()
    }

    pub fn check_square(&self, square: usize) -> Result<(), GeometryError> {
        if square < self.squares() {
            Ok(())
        } else {
            Err(GeometryError::IndexOutOfRange {
                index: square,
                squares: self.squares(),
            })
        }
    }

    pub fn product_with_circle(&self) -> PolycubeManifold {
        PolycubeManifold { base: self.clone() }
    }
}

fn invert(map: &[usize], kind: &'static str) -> Result<Vec<usize>, GeometryError> {
    let mut inv = vec![usize::MAX; map.len()];
    for (i, &j) in map.iter().enumerate() {
        if inv[j] != usize::MAX {
            return Err(GeometryError::NotAMatching {
                kind,
                detail: format!("edge of square {j} glued to squares {} and {i}", inv[j]),
            });
        }
        inv[j] = i;
    }
    Ok(inv)
}

impl fmt::Display for PolysquareSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "s={}, singular classes={}",
            self.squares(),
            self.singular_classes().count()
        )
    }
}

/// `P × [0,1)`: one unit cube over every atomic square.
#[derive(Debug, Clone, PartialEq)]
pub struct PolycubeManifold {
    base: PolysquareSurface,
}

impl PolycubeManifold {
    pub fn base(&self) -> &PolysquareSurface {
        &self.base
    }

    pub fn cubes(&self) -> usize {
        self.base.squares()
    }

    pub fn volume(&self) -> f64 {
        self.base.area()
    }

    /// Vertical singular lines `vertex × [0,1)`, one per singular corner.
    pub fn singular_locus(&self) -> BTreeSet<Vertex> {
        self.base.singular_vertices()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub square: usize,
    pub x: f64,
    pub y: f64,
}

impl SurfacePoint {
    pub fn new(
        surface: &PolysquareSurface,
        square: usize,
        x: f64,
        y: f64,
    ) -> Result<Self, GeometryError> {
        surface.check_square(square)?;
        check_unit("x", x)?;
        check_unit("y", y)?;
        Ok(Self { square, x, y })
    }

    pub fn project(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPoint {
    pub base: SurfacePoint,
    pub z: f64,
}

impl ManifoldPoint {
    pub fn new(base: SurfacePoint, z: f64) -> Result<Self, GeometryError> {
        check_unit("z", z)?;
        Ok(Self { base, z })
    }

    pub fn project(&self) -> (f64, f64, f64) {
        (self.base.x, self.base.y, self.z)
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<(), GeometryError> {
    if (0.0..1.0).contains(&value) {
        Ok(())
    } else {
        Err(GeometryError::PointOutOfRange { name, value })
    }
}

/// Axis-parallel box `[x0,x1) × [y0,y1)` inside one atomic square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareBox {
    pub square: usize,
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl SquareBox {
    pub fn new(
        surface: &PolysquareSurface,
        square: usize,
        x: (f64, f64),
        y: (f64, f64),
    ) -> Result<Self, GeometryError> {
        surface.check_square(square)?;
        check_interval("x", x)?;
        check_interval("y", y)?;
        Ok(Self { square, x, y })
    }

    /// The whole atomic square.
    pub fn full(square: usize) -> Self {
        Self {
            square,
            x: (0.0, 1.0),
            y: (0.0, 1.0),
        }
    }

    pub fn area(&self) -> f64 {
        (self.x.1 - self.x.0) * (self.y.1 - self.y.0)
    }

    pub fn contains(&self, p: &SurfacePoint) -> bool {
        p.square == self.square
            && self.x.0 <= p.x
            && p.x < self.x.1
            && self.y.0 <= p.y
            && p.y < self.y.1
    }

    pub fn is_subset_of(&self, other: &SquareBox) -> bool {
        self.square == other.square
            && other.x.0 <= self.x.0
            && self.x.1 <= other.x.1
            && other.y.0 <= self.y.0
            && self.y.1 <= other.y.1
    }
}

/// Box `[x0,x1) × [y0,y1) × [z0,z1)` inside one atomic cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeBox {
    pub base: SquareBox,
    pub z: (f64, f64),
}

impl CubeBox {
    pub fn new(base: SquareBox, z: (f64, f64)) -> Result<Self, GeometryError> {
        check_interval("z", z)?;
        Ok(Self { base, z })
    }

    pub fn full(square: usize) -> Self {
        Self {
            base: SquareBox::full(square),
            z: (0.0, 1.0),
        }
    }

    pub fn volume(&self) -> f64 {
        self.base.area() * (self.z.1 - self.z.0)
    }

    pub fn contains(&self, p: &ManifoldPoint) -> bool {
        self.base.contains(&p.base) && self.z.0 <= p.z && p.z < self.z.1
    }
}

fn check_interval(name: &'static str, (lo, hi): (f64, f64)) -> Result<(), GeometryError> {
    if (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi {
        Ok(())
    } else {
        Err(GeometryError::SpecField {
            field: name.into(),
            reason: format!("interval [{lo}, {hi}) is not inside [0,1]"),
        })
    }
}

/// JSON surface specification.
///
/// Either `{"grid": [[0/1, ...], ...]}` with rows listed top to bottom, or
/// `{"squares": s, "h_gluings": [...], "v_gluings": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SurfaceSpec {
    Grid {
        grid: Vec<Vec<u8>>,
    },
    Explicit {
        squares: usize,
        h_gluings: Vec<usize>,
        v_gluings: Vec<usize>,
    },
}

impl SurfaceSpec {
    /// Parses a spec, rejecting unknown fields by name.
    pub fn from_json(value: &Value) -> Result<Self, GeometryError> {
        let obj = value.as_object().ok_or_else(|| GeometryError::SpecField {
            field: "<root>".into(),
            reason: "expected a JSON object".into(),
        })?;
        let allowed: &[&str] = if obj.contains_key("grid") {
            &["grid"]
        } else {
            &["squares", "h_gluings", "v_gluings"]
        };
        if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(GeometryError::SpecField {
                field: k.clone(),
                reason: "unknown field".into(),
            });
        }
        let field = |name: &str| -> Result<&Value, GeometryError> {
            obj.get(name).ok_or_else(|| GeometryError::SpecField {
                field: name.into(),
                reason: "missing".into(),
            })
        };
        let parse = |name: &str| -> Result<Vec<u64>, GeometryError> {
            let bad = |reason: &str| GeometryError::SpecField {
                field: name.into(),
                reason: reason.into(),
            };
            field(name)?
                .as_array()
                .ok_or_else(|| bad("expected an array"))?
                .iter()
                .map(|v| v.as_u64().ok_or_else(|| bad("expected nonnegative integers")))
                .collect()
        };
        if obj.contains_key("grid") {
            let bad = |reason: &str| GeometryError::SpecField {
                field: "grid".into(),
                reason: reason.into(),
            };
            let rows = field("grid")?
                .as_array()
                .ok_or_else(|| bad("expected an array of rows"))?;
            let mut grid = Vec::with_capacity(rows.len());
            for row in rows {
                let row = row.as_array().ok_or_else(|| bad("rows must be arrays"))?;
                let cells = row
                    .iter()
                    .map(|c| match c.as_u64() {
                        Some(0) => Ok(0),
                        Some(1) => Ok(1),
                        _ => Err(bad("cells must be 0 or 1")),
                    })
                    .collect::<Result<Vec<u8>, _>>()?;
                grid.push(cells);
            }
            Ok(SurfaceSpec::Grid { grid })
        } else {
            let squares = field("squares")?
                .as_u64()
                .ok_or_else(|| GeometryError::SpecField {
                    field: "squares".into(),
                    reason: "expected a nonnegative integer".into(),
                })? as usize;
            let h = parse("h_gluings")?.into_iter().map(|v| v as usize).collect();
            let v = parse("v_gluings")?.into_iter().map(|v| v as usize).collect();
            Ok(SurfaceSpec::Explicit {
                squares,
                h_gluings: h,
                v_gluings: v,
            })
        }
    }

    /// Grid cells encoded by a `grid` spec, with row 0 at the bottom.
    pub fn grid_cells(grid: &[Vec<u8>]) -> Vec<(i64, i64)> {
        let n = grid.len() as i64;
        grid.iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &c)| c == 1)
                    .map(move |(col, _)| (col as i64, n - 1 - i as i64))
            })
            .collect()
    }

    pub fn build(&self) -> Result<PolysquareSurface, GeometryError> {
        match self {
            SurfaceSpec::Grid { grid } => PolysquareSurface::from_grid(Self::grid_cells(grid)),
            SurfaceSpec::Explicit {
                squares,
                h_gluings,
                v_gluings,
            } => PolysquareSurface::from_gluings(*squares, h_gluings, v_gluings),
        }
    }
}

/// The unit torus, one square glued to itself.
pub fn torus() -> PolysquareSurface {
    PolysquareSurface::from_grid([(0, 0)]).expect("nonempty")
}

/// Three squares in an L: `(0,0)`, `(1,0)` and `(0,1)`.
pub fn l_surface() -> PolysquareSurface {
    PolysquareSurface::from_grid([(0, 0), (0, 1), (1, 0)]).expect("nonempty")
}

/// Two squares side by side.
pub fn two_by_one() -> PolysquareSurface {
    PolysquareSurface::from_grid([(0, 0), (1, 0)]).expect("nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_has_no_cone_points() {
        let t = torus();
        assert_eq!(t.squares(), 1);
        assert_eq!(t.singular_classes().count(), 0);
        assert_eq!(t.genus(), 1);
    }

    #[test]
    fn l_surface_has_one_six_pi_vertex() {
        let l = l_surface();
        assert_eq!(l.squares(), 3);
        let sing: Vec<_> = l.singular_classes().collect();
        assert_eq!(sing.len(), 1);
        assert_eq!(sing[0].cycle_length(), 12);
        assert!((sing[0].cone_angle() - 6.0 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(l.genus(), 2);
        assert_eq!(l.singular_vertices().len(), 12);
    }

    #[test]
    fn two_by_one_is_flat() {
        let s = two_by_one();
        assert_eq!(s.squares(), 2);
        assert_eq!(s.singular_classes().count(), 0);
    }

    #[test]
    fn grid_street_gluing() {
        let l = l_surface();
        // (0,0) -> 0, (1,0) -> 1, (0,1) -> 2
        assert_eq!(l.anchors().unwrap(), &[(0, 0), (1, 0), (0, 1)]);
        assert_eq!(l.right_of(0), 1);
        assert_eq!(l.right_of(1), 0);
        assert_eq!(l.right_of(2), 2);
        assert_eq!(l.top_of(0), 2);
        assert_eq!(l.top_of(2), 0);
        assert_eq!(l.top_of(1), 1);
    }

    #[test]
    fn full_rectangles_are_tori() {
        for (a, b) in [(2, 3), (3, 3), (4, 1), (1, 5)] {
            let cells = (0..a).flat_map(|c| (0..b).map(move |r| (c, r)));
            let s = PolysquareSurface::from_grid(cells).unwrap();
            assert_eq!(s.squares(), (a * b) as usize);
            assert_eq!(s.singular_classes().count(), 0, "{a}x{b}");
        }
    }

    #[test]
    fn cone_angle_accounting_matches_euler_characteristic() {
        let shapes: Vec<Vec<(i64, i64)>> = vec![
            vec![(0, 0)],
            vec![(0, 0), (1, 0)],
            vec![(0, 0), (0, 1), (1, 0)],
            vec![(0, 0), (1, 0), (2, 0), (0, 1), (0, 2)],
            vec![(0, 0), (1, 0), (1, 1), (2, 1)],
            vec![(0, 0), (1, 0), (2, 0), (1, 1)],
        ];
        for cells in shapes {
            let s = PolysquareSurface::from_grid(cells.clone()).unwrap();
            let excess: f64 = s
                .vertex_classes()
                .iter()
                .map(|c| c.cycle_length() as f64 / 4.0 - 1.0)
                .sum();
            assert_eq!(excess, -(s.euler_characteristic() as f64), "{cells:?}");
            assert_eq!(
                s.vertex_classes()
                    .iter()
                    .map(|c| c.cycle_length())
                    .sum::<usize>(),
                4 * s.squares()
            );
        }
    }

    #[test]
    fn explicit_gluings() {
        let t = PolysquareSurface::from_gluings(1, &[0], &[0]).unwrap();
        assert_eq!(t.singular_classes().count(), 0);

        let crossed = PolysquareSurface::from_gluings(2, &[1, 0], &[0, 1]).unwrap();
        assert_eq!(crossed.squares(), 2);
        assert_eq!(crossed.singular_classes().count(), 0);

        let err = PolysquareSurface::from_gluings(2, &[1, 1], &[0, 1]).unwrap_err();
        assert!(matches!(err, GeometryError::NotAMatching { .. }));

        let err = PolysquareSurface::from_gluings(2, &[1, 2], &[0, 1]).unwrap_err();
        assert!(matches!(err, GeometryError::IndexOutOfRange { index: 2, .. }));

        assert_eq!(
            PolysquareSurface::from_gluings(0, &[], &[]).unwrap_err(),
            GeometryError::EmptySpec
        );
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert_eq!(
            PolysquareSurface::from_grid(Vec::new()).unwrap_err(),
            GeometryError::EmptySpec
        );
    }

    #[test]
    fn manifold_volume() {
        assert_eq!(torus().product_with_circle().volume(), 1.0);
        assert_eq!(l_surface().product_with_circle().volume(), 3.0);
        assert_eq!(two_by_one().product_with_circle().volume(), 2.0);
        assert_eq!(l_surface().product_with_circle().singular_locus().len(), 12);
    }

    #[test]
    fn projections_and_lifts() {
        let l = l_surface();
        let p = SurfacePoint::new(&l, 2, 0.3, 0.7).unwrap();
        assert_eq!(p.project(), (0.3, 0.7));
        let m = ManifoldPoint::new(SurfacePoint::new(&l, 0, 0.1, 0.2).unwrap(), 0.9).unwrap();
        assert_eq!(m.project(), (0.1, 0.2, 0.9));

        assert_eq!(torus().lifts_of((0.5, 0.5)).unwrap().len(), 1);
        let lifts = l.lifts_of((0.25, 0.6)).unwrap();
        assert_eq!(lifts.len(), 3);
        assert!(lifts.iter().all(|p| p.project() == (0.25, 0.6)));
        let squares: BTreeSet<_> = lifts.iter().map(|p| p.square).collect();
        assert_eq!(squares.len(), 3);
    }

    #[test]
    fn point_validation() {
        let t = torus();
        assert!(SurfacePoint::new(&t, 0, 1.0, 0.0).is_err());
        assert!(SurfacePoint::new(&t, 1, 0.0, 0.0).is_err());
        assert!(SurfacePoint::new(&t, 0, -0.0, 0.999).is_ok());
        let b = SurfacePoint::new(&t, 0, 0.5, 0.5).unwrap();
        assert!(ManifoldPoint::new(b, 1.0).is_err());
    }

    #[test]
    fn spec_parsing() {
        let v: Value = serde_json::json!({"grid": [[1, 0], [1, 1]]});
        let s = SurfaceSpec::from_json(&v).unwrap().build().unwrap();
        assert_eq!(s.to_string(), "s=3, singular classes=1");

        let v: Value = serde_json::json!({"squares": 1, "h_gluings": [0], "v_gluings": [0]});
        let s = SurfaceSpec::from_json(&v).unwrap().build().unwrap();
        assert_eq!(s.to_string(), "s=1, singular classes=0");

        let v: Value = serde_json::json!({"grid": [[1]], "extra": 1});
        match SurfaceSpec::from_json(&v).unwrap_err() {
            GeometryError::SpecField { field, .. } => assert_eq!(field, "extra"),
            e => panic!("{e}"),
        }
        let v: Value = serde_json::json!({"squares": 2, "h_gluings": [0, 1]});
        match SurfaceSpec::from_json(&v).unwrap_err() {
            GeometryError::SpecField { field, .. } => assert_eq!(field, "v_gluings"),
            e => panic!("{e}"),
        }
        let v: Value = serde_json::json!({"grid": [[2]]});
        assert!(SurfaceSpec::from_json(&v).is_err());
    }
}
