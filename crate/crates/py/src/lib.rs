//! Python bindings. Structured reports come back as plain dicts and lists.

use polysquare::diophantine::{DEFAULT_CERTIFY_BUDGET, DEFAULT_SCAN_BUDGET, LEMMA34_CERTIFY_HEIGHT};
use polysquare::geometry::{l_surface, torus, two_by_one};
use polysquare::stats::{DEFAULT_BOX_BUDGET, DEFAULT_SAMPLES_PER_AXIS};
use polysquare::{
    CubeBox, DiophantineError, Direction2, Direction3, FlowError, GeometryError, ManifoldPoint,
    SquareBox, StatsError, SurfacePoint, SurfaceSpec,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(polysquare_py, SingularityError, PyException);
create_exception!(polysquare_py, BudgetError, PyException);

/// `(square, (x0, x1), (y0, y1))`.
type BoxArg = (usize, (f64, f64), (f64, f64));

fn geometry_err(e: GeometryError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn flow_err(e: FlowError) -> PyErr {
    match e {
        FlowError::HitSingularity { .. } | FlowError::NumericalDegeneracy(_) => {
            SingularityError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn stats_err(e: StatsError) -> PyErr {
    match e {
        StatsError::PathologicalStart { .. } | StatsError::SingularGeodesic { .. } => {
            SingularityError::new_err(e.to_string())
        }
        StatsError::Flow(f) => flow_err(f),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn dioph_err(e: DiophantineError) -> PyErr {
    match e {
        DiophantineError::HeightTooLarge { .. } | DiophantineError::BudgetExceeded { .. } => {
            BudgetError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Serializes through JSON into native Python objects.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "PolysquareSurface", module = "polysquare_py", frozen)]
struct PySurface {
    inner: polysquare::PolysquareSurface,
}

#[pymethods]
impl PySurface {
    /// Builds a surface from a spec dict, `{"grid": ...}` or `{"squares": ...}`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = SurfaceSpec::from_json(&v)
            .and_then(|s| s.build())
            .map_err(geometry_err)?;
        Ok(Self { inner })
    }

    /// Unit squares at integer `(col, row)` positions.
    #[staticmethod]
    fn from_cells(cells: Vec<(i64, i64)>) -> PyResult<Self> {
        let inner = polysquare::PolysquareSurface::from_grid(cells).map_err(geometry_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_gluings(squares: usize, h_gluings: Vec<usize>, v_gluings: Vec<usize>) -> PyResult<Self> {
        let inner = polysquare::PolysquareSurface::from_gluings(squares, &h_gluings, &v_gluings)
            .map_err(geometry_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn torus() -> Self {
        Self { inner: torus() }
    }

    #[staticmethod]
    fn l_surface() -> Self {
        Self { inner: l_surface() }
    }

    #[staticmethod]
    fn two_by_one() -> Self {
        Self { inner: two_by_one() }
    }

    #[getter]
    fn squares(&self) -> usize {
        self.inner.squares()
    }

    #[getter]
    fn h_gluings(&self) -> Vec<usize> {
        self.inner.h_gluings().to_vec()
    }

    #[getter]
    fn v_gluings(&self) -> Vec<usize> {
        self.inner.v_gluings().to_vec()
    }

    #[getter]
    fn genus(&self) -> i64 {
        self.inner.genus()
    }

    #[getter]
    fn euler_characteristic(&self) -> i64 {
        self.inner.euler_characteristic()
    }

    #[getter]
    fn singular_classes(&self) -> usize {
        self.inner.singular_classes().count()
    }

    /// Cone angles of the vertex classes, in units of π.
    fn cone_angles(&self) -> Vec<f64> {
        self.inner
            .vertex_classes()
            .iter()
            .map(|c| c.cone_angle() / std::f64::consts::PI)
            .collect()
    }

    fn vertex_classes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.vertex_classes())
    }

    fn __repr__(&self) -> String {
        format!("PolysquareSurface({})", self.inner)
    }
}

fn point(p: &PySurface, start: (usize, f64, f64)) -> PyResult<SurfacePoint> {
    SurfacePoint::new(&p.inner, start.0, start.1, start.2).map_err(geometry_err)
}

fn mpoint(p: &PySurface, start: (usize, f64, f64, f64)) -> PyResult<ManifoldPoint> {
    let base = point(p, (start.0, start.1, start.2))?;
    ManifoldPoint::new(base, start.3).map_err(geometry_err)
}

fn dir2(v: (f64, f64)) -> PyResult<Direction2> {
    Direction2::new(v.0, v.1).map_err(flow_err)
}

fn square_boxes(p: &PySurface, sets: Vec<BoxArg>) -> PyResult<Vec<SquareBox>> {
    sets.into_iter()
        .map(|(sq, x, y)| SquareBox::new(&p.inner, sq, x, y).map_err(geometry_err))
        .collect()
}

/// Points `v0 + j·v` for `j < n`, as `(square, x, y)`, and the termination.
#[pyfunction]
fn orbit<'py>(
    py: Python<'py>,
    surface: &PySurface,
    start: (usize, f64, f64),
    v: (f64, f64),
    n: usize,
) -> PyResult<(Vec<(usize, f64, f64)>, Bound<'py, PyAny>)> {
    let o = polysquare::orbit(&surface.inner, point(surface, start)?, dir2(v)?, n).map_err(flow_err)?;
    let pts = o.points.iter().map(|q| (q.square, q.x, q.y)).collect();
    Ok((pts, to_py(py, &o.termination)?))
}

/// The w-shift orbit on `P × [0,1)`, as `(square, x, y, z)`.
#[pyfunction]
fn orbit_manifold<'py>(
    py: Python<'py>,
    surface: &PySurface,
    start: (usize, f64, f64, f64),
    v: (f64, f64),
    w3: f64,
    n: usize,
) -> PyResult<(Vec<(usize, f64, f64, f64)>, Bound<'py, PyAny>)> {
    let m = surface.inner.product_with_circle();
    let o = polysquare::orbit_manifold(&m, mpoint(surface, start)?, dir2(v)?, w3, n)
        .map_err(flow_err)?;
    let pts = o.points.iter().map(|q| (q.base.square, q.base.x, q.base.y, q.z)).collect();
    Ok((pts, to_py(py, &o.termination)?))
}

/// Straight-line flow for time `t`; returns the trace as a dict.
#[pyfunction]
fn geodesic_flow<'py>(
    py: Python<'py>,
    surface: &PySurface,
    start: (usize, f64, f64),
    direction: (f64, f64),
    t: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let trace = polysquare::geodesic_flow(&surface.inner, &point(surface, start)?, dir2(direction)?, t)
        .map_err(flow_err)?;
    to_py(py, &trace)
}

#[pyfunction]
fn geodesic_flow_manifold<'py>(
    py: Python<'py>,
    surface: &PySurface,
    start: (usize, f64, f64, f64),
    direction: (f64, f64, f64),
    t: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let m = surface.inner.product_with_circle();
    let d = Direction3::new(direction.0, direction.1, direction.2).map_err(flow_err)?;
    let trace = polysquare::geodesic_flow_manifold(&m, &mpoint(surface, start)?, d, t).map_err(flow_err)?;
    to_py(py, &trace)
}

/// Exact volume of the sweep of the box `(square, x, y)` along `(v1, v2, 1)`.
#[pyfunction]
fn sweep_volume(surface: &PySurface, set: BoxArg, v: (f64, f64)) -> PyResult<f64> {
    let b = SquareBox::new(&surface.inner, set.0, set.1, set.2).map_err(geometry_err)?;
    let d = Direction3::new(v.0, v.1, 1.0).map_err(flow_err)?;
    let m = surface.inner.product_with_circle();
    Ok(polysquare::sweep(&b, d, &m).map_err(flow_err)?.volume())
}

#[pyfunction]
#[pyo3(signature = (components, height = 100, budget = DEFAULT_CERTIFY_BUDGET))]
fn certify_kronecker<'py>(
    py: Python<'py>,
    components: Vec<f64>,
    height: u64,
    budget: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let c = polysquare::certify_kronecker(&components, height, budget).map_err(dioph_err)?;
    to_py(py, &c)
}

#[pyfunction]
fn quadratic_kronecker<'py>(py: Python<'py>, seeds: Vec<u64>) -> PyResult<Bound<'py, PyAny>> {
    let q = polysquare::quadratic_kronecker(&seeds).map_err(dioph_err)?;
    to_py(py, &q)
}

#[pyfunction]
#[pyo3(signature = (v1, v2, w, eps, scan_budget = DEFAULT_SCAN_BUDGET))]
fn lemma34_search<'py>(
    py: Python<'py>,
    v1: f64,
    v2: f64,
    w: f64,
    eps: f64,
    scan_budget: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = polysquare::Lemma34Options {
        scan_budget,
        certify_height: LEMMA34_CERTIFY_HEIGHT,
    };
    let r = polysquare::lemma34_search(v1, v2, w, eps, opts).map_err(dioph_err)?;
    to_py(py, &r)
}

#[pyfunction]
fn circular_gap(points: Vec<f64>) -> PyResult<f64> {
    polysquare::circular_gap(&points).map_err(dioph_err)
}

/// Discrete visiting ratios of an orbit against boxes `(square, (x0, x1), (y0, y1))`.
#[pyfunction]
#[pyo3(signature = (surface, start, v, n, sets, checkpoints = vec![]))]
fn visiting_ratio_discrete<'py>(
    py: Python<'py>,
    surface: &PySurface,
    start: (usize, f64, f64),
    v: (f64, f64),
    n: usize,
    sets: Vec<BoxArg>,
    checkpoints: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let boxes = square_boxes(surface, sets)?;
    let o = polysquare::orbit(&surface.inner, point(surface, start)?, dir2(v)?, n).map_err(flow_err)?;
    let r = polysquare::visiting_ratio_discrete(&o.points, &boxes, surface.inner.squares(), &checkpoints)
        .map_err(stats_err)?;
    to_py(py, &r)
}

/// Occupation-time ratios of a surface geodesic of length `t`.
#[pyfunction]
#[pyo3(signature = (surface, start, direction, t, sets, checkpoints = vec![]))]
fn visiting_ratio_continuous<'py>(
    py: Python<'py>,
    surface: &PySurface,
    start: (usize, f64, f64),
    direction: (f64, f64),
    t: f64,
    sets: Vec<BoxArg>,
    checkpoints: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let boxes = square_boxes(surface, sets)?;
    let trace = polysquare::geodesic_flow(&surface.inner, &point(surface, start)?, dir2(direction)?, t)
        .map_err(flow_err)?;
    let r = polysquare::visiting_ratio_continuous(&trace, &boxes, surface.inner.squares(), &checkpoints)
        .map_err(stats_err)?;
    to_py(py, &r)
}

#[pyfunction]
fn equivalence_check<'py>(
    py: Python<'py>,
    surface: &PySurface,
    start: (usize, f64, f64),
    v: (f64, f64),
    set: BoxArg,
    j: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let b = SquareBox::new(&surface.inner, set.0, set.1, set.2).map_err(geometry_err)?;
    let r = polysquare::equivalence_check(&surface.inner, &point(surface, start)?, dir2(v)?, &b, j)
        .map_err(stats_err)?;
    to_py(py, &r)
}

/// Paired uniformity on the surface and on `P × [0,1)`. Manifold sets are
/// the surface sets crossed with the whole circle.
#[pyfunction]
#[pyo3(signature = (surface, start, v, w3, j, sets, checkpoints = vec![]))]
#[allow(clippy::too_many_arguments)]
fn stepup<'py>(
    py: Python<'py>,
    surface: &PySurface,
    start: (usize, f64, f64, f64),
    v: (f64, f64),
    w3: f64,
    j: usize,
    sets: Vec<BoxArg>,
    checkpoints: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let boxes = square_boxes(surface, sets)?;
    let cubes = boxes
        .iter()
        .map(|b| CubeBox::new(*b, (0.0, 1.0)).map_err(geometry_err))
        .collect::<PyResult<Vec<_>>>()?;
    let r = polysquare::stepup(&surface.inner, mpoint(surface, start)?, dir2(v)?, w3, j, &boxes, &cubes, &checkpoints)
        .map_err(stats_err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (points, box_budget = DEFAULT_BOX_BUDGET))]
fn star_discrepancy_2d<'py>(
    py: Python<'py>,
    points: Vec<(f64, f64)>,
    box_budget: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let r = polysquare::star_discrepancy_2d(&points, box_budget).map_err(stats_err)?;
    to_py(py, &r)
}

#[pyfunction]
fn ks_uniform(values: Vec<f64>) -> PyResult<f64> {
    polysquare::ks_uniform(&values).map_err(stats_err)
}

/// Components of the discretized shift; pass `w3` for the manifold.
#[pyfunction]
#[pyo3(signature = (surface, v, resolution, w3 = None, samples_per_axis = DEFAULT_SAMPLES_PER_AXIS))]
fn detect_decomposition<'py>(
    py: Python<'py>,
    surface: &PySurface,
    v: (f64, f64),
    resolution: usize,
    w3: Option<f64>,
    samples_per_axis: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let v = dir2(v)?;
    let m = surface.inner.product_with_circle();
    let space = match w3 {
        None => polysquare::ShiftSpace::Surface { surface: &surface.inner, v },
        Some(w3) => polysquare::ShiftSpace::Manifold { manifold: &m, v, w3 },
    };
    let r = polysquare::detect_decomposition(space, resolution, samples_per_axis).map_err(stats_err)?;
    to_py(py, &r)
}

#[pymodule]
fn polysquare_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySurface>()?;
    m.add("SingularityError", m.py().get_type::<SingularityError>())?;
    m.add("BudgetError", m.py().get_type::<BudgetError>())?;
    m.add_function(wrap_pyfunction!(orbit, m)?)?;
    m.add_function(wrap_pyfunction!(orbit_manifold, m)?)?;
    m.add_function(wrap_pyfunction!(geodesic_flow, m)?)?;
    m.add_function(wrap_pyfunction!(geodesic_flow_manifold, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_volume, m)?)?;
    m.add_function(wrap_pyfunction!(certify_kronecker, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_kronecker, m)?)?;
    m.add_function(wrap_pyfunction!(lemma34_search, m)?)?;
    m.add_function(wrap_pyfunction!(circular_gap, m)?)?;
    m.add_function(wrap_pyfunction!(visiting_ratio_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(visiting_ratio_continuous, m)?)?;
    m.add_function(wrap_pyfunction!(equivalence_check, m)?)?;
    m.add_function(wrap_pyfunction!(stepup, m)?)?;
    m.add_function(wrap_pyfunction!(star_discrepancy_2d, m)?)?;
    m.add_function(wrap_pyfunction!(ks_uniform, m)?)?;
    m.add_function(wrap_pyfunction!(detect_decomposition, m)?)?;
    Ok(())
}
