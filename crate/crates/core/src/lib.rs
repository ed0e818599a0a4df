//! Polysquare translation surfaces, their products with the circle, and
//! the straight-line flows and shift maps living on them.

pub mod diophantine;
pub mod dynamics;
pub mod geometry;
mod polygon;
pub mod stats;

pub use diophantine::{
    certify_kronecker, circular_gap, lemma34_search, quadratic_kronecker, CertificateStatus,
    DiophantineError, KroneckerCertificate, Lemma34Options, Lemma34Result, QuadraticKronecker,
};
pub use dynamics::{
    geodesic_flow, geodesic_flow_manifold, orbit, orbit_manifold, sweep, time_in_set, v_shift,
    w_shift, Direction2, Direction3, FlowError, GeodesicTrace, Orbit, OrbitTermination,
    StepVector, SweepSet, Termination,
};
pub use geometry::{
    Corner, CubeBox, GeometryError, ManifoldPoint, PolycubeManifold, PolysquareSurface,
    SquareBox, SurfacePoint, SurfaceSpec, Vertex, VertexClass,
};
pub use stats::{
    birkhoff_average, detect_decomposition, equivalence_check, ks_uniform, star_discrepancy_2d,
    stepup, visiting_ratio_continuous, visiting_ratio_discrete, DecompositionReport,
    EquivalenceReport, ShiftSpace, StarDiscrepancy, StatsError, StepUpReport, UniformityReport,
    VisitHistogram,
};
