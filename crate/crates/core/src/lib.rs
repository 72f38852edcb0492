//! Numerical toolkit for self-referential relational networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`relational`] owns the antisymmetric link-strength matrix, the additive
//!   noise model and the nonlinear iterator `B -> B - a(B + B^-1) + w`.
//! * [`graph`] thresholds a matrix into a link graph, splits it into connected
//!   gebits and measures breadth-first shell profiles.
//! * [`likelihood`] scores spanning-tree shell profiles and searches for the
//!   most likely one at fixed node count.
//! * [`dimension`] fits `D_k ~ sin^(d-1)(pi k / L)` to shell profiles.
//! * [`profile`] holds the shell-profile value type shared by all of the above.
//! * [`csv`] reads and writes the plain-text tables used by the command line.

pub mod csv;
pub mod dimension;
pub mod graph;
pub mod likelihood;
pub mod profile;
pub mod relational;

pub use dimension::{
    dimension_of_p, empirical_dimension, fit_dimension, fit_shells, DimensionCurvePoint,
    DimensionFit, FitError, FitOptions, Period, RootPolicy, Weighting,
};
pub use graph::{
    connected_components, extract_links, shell_profile, spanning_tree, Gebit, GraphError,
    LinkGraph, SpanningTree, Threshold,
};
pub use likelihood::{
    brute_force_profile, gradient_log_likelihood, log_likelihood, maximize_profile,
    ContinuousProfile, DepthRange, LikelihoodError, LikelihoodQuery, MaximizationResult, Method,
};
pub use profile::{ProfileError, ShellProfile};
pub use relational::{
    draw_noise, init_matrix, iterate_step, run_iterator, safe_inverse, singular_values,
    IterationHistory, IteratorConfig, MatrixSummary, NoiseMatrix, NoiseSpec, RecordPolicy,
    RelationalError, RelationalIterator, RelationalMatrix, Snapshot,
};
