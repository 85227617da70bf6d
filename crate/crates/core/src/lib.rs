//! Sparse temporal dependency graphs over recurring daily events.
//!
//! Each event (an entity at a time-of-day bucket) is regressed on the events
//! that precede it in time with an L1-penalized GLM; the surviving
//! regressors become its parents. The resulting DAG forecasts unobserved
//! events of a day by propagating observed values in topological order.

pub mod builder;
pub mod evaluation;
pub mod glm;
pub mod io;
pub mod predictor;
pub mod stats;
pub mod types;

pub use builder::{build_graph, enumerate_candidates, fit_node, BuildError, CandidateSet};
pub use evaluation::{error_curve, mape, mean_baseline, Baseline, ErrorCurve, Metric};
pub use glm::{DesignMatrix, FitError, FitResult, SolverOptions};
pub use predictor::{predict_as_of, predict_node, run_propagation, PredictError, PredictionState, Status};
pub use types::{
    topo_sort, validate_panel, BuildConfig, DependencyGraph, EventKey, GraphError, LinkFamily, NodeModel, NodeStatus,
    PanelDataset, ParentWeight, Penalty,
};
