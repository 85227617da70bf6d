//! Forecasting by propagation: unobserved events are predicted from their
//! parents in topological order, using observed values where available and
//! earlier predictions otherwise.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::glm::ETA_MAX;
use crate::types::{DependencyGraph, EventKey, LinkFamily, NodeModel, MINUTES_PER_DAY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("{node}: no value for parent {parent}")]
    MissingParentValue { node: String, parent: String },
    #[error("{node}: linear predictor {eta} overflows the link")]
    Overflow { node: String, eta: f64 },
    #[error("{node}: model uses covariates but none were supplied")]
    MissingCovariates { node: String },
    #[error("{node}: expected {expected} covariates, got {got}")]
    CovariateMismatch { node: String, expected: usize, got: usize },
    #[error("observation for unknown event {0}")]
    UnknownEvent(String),
    #[error("observation for {0} is not finite")]
    NonFiniteObservation(String),
    #[error("cutoff {0} outside [0, 1440]")]
    InvalidCutoff(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Status {
    Observed(f64),
    Predicted(f64),
    Pending,
}

impl Status {
    pub fn value(self) -> Option<f64> {
        match self {
            Status::Observed(v) | Status::Predicted(v) => Some(v),
            Status::Pending => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Observed(_) => "Observed",
            Status::Predicted(_) => "Predicted",
            Status::Pending => "Pending",
        }
    }
}

/// Per-event values for one day, with where each value came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionState {
    values: BTreeMap<EventKey, Status>,
    as_of: Option<u32>,
}

impl PredictionState {
    pub fn get(&self, key: &EventKey) -> Option<Status> {
        self.values.get(key).copied()
    }

    pub fn value(&self, key: &EventKey) -> Option<f64> {
        self.get(key).and_then(Status::value)
    }

    pub fn as_of(&self) -> Option<u32> {
        self.as_of
    }

    /// Entries ordered by bucket, then entity.
    pub fn iter(&self) -> impl Iterator<Item = (&EventKey, Status)> {
        self.values.iter().map(|(k, s)| (k, *s))
    }

    pub fn is_complete(&self) -> bool {
        self.values.values().all(|s| !matches!(s, Status::Pending))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Every known value, observed or predicted.
    pub fn to_map(&self) -> HashMap<EventKey, f64> {
        self.values
            .iter()
            .filter_map(|(k, s)| s.value().map(|v| (k.clone(), v)))
            .collect()
    }
}

/// Expected value `g(sum coeff * parent + covariates . w + intercept)` of one node.
pub fn predict_node(
    model: &NodeModel,
    parent_values: &HashMap<EventKey, f64>,
    covariates: Option<&[f64]>,
) -> Result<f64, PredictError> {
    let node = || model.target.to_string();
    let mut eta = model.intercept;
    for p in &model.parents {
        let v = parent_values
            .get(&p.key)
            .ok_or_else(|| PredictError::MissingParentValue {
                node: node(),
                parent: p.key.to_string(),
            })?;
        eta += p.coeff * v;
    }
    let uses_covariates = model.covariate_coeffs.iter().any(|c| *c != 0.0);
    match covariates {
        Some(cov) if cov.len() != model.covariate_coeffs.len() => {
            return Err(PredictError::CovariateMismatch {
                node: node(),
                expected: model.covariate_coeffs.len(),
                got: cov.len(),
            })
        }
        Some(cov) => {
            for (c, x) in model.covariate_coeffs.iter().zip(cov) {
                eta += c * x;
            }
        }
        None if uses_covariates => return Err(PredictError::MissingCovariates { node: node() }),
        None => {}
    }

    if !eta.is_finite() || (model.family == LinkFamily::PoissonExp && eta > ETA_MAX) {
        return Err(PredictError::Overflow { node: node(), eta });
    }
    Ok(model.family.mean(eta))
}

/// Fills in every unobserved event, visiting nodes in topological order.
pub fn run_propagation(
    graph: &DependencyGraph,
    observations: &HashMap<EventKey, f64>,
    covariates: Option<&[f64]>,
) -> Result<PredictionState, PredictError> {
    for (k, v) in observations {
        if graph.node(k).is_none() {
            return Err(PredictError::UnknownEvent(k.to_string()));
        }
        if !v.is_finite() {
            return Err(PredictError::NonFiniteObservation(k.to_string()));
        }
    }

    let mut known: HashMap<EventKey, f64> = HashMap::with_capacity(graph.len());
    let mut values = BTreeMap::new();
    for key in graph.topo_order() {
        let status = match observations.get(key) {
            Some(v) => Status::Observed(*v),
            None => Status::Predicted(predict_node(&graph.nodes()[key], &known, covariates)?),
        };
        known.insert(key.clone(), status.value().expect("resolved status"));
        values.insert(key.clone(), status);
    }
    Ok(PredictionState { values, as_of: None })
}

/// Treats the day's non-missing values strictly before `cutoff_minutes` as
/// observed and predicts the rest. Missing values before the cutoff are
/// predicted like future ones.
pub fn predict_as_of(
    graph: &DependencyGraph,
    day_values: &HashMap<EventKey, f64>,
    cutoff_minutes: u32,
    covariates: Option<&[f64]>,
) -> Result<PredictionState, PredictError> {
    if cutoff_minutes > MINUTES_PER_DAY {
        return Err(PredictError::InvalidCutoff(cutoff_minutes));
    }
    if let Some(k) = day_values.keys().find(|k| graph.node(k).is_none()) {
        return Err(PredictError::UnknownEvent(k.to_string()));
    }
    let observed: HashMap<EventKey, f64> = day_values
        .iter()
        .filter(|(k, _)| k.time_bucket() < cutoff_minutes)
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    let mut state = run_propagation(graph, &observed, covariates)?;
    state.as_of = Some(cutoff_minutes);
    Ok(state)
}
