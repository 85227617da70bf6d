//! Structure learning: for every event, regress it on the events that
//! precede it in time and keep the surviving regressors as parents.
//!
//! Because candidates are restricted to strictly earlier buckets, the
//! resulting edge set is acyclic by construction.

use rayon::prelude::*;
use thiserror::Error;

use crate::glm::{self, DesignMatrix, FitError, SolverOptions};
use crate::types::{
    validate_panel, BuildConfig, ConfigError, DependencyGraph, EventKey, GraphError, NodeModel, NodeStatus,
    PanelDataset, ParentWeight, Penalty, Violation,
};

/// Steps of the geometric grid placed above a fixed penalty, used when the
/// fixed penalty alone would exceed `max_parents`.
const FIXED_LAMBDA_GRID: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("panel violates {} invariant(s), first: {}", .0.len(), .0[0])]
    InvalidPanel(Vec<Violation>),
    #[error("event {0} is not in the panel catalog")]
    UnknownTarget(String),
    #[error("{target}: {usable} usable training rows, {required} required")]
    InsufficientHistory {
        target: String,
        usable: usize,
        required: usize,
    },
    #[error("{target} has no training observations")]
    NoHistory { target: String },
    #[error("fitting {target}: {source}")]
    Fit {
        target: String,
        #[source]
        source: FitError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Events a target may depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub target: EventKey,
    /// Strictly earlier events, ordered by bucket then entity.
    pub candidates: Vec<EventKey>,
    pub covariate_names: Vec<String>,
}

/// Catalog events in strictly earlier buckets than `target`, limited to
/// `candidate_window_minutes` before it when configured.
pub fn enumerate_candidates(
    catalog: &[EventKey],
    target: &EventKey,
    config: &BuildConfig,
    covariate_names: &[String],
) -> CandidateSet {
    let earliest = config
        .candidate_window_minutes
        .map_or(0, |w| target.time_bucket().saturating_sub(w));
    let mut candidates: Vec<EventKey> = catalog
        .iter()
        .filter(|k| k.precedes(target) && k.time_bucket() >= earliest)
        .cloned()
        .collect();
    candidates.sort();
    CandidateSet {
        target: target.clone(),
        candidates,
        covariate_names: covariate_names.to_vec(),
    }
}

fn solver_options(config: &BuildConfig) -> SolverOptions {
    let mut opts = SolverOptions::for_family(config.family);
    if let Some(tol) = config.tol {
        opts.tol = tol;
    }
    opts.max_iter = config.max_iter;
    opts
}

fn penalty_path(penalty: &Penalty, lambda_max: f64) -> Vec<f64> {
    match penalty {
        Penalty::Lambda { lambda } => {
            let lambda = *lambda;
            if lambda >= lambda_max {
                return vec![lambda];
            }
            let ratio = if lambda > 0.0 { lambda / lambda_max } else { 1e-4 };
            let mut path: Vec<f64> = glm::lambda_grid(lambda_max, FIXED_LAMBDA_GRID, ratio)
                .into_iter()
                .filter(|l| *l > lambda)
                .collect();
            path.push(lambda);
            path
        }
        // A path that starts below lambda_max gets the null model in front,
        // so the cap can always be met.
        Penalty::Path { lambdas } => match lambdas.first() {
            Some(first) if *first < lambda_max => std::iter::once(lambda_max).chain(lambdas.iter().copied()).collect(),
            _ => lambdas.clone(),
        },
        Penalty::Relative { n_lambdas, min_ratio } => glm::lambda_grid(lambda_max, *n_lambdas, *min_ratio),
    }
}

/// Fits the sparse GLM of one event on its candidates.
///
/// Uses complete-case rows only. Returns `InsufficientHistory` when fewer
/// than `min_history_days` rows survive and `NoHistory` when the target was
/// never observed; `build_graph` turns both into intercept-only nodes.
pub fn fit_node(
    panel: &PanelDataset,
    target: &EventKey,
    candidates: &CandidateSet,
    config: &BuildConfig,
) -> Result<NodeModel, BuildError> {
    let index = |k: &EventKey| {
        panel
            .event_index(k)
            .ok_or_else(|| BuildError::UnknownTarget(k.to_string()))
    };
    let target_idx = index(target)?;
    let cand_idx: Vec<usize> = candidates.candidates.iter().map(index).collect::<Result<_, _>>()?;

    let days = panel.day_order();
    let train_mean = panel.event_mean(target_idx).ok_or_else(|| BuildError::NoHistory {
        target: target.to_string(),
    })?;

    let n_cov = panel.covariate_names().len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); cand_idx.len() + n_cov];
    let mut response = Vec::new();
    for &day in &days {
        let row = &panel.values[day];
        let Some(y) = row[target_idx] else { continue };
        let Some(xs) = cand_idx.iter().map(|&j| row[j]).collect::<Option<Vec<f64>>>() else {
            continue;
        };
        response.push(y);
        for (col, x) in columns.iter_mut().zip(xs) {
            col.push(x);
        }
        if let Some(cov) = panel.covariate_row(day) {
            for (col, c) in columns[cand_idx.len()..].iter_mut().zip(cov) {
                col.push(*c);
            }
        }
    }

    if response.len() < config.min_history_days {
        return Err(BuildError::InsufficientHistory {
            target: target.to_string(),
            usable: response.len(),
            required: config.min_history_days,
        });
    }

    let fit_err = |source| BuildError::Fit {
        target: target.to_string(),
        source,
    };
    let design = DesignMatrix::new(columns, response, cand_idx.len(), config.standardize).map_err(fit_err)?;
    let lambdas = penalty_path(&config.penalty, design.lambda_max());
    let path = glm::fit_path(&design, &lambdas, config.family, &solver_options(config)).map_err(fit_err)?;
    let chosen = glm::select_by_max_parents(&path, config.max_parents).expect("penalty path is never empty");

    let parents = candidates
        .candidates
        .iter()
        .zip(&chosen.coeffs)
        .filter(|(_, c)| **c != 0.0)
        .map(|(k, c)| ParentWeight {
            key: k.clone(),
            coeff: *c,
        })
        .collect();

    // A fit that keeps no regressor needs no complete-case restriction.
    let intercept = if chosen.n_nonzero == 0 {
        config.family.null_intercept(train_mean)
    } else {
        chosen.intercept
    };

    Ok(NodeModel {
        target: target.clone(),
        family: config.family,
        parents,
        covariate_coeffs: chosen.coeffs[cand_idx.len()..].to_vec(),
        intercept,
        train_mean,
        lambda_used: chosen.lambda,
        status: NodeStatus::Fitted,
    })
}

/// Learns one node model per catalog event and assembles the DAG.
///
/// Nodes are fitted in parallel; the result does not depend on scheduling.
pub fn build_graph(panel: &PanelDataset, config: &BuildConfig) -> Result<DependencyGraph, BuildError> {
    config.validate()?;
    let violations = validate_panel(panel, config.family);
    if !violations.is_empty() {
        return Err(BuildError::InvalidPanel(violations));
    }

    let cov_names = panel.covariate_names().to_vec();
    let nodes = panel
        .catalog
        .par_iter()
        .map(|target| {
            let candidates = enumerate_candidates(&panel.catalog, target, config, &cov_names);
            match fit_node(panel, target, &candidates, config) {
                Ok(node) => Ok(node),
                Err(BuildError::InsufficientHistory { .. }) => {
                    let idx = panel.event_index(target).expect("target comes from the catalog");
                    let mean = panel.event_mean(idx).unwrap_or(0.0);
                    Ok(NodeModel::intercept_only(
                        target.clone(),
                        config.family,
                        mean,
                        cov_names.len(),
                        NodeStatus::InsufficientHistory,
                    ))
                }
                Err(BuildError::NoHistory { .. }) => Ok(NodeModel::intercept_only(
                    target.clone(),
                    config.family,
                    0.0,
                    cov_names.len(),
                    NodeStatus::NoHistory,
                )),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(DependencyGraph::new(config.family, config.clone(), cov_names, nodes)?)
}
