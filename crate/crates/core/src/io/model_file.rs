//! JSON model file. Event keys are written as `entity@HH:MM+width`; numbers
//! use shortest round-trip formatting, so a save/load cycle is lossless.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    BuildConfig, DependencyGraph, EventKey, GraphError, LinkFamily, NodeModel, NodeStatus, ParentWeight,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model family {family} differs from build_config family {config}")]
    FamilyMismatch { family: LinkFamily, config: LinkFamily },
    #[error("invalid model: {0}")]
    Graph(#[from] GraphError),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    family: LinkFamily,
    build_config: BuildConfig,
    #[serde(default)]
    covariate_names: Vec<String>,
    nodes: Vec<NodeRecord>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    target: EventKey,
    parents: Vec<ParentWeight>,
    covariate_coeffs: Vec<f64>,
    intercept: f64,
    train_mean: f64,
    lambda_used: f64,
    #[serde(default)]
    status: NodeStatus,
}

/// Serializes a graph with nodes in topological order.
pub fn to_json(graph: &DependencyGraph) -> String {
    let file = ModelFile {
        family: graph.family(),
        build_config: graph.build_config().clone(),
        covariate_names: graph.covariate_names().to_vec(),
        nodes: graph
            .topo_order()
            .iter()
            .map(|k| {
                let n = &graph.nodes()[k];
                NodeRecord {
                    target: n.target.clone(),
                    parents: n.parents.clone(),
                    covariate_coeffs: n.covariate_coeffs.clone(),
                    intercept: n.intercept,
                    train_mean: n.train_mean,
                    lambda_used: n.lambda_used,
                    status: n.status,
                }
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("model serialization cannot fail");
    out.push('\n');
    out
}

/// Parses and validates a model file. Cyclic edge sets are reported as
/// `GraphError::CycleDetected`.
pub fn from_json(text: &str) -> Result<DependencyGraph, ModelError> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.family != file.build_config.family {
        return Err(ModelError::FamilyMismatch {
            family: file.family,
            config: file.build_config.family,
        });
    }
    let nodes = file
        .nodes
        .into_iter()
        .map(|r| NodeModel {
            target: r.target,
            family: file.family,
            parents: r.parents,
            covariate_coeffs: r.covariate_coeffs,
            intercept: r.intercept,
            train_mean: r.train_mean,
            lambda_used: r.lambda_used,
            status: r.status,
        })
        .collect();
    Ok(DependencyGraph::new(
        file.family,
        file.build_config,
        file.covariate_names,
        nodes,
    )?)
}

pub fn save(graph: &DependencyGraph, path: impl AsRef<Path>) -> Result<(), ModelError> {
    std::fs::write(path, to_json(graph))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<DependencyGraph, ModelError> {
    from_json(&std::fs::read_to_string(path)?)
}
