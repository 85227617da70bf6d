//! Flat `key = value` configuration (TOML syntax) covering the build
//! settings and the CSV schema. Unknown keys are rejected.
//!
//! ```text
//! family = "gaussian"
//! max_parents = 5
//! path_length = 50
//! path_min_ratio = 0.01
//! bucket_width = 60
//! ```

use std::path::Path;

use serde::Deserialize;

use super::ingest::{Aggregation, IngestSchema};
use crate::types::{BuildConfig, ConfigError, Penalty};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    family: Option<String>,
    lambda: Option<f64>,
    lambda_path: Option<Vec<f64>>,
    path_length: Option<usize>,
    path_min_ratio: Option<f64>,
    max_parents: Option<usize>,
    min_history_days: Option<usize>,
    standardize: Option<bool>,
    candidate_window_minutes: Option<u32>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    bucket_width: Option<u32>,
    aggregation: Option<String>,
    day_column: Option<String>,
    entity_column: Option<String>,
    time_column: Option<String>,
    value_column: Option<String>,
    day_of_week: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProjectConfig {
    pub build: BuildConfig,
    pub schema: IngestSchema,
}

pub fn parse_config(text: &str) -> Result<ProjectConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError(e.message().to_string()))?;
    let defaults = BuildConfig::default();

    let relative = raw.path_length.is_some() || raw.path_min_ratio.is_some();
    let set = [raw.lambda.is_some(), raw.lambda_path.is_some(), relative];
    if set.iter().filter(|s| **s).count() > 1 {
        return Err(ConfigError(
            "set only one of lambda, lambda_path, or path_length/path_min_ratio".into(),
        ));
    }
    let penalty = match (raw.lambda, raw.lambda_path) {
        (Some(lambda), _) => Penalty::Lambda { lambda },
        (_, Some(lambdas)) => Penalty::Path { lambdas },
        _ => match Penalty::default() {
            Penalty::Relative { n_lambdas, min_ratio } => Penalty::Relative {
                n_lambdas: raw.path_length.unwrap_or(n_lambdas),
                min_ratio: raw.path_min_ratio.unwrap_or(min_ratio),
            },
            other => other,
        },
    };

    let build = BuildConfig {
        family: match raw.family {
            Some(f) => f.parse().map_err(ConfigError)?,
            None => defaults.family,
        },
        penalty,
        max_parents: raw.max_parents.unwrap_or(defaults.max_parents),
        min_history_days: raw.min_history_days.unwrap_or(defaults.min_history_days),
        standardize: raw.standardize.unwrap_or(defaults.standardize),
        candidate_window_minutes: raw.candidate_window_minutes,
        tol: raw.tol,
        max_iter: raw.max_iter.unwrap_or(defaults.max_iter),
    };
    build.validate()?;

    let d = IngestSchema::default();
    let schema = IngestSchema {
        day_column: raw.day_column.unwrap_or(d.day_column),
        entity_column: raw.entity_column.unwrap_or(d.entity_column),
        time_column: raw.time_column.unwrap_or(d.time_column),
        value_column: raw.value_column.unwrap_or(d.value_column),
        bucket_width: raw.bucket_width.unwrap_or(d.bucket_width),
        aggregation: match raw.aggregation.as_deref() {
            None => None,
            Some("mean") => Some(Aggregation::Mean),
            Some("sum") => Some(Aggregation::Sum),
            Some(other) => return Err(ConfigError(format!("unknown aggregation {other:?}"))),
        },
        day_of_week: raw.day_of_week.unwrap_or(d.day_of_week),
    };
    if schema.bucket_width == 0 || 1440 % schema.bucket_width != 0 {
        return Err(ConfigError("bucket_width must divide 1440".into()));
    }
    Ok(ProjectConfig { build, schema })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ProjectConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}
