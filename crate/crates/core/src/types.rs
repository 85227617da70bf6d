//! Domain types shared by every stage: event identities, panels of daily
//! observations, fitted node models, the dependency graph and its build
//! configuration.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const MINUTES_PER_DAY: u32 = 1440;

/// Floor applied to Poisson means before taking logs (intercept clamp).
pub const POISSON_MEAN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("malformed time {0:?}, expected HH:MM")]
    BadTime(String),
    #[error("malformed event key {0:?}, expected entity@HH:MM+width")]
    BadKey(String),
    #[error("empty entity label")]
    EmptyEntity,
    #[error("bucket {start}+{width} does not fit in a day")]
    OutOfDay { start: u32, width: u32 },
}

/// Parses `HH:MM` into minutes from midnight. Hours 0..=23, minutes 0..=59.
pub fn parse_hhmm(s: &str) -> Result<u32, KeyError> {
    let bad = || KeyError::BadTime(s.to_string());
    let (h, m) = s.trim().split_once(':').ok_or_else(bad)?;
    if h.is_empty() || h.len() > 2 || m.len() != 2 {
        return Err(bad());
    }
    if !h.bytes().chain(m.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    if h > 23 || m > 59 {
        return Err(bad());
    }
    Ok(h * 60 + m)
}

pub fn format_hhmm(minutes: u32) -> String {
    format!("{:02}:{:02}", minutes / 60, minutes % 60)
}

/// Identity of a recurring daily event: an entity (stop, link, station and
/// direction, ...) at a time-of-day bucket.
///
/// Ordering is by bucket start, then entity, which is also the stable
/// tie-break used for topological orders.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventKey {
    time_bucket: u32,
    entity: String,
    bucket_width: u32,
}

impl EventKey {
    pub fn new(entity: impl Into<String>, time_bucket: u32, bucket_width: u32) -> Result<Self, KeyError> {
        let entity = entity.into();
        if entity.is_empty() {
            return Err(KeyError::EmptyEntity);
        }
        if bucket_width == 0 || time_bucket >= MINUTES_PER_DAY || time_bucket + bucket_width > MINUTES_PER_DAY {
            return Err(KeyError::OutOfDay {
                start: time_bucket,
                width: bucket_width,
            });
        }
        Ok(Self {
            time_bucket,
            entity,
            bucket_width,
        })
    }

    pub fn entity(&self) -> &str {
        &self.entity
    }

    /// Bucket start in minutes from midnight.
    pub fn time_bucket(&self) -> u32 {
        self.time_bucket
    }

    pub fn bucket_width(&self) -> u32 {
        self.bucket_width
    }

    /// Hour of day of the bucket start ("9" for 09:00-10:00).
    pub fn hour(&self) -> u32 {
        self.time_bucket / 60
    }

    pub fn precedes(&self, other: &EventKey) -> bool {
        self.time_bucket < other.time_bucket
    }
}

impl fmt::Display for EventKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}@{}+{}",
            self.entity,
            format_hhmm(self.time_bucket),
            self.bucket_width
        )
    }
}

impl FromStr for EventKey {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || KeyError::BadKey(s.to_string());
        let (entity, rest) = s.rsplit_once('@').ok_or_else(bad)?;
        let (time, width) = rest.split_once('+').ok_or_else(bad)?;
        let start = parse_hhmm(time).map_err(|_| bad())?;
        let width: u32 = width.parse().map_err(|_| bad())?;
        EventKey::new(entity, start, width)
    }
}

impl Serialize for EventKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EventKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Link between the linear predictor and the expected outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkFamily {
    /// Gaussian noise, identity link.
    #[serde(rename = "gaussian")]
    GaussianIdentity,
    /// Poisson counts, exponential link.
    #[serde(rename = "poisson")]
    PoissonExp,
}

impl LinkFamily {
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            LinkFamily::GaussianIdentity => eta,
            LinkFamily::PoissonExp => eta.exp(),
        }
    }

    /// Linear predictor of an intercept-only model with the given mean.
    pub fn null_intercept(self, mean: f64) -> f64 {
        match self {
            LinkFamily::GaussianIdentity => mean,
            LinkFamily::PoissonExp => mean.max(POISSON_MEAN_FLOOR).ln(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LinkFamily::GaussianIdentity => "gaussian",
            LinkFamily::PoissonExp => "poisson",
        }
    }
}

impl fmt::Display for LinkFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "identity" => Ok(LinkFamily::GaussianIdentity),
            "poisson" | "exp" => Ok(LinkFamily::PoissonExp),
            other => Err(format!("unknown family {other:?} (expected gaussian or poisson)")),
        }
    }
}

/// Static per-day covariates (day-of-week indicators, weather, ...).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Covariates {
    pub names: Vec<String>,
    /// One vector per day, each of length `names.len()`.
    pub rows: Vec<Vec<f64>>,
}

/// Day by event matrix of observations. `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PanelDataset {
    pub catalog: Vec<EventKey>,
    pub days: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub covariates: Option<Covariates>,
}

impl PanelDataset {
    pub fn new(catalog: Vec<EventKey>, days: Vec<String>, values: Vec<Vec<Option<f64>>>) -> Self {
        Self {
            catalog,
            days,
            values,
            covariates: None,
        }
    }

    pub fn with_covariates(mut self, covariates: Covariates) -> Self {
        self.covariates = Some(covariates);
        self
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn n_events(&self) -> usize {
        self.catalog.len()
    }

    pub fn event_index(&self, key: &EventKey) -> Option<usize> {
        self.catalog.iter().position(|k| k == key)
    }

    pub fn covariate_names(&self) -> &[String] {
        self.covariates.as_ref().map(|c| c.names.as_slice()).unwrap_or(&[])
    }

    pub fn covariate_row(&self, day: usize) -> Option<&[f64]> {
        self.covariates.as_ref().map(|c| c.rows[day].as_slice())
    }

    /// Values of one event over all days.
    pub fn column(&self, event: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.values.iter().map(move |row| row.get(event).copied().flatten())
    }

    /// Observed values of one day keyed by event; missing cells are absent.
    pub fn day_map(&self, day: usize) -> HashMap<EventKey, f64> {
        self.catalog
            .iter()
            .zip(&self.values[day])
            .filter_map(|(k, v)| v.map(|v| (k.clone(), v)))
            .collect()
    }

    /// Panel restricted to the given day indices, in the given order.
    pub fn select_days(&self, indices: &[usize]) -> PanelDataset {
        PanelDataset {
            catalog: self.catalog.clone(),
            days: indices.iter().map(|&i| self.days[i].clone()).collect(),
            values: indices.iter().map(|&i| self.values[i].clone()).collect(),
            covariates: self.covariates.as_ref().map(|c| Covariates {
                names: c.names.clone(),
                rows: indices.iter().map(|&i| c.rows[i].clone()).collect(),
            }),
        }
    }

    /// Splits into the first `n_train` days and the remainder.
    pub fn split_at_day(&self, n_train: usize) -> (PanelDataset, PanelDataset) {
        let n_train = n_train.min(self.n_days());
        let train: Vec<usize> = (0..n_train).collect();
        let test: Vec<usize> = (n_train..self.n_days()).collect();
        (self.select_days(&train), self.select_days(&test))
    }

    /// Day indices sorted by label. Reductions over days follow this order so
    /// they do not depend on how rows happen to be arranged.
    pub fn day_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.days.get(a).cmp(&self.days.get(b)).then(a.cmp(&b)));
        order
    }

    /// Mean of one event over its non-missing days, in `day_order`.
    pub fn event_mean(&self, event: usize) -> Option<f64> {
        crate::stats::mean(self.day_order().into_iter().filter_map(|d| self.values[d][event]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Number of value rows differs from the number of days.
    RowCount,
    /// A value row does not have one entry per catalog event.
    RowLength,
    NonFinite,
    /// Counts must be non-negative under the Poisson family.
    NegativeCount,
    /// Two catalog events share entity and bucket.
    DuplicateEvent,
    /// Covariate rows differ from the number of days.
    CovariateRowCount,
    /// Covariate vector length differs from the covariate names.
    CovariateLength,
}

/// A broken panel invariant, located by row (day) and/or column (event).
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub row: Option<usize>,
    pub column: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.rule)?;
        if let Some(r) = self.row {
            write!(f, " at row {r}")?;
        }
        if let Some(c) = self.column {
            write!(f, " column {c}")?;
        }
        Ok(())
    }
}

/// Checks every panel invariant for the given family. An empty result means
/// the panel is well formed.
pub fn validate_panel(panel: &PanelDataset, family: LinkFamily) -> Vec<Violation> {
    let mut out = Vec::new();
    let width = panel.catalog.len();

    let mut seen = BTreeSet::new();
    for (j, key) in panel.catalog.iter().enumerate() {
        if !seen.insert((key.time_bucket(), key.entity())) {
            out.push(Violation {
                row: None,
                column: Some(j),
                rule: Rule::DuplicateEvent,
            });
        }
    }

    if panel.values.len() != panel.days.len() {
        out.push(Violation {
            row: None,
            column: None,
            rule: Rule::RowCount,
        });
    }
    for (i, row) in panel.values.iter().enumerate() {
        if row.len() != width {
            out.push(Violation {
                row: Some(i),
                column: None,
                rule: Rule::RowLength,
            });
        }
        for (j, v) in row.iter().enumerate() {
            let Some(v) = *v else { continue };
            if !v.is_finite() {
                out.push(Violation {
                    row: Some(i),
                    column: Some(j),
                    rule: Rule::NonFinite,
                });
            } else if family == LinkFamily::PoissonExp && v < 0.0 {
                out.push(Violation {
                    row: Some(i),
                    column: Some(j),
                    rule: Rule::NegativeCount,
                });
            }
        }
    }

    if let Some(cov) = &panel.covariates {
        if cov.rows.len() != panel.days.len() {
            out.push(Violation {
                row: None,
                column: None,
                rule: Rule::CovariateRowCount,
            });
        }
        for (i, row) in cov.rows.iter().enumerate() {
            if row.len() != cov.names.len() {
                out.push(Violation {
                    row: Some(i),
                    column: None,
                    rule: Rule::CovariateLength,
                });
            } else if row.iter().any(|v| !v.is_finite()) {
                out.push(Violation {
                    row: Some(i),
                    column: None,
                    rule: Rule::NonFinite,
                });
            }
        }
    }
    out
}

/// Sparsity control shared by every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    /// A single penalty. Nodes that would exceed `max_parents` at this value
    /// fall back to larger penalties on a geometric grid above it.
    Lambda { lambda: f64 },
    /// Explicit strictly descending penalties, selected by `max_parents`.
    Path { lambdas: Vec<f64> },
    /// Per-node geometric path from the node's `lambda_max` down to
    /// `lambda_max * min_ratio`, selected by `max_parents`.
    Relative { n_lambdas: usize, min_ratio: f64 },
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty::Relative {
            n_lambdas: 50,
            min_ratio: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub family: LinkFamily,
    pub penalty: Penalty,
    pub max_parents: usize,
    pub min_history_days: usize,
    pub standardize: bool,
    pub candidate_window_minutes: Option<u32>,
    /// Solver tolerance; `None` picks the family default.
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            family: LinkFamily::GaussianIdentity,
            penalty: Penalty::default(),
            max_parents: 5,
            min_history_days: 10,
            standardize: true,
            candidate_window_minutes: None,
            tol: None,
            max_iter: 10_000,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError(m.to_string()));
        match &self.penalty {
            Penalty::Lambda { lambda } => {
                if !(lambda.is_finite() && *lambda >= 0.0) {
                    return err("lambda must be finite and >= 0");
                }
            }
            Penalty::Path { lambdas } => {
                if lambdas.is_empty() {
                    return err("lambda_path must not be empty");
                }
                if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                    return err("lambda_path entries must be finite and >= 0");
                }
                if lambdas.windows(2).any(|w| w[1] >= w[0]) {
                    return err("lambda_path must be strictly descending");
                }
            }
            Penalty::Relative { n_lambdas, min_ratio } => {
                if *n_lambdas == 0 {
                    return err("path_length must be >= 1");
                }
                if !(*min_ratio > 0.0 && *min_ratio <= 1.0) {
                    return err("path_min_ratio must be in (0, 1]");
                }
            }
        }
        if self.max_parents == 0 {
            return err("max_parents must be positive");
        }
        if self.min_history_days == 0 {
            return err("min_history_days must be positive");
        }
        if self.candidate_window_minutes == Some(0) {
            return err("candidate_window_minutes must be positive");
        }
        if let Some(tol) = self.tol {
            if !(tol.is_finite() && tol > 0.0) {
                return err("tol must be positive");
            }
        }
        if self.max_iter == 0 {
            return err("max_iter must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentWeight {
    pub key: EventKey,
    pub coeff: f64,
}

/// How a node's model came about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    #[default]
    Fitted,
    /// Too few usable training rows; the node is intercept-only.
    InsufficientHistory,
    /// The target was never observed in training.
    NoHistory,
}

/// Fitted sparse GLM for one event: `E[target] = g(sum coeff * parent + intercept)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeModel {
    pub target: EventKey,
    pub family: LinkFamily,
    pub parents: Vec<ParentWeight>,
    pub covariate_coeffs: Vec<f64>,
    pub intercept: f64,
    pub train_mean: f64,
    pub lambda_used: f64,
    pub status: NodeStatus,
}

impl NodeModel {
    /// Model with no parents predicting `g(intercept)`.
    pub fn intercept_only(
        target: EventKey,
        family: LinkFamily,
        train_mean: f64,
        n_covariates: usize,
        status: NodeStatus,
    ) -> Self {
        Self {
            target,
            family,
            parents: Vec::new(),
            covariate_coeffs: vec![0.0; n_covariates],
            intercept: family.null_intercept(train_mean),
            train_mean,
            lambda_used: 0.0,
            status,
        }
    }

    pub fn is_intercept_only(&self) -> bool {
        self.parents.is_empty() && self.covariate_coeffs.iter().all(|c| *c == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("dependency cycle among {0:?}")]
    CycleDetected(Vec<String>),
    #[error("node {target} references unknown parent {parent}")]
    UnknownParent { target: String, parent: String },
    #[error("parent {parent} does not precede {target} in time")]
    ParentNotEarlier { target: String, parent: String },
    #[error("node {target} has {count} parents, cap is {cap}")]
    TooManyParents { target: String, count: usize, cap: usize },
    #[error("node {0} appears more than once")]
    DuplicateNode(String),
    #[error("node {target}: {reason}")]
    InvalidNode { target: String, reason: String },
}

/// Orders events so that every parent comes before its children, breaking
/// ties by bucket start and then entity.
///
/// Parents that are not among `nodes` are ignored here; `DependencyGraph`
/// rejects them separately.
pub fn topo_sort<'a, I>(nodes: I) -> Result<Vec<EventKey>, GraphError>
where
    I: IntoIterator<Item = &'a NodeModel>,
{
    let nodes: BTreeMap<&EventKey, &NodeModel> = nodes.into_iter().map(|n| (&n.target, n)).collect();
    let mut indegree: BTreeMap<&EventKey, usize> = nodes.keys().map(|k| (*k, 0)).collect();
    let mut children: BTreeMap<&EventKey, Vec<&EventKey>> = BTreeMap::new();
    for node in nodes.values() {
        for p in &node.parents {
            if let Some((parent, _)) = nodes.get_key_value(&p.key) {
                *indegree.get_mut(&node.target).unwrap() += 1;
                children.entry(parent).or_default().push(&node.target);
            }
        }
    }

    let mut ready: BTreeSet<&EventKey> = indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(next) = ready.pop_first() {
        order.push(next.clone());
        for child in children.get(next).into_iter().flatten() {
            let d = indegree.get_mut(child).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(child);
            }
        }
    }

    if order.len() != nodes.len() {
        let stuck = indegree
            .into_iter()
            .filter(|(_, d)| *d > 0)
            .map(|(k, _)| k.to_string())
            .collect();
        return Err(GraphError::CycleDetected(stuck));
    }
    Ok(order)
}

/// A validated DAG of node models. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyGraph {
    nodes: BTreeMap<EventKey, NodeModel>,
    topo_order: Vec<EventKey>,
    family: LinkFamily,
    build_config: BuildConfig,
    covariate_names: Vec<String>,
}

impl DependencyGraph {
    pub fn new(
        family: LinkFamily,
        build_config: BuildConfig,
        covariate_names: Vec<String>,
        nodes: Vec<NodeModel>,
    ) -> Result<Self, GraphError> {
        let mut map = BTreeMap::new();
        for node in nodes {
            let name = node.target.to_string();
            if map.insert(node.target.clone(), node).is_some() {
                return Err(GraphError::DuplicateNode(name));
            }
        }

        for node in map.values() {
            let invalid = |reason: &str| GraphError::InvalidNode {
                target: node.target.to_string(),
                reason: reason.to_string(),
            };
            if node.family != family {
                return Err(invalid("family differs from graph family"));
            }
            if node.covariate_coeffs.len() != covariate_names.len() {
                return Err(invalid("covariate coefficient count mismatch"));
            }
            if !node.intercept.is_finite() || !node.train_mean.is_finite() {
                return Err(invalid("non-finite intercept or mean"));
            }
            if node.covariate_coeffs.iter().any(|c| !c.is_finite()) {
                return Err(invalid("non-finite covariate coefficient"));
            }
            let mut seen = BTreeSet::new();
            for p in &node.parents {
                if !map.contains_key(&p.key) {
                    return Err(GraphError::UnknownParent {
                        target: node.target.to_string(),
                        parent: p.key.to_string(),
                    });
                }
                if !seen.insert(&p.key) {
                    return Err(invalid("parent listed twice"));
                }
                if p.coeff == 0.0 || !p.coeff.is_finite() {
                    return Err(invalid("stored parent coefficients must be finite and nonzero"));
                }
            }
        }

        let topo_order = topo_sort(map.values())?;

        for node in map.values() {
            for p in &node.parents {
                if !p.key.precedes(&node.target) {
                    return Err(GraphError::ParentNotEarlier {
                        target: node.target.to_string(),
                        parent: p.key.to_string(),
                    });
                }
            }
            if node.parents.len() > build_config.max_parents {
                return Err(GraphError::TooManyParents {
                    target: node.target.to_string(),
                    count: node.parents.len(),
                    cap: build_config.max_parents,
                });
            }
        }

        Ok(Self {
            nodes: map,
            topo_order,
            family,
            build_config,
            covariate_names,
        })
    }

    pub fn nodes(&self) -> &BTreeMap<EventKey, NodeModel> {
        &self.nodes
    }

    pub fn node(&self, key: &EventKey) -> Option<&NodeModel> {
        self.nodes.get(key)
    }

    pub fn topo_order(&self) -> &[EventKey] {
        &self.topo_order
    }

    pub fn family(&self) -> LinkFamily {
        self.family
    }

    pub fn build_config(&self) -> &BuildConfig {
        &self.build_config
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn topo_sort(&self) -> Result<Vec<EventKey>, GraphError> {
        topo_sort(self.nodes.values())
    }

    /// All `(parent, child, coeff)` edges, ordered by child then parent.
    pub fn edges(&self) -> Vec<(&EventKey, &EventKey, f64)> {
        let mut out: Vec<_> = self
            .nodes
            .values()
            .flat_map(|n| n.parents.iter().map(move |p| (&p.key, &n.target, p.coeff)))
            .collect();
        out.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        out
    }

    /// Nodes reachable from `key` along edges, excluding `key` itself.
    pub fn descendants(&self, key: &EventKey) -> BTreeSet<EventKey> {
        let mut children: HashMap<&EventKey, Vec<&EventKey>> = HashMap::new();
        for n in self.nodes.values() {
            for p in &n.parents {
                children.entry(&p.key).or_default().push(&n.target);
            }
        }
        let mut out = BTreeSet::new();
        let mut stack = vec![key];
        while let Some(k) = stack.pop() {
            for c in children.get(k).into_iter().flatten() {
                if out.insert((*c).clone()) {
                    stack.push(c);
                }
            }
        }
        out
    }
}
