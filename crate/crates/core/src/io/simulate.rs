//! Seeded synthetic panels drawn from a random ground-truth DAG.
//!
//! Gaussian: parentless events are `N(root_mean, root_sigma)`; every other
//! event is `intercept + sum w * parent + N(0, noise_sigma)`.
//!
//! Poisson: each event has a target level `L ~ count_level * U(0.5, 1.5)`.
//! Parentless events are `Poisson(L * exp(root_sigma * z - root_sigma^2 / 2))`
//! with `z ~ N(0, 1)` (a day-level multiplicative shock); other events are
//! `Poisson(exp(b0 + sum w * parent))` with `w = e / L_parent` for an
//! elasticity `e` drawn like a Gaussian coefficient and
//! `b0 = ln L - sum e`. Counts feed back through the exponential, so keep
//! `max_in_degree * max_abs_coeff` below 1 or deep chains blow up.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::Deserialize;
use thiserror::Error;

use crate::types::{
    parse_hhmm, BuildConfig, DependencyGraph, EventKey, GraphError, LinkFamily, NodeModel, NodeStatus, PanelDataset,
    ParentWeight, MINUTES_PER_DAY,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub family: LinkFamily,
    pub entities: Vec<String>,
    /// Start of the first bucket, `HH:MM`.
    pub first_bucket: String,
    pub n_buckets: usize,
    pub bucket_width: u32,
    pub min_in_degree: usize,
    pub max_in_degree: usize,
    /// Parents are drawn from at most this far back, when set.
    pub parent_window_minutes: Option<u32>,
    pub min_abs_coeff: f64,
    pub max_abs_coeff: f64,
    /// Probability that a coefficient is negative.
    pub negative_fraction: f64,
    /// Gaussian intercepts of non-root events are `U(-r, r)`.
    pub intercept_range: f64,
    pub noise_sigma: f64,
    pub root_mean: f64,
    pub root_sigma: f64,
    pub count_level: f64,
    /// Probability that a cell is reported missing.
    pub missing_rate: f64,
    pub start_date: String,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            family: LinkFamily::GaussianIdentity,
            entities: vec!["A".into(), "B".into()],
            first_bucket: "06:00".into(),
            n_buckets: 10,
            bucket_width: 60,
            min_in_degree: 1,
            max_in_degree: 3,
            parent_window_minutes: None,
            min_abs_coeff: 0.5,
            max_abs_coeff: 1.0,
            negative_fraction: 0.3,
            intercept_range: 0.0,
            noise_sigma: 0.1,
            root_mean: 10.0,
            root_sigma: 2.0,
            count_level: 100.0,
            missing_rate: 0.0,
            start_date: "2008-01-01".into(),
        }
    }
}

impl SimSpec {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Spec(e.message().to_string()))
    }

    fn catalog(&self) -> Result<Vec<EventKey>, SimError> {
        let first = parse_hhmm(&self.first_bucket).map_err(|e| SimError::Spec(e.to_string()))?;
        let mut out = Vec::new();
        for b in 0..self.n_buckets as u32 {
            let start = first + b * self.bucket_width;
            if start + self.bucket_width > MINUTES_PER_DAY {
                return Err(SimError::Spec("buckets run past midnight".into()));
            }
            for e in &self.entities {
                out.push(
                    EventKey::new(e.clone(), start, self.bucket_width).map_err(|e| SimError::Spec(e.to_string()))?,
                );
            }
        }
        out.sort();
        Ok(out)
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Spec(m.to_string()));
        if self.entities.is_empty() || self.n_buckets == 0 {
            return bad("need at least one entity and one bucket");
        }
        if self.min_in_degree > self.max_in_degree {
            return bad("min_in_degree exceeds max_in_degree");
        }
        if !(0.0 <= self.min_abs_coeff && self.min_abs_coeff <= self.max_abs_coeff) {
            return bad("coefficient range must satisfy 0 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.negative_fraction) || !(0.0..1.0).contains(&self.missing_rate) {
            return bad("fractions must lie in [0, 1)");
        }
        if self.noise_sigma < 0.0 || self.root_sigma < 0.0 || self.intercept_range < 0.0 {
            return bad("scales must be non-negative");
        }
        if self.family == LinkFamily::PoissonExp && self.count_level <= 0.0 {
            return bad("count_level must be positive");
        }
        Ok(())
    }
}

/// Ground truth plus the panel sampled from it.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub truth: DependencyGraph,
    pub panel: PanelDataset,
}

impl Simulation {
    /// True `(parent, child)` edges.
    pub fn true_edges(&self) -> Vec<(EventKey, EventKey)> {
        self.truth
            .edges()
            .into_iter()
            .map(|(p, c, _)| (p.clone(), c.clone()))
            .collect()
    }
}

pub fn simulate(spec: &SimSpec, n_days: usize, seed: u64) -> Result<Simulation, SimError> {
    spec.validate()?;
    let start = NaiveDate::parse_from_str(&spec.start_date, "%Y-%m-%d")
        .map_err(|_| SimError::Spec(format!("bad start_date {:?}", spec.start_date)))?;
    let catalog = spec.catalog()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = spec.family == LinkFamily::PoissonExp;

    // Structure and parameters, in catalog (time) order.
    let mut levels: BTreeMap<&EventKey, f64> = BTreeMap::new();
    let mut nodes: Vec<NodeModel> = Vec::with_capacity(catalog.len());
    for target in &catalog {
        let earliest = spec
            .parent_window_minutes
            .map_or(0, |w| target.time_bucket().saturating_sub(w));
        let pool: Vec<&EventKey> = catalog
            .iter()
            .filter(|k| k.precedes(target) && k.time_bucket() >= earliest)
            .collect();
        let hi = spec.max_in_degree.min(pool.len());
        let lo = spec.min_in_degree.min(hi);
        let k = rng.random_range(lo..=hi);
        let mut picked: Vec<&EventKey> = index::sample(&mut rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        picked.sort();

        let mut parents = Vec::with_capacity(k);
        let mut elasticity_sum = 0.0;
        for p in picked {
            let mag = if spec.max_abs_coeff > spec.min_abs_coeff {
                rng.random_range(spec.min_abs_coeff..=spec.max_abs_coeff)
            } else {
                spec.min_abs_coeff
            };
            let sign = if rng.random_bool(spec.negative_fraction) {
                -1.0
            } else {
                1.0
            };
            let effect = sign * mag;
            let coeff = if poisson {
                elasticity_sum += effect;
                effect / levels[p]
            } else {
                effect
            };
            if coeff != 0.0 {
                parents.push(ParentWeight { key: p.clone(), coeff });
            }
        }

        let (intercept, mean) = if poisson {
            let level = spec.count_level * rng.random_range(0.5..1.5);
            levels.insert(target, level);
            (level.ln() - elasticity_sum, level)
        } else if parents.is_empty() {
            (spec.root_mean, spec.root_mean)
        } else {
            let b0 = if spec.intercept_range > 0.0 {
                rng.random_range(-spec.intercept_range..spec.intercept_range)
            } else {
                0.0
            };
            let mean = b0 + parents.iter().map(|p| p.coeff * levels[&p.key]).sum::<f64>();
            (b0, mean)
        };
        if !poisson {
            levels.insert(target, mean);
        }
        nodes.push(NodeModel {
            target: target.clone(),
            family: spec.family,
            parents,
            covariate_coeffs: vec![],
            intercept,
            train_mean: mean,
            lambda_used: 0.0,
            status: NodeStatus::Fitted,
        });
    }

    let build_config = BuildConfig {
        family: spec.family,
        max_parents: spec.max_in_degree.max(1),
        ..BuildConfig::default()
    };
    let truth = DependencyGraph::new(spec.family, build_config, vec![], nodes)?;

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let index_of: BTreeMap<&EventKey, usize> = catalog.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let mut values = Vec::with_capacity(n_days);
    for _ in 0..n_days {
        let mut row = vec![0.0; catalog.len()];
        for key in truth.topo_order() {
            let node = &truth.nodes()[key];
            let eta = node.intercept
                + node
                    .parents
                    .iter()
                    .map(|p| p.coeff * row[index_of[&p.key]])
                    .sum::<f64>();
            let z = std_normal.sample(&mut rng);
            let value = if poisson {
                let mean = if node.parents.is_empty() {
                    node.train_mean * (spec.root_sigma * z - 0.5 * spec.root_sigma * spec.root_sigma).exp()
                } else {
                    eta.min(30.0).exp()
                };
                Poisson::new(mean.max(1e-12)).map_or(0.0, |d| d.sample(&mut rng))
            } else if node.parents.is_empty() {
                spec.root_mean + spec.root_sigma * z
            } else {
                eta + spec.noise_sigma * z
            };
            row[index_of[key]] = value;
        }
        let row = row
            .into_iter()
            .map(|v| (spec.missing_rate == 0.0 || !rng.random_bool(spec.missing_rate)).then_some(v))
            .collect();
        values.push(row);
    }

    let days = (0..n_days)
        .map(|d| (start + Duration::days(d as i64)).format("%Y-%m-%d").to_string())
        .collect();
    Ok(Simulation {
        truth,
        panel: PanelDataset::new(catalog, days, values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::validate_panel;

    #[test]
    fn gaussian_simulation_shape() {
        let spec = SimSpec::default();
        let sim = simulate(&spec, 30, 1).unwrap();
        assert_eq!(sim.panel.n_events(), 20);
        assert_eq!(sim.panel.n_days(), 30);
        assert_eq!(sim.panel.days[0], "2008-01-01");
        assert_eq!(sim.panel.days[29], "2008-01-30");
        assert!(validate_panel(&sim.panel, spec.family).is_empty());
        for n in sim.truth.nodes().values() {
            assert!(n.parents.len() <= 3);
            if n.target.time_bucket() > 360 {
                assert!(!n.parents.is_empty());
            }
            for p in &n.parents {
                assert!(p.coeff.abs() >= 0.5 && p.coeff.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn simulation_is_seeded() {
        let spec = SimSpec::default();
        let a = simulate(&spec, 10, 5).unwrap();
        let b = simulate(&spec, 10, 5).unwrap();
        let c = simulate(&spec, 10, 6).unwrap();
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.truth, b.truth);
        assert_ne!(a.panel, c.panel);
    }

    #[test]
    fn poisson_counts_are_non_negative_integers() {
        let spec = SimSpec {
            family: LinkFamily::PoissonExp,
            count_level: 50.0,
            root_sigma: 0.3,
            max_in_degree: 2,
            min_abs_coeff: 0.3,
            max_abs_coeff: 0.6,
            negative_fraction: 0.0,
            ..SimSpec::default()
        };
        let sim = simulate(&spec, 50, 2).unwrap();
        assert!(validate_panel(&sim.panel, LinkFamily::PoissonExp).is_empty());
        for v in sim.panel.values.iter().flatten().flatten() {
            assert!(*v >= 0.0 && v.fract() == 0.0);
        }
        let mean: f64 = sim.panel.values.iter().flatten().flatten().sum::<f64>() / (50.0 * 20.0);
        assert!(mean > 20.0 && mean < 100.0, "{mean}");
    }

    #[test]
    fn spec_parsing() {
        let s = SimSpec::from_toml("family = \"poisson\"\nentities = [\"x\"]\nn_buckets = 4\n").unwrap();
        assert_eq!(s.family, LinkFamily::PoissonExp);
        assert_eq!(s.entities, vec!["x"]);
        assert!(SimSpec::from_toml("n_bucket = 4").is_err());
        let late = SimSpec {
            first_bucket: "20:00".into(),
            ..SimSpec::default()
        };
        assert!(simulate(&late, 1, 0).is_err());
    }

    #[test]
    fn missing_cells() {
        let spec = SimSpec {
            missing_rate: 0.2,
            ..SimSpec::default()
        };
        let sim = simulate(&spec, 100, 3).unwrap();
        let missing = sim.panel.values.iter().flatten().filter(|v| v.is_none()).count();
        assert!(missing > 250 && missing < 550, "{missing}");
    }
}
