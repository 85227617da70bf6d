//! Error metrics, the historical-mean baseline, and rolling error-by-cutoff
//! evaluation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::predictor::{predict_as_of, PredictError};
use crate::stats::{self, CompensatedSum};
use crate::types::{format_hhmm, DependencyGraph, EventKey, NodeStatus, PanelDataset, MINUTES_PER_DAY};

/// Default MAPE masking floor, in data units.
pub const DEFAULT_MAPE_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("actual and predicted lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no points to score")]
    Empty,
    #[error("every actual value is below the masking floor")]
    AllMasked,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("test panel event {0} is not in the graph")]
    UnknownEvent(String),
    #[error("cutoffs must be ascending within [0, 1440]")]
    BadCutoffs,
    #[error("test panel is malformed: {0}")]
    BadPanel(String),
}

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<(), MetricError> {
    if actual.len() != predicted.len() {
        return Err(MetricError::LengthMismatch(actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, predicted)?;
    Ok(stats::mean(actual.iter().zip(predicted).map(|(a, p)| (a - p).abs())).expect("non-empty"))
}

/// Mean of `100 |a - p| / |a|` over pairs with `|a| >= floor`.
pub fn mape(actual: &[f64], predicted: &[f64], floor: f64) -> Result<f64, MetricError> {
    check_lengths(actual, predicted)?;
    stats::mean(
        actual
            .iter()
            .zip(predicted)
            .filter(|(a, _)| a.abs() >= floor)
            .map(|(a, p)| 100.0 * (a - p).abs() / a.abs()),
    )
    .ok_or(MetricError::AllMasked)
}

/// Total absolute error as a percentage of the total actual magnitude:
/// `100 sum|a - p| / sum|a|`.
pub fn abs_pct_of_actual(actual: &[f64], predicted: &[f64], floor: f64) -> Result<f64, MetricError> {
    check_lengths(actual, predicted)?;
    let total = stats::sum(actual.iter().map(|a| a.abs()));
    if total < floor {
        return Err(MetricError::AllMasked);
    }
    Ok(100.0 * stats::sum(actual.iter().zip(predicted).map(|(a, p)| (a - p).abs())) / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mae,
    Mape,
    AbsPctOfActual,
}

impl Metric {
    pub fn score(self, actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
        match self {
            Metric::Mae => mae(actual, predicted),
            Metric::Mape => mape(actual, predicted, DEFAULT_MAPE_FLOOR),
            Metric::AbsPctOfActual => abs_pct_of_actual(actual, predicted, DEFAULT_MAPE_FLOOR),
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mae" => Ok(Metric::Mae),
            "mape" => Ok(Metric::Mape),
            "pct" | "abs_pct" | "abspctofactual" => Ok(Metric::AbsPctOfActual),
            other => Err(format!("unknown metric {other:?} (expected mae, mape or pct)")),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Mae => "mae",
            Metric::Mape => "mape",
            Metric::AbsPctOfActual => "pct",
        })
    }
}

/// Per-event historical means. Events never observed in training are
/// listed in `no_history` and left out of `means`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Baseline {
    pub means: BTreeMap<EventKey, f64>,
    pub no_history: Vec<EventKey>,
}

impl Baseline {
    /// Training means recorded in a built graph.
    pub fn from_graph(graph: &DependencyGraph) -> Self {
        let mut out = Baseline::default();
        for (k, n) in graph.nodes() {
            if n.status == NodeStatus::NoHistory {
                out.no_history.push(k.clone());
            } else {
                out.means.insert(k.clone(), n.train_mean);
            }
        }
        out
    }

    pub fn get(&self, key: &EventKey) -> Option<f64> {
        self.means.get(key).copied()
    }
}

/// Mean of each event over its non-missing training days.
pub fn mean_baseline(panel_train: &PanelDataset) -> Baseline {
    let mut out = Baseline::default();
    for (j, key) in panel_train.catalog.iter().enumerate() {
        match panel_train.event_mean(j) {
            Some(m) => {
                out.means.insert(key.clone(), m);
            }
            None => out.no_history.push(key.clone()),
        }
    }
    out
}

/// Model and baseline error as a function of the prediction cutoff.
/// `None` marks cutoffs with nothing left to score.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub cutoffs: Vec<u32>,
    pub model_error: Vec<Option<f64>>,
    pub baseline_error: Vec<Option<f64>>,
    pub metric: Metric,
    pub n_eval_points: Vec<usize>,
}

impl ErrorCurve {
    /// CSV with header `cutoff_minutes,model_error,baseline_error,n_points`;
    /// absent errors are written as `NA`.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        let mut out = String::from("cutoff_minutes,model_error,baseline_error,n_points\n");
        for i in 0..self.cutoffs.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.cutoffs[i],
                fmt(self.model_error[i]),
                fmt(self.baseline_error[i]),
                self.n_eval_points[i]
            );
        }
        out
    }

    pub fn len(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cutoffs.is_empty()
    }
}

/// Hourly cutoffs from the hour of the earliest bucket to the end of the
/// latest bucket, inclusive.
pub fn hourly_cutoffs(graph: &DependencyGraph) -> Vec<u32> {
    let Some(first) = graph.nodes().keys().map(EventKey::time_bucket).min() else {
        return Vec::new();
    };
    let end = graph
        .nodes()
        .keys()
        .map(|k| k.time_bucket() + k.bucket_width())
        .max()
        .unwrap_or(first);
    let mut out: Vec<u32> = (first / 60 * 60..=end).step_by(60).collect();
    if out.last() != Some(&end) && end <= MINUTES_PER_DAY {
        out.push(end);
    }
    out
}

struct DayScore {
    model: f64,
    baseline: f64,
    points: usize,
}

/// Scores forecasts made at each cutoff on every test day.
///
/// At a cutoff, events starting before it are observed (when present) and
/// the rest are predicted. Only events with `time_bucket >= cutoff`, a
/// non-missing actual and a baseline mean are scored. Errors are averaged
/// over events within a day, then over days.
pub fn error_curve(
    graph: &DependencyGraph,
    panel_test: &PanelDataset,
    baseline: &Baseline,
    cutoffs: &[u32],
    metric: Metric,
) -> Result<ErrorCurve, EvalError> {
    if cutoffs.windows(2).any(|w| w[1] < w[0]) || cutoffs.iter().any(|c| *c > MINUTES_PER_DAY) {
        return Err(EvalError::BadCutoffs);
    }
    if panel_test.values.len() != panel_test.days.len()
        || panel_test.values.iter().any(|r| r.len() != panel_test.catalog.len())
    {
        return Err(EvalError::BadPanel("dimensions do not match the catalog".into()));
    }
    if let Some(k) = panel_test.catalog.iter().find(|k| graph.node(k).is_none()) {
        return Err(EvalError::UnknownEvent(k.to_string()));
    }

    type DayInput<'a> = (HashMap<EventKey, f64>, Option<&'a [f64]>);
    let days: Vec<DayInput> = (0..panel_test.n_days())
        .map(|d| (panel_test.day_map(d), panel_test.covariate_row(d)))
        .collect();

    let mut curve = ErrorCurve {
        cutoffs: cutoffs.to_vec(),
        model_error: Vec::with_capacity(cutoffs.len()),
        baseline_error: Vec::with_capacity(cutoffs.len()),
        metric,
        n_eval_points: Vec::with_capacity(cutoffs.len()),
    };

    for &cutoff in cutoffs {
        let scores: Vec<Option<DayScore>> = days
            .par_iter()
            .map(|(actuals, cov)| score_day(graph, actuals, *cov, baseline, cutoff, metric))
            .collect::<Result<_, _>>()?;

        let mut model = CompensatedSum::default();
        let mut base = CompensatedSum::default();
        let mut n_days = 0usize;
        let mut points = 0usize;
        for s in scores.into_iter().flatten() {
            model.add(s.model);
            base.add(s.baseline);
            n_days += 1;
            points += s.points;
        }
        let avg = |acc: CompensatedSum| (n_days > 0).then(|| acc.value() / n_days as f64);
        curve.model_error.push(avg(model));
        curve.baseline_error.push(avg(base));
        curve.n_eval_points.push(points);
    }
    Ok(curve)
}

fn score_day(
    graph: &DependencyGraph,
    actuals: &HashMap<EventKey, f64>,
    covariates: Option<&[f64]>,
    baseline: &Baseline,
    cutoff: u32,
    metric: Metric,
) -> Result<Option<DayScore>, EvalError> {
    let state = predict_as_of(graph, actuals, cutoff, covariates)?;
    let mut actual = Vec::new();
    let mut model = Vec::new();
    let mut base = Vec::new();
    for key in graph.topo_order() {
        if key.time_bucket() < cutoff {
            continue;
        }
        let (Some(a), Some(b)) = (actuals.get(key), baseline.get(key)) else {
            continue;
        };
        actual.push(*a);
        model.push(state.value(key).expect("propagation is total"));
        base.push(b);
    }
    if actual.is_empty() {
        return Ok(None);
    }
    match (metric.score(&actual, &model), metric.score(&actual, &base)) {
        (Ok(m), Ok(b)) => Ok(Some(DayScore {
            model: m,
            baseline: b,
            points: actual.len(),
        })),
        _ => Ok(None),
    }
}

/// Labels cutoffs as `HH:MM` for display.
pub fn cutoff_label(cutoff: u32) -> String {
    if cutoff >= MINUTES_PER_DAY {
        "24:00".into()
    } else {
        format_hhmm(cutoff)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[10.0], &[9.0], 0.01).unwrap(), 10.0);
        assert_eq!(mape(&[10.0, 20.0], &[10.0, 20.0], 0.01).unwrap(), 0.0);
        // First pair masked: only |10 - 11| / 10 remains.
        assert!((mape(&[0.0001, 10.0], &[5.0, 11.0], 0.01).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(mape(&[0.0, 0.001], &[1.0, 1.0], 0.01), Err(MetricError::AllMasked));
        assert_eq!(mape(&[1.0], &[], 0.01), Err(MetricError::LengthMismatch(1, 0)));
        assert_eq!(mape(&[], &[], 0.01), Err(MetricError::Empty));
    }

    #[test]
    fn mape_is_scale_invariant() {
        let a = [3.0, -7.0, 12.5, 0.4];
        let p = [2.5, -6.0, 14.0, 0.1];
        let base = mape(&a, &p, 0.01).unwrap();
        for c in [0.5, 3.0, 1000.0] {
            let sa: Vec<f64> = a.iter().map(|x| x * c).collect();
            let sp: Vec<f64> = p.iter().map(|x| x * c).collect();
            assert!((mape(&sa, &sp, 0.0).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn other_metrics() {
        assert_eq!(mae(&[1.0, 4.0], &[2.0, 2.0]).unwrap(), 1.5);
        assert_eq!(abs_pct_of_actual(&[10.0, 30.0], &[12.0, 27.0], 0.01).unwrap(), 12.5);
        assert_eq!(abs_pct_of_actual(&[0.0], &[1.0], 0.01), Err(MetricError::AllMasked));
        assert_eq!("MAE".parse::<Metric>().unwrap(), Metric::Mae);
        assert!("rmse".parse::<Metric>().is_err());
    }

    #[test]
    fn baseline_means() {
        let k1 = EventKey::new("a", 0, 60).unwrap();
        let k2 = EventKey::new("b", 0, 60).unwrap();
        let k3 = EventKey::new("c", 0, 60).unwrap();
        let panel = PanelDataset::new(
            vec![k1.clone(), k2.clone(), k3.clone()],
            vec!["1".into(), "2".into(), "3".into()],
            vec![
                vec![Some(2.0), Some(5.0), None],
                vec![Some(4.0), None, None],
                vec![Some(3.0), Some(7.0), None],
            ],
        );
        let b = mean_baseline(&panel);
        assert_eq!(b.get(&k1), Some(3.0));
        assert_eq!(b.get(&k2), Some(6.0));
        assert_eq!(b.get(&k3), None);
        assert_eq!(b.no_history, vec![k3]);
    }

    #[test]
    fn curve_csv_marks_absent_values() {
        let c = ErrorCurve {
            cutoffs: vec![60, 120],
            model_error: vec![Some(1.5), None],
            baseline_error: vec![Some(2.0), None],
            metric: Metric::Mae,
            n_eval_points: vec![4, 0],
        };
        assert_eq!(
            c.to_csv(),
            "cutoff_minutes,model_error,baseline_error,n_points\n60,1.5,2,4\n120,NA,NA,0\n"
        );
    }
}
