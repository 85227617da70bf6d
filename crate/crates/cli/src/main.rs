use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use depnet::evaluation::{hourly_cutoffs, Baseline};
use depnet::io::config::{load_config, ProjectConfig};
use depnet::io::dot::{export_dot, DotOptions};
use depnet::io::ingest::{covariates_for_day, ingest_csv, write_long_csv, IngestSchema};
use depnet::io::model_file;
use depnet::io::simulate::{simulate, SimSpec};
use depnet::types::{format_hhmm, parse_hhmm, MINUTES_PER_DAY};
use depnet::{build_graph, error_curve, predict_as_of, BuildError, DependencyGraph, Metric};

#[derive(Parser)]
#[command(
    name = "depnet",
    version,
    about = "Sparse dependency graphs for forecasting recurring daily events"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a dependency graph from long-format training data.
    Build {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast the rest of one day from the values observed before a cutoff.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Long-format CSV holding a single day.
        #[arg(long)]
        day: PathBuf,
        /// Events starting before this time (HH:MM) count as observed.
        #[arg(long = "as-of")]
        as_of: String,
        /// Column names of the day file; defaults match the build defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error of the model and of the training-mean baseline against cutoff.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// `hourly` or a comma-separated list of HH:MM times.
        #[arg(long, default_value = "hourly")]
        cutoffs: String,
        /// `mae`, `mape` or `pct` (absolute error as a percentage of actuals).
        #[arg(long, default_value = "mae")]
        metric: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the graph in Graphviz DOT format.
    ExportDot {
        #[arg(long)]
        model: PathBuf,
        /// Omit edges whose |coefficient| is below this.
        #[arg(long = "min-weight", default_value_t = 0.0)]
        min_weight: f64,
        /// Label edges with their coefficients.
        #[arg(long)]
        show_weights: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a synthetic panel from a random ground-truth graph.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the ground-truth graph as a model file.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

enum Failure {
    Data(String),
    Config(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => 1,
            Failure::Config(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn data<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Data(format!("{context}: {e}"))
}

fn config<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Config(format!("{context}: {e}"))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(data(&p.display().to_string())),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(data("stdout")),
    }
}

fn load_model(path: &Path) -> Result<DependencyGraph> {
    model_file::load(path).map_err(data(&path.display().to_string()))
}

fn project_config(path: Option<&Path>) -> Result<ProjectConfig> {
    match path {
        Some(p) => load_config(p).map_err(config(&p.display().to_string())),
        None => Ok(ProjectConfig::default()),
    }
}

/// Schema for reading data against an existing model: the bucket width comes
/// from the model unless a config file sets it explicitly.
fn schema_for_model(graph: &DependencyGraph, path: Option<&Path>) -> Result<IngestSchema> {
    let mut schema = project_config(path)?.schema;
    if let Some(width) = graph.nodes().keys().next().map(|k| k.bucket_width()) {
        if path.is_some() && schema.bucket_width != width {
            return Err(Failure::Config(format!(
                "config bucket_width {} differs from the model's {width}",
                schema.bucket_width
            )));
        }
        schema.bucket_width = width;
    }
    schema.day_of_week = false;
    Ok(schema)
}

fn parse_cutoff(s: &str) -> Result<u32> {
    let s = s.trim();
    if s == "24:00" {
        return Ok(MINUTES_PER_DAY);
    }
    parse_hhmm(s).map_err(config("cutoff"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build {
            data: input,
            config: cfg,
            out,
        } => {
            let project = project_config(cfg.as_deref())?;
            let (panel, report) = ingest_csv(&input, &project.schema, project.build.family)
                .map_err(data(&input.display().to_string()))?;
            eprintln!(
                "read {} rows ({} missing, {} aggregated) into {} events x {} days",
                report.rows_read,
                report.missing_values,
                report.aggregated_rows,
                panel.n_events(),
                panel.n_days()
            );
            let graph = build_graph(&panel, &project.build).map_err(|e| match e {
                BuildError::Config(c) => Failure::Config(c.to_string()),
                other => Failure::Data(other.to_string()),
            })?;
            eprintln!("built {} nodes, {} edges", graph.len(), graph.edges().len());
            model_file::save(&graph, &out).map_err(data(&out.display().to_string()))
        }

        Command::Predict {
            model,
            day,
            as_of,
            config: cfg,
            out,
        } => {
            let graph = load_model(&model)?;
            let cutoff = parse_cutoff(&as_of)?;
            let schema = schema_for_model(&graph, cfg.as_deref())?;
            let (panel, _) = ingest_csv(&day, &schema, graph.family()).map_err(data(&day.display().to_string()))?;
            if panel.n_days() > 1 {
                return Err(Failure::Data(format!(
                    "{} holds {} days; expected one",
                    day.display(),
                    panel.n_days()
                )));
            }
            let covariates = match panel.days.first() {
                Some(d) => Some(covariates_for_day(graph.covariate_names(), d).map_err(Failure::Data)?),
                None if graph.covariate_names().is_empty() => None,
                None => {
                    return Err(Failure::Data(
                        "the model needs the day's date for its covariates".into(),
                    ))
                }
            };
            let values = if panel.n_days() == 1 {
                panel.day_map(0)
            } else {
                Default::default()
            };
            let state = predict_as_of(&graph, &values, cutoff, covariates.as_deref()).map_err(data("prediction"))?;
            let mut csv = String::from("entity,time,status,value\n");
            for (key, status) in state.iter() {
                let value = status.value().expect("propagation resolves every node");
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    key.entity(),
                    format_hhmm(key.time_bucket()),
                    status.label(),
                    value
                ));
            }
            write_output(out.as_deref(), &csv)
        }

        Command::Evaluate {
            model,
            test,
            cutoffs,
            metric,
            config: cfg,
            out,
        } => {
            let graph = load_model(&model)?;
            let metric: Metric = metric.parse().map_err(Failure::Config)?;
            let cutoffs = if cutoffs.trim() == "hourly" {
                hourly_cutoffs(&graph)
            } else {
                cutoffs.split(',').map(parse_cutoff).collect::<Result<Vec<_>>>()?
            };
            let schema = schema_for_model(&graph, cfg.as_deref())?;
            let (mut panel, _) =
                ingest_csv(&test, &schema, graph.family()).map_err(data(&test.display().to_string()))?;
            if !graph.covariate_names().is_empty() {
                let rows = panel
                    .days
                    .iter()
                    .map(|d| covariates_for_day(graph.covariate_names(), d))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(Failure::Data)?;
                panel.covariates = Some(depnet::types::Covariates {
                    names: graph.covariate_names().to_vec(),
                    rows,
                });
            }
            let curve = error_curve(&graph, &panel, &Baseline::from_graph(&graph), &cutoffs, metric)
                .map_err(data("evaluation"))?;
            write_output(out.as_deref(), &curve.to_csv())
        }

        Command::ExportDot {
            model,
            min_weight,
            show_weights,
            out,
        } => {
            if min_weight.is_nan() || min_weight < 0.0 {
                return Err(Failure::Config("--min-weight must be a non-negative number".into()));
            }
            let graph = load_model(&model)?;
            let options = DotOptions {
                min_abs_weight: min_weight,
                show_weights,
                ..DotOptions::default()
            };
            write_output(out.as_deref(), &export_dot(&graph, &options))
        }

        Command::Simulate {
            spec,
            days,
            seed,
            out,
            truth,
        } => {
            let text = fs::read_to_string(&spec).map_err(config(&spec.display().to_string()))?;
            let sim_spec = SimSpec::from_toml(&text).map_err(config(&spec.display().to_string()))?;
            let sim = simulate(&sim_spec, days, seed).map_err(config("simulation"))?;
            let mut buf = Vec::new();
            write_long_csv(&sim.panel, &IngestSchema::default(), &mut buf).map_err(data("csv"))?;
            fs::write(&out, buf).map_err(data(&out.display().to_string()))?;
            if let Some(path) = truth {
                model_file::save(&sim.truth, &path).map_err(data(&path.display().to_string()))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Data(msg) | Failure::Config(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
