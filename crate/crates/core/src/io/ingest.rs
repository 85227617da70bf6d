//! Long-format CSV (`day,entity,time,value`) to panel and back.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

use crate::stats::CompensatedSum;
use crate::types::{format_hhmm, parse_hhmm, Covariates, EventKey, LinkFamily, PanelDataset, MINUTES_PER_DAY};

pub const DAY_OF_WEEK_NAMES: [&str; 7] = [
    "dow_mon", "dow_tue", "dow_wed", "dow_thu", "dow_fri", "dow_sat", "dow_sun",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}, column {column}: {message}")]
    Parse { line: u64, column: String, message: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

/// How duplicate raw rows for one (day, event) cell are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Mean,
    Sum,
}

impl Aggregation {
    /// Means for delays, sums for counts.
    pub fn default_for(family: LinkFamily) -> Self {
        match family {
            LinkFamily::GaussianIdentity => Aggregation::Mean,
            LinkFamily::PoissonExp => Aggregation::Sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSchema {
    pub day_column: String,
    pub entity_column: String,
    pub time_column: String,
    pub value_column: String,
    /// Times are floored to buckets of this many minutes.
    pub bucket_width: u32,
    /// `None` picks the family default.
    pub aggregation: Option<Aggregation>,
    /// Adds one-hot day-of-week covariates.
    pub day_of_week: bool,
}

impl Default for IngestSchema {
    fn default() -> Self {
        Self {
            day_column: "day".into(),
            entity_column: "entity".into(),
            time_column: "time".into(),
            value_column: "value".into(),
            bucket_width: 60,
            aggregation: None,
            day_of_week: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_read: usize,
    /// Rows with an empty value field.
    pub missing_values: usize,
    /// Rows folded into a cell that already had a value.
    pub aggregated_rows: usize,
    pub cells: usize,
}

pub fn parse_day(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

/// One-hot day-of-week vectors for ISO dates.
pub fn day_of_week_covariates(days: &[String]) -> Result<Covariates, String> {
    let rows = days
        .iter()
        .map(|d| {
            let date = parse_day(d).ok_or_else(|| format!("{d:?} is not an ISO-8601 date"))?;
            let mut row = vec![0.0; 7];
            row[date.weekday().num_days_from_monday() as usize] = 1.0;
            Ok(row)
        })
        .collect::<Result<_, String>>()?;
    Ok(Covariates {
        names: DAY_OF_WEEK_NAMES.iter().map(|s| s.to_string()).collect(),
        rows,
    })
}

/// Rebuilds a model's covariate vector for one day from its date.
pub fn covariates_for_day(names: &[String], day: &str) -> Result<Vec<f64>, String> {
    if names.is_empty() {
        return Ok(Vec::new());
    }
    if names.iter().map(String::as_str).ne(DAY_OF_WEEK_NAMES) {
        return Err(format!("cannot derive covariates {names:?} from a date"));
    }
    let cov = day_of_week_covariates(&[day.to_string()])?;
    Ok(cov.rows.into_iter().next().expect("one day"))
}

pub fn ingest_csv(
    path: impl AsRef<Path>,
    schema: &IngestSchema,
    family: LinkFamily,
) -> Result<(PanelDataset, IngestReport), IngestError> {
    ingest_reader(File::open(path)?, schema, family)
}

/// Pivots long records into a panel. Days and events are sorted; the
/// catalog holds every (entity, bucket) seen.
pub fn ingest_reader<R: Read>(
    reader: R,
    schema: &IngestSchema,
    family: LinkFamily,
) -> Result<(PanelDataset, IngestReport), IngestError> {
    let width = schema.bucket_width;
    if width == 0 || !MINUTES_PER_DAY.is_multiple_of(width) {
        return Err(IngestError::SchemaMismatch(format!(
            "bucket width {width} does not divide a day"
        )));
    }
    let aggregation = schema.aggregation.unwrap_or(Aggregation::default_for(family));

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::SchemaMismatch(format!("missing column {name:?}")))
    };
    let (day_i, ent_i, time_i, val_i) = (
        col(&schema.day_column)?,
        col(&schema.entity_column)?,
        col(&schema.time_column)?,
        col(&schema.value_column)?,
    );

    let mut report = IngestReport::default();
    let mut cells: BTreeMap<(NaiveDate, EventKey), Option<(CompensatedSum, usize)>> = BTreeMap::new();
    let mut days = BTreeSet::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(csv_error)? {
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| {
            record.get(i).map(str::trim).ok_or_else(|| IngestError::Parse {
                line,
                column: name.to_string(),
                message: "missing field".into(),
            })
        };
        let parse_err = |column: &str, message: String| IngestError::Parse {
            line,
            column: column.to_string(),
            message,
        };

        let day_s = field(day_i, &schema.day_column)?;
        let day = parse_day(day_s)
            .ok_or_else(|| parse_err(&schema.day_column, format!("{day_s:?} is not an ISO-8601 date")))?;
        let entity = field(ent_i, &schema.entity_column)?;
        let time_s = field(time_i, &schema.time_column)?;
        let minutes = parse_hhmm(time_s).map_err(|e| parse_err(&schema.time_column, e.to_string()))?;
        let key = EventKey::new(entity, minutes / width * width, width)
            .map_err(|e| parse_err(&schema.entity_column, e.to_string()))?;
        let value_s = field(val_i, &schema.value_column)?;
        let value = if value_s.is_empty() {
            None
        } else {
            let v: f64 = value_s
                .parse()
                .map_err(|_| parse_err(&schema.value_column, format!("{value_s:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(&schema.value_column, format!("{value_s:?} is not finite")));
            }
            Some(v)
        };

        report.rows_read += 1;
        days.insert(day);
        let cell = cells.entry((day, key)).or_insert(None);
        match value {
            None => report.missing_values += 1,
            Some(v) => match cell {
                Some((acc, n)) => {
                    acc.add(v);
                    *n += 1;
                    report.aggregated_rows += 1;
                }
                None => {
                    let mut acc = CompensatedSum::default();
                    acc.add(v);
                    *cell = Some((acc, 1));
                }
            },
        }
    }

    let catalog: Vec<EventKey> = cells
        .keys()
        .map(|(_, k)| k.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let col_of: BTreeMap<&EventKey, usize> = catalog.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let day_list: Vec<NaiveDate> = days.into_iter().collect();
    let row_of: BTreeMap<NaiveDate, usize> = day_list.iter().enumerate().map(|(i, d)| (*d, i)).collect();

    let mut values = vec![vec![None; catalog.len()]; day_list.len()];
    for ((day, key), cell) in &cells {
        if let Some((acc, n)) = cell {
            let v = match aggregation {
                Aggregation::Mean => acc.value() / *n as f64,
                Aggregation::Sum => acc.value(),
            };
            values[row_of[day]][col_of[key]] = Some(v);
            report.cells += 1;
        }
    }

    let day_labels: Vec<String> = day_list.iter().map(|d| d.format("%Y-%m-%d").to_string()).collect();
    let mut panel = PanelDataset::new(catalog, day_labels, values);
    if schema.day_of_week {
        panel.covariates = Some(day_of_week_covariates(&panel.days).map_err(IngestError::SchemaMismatch)?);
    }
    Ok((panel, report))
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line());
    IngestError::Parse {
        line,
        column: String::new(),
        message: e.to_string(),
    }
}

/// Writes a panel back to long format, one row per (day, event) with an
/// empty value for missing cells.
pub fn write_long_csv<W: Write>(panel: &PanelDataset, schema: &IngestSchema, writer: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| IngestError::Io(std::io::Error::other(e));
    w.write_record([
        &schema.day_column,
        &schema.entity_column,
        &schema.time_column,
        &schema.value_column,
    ])
    .map_err(err)?;
    for (day, row) in panel.days.iter().zip(&panel.values) {
        for (key, v) in panel.catalog.iter().zip(row) {
            let value = v.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([day.as_str(), key.entity(), &format_hhmm(key.time_bucket()), &value])
                .map_err(err)?;
        }
    }
    w.flush()?;
    Ok(())
}
