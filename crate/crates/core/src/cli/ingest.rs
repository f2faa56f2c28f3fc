use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Column selected by header name or zero-based position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnRef {
    Name(String),
    Index(usize),
}

impl ColumnRef {
    /// A header name wins over a numeric reading of the same text.
    fn resolve(&self, headers: &[String]) -> Result<usize> {
        match self {
            ColumnRef::Name(name) => headers
                .iter()
                .position(|h| h == name)
                .or_else(|| name.parse::<usize>().ok().filter(|&i| i < headers.len()))
                .ok_or_else(|| Error::MissingColumn(name.clone())),
            ColumnRef::Index(i) if *i < headers.len() => Ok(*i),
            ColumnRef::Index(i) => Err(Error::MissingColumn(format!("#{i}"))),
        }
    }
}

impl From<&str> for ColumnRef {
    fn from(s: &str) -> Self {
        ColumnRef::Name(s.trim().to_string())
    }
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub data: Dataset,
    pub y_name: String,
    pub x_names: Vec<String>,
    /// Rows dropped for a missing or non-numeric value in a used column.
    pub dropped: usize,
    /// Record positions (0-based, header excluded) kept in the dataset.
    pub kept_rows: Vec<usize>,
}

/// Reads a headed CSV. With no covariate columns given, every column except
/// the response is used.
pub fn ingest_csv(path: &Path, y_col: &ColumnRef, x_cols: &[ColumnRef]) -> Result<Ingested> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(file));
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let yi = y_col.resolve(&headers)?;
    let xi: Vec<usize> = if x_cols.is_empty() {
        (0..headers.len()).filter(|&i| i != yi).collect()
    } else {
        x_cols.iter().map(|c| c.resolve(&headers)).collect::<Result<_>>()?
    };
    if xi.is_empty() {
        return Err(Error::arg("no covariate columns"));
    }
    if xi.contains(&yi) {
        return Err(Error::arg(format!("column '{}' used as both response and covariate", headers[yi])));
    }

    let parse = |rec: &csv::StringRecord, i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite());
    let mut cols = vec![Vec::new(); xi.len()];
    let mut y = Vec::new();
    let mut dropped = 0;
    let mut kept_rows = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let vals: Option<Vec<f64>> = xi.iter().map(|&i| parse(&rec, i)).collect();
        match (parse(&rec, yi), vals) {
            (Some(v), Some(xs)) => {
                y.push(v);
                for (c, x) in cols.iter_mut().zip(xs) {
                    c.push(x);
                }
                kept_rows.push(row);
            }
            _ => dropped += 1,
        }
    }
    if y.len() < 2 {
        return Err(Error::EmptyData);
    }
    Ok(Ingested {
        data: Dataset::from_columns(&cols, &y)?,
        y_name: headers[yi].clone(),
        x_names: xi.iter().map(|&i| headers[i].clone()).collect(),
        dropped,
        kept_rows,
    })
}
