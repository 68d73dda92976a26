//! CSV ingestion and output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::Task;

/// How to read a CSV file: which column is the target, which are
/// categorical, and what kind of prediction task it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub target: String,
    #[serde(default)]
    pub categorical: Vec<String>,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Typed feature columns plus the target.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
    pub target_name: String,
    pub target: Vec<f64>,
    pub task: Task,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    /// Table of numeric columns taken from a dataset.
    pub fn from_dataset(data: &Dataset, names: &[String], target_name: &str, task: Task) -> Self {
        Self {
            names: names.to_vec(),
            columns: (0..data.n_features())
                .map(|c| Column::Numeric(data.x.column(c)))
                .collect(),
            target_name: target_name.to_string(),
            target: data.y.clone(),
            task,
        }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<RawTable> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let target_idx = headers
        .iter()
        .position(|h| *h == schema.target)
        .ok_or_else(|| Error::Schema(format!("target column '{}' not in header", schema.target)))?;
    for c in &schema.categorical {
        if !headers.contains(c) {
            return Err(Error::Schema(format!("categorical column '{c}' not in header")));
        }
        if *c == schema.target {
            return Err(Error::Schema(format!("target column '{c}' cannot be categorical")));
        }
    }

    let feature_idx: Vec<usize> = (0..headers.len()).filter(|&i| i != target_idx).collect();
    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    let mut text: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    let is_cat: Vec<bool> = headers.iter().map(|h| schema.categorical.contains(h)).collect();
    let mut target = Vec::new();

    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |column: &str, message: String| Error::Parse {
            path: display.clone(),
            row,
            column: column.to_string(),
            message,
        };
        if record.len() != headers.len() {
            return Err(parse_err(
                "*",
                format!("{} fields, header has {}", record.len(), headers.len()),
            ));
        }
        for (i, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                return Err(parse_err(&headers[i], "missing value".into()));
            }
            if is_cat[i] {
                text[i].push(cell.to_string());
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(&headers[i], format!("'{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(&headers[i], format!("'{cell}' is not finite")));
            }
            if i == target_idx {
                if schema.task == Task::BinaryClassification && v != 0.0 && v != 1.0 {
                    return Err(parse_err(&headers[i], format!("label {v} is not 0 or 1")));
                }
                target.push(v);
            } else {
                numeric[i].push(v);
            }
        }
    }

    let mut names = Vec::new();
    let mut columns = Vec::new();
    for i in feature_idx {
        names.push(headers[i].clone());
        columns.push(if is_cat[i] {
            Column::Categorical(std::mem::take(&mut text[i]))
        } else {
            Column::Numeric(std::mem::take(&mut numeric[i]))
        });
    }
    Ok(RawTable {
        names,
        columns,
        target_name: schema.target.clone(),
        target,
        task: schema.task,
    })
}

/// Writes numeric features and the target (last column) as CSV.
pub fn write_csv(path: &Path, data: &Dataset, names: &[String], target_name: &str) -> Result<()> {
    if names.len() != data.n_features() {
        return Err(Error::Shape(format!(
            "{} names for {} features",
            names.len(),
            data.n_features()
        )));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push(target_name);
    w.write_record(&header)?;
    let mut fields = Vec::with_capacity(names.len() + 1);
    for r in 0..data.len() {
        fields.clear();
        fields.extend(data.x.row(r).iter().map(|v| v.to_string()));
        fields.push(data.y[r].to_string());
        w.write_record(&fields)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}
