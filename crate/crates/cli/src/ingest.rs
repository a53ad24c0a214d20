use std::path::Path;

use gpardsel::kernelmath::DesignMatrix;
use gpardsel::model::Family;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },

    /// `row` is the 1-based data row (the header is row 0), `col` the 1-based column.
    #[error("row {row}, column {col} ('{name}'): cannot parse '{value}' as a finite number")]
    ParseError {
        row: usize,
        col: usize,
        name: String,
        value: String,
    },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("{0}")]
    DomainMismatch(String),

    #[error("{0}")]
    Malformed(String),
}

/// A numeric CSV table with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table(path: &Path) -> Result<Table, IngestError> {
    let io = |e: &dyn std::fmt::Display| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io(&e))?;
    let header: Vec<String> = rdr.headers().map_err(|e| io(&e))?.iter().map(String::from).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(IngestError::Malformed(format!("{} has no header row", path.display())));
    }
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| IngestError::Malformed(e.to_string()))?;
        if record.len() != header.len() {
            return Err(IngestError::Malformed(format!(
                "row {} has {} fields, header has {}",
                r + 1,
                record.len(),
                header.len()
            )));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(IngestError::ParseError {
                    row: r + 1,
                    col: c + 1,
                    name: header[c].clone(),
                    value: field.to_string(),
                }),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(IngestError::Malformed(format!("{} has no data rows", path.display())));
    }
    Ok(Table { header, rows })
}

/// Design and response read from a CSV file.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DesignMatrix,
    pub y: Option<Vec<f64>>,
    /// Feature column names in header order.
    pub names: Vec<String>,
}

fn split(table: Table, response: &str, required: bool) -> Result<Dataset, IngestError> {
    let pos = table.header.iter().position(|h| h == response);
    if required && pos.is_none() {
        return Err(IngestError::MissingColumn(response.to_string()));
    }
    let keep: Vec<usize> = (0..table.header.len()).filter(|&c| Some(c) != pos).collect();
    if keep.is_empty() {
        return Err(IngestError::Malformed("no feature columns besides the response".into()));
    }
    let names = keep.iter().map(|&c| table.header[c].clone()).collect();
    let y = pos.map(|p| table.rows.iter().map(|r| r[p]).collect());
    let rows: Vec<Vec<f64>> = table
        .rows
        .iter()
        .map(|r| keep.iter().map(|&c| r[c]).collect())
        .collect();
    let x = DesignMatrix::from_rows(&rows).map_err(|e| IngestError::Malformed(e.to_string()))?;
    Ok(Dataset { x, y, names })
}

/// Reads a training file: every column except `response` becomes a feature,
/// in header order. With a family given, the response must lie in its domain.
pub fn ingest_csv(
    path: &Path,
    response: &str,
    family: Option<Family>,
) -> Result<(DesignMatrix, Vec<f64>, Vec<String>), IngestError> {
    let data = split(read_table(path)?, response, true)?;
    let y = data.y.expect("response column checked");
    if let Some(f) = family {
        f.check_response(&y)
            .map_err(|e| IngestError::DomainMismatch(e.to_string()))?;
    }
    Ok((data.x, y, data.names))
}

/// Reads a file of test features; a `response` column, if present, is set aside.
pub fn ingest_features(path: &Path, response: &str) -> Result<Dataset, IngestError> {
    split(read_table(path)?, response, false)
}

/// Writes `x` (and `y` if given) with full round-trip precision.
pub fn write_csv(path: &Path, names: &[String], x: &DesignMatrix, y: Option<(&str, &[f64])>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    if let Some((name, _)) = y {
        header.push(name);
    }
    w.write_record(&header)?;
    for i in 0..x.nrows() {
        let mut rec: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        if let Some((_, y)) = y {
            rec.push(y[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()
}
