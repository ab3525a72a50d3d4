//! CSV input and output.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{invalid, Result};
use crate::types::{LabeledDataset, UnlabeledDataset};

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros removed.
pub fn fmt_f64(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), sign, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn feature_header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

pub fn write_labeled_csv(data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = File::create(path)?;
    out.write_all(labeled_csv_string(data).as_bytes())?;
    Ok(())
}

pub fn labeled_csv_string(data: &LabeledDataset) -> String {
    let mut header = feature_header(data.dim());
    header.push("y".into());
    let mut s = header.join(",");
    s.push('\n');
    for (x, y) in data.rows().zip(data.labels()) {
        let mut fields: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
        fields.push(fmt_f64(*y));
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

/// Features plus labels when a `y` column is present.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub features: UnlabeledDataset,
    pub labels: Option<Vec<f64>>,
}

impl CsvTable {
    pub fn into_labeled(self) -> Result<LabeledDataset> {
        match self.labels {
            Some(labels) => LabeledDataset::new(self.features.dim(), self.features.as_flat().to_vec(), labels),
            None => invalid("CSV has no `y` column"),
        }
    }
}

/// Reads a CSV with header `x1,...,xd[,y]`.
pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let y_col = headers.iter().position(|h| h.trim() == "y");
    let x_cols: Vec<usize> =
        headers.iter().enumerate().filter(|(_, h)| h.trim().starts_with('x')).map(|(i, _)| i).collect();
    if x_cols.is_empty() {
        return invalid(format!("{}: no feature columns (x1, x2, ...)", path.display()));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            let field = record.get(i).unwrap_or("").trim();
            field
                .parse::<f64>()
                .or_else(|_| invalid(format!("{}: row {}: cannot parse `{field}`", path.display(), line + 1)))
        };
        for &c in &x_cols {
            features.push(parse(c)?);
        }
        if let Some(c) = y_col {
            labels.push(parse(c)?);
        }
    }
    let features = UnlabeledDataset::new(x_cols.len(), features)?;
    Ok(CsvTable { features, labels: y_col.map(|_| labels) })
}
