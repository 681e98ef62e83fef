//! CSV datasets: a header `x0,...,x{m-1},y` and one decimal per cell.

use std::io::{Read, Write};
use std::path::Path;

use veridl_core::codec::encode;
use veridl_core::{CodecParams, Dataset, QuantizedDataset, Sample};

use crate::error::CliError;

/// 100 samples, 4 features on the 1/16 grid, labels from a random hyperplane.
pub const BUNDLED: &str = include_str!("../data/synthetic.csv");

fn parse_err(line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Parse(format!("line {line}: {msg}"))
}

/// Parses CSV text, checking that every value is encodable under `params`.
pub fn read_csv(input: impl Read, params: &CodecParams) -> Result<Dataset, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| parse_err(1, e))?.clone();
    let m = header.len().checked_sub(1).filter(|&m| m >= 1).ok_or_else(|| parse_err(1, "need at least x0 and y"))?;
    for (j, name) in header.iter().enumerate() {
        let expected = if j == m { "y".to_string() } else { format!("x{j}") };
        if name != expected {
            return Err(parse_err(1, format!("column {j} is {name:?}, expected {expected:?}")));
        }
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(m + 1);
        for cell in record.iter() {
            let x: f64 = cell.parse().map_err(|_| parse_err(line, format!("{cell:?} is not a decimal")))?;
            encode(x, params).map_err(|e| parse_err(line, e))?;
            values.push(x);
        }
        let label = values.pop().expect("record has m+1 fields");
        samples.push(Sample { features: values, label });
    }
    if samples.is_empty() {
        return Err(CliError::Parse("dataset has no samples".into()));
    }
    Ok(Dataset::new(samples))
}

/// Loads and quantizes a CSV file, or the bundled dataset when `path` is `None`.
pub fn load_csv(path: Option<&Path>, params: &CodecParams, max_samples: usize) -> Result<QuantizedDataset, CliError> {
    let data = match path {
        Some(p) => {
            let file = std::fs::File::open(p).map_err(|e| CliError::io(p, e))?;
            read_csv(file, params).map_err(|e| match e {
                CliError::Parse(m) => CliError::Parse(format!("{}: {m}", p.display())),
                other => other,
            })?
        }
        None => read_csv(BUNDLED.as_bytes(), params)?,
    };
    if data.len() > max_samples {
        return Err(CliError::Parse(format!(
            "dataset has {} samples, more than max_samples = {max_samples}",
            data.len()
        )));
    }
    Ok(data.quantize(params)?)
}

pub fn write_csv(data: &Dataset, out: impl Write) -> Result<(), CliError> {
    let m = data.input_dim().unwrap_or(0);
    let mut writer = csv::Writer::from_writer(out);
    let header: Vec<String> = (0..m).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
    let csv_err = |e: csv::Error| CliError::Parse(e.to_string());
    writer.write_record(&header).map_err(csv_err)?;
    for s in &data.samples {
        let row: Vec<String> = s.features.iter().chain([&s.label]).map(|v| v.to_string()).collect();
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}
