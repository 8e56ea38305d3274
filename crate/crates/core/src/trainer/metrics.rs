//! Per-evaluation metrics rows and their CSV form.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub beta: f64,
    pub d_loss: f64,
    pub v_loss: f64,
    pub surrogate_gain: f64,
    /// Success count per active task, task 1 first.
    pub successes: Vec<usize>,
}

const FIXED: [&str; 5] = ["epoch", "beta", "d_loss", "v_loss", "surrogate_gain"];

pub fn metrics_header(n_tasks: usize) -> String {
    let mut cols: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    cols.extend((1..=n_tasks).map(|k| format!("success_task{k}")));
    cols.join(",")
}

impl MetricsRecord {
    pub fn to_csv_row(&self) -> String {
        let mut row = format!(
            "{},{},{},{},{}",
            self.epoch, self.beta, self.d_loss, self.v_loss, self.surrogate_gain
        );
        for s in &self.successes {
            row.push(',');
            row.push_str(&s.to_string());
        }
        row
    }
}

/// Header plus one row per record.
pub fn write_metrics_csv<W: Write>(mut out: W, records: &[MetricsRecord]) -> Result<()> {
    let n = records.first().map_or(2, |r| r.successes.len());
    writeln!(out, "{}", metrics_header(n))?;
    for r in records {
        if r.successes.len() != n {
            return Err(Error::Config("metrics records disagree on the task count".into()));
        }
        writeln!(out, "{}", r.to_csv_row())?;
    }
    Ok(())
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRecord>> {
    let mut lines = BufReader::new(input).lines();
    let header = lines.next().transpose()?.ok_or_else(|| Error::Parse("empty metrics file".into()))?;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.len() < FIXED.len() || cols[..FIXED.len()] != FIXED {
        return Err(Error::Parse(format!("unexpected metrics header '{}'", header.trim_end())));
    }
    let n_tasks = cols.len() - FIXED.len();
    if cols[FIXED.len()..]
        .iter()
        .enumerate()
        .any(|(k, c)| *c != format!("success_task{}", k + 1))
    {
        return Err(Error::Parse(format!("unexpected metrics header '{}'", header.trim_end())));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::Parse(format!("metrics row {} has {} fields, expected {}", i + 1, f.len(), cols.len())));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{s}' in metrics row {}", i + 1)));
        let count = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad count '{s}' in metrics row {}", i + 1)));
        records.push(MetricsRecord {
            epoch: count(f[0])?,
            beta: float(f[1])?,
            d_loss: float(f[2])?,
            v_loss: float(f[3])?,
            surrogate_gain: float(f[4])?,
            successes: f[FIXED.len()..FIXED.len() + n_tasks].iter().map(|s| count(s)).collect::<Result<_>>()?,
        });
    }
    Ok(records)
}
