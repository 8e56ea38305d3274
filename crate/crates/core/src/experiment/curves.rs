//! Median-across-seeds learning curves.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::{read_metrics_csv, MetricsRecord};

/// Median success per task at one evaluation epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub medians: Vec<f64>,
}

/// Median of `values`; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Per-epoch medians over runs that share one evaluation schedule.
pub fn median_curve(runs: &[Vec<MetricsRecord>]) -> Result<Vec<CurvePoint>> {
    let first = runs.first().ok_or(Error::Empty("metrics runs"))?;
    for (i, run) in runs.iter().enumerate() {
        let same = run.len() == first.len()
            && run
                .iter()
                .zip(first)
                .all(|(a, b)| a.epoch == b.epoch && a.successes.len() == b.successes.len());
        if !same {
            return Err(Error::Parse(format!("metrics run {i} does not match the schedule or task count of run 0")));
        }
    }
    first
        .iter()
        .enumerate()
        .map(|(row, rec)| {
            let medians = (0..rec.successes.len())
                .map(|k| median(&runs.iter().map(|r| r[row].successes[k] as f64).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>>>()?;
            Ok(CurvePoint { epoch: rec.epoch, medians })
        })
        .collect()
}

/// Reads metrics CSVs and returns their median curve.
pub fn plot_curves<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<CurvePoint>> {
    let runs = paths
        .iter()
        .map(|p| read_metrics_csv(std::fs::File::open(p.as_ref())?))
        .collect::<Result<Vec<_>>>()?;
    median_curve(&runs)
}

/// One labelled curve per condition, long format:
/// `condition,epoch,median_task1,...`.
pub fn write_curves_csv<W: Write>(mut out: W, curves: &[(String, Vec<CurvePoint>)]) -> Result<()> {
    let n_tasks = curves
        .iter()
        .flat_map(|(_, c)| c.first())
        .map(|p| p.medians.len())
        .next()
        .unwrap_or(2);
    let cols: Vec<String> = (1..=n_tasks).map(|k| format!("median_task{k}")).collect();
    writeln!(out, "condition,epoch,{}", cols.join(","))?;
    for (name, curve) in curves {
        for p in curve {
            if p.medians.len() != n_tasks {
                return Err(Error::Config("curves disagree on the task count".into()));
            }
            let vals: Vec<String> = p.medians.iter().map(f64::to_string).collect();
            writeln!(out, "{name},{},{}", p.epoch, vals.join(","))?;
        }
    }
    Ok(())
}

pub fn read_curves_csv<R: Read>(input: R) -> Result<Vec<(String, Vec<CurvePoint>)>> {
    let mut lines = BufReader::new(input).lines();
    let header = lines.next().transpose()?.ok_or(Error::Empty("curve file"))?;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.len() < 3 || cols[..2] != ["condition", "epoch"] {
        return Err(Error::Parse(format!("unexpected curve header '{}'", header.trim_end())));
    }
    let mut out: Vec<(String, Vec<CurvePoint>)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::Parse(format!("curve row {} has {} fields, expected {}", i + 1, f.len(), cols.len())));
        }
        let epoch = f[1].parse().map_err(|_| Error::Parse(format!("bad epoch '{}' in curve row {}", f[1], i + 1)))?;
        let medians = f[2..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad median '{s}' in curve row {}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        let point = CurvePoint { epoch, medians };
        match out.last_mut() {
            Some((name, curve)) if name == f[0] => curve.push(point),
            _ => out.push((f[0].to_string(), vec![point])),
        }
    }
    Ok(out)
}
