//! RMSE, MAE and WMAPE, and the per-model report tables built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::PredictionRow;
use crate::error::{Error, Result};

fn check(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() || y.len() != y_hat.len() {
        return Err(Error::Shape(format!(
            "metric inputs have {} actual and {} predicted values",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(())
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    let sq: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sq / y.len() as f64).sqrt())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    let abs: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(abs / y.len() as f64)
}

/// Total absolute error over total actual flow. Well defined when some
/// actual values are zero, as long as their sum is positive.
pub fn wmape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    let total: f64 = y.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::InvalidArgument(
            "WMAPE is undefined when actual values sum to zero".into(),
        ));
    }
    let abs: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(abs / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub rmse: f64,
    pub mae: f64,
    pub wmape: f64,
    pub n: usize,
}

impl Scores {
    pub fn compute(y: &[f64], y_hat: &[f64]) -> Result<Self> {
        Ok(Self {
            rmse: rmse(y, y_hat)?,
            mae: mae(y, y_hat)?,
            wmape: wmape(y, y_hat)?,
            n: y.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub train_days: usize,
    pub seed: Option<u64>,
    pub overall: Scores,
    pub per_station: BTreeMap<String, Scores>,
}

impl EvalReport {
    pub fn from_rows(model: &str, train_days: usize, seed: Option<u64>, rows: &[PredictionRow]) -> Result<Self> {
        let y: Vec<f64> = rows.iter().map(|r| r.actual).collect();
        let y_hat: Vec<f64> = rows.iter().map(|r| r.predicted).collect();
        let mut by_station: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for r in rows {
            let e = by_station.entry(r.station_id.clone()).or_default();
            e.0.push(r.actual);
            e.1.push(r.predicted);
        }
        let per_station = by_station
            .into_iter()
            // stations with no flow at all have no WMAPE; keep the others
            .filter_map(|(id, (a, p))| Scores::compute(&a, &p).ok().map(|s| (id, s)))
            .collect();
        Ok(Self {
            model: model.to_string(),
            train_days,
            seed,
            overall: Scores::compute(&y, &y_hat)?,
            per_station,
        })
    }
}

/// Mean scores of one (model, train_days) cell over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub train_days: usize,
    pub runs: usize,
    pub rmse: f64,
    pub mae: f64,
    pub wmape: f64,
}

/// Averages reports per (model, train_days) and sorts by WMAPE within each
/// day budget.
pub fn summarize(reports: &[EvalReport]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(usize, &str), Vec<&Scores>> = BTreeMap::new();
    for r in reports {
        cells.entry((r.train_days, r.model.as_str())).or_default().push(&r.overall);
    }
    let mut rows: Vec<SummaryRow> = cells
        .into_iter()
        .map(|((days, model), scores)| {
            let n = scores.len() as f64;
            SummaryRow {
                model: model.to_string(),
                train_days: days,
                runs: scores.len(),
                rmse: scores.iter().map(|s| s.rmse).sum::<f64>() / n,
                mae: scores.iter().map(|s| s.mae).sum::<f64>() / n,
                wmape: scores.iter().map(|s| s.wmape).sum::<f64>() / n,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.train_days
            .cmp(&b.train_days)
            .then(a.wmape.total_cmp(&b.wmape))
            .then_with(|| a.model.cmp(&b.model))
    });
    rows
}

/// One CSV row per report.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("model,train_days,seed,rmse,mae,wmape,n\n");
    for r in reports {
        let seed = r.seed.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.model, r.train_days, seed, r.overall.rmse, r.overall.mae, r.overall.wmape, r.overall.n
        );
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("model,train_days,runs,rmse,mae,wmape\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.model, r.train_days, r.runs, r.rmse, r.mae, r.wmape);
    }
    out
}

/// Aligned text table: one line per model, RMSE/MAE/WMAPE for each day budget.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut budgets: Vec<usize> = rows.iter().map(|r| r.train_days).collect();
    budgets.sort_unstable();
    budgets.dedup();
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let width = models.iter().map(|m| m.len()).max().unwrap_or(5).max(5);

    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "Model");
    for d in &budgets {
        let _ = write!(out, " | {:^32}", format!("{d}-day"));
    }
    out.push('\n');
    let _ = write!(out, "{:<width$}", "");
    for _ in &budgets {
        let _ = write!(out, " | {:>10} {:>10} {:>10}", "RMSE", "MAE", "WMAPE");
    }
    out.push('\n');
    for m in models {
        let _ = write!(out, "{m:<width$}");
        for d in &budgets {
            match rows.iter().find(|r| r.model == m && r.train_days == *d) {
                Some(r) => {
                    let _ = write!(out, " | {:>10.3} {:>10.3} {:>10.4}", r.rmse, r.mae, r.wmape);
                }
                None => {
                    let _ = write!(out, " | {:>10} {:>10} {:>10}", "-", "-", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
