use std::fmt::Write as _;

use super::forecast::MetricsRecord;
use super::EvalError;

pub const METRICS_HEADER: &str = "ticker,horizon,mae,mse,rmse,n_samples";

/// Shortest round-trip formatting keeps `parse -> write` byte-identical.
pub fn metrics_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{},{},{:?},{:?},{:?},{}", r.ticker, r.horizon, r.mae, r.mse, r.rmse, r.n_samples);
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRecord>, EvalError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => return Err(EvalError::Parse(format!("expected header {METRICS_HEADER:?}, found {other:?}"))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let line_no = i + 2;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(EvalError::Parse(format!("line {line_no}: expected 6 fields, found {}", fields.len())));
            }
            let num = |k: usize| -> Result<f64, EvalError> {
                fields[k].parse().map_err(|e| EvalError::Parse(format!("line {line_no}, field {k}: {e}")))
            };
            let int = |k: usize| -> Result<usize, EvalError> {
                fields[k].parse().map_err(|e| EvalError::Parse(format!("line {line_no}, field {k}: {e}")))
            };
            Ok(MetricsRecord {
                ticker: fields[0].to_string(),
                horizon: int(1)?,
                mae: num(2)?,
                mse: num(3)?,
                rmse: num(4)?,
                n_samples: int(5)?,
                model_config_hash: String::new(),
                data_range: String::new(),
            })
        })
        .collect()
}

/// Markdown table: one column per ticker (first-appearance order), one
/// row per (horizon, metric) with horizons ascending. Values use 4 decimals.
pub fn markdown_table(title: &str, records: &[MetricsRecord]) -> String {
    let mut tickers: Vec<&str> = Vec::new();
    let mut horizons: Vec<usize> = Vec::new();
    for r in records {
        if !tickers.contains(&r.ticker.as_str()) {
            tickers.push(&r.ticker);
        }
        if !horizons.contains(&r.horizon) {
            horizons.push(r.horizon);
        }
    }
    horizons.sort_unstable();
    let mut out = String::new();
    let _ = writeln!(out, "### {title}\n");
    let _ = writeln!(out, "| Horizon | Metric | {} |", tickers.join(" | "));
    let _ = writeln!(out, "|---|---|{}", "---|".repeat(tickers.len()));
    for h in &horizons {
        for (label, pick) in [("MAE", 0usize), ("MSE", 1), ("RMSE", 2)] {
            let cells: Vec<String> = tickers
                .iter()
                .map(|t| {
                    records
                        .iter()
                        .find(|r| r.ticker == *t && r.horizon == *h)
                        .map(|r| format!("{:.4}", [r.mae, r.mse, r.rmse][pick]))
                        .unwrap_or_else(|| "n/a".into())
                })
                .collect();
            let _ = writeln!(out, "| {h} | {label} | {} |", cells.join(" | "));
        }
    }
    out
}

/// Concatenates one table per titled group.
pub fn markdown_report(groups: &[(String, Vec<MetricsRecord>)]) -> String {
    groups
        .iter()
        .filter(|(_, recs)| !recs.is_empty())
        .map(|(title, recs)| markdown_table(title, recs))
        .collect::<Vec<_>>()
        .join("\n")
}
