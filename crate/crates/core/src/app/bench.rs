use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{parse_config, run_case};
use crate::error::{Error, Result};

/// One row of `bench.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub label: String,
    pub case: String,
    pub method: String,
    pub eps: f64,
    pub order: usize,
    pub iterations: usize,
    pub fine_sweeps: usize,
    pub final_residual: f64,
    pub avg_inner: f64,
    pub max_inner: usize,
    pub fallbacks: usize,
    pub elapsed_seconds: f64,
    pub converged: bool,
}

/// Expands values written as `a|b|c` into the cartesian product of configs.
pub fn expand_matrix(text: &str) -> Result<Vec<String>> {
    let lines: Vec<Vec<String>> = text
        .lines()
        .map(|l| {
            let body = l.split('#').next().unwrap_or("");
            body.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect()
        })
        .collect();
    let mut slots = Vec::new();
    for (li, tokens) in lines.iter().enumerate() {
        for (ti, tok) in tokens.iter().enumerate() {
            if let Some((key, value)) = tok.split_once('=') {
                if value.contains('|') {
                    let alts: Vec<String> = value.split('|').map(|v| v.trim().to_string()).collect();
                    if alts.iter().any(|a| a.is_empty()) {
                        return Err(Error::Config {
                            line: li + 1,
                            message: format!("empty alternative in '{tok}'"),
                        });
                    }
                    slots.push((li, ti, key.trim().to_string(), alts));
                }
            }
        }
    }
    let mut out = Vec::new();
    let total: usize = slots.iter().map(|s| s.3.len()).product();
    for mut idx in 0..total {
        let mut cur = lines.clone();
        for (li, ti, key, alts) in &slots {
            let pick = &alts[idx % alts.len()];
            idx /= alts.len();
            cur[*li][*ti] = format!("{key}={pick}");
        }
        out.push(cur.iter().map(|l| l.join(", ")).collect::<Vec<_>>().join("\n"));
    }
    Ok(out)
}

/// Runs every configuration of a matrix, each into its own subdirectory of
/// `out`, and writes `out/bench.csv`.
pub fn run_bench(matrix: &str, out: &Path) -> Result<Vec<BenchRow>> {
    let configs = expand_matrix(matrix)?
        .iter()
        .map(|t| parse_config(t))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    let mut rows = Vec::with_capacity(configs.len());
    for mut c in configs {
        let label = c.label();
        c.output = out.join(&label);
        let r = run_case(&c)?;
        let n = r.report.avg_inner.len().max(1) as f64;
        rows.push(BenchRow {
            label,
            case: c.case.to_string(),
            method: c.method.to_string(),
            eps: c.knudsen,
            order: c.order.number(),
            iterations: r.summary.iterations,
            fine_sweeps: r.summary.fine_sweeps,
            final_residual: r.summary.final_residual.unwrap_or(f64::NAN),
            avg_inner: r.report.avg_inner.iter().sum::<f64>() / n,
            max_inner: r.report.max_inner.iter().copied().max().unwrap_or(0),
            fallbacks: r.summary.fallbacks,
            elapsed_seconds: r.summary.elapsed_seconds,
            converged: r.summary.converged,
        });
    }
    let mut w = csv::Writer::from_path(out.join("bench.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_expands_to_product() {
        let v = expand_matrix("case=heat1d1v, eps=1|0.1\nmethod=sgs-fp|sgs-pfp|si # all").unwrap();
        assert_eq!(v.len(), 6);
        assert!(v.contains(&"case=heat1d1v, eps=0.1\nmethod=si".to_string()));
        assert_eq!(expand_matrix("case=heat1d1v").unwrap().len(), 1);
        assert!(expand_matrix("case=heat1d1v, eps=1|").is_err());
    }

    #[test]
    fn bench_writes_one_row_per_config() {
        let dir = tempfile::tempdir().unwrap();
        let rows = run_bench("case=heat1d1v, n=8, k=12, eps=1|0.1, method=sgs-pfp|si", dir.path()).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.converged));
        let text = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(dir.path().join(&rows[0].label).join("summary.json").exists());
    }
}
