use std::io::Write;

use serde::Serialize;

use super::MOverN;
use crate::solvers::SolverKind;

pub const RESULTS_CSV_HEADER: &str =
    "solver,m_over_n,trial,seed,success,iters,final_mse,seconds,nu_hat";

/// Outcome of one solver on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub solver: SolverKind,
    pub m_over_n: MOverN,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    /// Iterations to reach the threshold on success, else iterations run.
    pub iters: usize,
    pub final_mse: f64,
    /// Wall-clock seconds to the threshold on success, else for the whole run.
    pub seconds: f64,
    pub nu_hat: Option<f64>,
}

impl ResultRow {
    fn key(&self) -> (SolverKind, MOverN, usize) {
        (self.solver, self.m_over_n, self.trial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub solver: SolverKind,
    pub m_over_n: MOverN,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Failures count as `cap + 1` iterations.
    pub median_iters: f64,
    pub median_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub threshold: f64,
    pub iter_cap: usize,
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Median, averaging the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

impl ResultTable {
    /// Sorts rows by `(solver, m/n, trial)` and recomputes the aggregates.
    pub fn from_rows(mut rows: Vec<ResultRow>, threshold: f64, iter_cap: usize) -> Self {
        rows.sort_by_key(|r| r.key());
        let mut aggregates = Vec::new();
        let mut start = 0;
        while start < rows.len() {
            let (solver, ratio) = (rows[start].solver, rows[start].m_over_n);
            let end = start
                + rows[start..]
                    .iter()
                    .take_while(|r| r.solver == solver && r.m_over_n == ratio)
                    .count();
            let group = &rows[start..end];
            let successes = group.iter().filter(|r| r.success).count();
            let iters: Vec<f64> = group
                .iter()
                .map(|r| {
                    if r.success {
                        r.iters as f64
                    } else {
                        (iter_cap + 1) as f64
                    }
                })
                .collect();
            let seconds: Vec<f64> = group.iter().map(|r| r.seconds).collect();
            aggregates.push(Aggregate {
                solver,
                m_over_n: ratio,
                trials: group.len(),
                successes,
                success_rate: successes as f64 / group.len() as f64,
                median_iters: median(&iters),
                median_seconds: median(&seconds),
            });
            start = end;
        }
        Self {
            threshold,
            iter_cap,
            rows,
            aggregates,
        }
    }

    pub fn aggregate(&self, solver: SolverKind, ratio: MOverN) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.solver == solver && a.m_over_n == ratio)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{RESULTS_CSV_HEADER}")?;
        for r in &self.rows {
            let nu = r.nu_hat.map_or_else(String::new, |v| format!("{v:.6}"));
            writeln!(
                out,
                "{},{},{},{},{},{},{:e},{:.6},{}",
                r.solver,
                r.m_over_n,
                r.trial,
                r.seed,
                r.success,
                r.iters,
                r.final_mse,
                r.seconds,
                nu
            )?;
        }
        Ok(())
    }

    pub fn write_aggregates_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "solver,m_over_n,trials,successes,success_rate,median_iters,median_seconds"
        )?;
        for a in &self.aggregates {
            writeln!(
                out,
                "{},{},{},{},{},{},{:.6}",
                a.solver,
                a.m_over_n,
                a.trials,
                a.successes,
                a.success_rate,
                a.median_iters,
                a.median_seconds
            )?;
        }
        Ok(())
    }
}
