//! Seeded multi-trial experiments, result tables and audit runs.
//!
//! Every trial derives its own seed from `(base_seed, n, m, trial)`, so a
//! trial's numbers do not depend on which other trials run or on how work is
//! spread across threads. Only wall-clock columns vary between runs, and
//! `deterministic` zeroes them.

mod config;
mod ratio;
mod table;

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

pub use config::SpecOverrides;
pub use ratio::MOverN;
pub use table::{median, Aggregate, ResultRow, ResultTable, RESULTS_CSV_HEADER};

use crate::error::{Error, Result};
use crate::measurement::{forward_intensities, IntensityVector, MeasurementEnsemble};
use crate::oracle::{run_audits, AuditLevel, AuditOutcome};
use crate::rng::{complex_normal_vec, derive_seed, stream};
use crate::solvers::{solve, spectral_init, IterateTrace, SolverConfig, SolverKind};
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub n: usize,
    pub m_over_n: Vec<MOverN>,
    pub trials: usize,
    pub base_seed: u64,
    pub solvers: Vec<SolverKind>,
    pub configs: BTreeMap<SolverKind, SolverConfig>,
    /// Relative error counted as success.
    pub threshold: f64,
    pub iter_cap: usize,
    pub out: Option<PathBuf>,
    /// Worker threads; `0` lets the pool decide.
    pub threads: usize,
    /// Write zero for every wall-clock column.
    pub deterministic: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let solvers = vec![SolverKind::Twrgd];
        Self {
            n: 128,
            m_over_n: vec![MOverN::integer(6).expect("nonzero")],
            trials: 50,
            base_seed: 0,
            configs: solvers
                .iter()
                .map(|&k| (k, SolverConfig::for_solver(k)))
                .collect(),
            solvers,
            threshold: 1e-3,
            iter_cap: 500,
            out: None,
            threads: 0,
            deterministic: false,
        }
    }
}

impl ExperimentSpec {
    /// Default spec for `solvers`, each with its default config.
    pub fn with_solvers(solvers: &[SolverKind]) -> Self {
        Self {
            solvers: solvers.to_vec(),
            configs: solvers
                .iter()
                .map(|&k| (k, SolverConfig::for_solver(k)))
                .collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::invalid("threshold must be positive"));
        }
        if self.solvers.is_empty() {
            return Err(Error::invalid("no solver selected"));
        }
        for kind in &self.solvers {
            self.configs
                .get(kind)
                .ok_or_else(|| Error::invalid(format!("no config for solver {kind}")))?
                .validate()?;
        }
        Ok(())
    }

    fn config(&self, kind: SolverKind) -> SolverConfig {
        let mut cfg = self.configs[&kind];
        cfg.max_iters = self.iter_cap;
        cfg
    }
}

/// One seeded problem instance.
pub struct Instance {
    pub seed: u64,
    pub x: Vec<C64>,
    pub ensemble: MeasurementEnsemble,
    pub y: IntensityVector,
    pub init_seed: u64,
}

/// Seed of trial `trial` at dimensions `(n, m)`.
pub fn trial_seed(base_seed: u64, n: usize, m: usize, trial: usize) -> u64 {
    derive_seed(base_seed, &[n as u64, m as u64, trial as u64])
}

impl Instance {
    pub fn generate(n: usize, m: usize, seed: u64) -> Result<Self> {
        let x = complex_normal_vec(&mut stream(derive_seed(seed, &[0])), n);
        let ensemble = MeasurementEnsemble::sample(n, m, derive_seed(seed, &[1]))?;
        let y = forward_intensities(&ensemble, &x)?;
        Ok(Self {
            seed,
            x,
            ensemble,
            y,
            init_seed: derive_seed(seed, &[2]),
        })
    }

    pub fn spectral_init(&self, power_iters: usize) -> Result<Vec<C64>> {
        spectral_init(&self.ensemble, &self.y, power_iters, self.init_seed)
    }
}

/// A finished solver run together with its result row.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub row: ResultRow,
    pub trace: IterateTrace,
}

fn row_from_trace(
    spec: &ExperimentSpec,
    kind: SolverKind,
    ratio: MOverN,
    trial: usize,
    seed: u64,
    trace: &IterateTrace,
) -> ResultRow {
    let (threshold, cap) = (spec.threshold, spec.iter_cap);
    let hit = trace
        .records
        .iter()
        .find(|r| r.rel_mse <= threshold && r.iter <= cap);
    let (success, iters, seconds) = match hit {
        Some(r) => (true, r.iter, r.elapsed_s),
        None => (
            false,
            trace.iters,
            trace.records.last().map_or(0.0, |r| r.elapsed_s),
        ),
    };
    ResultRow {
        solver: kind,
        m_over_n: ratio,
        trial,
        seed,
        success,
        iters,
        final_mse: trace.final_rel_mse(),
        seconds: if spec.deterministic { 0.0 } else { seconds },
        nu_hat: trace.nu_hat,
    }
}

fn run_one(spec: &ExperimentSpec, ratio: MOverN, trial: usize) -> Result<Vec<TrialRun>> {
    let m = ratio.measurements(spec.n);
    let seed = trial_seed(spec.base_seed, spec.n, m, trial);
    let inst = Instance::generate(spec.n, m, seed)?;
    // all solvers start from the same spectral estimate
    let mut inits: BTreeMap<usize, Vec<C64>> = BTreeMap::new();
    let mut out = Vec::with_capacity(spec.solvers.len());
    for &kind in &spec.solvers {
        let cfg = spec.config(kind);
        let z0 = match inits.entry(cfg.power_iters) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(inst.spectral_init(cfg.power_iters)?),
        };
        let mut trace = solve(kind, &inst.ensemble, &inst.y, Some(&inst.x), z0, &cfg)?;
        if spec.deterministic {
            for r in &mut trace.records {
                r.elapsed_s = 0.0;
            }
        }
        let row = row_from_trace(spec, kind, ratio, trial, seed, &trace);
        out.push(TrialRun { row, trace });
    }
    Ok(out)
}

/// Runs every `(m/n, trial)` pair, each with all solvers, on a worker pool.
/// Output order is fixed by `(solver, m/n, trial)` regardless of scheduling.
pub fn run_trials(spec: &ExperimentSpec) -> Result<Vec<TrialRun>> {
    spec.validate()?;
    if spec.m_over_n.is_empty() {
        return Err(Error::invalid("m_over_n list is empty"));
    }
    let jobs: Vec<(MOverN, usize)> = spec
        .m_over_n
        .iter()
        .flat_map(|&r| (0..spec.trials).map(move |t| (r, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let nested: Vec<Result<Vec<TrialRun>>> =
        pool.install(|| jobs.par_iter().map(|&(r, t)| run_one(spec, r, t)).collect());
    let mut runs = Vec::new();
    for batch in nested {
        runs.extend(batch?);
    }
    runs.sort_by_key(|run| (run.row.solver, run.row.m_over_n, run.row.trial));
    Ok(runs)
}

/// Mean and standard deviation of `log10(rel_mse)` per iteration, with
/// shorter traces padded by their last value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCurve {
    pub solver: SolverKind,
    pub m_over_n: MOverN,
    pub mean_log10: Vec<f64>,
    pub std_log10: Vec<f64>,
}

impl ConvergenceCurve {
    fn from_traces(solver: SolverKind, ratio: MOverN, traces: &[&IterateTrace]) -> Self {
        let len = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
        let series: Vec<Vec<f64>> = traces
            .iter()
            .map(|t| {
                t.records
                    .iter()
                    .map(|r| r.rel_mse.max(f64::MIN_POSITIVE).log10())
                    .collect()
            })
            .collect();
        let k = series.len() as f64;
        let mut mean_log10 = Vec::with_capacity(len);
        let mut std_log10 = Vec::with_capacity(len);
        for i in 0..len {
            let vals: Vec<f64> = series
                .iter()
                .filter(|s| !s.is_empty())
                .map(|s| s[i.min(s.len() - 1)])
                .collect();
            let mean = vals.iter().sum::<f64>() / k;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
            mean_log10.push(mean);
            std_log10.push(var.sqrt());
        }
        Self {
            solver,
            m_over_n: ratio,
            mean_log10,
            std_log10,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,mean_log10_mse,std_log10_mse")?;
        for (i, (m, s)) in self.mean_log10.iter().zip(&self.std_log10).enumerate() {
            writeln!(out, "{i},{m:.6},{s:.6}")?;
        }
        Ok(())
    }
}

pub struct ConvergenceOutput {
    pub table: ResultTable,
    pub runs: Vec<TrialRun>,
    pub curves: Vec<ConvergenceCurve>,
}

/// Per-trial traces plus log-MSE curves. Writes `traces/`, the curves,
/// `results.csv` and `summary.json` when `spec.out` is set.
pub fn run_convergence(spec: &ExperimentSpec) -> Result<ConvergenceOutput> {
    let runs = run_trials(spec)?;
    let table = ResultTable::from_rows(
        runs.iter().map(|r| r.row.clone()).collect(),
        spec.threshold,
        spec.iter_cap,
    );
    let mut curves = Vec::new();
    for &kind in &spec.solvers {
        for &ratio in &spec.m_over_n {
            let traces: Vec<&IterateTrace> = runs
                .iter()
                .filter(|r| r.row.solver == kind && r.row.m_over_n == ratio)
                .map(|r| &r.trace)
                .collect();
            if !traces.is_empty() {
                curves.push(ConvergenceCurve::from_traces(kind, ratio, &traces));
            }
        }
    }
    if let Some(dir) = &spec.out {
        let trace_dir = dir.join("traces");
        create_dir(&trace_dir)?;
        for run in &runs {
            let name = format!(
                "{}_m{}_t{}.csv",
                run.row.solver,
                run.row.m_over_n.file_label(),
                run.row.trial
            );
            write_file(&trace_dir.join(name), |w| run.trace.write_csv(w))?;
        }
        for c in &curves {
            let name = format!("convergence_{}_m{}.csv", c.solver, c.m_over_n.file_label());
            write_file(&dir.join(name), |w| c.write_csv(w))?;
        }
        write_table(spec, &table, "convergence")?;
    }
    Ok(ConvergenceOutput {
        table,
        runs,
        curves,
    })
}

fn table_only(spec: &ExperimentSpec, kind: &str) -> Result<ResultTable> {
    let runs = run_trials(spec)?;
    let table = ResultTable::from_rows(
        runs.into_iter().map(|r| r.row).collect(),
        spec.threshold,
        spec.iter_cap,
    );
    write_table(spec, &table, kind)?;
    Ok(table)
}

/// Median iterations and time to the threshold over an `m/n` grid.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<ResultTable> {
    table_only(spec, "sweep")
}

/// Empirical success probability per solver and `m/n`.
pub fn run_success_rate(spec: &ExperimentSpec) -> Result<ResultTable> {
    table_only(spec, "success_rate")
}

#[derive(Debug, Clone, Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    n: usize,
    trials: usize,
    base_seed: u64,
    threshold: f64,
    iter_cap: usize,
    configs: &'a BTreeMap<SolverKind, SolverConfig>,
    aggregates: &'a [Aggregate],
}

fn write_table(spec: &ExperimentSpec, table: &ResultTable, kind: &str) -> Result<()> {
    let Some(dir) = &spec.out else {
        return Ok(());
    };
    create_dir(dir)?;
    write_file(&dir.join("results.csv"), |w| table.write_csv(w))?;
    write_file(&dir.join("aggregates.csv"), |w| {
        table.write_aggregates_csv(w)
    })?;
    let summary = Summary {
        experiment: kind,
        n: spec.n,
        trials: spec.trials,
        base_seed: spec.base_seed,
        threshold: spec.threshold,
        iter_cap: spec.iter_cap,
        configs: &spec.configs,
        aggregates: &table.aggregates,
    };
    write_file(&dir.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub level: AuditLevel,
    pub seed: u64,
    pub outcomes: Vec<AuditOutcome>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }
}

/// Runs the oracle audits; writes `audit.json` under `out` when given.
pub fn run_validate(level: AuditLevel, seed: u64, out: Option<&Path>) -> Result<AuditReport> {
    let report = AuditReport {
        level,
        seed,
        outcomes: run_audits(level, seed),
    };
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(&dir.join("audit.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, &report).map_err(std::io::Error::other)?;
            writeln!(w)
        })?;
    }
    Ok(report)
}

/// Solves the first instance of `spec` with its first solver.
pub fn run_single(spec: &ExperimentSpec) -> Result<(Instance, IterateTrace)> {
    spec.validate()?;
    let ratio = *spec
        .m_over_n
        .first()
        .ok_or_else(|| Error::invalid("m_over_n list is empty"))?;
    let kind = spec.solvers[0];
    let m = ratio.measurements(spec.n);
    let inst = Instance::generate(spec.n, m, trial_seed(spec.base_seed, spec.n, m, 0))?;
    let cfg = spec.config(kind);
    let z0 = inst.spectral_init(cfg.power_iters)?;
    let trace = solve(kind, &inst.ensemble, &inst.y, Some(&inst.x), &z0, &cfg)?;
    Ok((inst, trace))
}
