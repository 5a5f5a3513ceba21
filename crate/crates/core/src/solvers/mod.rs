//! Spectral initialization and the three gradient solvers.
//!
//! All solvers share one iteration protocol: at iteration `t` the current
//! estimate is evaluated (relative distance to the truth when it is known,
//! relative residual otherwise), a record is appended to the trace, and the
//! run stops as soon as the error is at most `mse_tol` or `max_iters` updates
//! have been made.

mod gradient;
mod init;
mod rgd;
mod wf;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gradient::{riemannian_gradient, step_size_exact, GradientParts, LiftAdjointOperator};
pub use init::spectral_init;
pub use rgd::{rgd_solve, rgd_step, trgd_solve, twrgd_solve};
pub use wf::{twf_solve, wf_manifold_step, wf_vector_step};

use crate::cvec::{dot, norm_sqr};
use crate::error::{Error, Result};
use crate::manifold::MetricKind;
use crate::measurement::{IntensityVector, MeasurementEnsemble, Truncation};
use crate::C64;

/// Errors at or below this level are treated as round-off when estimating
/// contraction factors.
pub const ERROR_FLOOR: f64 = 1e-13;
/// Late-stage window used for the contraction estimate.
pub const LATE_STAGE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Twrgd,
    Trgd,
    Twf,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Twrgd, SolverKind::Trgd, SolverKind::Twf];

    pub fn metric(self) -> MetricKind {
        match self {
            SolverKind::Twrgd => MetricKind::Weighted,
            SolverKind::Trgd => MetricKind::Canonical,
            SolverKind::Twf => MetricKind::WfPseudo,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Twrgd => "twrgd",
            SolverKind::Trgd => "trgd",
            SolverKind::Twf => "twf",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "twrgd" => Ok(SolverKind::Twrgd),
            "trgd" => Ok(SolverKind::Trgd),
            "twf" => Ok(SolverKind::Twf),
            other => Err(Error::invalid(format!("unknown solver '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicy {
    ExactLineSearch,
    Fixed(f64),
}

impl fmt::Display for StepPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepPolicy::ExactLineSearch => f.write_str("exact"),
            StepPolicy::Fixed(a) => write!(f, "fixed:{a}"),
        }
    }
}

impl FromStr for StepPolicy {
    type Err = Error;

    /// `exact` or `fixed:<alpha>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("exact") {
            return Ok(StepPolicy::ExactLineSearch);
        }
        let alpha = s
            .strip_prefix("fixed:")
            .and_then(|a| a.trim().parse::<f64>().ok())
            .ok_or_else(|| {
                Error::invalid(format!(
                    "step policy '{s}' is not 'exact' or 'fixed:<alpha>'"
                ))
            })?;
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid("fixed step size must be positive"));
        }
        Ok(StepPolicy::Fixed(alpha))
    }
}

/// Default fixed step of the Wirtinger-flow update.
pub const WF_DEFAULT_STEP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub truncation: Truncation,
    pub metric: MetricKind,
    pub truncated: bool,
    pub step: StepPolicy,
    /// Update budget; `0` only evaluates the starting point.
    pub max_iters: usize,
    pub mse_tol: f64,
    pub power_iters: usize,
}

impl SolverConfig {
    /// Default configuration for `kind`: truncated exact-line-search RGD for
    /// the manifold solvers, untruncated fixed-step Wirtinger flow for TWF.
    pub fn for_solver(kind: SolverKind) -> Self {
        let (truncated, step) = match kind {
            SolverKind::Twrgd | SolverKind::Trgd => (true, StepPolicy::ExactLineSearch),
            SolverKind::Twf => (false, StepPolicy::Fixed(WF_DEFAULT_STEP)),
        };
        Self {
            truncation: Truncation::default(),
            metric: kind.metric(),
            truncated,
            step,
            max_iters: 500,
            mse_tol: 1e-3,
            power_iters: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.truncation.validate()?;
        if !(self.mse_tol > 0.0) {
            return Err(Error::invalid("mse_tol must be positive"));
        }
        if let StepPolicy::Fixed(a) = self.step {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::invalid("fixed step size must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    /// `dist(z_t, x) / ||x||`; NaN without ground truth.
    pub rel_mse: f64,
    /// Step taken from this iterate; NaN on the final record.
    pub step_size: f64,
    /// Fraction of measurements kept by the truncation mask; NaN when no
    /// update was made from this iterate.
    pub kept_fraction: f64,
    pub elapsed_s: f64,
    /// `||y - A(z z^*)||_2 / ||y||_2`.
    pub rel_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub records: Vec<IterRecord>,
    pub converged: bool,
    /// Number of updates performed.
    pub iters: usize,
    pub estimate: Vec<C64>,
    /// Geometric-mean ratio of successive late-stage errors.
    pub nu_hat: Option<f64>,
    /// Why the run stopped early, when it did not converge or exhaust its
    /// budget (degenerate retraction, vanishing gradient, ...).
    pub failure: Option<String>,
}

pub const TRACE_CSV_HEADER: &str = "iter,rel_mse,step_size,kept_fraction,elapsed_s";

impl IterateTrace {
    pub fn final_rel_mse(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.rel_mse)
    }

    pub fn rel_mse_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rel_mse).collect()
    }

    /// `e_{t+1} / e_t` over the whole run.
    pub fn error_ratios(&self) -> Vec<f64> {
        self.records
            .windows(2)
            .map(|w| w[1].rel_mse / w[0].rel_mse)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:e},{:e},{},{:.6}",
                r.iter, r.rel_mse, r.step_size, r.kept_fraction, r.elapsed_s
            )?;
        }
        Ok(())
    }
}

/// Geometric-mean contraction over the errors lying in
/// `(ERROR_FLOOR, LATE_STAGE]`, counted from the first error that enters the
/// window. Needs at least two such errors.
pub fn contraction_estimate(errors: &[f64]) -> Option<f64> {
    let start = errors.iter().position(|e| *e <= LATE_STAGE)?;
    let window: Vec<f64> = errors[start..]
        .iter()
        .copied()
        .take_while(|e| *e > ERROR_FLOOR && e.is_finite())
        .collect();
    if window.len() < 2 {
        return None;
    }
    let first = window[0];
    let last = *window.last().unwrap();
    Some((last / first).powf(1.0 / (window.len() - 1) as f64))
}

/// `min_phi ||e^{i phi} z - x||`.
pub fn dist_phase(z: &[C64], x: &[C64]) -> Result<f64> {
    if z.len() != x.len() {
        return Err(Error::invalid(format!(
            "vectors have different lengths ({} vs {})",
            z.len(),
            x.len()
        )));
    }
    // align first: the expanded form cancels catastrophically near the optimum
    let ip = dot(z, x);
    let phase = if ip.norm() > 0.0 {
        ip / ip.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    Ok(z.iter()
        .zip(x)
        .map(|(zi, xi)| (zi * phase - xi).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// `dist_phase(z, x) / ||x||`.
pub fn relative_error(z: &[C64], x: &[C64]) -> Result<f64> {
    Ok(dist_phase(z, x)? / norm_sqr(x).sqrt())
}

/// Runs the solver selected by `kind` from `z0`.
pub fn solve(
    kind: SolverKind,
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    x_true: Option<&[C64]>,
    z0: &[C64],
    config: &SolverConfig,
) -> Result<IterateTrace> {
    match kind {
        SolverKind::Twrgd => twrgd_solve(ens, y, x_true, z0, config),
        SolverKind::Trgd => trgd_solve(ens, y, x_true, z0, config),
        SolverKind::Twf => twf_solve(ens, y, x_true, z0, config),
    }
}

pub(crate) fn check_problem(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    x_true: Option<&[C64]>,
    z0: &[C64],
) -> Result<()> {
    if y.len() != ens.m() {
        return Err(Error::invalid("intensity length does not match ensemble"));
    }
    if z0.len() != ens.n() {
        return Err(Error::invalid("starting point has the wrong length"));
    }
    if let Some(x) = x_true {
        if x.len() != ens.n() || norm_sqr(x) == 0.0 {
            return Err(Error::invalid("ground truth must be a nonzero n-vector"));
        }
    }
    Ok(())
}

/// Error bookkeeping shared by the solvers.
pub(crate) struct Progress<'a> {
    y: &'a IntensityVector,
    y_norm: f64,
    x_true: Option<&'a [C64]>,
    tol: f64,
    start: std::time::Instant,
    pub trace: IterateTrace,
}

pub(crate) struct Evaluation {
    pub rel_mse: f64,
    pub rel_residual: f64,
    pub done: bool,
}

impl<'a> Progress<'a> {
    pub fn new(y: &'a IntensityVector, x_true: Option<&'a [C64]>, tol: f64) -> Self {
        Self {
            y,
            y_norm: y.values().iter().map(|v| v * v).sum::<f64>().sqrt(),
            x_true,
            tol,
            start: std::time::Instant::now(),
            trace: IterateTrace {
                records: Vec::new(),
                converged: false,
                iters: 0,
                estimate: Vec::new(),
                nu_hat: None,
                failure: None,
            },
        }
    }

    /// Evaluates the iterate `z` given its projections `a_k^* z`.
    pub fn evaluate(&self, z: &[C64], proj: &[C64]) -> Evaluation {
        let res: f64 = self
            .y
            .values()
            .iter()
            .zip(proj)
            .map(|(yk, p)| (yk - p.norm_sqr()).powi(2))
            .sum::<f64>()
            .sqrt();
        let rel_residual = if self.y_norm > 0.0 {
            res / self.y_norm
        } else {
            res
        };
        let rel_mse = match self.x_true {
            Some(x) => relative_error(z, x).expect("lengths checked"),
            None => f64::NAN,
        };
        let err = if self.x_true.is_some() {
            rel_mse
        } else {
            rel_residual
        };
        Evaluation {
            rel_mse,
            rel_residual,
            done: err <= self.tol,
        }
    }

    pub fn record(&mut self, iter: usize, eval: &Evaluation, step_size: f64, kept: f64) {
        self.trace.records.push(IterRecord {
            iter,
            rel_mse: eval.rel_mse,
            step_size,
            kept_fraction: kept,
            elapsed_s: self.start.elapsed().as_secs_f64(),
            rel_residual: eval.rel_residual,
        });
    }

    pub fn finish(mut self, estimate: Vec<C64>, iters: usize, converged: bool) -> IterateTrace {
        self.trace.estimate = estimate;
        self.trace.iters = iters;
        self.trace.converged = converged;
        if self.x_true.is_some() {
            self.trace.nu_hat = contraction_estimate(&self.trace.rel_mse_series());
        }
        self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal_vec, stream};

    #[test]
    fn dist_phase_examples() {
        let x = complex_normal_vec(&mut stream(1), 6);
        assert!(dist_phase(&x, &x).unwrap() < 1e-7);
        let ix: Vec<C64> = x.iter().map(|c| c * C64::new(0.0, 1.0)).collect();
        assert!(dist_phase(&ix, &x).unwrap() < 1e-7);
        let x2: Vec<C64> = x.iter().map(|c| c * 2.0).collect();
        let xn = norm_sqr(&x).sqrt();
        assert!((dist_phase(&x2, &x).unwrap() - xn).abs() < 1e-12 * xn);
        assert!(dist_phase(&x[..3], &x).is_err());
    }

    #[test]
    fn dist_phase_matches_phase_scan() {
        let x = complex_normal_vec(&mut stream(2), 5);
        let z = complex_normal_vec(&mut stream(3), 5);
        let scan = (0..20_000)
            .map(|i| {
                let phi = std::f64::consts::TAU * i as f64 / 20_000.0;
                let e = C64::from_polar(1.0, phi);
                z.iter()
                    .zip(&x)
                    .map(|(a, b)| (a - e * b).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        let d = dist_phase(&z, &x).unwrap();
        assert!(d <= scan + 1e-12 && scan - d < 1e-6);
    }

    #[test]
    fn step_policy_parsing() {
        assert_eq!(
            "exact".parse::<StepPolicy>().unwrap(),
            StepPolicy::ExactLineSearch
        );
        assert_eq!(
            "fixed:0.2".parse::<StepPolicy>().unwrap(),
            StepPolicy::Fixed(0.2)
        );
        assert!("fixed:-1".parse::<StepPolicy>().is_err());
        assert!("slow".parse::<StepPolicy>().is_err());
        assert_eq!(StepPolicy::Fixed(0.25).to_string(), "fixed:0.25");
    }

    #[test]
    fn contraction_estimate_on_geometric_sequence() {
        let errs: Vec<f64> = (0..12).map(|t| 0.5 * 0.3f64.powi(t)).collect();
        let nu = contraction_estimate(&errs).unwrap();
        assert!((nu - 0.3).abs() < 1e-12);
        assert!(contraction_estimate(&[0.5, 0.4]).is_none());
    }
}
