use crate::error::{Error, Result};
use crate::manifold::{retract_rank1, MetricKind, Rank1Point};
use crate::measurement::{IntensityVector, MeasurementEnsemble};
use crate::C64;

use super::gradient::{gradient_from_projections, step_size_from_projections};
use super::{check_problem, IterateTrace, Progress, SolverConfig, StepPolicy};

/// Truncated Riemannian gradient descent under the weighted metric.
pub fn twrgd_solve(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    x_true: Option<&[C64]>,
    z0: &[C64],
    config: &SolverConfig,
) -> Result<IterateTrace> {
    require_metric(config, MetricKind::Weighted)?;
    rgd_solve(ens, y, x_true, z0, config)
}

/// Truncated Riemannian gradient descent under the canonical metric.
pub fn trgd_solve(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    x_true: Option<&[C64]>,
    z0: &[C64],
    config: &SolverConfig,
) -> Result<IterateTrace> {
    require_metric(config, MetricKind::Canonical)?;
    rgd_solve(ens, y, x_true, z0, config)
}

fn require_metric(config: &SolverConfig, kind: MetricKind) -> Result<()> {
    if config.metric != kind {
        return Err(Error::invalid(format!(
            "solver needs the {} metric, config has {}",
            kind.name(),
            config.metric.name()
        )));
    }
    Ok(())
}

/// Riemannian gradient descent on rank-1 PSD matrices under `config.metric`.
///
/// Each update moves along `D = T(G)` (the metric's gradient operator applied
/// to the masked negative Euclidean gradient) and retracts by best rank-1
/// approximation, which reduces to a `2 x 2` eigenproblem in the span of
/// `z` and `D z`.
pub fn rgd_solve(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    x_true: Option<&[C64]>,
    z0: &[C64],
    config: &SolverConfig,
) -> Result<IterateTrace> {
    config.validate()?;
    check_problem(ens, y, x_true, z0)?;
    let mut point = Rank1Point::new(z0.to_vec())?;
    let mut progress = Progress::new(y, x_true, config.mse_tol);

    let mut t = 0;
    loop {
        let proj = ens.project_unchecked(point.factor());
        let eval = progress.evaluate(point.factor(), &proj);
        if eval.done || t == config.max_iters {
            progress.record(t, &eval, f64::NAN, f64::NAN);
            return Ok(progress.finish(point.into_factor(), t, eval.done));
        }
        match advance(ens, y, &point, proj, config) {
            Ok(step) => {
                progress.record(t, &eval, step.alpha, step.kept);
                point = step.next;
                t += 1;
            }
            Err(e) => {
                progress.record(t, &eval, f64::NAN, f64::NAN);
                progress.trace.failure = Some(e.to_string());
                return Ok(progress.finish(point.into_factor(), t, false));
            }
        }
    }
}

/// One update from `point` under `config`.
pub fn rgd_step(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    point: &Rank1Point,
    config: &SolverConfig,
) -> Result<Rank1Point> {
    config.validate()?;
    check_problem(ens, y, None, point.factor())?;
    let proj = ens.project_unchecked(point.factor());
    Ok(advance(ens, y, point, proj, config)?.next)
}

struct Advance {
    next: Rank1Point,
    alpha: f64,
    kept: f64,
}

fn advance(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    point: &Rank1Point,
    proj: Vec<C64>,
    config: &SolverConfig,
) -> Result<Advance> {
    let parts = gradient_from_projections(ens, y, point.factor(), proj, config)?;
    let direction = parts.tangent(point, config.metric);
    if direction.is_zero() {
        return Err(Error::numeric("gradient vanished away from the target"));
    }
    let alpha = match config.step {
        StepPolicy::Fixed(a) => a,
        StepPolicy::ExactLineSearch => {
            let pw = ens.project_unchecked(direction.companion());
            step_size_from_projections(
                ens.m(),
                direction.norm_sqr(config.metric),
                &parts.projections,
                &pw,
                &parts.mask,
            )?
        }
    };
    Ok(Advance {
        next: retract_rank1(point, &direction, alpha)?,
        alpha,
        kept: parts.mask.kept_fraction(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::forward_intensities;
    use crate::rng::{complex_normal_vec, stream};
    use crate::solvers::{spectral_init, SolverKind};

    fn problem(n: usize, m: usize, seed: u64) -> (MeasurementEnsemble, Vec<C64>, IntensityVector) {
        let ens = MeasurementEnsemble::sample(n, m, seed).unwrap();
        let x = complex_normal_vec(&mut stream(seed ^ 0xabc), n);
        let y = forward_intensities(&ens, &x).unwrap();
        (ens, x, y)
    }

    #[test]
    fn starts_at_truth_up_to_phase() {
        let (ens, x, y) = problem(6, 48, 1);
        let z0: Vec<C64> = x.iter().map(|c| c * C64::from_polar(1.0, 0.7)).collect();
        for kind in [SolverKind::Twrgd, SolverKind::Trgd] {
            let trace =
                rgd_solve(&ens, &y, Some(&x), &z0, &SolverConfig::for_solver(kind)).unwrap();
            assert!(trace.converged);
            assert_eq!(trace.iters, 0);
            assert!(trace.final_rel_mse() < 1e-7);
        }
    }

    #[test]
    fn metric_mismatch_is_rejected() {
        let (ens, x, y) = problem(4, 32, 2);
        let cfg = SolverConfig::for_solver(SolverKind::Trgd);
        assert!(matches!(
            twrgd_solve(&ens, &y, Some(&x), &x, &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn twrgd_recovers_small_instance() {
        let (ens, x, y) = problem(16, 16 * 8, 3);
        let z0 = spectral_init(&ens, &y, 100, 4).unwrap();
        let mut cfg = SolverConfig::for_solver(SolverKind::Twrgd);
        cfg.mse_tol = 1e-10;
        let trace = twrgd_solve(&ens, &y, Some(&x), &z0, &cfg).unwrap();
        assert!(trace.converged, "final {:e}", trace.final_rel_mse());
        let times: Vec<f64> = trace.records.iter().map(|r| r.elapsed_s).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn blind_mode_stops_on_residual() {
        let (ens, x, y) = problem(8, 80, 5);
        let z0 = spectral_init(&ens, &y, 100, 6).unwrap();
        let mut cfg = SolverConfig::for_solver(SolverKind::Twrgd);
        cfg.mse_tol = 1e-8;
        let trace = twrgd_solve(&ens, &y, None, &z0, &cfg).unwrap();
        assert!(trace.converged);
        assert!(trace.records.iter().all(|r| r.rel_mse.is_nan()));
        assert!(trace.records.last().unwrap().rel_residual <= 1e-8);
        assert!(crate::solvers::relative_error(&trace.estimate, &x).unwrap() < 1e-6);
    }

    #[test]
    fn zero_budget_only_evaluates_start() {
        let (ens, x, y) = problem(8, 48, 7);
        let z0 = complex_normal_vec(&mut stream(1), 8);
        let mut cfg = SolverConfig::for_solver(SolverKind::Twrgd);
        cfg.max_iters = 0;
        let trace = twrgd_solve(&ens, &y, Some(&x), &z0, &cfg).unwrap();
        assert_eq!(trace.iters, 0);
        assert_eq!(trace.records.len(), 1);
        assert!(!trace.converged);
        assert_eq!(trace.estimate, z0);
    }
}
