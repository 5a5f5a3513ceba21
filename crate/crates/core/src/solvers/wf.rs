use crate::cvec::norm_sqr;
use crate::error::{Error, Result};
use crate::manifold::{project_wf, retract_wf, Rank1Point};
use crate::measurement::{
    truncation_mask_from_projections, IntensityVector, MeasurementEnsemble, TruncationMask,
};
use crate::C64;

use super::gradient::LiftAdjointOperator;
use super::{check_problem, IterateTrace, Progress, SolverConfig, StepPolicy};

/// One Wirtinger-flow step `z - (alpha/||z||^2) grad f(z)` with
/// `grad f(z) = (2/m) sum_{k in I} (|a_k^* z|^2 - y_k)(a_k^* z) a_k`.
pub fn wf_vector_step(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    z: &[C64],
    mask: &TruncationMask,
    alpha: f64,
) -> Result<Vec<C64>> {
    let proj = ens.project(z)?;
    check_mask(ens, y, mask)?;
    Ok(vector_step_from_projections(ens, y, z, &proj, mask, alpha))
}

fn check_mask(ens: &MeasurementEnsemble, y: &IntensityVector, mask: &TruncationMask) -> Result<()> {
    if y.len() != ens.m() || mask.len() != ens.m() {
        return Err(Error::invalid(
            "intensity or mask length does not match ensemble",
        ));
    }
    Ok(())
}

fn vector_step_from_projections(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    z: &[C64],
    proj: &[C64],
    mask: &TruncationMask,
    alpha: f64,
) -> Vec<C64> {
    let scale = 2.0 / ens.m() as f64;
    let coeffs: Vec<C64> = proj
        .iter()
        .zip(y.values())
        .zip(mask.keep())
        .map(|((p, yk), &keep)| {
            if keep {
                p * (scale * (p.norm_sqr() - yk))
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    let grad = ens.combine(&coeffs);
    let s = alpha / norm_sqr(z);
    z.iter().zip(&grad).map(|(zi, gi)| zi - gi * s).collect()
}

/// The same step taken on the manifold: the Wirtinger pseudo-metric gradient
/// of `F` at `Z = z z^*`, scaled by `alpha`, followed by `S_Z`.
pub fn wf_manifold_step(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    point: &Rank1Point,
    mask: &TruncationMask,
    alpha: f64,
) -> Result<Rank1Point> {
    check_mask(ens, y, mask)?;
    let proj = ens.project(point.factor())?;
    let residuals: Vec<f64> = y
        .values()
        .iter()
        .zip(&proj)
        .map(|(yk, p)| yk - p.norm_sqr())
        .collect();
    // -grad F = (1/m) sum r_k a_k a_k^*; f(z) = 2 F(z z^*) doubles the step
    let neg_grad = LiftAdjointOperator::new(ens, &residuals, Some(mask))?;
    let step = project_wf(point, &neg_grad)?.scaled(2.0 * alpha);
    retract_wf(point, &step)
}

/// Wirtinger flow with a fixed step, optionally restricted to the truncation
/// mask.
pub fn twf_solve(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    x_true: Option<&[C64]>,
    z0: &[C64],
    config: &SolverConfig,
) -> Result<IterateTrace> {
    config.validate()?;
    check_problem(ens, y, x_true, z0)?;
    let alpha = match config.step {
        StepPolicy::Fixed(a) => a,
        StepPolicy::ExactLineSearch => {
            return Err(Error::invalid("Wirtinger flow runs with a fixed step size"))
        }
    };
    if norm_sqr(z0) == 0.0 {
        return Err(Error::invalid("starting point must be nonzero"));
    }
    let mut z = z0.to_vec();
    let mut progress = Progress::new(y, x_true, config.mse_tol);
    let mut t = 0;
    loop {
        let proj = ens.project_unchecked(&z);
        let eval = progress.evaluate(&z, &proj);
        if eval.done || t == config.max_iters {
            progress.record(t, &eval, f64::NAN, f64::NAN);
            return Ok(progress.finish(z, t, eval.done));
        }
        let mask = if config.truncated {
            truncation_mask_from_projections(y, &proj, norm_sqr(&z).sqrt(), config.truncation)?
        } else {
            TruncationMask::all(ens.m())
        };
        progress.record(t, &eval, alpha, mask.kept_fraction());
        let next = vector_step_from_projections(ens, y, &z, &proj, &mask, alpha);
        let nn = norm_sqr(&next);
        if !(nn > 0.0) || !nn.is_finite() {
            progress.trace.failure = Some("iterate vanished or diverged".into());
            return Ok(progress.finish(z, t, false));
        }
        z = next;
        t += 1;
    }
}
