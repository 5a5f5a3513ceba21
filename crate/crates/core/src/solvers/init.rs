use crate::cvec::norm;
use crate::error::{Error, Result};
use crate::measurement::{IntensityVector, MeasurementEnsemble};
use crate::rng::{complex_normal_vec, stream};
use crate::C64;

/// Truncated spectral initialization.
///
/// Runs `power_iters` sweeps of power iteration on
/// `Y = (1/m) sum_k y_k a_k a_k^* 1[y_k <= 3 ||y||_1 / m]` (never formed)
/// from a complex Gaussian start drawn from `seed`, then rescales the unit
/// eigenvector estimate by `sqrt(n ||y||_1 / sum_i ||a_i||^2)`.
pub fn spectral_init(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    power_iters: usize,
    seed: u64,
) -> Result<Vec<C64>> {
    if y.len() != ens.m() {
        return Err(Error::invalid("intensity length does not match ensemble"));
    }
    if power_iters == 0 {
        return Err(Error::invalid("power_iters must be at least 1"));
    }
    if !(y.l1() > 0.0) {
        return Err(Error::invalid("all intensities are zero"));
    }
    let m = ens.m() as f64;
    let cut = 3.0 * y.l1() / m;
    let weights: Vec<f64> = y
        .values()
        .iter()
        .map(|&yk| if yk <= cut { yk / m } else { 0.0 })
        .collect();

    let mut v = complex_normal_vec(&mut stream(seed), ens.n());
    normalize(&mut v)?;
    for _ in 0..power_iters {
        let proj = ens.project_unchecked(&v);
        let coeffs: Vec<C64> = proj.iter().zip(&weights).map(|(p, w)| p * *w).collect();
        v = ens.combine(&coeffs);
        normalize(&mut v)?;
    }
    let scale = (ens.n() as f64 * y.l1() / ens.row_norm_sq_sum()).sqrt();
    Ok(v.into_iter().map(|c| c * scale).collect())
}

fn normalize(v: &mut [C64]) -> Result<()> {
    let nv = norm(v);
    if !(nv > 0.0) || !nv.is_finite() {
        return Err(Error::numeric(
            "power iteration collapsed to the zero vector",
        ));
    }
    for c in v.iter_mut() {
        *c /= nv;
    }
    Ok(())
}
