use crate::cvec::norm;
use crate::error::{Error, Result};
use crate::hermitian::HermitianAction;
use crate::manifold::{tangent_from_action, MetricKind, Rank1Point, TangentVector};
use crate::measurement::{
    apply_lift, truncation_mask_from_projections, IntensityVector, MeasurementEnsemble,
    TruncationMask,
};
use crate::C64;

use super::SolverConfig;

/// `(1/m) sum_{k kept} b_k a_k a_k^*` as a matrix-free Hermitian operator.
pub struct LiftAdjointOperator<'a> {
    ens: &'a MeasurementEnsemble,
    coeffs: Vec<f64>,
}

impl<'a> LiftAdjointOperator<'a> {
    pub fn new(
        ens: &'a MeasurementEnsemble,
        b: &[f64],
        mask: Option<&TruncationMask>,
    ) -> Result<Self> {
        if b.len() != ens.m() {
            return Err(Error::invalid("coefficient vector does not match ensemble"));
        }
        if mask.is_some_and(|mk| mk.len() != ens.m()) {
            return Err(Error::invalid("mask does not match ensemble"));
        }
        let coeffs = b
            .iter()
            .enumerate()
            .map(|(k, &bk)| match mask {
                Some(mk) if !mk.keep()[k] => 0.0,
                _ => bk,
            })
            .collect();
        Ok(Self { ens, coeffs })
    }
}

impl HermitianAction for LiftAdjointOperator<'_> {
    fn dim(&self) -> usize {
        self.ens.n()
    }

    fn apply(&self, v: &[C64]) -> Vec<C64> {
        let inv_m = 1.0 / self.ens.m() as f64;
        let proj = self.ens.project_unchecked(v);
        let c: Vec<C64> = proj
            .iter()
            .zip(&self.coeffs)
            .map(|(p, b)| p * (b * inv_m))
            .collect();
        self.ens.combine(&c)
    }
}

/// Pieces of the Riemannian gradient at `z`.
///
/// `G = (1/m) sum_{k in I} r_k a_k a_k^*` with `r_k = y_k - |a_k^* z|^2` is
/// the negative Euclidean gradient of `F(Z) = (1/2m)||y - A(Z)||^2` restricted
/// to the mask, `g = G u`, `theta = u^* G u` and `q = g - theta u`.
#[derive(Debug, Clone)]
pub struct GradientParts {
    pub g: Vec<C64>,
    pub theta: f64,
    pub q: Vec<C64>,
    pub mask: TruncationMask,
    /// `a_k^* z`.
    pub projections: Vec<C64>,
    /// `y_k - |a_k^* z|^2`, before masking.
    pub residuals: Vec<f64>,
}

impl GradientParts {
    /// Descent direction (negative Riemannian gradient) under `kind`:
    /// `u g^* + g u^* - 2c theta u u^*`.
    pub fn tangent<'a>(&self, anchor: &'a Rank1Point, kind: MetricKind) -> TangentVector<'a> {
        tangent_from_action(anchor, &self.g, self.theta, kind)
    }
}

pub fn riemannian_gradient(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    z: &[C64],
    config: &SolverConfig,
) -> Result<GradientParts> {
    if y.len() != ens.m() {
        return Err(Error::invalid("intensity length does not match ensemble"));
    }
    let projections = ens.project(z)?;
    gradient_from_projections(ens, y, z, projections, config)
}

pub(crate) fn gradient_from_projections(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    z: &[C64],
    projections: Vec<C64>,
    config: &SolverConfig,
) -> Result<GradientParts> {
    let zn = norm(z);
    if !(zn > 0.0) {
        return Err(Error::invalid("gradient needs a nonzero iterate"));
    }
    let mask = if config.truncated {
        truncation_mask_from_projections(y, &projections, zn, config.truncation)?
    } else {
        TruncationMask::all(ens.m())
    };
    let residuals: Vec<f64> = y
        .values()
        .iter()
        .zip(&projections)
        .map(|(yk, p)| yk - p.norm_sqr())
        .collect();
    let inv_m = 1.0 / ens.m() as f64;
    let mut theta = 0.0;
    let coeffs: Vec<C64> = residuals
        .iter()
        .zip(&projections)
        .zip(mask.keep())
        .map(|((r, p), &keep)| {
            if keep {
                // a_k^* u = p / ||z||
                let pu = p / zn;
                theta += r * pu.norm_sqr();
                pu * (r * inv_m)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    theta *= inv_m;
    let g = ens.combine(&coeffs);
    let q: Vec<C64> = g
        .iter()
        .zip(z)
        .map(|(gi, zi)| gi - zi * (theta / zn))
        .collect();
    Ok(GradientParts {
        g,
        theta,
        q,
        mask,
        projections,
        residuals,
    })
}

/// Exact line-search step `m ||D||^2 / ||A_I(D)||^2` for the descent
/// direction `D`, with `||D||` measured in the metric `kind` that produced it.
pub fn step_size_exact(
    ens: &MeasurementEnsemble,
    mask: Option<&TruncationMask>,
    direction: &TangentVector<'_>,
    kind: MetricKind,
) -> Result<f64> {
    if direction.anchor().n() != ens.n() {
        return Err(Error::invalid("tangent dimension does not match ensemble"));
    }
    if direction.is_zero() {
        return Err(Error::invalid(
            "zero gradient: the iterate is stationary, no step to size",
        ));
    }
    let lifted = apply_lift(ens, &direction.to_factored(), mask)?;
    let den: f64 = lifted.iter().map(|v| v * v).sum();
    ratio(ens.m() as f64 * direction.norm_sqr(kind), den)
}

/// Same as [`step_size_exact`] given `a_k^* z` and `a_k^* w` for the
/// direction `z w^* + w z^*`.
pub(crate) fn step_size_from_projections(
    m: usize,
    numerator_norm_sqr: f64,
    proj_z: &[C64],
    proj_w: &[C64],
    mask: &TruncationMask,
) -> Result<f64> {
    let den: f64 = proj_z
        .iter()
        .zip(proj_w)
        .zip(mask.keep())
        .filter(|(_, &k)| k)
        .map(|((pz, pw), _)| {
            let v = 2.0 * (pz * pw.conj()).re;
            v * v
        })
        .sum();
    ratio(m as f64 * numerator_norm_sqr, den)
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::numeric(format!(
            "measurements annihilate the search direction (numerator {num:.3e}, denominator {den:.3e})"
        )));
    }
    Ok(num / den)
}
