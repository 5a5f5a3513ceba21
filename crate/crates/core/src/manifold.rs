//! The manifold of Hermitian rank-1 matrices in factored form.
//!
//! A point is `Z = sigma z z^*` and a tangent vector at `Z` is
//! `W = z w^* + w z^*`. The companion `w` is only determined up to adding
//! `i t z` for real `t`; every [`TangentVector`] is stored with the unique
//! companion satisfying `z^* w` real.
//!
//! Three (pseudo-)metrics share the trace inner product and differ only in a
//! trace-trace correction, `<A,B> + c tr(A) tr(B)`:
//!
//! | metric      | `c`    | gradient operator                        |
//! |-------------|--------|------------------------------------------|
//! | canonical   | `0`    | `uu*W + Wuu* - uu*Wuu*`                  |
//! | Wirtinger   | `-1/2` | `uu*W + Wuu*`                            |
//! | weighted    | `1`    | `uu*W + Wuu* - (3/2) uu*Wuu*`            |
//!
//! Each gradient operator maps a Hermitian `W` to a tangent vector with
//! companion `(Wu - c' (u^*Wu) u) / ||z||`, with `c'` equal to `1/2`, `0` and
//! `3/4` respectively.

use serde::{Deserialize, Serialize};

use crate::cvec::{dot, norm, norm_sqr, scaled};
use crate::error::{Error, Result};
use crate::hermitian::{FactoredHermitian, HermitianAction};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Canonical,
    WfPseudo,
    Weighted,
}

impl MetricKind {
    /// Coefficient `c` in `<A,B> + c tr(A) tr(B)`.
    pub fn trace_weight(self) -> f64 {
        match self {
            MetricKind::Canonical => 0.0,
            MetricKind::WfPseudo => -0.5,
            MetricKind::Weighted => 1.0,
        }
    }

    /// Coefficient of `(u^*Wu) u` removed from `Wu` by the gradient operator.
    pub fn projection_coef(self) -> f64 {
        match self {
            MetricKind::Canonical => 0.5,
            MetricKind::WfPseudo => 0.0,
            MetricKind::Weighted => 0.75,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Canonical => "canonical",
            MetricKind::WfPseudo => "wf",
            MetricKind::Weighted => "weighted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `Z = sigma z z^*` with `z != 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Point {
    z: Vec<C64>,
    sigma: Sign,
    norm: f64,
}

impl Rank1Point {
    pub fn new(z: Vec<C64>) -> Result<Self> {
        Self::with_sign(z, Sign::Plus)
    }

    pub fn with_sign(z: Vec<C64>, sigma: Sign) -> Result<Self> {
        let norm = norm(&z);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid(format!(
                "rank-1 factor must be finite and nonzero (norm {norm})"
            )));
        }
        Ok(Self { z, sigma, norm })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn factor(&self) -> &[C64] {
        &self.z
    }

    pub fn into_factor(self) -> Vec<C64> {
        self.z
    }

    pub fn sigma(&self) -> Sign {
        self.sigma
    }

    /// `||z||`.
    pub fn factor_norm(&self) -> f64 {
        self.norm
    }

    /// `u = z / ||z||`.
    pub fn unit(&self) -> Vec<C64> {
        scaled(C64::new(1.0 / self.norm, 0.0), &self.z)
    }

    pub fn to_factored(&self) -> FactoredHermitian {
        FactoredHermitian::outer(self.sigma.value(), &self.z)
    }
}

/// `W = z w^* + w z^*` at the anchor `Z = sigma z z^*`, with `z^* w` real.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector<'a> {
    anchor: &'a Rank1Point,
    w: Vec<C64>,
}

impl<'a> TangentVector<'a> {
    pub fn anchor(&self) -> &'a Rank1Point {
        self.anchor
    }

    pub fn companion(&self) -> &[C64] {
        &self.w
    }

    pub fn zero(anchor: &'a Rank1Point) -> Self {
        Self {
            anchor,
            w: vec![C64::new(0.0, 0.0); anchor.n()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.w.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            anchor: self.anchor,
            w: scaled(C64::new(c, 0.0), &self.w),
        }
    }

    /// `z^* w`, real by construction.
    pub fn anchor_overlap(&self) -> f64 {
        dot(self.anchor.factor(), &self.w).re
    }

    pub fn to_factored(&self) -> FactoredHermitian {
        FactoredHermitian::sym_pair(self.anchor.factor(), &self.w).expect("equal lengths")
    }

    /// Squared norm under `kind`, from the closed form
    /// `2||z||^2||w||^2 + (2 + 4c)(z^*w)^2`.
    pub fn norm_sqr(&self, kind: MetricKind) -> f64 {
        let zz = self.anchor.factor_norm().powi(2);
        let zw = self.anchor_overlap();
        2.0 * zz * norm_sqr(&self.w) + (2.0 + 4.0 * kind.trace_weight()) * zw * zw
    }
}

/// Reparametrizes `z v^* + v z^*` by the companion with real overlap:
/// `w = v - i (Im(z^*v) / ||z||^2) z`.
pub fn normalize_tangent_param<'a>(anchor: &'a Rank1Point, v: &[C64]) -> Result<TangentVector<'a>> {
    if v.len() != anchor.n() {
        return Err(Error::invalid("companion length does not match anchor"));
    }
    Ok(normalized(anchor, v.to_vec()))
}

fn normalized(anchor: &Rank1Point, mut v: Vec<C64>) -> TangentVector<'_> {
    let z = anchor.factor();
    let t = dot(z, &v).im / anchor.factor_norm().powi(2);
    if t != 0.0 {
        for (vi, zi) in v.iter_mut().zip(z) {
            *vi -= C64::new(0.0, t) * zi;
        }
    }
    TangentVector { anchor, w: v }
}

/// Builds the tangent vector `u g^* + g u^* - 2c theta u u^*` from `g = Wu` and
/// `theta = u^*Wu`, where `c` is the metric's projection coefficient.
pub(crate) fn tangent_from_action<'a>(
    anchor: &'a Rank1Point,
    g: &[C64],
    theta: f64,
    kind: MetricKind,
) -> TangentVector<'a> {
    let inv = 1.0 / anchor.factor_norm();
    let shift = kind.projection_coef() * theta * inv;
    let w: Vec<C64> = g
        .iter()
        .zip(anchor.factor())
        .map(|(gi, zi)| gi * inv - zi * (shift * inv))
        .collect();
    normalized(anchor, w)
}

fn project_with<'a>(
    anchor: &'a Rank1Point,
    w: &dyn HermitianAction,
    kind: MetricKind,
) -> Result<TangentVector<'a>> {
    if w.dim() != anchor.n() {
        return Err(Error::invalid("operand dimension does not match anchor"));
    }
    let u = anchor.unit();
    let g = w.apply(&u);
    let theta = dot(&u, &g).re;
    Ok(tangent_from_action(anchor, &g, theta, kind))
}

/// Orthogonal projection onto the tangent space,
/// `uu*W + Wuu* - uu*Wuu*`.
pub fn project_canonical<'a>(
    anchor: &'a Rank1Point,
    w: &dyn HermitianAction,
) -> Result<TangentVector<'a>> {
    project_with(anchor, w, MetricKind::Canonical)
}

/// Weighted-metric gradient operator `uu*W + Wuu* - (3/2) uu*Wuu*`. For every
/// tangent `B`, `<T(W), B>_weighted = <W, B>`.
pub fn project_weighted<'a>(
    anchor: &'a Rank1Point,
    w: &dyn HermitianAction,
) -> Result<TangentVector<'a>> {
    project_with(anchor, w, MetricKind::Weighted)
}

/// Wirtinger pseudo-metric gradient operator `uu*W + Wuu*`.
pub fn project_wf<'a>(
    anchor: &'a Rank1Point,
    w: &dyn HermitianAction,
) -> Result<TangentVector<'a>> {
    project_with(anchor, w, MetricKind::WfPseudo)
}

/// Gradient operator for `kind`.
pub fn project<'a>(
    kind: MetricKind,
    anchor: &'a Rank1Point,
    w: &dyn HermitianAction,
) -> Result<TangentVector<'a>> {
    project_with(anchor, w, kind)
}

/// `<A,B> + c tr(A) tr(B)` for the metric `kind`.
pub fn metric_inner(kind: MetricKind, a: &FactoredHermitian, b: &FactoredHermitian) -> Result<f64> {
    let base = a.frob_inner(b)?;
    Ok(base + kind.trace_weight() * a.trace() * b.trace())
}

/// Top eigenpair of the real symmetric matrix `[[a, b], [b, d]]`.
pub fn sym2_top_eigen(a: f64, b: f64, d: f64) -> (f64, [f64; 2]) {
    let mean = 0.5 * (a + d);
    let half_gap = 0.5 * (a - d);
    let radius = half_gap.hypot(b);
    let lambda = mean + radius;
    // pick the better-conditioned of the two row-derived eigenvectors
    let v = if a >= d {
        [lambda - d, b]
    } else {
        [b, lambda - a]
    };
    let len = v[0].hypot(v[1]);
    if len == 0.0 {
        (lambda, [1.0, 0.0])
    } else {
        (lambda, [v[0] / len, v[1] / len])
    }
}

/// Best rank-1 approximation of `Z + scale * step` on the PSD branch.
///
/// With `u = z/||z||` and `||z|| w = c u + p` (`p` orthogonal to `u`), the
/// lifted matrix is `[u, p/||p||] M [u, p/||p||]^*` for the `2 x 2` core
/// `M = [[||z||^2 + 2 scale c, scale ||p||], [scale ||p||, 0]]`, so only
/// `M`'s top eigenpair is needed. Fails when the dominant singular pair of
/// `M` has a nonpositive eigenvalue.
pub fn retract_rank1(
    anchor: &Rank1Point,
    step: &TangentVector<'_>,
    scale: f64,
) -> Result<Rank1Point> {
    if step.anchor().factor() != anchor.factor() {
        return Err(Error::invalid("step is not anchored at this point"));
    }
    if anchor.sigma() != Sign::Plus {
        return Err(Error::invalid(
            "rank-1 truncation retraction is only defined on the PSD branch",
        ));
    }
    if scale == 0.0 || step.is_zero() {
        return Ok(anchor.clone());
    }
    let zn = anchor.factor_norm();
    let u = anchor.unit();
    let omega = scaled(C64::new(zn, 0.0), step.companion());
    let c = dot(&u, &omega).re;
    let p: Vec<C64> = omega.iter().zip(&u).map(|(o, ui)| o - ui * c).collect();
    let p_norm = norm(&p);

    let a = zn * zn + 2.0 * scale * c;
    let b = scale * p_norm;
    let (lambda, v) = sym2_top_eigen(a, b, 0.0);
    // the other eigenvalue is a - lambda; it dominates in magnitude iff a < 0
    if a < 0.0 || !(lambda > 0.0) {
        return Err(Error::DegenerateRetraction(format!(
            "best rank-1 part is not positive semidefinite (a = {a:.3e}, b = {b:.3e})"
        )));
    }
    let root = lambda.sqrt();
    // z_next = sqrt(lambda) (v0 u + v1 p/||p||); v1 p/||p|| == v1/b * scale * p
    let coef_u = root * v[0];
    let coef_p = if p_norm > 0.0 {
        root * v[1] / p_norm
    } else {
        0.0
    };
    let z_next: Vec<C64> = u
        .iter()
        .zip(&p)
        .map(|(ui, pi)| ui * coef_u + pi * coef_p)
        .collect();
    Rank1Point::new(z_next).map_err(|e| Error::numeric(format!("retraction produced {e}")))
}

/// `S_Z(Z + z w^* + w z^*) = sigma (z + sigma w)(z + sigma w)^*`.
pub fn retract_wf(anchor: &Rank1Point, step: &TangentVector<'_>) -> Result<Rank1Point> {
    if step.anchor().factor() != anchor.factor() {
        return Err(Error::invalid("step is not anchored at this point"));
    }
    let s = anchor.sigma().value();
    let z: Vec<C64> = anchor
        .factor()
        .iter()
        .zip(step.companion())
        .map(|(zi, wi)| zi + wi * s)
        .collect();
    Rank1Point::with_sign(z, anchor.sigma())
        .map_err(|_| Error::DegenerateRetraction("retracted factor vanished".into()))
}
