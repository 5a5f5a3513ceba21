//! Dense reference implementations used to validate the factored code.
//!
//! Everything here forms explicit `n x n` matrices and goes through nalgebra,
//! so it shares no arithmetic with the production paths. It is meant for
//! small `n` only.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermitian::{FactoredHermitian, HermitianAction};
use crate::manifold::{MetricKind, Rank1Point};
use crate::measurement::{MeasurementEnsemble, Truncation};
use crate::C64;

fn trace_weight(kind: MetricKind) -> f64 {
    match kind {
        MetricKind::Canonical => 0.0,
        MetricKind::WfPseudo => -0.5,
        MetricKind::Weighted => 1.0,
    }
}

/// Coefficient `c` of `P W + W P - c P W P` in the gradient operator.
fn gradient_coef(kind: MetricKind) -> f64 {
    match kind {
        MetricKind::Canonical => 1.0,
        MetricKind::WfPseudo => 0.0,
        MetricKind::Weighted => 1.5,
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// A vector of i.i.d. complex standard normals.
pub fn gaussian_vector(seed: u64, n: usize) -> Vec<C64> {
    let mut rng = rng_for(seed, 0);
    (0..n).map(|_| gaussian(&mut rng)).collect()
}

fn column(v: &[C64]) -> DVector<C64> {
    DVector::from_column_slice(v)
}

/// Explicit Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHermitian {
    mat: DMatrix<C64>,
}

impl DenseHermitian {
    /// Checks conjugate symmetry to `1e-12` relative to the Frobenius norm.
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::invalid("matrix is not square"));
        }
        let asym = (&mat - mat.adjoint()).norm();
        if asym > 1e-12 * mat.norm().max(1.0) {
            return Err(Error::invalid(format!(
                "matrix is not Hermitian (asymmetry {asym:.3e})"
            )));
        }
        Ok(Self { mat })
    }

    fn wrap(mat: DMatrix<C64>) -> Self {
        Self { mat }
    }

    pub fn zeros(n: usize) -> Self {
        Self::wrap(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self::wrap(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self::wrap(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(d[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    /// `scale * v v^*`.
    pub fn outer(scale: f64, v: &[C64]) -> Self {
        let c = column(v);
        Self::wrap(&c * c.adjoint() * C64::new(scale, 0.0))
    }

    /// `z w^* + w z^*`.
    pub fn sym_pair(z: &[C64], w: &[C64]) -> Self {
        let (zc, wc) = (column(z), column(w));
        Self::wrap(&zc * wc.adjoint() + &wc * zc.adjoint())
    }

    pub fn from_factored(f: &FactoredHermitian) -> Self {
        let mut mat = DMatrix::zeros(f.n(), f.n());
        for t in f.terms() {
            let (l, r) = (column(&t.left), column(&t.right));
            mat += (&l * r.adjoint() + &r * l.adjoint()) * C64::new(t.coef, 0.0);
        }
        Self::wrap(mat)
    }

    /// Hermitian matrix with i.i.d. Gaussian entries above the diagonal.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, 1);
        let g = DMatrix::from_fn(n, n, |_, _| gaussian(&mut rng));
        Self::wrap((&g + g.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn frob_inner(&self, other: &DenseHermitian) -> f64 {
        self.mat.dotc(&other.mat).re
    }

    pub fn frob_norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn metric_inner(&self, kind: MetricKind, other: &DenseHermitian) -> f64 {
        self.frob_inner(other) + trace_weight(kind) * self.trace() * other.trace()
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &DenseHermitian) -> Self {
        Self::wrap(&self.mat + &other.mat * C64::new(s, 0.0))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::wrap(&self.mat * C64::new(s, 0.0))
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<C64> {
        self.mat.transpose().as_slice().to_vec()
    }
}

impl HermitianAction for DenseHermitian {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, v: &[C64]) -> Vec<C64> {
        (&self.mat * column(v)).as_slice().to_vec()
    }
}

/// Top eigenpair of a Hermitian matrix by magnitude, ties broken by the
/// larger signed eigenvalue and then by the lower index.
pub fn dense_rank1_trunc_svd(w: &DenseHermitian) -> (f64, Vec<C64>) {
    let eig = SymmetricEigen::new(w.mat.clone());
    let mut order: Vec<usize> = (0..w.n()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (eig.eigenvalues[i], eig.eigenvalues[j]);
        b.abs()
            .total_cmp(&a.abs())
            .then(b.total_cmp(&a))
            .then(i.cmp(&j))
    });
    let k = order[0];
    let v = eig.eigenvectors.column(k).into_owned();
    let v = &v / C64::new(v.norm(), 0.0);
    (eig.eigenvalues[k], v.as_slice().to_vec())
}

/// `P W + W P - c P W P` with `P = u u^*`, `u = z/||z||`, for the metric's
/// gradient coefficient `c`.
pub fn dense_gradient_operator(kind: MetricKind, z: &[C64], w: &DenseHermitian) -> DenseHermitian {
    dense_gradient_operator_with_coef(gradient_coef(kind), z, w)
}

/// Same as [`dense_gradient_operator`] with an explicit coefficient.
pub fn dense_gradient_operator_with_coef(
    coef: f64,
    z: &[C64],
    w: &DenseHermitian,
) -> DenseHermitian {
    let zc = column(z);
    let u = &zc / C64::new(zc.norm(), 0.0);
    let p = &u * u.adjoint();
    let pw = &p * &w.mat;
    let wp = &w.mat * &p;
    let pwp = &pw * &p;
    DenseHermitian::wrap(pw + wp - pwp * C64::new(coef, 0.0))
}

/// Sensing operator held as an explicit `m x n` matrix whose row `k` is
/// `a_k^T`.
#[derive(Debug, Clone)]
pub struct DenseSensing {
    a: DMatrix<C64>,
}

impl DenseSensing {
    pub fn from_ensemble(ens: &MeasurementEnsemble) -> Self {
        Self {
            a: DMatrix::from_fn(ens.m(), ens.n(), |k, j| ens.row(k)[j]),
        }
    }

    /// Fresh Gaussian sensing vectors.
    pub fn sample(n: usize, m: usize, seed: u64, stream: u64) -> Self {
        let mut rng = rng_for(seed, stream);
        Self {
            a: DMatrix::from_fn(m, n, |_, _| gaussian(&mut rng)),
        }
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// `a_k^* W a_k` for every `k`, zeroed outside `mask`.
    pub fn lift(&self, w: &DenseHermitian, mask: Option<&[bool]>) -> Vec<f64> {
        let wa = &w.mat * self.a.transpose();
        (0..self.m())
            .map(|k| {
                if mask.is_some_and(|mk| !mk[k]) {
                    return 0.0;
                }
                (0..self.n())
                    .map(|i| self.a[(k, i)].conj() * wa[(i, k)])
                    .sum::<C64>()
                    .re
            })
            .collect()
    }

    /// `(1/m) sum_{k in mask} b_k a_k a_k^*`.
    pub fn adjoint(&self, b: &[f64], mask: Option<&[bool]>) -> DenseHermitian {
        let m = self.m();
        let mut scaled = self.a.map(|c| c.conj());
        for k in 0..m {
            let bk = if mask.is_some_and(|mk| !mk[k]) {
                0.0
            } else {
                b[k]
            };
            scaled.row_mut(k).scale_mut(bk / m as f64);
        }
        DenseHermitian::wrap(self.a.transpose() * scaled)
    }

    /// Truncation mask at `Z = z z^*` computed from the lifted values.
    pub fn truncation_mask(&self, y: &[f64], z: &[C64], tau: Truncation) -> Vec<bool> {
        let zz = DenseHermitian::outer(1.0, z);
        let fitted = self.lift(&zz, None);
        let m = self.m() as f64;
        let z_norm = zz.trace().sqrt();
        let y_mean = y.iter().sum::<f64>() / m;
        let res_l1: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b).abs()).sum();
        y.iter()
            .zip(&fitted)
            .map(|(&yk, &fk)| {
                let amp = fk.max(0.0).sqrt();
                yk.sqrt() <= tau.tau0 * y_mean.sqrt()
                    && amp <= tau.tau1 * z_norm
                    && (yk - fk).abs() <= tau.tau2 / m * res_l1 * (amp + yk.sqrt()) / z_norm
            })
            .collect()
    }

    /// `(1/2m) sum_{k in mask} (y_k - a_k^* W a_k)^2`.
    pub fn least_squares(&self, y: &[f64], w: &DenseHermitian, mask: Option<&[bool]>) -> f64 {
        let fitted = self.lift(w, None);
        let m = self.m() as f64;
        fitted
            .iter()
            .zip(y)
            .enumerate()
            .filter(|(k, _)| mask.is_none_or(|mk| mk[*k]))
            .map(|(_, (f, yk))| (yk - f).powi(2))
            .sum::<f64>()
            / (2.0 * m)
    }
}

/// One dense Riemannian gradient step at `z z^*` with exact line search.
/// Returns the next factor, normalized so that its phase is arbitrary.
pub fn dense_rgd_step(
    sensing: &DenseSensing,
    y: &[f64],
    z: &[C64],
    kind: MetricKind,
    tau: Option<Truncation>,
) -> Result<Vec<C64>> {
    let zz = DenseHermitian::outer(1.0, z);
    let mask = tau.map(|t| sensing.truncation_mask(y, z, t));
    let fitted = sensing.lift(&zz, None);
    let r: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let g = sensing.adjoint(&r, mask.as_deref());
    let d = dense_gradient_operator(kind, z, &g);
    let ad = sensing.lift(&d, mask.as_deref());
    let den: f64 = ad.iter().map(|v| v * v).sum();
    if !(den > 0.0) {
        return Err(Error::numeric("direction annihilated"));
    }
    let alpha = sensing.m() as f64 * d.metric_inner(kind, &d) / den;
    let next = zz.add_scaled(alpha, &d);
    let (lambda, v) = dense_rank1_trunc_svd(&next);
    if !(lambda > 0.0) {
        return Err(Error::DegenerateRetraction(
            "negative top eigenvalue".into(),
        ));
    }
    Ok(v.iter().map(|c| c * lambda.sqrt()).collect())
}

/// `steps` dense gradient iterations from `z0`; the returned trajectory
/// starts with `z0`.
pub fn dense_rgd_trajectory(
    sensing: &DenseSensing,
    y: &[f64],
    z0: &[C64],
    kind: MetricKind,
    tau: Option<Truncation>,
    steps: usize,
) -> Result<Vec<Vec<C64>>> {
    let mut out = vec![z0.to_vec()];
    for _ in 0..steps {
        let next = dense_rgd_step(sensing, y, out.last().unwrap(), kind, tau)?;
        out.push(next);
    }
    Ok(out)
}

/// `||z z^* - x x^*||_F`, phase-free distance between two factors.
pub fn lifted_distance(z: &[C64], x: &[C64]) -> f64 {
    DenseHermitian::outer(1.0, z)
        .add_scaled(-1.0, &DenseHermitian::outer(1.0, x))
        .frob_norm()
}

/// Second and fourth truncated moments of a complex standard normal `xi`:
/// `beta2 = E[|xi|^2 1]`, `beta1 = E[|xi|^4 1] - E[|xi|^2 1]` with
/// `1 = 1[|xi| <= tau1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationMoments {
    pub tau1: f64,
    pub beta1_hat: f64,
    pub beta2_hat: f64,
}

/// Closed forms, using that `|xi|^2` is a unit-rate exponential.
pub fn moments_closed_form(tau1: f64) -> TruncationMoments {
    let t = tau1 * tau1;
    let e = (-t).exp();
    TruncationMoments {
        tau1,
        beta1_hat: 1.0 - (1.0 + t + t * t) * e,
        beta2_hat: 1.0 - (1.0 + t) * e,
    }
}

/// Same moments by adaptive Simpson quadrature of `t e^{-t}` and
/// `t^2 e^{-t}` over `[0, tau1^2]`.
pub fn moments_quadrature(tau1: f64, tol: f64) -> TruncationMoments {
    let t = tau1 * tau1;
    let m2 = adaptive_simpson(&|s: f64| s * (-s).exp(), 0.0, t, tol);
    let m4 = adaptive_simpson(&|s: f64| s * s * (-s).exp(), 0.0, t, tol);
    TruncationMoments {
        tau1,
        beta1_hat: m4 - m2,
        beta2_hat: m2,
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 50)
}

/// Mean and standard error of `(1/m)||A(W)||^2` over `trials` fresh ensembles.
pub fn mc_expectation_lift(
    w: &DenseHermitian,
    trials: usize,
    m: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if trials < 30 {
        return Err(Error::invalid("need at least 30 trials"));
    }
    let samples: Vec<f64> = (0..trials)
        .map(|t| {
            let s = DenseSensing::sample(w.n(), m, seed, t as u64 + 100);
            s.lift(w, None).iter().map(|v| v * v).sum::<f64>() / m as f64
        })
        .collect();
    Ok(mean_stderr(&samples))
}

/// Monte-Carlo estimate of the truncated moments with standard errors.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentEstimate {
    pub mean: TruncationMoments,
    pub se_beta1: f64,
    pub se_beta2: f64,
}

pub fn mc_truncation_moments(tau1: f64, samples: usize, seed: u64) -> Result<MomentEstimate> {
    if samples < 30 {
        return Err(Error::invalid("need at least 30 samples"));
    }
    let mut rng = rng_for(seed, 5);
    let (mut s2, mut s1) = (Vec::with_capacity(samples), Vec::with_capacity(samples));
    for _ in 0..samples {
        let t = gaussian(&mut rng).norm_sqr();
        let keep = t <= tau1 * tau1;
        s2.push(if keep { t } else { 0.0 });
        s1.push(if keep { t * t - t } else { 0.0 });
    }
    let (m2, e2) = mean_stderr(&s2);
    let (m1, e1) = mean_stderr(&s1);
    Ok(MomentEstimate {
        mean: TruncationMoments {
            tau1,
            beta1_hat: m1,
            beta2_hat: m2,
        },
        se_beta1: e1,
        se_beta2: e2,
    })
}

/// Sample mean and standard error.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let k = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / k;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    (mean, (var / k).sqrt())
}

/// Deviation of the empirical truncated matrix moments from their targets.
#[derive(Debug, Clone)]
pub struct MomentDeviation {
    pub m: usize,
    /// `||(1/m) sum |a^*z|^2 a a^* 1 - (beta1 z z^* + beta2 I)||_2`.
    pub hermitian_dev: f64,
    /// `||(1/m) sum (a^*z)^2 a a^T 1 - (beta1 + beta2) z z^T||_2`.
    pub symmetric_dev: f64,
    pub hermitian_sum: DMatrix<C64>,
    pub symmetric_sum: DMatrix<C64>,
}

pub fn mc_truncated_matrix_moments(
    z: &[C64],
    tau1: f64,
    m: usize,
    seed: u64,
) -> Result<MomentDeviation> {
    let zc = column(z);
    if (zc.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("z must be a unit vector"));
    }
    let n = z.len();
    let mut rng = rng_for(seed, 7);
    let mut herm = DMatrix::<C64>::zeros(n, n);
    let mut sym = DMatrix::<C64>::zeros(n, n);
    for _ in 0..m {
        let a = DVector::from_fn(n, |_, _| gaussian(&mut rng));
        let az = a.dotc(&zc);
        if az.norm() <= tau1 {
            herm += &a * a.adjoint() * C64::new(az.norm_sqr(), 0.0);
            sym += &a * a.transpose() * (az * az);
        }
    }
    herm /= C64::new(m as f64, 0.0);
    sym /= C64::new(m as f64, 0.0);
    let mo = moments_closed_form(tau1);
    let herm_target = &zc * zc.adjoint() * C64::new(mo.beta1_hat, 0.0)
        + DMatrix::<C64>::identity(n, n) * C64::new(mo.beta2_hat, 0.0);
    let sym_target = &zc * zc.transpose() * C64::new(mo.beta1_hat + mo.beta2_hat, 0.0);
    Ok(MomentDeviation {
        m,
        hermitian_dev: spectral_norm(&(&herm - herm_target)),
        symmetric_dev: spectral_norm(&(&sym - sym_target)),
        hermitian_sum: herm,
        symmetric_sum: sym,
    })
}

fn spectral_norm(a: &DMatrix<C64>) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

/// Central difference `(F(Z + hB) - F(Z - hB)) / 2h`.
pub fn finite_diff_directional(
    f: &dyn Fn(&DenseHermitian) -> f64,
    z: &DenseHermitian,
    b: &DenseHermitian,
    h: f64,
) -> f64 {
    (f(&z.add_scaled(h, b)) - f(&z.add_scaled(-h, b))) / (2.0 * h)
}

/// Rayleigh quotients `(1/m)||A_Z(W)||^2 / ||W||^2` of random tangents at one
/// point under each metric.
#[derive(Debug, Clone, Serialize)]
pub struct RayleighReport {
    pub n: usize,
    pub m: usize,
    pub weighted: Vec<f64>,
    pub canonical: Vec<f64>,
    pub wf: Vec<f64>,
}

impl RayleighReport {
    pub fn quotients(&self, kind: MetricKind) -> &[f64] {
        match kind {
            MetricKind::Weighted => &self.weighted,
            MetricKind::Canonical => &self.canonical,
            MetricKind::WfPseudo => &self.wf,
        }
    }

    pub fn range(&self, kind: MetricKind) -> (f64, f64) {
        let q = self.quotients(kind);
        let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn spread(&self, kind: MetricKind) -> f64 {
        let (lo, hi) = self.range(kind);
        hi / lo
    }
}

/// A point `z` with `||z z^* - x x^*||_F <= frac ||x x^*||_F`.
pub fn perturbed_point(x: &[C64], frac: f64, seed: u64) -> Vec<C64> {
    let h = gaussian_vector(seed, x.len());
    let xn = column(x).norm();
    let hn = column(&h).norm();
    let target = frac * xn * xn;
    let mut s = 0.5 * frac * xn / hn;
    loop {
        let z: Vec<C64> = x.iter().zip(&h).map(|(a, b)| a + b * s).collect();
        if lifted_distance(&z, x) <= target {
            return z;
        }
        s *= 0.5;
    }
}

/// Tangent `z w^* + w z^*` at `z` with `w = ||z|| (cos(phi) u + sin(phi) p)`,
/// `p` a random unit vector orthogonal to `u = z/||z||` and
/// `phi ~ U[0, pi/2]`, so both the trace and traceless parts are covered.
pub fn random_tangent(z: &[C64], seed: u64) -> DenseHermitian {
    let mut rng = rng_for(seed, 3);
    let zc = column(z);
    let zn = zc.norm();
    let u = &zc / C64::new(zn, 0.0);
    let g = DVector::from_fn(z.len(), |_, _| gaussian(&mut rng));
    let p = &g - &u * u.dotc(&g);
    let p = &p / C64::new(p.norm(), 0.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::FRAC_PI_2);
    let w = (&u * C64::new(phi.cos(), 0.0) + p * C64::new(phi.sin(), 0.0)) * C64::new(zn, 0.0);
    DenseHermitian::sym_pair(z, w.as_slice())
}

/// Rayleigh quotients of `tangents` random tangent vectors at a point within
/// `1/14` of `x x^*`, with the truncation mask at that point when `tau` is
/// given.
pub fn rayleigh_quotients(
    n: usize,
    m: usize,
    tangents: usize,
    seed: u64,
    tau: Option<Truncation>,
) -> RayleighReport {
    let sensing = DenseSensing::sample(n, m, seed, 11);
    let x = gaussian_vector(seed ^ 0x5eed, n);
    let y = sensing.lift(&DenseHermitian::outer(1.0, &x), None);
    let z = perturbed_point(&x, 1.0 / 14.0 * 0.9, seed ^ 0xbeef);
    let mask = tau.map(|t| sensing.truncation_mask(&y, &z, t));
    let mut report = RayleighReport {
        n,
        m,
        weighted: Vec::with_capacity(tangents),
        canonical: Vec::with_capacity(tangents),
        wf: Vec::with_capacity(tangents),
    };
    for i in 0..tangents {
        let w = random_tangent(&z, seed.wrapping_add(1000 + i as u64));
        let energy = sensing
            .lift(&w, mask.as_deref())
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            / m as f64;
        report
            .weighted
            .push(energy / w.metric_inner(MetricKind::Weighted, &w));
        report
            .canonical
            .push(energy / w.metric_inner(MetricKind::Canonical, &w));
        report
            .wf
            .push(energy / w.metric_inner(MetricKind::WfPseudo, &w));
    }
    report
}

/// Outcome of one audit: a measured quantity against its bound.
#[derive(Debug, Clone, Serialize)]
pub struct AuditOutcome {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
    pub detail: String,
}

impl AuditOutcome {
    fn at_most(name: &str, measured: f64, bound: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            measured,
            bound,
            passed: measured <= bound,
            detail,
        }
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Largest `|<T(A), B>_weighted - <A, B>|` relative to `||A|| ||B||` over
/// random Hermitian `A` and tangents `B`, using `operator` as `T`.
pub fn audit_compatibility(
    operator: &dyn Fn(&[C64], &DenseHermitian) -> DenseHermitian,
    trials: usize,
    seed: u64,
) -> AuditOutcome {
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let n = [4, 8, 16][t % 3];
        let s = seed.wrapping_add(t as u64 * 7);
        let z = gaussian_vector(s, n);
        let a = DenseHermitian::random(n, s + 1);
        let b = random_tangent(&z, s + 2);
        let ta = operator(&z, &a);
        let lhs = ta.metric_inner(MetricKind::Weighted, &b);
        let rhs = a.frob_inner(&b);
        worst = worst.max((lhs - rhs).abs() / (a.frob_norm() * b.frob_norm()));
    }
    AuditOutcome::at_most(
        "compatibility",
        worst,
        1e-10,
        format!("{trials} random pairs, n in {{4, 8, 16}}"),
    )
}

/// Production weighted gradient operator viewed densely.
pub fn production_weighted_operator(z: &[C64], a: &DenseHermitian) -> DenseHermitian {
    let anchor = Rank1Point::new(z.to_vec()).expect("nonzero anchor");
    let t = crate::manifold::project_weighted(&anchor, a).expect("matching dimension");
    DenseHermitian::from_factored(&t.to_factored())
}

/// Audit depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditLevel {
    Fast,
    Full,
}

impl std::str::FromStr for AuditLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(AuditLevel::Fast),
            "full" => Ok(AuditLevel::Full),
            other => Err(Error::invalid(format!("unknown audit level '{other}'"))),
        }
    }
}

/// Runs the audit suite. `Full` adds the Monte-Carlo and near-isometry
/// audits.
pub fn run_audits(level: AuditLevel, seed: u64) -> Vec<AuditOutcome> {
    let mut out = vec![
        audit_lift(seed),
        audit_adjoint(seed),
        audit_retraction(seed),
        audit_tangent_norm(seed),
        audit_compatibility(&production_weighted_operator, 30, seed),
        audit_gradient(seed),
        audit_moment_quadrature(),
        audit_wf_equivalence(seed),
        audit_solver_equivalence(seed),
    ];
    if level == AuditLevel::Full {
        out.push(audit_near_isometry(seed));
        out.push(audit_weak_correlation(seed));
        out.push(audit_lift_expectation(seed));
        out.push(audit_matrix_moments(seed));
    }
    out
}

fn audit_lift(seed: u64) -> AuditOutcome {
    let mut worst: f64 = 0.0;
    for t in 0..10 {
        let n = 2 + t % 7;
        let ens = MeasurementEnsemble::sample(n, 5 * n, seed + t as u64).unwrap();
        let dense = DenseSensing::from_ensemble(&ens);
        let z = gaussian_vector(seed + 50 + t as u64, n);
        let w = gaussian_vector(seed + 90 + t as u64, n);
        let f = FactoredHermitian::sym_pair(&z, &w)
            .unwrap()
            .plus(0.7, &FactoredHermitian::outer(1.0, &z))
            .unwrap();
        let fast = crate::measurement::apply_lift(&ens, &f, None).unwrap();
        let slow = dense.lift(&DenseHermitian::from_factored(&f), None);
        worst = worst.max(vec_rel_err(&fast, &slow));
    }
    AuditOutcome::at_most(
        "lift_factored_vs_dense",
        worst,
        1e-9,
        "10 instances, n <= 8".into(),
    )
}

fn audit_adjoint(seed: u64) -> AuditOutcome {
    let mut worst: f64 = 0.0;
    for t in 0..10 {
        let n = 2 + t % 7;
        let m = 6 * n;
        let ens = MeasurementEnsemble::sample(n, m, seed + 200 + t as u64).unwrap();
        let dense = DenseSensing::from_ensemble(&ens);
        let b: Vec<f64> = gaussian_vector(seed + 300 + t as u64, m)
            .iter()
            .map(|c| c.re)
            .collect();
        let v = gaussian_vector(seed + 400 + t as u64, n);
        let fast = crate::measurement::apply_lift_adjoint(&ens, &b, None, &v).unwrap();
        let slow = dense.adjoint(&b, None).apply(&v);
        worst = worst.max(cvec_rel_err(&fast, &slow));
    }
    AuditOutcome::at_most(
        "adjoint_factored_vs_dense",
        worst,
        1e-9,
        "10 instances, n <= 8".into(),
    )
}

fn audit_retraction(seed: u64) -> AuditOutcome {
    let mut worst: f64 = 0.0;
    for t in 0..20 {
        let n = 2 + t % 15;
        let s = seed + 500 + t as u64;
        let z = gaussian_vector(s, n);
        let anchor = Rank1Point::new(z.clone()).unwrap();
        let v = gaussian_vector(s + 1, n);
        let step = crate::manifold::normalize_tangent_param(&anchor, &v).unwrap();
        let scale = 0.3;
        let fast = crate::manifold::retract_rank1(&anchor, &step, scale).unwrap();
        let target = DenseHermitian::outer(1.0, &z)
            .add_scaled(scale, &DenseHermitian::from_factored(&step.to_factored()));
        let (lambda, u) = dense_rank1_trunc_svd(&target);
        let slow = DenseHermitian::outer(lambda, &u);
        let got = DenseHermitian::outer(1.0, fast.factor());
        worst = worst.max(got.add_scaled(-1.0, &slow).frob_norm() / slow.frob_norm());
    }
    AuditOutcome::at_most(
        "retraction_vs_dense_eigen",
        worst,
        1e-9,
        "20 instances, n <= 16".into(),
    )
}

fn audit_tangent_norm(seed: u64) -> AuditOutcome {
    let mut worst: f64 = 0.0;
    for t in 0..20 {
        let n = 2 + t % 15;
        let s = seed + 700 + t as u64;
        let anchor = Rank1Point::new(gaussian_vector(s, n)).unwrap();
        let tv =
            crate::manifold::normalize_tangent_param(&anchor, &gaussian_vector(s + 1, n)).unwrap();
        let dense = DenseHermitian::from_factored(&tv.to_factored());
        for kind in [
            MetricKind::Canonical,
            MetricKind::WfPseudo,
            MetricKind::Weighted,
        ] {
            worst = worst.max(relative(
                tv.norm_sqr(kind),
                dense.metric_inner(kind, &dense),
            ));
        }
    }
    AuditOutcome::at_most(
        "tangent_norm_closed_form",
        worst,
        1e-10,
        "20 tangents x 3 metrics".into(),
    )
}

/// Finite-difference check of the weighted Riemannian gradient on an
/// untruncated instance.
pub fn gradient_fd_error(n: usize, m: usize, seed: u64, directions: usize, h: f64) -> f64 {
    let ens = MeasurementEnsemble::sample(n, m, seed).unwrap();
    let dense = DenseSensing::from_ensemble(&ens);
    let x = gaussian_vector(seed + 1, n);
    let y = dense.lift(&DenseHermitian::outer(1.0, &x), None);
    let yv = crate::measurement::IntensityVector::new(y.clone()).unwrap();
    let z = gaussian_vector(seed + 2, n);
    let mut cfg = crate::solvers::SolverConfig::for_solver(crate::solvers::SolverKind::Twrgd);
    cfg.truncated = false;
    let parts = crate::solvers::riemannian_gradient(&ens, &yv, &z, &cfg).unwrap();
    let anchor = Rank1Point::new(z.clone()).unwrap();
    // descent direction is the negative gradient
    let grad =
        DenseHermitian::from_factored(&parts.tangent(&anchor, MetricKind::Weighted).to_factored())
            .scaled(-1.0);
    let zz = DenseHermitian::outer(1.0, &z);
    let objective = |w: &DenseHermitian| dense.least_squares(&y, w, None);
    let mut worst: f64 = 0.0;
    for d in 0..directions {
        let b = random_tangent(&z, seed + 10 + d as u64);
        // same scale as Z so that h is a relative step
        let b = b.scaled(zz.frob_norm() / b.frob_norm());
        let fd = finite_diff_directional(&objective, &zz, &b, h);
        let analytic = grad.metric_inner(MetricKind::Weighted, &b);
        worst = worst.max(relative(fd, analytic));
    }
    worst
}

fn audit_gradient(seed: u64) -> AuditOutcome {
    let worst = gradient_fd_error(8, 80, seed + 900, 5, 1e-5);
    AuditOutcome::at_most(
        "gradient_finite_difference",
        worst,
        1e-5,
        "n = 8, 5 directions".into(),
    )
}

fn audit_moment_quadrature() -> AuditOutcome {
    let mut worst: f64 = 0.0;
    for tau in [0.5, 1.0, 2.0, 3.0, 4.5, 6.0] {
        let a = moments_closed_form(tau);
        let b = moments_quadrature(tau, 1e-13);
        worst = worst
            .max((a.beta1_hat - b.beta1_hat).abs())
            .max((a.beta2_hat - b.beta2_hat).abs());
    }
    AuditOutcome::at_most(
        "moment_closed_form_vs_quadrature",
        worst,
        1e-10,
        "tau1 in [0.5, 6]".into(),
    )
}

fn audit_wf_equivalence(seed: u64) -> AuditOutcome {
    use crate::measurement::{forward_intensities, TruncationMask};
    let n = 8;
    let ens = MeasurementEnsemble::sample(n, 10 * n, seed + 1100).unwrap();
    let x = gaussian_vector(seed + 1101, n);
    let y = forward_intensities(&ens, &x).unwrap();
    let mut zv = gaussian_vector(seed + 1102, n);
    let mut zm = Rank1Point::new(zv.clone()).unwrap();
    let mask = TruncationMask::all(ens.m());
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        zv = crate::solvers::wf_vector_step(&ens, &y, &zv, &mask, 0.2).unwrap();
        zm = crate::solvers::wf_manifold_step(&ens, &y, &zm, &mask, 0.2).unwrap();
        let a = DenseHermitian::outer(1.0, &zv);
        let b = DenseHermitian::outer(1.0, zm.factor());
        worst = worst.max(a.add_scaled(-1.0, &b).frob_norm() / a.frob_norm());
    }
    AuditOutcome::at_most(
        "wf_vector_vs_manifold",
        worst,
        1e-10,
        "n = 8, 10 iterations".into(),
    )
}

/// Largest phase-free gap between production and dense TWRGD trajectories.
pub fn solver_equivalence_gap(n: usize, m: usize, steps: usize, seed: u64) -> Result<f64> {
    use crate::measurement::forward_intensities;
    use crate::solvers::{rgd_step, SolverConfig, SolverKind};
    let ens = MeasurementEnsemble::sample(n, m, seed)?;
    let dense = DenseSensing::from_ensemble(&ens);
    let x = gaussian_vector(seed + 1, n);
    let y = forward_intensities(&ens, &x)?;
    let z0 = perturbed_point(&x, 0.3, seed + 2);
    let cfg = SolverConfig::for_solver(SolverKind::Twrgd);
    let slow = dense_rgd_trajectory(
        &dense,
        y.values(),
        &z0,
        MetricKind::Weighted,
        Some(cfg.truncation),
        steps,
    )?;
    let mut point = Rank1Point::new(z0)?;
    let mut worst: f64 = 0.0;
    for reference in &slow[1..] {
        point = rgd_step(&ens, &y, &point, &cfg)?;
        let gap = phase_aligned_gap(point.factor(), reference);
        worst = worst.max(gap / column(reference).norm());
    }
    Ok(worst)
}

/// `min_phi ||z - e^{i phi} r||` computed by explicit alignment.
fn phase_aligned_gap(z: &[C64], r: &[C64]) -> f64 {
    let zc = column(z);
    let rc = column(r);
    let ip = rc.dotc(&zc);
    let phase = if ip.norm() > 0.0 {
        ip / ip.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    (zc - rc * phase).norm()
}

fn audit_solver_equivalence(seed: u64) -> AuditOutcome {
    let worst = solver_equivalence_gap(8, 64, 20, seed + 1300).unwrap_or(f64::INFINITY);
    AuditOutcome::at_most(
        "solver_vector_vs_dense",
        worst,
        1e-8,
        "n = 8, 20 iterations".into(),
    )
}

fn audit_near_isometry(seed: u64) -> AuditOutcome {
    let report = rayleigh_quotients(16, 400 * 16, 200, seed + 1500, Some(Truncation::default()));
    let (lo, hi) = report.range(MetricKind::Weighted);
    let dev = (1.0 - lo).max(hi - 1.0);
    AuditOutcome::at_most(
        "near_isometry_weighted",
        dev,
        0.25,
        format!("quotients in [{lo:.4}, {hi:.4}], n = 16, m = 400n, 200 tangents"),
    )
}

fn audit_weak_correlation(seed: u64) -> AuditOutcome {
    let n = 16;
    let m = 400 * n;
    let sensing = DenseSensing::sample(n, m, seed + 1600, 13);
    let x = gaussian_vector(seed + 1601, n);
    let xx = DenseHermitian::outer(1.0, &x);
    let y = sensing.lift(&xx, None);
    let mut worst: f64 = 0.0;
    for t in 0..10 {
        let z = perturbed_point(&x, 0.05, seed + 1700 + t);
        let zz = DenseHermitian::outer(1.0, &z);
        let h = zz.add_scaled(-1.0, &xx);
        let normal = h.add_scaled(
            -1.0,
            &dense_gradient_operator(MetricKind::Canonical, &z, &h),
        );
        let mask = sensing.truncation_mask(&y, &z, Truncation::default());
        let b = sensing.lift(&normal, Some(&mask));
        let v =
            dense_gradient_operator(MetricKind::Weighted, &z, &sensing.adjoint(&b, Some(&mask)));
        let ratio = v.metric_inner(MetricKind::Weighted, &v).sqrt() / h.frob_norm();
        worst = worst.max(ratio);
    }
    AuditOutcome::at_most(
        "weak_correlation",
        worst,
        0.5,
        "engineering tolerance; 10 points with ||Z - X||_F <= 0.05 ||X||_F".into(),
    )
}

fn audit_lift_expectation(seed: u64) -> AuditOutcome {
    let n = 6;
    let w = DenseHermitian::random(n, seed + 1800);
    let target = w.trace().powi(2) + w.frob_norm().powi(2);
    let (mean, se) = mc_expectation_lift(&w, 200, 50 * n, seed + 1801).unwrap();
    AuditOutcome::at_most(
        "lift_expectation",
        (mean - target).abs() / se,
        4.0,
        format!("mean {mean:.4} vs target {target:.4}, in standard errors"),
    )
}

fn audit_matrix_moments(seed: u64) -> AuditOutcome {
    let mut z = gaussian_vector(seed + 1900, 4);
    let zn = column(&z).norm();
    z.iter_mut().for_each(|c| *c /= zn);
    let dev = mc_truncated_matrix_moments(&z, 4.5, 200_000, seed + 1901).unwrap();
    AuditOutcome::at_most(
        "truncated_matrix_moments",
        dev.hermitian_dev.max(dev.symmetric_dev),
        0.05,
        format!("n = 4, m = {}", dev.m),
    )
}

fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

fn cvec_rel_err(a: &[C64], b: &[C64]) -> f64 {
    (column(a) - column(b)).norm() / column(b).norm().max(1e-300)
}
