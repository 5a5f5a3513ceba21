//! Complex Gaussian sensing ensembles and the lifted measurement operator.
//!
//! An ensemble holds `m` sensing vectors `a_k` of length `n`. The phaseless
//! forward map is `y_k = |a_k^* x|^2`; its lifted counterpart acts linearly on
//! Hermitian matrices as `Z -> [a_k^* Z a_k]_k`. Truncated variants zero the
//! entries rejected by a [`TruncationMask`].

use std::io::{Read, Write};
use std::path::Path;

use crate::cvec::{axpy, dot, norm, norm_sqr};
use crate::error::{Error, Result};
use crate::hermitian::FactoredHermitian;
use crate::rng;
use crate::C64;

/// Magic bytes opening a binary ensemble dump.
pub const ENSEMBLE_MAGIC: &[u8; 8] = b"WRGDENS1";
/// Header length of a binary ensemble dump: magic, `n: u32`, `m: u32`, `seed: u64`.
pub const ENSEMBLE_HEADER_LEN: usize = 24;

const ZERO: C64 = C64::new(0.0, 0.0);

/// The sensing vectors `a_1, ..., a_m`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEnsemble {
    n: usize,
    m: usize,
    rows: Vec<C64>,
    row_norm_sq_sum: f64,
    seed: u64,
}

impl MeasurementEnsemble {
    /// Draws every entry i.i.d. as `N(0,1/2) + i N(0,1/2)` from the stream
    /// keyed by `seed`.
    pub fn sample(n: usize, m: usize, seed: u64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::invalid(format!(
                "ensemble dimensions must be positive (n={n}, m={m})"
            )));
        }
        let mut stream = rng::stream(seed);
        let rows = rng::complex_normal_vec(&mut stream, n * m);
        Ok(Self::assemble(n, m, rows, seed))
    }

    /// Wraps explicit sensing vectors, given row-major (`m` rows of length `n`).
    pub fn from_rows(n: usize, m: usize, rows: Vec<C64>, seed: u64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::invalid("ensemble dimensions must be positive"));
        }
        if rows.len() != n * m {
            return Err(Error::invalid(format!(
                "expected {} entries for {m} rows of length {n}, got {}",
                n * m,
                rows.len()
            )));
        }
        Ok(Self::assemble(n, m, rows, seed))
    }

    fn assemble(n: usize, m: usize, rows: Vec<C64>, seed: u64) -> Self {
        let row_norm_sq_sum = norm_sqr(&rows);
        Self {
            n,
            m,
            rows,
            row_norm_sq_sum,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `sum_k ||a_k||^2`.
    pub fn row_norm_sq_sum(&self) -> f64 {
        self.row_norm_sq_sum
    }

    pub fn row(&self, k: usize) -> &[C64] {
        &self.rows[k * self.n..(k + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[C64]> {
        self.rows.chunks_exact(self.n)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.rows
    }

    fn check_len(&self, v: &[C64], what: &str) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::invalid(format!(
                "{what} has length {}, ensemble dimension is {}",
                v.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// `[a_k^* v]_k`.
    pub fn project(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.check_len(v, "vector")?;
        Ok(self.project_unchecked(v))
    }

    pub(crate) fn project_unchecked(&self, v: &[C64]) -> Vec<C64> {
        self.rows().map(|a| dot(a, v)).collect()
    }

    /// `sum_k coeffs_k a_k`.
    pub(crate) fn combine(&self, coeffs: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.n];
        for (a, &c) in self.rows().zip(coeffs) {
            if c != ZERO {
                axpy(c, a, &mut out);
            }
        }
        out
    }

    /// Serializes to the binary dump format: a 24-byte header followed by
    /// little-endian interleaved `(re, im)` `f64` pairs, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ENSEMBLE_HEADER_LEN + 16 * self.rows.len());
        out.extend_from_slice(ENSEMBLE_MAGIC);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for c in &self.rows {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < ENSEMBLE_HEADER_LEN || &bytes[..8] != ENSEMBLE_MAGIC {
            return Err(Error::Format("missing WRGDENS1 header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let n = u32_at(8);
        let m = u32_at(12);
        let seed = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let body = &bytes[ENSEMBLE_HEADER_LEN..];
        let expected = n
            .checked_mul(m)
            .and_then(|e| e.checked_mul(16))
            .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
        if body.len() != expected {
            return Err(Error::Format(format!(
                "body has {} bytes, header implies {expected}",
                body.len()
            )));
        }
        let rows = body
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        Self::from_rows(n, m, rows, seed)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

/// See [`MeasurementEnsemble::sample`].
pub fn sample_ensemble(n: usize, m: usize, seed: u64) -> Result<MeasurementEnsemble> {
    MeasurementEnsemble::sample(n, m, seed)
}

/// Nonnegative intensities with their cached `l1` norm.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVector {
    y: Vec<f64>,
    l1: f64,
}

impl IntensityVector {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if let Some(k) = y.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!(
                "intensity {k} is not a finite nonnegative number ({})",
                y[k]
            )));
        }
        let l1 = y.iter().sum();
        Ok(Self { y, l1 })
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `c * y`, used to check homogeneity of downstream maps.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.y.iter().map(|v| c * v).collect())
    }
}

/// `y_k = |a_k^* x|^2`.
pub fn forward_intensities(ens: &MeasurementEnsemble, x: &[C64]) -> Result<IntensityVector> {
    let proj = ens.project(x)?;
    IntensityVector::new(proj.iter().map(|p| p.norm_sqr()).collect())
}

/// Truncation thresholds `(tau0, tau1, tau2)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Truncation {
    pub tau0: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            tau0: 7.0,
            tau1: 4.5,
            tau2: 8.0,
        }
    }
}

impl Truncation {
    pub fn validate(&self) -> Result<()> {
        if [self.tau0, self.tau1, self.tau2]
            .iter()
            .all(|t| *t > 0.0 && !t.is_nan())
        {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "truncation thresholds must be positive: {self:?}"
            )))
        }
    }
}

/// Per-event kept counts of a [`TruncationMask`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MaskCounts {
    pub intensity: usize,
    pub projection: usize,
    pub residual: usize,
    pub kept: usize,
}

/// Which measurements survive the intensity, projection and residual tests.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationMask {
    keep: Vec<bool>,
    counts: MaskCounts,
}

impl TruncationMask {
    /// Keeps every index.
    pub fn all(m: usize) -> Self {
        Self {
            keep: vec![true; m],
            counts: MaskCounts {
                intensity: m,
                projection: m,
                residual: m,
                kept: m,
            },
        }
    }

    /// Mask from explicit flags. Per-event counts are unknown and all set to
    /// the kept count.
    pub fn from_keep(keep: Vec<bool>) -> Self {
        let kept = keep.iter().filter(|k| **k).count();
        Self {
            keep,
            counts: MaskCounts {
                intensity: kept,
                projection: kept,
                residual: kept,
                kept,
            },
        }
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn counts(&self) -> MaskCounts {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.counts.kept as f64 / self.keep.len().max(1) as f64
    }
}

fn check_mask(mask: Option<&TruncationMask>, m: usize) -> Result<()> {
    match mask {
        Some(mask) if mask.len() != m => Err(Error::invalid(format!(
            "mask has {} entries, ensemble has {m} rows",
            mask.len()
        ))),
        _ => Ok(()),
    }
}

/// Builds the truncation mask at iterate `z` from precomputed projections
/// `proj_k = a_k^* z`. The residual norm `||y - A(z z^*)||_1` is recomputed
/// from `proj` on every call.
pub fn truncation_mask_from_projections(
    y: &IntensityVector,
    proj: &[C64],
    z_norm: f64,
    tau: Truncation,
) -> Result<TruncationMask> {
    tau.validate()?;
    if !(z_norm > 0.0) {
        return Err(Error::invalid("truncation needs a nonzero iterate"));
    }
    if proj.len() != y.len() {
        return Err(Error::invalid("projection and intensity lengths differ"));
    }
    let m = y.len() as f64;
    let yv = y.values();
    let intensity_cut = tau.tau0 * (y.l1() / m).sqrt();
    let projection_cut = tau.tau1 * z_norm;
    let residual_l1: f64 = yv
        .iter()
        .zip(proj)
        .map(|(yk, p)| (yk - p.norm_sqr()).abs())
        .sum();
    let residual_scale = tau.tau2 / m * residual_l1 / z_norm;

    let mut counts = MaskCounts::default();
    let keep = yv
        .iter()
        .zip(proj)
        .map(|(&yk, p)| {
            let amp = p.norm();
            let sy = yk.sqrt();
            let e0 = sy <= intensity_cut;
            let e1 = amp <= projection_cut;
            let e2 = (yk - p.norm_sqr()).abs() <= residual_scale * (amp + sy);
            counts.intensity += e0 as usize;
            counts.projection += e1 as usize;
            counts.residual += e2 as usize;
            let k = e0 && e1 && e2;
            counts.kept += k as usize;
            k
        })
        .collect();
    Ok(TruncationMask { keep, counts })
}

/// Truncation mask at iterate `z`: index `k` is kept iff
/// `sqrt(y_k) <= tau0 sqrt(||y||_1/m)`, `|a_k^* z| <= tau1 ||z||` and
/// `|y_k - |a_k^* z|^2| <= (tau2/m) ||y - A(zz^*)||_1 (|a_k^* z| + sqrt(y_k)) / ||z||`.
pub fn truncation_mask(
    ens: &MeasurementEnsemble,
    y: &IntensityVector,
    z: &[C64],
    tau: Truncation,
) -> Result<TruncationMask> {
    if y.len() != ens.m() {
        return Err(Error::invalid("intensity length does not match ensemble"));
    }
    let proj = ens.project(z)?;
    truncation_mask_from_projections(y, &proj, norm(z), tau)
}

/// `[<a_k a_k^*, Z>]_k` for a factored Hermitian `Z`, zeroed where the mask
/// rejects `k`. Costs `O(m n r)` for `r` terms.
pub fn apply_lift(
    ens: &MeasurementEnsemble,
    z: &FactoredHermitian,
    mask: Option<&TruncationMask>,
) -> Result<Vec<f64>> {
    if z.n() != ens.n() {
        return Err(Error::invalid("operand dimension does not match ensemble"));
    }
    check_mask(mask, ens.m())?;
    let mut out = vec![0.0; ens.m()];
    for t in z.terms() {
        let pl = ens.project_unchecked(&t.left);
        let pr = if t.left == t.right {
            pl.clone()
        } else {
            ens.project_unchecked(&t.right)
        };
        for (o, (l, r)) in out.iter_mut().zip(pl.iter().zip(&pr)) {
            *o += 2.0 * t.coef * (l * r.conj()).re;
        }
    }
    apply_mask(&mut out, mask);
    Ok(out)
}

/// Same as [`apply_lift`] for an explicit `n x n` row-major matrix. The input
/// must be Hermitian to within `1e-10` relative asymmetry.
pub fn apply_lift_dense(
    ens: &MeasurementEnsemble,
    z: &[C64],
    mask: Option<&TruncationMask>,
) -> Result<Vec<f64>> {
    let n = ens.n();
    if z.len() != n * n {
        return Err(Error::invalid("dense operand must be n x n"));
    }
    check_mask(mask, ens.m())?;
    let scale = norm(z);
    let asym = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (z[i * n + j] - z[j * n + i].conj()).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if asym > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::invalid(format!(
            "operand is not Hermitian (asymmetry {asym:.3e} vs norm {scale:.3e})"
        )));
    }
    let mut out: Vec<f64> = ens
        .rows()
        .map(|a| {
            let za: Vec<C64> = z.chunks_exact(n).map(|row| dot_plain(row, a)).collect();
            dot(a, &za).re
        })
        .collect();
    apply_mask(&mut out, mask);
    Ok(out)
}

fn dot_plain(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn apply_mask(out: &mut [f64], mask: Option<&TruncationMask>) {
    if let Some(mask) = mask {
        for (o, &k) in out.iter_mut().zip(mask.keep()) {
            if !k {
                *o = 0.0;
            }
        }
    }
}

/// `(1/m) sum_{k kept} b_k a_k (a_k^* v)`: the adjoint of the (masked) lift
/// applied to `v`, without forming the `n x n` matrix.
pub fn apply_lift_adjoint(
    ens: &MeasurementEnsemble,
    b: &[f64],
    mask: Option<&TruncationMask>,
    v: &[C64],
) -> Result<Vec<C64>> {
    if b.len() != ens.m() {
        return Err(Error::invalid(format!(
            "coefficient vector has length {}, ensemble has {} rows",
            b.len(),
            ens.m()
        )));
    }
    ens.check_len(v, "vector")?;
    check_mask(mask, ens.m())?;
    let inv_m = 1.0 / ens.m() as f64;
    let mut out = vec![ZERO; ens.n()];
    for (k, a) in ens.rows().enumerate() {
        if b[k] == 0.0 || mask.is_some_and(|mk| !mk.keep()[k]) {
            continue;
        }
        axpy(b[k] * inv_m * dot(a, v), a, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn sample_rejects_zero_dimensions() {
        assert!(matches!(
            sample_ensemble(0, 5, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(sample_ensemble(3, 0, 0).is_err());
    }

    #[test]
    fn sample_is_deterministic() {
        let a = sample_ensemble(1, 1, 99).unwrap();
        let b = sample_ensemble(1, 1, 99).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let c = sample_ensemble(1, 1, 100).unwrap();
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn sample_entries_have_unit_modulus_on_average() {
        let (n, m) = (4, 10_000);
        let ens = sample_ensemble(n, m, 7).unwrap();
        let count = (n * m) as f64;
        let mean = ens.as_slice().iter().map(|a| a.norm_sqr()).sum::<f64>() / count;
        let stderr = 1.0 / count.sqrt();
        assert!((mean - 1.0).abs() < 3.0 * stderr, "mean {mean}");
        let recomputed: f64 = ens.rows().map(norm_sqr).sum();
        assert!((recomputed - ens.row_norm_sq_sum()).abs() <= 1e-12 * recomputed);
    }

    #[test]
    fn forward_uses_conjugate_inner_product() {
        let ens = MeasurementEnsemble::from_rows(1, 1, vec![c(1.0, 0.0)], 0).unwrap();
        let y = forward_intensities(&ens, &[c(1.0, 1.0)]).unwrap();
        assert_eq!(y.values(), &[2.0]);

        let ens = MeasurementEnsemble::from_rows(1, 1, vec![c(0.0, 1.0)], 0).unwrap();
        let y = forward_intensities(&ens, &[c(1.0, 0.0)]).unwrap();
        assert!((y.values()[0] - 1.0).abs() < 1e-15);

        assert!(forward_intensities(&ens, &[c(1.0, 0.0), c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn lift_of_outer_product_is_forward_map() {
        let ens = sample_ensemble(8, 32, 3).unwrap();
        let x = rng::complex_normal_vec(&mut rng::stream(4), 8);
        let y = forward_intensities(&ens, &x).unwrap();
        let lifted = apply_lift(&ens, &FactoredHermitian::outer(1.0, &x), None).unwrap();
        for (a, b) in y.values().iter().zip(&lifted) {
            assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
        assert!((y.l1() - y.values().iter().sum::<f64>()).abs() <= 1e-12 * y.l1());
    }

    #[test]
    fn lift_of_identity_is_row_norm() {
        let n = 3;
        let ens = sample_ensemble(n, 1, 5).unwrap();
        let mut eye = vec![ZERO; n * n];
        for i in 0..n {
            eye[i * n + i] = c(1.0, 0.0);
        }
        let out = apply_lift_dense(&ens, &eye, None).unwrap();
        assert!((out[0] - norm_sqr(ens.row(0))).abs() < 1e-12);
    }

    #[test]
    fn dense_lift_rejects_non_hermitian() {
        let ens = sample_ensemble(2, 3, 5).unwrap();
        let z = vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(
            apply_lift_dense(&ens, &z, None),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn adjoint_single_term_and_zero() {
        let ens = sample_ensemble(4, 6, 8).unwrap();
        let v = rng::complex_normal_vec(&mut rng::stream(9), 4);
        let mut b = vec![0.0; 6];
        b[2] = 6.0;
        let out = apply_lift_adjoint(&ens, &b, None, &v).unwrap();
        let a = ens.row(2);
        let expect: Vec<C64> = a.iter().map(|ai| ai * dot(a, &v)).collect();
        for (o, e) in out.iter().zip(&expect) {
            assert!((o - e).norm() < 1e-12);
        }
        let zero = apply_lift_adjoint(&ens, &[0.0; 6], None, &v).unwrap();
        assert!(zero.iter().all(|z| *z == ZERO));
        assert!(apply_lift_adjoint(&ens, &[0.0; 5], None, &v).is_err());
    }

    #[test]
    fn exact_iterate_passes_residual_test() {
        let ens = sample_ensemble(6, 40, 12).unwrap();
        let x = rng::complex_normal_vec(&mut rng::stream(13), 6);
        let y = forward_intensities(&ens, &x).unwrap();
        let mask = truncation_mask(&ens, &y, &x, Truncation::default()).unwrap();
        assert_eq!(mask.counts().residual, 40);
    }

    #[test]
    fn large_projection_is_rejected() {
        let tau = Truncation::default();
        let z = [c(1.0, 0.0), c(0.0, 0.0)];
        // |a^* z| = 2 tau1 ||z||
        let rows = vec![
            c(2.0 * tau.tau1, 0.0),
            c(0.0, 0.0),
            c(0.5, 0.0),
            c(0.1, 0.0),
        ];
        let ens = MeasurementEnsemble::from_rows(2, 2, rows, 0).unwrap();
        let y = IntensityVector::new(vec![1.0, 1.0]).unwrap();
        let mask = truncation_mask(&ens, &y, &z, tau).unwrap();
        assert!(!mask.keep()[0]);
        assert!(truncation_mask(&ens, &y, &[ZERO, ZERO], tau).is_err());
    }

    #[test]
    fn binary_dump_roundtrip_and_header() {
        let ens = sample_ensemble(3, 5, 0xDEAD_BEEF).unwrap();
        let bytes = ens.to_bytes();
        assert_eq!(&bytes[..8], b"WRGDENS1");
        assert_eq!(bytes.len(), 24 + 3 * 5 * 16);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 5);
        assert_eq!(
            u64::from_le_bytes(bytes[16..24].try_into().unwrap()),
            0xDEAD_BEEF
        );
        // first entry, real part then imaginary part
        let re = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
        let im = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
        assert_eq!(C64::new(re, im), ens.row(0)[0]);
        assert_eq!(MeasurementEnsemble::from_bytes(&bytes).unwrap(), ens);
        assert!(MeasurementEnsemble::from_bytes(&bytes[..30]).is_err());
    }

    #[test]
    fn intensities_must_be_nonnegative() {
        assert!(IntensityVector::new(vec![1.0, -0.5]).is_err());
        assert!(IntensityVector::new(vec![f64::NAN]).is_err());
    }
}
