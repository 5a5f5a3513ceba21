//! Low-rank Hermitian matrices kept as sums of symmetrized outer products.

use crate::cvec::{axpy, dot};
use crate::error::{Error, Result};
use crate::C64;

/// Anything that can act on vectors as an `n x n` Hermitian matrix.
pub trait HermitianAction {
    fn dim(&self) -> usize;

    /// `W v`.
    fn apply(&self, v: &[C64]) -> Vec<C64>;

    /// `v^* W v`, real for Hermitian `W`.
    fn quad(&self, v: &[C64]) -> f64 {
        dot(v, &self.apply(v)).re
    }
}

/// `coef * (left right^* + right left^*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTerm {
    pub coef: f64,
    pub left: Vec<C64>,
    pub right: Vec<C64>,
}

/// A Hermitian matrix `sum_i coef_i (l_i r_i^* + r_i l_i^*)`.
///
/// Each term has rank at most two. Phase retrieval only ever needs a rank-1
/// point `z z^*`, a tangent vector `z w^* + w z^*`, or their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredHermitian {
    n: usize,
    terms: Vec<SymTerm>,
}

impl FactoredHermitian {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: Vec::new(),
        }
    }

    /// `scale * v v^*`.
    pub fn outer(scale: f64, v: &[C64]) -> Self {
        Self {
            n: v.len(),
            terms: vec![SymTerm {
                coef: 0.5 * scale,
                left: v.to_vec(),
                right: v.to_vec(),
            }],
        }
    }

    /// `z w^* + w z^*`.
    pub fn sym_pair(z: &[C64], w: &[C64]) -> Result<Self> {
        if z.len() != w.len() {
            return Err(Error::invalid(format!(
                "factor lengths differ: {} vs {}",
                z.len(),
                w.len()
            )));
        }
        Ok(Self {
            n: z.len(),
            terms: vec![SymTerm {
                coef: 1.0,
                left: z.to_vec(),
                right: w.to_vec(),
            }],
        })
    }

    pub fn push(&mut self, coef: f64, left: &[C64], right: &[C64]) -> Result<()> {
        if left.len() != self.n || right.len() != self.n {
            return Err(Error::invalid(
                "term length does not match matrix dimension",
            ));
        }
        self.terms.push(SymTerm {
            coef,
            left: left.to_vec(),
            right: right.to_vec(),
        });
        Ok(())
    }

    /// `self + scale * other`.
    pub fn plus(&self, scale: f64, other: &FactoredHermitian) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::invalid("dimension mismatch"));
        }
        let mut out = self.clone();
        out.terms.extend(other.terms.iter().map(|t| SymTerm {
            coef: scale * t.coef,
            ..t.clone()
        }));
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[SymTerm] {
        &self.terms
    }

    pub fn trace(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| 2.0 * t.coef * dot(&t.right, &t.left).re)
            .sum()
    }

    /// Trace inner product `Re tr(A B)`.
    pub fn frob_inner(&self, other: &FactoredHermitian) -> Result<f64> {
        if other.n != self.n {
            return Err(Error::invalid("dimension mismatch"));
        }
        let mut acc = 0.0;
        for a in &self.terms {
            for b in &other.terms {
                // tr((l1 r1* + r1 l1*)(l2 r2* + r2 l2*)), expanded term by term
                let s = dot(&a.right, &b.left) * dot(&b.right, &a.left)
                    + dot(&a.right, &b.right) * dot(&b.left, &a.left)
                    + dot(&a.left, &b.left) * dot(&b.right, &a.right)
                    + dot(&a.left, &b.right) * dot(&b.left, &a.right);
                acc += a.coef * b.coef * s.re;
            }
        }
        Ok(acc)
    }

    pub fn frob_norm_sqr(&self) -> f64 {
        self.frob_inner(self).expect("same dimension")
    }
}

impl HermitianAction for FactoredHermitian {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        for t in &self.terms {
            axpy(t.coef * dot(&t.right, v), &t.left, &mut out);
            axpy(t.coef * dot(&t.left, v), &t.right, &mut out);
        }
        out
    }

    fn quad(&self, v: &[C64]) -> f64 {
        self.terms
            .iter()
            .map(|t| 2.0 * t.coef * (dot(v, &t.left) * dot(v, &t.right).conj()).re)
            .sum()
    }
}
