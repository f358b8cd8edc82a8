//! Exponent algebra for reduced Kronecker powers.
//!
//! A degree-`k` reduced power of a state `X ∈ Rⁿ` keeps one slot per distinct
//! monomial `X^α` with `|α| = k`. Slots are ordered by descending
//! lexicographic order of the exponent vectors, so for `n = 2` the degree-2
//! power is `(x₁², x₁x₂, x₂²)` and the degree-3 power is
//! `(x₁³, x₁²x₂, x₁x₂², x₂³)`. Every weight block, parser and serializer in
//! the crate uses this ordering. Slot values carry no multiplicity factor.
//!
//! Memory grows as `C(n+k-1, k)` per degree; sizes up to `n = 12, k = 5` are
//! exercised.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Binomial coefficient, exact in `u64` for the sizes used here.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 1..=k as u64 {
        acc = acc * (n as u64 - k as u64 + i) / i;
    }
    acc as usize
}

/// Number of distinct monomials of degree `k` in `n` variables.
pub fn monomial_count(n: usize, k: usize) -> usize {
    assert!(n >= 1, "state dimension must be at least 1");
    binomial(n + k - 1, k)
}

/// Exponent vector of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    exponents: Vec<u32>,
}

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex { exponents }
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex {
            exponents: vec![0; n],
        }
    }

    /// `x_m`, the unit exponent vector.
    pub fn unit(n: usize, m: usize) -> Self {
        let mut exponents = vec![0; n];
        exponents[m] = 1;
        MultiIndex { exponents }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn degree(&self) -> usize {
        self.exponents.iter().map(|&e| e as usize).sum()
    }

    /// Exponent-wise sum, i.e. the exponent of `X^α · X^β`.
    pub fn product(&self, other: &MultiIndex) -> Result<MultiIndex> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(MultiIndex {
            exponents: self
                .exponents
                .iter()
                .zip(&other.exponents)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// `α - e_m`, or `None` when `α_m = 0`.
    pub fn lowered(&self, m: usize) -> Option<MultiIndex> {
        if self.exponents[m] == 0 {
            return None;
        }
        let mut exponents = self.exponents.clone();
        exponents[m] -= 1;
        Some(MultiIndex { exponents })
    }

    /// Evaluates `X^α`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .map(|(&e, &v)| v.powi(e as i32))
            .product()
    }
}

/// Product of two monomials; see [`MultiIndex::product`].
pub fn monomial_product(a: &MultiIndex, b: &MultiIndex) -> Result<MultiIndex> {
    a.product(b)
}

/// All multi-indices of one degree in descending lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    n: usize,
    k: usize,
    entries: Vec<MultiIndex>,
}

impl MonomialBasis {
    pub fn new(n: usize, k: usize) -> Self {
        assert!(n >= 1, "state dimension must be at least 1");
        let mut entries = Vec::with_capacity(monomial_count(n, k));
        let mut current = vec![0u32; n];
        fill_descending(&mut current, 0, k as u32, &mut entries);
        MonomialBasis { n, k, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MultiIndex] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &MultiIndex {
        &self.entries[i]
    }

    /// Position of `alpha` in this basis.
    pub fn index_of(&self, alpha: &MultiIndex) -> Result<usize> {
        if alpha.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: alpha.dim(),
            });
        }
        if alpha.degree() != self.k {
            return Err(Error::DegreeMismatch {
                expected: self.k,
                got: alpha.degree(),
            });
        }
        Ok(rank(alpha.exponents()))
    }
}

fn fill_descending(current: &mut [u32], m: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    let n = current.len();
    if m + 1 == n {
        current[m] = remaining;
        out.push(MultiIndex::new(current.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        current[m] = e;
        fill_descending(current, m + 1, remaining - e, out);
    }
    current[m] = 0;
}

/// Descending-lex rank of an exponent vector among vectors of equal degree.
///
/// At coordinate `m` with `r` degrees left, the entries that precede are those
/// with a larger exponent at `m`; they number the monomials of degree
/// `< r - α_m` in the remaining `n - m - 1` variables.
fn rank(exponents: &[u32]) -> usize {
    let n = exponents.len();
    let mut r: usize = exponents.iter().map(|&e| e as usize).sum();
    let mut pos = 0;
    for (m, &a) in exponents.iter().enumerate().take(n.saturating_sub(1)) {
        let a = a as usize;
        if r > a {
            let vars = n - m - 1;
            let d = r - a - 1;
            pos += binomial(vars + d, d);
        }
        r -= a;
    }
    pos
}

/// Degree-`k` reduced Kronecker power of `x`. `k = 0` gives `[1.0]`.
pub fn reduced_power(x: &[f64], k: usize) -> Vec<f64> {
    let basis = MonomialBasis::new(x.len(), k);
    basis.entries().iter().map(|a| a.eval(x)).collect()
}

/// Jacobian of [`reduced_power`]: entry `(i, m) = ∂X^{α_i}/∂x_m`.
pub fn reduced_power_jacobian(x: &[f64], k: usize) -> DMatrix<f64> {
    let n = x.len();
    let basis = MonomialBasis::new(n, k);
    let mut jac = DMatrix::zeros(basis.len(), n);
    for (i, alpha) in basis.entries().iter().enumerate() {
        for m in 0..n {
            if let Some(lower) = alpha.lowered(m) {
                jac[(i, m)] = alpha.exponents()[m] as f64 * lower.eval(x);
            }
        }
    }
    jac
}

/// Precomputed bases and index links for all degrees `0..=order` of one state
/// dimension. Hot paths (map application, backpropagation, composition) go
/// through this instead of re-enumerating bases.
#[derive(Debug, Clone)]
pub struct PowerTable {
    n: usize,
    order: usize,
    bases: Vec<MonomialBasis>,
    // factors[k][i] = (index in degree k-1, variable) with X^{α_i} = X^{parent} · x_var
    factors: Vec<Vec<(usize, usize)>>,
    // partials[k][i] = (variable m, α_m, index of α - e_m in degree k-1)
    partials: Vec<Vec<Vec<(usize, f64, usize)>>>,
    offsets: Vec<usize>,
}

impl PowerTable {
    pub fn new(n: usize, order: usize) -> Self {
        let bases: Vec<MonomialBasis> = (0..=order).map(|k| MonomialBasis::new(n, k)).collect();
        let mut factors = vec![Vec::new()];
        let mut partials = vec![vec![Vec::new()]];
        for k in 1..=order {
            let lower = &bases[k - 1];
            let mut fk = Vec::with_capacity(bases[k].len());
            let mut pk = Vec::with_capacity(bases[k].len());
            for alpha in bases[k].entries() {
                let mut first = None;
                let mut parts = Vec::new();
                for m in 0..n {
                    if let Some(l) = alpha.lowered(m) {
                        let idx = rank(l.exponents());
                        debug_assert_eq!(lower.entry(idx), &l);
                        if first.is_none() {
                            first = Some((idx, m));
                        }
                        parts.push((m, alpha.exponents()[m] as f64, idx));
                    }
                }
                fk.push(first.expect("degree >= 1 has a nonzero exponent"));
                pk.push(parts);
            }
            factors.push(fk);
            partials.push(pk);
        }
        let mut offsets = Vec::with_capacity(order + 2);
        let mut acc = 0;
        for b in &bases {
            offsets.push(acc);
            acc += b.len();
        }
        offsets.push(acc);
        PowerTable {
            n,
            order,
            bases,
            factors,
            partials,
            offsets,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn basis(&self, k: usize) -> &MonomialBasis {
        &self.bases[k]
    }

    /// Start of degree `k` in the degree-major concatenation of all bases.
    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    /// Total number of monomials of degree `0..=order`.
    pub fn total_len(&self) -> usize {
        self.offsets[self.order + 1]
    }

    /// Reduced powers of `x` for every degree `0..=order`.
    pub fn powers(&self, x: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(x.len(), self.n);
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.order + 1);
        out.push(vec![1.0]);
        for k in 1..=self.order {
            let prev = &out[k - 1];
            let cur: Vec<f64> = self.factors[k]
                .iter()
                .map(|&(p, m)| prev[p] * x[m])
                .collect();
            out.push(cur);
        }
        out
    }

    /// Jacobian of the degree-`k` reduced power, given `powers` from
    /// [`PowerTable::powers`] at the same point.
    pub fn jacobian(&self, k: usize, powers: &[Vec<f64>]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.bases[k].len(), self.n);
        if k == 0 {
            return jac;
        }
        for (i, parts) in self.partials[k].iter().enumerate() {
            for &(m, e, idx) in parts {
                jac[(i, m)] = e * powers[k - 1][idx];
            }
        }
        jac
    }

    /// Adds `Jᵀ v` to `out`, where `J` is the Jacobian of the degree-`k`
    /// reduced power at the point that produced `powers`.
    pub fn pullback(&self, k: usize, powers: &[Vec<f64>], v: &[f64], out: &mut [f64]) {
        if k == 0 {
            return;
        }
        for (i, parts) in self.partials[k].iter().enumerate() {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for &(m, e, idx) in parts {
                out[m] += vi * e * powers[k - 1][idx];
            }
        }
    }

    /// For a degree-`k` monomial index `i`, the pairs `(m, α_m, j)` with
    /// `∂X^α/∂x_m = α_m X^{α_j}` in degree `k-1`.
    pub fn partials(&self, k: usize, i: usize) -> &[(usize, f64, usize)] {
        &self.partials[k][i]
    }

    /// For a degree-`k ≥ 1` monomial index `i`, a factorisation
    /// `X^{α_i} = X^{α_j} · x_m` returned as `(j, m)`.
    pub fn factor(&self, k: usize, i: usize) -> (usize, usize) {
        self.factors[k][i]
    }
}
