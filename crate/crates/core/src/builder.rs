//! Building Lie maps from polynomial ODEs and composing them.
//!
//! The map blocks `M^{ik}` of all degrees `i, k ≤ K` obey the linear matrix
//! ODE `d/dt M^{ik} = Σ_j P^{ij} M^{jk}` with `M^{kk}(0) = I`, `M^{jk}(0) = 0`
//! for `j ≠ k`. The builder assembles the induced blocks `P^{ij}` into one
//! matrix over the degree-major monomial basis `1, X, X^{[2]}, …, X^{[K]}`,
//! integrates with fixed-step RK4 and reads the map off the degree-1 block
//! row. The degree-0 row stays fixed (`d/dt 1 = 0`); the degree-0 column only
//! becomes nonzero when the ODE has constant terms.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::map::LieMap;
use crate::monomial::{monomial_count, PowerTable};
use crate::ode::PolynomialODE;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuilderConfig {
    /// Truncation order `K`.
    pub order: usize,
    /// RK4 steps per map time step.
    pub substeps: usize,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        BuilderConfig {
            order: 3,
            substeps: 100,
        }
    }
}

impl BuilderConfig {
    pub fn new(order: usize) -> Self {
        BuilderConfig {
            order,
            ..Default::default()
        }
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidConfig("map order must be at least 1".into()));
        }
        if self.substeps < 1 {
            return Err(Error::InvalidConfig("substeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Generator of the truncated block system over the degree-major basis.
pub fn block_generator(ode: &PolynomialODE, order: usize) -> DMatrix<f64> {
    let n = ode.n();
    let table = PowerTable::new(n, order);
    let dim = table.total_len();
    let mut gen = DMatrix::zeros(dim, dim);
    for i in 1..=order {
        let lo = i - 1;
        let hi = (i + ode.degree() - 1).min(order);
        for j in lo..=hi {
            let block = ode.induced_block(i, j);
            gen.view_mut(
                (table.offset(i), table.offset(j)),
                (block.nrows(), block.ncols()),
            )
            .copy_from(&block);
        }
    }
    gen
}

/// Integrates the block system over `dt` and returns the truncated map.
pub fn build_map(ode: &PolynomialODE, dt: f64, config: &BuilderConfig) -> Result<LieMap> {
    config.validate()?;
    if !dt.is_finite() {
        return Err(Error::NonFinite("time step".into()));
    }
    let n = ode.n();
    let order = config.order;
    let gen = block_generator(ode, order);
    let dim = gen.nrows();
    let h = dt / config.substeps as f64;

    let mut m = DMatrix::<f64>::identity(dim, dim);
    for step in 0..config.substeps {
        let k1 = &gen * &m;
        let k2 = &gen * (&m + &k1 * (0.5 * h));
        let k3 = &gen * (&m + &k2 * (0.5 * h));
        let k4 = &gen * (&m + &k3 * h);
        m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                context: "map build".into(),
                step,
                message: format!("non-finite block entries after RK4 substep {step}"),
            });
        }
    }

    let table = PowerTable::new(n, order);
    let row0 = table.offset(1);
    let weights = (0..=order)
        .map(|k| {
            m.view((row0, table.offset(k)), (n, monomial_count(n, k)))
                .into_owned()
        })
        .collect();
    LieMap::from_weights(ode.variable_names().to_vec(), dt, weights)
}

/// Multiplication table for polynomials truncated at a fixed degree, over
/// the degree-major monomial basis of a [`PowerTable`].
struct TruncatedAlgebra {
    table: PowerTable,
    // (a, b, a·b) over the global basis with deg a + deg b ≤ order
    products: Vec<(usize, usize, usize)>,
}

impl TruncatedAlgebra {
    fn new(n: usize, order: usize) -> Self {
        let table = PowerTable::new(n, order);
        let mut products = Vec::new();
        for ka in 0..=order {
            for kb in 0..=(order - ka) {
                let bc = table.basis(ka + kb);
                for (ia, a) in table.basis(ka).entries().iter().enumerate() {
                    for (ib, b) in table.basis(kb).entries().iter().enumerate() {
                        let c = bc.index_of(&a.product(b).expect("same n")).expect("degree");
                        products.push((
                            table.offset(ka) + ia,
                            table.offset(kb) + ib,
                            table.offset(ka + kb) + c,
                        ));
                    }
                }
            }
        }
        TruncatedAlgebra { table, products }
    }

    fn mul(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len()];
        for &(i, j, k) in &self.products {
            out[k] += a[i] * b[j];
        }
        out
    }
}

/// `second ∘ first`, truncated at degree `order`.
///
/// Each component of `first` is a polynomial; its reduced powers are formed
/// by repeated truncated multiplication and contracted with the blocks of
/// `second`. Terms above `order` are dropped.
pub fn compose(first: &LieMap, second: &LieMap, order: usize) -> Result<LieMap> {
    if first.n() != second.n() {
        return Err(Error::DimensionMismatch {
            expected: first.n(),
            got: second.n(),
        });
    }
    let n = first.n();
    let order = order.max(1);
    let alg = TruncatedAlgebra::new(n, order);
    let total = alg.table.total_len();

    let components: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let mut p = vec![0.0; total];
            for k in 0..=first.order().min(order) {
                let w = first.weight(k);
                let off = alg.table.offset(k);
                for c in 0..w.ncols() {
                    p[off + c] = w[(r, c)];
                }
            }
            p
        })
        .collect();

    // powers[k][i] = (first)^{α_i} for α_i of degree k
    let outer = PowerTable::new(n, second.order());
    let mut one = vec![0.0; total];
    one[0] = 1.0;
    let mut powers: Vec<Vec<Vec<f64>>> = vec![vec![one]];
    for k in 1..=second.order() {
        let prev = &powers[k - 1];
        let cur = (0..outer.basis(k).len())
            .map(|i| {
                let (parent, m) = outer.factor(k, i);
                alg.mul(&prev[parent], &components[m])
            })
            .collect();
        powers.push(cur);
    }

    let mut result = vec![vec![0.0; total]; n];
    for (w, level) in second.weights().iter().zip(&powers) {
        for (r, out) in result.iter_mut().enumerate() {
            for (i, p) in level.iter().enumerate() {
                let c = w[(r, i)];
                if c == 0.0 {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(p) {
                    *o += c * v;
                }
            }
        }
    }

    let weights = (0..=order)
        .map(|k| {
            let off = alg.table.offset(k);
            DMatrix::from_fn(n, monomial_count(n, k), |r, c| result[r][off + c])
        })
        .collect();
    LieMap::from_weights(first.variable_names().to_vec(), first.dt() + second.dt(), weights)
}

/// Folds a sequence of maps left to right: the first map acts first.
pub fn compose_all(maps: &[LieMap], order: usize) -> Result<LieMap> {
    let Some((head, rest)) = maps.split_first() else {
        return Err(Error::InvalidConfig("nothing to compose".into()));
    };
    let mut acc = head.truncated(order);
    for m in rest {
        acc = compose(&acc, m, order)?;
    }
    Ok(acc)
}
