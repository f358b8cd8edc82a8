//! Translating a map back into polynomial ODE coefficients.
//!
//! The inverse problem is solved with the forward builder in the loop: find
//! right-hand-side coefficients `P` whose built map matches the given weights
//! in the least-squares sense. The linear block is seeded from the principal
//! matrix logarithm of `W_1`, the remaining blocks from `W_k / dt`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::builder::{build_map, BuilderConfig};
use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::map::{fmt_f64, LieMap};
use crate::monomial::monomial_count;
use crate::ode::PolynomialODE;

/// `A` with `exp(A·dt) = W_1`, by inverse scaling and squaring.
pub fn linear_log(map: &LieMap) -> Result<DMatrix<f64>> {
    let dt = map.dt();
    if dt == 0.0 {
        return Err(Error::NoPrincipalLog("map time step is zero".into()));
    }
    let w1 = map.weight(1);
    let log = principal_log(w1)?;
    let a = log / dt;
    let residual = ((&a * dt).exp() - w1).abs().max();
    if residual.is_nan() || residual >= 1e-8 {
        return Err(Error::NoPrincipalLog(format!(
            "logarithm residual {residual:e} exceeds 1e-8"
        )));
    }
    Ok(a)
}

/// Principal logarithm of a real matrix without eigenvalues on the closed
/// negative real axis.
pub fn principal_log(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    let scale = m.abs().max().max(1.0);
    for ev in m.complex_eigenvalues().iter() {
        if ev.im.abs() <= 1e-12 * scale && ev.re <= 0.0 {
            return Err(Error::NoPrincipalLog(format!(
                "eigenvalue {} on the closed negative real axis",
                ev.re
            )));
        }
    }
    let id = DMatrix::<f64>::identity(n, n);
    let mut b = m.clone();
    let mut squarings = 0;
    while (&b - &id).abs().row_sum().max() > 0.25 {
        if squarings >= 64 {
            return Err(Error::NoPrincipalLog("square roots failed to approach identity".into()));
        }
        b = sqrt_denman_beavers(&b)?;
        squarings += 1;
    }
    // log(I + X) = X - X²/2 + X³/3 - …, with ‖X‖₁ ≤ 1/4
    let x = &b - &id;
    let mut term = x.clone();
    let mut sum = x.clone();
    for j in 2..=60 {
        term = &term * &x;
        let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
        sum += &term * (sign / j as f64);
        if term.abs().max() < 1e-18 {
            break;
        }
    }
    Ok(sum * 2f64.powi(squarings))
}

fn sqrt_denman_beavers(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut y = m.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let yi = y
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NoPrincipalLog("singular iterate in square root".into()))?;
        let zi = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NoPrincipalLog("singular iterate in square root".into()))?;
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let delta = (&y_next - &y).abs().max();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.abs().max().max(1.0) {
            return Ok(y);
        }
    }
    Ok(y)
}

/// Which coefficients of each right-hand-side block are free.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityTemplate {
    masks: Vec<DMatrix<bool>>,
}

impl SparsityTemplate {
    /// Every coefficient of degree `0..=degree` free.
    pub fn full(n: usize, degree: usize) -> Self {
        SparsityTemplate {
            masks: (0..=degree)
                .map(|k| DMatrix::from_element(n, monomial_count(n, k), true))
                .collect(),
        }
    }

    /// Free exactly where `ode` has a nonzero coefficient.
    pub fn from_ode(ode: &PolynomialODE) -> Self {
        SparsityTemplate {
            masks: ode.blocks().iter().map(|b| b.map(|v| v != 0.0)).collect(),
        }
    }

    pub fn from_masks(masks: Vec<DMatrix<bool>>) -> Self {
        SparsityTemplate { masks }
    }

    pub fn degree(&self) -> usize {
        self.masks.len().saturating_sub(1)
    }

    pub fn masks(&self) -> &[DMatrix<bool>] {
        &self.masks
    }

    pub fn free_count(&self) -> usize {
        self.masks.iter().map(|m| m.iter().filter(|&&b| b).count()).sum()
    }

    fn check(&self, n: usize, degree: usize) -> Result<()> {
        if self.masks.len() != degree + 1 {
            return Err(Error::InvalidConfig(format!(
                "template covers degree {}, target degree is {degree}",
                self.degree()
            )));
        }
        for (k, m) in self.masks.iter().enumerate() {
            if m.nrows() != n || m.ncols() != monomial_count(n, k) {
                return Err(Error::InvalidConfig(format!("template block {k} has wrong shape")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpretConfig {
    pub builder: BuilderConfig,
    pub max_iterations: usize,
    /// Largest total squared residual still reported as converged.
    pub acceptance: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    pub execution: Execution,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        InterpretConfig {
            builder: BuilderConfig::default(),
            max_iterations: 100,
            acceptance: 1e-8,
            fd_step: 1e-6,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interpretation {
    pub ode: PolynomialODE,
    /// `‖build_map(ode)_k - W_k‖²_F` per block.
    pub block_residuals: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the linear block was seeded from the matrix logarithm.
    pub log_initialized: bool,
}

impl Interpretation {
    /// Structured residual report (JSON).
    pub fn report(&self) -> String {
        let blocks: Vec<String> = self.block_residuals.iter().map(|&v| fmt_f64(v)).collect();
        let mut s = String::from("{\n");
        let _ = writeln!(s, "  \"converged\": {},", self.converged);
        let _ = writeln!(s, "  \"iterations\": {},", self.iterations);
        let _ = writeln!(s, "  \"log_initialized\": {},", self.log_initialized);
        let _ = writeln!(s, "  \"residual\": {},", fmt_f64(self.residual));
        let _ = writeln!(s, "  \"block_residuals\": [{}]", blocks.join(", "));
        s.push_str("}\n");
        s
    }
}

struct Problem<'a> {
    target: &'a LieMap,
    names: Vec<String>,
    degree: usize,
    free: Vec<(usize, usize, usize)>,
    builder: BuilderConfig,
}

impl Problem<'_> {
    fn ode(&self, params: &[f64]) -> Result<PolynomialODE> {
        let n = self.names.len();
        let mut blocks: Vec<DMatrix<f64>> = (0..=self.degree)
            .map(|k| DMatrix::zeros(n, monomial_count(n, k)))
            .collect();
        for (&(k, r, c), &v) in self.free.iter().zip(params) {
            blocks[k][(r, c)] = v;
        }
        PolynomialODE::from_blocks(self.names.clone(), blocks)
    }

    fn residual_vector(&self, params: &[f64]) -> Result<DVector<f64>> {
        let built = build_map(&self.ode(params)?, self.target.dt(), &self.builder)?;
        let len: usize = self.target.weights().iter().map(|w| w.len()).sum();
        let mut r = DVector::zeros(len);
        let mut i = 0;
        for (b, w) in built.weights().iter().zip(self.target.weights()) {
            for (x, y) in b.iter().zip(w.iter()) {
                r[i] = x - y;
                i += 1;
            }
        }
        Ok(r)
    }
}

/// Fits polynomial ODE coefficients of degree `≤ degree` whose built map
/// reproduces `map`. Non-convergence is reported through
/// [`Interpretation::converged`], not as an error.
pub fn map_to_ode(
    map: &LieMap,
    degree: usize,
    template: Option<&SparsityTemplate>,
    config: &InterpretConfig,
) -> Result<Interpretation> {
    if degree < 1 {
        return Err(Error::InvalidConfig("target degree must be at least 1".into()));
    }
    let n = map.n();
    let full;
    let template = match template {
        Some(t) => {
            t.check(n, degree)?;
            t
        }
        None => {
            full = SparsityTemplate::full(n, degree);
            &full
        }
    };
    let builder = BuilderConfig {
        order: map.order(),
        ..config.builder
    };

    let mut free = Vec::new();
    for (k, mask) in template.masks().iter().enumerate() {
        for c in 0..mask.ncols() {
            for r in 0..n {
                if mask[(r, c)] {
                    free.push((k, r, c));
                }
            }
        }
    }
    let problem = Problem {
        target: map,
        names: map.variable_names().to_vec(),
        degree,
        free,
        builder,
    };

    // Seed: log(W_1)/dt for the linear block, W_k/dt elsewhere.
    let dt = map.dt();
    let log = linear_log(map).ok();
    let log_initialized = log.is_some();
    let mut params: Vec<f64> = problem
        .free
        .iter()
        .map(|&(k, r, c)| match (k, &log) {
            (1, Some(a)) => a[(r, c)],
            (1, None) => 0.0,
            _ if k <= map.order() && dt != 0.0 => map.weight(k)[(r, c)] / dt,
            _ => 0.0,
        })
        .collect();

    let mut resid = problem.residual_vector(&params)?;
    let mut cost = resid.norm_squared();
    let mut damping = 1e-3;
    let mut iterations = 0;
    let np = params.len();
    while iterations < config.max_iterations && np > 0 && cost > 0.0 {
        iterations += 1;
        let columns = map_range(np, config.execution, |j| -> Result<DVector<f64>> {
            let h = config.fd_step * params[j].abs().max(1.0);
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[j] += h;
            minus[j] -= h;
            let rp = problem.residual_vector(&plus)?;
            let rm = problem.residual_vector(&minus)?;
            Ok((rp - rm) / (2.0 * h))
        });
        let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
        let jac = DMatrix::from_columns(&columns);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &resid;

        let mut improved = false;
        for _ in 0..30 {
            let mut lhs = jtj.clone();
            for d in 0..np {
                lhs[(d, d)] += damping * jtj[(d, d)].max(1e-30);
            }
            let Some(step) = lhs.cholesky().map(|c| c.solve(&(-&jtr))) else {
                damping *= 10.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            match problem.residual_vector(&trial) {
                Ok(r) if r.norm_squared() < cost => {
                    let new_cost = r.norm_squared();
                    let rel = (cost - new_cost) / cost.max(1e-300);
                    params = trial;
                    resid = r;
                    cost = new_cost;
                    damping = (damping * 0.3).max(1e-12);
                    improved = rel > 1e-12;
                    break;
                }
                _ => damping *= 10.0,
            }
        }
        if !improved {
            break;
        }
    }

    let ode = problem.ode(&params)?;
    let built = build_map(&ode, dt, &builder)?;
    let block_residuals: Vec<f64> = built
        .weights()
        .iter()
        .zip(map.weights())
        .map(|(b, w)| (b - w).norm_squared())
        .collect();
    let residual: f64 = block_residuals.iter().sum();
    Ok(Interpretation {
        ode,
        converged: residual <= config.acceptance,
        block_residuals,
        residual,
        iterations,
        log_initialized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::parse_ode;
    use nalgebra::dmatrix;

    fn map_with_w1(w1: DMatrix<f64>, dt: f64) -> LieMap {
        let n = w1.nrows();
        LieMap::from_weights(
            (0..n).map(|i| format!("x{i}")).collect(),
            dt,
            vec![DMatrix::zeros(n, 1), w1],
        )
        .unwrap()
    }

    #[test]
    fn log_of_identity_is_zero() {
        let a = linear_log(&map_with_w1(DMatrix::identity(3, 3), 0.1)).unwrap();
        assert_eq!(a, DMatrix::zeros(3, 3));
    }

    #[test]
    fn log_of_rotation() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let a = linear_log(&map_with_w1(dmatrix![c, -s; s, c], 0.3)).unwrap();
        assert!((a - dmatrix![0.0, -1.0; 1.0, 0.0]).abs().max() < 1e-8);
    }

    #[test]
    fn log_of_diagonal() {
        let w = dmatrix![0.2f64.exp(), 0.0; 0.0, (-0.1f64).exp()];
        let a = linear_log(&map_with_w1(w, 1.0)).unwrap();
        assert!((a - dmatrix![0.2, 0.0; 0.0, -0.1]).abs().max() < 1e-12);
    }

    #[test]
    fn log_of_large_rotation_needs_square_roots() {
        let th = 2.5f64;
        let (c, s) = (th.cos(), th.sin());
        let a = principal_log(&dmatrix![3.0 * c, -3.0 * s; 3.0 * s, 3.0 * c]).unwrap();
        let expected = dmatrix![3f64.ln(), -th; th, 3f64.ln()];
        assert!((a - expected).abs().max() < 1e-10);
    }

    #[test]
    fn negative_eigenvalue_has_no_principal_log() {
        let m = map_with_w1(dmatrix![-1.0, 0.0; 0.0, 2.0], 1.0);
        assert!(matches!(linear_log(&m), Err(Error::NoPrincipalLog(_))));
        let m = map_with_w1(dmatrix![0.0, 0.0; 0.0, 2.0], 1.0);
        assert!(matches!(linear_log(&m), Err(Error::NoPrincipalLog(_))));
    }

    #[test]
    fn identity_map_gives_zero_ode() {
        let id = LieMap::identity(vec!["x".into(), "y".into()], 3, 0.1).unwrap();
        let res = map_to_ode(&id, 2, None, &InterpretConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.residual, 0.0);
        assert!(res.ode.blocks().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn scalar_decay_round_trip() {
        let ode = parse_ode("x' = -0.5*x").unwrap();
        let m = build_map(&ode, 0.1, &BuilderConfig::new(2)).unwrap();
        let res = map_to_ode(&m, 1, None, &InterpretConfig::default()).unwrap();
        assert!(res.converged);
        assert!((res.ode.block(1)[(0, 0)] + 0.5).abs() < 1e-6);
    }

    #[test]
    fn template_pins_zeros() {
        let ode = parse_ode("x' = -y - x*y ; y' = x + x*y").unwrap();
        let m = build_map(&ode, 0.1, &BuilderConfig::new(3)).unwrap();
        // Only allow x' = a*y + b*x*y, y' = c*x + d*x*y.
        let tmpl = SparsityTemplate::from_ode(&parse_ode("x' = y + x*y + 0*x ; y' = x + x*y").unwrap());
        let tmpl = SparsityTemplate::from_masks(tmpl.masks().to_vec());
        let res = map_to_ode(&m, 2, Some(&tmpl), &InterpretConfig::default()).unwrap();
        for (k, mask) in tmpl.masks().iter().enumerate() {
            for (free, v) in mask.iter().zip(res.ode.block(k).iter()) {
                if !free {
                    assert_eq!(*v, 0.0);
                }
            }
        }
        assert!((res.ode.block(1)[(0, 1)] + 1.0).abs() < 1e-6);
        assert!((res.ode.block(2)[(1, 1)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn template_shape_checked() {
        let id = LieMap::identity(vec!["x".into()], 2, 0.1).unwrap();
        let t = SparsityTemplate::full(1, 3);
        assert!(map_to_ode(&id, 2, Some(&t), &InterpretConfig::default()).is_err());
        assert!(map_to_ode(&id, 0, None, &InterpretConfig::default()).is_err());
    }

    #[test]
    fn report_is_json() {
        let id = LieMap::identity(vec!["x".into()], 2, 0.1).unwrap();
        let res = map_to_ode(&id, 1, None, &InterpretConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&res.report()).unwrap();
        assert_eq!(v["converged"], true);
        assert_eq!(v["block_residuals"].as_array().unwrap().len(), 3);
    }
}
