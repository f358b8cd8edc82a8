//! Classical fixed-step RK4 for [`PolynomialODE`]s.
//!
//! Reference machinery for demos and accuracy checks: the Lie-map path never
//! calls it.

use crate::error::{Error, Result};
use crate::monomial::PowerTable;
use crate::ode::PolynomialODE;
use crate::propagator::Trajectory;

/// RK4 integrator bound to one ODE.
pub struct Rk4<'a> {
    ode: &'a PolynomialODE,
    table: PowerTable,
}

impl<'a> Rk4<'a> {
    pub fn new(ode: &'a PolynomialODE) -> Self {
        Rk4 {
            ode,
            table: PowerTable::new(ode.n(), ode.degree()),
        }
    }

    pub fn rhs(&self, x: &[f64]) -> Vec<f64> {
        self.ode.eval_with(&self.table, x)
    }

    pub fn step(&self, x: &[f64], h: f64) -> Vec<f64> {
        let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> {
            a.iter().zip(k).map(|(p, q)| p + s * q).collect()
        };
        let k1 = self.rhs(x);
        let k2 = self.rhs(&axpy(x, &k1, 0.5 * h));
        let k3 = self.rhs(&axpy(x, &k2, 0.5 * h));
        let k4 = self.rhs(&axpy(x, &k3, h));
        x.iter()
            .enumerate()
            .map(|(i, v)| v + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    /// Integrates `samples` intervals of length `dt`, each split into
    /// `substeps` RK4 steps, and returns the `samples + 1` sampled states.
    pub fn trajectory(&self, x0: &[f64], dt: f64, samples: usize, substeps: usize) -> Result<Trajectory> {
        if x0.len() != self.ode.n() {
            return Err(Error::DimensionMismatch {
                expected: self.ode.n(),
                got: x0.len(),
            });
        }
        let substeps = substeps.max(1);
        let h = dt / substeps as f64;
        let mut states = Vec::with_capacity(samples + 1);
        let mut x = x0.to_vec();
        states.push(x.clone());
        for i in 1..=samples {
            for _ in 0..substeps {
                x = self.step(&x, h);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    context: "reference integration".into(),
                    step: i,
                    message: "non-finite state".into(),
                });
            }
            states.push(x.clone());
        }
        Ok(Trajectory {
            dt,
            t0: 0.0,
            states,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::parse_ode;

    #[test]
    fn exponential_decay() {
        let ode = parse_ode("x' = -0.5*x").unwrap();
        let t = Rk4::new(&ode).trajectory(&[2.0], 0.1, 10, 10).unwrap();
        assert_eq!(t.len(), 11);
        assert!((t.last()[0] - 2.0 * (-0.5f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn dimension_checked() {
        let ode = parse_ode("x' = y ; y' = -x").unwrap();
        assert!(Rk4::new(&ode).trajectory(&[1.0], 0.1, 1, 1).is_err());
    }
}
