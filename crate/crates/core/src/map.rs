//! Truncated polynomial maps `Y = W_0 + W_1 X + W_2 X^{[2]} + … + W_K X^{[K]}`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::monomial::{monomial_count, PowerTable};

/// Weight blocks of a truncated matrix Lie map over a time step `dt`.
#[derive(Debug, Clone)]
pub struct LieMap {
    names: Vec<String>,
    dt: f64,
    weights: Vec<DMatrix<f64>>,
    table: PowerTable,
}

impl PartialEq for LieMap {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.dt == other.dt && self.weights == other.weights
    }
}

impl LieMap {
    /// Validates shapes (`W_k` is `n × C(n+k-1, k)`) and finiteness.
    pub fn from_weights(names: Vec<String>, dt: f64, weights: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::EmptySystem);
        }
        if weights.len() < 2 {
            return Err(Error::InvalidConfig("a map needs blocks W_0 and W_1 at least".into()));
        }
        if !dt.is_finite() {
            return Err(Error::NonFinite("map time step".into()));
        }
        for (k, w) in weights.iter().enumerate() {
            let cols = monomial_count(n, k);
            if w.nrows() != n || w.ncols() != cols {
                return Err(Error::InvalidConfig(format!(
                    "weight block {k} has shape {}x{}, expected {n}x{cols}",
                    w.nrows(),
                    w.ncols()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("entry of weight block {k}")));
            }
        }
        let table = PowerTable::new(n, weights.len() - 1);
        Ok(LieMap {
            names,
            dt,
            weights,
            table,
        })
    }

    /// `W_1 = I`, every other block zero.
    pub fn identity(names: Vec<String>, order: usize, dt: f64) -> Result<Self> {
        let n = names.len();
        let order = order.max(1);
        let weights = (0..=order)
            .map(|k| {
                if k == 1 {
                    DMatrix::identity(n, n)
                } else {
                    DMatrix::zeros(n, monomial_count(n.max(1), k))
                }
            })
            .collect();
        Self::from_weights(names, dt, weights)
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn order(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn variable_names(&self) -> &[String] {
        &self.names
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> &DMatrix<f64> {
        &self.weights[k]
    }

    pub fn table(&self) -> &PowerTable {
        &self.table
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.weights
    }

    /// Same map with blocks above `order` dropped (or zero-padded up to it).
    pub fn truncated(&self, order: usize) -> LieMap {
        let n = self.n();
        let order = order.max(1);
        let weights = (0..=order)
            .map(|k| {
                self.weights
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| DMatrix::zeros(n, monomial_count(n, k)))
            })
            .collect();
        LieMap::from_weights(self.names.clone(), self.dt, weights).expect("shapes preserved")
    }

    /// Total number of scalar weights.
    pub fn num_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    /// Serializes to the JSON map document. Every number is written with 17
    /// significant digits so that reading the document back is bit-exact.
    pub fn to_json(&self) -> String {
        let mut s = String::new();
        s.push_str("{\n");
        let _ = writeln!(s, "  \"n\": {},", self.n());
        let _ = writeln!(s, "  \"order\": {},", self.order());
        let _ = writeln!(s, "  \"dt\": {},", fmt_f64(self.dt));
        let names: Vec<String> = self
            .names
            .iter()
            .map(|n| serde_json::to_string(n).expect("string serializes"))
            .collect();
        let _ = writeln!(s, "  \"variable_names\": [{}],", names.join(", "));
        s.push_str("  \"weights\": [\n");
        for (k, w) in self.weights.iter().enumerate() {
            s.push_str("    [\n");
            for r in 0..w.nrows() {
                let row: Vec<String> = w.row(r).iter().map(|&v| fmt_f64(v)).collect();
                let sep = if r + 1 == w.nrows() { "" } else { "," };
                let _ = writeln!(s, "      [{}]{sep}", row.join(", "));
            }
            let sep = if k + 1 == self.weights.len() { "" } else { "," };
            let _ = writeln!(s, "    ]{sep}");
        }
        s.push_str("  ]\n}\n");
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MapDocument = serde_json::from_str(text)?;
        if doc.variable_names.len() != doc.n {
            return Err(Error::Data(format!(
                "map document declares n = {} but lists {} variable names",
                doc.n,
                doc.variable_names.len()
            )));
        }
        if doc.weights.len() != doc.order + 1 {
            return Err(Error::Data(format!(
                "map document declares order {} but carries {} weight blocks",
                doc.order,
                doc.weights.len()
            )));
        }
        let mut weights = Vec::with_capacity(doc.weights.len());
        for (k, rows) in doc.weights.iter().enumerate() {
            let cols = monomial_count(doc.n.max(1), k);
            if rows.len() != doc.n || rows.iter().any(|r| r.len() != cols) {
                return Err(Error::Data(format!(
                    "weight block {k} must be {}x{cols}",
                    doc.n
                )));
            }
            weights.push(DMatrix::from_fn(doc.n, cols, |r, c| rows[r][c]));
        }
        LieMap::from_weights(doc.variable_names, doc.dt, weights)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[derive(Deserialize)]
struct MapDocument {
    n: usize,
    order: usize,
    dt: f64,
    variable_names: Vec<String>,
    weights: Vec<Vec<Vec<f64>>>,
}

/// Decimal with 17 significant digits.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // keep the sign bit of -0.0
        return if v.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    format!("{v:.16e}")
}
