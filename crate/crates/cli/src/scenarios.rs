//! Benchmark systems and dataset generators shared by the demos and the
//! acceptance suite.

use lienet_core::reference::Rk4;
use lienet_core::{parse_ode, PolynomialODE, Result, Sequence, TimeSeriesDataset, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LOTKA_VOLTERRA: &str = "x' = -y - x*y\ny' = x + x*y\n";
pub const VAN_DER_POL: &str = "x' = y\ny' = y - x - x^2*y\n";
pub const HENON_HEILES: &str =
    "q1' = p1\nq2' = p2\np1' = -q1 - 2*q1*q2\np2' = -q2 - q1^2 + q2^2\n";

/// Initial condition of the Hénon–Heiles section run.
pub const HENON_HEILES_X0: [f64; 4] = [0.0, 0.670, 0.093, 0.0];

/// `H = (p1² + p2²)/2 + (q1² + q2²)/2 + q1² q2 − q2³/3` for `(q1, q2, p1, p2)`.
pub fn henon_heiles_energy(x: &[f64]) -> f64 {
    let (q1, q2, p1, p2) = (x[0], x[1], x[2], x[3]);
    0.5 * (p1 * p1 + p2 * p2) + 0.5 * (q1 * q1 + q2 * q2) + q1 * q1 * q2 - q2.powi(3) / 3.0
}

pub fn lotka_volterra() -> PolynomialODE {
    parse_ode(LOTKA_VOLTERRA).expect("bundled system parses")
}

pub fn van_der_pol() -> PolynomialODE {
    parse_ode(VAN_DER_POL).expect("bundled system parses")
}

pub fn henon_heiles() -> PolynomialODE {
    parse_ode(HENON_HEILES).expect("bundled system parses")
}

/// SIR epidemic model in population fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct Sir {
    pub beta: f64,
    pub gamma: f64,
    pub population: f64,
    pub dt: f64,
    pub steps: usize,
    pub train_x0: [f64; 3],
    pub test_x0: Vec<[f64; 3]>,
}

impl Default for Sir {
    fn default() -> Self {
        Sir {
            beta: 5.0,
            gamma: 0.1,
            population: 10.0,
            dt: 0.1,
            steps: 100,
            train_x0: [0.99, 0.01, 0.0],
            test_x0: vec![[0.4, 0.1, 0.0], [1.0, 0.0, 0.0]],
        }
    }
}

impl Sir {
    /// `S' = −β/N·I·S`, `I' = β/N·I·S − γ·I`, `R' = γ·I`.
    pub fn ode(&self) -> PolynomialODE {
        let c = self.beta / self.population;
        let g = self.gamma;
        let text = format!("S' = -{c:?}*I*S\nI' = {c:?}*I*S - {g:?}*I\nR' = {g:?}*I\n");
        parse_ode(&text).expect("generated system parses")
    }

    pub fn truth(&self, x0: &[f64]) -> Result<Trajectory> {
        let ode = self.ode();
        Rk4::new(&ode).trajectory(x0, self.dt, self.steps, 1)
    }

    pub fn training_set(&self) -> Result<TimeSeriesDataset> {
        let ode = self.ode();
        let traj = self.truth(&self.train_x0)?;
        TimeSeriesDataset::from_trajectories(ode.variable_names().to_vec(), &[traj])
    }
}

/// Synthetic partially observed run: a fixed quadratic system sampled on
/// `[0, 1]`, with only the first and last state of every sequence kept.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub dt: f64,
    pub steps: usize,
    pub train_sequences: usize,
    pub held_out: usize,
    pub seed: u64,
}

pub const HIDDEN_STATE_ODE: &str =
    "x' = -0.5*x + 0.2*y*z\ny' = 0.3*x - 0.4*y\nz' = -0.2*z + 0.1*x*y\n";

impl Default for HiddenState {
    fn default() -> Self {
        HiddenState {
            dt: 0.005,
            steps: 200,
            train_sequences: 10,
            held_out: 5,
            seed: 0,
        }
    }
}

impl HiddenState {
    pub fn ode(&self) -> PolynomialODE {
        parse_ode(HIDDEN_STATE_ODE).expect("bundled system parses")
    }

    /// Initial conditions uniform on `[0, 1)³`: training ones first, then
    /// the held-out ones.
    pub fn initial_conditions(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.train_sequences + self.held_out)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect()
    }

    pub fn trajectories(&self) -> Result<Vec<Trajectory>> {
        let ode = self.ode();
        let rk = Rk4::new(&ode);
        self.initial_conditions()
            .iter()
            .map(|x0| rk.trajectory(x0, self.dt, self.steps, 1))
            .collect()
    }

    /// Training sequences with every interior state hidden.
    pub fn dataset(&self, trajectories: &[Trajectory]) -> Result<TimeSeriesDataset> {
        let ode = self.ode();
        let n = ode.n();
        let sequences = trajectories[..self.train_sequences]
            .iter()
            .map(|tr| {
                let last = tr.states.len() - 1;
                let mut states = tr.states.clone();
                let mut mask = vec![vec![false; n]; states.len()];
                for (i, (s, m)) in states.iter_mut().zip(mask.iter_mut()).enumerate() {
                    if i == 0 || i == last {
                        m.fill(true);
                    } else {
                        s.fill(0.0);
                    }
                }
                Sequence { states, mask }
            })
            .collect();
        TimeSeriesDataset::new(ode.variable_names().to_vec(), self.dt, sequences)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sir_coefficients() {
        let ode = Sir::default().ode();
        assert_eq!(ode.variable_names(), ["S", "I", "R"]);
        let d = ode.eval_rhs(&[0.5, 0.2, 0.3]).unwrap();
        assert!((d[0] + 0.05).abs() < 1e-15);
        assert!((d[1] - 0.03).abs() < 1e-15);
        assert!((d[2] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn hidden_state_masks_interior() {
        let h = HiddenState::default();
        let trajs = h.trajectories().unwrap();
        assert_eq!(trajs.len(), 15);
        let data = h.dataset(&trajs).unwrap();
        assert_eq!(data.sequences().len(), 10);
        assert_eq!(data.observed_targets(), 10 * 3);
    }

    #[test]
    fn initial_conditions_are_seeded() {
        let a = HiddenState::default().initial_conditions();
        let b = HiddenState::default().initial_conditions();
        let c = HiddenState { seed: 1, ..Default::default() }.initial_conditions();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().flatten().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn energy_at_section_start() {
        let e = henon_heiles_energy(&HENON_HEILES_X0);
        let expect = 0.5 * 0.093f64.powi(2) + 0.5 * 0.67f64.powi(2) - 0.67f64.powi(3) / 3.0;
        assert!((e - expect).abs() < 1e-15);
    }
}
