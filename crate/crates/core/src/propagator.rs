//! Map application, trajectory rollout and Poincaré sections.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::map::LieMap;

/// States whose Euclidean norm exceeds this are treated as divergent.
pub const DEFAULT_GUARD: f64 = 1e6;

/// Evaluates `W_0 + Σ_k W_k X^{[k]}`.
pub fn apply(map: &LieMap, x: &[f64]) -> Result<Vec<f64>> {
    check_state(map, x)?;
    Ok(apply_unchecked(map, x))
}

pub(crate) fn apply_unchecked(map: &LieMap, x: &[f64]) -> Vec<f64> {
    let powers = map.table().powers(x);
    apply_with_powers(map, &powers)
}

pub(crate) fn apply_with_powers(map: &LieMap, powers: &[Vec<f64>]) -> Vec<f64> {
    let n = map.n();
    let mut out = vec![0.0; n];
    for (w, p) in map.weights().iter().zip(powers) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, v) in p.iter().enumerate() {
                acc += w[(r, c)] * v;
            }
            *o += acc;
        }
    }
    out
}

fn check_state(map: &LieMap, x: &[f64]) -> Result<()> {
    if x.len() != map.n() {
        return Err(Error::DimensionMismatch {
            expected: map.n(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input state".into()));
    }
    Ok(())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Element-wise [`apply`] with the default execution mode.
pub fn apply_batch(map: &LieMap, states: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    apply_batch_with(map, states, Execution::default())
}

/// Element-wise [`apply`]. Output order matches input order; the first
/// failing element (by index) is reported.
pub fn apply_batch_with(
    map: &LieMap,
    states: &[Vec<f64>],
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let results = map_indexed(states, exec, |i, x| {
        check_state(map, x).map_err(|e| Error::Data(format!("batch element {i}: {e}")))?;
        Ok(apply_unchecked(map, x))
    });
    results.into_iter().collect()
}

/// Uniformly sampled states `X(t0 + i·dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub t0: f64,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }

    /// CSV with header `t,<names...>`.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "t,{}", names.join(","));
        for (i, x) in self.states.iter().enumerate() {
            let _ = write!(s, "{}", self.time(i));
            for v in x {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Rolls the map forward `steps` times from `x0`.
pub fn simulate(map: &LieMap, x0: &[f64], steps: usize, guard: f64) -> Result<Trajectory> {
    check_state(map, x0)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    for step in 1..=steps {
        let next = apply_unchecked(map, &states[step - 1]);
        guard_state(&next, guard, step)?;
        states.push(next);
    }
    Ok(Trajectory {
        dt: map.dt(),
        t0: 0.0,
        states,
    })
}

fn guard_state(x: &[f64], guard: f64, step: usize) -> Result<()> {
    let nrm = norm(x);
    if !nrm.is_finite() || nrm > guard {
        return Err(Error::Divergence {
            context: "rollout".into(),
            step,
            message: format!("state norm {nrm:e} exceeds guard {guard:e}"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossingDirection {
    /// Section coordinate increasing through the level.
    #[default]
    Positive,
    Negative,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionConfig {
    /// Index of the coordinate that defines the hyperplane.
    pub coord: usize,
    /// Hyperplane level.
    pub value: f64,
    /// Coordinates recorded for each crossing.
    pub plane: (usize, usize),
    pub direction: CrossingDirection,
}

impl SectionConfig {
    fn validate(&self, n: usize) -> Result<()> {
        for idx in [self.coord, self.plane.0, self.plane.1] {
            if idx >= n {
                return Err(Error::InvalidConfig(format!(
                    "section index {idx} out of range for dimension {n}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionEvent {
    /// Index `i` of the state before the crossing (crossing lies in `[i, i+1]`).
    pub step_index: usize,
    /// Interpolated crossing time.
    pub t: f64,
    pub crossing_state: Vec<f64>,
    pub projected: [f64; 2],
}

/// Streams consecutive states and records hyperplane crossings by linear
/// interpolation between samples.
#[derive(Debug, Clone)]
pub struct SectionDetector {
    config: SectionConfig,
    dt: f64,
    t0: f64,
    prev: Option<Vec<f64>>,
    index: usize,
    events: Vec<SectionEvent>,
}

impl SectionDetector {
    pub fn new(config: SectionConfig, dt: f64, t0: f64) -> Self {
        SectionDetector {
            config,
            dt,
            t0,
            prev: None,
            index: 0,
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, state: &[f64]) {
        if let Some(prev) = &self.prev {
            let c = self.config.coord;
            let a = prev[c] - self.config.value;
            let b = state[c] - self.config.value;
            let up = a < 0.0 && b >= 0.0;
            let down = a > 0.0 && b <= 0.0;
            let take = match self.config.direction {
                CrossingDirection::Positive => up,
                CrossingDirection::Negative => down,
                CrossingDirection::Both => up || down,
            };
            if take {
                let s = a / (a - b);
                let crossing: Vec<f64> =
                    prev.iter().zip(state).map(|(p, q)| p + s * (q - p)).collect();
                let i = self.index - 1;
                self.events.push(SectionEvent {
                    step_index: i,
                    t: self.t0 + (i as f64 + s) * self.dt,
                    projected: [crossing[self.config.plane.0], crossing[self.config.plane.1]],
                    crossing_state: crossing,
                });
            }
        }
        self.prev = Some(state.to_vec());
        self.index += 1;
    }

    pub fn events(&self) -> &[SectionEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<SectionEvent> {
        self.events
    }
}

/// Crossings of an already computed trajectory.
pub fn section_of(trajectory: &Trajectory, config: &SectionConfig) -> Result<Vec<SectionEvent>> {
    if let Some(first) = trajectory.states.first() {
        config.validate(first.len())?;
    }
    let mut det = SectionDetector::new(*config, trajectory.dt, trajectory.t0);
    for x in &trajectory.states {
        det.push(x);
    }
    Ok(det.into_events())
}

/// Rolls the map forward like [`simulate`] without storing the trajectory,
/// recording crossings of the configured hyperplane.
pub fn poincare_section(
    map: &LieMap,
    x0: &[f64],
    steps: usize,
    config: &SectionConfig,
    guard: f64,
) -> Result<Vec<SectionEvent>> {
    check_state(map, x0)?;
    config.validate(map.n())?;
    let mut det = SectionDetector::new(*config, map.dt(), 0.0);
    let mut x = x0.to_vec();
    det.push(&x);
    for step in 1..=steps {
        x = apply_unchecked(map, &x);
        guard_state(&x, guard, step)?;
        det.push(&x);
    }
    Ok(det.into_events())
}

/// CSV with header `step,t,<plane1>,<plane2>`.
pub fn section_to_csv(events: &[SectionEvent], plane_names: (&str, &str)) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "step,t,{},{}", plane_names.0, plane_names.1);
    for e in events {
        let _ = writeln!(s, "{},{},{},{}", e.step_index, e.t, e.projected[0], e.projected[1]);
    }
    s
}
