//! Fitting a Lie map to sampled trajectories.
//!
//! One map with shared weights is applied repeatedly from each sequence's
//! initial state. The loss is the mean squared error over every observed
//! entry at times `t ≥ 1`; entries marked unobserved (`NA`) only take part
//! through the rollout. Gradients are accumulated by reverse sweeps through
//! the unrolled chain and the weights are updated with Adamax.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::map::LieMap;
use crate::propagator::{apply_with_powers, Trajectory, DEFAULT_GUARD};

/// One sampled trajectory with its observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub states: Vec<Vec<f64>>,
    pub mask: Vec<Vec<bool>>,
}

impl Sequence {
    /// Every entry observed.
    pub fn observed(states: Vec<Vec<f64>>) -> Self {
        let mask = states.iter().map(|s| vec![true; s.len()]).collect();
        Sequence { states, mask }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    names: Vec<String>,
    dt: f64,
    sequences: Vec<Sequence>,
}

impl TimeSeriesDataset {
    pub fn new(names: Vec<String>, dt: f64, sequences: Vec<Sequence>) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::Data("dataset has no variables".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Data(format!("sampling step must be positive, got {dt}")));
        }
        for (s, seq) in sequences.iter().enumerate() {
            if seq.states.len() < 2 {
                return Err(Error::Data(format!("sequence {s} has fewer than two samples")));
            }
            if seq.mask.len() != seq.states.len() {
                return Err(Error::Data(format!("sequence {s}: mask length differs from states")));
            }
            for (t, (x, m)) in seq.states.iter().zip(&seq.mask).enumerate() {
                if x.len() != n || m.len() != n {
                    return Err(Error::Data(format!(
                        "sequence {s}, sample {t}: expected {n} values"
                    )));
                }
                if x.iter().zip(m).any(|(v, &o)| o && !v.is_finite()) {
                    return Err(Error::Data(format!("sequence {s}, sample {t}: non-finite value")));
                }
            }
            if seq.mask[0].iter().any(|&o| !o) {
                return Err(Error::Data(format!(
                    "sequence {s}: the initial state must be fully observed"
                )));
            }
        }
        Ok(TimeSeriesDataset {
            names,
            dt,
            sequences,
        })
    }

    /// Fully observed dataset from trajectories sharing one sampling step.
    pub fn from_trajectories(names: Vec<String>, trajectories: &[Trajectory]) -> Result<Self> {
        let dt = trajectories
            .first()
            .ok_or_else(|| Error::Data("no trajectories".into()))?
            .dt;
        if trajectories.iter().any(|t| (t.dt - dt).abs() > 1e-12 * dt.abs().max(1.0)) {
            return Err(Error::Data("trajectories use different sampling steps".into()));
        }
        let seqs = trajectories
            .iter()
            .map(|t| Sequence::observed(t.states.clone()))
            .collect();
        Self::new(names, dt, seqs)
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn variable_names(&self) -> &[String] {
        &self.names
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    /// Observed scalar entries at times `t ≥ 1`, i.e. the loss denominator.
    pub fn observed_targets(&self) -> usize {
        self.sequences
            .iter()
            .flat_map(|s| s.mask.iter().skip(1))
            .map(|m| m.iter().filter(|&&o| o).count())
            .sum()
    }

    /// Parses the dataset CSV: header `t,<vars...>` with an optional
    /// `series` column for several sequences in one file. `NA` marks an
    /// unobserved entry. The sampling step is inferred and must be uniform.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::from_csv_texts(&[text])
    }

    /// Several CSV documents, each contributing its own sequences.
    pub fn from_csv_texts(texts: &[&str]) -> Result<Self> {
        let mut names: Option<Vec<String>> = None;
        let mut sequences = Vec::new();
        let mut times: Vec<Vec<f64>> = Vec::new();
        for text in texts {
            let (file_names, seqs, ts) = parse_csv(text)?;
            match &names {
                None => names = Some(file_names),
                Some(existing) if *existing != file_names => {
                    return Err(Error::Data("dataset files disagree on variable names".into()))
                }
                _ => {}
            }
            sequences.extend(seqs);
            times.extend(ts);
        }
        let names = names.ok_or_else(|| Error::Data("no data".into()))?;
        let dt = uniform_step(&times)?;
        Self::new(names, dt, sequences)
    }

    pub fn read_csv<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let texts = paths
            .iter()
            .map(std::fs::read_to_string)
            .collect::<std::io::Result<Vec<_>>>()?;
        let refs: Vec<&str> = texts.iter().map(|s| s.as_str()).collect();
        Self::from_csv_texts(&refs)
    }

    /// Writes `series,t,<vars...>` with `NA` for unobserved entries.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "series,t,{}", self.names.join(","));
        for (id, seq) in self.sequences.iter().enumerate() {
            for (i, (x, m)) in seq.states.iter().zip(&seq.mask).enumerate() {
                let _ = write!(s, "{id},{}", i as f64 * self.dt);
                for (v, &o) in x.iter().zip(m) {
                    if o {
                        let _ = write!(s, ",{v}");
                    } else {
                        s.push_str(",NA");
                    }
                }
                s.push('\n');
            }
        }
        s
    }
}

type ParsedCsv = (Vec<String>, Vec<Sequence>, Vec<Vec<f64>>);

fn parse_csv(text: &str) -> Result<ParsedCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let t_col = headers
        .iter()
        .position(|h| h == "t")
        .ok_or_else(|| Error::Data("CSV header lacks a `t` column".into()))?;
    let series_col = headers.iter().position(|h| h == "series");
    let var_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != t_col && Some(c) != series_col)
        .collect();
    if var_cols.is_empty() {
        return Err(Error::Data("CSV has no state columns".into()));
    }
    let names: Vec<String> = var_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (Sequence, Vec<f64>)> = HashMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let id = series_col.map(|c| record[c].to_string()).unwrap_or_default();
        let t: f64 = record[t_col]
            .parse()
            .map_err(|_| Error::Data(format!("line {line}: invalid time `{}`", &record[t_col])))?;
        let mut x = Vec::with_capacity(var_cols.len());
        let mut m = Vec::with_capacity(var_cols.len());
        for &c in &var_cols {
            let cell = &record[c];
            if cell == "NA" {
                x.push(0.0);
                m.push(false);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::Data(format!("line {line}: invalid value `{cell}`")))?;
                x.push(v);
                m.push(true);
            }
        }
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (
                Sequence {
                    states: Vec::new(),
                    mask: Vec::new(),
                },
                Vec::new(),
            )
        });
        entry.0.states.push(x);
        entry.0.mask.push(m);
        entry.1.push(t);
    }
    let mut seqs = Vec::with_capacity(order.len());
    let mut times = Vec::with_capacity(order.len());
    for id in order {
        let (s, t) = groups.remove(&id).expect("group recorded");
        seqs.push(s);
        times.push(t);
    }
    Ok((names, seqs, times))
}

fn uniform_step(times: &[Vec<f64>]) -> Result<f64> {
    let mut dt: Option<f64> = None;
    for ts in times {
        for w in ts.windows(2) {
            let d = w[1] - w[0];
            match dt {
                None => dt = Some(d),
                Some(ref_dt) => {
                    if (d - ref_dt).abs() > 1e-6 * ref_dt.abs().max(1e-12) {
                        return Err(Error::Data(format!(
                            "non-uniform sampling: step {d} differs from {ref_dt}"
                        )));
                    }
                }
            }
        }
    }
    dt.ok_or_else(|| Error::Data("cannot infer the sampling step from fewer than two samples".into()))
}

/// Masked mean squared error and its gradient with respect to every weight.
pub fn loss_and_grad(map: &LieMap, dataset: &TimeSeriesDataset) -> Result<(f64, Vec<DMatrix<f64>>)> {
    loss_and_grad_with(map, dataset, Execution::default(), DEFAULT_GUARD)
}

/// As [`loss_and_grad`], with explicit execution mode and divergence guard.
/// Per-sequence contributions may be computed concurrently; they are summed
/// in sequence order.
pub fn loss_and_grad_with(
    map: &LieMap,
    dataset: &TimeSeriesDataset,
    exec: Execution,
    guard: f64,
) -> Result<(f64, Vec<DMatrix<f64>>)> {
    if dataset.n() != map.n() {
        return Err(Error::DimensionMismatch {
            expected: map.n(),
            got: dataset.n(),
        });
    }
    let parts = map_indexed(dataset.sequences(), exec, |s, seq| {
        sequence_loss_grad(map, seq, s, guard)
    });
    let mut total = 0.0;
    let mut grads: Vec<DMatrix<f64>> = map
        .weights()
        .iter()
        .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
        .collect();
    for part in parts {
        let (sq, g) = part?;
        total += sq;
        for (acc, gi) in grads.iter_mut().zip(g) {
            *acc += gi;
        }
    }
    let count = dataset.observed_targets();
    if count == 0 {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / count as f64;
    for g in &mut grads {
        *g *= scale;
    }
    Ok((total * scale, grads))
}

/// Sum of squared errors of one sequence and its (unnormalised) gradient.
fn sequence_loss_grad(
    map: &LieMap,
    seq: &Sequence,
    index: usize,
    guard: f64,
) -> Result<(f64, Vec<DMatrix<f64>>)> {
    let table = map.table();
    let n = map.n();
    let steps = seq.states.len() - 1;

    let mut x = seq.states[0].clone();
    let mut powers = Vec::with_capacity(steps);
    let mut predicted = Vec::with_capacity(steps);
    for t in 1..=steps {
        let p = table.powers(&x);
        x = apply_with_powers(map, &p);
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !nrm.is_finite() || nrm > guard {
            return Err(Error::Divergence {
                context: format!("training rollout of sequence {index}"),
                step: t,
                message: format!("state norm {nrm:e} exceeds guard {guard:e}"),
            });
        }
        powers.push(p);
        predicted.push(x.clone());
    }

    let mut sq = 0.0;
    let mut grads: Vec<DMatrix<f64>> = map
        .weights()
        .iter()
        .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
        .collect();
    let mut adj = vec![0.0; n];
    for t in (1..=steps).rev() {
        let pred = &predicted[t - 1];
        let target = &seq.states[t];
        for m in 0..n {
            if seq.mask[t][m] {
                let e = pred[m] - target[m];
                sq += e * e;
                adj[m] += 2.0 * e;
            }
        }
        let p = &powers[t - 1];
        let mut next = vec![0.0; n];
        for (k, (w, g)) in map.weights().iter().zip(grads.iter_mut()).enumerate() {
            let pk = &p[k];
            for (r, &a) in adj.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (c, &v) in pk.iter().enumerate() {
                    g[(r, c)] += a * v;
                }
            }
            if k >= 1 && t > 1 {
                // v = W_kᵀ adj, then pull back through the reduced power
                let v: Vec<f64> = (0..w.ncols())
                    .map(|c| (0..n).map(|r| w[(r, c)] * adj[r]).sum())
                    .collect();
                table.pullback(k, p, &v, &mut next);
            }
        }
        adj = next;
    }
    Ok((sq, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamaxParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamaxParams {
    fn default() -> Self {
        AdamaxParams {
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamaxParams {
    fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0
            && self.epsilon >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid Adamax parameters {self:?}")))
        }
    }
}

/// First moment and exponentially weighted infinity norm per weight block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamaxState {
    pub step: u64,
    pub moment: Vec<DMatrix<f64>>,
    pub inf_norm: Vec<DMatrix<f64>>,
}

impl AdamaxState {
    pub fn new(weights: &[DMatrix<f64>]) -> Self {
        let zeros: Vec<DMatrix<f64>> = weights
            .iter()
            .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
            .collect();
        AdamaxState {
            step: 0,
            moment: zeros.clone(),
            inf_norm: zeros,
        }
    }
}

/// One Adamax update:
/// `m ← β₁m + (1-β₁)g`, `u ← max(β₂u, |g|)`,
/// `w ← w - lr/(1-β₁ᵗ) · m/(u + ε)`.
pub fn adamax_step(
    weights: &mut [DMatrix<f64>],
    grads: &[DMatrix<f64>],
    state: &mut AdamaxState,
    params: &AdamaxParams,
) {
    state.step += 1;
    let bias = 1.0 - params.beta1.powi(state.step as i32);
    let rate = params.learning_rate / bias;
    for (((w, g), m), u) in weights
        .iter_mut()
        .zip(grads)
        .zip(&mut state.moment)
        .zip(&mut state.inf_norm)
    {
        for i in 0..w.len() {
            let gi = g[i];
            m[i] = params.beta1 * m[i] + (1.0 - params.beta1) * gi;
            u[i] = (params.beta2 * u[i]).max(gi.abs());
            if m[i] != 0.0 {
                w[i] -= rate * m[i] / (u[i] + params.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    /// `W_1 = I`, all other blocks zero.
    #[default]
    NearIdentity,
    /// Start from this map (truncated or padded to the configured order).
    Map(LieMap),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub order: usize,
    pub epochs: usize,
    pub adamax: AdamaxParams,
    pub init: Init,
    /// Recorded with the run. Training is full-batch, so nothing is drawn
    /// from it today.
    pub seed: u64,
    /// Stop once the loss falls below this value.
    pub target_loss: Option<f64>,
    pub guard: f64,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            order: 2,
            epochs: 1000,
            adamax: AdamaxParams::default(),
            init: Init::NearIdentity,
            seed: 0,
            target_loss: None,
            guard: DEFAULT_GUARD,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Lowest-loss map seen.
    pub map: LieMap,
    pub best_loss: f64,
    /// Loss at the start of each epoch.
    pub loss_history: Vec<f64>,
    pub epochs_run: usize,
    /// Set when training stopped on a divergent rollout or non-finite loss;
    /// `map` then holds the best finite state reached before it.
    pub aborted: Option<String>,
}

/// Full-batch Adamax training from the configured initialization.
pub fn fit(dataset: &TimeSeriesDataset, config: &TrainConfig) -> Result<FitResult> {
    config.adamax.validate()?;
    if config.order < 1 {
        return Err(Error::InvalidConfig("map order must be at least 1".into()));
    }
    if dataset.sequences().is_empty() {
        return Err(Error::Data("dataset has no sequences".into()));
    }
    let names = dataset.variable_names().to_vec();
    let mut map = match &config.init {
        Init::NearIdentity => LieMap::identity(names, config.order, dataset.dt())?,
        Init::Map(m) => {
            if m.n() != dataset.n() {
                return Err(Error::DimensionMismatch {
                    expected: dataset.n(),
                    got: m.n(),
                });
            }
            let t = m.truncated(config.order);
            LieMap::from_weights(names, dataset.dt(), t.weights().to_vec())?
        }
    };
    let mut state = AdamaxState::new(map.weights());
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, LieMap)> = None;
    let mut aborted = None;

    for epoch in 0..=config.epochs {
        let evaluated = loss_and_grad_with(&map, dataset, config.execution, config.guard);
        let (loss, grads) = match evaluated {
            Ok((l, _)) if !l.is_finite() => {
                aborted = Some(format!("epoch {epoch}: non-finite loss"));
                break;
            }
            Ok(v) => v,
            Err(e) => {
                aborted = Some(format!("epoch {epoch}: {e}"));
                break;
            }
        };
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, map.clone()));
        }
        // the extra pass only scores the final update
        if epoch == config.epochs {
            break;
        }
        history.push(loss);
        if config.target_loss.is_some_and(|t| loss < t) {
            break;
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            aborted = Some(format!("epoch {epoch}: non-finite gradient"));
            break;
        }
        adamax_step(map.weights_mut(), &grads, &mut state, &config.adamax);
        if map.weights().iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            aborted = Some(format!("epoch {epoch}: non-finite weights after update"));
            break;
        }
    }

    let Some((best_loss, best_map)) = best else {
        return Err(Error::Divergence {
            context: "fit".into(),
            step: 0,
            message: aborted.unwrap_or_else(|| "initial map diverges".into()),
        });
    };
    Ok(FitResult {
        map: best_map,
        best_loss,
        epochs_run: history.len(),
        loss_history: history,
        aborted,
    })
}

/// Loss history as CSV `epoch,loss`.
pub fn loss_history_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(s, "{i},{l}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_map, BuilderConfig};
    use crate::monomial::monomial_count;
    use crate::ode::parse_ode;
    use crate::reference::Rk4;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    fn random_map(n: usize, order: usize, vals: &[f64]) -> LieMap {
        let mut it = vals.iter().cycle();
        let weights = (0..=order)
            .map(|k| {
                let base = if k == 1 { DMatrix::identity(n, n) } else { DMatrix::zeros(n, monomial_count(n, k)) };
                base + DMatrix::from_fn(n, monomial_count(n, k), |_, _| 0.3 * *it.next().unwrap())
            })
            .collect();
        LieMap::from_weights(names(n), 0.1, weights).unwrap()
    }

    fn random_dataset(n: usize, len: usize, vals: &[f64], masked: &[bool]) -> TimeSeriesDataset {
        let mut it = vals.iter().cycle();
        let mut mit = masked.iter().cycle();
        let states: Vec<Vec<f64>> = (0..len).map(|_| (0..n).map(|_| 0.5 * *it.next().unwrap()).collect()).collect();
        let mask = (0..len)
            .map(|t| (0..n).map(|_| t == 0 || *mit.next().unwrap()).collect())
            .collect();
        TimeSeriesDataset::new(names(n), 0.1, vec![Sequence { states, mask }]).unwrap()
    }

    // Central finite differences over every weight entry.
    fn fd_grads(map: &LieMap, data: &TimeSeriesDataset, h: f64) -> Vec<DMatrix<f64>> {
        let mut out = Vec::new();
        for k in 0..map.weights().len() {
            let w = map.weight(k);
            let mut g = DMatrix::zeros(w.nrows(), w.ncols());
            for i in 0..w.len() {
                let mut plus = map.weights().to_vec();
                let mut minus = map.weights().to_vec();
                plus[k][i] += h;
                minus[k][i] -= h;
                let mp = LieMap::from_weights(map.variable_names().to_vec(), map.dt(), plus).unwrap();
                let mm = LieMap::from_weights(map.variable_names().to_vec(), map.dt(), minus).unwrap();
                let lp = loss_and_grad(&mp, data).unwrap().0;
                let lm = loss_and_grad(&mm, data).unwrap().0;
                g[i] = (lp - lm) / (2.0 * h);
            }
            out.push(g);
        }
        out
    }

    fn assert_grads_close(a: &[DMatrix<f64>], b: &[DMatrix<f64>], tol: f64) {
        for (ga, gb) in a.iter().zip(b) {
            for (x, y) in ga.iter().zip(gb.iter()) {
                let scale = x.abs().max(y.abs()).max(1.0);
                assert!((x - y).abs() / scale < tol, "analytic {x} vs fd {y}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_small() {
        let vals: Vec<f64> = (0..97).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
        let map = random_map(2, 2, &vals);
        let data = random_dataset(2, 4, &vals[13..], &[true, false, true]);
        let (_, g) = loss_and_grad(&map, &data).unwrap();
        assert_grads_close(&g, &fd_grads(&map, &data, 1e-6), 1e-6);
    }

    #[test]
    fn unobserved_dataset_has_zero_loss() {
        let vals: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let map = random_map(2, 2, &vals);
        let data = random_dataset(2, 4, &vals, &[false]);
        let (loss, g) = loss_and_grad(&map, &data).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn true_map_is_stationary() {
        let ode = parse_ode("x' = -y - x*y ; y' = x + x*y").unwrap();
        let map = build_map(&ode, 0.01, &BuilderConfig::new(4)).unwrap();
        let rk = Rk4::new(&ode);
        let trajs: Vec<_> = [[0.1, 0.05], [-0.08, 0.1]]
            .iter()
            .map(|x0| rk.trajectory(x0, 0.01, 50, 20).unwrap())
            .collect();
        let data = TimeSeriesDataset::from_trajectories(names(2), &trajs).unwrap();
        let (loss, g) = loss_and_grad(&map, &data).unwrap();
        assert!(loss < 1e-8, "{loss}");
        let gnorm = g.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt();
        assert!(gnorm < 1e-4, "{gnorm}");
    }

    #[test]
    fn dimension_and_divergence_errors() {
        let map = LieMap::identity(names(3), 2, 0.1).unwrap();
        let data = random_dataset(2, 3, &[0.1, 0.2], &[true]);
        assert!(matches!(loss_and_grad(&map, &data), Err(Error::DimensionMismatch { .. })));

        let mut w = LieMap::identity(names(1), 1, 0.1).unwrap().weights().to_vec();
        w[1][(0, 0)] = 100.0;
        let blow = LieMap::from_weights(names(1), 0.1, w).unwrap();
        let data = TimeSeriesDataset::new(
            names(1),
            0.1,
            vec![Sequence::observed(vec![vec![1.0]; 6])],
        )
        .unwrap();
        match loss_and_grad(&blow, &data) {
            Err(Error::Divergence { step, context, .. }) => {
                assert_eq!(step, 4);
                assert!(context.contains("sequence 0"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn adamax_zero_gradient() {
        let mut w = vec![DMatrix::from_element(1, 1, 0.7)];
        let mut st = AdamaxState::new(&w);
        st.moment[0][0] = 0.5;
        st.inf_norm[0][0] = 2.0;
        let g = vec![DMatrix::zeros(1, 1)];
        let p = AdamaxParams::default();
        adamax_step(&mut w, &g, &mut st, &p);
        // moment decays but stays nonzero, so the weight still moves by the
        // decayed moment; a fresh state does not move at all.
        assert!((st.moment[0][0] - 0.45).abs() < 1e-15);
        assert!((st.inf_norm[0][0] - 1.998).abs() < 1e-15);
        let mut w2 = vec![DMatrix::from_element(1, 1, 0.7)];
        let mut fresh = AdamaxState::new(&w2);
        adamax_step(&mut w2, &g, &mut fresh, &p);
        assert_eq!(w2[0][0], 0.7);
        assert_eq!(fresh.step, 1);
    }

    #[test]
    fn adamax_first_step_is_learning_rate() {
        let p = AdamaxParams::default();
        let mut w = vec![DMatrix::from_element(1, 1, 0.0)];
        let mut st = AdamaxState::new(&w);
        adamax_step(&mut w, &[DMatrix::from_element(1, 1, 1.0)], &mut st, &p);
        // -lr · (0.1·1) / ((1 - 0.9) · (1 + ε))
        let expected = -p.learning_rate / (1.0 + p.epsilon);
        assert!((w[0][0] - expected).abs() < 1e-18);
        assert!((w[0][0] + 2e-3).abs() < 1e-10);
    }

    #[test]
    fn adamax_constant_gradient_steps_do_not_grow() {
        let p = AdamaxParams::default();
        let mut w = vec![DMatrix::from_element(1, 1, 0.0)];
        let mut st = AdamaxState::new(&w);
        let g = [DMatrix::from_element(1, 1, 0.3)];
        adamax_step(&mut w, &g, &mut st, &p);
        let first = w[0][0].abs();
        let before = w[0][0];
        adamax_step(&mut w, &g, &mut st, &p);
        let second = (w[0][0] - before).abs();
        assert!(second <= first + 1e-18, "{second} > {first}");
        assert_eq!(st.inf_norm[0][0], 0.3);
    }

    #[test]
    fn csv_round_trip_with_na() {
        let text = "series,t,a,b\ns1,0,1.0,2.0\ns1,0.5,NA,2.5\ns1,1.0,1.2,NA\ns2,0,0.1,0.2\ns2,0.5,0.3,0.4\n";
        let d = TimeSeriesDataset::from_csv_str(text).unwrap();
        assert_eq!(d.sequences().len(), 2);
        assert_eq!(d.dt(), 0.5);
        assert_eq!(d.sequences()[0].mask[1], vec![false, true]);
        assert_eq!(d.observed_targets(), 2 + 2);
        let again = TimeSeriesDataset::from_csv_str(&d.to_csv()).unwrap();
        assert_eq!(again.sequences(), d.sequences());
    }

    #[test]
    fn csv_errors() {
        assert!(TimeSeriesDataset::from_csv_str("t,a\n0,1\n0.1,2\n0.3,3\n").is_err());
        assert!(TimeSeriesDataset::from_csv_str("a,b\n0,1\n").is_err());
        assert!(TimeSeriesDataset::from_csv_str("t,a\n0,NA\n0.1,2\n").is_err());
        assert!(TimeSeriesDataset::from_csv_str("t,a\n0,1\n").is_err());
        assert!(TimeSeriesDataset::from_csv_str("t,a\n0,1\n0.1,x\n").is_err());
    }

    #[test]
    fn fit_linear_decay() {
        let ode = parse_ode("x' = -0.5*x").unwrap();
        let traj = Rk4::new(&ode).trajectory(&[1.0], 0.1, 50, 10).unwrap();
        let data = TimeSeriesDataset::from_trajectories(names(1), &[traj]).unwrap();
        let cfg = TrainConfig {
            order: 1,
            epochs: 3000,
            ..Default::default()
        };
        let res = fit(&data, &cfg).unwrap();
        assert!(res.aborted.is_none());
        assert!((res.map.weight(1)[(0, 0)] - (-0.05f64).exp()).abs() < 1e-4);
        let mut best = f64::INFINITY;
        for l in &res.loss_history {
            best = best.min(*l);
        }
        assert!(res.best_loss <= best);
        assert_eq!(res.loss_history.len(), res.epochs_run);
    }

    #[test]
    fn fit_is_deterministic() {
        let ode = parse_ode("x' = -y ; y' = x - 0.2*y - x^2").unwrap();
        let rk = Rk4::new(&ode);
        let trajs: Vec<_> = [[0.3, 0.0], [0.0, 0.2], [-0.2, 0.1]]
            .iter()
            .map(|x0| rk.trajectory(x0, 0.1, 20, 10).unwrap())
            .collect();
        let data = TimeSeriesDataset::from_trajectories(names(2), &trajs).unwrap();
        let run = |exec| {
            fit(
                &data,
                &TrainConfig {
                    order: 2,
                    epochs: 200,
                    seed: 7,
                    execution: exec,
                    ..Default::default()
                },
            )
            .unwrap()
        };
        let a = run(Execution::Parallel);
        let b = run(Execution::Parallel);
        let c = run(Execution::Sequential);
        let bits = |r: &FitResult| r.loss_history.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(bits(&a), bits(&c));
        assert_eq!(a.map, c.map);
    }

    #[test]
    fn fit_reports_divergence() {
        let data = TimeSeriesDataset::new(
            names(1),
            0.1,
            vec![Sequence::observed(vec![vec![1.0], vec![1e3], vec![1e6], vec![1e9]])],
        )
        .unwrap();
        let cfg = TrainConfig {
            order: 1,
            epochs: 200,
            adamax: AdamaxParams {
                learning_rate: 50.0,
                ..Default::default()
            },
            guard: 1e7,
            ..Default::default()
        };
        let res = fit(&data, &cfg).unwrap();
        assert!(res.aborted.is_some());
        assert!(res.best_loss.is_finite());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gradient_matches_finite_differences(
            n in 1usize..=3, order in 1usize..=3, len in 2usize..=6,
            vals in proptest::collection::vec(-1.0f64..1.0, 120),
            mask in proptest::collection::vec(proptest::bool::ANY, 8),
        ) {
            let map = random_map(n, order, &vals);
            let data = random_dataset(n, len, &vals[7..], &mask);
            let (_, g) = loss_and_grad(&map, &data).unwrap();
            assert_grads_close(&g, &fd_grads(&map, &data, 1e-6), 1e-6);
        }

        #[test]
        fn masked_tail_changes_nothing(
            n in 1usize..=3, len in 2usize..=5, extra in 1usize..=3,
            vals in proptest::collection::vec(-1.0f64..1.0, 120),
        ) {
            let map = random_map(n, 2, &vals);
            let base = random_dataset(n, len, &vals[5..], &[true, false]);
            let mut seq = base.sequences()[0].clone();
            for _ in 0..extra {
                seq.states.push(vec![123.0; n]);
                seq.mask.push(vec![false; n]);
            }
            let longer = TimeSeriesDataset::new(names(n), 0.1, vec![seq]).unwrap();
            let (la, ga) = loss_and_grad(&map, &base).unwrap();
            let (lb, gb) = loss_and_grad(&map, &longer).unwrap();
            prop_assert_eq!(la, lb);
            prop_assert_eq!(ga, gb);
        }
    }
}
