//! Bundled experiments. Each runner returns its numbers so the acceptance
//! suite can score them; [`run`] also writes every artifact to disk.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lienet_core::propagator::{section_of, section_to_csv, SectionDetector};
use lienet_core::reference::Rk4;
use lienet_core::{
    build_map, fit, learn::loss_history_csv, simulate, AdamaxParams, BuilderConfig,
    CrossingDirection, FitResult, LieMap, PolynomialODE, Result, SectionConfig, SectionEvent,
    TrainConfig, Trajectory, DEFAULT_GUARD,
};

use crate::args::{DemoArgs, DemoName};
use crate::commands::{block_shapes, write};
use crate::error::CliError;
use crate::metrics::{euclidean, hausdorff, max_abs_deviation, mean_squared_error};
use crate::scenarios::{self, HiddenState, Sir};

/// Map rollout next to a fine-step RK4 reference sampled at the map step.
pub struct Comparison {
    pub map: LieMap,
    pub predicted: Trajectory,
    pub reference: Trajectory,
    pub max_deviation: f64,
}

pub fn compare_with_rk4(
    ode: &PolynomialODE,
    dt: f64,
    order: usize,
    x0: &[f64],
    steps: usize,
    reference_substeps: usize,
) -> Result<Comparison> {
    let map = build_map(ode, dt, &BuilderConfig::new(order))?;
    let predicted = simulate(&map, x0, steps, DEFAULT_GUARD)?;
    let reference = Rk4::new(ode).trajectory(x0, dt, steps, reference_substeps)?;
    let max_deviation = max_abs_deviation(&predicted.states, &reference.states);
    Ok(Comparison {
        map,
        predicted,
        reference,
        max_deviation,
    })
}

pub struct HenonRun {
    pub map: LieMap,
    pub map_events: Vec<SectionEvent>,
    pub rk4_events: Vec<SectionEvent>,
    /// `max |H(x_i) − H(x_0)| / |H(x_0)|` over the first `energy_steps` map steps.
    pub energy_drift: f64,
    /// Hausdorff distance between the first `crossings` points of both sections.
    pub hausdorff: f64,
    pub crossings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HenonSettings {
    pub dt: f64,
    pub order: usize,
    pub steps: usize,
    pub energy_steps: usize,
    pub crossings: usize,
    pub reference_substeps: usize,
    pub direction: CrossingDirection,
}

impl Default for HenonSettings {
    fn default() -> Self {
        HenonSettings {
            dt: 0.01,
            order: 3,
            steps: 200_000,
            energy_steps: 10_000,
            crossings: 200,
            reference_substeps: 10,
            direction: CrossingDirection::Positive,
        }
    }
}

/// Section `q1 = 0` recorded on `(q2, p2)`.
pub fn henon_section_config(direction: CrossingDirection) -> SectionConfig {
    SectionConfig {
        coord: 0,
        value: 0.0,
        plane: (1, 3),
        direction,
    }
}

pub fn henon_heiles_run(settings: &HenonSettings) -> Result<HenonRun> {
    let ode = scenarios::henon_heiles();
    let x0 = scenarios::HENON_HEILES_X0;
    let map = build_map(&ode, settings.dt, &BuilderConfig::new(settings.order))?;
    let config = henon_section_config(settings.direction);
    let traj = simulate(&map, &x0, settings.steps, DEFAULT_GUARD)?;

    let h0 = scenarios::henon_heiles_energy(&x0);
    let energy_drift = traj
        .states
        .iter()
        .take(settings.energy_steps + 1)
        .map(|x| ((scenarios::henon_heiles_energy(x) - h0) / h0).abs())
        .fold(0.0, f64::max);
    let map_events = section_of(&traj, &config)?;

    let rk = Rk4::new(&ode);
    let h = settings.dt / settings.reference_substeps.max(1) as f64;
    let mut detector = SectionDetector::new(config, settings.dt, 0.0);
    let mut x = x0.to_vec();
    detector.push(&x);
    for _ in 0..settings.steps {
        for _ in 0..settings.reference_substeps.max(1) {
            x = rk.step(&x, h);
        }
        detector.push(&x);
    }
    let rk4_events = detector.into_events();

    let take = |ev: &[SectionEvent]| -> Vec<[f64; 2]> {
        ev.iter().take(settings.crossings).map(|e| e.projected).collect()
    };
    let hausdorff = hausdorff(&take(&map_events), &take(&rk4_events));
    Ok(HenonRun {
        map,
        crossings: map_events.len().min(rk4_events.len()).min(settings.crossings),
        map_events,
        rk4_events,
        energy_drift,
        hausdorff,
    })
}

pub struct SirRun {
    pub fit: FitResult,
    pub train: Trajectory,
    pub tests: Vec<(Trajectory, Option<Trajectory>)>,
    /// Per-point MSE for each test initial condition (infinite on divergence).
    pub test_mse: Vec<f64>,
    /// Largest `|I|` over the map rollout from `(1, 0, 0)`.
    pub fixed_point_drift: f64,
}

pub const SIR_EPOCHS: usize = 20_000;
pub const SIR_LEARNING_RATE: f64 = 5e-4;

pub fn sir_run(sir: &Sir, epochs: usize, learning_rate: f64) -> Result<SirRun> {
    let data = sir.training_set()?;
    let train = sir.truth(&sir.train_x0)?;
    let config = TrainConfig {
        order: 2,
        epochs,
        adamax: AdamaxParams {
            learning_rate,
            ..Default::default()
        },
        ..Default::default()
    };
    let fit = fit(&data, &config)?;
    let mut tests = Vec::new();
    let mut test_mse = Vec::new();
    for x0 in &sir.test_x0 {
        let truth = sir.truth(x0)?;
        let predicted = simulate(&fit.map, x0, sir.steps, DEFAULT_GUARD).ok();
        test_mse.push(match &predicted {
            Some(p) => mean_squared_error(&p.states[1..], &truth.states[1..]),
            None => f64::INFINITY,
        });
        tests.push((truth, predicted));
    }
    let fixed_point_drift = match simulate(&fit.map, &[1.0, 0.0, 0.0], sir.steps, DEFAULT_GUARD) {
        Ok(t) => t.states.iter().map(|x| x[1].abs()).fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    Ok(SirRun {
        fit,
        train,
        tests,
        test_mse,
        fixed_point_drift,
    })
}

pub struct HiddenRun {
    pub fit: FitResult,
    pub trajectories: Vec<Trajectory>,
    /// Euclidean final-state error for each held-out initial condition.
    pub held_out_errors: Vec<f64>,
    pub held_out_predictions: Vec<Option<Vec<f64>>>,
}

pub const HIDDEN_EPOCHS: usize = 8_000;
pub const HIDDEN_LEARNING_RATE: f64 = 2e-4;

pub fn hidden_state_run(h: &HiddenState, epochs: usize, learning_rate: f64) -> Result<HiddenRun> {
    let trajectories = h.trajectories()?;
    let data = h.dataset(&trajectories)?;
    let config = TrainConfig {
        order: 2,
        epochs,
        adamax: AdamaxParams {
            learning_rate,
            ..Default::default()
        },
        seed: h.seed,
        ..Default::default()
    };
    let fit = fit(&data, &config)?;
    let mut held_out_errors = Vec::new();
    let mut held_out_predictions = Vec::new();
    for tr in &trajectories[h.train_sequences..] {
        match simulate(&fit.map, &tr.states[0], h.steps, DEFAULT_GUARD) {
            Ok(p) => {
                held_out_errors.push(euclidean(p.last(), tr.last()));
                held_out_predictions.push(Some(p.last().to_vec()));
            }
            Err(_) => {
                held_out_errors.push(f64::INFINITY);
                held_out_predictions.push(None);
            }
        }
    }
    Ok(HiddenRun {
        fit,
        trajectories,
        held_out_errors,
        held_out_predictions,
    })
}

fn names(ode: &PolynomialODE) -> Vec<String> {
    ode.variable_names().to_vec()
}

fn comparison_demo(dir: &Path, ode: &PolynomialODE, x0: &[f64], steps: usize) -> Result<(), CliError> {
    let cmp = compare_with_rk4(ode, 0.01, 3, x0, steps, 100)?;
    let names = names(ode);
    write(&dir.join("system.ode"), &ode.to_string())?;
    write(&dir.join("map.json"), &cmp.map.to_json())?;
    write(&dir.join("map_trajectory.csv"), &cmp.predicted.to_csv(&names))?;
    write(&dir.join("rk4_trajectory.csv"), &cmp.reference.to_csv(&names))?;
    print!("{}", block_shapes(&cmp.map));
    println!("steps={steps} max_deviation={:e}", cmp.max_deviation);
    Ok(())
}

fn henon_demo(dir: &Path, steps: Option<usize>) -> Result<(), CliError> {
    let settings = HenonSettings {
        steps: steps.unwrap_or(HenonSettings::default().steps),
        ..Default::default()
    };
    let run = henon_heiles_run(&settings)?;
    let ode = scenarios::henon_heiles();
    write(&dir.join("system.ode"), &ode.to_string())?;
    write(&dir.join("map.json"), &run.map.to_json())?;
    write(&dir.join("map_section.csv"), &section_to_csv(&run.map_events, ("q2", "p2")))?;
    write(&dir.join("rk4_section.csv"), &section_to_csv(&run.rk4_events, ("q2", "p2")))?;
    println!(
        "map_crossings={} rk4_crossings={} energy_drift={:e} hausdorff_first_{}={:e}",
        run.map_events.len(),
        run.rk4_events.len(),
        run.energy_drift,
        run.crossings,
        run.hausdorff
    );
    Ok(())
}

fn sir_demo(dir: &Path, epochs: usize, lr: f64) -> Result<(), CliError> {
    let sir = Sir::default();
    let ode = sir.ode();
    let names = names(&ode);
    let run = sir_run(&sir, epochs, lr)?;
    write(&dir.join("system.ode"), &ode.to_string())?;
    write(&dir.join("train.csv"), &run.train.to_csv(&names))?;
    write(&dir.join("map.json"), &run.fit.map.to_json())?;
    write(&dir.join("loss.csv"), &loss_history_csv(&run.fit.loss_history))?;
    for (i, (truth, predicted)) in run.tests.iter().enumerate() {
        write(&dir.join(format!("test{i}_rk4.csv")), &truth.to_csv(&names))?;
        if let Some(p) = predicted {
            write(&dir.join(format!("test{i}_map.csv")), &p.to_csv(&names))?;
        }
    }
    println!("epochs={} best_loss={:e}", run.fit.epochs_run, run.fit.best_loss);
    for (x0, mse) in sir.test_x0.iter().zip(&run.test_mse) {
        println!("test x0={x0:?} mse={mse:e}");
    }
    println!("fixed_point_max_abs_I={:e}", run.fixed_point_drift);
    Ok(())
}

fn hidden_demo(dir: &Path, epochs: usize, lr: f64, seed: u64) -> Result<(), CliError> {
    let h = HiddenState {
        seed,
        ..Default::default()
    };
    let ode = h.ode();
    let run = hidden_state_run(&h, epochs, lr)?;
    let data = h.dataset(&run.trajectories)?;
    write(&dir.join("system.ode"), &ode.to_string())?;
    write(&dir.join("train.csv"), &data.to_csv())?;
    write(&dir.join("map.json"), &run.fit.map.to_json())?;
    write(&dir.join("loss.csv"), &loss_history_csv(&run.fit.loss_history))?;
    let mut held = String::from("index,x0,y0,z0,x_rk4,y_rk4,z_rk4,x_map,y_map,z_map,error\n");
    for (i, tr) in run.trajectories[h.train_sequences..].iter().enumerate() {
        let row: Vec<String> = tr.states[0]
            .iter()
            .chain(tr.last())
            .map(|v| v.to_string())
            .chain(match &run.held_out_predictions[i] {
                Some(p) => p.iter().map(|v| v.to_string()).collect(),
                None => vec!["NA".to_string(); 3],
            })
            .collect();
        let _ = writeln!(held, "{i},{},{}", row.join(","), run.held_out_errors[i]);
    }
    write(&dir.join("held_out.csv"), &held)?;
    println!("epochs={} best_loss={:e}", run.fit.epochs_run, run.fit.best_loss);
    println!("held_out_final_errors={:?}", run.held_out_errors);
    Ok(())
}

pub fn run(a: DemoArgs) -> Result<(), CliError> {
    fs::create_dir_all(&a.out_dir)?;
    let dir = a.out_dir.as_path();
    match a.name {
        DemoName::Lotka => {
            comparison_demo(dir, &scenarios::lotka_volterra(), &[0.2, 0.1], a.steps.unwrap_or(1000))
        }
        DemoName::Vdp => {
            comparison_demo(dir, &scenarios::van_der_pol(), &[0.2, 0.1], a.steps.unwrap_or(2000))
        }
        DemoName::Henon => henon_demo(dir, a.steps),
        DemoName::Sir => sir_demo(
            dir,
            a.epochs.unwrap_or(SIR_EPOCHS),
            a.lr.unwrap_or(SIR_LEARNING_RATE),
        ),
        DemoName::HiddenState => hidden_demo(
            dir,
            a.epochs.unwrap_or(HIDDEN_EPOCHS),
            a.lr.unwrap_or(HIDDEN_LEARNING_RATE),
            a.seed,
        ),
    }
}
