use std::fs;
use std::path::Path;

use lienet_core::{
    build_map, compose_all, fit, learn::loss_history_csv, map_to_ode, parse_ode,
    poincare_section, propagator::section_to_csv, simulate, AdamaxParams, BuilderConfig, Init,
    InterpretConfig, LieMap, SectionConfig, SparsityTemplate, TimeSeriesDataset, TrainConfig,
};

use crate::args::{BuildArgs, Cli, Command, ComposeArgs, FitArgs, InterpretArgs, SimulateArgs};
use crate::error::CliError;

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Build(a) => build(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Interpret(a) => interpret(a),
        Command::Compose(a) => compose(a),
        Command::Demo(a) => crate::demo::run(a),
    }
}

pub(crate) fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| {
        CliError::Core(lienet_core::Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| {
        CliError::Core(lienet_core::Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })
}

fn read_map(path: &Path) -> Result<LieMap, CliError> {
    Ok(LieMap::from_json(&read(path)?)?)
}

/// Comma-separated floats.
pub fn parse_state(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("invalid number `{}` in state", t.trim())))
        })
        .collect()
}

/// Variable by name, falling back to a zero-based index.
pub fn resolve_coord(names: &[String], token: &str) -> Result<usize, CliError> {
    let token = token.trim();
    if let Some(i) = names.iter().position(|n| n == token) {
        return Ok(i);
    }
    match token.parse::<usize>() {
        Ok(i) if i < names.len() => Ok(i),
        _ => Err(CliError::Usage(format!(
            "unknown coordinate `{token}` (variables: {})",
            names.join(",")
        ))),
    }
}

pub(crate) fn block_shapes(map: &LieMap) -> String {
    map.weights()
        .iter()
        .enumerate()
        .map(|(k, w)| format!("W{k}: {}x{}\n", w.nrows(), w.ncols()))
        .collect()
}

fn build(a: BuildArgs) -> Result<(), CliError> {
    let ode = parse_ode(&read(&a.ode)?)?;
    let config = BuilderConfig::new(a.order).with_substeps(a.substeps);
    let map = build_map(&ode, a.dt, &config)?;
    write(&a.out, &map.to_json())?;
    println!(
        "map n={} order={} dt={} substeps={} parameters={}",
        map.n(),
        map.order(),
        map.dt(),
        a.substeps,
        map.num_parameters()
    );
    print!("{}", block_shapes(&map));
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<(), CliError> {
    let map = read_map(&a.map)?;
    let x0 = parse_state(&a.x0)?;
    let names = map.variable_names().to_vec();
    let csv = match (&a.section, &a.plane) {
        (Some(section), Some(plane)) => {
            let (coord, value) = section
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("section `{section}` is not coord=value")))?;
            let coord = resolve_coord(&names, coord)?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid section level `{value}`")))?;
            let (p, q) = plane
                .split_once(',')
                .ok_or_else(|| CliError::Usage(format!("plane `{plane}` is not a,b")))?;
            let plane = (resolve_coord(&names, p)?, resolve_coord(&names, q)?);
            let config = SectionConfig {
                coord,
                value,
                plane,
                direction: a.direction.into(),
            };
            let events = poincare_section(&map, &x0, a.steps, &config, a.guard)?;
            eprintln!("crossings={}", events.len());
            section_to_csv(&events, (&names[plane.0], &names[plane.1]))
        }
        _ => simulate(&map, &x0, a.steps, a.guard)?.to_csv(&names),
    };
    match &a.out {
        Some(path) => write(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn fit_cmd(a: FitArgs) -> Result<(), CliError> {
    let data = TimeSeriesDataset::read_csv(&a.data)?;
    let init = match &a.init {
        Some(path) => Init::Map(read_map(path)?),
        None => Init::NearIdentity,
    };
    let config = TrainConfig {
        order: a.order,
        epochs: a.epochs,
        adamax: AdamaxParams {
            learning_rate: a.lr,
            ..Default::default()
        },
        init,
        seed: a.seed,
        target_loss: a.target_loss,
        ..Default::default()
    };
    let result = fit(&data, &config)?;
    write(&a.out, &result.map.to_json())?;
    if let Some(path) = &a.loss_out {
        write(path, &loss_history_csv(&result.loss_history))?;
    }
    println!(
        "sequences={} observed={} epochs={} best_loss={:e}",
        data.sequences().len(),
        data.observed_targets(),
        result.epochs_run,
        result.best_loss
    );
    match result.aborted {
        Some(reason) => Err(CliError::Core(lienet_core::Error::Divergence {
            context: "fit".into(),
            step: result.epochs_run,
            message: format!("training aborted ({reason}); best map written"),
        })),
        None => Ok(()),
    }
}

fn interpret(a: InterpretArgs) -> Result<(), CliError> {
    let map = read_map(&a.map)?;
    let template = match &a.template {
        Some(path) => {
            let ode = parse_ode(&read(path)?)?;
            if ode.variable_names() != map.variable_names() {
                return Err(CliError::Usage(format!(
                    "template variables {:?} differ from map variables {:?}",
                    ode.variable_names(),
                    map.variable_names()
                )));
            }
            Some(SparsityTemplate::from_ode(&ode))
        }
        None => None,
    };
    let degree = match (a.degree, &template) {
        (Some(d), Some(t)) if d != t.degree() => {
            return Err(CliError::Usage(format!(
                "--degree {d} disagrees with template degree {}",
                t.degree()
            )))
        }
        (Some(d), _) => d,
        (None, Some(t)) => t.degree(),
        (None, None) => return Err(CliError::Usage("--degree or --template is required".into())),
    };
    let config = InterpretConfig {
        builder: BuilderConfig::new(map.order()).with_substeps(a.substeps),
        max_iterations: a.max_iterations,
        acceptance: a.acceptance,
        ..Default::default()
    };
    let result = map_to_ode(&map, degree, template.as_ref(), &config)?;
    write(&a.out, &result.ode.to_string())?;
    let report = result.report();
    match &a.report {
        Some(path) => write(path, &report)?,
        None => print!("{report}"),
    }
    if result.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "residual {:e} above acceptance {:e} after {} iterations",
            result.residual, a.acceptance, result.iterations
        )))
    }
}

fn compose(a: ComposeArgs) -> Result<(), CliError> {
    let maps = a
        .maps
        .iter()
        .map(|p| read_map(p))
        .collect::<Result<Vec<_>, _>>()?;
    let order = a
        .order
        .unwrap_or_else(|| maps.iter().map(|m| m.order()).max().unwrap_or(1));
    let map = compose_all(&maps, order)?;
    write(&a.out, &map.to_json())?;
    println!("composed {} maps: n={} order={} dt={}", maps.len(), map.n(), map.order(), map.dt());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn states_and_coords() {
        assert_eq!(parse_state("0, 0.670,-1e-3").unwrap(), vec![0.0, 0.67, -1e-3]);
        assert!(parse_state("1,,2").is_err());
        let names: Vec<String> = ["q1", "q2"].iter().map(|s| s.to_string()).collect();
        assert_eq!(resolve_coord(&names, "q2").unwrap(), 1);
        assert_eq!(resolve_coord(&names, "0").unwrap(), 0);
        assert!(resolve_coord(&names, "2").is_err());
        assert!(resolve_coord(&names, "p1").is_err());
    }
}
