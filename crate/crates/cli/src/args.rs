use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lienet_core::CrossingDirection;

#[derive(Debug, Parser)]
#[command(name = "lienet", version, about = "Truncated matrix Lie maps for polynomial ODEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a Lie map from an ODE file.
    Build(BuildArgs),
    /// Roll a map forward, optionally recording a Poincaré section.
    Simulate(SimulateArgs),
    /// Fit a map to time-series CSV data.
    Fit(FitArgs),
    /// Recover polynomial ODE coefficients from a map.
    Interpret(InterpretArgs),
    /// Compose maps, applied left to right.
    Compose(ComposeArgs),
    /// Run a bundled experiment and write all its artifacts.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// ODE text file.
    pub ode: PathBuf,
    /// Time step of the map.
    #[arg(long, allow_hyphen_values = true)]
    pub dt: f64,
    /// Truncation order K.
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// RK4 substeps used to integrate the map equation.
    #[arg(long, default_value_t = 100)]
    pub substeps: usize,
    /// Output map document.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    Positive,
    Negative,
    Both,
}

impl From<Direction> for CrossingDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Positive => CrossingDirection::Positive,
            Direction::Negative => CrossingDirection::Negative,
            Direction::Both => CrossingDirection::Both,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Map document.
    pub map: PathBuf,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    #[arg(long)]
    pub steps: usize,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Section hyperplane as `coord=value`, coord by name or index.
    #[arg(long, requires = "plane", allow_hyphen_values = true)]
    pub section: Option<String>,
    /// Recorded plane coordinates as `a,b`.
    #[arg(long, requires = "section")]
    pub plane: Option<String>,
    #[arg(long, value_enum, default_value_t = Direction::Positive)]
    pub direction: Direction,
    /// Euclidean norm treated as divergence.
    #[arg(long, default_value_t = lienet_core::DEFAULT_GUARD)]
    pub guard: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV files (`t,<vars>` with optional `series` column, `NA` for hidden entries).
    #[arg(required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    /// Adamax learning rate.
    #[arg(long, default_value_t = 2e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop once the loss falls below this value.
    #[arg(long)]
    pub target_loss: Option<f64>,
    /// Start from this map instead of the identity.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV.
    #[arg(long)]
    pub loss_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InterpretArgs {
    /// Map document.
    pub map: PathBuf,
    /// Degree of the recovered right-hand side; defaults to the template's.
    #[arg(long)]
    pub degree: Option<usize>,
    /// ODE file whose nonzero terms mark the free coefficients.
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
    /// Largest total squared residual accepted as converged.
    #[arg(long, default_value_t = 1e-8)]
    pub acceptance: f64,
    #[arg(long, default_value_t = 100)]
    pub substeps: usize,
    /// Output ODE file.
    #[arg(long)]
    pub out: PathBuf,
    /// Residual report; standard output when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Map documents, first applied first.
    #[arg(required = true)]
    pub maps: Vec<PathBuf>,
    /// Truncation order of the result; defaults to the highest input order.
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoName {
    Lotka,
    Vdp,
    Henon,
    Sir,
    HiddenState,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(value_enum)]
    pub name: DemoName,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Map steps; each demo has its own default.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Training epochs (sir, hidden-state).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adamax learning rate (sir, hidden-state).
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for generated initial conditions (hidden-state).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
