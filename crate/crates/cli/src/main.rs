use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use weakkam::commands::{run_with_progress, Command, EXIT_OK, EXIT_VALIDATION};
use weakkam::config::{ExperimentConfig, ModelRef};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sub {
    Alpha,
    Barrier,
    Tiered,
    Green,
    Orbit,
    Scenario,
    Selftest,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Alpha => Command::Alpha,
            Sub::Barrier => Command::Barrier,
            Sub::Tiered => Command::Tiered,
            Sub::Green => Command::Green,
            Sub::Orbit => Command::Orbit,
            Sub::Scenario => Command::Scenario,
            Sub::Selftest => Command::Selftest,
        }
    }
}

/// Weak KAM experiments on the torus: α tables, Peierls barriers, tiered
/// Aubry clouds, Green bundles and periodic orbits.
///
/// Flags override the values loaded with `--config`.
#[derive(Debug, Parser)]
#[command(name = "weakkam", version)]
struct Cli {
    command: Sub,

    /// JSON experiment configuration.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Built-in model: flat, flat1, pendulum, pendulum-product.
    #[arg(long, conflicts_with = "model_file")]
    model: Option<String>,
    /// Model description in JSON.
    #[arg(long, value_name = "FILE")]
    model_file: Option<PathBuf>,

    /// Points per axis (a power of two).
    #[arg(long)]
    grid: Option<usize>,
    /// Kernel time step.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    v_max: Option<f64>,
    /// Cohomology class, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    w: Option<Vec<f64>>,
    #[arg(long)]
    w_box: Option<f64>,
    #[arg(long)]
    w_res: Option<usize>,
    /// Peierls window `T0,T1`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    window: Option<Vec<f64>>,

    #[arg(long)]
    barrier_tol: Option<f64>,
    #[arg(long)]
    aubry_tol: Option<f64>,
    #[arg(long)]
    green_tol: Option<f64>,
    #[arg(long)]
    energy_slice_tol: Option<f64>,
    #[arg(long)]
    chain_epsilon: Option<f64>,
    #[arg(long)]
    radial_tol: Option<f64>,
    #[arg(long)]
    grid_tol: Option<f64>,

    /// Energy level for the `tiered` slice.
    #[arg(long, allow_hyphen_values = true)]
    energy: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    start_x: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    start_p: Option<Vec<f64>>,
    #[arg(long)]
    period: Option<f64>,
    #[arg(long)]
    t_cap: Option<f64>,
    #[arg(long)]
    integration_step: Option<f64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,

    /// Print only the final summary.
    #[arg(long, short)]
    quiet: bool,
}

macro_rules! set {
    ($cfg:expr, $($src:expr => $dst:ident),* $(,)?) => {
        $(if let Some(v) = $src { $cfg.$dst = v; })*
    };
}

impl Cli {
    fn config(&self) -> Result<ExperimentConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).map_err(|e| format!("{}: {e}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(name) = &self.model {
            cfg.model = ModelRef::Builtin(name.clone());
        }
        if let Some(path) = &self.model_file {
            cfg.model = ModelRef::File(path.clone());
        }
        set!(cfg,
            self.grid => grid,
            self.step => step,
            self.w_box => w_box,
            self.w_res => w_res,
            self.energy => energy,
            self.period => period,
            self.t_cap => t_cap,
            self.integration_step => integration_step,
            self.output.clone() => output,
            self.seed => seed,
        );
        if self.v_max.is_some() {
            cfg.v_max = self.v_max;
        }
        if self.w.is_some() {
            cfg.w = self.w.clone();
        }
        if self.start_x.is_some() {
            cfg.start_x = self.start_x.clone();
        }
        if self.start_p.is_some() {
            cfg.start_p = self.start_p.clone();
        }
        if let Some(w) = &self.window {
            cfg.window = [w[0], w[1]];
        }
        let t = &mut cfg.tolerances;
        set!(t,
            self.barrier_tol => barrier,
            self.aubry_tol => aubry,
            self.green_tol => green,
            self.energy_slice_tol => energy_slice,
            self.chain_epsilon => chain_epsilon,
            self.radial_tol => radial,
            self.grid_tol => grid,
        );
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let cfg = match cli.config() {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    };
    let quiet = cli.quiet;
    let outcome = run_with_progress(cli.command.into(), &cfg, |line| {
        if !quiet {
            eprintln!("{line}");
        }
    });
    for line in &outcome.lines {
        println!("{line}");
    }
    if let Some(dir) = &outcome.artifacts {
        println!("artifacts: {}", dir.display());
    }
    ExitCode::from(outcome.code as u8)
}
