//! Subcommand drivers. Each run validates its config, writes artifacts and a
//! manifest into the output directory, and maps the result to an exit code.

use std::path::PathBuf;

use serde_json::{json, Value};

use crate::barrier::{aubry_lift, export_matrix, mane_potential, peierls_barrier, solve_class, StateGrid};
use crate::error::{Error, Result};
use crate::flow::{find_periodic, NewtonConfig, PeriodGauge};
use crate::green::{classify_periodic, detect_conjugate, green_bundles, GreenDump};
use crate::io::{csv_row, fmt_f64, ArtifactDir};
use crate::model::{CotangentState, LagrangianModel};
use crate::occupation::{alpha_grid, alpha_table_csv, convexity_check};
use crate::config::ExperimentConfig;
use crate::selftest::{run_selftest, CRITERIA};
use crate::tiered::{
    connectivity_check, energy_slice, gnuplot_projection, gnuplot_section, pendulum_product_scenario,
    scenario_summary, tiered_scan, traces_csv, ScenarioParams,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_ACCEPTANCE: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Alpha,
    Barrier,
    Tiered,
    Green,
    Orbit,
    Scenario,
    Selftest,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Alpha,
        Command::Barrier,
        Command::Tiered,
        Command::Green,
        Command::Orbit,
        Command::Scenario,
        Command::Selftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Alpha => "alpha",
            Command::Barrier => "barrier",
            Command::Tiered => "tiered",
            Command::Green => "green",
            Command::Orbit => "orbit",
            Command::Scenario => "scenario",
            Command::Selftest => "selftest",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command `{name}`")))
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub code: i32,
    pub artifacts: Option<PathBuf>,
    /// Human-readable summary lines.
    pub lines: Vec<String>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidArgument(_) | Error::InvalidModel(_) | Error::Json(_) => {
            EXIT_VALIDATION
        }
        _ => EXIT_NUMERICAL,
    }
}

/// Runs `command` under `config`. A failing stage still leaves the
/// artifacts written so far plus a manifest recording the error.
pub fn run(command: Command, config: &ExperimentConfig) -> RunOutcome {
    run_with_progress(command, config, |_| {})
}

pub fn run_with_progress(command: Command, config: &ExperimentConfig, mut progress: impl FnMut(&str)) -> RunOutcome {
    let model = match config.validate() {
        Ok(m) => m,
        Err(e) => {
            return RunOutcome {
                code: exit_code(&e),
                artifacts: None,
                lines: vec![e.to_string()],
            }
        }
    };
    let mut dir = match ArtifactDir::create(&config.output) {
        Ok(d) => d,
        Err(e) => {
            return RunOutcome {
                code: exit_code(&e),
                artifacts: None,
                lines: vec![e.to_string()],
            }
        }
    };
    let mut lines = Vec::new();
    let result = match command {
        Command::Alpha => run_alpha(&model, config, &mut dir, &mut lines),
        Command::Barrier => run_barrier(&model, config, &mut dir, &mut lines),
        Command::Tiered => run_tiered(&model, config, &mut dir, &mut lines),
        Command::Green => run_green(&model, config, &mut dir, &mut lines),
        Command::Orbit => run_orbit(&model, config, &mut dir, &mut lines),
        Command::Scenario => run_scenario(&model, config, &mut dir, &mut lines),
        Command::Selftest => run_selftest_command(config, &mut dir, &mut lines, &mut progress),
    };
    let (code, residuals) = match result {
        Ok((code, r)) => (code, r),
        Err(e) => {
            lines.push(format!("error: {e}"));
            (exit_code(&e), json!({ "error": e.to_string() }))
        }
    };
    let root = dir.root().to_path_buf();
    let residuals = json!({ "command": command.name(), "exit_code": code, "summary": residuals });
    match dir.finish(config, &residuals) {
        Ok(_) => RunOutcome {
            code,
            artifacts: Some(root),
            lines,
        },
        Err(e) => {
            lines.push(format!("error writing manifest: {e}"));
            RunOutcome {
                code: EXIT_NUMERICAL,
                artifacts: Some(root),
                lines,
            }
        }
    }
}

type Stage = Result<(i32, Value)>;

fn run_alpha(model: &LagrangianModel, cfg: &ExperimentConfig, dir: &mut ArtifactDir, lines: &mut Vec<String>) -> Stage {
    let samples = alpha_grid(model, cfg.w_box, cfg.w_res, &cfg.grid_params())?;
    dir.write_text("alpha.csv", &alpha_table_csv(&samples))?;
    let points: Vec<(Vec<f64>, f64)> = samples.iter().map(|s| s.point()).collect();
    let convexity = convexity_check(&points);
    dir.write_json("convexity.json", &convexity)?;
    lines.push(format!(
        "{} classes, convexity worst violation {}",
        samples.len(),
        fmt_f64(convexity.worst_violation)
    ));
    Ok((
        EXIT_OK,
        json!({
            "classes": samples.len(),
            "convexity_worst_violation": fmt_f64(convexity.worst_violation),
            "degenerate_measures": samples.iter().filter(|s| s.measure.degenerate).count(),
        }),
    ))
}

fn run_barrier(model: &LagrangianModel, cfg: &ExperimentConfig, dir: &mut ArtifactDir, lines: &mut Vec<String>) -> Stage {
    let grid = StateGrid::new(model.dim(), cfg.grid)?;
    let w = cfg.class(model.dim());
    let (kernel, crit) = solve_class(model, &grid, cfg.step, &w, cfg.v_max)?;
    let table = peierls_barrier(&kernel, crit.c, cfg.window[0], cfg.window[1], cfg.tolerances.barrier)?;
    table.export(dir, "barrier")?;
    let m = mane_potential(&kernel, crit.c, cfg.window[1])?;
    export_matrix(dir, "mane", &m, &table.meta)?;
    let lift = aubry_lift(&table, &kernel, cfg.tolerances.aubry)?;
    let n = model.dim();
    let mut csv = (1..=n)
        .map(|i| format!("x{i}"))
        .chain((1..=n).map(|i| format!("v{i}")))
        .collect::<Vec<_>>()
        .join(",");
    csv.push('\n');
    for s in &lift.states {
        let mut row = s.base.coords().to_vec();
        row.extend(&s.v);
        csv.push_str(&csv_row(&row));
        csv.push('\n');
    }
    dir.write_text("aubry_lift.csv", &csv)?;
    dir.write_json("aubry_ties.json", &lift.ties)?;
    lines.push(format!(
        "c = {}, barrier residual {}, {} Aubry nodes, {} ties",
        fmt_f64(crit.c),
        fmt_f64(table.meta.residual),
        lift.nodes.len(),
        lift.ties.len()
    ));
    Ok((
        EXIT_OK,
        json!({
            "c": fmt_f64(crit.c),
            "barrier_residual": fmt_f64(table.meta.residual),
            "converged": table.meta.converged,
            "aubry_nodes": lift.nodes.len(),
            "ties": lift.ties.len(),
        }),
    ))
}

fn run_tiered(model: &LagrangianModel, cfg: &ExperimentConfig, dir: &mut ArtifactDir, lines: &mut Vec<String>) -> Stage {
    let scan = tiered_scan(model, cfg.w_box, cfg.w_res, &cfg.scan_params())?;
    dir.write_text("cloud.csv", &scan.cloud.to_csv())?;
    dir.write_json("classes.json", &scan.classes)?;
    let slice = energy_slice(&scan.cloud, cfg.energy, cfg.tolerances.energy_slice);
    dir.write_text("slice.csv", &slice.to_csv())?;
    let report = connectivity_check(&slice, cfg.tolerances.chain_epsilon);
    dir.write_json("connectivity.json", &report)?;
    let n = model.dim();
    for axis in 0..n {
        dir.write_text(&format!("cloud_x{}.gp", axis + 1), &gnuplot_projection("cloud.csv", n, axis))?;
    }
    let failed = scan.classes.iter().filter(|c| c.error.is_some()).count();
    lines.push(format!(
        "{} cloud points, slice {} points in {} component(s), connecting ε {}",
        scan.cloud.len(),
        slice.len(),
        report.components,
        fmt_f64(report.connecting_epsilon)
    ));
    Ok((
        if failed == 0 { EXIT_OK } else { EXIT_NUMERICAL },
        json!({
            "cloud_points": scan.cloud.len(),
            "failed_classes": failed,
            "energy_defect": fmt_f64(scan.cloud.energy_defect(model)),
            "slice_points": slice.len(),
            "components": report.components,
            "connecting_epsilon": fmt_f64(report.connecting_epsilon),
        }),
    ))
}

fn start_state(model: &LagrangianModel, cfg: &ExperimentConfig) -> CotangentState {
    let n = model.dim();
    CotangentState::new(
        cfg.start_x.clone().unwrap_or_else(|| vec![0.0; n]),
        cfg.start_p.clone().unwrap_or_else(|| vec![0.0; n]),
    )
}

fn run_green(model: &LagrangianModel, cfg: &ExperimentConfig, dir: &mut ArtifactDir, lines: &mut Vec<String>) -> Stage {
    let base = start_state(model, cfg);
    let flow = cfg.flow();
    let conj = detect_conjugate(model, &base, -cfg.t_cap, cfg.t_cap, 0.05, &flow)?;
    dir.write_json("conjugacy.json", &conj)?;
    if !conj.is_empty() {
        lines.push(format!("{} conjugate times on ±{}", conj.times.len(), cfg.t_cap));
        return Ok((EXIT_OK, json!({ "conjugate_times": conj.times.len() })));
    }
    let pair = green_bundles(model, &base, cfg.t_cap, cfg.tolerances.green, &flow)?;
    dir.write_json("green.json", &GreenDump::from(&pair))?;
    lines.push(format!(
        "converged {} at t = {}, gap of S₊ − S₋ residuals {} / {}",
        pair.converged,
        fmt_f64(pair.t_reached),
        fmt_f64(pair.residual_plus),
        fmt_f64(pair.residual_minus)
    ));
    Ok((
        EXIT_OK,
        json!({
            "conjugate_times": 0,
            "converged": pair.converged,
            "residual_plus": fmt_f64(pair.residual_plus),
            "residual_minus": fmt_f64(pair.residual_minus),
        }),
    ))
}

fn run_orbit(model: &LagrangianModel, cfg: &ExperimentConfig, dir: &mut ArtifactDir, lines: &mut Vec<String>) -> Stage {
    let guess = start_state(model, cfg);
    let flow = cfg.flow();
    let orbit = find_periodic(model, &guess, cfg.period, PeriodGauge::FixPeriod, &flow, &NewtonConfig::default())?;
    let mut csv = Vec::new();
    orbit.trajectory.write_csv(model, &mut csv)?;
    dir.write_bytes("orbit.csv", &csv)?;
    let summary = json!({
        "anchor_x": orbit.anchor.base.coords(),
        "anchor_p": orbit.anchor.p,
        "period": fmt_f64(orbit.period),
        "residual": fmt_f64(orbit.residual),
        "winding": orbit.winding,
        "floquet": orbit.floquet.iter().map(|c| [fmt_f64(c.re), fmt_f64(c.im)]).collect::<Vec<_>>(),
    });
    dir.write_json("orbit.json", &summary)?;
    let class = classify_periodic(model, &orbit, cfg.t_cap, cfg.tolerances.green, &flow)?;
    dir.write_json("classification.json", &class)?;
    lines.push(format!(
        "period {}, residual {}, {:?} (rank {}, consistent {})",
        fmt_f64(orbit.period),
        fmt_f64(orbit.residual),
        class.kind,
        class.rank,
        class.consistent
    ));
    Ok((
        EXIT_OK,
        json!({
            "residual": fmt_f64(orbit.residual),
            "kind": class.kind,
            "rank": class.rank,
            "consistent": class.consistent,
        }),
    ))
}

fn run_scenario(model: &LagrangianModel, cfg: &ExperimentConfig, dir: &mut ArtifactDir, lines: &mut Vec<String>) -> Stage {
    if model.dim() != 2 {
        return Err(Error::Config {
            field: "model".into(),
            message: "the scenario reads its perturbation from a two-dimensional model".into(),
        });
    }
    let params = ScenarioParams {
        scan: cfg.scan_params(),
        psi: model.psi().clone(),
        t_cap: cfg.t_cap,
        green_tol: cfg.tolerances.green,
        ..ScenarioParams::default()
    };
    let report = pendulum_product_scenario(&params)?;
    dir.write_json("scenario.json", &report)?;
    dir.write_text("cloud.csv", &report.cloud.to_csv())?;
    dir.write_text("traces.csv", &traces_csv(&report.unstable, &report.stable))?;
    dir.write_text("section.gp", &gnuplot_section("traces.csv"))?;
    dir.write_text("cloud_x1.gp", &gnuplot_projection("cloud.csv", 2, 0))?;
    let summary = scenario_summary(&report);
    lines.push(summary.clone());
    for e in &report.errors {
        lines.push(format!("stage {} failed: {}", e.stage, e.message));
    }
    Ok((
        if report.errors.is_empty() { EXIT_OK } else { EXIT_NUMERICAL },
        json!({ "summary": summary, "errors": report.errors }),
    ))
}

fn run_selftest_command(
    cfg: &ExperimentConfig,
    dir: &mut ArtifactDir,
    lines: &mut Vec<String>,
    progress: &mut impl FnMut(&str),
) -> Stage {
    let report = run_selftest(cfg.seed, &CRITERIA, Some(dir), |row| progress(&row.line()))?;
    lines.extend(report.rows.iter().map(|r| r.line()));
    let failed: Vec<u8> = report.rows.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    Ok((
        if failed.is_empty() { EXIT_OK } else { EXIT_ACCEPTANCE },
        json!({ "passed": report.rows.len() - failed.len(), "failed": failed }),
    ))
}
