//! Acceptance gate: criteria 1–13, one line each. Criteria 1–12 come from
//! the first selftest run; criterion 13 reruns the whole selftest into the
//! same output path and compares every artifact byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use weakkam::commands::{run, run_with_progress, Command, EXIT_OK};
use weakkam::config::ExperimentConfig;

const SEED: u64 = 20_240_601;

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(root).expect("artifact directory exists") {
        let entry = entry.unwrap();
        out.insert(
            entry.file_name().to_string_lossy().into_owned(),
            fs::read(entry.path()).unwrap(),
        );
    }
    out
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let cfg = ExperimentConfig {
        output: tmp.path().join("selftest"),
        seed: SEED,
        ..Default::default()
    };

    let mut rows = Vec::new();
    let first = run_with_progress(Command::Selftest, &cfg, |line| {
        if !line.starts_with("criterion 13") {
            println!("{line}");
        }
        rows.push(line.to_string());
    });
    let inner_13 = rows.iter().find(|l| l.starts_with("criterion 13")).cloned();
    let first_12_pass = rows.len() == 13 && rows.iter().take(12).all(|l| l.contains(" PASS "));
    let kept = tmp.path().join("first");
    fs::rename(&cfg.output, &kept).expect("move first run aside");

    let second = run(Command::Selftest, &cfg);
    let a = snapshot(&kept);
    let b = snapshot(&cfg.output);
    let differing: Vec<&String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .collect();
    let inner_ok = inner_13.as_deref().is_some_and(|l| l.contains(" PASS "));
    let det_pass = differing.is_empty() && !a.is_empty() && inner_ok && first.code == second.code;
    println!(
        "criterion 13 {:<4} determinism: {} artifacts from two full selftest runs, {} differing; in-run repeat: {}",
        if det_pass { "PASS" } else { "FAIL" },
        a.len(),
        differing.len(),
        inner_13.unwrap_or_else(|| "missing".into())
    );
    for line in &first.lines {
        if line.starts_with("error") {
            println!("{line}");
        }
    }

    if first_12_pass && det_pass && first.code == EXIT_OK {
        println!("acceptance: all 13 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED (selftest exit code {})", first.code);
        ExitCode::FAILURE
    }
}
