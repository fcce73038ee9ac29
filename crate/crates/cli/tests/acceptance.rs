//! Acceptance criteria at their stated tolerances, root seed 0.
//! Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use saddle_scope::analysis::verify::{CheckStatus, VerificationReport};
use saddle_scope::suites::{self, SuiteOptions};
use saddle_scope::Result;

const ROOT_SEED: u64 = 0;

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

struct Outcome {
    passed: bool,
    summary: String,
}

fn show(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.4}")
    }
}

fn from_reports(reports: Vec<VerificationReport>) -> Outcome {
    let passed = reports.iter().all(|r| r.status == CheckStatus::Passed);
    let summary = reports
        .iter()
        .map(|r| {
            let tag = if r.status == CheckStatus::Passed {
                "ok"
            } else {
                "FAILED"
            };
            format!(
                "{} {tag} ({} vs {})",
                r.check,
                show(r.statistic),
                show(r.threshold)
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { passed, summary }
}

fn reports(r: Result<Vec<VerificationReport>>) -> Outcome {
    match r {
        Ok(v) => from_reports(v),
        Err(e) => Outcome {
            passed: false,
            summary: format!("error: {e}"),
        },
    }
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../presets")
        .join(name)
}

/// Files in `dir` with their bytes, sorted by name.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// Runs every subcommand twice into fresh directories and compares stdout,
/// exit status and every file written.
fn determinism() -> Outcome {
    let commands: [(&str, Vec<&str>, &str); 5] = [
        ("run", vec!["run"], "logistic_trajectory.json"),
        ("run-strided", vec!["run"], "logistic_sweep.json"),
        ("sweep", vec!["sweep"], "logistic_sweep.json"),
        ("verify", vec!["verify", "all"], "quadratic_saddle.json"),
        ("surface", vec!["surface"], "logistic_trajectory.json"),
    ];
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (label, args, cfg) in &commands {
        let attempt = || {
            let dir = tempfile::tempdir().unwrap();
            let out = dir.path().join("out");
            let o = Command::new(env!("CARGO_BIN_EXE_saddle-scope"))
                .env_remove("SADDLE_SCOPE_SEED")
                .args(args)
                .arg("--config")
                .arg(preset(cfg))
                .arg("--out")
                .arg(&out)
                .arg("--seed")
                .arg(ROOT_SEED.to_string())
                .output()
                .unwrap();
            (o.status.code(), o.stdout, snapshot(dir.path()))
        };
        let (a, b) = (attempt(), attempt());
        files += a.2.len();
        if a != b || a.2.is_empty() {
            mismatched.push(*label);
        }
    }
    Outcome {
        passed: mismatched.is_empty(),
        summary: if mismatched.is_empty() {
            format!(
                "{} commands, {files} output files byte-identical across reruns",
                commands.len()
            )
        } else {
            format!("outputs differ for {}", mismatched.join(", "))
        },
    }
}

fn main() -> ExitCode {
    let opts = SuiteOptions::new(ROOT_SEED);
    let criteria: Vec<(&str, Check)> = vec![
        (
            "saddle geometry",
            Box::new(|| reports(suites::saddle_geometry().map(|r| vec![r]))),
        ),
        (
            "basin symmetry",
            Box::new(|| reports(suites::basin_symmetry(&opts).map(|r| vec![r]))),
        ),
        (
            "escape-time scaling",
            Box::new(|| reports(suites::escape_scaling(&opts).map(|r| vec![r]))),
        ),
        (
            "one-step descent",
            Box::new(|| {
                reports((|| {
                    Ok(vec![
                        suites::descent_in_large_gradient_region(&opts)?,
                        suites::ascent_in_second_order_region(&opts)?,
                    ])
                })())
            }),
        ),
        (
            "deviation exponents",
            Box::new(|| {
                reports((|| {
                    let mut v = suites::deviation_slopes(&opts)?;
                    v.push(suites::quadratic_coupling_exact(&opts)?);
                    Ok(v)
                })())
            }),
        ),
        (
            "limiting ratio",
            Box::new(|| reports(suites::limiting_ratios())),
        ),
        (
            "escape-time prediction",
            Box::new(|| {
                reports((|| {
                    let mut v = suites::escape_prediction(&opts)?;
                    v.push(suites::escape_time_arithmetic()?);
                    Ok(v)
                })())
            }),
        ),
        (
            "noise assumption certificates",
            Box::new(|| {
                reports((|| {
                    Ok(vec![
                        suites::perturbation_fourth_moment(&opts)?,
                        suites::perturbation_mean(&opts)?,
                        suites::perturbation_covariance(&opts)?,
                    ])
                })())
            }),
        ),
        (
            "noiseless negative control",
            Box::new(|| reports(suites::noiseless_control(&opts))),
        ),
        ("determinism", Box::new(determinism)),
    ];

    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            failed += 1;
        }
        println!(
            "{tag} criterion {} {name} [{:.2}s]: {}",
            k + 1,
            start.elapsed().as_secs_f64(),
            o.summary
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
