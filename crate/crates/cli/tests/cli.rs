use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_saddle-scope"));
    c.env_remove("SADDLE_SCOPE_SEED");
    c
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../presets")
        .join(name)
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn out_path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

/// Header and rows of a CSV file whose fields never contain commas.
fn read_csv(path: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&exec(&["--help"])), 0);
    assert_eq!(code(&exec(&[])), 2);
    assert_eq!(code(&exec(&["run"])), 2);
    assert_eq!(code(&exec(&["frobnicate"])), 2);
}

#[test]
fn malformed_or_missing_config_is_invalid_input() {
    let dir = TempDir::new().unwrap();
    let bad = write_config(&dir, "bad.json", "{ \"model\": ");
    let out = out_path(&dir, "o.csv");
    let o = exec(&["run", "--config", &bad, "--out", &out]);
    assert_eq!(code(&o), 2);
    let missing = out_path(&dir, "nope.json");
    assert_eq!(
        code(&exec(&["run", "--config", &missing, "--out", &out])),
        2
    );

    let unknown = write_config(
        &dir,
        "unknown.json",
        r#"{"model":{"kind":"quadratic","curvature":[1.0]},"oracle":{"kind":"exact"},
            "run":{"step_size":0.1,"horizon":5,"sede":1},"w0":[1.0]}"#,
    );
    let o = exec(&["run", "--config", &unknown, "--out", &out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.sede"));
}

#[test]
fn unknown_suite_and_single_step_sweep_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = preset("quadratic_saddle.json");
    let cfg = cfg.to_str().unwrap();
    let out = out_path(&dir, "o");
    assert_eq!(
        code(&exec(&[
            "verify", "nonsense", "--config", cfg, "--out", &out
        ])),
        2
    );
    assert_eq!(
        code(&exec(&[
            "sweep",
            "--config",
            cfg,
            "--out",
            &out,
            "--mu-list",
            "0.01"
        ])),
        2
    );
    assert_eq!(
        code(&exec(&[
            "sweep", "--config", cfg, "--out", &out, "--seeds", "10"
        ])),
        2
    );
}

#[test]
fn divergence_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "div.json",
        r#"{"model":{"kind":"quadratic","curvature":[100.0,100.0]},"oracle":{"kind":"exact"},
            "run":{"step_size":1.0,"horizon":1000,"seed":0},"w0":[1.0,1.0]}"#,
    );
    let o = exec(&["run", "--config", &cfg, "--out", &out_path(&dir, "o.csv")]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn surface_needs_two_dimensions() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "3d.json",
        r#"{"model":{"kind":"quadratic","curvature":[1.0,-1.0,2.0]},"oracle":{"kind":"exact"},
            "run":{"step_size":0.1,"horizon":5,"seed":0},"w0":[0.0,0.0,0.0]}"#,
    );
    assert_eq!(
        code(&exec(&[
            "surface",
            "--config",
            &cfg,
            "--out",
            &out_path(&dir, "s.csv")
        ])),
        2
    );
}

#[test]
fn zero_step_run_repeats_the_start() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "zero.json",
        r#"{"model":{"kind":"two_layer_logistic"},"oracle":{"kind":"perturbed_stochastic","perturbation_std":1.0},
            "run":{"step_size":0.0,"horizon":20,"seed":5},"w0":[0.3,-0.7]}"#,
    );
    let out = out_path(&dir, "t.csv");
    let o = exec(&["run", "--config", &cfg, "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out);
    assert_eq!(header[0], "iter");
    assert_eq!(rows.len(), 21);
    for r in &rows {
        assert_eq!(r[1..], rows[0][1..]);
    }
    assert_eq!(num(&rows[0][1]), 0.3);
    assert_eq!(num(&rows[0][2]), -0.7);
}

#[test]
fn run_writes_trajectory_and_summarizes_on_stdout() {
    let dir = TempDir::new().unwrap();
    let cfg = preset("logistic_trajectory.json");
    let out = out_path(&dir, "trajectory.csv");
    let o = exec(&["run", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(!text.contains(','), "{text}");
    assert!(text.contains("final_region M"), "{text}");
    assert!(text.contains("escape_index"), "{text}");

    let (header, rows) = read_csv(&out);
    assert_eq!(
        header,
        ["iter", "w_0", "w_1", "cost", "grad_norm_sq", "region"]
    );
    assert_eq!(rows.len(), 3001);
    let last = rows.last().unwrap();
    // The two minima sit near (1.4, 1.4) and (−1.4, −1.4).
    let (a, b) = (num(&last[1]), num(&last[2]));
    assert!(a * b > 0.5 && a.abs() > 0.8 && b.abs() > 0.8, "{a} {b}");
    assert!(num(&last[3]) < num(&rows[0][3]));

    // Same seed, same bytes; a different seed changes the path.
    let again = out_path(&dir, "again.csv");
    exec(&["run", "--config", cfg.to_str().unwrap(), "--out", &again]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
    let other = out_path(&dir, "other.csv");
    let o = bin()
        .args(["run", "--config", cfg.to_str().unwrap(), "--out", &other])
        .env("SADDLE_SCOPE_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(&out).unwrap(), fs::read(&other).unwrap());
}

#[test]
fn quadratic_sweep_scales_inversely_with_step() {
    let dir = TempDir::new().unwrap();
    let cfg = preset("quadratic_saddle.json");
    let out = out_path(&dir, "sweep.csv");
    let o = exec(&["sweep", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out);
    assert_eq!(rows.len(), 2);
    let med = column(&header, "median");
    let ratio = num(&rows[1][med]) / num(&rows[0][med]);
    assert!((1.6..=2.5).contains(&ratio), "{ratio}");
    assert_eq!(rows[0][column(&header, "censored")], "0");

    let (oh, orows) = read_csv(&out_path(&dir, "sweep.outcomes.csv"));
    assert_eq!(
        oh,
        [
            "step_size",
            "seed",
            "anchor_index",
            "escape_index",
            "censored_at",
            "basin"
        ]
    );
    assert_eq!(orows.len(), 400);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_path(&dir, "sweep.summary.json")).unwrap())
            .unwrap();
    let slope = summary["slope"].as_f64().unwrap();
    assert!((-1.3..=-0.7).contains(&slope), "{slope}");
    assert!(Path::new(&out_path(&dir, "sweep.curve_single.csv")).exists());
    assert!(Path::new(&out_path(&dir, "sweep.curve_mean.csv")).exists());
}

#[test]
fn logistic_surface_is_symmetric_with_saddle_at_origin() {
    let dir = TempDir::new().unwrap();
    let cfg = preset("logistic_trajectory.json");
    let out = out_path(&dir, "surf.csv");
    let o = exec(&["surface", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out);
    assert_eq!(rows.len(), 101 * 101);
    let cost = column(&header, "cost");
    let lmin = column(&header, "lambda_min");
    let at = |i: usize, j: usize| &rows[i * 101 + j];

    let origin = at(50, 50);
    assert_eq!(num(&origin[2]), 0.0);
    assert!((num(&origin[lmin]) + 0.4).abs() < 1e-6, "{}", origin[lmin]);
    assert_eq!(origin[column(&header, "region")], "H");

    for i in 0..101 {
        for j in 0..101 {
            let (a, b) = (num(&at(i, j)[cost]), num(&at(100 - i, 100 - j)[cost]));
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
    let best = (0..rows.len())
        .min_by(|x, y| num(&rows[*x][cost]).total_cmp(&num(&rows[*y][cost])))
        .unwrap();
    let (w0, w1) = (num(&rows[best][2]), num(&rows[best][3]));
    assert!(w0 * w1 > 0.0 && (w0.abs() - 1.4).abs() < 0.2, "{w0} {w1}");
}

#[test]
fn convex_surface_is_minimal_near_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = preset("convex_quadratic.json");
    let out = out_path(&dir, "surf.csv");
    let o = exec(&[
        "surface",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out,
        "--w-max",
        "0.1",
        "--grid",
        "11",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out);
    assert_eq!(rows.len(), 121);
    let region = column(&header, "region");
    assert!(rows.iter().all(|r| r[region] == "M"));
    assert!(rows
        .iter()
        .all(|r| num(&r[column(&header, "lambda_min")]) > 0.0));

    let single = out_path(&dir, "one.csv");
    let o = exec(&[
        "surface",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &single,
        "--grid",
        "1",
    ]);
    assert_eq!(code(&o), 0);
    let (_, rows) = read_csv(&single);
    assert_eq!(rows.len(), 1);
    assert_eq!((num(&rows[0][2]), num(&rows[0][3])), (0.0, 0.0));
}

#[test]
fn limits_suite_passes_and_writes_json() {
    let dir = TempDir::new().unwrap();
    let cfg = preset("quadratic_saddle.json");
    let out = out_path(&dir, "limits.json");
    let o = exec(&[
        "verify",
        "limits",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
    let reports: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let arr = reports.as_array().unwrap();
    assert_eq!(arr.len(), text.lines().count());
    for r in arr {
        for key in [
            "check",
            "passed",
            "statistic",
            "threshold",
            "stderr",
            "n",
            "seeds",
        ] {
            assert!(r.get(key).is_some(), "{key} missing in {r}");
        }
    }
}
