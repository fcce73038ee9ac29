use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use saddle_scope::analysis::escape::{
    escape_ensemble, measure_escape, predict_escape_time, EscapeRunOptions,
};
use saddle_scope::analysis::regions::{classify_from, RegionLabel};
use saddle_scope::analysis::spectral::min_eigenvalue;
use saddle_scope::analysis::verify::CheckStatus;
use saddle_scope::config::ExperimentConfig;
use saddle_scope::export::{self, real};
use saddle_scope::optimizer::{run_classified, run_ensemble, RunConfig};
use saddle_scope::problems::Vector;
use saddle_scope::suites::{run_suite, SuiteOptions, SUITE_NAMES};
use saddle_scope::{stats, Error};

use crate::error::{CliError, CliResult};
use crate::{Command, Common};

/// Fewest replicas per step size accepted by `sweep`.
const MIN_SWEEP_SEEDS: usize = 50;

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run { common } => run(&common),
        Command::Sweep {
            common,
            seeds,
            mu_list,
        } => sweep(&common, seeds, mu_list),
        Command::Verify {
            suite,
            common,
            seeds,
        } => verify(&suite, &common, seeds),
        Command::Surface {
            common,
            grid,
            w_max,
        } => surface(&common, grid, w_max),
    }
}

fn load(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config).map_err(|e| match e {
        Error::Io(io) => CliError::Usage(format!("cannot read {}: {io}", common.config.display())),
        other => other.into(),
    })?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// `dir/stem.suffix` next to the main output file.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn run(common: &Common) -> CliResult<()> {
    let cfg = load(common)?;
    let exp = cfg.build()?;
    let traj = run_classified(
        &exp.model,
        &exp.oracle,
        &exp.w0,
        &cfg.run,
        Some(&exp.params),
    )?;
    export::write_trajectory(create(&common.out)?, &traj)?;

    let last = traj.last();
    let w: Vec<String> = last.w.iter().map(|x| real(*x)).collect();
    println!("steps {}", cfg.run.horizon);
    println!("final_w {}", w.join(" "));
    println!("final_cost {}", real(last.cost));
    println!("final_region {}", last.region.map_or('-', |r| r.letter()));
    if cfg.run.record_stride != 1 {
        println!("escape skipped (record_stride > 1)");
        return Ok(());
    }
    match measure_escape(&traj, &exp.model, &exp.params) {
        Ok(o) => {
            println!("anchor_index {}", o.anchor_index);
            match (o.escape_index(), o.basin) {
                (Some(i), Some(b)) => println!("escape_index {i} basin {b:+}"),
                _ => println!("escape censored after {} steps", o.censored_at.unwrap_or(0)),
            }
        }
        Err(Error::NeverInSaddleRegion) => println!("escape none (never entered H)"),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn opt_real(x: Option<f64>) -> String {
    x.map_or_else(|| "NaN".into(), real)
}

fn sweep(common: &Common, seeds: Option<usize>, mu_list: Option<Vec<f64>>) -> CliResult<()> {
    let cfg = load(common)?;
    let mus = mu_list.unwrap_or_else(|| cfg.sweep.mu_list.clone());
    if mus.len() < 2 {
        return Err(CliError::Usage(
            "sweep needs at least two step sizes to fit a slope".into(),
        ));
    }
    if mus.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(CliError::Usage("step sizes must be positive".into()));
    }
    let n = seeds.unwrap_or(cfg.sweep.seeds);
    if n < MIN_SWEEP_SEEDS {
        return Err(CliError::Usage(format!(
            "sweep needs at least {MIN_SWEEP_SEEDS} seeds"
        )));
    }
    let exp = cfg.build()?;
    let dim = exp.model.dimension();
    let root = cfg.run.seed;

    let mut stats_csv = export::writer(create(&common.out)?);
    export::write_record(
        &mut stats_csv,
        [
            "step_size",
            "seeds",
            "anchored",
            "escaped",
            "censored",
            "censoring_rate",
            "median",
            "q1",
            "q3",
            "predicted_is",
            "predicted_is_anchor_curvature",
        ],
    )?;
    let mut outcomes_csv = export::writer(create(&sibling(&common.out, "outcomes.csv"))?);
    export::write_record(
        &mut outcomes_csv,
        [
            "step_size",
            "seed",
            "anchor_index",
            "escape_index",
            "censored_at",
            "basin",
        ],
    )?;
    let mut single_csv = export::writer(create(&sibling(&common.out, "curve_single.csv"))?);
    export::write_record(&mut single_csv, ["step_size", "iter", "time", "cost"])?;
    let mut mean_csv = export::writer(create(&sibling(&common.out, "curve_mean.csv"))?);
    export::write_record(
        &mut mean_csv,
        ["step_size", "iter", "time", "mean_cost", "stderr_cost"],
    )?;

    let mut levels = Vec::new();
    let (mut fit_mu, mut fit_median) = (Vec::new(), Vec::new());
    for &mu in &mus {
        let mut level_cfg = cfg.clone();
        level_cfg.run.step_size = mu;
        let params = level_cfg.classifier_params(&exp.model)?;
        let predicted = match cfg.classifier.sigma_l_sq {
            Some(l) => Some(predict_escape_time(
                dim,
                params.sigma_sq,
                l,
                mu,
                params.tau,
            )?),
            None => None,
        };
        let options = EscapeRunOptions {
            max_steps: (cfg.sweep.horizon_time / mu).ceil() as usize,
            stop_at_escape: true,
        };
        let report = escape_ensemble(
            &exp.model,
            &exp.oracle,
            &exp.w0,
            &params,
            options,
            root,
            n,
            predicted,
        )?;
        let escaped = report.outcomes.len() - report.censored;
        // Same prediction with τ replaced by the measured curvature at the anchors.
        let predicted_at_anchor =
            match (cfg.classifier.sigma_l_sq, report.median_anchor_curvature()) {
                (Some(l), Some(curv)) if curv > 0.0 => {
                    Some(predict_escape_time(dim, params.sigma_sq, l, mu, curv)?)
                }
                _ => None,
            };
        export::write_record(
            &mut stats_csv,
            [
                real(mu),
                n.to_string(),
                report.outcomes.len().to_string(),
                escaped.to_string(),
                report.censored.to_string(),
                real(report.censoring_rate()),
                opt_real(report.median_escape),
                opt_real(report.q1_escape),
                opt_real(report.q3_escape),
                predicted.map_or_else(|| "NaN".into(), |p| p.to_string()),
                predicted_at_anchor.map_or_else(|| "NaN".into(), |p| p.to_string()),
            ],
        )?;
        for o in &report.outcomes {
            export::write_record(
                &mut outcomes_csv,
                [
                    real(mu),
                    o.seed.to_string(),
                    o.anchor_index.to_string(),
                    o.escape_index()
                        .map_or_else(|| "-".into(), |i| i.to_string()),
                    o.censored_at.map_or_else(|| "-".into(), |i| i.to_string()),
                    o.basin.map_or_else(|| "-".into(), |b| b.to_string()),
                ],
            )?;
        }
        if let Some(m) = report.median_escape {
            fit_mu.push(mu);
            fit_median.push(m);
        }
        levels.push(json!({
            "step_size": mu,
            "anchored": report.outcomes.len(),
            "bypassed": report.bypassed,
            "escaped": escaped,
            "censoring_rate": report.censoring_rate(),
            "median_escape": report.median_escape,
            "q1_escape": report.q1_escape,
            "q3_escape": report.q3_escape,
            "predicted_is": predicted,
            "predicted_is_anchor_curvature": predicted_at_anchor,
            "median_anchor_curvature": report.median_anchor_curvature(),
            "basin_fraction_positive": report.basin_fraction_positive(),
        }));

        let curve_steps = (cfg.sweep.curve_time / mu).ceil().max(1.0) as usize;
        let curve_cfg = RunConfig::new(mu, curve_steps, root).with_stride(cfg.run.record_stride);
        let curves = run_ensemble(&exp.model, &exp.oracle, &exp.w0, &curve_cfg, n)?;
        for r in &curves[0].records {
            export::write_record(
                &mut single_csv,
                [
                    real(mu),
                    r.iter.to_string(),
                    real(r.iter as f64 * mu),
                    real(r.cost),
                ],
            )?;
        }
        for (j, r) in curves[0].records.iter().enumerate() {
            let costs: Vec<f64> = curves.iter().map(|t| t.records[j].cost).collect();
            let (mean, se) = stats::mean_stderr(&costs);
            export::write_record(
                &mut mean_csv,
                [
                    real(mu),
                    r.iter.to_string(),
                    real(r.iter as f64 * mu),
                    real(mean),
                    real(se),
                ],
            )?;
        }
        println!(
            "step_size {} median_escape {} censored {}/{} predicted {} predicted_anchor_curvature {}",
            real(mu),
            opt_real(report.median_escape),
            report.censored,
            report.outcomes.len(),
            predicted.map_or_else(|| "-".into(), |p| p.to_string()),
            predicted_at_anchor.map_or_else(|| "-".into(), |p| p.to_string())
        );
    }
    export::finish(stats_csv)?;
    export::finish(outcomes_csv)?;
    export::finish(single_csv)?;
    export::finish(mean_csv)?;

    let slope = stats::log_log_slope(&fit_mu, &fit_median);
    let summary = json!({
        "slope": slope,
        "levels_used": fit_mu,
        "seeds": n,
        "root_seed": root,
        "levels": levels,
    });
    let mut f = create(&sibling(&common.out, "summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary).map_err(std::io::Error::other)?;
    writeln!(f)?;
    f.flush()?;
    match slope {
        Some(s) => println!("slope {}", real(s)),
        None => println!("slope - (fewer than two uncensored levels)"),
    }
    Ok(())
}

fn verify(suite: &str, common: &Common, seeds: Option<usize>) -> CliResult<()> {
    if !SUITE_NAMES.contains(&suite) {
        return Err(CliError::Usage(format!(
            "unknown suite `{suite}`; expected one of {}",
            SUITE_NAMES.join(", ")
        )));
    }
    let cfg = load(common)?;
    let mut opts = SuiteOptions {
        root_seed: cfg.run.seed,
        settings: cfg.verify.clone(),
    };
    if let Some(n) = seeds {
        opts.settings.ensemble_seeds = n;
    }
    let reports = run_suite(suite, &opts)?;
    let mut f = create(&common.out)?;
    serde_json::to_writer_pretty(&mut f, &reports).map_err(std::io::Error::other)?;
    writeln!(f)?;
    f.flush()?;

    let mut failed = 0;
    for r in &reports {
        let tag = match r.status {
            CheckStatus::Passed => "PASS",
            CheckStatus::Failed => "FAIL",
            CheckStatus::SkippedPremise => "SKIP",
            CheckStatus::Inconclusive => "INCONCLUSIVE",
        };
        if matches!(r.status, CheckStatus::Failed | CheckStatus::Inconclusive) {
            failed += 1;
        }
        println!(
            "{tag} {} statistic={} threshold={}",
            r.check, r.statistic, r.threshold
        );
    }
    if failed > 0 {
        return Err(CliError::VerifyFailed {
            failed,
            total: reports.len(),
        });
    }
    Ok(())
}

fn surface(common: &Common, grid: Option<usize>, w_max: Option<f64>) -> CliResult<()> {
    let cfg = load(common)?;
    let exp = cfg.build()?;
    if exp.model.dimension() != 2 {
        return Err(CliError::Usage(format!(
            "surface needs a 2-D model, got dimension {}",
            exp.model.dimension()
        )));
    }
    let n = grid.unwrap_or(cfg.surface.grid);
    let half = w_max.unwrap_or(cfg.surface.w_max);
    if n == 0 {
        return Err(CliError::Usage(
            "grid needs at least one point per axis".into(),
        ));
    }
    if !(half > 0.0 && half.is_finite()) {
        return Err(CliError::Usage("w_max must be positive".into()));
    }
    let coord = |k: usize| {
        if n == 1 {
            0.0
        } else {
            -half + 2.0 * half * k as f64 / (n - 1) as f64
        }
    };

    let mut out = export::writer(create(&common.out)?);
    export::write_record(
        &mut out,
        [
            "i",
            "j",
            "w_0",
            "w_1",
            "cost",
            "grad_norm_sq",
            "lambda_min",
            "region",
        ],
    )?;
    let mut counts = [0usize; 3];
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let w = Vector::from_vec(vec![coord(i), coord(j)]);
            let cost = exp.model.cost(&w)?;
            let g = exp.model.grad(&w)?;
            let h = exp.model.hessian(&w)?;
            let region = classify_from(&g, &h, &exp.params);
            counts[match region {
                RegionLabel::G => 0,
                RegionLabel::H => 1,
                RegionLabel::M => 2,
            }] += 1;
            if cost < best.0 {
                best = (cost, w[0], w[1]);
            }
            export::write_record(
                &mut out,
                [
                    i.to_string(),
                    j.to_string(),
                    real(w[0]),
                    real(w[1]),
                    real(cost),
                    real(g.norm_squared()),
                    real(min_eigenvalue(&h)),
                    region.to_string(),
                ],
            )?;
        }
    }
    export::finish(out)?;
    println!("points {}", n * n);
    println!("regions G {} H {} M {}", counts[0], counts[1], counts[2]);
    println!(
        "grid_min_cost {} at {} {}",
        real(best.0),
        real(best.1),
        real(best.2)
    );
    Ok(())
}
