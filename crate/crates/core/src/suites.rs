//! Named verification suites over fixed reference problems.
//!
//! Every check is a function returning a [`VerificationReport`]; the suites
//! group them. Monte Carlo sizes and the root seed come from
//! [`SuiteOptions`].

use std::f64::consts::FRAC_1_SQRT_2;

use crate::analysis::escape::{
    escape_ensemble, predict_escape_time, terminal_basins, EscapeRunOptions,
};
use crate::analysis::noise::{estimate_noise_covariance, fit_noise_moments};
use crate::analysis::regions::{ClassifierParams, RegionLabel, DEFAULT_PI, DEFAULT_TAU};
use crate::analysis::spectral::spectral_split;
use crate::analysis::verify::{
    limiting_ratio, one_step_changes, verify_descent, verify_final_bound, CheckStatus,
    FinalBoundInputs, SamplingBox, VerificationReport,
};
use crate::config::VerifySettings;
use crate::error::{Error, Result};
use crate::optimizer::{coupled_ensemble, deviation_moments, DEFAULT_HORIZON_TIME};
use crate::oracles::{noise_mean_check, GradientOracle, OracleSpec};
use crate::problems::{CostModel, QuadraticSaddleSpec, TwoLayerLogisticSpec, Vector};
use crate::{rng, stats};

pub const SUITE_NAMES: [&str; 6] = ["descent", "deviation", "limits", "escape", "final", "all"];

/// Step size of the reference presets.
pub const PRESET_STEP_SIZE: f64 = 0.01;
/// Step sizes of the scaling regressions.
pub const SCALING_STEP_SIZES: [f64; 3] = [0.04, 0.02, 0.01];

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub root_seed: u64,
    pub settings: VerifySettings,
}

impl SuiteOptions {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            settings: VerifySettings::default(),
        }
    }

    /// Independent root seed for the check named `tag`.
    fn seed(&self, tag: u64) -> u64 {
        rng::replica_seed(self.root_seed, 1000 + tag)
    }
}

pub fn run_suite(name: &str, opts: &SuiteOptions) -> Result<Vec<VerificationReport>> {
    let mut out = Vec::new();
    let all = name == "all";
    if !SUITE_NAMES.contains(&name) {
        return Err(Error::invalid("suite", format!("unknown suite `{name}`")));
    }
    if all || name == "descent" {
        out.push(descent_in_large_gradient_region(opts)?);
        out.push(ascent_in_second_order_region(opts)?);
        out.push(exact_descent_every_draw(opts)?);
        out.push(perturbation_fourth_moment(opts)?);
        out.push(perturbation_mean(opts)?);
        out.push(perturbation_covariance(opts)?);
    }
    if all || name == "deviation" {
        out.extend(deviation_slopes(opts)?);
        out.push(quadratic_coupling_exact(opts)?);
    }
    if all || name == "limits" {
        out.extend(limiting_ratios()?);
    }
    if all || name == "escape" {
        out.push(saddle_geometry()?);
        out.push(escape_time_arithmetic()?);
        out.extend(escape_prediction(opts)?);
        out.extend(noiseless_control(opts)?);
        out.push(escape_scaling(opts)?);
        out.push(basin_symmetry(opts)?);
    }
    if all || name == "final" {
        out.push(final_bound(opts)?);
        out.push(final_bound_start_in_m(opts)?);
    }
    Ok(out)
}

fn v(xs: &[f64]) -> Vector {
    Vector::from_vec(xs.to_vec())
}

/// The paper-style two-layer logistic network with `reg = 0.1`, `m = 1`.
pub fn logistic_preset() -> Result<CostModel> {
    CostModel::logistic(TwoLayerLogisticSpec::default())
}

/// Noise along the saddle's descent direction `(1, 1)/√2`.
pub fn targeted_preset() -> Result<GradientOracle> {
    GradientOracle::new(OracleSpec::targeted(
        1.0,
        vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2],
    ))
}

pub const LOGISTIC_START: [f64; 2] = [-0.5, 0.5];

fn quadratic(c: &[f64], data_noise_std: f64) -> Result<CostModel> {
    CostModel::quadratic(QuadraticSaddleSpec::new(c.to_vec()).with_data_noise(data_noise_std))
}

// ---- descent ---------------------------------------------------------------

const DESCENT_DATA_NOISE: f64 = 0.5;

fn descent_setup(c: &[f64]) -> Result<(CostModel, GradientOracle, ClassifierParams)> {
    let model = quadratic(c, DESCENT_DATA_NOISE)?;
    let spec = OracleSpec::perturbed_stochastic(1.0);
    let sigma_sq = crate::config::nominal_noise_variance(model.spec(), &spec);
    let params = ClassifierParams::new(
        PRESET_STEP_SIZE,
        DEFAULT_TAU,
        DEFAULT_PI,
        model.smoothness().lipschitz_grad,
        0.0,
        sigma_sq,
    )?;
    Ok((model, GradientOracle::new(spec)?, params))
}

/// Expected one-step change inside `G` on the quadratic saddle.
pub fn descent_in_large_gradient_region(opts: &SuiteOptions) -> Result<VerificationReport> {
    let (m, o, p) = descent_setup(&[1.0, -1.0])?;
    verify_descent(
        &m,
        &o,
        &p,
        RegionLabel::G,
        &SamplingBox::cube(2, 2.0),
        opts.settings.descent_trials,
        opts.seed(1),
    )
}

/// Expected one-step change inside `M` on the convex quadratic.
pub fn ascent_in_second_order_region(opts: &SuiteOptions) -> Result<VerificationReport> {
    let (m, o, p) = descent_setup(&[1.0, 1.0])?;
    verify_descent(
        &m,
        &o,
        &p,
        RegionLabel::M,
        &SamplingBox::cube(2, 0.3),
        opts.settings.descent_trials,
        opts.seed(2),
    )
}

/// Noiseless gradient steps from `G` decrease the cost on every draw.
pub fn exact_descent_every_draw(opts: &SuiteOptions) -> Result<VerificationReport> {
    let (m, _, p) = descent_setup(&[1.0, -1.0])?;
    let exact = GradientOracle::new(OracleSpec::exact())?;
    let n = 1000;
    let seed = opts.seed(3);
    let Some(deltas) = one_step_changes(
        &m,
        &exact,
        &p,
        RegionLabel::G,
        &SamplingBox::cube(2, 2.0),
        n,
        seed,
    )?
    else {
        return Ok(
            VerificationReport::new("exact-descent-G", CheckStatus::Inconclusive)
                .with_seeds(vec![seed]),
        );
    };
    let worst = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(VerificationReport::decided("exact-descent-G", worst < 0.0)
        .with_stats(worst, 0.0, 0.0, n)
        .with_seeds(vec![seed])
        .with_detail("largest one-step change over all draws"))
}

fn perturbation_probe() -> Result<(CostModel, GradientOracle, Vector)> {
    Ok((
        quadratic(&[1.0, -1.0], 0.0)?,
        GradientOracle::new(OracleSpec::perturbed_exact(1.0))?,
        v(&[0.3, -0.2]),
    ))
}

/// `E|v|⁴` of the isotropic perturbation against `M(M+2)σ_v⁴ = 8`.
pub fn perturbation_fourth_moment(opts: &SuiteOptions) -> Result<VerificationReport> {
    let (m, o, w) = perturbation_probe()?;
    let n = opts.settings.noise_draws;
    let seed = opts.seed(4);
    let fit = fit_noise_moments(&o, &m, &[w], n, &mut rng::from_seed(seed))?;
    let m4 = fit.points[0].fourth_moment;
    let rel = (m4 / 8.0 - 1.0).abs();
    Ok(
        VerificationReport::decided("perturbation-fourth-moment", rel < 0.05)
            .with_stats(m4, 8.0, f64::NAN, n)
            .with_seeds(vec![seed])
            .with_detail(format!(
                "relative error {rel:.4}; fitted beta4 {:.4e}, sigma4 {:.4e}",
                fit.beta4_hat, fit.sigma4_hat
            )),
    )
}

/// `|E s|` against `4σ_v/√n`.
pub fn perturbation_mean(opts: &SuiteOptions) -> Result<VerificationReport> {
    let (m, o, w) = perturbation_probe()?;
    let n = opts.settings.noise_draws;
    let seed = opts.seed(5);
    let check = noise_mean_check(&o, &m, &w, n, &mut rng::from_seed(seed))?;
    let norm = check.mean.norm();
    let thr = 4.0 / (n as f64).sqrt();
    Ok(VerificationReport::decided("perturbation-mean", norm < thr)
        .with_stats(norm, thr, f64::NAN, n)
        .with_seeds(vec![seed]))
}

/// Entries of the empirical covariance within `0.05·σ_v²` of `σ_v² I`.
pub fn perturbation_covariance(opts: &SuiteOptions) -> Result<VerificationReport> {
    let (m, o, w) = perturbation_probe()?;
    let n = opts.settings.noise_draws;
    let seed = opts.seed(6);
    let cov = estimate_noise_covariance(&o, &m, &w, n, &mut rng::from_seed(seed))?;
    let err = (cov - crate::problems::Matrix::identity(2, 2)).amax();
    Ok(
        VerificationReport::decided("perturbation-covariance", err < 0.05)
            .with_stats(err, 0.05, f64::NAN, n)
            .with_seeds(vec![seed])
            .with_detail("largest entrywise deviation from the identity"),
    )
}

// ---- deviation -------------------------------------------------------------

const SLOPE_WINDOW: f64 = 0.3;

fn slope_report(
    check: &str,
    xs: &[f64],
    ys: &[f64],
    expected: f64,
    n: usize,
    seed: u64,
) -> VerificationReport {
    let slope = stats::log_log_slope(xs, ys).unwrap_or(f64::NAN);
    let values: Vec<String> = ys.iter().map(|y| format!("{y:.4e}")).collect();
    VerificationReport::decided(check, (slope - expected).abs() <= SLOPE_WINDOW)
        .with_stats(slope, expected, f64::NAN, n)
        .with_seeds(vec![seed])
        .with_detail(format!(
            "log-log slope vs step size over {xs:?}; expected {expected} ± {SLOPE_WINDOW}; values [{}]",
            values.join(", ")
        ))
}

/// Log-log slopes of `sup_j E|w̃_j|²`, `sup_j E|w̃_j|⁴` and
/// `sup_j E|w̃_j − w̃′_j|²` against the step size, for coupled runs anchored
/// at the logistic saddle over `j <= T/μ`, `T = 2`.
pub fn deviation_slopes(opts: &SuiteOptions) -> Result<Vec<VerificationReport>> {
    let model = logistic_preset()?;
    let oracle = targeted_preset()?;
    let anchor = Vector::zeros(2);
    let n = opts.settings.ensemble_seeds;
    let seed = opts.seed(7);
    let (mut m2, mut m4, mut gap) = (Vec::new(), Vec::new(), Vec::new());
    for mu in SCALING_STEP_SIZES {
        let horizon = (DEFAULT_HORIZON_TIME / mu).round() as usize;
        let ens = coupled_ensemble(&model, &oracle, &anchor, horizon, mu, seed, n)?;
        let second = deviation_moments(&ens, 2)?;
        m2.push(second.max_true_moment());
        gap.push(second.max_model_gap());
        m4.push(deviation_moments(&ens, 4)?.max_true_moment());
    }
    let mus = SCALING_STEP_SIZES;
    Ok(vec![
        slope_report("deviation-second-moment-slope", &mus, &m2, 1.0, n, seed),
        slope_report("deviation-fourth-moment-slope", &mus, &m4, 2.0, n, seed),
        slope_report("model-gap-slope", &mus, &gap, 2.0, n, seed),
    ])
}

/// The short-term model of a quadratic is the quadratic itself.
pub fn quadratic_coupling_exact(opts: &SuiteOptions) -> Result<VerificationReport> {
    let seed = opts.seed(8);
    let oracle = GradientOracle::new(OracleSpec::perturbed_stochastic(1.0))?;
    let mut worst = 0.0_f64;
    let mut runs = 0;
    for c in [vec![1.0, -1.0], vec![1.0, 1.0], vec![2.0, -0.5, 0.0]] {
        let model = quadratic(&c, 0.5)?;
        let anchor = Vector::from_element(c.len(), 0.1);
        for pair in coupled_ensemble(&model, &oracle, &anchor, 200, 0.02, seed, 20)? {
            worst = pair.deviations.iter().copied().fold(worst, f64::max);
            runs += 1;
        }
    }
    Ok(
        VerificationReport::decided("quadratic-coupling-exact", worst == 0.0)
            .with_stats(worst, 0.0, 0.0, runs)
            .with_seeds(vec![seed])
            .with_detail("largest squared deviation between true and short-term iterates"),
    )
}

// ---- limits ----------------------------------------------------------------

pub fn limiting_ratios() -> Result<Vec<VerificationReport>> {
    (1..=3)
        .map(|k| {
            let c = limiting_ratio(1e-4, 1.0, k, 1.0)?;
            Ok(
                VerificationReport::decided(format!("limiting-ratio-k{k}"), c.rel_error < 1e-3)
                    .with_stats(c.rel_error, 1e-3, 0.0, 1)
                    .with_detail(format!("value {:.10}, limit {:.10}", c.value, c.limit)),
            )
        })
        .collect()
}

// ---- escape ----------------------------------------------------------------

/// Hessian of the logistic preset at the origin: eigenvalues `{0.6, −0.4}`
/// and descent direction `(1, 1)/√2`.
pub fn saddle_geometry() -> Result<VerificationReport> {
    let model = logistic_preset()?;
    let split = spectral_split(&model.hessian(&Vector::zeros(2))?)?;
    let eig = split.eigenvalues();
    let mut err = (eig[0] - 0.6).abs().max((eig[1] + 0.4).abs());
    let d = split.basis_neg.column(0);
    err = err
        .max((d[0] - FRAC_1_SQRT_2).abs())
        .max((d[1] - FRAC_1_SQRT_2).abs());
    Ok(VerificationReport::decided("saddle-geometry", err <= 1e-8)
        .with_stats(err, 1e-8, 0.0, 1)
        .with_detail(format!("eigenvalues {eig:?}")))
}

pub fn escape_time_arithmetic() -> Result<VerificationReport> {
    let is = predict_escape_time(2, 1.0, 1.0, 0.01, 0.4)?;
    Ok(
        VerificationReport::decided("escape-time-arithmetic", is == 202)
            .with_stats(is as f64, 202.0, 0.0, 1)
            .with_detail("ceil(log 5 / log 1.008)"),
    )
}

fn isotropic_saddle_params(step_size: f64, sigma_v: f64) -> Result<ClassifierParams> {
    // τ = |λ_min| = 1, σ² = Mσ_v², δ = 1, β = 0.
    ClassifierParams::new(
        step_size,
        1.0,
        DEFAULT_PI,
        1.0,
        0.0,
        2.0 * sigma_v * sigma_v,
    )
}

/// Median escape index against the predicted escape time on the quadratic
/// saddle with isotropic perturbations, within a factor of two.
pub fn escape_prediction(opts: &SuiteOptions) -> Result<Vec<VerificationReport>> {
    let model = quadratic(&[1.0, -1.0], 0.0)?;
    let oracle = GradientOracle::new(OracleSpec::perturbed_exact(1.0))?;
    let n = opts.settings.ensemble_seeds;
    let seed = opts.seed(9);
    [0.02, 0.01]
        .into_iter()
        .map(|mu| {
            let params = isotropic_saddle_params(mu, 1.0)?;
            let pred = predict_escape_time(2, params.sigma_sq, 1.0, mu, params.tau)?;
            let options = EscapeRunOptions {
                max_steps: 20 * pred as usize,
                stop_at_escape: true,
            };
            let report = escape_ensemble(
                &model,
                &oracle,
                &Vector::zeros(2),
                &params,
                options,
                seed,
                n,
                Some(pred),
            )?;
            let idx: Vec<f64> = report
                .outcomes
                .iter()
                .map(|o| o.escape_index().map_or(f64::INFINITY, |i| i as f64))
                .collect();
            let median = stats::median(&idx);
            let ratio = median / pred as f64;
            Ok(VerificationReport::decided(
                format!("escape-prediction-mu{mu}"),
                (0.5..=2.0).contains(&ratio),
            )
            .with_stats(median, pred as f64, f64::NAN, n)
            .with_seeds(vec![seed])
            .with_detail(format!(
                "median/predicted = {ratio:.3}; censored {}",
                report.censored
            )))
        })
        .collect()
}

/// Exact gradients at the saddle never escape; any perturbation does.
pub fn noiseless_control(opts: &SuiteOptions) -> Result<Vec<VerificationReport>> {
    let model = quadratic(&[1.0, -1.0], 0.0)?;
    let mu = PRESET_STEP_SIZE;
    let params = isotropic_saddle_params(mu, 1.0)?;
    let max_steps = 100_000;
    let options = EscapeRunOptions {
        max_steps,
        stop_at_escape: true,
    };
    let seed = opts.seed(10);
    let mut out = Vec::new();
    for sigma_v in [0.0, 1.0, 0.1, 1e-3] {
        let spec = if sigma_v == 0.0 {
            OracleSpec::exact()
        } else {
            OracleSpec::perturbed_exact(sigma_v)
        };
        let oracle = GradientOracle::new(spec)?;
        let n = if sigma_v == 0.0 { 1 } else { 20 };
        let report = escape_ensemble(
            &model,
            &oracle,
            &Vector::zeros(2),
            &params,
            options,
            seed,
            n,
            None,
        )?;
        let escaped = report
            .outcomes
            .iter()
            .filter(|o| o.escape_steps.is_some())
            .count();
        let (check, passed) = if sigma_v == 0.0 {
            (
                "noiseless-never-escapes".to_string(),
                escaped == 0 && report.outcomes.len() == n,
            )
        } else {
            (format!("perturbed-escapes-sigma{sigma_v}"), escaped == n)
        };
        out.push(
            VerificationReport::decided(check, passed)
                .with_stats(
                    escaped as f64,
                    if sigma_v == 0.0 { 0.0 } else { n as f64 },
                    0.0,
                    n,
                )
                .with_seeds(vec![seed])
                .with_detail(format!(
                    "{escaped} of {n} runs escaped within {max_steps} steps"
                )),
        );
    }
    Ok(out)
}

/// Log-log slope of the median escape time against the step size for the
/// logistic preset started at `(−0.5, 0.5)`.
pub fn escape_scaling(opts: &SuiteOptions) -> Result<VerificationReport> {
    let model = logistic_preset()?;
    let oracle = targeted_preset()?;
    let n = opts.settings.ensemble_seeds;
    let seed = opts.seed(11);
    let mut medians = Vec::new();
    for mu in SCALING_STEP_SIZES {
        let params = ClassifierParams::for_model(&model, mu, 0.0, 1.0)?;
        let options = EscapeRunOptions {
            max_steps: (60.0 / mu).ceil() as usize,
            stop_at_escape: true,
        };
        let report = escape_ensemble(
            &model,
            &oracle,
            &v(&LOGISTIC_START),
            &params,
            options,
            seed,
            n,
            None,
        )?;
        medians.push(report.median_with_censoring());
    }
    let slope = stats::log_log_slope(&SCALING_STEP_SIZES, &medians).unwrap_or(f64::NAN);
    Ok(
        VerificationReport::decided("escape-time-scaling", (-1.3..=-0.7).contains(&slope))
            .with_stats(slope, -1.0, f64::NAN, n)
            .with_seeds(vec![seed])
            .with_detail(format!(
                "medians {medians:?} at step sizes {SCALING_STEP_SIZES:?}"
            )),
    )
}

/// Fraction of targeted-noise runs from `(−0.5, 0.5)` ending in the positive
/// basin, against `0.5 ± 0.1`.
pub fn basin_symmetry(opts: &SuiteOptions) -> Result<VerificationReport> {
    let model = logistic_preset()?;
    let oracle = targeted_preset()?;
    let n = opts.settings.basin_runs;
    let seed = opts.seed(12);
    let steps = (30.0 / PRESET_STEP_SIZE) as usize;
    let basins = terminal_basins(
        &model,
        &oracle,
        &v(&LOGISTIC_START),
        &Vector::zeros(2),
        PRESET_STEP_SIZE,
        steps,
        seed,
        n,
    )?;
    let frac = basins.iter().filter(|b| **b > 0).count() as f64 / n as f64;
    Ok(
        VerificationReport::decided("basin-symmetry", (frac - 0.5).abs() <= 0.1)
            .with_stats(frac, 0.5, (0.25 / n as f64).sqrt(), n)
            .with_seeds(vec![seed])
            .with_detail(format!("{steps} steps per run")),
    )
}

// ---- final -----------------------------------------------------------------

fn final_setup(
    opts: &SuiteOptions,
) -> Result<(CostModel, GradientOracle, ClassifierParams, String)> {
    let model = logistic_preset()?;
    let oracle = GradientOracle::new(OracleSpec::perturbed_stochastic(1.0))?;
    let probes: Vec<Vector> = [
        [0.0, 0.0],
        [0.3, 0.3],
        [-0.5, 0.5],
        [1.0, 1.0],
        [1.5, -1.5],
        [2.0, 2.0],
    ]
    .iter()
    .map(|p| v(p))
    .collect();
    let fit = fit_noise_moments(
        &oracle,
        &model,
        &probes,
        10_000,
        &mut rng::from_seed(opts.seed(13)),
    )?;
    let params = ClassifierParams::for_model(
        &model,
        PRESET_STEP_SIZE,
        fit.beta4_hat.powf(0.25),
        fit.sigma_sq(),
    )?;
    let detail = format!(
        "fitted beta4 {:.4e}, sigma4 {:.4e}",
        fit.beta4_hat, fit.sigma4_hat
    );
    Ok((model, oracle, params, detail))
}

/// Time to reach `M` from `(−0.5, 0.5)` against the bound, with `σ²` and `β`
/// fitted from the noise moments and `σ_ℓ² = σ_v²`.
pub fn final_bound(opts: &SuiteOptions) -> Result<VerificationReport> {
    let (model, oracle, params, fit_detail) = final_setup(opts)?;
    let inputs = FinalBoundInputs {
        sigma_l_sq: 1.0,
        cost_lower_bound: model.smoothness().lower_bound.unwrap_or(0.0),
        n_seeds: opts.settings.final_seeds,
        root_seed: opts.seed(14),
        max_steps: 1_000_000,
    };
    let out = verify_final_bound(&model, &oracle, &params, &v(&LOGISTIC_START), &inputs)?;
    let detail = format!("{}; {fit_detail}", out.report.detail);
    Ok(out.report.with_detail(detail))
}

/// A start inside `M` has hitting time zero.
pub fn final_bound_start_in_m(opts: &SuiteOptions) -> Result<VerificationReport> {
    let (model, oracle, params, _) = final_setup(opts)?;
    // A minimizer of the logistic preset lies on the diagonal.
    let mut w = v(&[1.0, 1.0]);
    for _ in 0..2000 {
        let g = model.grad(&w)?;
        w -= 0.5 * g;
    }
    let inputs = FinalBoundInputs {
        sigma_l_sq: 1.0,
        cost_lower_bound: 0.0,
        n_seeds: 5,
        root_seed: opts.seed(15),
        max_steps: 10,
    };
    let out = verify_final_bound(&model, &oracle, &params, &w, &inputs)?;
    let zero = out.hitting_times.iter().all(|h| *h == Some(0));
    let mut report = out.report;
    report.check = "final-bound-start-in-M".into();
    report.passed = report.passed && zero;
    if !zero {
        report.status = CheckStatus::Failed;
    }
    Ok(report)
}
