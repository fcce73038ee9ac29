//! Monte Carlo checks of the one-step descent bounds, the small step-size
//! limit of the deviation bound, and the bound on the time to reach a
//! second-order stationary point.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::escape::predict_escape_time;
use super::regions::{classify, ClassifierParams, RegionLabel};
use crate::error::{check_dim, Error, Result};
use crate::optimizer::simulate;
use crate::oracles::GradientOracle;
use crate::problems::{CostModel, Vector};
use crate::{rng, stats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Passed,
    Failed,
    /// The premises of the bound do not hold for these parameters.
    SkippedPremise,
    /// Not enough evidence to decide, e.g. too few samples in the region.
    Inconclusive,
}

/// Serializes to one JSON object per check.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub passed: bool,
    pub status: CheckStatus,
    pub statistic: f64,
    pub threshold: f64,
    pub stderr: f64,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub detail: String,
}

impl VerificationReport {
    pub fn new(check: impl Into<String>, status: CheckStatus) -> Self {
        Self {
            check: check.into(),
            passed: status == CheckStatus::Passed,
            status,
            statistic: f64::NAN,
            threshold: f64::NAN,
            stderr: f64::NAN,
            n: 0,
            seeds: Vec::new(),
            detail: String::new(),
        }
    }

    pub fn decided(check: impl Into<String>, passed: bool) -> Self {
        Self::new(
            check,
            if passed {
                CheckStatus::Passed
            } else {
                CheckStatus::Failed
            },
        )
    }

    pub fn with_stats(mut self, statistic: f64, threshold: f64, stderr: f64, n: usize) -> Self {
        self.statistic = statistic;
        self.threshold = threshold;
        self.stderr = stderr;
        self.n = n;
        self
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Axis-aligned box `[lo_k, hi_k]` for rejection sampling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SamplingBox {
    pub fn cube(dimension: usize, half_width: f64) -> Self {
        Self {
            lo: vec![-half_width; dimension],
            hi: vec![half_width; dimension],
        }
    }

    pub fn around(center: &Vector, half_width: f64) -> Self {
        Self {
            lo: center.iter().map(|c| c - half_width).collect(),
            hi: center.iter().map(|c| c + half_width).collect(),
        }
    }

    fn validate(&self, dimension: usize) -> Result<()> {
        check_dim(dimension, self.lo.len())?;
        check_dim(dimension, self.hi.len())?;
        if self
            .lo
            .iter()
            .zip(&self.hi)
            .any(|(l, h)| !(l <= h && l.is_finite() && h.is_finite()))
        {
            return Err(Error::invalid("box", "bounds must be finite with lo <= hi"));
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        Vector::from_iterator(
            self.lo.len(),
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>()),
        )
    }
}

/// Rejection sampling attempts allowed per accepted point.
pub const MAX_ATTEMPTS_PER_TRIAL: usize = 1000;

/// `J(w_i) − J(w_{i−1})` for one step from each of `n_trials` points drawn
/// uniformly from `region ∩ sampling_box`. `Ok(None)` when the region could
/// not be hit often enough.
pub fn one_step_changes(
    model: &CostModel,
    oracle: &GradientOracle,
    params: &ClassifierParams,
    region: RegionLabel,
    sampling_box: &SamplingBox,
    n_trials: usize,
    seed: u64,
) -> Result<Option<Vec<f64>>> {
    sampling_box.validate(model.dimension())?;
    let trial = |k: u64| -> Result<Option<f64>> {
        let mut r = rng::stream(seed, k);
        for _ in 0..MAX_ATTEMPTS_PER_TRIAL {
            let w = sampling_box.sample(&mut r);
            if classify(&w, model, params)? != region {
                continue;
            }
            let est = oracle.estimate(model, &w, &mut r)?;
            let next = &w - params.step_size * &est.direction;
            return Ok(Some(model.cost(&next)? - model.cost(&w)?));
        }
        Ok(None)
    };
    let out: Vec<Option<f64>> = (0..n_trials as u64)
        .into_par_iter()
        .map(trial)
        .collect::<Result<_>>()?;
    Ok(out.into_iter().collect())
}

/// Checks the expected one-step change inside `G` (at most `−μ²c₂/π`) or
/// inside `M` (at most `μ²c₂`) to within three standard errors.
#[allow(clippy::too_many_arguments)]
pub fn verify_descent(
    model: &CostModel,
    oracle: &GradientOracle,
    params: &ClassifierParams,
    region: RegionLabel,
    sampling_box: &SamplingBox,
    n_trials: usize,
    seed: u64,
) -> Result<VerificationReport> {
    params.validate()?;
    let check = format!("descent-{}", region.letter());
    let mu_sq_c2 = params.step_size * params.step_size * params.c2();
    let threshold = match region {
        RegionLabel::G => -mu_sq_c2 / params.pi,
        RegionLabel::M => mu_sq_c2,
        RegionLabel::H => {
            return Err(Error::invalid(
                "region",
                "no one-step bound is checked inside H",
            ))
        }
    };
    if n_trials < 2 {
        return Err(Error::invalid("n_trials", "need at least two trials"));
    }
    if !params.step_premise_holds() {
        return Ok(VerificationReport::new(check, CheckStatus::SkippedPremise)
            .with_seeds(vec![seed])
            .with_detail("step size exceeds 2/(δ(1+β²))"));
    }
    let Some(deltas) =
        one_step_changes(model, oracle, params, region, sampling_box, n_trials, seed)?
    else {
        return Ok(VerificationReport::new(check, CheckStatus::Inconclusive)
            .with_seeds(vec![seed])
            .with_detail("region not reached often enough inside the sampling box"));
    };
    let (mean, se) = stats::mean_stderr(&deltas);
    let descended = deltas.iter().filter(|d| **d < 0.0).count();
    Ok(
        VerificationReport::decided(check, mean <= threshold + 3.0 * se)
            .with_stats(mean, threshold, se, deltas.len())
            .with_seeds(vec![seed])
            .with_detail(format!(
                "{descended} of {} draws decreased the cost",
                deltas.len()
            )),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitCheck {
    pub value: f64,
    pub limit: f64,
    pub rel_error: f64,
}

/// `(1 + μδ)^{kT/μ} (1 − μδ)^{−(k−1)T/μ}` against its `μ → 0` limit
/// `e^{(2k−1)Tδ}`, evaluated in log space.
pub fn limiting_ratio(step_size: f64, delta: f64, k: u32, horizon_time: f64) -> Result<LimitCheck> {
    if !(step_size > 0.0 && delta > 0.0 && step_size * delta < 1.0) {
        return Err(Error::invalid("step_size", "need 0 < μδ < 1"));
    }
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    if !(horizon_time >= 0.0 && horizon_time.is_finite()) {
        return Err(Error::invalid(
            "horizon_time",
            "must be finite and nonnegative",
        ));
    }
    let steps = horizon_time / step_size;
    let kf = k as f64;
    let log_value =
        steps * (kf * (step_size * delta).ln_1p() - (kf - 1.0) * (-step_size * delta).ln_1p());
    let log_limit = (2.0 * kf - 1.0) * horizon_time * delta;
    let value = log_value.exp();
    let limit = log_limit.exp();
    Ok(LimitCheck {
        value,
        limit,
        rel_error: (log_value - log_limit).exp_m1().abs(),
    })
}

/// Inputs of the hitting-time bound beyond the classifier parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinalBoundInputs {
    /// Smallest eigenvalue of the noise covariance restricted to the negative
    /// curvature subspace, assumed uniform over `H`.
    pub sigma_l_sq: f64,
    /// Lower bound `J^o` of the cost.
    pub cost_lower_bound: f64,
    pub n_seeds: usize,
    pub root_seed: u64,
    /// Hard cap on the simulated steps per run.
    pub max_steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalBoundOutcome {
    pub report: VerificationReport,
    pub bound: f64,
    pub escape_time: u64,
    /// First iteration in `M` per seed; `None` when not reached.
    pub hitting_times: Vec<Option<usize>>,
}

/// Checks that with probability at least `1 − π` the recursion reaches `M`
/// within `(J(w₀) − J^o)/(μ²c₂π)·i^s` steps, via the `(1−π)` quantile of the
/// empirical hitting times.
pub fn verify_final_bound(
    model: &CostModel,
    oracle: &GradientOracle,
    params: &ClassifierParams,
    w0: &Vector,
    inputs: &FinalBoundInputs,
) -> Result<FinalBoundOutcome> {
    params.validate()?;
    check_dim(model.dimension(), w0.len())?;
    if inputs.n_seeds == 0 {
        return Err(Error::invalid("n_seeds", "must be positive"));
    }
    let mu = params.step_size;
    let dim = model.dimension();
    let escape_time = predict_escape_time(dim, params.sigma_sq, inputs.sigma_l_sq, mu, params.tau)?;
    let c2 = params.c2();
    let bound = (model.cost(w0)? - inputs.cost_lower_bound) / (mu * mu * c2 * params.pi)
        * escape_time as f64;
    let seeds: Vec<u64> = (0..inputs.n_seeds as u64)
        .map(|k| rng::replica_seed(inputs.root_seed, k))
        .collect();

    let saddle_descent_premise =
        mu * mu * c2 / params.pi <= 0.5 * (0.5 * mu * dim as f64 * params.sigma_sq);
    if !params.step_premise_holds() || !saddle_descent_premise {
        let report = VerificationReport::new("final-bound", CheckStatus::SkippedPremise)
            .with_seeds(seeds)
            .with_detail("step-size premises of the bound do not hold");
        return Ok(FinalBoundOutcome {
            report,
            bound,
            escape_time,
            hitting_times: Vec::new(),
        });
    }

    let cap = if bound.is_finite() {
        inputs.max_steps.min(bound.ceil() as usize)
    } else {
        inputs.max_steps
    };
    let hitting_times: Vec<Option<usize>> = seeds
        .par_iter()
        .map(|&s| {
            let mut hit = None;
            simulate(model, oracle, w0, mu, cap, s, |i, w| {
                if classify(w, model, params)? == RegionLabel::M {
                    hit = Some(i);
                    return Ok(true);
                }
                Ok(false)
            })?;
            Ok(hit)
        })
        .collect::<Result<_>>()?;
    let times: Vec<f64> = hitting_times
        .iter()
        .map(|h| h.map_or(f64::INFINITY, |i| i as f64))
        .collect();
    let q = stats::quantile(&times, 1.0 - params.pi);
    let status = if q <= bound {
        CheckStatus::Passed
    } else if q.is_infinite() && (cap as f64) < bound {
        CheckStatus::Inconclusive
    } else {
        CheckStatus::Failed
    };
    let reached = hitting_times.iter().filter(|h| h.is_some()).count();
    let report = VerificationReport::new("final-bound", status)
        .with_stats(q, bound, f64::NAN, inputs.n_seeds)
        .with_seeds(seeds)
        .with_detail(format!(
            "{reached} of {} runs reached M; escape time {escape_time}",
            inputs.n_seeds
        ));
    Ok(FinalBoundOutcome {
        report,
        bound,
        escape_time,
        hitting_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limit_ratio_converges() {
        let mut prev = f64::INFINITY;
        for mu in [1e-2, 1e-3, 1e-4] {
            let c = limiting_ratio(mu, 1.0, 2, 1.0).unwrap();
            assert!((c.limit - 3f64.exp()).abs() < 1e-12);
            assert!(c.rel_error < prev);
            prev = c.rel_error;
        }
        assert!(prev < 1e-3);
        // k = 1 reduces to (1 + μδ)^{T/μ} → e^{Tδ}.
        let c = limiting_ratio(1e-3, 2.0, 1, 0.5).unwrap();
        assert!((c.value - (1.002f64).powf(500.0)).abs() < 1e-9 * c.value);
        assert!(limiting_ratio(1.0, 1.0, 2, 1.0).is_err());
        assert_eq!(limiting_ratio(0.1, 1.0, 3, 0.0).unwrap().value, 1.0);
    }

    #[test]
    fn report_serializes_with_required_keys() {
        let r = VerificationReport::decided("x", true).with_stats(1.0, 2.0, 0.1, 10);
        let v = serde_json::to_value(&r).unwrap();
        for key in [
            "check",
            "passed",
            "statistic",
            "threshold",
            "stderr",
            "n",
            "seeds",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["status"], "passed");
    }
}
