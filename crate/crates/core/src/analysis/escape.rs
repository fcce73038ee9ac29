//! Escape-time prediction and measurement around strict saddles.
//!
//! A run escapes at the first step after its anchor that is outside the
//! strict-saddle region and whose cost sits at least `(μ/4)·M·σ²` below the
//! anchor cost: the guaranteed expected decrease `(μ/2)·M·σ²` at half
//! strength.

use rayon::prelude::*;
use serde::Serialize;

use super::regions::{classify_from, ClassifierParams, RegionLabel};
use super::spectral::spectral_split;
use crate::error::{Error, Result};
use crate::optimizer::{simulate, Trajectory};
use crate::oracles::GradientOracle;
use crate::problems::{CostModel, Vector};
use crate::{rng, stats};

/// `⌈log(2Mσ²/σ_ℓ² + 1) / log(1 + 2μτ)⌉`, at least 1. The `O(μ)` term inside
/// the numerator's logarithm is dropped.
pub fn predict_escape_time(
    dimension: usize,
    sigma_sq: f64,
    sigma_l_sq: f64,
    step_size: f64,
    tau: f64,
) -> Result<u64> {
    if dimension == 0 {
        return Err(Error::invalid("dimension", "must be positive"));
    }
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(Error::invalid("sigma_sq", "must be positive"));
    }
    if sigma_l_sq == 0.0 {
        return Err(Error::NoSaddleNoise);
    }
    if !(sigma_l_sq > 0.0) {
        return Err(Error::invalid("sigma_l_sq", "must be positive"));
    }
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::invalid("step_size", "must be positive"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", "must be positive"));
    }
    let num = (2.0 * dimension as f64 * sigma_sq / sigma_l_sq).ln_1p();
    let den = (2.0 * step_size * tau).ln_1p();
    Ok(((num / den).ceil() as u64).max(1))
}

/// Escape margin `(μ/4)·M·σ²`.
pub fn escape_margin(params: &ClassifierParams, dimension: usize) -> f64 {
    0.25 * params.step_size * dimension as f64 * params.sigma_sq
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeOutcome {
    pub seed: u64,
    /// Iteration at which the run first entered the strict-saddle region.
    pub anchor_index: usize,
    /// Steps after the anchor until escape; `None` when censored.
    pub escape_steps: Option<usize>,
    /// Steps observed after the anchor when censored.
    pub censored_at: Option<usize>,
    /// Sign of the final displacement along the most negative curvature
    /// direction at the anchor (escaped runs only).
    pub basin: Option<i8>,
    /// Smallest Hessian eigenvalue at the anchor.
    pub anchor_lambda_min: f64,
}

impl EscapeOutcome {
    pub fn escape_index(&self) -> Option<usize> {
        self.escape_steps.map(|j| self.anchor_index + j)
    }
}

struct AnchorState {
    index: usize,
    w: Vector,
    cost: f64,
    descent_dir: Vector,
    lambda_min: f64,
}

fn anchor_at(model: &CostModel, index: usize, w: &Vector, cost: f64) -> Result<AnchorState> {
    let split = spectral_split(&model.hessian(w)?)?;
    let k = split.basis_neg.ncols();
    if k == 0 {
        return Err(Error::EmptyNegativeSubspace);
    }
    Ok(AnchorState {
        index,
        w: w.clone(),
        cost,
        descent_dir: split.basis_neg.column(k - 1).into_owned(),
        lambda_min: split.min_eigenvalue(),
    })
}

/// `+1` or `−1` by side of the saddle, `0` for no displacement along the
/// descent direction.
fn basin_sign(anchor: &AnchorState, w: &Vector) -> i8 {
    let along = anchor.descent_dir.dot(&(w - &anchor.w));
    if along > 0.0 {
        1
    } else if along < 0.0 {
        -1
    } else {
        0
    }
}

/// Escape of a recorded stride-1 trajectory, anchored at its first `H` iterate.
pub fn measure_escape(
    trajectory: &Trajectory,
    model: &CostModel,
    params: &ClassifierParams,
) -> Result<EscapeOutcome> {
    if trajectory.config.record_stride != 1 {
        return Err(Error::invalid(
            "trajectory",
            "escape measurement needs stride-1 records",
        ));
    }
    let margin = escape_margin(params, model.dimension());
    let label = |w: &Vector| -> Result<RegionLabel> {
        let g = model.grad(w)?;
        if g.norm_squared() >= params.g_threshold() {
            return Ok(RegionLabel::G);
        }
        Ok(classify_from(&g, &model.hessian(w)?, params))
    };
    let mut anchor: Option<AnchorState> = None;
    for rec in &trajectory.records {
        let region = match rec.region {
            Some(r) => r,
            None => label(&rec.w)?,
        };
        match &anchor {
            None => {
                if region == RegionLabel::H {
                    anchor = Some(anchor_at(model, rec.iter, &rec.w, rec.cost)?);
                }
            }
            Some(a) => {
                if region != RegionLabel::H && rec.cost <= a.cost - margin {
                    let end = &trajectory.last().w;
                    return Ok(EscapeOutcome {
                        seed: trajectory.seed,
                        anchor_index: a.index,
                        escape_steps: Some(rec.iter - a.index),
                        censored_at: None,
                        basin: Some(basin_sign(a, end)),
                        anchor_lambda_min: a.lambda_min,
                    });
                }
            }
        }
    }
    let a = anchor.ok_or(Error::NeverInSaddleRegion)?;
    Ok(EscapeOutcome {
        seed: trajectory.seed,
        anchor_index: a.index,
        escape_steps: None,
        censored_at: Some(trajectory.last().iter - a.index),
        basin: None,
        anchor_lambda_min: a.lambda_min,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EscapeRunOptions {
    pub max_steps: usize,
    /// Stop as soon as the run escapes; otherwise continue to `max_steps` and
    /// take the basin from the final iterate.
    pub stop_at_escape: bool,
}

/// Runs the recursion from `w0` and measures escape on the fly without
/// storing the trajectory. `Ok(None)` means the run never entered `H`.
pub fn escape_run(
    model: &CostModel,
    oracle: &GradientOracle,
    w0: &Vector,
    params: &ClassifierParams,
    options: EscapeRunOptions,
    seed: u64,
) -> Result<Option<EscapeOutcome>> {
    let margin = escape_margin(params, model.dimension());
    let thr = params.g_threshold();
    let mut anchor: Option<AnchorState> = None;
    let mut escaped_at: Option<usize> = None;
    let mut last_w = w0.clone();
    let last = simulate(
        model,
        oracle,
        w0,
        params.step_size,
        options.max_steps,
        seed,
        |i, w| {
            last_w.clone_from(w);
            if escaped_at.is_some() {
                return Ok(false);
            }
            let g = model.grad(w)?;
            let region = if g.norm_squared() >= thr {
                RegionLabel::G
            } else {
                classify_from(&g, &model.hessian(w)?, params)
            };
            match &anchor {
                None => {
                    if region == RegionLabel::H {
                        anchor = Some(anchor_at(model, i, w, model.cost(w)?)?);
                    }
                }
                Some(a) => {
                    if region != RegionLabel::H && model.cost(w)? <= a.cost - margin {
                        escaped_at = Some(i);
                        return Ok(options.stop_at_escape);
                    }
                }
            }
            Ok(false)
        },
    )?;
    let Some(a) = anchor else { return Ok(None) };
    Ok(Some(match escaped_at {
        Some(i) => EscapeOutcome {
            seed,
            anchor_index: a.index,
            escape_steps: Some(i - a.index),
            censored_at: None,
            basin: Some(basin_sign(&a, &last_w)),
            anchor_lambda_min: a.lambda_min,
        },
        None => EscapeOutcome {
            seed,
            anchor_index: a.index,
            escape_steps: None,
            censored_at: Some(last - a.index),
            basin: None,
            anchor_lambda_min: a.lambda_min,
        },
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct EscapeReport {
    pub step_size: f64,
    pub predicted_is: Option<u64>,
    pub outcomes: Vec<EscapeOutcome>,
    /// Runs that never entered the strict-saddle region.
    pub bypassed: usize,
    pub median_escape: Option<f64>,
    pub q1_escape: Option<f64>,
    pub q3_escape: Option<f64>,
    pub censored: usize,
}

impl EscapeReport {
    pub fn from_outcomes(
        step_size: f64,
        predicted_is: Option<u64>,
        runs: Vec<Option<EscapeOutcome>>,
    ) -> Self {
        let bypassed = runs.iter().filter(|r| r.is_none()).count();
        let outcomes: Vec<EscapeOutcome> = runs.into_iter().flatten().collect();
        let steps: Vec<f64> = outcomes
            .iter()
            .filter_map(|o| o.escape_steps)
            .map(|s| s as f64)
            .collect();
        let censored = outcomes.len() - steps.len();
        let q = |p: f64| (!steps.is_empty()).then(|| stats::quantile(&steps, p));
        Self {
            step_size,
            predicted_is,
            bypassed,
            median_escape: q(0.5),
            q1_escape: q(0.25),
            q3_escape: q(0.75),
            censored,
            outcomes,
        }
    }

    /// Median over all anchored runs with censored runs counted as `+∞`.
    pub fn median_with_censoring(&self) -> f64 {
        let v: Vec<f64> = self
            .outcomes
            .iter()
            .map(|o| o.escape_steps.map_or(f64::INFINITY, |s| s as f64))
            .collect();
        stats::median(&v)
    }

    pub fn censoring_rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            0.0
        } else {
            self.censored as f64 / self.outcomes.len() as f64
        }
    }

    /// Median of `|λ_min|` over the anchors, the curvature the runs actually
    /// escaped along.
    pub fn median_anchor_curvature(&self) -> Option<f64> {
        let c: Vec<f64> = self
            .outcomes
            .iter()
            .map(|o| o.anchor_lambda_min.abs())
            .collect();
        (!c.is_empty()).then(|| stats::median(&c))
    }

    pub fn basin_fraction_positive(&self) -> Option<f64> {
        let b: Vec<i8> = self.outcomes.iter().filter_map(|o| o.basin).collect();
        (!b.is_empty()).then(|| b.iter().filter(|x| **x > 0).count() as f64 / b.len() as f64)
    }
}

/// `n` escape runs with replica seeds derived from `root_seed`.
#[allow(clippy::too_many_arguments)]
pub fn escape_ensemble(
    model: &CostModel,
    oracle: &GradientOracle,
    w0: &Vector,
    params: &ClassifierParams,
    options: EscapeRunOptions,
    root_seed: u64,
    n: usize,
    predicted_is: Option<u64>,
) -> Result<EscapeReport> {
    let runs: Vec<Option<EscapeOutcome>> = (0..n as u64)
        .into_par_iter()
        .map(|k| {
            escape_run(
                model,
                oracle,
                w0,
                params,
                options,
                rng::replica_seed(root_seed, k),
            )
        })
        .collect::<Result<_>>()?;
    Ok(EscapeReport::from_outcomes(
        params.step_size,
        predicted_is,
        runs,
    ))
}

/// Basin of each replica's final iterate after `steps` steps: the sign of its
/// displacement from `saddle` along the most negative curvature direction
/// there.
#[allow(clippy::too_many_arguments)]
pub fn terminal_basins(
    model: &CostModel,
    oracle: &GradientOracle,
    w0: &Vector,
    saddle: &Vector,
    step_size: f64,
    steps: usize,
    root_seed: u64,
    n: usize,
) -> Result<Vec<i8>> {
    let anchor = anchor_at(model, 0, saddle, model.cost(saddle)?)?;
    (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let mut end = w0.clone();
            simulate(
                model,
                oracle,
                w0,
                step_size,
                steps,
                rng::replica_seed(root_seed, k),
                |i, w| {
                    if i == steps {
                        end.clone_from(w);
                    }
                    Ok(false)
                },
            )?;
            Ok(basin_sign(&anchor, &end))
        })
        .collect()
}
