//! The constant step-size recursion and the coupled short-term model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::regions::{classify_from, ClassifierParams, RegionLabel};
use crate::error::{check_dim, Error, Result};
use crate::oracles::GradientOracle;
use crate::problems::{CostModel, Matrix, Vector};
use crate::rng;

/// Iterates with `|w|` above this (or any non-finite entry) abort the run.
pub const DIVERGENCE_RADIUS: f64 = 1e6;

/// Default horizon constant `T` for coupled runs, which last `T/μ` steps.
pub const DEFAULT_HORIZON_TIME: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub step_size: f64,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_stride() -> usize {
    1
}

impl RunConfig {
    pub fn new(step_size: f64, horizon: usize, seed: u64) -> Self {
        Self {
            step_size,
            horizon,
            seed,
            record_stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(
                "step_size",
                "must be finite and nonnegative",
            ));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride", "must be at least 1"));
        }
        Ok(())
    }
}

/// One recorded iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub iter: usize,
    pub w: Vector,
    pub cost: f64,
    pub grad_norm_sq: f64,
    /// `|s|` of the step taken from this iterate; `None` for the last one.
    pub noise_norm: Option<f64>,
    pub region: Option<RegionLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub seed: u64,
    pub config: RunConfig,
}

impl Trajectory {
    pub fn iterates(&self) -> impl Iterator<Item = (usize, &Vector)> {
        self.records.iter().map(|r| (r.iter, &r.w))
    }

    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }

    pub fn grad_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.grad_norm_sq.sqrt()).collect()
    }

    pub fn last(&self) -> &StepRecord {
        self.records
            .last()
            .expect("trajectories hold at least one record")
    }
}

fn diverged(w: &Vector) -> bool {
    w.iter().any(|x| !x.is_finite()) || w.norm() > DIVERGENCE_RADIUS
}

struct Recorder<'a> {
    model: &'a CostModel,
    classifier: Option<&'a ClassifierParams>,
}

impl Recorder<'_> {
    fn record(
        &self,
        iter: usize,
        w: &Vector,
        g: &Vector,
        noise_norm: Option<f64>,
    ) -> Result<StepRecord> {
        let region = match self.classifier {
            Some(p) => Some(classify_from(g, &self.model.hessian(w)?, p)),
            None => None,
        };
        Ok(StepRecord {
            iter,
            w: w.clone(),
            cost: self.model.cost(w)?,
            grad_norm_sq: g.norm_squared(),
            noise_norm,
            region,
        })
    }
}

/// Runs `w_i = w_{i−1} − μ·∇̂J(w_{i−1})` for `config.horizon` steps.
pub fn run(
    model: &CostModel,
    oracle: &GradientOracle,
    w0: &Vector,
    config: &RunConfig,
) -> Result<Trajectory> {
    run_classified(model, oracle, w0, config, None)
}

/// As [`run`], additionally labelling every recorded iterate.
pub fn run_classified(
    model: &CostModel,
    oracle: &GradientOracle,
    w0: &Vector,
    config: &RunConfig,
    classifier: Option<&ClassifierParams>,
) -> Result<Trajectory> {
    config.validate()?;
    check_dim(model.dimension(), w0.len())?;
    if diverged(w0) {
        return Err(Error::invalid(
            "w0",
            "must be finite and inside the divergence radius",
        ));
    }
    let recorder = Recorder { model, classifier };
    let mut rng = rng::from_seed(config.seed);
    let mut w = w0.clone();
    let mut records = Vec::with_capacity(config.horizon / config.record_stride + 2);
    for i in 0..config.horizon {
        let est = oracle.estimate(model, &w, &mut rng)?;
        if i % config.record_stride == 0 {
            let g = model.grad(&w)?;
            let noise = est.noise(&g).norm();
            records.push(recorder.record(i, &w, &g, Some(noise))?);
        }
        w.axpy(-config.step_size, &est.direction, 1.0);
        if diverged(&w) {
            return Err(Error::Diverged {
                last_finite_index: i,
            });
        }
    }
    let g = model.grad(&w)?;
    records.push(recorder.record(config.horizon, &w, &g, None)?);
    Ok(Trajectory {
        records,
        seed: config.seed,
        config: *config,
    })
}

/// Lightweight loop without recording. `visit(i, w)` sees every iterate
/// `w_0, w_1, …` and returns `true` to stop. Returns the index of the last
/// visited iterate.
pub fn simulate<F>(
    model: &CostModel,
    oracle: &GradientOracle,
    w0: &Vector,
    step_size: f64,
    max_steps: usize,
    seed: u64,
    mut visit: F,
) -> Result<usize>
where
    F: FnMut(usize, &Vector) -> Result<bool>,
{
    check_dim(model.dimension(), w0.len())?;
    let mut rng = rng::from_seed(seed);
    let mut w = w0.clone();
    for i in 0..max_steps {
        if visit(i, &w)? {
            return Ok(i);
        }
        let est = oracle.estimate(model, &w, &mut rng)?;
        w.axpy(-step_size, &est.direction, 1.0);
        if diverged(&w) {
            return Err(Error::Diverged {
                last_finite_index: i,
            });
        }
    }
    visit(max_steps, &w)?;
    Ok(max_steps)
}

/// `n` runs of `config` whose seeds are the replica seeds of `config.seed`,
/// in replica order.
pub fn run_ensemble(
    model: &CostModel,
    oracle: &GradientOracle,
    w0: &Vector,
    config: &RunConfig,
    n: usize,
) -> Result<Vec<Trajectory>> {
    (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let mut c = *config;
            c.seed = rng::replica_seed(config.seed, k);
            run(model, oracle, w0, &c)
        })
        .collect()
}

/// Gradient of the short-term model anchored at `anchor`:
/// `∇J(anchor) + ∇²J(anchor)(w − anchor)`.
#[derive(Debug, Clone)]
pub struct FrozenModel<'a> {
    model: &'a CostModel,
    anchor: Vector,
    grad: Vector,
    hessian: Matrix,
}

impl<'a> FrozenModel<'a> {
    pub fn new(model: &'a CostModel, anchor: &Vector) -> Result<Self> {
        Ok(Self {
            model,
            anchor: anchor.clone(),
            grad: model.grad(anchor)?,
            hessian: model.hessian(anchor)?,
        })
    }

    pub fn gradient(&self, w: &Vector) -> Result<Vector> {
        if self.model.has_constant_hessian() {
            // The short-term model coincides with a quadratic; evaluating it
            // through the model keeps the two recursions bit-identical.
            return self.model.grad(w);
        }
        Ok(&self.grad + &self.hessian * (w - &self.anchor))
    }

    pub fn anchor(&self) -> &Vector {
        &self.anchor
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }
}

/// A true trajectory and its short-term model driven by the same noise.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    pub true_traj: Trajectory,
    pub model_traj: Trajectory,
    pub anchor: Vector,
    /// `|w_{i+j} − w′_{i+j}|²` for `j = 0..=horizon`.
    pub deviations: Vec<f64>,
    /// Noise `s_{i+j+1}(w_{i+j})` drawn at the true iterate, as consumed by
    /// the true recursion.
    pub noise: Vec<Vector>,
    /// Noise as consumed by the model recursion.
    pub model_noise: Vec<Vector>,
}

/// Runs the true recursion from `anchor` together with
/// `w′_{j+1} = w′_j − μ[∇J(a) + ∇²J(a)(w′_j − a)] + μ·s_{j+1}(w_j)`.
///
/// Both updates are written as `w − μ(∇ − s)` with the same `s`, so that the
/// pair differs only through the frozen gradient.
pub fn run_coupled(
    model: &CostModel,
    oracle: &GradientOracle,
    anchor: &Vector,
    horizon: usize,
    step_size: f64,
    seed: u64,
) -> Result<CoupledPair> {
    let config = RunConfig::new(step_size, horizon.max(1), seed);
    config.validate()?;
    check_dim(model.dimension(), anchor.len())?;
    if diverged(anchor) {
        return Err(Error::invalid("anchor", "must be finite"));
    }
    let frozen = FrozenModel::new(model, anchor)?;
    let mut rng = rng::from_seed(seed);
    let mut w = anchor.clone();
    let mut wm = anchor.clone();
    let mut true_records = Vec::with_capacity(horizon + 1);
    let mut model_records = Vec::with_capacity(horizon + 1);
    let mut deviations = Vec::with_capacity(horizon + 1);
    let mut noise_log = Vec::with_capacity(horizon);
    let mut model_noise_log = Vec::with_capacity(horizon);
    let rec = |iter: usize, w: &Vector, g: &Vector, noise: Option<f64>| -> Result<StepRecord> {
        Ok(StepRecord {
            iter,
            w: w.clone(),
            cost: model.cost(w)?,
            grad_norm_sq: g.norm_squared(),
            noise_norm: noise,
            region: None,
        })
    };
    for j in 0..horizon {
        let g = model.grad(&w)?;
        let s = oracle.estimate(model, &w, &mut rng)?.noise(&g);
        let gm = frozen.gradient(&wm)?;
        deviations.push((&w - &wm).norm_squared());
        true_records.push(rec(j, &w, &g, Some(s.norm()))?);
        model_records.push(rec(j, &wm, &model.grad(&wm)?, Some(s.norm()))?);

        w.axpy(-step_size, &(&g - &s), 1.0);
        let consumed = s.clone();
        wm.axpy(-step_size, &(&gm - &consumed), 1.0);
        noise_log.push(s);
        model_noise_log.push(consumed);
        if diverged(&w) || diverged(&wm) {
            return Err(Error::Diverged {
                last_finite_index: j,
            });
        }
    }
    deviations.push((&w - &wm).norm_squared());
    true_records.push(rec(horizon, &w, &model.grad(&w)?, None)?);
    model_records.push(rec(horizon, &wm, &model.grad(&wm)?, None)?);
    let config = RunConfig::new(step_size, horizon, seed);
    Ok(CoupledPair {
        true_traj: Trajectory {
            records: true_records,
            seed,
            config,
        },
        model_traj: Trajectory {
            records: model_records,
            seed,
            config,
        },
        anchor: anchor.clone(),
        deviations,
        noise: noise_log,
        model_noise: model_noise_log,
    })
}

/// `n` coupled pairs with replica seeds derived from `root_seed`, in replica order.
pub fn coupled_ensemble(
    model: &CostModel,
    oracle: &GradientOracle,
    anchor: &Vector,
    horizon: usize,
    step_size: f64,
    root_seed: u64,
    n: usize,
) -> Result<Vec<CoupledPair>> {
    (0..n as u64)
        .into_par_iter()
        .map(|k| {
            run_coupled(
                model,
                oracle,
                anchor,
                horizon,
                step_size,
                rng::replica_seed(root_seed, k),
            )
        })
        .collect()
}

/// Monte Carlo moments of the deviations over a coupled ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationMoments {
    pub order: u32,
    /// `E|w̃_j|^order` with `w̃_j = anchor − w_{i+j}`.
    pub true_moment: Vec<f64>,
    /// `E|w̃_j − w̃′_j|²`.
    pub model_gap_sq: Vec<f64>,
}

impl DeviationMoments {
    pub fn max_true_moment(&self) -> f64 {
        self.true_moment.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_model_gap(&self) -> f64 {
        self.model_gap_sq.iter().copied().fold(0.0, f64::max)
    }
}

pub fn deviation_moments(ensemble: &[CoupledPair], order: u32) -> Result<DeviationMoments> {
    if !(2..=4).contains(&order) {
        return Err(Error::invalid("order", "must be 2, 3 or 4"));
    }
    let first = ensemble.first().ok_or(Error::EmptyEnsemble)?;
    let (mu, horizon) = (
        first.true_traj.config.step_size,
        first.true_traj.config.horizon,
    );
    if ensemble.iter().any(|p| {
        p.true_traj.config.step_size != mu
            || p.true_traj.config.horizon != horizon
            || p.anchor != first.anchor
    }) {
        return Err(Error::MixedConfigs);
    }
    let n = ensemble.len() as f64;
    let mut true_moment = vec![0.0; horizon + 1];
    let mut model_gap_sq = vec![0.0; horizon + 1];
    for pair in ensemble {
        for (j, r) in pair.true_traj.records.iter().enumerate() {
            true_moment[j] += (&pair.anchor - &r.w).norm().powi(order as i32) / n;
        }
        for (j, d) in pair.deviations.iter().enumerate() {
            model_gap_sq[j] += d / n;
        }
    }
    Ok(DeviationMoments {
        order,
        true_moment,
        model_gap_sq,
    })
}
