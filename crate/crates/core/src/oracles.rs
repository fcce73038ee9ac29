//! Update-direction constructions and the gradient noise they induce.
//!
//! The noise of an estimate is `s = ∇J(w) − ∇̂J(w)`, so `direction + noise`
//! reconstructs the true gradient.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problems::{CostModel, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// The true gradient `∇J(w)`.
    Exact,
    /// Mean of `∇Q(w; x)` over a fresh minibatch.
    Stochastic,
    /// `∇J(w) + v`, `v ~ N(0, σ_v² I)`.
    PerturbedExact,
    /// Stochastic estimate plus `v ~ N(0, σ_v² I)`.
    PerturbedStochastic,
    /// Stochastic estimate plus `s·d`, `s ~ N(0, σ_v²)` along a fixed unit `d`.
    TargetedStochastic,
}

impl OracleKind {
    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            OracleKind::Stochastic
                | OracleKind::PerturbedStochastic
                | OracleKind::TargetedStochastic
        )
    }

    pub fn is_perturbed(self) -> bool {
        matches!(
            self,
            OracleKind::PerturbedExact
                | OracleKind::PerturbedStochastic
                | OracleKind::TargetedStochastic
        )
    }
}

/// Serialized oracle configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub kind: OracleKind,
    #[serde(default)]
    pub perturbation_std: f64,
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    #[serde(default = "default_minibatch")]
    pub minibatch: usize,
    /// Perturb only when the squared norm of the unperturbed estimate is below this.
    #[serde(default)]
    pub gate_threshold: Option<f64>,
}

fn default_minibatch() -> usize {
    1
}

impl OracleSpec {
    pub fn new(kind: OracleKind) -> Self {
        Self {
            kind,
            perturbation_std: 0.0,
            direction: None,
            minibatch: 1,
            gate_threshold: None,
        }
    }

    pub fn exact() -> Self {
        Self::new(OracleKind::Exact)
    }

    pub fn stochastic() -> Self {
        Self::new(OracleKind::Stochastic)
    }

    pub fn perturbed_exact(std: f64) -> Self {
        Self::new(OracleKind::PerturbedExact).with_std(std)
    }

    pub fn perturbed_stochastic(std: f64) -> Self {
        Self::new(OracleKind::PerturbedStochastic).with_std(std)
    }

    pub fn targeted(std: f64, direction: Vec<f64>) -> Self {
        let mut s = Self::new(OracleKind::TargetedStochastic).with_std(std);
        s.direction = Some(direction);
        s
    }

    pub fn with_std(mut self, std: f64) -> Self {
        self.perturbation_std = std;
        self
    }

    pub fn with_minibatch(mut self, minibatch: usize) -> Self {
        self.minibatch = minibatch;
        self
    }

    pub fn with_gate(mut self, threshold: f64) -> Self {
        self.gate_threshold = Some(threshold);
        self
    }
}

/// A validated, immutable oracle.
#[derive(Debug, Clone)]
pub struct GradientOracle {
    spec: OracleSpec,
    direction: Option<Vector>,
}

/// One realization of `∇̂J(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub direction: Vector,
}

impl GradientEstimate {
    /// `s = ∇J(w) − ∇̂J(w)` given the true gradient at the evaluation point.
    pub fn noise(&self, true_gradient: &Vector) -> Vector {
        true_gradient - &self.direction
    }
}

impl GradientOracle {
    /// Validates `spec`. A targeted direction is normalized to unit length.
    pub fn new(spec: OracleSpec) -> Result<Self> {
        if !(spec.perturbation_std >= 0.0 && spec.perturbation_std.is_finite()) {
            return Err(Error::invalid(
                "perturbation_std",
                "must be finite and nonnegative",
            ));
        }
        if spec.minibatch == 0 {
            return Err(Error::invalid("minibatch", "must be at least 1"));
        }
        if let Some(t) = spec.gate_threshold {
            if !(t > 0.0) {
                return Err(Error::invalid("gate_threshold", "must be positive"));
            }
        }
        let direction = match (spec.kind, &spec.direction) {
            (OracleKind::TargetedStochastic, None) => {
                return Err(Error::invalid(
                    "direction",
                    "targeted oracle requires a direction",
                ));
            }
            (OracleKind::TargetedStochastic, Some(d)) => {
                let d = Vector::from_vec(d.clone());
                let n = d.norm();
                if !(n > 0.0 && n.is_finite()) {
                    return Err(Error::invalid(
                        "direction",
                        "must be a nonzero finite vector",
                    ));
                }
                Some(d / n)
            }
            _ => None,
        };
        Ok(Self { spec, direction })
    }

    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    pub fn kind(&self) -> OracleKind {
        self.spec.kind
    }

    pub fn perturbation_std(&self) -> f64 {
        self.spec.perturbation_std
    }

    pub fn direction(&self) -> Option<&Vector> {
        self.direction.as_ref()
    }

    /// Draws one estimate. Data samples are consumed from `rng` before the
    /// perturbation, and the perturbation is always drawn (even when gated off)
    /// so streams stay aligned across runs.
    pub fn estimate<R: Rng + ?Sized>(
        &self,
        model: &CostModel,
        w: &Vector,
        rng: &mut R,
    ) -> Result<GradientEstimate> {
        check_dim(model.dimension(), w.len())?;
        if let Some(d) = &self.direction {
            check_dim(model.dimension(), d.len())?;
        }
        let mut direction = if self.spec.kind.is_stochastic() {
            let mut acc = model.sample_gradient(w, rng)?;
            for _ in 1..self.spec.minibatch {
                acc += model.sample_gradient(w, rng)?;
            }
            if self.spec.minibatch > 1 {
                acc /= self.spec.minibatch as f64;
            }
            acc
        } else {
            model.grad(w)?
        };

        let sigma = self.spec.perturbation_std;
        let active = match self.spec.gate_threshold {
            Some(t) => direction.norm_squared() < t,
            None => true,
        };
        match self.spec.kind {
            OracleKind::PerturbedExact | OracleKind::PerturbedStochastic => {
                for di in direction.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    if active {
                        *di += sigma * z;
                    }
                }
            }
            OracleKind::TargetedStochastic => {
                let z: f64 = rng.sample(StandardNormal);
                if active {
                    let d = self.direction.as_ref().expect("validated");
                    direction.axpy(sigma * z, d, 1.0);
                }
            }
            OracleKind::Exact | OracleKind::Stochastic => {}
        }
        Ok(GradientEstimate { direction })
    }

    /// `n` i.i.d. noise draws at the fixed point `w`.
    pub fn noise_draws<R: Rng + ?Sized>(
        &self,
        model: &CostModel,
        w: &Vector,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Vector>> {
        let g = model.grad(w)?;
        (0..n)
            .map(|_| Ok(self.estimate(model, w, rng)?.noise(&g)))
            .collect()
    }
}

/// Sample mean of the noise at a fixed point, with per-component spread.
#[derive(Debug, Clone)]
pub struct NoiseMeanCheck {
    pub mean: Vector,
    pub std: Vector,
    pub n: usize,
}

impl NoiseMeanCheck {
    /// Largest `|mean_k| / (std_k/√n)` over components (0 when there is no noise).
    pub fn max_z(&self) -> f64 {
        let rt = (self.n as f64).sqrt();
        self.mean
            .iter()
            .zip(self.std.iter())
            .map(|(m, s)| {
                if *s > 0.0 {
                    m.abs() * rt / s
                } else if *m == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    /// `|mean| <= k·|std|/√n`.
    pub fn norm_within(&self, k: f64) -> bool {
        self.mean.norm() <= k * self.std.norm() / (self.n as f64).sqrt()
    }
}

/// Estimates `E{s | w}` from `n >= 1000` fresh draws.
pub fn noise_mean_check<R: Rng + ?Sized>(
    oracle: &GradientOracle,
    model: &CostModel,
    w: &Vector,
    n: usize,
    rng: &mut R,
) -> Result<NoiseMeanCheck> {
    if n < 1000 {
        return Err(Error::invalid(
            "n",
            "noise mean check needs at least 1000 draws",
        ));
    }
    let dim = model.dimension();
    let mut mean = Vector::zeros(dim);
    let mut sq = Vector::zeros(dim);
    let g = model.grad(w)?;
    for _ in 0..n {
        let s = oracle.estimate(model, w, rng)?.noise(&g);
        mean += &s;
        sq += s.component_mul(&s);
    }
    let nf = n as f64;
    mean /= nf;
    let var = (sq / nf - mean.component_mul(&mean)).map(|v| v.max(0.0) * nf / (nf - 1.0));
    Ok(NoiseMeanCheck {
        mean,
        std: var.map(f64::sqrt),
        n,
    })
}
