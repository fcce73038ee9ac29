use std::fmt;

use serde::{Deserialize, Serialize};

use super::spectral::min_eigenvalue;
use crate::error::{Error, Result};
use crate::problems::{CostModel, Matrix, Vector};

/// Parameters of the large-gradient / strict-saddle / second-order-stationary
/// taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub step_size: f64,
    pub tau: f64,
    pub pi: f64,
    pub delta: f64,
    pub beta: f64,
    pub sigma_sq: f64,
}

pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_PI: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub c1: f64,
    pub c2: f64,
    pub g_threshold: f64,
}

impl ClassifierParams {
    pub fn new(
        step_size: f64,
        tau: f64,
        pi: f64,
        delta: f64,
        beta: f64,
        sigma_sq: f64,
    ) -> Result<Self> {
        let p = Self {
            step_size,
            tau,
            pi,
            delta,
            beta,
            sigma_sq,
        };
        p.validate()?;
        Ok(p)
    }

    /// Defaults `τ = 0.1`, `π = 0.5`, with `δ` taken from the model certificate.
    pub fn for_model(model: &CostModel, step_size: f64, beta: f64, sigma_sq: f64) -> Result<Self> {
        Self::new(
            step_size,
            DEFAULT_TAU,
            DEFAULT_PI,
            model.smoothness().lipschitz_grad,
            beta,
            sigma_sq,
        )
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_pi(mut self, pi: f64) -> Self {
        self.pi = pi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.step_size) {
            return Err(Error::invalid(
                "step_size",
                "must be finite and nonnegative",
            ));
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::invalid("pi", "must lie in (0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tau", "must be positive"));
        }
        if !finite_nonneg(self.delta) {
            return Err(Error::invalid("delta", "must be finite and nonnegative"));
        }
        if !finite_nonneg(self.beta) {
            return Err(Error::invalid("beta", "must be finite and nonnegative"));
        }
        if !finite_nonneg(self.sigma_sq) {
            return Err(Error::invalid("sigma_sq", "must be finite and nonnegative"));
        }
        Ok(())
    }

    /// `c₁ = 1 − μ(δ/2)(1 + β²)`.
    pub fn c1(&self) -> f64 {
        1.0 - self.step_size * 0.5 * self.delta * (1.0 + self.beta * self.beta)
    }

    /// `c₂ = (δ/2)σ²`.
    pub fn c2(&self) -> f64 {
        0.5 * self.delta * self.sigma_sq
    }

    /// `μ(c₂/c₁)(1 + 1/π)`; infinite once `c₁ <= 0` with a positive numerator.
    pub fn g_threshold(&self) -> f64 {
        let num = self.step_size * self.c2() * (1.0 + 1.0 / self.pi);
        if num == 0.0 {
            0.0
        } else if self.c1() <= 0.0 {
            f64::INFINITY
        } else {
            num / self.c1()
        }
    }

    /// Step-size premise of the one-step descent bound: `μ <= 2/(δ(1+β²))`.
    pub fn step_premise_holds(&self) -> bool {
        self.step_size * self.delta * (1.0 + self.beta * self.beta) <= 2.0
    }

    pub fn constants(&self) -> Constants {
        Constants {
            c1: self.c1(),
            c2: self.c2(),
            g_threshold: self.g_threshold(),
        }
    }
}

/// Returns `(c₁, c₂, g_threshold)` after validating the parameters.
pub fn compute_constants(params: &ClassifierParams) -> Result<(f64, f64, f64)> {
    params.validate()?;
    let c = params.constants();
    Ok((c.c1, c.c2, c.g_threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    /// Large gradient.
    G,
    /// Approximate strict saddle.
    H,
    /// Approximately second-order stationary.
    M,
}

impl RegionLabel {
    pub fn letter(self) -> char {
        match self {
            RegionLabel::G => 'G',
            RegionLabel::H => 'H',
            RegionLabel::M => 'M',
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Labels a point from an already evaluated gradient and Hessian.
pub fn classify_from(grad: &Vector, hessian: &Matrix, params: &ClassifierParams) -> RegionLabel {
    if grad.norm_squared() >= params.g_threshold() {
        RegionLabel::G
    } else if min_eigenvalue(hessian) <= -params.tau {
        RegionLabel::H
    } else {
        RegionLabel::M
    }
}

pub fn classify(w: &Vector, model: &CostModel, params: &ClassifierParams) -> Result<RegionLabel> {
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("w", "must be finite"));
    }
    let g = model.grad(w)?;
    if g.norm_squared() >= params.g_threshold() {
        return Ok(RegionLabel::G);
    }
    let h = model.hessian(w)?;
    Ok(classify_from(&g, &h, params))
}
