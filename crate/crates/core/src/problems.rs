//! Cost models: analytic quadratics and the two-layer logistic network.
//!
//! Every model exposes the expected risk `J`, its gradient and Hessian, and an
//! instantaneous gradient `∇Q(w; x)` on a fresh data draw, which is what the
//! stochastic oracles consume.
//!
//! The logistic model's ridge weight is called `reg` here. The Hessian-Lipschitz
//! constant is `lipschitz_hess`; both are written `ρ` in the literature.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::quadrature::GaussHermite;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Quadrature order used for the logistic risk and its derivatives.
pub const DEFAULT_QUADRATURE_ORDER: usize = 64;

/// Radius of the ball over which logistic smoothness constants are certified.
pub const CERTIFICATE_RADIUS: f64 = 3.0;

/// Serialized model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Quadratic(QuadraticSaddleSpec),
    TwoLayerLogistic(TwoLayerLogisticSpec),
}

/// `J(w) = ½ Σ c_m w_m²`; the instantaneous gradient adds isotropic Gaussian
/// data noise of standard deviation `data_noise_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSaddleSpec {
    pub curvature: Vec<f64>,
    #[serde(default)]
    pub data_noise_std: f64,
}

/// Loss `log(1 + exp(-γ w₁ W₂ h)) + (reg/2)(w₁² + W₂²)` with
/// `γ` uniform on `{±1}` and `h = γ·label_mean + feature_noise_std·z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLayerLogisticSpec {
    #[serde(default = "default_reg")]
    pub reg: f64,
    #[serde(default = "default_label_mean")]
    pub label_mean: f64,
    #[serde(default = "default_feature_noise_std")]
    pub feature_noise_std: f64,
}

fn default_reg() -> f64 {
    0.1
}
fn default_label_mean() -> f64 {
    1.0
}
fn default_feature_noise_std() -> f64 {
    0.5
}

impl Default for TwoLayerLogisticSpec {
    fn default() -> Self {
        Self {
            reg: default_reg(),
            label_mean: default_label_mean(),
            feature_noise_std: default_feature_noise_std(),
        }
    }
}

impl QuadraticSaddleSpec {
    pub fn new(curvature: Vec<f64>) -> Self {
        Self {
            curvature,
            data_noise_std: 0.0,
        }
    }

    pub fn with_data_noise(mut self, std: f64) -> Self {
        self.data_noise_std = std;
        self
    }
}

/// One streaming observation `(γ, h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataSample {
    pub label: f64,
    pub feature: f64,
}

/// Smoothness constants backing the step-size premises and the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    /// `δ`: gradient Lipschitz constant (also bounds `|λ(∇²J)|`).
    pub lipschitz_grad: f64,
    /// `ρ`: Hessian Lipschitz constant.
    pub lipschitz_hess: f64,
    /// `J^o`, when a lower bound is known analytically.
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Clone)]
enum Kind {
    Quadratic {
        curvature: Vector,
        data_noise_std: f64,
    },
    Logistic {
        spec: TwoLayerLogisticSpec,
        rule: GaussHermite,
    },
}

/// A differentiable expected risk together with its smoothness certificate.
///
/// Immutable after construction and shareable across replicas.
#[derive(Debug, Clone)]
pub struct CostModel {
    spec: ModelSpec,
    kind: Kind,
    smoothness: Smoothness,
}

impl CostModel {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        match spec {
            ModelSpec::Quadratic(q) => Self::quadratic(q.clone()),
            ModelSpec::TwoLayerLogistic(l) => Self::logistic(l.clone()),
        }
    }

    pub fn quadratic(spec: QuadraticSaddleSpec) -> Result<Self> {
        if spec.curvature.is_empty() {
            return Err(Error::invalid("curvature", "must have at least one entry"));
        }
        if spec.curvature.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("curvature", "entries must be finite"));
        }
        if !(spec.data_noise_std >= 0.0 && spec.data_noise_std.is_finite()) {
            return Err(Error::invalid(
                "data_noise_std",
                "must be finite and nonnegative",
            ));
        }
        let lipschitz_grad = spec.curvature.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        let lower_bound = spec.curvature.iter().all(|&c| c >= 0.0).then_some(0.0);
        let smoothness = Smoothness {
            lipschitz_grad,
            lipschitz_hess: 0.0,
            lower_bound,
        };
        Ok(Self {
            kind: Kind::Quadratic {
                curvature: Vector::from_vec(spec.curvature.clone()),
                data_noise_std: spec.data_noise_std,
            },
            spec: ModelSpec::Quadratic(spec),
            smoothness,
        })
    }

    pub fn logistic(spec: TwoLayerLogisticSpec) -> Result<Self> {
        Self::logistic_with_order(spec, DEFAULT_QUADRATURE_ORDER)
    }

    pub fn logistic_with_order(spec: TwoLayerLogisticSpec, order: usize) -> Result<Self> {
        validate_logistic(&spec)?;
        if order < 8 {
            return Err(Error::invalid(
                "order",
                "quadrature order must be at least 8",
            ));
        }
        let mut model = Self {
            kind: Kind::Logistic {
                spec: spec.clone(),
                rule: GaussHermite::new(order),
            },
            spec: ModelSpec::TwoLayerLogistic(spec),
            smoothness: Smoothness {
                lipschitz_grad: f64::INFINITY,
                lipschitz_hess: f64::INFINITY,
                // The loss is a softplus plus a ridge term, both nonnegative.
                lower_bound: Some(0.0),
            },
        };
        let (delta, rho) = certify_smoothness(&model, CERTIFICATE_RADIUS, 0.05);
        model.smoothness.lipschitz_grad = delta;
        model.smoothness.lipschitz_hess = rho;
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dimension(&self) -> usize {
        match &self.kind {
            Kind::Quadratic { curvature, .. } => curvature.len(),
            Kind::Logistic { .. } => 2,
        }
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    /// True when the Hessian does not depend on `w`.
    pub fn has_constant_hessian(&self) -> bool {
        matches!(self.kind, Kind::Quadratic { .. })
    }

    pub fn cost(&self, w: &Vector) -> Result<f64> {
        check_dim(self.dimension(), w.len())?;
        Ok(match &self.kind {
            Kind::Quadratic { curvature, .. } => {
                0.5 * curvature
                    .iter()
                    .zip(w.iter())
                    .map(|(c, x)| c * x * x)
                    .sum::<f64>()
            }
            Kind::Logistic { spec, rule } => logistic_risk(spec, rule, w[0], w[1]),
        })
    }

    pub fn grad(&self, w: &Vector) -> Result<Vector> {
        check_dim(self.dimension(), w.len())?;
        Ok(match &self.kind {
            Kind::Quadratic { curvature, .. } => curvature.component_mul(w),
            Kind::Logistic { spec, rule } => {
                let (w1, w2) = (w[0], w[1]);
                let m = LogisticMoments::at(spec, rule, w1 * w2, false);
                Vector::from_vec(vec![w2 * m.e1 + spec.reg * w1, w1 * m.e1 + spec.reg * w2])
            }
        })
    }

    pub fn hessian(&self, w: &Vector) -> Result<Matrix> {
        check_dim(self.dimension(), w.len())?;
        Ok(match &self.kind {
            Kind::Quadratic { curvature, .. } => Matrix::from_diagonal(curvature),
            Kind::Logistic { spec, rule } => {
                let (w1, w2) = (w[0], w[1]);
                let a = w1 * w2;
                let m = LogisticMoments::at(spec, rule, a, true);
                let off = m.e1 + a * m.e2;
                Matrix::from_row_slice(
                    2,
                    2,
                    &[
                        w2 * w2 * m.e2 + spec.reg,
                        off,
                        off,
                        w1 * w1 * m.e2 + spec.reg,
                    ],
                )
            }
        })
    }

    /// Gradient of the loss on one fresh data draw.
    pub fn sample_gradient<R: Rng + ?Sized>(&self, w: &Vector, rng: &mut R) -> Result<Vector> {
        check_dim(self.dimension(), w.len())?;
        Ok(match &self.kind {
            Kind::Quadratic {
                curvature,
                data_noise_std,
            } => {
                let mut g = curvature.component_mul(w);
                if *data_noise_std > 0.0 {
                    for gi in g.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *gi += data_noise_std * z;
                    }
                }
                g
            }
            Kind::Logistic { spec, .. } => {
                let sample = draw_sample(spec, rng);
                logistic_loss_grad(spec, w[0], w[1], sample)
            }
        })
    }
}

fn validate_logistic(spec: &TwoLayerLogisticSpec) -> Result<()> {
    if !(spec.reg >= 0.0 && spec.reg.is_finite()) {
        return Err(Error::invalid("reg", "must be finite and nonnegative"));
    }
    if !spec.label_mean.is_finite() {
        return Err(Error::invalid("label_mean", "must be finite"));
    }
    if !(spec.feature_noise_std >= 0.0 && spec.feature_noise_std.is_finite()) {
        return Err(Error::invalid(
            "feature_noise_std",
            "must be finite and nonnegative",
        ));
    }
    Ok(())
}

/// `log(1 + e^{-t})` without overflow.
pub(crate) fn softplus_neg(t: f64) -> f64 {
    if t >= 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `E[f'(a z) z]` and `E[f''(a z) z²]` for `f(t) = log(1 + e^{-t})` and
/// `z = γh ~ N(label_mean, feature_noise_std²)`.
struct LogisticMoments {
    e1: f64,
    e2: f64,
}

impl LogisticMoments {
    fn at(spec: &TwoLayerLogisticSpec, rule: &GaussHermite, a: f64, second: bool) -> Self {
        let (mut e1, mut e2) = (0.0, 0.0);
        for (x, p) in rule.normal_points() {
            let z = spec.label_mean + spec.feature_noise_std * x;
            let t = a * z;
            let s_neg = sigmoid(-t);
            e1 -= p * s_neg * z;
            if second {
                e2 += p * sigmoid(t) * s_neg * z * z;
            }
        }
        Self { e1, e2 }
    }
}

fn logistic_risk(spec: &TwoLayerLogisticSpec, rule: &GaussHermite, w1: f64, w2: f64) -> f64 {
    let a = w1 * w2;
    let data = rule.expect_normal(spec.label_mean, spec.feature_noise_std, |z| {
        softplus_neg(a * z)
    });
    data + 0.5 * spec.reg * (w1 * w1 + w2 * w2)
}

fn draw_sample<R: Rng + ?Sized>(spec: &TwoLayerLogisticSpec, rng: &mut R) -> DataSample {
    let label = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let z: f64 = rng.sample(StandardNormal);
    DataSample {
        label,
        feature: label * spec.label_mean + spec.feature_noise_std * z,
    }
}

fn logistic_loss_grad(spec: &TwoLayerLogisticSpec, w1: f64, w2: f64, sample: DataSample) -> Vector {
    let gh = sample.label * sample.feature;
    let u = w1 * w2 * gh;
    let k = -sigmoid(-u) * gh;
    Vector::from_vec(vec![k * w2 + spec.reg * w1, k * w1 + spec.reg * w2])
}

/// Draws `count` i.i.d. samples from the data law of `spec`.
pub fn sample_data<R: Rng + ?Sized>(
    spec: &TwoLayerLogisticSpec,
    count: usize,
    rng: &mut R,
) -> Result<Vec<DataSample>> {
    if count == 0 {
        return Err(Error::invalid("count", "must be at least 1"));
    }
    validate_logistic(spec)?;
    Ok((0..count).map(|_| draw_sample(spec, rng)).collect())
}

/// `∇Q(w; γ, h)` for the two-layer logistic loss.
pub fn loss_grad(spec: &TwoLayerLogisticSpec, w: &Vector, sample: DataSample) -> Result<Vector> {
    check_dim(2, w.len())?;
    Ok(logistic_loss_grad(spec, w[0], w[1], sample))
}

/// Expected logistic risk by Gauss–Hermite quadrature of the given order.
pub fn expected_risk_oracle(spec: &TwoLayerLogisticSpec, w: &Vector, order: usize) -> Result<f64> {
    check_dim(2, w.len())?;
    if order < 8 {
        return Err(Error::invalid(
            "order",
            "quadrature order must be at least 8",
        ));
    }
    validate_logistic(spec)?;
    Ok(logistic_risk(spec, &GaussHermite::new(order), w[0], w[1]))
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(m: &Matrix) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Conservative `(δ, ρ)` over the disk `|w| <= radius`, from Hessians on a
/// square grid of the given spacing. `δ` is the largest Hessian norm plus one
/// grid cell of Hessian drift; `ρ` is 1.5× the largest neighbour difference
/// quotient.
fn certify_smoothness(model: &CostModel, radius: f64, spacing: f64) -> (f64, f64) {
    let half = (radius / spacing).ceil() as i64 + 1;
    let side = (2 * half + 1) as usize;
    let coord = |i: usize| (i as i64 - half) as f64 * spacing;
    let mut hess: Vec<Option<Matrix>> = Vec::with_capacity(side * side);
    let reach = radius + 2.0 * spacing;
    for i in 0..side {
        for j in 0..side {
            let (x, y) = (coord(i), coord(j));
            if x.hypot(y) <= reach {
                let w = Vector::from_vec(vec![x, y]);
                hess.push(Some(model.hessian(&w).expect("dimension 2")));
            } else {
                hess.push(None);
            }
        }
    }
    let mut max_norm = 0.0_f64;
    let mut max_ratio = 0.0_f64;
    let at = |i: usize, j: usize| hess[i * side + j].as_ref();
    for i in 0..side {
        for j in 0..side {
            let Some(h) = at(i, j) else { continue };
            max_norm = max_norm.max(sym_norm(h));
            let neighbours = [(1, 0, 1.0), (0, 1, 1.0), (1, 1, std::f64::consts::SQRT_2)];
            for (di, dj, dist) in neighbours {
                if let Some(g) = (i + di < side && j + dj < side)
                    .then(|| at(i + di, j + dj))
                    .flatten()
                {
                    max_ratio = max_ratio.max(sym_norm(&(g - h)) / (dist * spacing));
                }
            }
            if i + 1 < side && j >= 1 {
                if let Some(g) = at(i + 1, j - 1) {
                    let r = sym_norm(&(g - h)) / (std::f64::consts::SQRT_2 * spacing);
                    max_ratio = max_ratio.max(r);
                }
            }
        }
    }
    let rho = 1.5 * max_ratio;
    (max_norm + rho * spacing, rho)
}
