//! One JSON document describing an experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::regions::{ClassifierParams, DEFAULT_PI, DEFAULT_TAU};
use crate::error::{check_dim, Error, Result};
use crate::optimizer::RunConfig;
use crate::oracles::{GradientOracle, OracleKind, OracleSpec};
use crate::problems::{CostModel, ModelSpec, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub oracle: OracleSpec,
    pub run: RunConfig,
    pub w0: Vec<f64>,
    #[serde(default)]
    pub classifier: ClassifierSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
    #[serde(default)]
    pub surface: SurfaceSettings,
    #[serde(default)]
    pub verify: VerifySettings,
}

/// Classifier inputs; the step size comes from `run.step_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSettings {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_pi")]
    pub pi: f64,
    #[serde(default)]
    pub beta: f64,
    /// Defaults to the nominal noise variance of the oracle.
    #[serde(default)]
    pub sigma_sq: Option<f64>,
    /// Defaults to the model's gradient-Lipschitz certificate.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Noise floor along the descent directions at the saddle; enables escape
    /// time predictions when set.
    #[serde(default)]
    pub sigma_l_sq: Option<f64>,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}
fn default_pi() -> f64 {
    DEFAULT_PI
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            pi: DEFAULT_PI,
            beta: 0.0,
            sigma_sq: None,
            delta: None,
            sigma_l_sq: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    #[serde(default)]
    pub mu_list: Vec<f64>,
    #[serde(default = "default_sweep_seeds")]
    pub seeds: usize,
    /// Escape runs last at most `ceil(horizon_time / μ)` steps.
    #[serde(default = "default_sweep_time")]
    pub horizon_time: f64,
    /// Learning curves last `ceil(curve_time / μ)` steps.
    #[serde(default = "default_curve_time")]
    pub curve_time: f64,
}

fn default_sweep_seeds() -> usize {
    200
}
fn default_sweep_time() -> f64 {
    60.0
}
fn default_curve_time() -> f64 {
    10.0
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            mu_list: Vec::new(),
            seeds: default_sweep_seeds(),
            horizon_time: default_sweep_time(),
            curve_time: default_curve_time(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSettings {
    #[serde(default = "default_w_max")]
    pub w_max: f64,
    /// Points per axis.
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_w_max() -> f64 {
    2.0
}
fn default_grid() -> usize {
    101
}

impl Default for SurfaceSettings {
    fn default() -> Self {
        Self {
            w_max: default_w_max(),
            grid: default_grid(),
        }
    }
}

/// Monte Carlo sizes of the verification suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySettings {
    #[serde(default = "default_trials")]
    pub descent_trials: usize,
    #[serde(default = "default_ensemble")]
    pub ensemble_seeds: usize,
    #[serde(default = "default_basin_runs")]
    pub basin_runs: usize,
    #[serde(default = "default_final_seeds")]
    pub final_seeds: usize,
    #[serde(default = "default_noise_draws")]
    pub noise_draws: usize,
}

fn default_trials() -> usize {
    10_000
}
fn default_ensemble() -> usize {
    200
}
fn default_basin_runs() -> usize {
    400
}
fn default_final_seeds() -> usize {
    100
}
fn default_noise_draws() -> usize {
    100_000
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            descent_trials: default_trials(),
            ensemble_seeds: default_ensemble(),
            basin_runs: default_basin_runs(),
            final_seeds: default_final_seeds(),
            noise_draws: default_noise_draws(),
        }
    }
}

/// `E|v|²` of the perturbation plus, for the quadratic model, the additive
/// data noise of a minibatch. State-dependent logistic data noise is not
/// included.
pub fn nominal_noise_variance(model: &ModelSpec, oracle: &OracleSpec) -> f64 {
    let dim = match model {
        ModelSpec::Quadratic(q) => q.curvature.len(),
        ModelSpec::TwoLayerLogistic(_) => 2,
    } as f64;
    let v2 = oracle.perturbation_std * oracle.perturbation_std;
    let perturbation = match oracle.kind {
        OracleKind::PerturbedExact | OracleKind::PerturbedStochastic => dim * v2,
        OracleKind::TargetedStochastic => v2,
        OracleKind::Exact | OracleKind::Stochastic => 0.0,
    };
    let data = match model {
        ModelSpec::Quadratic(q) if oracle.kind.is_stochastic() => {
            dim * q.data_noise_std * q.data_noise_std / oracle.minibatch.max(1) as f64
        }
        _ => 0.0,
    };
    perturbation + data
}

/// The validated pieces of a config.
pub struct Experiment {
    pub model: CostModel,
    pub oracle: GradientOracle,
    pub w0: Vector,
    pub params: ClassifierParams,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn classifier_params(&self, model: &CostModel) -> Result<ClassifierParams> {
        let c = &self.classifier;
        ClassifierParams::new(
            self.run.step_size,
            c.tau,
            c.pi,
            c.delta.unwrap_or(model.smoothness().lipschitz_grad),
            c.beta,
            c.sigma_sq
                .unwrap_or_else(|| nominal_noise_variance(&self.model, &self.oracle)),
        )
    }

    pub fn build(&self) -> Result<Experiment> {
        self.run.validate()?;
        let model = CostModel::from_spec(&self.model)?;
        let oracle = GradientOracle::new(self.oracle.clone())?;
        check_dim(model.dimension(), self.w0.len())?;
        if let Some(d) = oracle.direction() {
            check_dim(model.dimension(), d.len())?;
        }
        let params = self.classifier_params(&model)?;
        Ok(Experiment {
            w0: Vector::from_vec(self.w0.clone()),
            model,
            oracle,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"{
        "model": {"kind": "two_layer_logistic", "reg": 0.1},
        "oracle": {"kind": "targeted_stochastic", "perturbation_std": 1.0, "direction": [1.0, 1.0]},
        "run": {"step_size": 0.01, "horizon": 100, "seed": 1},
        "w0": [-0.5, 0.5]
    }"#;

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::from_json(FIG1).unwrap();
        let again = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
        let e = c.build().unwrap();
        assert_eq!(e.params.sigma_sq, 1.0);
        assert!((e.params.delta - e.model.smoothness().lipschitz_grad).abs() == 0.0);
    }

    #[test]
    fn unknown_key_reports_path() {
        let bad = FIG1.replace("\"seed\": 1", "\"seed\": 1, \"sede\": 2");
        match ExperimentConfig::from_json(&bad) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "run.sede");
                assert!(message.contains("sede"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = FIG1.replace("\"reg\": 0.1", "\"rgg\": 0.1");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn nominal_variances() {
        let q = ModelSpec::Quadratic(
            crate::problems::QuadraticSaddleSpec::new(vec![1.0, -1.0]).with_data_noise(0.5),
        );
        assert_eq!(
            nominal_noise_variance(&q, &OracleSpec::perturbed_exact(1.0)),
            2.0
        );
        assert_eq!(
            nominal_noise_variance(&q, &OracleSpec::perturbed_stochastic(1.0)),
            2.5
        );
        assert_eq!(nominal_noise_variance(&q, &OracleSpec::exact()), 0.0);
    }
}
