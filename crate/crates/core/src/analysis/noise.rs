//! Empirical checks of the gradient-noise assumptions: covariance, the
//! relative fourth-moment bound, and Hölder continuity of the covariance.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracles::GradientOracle;
use crate::problems::{sym_norm, CostModel, Matrix, Vector};
use crate::stats;

/// `R̂_s(w) = (1/n) Σ s sᵀ` from `n >= 1000` fresh draws at fixed `w`.
pub fn estimate_noise_covariance<R: Rng + ?Sized>(
    oracle: &GradientOracle,
    model: &CostModel,
    w: &Vector,
    n: usize,
    rng: &mut R,
) -> Result<Matrix> {
    if n < 1000 {
        return Err(Error::invalid(
            "n",
            "covariance estimate needs at least 1000 draws",
        ));
    }
    Ok(covariance_with_spread(oracle, model, w, n, rng)?.0)
}

/// Second-moment matrix and the Frobenius standard error of its entries.
fn covariance_with_spread<R: Rng + ?Sized>(
    oracle: &GradientOracle,
    model: &CostModel,
    w: &Vector,
    n: usize,
    rng: &mut R,
) -> Result<(Matrix, f64)> {
    let dim = model.dimension();
    let mut sum = Matrix::zeros(dim, dim);
    let mut sum_sq = Matrix::zeros(dim, dim);
    let g = model.grad(w)?;
    for _ in 0..n {
        let s = oracle.estimate(model, w, rng)?.noise(&g);
        let outer = &s * s.transpose();
        sum_sq += outer.component_mul(&outer);
        sum += outer;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean.component_mul(&mean)).map(|v| v.max(0.0));
    let se = (var.sum() / nf).sqrt();
    Ok((mean, se))
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentPoint {
    pub w: Vec<f64>,
    pub grad_norm_sq: f64,
    /// `E|s|²` at `w`.
    pub second_moment: f64,
    /// `E|s|⁴` at `w`.
    pub fourth_moment: f64,
}

/// One-sided fit of `E|s|⁴ <= β⁴|∇J|⁴ + σ⁴`.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseMomentFit {
    pub beta4_hat: f64,
    pub sigma4_hat: f64,
    pub points: Vec<MomentPoint>,
    /// `β⁴|∇J|⁴ + σ⁴ − E|s|⁴` per point (nonnegative).
    pub residuals: Vec<f64>,
    /// Whether `E|s|² <= β²|∇J|² + σ²` holds at every point with
    /// `β² = √β⁴`, `σ² = √σ⁴`.
    pub second_moment_bound_holds: bool,
}

impl NoiseMomentFit {
    pub fn beta_sq(&self) -> f64 {
        self.beta4_hat.sqrt()
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma4_hat.sqrt()
    }

    pub fn bound(&self, grad_norm_sq: f64) -> f64 {
        self.beta4_hat * grad_norm_sq * grad_norm_sq + self.sigma4_hat
    }
}

/// Minimizes `Σ (a x_k + b − y_k)²` subject to `a x_k + b >= y_k`, `a, b >= 0`.
///
/// The objective is a convex quadratic in two variables, so the optimum is
/// the unconstrained minimizer, the minimizer along one active constraint
/// line, or a vertex where two constraints are active; all three candidate
/// families are enumerated.
pub fn fit_dominating_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let scale = y.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let feasible = |a: f64, b: f64| {
        a >= 0.0
            && b >= 0.0
            && x.iter()
                .zip(y)
                .all(|(xi, yi)| a * xi + b >= yi - 1e-12 * scale)
    };
    let objective = |a: f64, b: f64| {
        x.iter()
            .zip(y)
            .map(|(xi, yi)| (a * xi + b - yi).powi(2))
            .sum::<f64>()
    };

    // Constraint lines a·p + b·q = r: data points (p = x_k, q = 1, r = y_k)
    // and the two axes.
    let mut lines: Vec<(f64, f64, f64)> = x.iter().zip(y).map(|(&xi, &yi)| (xi, 1.0, yi)).collect();
    lines.push((1.0, 0.0, 0.0));
    lines.push((0.0, 1.0, 0.0));

    let mut cands: Vec<(f64, f64)> = vec![(0.0, y.iter().copied().fold(0.0, f64::max))];
    if let Some((b, a)) = stats::ols(x, y) {
        cands.push((a, b));
    }
    let n = x.len() as f64;
    cands.push((0.0, y.iter().sum::<f64>() / n.max(1.0)));
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx > 0.0 {
        cands.push((x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx, 0.0));
    }
    for (k, (&xk, &yk)) in x.iter().zip(y).enumerate() {
        // b = y_k − a x_k; minimize over a.
        let (mut num, mut den) = (0.0, 0.0);
        for (l, (&xl, &yl)) in x.iter().zip(y).enumerate() {
            if l != k {
                num += (xl - xk) * (yk - yl);
                den += (xl - xk) * (xl - xk);
            }
        }
        if den > 0.0 {
            let a = -num / den;
            cands.push((a, yk - a * xk));
        }
    }
    for i in 0..lines.len() {
        for j in (i + 1)..lines.len() {
            let (p1, q1, r1) = lines[i];
            let (p2, q2, r2) = lines[j];
            let det = p1 * q2 - p2 * q1;
            if det.abs() > 1e-300 {
                cands.push(((r1 * q2 - r2 * q1) / det, (p1 * r2 - p2 * r1) / det));
            }
        }
    }
    cands
        .into_iter()
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.max(0.0), b.max(0.0)))
        .filter(|(a, b)| feasible(*a, *b))
        .min_by(|p, q| objective(p.0, p.1).total_cmp(&objective(q.0, q.1)))
        .map(|(a, b)| {
            // Lift b so the bound dominates exactly despite rounding.
            let lift = x
                .iter()
                .zip(y)
                .map(|(xi, yi)| yi - (a * xi + b))
                .fold(0.0, f64::max);
            (a, b + lift)
        })
        .expect("(0, max y) is always feasible")
}

/// Fits `(β⁴, σ⁴)` from `n_per_point >= 10⁴` draws at each probe point.
pub fn fit_noise_moments<R: Rng + ?Sized>(
    oracle: &GradientOracle,
    model: &CostModel,
    probe_points: &[Vector],
    n_per_point: usize,
    rng: &mut R,
) -> Result<NoiseMomentFit> {
    if probe_points.is_empty() {
        return Err(Error::invalid(
            "probe_points",
            "need at least one probe point",
        ));
    }
    if n_per_point < 10_000 {
        return Err(Error::invalid(
            "n_per_point",
            "need at least 10⁴ draws per point",
        ));
    }
    let mut points = Vec::with_capacity(probe_points.len());
    for w in probe_points {
        let g = model.grad(w)?;
        let (mut m2, mut m4) = (0.0, 0.0);
        for _ in 0..n_per_point {
            let s2 = oracle.estimate(model, w, rng)?.noise(&g).norm_squared();
            m2 += s2;
            m4 += s2 * s2;
        }
        let nf = n_per_point as f64;
        points.push(MomentPoint {
            w: w.iter().copied().collect(),
            grad_norm_sq: g.norm_squared(),
            second_moment: m2 / nf,
            fourth_moment: m4 / nf,
        });
    }
    let x: Vec<f64> = points
        .iter()
        .map(|p| p.grad_norm_sq * p.grad_norm_sq)
        .collect();
    let y: Vec<f64> = points.iter().map(|p| p.fourth_moment).collect();
    let (beta4_hat, sigma4_hat) = fit_dominating_line(&x, &y);
    let residuals: Vec<f64> = x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| beta4_hat * xi + sigma4_hat - yi)
        .collect();
    let (b2, s2) = (beta4_hat.sqrt(), sigma4_hat.sqrt());
    let second_moment_bound_holds = points
        .iter()
        .all(|p| p.second_moment <= (b2 * p.grad_norm_sq + s2) * (1.0 + 1e-12));
    Ok(NoiseMomentFit {
        beta4_hat,
        sigma4_hat,
        points,
        residuals,
        second_moment_bound_holds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceProbeStatus {
    /// No pair shows a covariance difference above its sampling noise.
    ConstantCovariance,
    Fitted,
    /// Too few significant pairs, or an exponent outside `(0, 4]`.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairDiagnostic {
    pub distance: f64,
    pub difference: f64,
    pub stderr: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceLipschitzProbe {
    pub status: CovarianceProbeStatus,
    pub beta_r_hat: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub pairs: Vec<PairDiagnostic>,
}

/// Probes `|R_s(x) − R_s(y)| <= β_R |x − y|^γ` by a log-log regression over
/// pairs whose differences exceed three standard errors. `β_R` is the
/// smallest constant making the fitted power law dominate every pair.
pub fn covariance_lipschitz_probe<R: Rng + ?Sized>(
    oracle: &GradientOracle,
    model: &CostModel,
    point_pairs: &[(Vector, Vector)],
    n: usize,
    rng: &mut R,
) -> Result<CovarianceLipschitzProbe> {
    if n < 1000 {
        return Err(Error::invalid(
            "n",
            "covariance estimate needs at least 1000 draws",
        ));
    }
    let dists: Vec<f64> = point_pairs.iter().map(|(x, y)| (x - y).norm()).collect();
    let (lo, hi) = dists.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| {
        (lo.min(*d), hi.max(*d))
    });
    if point_pairs.len() < 2 || !(lo > 0.0) || hi / lo < 100.0 - 1e-9 {
        return Err(Error::invalid(
            "point_pairs",
            "need distinct pairs whose distances span at least two decades",
        ));
    }
    let mut pairs = Vec::with_capacity(point_pairs.len());
    for ((x, y), distance) in point_pairs.iter().zip(dists) {
        let (rx, sx) = covariance_with_spread(oracle, model, x, n, rng)?;
        let (ry, sy) = covariance_with_spread(oracle, model, y, n, rng)?;
        let difference = sym_norm(&(rx - ry));
        let stderr = sx.hypot(sy);
        pairs.push(PairDiagnostic {
            distance,
            difference,
            stderr,
            significant: difference > 3.0 * stderr,
        });
    }
    let sig: Vec<&PairDiagnostic> = pairs.iter().filter(|p| p.significant).collect();
    if sig.is_empty() {
        return Ok(CovarianceLipschitzProbe {
            status: CovarianceProbeStatus::ConstantCovariance,
            beta_r_hat: None,
            gamma_hat: None,
            pairs,
        });
    }
    let xs: Vec<f64> = sig.iter().map(|p| p.distance).collect();
    let ys: Vec<f64> = sig.iter().map(|p| p.difference).collect();
    let gamma = stats::log_log_slope(&xs, &ys).filter(|g| *g > 0.0 && *g <= 4.0);
    let Some(gamma) = gamma else {
        return Ok(CovarianceLipschitzProbe {
            status: CovarianceProbeStatus::Inconclusive,
            beta_r_hat: None,
            gamma_hat: None,
            pairs,
        });
    };
    let beta_r = pairs
        .iter()
        .map(|p| p.difference / p.distance.powf(gamma))
        .fold(0.0, f64::max);
    Ok(CovarianceLipschitzProbe {
        status: CovarianceProbeStatus::Fitted,
        beta_r_hat: Some(beta_r),
        gamma_hat: Some(gamma),
        pairs,
    })
}
