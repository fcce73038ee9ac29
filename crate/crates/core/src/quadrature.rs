//! Gauss–Hermite rules for expectations over a normal law.

use std::f64::consts::PI;

/// Nodes and weights for `∫ e^{-x²} f(x) dx ≈ Σ w_k f(x_k)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds the `order`-point rule by Newton iteration on the normalized
    /// Hermite recurrence.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let pim4 = PI.powf(-0.25);
        let half = n.div_ceil(2);
        let mut z = 0.0_f64;
        for i in 0..half {
            // Initial guesses for the largest roots first.
            z = match i {
                0 => {
                    let nf = (2 * n + 1) as f64;
                    nf.sqrt() - 1.85575 * nf.powf(-0.16667)
                }
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z1.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        if n % 2 == 1 {
            nodes[half - 1] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E f(X)` for `X ~ N(mean, std²)`.
    pub fn expect_normal(&self, mean: f64, std: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let scale = std * std::f64::consts::SQRT_2;
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mean + scale * x);
        }
        acc / PI.sqrt()
    }

    /// Standard-normal abscissae `√2·x_k` and probability weights `w_k/√π`.
    pub fn normal_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let norm = PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (std::f64::consts::SQRT_2 * x, w / norm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for n in [1, 2, 5, 8, 33, 64, 128] {
            let rule = GaussHermite::new(n);
            let s: f64 = rule.weights().iter().sum();
            assert!((s - PI.sqrt()).abs() < 1e-12, "n={n} sum={s}");
        }
    }

    #[test]
    fn normal_moments_are_exact() {
        let rule = GaussHermite::new(16);
        assert!((rule.expect_normal(0.0, 1.0, |x| x * x) - 1.0).abs() < 1e-13);
        assert!((rule.expect_normal(0.0, 1.0, |x| x.powi(4)) - 3.0).abs() < 1e-12);
        assert!((rule.expect_normal(0.0, 1.0, |x| x.powi(6)) - 15.0).abs() < 1e-11);
        // E[(1 + 2Z)^2] = 1 + 4
        assert!((rule.expect_normal(1.0, 2.0, |x| x * x) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn nodes_are_symmetric_and_sorted() {
        let rule = GaussHermite::new(64);
        let x = rule.nodes();
        for i in 0..x.len() {
            assert!((x[i] + x[x.len() - 1 - i]).abs() < 1e-13);
        }
        assert!(x.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn smooth_expectation_converges() {
        // E cos(Z) = e^{-1/2}
        let rule = GaussHermite::new(32);
        let v = rule.expect_normal(0.0, 1.0, f64::cos);
        assert!((v - (-0.5f64).exp()).abs() < 1e-14);
    }
}
