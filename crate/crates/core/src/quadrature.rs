//! Gauss-Hermite rules for expectations over a standard Gaussian.

use std::f64::consts::PI;

/// Nodes and weights for `E f(J)`, `J ~ N(0, 1)`: weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl GaussHermite {
    /// Roots of the physicists' Hermite polynomial `H_n` by Newton iteration
    /// from asymptotic starting guesses, rescaled to the standard normal.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let pim4 = PI.powf(-0.25);
        let mut x_phys = vec![0.0; n];
        let mut w_phys = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x_phys[0],
                3 => 1.91 * z - 0.91 * x_phys[1],
                _ => 2.0 * z - x_phys[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x_phys[i] = z;
            x_phys[n - 1 - i] = -z;
            w_phys[i] = 2.0 / (pp * pp);
            w_phys[n - 1 - i] = w_phys[i];
        }
        if n % 2 == 1 {
            x_phys[n / 2] = 0.0;
        }
        let sqrt_pi = PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = x_phys
            .iter()
            .zip(&w_phys)
            .map(|(x, w)| (x * std::f64::consts::SQRT_2, w / sqrt_pi))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        GaussHermite {
            nodes,
            weights,
            log_weights,
        }
    }

    /// Drops nodes whose weight is below `threshold`; the rest are
    /// renormalized to sum to one.
    pub fn pruned(&self, threshold: f64) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.weights[i] >= threshold)
            .collect();
        let total: f64 = keep.iter().map(|&i| self.weights[i]).sum();
        let nodes = keep.iter().map(|&i| self.nodes[i]).collect();
        let weights: Vec<f64> = keep.iter().map(|&i| self.weights[i] / total).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        GaussHermite {
            nodes,
            weights,
            log_weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn max_node(&self) -> f64 {
        self.nodes.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_rule() {
        let gh = GaussHermite::new(3);
        let s3 = 3f64.sqrt();
        assert!((gh.nodes()[0] + s3).abs() < 1e-14);
        assert!(gh.nodes()[1].abs() < 1e-15);
        assert!((gh.weights()[0] - 1.0 / 6.0).abs() < 1e-14);
        assert!((gh.weights()[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_moments() {
        for n in [1, 2, 5, 16, 32, 64] {
            let gh = GaussHermite::new(n);
            assert!((gh.weights().iter().sum::<f64>() - 1.0).abs() < 1e-13, "n={n}");
            // E J^(2m) = (2m-1)!! exact for 2m <= 2n-1
            let mut dfact = 1.0;
            for m in 1..n.min(8) {
                dfact *= (2 * m - 1) as f64;
                let v = gh.expect(|x| x.powi(2 * m as i32));
                assert!((v - dfact).abs() < 1e-10 * dfact, "n={n} m={m} {v}");
            }
        }
    }

    #[test]
    fn mgf_and_cosh() {
        let gh = GaussHermite::new(32);
        for t in [0.1, 0.5, 1.0, 2.0] {
            let v = gh.expect(|x| (t * x).exp());
            assert!((v - (t * t / 2.0).exp()).abs() < 1e-12 * v);
            let c = gh.expect(|x| (t * x).cosh());
            assert!((c - (t * t / 2.0).exp()).abs() < 1e-12 * c);
        }
    }

    #[test]
    fn pruning_keeps_mass() {
        let gh = GaussHermite::new(32).pruned(1e-16);
        assert!(gh.len() < 32);
        assert!((gh.expect(|x| x * x) - 1.0).abs() < 1e-12);
    }
}
