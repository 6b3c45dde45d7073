//! Gauss–Legendre rules and the tensor-product rule on the unit disc.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Newton on P_n from the Tricomi-type initial guess.
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor rule on the unit disc: Gauss–Legendre in `r` (weight `r` folded
/// into the weights) times the periodic trapezoid rule in `theta`.
#[derive(Debug, Clone)]
pub struct DiscQuadrature {
    /// `(r, w_r)` with `w_r` already multiplied by `r`.
    pub radial: Vec<(f64, f64)>,
    /// `(theta, w_theta)`.
    pub angular: Vec<(f64, f64)>,
}

impl DiscQuadrature {
    pub const DEFAULT_RADIAL: usize = 64;
    pub const DEFAULT_ANGULAR: usize = 256;

    pub fn new(n_radial: usize, n_angular: usize) -> Self {
        let gl = GaussLegendre::new(n_radial);
        let radial = gl.on_interval(0.0, 1.0).map(|(r, w)| (r, w * r)).collect();
        Self {
            radial,
            angular: periodic_trapezoid(n_angular),
        }
    }

    /// `∫∫ f(r, θ) r dr dθ` over the unit disc.
    pub fn integrate<F: FnMut(f64, f64) -> f64>(&self, mut f: F) -> f64 {
        let mut total = 0.0;
        for &(theta, wt) in &self.angular {
            let mut ring = 0.0;
            for &(r, wr) in &self.radial {
                ring += wr * f(r, theta);
            }
            total += wt * ring;
        }
        total
    }
}

impl Default for DiscQuadrature {
    fn default() -> Self {
        Self::new(Self::DEFAULT_RADIAL, Self::DEFAULT_ANGULAR)
    }
}

/// Equispaced nodes on `[0, 2π)` with equal weights `2π/n`.
pub fn periodic_trapezoid(n: usize) -> Vec<(f64, f64)> {
    let h = 2.0 * PI / n as f64;
    (0..n).map(|j| (j as f64 * h, h)).collect()
}
