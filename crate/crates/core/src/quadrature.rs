//! Numerical integration backends: tensor-product Gauss-Legendre rules and
//! seeded Monte Carlo sampling over box domains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("node budget exceeded: {requested} nodes > cap {cap}")]
    BudgetExceeded { requested: usize, cap: usize },
}

/// Axis-aligned box domain, one `[a, b]` interval per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Box {
    pub intervals: Vec<(f64, f64)>,
}

impl Box {
    pub fn new(intervals: Vec<(f64, f64)>) -> Self {
        for &(a, b) in &intervals {
            assert!(a < b, "degenerate interval [{a}, {b}]");
        }
        Self { intervals }
    }

    /// The cube `[a, b]^d`.
    pub fn cube(a: f64, b: f64, d: usize) -> Self {
        Self::new(vec![(a, b); d])
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn volume(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).product()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.intervals.iter().map(|(a, b)| b - a).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.intervals)
                .all(|(xi, (a, b))| *xi >= *a && *xi <= *b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleKind {
    GaussTensor { points_per_dim: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

/// Node/weight set over a box domain. Weights sum to the box volume.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub kind: RuleKind,
    pub domain: Box,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// Gauss-Legendre nodes and weights on `[a, b]`, exact for polynomials of
/// degree `<= 2n - 1`. Nodes found by Newton iteration on `P_n`.
pub fn gauss_legendre_1d(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-based initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [a, b]; reverse index so nodes come out ascending
        nodes[n - 1 - i] = 0.5 * (b - a) * x + 0.5 * (a + b);
        weights[n - 1 - i] = 0.5 * (b - a) * w;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

pub const DEFAULT_NODE_CAP: usize = 10_000_000;

/// Tensor-product Gauss rule with `n` points per dimension.
pub fn tensor_gauss(domain: &Box, n: usize) -> Result<QuadratureRule, QuadratureError> {
    tensor_gauss_capped(domain, n, DEFAULT_NODE_CAP)
}

pub fn tensor_gauss_capped(
    domain: &Box,
    n: usize,
    cap: usize,
) -> Result<QuadratureRule, QuadratureError> {
    let d = domain.dim();
    let total = n.checked_pow(d as u32).unwrap_or(usize::MAX);
    if total > cap {
        return Err(QuadratureError::BudgetExceeded {
            requested: total,
            cap,
        });
    }
    let per_dim: Vec<(Vec<f64>, Vec<f64>)> = domain
        .intervals
        .iter()
        .map(|&(a, b)| gauss_legendre_1d(n, a, b))
        .collect();

    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    loop {
        let mut x = Vec::with_capacity(d);
        let mut w = 1.0;
        for (j, &i) in idx.iter().enumerate() {
            x.push(per_dim[j].0[i]);
            w *= per_dim[j].1[i];
        }
        nodes.push(x);
        weights.push(w);
        // odometer increment
        let mut j = d;
        loop {
            if j == 0 {
                return Ok(QuadratureRule {
                    nodes,
                    weights,
                    kind: RuleKind::GaussTensor { points_per_dim: n },
                    domain: domain.clone(),
                });
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < n {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// I.i.d. uniform Monte Carlo nodes, each weight `volume / N`.
/// Deterministic per seed, independent of thread count.
pub fn monte_carlo(domain: &Box, n: usize, seed: u64) -> QuadratureRule {
    assert!(n >= 1);
    let _d = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = domain
            .intervals
            .iter()
            .map(|&(a, b)| rng.gen_range(a..b))
            .collect();
        nodes.push(x);
    }
    let w = domain.volume() / n as f64;
    QuadratureRule {
        nodes,
        weights: vec![w; n],
        kind: RuleKind::MonteCarlo { samples: n, seed },
        domain: domain.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_n1_is_midpoint() {
        let (x, w) = gauss_legendre_1d(1, -1.0, 1.0);
        assert!(x[0].abs() < 1e-15);
        assert!((w[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_n2_closed_form() {
        let (x, w) = gauss_legendre_1d(2, -1.0, 1.0);
        let r = 1.0 / 3.0_f64.sqrt();
        assert!((x[0] + r).abs() < 1e-14);
        assert!((x[1] - r).abs() < 1e-14);
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_integrates_quartic() {
        // oracle: analytic antiderivative of x^4 over [-1, 1] is 2/5
        let (x, w) = gauss_legendre_1d(3, -1.0, 1.0);
        let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((got - 0.4).abs() < 1e-14);
    }

    #[test]
    fn gauss_monomial_exactness() {
        for n in 1..=10 {
            let (x, w) = gauss_legendre_1d(n, -1.0, 1.0);
            for k in 0..=(2 * n - 1) {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let want = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
                assert!((got - want).abs() < 1e-13, "n={n} k={k} got={got}");
            }
        }
    }

    #[test]
    fn tensor_single_node() {
        let domain = Box::cube(-1.0, 1.0, 2);
        let rule = tensor_gauss(&domain, 1).unwrap();
        assert_eq!(rule.len(), 1);
        assert!(rule.nodes[0][0].abs() < 1e-15 && rule.nodes[0][1].abs() < 1e-15);
        assert!((rule.weights[0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn tensor_weights_sum_to_volume() {
        let domain = Box::new(vec![(-0.5, 0.5), (0.0, 2.0), (-1.0, 3.0)]);
        let rule = tensor_gauss(&domain, 4).unwrap();
        let sum: f64 = rule.weights.iter().sum();
        assert!((sum - domain.volume()).abs() < 1e-12 * domain.volume());
    }

    #[test]
    fn tensor_separable_integral() {
        // analytic: integral of cos^2(pi x) cos^2(pi y) over [-0.5, 0.5]^2 = 1/4
        let domain = Box::cube(-0.5, 0.5, 2);
        let rule = tensor_gauss(&domain, 12).unwrap();
        let pi = std::f64::consts::PI;
        let got = rule.integrate(|x| (pi * x[0]).cos().powi(2) * (pi * x[1]).cos().powi(2));
        assert!((got - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tensor_budget_exceeded() {
        let domain = Box::cube(0.0, 1.0, 3);
        assert!(matches!(
            tensor_gauss_capped(&domain, 100, 1000),
            Err(QuadratureError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn mc_weights_sum_to_volume() {
        let domain = Box::cube(-0.5, 0.5, 3);
        let rule = monte_carlo(&domain, 1000, 1);
        let sum: f64 = rule.weights.iter().sum();
        assert!((sum - domain.volume()).abs() < 1e-12);
        assert!((rule.integrate(|_| 1.0) - domain.volume()).abs() < 1e-12);
        assert!(rule.nodes.iter().all(|x| domain.contains(x)));
    }

    #[test]
    fn mc_deterministic_per_seed() {
        let domain = Box::cube(-1.0, 1.0, 2);
        let a = monte_carlo(&domain, 100, 42);
        let b = monte_carlo(&domain, 100, 42);
        assert_eq!(a.nodes, b.nodes);
    }

    #[test]
    fn mc_high_dim_estimate_within_three_sigma() {
        // analytic: integral of prod cos^2(pi x_i) over [-0.5, 0.5]^10 = 2^-10
        let d = 10;
        let domain = Box::cube(-0.5, 0.5, d);
        let n = 1_000_000;
        let rule = monte_carlo(&domain, n, 7);
        let pi = std::f64::consts::PI;
        let f = |x: &[f64]| x.iter().map(|xi| (pi * xi).cos().powi(2)).product::<f64>();
        let est = rule.integrate(f);
        // MC standard error oracle
        let mean = est / domain.volume();
        let var: f64 = rule
            .nodes
            .iter()
            .map(|x| (f(x) - mean).powi(2))
            .sum::<f64>()
            / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt() * domain.volume();
        let want = 2.0_f64.powi(-(d as i32));
        assert!(
            (est - want).abs() <= 3.0 * se,
            "est {est} want {want} se {se}"
        );
    }

    #[test]
    fn mc_convergence_rate() {
        let domain = Box::cube(-0.5, 0.5, 2);
        let pi = std::f64::consts::PI;
        let f = |x: &[f64]| (pi * x[0]).cos().powi(2) * (pi * x[1]).cos().powi(2);
        let want = 0.25;
        // average log-error over a few seeds per N, then log-log slope
        let ns = [1000usize, 10_000, 100_000, 1_000_000];
        let mut pts = Vec::new();
        for (i, &n) in ns.iter().enumerate() {
            let mut log_err_sum = 0.0;
            let seeds = 5;
            for s in 0..seeds {
                let rule = monte_carlo(&domain, n, 100 + s + i as u64 * 17);
                let err = (rule.integrate(f) - want).abs().max(1e-300);
                log_err_sum += err.ln();
            }
            pts.push(((n as f64).ln(), log_err_sum / seeds as f64));
        }
        let slope = fit_slope(&pts);
        assert!(
            (slope + 0.5).abs() < 0.15,
            "observed MC rate slope {slope}"
        );
    }

    fn fit_slope(pts: &[(f64, f64)]) -> f64 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }
}
