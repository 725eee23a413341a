//! Problem library: domains, coefficients, metrics, initial conditions,
//! exact solutions, and default restart schedules for every shipped example.

use crate::basis::FieldSampler;
use crate::fft;
use crate::quadrature::Box;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem: {0}")]
    UnknownProblem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    L2,
    Hminus1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Potential {
    None,
    DoubleWell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    DirichletBox,
    Periodic,
}

/// Initial condition variants; all are deterministic (per seed where drawn)
/// and evaluable with analytic first and second derivatives.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    /// `prod_i cos(pi x_i)`
    ProductCosine { dim: usize },
    /// `x^2 cos(pi x)`
    X2CosPiX,
    /// max of two tanh bubble profiles
    TwoBubbles { radius: f64, interface: f64 },
    /// star-shaped interface in polar coordinates
    Star {
        r0: f64,
        delta: f64,
        lobes: usize,
        interface: f64,
    },
    /// uniform noise projected onto a truncated 2D Fourier basis
    RandomProjected {
        seed: u64,
        mode_cutoff: usize,
        grid: usize,
        period: f64,
    },
    /// `cos(pi x)` on a period-2 domain
    Cosine1d,
}

impl InitialCondition {
    pub fn sampler(&self) -> Arc<dyn FieldSampler> {
        match self {
            InitialCondition::ProductCosine { dim } => Arc::new(ProductCosine { dim: *dim }),
            InitialCondition::X2CosPiX => Arc::new(X2CosPiX),
            InitialCondition::TwoBubbles { radius, interface } => Arc::new(TwoBubbles {
                radius: *radius,
                interface: *interface,
            }),
            InitialCondition::Star {
                r0,
                delta,
                lobes,
                interface,
            } => Arc::new(Star {
                r0: *r0,
                delta: *delta,
                lobes: *lobes,
                interface: *interface,
            }),
            InitialCondition::RandomProjected {
                seed,
                mode_cutoff,
                grid,
                period,
            } => Arc::new(RandomProjectedField::new(*seed, *mode_cutoff, *grid, *period)),
            InitialCondition::Cosine1d => Arc::new(Cosine1d),
        }
    }
}

/// Exact heat solution `e^{-t} prod cos(pi x_i)`.
pub fn heat_exact(x: &[f64], t: f64) -> f64 {
    let pi = std::f64::consts::PI;
    (-t).exp() * x.iter().map(|&xi| (pi * xi).cos()).product::<f64>()
}

#[derive(Debug, Clone)]
pub enum ExactSolution {
    Heat,
}

impl ExactSolution {
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            ExactSolution::Heat => heat_exact(x, t),
        }
    }
}

/// Full description of one gradient-flow problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub spatial_dim: usize,
    pub domain: Box,
    pub metric: Metric,
    pub epsilon: f64,
    pub kappa: f64,
    /// Diffusion coefficient for the linear heat flow (`1/(d pi^2)`).
    pub diffusion_scale: f64,
    pub potential: Potential,
    pub bc: BoundaryCondition,
    pub ic: InitialCondition,
    pub horizon: f64,
    pub exact: Option<ExactSolution>,
}

impl ProblemSpec {
    pub fn is_heat(&self) -> bool {
        self.potential == Potential::None
    }

    /// Restart schedule matching the shipped configuration of each example.
    pub fn default_schedule(&self) -> Vec<f64> {
        let uniform = |k: usize, t_end: f64| -> Vec<f64> {
            (0..=k).map(|i| t_end * i as f64 / k as f64).collect()
        };
        match self.name.as_str() {
            "ac_1d" => uniform(5, self.horizon),
            "ac_2d_bubbles" | "ac_2d_random" => uniform(10, self.horizon),
            "ac_2d_star" => uniform(10, self.horizon),
            "ch_1d" => {
                let base = [0.0, 0.005, 0.01, 0.015, 0.04, 0.08, 0.12, 0.16, 0.2];
                let scale = self.horizon / 0.2;
                base.iter().map(|t| t * scale).collect()
            }
            _ => vec![0.0, self.horizon],
        }
    }
}

/// Build a problem from its name with shipped defaults. Heat problems accept
/// any dimension through the `heat_<d>d` naming convention.
pub fn make_problem(name: &str) -> Result<ProblemSpec, ProblemError> {
    if let Some(rest) = name.strip_prefix("heat_") {
        if let Some(ds) = rest.strip_suffix('d') {
            if let Ok(d) = ds.parse::<usize>() {
                if d >= 1 {
                    return Ok(heat_problem(d));
                }
            }
        }
    }
    match name {
        "ac_1d" => Ok(ProblemSpec {
            name: name.into(),
            spatial_dim: 1,
            domain: Box::cube(-1.0, 1.0, 1),
            metric: Metric::L2,
            epsilon: 0.01,
            kappa: 5.0,
            diffusion_scale: 0.0,
            potential: Potential::DoubleWell,
            bc: BoundaryCondition::Periodic,
            ic: InitialCondition::X2CosPiX,
            horizon: 1.0,
            exact: None,
        }),
        "ac_2d_bubbles" => Ok(ac_2d(name, InitialCondition::TwoBubbles {
            radius: 0.15,
            interface: 0.05,
        }, 1.0)),
        "ac_2d_star" => Ok(ac_2d(
            name,
            InitialCondition::Star {
                r0: 0.25,
                delta: 0.05,
                lobes: 5,
                interface: 0.05,
            },
            5.0,
        )),
        "ac_2d_random" => Ok(ac_2d(
            name,
            InitialCondition::RandomProjected {
                seed: 0,
                mode_cutoff: 16,
                grid: 128,
                period: 1.0,
            },
            1.0,
        )),
        "ch_1d" => Ok(ProblemSpec {
            name: name.into(),
            spatial_dim: 1,
            domain: Box::cube(-1.0, 1.0, 1),
            metric: Metric::Hminus1,
            epsilon: 0.1,
            kappa: 1.0,
            diffusion_scale: 0.0,
            potential: Potential::DoubleWell,
            bc: BoundaryCondition::Periodic,
            ic: InitialCondition::Cosine1d,
            horizon: 0.2,
            exact: None,
        }),
        other => Err(ProblemError::UnknownProblem(other.into())),
    }
}

fn heat_problem(d: usize) -> ProblemSpec {
    ProblemSpec {
        name: format!("heat_{d}d"),
        spatial_dim: d,
        domain: Box::cube(-0.5, 0.5, d),
        metric: Metric::L2,
        epsilon: 0.0,
        kappa: 0.0,
        diffusion_scale: 1.0 / (d as f64 * std::f64::consts::PI.powi(2)),
        potential: Potential::None,
        bc: BoundaryCondition::DirichletBox,
        ic: InitialCondition::ProductCosine { dim: d },
        horizon: 1.0,
        exact: Some(ExactSolution::Heat),
    }
}

fn ac_2d(name: &str, ic: InitialCondition, horizon: f64) -> ProblemSpec {
    ProblemSpec {
        name: name.into(),
        spatial_dim: 2,
        domain: Box::cube(-0.5, 0.5, 2),
        metric: Metric::L2,
        epsilon: 0.05,
        kappa: 5.0,
        diffusion_scale: 0.0,
        potential: Potential::DoubleWell,
        bc: BoundaryCondition::Periodic,
        ic,
        horizon,
        exact: None,
    }
}

// --- initial condition samplers ---------------------------------------------

struct ProductCosine {
    dim: usize,
}

impl FieldSampler for ProductCosine {
    fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let pi = std::f64::consts::PI;
        x.iter().map(|&xi| (pi * xi).cos()).product()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let pi = std::f64::consts::PI;
        let cosv: Vec<f64> = x.iter().map(|&xi| (pi * xi).cos()).collect();
        (0..x.len())
            .map(|k| {
                let mut g = -pi * (pi * x[k]).sin();
                for (j, c) in cosv.iter().enumerate() {
                    if j != k {
                        g *= c;
                    }
                }
                g
            })
            .collect()
    }
}

struct X2CosPiX;

impl X2CosPiX {
    pub fn laplacian(x: f64) -> f64 {
        let pi = std::f64::consts::PI;
        2.0 * (pi * x).cos() - 4.0 * pi * x * (pi * x).sin() - pi * pi * x * x * (pi * x).cos()
    }
}

impl FieldSampler for X2CosPiX {
    fn value(&self, x: &[f64]) -> f64 {
        let pi = std::f64::consts::PI;
        x[0] * x[0] * (pi * x[0]).cos()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let pi = std::f64::consts::PI;
        let x0 = x[0];
        vec![2.0 * x0 * (pi * x0).cos() - pi * x0 * x0 * (pi * x0).sin()]
    }
}

/// Second derivative of the 1D AC initial condition, used by the
/// hard-constraint residual loss.
pub fn x2_cospix_laplacian(x: f64) -> f64 {
    X2CosPiX::laplacian(x)
}

struct TwoBubbles {
    radius: f64,
    interface: f64,
}

/// Bubble centers sit at x = ±BUBBLE_OFFSET. The edge gap (2·offset − 2R)
/// must be of the order of the interface width for the bubbles to coalesce
/// within the horizon instead of shrinking apart under curvature flow.
const BUBBLE_OFFSET: f64 = 0.17;

impl TwoBubbles {
    fn branch(&self, x: f64, y: f64, cx: f64) -> (f64, f64, f64) {
        let dx = x - cx;
        let d = (dx * dx + y * y).sqrt();
        let v = ((self.radius - d) / self.interface).tanh();
        if d < 1e-12 {
            return (v, 0.0, 0.0);
        }
        let sech2 = 1.0 - v * v;
        let c = -sech2 / (self.interface * d);
        (v, c * dx, c * y)
    }
}

impl FieldSampler for TwoBubbles {
    fn value(&self, x: &[f64]) -> f64 {
        let a = self.branch(x[0], x[1], -BUBBLE_OFFSET).0;
        let b = self.branch(x[0], x[1], BUBBLE_OFFSET).0;
        a.max(b)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let a = self.branch(x[0], x[1], -BUBBLE_OFFSET);
        let b = self.branch(x[0], x[1], BUBBLE_OFFSET);
        let g = if a.0 >= b.0 { (a.1, a.2) } else { (b.1, b.2) };
        vec![g.0, g.1]
    }
}

struct Star {
    r0: f64,
    delta: f64,
    lobes: usize,
    interface: f64,
}

impl FieldSampler for Star {
    fn value(&self, x: &[f64]) -> f64 {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let w = std::f64::consts::SQRT_2 * self.interface;
        if r < 1e-12 {
            return (self.r0 / w).tanh();
        }
        let theta = x[1].atan2(x[0]);
        ((self.r0 + self.delta * (self.lobes as f64 * theta).cos() - r) / w).tanh()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let r = r2.sqrt();
        if r < 1e-12 {
            return vec![0.0, 0.0];
        }
        let w = std::f64::consts::SQRT_2 * self.interface;
        let theta = x[1].atan2(x[0]);
        let k = self.lobes as f64;
        let phi = (self.r0 + self.delta * (k * theta).cos() - r) / w;
        let sech2 = 1.0 - phi.tanh().powi(2);
        // d theta / d(x, y) = (-y, x) / r^2; d r / d(x, y) = (x, y) / r
        let dphi_dtheta = -self.delta * k * (k * theta).sin() / w;
        let dphi_dr = -1.0 / w;
        vec![
            sech2 * (dphi_dtheta * (-x[1] / r2) + dphi_dr * (x[0] / r)),
            sech2 * (dphi_dtheta * (x[0] / r2) + dphi_dr * (x[1] / r)),
        ]
    }
}

struct Cosine1d;

impl FieldSampler for Cosine1d {
    fn value(&self, x: &[f64]) -> f64 {
        (std::f64::consts::PI * x[0]).cos()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let pi = std::f64::consts::PI;
        vec![-pi * (pi * x[0]).sin()]
    }
}

/// Uniform(-1, 1) noise on a fine grid, projected onto Fourier modes with
/// index magnitude at most `mode_cutoff`; evaluated as the truncated
/// trigonometric series (smooth, exactly periodic, analytic gradient).
pub struct RandomProjectedField {
    /// retained modes: (kx, ky, re, im) with coefficients already normalized
    modes: Vec<(i64, i64, f64, f64)>,
    period: f64,
    grid: usize,
    seed: u64,
}

impl RandomProjectedField {
    pub fn new(seed: u64, mode_cutoff: usize, grid: usize, period: f64) -> Self {
        assert!(grid.is_power_of_two());
        let n = grid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data: Vec<fft::Complex> =
            (0..n * n).map(|_| (rng.gen_range(-1.0..1.0), 0.0)).collect();
        fft::fft2(&mut data, n, false);
        let cutoff = mode_cutoff as i64;
        let norm = 1.0 / (n * n) as f64;
        let mut modes = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let kx = fft::freq_index(i, n);
                let ky = fft::freq_index(j, n);
                if kx.abs() > cutoff || ky.abs() > cutoff {
                    continue;
                }
                let c = data[i * n + j];
                modes.push((kx, ky, c.0 * norm, c.1 * norm));
            }
        }
        Self {
            modes,
            period,
            grid,
            seed,
        }
    }

    pub fn raw_grid_mean(&self) -> f64 {
        // mode (0, 0) carries the mean
        self.modes
            .iter()
            .find(|m| m.0 == 0 && m.1 == 0)
            .map(|m| m.2)
            .unwrap_or(0.0)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> usize {
        self.grid
    }
}

impl FieldSampler for RandomProjectedField {
    fn value(&self, x: &[f64]) -> f64 {
        // the raw grid samples live on [0, L) x [0, L) index space; shift the
        // physical point into the grid's periodic frame
        let two_pi = 2.0 * std::f64::consts::PI;
        let (sx, sy) = (
            (x[0] + 0.5 * self.period) / self.period,
            (x[1] + 0.5 * self.period) / self.period,
        );
        let mut sum = 0.0;
        for &(kx, ky, re, im) in &self.modes {
            let ang = two_pi * (kx as f64 * sx + ky as f64 * sy);
            // real part of c * e^{i ang}
            sum += re * ang.cos() - im * ang.sin();
        }
        sum
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let (sx, sy) = (
            (x[0] + 0.5 * self.period) / self.period,
            (x[1] + 0.5 * self.period) / self.period,
        );
        let mut gx = 0.0;
        let mut gy = 0.0;
        for &(kx, ky, re, im) in &self.modes {
            let ang = two_pi * (kx as f64 * sx + ky as f64 * sy);
            let d = -(re * ang.sin() + im * ang.cos());
            gx += d * two_pi * kx as f64 / self.period;
            gy += d * two_pi * ky as f64 / self.period;
        }
        vec![gx, gy]
    }
}
