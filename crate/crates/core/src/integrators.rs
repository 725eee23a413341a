//! Energy-stable time integrators for the coefficient ODE `M dbeta/dt = -r(beta)`.
//!
//! The stiff linear part `L beta` (`eps^2 K`, `c K`, or `eps^2 K M^-1 K` for
//! the `H^-1` flow) is treated implicitly, the bounded nonlinearity
//! explicitly, and a zero-sum stabilization `S (M or K) (beta_impl - beta_expl)`
//! damps the explicit part. First order:
//!
//! ```text
//! (M + dt L + dt S M) b' = M b + dt S M b - dt g(b)          (SSI1)
//! ```
//!
//! Second order, with `gam = 1 - 1/sqrt(2)` and `del = 1 - 1/(2 gam)`:
//!
//! ```text
//! [M/(gam dt) + (1+alpha) L + S M] b* =
//!     M b/(gam dt) - g(b) + alpha L b + S M b
//! [M/dt + gam (1+alpha) L + gam S M] b+ =
//!     M b/dt - (1-gam) L b* - del g(b) - (1-del) g(b*)
//!     - (alpha L + S M) [(del-gam) b* - del b]               (IMEX-RK2)
//! ```
//!
//! Both are unconditionally energy stable for `S` large enough relative to
//! the Lipschitz bound of the explicit term. Diagonally implicit
//! Runge-Kutta schemes of orders 2 and 3 are included for linear
//! convergence studies.

use crate::assembly::{assemble_nonlinear, GalerkinSystem};
use crate::linalg::{CholeskyFactor, DenseMatrix, LinalgError};
use crate::problems::{Metric, Potential, ProblemSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("non-finite state after step at t = {0}")]
    NonFiniteState(f64),
}

/// `1 - 1/sqrt(2)`
pub const IMEX_GAMMA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

/// Parameters of the stabilized IMEX family.
#[derive(Debug, Clone, Copy)]
pub struct ImexParams {
    pub dt: f64,
    /// stabilization constant `S`
    pub stabilization: f64,
    /// extra implicit/explicit split of the linear term
    pub alpha: f64,
}

impl ImexParams {
    /// Default `dt = 1e-3`, `S = 2 kappa`, `alpha = 0`. The heat flow has no
    /// explicit term and needs no stabilization.
    pub fn defaults(problem: &ProblemSpec) -> Self {
        let s = match problem.potential {
            Potential::None => 0.0,
            Potential::DoubleWell => 2.0 * problem.kappa,
        };
        Self {
            dt: 1e-3,
            stabilization: s,
            alpha: 0.0,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        assert!(dt > 0.0);
        self.dt = dt;
        self
    }
}

/// Cached operators for repeated steps with one frozen basis and step size.
/// The two stage matrices are factorized once.
pub struct ImexStepper<'a> {
    sys: &'a GalerkinSystem,
    problem: &'a ProblemSpec,
    params: ImexParams,
    /// implicit linear operator `L`
    lin: DenseMatrix,
    /// stabilization matrix `S M` (L^2) or `S K` (H^-1)
    stab: DenseMatrix,
    stage1: CholeskyFactor,
    stage2: CholeskyFactor,
    ssi1: CholeskyFactor,
}

impl<'a> ImexStepper<'a> {
    pub fn new(
        sys: &'a GalerkinSystem,
        problem: &'a ProblemSpec,
        params: ImexParams,
    ) -> Result<Self, IntegratorError> {
        let lin = match (problem.metric, problem.potential) {
            (Metric::L2, Potential::None) => sys.stiffness.scale(problem.diffusion_scale),
            (Metric::L2, Potential::DoubleWell) => {
                sys.stiffness.scale(problem.epsilon * problem.epsilon)
            }
            (Metric::Hminus1, _) => {
                // eps^2 K M^-1 K, symmetric positive semi-definite
                let minv_k = sys.mass_chol.solve(&sys.stiffness);
                sys.stiffness
                    .matmul(&minv_k)
                    .scale(problem.epsilon * problem.epsilon)
                    .symmetrized()
            }
        };
        let stab_base = match problem.metric {
            Metric::L2 => &sys.mass,
            Metric::Hminus1 => &sys.stiffness,
        };
        let stab = stab_base.scale(params.stabilization);

        let dt = params.dt;
        let gam = IMEX_GAMMA;
        let a1 = sys
            .mass
            .scale(1.0 / (gam * dt))
            .add_scaled(1.0 + params.alpha, &lin)
            .add(&stab);
        let a2 = sys
            .mass
            .scale(1.0 / dt)
            .add_scaled(gam * (1.0 + params.alpha), &lin)
            .add(&stab.scale(gam));
        let assi = sys.mass.add_scaled(dt, &lin).add_scaled(dt, &stab);
        Ok(Self {
            sys,
            problem,
            params,
            stage1: CholeskyFactor::new(&a1)?,
            stage2: CholeskyFactor::new(&a2)?,
            ssi1: CholeskyFactor::new(&assi)?,
            lin,
            stab,
        })
    }

    /// Explicit (nonlinear) term in the chosen metric; zero for heat flow.
    fn nonlinear(&self, beta: &[f64]) -> Vec<f64> {
        match self.problem.potential {
            Potential::None => vec![0.0; beta.len()],
            Potential::DoubleWell => {
                let g = assemble_nonlinear(
                    &self.sys.basis_values,
                    &self.sys.weights,
                    self.problem.kappa,
                    beta,
                );
                match self.problem.metric {
                    Metric::L2 => g,
                    Metric::Hminus1 => {
                        let z = self.sys.mass_chol.solve_vec(&g);
                        self.sys.stiffness.matvec(&z)
                    }
                }
            }
        }
    }

    /// One first-order stabilized semi-implicit step.
    pub fn ssi1(&self, beta: &[f64]) -> Vec<f64> {
        let dt = self.params.dt;
        let mut rhs = self.sys.mass.matvec(beta);
        let sb = self.stab.matvec(beta);
        let g = self.nonlinear(beta);
        for i in 0..rhs.len() {
            rhs[i] += dt * (sb[i] - g[i]);
        }
        self.ssi1.solve_vec(&rhs)
    }

    /// One second-order stabilized IMEX Runge-Kutta step.
    pub fn imex_rk2(&self, beta: &[f64]) -> Vec<f64> {
        let dt = self.params.dt;
        let gam = IMEX_GAMMA;
        let del = 1.0 - 1.0 / (2.0 * gam);
        let alpha = self.params.alpha;
        let n = beta.len();

        let mb = self.sys.mass.matvec(beta);
        let gb = self.nonlinear(beta);
        let lb = self.lin.matvec(beta);
        let sb = self.stab.matvec(beta);

        let mut rhs1 = vec![0.0; n];
        for i in 0..n {
            rhs1[i] = mb[i] / (gam * dt) - gb[i] + alpha * lb[i] + sb[i];
        }
        let bstar = self.stage1.solve_vec(&rhs1);

        let gstar = self.nonlinear(&bstar);
        let lstar = self.lin.matvec(&bstar);
        // zero-sum correction state (del-gam) b* - del b
        let corr: Vec<f64> = bstar
            .iter()
            .zip(beta)
            .map(|(s, b)| (del - gam) * s - del * b)
            .collect();
        let lcorr = self.lin.matvec(&corr);
        let scorr = self.stab.matvec(&corr);

        let mut rhs2 = vec![0.0; n];
        for i in 0..n {
            rhs2[i] = mb[i] / dt
                - (1.0 - gam) * lstar[i]
                - del * gb[i]
                - (1.0 - del) * gstar[i]
                - alpha * lcorr[i]
                - scorr[i];
        }
        self.stage2.solve_vec(&rhs2)
    }
}

/// One SSI1 step without operator caching.
pub fn ssi1_step(
    sys: &GalerkinSystem,
    problem: &ProblemSpec,
    params: &ImexParams,
    beta: &[f64],
) -> Result<Vec<f64>, IntegratorError> {
    Ok(ImexStepper::new(sys, problem, *params)?.ssi1(beta))
}

/// One IMEX-RK2 step without operator caching (L^2 metric problems).
pub fn imex_rk2_step(
    sys: &GalerkinSystem,
    problem: &ProblemSpec,
    params: &ImexParams,
    beta: &[f64],
) -> Result<Vec<f64>, IntegratorError> {
    Ok(ImexStepper::new(sys, problem, *params)?.imex_rk2(beta))
}

/// One IMEX-RK2 step for the `H^-1` (Cahn-Hilliard) flow. Same entry point;
/// the metric on the problem selects the fourth-order linear operator and
/// `S K` stabilization.
pub fn imex_rk2_ch_step(
    sys: &GalerkinSystem,
    problem: &ProblemSpec,
    params: &ImexParams,
    beta: &[f64],
) -> Result<Vec<f64>, IntegratorError> {
    assert_eq!(problem.metric, Metric::Hminus1);
    Ok(ImexStepper::new(sys, problem, *params)?.imex_rk2(beta))
}

/// Butcher tableau of a diagonally implicit Runge-Kutta scheme with a
/// constant diagonal (SDIRK), so all stage solves share one factorization.
#[derive(Debug, Clone)]
pub struct DirkTableau {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl DirkTableau {
    /// Two-stage, second order, L-stable.
    pub fn dirk2() -> Self {
        let g = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
        Self {
            a: vec![vec![g, 0.0], vec![1.0 - g, g]],
            b: vec![1.0 - g, g],
            c: vec![g, 1.0],
        }
    }

    /// Three-stage, third order, L-stable (Alexander).
    pub fn dirk3() -> Self {
        // real root of g^3 - 3 g^2 + 3 g / 2 - 1/6
        let g = 0.435866521508459;
        let b1 = -1.5 * g * g + 4.0 * g - 0.25;
        let b2 = 1.5 * g * g - 5.0 * g + 1.25;
        Self {
            a: vec![
                vec![g, 0.0, 0.0],
                vec![(1.0 - g) / 2.0, g, 0.0],
                vec![b1, b2, g],
            ],
            b: vec![b1, b2, g],
            c: vec![g, (1.0 + g) / 2.0, 1.0],
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }
}

/// SDIRK stepper for the linear system `M dbeta/dt = A beta`; the single
/// stage matrix `M - dt a_ii A` is factorized up front.
pub struct DirkStepper<'a> {
    lin: &'a DenseMatrix,
    dt: f64,
    tableau: DirkTableau,
    stage_chol: CholeskyFactor,
}

impl<'a> DirkStepper<'a> {
    pub fn new(
        mass: &DenseMatrix,
        lin: &'a DenseMatrix,
        dt: f64,
        tableau: DirkTableau,
    ) -> Result<Self, IntegratorError> {
        let g = tableau.a[0][0];
        for (i, row) in tableau.a.iter().enumerate() {
            assert_eq!(row[i], g, "tableau diagonal must be constant");
        }
        let stage = mass.add_scaled(-dt * g, lin);
        Ok(Self {
            lin,
            dt,
            stage_chol: CholeskyFactor::new(&stage)?,
            tableau,
        })
    }

    pub fn step(&self, beta: &[f64]) -> Vec<f64> {
        let s = self.tableau.stages();
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(s);
        for i in 0..s {
            let mut y = beta.to_vec();
            for (j, kj) in k.iter().enumerate() {
                let aij = self.tableau.a[i][j];
                for (yv, kv) in y.iter_mut().zip(kj) {
                    *yv += self.dt * aij * kv;
                }
            }
            let rhs = self.lin.matvec(&y);
            k.push(self.stage_chol.solve_vec(&rhs));
        }
        let mut out = beta.to_vec();
        for (bi, ki) in self.tableau.b.iter().zip(&k) {
            for (ov, kv) in out.iter_mut().zip(ki) {
                *ov += self.dt * bi * kv;
            }
        }
        out
    }
}

/// One SDIRK step for `M dbeta/dt = A beta` without operator caching.
pub fn dirk_step(
    mass: &DenseMatrix,
    lin: &DenseMatrix,
    dt: f64,
    tableau: &DirkTableau,
    beta: &[f64],
) -> Result<Vec<f64>, IntegratorError> {
    Ok(DirkStepper::new(mass, lin, dt, tableau.clone())?.step(beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{init_sfli, BasisSet, BoundaryMask, InputEmbedding, NetworkArchitecture};
    use crate::problems::make_problem;
    use crate::quadrature::{tensor_gauss, Box};

    /// dense matrix exponential by scaling and squaring with a Taylor tail;
    /// independent oracle for the linear convergence checks.
    fn expm(a: &DenseMatrix) -> DenseMatrix {
        let n = a.rows();
        let norm = a.max_abs() * n as f64;
        let s = norm.log2().ceil().max(0.0) as u32 + 4;
        let scaled = a.scale(1.0 / f64::powi(2.0, s as i32));
        let mut term = DenseMatrix::identity(n);
        let mut sum = DenseMatrix::identity(n);
        for k in 1..30 {
            term = term.matmul(&scaled).scale(1.0 / k as f64);
            sum = sum.add(&term);
        }
        let mut out = sum;
        for _ in 0..s {
            out = out.matmul(&out);
        }
        out
    }

    fn coupled_system() -> (DenseMatrix, DenseMatrix) {
        let m = DenseMatrix::from_rows(2, 2, vec![2.0, 0.5, 0.5, 1.5]);
        let k = DenseMatrix::from_rows(2, 2, vec![3.0, 1.0, 1.0, 2.0]);
        (m, k)
    }

    fn exact_at(m: &DenseMatrix, lin: &DenseMatrix, t: f64, beta0: &[f64]) -> Vec<f64> {
        // beta(t) = expm(t M^-1 A) beta0
        let minv_a = CholeskyFactor::new(m).unwrap().solve(lin);
        expm(&minv_a.scale(t)).matvec(beta0)
    }

    fn observed_order(errs: &[f64]) -> f64 {
        // least-squares slope of log2(err) against refinement level
        let n = errs.len() as f64;
        let mean_i = (errs.len() - 1) as f64 / 2.0;
        let logs: Vec<f64> = errs.iter().map(|e| e.log2()).collect();
        let mean_l = logs.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, l) in logs.iter().enumerate() {
            num += (i as f64 - mean_i) * (l - mean_l);
            den += (i as f64 - mean_i) * (i as f64 - mean_i);
        }
        -num / den
    }

    fn heat_like_spec(c: f64) -> ProblemSpec {
        let mut p = make_problem("heat_1d").unwrap();
        p.diffusion_scale = c;
        p
    }

    /// Build a tiny AC Galerkin system from a random 1D basis.
    fn ac_system() -> (ProblemSpec, crate::quadrature::QuadratureRule, BasisSet) {
        let problem = make_problem("ac_1d").unwrap();
        let domain = Box::cube(-1.0, 1.0, 1);
        let arch = NetworkArchitecture::new(1, vec![12]);
        let params = init_sfli(&arch, &domain, 2.0, 7);
        let basis = BasisSet::new(params, InputEmbedding::identity(1), BoundaryMask::None);
        let rule = tensor_gauss(&domain, 60).unwrap();
        (problem, rule, basis)
    }

    #[test]
    fn ssi1_is_first_order_on_linear_system() {
        // heat flow through the full stepper on a synthetic Galerkin pair
        let (m, k) = coupled_system();
        let problem = heat_like_spec(0.8);
        let beta0 = vec![1.0, -0.5];
        let lin = k.scale(-0.8);
        let exact = exact_at(&m, &lin, 1.0, &beta0);
        let mut errs = Vec::new();
        for lvl in 0..4 {
            let nsteps = 8 << lvl;
            let dt = 1.0 / nsteps as f64;
            let sys = synthetic_system(&m, &k);
            let stepper =
                ImexStepper::new(&sys, &problem, ImexParams::defaults(&problem).with_dt(dt))
                    .unwrap();
            let mut b = beta0.clone();
            for _ in 0..nsteps {
                b = stepper.ssi1(&b);
            }
            let err: f64 = b
                .iter()
                .zip(&exact)
                .map(|(a, e)| (a - e) * (a - e))
                .sum::<f64>()
                .sqrt();
            errs.push(err);
        }
        let p = observed_order(&errs);
        assert!((p - 1.0).abs() < 0.15, "SSI1 observed order {p}");
    }

    /// Wrap explicit (M, K) into a GalerkinSystem with empty tabulation —
    /// valid for the potential-free heat flow only.
    fn synthetic_system(m: &DenseMatrix, k: &DenseMatrix) -> GalerkinSystem {
        GalerkinSystem {
            basis_values: DenseMatrix::zeros(0, m.rows()),
            weights: vec![],
            mass: m.clone(),
            stiffness: k.clone(),
            mass_chol: CholeskyFactor::new(m).unwrap(),
            ridge: 0.0,
        }
    }

    #[test]
    fn imex_rk2_is_second_order_on_linear_system() {
        let (m, k) = coupled_system();
        let problem = heat_like_spec(0.8);
        let beta0 = vec![1.0, -0.5];
        let lin = k.scale(-0.8);
        let exact = exact_at(&m, &lin, 1.0, &beta0);
        let mut errs = Vec::new();
        for lvl in 0..4 {
            let nsteps = 8 << lvl;
            let dt = 1.0 / nsteps as f64;
            let sys = synthetic_system(&m, &k);
            let stepper =
                ImexStepper::new(&sys, &problem, ImexParams::defaults(&problem).with_dt(dt))
                    .unwrap();
            let mut b = beta0.clone();
            for _ in 0..nsteps {
                b = stepper.imex_rk2(&b);
            }
            let err: f64 = b
                .iter()
                .zip(&exact)
                .map(|(a, e)| (a - e) * (a - e))
                .sum::<f64>()
                .sqrt();
            errs.push(err);
        }
        let p = observed_order(&errs);
        assert!((p - 2.0).abs() < 0.2, "IMEX-RK2 observed order {p}");
    }

    #[test]
    fn dirk_orders_match_exponential_oracle() {
        let (m, k) = coupled_system();
        let lin = k.scale(-1.0);
        let beta0 = vec![1.0, -0.5];
        let exact = exact_at(&m, &lin, 1.0, &beta0);
        for (tableau, expected) in [(DirkTableau::dirk2(), 2.0), (DirkTableau::dirk3(), 3.0)] {
            let mut errs = Vec::new();
            for lvl in 0..4 {
                let nsteps = 8 << lvl;
                let dt = 1.0 / nsteps as f64;
                let stepper = DirkStepper::new(&m, &lin, dt, tableau.clone()).unwrap();
                let mut b = beta0.clone();
                for _ in 0..nsteps {
                    b = stepper.step(&b);
                }
                let err: f64 = b
                    .iter()
                    .zip(&exact)
                    .map(|(a, e)| (a - e) * (a - e))
                    .sum::<f64>()
                    .sqrt();
                errs.push(err);
            }
            let p = observed_order(&errs);
            assert!(
                (p - expected).abs() < 0.25,
                "DIRK observed order {p}, want {expected}"
            );
        }
    }

    #[test]
    fn stabilized_steps_do_not_increase_energy() {
        let (problem, rule, basis) = ac_system();
        let sys = GalerkinSystem::assemble(&basis, &rule).unwrap();
        let n = sys.dim();
        let beta0: Vec<f64> = (0..n).map(|i| 0.4 * ((i as f64) * 1.3).sin()).collect();
        let params = ImexParams::defaults(&problem);
        let stepper = ImexStepper::new(&sys, &problem, params).unwrap();
        for scheme in 0..2 {
            let mut b = beta0.clone();
            let mut e_prev = sys.energy(&problem, &b);
            for _ in 0..50 {
                b = if scheme == 0 {
                    stepper.ssi1(&b)
                } else {
                    stepper.imex_rk2(&b)
                };
                let e = sys.energy(&problem, &b);
                assert!(
                    e <= e_prev + 1e-12 * e_prev.abs().max(1.0),
                    "energy increased: {e_prev} -> {e}"
                );
                e_prev = e;
            }
        }
    }

    #[test]
    fn ch_step_conserves_total_mass() {
        let problem = make_problem("ch_1d").unwrap();
        let domain = Box::cube(-1.0, 1.0, 1);
        let arch = NetworkArchitecture::new(1, vec![10]);
        let params = init_sfli(&arch, &domain, 2.0, 11);
        // constant column included: its stiffness row vanishes, which is
        // what makes the H^-1 step conservative
        let basis = BasisSet::new(params, InputEmbedding::identity(1), BoundaryMask::None);
        let rule = tensor_gauss(&domain, 60).unwrap();
        let sys = GalerkinSystem::assemble(&basis, &rule).unwrap();
        let n = sys.dim();
        let mut beta: Vec<f64> = (0..n).map(|i| 0.3 * ((i as f64) * 0.9).cos()).collect();
        let mass0 = sys.total_mass(&beta);
        let ip = ImexParams::defaults(&problem).with_dt(1e-4);
        for _ in 0..20 {
            beta = imex_rk2_ch_step(&sys, &problem, &ip, &beta).unwrap();
        }
        assert!(
            (sys.total_mass(&beta) - mass0).abs() < 1e-9 * mass0.abs().max(1.0),
            "mass drifted from {mass0} to {}",
            sys.total_mass(&beta)
        );
    }

    #[test]
    fn imex_rk2_matches_scalar_amplification_factor() {
        // 1x1 system: one step must reproduce
        // R(z) = (1 + (2 gam - 1) z) / (1 + gam z)^2
        let m = DenseMatrix::identity(1);
        let k = DenseMatrix::identity(1);
        let problem = heat_like_spec(1.0);
        let sys = synthetic_system(&m, &k);
        for z in [0.05, 0.3, 1.0] {
            let stepper =
                ImexStepper::new(&sys, &problem, ImexParams::defaults(&problem).with_dt(z))
                    .unwrap();
            let out = stepper.imex_rk2(&[1.0]);
            let g = IMEX_GAMMA;
            let r = (1.0 + (2.0 * g - 1.0) * z) / ((1.0 + g * z) * (1.0 + g * z));
            assert!((out[0] - r).abs() < 1e-13, "z = {z}: {} vs {r}", out[0]);
        }
    }
}
