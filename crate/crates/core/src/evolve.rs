//! Adaptive evolution with basis restarts.
//!
//! Time is split by a restart schedule `0 = T_0 < T_1 < ... < T_K = T`. On
//! each subinterval the trial space is frozen: the network features are
//! evaluated at `t = T_k` (for time-dependent networks), orthogonalized,
//! and augmented with the incoming solution `u_h(., T_k^-)` in the leading
//! slot and a constant. The coefficient ODE is integrated with a stabilized
//! scheme; at `T_{k+1}` the basis is rebuilt around the current solution
//! and the coefficients reset to `(1, 0, .., 0)`, so the solution is
//! continuous across restarts by construction.

use crate::assembly::{orthogonalize, AssemblyError, GalerkinSystem, OrthoReport};
use crate::basis::{BasisError, BasisSet, BoundaryMask, FieldSampler, InputEmbedding, NetworkParams};
use crate::integrators::{DirkStepper, DirkTableau, ImexParams, ImexStepper, IntegratorError};
use crate::problems::ProblemSpec;
use crate::quadrature::QuadratureRule;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("discrete energy increased at t = {time:.6}: {from:.6e} -> {to:.6e}")]
    EnergyViolation { time: f64, from: f64, to: f64 },
    #[error("non-finite coefficients at t = {0:.6}")]
    NonFiniteState(f64),
}

/// Reaction to a discrete energy increase beyond tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyViolationPolicy {
    Warn,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Ssi1,
    ImexRk2,
    /// linear (potential-free) problems only
    Dirk2,
    Dirk3,
}

/// Restart instants, including both endpoints.
#[derive(Debug, Clone)]
pub struct RestartSchedule {
    pub times: Vec<f64>,
}

impl RestartSchedule {
    pub fn new(times: Vec<f64>) -> Self {
        assert!(times.len() >= 2, "schedule needs at least [0, T]");
        for w in times.windows(2) {
            assert!(w[0] < w[1], "schedule must be strictly increasing");
        }
        Self { times }
    }

    pub fn for_problem(problem: &ProblemSpec) -> Self {
        Self::new(problem.default_schedule())
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }
}

/// Frozen solution `beta . Phi` usable as the ic slot of the next basis.
pub struct SolutionSampler {
    pub basis: BasisSet,
    pub beta: Vec<f64>,
}

impl FieldSampler for SolutionSampler {
    fn value(&self, x: &[f64]) -> f64 {
        self.basis.eval_solution(&self.beta, x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.basis.eval_solution_gradient(&self.beta, x)
    }
}

/// One entry of the energy/mass trace. The coefficient snapshot allows
/// post-hoc solution evaluation through the segment basis.
#[derive(Debug, Clone)]
pub struct TracePoint {
    pub time: f64,
    pub energy: f64,
    pub mass: f64,
    /// index into [`Trajectory::segments`]
    pub segment: usize,
    pub beta: Vec<f64>,
}

/// Per-subinterval summary.
#[derive(Clone)]
pub struct SegmentRecord {
    pub t_start: f64,
    pub t_end: f64,
    pub ortho: OrthoReport,
    /// energy right after the restart projection
    pub energy_in: f64,
    /// energy at the end of the subinterval
    pub energy_out: f64,
    /// frozen basis and final coefficients of the segment
    pub basis: BasisSet,
    pub beta: Vec<f64>,
}

/// Full output of an adaptive run.
pub struct Trajectory {
    pub trace: Vec<TracePoint>,
    pub segments: Vec<SegmentRecord>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    /// Solution at the end of segment `k` as a standalone sampler.
    pub fn solution_at_segment_end(&self, k: usize) -> SolutionSampler {
        SolutionSampler {
            basis: self.segments[k].basis.clone(),
            beta: self.segments[k].beta.clone(),
        }
    }

    /// Solution at trace entry `i` as a standalone sampler.
    pub fn solution_at_trace(&self, i: usize) -> SolutionSampler {
        let p = &self.trace[i];
        SolutionSampler {
            basis: self.segments[p.segment].basis.clone(),
            beta: p.beta.clone(),
        }
    }

    pub fn final_solution(&self) -> SolutionSampler {
        self.solution_at_segment_end(self.segments.len() - 1)
    }

    pub fn final_energy(&self) -> f64 {
        self.segments.last().unwrap().energy_out
    }
}

/// Evolution configuration.
#[derive(Debug, Clone)]
pub struct EvolveConfig {
    pub scheme: Scheme,
    pub imex: ImexParams,
    pub ortho_rel_tol: f64,
    pub energy_policy: EnergyViolationPolicy,
    /// trace recorded every this many accepted steps (restarts always)
    pub record_every: usize,
}

impl EvolveConfig {
    pub fn defaults(problem: &ProblemSpec) -> Self {
        Self {
            scheme: Scheme::ImexRk2,
            imex: ImexParams::defaults(problem),
            ortho_rel_tol: crate::assembly::ORTHO_REL_TOL,
            energy_policy: EnergyViolationPolicy::Warn,
            record_every: 10,
        }
    }
}

/// Build the frozen augmented basis for the subinterval starting at `t`.
///
/// `incoming` is the solution entering the subinterval (the problem initial
/// condition for the first one). The feature block is orthogonalized over
/// the rule; the ic slot and constant are appended around it.
pub fn rebuild_basis_at(
    feature_params: &NetworkParams,
    embedding: &InputEmbedding,
    mask: &BoundaryMask,
    incoming: Arc<dyn FieldSampler>,
    t: f64,
    rule: &QuadratureRule,
    ortho_rel_tol: f64,
) -> Result<(BasisSet, OrthoReport), AssemblyError> {
    let raw = BasisSet::new(feature_params.clone(), embedding.clone(), mask.clone())
        .with_frozen_time(t)
        .with_ic_slot(incoming);
    orthogonalize(&raw, rule, ortho_rel_tol)
}

/// Coefficients representing the incoming solution exactly: weight one on
/// the ic slot, zero elsewhere.
pub fn initial_beta(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n];
    b[0] = 1.0;
    b
}

/// Run the restarted evolution over the whole schedule.
pub fn run_adaptive(
    problem: &ProblemSpec,
    feature_params: &NetworkParams,
    embedding: &InputEmbedding,
    mask: &BoundaryMask,
    rule: &QuadratureRule,
    schedule: &RestartSchedule,
    cfg: &EvolveConfig,
) -> Result<Trajectory, EvolveError> {
    let mut incoming: Arc<dyn FieldSampler> = problem.ic.sampler();
    let mut trace = Vec::new();
    let mut segments: Vec<SegmentRecord> = Vec::new();
    let mut warnings = Vec::new();
    let energy_tol = 1e-9;

    for k in 0..schedule.segments() {
        let t_start = schedule.times[k];
        let t_end = schedule.times[k + 1];
        let (basis, ortho) = rebuild_basis_at(
            feature_params,
            embedding,
            mask,
            incoming.clone(),
            t_start,
            rule,
            cfg.ortho_rel_tol,
        )?;
        let sys = GalerkinSystem::assemble(&basis, rule)?;
        let mut beta = initial_beta(sys.dim());

        // continuity of the discrete energy across the restart
        let energy_in = sys.energy(problem, &beta);
        if let Some(prev) = segments.last() {
            let jump = (energy_in - prev.energy_out).abs();
            if jump > 1e-6 * prev.energy_out.abs().max(1.0) {
                warnings.push(format!(
                    "energy jump {jump:.3e} across restart at t = {t_start:.6}"
                ));
            }
        }

        let span = t_end - t_start;
        let nsteps = (span / cfg.imex.dt - 1e-9).ceil().max(1.0) as usize;
        let dt = span / nsteps as f64;
        let params = ImexParams {
            dt,
            ..cfg.imex
        };
        let dirk_lin: crate::linalg::DenseMatrix;
        let mut imex: Option<ImexStepper> = None;
        let mut dirk: Option<DirkStepper> = None;
        match cfg.scheme {
            Scheme::Ssi1 | Scheme::ImexRk2 => {
                imex = Some(ImexStepper::new(&sys, problem, params)?);
            }
            Scheme::Dirk2 | Scheme::Dirk3 => {
                assert_eq!(
                    problem.potential,
                    crate::problems::Potential::None,
                    "DIRK schemes handle only the linear (potential-free) flow"
                );
                dirk_lin = sys.stiffness.scale(-problem.diffusion_scale);
                let tableau = if cfg.scheme == Scheme::Dirk2 {
                    DirkTableau::dirk2()
                } else {
                    DirkTableau::dirk3()
                };
                dirk = Some(DirkStepper::new(&sys.mass, &dirk_lin, dt, tableau)?);
            }
        }

        let mut energy = energy_in;
        trace.push(TracePoint {
            time: t_start,
            energy,
            mass: sys.total_mass(&beta),
            segment: k,
            beta: beta.clone(),
        });
        for step in 0..nsteps {
            beta = match cfg.scheme {
                Scheme::Ssi1 => imex.as_ref().unwrap().ssi1(&beta),
                Scheme::ImexRk2 => imex.as_ref().unwrap().imex_rk2(&beta),
                Scheme::Dirk2 | Scheme::Dirk3 => dirk.as_ref().unwrap().step(&beta),
            };
            let t = t_start + dt * (step + 1) as f64;
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(EvolveError::NonFiniteState(t));
            }
            let e = sys.energy(problem, &beta);
            if e > energy + energy_tol * energy.abs().max(1.0) {
                match cfg.energy_policy {
                    EnergyViolationPolicy::Fail => {
                        return Err(EvolveError::EnergyViolation {
                            time: t,
                            from: energy,
                            to: e,
                        })
                    }
                    EnergyViolationPolicy::Warn => warnings.push(format!(
                        "energy increased at t = {t:.6}: {energy:.6e} -> {e:.6e}"
                    )),
                }
            }
            energy = e;
            if (step + 1) % cfg.record_every == 0 || step + 1 == nsteps {
                trace.push(TracePoint {
                    time: t,
                    energy,
                    mass: sys.total_mass(&beta),
                    segment: k,
                    beta: beta.clone(),
                });
            }
        }

        segments.push(SegmentRecord {
            t_start,
            t_end,
            ortho,
            energy_in,
            energy_out: energy,
            basis: basis.clone(),
            beta: beta.clone(),
        });
        incoming = Arc::new(SolutionSampler { basis, beta });
    }

    Ok(Trajectory {
        trace,
        segments,
        warnings,
    })
}
