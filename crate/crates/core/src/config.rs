//! Experiment configuration: a flat structured-text format with dotted keys
//! (`integrator.dt = 1e-3`), parsed as TOML and resolved against per-problem
//! defaults. The resolved [`ExperimentConfig`] carries everything a run
//! needs: problem, basis scheme, quadrature, integrator, restart schedule,
//! training hyperparameters and output naming.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::basis::{
    default_sfli_slope, init_random, init_sfli, load_checkpoint, InitScheme, InputEmbedding,
    NetworkArchitecture, NetworkParams,
};
use crate::evolve::{EnergyViolationPolicy, EvolveConfig, Scheme};
use crate::integrators::ImexParams;
use crate::problems::{make_problem, BoundaryCondition, ProblemError, ProblemSpec};
use crate::quadrature::{monte_carlo, tensor_gauss, QuadratureError, QuadratureRule};
use crate::training::{LossKind, PinnForm, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("basis error: {0}")]
    Basis(#[from] crate::basis::BasisError),
}

// --- raw (file-level) schema -------------------------------------------------

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: Option<String>,
    seed: Option<u64>,
    /// `dnn-g` (default) or `pinn-direct`
    mode: Option<String>,
    record_every: Option<usize>,
    energy_violation: Option<String>,
    schedule: Option<Vec<f64>>,
    #[serde(rename = "override", default)]
    overrides: RawOverride,
    #[serde(default)]
    basis: RawBasis,
    #[serde(default)]
    quadrature: RawQuadrature,
    #[serde(default)]
    integrator: RawIntegrator,
    #[serde(default)]
    training: RawTraining,
    #[serde(default)]
    reference: RawReference,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    epsilon: Option<f64>,
    kappa: Option<f64>,
    horizon: Option<f64>,
    diffusion_scale: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBasis {
    /// `random` | `sfli` | `pretrained`
    scheme: Option<String>,
    widths: Option<Vec<usize>>,
    seed: Option<u64>,
    slope: Option<f64>,
    checkpoint: Option<String>,
    /// relative singular-value cut for basis orthogonalization
    ortho_tol: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    /// `gauss` | `monte_carlo`
    kind: Option<String>,
    /// Gauss points per dimension
    points: Option<usize>,
    /// Monte Carlo sample count
    samples: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    /// `ssi1` | `imex_rk2` | `dirk2` | `dirk3`
    kind: Option<String>,
    dt: Option<f64>,
    stabilization: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    steps: Option<u64>,
    batch: Option<usize>,
    lr0: Option<f64>,
    seed: Option<u64>,
    /// `residual` | `init`
    loss: Option<String>,
    /// `hard` | `soft`
    form: Option<String>,
    weight: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawReference {
    /// `exact` | `spectral` | `none`; defaults by problem
    kind: Option<String>,
    grid: Option<usize>,
    dt: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    /// basename stem for emitted files
    name: Option<String>,
}

// --- resolved schema ---------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisScheme {
    Random,
    Sfli,
    Pretrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadKind {
    Gauss,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    DnnGalerkin,
    PinnDirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Exact,
    Spectral,
    None,
}

#[derive(Debug, Clone)]
pub struct BasisConfig {
    pub scheme: BasisScheme,
    pub widths: Vec<usize>,
    pub seed: u64,
    pub slope: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    pub ortho_tol: f64,
}

#[derive(Debug, Clone)]
pub struct QuadConfig {
    pub kind: QuadKind,
    pub points: usize,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ReferenceConfig {
    pub kind: ReferenceKind,
    pub grid: usize,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub seed: u64,
    pub mode: RunMode,
    pub basis: BasisConfig,
    pub quadrature: QuadConfig,
    pub scheme: Scheme,
    pub imex: ImexParams,
    pub schedule: Vec<f64>,
    pub training: TrainConfig,
    pub reference: ReferenceConfig,
    pub record_every: usize,
    pub energy_policy: EnergyViolationPolicy,
    pub output_name: String,
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::resolve(raw)
    }

    fn resolve(raw: RawConfig) -> Result<Self, ConfigError> {
        let name = raw
            .problem
            .ok_or_else(|| bad("missing required key `problem`"))?;
        let mut problem = make_problem(&name)?;
        if let Some(v) = raw.overrides.epsilon {
            problem.epsilon = v;
        }
        if let Some(v) = raw.overrides.kappa {
            problem.kappa = v;
        }
        if let Some(v) = raw.overrides.horizon {
            problem.horizon = v;
        }
        if let Some(v) = raw.overrides.diffusion_scale {
            problem.diffusion_scale = v;
        }
        if problem.epsilon < 0.0 || problem.kappa < 0.0 || problem.horizon <= 0.0 {
            return Err(bad("epsilon/kappa must be >= 0 and horizon > 0"));
        }

        let seed = raw.seed.unwrap_or(0);
        let mode = match raw.mode.as_deref() {
            None | Some("dnn-g") => RunMode::DnnGalerkin,
            Some("pinn-direct") => RunMode::PinnDirect,
            Some(other) => return Err(bad(format!("unknown mode `{other}`"))),
        };

        let scheme = match raw.basis.scheme.as_deref() {
            None => {
                if problem.is_heat() {
                    BasisScheme::Random
                } else {
                    BasisScheme::Sfli
                }
            }
            Some("random") => BasisScheme::Random,
            Some("sfli") => BasisScheme::Sfli,
            Some("pretrained") => BasisScheme::Pretrained,
            Some(other) => return Err(bad(format!("unknown basis.scheme `{other}`"))),
        };
        let widths = match raw.basis.widths {
            Some(w) => {
                if w.is_empty() || w.contains(&0) {
                    return Err(bad("basis.widths must be non-empty positive integers"));
                }
                w
            }
            None => default_widths(&problem),
        };
        let basis = BasisConfig {
            scheme,
            widths,
            seed: raw.basis.seed.unwrap_or(seed),
            slope: raw.basis.slope,
            checkpoint: raw.basis.checkpoint.map(PathBuf::from),
            ortho_tol: raw.basis.ortho_tol.unwrap_or(crate::assembly::ORTHO_REL_TOL),
        };
        if basis.ortho_tol <= 0.0 || basis.ortho_tol >= 1.0 {
            return Err(bad("basis.ortho_tol must lie in (0, 1)"));
        }

        let quad_kind = match raw.quadrature.kind.as_deref() {
            None => QuadKind::Gauss,
            Some("gauss") => QuadKind::Gauss,
            Some("monte_carlo") => QuadKind::MonteCarlo,
            Some(other) => return Err(bad(format!("unknown quadrature.kind `{other}`"))),
        };
        let quadrature = QuadConfig {
            kind: quad_kind,
            points: raw.quadrature.points.unwrap_or_else(|| default_points(&problem)),
            samples: raw.quadrature.samples.unwrap_or(100_000),
            seed: raw.quadrature.seed.unwrap_or(seed),
        };
        if quadrature.points == 0 || quadrature.samples == 0 {
            return Err(bad("quadrature.points and quadrature.samples must be positive"));
        }

        let int_kind = match raw.integrator.kind.as_deref() {
            None => {
                if problem.is_heat() {
                    Scheme::Dirk3
                } else {
                    Scheme::ImexRk2
                }
            }
            Some("ssi1") => Scheme::Ssi1,
            Some("imex_rk2") => Scheme::ImexRk2,
            Some("dirk2") => Scheme::Dirk2,
            Some("dirk3") => Scheme::Dirk3,
            Some(other) => return Err(bad(format!("unknown integrator.kind `{other}`"))),
        };
        if matches!(int_kind, Scheme::Dirk2 | Scheme::Dirk3) && !problem.is_heat() {
            return Err(bad("dirk2/dirk3 apply only to the linear heat flow"));
        }
        let mut imex = ImexParams::defaults(&problem);
        if let Some(dt) = raw.integrator.dt {
            if dt <= 0.0 {
                return Err(bad("integrator.dt must be positive"));
            }
            imex.dt = dt;
        }
        if let Some(s) = raw.integrator.stabilization {
            imex.stabilization = s;
        }
        if let Some(a) = raw.integrator.alpha {
            imex.alpha = a;
        }

        let schedule = raw.schedule.unwrap_or_else(|| problem.default_schedule());
        if schedule.len() < 2 || schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("schedule must be strictly increasing with >= 2 entries"));
        }

        let defaults = TrainConfig::default();
        let loss = match raw.training.loss.as_deref() {
            None | Some("residual") => {
                let form = match raw.training.form.as_deref() {
                    None | Some("soft") => PinnForm::SoftIc {
                        weight: raw.training.weight.unwrap_or(10.0),
                    },
                    Some("hard") => PinnForm::HardConstraintIc,
                    Some(other) => return Err(bad(format!("unknown training.form `{other}`"))),
                };
                LossKind::PinnResidual { form }
            }
            Some("init") => LossKind::InitAlignment,
            Some(other) => return Err(bad(format!("unknown training.loss `{other}`"))),
        };
        let training = TrainConfig {
            steps: raw.training.steps.unwrap_or(defaults.steps),
            batch_size: raw
                .training
                .batch
                .unwrap_or_else(|| default_batch(&problem)),
            lr0: raw.training.lr0.unwrap_or(defaults.lr0),
            loss,
            seed: raw.training.seed.unwrap_or(seed),
        };

        let ref_kind = match raw.reference.kind.as_deref() {
            None => default_reference(&problem),
            Some("exact") => {
                if problem.exact.is_none() {
                    return Err(bad("reference.kind = exact but the problem has no analytic solution"));
                }
                ReferenceKind::Exact
            }
            Some("spectral") => ReferenceKind::Spectral,
            Some("none") => ReferenceKind::None,
            Some(other) => return Err(bad(format!("unknown reference.kind `{other}`"))),
        };
        let reference = ReferenceConfig {
            kind: ref_kind,
            grid: raw.reference.grid.unwrap_or_else(|| {
                if problem.spatial_dim == 1 {
                    1024
                } else {
                    256
                }
            }),
            dt: raw.reference.dt.unwrap_or(1e-4),
        };

        let energy_policy = match raw.energy_violation.as_deref() {
            None | Some("warn") => EnergyViolationPolicy::Warn,
            Some("fail") => EnergyViolationPolicy::Fail,
            Some(other) => return Err(bad(format!("unknown energy_violation `{other}`"))),
        };

        Ok(Self {
            output_name: raw.output.name.unwrap_or_else(|| name.clone()),
            problem,
            seed,
            mode,
            basis,
            quadrature,
            scheme: int_kind,
            imex,
            schedule,
            training,
            reference,
            record_every: raw.record_every.unwrap_or(10),
            energy_policy,
        })
    }

    /// Quadrature rule over the problem domain.
    pub fn build_rule(&self) -> Result<QuadratureRule, ConfigError> {
        match self.quadrature.kind {
            QuadKind::Gauss => Ok(tensor_gauss(&self.problem.domain, self.quadrature.points)?),
            QuadKind::MonteCarlo => Ok(monte_carlo(
                &self.problem.domain,
                self.quadrature.samples,
                self.quadrature.seed,
            )),
        }
    }

    /// Spatial embedding for the feature network (time input for pretrained).
    pub fn embedding(&self) -> InputEmbedding {
        let d = self.problem.spatial_dim;
        let base = match (self.basis.scheme, &self.problem.bc) {
            // SFLI centers live in physical coordinates
            (BasisScheme::Sfli, _) => InputEmbedding::identity(d),
            (_, BoundaryCondition::Periodic) => {
                InputEmbedding::periodic(self.problem.domain.lengths())
            }
            _ => InputEmbedding::identity(d),
        };
        if self.basis.scheme == BasisScheme::Pretrained {
            base.with_time()
        } else {
            base
        }
    }

    /// Network architecture implied by the embedding and configured widths.
    pub fn architecture(&self) -> NetworkArchitecture {
        NetworkArchitecture::new(self.embedding().output_dim(), self.basis.widths.clone())
    }

    /// Feature-network parameters for the configured basis scheme. The
    /// `pretrained` scheme loads the configured checkpoint.
    pub fn build_feature_params(&self) -> Result<NetworkParams, ConfigError> {
        let arch = self.architecture();
        match self.basis.scheme {
            BasisScheme::Random => Ok(init_random(&arch, InitScheme::LeCun, self.basis.seed)),
            BasisScheme::Sfli => {
                let slope = self
                    .basis
                    .slope
                    .unwrap_or_else(|| default_sfli_slope(arch.hidden_widths[0], &self.problem.domain));
                Ok(init_sfli(&arch, &self.problem.domain, slope, self.basis.seed))
            }
            BasisScheme::Pretrained => {
                let path = self.checkpoint_path();
                let (params, _meta) = load_checkpoint(&path)?;
                if params.architecture().hidden_widths != self.basis.widths {
                    return Err(bad(format!(
                        "checkpoint {} widths {:?} do not match configured {:?}",
                        path.display(),
                        params.architecture().hidden_widths,
                        self.basis.widths
                    )));
                }
                Ok(params)
            }
        }
    }

    /// Where `pretrain` writes and `run` reads the checkpoint.
    pub fn checkpoint_path(&self) -> PathBuf {
        self.basis
            .checkpoint
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.ckpt", self.output_name)))
    }

    /// Evolution configuration assembled from the integrator block.
    pub fn evolve_config(&self) -> EvolveConfig {
        let mut cfg = EvolveConfig::defaults(&self.problem);
        cfg.scheme = self.scheme;
        cfg.imex = self.imex;
        cfg.ortho_rel_tol = self.basis.ortho_tol;
        cfg.energy_policy = self.energy_policy;
        cfg.record_every = self.record_every;
        cfg
    }
}

/// Per-problem architecture defaults, scaled to desk budgets.
fn default_widths(problem: &ProblemSpec) -> Vec<usize> {
    match problem.name.as_str() {
        "ac_1d" | "ch_1d" => vec![128, 128, 128],
        n if n.starts_with("ac_2d") => vec![50, 50, 50, 256],
        _ => vec![400], // heat: single random-feature layer
    }
}

fn default_points(problem: &ProblemSpec) -> usize {
    match problem.spatial_dim {
        1 => 1024,
        2 => 128,
        _ => 12,
    }
}

fn default_batch(problem: &ProblemSpec) -> usize {
    match problem.name.as_str() {
        "ac_1d" | "ch_1d" => 8192,
        _ => TrainConfig::default().batch_size,
    }
}

fn default_reference(problem: &ProblemSpec) -> ReferenceKind {
    if problem.exact.is_some() {
        ReferenceKind::Exact
    } else if problem.bc == BoundaryCondition::Periodic && problem.spatial_dim <= 2 {
        ReferenceKind::Spectral
    } else {
        ReferenceKind::None
    }
}
