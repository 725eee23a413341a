//! Command implementations behind the `galflow` binary: `pretrain`, `run`,
//! `converge` and `compare`. Every command is config-driven, deterministic
//! given (config, seeds), and emits CSV with a schema-tag header comment.
//!
//! Exit codes (mapped in `main`): 0 success, 2 config, 3 training failure,
//! 4 energy violation, 5 numerical failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::AssemblyError;
use crate::basis::{save_checkpoint, BasisError, BoundaryMask, CheckpointMeta, FieldSampler};
use crate::config::{ConfigError, ExperimentConfig, ReferenceKind, RunMode};
use crate::evolve::{run_adaptive, EvolveError, RestartSchedule, Trajectory};
use crate::linalg::LinalgError;
use crate::problems::{BoundaryCondition, Potential, ProblemSpec};
use crate::quadrature::QuadratureRule;
use crate::reference::{load_or_run, relative_l2, relative_l2_weighted, ReferenceError};
use crate::training::{
    pinn_predict, pinn_predict_with_gradient, pretrain, pretrain_with_head, LossKind, PinnForm,
    ResidualKind, ResidualProblem, TrainError, TrainHead,
};

/// Environment variable naming the reference-cache directory.
pub const CACHE_DIR_ENV: &str = "GALFLOW_CACHE_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("training failure: {0}")]
    Training(String),
    #[error("energy violation: {0}")]
    Energy(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Training(_) => 3,
            CliError::Energy(_) => 4,
            CliError::Numerical(_) => 5,
            CliError::Io(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::UnsupportedProblem(_) => CliError::Config(e.to_string()),
            _ => CliError::Training(e.to_string()),
        }
    }
}

impl From<BasisError> for CliError {
    fn from(e: BasisError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ReferenceError> for CliError {
    fn from(e: ReferenceError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<EvolveError> for CliError {
    fn from(e: EvolveError) -> Self {
        match e {
            EvolveError::EnergyViolation { .. } => CliError::Energy(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<AssemblyError> for CliError {
    fn from(e: AssemblyError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.12e}")
}

/// Reference cache directory: `$GALFLOW_CACHE_DIR`, else `<out>/cache`.
pub fn cache_dir(out: &Path) -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| out.join("cache"))
}

/// Residual problem for training, tolerating the `H^{-1}` metric when only
/// the initial-alignment loss (which never touches the PDE terms) is used.
fn residual_problem(cfg: &ExperimentConfig) -> Result<ResidualProblem, CliError> {
    match ResidualProblem::from_spec(&cfg.problem) {
        Ok(rp) => Ok(rp),
        Err(e) => {
            if cfg.training.loss == LossKind::InitAlignment {
                Ok(ResidualProblem {
                    spatial_dim: cfg.problem.spatial_dim,
                    domain: cfg.problem.domain.clone(),
                    horizon: cfg.problem.horizon,
                    kind: ResidualKind::Heat { diffusion: 0.0 },
                    ic: cfg.problem.ic.sampler(),
                    ic_laplacian: None,
                })
            } else {
                Err(e.into())
            }
        }
    }
}

fn boundary_mask(problem: &ProblemSpec) -> BoundaryMask {
    match problem.bc {
        BoundaryCondition::DirichletBox => BoundaryMask::DirichletBox(problem.domain.clone()),
        BoundaryCondition::Periodic => BoundaryMask::None,
    }
}

// --- pretrain ------------------------------------------------------------------

/// Train the feature network, write the checkpoint and a loss-trace CSV.
/// Returns the checkpoint path.
pub fn cmd_pretrain(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out)?;
    let rp = residual_problem(cfg)?;
    let emb = cfg.embedding();
    let arch = cfg.architecture();
    let mut tc = cfg.training.clone();
    // downgrade to the soft form when the hard constraint has no analytic
    // Laplacian of the initial condition
    if let LossKind::PinnResidual {
        form: PinnForm::HardConstraintIc,
    } = tc.loss
    {
        if rp.ic_laplacian.is_none() {
            tc.loss = LossKind::PinnResidual {
                form: PinnForm::SoftIc { weight: 10.0 },
            };
        }
    }
    let (params, trace) = pretrain(&rp, &arch, &emb, &tc)?;

    let ckpt = out.join(
        cfg.checkpoint_path()
            .file_name()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(format!("{}.ckpt", cfg.output_name))),
    );
    let meta = CheckpointMeta {
        embedding: emb,
        hidden_widths: cfg.basis.widths.clone(),
        seed: tc.seed,
    };
    save_checkpoint(&ckpt, &params, &meta)?;

    let mut csv = String::from("# schema: galflow-train v1\nstep,lr,loss\n");
    for e in &trace {
        let _ = writeln!(csv, "{},{},{}", e.step, fmt_f64(e.lr), fmt_f64(e.loss));
    }
    std::fs::write(out.join(format!("{}-train.csv", cfg.output_name)), csv)?;
    Ok(ckpt)
}

// --- run -------------------------------------------------------------------------

/// One emitted trajectory row.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub time: f64,
    pub energy: f64,
    pub mass: f64,
    pub error: Option<f64>,
    pub basis_id: usize,
    pub wall_seconds: f64,
}

/// Outcome of a run: rows plus any soft warnings from the evolution driver.
pub struct RunResult {
    pub rows: Vec<RunRow>,
    pub warnings: Vec<String>,
}

impl RunResult {
    pub fn final_error(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.error)
    }

    pub fn to_csv(&self) -> String {
        let mut csv = String::from(
            "# schema: galflow-run v1\ntime,energy,mass,error,basis_id,wall_seconds\n",
        );
        for r in &self.rows {
            let err = r.error.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{:.3}",
                fmt_f64(r.time),
                fmt_f64(r.energy),
                fmt_f64(r.mass),
                err,
                r.basis_id,
                r.wall_seconds
            );
        }
        csv
    }
}

/// Trace-recording instants of the evolution driver, reproduced so that
/// baselines and references can be evaluated on the same stamps.
pub fn recorded_times(schedule: &[f64], dt: f64, record_every: usize) -> Vec<f64> {
    let mut times = Vec::new();
    for k in 0..schedule.len() - 1 {
        let (a, b) = (schedule[k], schedule[k + 1]);
        let span = b - a;
        let nsteps = (span / dt - 1e-9).ceil().max(1.0) as usize;
        let h = span / nsteps as f64;
        times.push(a);
        for s in 1..=nsteps {
            if s % record_every == 0 || s == nsteps {
                times.push(a + h * s as f64);
            }
        }
    }
    times
}

/// How the error column is measured for one run.
enum ErrorOracle {
    /// weighted relative L2 against the analytic solution on the rule nodes
    Exact,
    /// relative L2 against cached spectral snapshots on the reference grid
    Spectral(crate::reference::ReferenceTrajectory),
    None,
}

fn build_error_oracle(
    cfg: &ExperimentConfig,
    cache: &Path,
    times: &[f64],
) -> Result<ErrorOracle, CliError> {
    match cfg.reference.kind {
        ReferenceKind::Exact => Ok(ErrorOracle::Exact),
        ReferenceKind::None => Ok(ErrorOracle::None),
        ReferenceKind::Spectral => {
            std::fs::create_dir_all(cache)?;
            // restart instants appear twice in the trace (segment end and
            // next segment start); snapshots need strictly increasing times
            let mut unique: Vec<f64> = Vec::with_capacity(times.len());
            for &t in times {
                if unique.last().map_or(true, |&u| t > u + 1e-12) {
                    unique.push(t);
                }
            }
            let traj = load_or_run(
                cache,
                &cfg.problem,
                cfg.reference.grid,
                cfg.reference.dt,
                &unique,
            )?;
            Ok(ErrorOracle::Spectral(traj))
        }
    }
}

/// Run the configured experiment and compute the output rows. This is the
/// body of `cmd_run`, reused by `converge` and `compare`.
pub fn run_experiment(cfg: &ExperimentConfig, cache: &Path) -> Result<RunResult, CliError> {
    match cfg.mode {
        RunMode::DnnGalerkin => run_dnn_galerkin(cfg, cache),
        RunMode::PinnDirect => run_pinn_direct(cfg, cache),
    }
}

fn run_dnn_galerkin(cfg: &ExperimentConfig, cache: &Path) -> Result<RunResult, CliError> {
    let start = Instant::now();
    let rule = cfg.build_rule()?;
    let params = cfg.build_feature_params()?;
    let emb = cfg.embedding();
    let mask = boundary_mask(&cfg.problem);
    let schedule = RestartSchedule::new(cfg.schedule.clone());
    let ecfg = cfg.evolve_config();

    let traj = run_adaptive(&cfg.problem, &params, &emb, &mask, &rule, &schedule, &ecfg)?;
    let wall = start.elapsed().as_secs_f64();

    let times: Vec<f64> = traj.trace.iter().map(|p| p.time).collect();
    let oracle = build_error_oracle(cfg, cache, &times)?;
    let errors = trajectory_errors(cfg, &traj, &rule, &oracle)?;

    let rows = traj
        .trace
        .iter()
        .zip(errors)
        .map(|(p, error)| RunRow {
            time: p.time,
            energy: p.energy,
            mass: p.mass,
            error,
            basis_id: p.segment,
            wall_seconds: wall,
        })
        .collect();
    Ok(RunResult {
        rows,
        warnings: traj.warnings.clone(),
    })
}

/// Error column for every trace point; `None` entries when no reference.
fn trajectory_errors(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    rule: &QuadratureRule,
    oracle: &ErrorOracle,
) -> Result<Vec<Option<f64>>, CliError> {
    let mut errors = vec![None; traj.trace.len()];
    match oracle {
        ErrorOracle::None => {}
        ErrorOracle::Exact => {
            let exact = cfg
                .problem
                .exact
                .as_ref()
                .ok_or_else(|| CliError::Config("no analytic solution".into()))?;
            // per segment: one feature evaluation, then a matvec per point
            for (k, seg) in traj.segments.iter().enumerate() {
                let phi = seg.basis.eval_features(&rule.nodes)?;
                for (i, p) in traj.trace.iter().enumerate() {
                    if p.segment != k {
                        continue;
                    }
                    let uh = phi.matvec(&p.beta);
                    let uref: Vec<f64> = rule
                        .nodes
                        .iter()
                        .map(|x| exact.eval(x, p.time))
                        .collect();
                    errors[i] = Some(
                        relative_l2_weighted(&uh, &uref, &rule.weights)
                            .map_err(|e| CliError::Numerical(e.to_string()))?,
                    );
                }
            }
        }
        ErrorOracle::Spectral(reference) => {
            let pts = reference.points();
            for (k, seg) in traj.segments.iter().enumerate() {
                let phi = seg.basis.eval_features(&pts)?;
                for (i, p) in traj.trace.iter().enumerate() {
                    if p.segment != k {
                        continue;
                    }
                    let uh = phi.matvec(&p.beta);
                    let idx = reference
                        .times
                        .iter()
                        .position(|t| (t - p.time).abs() <= 1e-9)
                        .ok_or_else(|| {
                            CliError::Numerical(format!(
                                "reference has no snapshot at t = {}",
                                p.time
                            ))
                        })?;
                    errors[i] = Some(relative_l2(&uh, &reference.snapshots[idx]));
                }
            }
        }
    }
    Ok(errors)
}

fn run_pinn_direct(cfg: &ExperimentConfig, cache: &Path) -> Result<RunResult, CliError> {
    let start = Instant::now();
    let rp = residual_problem(cfg)?;
    if !matches!(cfg.training.loss, LossKind::PinnResidual { .. }) {
        return Err(CliError::Config(
            "pinn-direct mode needs training.loss = residual".into(),
        ));
    }
    let emb = cfg.embedding();
    if !emb.with_time {
        return Err(CliError::Config(
            "pinn-direct mode needs basis.scheme = pretrained (time input)".into(),
        ));
    }
    let mut tc = cfg.training.clone();
    if let LossKind::PinnResidual {
        form: PinnForm::HardConstraintIc,
    } = tc.loss
    {
        if rp.ic_laplacian.is_none() {
            tc.loss = LossKind::PinnResidual {
                form: PinnForm::SoftIc { weight: 10.0 },
            };
        }
    }
    let form = match tc.loss {
        LossKind::PinnResidual { form } => form,
        _ => unreachable!(),
    };
    let arch = cfg.architecture();
    let (params, head, _trace) = pretrain_with_head(&rp, &arch, &emb, &tc)?;
    let wall = start.elapsed().as_secs_f64();

    let times = recorded_times(&cfg.schedule, cfg.imex.dt, cfg.record_every);
    let oracle = build_error_oracle(cfg, cache, &times)?;
    let rule = cfg.build_rule()?;

    let rows = times
        .iter()
        .map(|&t| {
            let (energy, mass) = pinn_energy_mass(cfg, &params, &head, &emb, &rp, form, &rule, t);
            let error = pinn_error(cfg, &params, &head, &emb, &rp, form, &rule, &oracle, t)?;
            Ok(RunRow {
                time: t,
                energy,
                mass,
                error,
                basis_id: 0,
                wall_seconds: wall,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(RunResult {
        rows,
        warnings: Vec::new(),
    })
}

#[allow(clippy::too_many_arguments)]
fn pinn_energy_mass(
    cfg: &ExperimentConfig,
    params: &crate::basis::NetworkParams,
    head: &TrainHead,
    emb: &crate::basis::InputEmbedding,
    rp: &ResidualProblem,
    form: PinnForm,
    rule: &QuadratureRule,
    t: f64,
) -> (f64, f64) {
    let p = &cfg.problem;
    let (grad_coef, well) = match p.potential {
        Potential::None => (0.5, false),
        Potential::DoubleWell => (0.5 * p.epsilon * p.epsilon, true),
    };
    let mut energy = 0.0;
    let mut mass = 0.0;
    for (x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let (u, g) = pinn_predict_with_gradient(params, head, emb, rp, form, x, t);
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let mut e = grad_coef * g2;
        if well {
            let s = u * u - 1.0;
            e += p.kappa * 0.25 * s * s;
        }
        energy += w * e;
        mass += w * u;
    }
    (energy, mass)
}

#[allow(clippy::too_many_arguments)]
fn pinn_error(
    cfg: &ExperimentConfig,
    params: &crate::basis::NetworkParams,
    head: &TrainHead,
    emb: &crate::basis::InputEmbedding,
    rp: &ResidualProblem,
    form: PinnForm,
    rule: &QuadratureRule,
    oracle: &ErrorOracle,
    t: f64,
) -> Result<Option<f64>, CliError> {
    match oracle {
        ErrorOracle::None => Ok(None),
        ErrorOracle::Exact => {
            let exact = cfg.problem.exact.as_ref().unwrap();
            let up: Vec<f64> = rule
                .nodes
                .iter()
                .map(|x| pinn_predict(params, head, emb, rp, form, x, t))
                .collect();
            let uref: Vec<f64> = rule.nodes.iter().map(|x| exact.eval(x, t)).collect();
            Ok(Some(
                relative_l2_weighted(&up, &uref, &rule.weights)
                    .map_err(|e| CliError::Numerical(e.to_string()))?,
            ))
        }
        ErrorOracle::Spectral(reference) => {
            let pts = reference.points();
            let up: Vec<f64> = pts
                .iter()
                .map(|x| pinn_predict(params, head, emb, rp, form, x, t))
                .collect();
            let idx = reference
                .times
                .iter()
                .position(|rt| (rt - t).abs() <= 1e-9)
                .ok_or_else(|| {
                    CliError::Numerical(format!("reference has no snapshot at t = {t}"))
                })?;
            Ok(Some(relative_l2(&up, &reference.snapshots[idx])))
        }
    }
}

/// `run` command: write the trajectory CSV, honoring the energy policy.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out)?;
    let result = run_experiment(cfg, &cache_dir(out))?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let path = out.join(format!("{}-run.csv", cfg.output_name));
    std::fs::write(&path, result.to_csv())?;
    Ok(path)
}

// --- converge ----------------------------------------------------------------------

/// Result of a temporal-convergence study.
pub struct ConvergeResult {
    /// `(dt, error)` sorted by decreasing `dt`
    pub entries: Vec<(f64, f64)>,
    pub slope: f64,
    /// inclusive index range of the fitted pre-plateau window
    pub window: (usize, usize),
}

impl ConvergeResult {
    pub fn to_csv(&self) -> String {
        let mut csv = String::from("# schema: galflow-converge v1\ndt,error\n");
        for (dt, err) in &self.entries {
            let _ = writeln!(csv, "{},{}", fmt_f64(*dt), fmt_f64(*err));
        }
        let _ = writeln!(
            csv,
            "# slope = {:.4} over rows {}..{}",
            self.slope, self.window.0, self.window.1
        );
        csv
    }
}

/// Fitted log-log slope over the pre-plateau segment: the largest
/// consecutive window whose pairwise slopes vary by less than 0.3,
/// preferring the earliest (largest-dt) window on ties.
pub fn fit_slope(entries: &[(f64, f64)]) -> (f64, (usize, usize)) {
    let n = entries.len();
    assert!(n >= 2);
    let pair_slope = |i: usize, j: usize| -> f64 {
        (entries[i].1.ln() - entries[j].1.ln()) / (entries[i].0.ln() - entries[j].0.ln())
    };
    let mut best = (0usize, 1usize);
    for i in 0..n - 1 {
        let mut lo = pair_slope(i, i + 1);
        let mut hi = lo;
        let mut j = i + 1;
        while j + 1 < n {
            let s = pair_slope(j, j + 1);
            let nlo = lo.min(s);
            let nhi = hi.max(s);
            if nhi - nlo >= 0.3 {
                break;
            }
            lo = nlo;
            hi = nhi;
            j += 1;
        }
        if j - i > best.1 - best.0 {
            best = (i, j);
        }
    }
    // least-squares fit of ln(error) against ln(dt) over the window
    let (i0, i1) = best;
    let pts: Vec<(f64, f64)> = entries[i0..=i1]
        .iter()
        .map(|(dt, e)| (dt.ln(), e.ln()))
        .collect();
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    (slope, best)
}

/// Final-time solution error of one run at step size `dt`, measured against
/// the analytic solution when available and otherwise against a self-
/// reference run at `ref_dt`.
pub fn converge_study(
    cfg: &ExperimentConfig,
    dts: &[f64],
    ref_dt: f64,
    cache: &Path,
) -> Result<ConvergeResult, CliError> {
    if dts.len() < 3 {
        return Err(CliError::Config("converge needs >= 3 dt values".into()));
    }
    let mut dts = dts.to_vec();
    dts.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let rule = cfg.build_rule()?;
    let params = cfg.build_feature_params()?;
    let emb = cfg.embedding();
    let mask = boundary_mask(&cfg.problem);
    let schedule = RestartSchedule::new(cfg.schedule.clone());

    let run_at = |dt: f64| -> Result<Trajectory, CliError> {
        let mut ecfg = cfg.evolve_config();
        ecfg.imex.dt = dt;
        Ok(run_adaptive(
            &cfg.problem,
            &params,
            &emb,
            &mask,
            &rule,
            &schedule,
            &ecfg,
        )?)
    };

    // reference values at the final time, on the quadrature nodes
    let uref: Vec<f64> = if let Some(exact) = &cfg.problem.exact {
        rule.nodes
            .iter()
            .map(|x| exact.eval(x, *cfg.schedule.last().unwrap()))
            .collect()
    } else {
        let traj = run_at(ref_dt)?;
        let sol = traj.final_solution();
        rule.nodes.iter().map(|x| sol.value(x)).collect()
    };
    let _ = cache; // self-references are recomputed, not cached

    // independent runs fan out in parallel; output stays sorted by dt
    let entries: Vec<(f64, f64)> = dts
        .par_iter()
        .map(|&dt| {
            let traj = run_at(dt)?;
            let sol = traj.final_solution();
            let uh: Vec<f64> = rule.nodes.iter().map(|x| sol.value(x)).collect();
            let err = relative_l2_weighted(&uh, &uref, &rule.weights)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            Ok((dt, err))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let (slope, window) = fit_slope(&entries);
    Ok(ConvergeResult {
        entries,
        slope,
        window,
    })
}

/// `converge` command: write the order-table CSV and print the fitted slope.
pub fn cmd_converge(
    cfg: &ExperimentConfig,
    dts: &[f64],
    ref_dt: f64,
    out: &Path,
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out)?;
    let result = converge_study(cfg, dts, ref_dt, &cache_dir(out))?;
    println!("slope = {:.4}", result.slope);
    let path = out.join(format!("{}-converge.csv", cfg.output_name));
    std::fs::write(&path, result.to_csv())?;
    Ok(path)
}

// --- compare -----------------------------------------------------------------------

/// Merged long-format comparison rows.
#[derive(Debug)]
pub struct CompareResult {
    /// `(method, time, energy, error)` sorted by method, then time
    pub rows: Vec<(String, f64, f64, Option<f64>)>,
}

impl CompareResult {
    pub fn to_csv(&self) -> String {
        let mut csv = String::from("# schema: galflow-compare v1\nmethod,time,energy,error\n");
        for (method, time, energy, error) in &self.rows {
            let err = error.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(csv, "{},{},{},{}", method, fmt_f64(*time), fmt_f64(*energy), err);
        }
        csv
    }
}

/// Run every config and merge the trajectories into long format. All
/// configs must share the problem and horizon.
pub fn compare_study(
    cfgs: &[ExperimentConfig],
    cache: &Path,
) -> Result<CompareResult, CliError> {
    if cfgs.is_empty() {
        return Err(CliError::Config("compare needs at least one config".into()));
    }
    let first = &cfgs[0];
    for c in &cfgs[1..] {
        if c.problem.name != first.problem.name || c.problem.horizon != first.problem.horizon {
            return Err(CliError::Config(format!(
                "mismatched problems: {} over [0, {}] vs {} over [0, {}]",
                first.problem.name, first.problem.horizon, c.problem.name, c.problem.horizon
            )));
        }
    }
    // fan out; canonical output order is by method name
    let mut results: Vec<(String, RunResult)> = cfgs
        .par_iter()
        .map(|c| Ok((c.output_name.clone(), run_experiment(c, cache)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    results.sort_by(|a, b| a.0.cmp(&b.0));

    let mut rows = Vec::new();
    for (method, res) in &results {
        for r in &res.rows {
            rows.push((method.clone(), r.time, r.energy, r.error));
        }
    }
    Ok(CompareResult { rows })
}

/// `compare` command: write the merged CSV.
pub fn cmd_compare(cfgs: &[ExperimentConfig], out: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out)?;
    let result = compare_study(cfgs, &cache_dir(out))?;
    let name = cfgs
        .first()
        .map(|c| c.problem.name.clone())
        .unwrap_or_else(|| "compare".into());
    let path = out.join(format!("{name}-compare.csv"));
    std::fs::write(&path, result.to_csv())?;
    Ok(path)
}
