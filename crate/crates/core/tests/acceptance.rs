//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line (visible with `--nocapture`). The long-running 2D
//! bubble-merge check is `#[ignore]`d and meant for manual runs.

use std::sync::{Arc, OnceLock};

use galflow::basis::{
    init_random, BasisSet, BoundaryMask, FieldSampler, InitScheme, InputEmbedding,
    NetworkArchitecture,
};
use galflow::cli::{cmd_pretrain, converge_study, run_experiment, RunResult};
use galflow::config::ExperimentConfig;
use galflow::evolve::{initial_beta, run_adaptive, RestartSchedule, Trajectory};
use galflow::problems::{make_problem, BoundaryCondition, ProblemSpec};
use galflow::quadrature::QuadratureRule;
use galflow::reference::load_or_run;
use galflow::training::{
    flatten_params, loss_init_alignment, loss_pinn_residual, unflatten_params, LossKind,
    PinnForm, ResidualProblem, TrainHead,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion:2} {}: {name} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {name} ({detail})");
}

fn parse(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).expect("acceptance config must parse")
}

fn mask_for(problem: &ProblemSpec) -> BoundaryMask {
    match problem.bc {
        BoundaryCondition::DirichletBox => BoundaryMask::DirichletBox(problem.domain.clone()),
        BoundaryCondition::Periodic => BoundaryMask::None,
    }
}

fn scratch() -> &'static std::path::Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().expect("tempdir"))
        .path()
}

// --- criterion 1: heat temporal orders ----------------------------------------

fn heat2d_slope(kind: &str) -> f64 {
    let cfg = parse(&format!(
        "problem = \"heat_2d\"\nbasis.scheme = \"random\"\nbasis.widths = [200]\nquadrature.points = 12\nintegrator.kind = \"{kind}\"\n"
    ));
    let res = converge_study(&cfg, &[1e-1, 5e-2, 2.5e-2, 1.25e-2], 1e-4, scratch())
        .expect("converge study");
    res.slope
}

#[test]
fn criterion_01_heat_temporal_orders() {
    let s2 = heat2d_slope("dirk2");
    let s3 = heat2d_slope("dirk3");
    let pass = (s2 - 2.0).abs() <= 0.2 && (s3 - 3.0).abs() <= 0.3;
    verdict(
        1,
        "heat temporal orders",
        pass,
        &format!("dirk2 slope {s2:.3}, dirk3 slope {s3:.3}"),
    );
}

// --- criteria 2-3: heat accuracy and energy law (shared run) --------------------

fn heat3d_run() -> &'static RunResult {
    static RUN: OnceLock<RunResult> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = parse(
            "problem = \"heat_3d\"\nbasis.scheme = \"random\"\nbasis.widths = [400]\nquadrature.points = 12\nintegrator.kind = \"dirk3\"\nintegrator.dt = 1e-3\n",
        );
        run_experiment(&cfg, scratch()).expect("heat_3d run")
    })
}

#[test]
fn criterion_02_heat_accuracy() {
    let err = heat3d_run().final_error().expect("exact-solution error");
    verdict(
        2,
        "heat accuracy at t = 1",
        err <= 1e-7,
        &format!("relative L2 error {err:.3e}"),
    );
}

#[test]
fn criterion_03_heat_energy_law() {
    let d = 3.0;
    let e0 = d * std::f64::consts::PI.powi(2) * 2f64.powi(-4);
    let mut worst: f64 = 0.0;
    for row in &heat3d_run().rows {
        let expected = e0 * (-2.0 * row.time).exp();
        worst = worst.max((row.energy - expected).abs() / expected);
    }
    verdict(
        3,
        "heat energy within 2% of analytic decay",
        worst <= 0.02,
        &format!("max relative deviation {worst:.3e}"),
    );
}

// --- criterion 4: Monte Carlo regime ---------------------------------------------

#[test]
fn criterion_04_monte_carlo_heat() {
    let cfg = parse(
        "problem = \"heat_6d\"\nbasis.scheme = \"random\"\nbasis.widths = [400]\nquadrature.kind = \"monte_carlo\"\nquadrature.samples = 100000\nintegrator.kind = \"dirk3\"\nintegrator.dt = 1e-3\nreference.kind = \"none\"\nrecord_every = 100\n",
    );
    // the run itself exercises the SPD solve of the MC-symmetrized mass
    let res = run_experiment(&cfg, scratch()).expect("heat_6d MC run");
    let d = 6.0;
    let e0 = d * std::f64::consts::PI.powi(2) * 2f64.powi(-7);
    let mut worst: f64 = 0.0;
    for row in &res.rows {
        let expected = e0 * (-2.0 * row.time).exp();
        worst = worst.max((row.energy - expected).abs() / expected);
    }
    verdict(
        4,
        "6D Monte Carlo energy within 5%",
        worst <= 0.05,
        &format!("max relative deviation {worst:.3e}"),
    );
}

// --- criterion 5: 1D AC temporal orders -------------------------------------------

fn ac_pretrained_checkpoint() -> &'static std::path::Path {
    static CKPT: OnceLock<std::path::PathBuf> = OnceLock::new();
    CKPT.get_or_init(|| {
        let cfg = parse(
            "problem = \"ac_1d\"\nbasis.scheme = \"pretrained\"\nbasis.widths = [64, 64]\ntraining.steps = 500\ntraining.batch = 1024\noutput.name = \"ac-orders\"\n",
        );
        cmd_pretrain(&cfg, scratch()).expect("ac_1d pretrain")
    })
}

fn ac1d_slope(kind: &str) -> f64 {
    let ckpt = ac_pretrained_checkpoint();
    let cfg = parse(&format!(
        "problem = \"ac_1d\"\nbasis.scheme = \"pretrained\"\nbasis.widths = [64, 64]\nbasis.checkpoint = \"{}\"\nquadrature.points = 512\noverride.horizon = 0.2\nschedule = [0.0, 0.1, 0.2]\nintegrator.kind = \"{kind}\"\n",
        ckpt.display()
    ));
    let res = converge_study(&cfg, &[2e-3, 1e-3, 5e-4, 2.5e-4], 1e-5, scratch())
        .expect("ac converge study");
    res.slope
}

#[test]
fn criterion_05_allen_cahn_temporal_orders() {
    let s1 = ac1d_slope("ssi1");
    let s2 = ac1d_slope("imex_rk2");
    let pass = (s1 - 1.0).abs() <= 0.2 && (s2 - 2.0).abs() <= 0.2;
    verdict(
        5,
        "1D AC temporal orders",
        pass,
        &format!("ssi1 slope {s1:.3}, imex-rk2 slope {s2:.3}"),
    );
}

// --- criteria 6-8: shipped AC/CH configurations (shared runs) ----------------------

struct ShippedRun {
    name: &'static str,
    rule: QuadratureRule,
    traj: Trajectory,
}

fn shipped_runs() -> &'static Vec<ShippedRun> {
    static RUNS: OnceLock<Vec<ShippedRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let specs: [(&str, &str); 5] = [
            (
                "ac_1d",
                "problem = \"ac_1d\"\nbasis.scheme = \"sfli\"\nbasis.widths = [128]\nquadrature.points = 512\nintegrator.dt = 1e-3\nrecord_every = 1\nreference.kind = \"none\"\n",
            ),
            (
                "ac_2d_bubbles",
                "problem = \"ac_2d_bubbles\"\nbasis.scheme = \"sfli\"\nbasis.widths = [128]\nbasis.ortho_tol = 1e-6\nquadrature.points = 48\nintegrator.dt = 1e-3\nrecord_every = 1\nreference.kind = \"none\"\n",
            ),
            (
                "ac_2d_star",
                "problem = \"ac_2d_star\"\nbasis.scheme = \"sfli\"\nbasis.widths = [128]\nbasis.ortho_tol = 1e-6\nquadrature.points = 48\nintegrator.dt = 2e-3\nrecord_every = 1\nreference.kind = \"none\"\n",
            ),
            (
                "ac_2d_random",
                "problem = \"ac_2d_random\"\nbasis.scheme = \"sfli\"\nbasis.widths = [128]\nbasis.ortho_tol = 1e-6\nquadrature.points = 48\nintegrator.dt = 1e-3\nrecord_every = 1\nreference.kind = \"none\"\n",
            ),
            (
                "ch_1d",
                "problem = \"ch_1d\"\nbasis.scheme = \"sfli\"\nbasis.widths = [96]\nquadrature.points = 512\nintegrator.dt = 1e-3\nrecord_every = 1\nreference.kind = \"none\"\n",
            ),
        ];
        specs
            .iter()
            .map(|(name, text)| {
                let cfg = parse(text);
                let rule = cfg.build_rule().expect("rule");
                let params = cfg.build_feature_params().expect("params");
                let emb = cfg.embedding();
                let mask = mask_for(&cfg.problem);
                let schedule = RestartSchedule::new(cfg.schedule.clone());
                let traj = run_adaptive(
                    &cfg.problem,
                    &params,
                    &emb,
                    &mask,
                    &rule,
                    &schedule,
                    &cfg.evolve_config(),
                )
                .unwrap_or_else(|e| panic!("{name} run failed: {e}"));
                ShippedRun { name, rule, traj }
            })
            .collect()
    })
}

#[test]
fn criterion_06_global_energy_dissipation() {
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut worst_at = String::new();
    for run in shipped_runs() {
        // per-step dissipation within each subinterval (record_every = 1)
        for w in run.traj.trace.windows(2) {
            if w[0].segment != w[1].segment {
                continue;
            }
            let slack = (w[1].energy - w[0].energy) / (1.0 + w[0].energy.abs());
            if slack > worst {
                worst = slack;
                worst_at = format!("{} t = {:.4}", run.name, w[1].time);
            }
        }
        // continuity at every restart
        for pair in run.traj.segments.windows(2) {
            let slack =
                (pair[1].energy_in - pair[0].energy_out).abs() / (1.0 + pair[0].energy_out.abs());
            if slack > worst {
                worst = slack;
                worst_at = format!("{} restart t = {:.4}", run.name, pair[1].t_start);
            }
        }
    }
    verdict(
        6,
        "global energy dissipation",
        worst <= 1e-10,
        &format!("worst normalized increase {worst:.3e} at {worst_at}"),
    );
}

#[test]
fn criterion_07_restart_continuity() {
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for run in shipped_runs() {
        for k in 0..run.traj.segments.len() - 1 {
            let end = run.traj.solution_at_segment_end(k);
            let next = &run.traj.segments[k + 1];
            let beta0 = initial_beta(next.basis.basis_count());
            for x in &run.rule.nodes {
                let jump = (end.value(x) - next.basis.eval_solution(&beta0, x)).abs();
                if jump > worst {
                    worst = jump;
                    worst_at = format!("{} t = {:.4}", run.name, next.t_start);
                }
            }
        }
    }
    verdict(
        7,
        "solution continuity at restarts",
        worst <= 1e-12,
        &format!("max node jump {worst:.3e} {worst_at}"),
    );
}

#[test]
fn criterion_08_cahn_hilliard_mass_conservation() {
    let run = shipped_runs()
        .iter()
        .find(|r| r.name == "ch_1d")
        .expect("ch_1d run");
    let m0 = run.traj.trace[0].mass;
    let worst = run
        .traj
        .trace
        .iter()
        .map(|p| (p.mass - m0).abs())
        .fold(0.0, f64::max);
    verdict(
        8,
        "CH mass conservation",
        worst <= 1e-8 * (1.0 + m0.abs()),
        &format!("max drift {worst:.3e}, m0 = {m0:.3e}"),
    );
}

// --- criterion 9: CH accuracy ----------------------------------------------------

#[test]
fn criterion_09_cahn_hilliard_accuracy() {
    let cfg = parse(
        "problem = \"ch_1d\"\nbasis.scheme = \"sfli\"\nbasis.widths = [128]\nquadrature.points = 512\nintegrator.dt = 5e-4\nreference.grid = 512\nreference.dt = 1e-5\n",
    );
    let res = run_experiment(&cfg, scratch()).expect("ch_1d run");
    let err = res.final_error().expect("spectral reference error");
    let monotone = res
        .rows
        .windows(2)
        .all(|w| w[1].energy <= w[0].energy + 1e-10 * (1.0 + w[0].energy.abs()));

    // stiff regime: completes under the fail-fast energy policy
    let stiff = parse(
        "problem = \"ch_1d\"\noverride.epsilon = 0.01\nbasis.scheme = \"sfli\"\nbasis.widths = [128]\nquadrature.points = 512\nintegrator.dt = 5e-4\nreference.kind = \"none\"\nenergy_violation = \"fail\"\n",
    );
    let stiff_ok = run_experiment(&stiff, scratch()).is_ok();

    let pass = err <= 1e-2 && monotone && stiff_ok;
    verdict(
        9,
        "CH accuracy and stiff-regime completion",
        pass,
        &format!("error {err:.3e}, monotone {monotone}, eps = 0.01 completed {stiff_ok}"),
    );
}

// --- criterion 10: orthogonalization -----------------------------------------------

#[test]
fn criterion_10_orthogonalization() {
    use galflow::assembly::{orthogonalize, GalerkinSystem};
    use galflow::evolve::rebuild_basis_at;

    let problems = ["heat_2d", "ac_1d", "ac_2d_bubbles", "ch_1d"];
    let mut worst_offdiag: f64 = 0.0;
    let mut checked = 0usize;
    let mut all_spd = true;
    for name in problems {
        let quad = match name {
            "heat_2d" => "quadrature.points = 12",
            "ac_2d_bubbles" => "quadrature.points = 32",
            _ => "quadrature.points = 256",
        };
        for scheme in ["random", "sfli", "pretrained"] {
            let mut text = format!(
                "problem = \"{name}\"\nbasis.scheme = \"{scheme}\"\nbasis.widths = [32]\n{quad}\n"
            );
            if scheme == "pretrained" {
                // tiny budget: the checkpoint only needs to exist
                text.push_str("training.steps = 30\ntraining.batch = 64\n");
                if name == "ch_1d" {
                    text.push_str("training.loss = \"init\"\n");
                }
                text.push_str(&format!("output.name = \"ortho-{name}\"\n"));
                let cfg = parse(&text);
                let ckpt = cmd_pretrain(&cfg, scratch()).expect("ortho pretrain");
                text.push_str(&format!("basis.checkpoint = \"{}\"\n", ckpt.display()));
            }
            let cfg = parse(&text);
            let rule = cfg.build_rule().expect("rule");
            let params = cfg.build_feature_params().expect("params");
            let emb = cfg.embedding();
            let mask = mask_for(&cfg.problem);

            // feature Gram of the orthonormalized block
            let raw = BasisSet::new(params.clone(), emb.clone(), mask.clone())
                .without_constant();
            let (ortho, _) = orthogonalize(&raw, &rule, 1e-10).expect("orthogonalize");
            let phi = ortho.eval_features(&rule.nodes).expect("features");
            let r = phi.cols();
            for i in 0..r {
                for j in 0..i {
                    let mut g = 0.0;
                    for (q, w) in rule.weights.iter().enumerate() {
                        g += w * phi[(q, i)] * phi[(q, j)];
                    }
                    worst_offdiag = worst_offdiag.max(g.abs());
                }
            }

            // full augmented assembly without the ridge fallback
            let (basis, _) = rebuild_basis_at(
                &params,
                &emb,
                &mask,
                cfg.problem.ic.sampler(),
                0.0,
                &rule,
                1e-10,
            )
            .expect("rebuild");
            let sys = GalerkinSystem::assemble(&basis, &rule).expect("assemble");
            all_spd &= sys.ridge == 0.0;
            checked += 1;
        }
    }
    let pass = worst_offdiag <= 1e-8 && all_spd && checked == 12;
    verdict(
        10,
        "orthogonalization across schemes and problems",
        pass,
        &format!("{checked} combos, max off-diagonal {worst_offdiag:.3e}, no ridge {all_spd}"),
    );
}

// --- criterion 11: gradient oracle suite --------------------------------------------

/// Central finite differences on a random subset of the flattened
/// (parameters, head) vector against the reverse-mode gradient.
#[test]
fn criterion_11_gradient_oracle_suite() {
    let mut cases = 0usize;
    let mut failures = 0usize;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let ac = ResidualProblem::from_spec(&make_problem("ac_1d").unwrap()).unwrap();
    let heat = ResidualProblem::from_spec(&make_problem("heat_2d").unwrap()).unwrap();

    for case in 0..60u64 {
        let (problem, emb, loss): (&ResidualProblem, InputEmbedding, LossKind) = match case % 6 {
            0 => (
                &ac,
                InputEmbedding::identity(1).with_time(),
                LossKind::PinnResidual {
                    form: PinnForm::HardConstraintIc,
                },
            ),
            1 => (
                &ac,
                InputEmbedding::periodic(vec![2.0]).with_time(),
                LossKind::PinnResidual {
                    form: PinnForm::SoftIc { weight: 3.0 },
                },
            ),
            2 => (
                &heat,
                InputEmbedding::identity(2).with_time(),
                LossKind::PinnResidual {
                    form: PinnForm::HardConstraintIc,
                },
            ),
            3 => (
                &heat,
                InputEmbedding::identity(2).with_time(),
                LossKind::PinnResidual {
                    form: PinnForm::SoftIc { weight: 1.0 },
                },
            ),
            4 => (&ac, InputEmbedding::identity(1), LossKind::InitAlignment),
            _ => (&heat, InputEmbedding::identity(2), LossKind::InitAlignment),
        };
        let widths = if case % 2 == 0 {
            vec![12, 16]
        } else {
            vec![16]
        };
        let arch = NetworkArchitecture::new(emb.output_dim(), widths);
        let params = init_random(&arch, InitScheme::LeCun, 100 + case);
        let head = TrainHead::random(arch.feature_count(), 200 + case);
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                problem
                    .domain
                    .intervals
                    .iter()
                    .map(|&(a, b)| rng.gen_range(a..b))
                    .collect()
            })
            .collect();
        let ts: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..problem.horizon)).collect();

        let eval = |theta: &[f64], coeffs: &[f64]| -> f64 {
            let p = unflatten_params(&params, theta);
            let h = TrainHead {
                coeffs: coeffs.to_vec(),
            };
            match loss {
                LossKind::InitAlignment => {
                    let u0: Vec<f64> = xs.iter().map(|x| problem.ic.value(x)).collect();
                    loss_init_alignment(&p, &h, &emb, &xs, &u0).0
                }
                LossKind::PinnResidual { form } => {
                    let samples: Vec<(Vec<f64>, f64)> =
                        xs.iter().cloned().zip(ts.iter().cloned()).collect();
                    loss_pinn_residual(&p, &h, problem, &emb, form, &samples)
                        .unwrap()
                        .0
                }
            }
        };

        let theta0 = flatten_params(&params);
        let coeffs0 = head.coeffs.clone();
        let (gtheta, gbeta) = {
            let u0: Vec<f64> = xs.iter().map(|x| problem.ic.value(x)).collect();
            match loss {
                LossKind::InitAlignment => {
                    let (_, gt, gb) = loss_init_alignment(&params, &head, &emb, &xs, &u0);
                    (gt, gb)
                }
                LossKind::PinnResidual { form } => {
                    let samples: Vec<(Vec<f64>, f64)> =
                        xs.iter().cloned().zip(ts.iter().cloned()).collect();
                    let (_, gt, gb) =
                        loss_pinn_residual(&params, &head, problem, &emb, form, &samples).unwrap();
                    (gt, gb)
                }
            }
        };

        let h = 1e-5;
        let mut case_ok = true;
        for _probe in 0..6 {
            let idx = rng.gen_range(0..theta0.len() + coeffs0.len());
            let (mut tp, mut tm) = (theta0.clone(), theta0.clone());
            let (mut cp, mut cm) = (coeffs0.clone(), coeffs0.clone());
            let analytic = if idx < theta0.len() {
                tp[idx] += h;
                tm[idx] -= h;
                gtheta[idx]
            } else {
                cp[idx - theta0.len()] += h;
                cm[idx - theta0.len()] -= h;
                gbeta[idx - theta0.len()]
            };
            let fd = (eval(&tp, &cp) - eval(&tm, &cm)) / (2.0 * h);
            let rel = (fd - analytic).abs() / analytic.abs().max(1e-8);
            worst = worst.max(rel);
            if rel > 1e-5 {
                case_ok = false;
            }
        }
        cases += 1;
        if !case_ok {
            failures += 1;
        }
    }
    let pass = cases >= 50 && failures == 0;
    verdict(
        11,
        "gradient oracle suite",
        pass,
        &format!("{cases} randomized cases, {failures} failures, worst rel dev {worst:.3e}"),
    );
}

// --- criterion 12: baseline ordering ---------------------------------------------

#[test]
fn criterion_12_baseline_ordering() {
    let mut detail = String::new();
    let mut pass = true;
    for seed in [0u64, 1, 2] {
        // heat, d = 3
        let dnng = parse(&format!(
            "problem = \"heat_3d\"\nseed = {seed}\nbasis.scheme = \"random\"\nbasis.widths = [200]\nquadrature.points = 10\nintegrator.kind = \"dirk3\"\nintegrator.dt = 1e-3\nrecord_every = 1000\n"
        ));
        let pinn = parse(&format!(
            "problem = \"heat_3d\"\nseed = {seed}\nmode = \"pinn-direct\"\nbasis.scheme = \"pretrained\"\nbasis.widths = [32, 32]\nquadrature.points = 10\ntraining.steps = 300\ntraining.batch = 256\nintegrator.dt = 1e-3\nrecord_every = 1000\n"
        ));
        let e_dnng = run_experiment(&dnng, scratch())
            .expect("heat dnn-g")
            .final_error()
            .unwrap();
        let e_pinn = run_experiment(&pinn, scratch())
            .expect("heat pinn")
            .final_error()
            .unwrap();
        pass &= e_dnng < e_pinn;
        detail.push_str(&format!(
            "heat seed {seed}: {e_dnng:.1e} vs {e_pinn:.1e}; "
        ));

        // 1D Allen-Cahn
        let dnng = parse(&format!(
            "problem = \"ac_1d\"\nseed = {seed}\nbasis.scheme = \"sfli\"\nbasis.widths = [128]\nquadrature.points = 512\nintegrator.dt = 1e-3\nrecord_every = 200\nreference.grid = 512\nreference.dt = 1e-5\n"
        ));
        let pinn = parse(&format!(
            "problem = \"ac_1d\"\nseed = {seed}\nmode = \"pinn-direct\"\nbasis.scheme = \"pretrained\"\nbasis.widths = [32, 32]\nquadrature.points = 512\ntraining.steps = 300\ntraining.batch = 256\nintegrator.dt = 1e-3\nrecord_every = 200\nreference.grid = 512\nreference.dt = 1e-5\n"
        ));
        let e_dnng = run_experiment(&dnng, scratch())
            .expect("ac dnn-g")
            .final_error()
            .unwrap();
        let e_pinn = run_experiment(&pinn, scratch())
            .expect("ac pinn")
            .final_error()
            .unwrap();
        pass &= e_dnng < e_pinn;
        detail.push_str(&format!("ac seed {seed}: {e_dnng:.1e} vs {e_pinn:.1e}; "));
    }
    verdict(12, "DNN-G beats PINN-direct, 3/3 seeds", pass, &detail);
}

// --- criterion 13: 2D bubble merge (long-running) -------------------------------------

/// Connected components of the positive phase on a periodic sampling grid.
fn positive_components(values: &[f64], n: usize) -> usize {
    let mut label = vec![false; n * n]; // visited
    let mut count = 0;
    for start in 0..n * n {
        if values[start] <= 0.0 || label[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        label[start] = true;
        while let Some(idx) = stack.pop() {
            let (i, j) = (idx / n, idx % n);
            let neighbors = [
                ((i + 1) % n) * n + j,
                ((i + n - 1) % n) * n + j,
                i * n + (j + 1) % n,
                i * n + (j + n - 1) % n,
            ];
            for &nb in &neighbors {
                if values[nb] > 0.0 && !label[nb] {
                    label[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }
    count
}

fn grid_values(sample: &dyn Fn(&[f64]) -> f64, problem: &ProblemSpec, n: usize) -> Vec<f64> {
    let mut vals = Vec::with_capacity(n * n);
    let (ax, bx) = problem.domain.intervals[0];
    let (ay, by) = problem.domain.intervals[1];
    for i in 0..n {
        for j in 0..n {
            let x = ax + (bx - ax) * i as f64 / n as f64;
            let y = ay + (by - ay) * j as f64 / n as f64;
            vals.push(sample(&[x, y]));
        }
    }
    vals
}

#[test]
#[ignore = "long-running (up to 60 min); run with --ignored"]
fn criterion_13_bubble_merge() {
    let pre = parse(
        "problem = \"ac_2d_bubbles\"\nbasis.scheme = \"pretrained\"\nbasis.widths = [64, 256]\ntraining.steps = 1000\ntraining.batch = 2048\noutput.name = \"bubbles\"\n",
    );
    let ckpt = cmd_pretrain(&pre, scratch()).expect("bubble pretrain");
    let cfg = parse(&format!(
        "problem = \"ac_2d_bubbles\"\nbasis.scheme = \"pretrained\"\nbasis.widths = [64, 256]\nbasis.checkpoint = \"{}\"\nquadrature.points = 64\nintegrator.dt = 1e-3\nrecord_every = 100\nreference.kind = \"none\"\n",
        ckpt.display()
    ));
    let rule = cfg.build_rule().expect("rule");
    let params = cfg.build_feature_params().expect("params");
    let emb = cfg.embedding();
    let mask = mask_for(&cfg.problem);
    let schedule = RestartSchedule::new(cfg.schedule.clone());
    let traj = run_adaptive(
        &cfg.problem,
        &params,
        &emb,
        &mask,
        &rule,
        &schedule,
        &cfg.evolve_config(),
    )
    .expect("bubble run");
    let _ = rule;

    // two bubbles initially, one connected positive region after the merge
    let ic: Arc<dyn FieldSampler> = cfg.problem.ic.sampler();
    let initial = grid_values(&|x: &[f64]| ic.value(x), &cfg.problem, 96);
    let final_sol = traj.final_solution();
    let merged = grid_values(&|x: &[f64]| final_sol.value(x), &cfg.problem, 96);
    let comp0 = positive_components(&initial, 96);
    let comp1 = positive_components(&merged, 96);

    // energy against the 256^2 spectral reference at the restart instants
    let reference = load_or_run(scratch(), &cfg.problem, 256, 2e-4, &cfg.schedule)
        .expect("spectral reference");
    let mut worst: f64 = 0.0;
    for (idx, &t) in cfg.schedule.iter().enumerate() {
        let eref = reference.energy(idx, cfg.problem.epsilon, cfg.problem.kappa);
        let point = traj
            .trace
            .iter()
            .min_by(|a, b| {
                (a.time - t)
                    .abs()
                    .partial_cmp(&(b.time - t).abs())
                    .unwrap()
            })
            .unwrap();
        worst = worst.max((point.energy - eref).abs() / eref.abs().max(1e-12));
    }
    let pass = comp0 == 2 && comp1 == 1 && worst <= 0.05;
    verdict(
        13,
        "2D AC bubble merge",
        pass,
        &format!("components {comp0} -> {comp1}, worst energy deviation {worst:.3e}"),
    );
}
