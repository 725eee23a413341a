//! Offline pre-training of the feature network.
//!
//! The PINN residual loss needs the network value, its time derivative, and
//! its spatial Laplacian at each sample. The forward pass therefore carries
//! three channels per layer: the activation `z`, its Jacobian `G` with
//! respect to the raw inputs, and the spatial Laplacian `h`. For `tanh`,
//!
//! ```text
//! a  = W z_in + b          Ga = W G_in          ha = W h_in
//! z  = tanh(a)             G  = s . Ga          h_k = s''_k q_k + s_k ha_k
//! ```
//!
//! with `s = 1 - z^2`, `s'' = -2 z s`, and `q_k` the squared spatial norm of
//! row `k` of `Ga`. The backward pass reverses these assignments exactly, so
//! parameter gradients of the residual loss are analytic.

use crate::basis::{FieldSampler, InputEmbedding, Layer, NetworkArchitecture, NetworkParams};
use crate::linalg::DenseMatrix;
use crate::problems::{x2_cospix_laplacian, InitialCondition, Metric, Potential, ProblemSpec};
use crate::quadrature::Box;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite gradient encountered")]
    NonFiniteGradient,
    #[error("unsupported problem for the residual loss: {0}")]
    UnsupportedProblem(String),
}

// --- parameter flattening ----------------------------------------------------

/// Flatten layer weights and biases into one contiguous vector
/// (layer order, weight row-major then bias).
pub fn flatten_params(params: &NetworkParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.param_count());
    for layer in &params.layers {
        out.extend_from_slice(layer.weight.entries());
        out.extend_from_slice(&layer.bias);
    }
    out
}

/// Rebuild parameters from a flat vector with the template's shapes.
pub fn unflatten_params(template: &NetworkParams, flat: &[f64]) -> NetworkParams {
    let mut layers = Vec::with_capacity(template.layers.len());
    let mut off = 0;
    for layer in &template.layers {
        let (r, c) = (layer.weight.rows(), layer.weight.cols());
        let weight = DenseMatrix::from_rows(r, c, flat[off..off + r * c].to_vec());
        off += r * c;
        let bias = flat[off..off + r].to_vec();
        off += r;
        layers.push(Layer { weight, bias });
    }
    assert_eq!(off, flat.len());
    NetworkParams { layers }
}

// --- Adam --------------------------------------------------------------------

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update; returns the updated parameters and state.
pub fn adam_step(
    params: &[f64],
    grads: &[f64],
    state: &AdamState,
    lr: f64,
) -> Result<(Vec<f64>, AdamState), TrainError> {
    assert_eq!(params.len(), grads.len());
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient);
    }
    let mut st = state.clone();
    st.step_count += 1;
    let t = st.step_count as f64;
    let bc1 = 1.0 - st.beta1.powf(t);
    let bc2 = 1.0 - st.beta2.powf(t);
    let mut out = params.to_vec();
    for i in 0..params.len() {
        st.first_moment[i] = st.beta1 * st.first_moment[i] + (1.0 - st.beta1) * grads[i];
        st.second_moment[i] =
            st.beta2 * st.second_moment[i] + (1.0 - st.beta2) * grads[i] * grads[i];
        let m_hat = st.first_moment[i] / bc1;
        let v_hat = st.second_moment[i] / bc2;
        out[i] -= lr * m_hat / (v_hat.sqrt() + st.eps);
    }
    Ok((out, st))
}

/// Cosine-decay schedule: `lr0 * (1 + cos(pi step / total)) / 2`.
pub fn cosine_lr(step: u64, total: u64, lr0: f64) -> f64 {
    assert!(step <= total);
    let x = std::f64::consts::PI * step as f64 / total as f64;
    (lr0 * 0.5 * (1.0 + x.cos())).max(0.0)
}

// --- channel forward / backward ---------------------------------------------

/// Per-layer quantities kept for the backward pass.
struct LayerTrace {
    z_in: Vec<f64>,
    g_in: Vec<f64>,
    h_in: Vec<f64>,
    z_out: Vec<f64>,
    ga: Vec<f64>,
    ha: Vec<f64>,
}

/// Forward pass output at one sample: features with input-derivative and
/// Laplacian channels.
struct ChannelTrace {
    layers: Vec<LayerTrace>,
    /// feature values, last layer
    z: Vec<f64>,
    /// d features / d inputs, m x nd
    g: Vec<f64>,
    /// spatial Laplacian of features
    h: Vec<f64>,
}

/// `nd` = number of raw input derivative directions (spatial dim, plus one
/// for time when the embedding carries it). Spatial directions come first.
fn channel_forward(
    params: &NetworkParams,
    embedding: &InputEmbedding,
    x: &[f64],
    t: f64,
) -> ChannelTrace {
    let d = embedding.spatial_dim;
    let nd = d + usize::from(embedding.with_time);
    let (z0, jac0, lap0) = embedding.embed(x, t);
    let e = z0.len();
    let mut g0 = vec![0.0; e * nd];
    for r in 0..e {
        for c in 0..d {
            g0[r * nd + c] = jac0[r * d + c];
        }
    }
    if embedding.with_time {
        // time coordinate passes through identity
        g0[(e - 1) * nd + d] = 1.0;
    }
    let mut z = z0;
    let mut g = g0;
    let mut h = lap0;

    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let w = &layer.weight;
        let (out, inp) = (w.rows(), w.cols());
        let mut a = layer.bias.clone();
        let mut ga = vec![0.0; out * nd];
        let mut ha = vec![0.0; out];
        for i in 0..out {
            let wr = w.row(i);
            let mut s = a[i];
            let mut hs = 0.0;
            for k in 0..inp {
                s += wr[k] * z[k];
                hs += wr[k] * h[k];
            }
            a[i] = s;
            ha[i] = hs;
            for c in 0..nd {
                let mut gg = 0.0;
                for k in 0..inp {
                    gg += wr[k] * g[k * nd + c];
                }
                ga[i * nd + c] = gg;
            }
        }
        let mut z_out = Vec::with_capacity(out);
        let mut g_out = vec![0.0; out * nd];
        let mut h_out = vec![0.0; out];
        for i in 0..out {
            let v = a[i].tanh();
            let s = 1.0 - v * v;
            let mut q = 0.0;
            for c in 0..d {
                q += ga[i * nd + c] * ga[i * nd + c];
            }
            z_out.push(v);
            for c in 0..nd {
                g_out[i * nd + c] = s * ga[i * nd + c];
            }
            h_out[i] = -2.0 * v * s * q + s * ha[i];
        }
        layers.push(LayerTrace {
            z_in: std::mem::take(&mut z),
            g_in: std::mem::take(&mut g),
            h_in: std::mem::take(&mut h),
            z_out: z_out.clone(),
            ga,
            ha,
        });
        z = z_out;
        g = g_out;
        h = h_out;
    }
    ChannelTrace { layers, z, g, h }
}

/// Backward pass; adds parameter gradients (flat layout) into `grad_acc`.
/// `z_bar`, `g_bar`, `h_bar` are the adjoints of the last layer's channels.
fn channel_backward(
    params: &NetworkParams,
    embedding: &InputEmbedding,
    trace: &ChannelTrace,
    mut z_bar: Vec<f64>,
    mut g_bar: Vec<f64>,
    mut h_bar: Vec<f64>,
    grad_acc: &mut [f64],
) {
    let d = embedding.spatial_dim;
    let nd = d + usize::from(embedding.with_time);
    // flat offsets per layer
    let mut offsets = Vec::with_capacity(params.layers.len());
    let mut off = 0;
    for layer in &params.layers {
        offsets.push(off);
        off += layer.weight.rows() * layer.weight.cols() + layer.bias.len();
    }

    for (li, layer) in params.layers.iter().enumerate().rev() {
        let tr = &trace.layers[li];
        let w = &layer.weight;
        let (out, inp) = (w.rows(), w.cols());
        let mut s_bar = vec![0.0; out];
        let mut ga_bar = vec![0.0; out * nd];
        let mut ha_bar = vec![0.0; out];
        let mut a_bar = vec![0.0; out];
        for i in 0..out {
            let v = tr.z_out[i];
            let s = 1.0 - v * v;
            let spp = -2.0 * v * s;
            let mut q = 0.0;
            for c in 0..d {
                q += tr.ga[i * nd + c] * tr.ga[i * nd + c];
            }
            let hb = h_bar[i];
            // h = spp q + s ha
            ha_bar[i] = s * hb;
            let q_bar = spp * hb;
            let spp_bar = q * hb;
            s_bar[i] += tr.ha[i] * hb;
            // spp = -2 z s
            z_bar[i] += -2.0 * s * spp_bar;
            s_bar[i] += -2.0 * v * spp_bar;
            // G = s Ga
            for c in 0..nd {
                let gb = g_bar[i * nd + c];
                ga_bar[i * nd + c] += s * gb;
                s_bar[i] += gb * tr.ga[i * nd + c];
            }
            // q = sum_spatial Ga^2
            for c in 0..d {
                ga_bar[i * nd + c] += 2.0 * tr.ga[i * nd + c] * q_bar;
            }
            // s = 1 - z^2, z = tanh(a)
            z_bar[i] += -2.0 * v * s_bar[i];
            a_bar[i] = s * z_bar[i];
        }

        // parameter gradients and upstream adjoints
        let base = offsets[li];
        let mut z_in_bar = vec![0.0; inp];
        let mut g_in_bar = vec![0.0; inp * nd];
        let mut h_in_bar = vec![0.0; inp];
        for i in 0..out {
            let wr = w.row(i);
            let wbase = base + i * inp;
            for k in 0..inp {
                let mut wg = a_bar[i] * tr.z_in[k] + ha_bar[i] * tr.h_in[k];
                for c in 0..nd {
                    wg += ga_bar[i * nd + c] * tr.g_in[k * nd + c];
                }
                grad_acc[wbase + k] += wg;
                z_in_bar[k] += wr[k] * a_bar[i];
                h_in_bar[k] += wr[k] * ha_bar[i];
                for c in 0..nd {
                    g_in_bar[k * nd + c] += wr[k] * ga_bar[i * nd + c];
                }
            }
            grad_acc[base + out * inp + i] += a_bar[i];
        }
        z_bar = z_in_bar;
        g_bar = g_in_bar;
        h_bar = h_in_bar;
    }
}

// --- losses -------------------------------------------------------------------

/// Auxiliary linear head used jointly with the network during optimization.
#[derive(Debug, Clone)]
pub struct TrainHead {
    pub coeffs: Vec<f64>,
}

impl TrainHead {
    pub fn random(m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = (1.0 / m as f64).sqrt();
        Self {
            coeffs: (0..m)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    std * z
                })
                .collect(),
        }
    }
}

/// Mean-squared initial-condition alignment loss
/// `(1/N) sum |beta . Phi(x_i) - u0(x_i)|^2` with reverse-mode gradients
/// with respect to both the network parameters and the head.
pub fn loss_init_alignment(
    params: &NetworkParams,
    head: &TrainHead,
    embedding: &InputEmbedding,
    sample_points: &[Vec<f64>],
    u0_values: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(sample_points.len(), u0_values.len());
    assert!(!sample_points.is_empty());
    let np = params.param_count();
    let n = sample_points.len();
    let inv_n = 1.0 / n as f64;

    let block = 128;
    let results: Vec<(f64, Vec<f64>, Vec<f64>)> = sample_points
        .par_chunks(block)
        .zip(u0_values.par_chunks(block))
        .map(|(xs, us)| {
            let mut loss = 0.0;
            let mut gtheta = vec![0.0; np];
            let mut gbeta = vec![0.0; head.coeffs.len()];
            for (x, &u0) in xs.iter().zip(us) {
                let tr = channel_forward(params, embedding, x, 0.0);
                let pred: f64 = tr.z.iter().zip(&head.coeffs).map(|(z, b)| z * b).sum();
                let r = pred - u0;
                loss += inv_n * r * r;
                let seed = 2.0 * inv_n * r;
                let m = tr.z.len();
                let nd = embedding.spatial_dim + usize::from(embedding.with_time);
                let z_bar: Vec<f64> = head.coeffs.iter().map(|b| seed * b).collect();
                for k in 0..m {
                    gbeta[k] += seed * tr.z[k];
                }
                channel_backward(
                    params,
                    embedding,
                    &tr,
                    z_bar,
                    vec![0.0; m * nd],
                    vec![0.0; m],
                    &mut gtheta,
                );
            }
            (loss, gtheta, gbeta)
        })
        .collect();

    reduce_blocks(results, np, head.coeffs.len())
}

fn reduce_blocks(
    results: Vec<(f64, Vec<f64>, Vec<f64>)>,
    np: usize,
    nb: usize,
) -> (f64, Vec<f64>, Vec<f64>) {
    let mut loss = 0.0;
    let mut gtheta = vec![0.0; np];
    let mut gbeta = vec![0.0; nb];
    for (l, gt, gb) in results {
        loss += l;
        for (a, b) in gtheta.iter_mut().zip(&gt) {
            *a += b;
        }
        for (a, b) in gbeta.iter_mut().zip(&gb) {
            *a += b;
        }
    }
    (loss, gtheta, gbeta)
}

/// Strong-form residual kind for the PINN loss.
#[derive(Debug, Clone, Copy)]
pub enum ResidualKind {
    /// `u_t = c lap u`
    Heat { diffusion: f64 },
    /// `u_t = eps^2 lap u - kappa (u^3 - u)`
    AllenCahn { epsilon: f64, kappa: f64 },
}

impl ResidualKind {
    /// residual value and its partial derivatives wrt (u, u_t, lap u)
    fn residual(&self, u: f64, u_t: f64, lap: f64) -> (f64, f64, f64, f64) {
        match *self {
            ResidualKind::Heat { diffusion } => (u_t - diffusion * lap, 0.0, 1.0, -diffusion),
            ResidualKind::AllenCahn { epsilon, kappa } => {
                let e2 = epsilon * epsilon;
                let r = u_t - e2 * lap + kappa * (u * u * u - u);
                (r, kappa * (3.0 * u * u - 1.0), 1.0, -e2)
            }
        }
    }
}

/// How the PINN representation handles the initial condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PinnForm {
    /// `u_p = u0(x) + t * N(x, t)` — exact at `t = 0`
    HardConstraintIc,
    /// `u_p = N(x, t)` plus a weighted alignment penalty at `t = 0`
    SoftIc { weight: f64 },
}

/// Strong-form residual problem for pre-training, derived from a
/// [`ProblemSpec`]. The `H^{-1}` metric is rejected (the fourth-order
/// residual is out of scope for training).
pub struct ResidualProblem {
    pub spatial_dim: usize,
    pub domain: Box,
    pub horizon: f64,
    pub kind: ResidualKind,
    pub ic: Arc<dyn FieldSampler>,
    /// Laplacian of the initial condition; required for the hard constraint.
    pub ic_laplacian: Option<Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>>,
}

impl ResidualProblem {
    pub fn from_spec(p: &ProblemSpec) -> Result<Self, TrainError> {
        if p.metric == Metric::Hminus1 {
            return Err(TrainError::UnsupportedProblem(format!(
                "{} uses the H^-1 metric",
                p.name
            )));
        }
        let kind = match p.potential {
            Potential::None => ResidualKind::Heat {
                diffusion: p.diffusion_scale,
            },
            Potential::DoubleWell => ResidualKind::AllenCahn {
                epsilon: p.epsilon,
                kappa: p.kappa,
            },
        };
        let ic_laplacian: Option<Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>> = match &p.ic {
            InitialCondition::ProductCosine { dim } => {
                let d = *dim;
                let pi2 = std::f64::consts::PI.powi(2);
                Some(Arc::new(move |x: &[f64]| {
                    -(d as f64) * pi2 * crate::problems::heat_exact(x, 0.0)
                }))
            }
            InitialCondition::X2CosPiX => Some(Arc::new(|x: &[f64]| x2_cospix_laplacian(x[0]))),
            InitialCondition::Cosine1d => {
                let pi2 = std::f64::consts::PI.powi(2);
                Some(Arc::new(move |x: &[f64]| {
                    -pi2 * (std::f64::consts::PI * x[0]).cos()
                }))
            }
            _ => None,
        };
        Ok(Self {
            spatial_dim: p.spatial_dim,
            domain: p.domain.clone(),
            horizon: p.horizon,
            kind,
            ic: p.ic.sampler(),
            ic_laplacian,
        })
    }
}

/// Monte Carlo mean of the squared strong-form residual over the given
/// space-time samples, with reverse-mode gradients wrt `(theta, beta)`.
/// For [`PinnForm::SoftIc`] the ic penalty is evaluated at the same spatial
/// points at `t = 0`.
pub fn loss_pinn_residual(
    params: &NetworkParams,
    head: &TrainHead,
    problem: &ResidualProblem,
    embedding: &InputEmbedding,
    form: PinnForm,
    samples: &[(Vec<f64>, f64)],
) -> Result<(f64, Vec<f64>, Vec<f64>), TrainError> {
    assert!(embedding.with_time, "PINN training needs a time input");
    assert!(!samples.is_empty());
    if let PinnForm::HardConstraintIc = form {
        assert!(
            problem.ic_laplacian.is_some(),
            "hard constraint needs an analytic ic Laplacian"
        );
    }
    let np = params.param_count();
    let n = samples.len();
    let inv_n = 1.0 / n as f64;
    let d = problem.spatial_dim;
    let nd = d + 1;
    let m = head.coeffs.len();

    let block = 128;
    let results: Vec<(f64, Vec<f64>, Vec<f64>)> = samples
        .par_chunks(block)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut gtheta = vec![0.0; np];
            let mut gbeta = vec![0.0; m];
            for (x, t) in chunk {
                let tr = channel_forward(params, embedding, x, *t);
                let nval: f64 = tr.z.iter().zip(&head.coeffs).map(|(z, b)| z * b).sum();
                let n_t: f64 = (0..m).map(|k| tr.g[k * nd + d] * head.coeffs[k]).sum();
                let n_lap: f64 = tr.h.iter().zip(&head.coeffs).map(|(h, b)| h * b).sum();

                // assemble (u, u_t, lap u) from the representation
                let (u, u_t, lap, dn, dn_t, dn_lap);
                match form {
                    PinnForm::HardConstraintIc => {
                        let u0 = problem.ic.value(x);
                        let lap0 = (problem.ic_laplacian.as_ref().unwrap())(x);
                        u = u0 + t * nval;
                        u_t = nval + t * n_t;
                        lap = lap0 + t * n_lap;
                        dn = *t;
                        dn_t = *t;
                        dn_lap = *t;
                    }
                    PinnForm::SoftIc { .. } => {
                        u = nval;
                        u_t = n_t;
                        lap = n_lap;
                        dn = 1.0;
                        dn_t = 1.0;
                        dn_lap = 1.0;
                    }
                }
                let (r, dr_du, dr_dut, dr_dlap) = problem.kind.residual(u, u_t, lap);
                loss += inv_n * r * r;
                let base = 2.0 * inv_n * r;
                // adjoints of (N, N_t, lap N); the hard form adds dr/du * dN
                // through u_t = N + t N_t
                let (n_bar, nt_bar, nlap_bar) = match form {
                    PinnForm::HardConstraintIc => (
                        base * (dr_du * dn + dr_dut),
                        base * dr_dut * dn_t,
                        base * dr_dlap * dn_lap,
                    ),
                    PinnForm::SoftIc { .. } => (
                        base * dr_du * dn,
                        base * dr_dut * dn_t,
                        base * dr_dlap * dn_lap,
                    ),
                };

                let mut z_bar = vec![0.0; m];
                let mut g_bar = vec![0.0; m * nd];
                let mut h_bar = vec![0.0; m];
                for k in 0..m {
                    let b = head.coeffs[k];
                    z_bar[k] = n_bar * b;
                    g_bar[k * nd + d] = nt_bar * b;
                    h_bar[k] = nlap_bar * b;
                    gbeta[k] +=
                        n_bar * tr.z[k] + nt_bar * tr.g[k * nd + d] + nlap_bar * tr.h[k];
                }
                channel_backward(params, embedding, &tr, z_bar, g_bar, h_bar, &mut gtheta);

                // soft ic penalty at (x, 0)
                if let PinnForm::SoftIc { weight } = form {
                    let tr0 = channel_forward(params, embedding, x, 0.0);
                    let pred: f64 = tr0.z.iter().zip(&head.coeffs).map(|(z, b)| z * b).sum();
                    let ric = pred - problem.ic.value(x);
                    loss += weight * inv_n * ric * ric;
                    let seed = 2.0 * weight * inv_n * ric;
                    let z0_bar: Vec<f64> = head.coeffs.iter().map(|b| seed * b).collect();
                    for k in 0..m {
                        gbeta[k] += seed * tr0.z[k];
                    }
                    channel_backward(
                        params,
                        embedding,
                        &tr0,
                        z0_bar,
                        vec![0.0; m * nd],
                        vec![0.0; m],
                        &mut gtheta,
                    );
                }
            }
            (loss, gtheta, gbeta)
        })
        .collect();

    let (loss, gtheta, gbeta) = reduce_blocks(results, np, m);
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteGradient);
    }
    Ok((loss, gtheta, gbeta))
}

// --- pretraining driver --------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    InitAlignment,
    PinnResidual { form: PinnForm },
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr0: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 2048,
            lr0: 1e-3,
            loss: LossKind::PinnResidual {
                form: PinnForm::SoftIc { weight: 10.0 },
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

/// Adam pre-training loop; samples are regenerated every step. Returns the
/// hidden-layer parameters (the head is discarded) and the loss trace.
pub fn pretrain(
    problem: &ResidualProblem,
    arch: &NetworkArchitecture,
    embedding: &InputEmbedding,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, Vec<TraceEntry>), TrainError> {
    assert!(cfg.batch_size >= 1);
    assert_eq!(arch.input_dim, embedding.output_dim());
    let params0 = crate::basis::init_random(arch, crate::basis::InitScheme::LeCun, cfg.seed);
    let head0 = TrainHead::random(arch.feature_count(), cfg.seed.wrapping_add(1));

    let np = params0.param_count();
    let mut flat = flatten_params(&params0);
    flat.extend_from_slice(&head0.coeffs);
    let mut adam = AdamState::new(flat.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut trace = Vec::new();

    let mut params = params0;
    let mut head = head0;
    for step in 0..cfg.steps {
        let lr = cosine_lr(step, cfg.steps.max(1), cfg.lr0);
        let (loss, gtheta, gbeta) = match cfg.loss {
            LossKind::InitAlignment => {
                let xs: Vec<Vec<f64>> = (0..cfg.batch_size)
                    .map(|_| sample_point(&mut rng, &problem.domain))
                    .collect();
                let u0: Vec<f64> = xs.iter().map(|x| problem.ic.value(x)).collect();
                loss_init_alignment(&params, &head, embedding, &xs, &u0)
            }
            LossKind::PinnResidual { form } => {
                let samples: Vec<(Vec<f64>, f64)> = (0..cfg.batch_size)
                    .map(|_| {
                        (
                            sample_point(&mut rng, &problem.domain),
                            rng.gen_range(0.0..problem.horizon),
                        )
                    })
                    .collect();
                loss_pinn_residual(&params, &head, problem, embedding, form, &samples)?
            }
        };
        trace.push(TraceEntry { step, lr, loss });

        let mut grads = gtheta;
        grads.extend_from_slice(&gbeta);
        let (new_flat, new_adam) = adam_step(&flat, &grads, &adam, lr)?;
        flat = new_flat;
        adam = new_adam;
        params = unflatten_params(&params, &flat[..np]);
        head.coeffs.copy_from_slice(&flat[np..]);
    }
    Ok((params, trace))
}

fn sample_point(rng: &mut ChaCha8Rng, domain: &Box) -> Vec<f64> {
    domain
        .intervals
        .iter()
        .map(|&(a, b)| rng.gen_range(a..b))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::InitScheme;
    use crate::problems::make_problem;

    fn fd_check(
        loss_fn: &dyn Fn(&NetworkParams, &TrainHead) -> (f64, Vec<f64>, Vec<f64>),
        params: &NetworkParams,
        head: &TrainHead,
        n_probes: usize,
        seed: u64,
    ) {
        let (_, gtheta, gbeta) = loss_fn(params, head);
        let np = params.param_count();
        let flat = flatten_params(params);
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_probes {
            let total = np + head.coeffs.len();
            let idx = rng.gen_range(0..total);
            let (lp, lm) = if idx < np {
                let mut fp = flat.clone();
                fp[idx] += h;
                let pp = unflatten_params(params, &fp);
                fp[idx] -= 2.0 * h;
                let pm = unflatten_params(params, &fp);
                (loss_fn(&pp, head).0, loss_fn(&pm, head).0)
            } else {
                let mut hp = head.clone();
                hp.coeffs[idx - np] += h;
                let mut hm = head.clone();
                hm.coeffs[idx - np] -= h;
                (loss_fn(params, &hp).0, loss_fn(params, &hm).0)
            };
            let fd = (lp - lm) / (2.0 * h);
            let an = if idx < np {
                gtheta[idx]
            } else {
                gbeta[idx - np]
            };
            let scale = fd.abs().max(an.abs()).max(1e-8);
            assert!(
                (fd - an).abs() / scale < 1e-5,
                "gradient mismatch at index {idx}: fd {fd:.3e} vs analytic {an:.3e}"
            );
        }
    }

    fn small_setup(with_time: bool, seed: u64) -> (NetworkParams, TrainHead, InputEmbedding) {
        let emb = if with_time {
            InputEmbedding::identity(1).with_time()
        } else {
            InputEmbedding::identity(1)
        };
        let arch = NetworkArchitecture::new(emb.output_dim(), vec![8, 8]);
        let params = init_random_nonzero_bias(&arch, seed);
        let head = TrainHead::random(arch.feature_count(), seed + 1);
        (params, head, emb)
    }

    // random biases too, so the FD probe exercises every parameter class
    fn init_random_nonzero_bias(arch: &NetworkArchitecture, seed: u64) -> NetworkParams {
        let mut params = crate::basis::init_random(arch, InitScheme::LeCun, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for layer in &mut params.layers {
            for b in &mut layer.bias {
                *b = 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        params
    }

    #[test]
    fn init_alignment_gradients_match_finite_differences() {
        let problem = make_problem("ac_1d").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..10u64 {
            let (params, head, emb) = small_setup(false, 100 + case);
            let xs: Vec<Vec<f64>> = (0..16).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
            let u0: Vec<f64> = xs.iter().map(|x| problem.ic.sampler().value(x)).collect();
            let f = |p: &NetworkParams, h: &TrainHead| loss_init_alignment(p, h, &emb, &xs, &u0);
            fd_check(&f, &params, &head, 6, 500 + case);
        }
    }

    #[test]
    fn pinn_residual_gradients_match_finite_differences_allen_cahn() {
        let spec = make_problem("ac_1d").unwrap();
        let problem = ResidualProblem::from_spec(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (ci, form) in [
            PinnForm::HardConstraintIc,
            PinnForm::SoftIc { weight: 5.0 },
        ]
        .iter()
        .enumerate()
        {
            for case in 0..10u64 {
                let (params, head, emb) = small_setup(true, 200 + case);
                let samples: Vec<(Vec<f64>, f64)> = (0..12)
                    .map(|_| (vec![rng.gen_range(-1.0..1.0)], rng.gen_range(0.0..1.0)))
                    .collect();
                let f = |p: &NetworkParams, h: &TrainHead| {
                    loss_pinn_residual(p, h, &problem, &emb, *form, &samples).unwrap()
                };
                fd_check(&f, &params, &head, 6, 900 + 37 * ci as u64 + case);
            }
        }
    }

    #[test]
    fn pinn_residual_gradients_match_finite_differences_heat() {
        let spec = make_problem("heat_2d").unwrap();
        let problem = ResidualProblem::from_spec(&spec).unwrap();
        let emb = InputEmbedding::identity(2).with_time();
        let arch = NetworkArchitecture::new(emb.output_dim(), vec![8, 8]);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for case in 0..5u64 {
            let params = init_random_nonzero_bias(&arch, 300 + case);
            let head = TrainHead::random(arch.feature_count(), 301 + case);
            let samples: Vec<(Vec<f64>, f64)> = (0..10)
                .map(|_| {
                    (
                        vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
                        rng.gen_range(0.0..1.0),
                    )
                })
                .collect();
            let f = |p: &NetworkParams, h: &TrainHead| {
                loss_pinn_residual(p, h, &problem, &emb, PinnForm::HardConstraintIc, &samples)
                    .unwrap()
            };
            fd_check(&f, &params, &head, 6, 1300 + case);
        }
    }

    #[test]
    fn hard_constraint_is_exact_at_t_zero() {
        let spec = make_problem("ac_1d").unwrap();
        let problem = ResidualProblem::from_spec(&spec).unwrap();
        let (params, head, emb) = small_setup(true, 42);
        for x in [-0.7, 0.0, 0.31] {
            let u = pinn_predict(
                &params,
                &head,
                &emb,
                &problem,
                PinnForm::HardConstraintIc,
                &[x],
                0.0,
            );
            assert!((u - problem.ic.value(&[x])).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_matches_scalar_oracle() {
        // minimize f(x) = (x - 3)^2 from x = 0; a hand-rolled scalar Adam
        // with the same constants must agree bit-for-bit.
        let mut x = vec![0.0f64];
        let mut st = AdamState::new(1);
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut x_ref = 0.0f64;
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.1);
        for t in 1..=200u32 {
            let g = 2.0 * (x[0] - 3.0);
            let (nx, nst) = adam_step(&x, &[g], &st, lr).unwrap();
            x = nx;
            st = nst;

            let g_ref = 2.0 * (x_ref - 3.0);
            m = b1 * m + (1.0 - b1) * g_ref;
            v = b2 * v + (1.0 - b2) * g_ref * g_ref;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            x_ref -= lr * mh / (vh.sqrt() + eps);
            // powi vs powf bias-correction differ in the last ulp or two
            assert!((x[0] - x_ref).abs() <= 1e-12 * x_ref.abs().max(1.0));
        }
        assert!((x[0] - 3.0).abs() < 0.2);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let st = AdamState::new(1);
        assert!(matches!(
            adam_step(&[0.0], &[f64::NAN], &st, 0.1),
            Err(TrainError::NonFiniteGradient)
        ));
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(0, 100, 1e-3), 1e-3);
        assert!((cosine_lr(50, 100, 1e-3) - 5e-4).abs() < 1e-18);
        assert!(cosine_lr(100, 100, 1e-3).abs() < 1e-19);
    }

    #[test]
    fn flatten_roundtrip() {
        let arch = NetworkArchitecture::new(3, vec![5, 4]);
        let params = crate::basis::init_random(&arch, InitScheme::Glorot, 9);
        let rt = unflatten_params(&params, &flatten_params(&params));
        for (a, b) in params.layers.iter().zip(&rt.layers) {
            assert_eq!(a.weight.entries(), b.weight.entries());
            assert_eq!(a.bias, b.bias);
        }
    }

    #[test]
    fn pretrain_is_deterministic_and_decreases_loss() {
        let spec = make_problem("ac_1d").unwrap();
        let problem = ResidualProblem::from_spec(&spec).unwrap();
        let emb = InputEmbedding::identity(1).with_time();
        let arch = NetworkArchitecture::new(emb.output_dim(), vec![12, 12]);
        let cfg = TrainConfig {
            steps: 60,
            batch_size: 64,
            lr0: 3e-3,
            loss: LossKind::PinnResidual {
                form: PinnForm::HardConstraintIc,
            },
            seed: 4,
        };
        let (p1, trace1) = pretrain(&problem, &arch, &emb, &cfg).unwrap();
        let (p2, trace2) = pretrain(&problem, &arch, &emb, &cfg).unwrap();
        for (a, b) in p1.layers.iter().zip(&p2.layers) {
            assert_eq!(a.weight.entries(), b.weight.entries());
        }
        assert_eq!(trace1.len(), trace2.len());
        for (a, b) in trace1.iter().zip(&trace2) {
            assert_eq!(a.loss, b.loss);
        }
        let head_mean = |tr: &[TraceEntry]| {
            tr.iter().map(|e| e.loss).sum::<f64>() / tr.len() as f64
        };
        assert!(
            head_mean(&trace1[50..]) < head_mean(&trace1[..10]),
            "loss should decrease over training"
        );
    }

    #[test]
    fn hminus1_metric_is_rejected() {
        let spec = make_problem("ch_1d").unwrap();
        assert!(matches!(
            ResidualProblem::from_spec(&spec),
            Err(TrainError::UnsupportedProblem(_))
        ));
    }
}

/// Evaluate a trained PINN representation `u_p` at one space-time point,
/// used by the PINN-direct baseline.
pub fn pinn_predict(
    params: &NetworkParams,
    head: &TrainHead,
    embedding: &InputEmbedding,
    problem: &ResidualProblem,
    form: PinnForm,
    x: &[f64],
    t: f64,
) -> f64 {
    let tr = channel_forward(params, embedding, x, t);
    let nval: f64 = tr.z.iter().zip(&head.coeffs).map(|(z, b)| z * b).sum();
    match form {
        PinnForm::HardConstraintIc => problem.ic.value(x) + t * nval,
        PinnForm::SoftIc { .. } => nval,
    }
}

/// Value and spatial gradient of a trained PINN representation at one
/// space-time point; used by the baseline's energy evaluation.
pub fn pinn_predict_with_gradient(
    params: &NetworkParams,
    head: &TrainHead,
    embedding: &InputEmbedding,
    problem: &ResidualProblem,
    form: PinnForm,
    x: &[f64],
    t: f64,
) -> (f64, Vec<f64>) {
    let tr = channel_forward(params, embedding, x, t);
    let d = embedding.spatial_dim;
    let nd = d + usize::from(embedding.with_time);
    let nval: f64 = tr.z.iter().zip(&head.coeffs).map(|(z, b)| z * b).sum();
    let mut grad = vec![0.0; d];
    for (i, &b) in head.coeffs.iter().enumerate() {
        for (k, gk) in grad.iter_mut().enumerate() {
            *gk += b * tr.g[i * nd + k];
        }
    }
    match form {
        PinnForm::HardConstraintIc => {
            let g0 = problem.ic.gradient(x);
            for k in 0..d {
                grad[k] = g0[k] + t * grad[k];
            }
            (problem.ic.value(x) + t * nval, grad)
        }
        PinnForm::SoftIc { .. } => (nval, grad),
    }
}

/// Pre-train and keep the head, for the PINN-direct baseline.
pub fn pretrain_with_head(
    problem: &ResidualProblem,
    arch: &NetworkArchitecture,
    embedding: &InputEmbedding,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainHead, Vec<TraceEntry>), TrainError> {
    // same loop as `pretrain` but the head survives
    let params0 = crate::basis::init_random(arch, crate::basis::InitScheme::LeCun, cfg.seed);
    let head0 = TrainHead::random(arch.feature_count(), cfg.seed.wrapping_add(1));
    let np = params0.param_count();
    let mut flat = flatten_params(&params0);
    flat.extend_from_slice(&head0.coeffs);
    let mut adam = AdamState::new(flat.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut trace = Vec::new();
    let mut params = params0;
    let mut head = head0;
    for step in 0..cfg.steps {
        let lr = cosine_lr(step, cfg.steps.max(1), cfg.lr0);
        let (loss, gtheta, gbeta) = match cfg.loss {
            LossKind::InitAlignment => {
                let xs: Vec<Vec<f64>> = (0..cfg.batch_size)
                    .map(|_| sample_point(&mut rng, &problem.domain))
                    .collect();
                let u0: Vec<f64> = xs.iter().map(|x| problem.ic.value(x)).collect();
                loss_init_alignment(&params, &head, embedding, &xs, &u0)
            }
            LossKind::PinnResidual { form } => {
                let samples: Vec<(Vec<f64>, f64)> = (0..cfg.batch_size)
                    .map(|_| {
                        (
                            sample_point(&mut rng, &problem.domain),
                            rng.gen_range(0.0..problem.horizon),
                        )
                    })
                    .collect();
                loss_pinn_residual(&params, &head, problem, embedding, form, &samples)?
            }
        };
        trace.push(TraceEntry { step, lr, loss });
        let mut grads = gtheta;
        grads.extend_from_slice(&gbeta);
        let (new_flat, new_adam) = adam_step(&flat, &grads, &adam, lr)?;
        flat = new_flat;
        adam = new_adam;
        params = unflatten_params(&params, &flat[..np]);
        head.coeffs.copy_from_slice(&flat[np..]);
    }
    Ok((params, head, trace))
}
