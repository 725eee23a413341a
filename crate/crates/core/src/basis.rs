//! Neural feature networks and the augmented trial basis.
//!
//! A tanh feedforward network maps (embedded) coordinates to a vector of
//! features. The trial basis augments those features with an exact slot for
//! the incoming solution and a constant function, applies an optional
//! Dirichlet boundary mask, and exposes values and analytic spatial
//! gradients at arbitrary points.

use crate::linalg::DenseMatrix;
use crate::quadrature::Box;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Network shape: `input_dim` is the dimension the first weight matrix sees
/// (i.e. the embedding output dimension); the last hidden width is the
/// feature count `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkArchitecture {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
}

impl NetworkArchitecture {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>) -> Self {
        assert!(!hidden_widths.is_empty(), "need at least one hidden layer");
        assert!(hidden_widths.iter().all(|&w| w >= 1));
        assert!(input_dim >= 1);
        Self {
            input_dim,
            hidden_widths,
        }
    }

    /// Feature count `m` (width of the last hidden layer).
    pub fn feature_count(&self) -> usize {
        *self.hidden_widths.last().unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    /// out x in
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

/// All trainable parameters of the feature network.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
}

impl NetworkParams {
    pub fn architecture(&self) -> NetworkArchitecture {
        NetworkArchitecture::new(
            self.layers[0].weight.cols(),
            self.layers.iter().map(|l| l.weight.rows()).collect(),
        )
    }

    pub fn feature_count(&self) -> usize {
        self.layers.last().unwrap().weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.rows() * l.weight.cols() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    LeCun,
    Glorot,
}

/// Random initialization: LeCun `Normal(0, 1/fan_in)` or Glorot uniform;
/// biases zero. Deterministic per seed.
pub fn init_random(arch: &NetworkArchitecture, scheme: InitScheme, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut fan_in = arch.input_dim;
    for &w in &arch.hidden_widths {
        layers.push(init_layer(&mut rng, w, fan_in, scheme));
        fan_in = w;
    }
    NetworkParams { layers }
}

fn init_layer(rng: &mut ChaCha8Rng, out: usize, fan_in: usize, scheme: InitScheme) -> Layer {
    let weight = match scheme {
        InitScheme::LeCun => {
            let std = (1.0 / fan_in as f64).sqrt();
            DenseMatrix::from_fn(out, fan_in, |_, _| {
                let z: f64 = rng.sample(StandardNormal);
                std * z
            })
        }
        InitScheme::Glorot => {
            let limit = (6.0 / (fan_in + out) as f64).sqrt();
            DenseMatrix::from_fn(out, fan_in, |_, _| rng.gen_range(-limit..limit))
        }
    };
    Layer {
        weight,
        bias: vec![0.0; out],
    }
}

/// Structured first-layer initialization: neuron `j` activates as
/// `tanh(s (x_k - x_j))` for its assigned coordinate `k`, with centers
/// placed uniformly (endpoints included) over the domain axis. First-layer
/// neurons are split into contiguous blocks, one per dimension. Deeper
/// layers follow LeCun.
pub fn init_sfli(
    arch: &NetworkArchitecture,
    domain: &Box,
    slope: f64,
    seed: u64,
) -> NetworkParams {
    let d = domain.dim();
    assert_eq!(
        arch.input_dim, d,
        "SFLI assumes the identity embedding (input_dim == spatial dim)"
    );
    let m1 = arch.hidden_widths[0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut weight = DenseMatrix::zeros(m1, d);
    let mut bias = vec![0.0; m1];
    for k in 0..d {
        let lo = k * m1 / d;
        let hi = (k + 1) * m1 / d;
        let n = hi - lo;
        let (a, b) = domain.intervals[k];
        for (idx, j) in (lo..hi).enumerate() {
            let center = if n == 1 {
                0.5 * (a + b)
            } else {
                a + (b - a) * idx as f64 / (n - 1) as f64
            };
            weight[(j, k)] = slope;
            bias[j] = -slope * center;
        }
    }
    let mut layers = vec![Layer { weight, bias }];
    let mut fan_in = m1;
    for &w in &arch.hidden_widths[1..] {
        layers.push(init_layer(&mut rng, w, fan_in, InitScheme::LeCun));
        fan_in = w;
    }
    NetworkParams { layers }
}

/// Default SFLI slope: one activation transition per neuron spacing.
pub fn default_sfli_slope(first_width: usize, domain: &Box) -> f64 {
    let d = domain.dim();
    let per_axis = (first_width / d).max(1);
    let len: f64 = domain.lengths().iter().cloned().fold(0.0, f64::max);
    per_axis as f64 / len
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingKind {
    Identity,
    /// One period per spatial dimension; each coordinate maps to
    /// `(cos(2 pi x / L), sin(2 pi x / L))`.
    Periodic { periods: Vec<f64> },
}

/// Input feature mapping applied to spatial coordinates; an optional time
/// coordinate is appended untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEmbedding {
    pub kind: EmbeddingKind,
    pub spatial_dim: usize,
    pub with_time: bool,
}

impl InputEmbedding {
    pub fn identity(spatial_dim: usize) -> Self {
        Self {
            kind: EmbeddingKind::Identity,
            spatial_dim,
            with_time: false,
        }
    }

    pub fn periodic(periods: Vec<f64>) -> Self {
        Self {
            spatial_dim: periods.len(),
            kind: EmbeddingKind::Periodic { periods },
            with_time: false,
        }
    }

    pub fn with_time(mut self) -> Self {
        self.with_time = true;
        self
    }

    pub fn output_dim(&self) -> usize {
        let spatial = match &self.kind {
            EmbeddingKind::Identity => self.spatial_dim,
            EmbeddingKind::Periodic { .. } => 2 * self.spatial_dim,
        };
        spatial + usize::from(self.with_time)
    }

    /// Embedded value, spatial Jacobian (output_dim x spatial_dim) flattened
    /// row-major, and spatial Laplacian per output.
    pub fn embed(&self, x: &[f64], t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.spatial_dim;
        assert_eq!(x.len(), d);
        let out = self.output_dim();
        let mut z = Vec::with_capacity(out);
        let mut jac = vec![0.0; out * d];
        let mut lap = vec![0.0; out];
        match &self.kind {
            EmbeddingKind::Identity => {
                for (j, &xi) in x.iter().enumerate() {
                    z.push(xi);
                    jac[j * d + j] = 1.0;
                }
            }
            EmbeddingKind::Periodic { periods } => {
                for (j, (&xi, &lj)) in x.iter().zip(periods).enumerate() {
                    let w = 2.0 * std::f64::consts::PI / lj;
                    let (s, c) = (w * xi).sin_cos();
                    let (rc, rs) = (2 * j, 2 * j + 1);
                    z.push(c);
                    z.push(s);
                    jac[rc * d + j] = -w * s;
                    jac[rs * d + j] = w * c;
                    lap[rc] = -w * w * c;
                    lap[rs] = -w * w * s;
                }
            }
        }
        if self.with_time {
            z.push(t);
            // time derivative handled by callers that need it
        }
        (z, jac, lap)
    }
}

/// Multiplicative boundary mask.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryMask {
    None,
    /// `prod_j (b_j - x_j)(x_j - a_j)`: zero exactly on the box boundary,
    /// positive inside.
    DirichletBox(Box),
}

impl BoundaryMask {
    pub fn is_active(&self) -> bool {
        matches!(self, BoundaryMask::DirichletBox(_))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            BoundaryMask::None => 1.0,
            BoundaryMask::DirichletBox(b) => b
                .intervals
                .iter()
                .zip(x)
                .map(|(&(a, bb), &xi)| (bb - xi) * (xi - a))
                .product(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            BoundaryMask::None => vec![0.0; x.len()],
            BoundaryMask::DirichletBox(b) => {
                let d = x.len();
                let factors: Vec<f64> = b
                    .intervals
                    .iter()
                    .zip(x)
                    .map(|(&(a, bb), &xi)| (bb - xi) * (xi - a))
                    .collect();
                (0..d)
                    .map(|k| {
                        let (a, bb) = b.intervals[k];
                        let dk = a + bb - 2.0 * x[k];
                        let rest: f64 = factors
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != k)
                            .map(|(_, f)| f)
                            .product();
                        dk * rest
                    })
                    .collect()
            }
        }
    }
}

/// Field evaluable at arbitrary domain points with an analytic gradient.
/// Fills the exact-initial-condition slot of the augmented basis.
pub trait FieldSampler: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Evaluation handle for the augmented basis. Immutable after construction;
/// evaluation is pure and thread-safe.
///
/// Column order: `[ic_slot?, features, constant?]`. The boundary mask
/// multiplies all feature columns; under an active Dirichlet mask the
/// constant column is the bare mask function (so the whole trial space
/// satisfies the boundary condition). The ic slot bypasses both the mask
/// and the post-transform.
#[derive(Clone)]
pub struct BasisSet {
    pub params: NetworkParams,
    pub embedding: InputEmbedding,
    pub mask: BoundaryMask,
    pub ic_slot: Option<Arc<dyn FieldSampler>>,
    pub include_constant: bool,
    /// Orthogonalization transform, right-multiplying the raw feature block.
    pub post_transform: Option<DenseMatrix>,
    /// Evaluation time for networks taking a time input (frozen per subinterval).
    pub frozen_time: f64,
}

impl BasisSet {
    pub fn new(params: NetworkParams, embedding: InputEmbedding, mask: BoundaryMask) -> Self {
        assert_eq!(params.layers[0].weight.cols(), embedding.output_dim());
        Self {
            params,
            embedding,
            mask,
            ic_slot: None,
            include_constant: true,
            post_transform: None,
            frozen_time: 0.0,
        }
    }

    pub fn with_ic_slot(mut self, sampler: Arc<dyn FieldSampler>) -> Self {
        self.ic_slot = Some(sampler);
        self
    }

    pub fn with_frozen_time(mut self, t: f64) -> Self {
        self.frozen_time = t;
        self
    }

    pub fn without_constant(mut self) -> Self {
        self.include_constant = false;
        self
    }

    /// Raw feature count after the post-transform.
    pub fn effective_feature_count(&self) -> usize {
        match &self.post_transform {
            Some(p) => p.cols(),
            None => self.params.feature_count(),
        }
    }

    pub fn basis_count(&self) -> usize {
        usize::from(self.ic_slot.is_some())
            + self.effective_feature_count()
            + usize::from(self.include_constant)
    }

    pub fn spatial_dim(&self) -> usize {
        self.embedding.spatial_dim
    }

    fn check_point(&self, x: &[f64]) -> Result<(), BasisError> {
        if x.len() != self.embedding.spatial_dim {
            return Err(BasisError::ShapeMismatch(format!(
                "point dimension {} != spatial dim {}",
                x.len(),
                self.embedding.spatial_dim
            )));
        }
        Ok(())
    }

    /// Raw network features and their spatial gradients at one point
    /// (before mask and post-transform). Gradient layout: m x d row-major.
    fn raw_features(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.embedding.spatial_dim;
        let (mut z, mut jac, _) = self.embedding.embed(x, self.frozen_time);
        for layer in &self.params.layers {
            let w = &layer.weight;
            let out = w.rows();
            let inp = w.cols();
            let mut a = layer.bias.clone();
            let mut ja = vec![0.0; out * d];
            for i in 0..out {
                let wr = w.row(i);
                let mut s = a[i];
                for k in 0..inp {
                    s += wr[k] * z[k];
                }
                a[i] = s;
                for dd in 0..d {
                    let mut g = 0.0;
                    for k in 0..inp {
                        g += wr[k] * jac[k * d + dd];
                    }
                    ja[i * d + dd] = g;
                }
            }
            let mut znew = Vec::with_capacity(out);
            for i in 0..out {
                let v = a[i].tanh();
                let s = 1.0 - v * v;
                znew.push(v);
                for dd in 0..d {
                    ja[i * d + dd] *= s;
                }
            }
            z = znew;
            jac = ja;
        }
        (z, jac)
    }

    /// Augmented basis values at a batch of points: n_points x n_basis.
    pub fn eval_features(&self, points: &[Vec<f64>]) -> Result<DenseMatrix, BasisError> {
        for p in points {
            self.check_point(p)?;
        }
        let nb = self.basis_count();
        let rows: Vec<Vec<f64>> = points
            .par_iter()
            .map(|x| self.eval_row(x))
            .collect();
        let mut out = DenseMatrix::zeros(points.len(), nb);
        for (i, row) in rows.into_iter().enumerate() {
            out.entries_mut()[i * nb..(i + 1) * nb].copy_from_slice(&row);
        }
        Ok(out)
    }

    fn eval_row(&self, x: &[f64]) -> Vec<f64> {
        let (raw, _) = self.raw_features(x);
        let mask_val = self.mask.value(x);
        let mut row = Vec::with_capacity(self.basis_count());
        if let Some(ic) = &self.ic_slot {
            row.push(ic.value(x));
        }
        match &self.post_transform {
            Some(p) => {
                for j in 0..p.cols() {
                    let mut s = 0.0;
                    for k in 0..p.rows() {
                        s += raw[k] * p[(k, j)];
                    }
                    row.push(mask_val * s);
                }
            }
            None => {
                for &v in &raw {
                    row.push(mask_val * v);
                }
            }
        }
        if self.include_constant {
            row.push(if self.mask.is_active() { mask_val } else { 1.0 });
        }
        row
    }

    /// Exact analytic spatial gradients of every basis column at a batch of
    /// points; layout n_points x n_basis x d.
    pub fn eval_feature_gradients(&self, points: &[Vec<f64>]) -> Result<GradientBatch, BasisError> {
        for p in points {
            self.check_point(p)?;
        }
        let nb = self.basis_count();
        let d = self.embedding.spatial_dim;
        let rows: Vec<Vec<f64>> = points
            .par_iter()
            .map(|x| self.eval_gradient_row(x))
            .collect();
        let mut data = Vec::with_capacity(points.len() * nb * d);
        for row in rows {
            data.extend_from_slice(&row);
        }
        Ok(GradientBatch {
            n_points: points.len(),
            n_basis: nb,
            dim: d,
            data,
        })
    }

    fn eval_gradient_row(&self, x: &[f64]) -> Vec<f64> {
        let d = self.embedding.spatial_dim;
        let (raw, raw_grad) = self.raw_features(x);
        let mask_val = self.mask.value(x);
        let mask_grad = self.mask.gradient(x);
        let mut out = Vec::with_capacity(self.basis_count() * d);
        if let Some(ic) = &self.ic_slot {
            out.extend_from_slice(&ic.gradient(x));
        }
        let m = raw.len();
        let push_masked = |out: &mut Vec<f64>, v: f64, g: &[f64]| {
            for dd in 0..d {
                out.push(mask_val * g[dd] + v * mask_grad[dd]);
            }
        };
        match &self.post_transform {
            Some(p) => {
                for j in 0..p.cols() {
                    let mut v = 0.0;
                    let mut g = vec![0.0; d];
                    for k in 0..m {
                        let pkj = p[(k, j)];
                        v += raw[k] * pkj;
                        for dd in 0..d {
                            g[dd] += raw_grad[k * d + dd] * pkj;
                        }
                    }
                    push_masked(&mut out, v, &g);
                }
            }
            None => {
                for k in 0..m {
                    push_masked(&mut out, raw[k], &raw_grad[k * d..(k + 1) * d]);
                }
            }
        }
        if self.include_constant {
            if self.mask.is_active() {
                out.extend_from_slice(&mask_grad);
            } else {
                out.extend(std::iter::repeat(0.0).take(d));
            }
        }
        out
    }

    /// Evaluate `beta . Phi(x)` at one point.
    pub fn eval_solution(&self, beta: &[f64], x: &[f64]) -> f64 {
        let row = self.eval_row(x);
        row.iter().zip(beta).map(|(p, b)| p * b).sum()
    }

    /// Gradient of `beta . Phi` at one point.
    pub fn eval_solution_gradient(&self, beta: &[f64], x: &[f64]) -> Vec<f64> {
        let d = self.embedding.spatial_dim;
        let grads = self.eval_gradient_row(x);
        let mut g = vec![0.0; d];
        for (j, b) in beta.iter().enumerate() {
            for dd in 0..d {
                g[dd] += b * grads[j * d + dd];
            }
        }
        g
    }
}

/// Rank-3 gradient array: n_points x n_basis x dim, row-major.
#[derive(Debug, Clone)]
pub struct GradientBatch {
    pub n_points: usize,
    pub n_basis: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl GradientBatch {
    pub fn get(&self, point: usize, basis: usize, dim: usize) -> f64 {
        self.data[(point * self.n_basis + basis) * self.dim + dim]
    }

    /// Slice of all d components for (point, basis).
    pub fn grad(&self, point: usize, basis: usize) -> &[f64] {
        let off = (point * self.n_basis + basis) * self.dim;
        &self.data[off..off + self.dim]
    }
}

// --- checkpoint io ----------------------------------------------------------

/// Checkpoint metadata stored alongside the raw parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub embedding: InputEmbedding,
    pub hidden_widths: Vec<usize>,
    pub seed: u64,
}

/// Write a network checkpoint: text header, then layer-ordered 64-bit
/// little-endian weight (row-major) and bias blocks.
pub fn save_checkpoint(
    path: &std::path::Path,
    params: &NetworkParams,
    meta: &CheckpointMeta,
) -> Result<(), BasisError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "galflow-checkpoint v1")?;
    writeln!(f, "spatial_dim {}", meta.embedding.spatial_dim)?;
    match &meta.embedding.kind {
        EmbeddingKind::Identity => writeln!(f, "embedding identity")?,
        EmbeddingKind::Periodic { periods } => {
            let ps: Vec<String> = periods.iter().map(|p| format!("{p:.17e}")).collect();
            writeln!(f, "embedding periodic {}", ps.join(" "))?;
        }
    }
    writeln!(f, "with_time {}", u8::from(meta.embedding.with_time))?;
    let ws: Vec<String> = meta.hidden_widths.iter().map(|w| w.to_string()).collect();
    writeln!(f, "hidden {}", ws.join(" "))?;
    writeln!(f, "seed {}", meta.seed)?;
    writeln!(f, "values {}", params.param_count())?;
    writeln!(f, "data")?;
    for layer in &params.layers {
        for &v in layer.weight.entries() {
            f.write_all(&v.to_le_bytes())?;
        }
        for &v in &layer.bias {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<(NetworkParams, CheckpointMeta), BasisError> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    let next_line = |reader: &mut BufReader<std::fs::File>, line: &mut String| -> Result<String, BasisError> {
        line.clear();
        reader.read_line(line)?;
        Ok(line.trim_end().to_string())
    };
    let magic = next_line(&mut reader, &mut line)?;
    if magic != "galflow-checkpoint v1" {
        return Err(BasisError::BadCheckpoint(format!("bad magic: {magic}")));
    }
    let mut spatial_dim = 0usize;
    let mut kind = EmbeddingKind::Identity;
    let mut with_time = false;
    let mut hidden = Vec::new();
    let mut seed = 0u64;
    let mut values = 0usize;
    loop {
        let l = next_line(&mut reader, &mut line)?;
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some("spatial_dim") => {
                spatial_dim = parse(parts.next(), "spatial_dim")?;
            }
            Some("embedding") => match parts.next() {
                Some("identity") => kind = EmbeddingKind::Identity,
                Some("periodic") => {
                    let periods: Result<Vec<f64>, _> = parts.map(|p| p.parse()).collect();
                    kind = EmbeddingKind::Periodic {
                        periods: periods
                            .map_err(|e| BasisError::BadCheckpoint(format!("periods: {e}")))?,
                    };
                }
                other => {
                    return Err(BasisError::BadCheckpoint(format!(
                        "unknown embedding {other:?}"
                    )))
                }
            },
            Some("with_time") => {
                let v: u8 = parse(parts.next(), "with_time")?;
                with_time = v != 0;
            }
            Some("hidden") => {
                hidden = parts
                    .map(|w| w.parse())
                    .collect::<Result<Vec<usize>, _>>()
                    .map_err(|e| BasisError::BadCheckpoint(format!("hidden: {e}")))?;
            }
            Some("seed") => {
                seed = parse(parts.next(), "seed")?;
            }
            Some("values") => {
                values = parse(parts.next(), "values")?;
            }
            Some("data") => break,
            other => {
                return Err(BasisError::BadCheckpoint(format!(
                    "unexpected header line {other:?}"
                )))
            }
        }
    }
    if hidden.is_empty() || spatial_dim == 0 {
        return Err(BasisError::BadCheckpoint("incomplete header".into()));
    }
    let embedding = InputEmbedding {
        kind,
        spatial_dim,
        with_time,
    };
    let mut raw = vec![0u8; values * 8];
    reader.read_exact(&mut raw)?;
    let mut vals = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));

    let mut layers = Vec::new();
    let mut fan_in = embedding.output_dim();
    for &w in &hidden {
        let mut entries = Vec::with_capacity(w * fan_in);
        for _ in 0..w * fan_in {
            entries.push(
                vals.next()
                    .ok_or_else(|| BasisError::BadCheckpoint("truncated data".into()))?,
            );
        }
        let weight = DenseMatrix::from_rows(w, fan_in, entries);
        let mut bias = Vec::with_capacity(w);
        for _ in 0..w {
            bias.push(
                vals.next()
                    .ok_or_else(|| BasisError::BadCheckpoint("truncated data".into()))?,
            );
        }
        layers.push(Layer { weight, bias });
        fan_in = w;
    }
    Ok((
        NetworkParams { layers },
        CheckpointMeta {
            embedding,
            hidden_widths: hidden,
            seed,
        },
    ))
}

fn parse<T: std::str::FromStr>(s: Option<&str>, what: &str) -> Result<T, BasisError> {
    s.and_then(|v| v.parse().ok())
        .ok_or_else(|| BasisError::BadCheckpoint(format!("bad {what}")))
}
