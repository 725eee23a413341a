//! Galerkin assembly over a fixed quadrature rule.
//!
//! With trial space `span{phi_1, .., phi_n}` and quadrature `(x_q, w_q)`,
//!
//! ```text
//! M_ij = sum_q w_q phi_i(x_q) phi_j(x_q)
//! K_ij = sum_q w_q grad phi_i(x_q) . grad phi_j(x_q)
//! g_i  = sum_q w_q kappa f(u_h(x_q)) phi_i(x_q),   f(u) = u^3 - u
//! ```
//!
//! The semi-discrete gradient flow in the L^2 metric is `M dbeta/dt = -r`
//! with `r = eps^2 K beta + g(beta)`, which is exactly the coefficient
//! gradient of the discrete energy
//!
//! ```text
//! E(beta) = eps^2/2 beta' K beta + sum_q w_q kappa F(u_h(x_q)),
//! F(u) = (u^2 - 1)^2 / 4.
//! ```
//!
//! Both matrices are assembled through scaled Gram products, so they are
//! symmetric positive semi-definite up to rounding by construction; an
//! explicit symmetrization removes the rounding part.

use crate::basis::{BasisError, BasisSet};
use crate::linalg::{truncated_svd, CholeskyFactor, DenseMatrix, LinalgError};
use crate::problems::{Potential, ProblemSpec};
use crate::quadrature::QuadratureRule;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Coefficient-space snapshot of the evolving solution.
#[derive(Debug, Clone)]
pub struct CoeffState {
    pub beta: Vec<f64>,
    pub time: f64,
}

/// Assembled matrices for one frozen basis, plus the tabulated basis values
/// needed to re-evaluate the nonlinear term each step. Basis gradients are
/// streamed during stiffness assembly and never stored.
pub struct GalerkinSystem {
    /// n_points x n_basis
    pub basis_values: DenseMatrix,
    pub weights: Vec<f64>,
    pub mass: DenseMatrix,
    pub stiffness: DenseMatrix,
    pub mass_chol: CholeskyFactor,
    /// ridge added to the mass diagonal, zero in the regular case
    pub ridge: f64,
}

/// Mass matrix via a weighted Gram product.
pub fn assemble_mass(basis_values: &DenseMatrix, weights: &[f64]) -> DenseMatrix {
    assert_eq!(basis_values.rows(), weights.len());
    let scaled = scale_rows_sqrt(basis_values, weights);
    scaled.gram().symmetrized()
}

fn scale_rows_sqrt(a: &DenseMatrix, weights: &[f64]) -> DenseMatrix {
    let n = a.cols();
    let mut out = a.clone();
    for (i, &w) in weights.iter().enumerate() {
        debug_assert!(w >= 0.0);
        let s = w.sqrt();
        for v in &mut out.entries_mut()[i * n..(i + 1) * n] {
            *v *= s;
        }
    }
    out
}

/// Number of quadrature nodes whose gradients are held in memory at once.
const STIFFNESS_BLOCK: usize = 4096;

/// Stiffness matrix, assembled block-wise so the rank-3 gradient array for
/// the full rule never materializes. Deterministic: blocks are accumulated
/// in order.
pub fn assemble_stiffness(
    basis: &BasisSet,
    rule: &QuadratureRule,
) -> Result<DenseMatrix, AssemblyError> {
    let nb = basis.basis_count();
    let d = basis.spatial_dim();
    let mut k = DenseMatrix::zeros(nb, nb);
    for (block_idx, chunk) in rule.nodes.chunks(STIFFNESS_BLOCK).enumerate() {
        let grads = basis.eval_feature_gradients(chunk)?;
        // rows (point, dim) x basis, scaled by sqrt(w)
        let mut b = DenseMatrix::zeros(chunk.len() * d, nb);
        for p in 0..chunk.len() {
            let w = rule.weights[block_idx * STIFFNESS_BLOCK + p].sqrt();
            for j in 0..nb {
                let g = grads.grad(p, j);
                for dd in 0..d {
                    b.entries_mut()[(p * d + dd) * nb + j] = w * g[dd];
                }
            }
        }
        k = k.add(&b.gram());
    }
    Ok(k.symmetrized())
}

/// Nonlinear load vector `g_i = sum_q w_q kappa (u^3 - u) phi_i` for the
/// double-well reaction term; `u` is tabulated from the stored basis values.
pub fn assemble_nonlinear(
    basis_values: &DenseMatrix,
    weights: &[f64],
    kappa: f64,
    beta: &[f64],
) -> Vec<f64> {
    let (n, nb) = (basis_values.rows(), basis_values.cols());
    assert_eq!(weights.len(), n);
    assert_eq!(beta.len(), nb);
    let mut g = vec![0.0; nb];
    for q in 0..n {
        let row = basis_values.row(q);
        let u: f64 = row.iter().zip(beta).map(|(p, b)| p * b).sum();
        let c = weights[q] * kappa * (u * u * u - u);
        for (gi, p) in g.iter_mut().zip(row) {
            *gi += c * p;
        }
    }
    g
}

impl GalerkinSystem {
    /// Assemble mass and stiffness for a frozen basis over a rule. Falls back
    /// to a single diagonal ridge of `1e-12 tr(M)/n` if the mass matrix is
    /// numerically indefinite; a second failure is a hard error.
    pub fn assemble(basis: &BasisSet, rule: &QuadratureRule) -> Result<Self, AssemblyError> {
        let basis_values = basis.eval_features(&rule.nodes)?;
        let mass = assemble_mass(&basis_values, &rule.weights);
        let stiffness = assemble_stiffness(basis, rule)?;
        if !mass.is_finite() || !stiffness.is_finite() {
            return Err(AssemblyError::DegenerateBasis(
                "non-finite entries in assembled matrices".into(),
            ));
        }
        let n = mass.rows();
        let (mass, mass_chol, ridge) = match CholeskyFactor::new(&mass) {
            Ok(ch) => (mass, ch, 0.0),
            Err(_) => {
                let trace: f64 = (0..n).map(|i| mass[(i, i)]).sum();
                let ridge = 1e-12 * trace / n as f64;
                let ridged = mass.add(&DenseMatrix::diag(&vec![ridge; n]));
                let ch = CholeskyFactor::new(&ridged).map_err(|e| {
                    AssemblyError::DegenerateBasis(format!(
                        "mass matrix not positive definite even with ridge {ridge:.3e}: {e}"
                    ))
                })?;
                (ridged, ch, ridge)
            }
        };
        Ok(Self {
            basis_values,
            weights: rule.weights.clone(),
            mass,
            stiffness,
            mass_chol,
            ridge,
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.rows()
    }

    /// Discrete energy gradient `r(beta)`, so that `M dbeta/dt = -r`.
    /// Heat flow: `r = c K beta`; double-well: `r = eps^2 K beta + g(beta)`.
    pub fn residual(&self, problem: &ProblemSpec, beta: &[f64]) -> Vec<f64> {
        let mut r = self.stiffness.matvec(beta);
        match problem.potential {
            Potential::None => {
                for v in &mut r {
                    *v *= problem.diffusion_scale;
                }
            }
            Potential::DoubleWell => {
                let e2 = problem.epsilon * problem.epsilon;
                let g = assemble_nonlinear(&self.basis_values, &self.weights, problem.kappa, beta);
                for (v, gi) in r.iter_mut().zip(g) {
                    *v = e2 * *v + gi;
                }
            }
        }
        r
    }

    /// Discrete free energy. Heat flow reports the Dirichlet energy
    /// `beta' K beta / 2`; the double-well flows report
    /// `eps^2/2 beta' K beta + sum_q w_q kappa F(u_q)`.
    pub fn energy(&self, problem: &ProblemSpec, beta: &[f64]) -> f64 {
        let kb = self.stiffness.matvec(beta);
        let quad: f64 = beta.iter().zip(&kb).map(|(b, k)| b * k).sum();
        match problem.potential {
            Potential::None => 0.5 * quad,
            Potential::DoubleWell => {
                let e2 = problem.epsilon * problem.epsilon;
                let mut pot = 0.0;
                for q in 0..self.basis_values.rows() {
                    let u: f64 = self
                        .basis_values
                        .row(q)
                        .iter()
                        .zip(beta)
                        .map(|(p, b)| p * b)
                        .sum();
                    let s = u * u - 1.0;
                    pot += self.weights[q] * problem.kappa * 0.25 * s * s;
                }
                0.5 * e2 * quad + pot
            }
        }
    }

    /// Total discrete mass `integral of u_h`, conserved by the H^-1 flow.
    pub fn total_mass(&self, beta: &[f64]) -> f64 {
        let mut s = 0.0;
        for q in 0..self.basis_values.rows() {
            let u: f64 = self
                .basis_values
                .row(q)
                .iter()
                .zip(beta)
                .map(|(p, b)| p * b)
                .sum();
            s += self.weights[q] * u;
        }
        s
    }

    /// Weighted L^2 norm of `u_h` over the rule.
    pub fn l2_norm(&self, beta: &[f64]) -> f64 {
        let mb = self.mass.matvec(beta);
        beta.iter()
            .zip(&mb)
            .map(|(b, m)| b * m)
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }
}

/// Report from [`orthogonalize`].
#[derive(Debug, Clone)]
pub struct OrthoReport {
    pub input_features: usize,
    pub retained_rank: usize,
    pub sigma_max: f64,
    pub sigma_min_retained: f64,
}

/// Default relative singular-value cut for basis orthogonalization.
pub const ORTHO_REL_TOL: f64 = 1e-10;

/// Replace the feature block of `basis` with an L^2(w)-orthonormal one.
///
/// Forms `B = D^{1/2} Phi` over the rule (mask applied, ic slot and constant
/// excluded), takes the truncated SVD `B = U S V'`, and installs the
/// post-transform `V S^{-1}`; the new feature Gram is the identity and
/// near-dependent directions are discarded.
pub fn orthogonalize(
    basis: &BasisSet,
    rule: &QuadratureRule,
    rel_tol: f64,
) -> Result<(BasisSet, OrthoReport), AssemblyError> {
    let mut probe = basis.clone();
    probe.ic_slot = None;
    probe.include_constant = false;
    probe.post_transform = None;
    let phi = probe.eval_features(&rule.nodes)?;
    let b = scale_rows_sqrt(&phi, &rule.weights);
    let svd = truncated_svd(&b, rel_tol)?;
    if svd.retained_rank == 0 {
        return Err(AssemblyError::DegenerateBasis(
            "all feature directions fell below the singular value cut".into(),
        ));
    }
    let m = phi.cols();
    let mut transform = DenseMatrix::from_fn(m, svd.retained_rank, |i, j| {
        svd.right_vectors[(i, j)] / svd.singular_values[j]
    });

    // Second pass ("twice is enough"): one SVD loses ~cond(B)·eps digits of
    // orthonormality. Measure the Gram through the same evaluation path every
    // consumer uses (the post-transform is applied inside eval_features, with
    // its own rounding) and re-orthonormalize with a Cholesky factor of it.
    transform = refine_transform(&mut probe, rule, transform)?;

    // Deflation: the ic slot and constant columns are appended untouched, so
    // a feature direction that reproduces one of them makes the augmented
    // mass numerically singular. Rotate the feature block to isolate that
    // direction and drop it; the preserved column carries the same content.
    let deflated = deflate_against_fixed(basis, &mut probe, rule, &mut transform)?;
    if deflated {
        transform = refine_transform(&mut probe, rule, transform)?;
    }

    // Certification: directions whose singular values sit near the truncation
    // cut are evaluated through near-total cancellation, so their feature
    // values carry ~eps/σ_rel noise that no change of transform can remove.
    // Measure the final Gram through the evaluation path and drop any column
    // that cannot be held orthonormal; those are numerically pure noise.
    probe.post_transform = Some(transform.clone());
    let g = eval_path_gram(&probe, rule)?;
    let r = transform.cols();
    let mut keep: Vec<usize> = (0..r).collect();
    const GRAM_CERT_TOL: f64 = 5e-9;
    loop {
        let mut worst = 0.0f64;
        let mut worst_col = 0usize;
        for (a, &i) in keep.iter().enumerate() {
            let mut dev = (g[(i, i)] - 1.0).abs();
            for (b, &j) in keep.iter().enumerate() {
                if a != b {
                    dev = dev.max(g[(i, j)].abs());
                }
            }
            // ties go to the later column (the smaller singular value)
            if dev >= worst && (dev > worst || i > worst_col) {
                worst = dev;
                worst_col = i;
            }
        }
        if worst <= GRAM_CERT_TOL || keep.len() <= 1 {
            break;
        }
        keep.retain(|&i| i != worst_col);
    }
    if keep.len() < r {
        let cols = keep.clone();
        transform = DenseMatrix::from_fn(m, cols.len(), |i, j| transform[(i, cols[j])]);
    }

    // After deflation the columns are recombinations, so per-column singular
    // values no longer apply; report the smallest retained one from the SVD.
    let sigma_min_retained = if deflated {
        svd.singular_values[svd.retained_rank - 1]
    } else {
        svd.singular_values[*keep.last().unwrap()]
    };
    let report = OrthoReport {
        input_features: m,
        retained_rank: transform.cols(),
        sigma_max: svd.singular_values[0],
        sigma_min_retained,
    };
    let mut out = basis.clone();
    out.post_transform = Some(transform);
    Ok((out, report))
}

/// One Cholesky re-orthonormalization sweep: replace `T` by `T L⁻ᵀ` where
/// `L Lᵀ` factors the weighted Gram of the transformed features measured
/// through the evaluation path.
fn refine_transform(
    probe: &mut BasisSet,
    rule: &QuadratureRule,
    transform: DenseMatrix,
) -> Result<DenseMatrix, AssemblyError> {
    let (m, r) = (transform.rows(), transform.cols());
    probe.post_transform = Some(transform.clone());
    let gram = eval_path_gram(probe, rule)?;
    match CholeskyFactor::new(&gram) {
        Ok(chol) => {
            let mut refined = DenseMatrix::zeros(m, r);
            for i in 0..m {
                let row: Vec<f64> = (0..r).map(|j| transform[(i, j)]).collect();
                let solved = chol.solve_lower(&row);
                for j in 0..r {
                    refined[(i, j)] = solved[j];
                }
            }
            Ok(refined)
        }
        // a non-SPD measured Gram means some directions are pure noise; the
        // certification pass will drop them
        Err(_) => Ok(transform),
    }
}

/// Residual fraction below which a preserved column counts as reproduced by
/// the feature block and the aligned feature direction is removed.
const DEFLATE_TOL: f64 = 1e-6;

/// Drop feature directions that duplicate the untouched ic slot or constant
/// column. Returns whether anything was removed.
fn deflate_against_fixed(
    basis: &BasisSet,
    probe: &mut BasisSet,
    rule: &QuadratureRule,
    transform: &mut DenseMatrix,
) -> Result<bool, AssemblyError> {
    // preserved columns, evaluated exactly as eval_features appends them
    let mut fixed: Vec<Vec<f64>> = Vec::new();
    if let Some(ic) = &basis.ic_slot {
        fixed.push(rule.nodes.iter().map(|x| ic.value(x)).collect());
    }
    if basis.include_constant {
        fixed.push(
            rule.nodes
                .iter()
                .map(|x| if basis.mask.is_active() { basis.mask.value(x) } else { 1.0 })
                .collect(),
        );
    }
    if fixed.is_empty() {
        return Ok(false);
    }
    probe.post_transform = Some(transform.clone());
    let mut phi = probe.eval_features(&rule.nodes)?;
    let mut any = false;
    for f in &fixed {
        let r = transform.cols();
        if r <= 1 {
            break;
        }
        let fnorm2: f64 = rule
            .weights
            .iter()
            .zip(f)
            .map(|(w, v)| w * v * v)
            .sum();
        if fnorm2 <= 0.0 {
            continue;
        }
        // weighted correlations of the (orthonormal) features with f
        let mut c = vec![0.0; r];
        for (q, w) in rule.weights.iter().enumerate() {
            let wf = w * f[q];
            for (j, cj) in c.iter_mut().enumerate() {
                *cj += wf * phi[(q, j)];
            }
        }
        let proj2: f64 = c.iter().map(|v| v * v).sum();
        let residual = 1.0 - proj2 / fnorm2;
        if residual >= DEFLATE_TOL {
            continue;
        }
        // Householder rotation sending the correlated direction to the first
        // coordinate; keep the orthogonal complement (columns 1..r of H)
        let cnorm = proj2.sqrt();
        let mut u: Vec<f64> = c.iter().map(|v| v / cnorm).collect();
        let sign = if u[0] >= 0.0 { 1.0 } else { -1.0 };
        u[0] += sign;
        let unorm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut u {
            *v /= unorm;
        }
        let w_mat = DenseMatrix::from_fn(r, r - 1, |i, j| {
            let delta = if i == j + 1 { 1.0 } else { 0.0 };
            delta - 2.0 * u[i] * u[j + 1]
        });
        *transform = transform.matmul(&w_mat);
        phi = phi.matmul(&w_mat);
        any = true;
    }
    Ok(any)
}

/// Weighted feature Gram computed the way downstream code sees the basis:
/// evaluate through `eval_features` (post-transform applied inside, with its
/// own rounding) before forming `ΦᵀDΦ`.
fn eval_path_gram(basis: &BasisSet, rule: &QuadratureRule) -> Result<DenseMatrix, AssemblyError> {
    let phi = basis.eval_features(&rule.nodes)?;
    Ok(scale_rows_sqrt(&phi, &rule.weights).gram().symmetrized())
}
