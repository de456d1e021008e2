//! Proper orthogonal decomposition (method of snapshots) and the progressive
//! reduced-basis update.

use crate::fem::HfModel;
use crate::numerics::{dot, sym_eig, DenseMatrix, SparseSymMatrix};
use crate::{PreimError, Result};

/// Gram matrix `C = M + η A₀` of the inner product used for the basis.
#[derive(Debug, Clone)]
pub struct GramOperator {
    pub matrix: SparseSymMatrix,
    pub eta: f64,
}

impl GramOperator {
    pub fn new(mass: &SparseSymMatrix, stiffness: &SparseSymMatrix, eta: f64) -> Self {
        Self { matrix: mass.add_scaled(eta, stiffness), eta }
    }

    /// `η = 1/κ₀`, so that `C` is the H¹ Gram matrix `∫vw + ∫∇v·∇w`.
    pub fn h1(model: &HfModel) -> Self {
        Self::new(model.mass(), model.stiffness(), 1.0 / model.kappa0)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.matvec(x)
    }

    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matrix.inner(x, y)
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }
}

/// How the truncation threshold is interpreted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// keep `σ_n ≥ eps · σ_1`
    Relative(f64),
    /// keep `σ_n ≥ eps`
    Absolute(f64),
}

/// C-orthonormal reduced basis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RBasis {
    pub vectors: Vec<Vec<f64>>,
    /// Singular value attached to each basis vector when it was created.
    pub sigmas: Vec<f64>,
    /// Largest singular value discarded by the initial POD, if any.
    pub init_truncated: Option<f64>,
}

impl RBasis {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dofs(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// `Σ_n c_n θ_n`
    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.len(), "coefficient length must equal basis size");
        let mut out = vec![0.0; self.dofs()];
        for (c, v) in coeffs.iter().zip(&self.vectors) {
            crate::numerics::axpy(*c, v, &mut out);
        }
        out
    }

    /// Largest entry of `|θᵀ C θ − I|`.
    pub fn orthonormality_defect(&self, gram: &GramOperator) -> f64 {
        let cv: Vec<Vec<f64>> = self.vectors.iter().map(|v| gram.apply(v)).collect();
        let mut worst = 0.0_f64;
        for (i, ci) in cv.iter().enumerate() {
            for (j, vj) in self.vectors.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(ci, vj) - expected).abs());
            }
        }
        worst
    }
}

/// Output of [`pod`].
#[derive(Debug, Clone)]
pub struct PodOutput {
    pub basis: RBasis,
    /// All singular values of the snapshot set, descending.
    pub singular_values: Vec<f64>,
}

impl PodOutput {
    /// Largest singular value that was not kept.
    pub fn largest_truncated(&self) -> Option<f64> {
        self.singular_values.get(self.basis.len()).copied().filter(|&s| s > 0.0)
    }
}

fn degenerate_floor(sigma1: f64) -> f64 {
    1e-12 * sigma1
}

/// Rotates the columns of `w` until they are mutually C-orthogonal to working
/// precision and returns each column with its C-norm.
fn one_sided_jacobi(mut w: Vec<Vec<f64>>, gram: &GramOperator) -> Vec<(f64, Vec<f64>)> {
    let mut cw: Vec<Vec<f64>> = w.iter().map(|x| gram.apply(x)).collect();
    let tol = f64::EPSILON * (w.len().max(1) as f64).sqrt();
    for _ in 0..30 {
        let mut rotated = false;
        for i in 0..w.len() {
            for j in i + 1..w.len() {
                let a = dot(&w[i], &cw[i]);
                let b = dot(&w[j], &cw[j]);
                let c = 0.5 * (dot(&w[i], &cw[j]) + dot(&w[j], &cw[i]));
                if c == 0.0 || c.abs() <= tol * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (2.0 * c);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for v in [&mut w, &mut cw] {
                    let (lo, hi) = v.split_at_mut(j);
                    for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                        let (xi, yj) = (*x, *y);
                        *x = cs * xi - sn * yj;
                        *y = sn * xi + cs * yj;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    w.into_iter().zip(&cw).map(|(x, cx)| (dot(&x, cx).max(0.0).sqrt(), x)).collect()
}

/// C-orthogonalizes `v` against `basis` (two passes) and returns the
/// coefficients removed.
fn orthogonalize(basis: &[Vec<f64>], gram: &GramOperator, v: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        let cv = gram.apply(v);
        for (c, b) in coeffs.iter_mut().zip(basis) {
            let proj = dot(&cv, b);
            *c += proj;
            crate::numerics::axpy(-proj, b, v);
        }
    }
    coeffs
}

/// Method-of-snapshots POD in the C inner product.
///
/// Modes with `σ_n ≤ 1e-12 σ_1` are always discarded. The returned vectors
/// are re-orthonormalized to remove rounding drift from small singular values.
pub fn pod(snapshots: &[Vec<f64>], truncation: Truncation, gram: &GramOperator) -> Result<PodOutput> {
    if snapshots.is_empty() {
        return Err(PreimError::invalid("POD of an empty snapshot set"));
    }
    let eps = match truncation {
        Truncation::Relative(e) | Truncation::Absolute(e) => e,
    };
    if !(eps > 0.0) {
        return Err(PreimError::invalid("POD threshold must be positive"));
    }
    let n = gram.matrix.dim();
    if snapshots.iter().any(|s| s.len() != n) {
        return Err(PreimError::invalid("snapshot length does not match the Gram matrix"));
    }

    let r = snapshots.len();
    let cs: Vec<Vec<f64>> = snapshots.iter().map(|s| gram.apply(s)).collect();
    let mut correlation = DenseMatrix::zeros(r, r);
    for i in 0..r {
        for j in 0..=i {
            let v = 0.5 * (dot(&cs[i], &snapshots[j]) + dot(&cs[j], &snapshots[i]));
            correlation[(i, j)] = v;
            correlation[(j, i)] = v;
        }
    }
    let eig = sym_eig(&correlation)?;
    let floor = degenerate_floor(eig.values[0].max(0.0).sqrt());

    // The eigenvalues of the correlation matrix only fix σ_n to an absolute
    // accuracy of about eps·σ_1². The unnormalized modes S ψ_n are instead
    // polished by one-sided Jacobi, after which ‖S ψ_n‖_C is accurate
    // relative to σ_n itself.
    let mut raw: Vec<Vec<f64>> = Vec::new();
    let mut singular_values = Vec::with_capacity(r);
    for (k, &lambda) in eig.values.iter().enumerate() {
        let rough = lambda.max(0.0).sqrt();
        if rough <= floor {
            singular_values.push(rough);
            continue;
        }
        let mut w = vec![0.0; n];
        for (p, s) in eig.vectors.column(k).iter().zip(snapshots) {
            crate::numerics::axpy(*p, s, &mut w);
        }
        raw.push(w);
    }
    let mut modes = one_sided_jacobi(raw, gram);
    singular_values.extend(modes.iter().map(|m| m.0));
    modes.sort_by(|a, b| b.0.total_cmp(&a.0));
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let sigma1 = singular_values[0];
    let threshold = match truncation {
        Truncation::Relative(e) => e * sigma1,
        Truncation::Absolute(e) => e,
    };

    let mut basis = RBasis::default();
    for (sigma, mut theta) in modes {
        if !(sigma >= threshold) || sigma <= floor {
            break;
        }
        theta.iter_mut().for_each(|x| *x /= sigma);
        orthogonalize(&basis.vectors, gram, &mut theta);
        let norm = gram.norm(&theta);
        if !(norm > 0.5) {
            // rounding has destroyed this direction
            break;
        }
        theta.iter_mut().for_each(|x| *x /= norm);
        basis.vectors.push(theta);
        basis.sigmas.push(sigma);
    }
    Ok(PodOutput { basis, singular_values })
}

/// Coefficients `c_n = θ_nᵀ C u` and the residual `u − Σ c_n θ_n`.
pub fn project(basis: &RBasis, gram: &GramOperator, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut residual = u.to_vec();
    let coeffs = orthogonalize(&basis.vectors, gram, &mut residual);
    (coeffs, residual)
}

/// Enriches `basis` with the POD (absolute threshold) of the projection
/// residuals of `new_snapshots`.
pub fn update_rb(
    basis: &RBasis,
    new_snapshots: &[Vec<f64>],
    abs_threshold: f64,
    gram: &GramOperator,
) -> Result<RBasis> {
    if new_snapshots.is_empty() {
        return Ok(basis.clone());
    }
    let residuals: Vec<Vec<f64>> = new_snapshots.iter().map(|u| project(basis, gram, u).1).collect();
    if residuals.iter().all(|r| r.iter().all(|&x| x == 0.0)) {
        return Ok(basis.clone());
    }
    let out = pod(&residuals, Truncation::Absolute(abs_threshold), gram)?;
    let mut merged = basis.clone();
    for (mut v, s) in out.basis.vectors.into_iter().zip(out.basis.sigmas) {
        orthogonalize(&merged.vectors, gram, &mut v);
        let norm = gram.norm(&v);
        if !(norm > 0.5) {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        merged.vectors.push(v);
        merged.sigmas.push(s);
    }
    Ok(merged)
}

/// Relative-threshold POD of the first snapshot set, returning the basis and
/// the absolute threshold to use for later updates: the largest truncated
/// singular value, or `eps_pod · σ_1` when nothing was truncated.
pub fn init_rb(snapshots: &[Vec<f64>], eps_pod: f64, gram: &GramOperator) -> Result<(RBasis, f64)> {
    let out = pod(snapshots, Truncation::Relative(eps_pod), gram)?;
    let truncated = out.largest_truncated();
    let threshold = truncated.unwrap_or(eps_pod * out.singular_values[0]);
    let mut basis = out.basis;
    basis.init_truncated = truncated;
    Ok((basis, threshold))
}

/// Progressive basis over trajectories taken in the given order.
pub fn progressive_rb(trajectories: &[&[Vec<f64>]], eps_pod: f64, gram: &GramOperator) -> Result<RBasis> {
    let (first, rest) = trajectories
        .split_first()
        .ok_or_else(|| PreimError::invalid("progressive RB needs at least one trajectory"))?;
    let (mut basis, threshold) = init_rb(first, eps_pod, gram)?;
    for snapshots in rest {
        basis = update_rb(&basis, snapshots, threshold, gram)?;
    }
    Ok(basis)
}
