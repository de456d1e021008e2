use super::{axpy, dot, norm2, DenseMatrix};
use crate::{PreimError, Result};

/// Symmetric sparse matrix in compressed row storage (both triangles stored).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds the matrix from `(row, col, value)` triplets; duplicates are summed.
    /// The caller supplies both `(i, j)` and `(j, i)` entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i},{j}) out of range for n={n}");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n, "sparse matvec dimension mismatch");
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `xᵀ A y`
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `self + alpha * other`, on the union of both patterns.
    pub fn add_scaled(&self, alpha: f64, other: &SparseSymMatrix) -> Self {
        assert_eq!(self.n, other.n);
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            triplets.extend(self.row(i).map(|(j, v)| (i, j, v)));
            triplets.extend(other.row(i).map(|(j, v)| (i, j, alpha * v)));
        }
        Self::from_triplets(self.n, triplets)
    }

    pub fn max_relative_asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    pub fn half_bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }
}

/// Jacobi-preconditioned conjugate gradient. Stops when
/// `‖A x − b‖₂ ≤ tol · ‖b‖₂`; fails after `10 · dim` iterations.
pub fn solve_spd(a: &SparseSymMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = a.dim();
    if b.len() != n {
        return Err(PreimError::invalid(format!("rhs length {} for dimension {n}", b.len())));
    }
    if !(tol > 0.0) {
        return Err(PreimError::invalid("solver tolerance must be positive"));
    }
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..10 * n.max(1) {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(PreimError::numerical("conjugate gradient breakdown: matrix not SPD"));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if norm2(&r) <= tol * bnorm {
            // confirm against the true residual, not the recurrence
            let true_res: Vec<f64> = a.matvec(&x).iter().zip(b).map(|(ax, b)| b - ax).collect();
            if norm2(&true_res) <= tol * bnorm {
                return Ok(x);
            }
            r = true_res;
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(PreimError::numerical(format!(
        "conjugate gradient did not reach relative residual {tol:e} within {} iterations",
        10 * n
    )))
}

/// Banded Cholesky factorization, used for the fixed high-fidelity system
/// matrix which is factored once and reused for every time step.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i][i-bw..=i]
    band: Vec<f64>,
}

impl BandCholesky {
    pub fn new(a: &SparseSymMatrix) -> Result<Self> {
        let n = a.dim();
        let bw = a.half_bandwidth();
        let width = bw + 1;
        let mut band = vec![0.0; n * width];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    band[i * width + (j + bw - i)] = v;
                }
            }
        }
        for i in 0..n {
            let jmin = i.saturating_sub(bw);
            for j in jmin..=i {
                let kmin = jmin.max(j.saturating_sub(bw));
                let mut s = band[i * width + (j + bw - i)];
                for k in kmin..j {
                    s -= band[i * width + (k + bw - i)] * band[j * width + (k + bw - j)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(PreimError::numerical(format!(
                            "banded Cholesky: non-positive pivot {s:e} at row {i}"
                        )));
                    }
                    band[i * width + bw] = s.sqrt();
                } else {
                    band[i * width + (j + bw - i)] = s / band[j * width + bw];
                }
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "banded solve dimension mismatch");
        let width = self.bw + 1;
        let mut y = b.to_vec();
        for i in 0..self.n {
            let jmin = i.saturating_sub(self.bw);
            let row = &self.band[i * width + (jmin + self.bw - i)..i * width + self.bw];
            let s = y[i] - crate::numerics::dot(row, &y[jmin..i]);
            y[i] = s / self.band[i * width + self.bw];
        }
        for i in (0..self.n).rev() {
            let y_i = y[i] / self.band[i * width + self.bw];
            y[i] = y_i;
            let jmin = i.saturating_sub(self.bw);
            let row = &self.band[i * width + (jmin + self.bw - i)..i * width + self.bw];
            crate::numerics::axpy(-y_i, row, &mut y[jmin..i]);
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> SparseSymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        let mut a = g.transpose().matmul(&g);
        for i in 0..n {
            a[(i, i)] += n as f64;
        }
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                t.push((i, j, a[(i, j)]));
            }
        }
        SparseSymMatrix::from_triplets(n, t)
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let b = vec![1.0, -3.0, 2.5, 0.125];
        let x = solve_spd(&SparseSymMatrix::identity(4), &b, 1e-12).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn scalar_system() {
        let a = SparseSymMatrix::from_triplets(1, vec![(0, 0, 2.0)]);
        assert_eq!(solve_spd(&a, &[4.0], 1e-12).unwrap(), vec![2.0]);
    }

    #[test]
    fn recovers_chosen_solution() {
        let a = random_spd(5, 11);
        let x_star = vec![1.0, -2.0, 0.5, 3.0, -0.25];
        let b = a.matvec(&x_star);
        let x = solve_spd(&a, &b, 1e-12).unwrap();
        let res: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&res) <= 1e-12 * norm2(&b));
        for (xi, si) in x.iter().zip(&x_star) {
            assert!((xi - si).abs() < 1e-10);
        }
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let a = SparseSymMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, 1.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn banded_cholesky_matches_cg() {
        let a = random_spd(12, 3);
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let direct = BandCholesky::new(&a).unwrap().solve(&b);
        let iterative = solve_spd(&a, &b, 1e-14).unwrap();
        for (d, i) in direct.iter().zip(&iterative) {
            assert!((d - i).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        assert!(solve_spd(&SparseSymMatrix::identity(1), &[1.0], 0.0).is_err());
    }
}
