//! Reduced operators and the online time march.
//!
//! A [`ReducedModel`] holds only reduced-size data: `N × N` matrices, the
//! interpolation matrix, and a table of basis values (or gradients) at the
//! interpolation points. The online solver never touches high-fidelity arrays.

use crate::eim::EimApprox;
use crate::fem::{
    assemble_nonlinear_vector, element_coefficients, gamma_field, HfModel, Nonlinearity, NonlinearityKind,
    Trajectory,
};
use crate::mesh::GridMode;
use crate::numerics::{dot, Cholesky, DenseMatrix, SparseSymMatrix};
use crate::pod::{project, GramOperator, RBasis};
use crate::{PreimError, Result};

/// Basis data at the interpolation points.
#[derive(Debug, Clone, PartialEq)]
pub enum PointTable {
    /// `M × N`: the value functional of each basis function at each point.
    Values(DenseMatrix),
    /// `M × 2N`: row `i` is `[∂ₓθ₁ … ∂ₓθ_N, ∂ᵧθ₁ … ∂ᵧθ_N]` on the owner element of point `i`.
    Gradients(DenseMatrix),
}

impl PointTable {
    pub fn matrix(&self) -> &DenseMatrix {
        match self {
            PointTable::Values(m) | PointTable::Gradients(m) => m,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub nonlinearity: Nonlinearity,
    pub times: Vec<f64>,
    pub mass: DenseMatrix,
    pub stiffness: DenseMatrix,
    /// `f^k` for `k = 1..=K`.
    pub loads: Vec<Vec<f64>>,
    pub u0: Vec<f64>,
    /// One `N × N` matrix per interpolation function.
    pub c: Vec<DenseMatrix>,
    /// Unit lower-triangular interpolation matrix.
    pub b: DenseMatrix,
    /// Grid indices of the interpolation points.
    pub points: Vec<usize>,
    pub table: PointTable,
}

impl ReducedModel {
    pub fn basis_len(&self) -> usize {
        self.mass.rows()
    }

    pub fn eim_rank(&self) -> usize {
        self.points.len()
    }

    pub fn num_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Drops all but the first `n` basis functions and `m` interpolation terms.
    pub fn truncate(&self, n: usize, m: usize) -> Result<Self> {
        if n == 0 || n > self.basis_len() || m > self.eim_rank() {
            return Err(PreimError::invalid("truncation sizes exceed the model"));
        }
        let sub = |a: &DenseMatrix| {
            DenseMatrix::from_rows(&(0..n).map(|i| a.row(i)[..n].to_vec()).collect::<Vec<_>>())
                .expect("square block")
        };
        let table = match &self.table {
            PointTable::Values(t) => PointTable::Values(
                DenseMatrix::from_rows(&(0..m).map(|i| t.row(i)[..n].to_vec()).collect::<Vec<_>>())?,
            ),
            PointTable::Gradients(t) => {
                let big = self.basis_len();
                PointTable::Gradients(DenseMatrix::from_rows(
                    &(0..m)
                        .map(|i| {
                            let row = t.row(i);
                            row[..n].iter().chain(&row[big..big + n]).copied().collect()
                        })
                        .collect::<Vec<_>>(),
                )?)
            }
        };
        let b = DenseMatrix::from_rows(&(0..m).map(|i| self.b.row(i)[..m].to_vec()).collect::<Vec<_>>())
            .unwrap_or_else(|_| DenseMatrix::zeros(0, 0));
        Ok(Self {
            nonlinearity: self.nonlinearity.clone(),
            times: self.times.clone(),
            mass: sub(&self.mass),
            stiffness: sub(&self.stiffness),
            loads: self.loads.iter().map(|f| f[..n].to_vec()).collect(),
            u0: self.u0[..n].to_vec(),
            c: self.c[..m].iter().map(sub).collect(),
            b,
            points: self.points[..m].to_vec(),
            table,
        })
    }
}

fn galerkin(a: &SparseSymMatrix, basis: &RBasis) -> DenseMatrix {
    let n = basis.len();
    let av: Vec<Vec<f64>> = basis.vectors.iter().map(|v| a.matvec(v)).collect();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = 0.5 * (dot(&av[i], &basis.vectors[j]) + dot(&av[j], &basis.vectors[i]));
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Gradients of every basis function on every triangle: `[t][n]`.
fn basis_gradients(model: &HfModel, basis: &RBasis) -> Vec<Vec<[f64; 2]>> {
    let mesh = &model.mesh;
    (0..mesh.num_triangles())
        .map(|t| basis.vectors.iter().map(|v| mesh.triangle_gradient(t, v)).collect())
        .collect()
}

/// `C = Σ_e |e| c_e (∇θ_n · ∇θ_p)|_e`
fn weighted_gradient_matrix(model: &HfModel, grads: &[Vec<[f64; 2]>], coeff: &[f64]) -> DenseMatrix {
    let n = grads.first().map_or(0, Vec::len);
    let mut out = DenseMatrix::zeros(n, n);
    for (t, g) in grads.iter().enumerate() {
        let w = model.mesh.area(t) * coeff[t];
        if w == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..=i {
                out[(i, j)] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            out[(j, i)] = out[(i, j)];
        }
    }
    out
}

/// Assembles all reduced operators from a basis and an interpolation.
pub fn reduce_operators(model: &HfModel, gram: &GramOperator, basis: &RBasis, eim: &EimApprox) -> Result<ReducedModel> {
    if basis.is_empty() {
        return Err(PreimError::invalid("cannot reduce onto an empty basis"));
    }
    if basis.dofs() != model.num_dofs() {
        return Err(PreimError::invalid("basis length does not match the model"));
    }
    if eim.grid_len() != model.grid.len() {
        return Err(PreimError::invalid("interpolation grid does not match the model"));
    }
    let mesh = &model.mesh;
    let mass = galerkin(model.mass(), basis);
    let stiffness = galerkin(model.stiffness(), basis);
    let loads = (1..model.times.len())
        .map(|k| basis.vectors.iter().map(|v| dot(v, model.load(k))).collect())
        .collect();
    let (u0, _) = project(basis, gram, &model.u0);

    let grads = basis_gradients(model, basis);
    let c = eim
        .q_funcs()
        .iter()
        .map(|q| weighted_gradient_matrix(model, &grads, &element_coefficients(mesh, model.grid.mode, q)))
        .collect();

    let n = basis.len();
    let table = match (model.gamma.kind(), model.grid.mode) {
        (NonlinearityKind::Solution, mode) => {
            let rows: Vec<Vec<f64>> = eim
                .points()
                .iter()
                .map(|&p| {
                    let owner = model.grid.owner[p];
                    basis
                        .vectors
                        .iter()
                        .map(|v| match mode {
                            GridMode::Nodes => v[owner],
                            GridMode::Centroids => {
                                let t = mesh.triangles[owner];
                                (v[t[0]] + v[t[1]] + v[t[2]]) / 3.0
                            }
                        })
                        .collect()
                })
                .collect();
            PointTable::Values(table_matrix(rows, n))
        }
        (NonlinearityKind::Gradient, _) => {
            let rows: Vec<Vec<f64>> = eim
                .points()
                .iter()
                .map(|&p| {
                    let g = &grads[model.grid.owner[p]];
                    g.iter().map(|x| x[0]).chain(g.iter().map(|x| x[1])).collect()
                })
                .collect();
            PointTable::Gradients(table_matrix(rows, 2 * n))
        }
    };

    Ok(ReducedModel {
        nonlinearity: model.gamma.clone(),
        times: model.times.clone(),
        mass,
        stiffness,
        loads,
        u0,
        c,
        b: eim.b_matrix(),
        points: eim.points().to_vec(),
        table,
    })
}

fn table_matrix(rows: Vec<Vec<f64>>, cols: usize) -> DenseMatrix {
    let m = rows.len();
    DenseMatrix::from_row_major(m, cols, rows.into_iter().flatten().collect()).expect("consistent table")
}

/// `γ̂` at the interpolation points for reduced state `u`.
pub fn gamma_at_points(rom: &ReducedModel, mu: f64, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rom.eim_rank()];
    gamma_at_points_into(rom, mu, u, &mut out);
    out
}

fn gamma_at_points_into(rom: &ReducedModel, mu: f64, u: &[f64], out: &mut [f64]) {
    match &rom.table {
        PointTable::Values(t) => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = rom.nonlinearity.eval_value(mu, dot(t.row(i), u));
            }
        }
        PointTable::Gradients(t) => {
            let n = u.len();
            for (i, o) in out.iter_mut().enumerate() {
                let row = t.row(i);
                *o = rom.nonlinearity.eval_gradient(mu, [dot(&row[..n], u), dot(&row[n..], u)]);
            }
        }
    }
}

/// Reduced trajectory `û⁰ … ûᴷ` for parameter `mu`.
///
/// Each step costs `O(N² + M·N + M·N²)` with no allocation beyond the
/// returned states, so the run time does not depend on the mesh the model
/// was built from.
pub fn online_solve(rom: &ReducedModel, mu: f64) -> Result<Vec<Vec<f64>>> {
    let n = rom.basis_len();
    let m = rom.eim_rank();
    if rom.b.rows() != m || rom.c.len() != m {
        return Err(PreimError::invalid("interpolation data do not match the rank"));
    }
    let mut factors: Vec<(u64, Cholesky)> = Vec::new();
    let mut out = Vec::with_capacity(rom.times.len());
    out.push(rom.u0.clone());
    let mut rhs = vec![0.0; n];
    let mut phi = vec![0.0; m];
    for k in 1..rom.times.len() {
        let dt = rom.times[k] - rom.times[k - 1];
        if factors.iter().all(|(bits, _)| *bits != dt.to_bits()) {
            let mut sys = rom.mass.clone();
            sys.add_scaled(dt, &rom.stiffness);
            factors.push((dt.to_bits(), Cholesky::new(&sys)?));
        }
        let chol = &factors.iter().find(|(bits, _)| *bits == dt.to_bits()).expect("factored").1;

        let prev = &out[k - 1];
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = dot(rom.mass.row(i), prev) + dt * rom.loads[k - 1][i];
        }
        if m > 0 {
            // φ = B⁻¹ γ̂, then rhs −= Δt Σ_j φ_j C_j û
            gamma_at_points_into(rom, mu, prev, &mut phi);
            for i in 0..m {
                let row = rom.b.row(i);
                let s: f64 = phi[i] - (0..i).map(|j| row[j] * phi[j]).sum::<f64>();
                phi[i] = s;
            }
            for (p, c) in phi.iter().zip(&rom.c) {
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= dt * p * dot(c.row(i), prev);
                }
            }
        }
        let next = chol.solve(&rhs);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(PreimError::numerical(format!("non-finite reduced state at step {k}")));
        }
        out.push(next);
    }
    Ok(out)
}

/// Nodal fields `Σ_n c_n θ_n` for each time node.
pub fn reconstruct(basis: &RBasis, mu: f64, coeffs: &[Vec<f64>]) -> Result<Trajectory> {
    if coeffs.iter().any(|c| c.len() != basis.len()) {
        return Err(PreimError::invalid("coefficient length does not match the basis"));
    }
    Ok(Trajectory { mu, fields: coeffs.iter().map(|c| basis.combine(c)).collect() })
}

/// Galerkin march that evaluates the nonlinearity on the full grid, either
/// exactly or through `eim`. This touches high-fidelity data every step and
/// serves as an offline reference for the online solver.
pub fn galerkin_solve(
    model: &HfModel,
    gram: &GramOperator,
    basis: &RBasis,
    eim: Option<&EimApprox>,
    mu: f64,
) -> Result<Vec<Vec<f64>>> {
    let mr = galerkin(model.mass(), basis);
    let ar = galerkin(model.stiffness(), basis);
    let (u0, _) = project(basis, gram, &model.u0);
    let mut out = vec![u0];
    for k in 1..model.times.len() {
        let dt = model.dt(k);
        let prev = out[k - 1].clone();
        let u = basis.combine(&prev);
        let mut g = gamma_field(model, mu, &u)?;
        if let Some(e) = eim {
            g = e.interpolate(&g);
        }
        let nl = assemble_nonlinear_vector(model, &u, &g)?;
        let mut rhs = mr.matvec(&prev);
        for (i, v) in basis.vectors.iter().enumerate() {
            rhs[i] += dt * (dot(v, model.load(k)) - dot(v, &nl));
        }
        let mut sys = mr.clone();
        sys.add_scaled(dt, &ar);
        out.push(Cholesky::new(&sys)?.solve(&rhs));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{hf_solve, HfModelSpec};
    use crate::mesh::generate_perforated_plate;
    use crate::pod::{pod, Truncation};

    fn model(gamma: Nonlinearity, mode: GridMode, flux: f64, u0: f64) -> HfModel {
        let mesh = generate_perforated_plate(2).unwrap();
        let n = mesh.num_nodes();
        let times: Vec<f64> = (0..=10).map(|k| 0.1 * k as f64).collect();
        HfModel::new(HfModelSpec {
            mesh,
            grid_mode: mode,
            kappa0: 1.05,
            gamma,
            u0: vec![u0; n],
            flux: vec![flux; times.len()],
            times,
            source: None,
        })
        .unwrap()
    }

    fn case_a() -> Nonlinearity {
        Nonlinearity::SolutionSine { u_ref: 293.0, u_max: 323.0, period: 20.0 }
    }

    fn eim_from(model: &HfModel, trajs: &[Trajectory], eps: f64) -> EimApprox {
        let training: Vec<_> = trajs
            .iter()
            .map(|t| crate::eim::GammaTrajectory {
                mu: t.mu,
                fields: t.fields.iter().map(|u| gamma_field(model, t.mu, u).unwrap()).collect(),
            })
            .collect();
        crate::eim::standard_eim(&training, eps, None).unwrap().approx
    }

    fn constant_eim(model: &HfModel) -> EimApprox {
        let mut e = EimApprox::new(model.grid.len());
        e.append(&vec![1.0; model.grid.len()], 0.0, 0, crate::eim::FieldSource::HighFidelity).unwrap();
        e
    }

    #[test]
    fn constant_basis_gives_linear_ramp() {
        let m = model(case_a(), GridMode::Nodes, 3.0, 293.0);
        let g = GramOperator::h1(&m);
        let c = 1.0 / 12f64.sqrt();
        let basis = RBasis { vectors: vec![vec![c; m.num_dofs()]], ..Default::default() };
        let rom = reduce_operators(&m, &g, &basis, &constant_eim(&m)).unwrap();
        assert!((rom.mass[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(rom.stiffness[(0, 0)].abs() < 1e-12);
        let traj = online_solve(&rom, 5.0).unwrap();
        let step = 0.1 * 72.0 * c;
        for k in 1..traj.len() {
            assert!((traj[k][0] - traj[k - 1][0] - step).abs() < 1e-10);
        }
    }

    #[test]
    fn unit_q_gives_scaled_stiffness() {
        let m = model(case_a(), GridMode::Nodes, 3.0, 293.0);
        let g = GramOperator::h1(&m);
        let traj = hf_solve(&m, 4.0).unwrap();
        let basis = pod(&traj.fields, Truncation::Relative(1e-6), &g).unwrap().basis;
        let rom = reduce_operators(&m, &g, &basis, &constant_eim(&m)).unwrap();
        let n = basis.len();
        for i in 0..n {
            for j in 0..n {
                let want = rom.stiffness[(i, j)] / m.kappa0;
                assert!((rom.c[0][(i, j)] - want).abs() <= 1e-10 * (1.0 + want.abs()));
            }
        }
        assert!(rom.mass.max_abs_asymmetry() <= 1e-12);
        assert!(rom.stiffness.max_abs_asymmetry() <= 1e-12);
    }

    #[test]
    fn zero_data_stays_zero() {
        let m = model(case_a(), GridMode::Nodes, 0.0, 0.0);
        let g = GramOperator::h1(&m);
        let basis = pod(&[vec![1.0; m.num_dofs()], (0..m.num_dofs()).map(|i| i as f64).collect()], Truncation::Relative(1e-6), &g)
            .unwrap()
            .basis;
        let rom = reduce_operators(&m, &g, &basis, &constant_eim(&m)).unwrap();
        let traj = online_solve(&rom, 3.0).unwrap();
        assert!(traj.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn initial_state_in_span_is_reproduced() {
        let m = model(case_a(), GridMode::Nodes, 3.0, 293.0);
        let g = GramOperator::h1(&m);
        let traj = hf_solve(&m, 2.0).unwrap();
        let basis = pod(&traj.fields, Truncation::Relative(1e-8), &g).unwrap().basis;
        let rom = reduce_operators(&m, &g, &basis, &constant_eim(&m)).unwrap();
        let back = basis.combine(&rom.u0);
        for (a, b) in back.iter().zip(&m.u0) {
            assert!((a - b).abs() <= 1e-10 * b.abs());
        }
    }

    #[test]
    fn linear_problem_on_invariant_subspace_is_exact() {
        let m = model(Nonlinearity::Zero, GridMode::Nodes, 3.0, 293.0);
        let g = GramOperator::h1(&m);
        let hf = hf_solve(&m, 1.0).unwrap();
        let out = pod(&hf.fields, Truncation::Relative(1e-14), &g).unwrap();
        let rom = reduce_operators(&m, &g, &out.basis, &constant_eim(&m)).unwrap();
        let red = reconstruct(&out.basis, 1.0, &online_solve(&rom, 1.0).unwrap()).unwrap();
        let mut err2 = 0.0;
        let mut ref2 = 0.0;
        for k in 1..hf.len() {
            let d: Vec<f64> = hf.fields[k].iter().zip(&red.fields[k]).map(|(a, b)| a - b).collect();
            err2 += 0.1 * g.inner(&d, &d);
            ref2 += 0.1 * g.inner(&hf.fields[k], &hf.fields[k]);
        }
        assert!(err2.sqrt() <= 1e-8 * ref2.sqrt(), "err {} ref {}", err2.sqrt(), ref2.sqrt());
    }

    #[test]
    fn online_matches_galerkin_with_interpolation() {
        for (gamma, mode) in [
            (case_a(), GridMode::Nodes),
            (case_a(), GridMode::Centroids),
            (Nonlinearity::GradientSineSquared { omega: 6.25e-3 }, GridMode::Centroids),
        ] {
            let m = model(gamma, mode, 3.0, 293.0);
            let g = GramOperator::h1(&m);
            let trajs: Vec<Trajectory> = [3.0, 11.0, 17.0].iter().map(|&mu| hf_solve(&m, mu).unwrap()).collect();
            let fields: Vec<Vec<f64>> = trajs.iter().flat_map(|t| t.fields.clone()).collect();
            let basis = pod(&fields, Truncation::Relative(1e-4), &g).unwrap().basis;
            let eim = eim_from(&m, &trajs, 1e-4);
            let rom = reduce_operators(&m, &g, &basis, &eim).unwrap();
            let online = online_solve(&rom, 7.0).unwrap();
            let offline = galerkin_solve(&m, &g, &basis, Some(&eim), 7.0).unwrap();
            for (a, b) in online.iter().zip(&offline) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "{mode}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn reconstruct_basics() {
        let basis = RBasis { vectors: vec![vec![1.0, 2.0], vec![0.0, 1.0]], ..Default::default() };
        let t = reconstruct(&basis, 1.0, &[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(t.fields[0], vec![0.0, 1.0]);
        assert_eq!(t.fields[1], vec![0.0, 0.0]);
        assert!(reconstruct(&basis, 1.0, &[vec![1.0]]).is_err());
    }

    #[test]
    fn truncation_keeps_leading_blocks() {
        let m = model(case_a(), GridMode::Nodes, 3.0, 293.0);
        let g = GramOperator::h1(&m);
        let trajs: Vec<Trajectory> = [5.0, 15.0].iter().map(|&mu| hf_solve(&m, mu).unwrap()).collect();
        let fields: Vec<Vec<f64>> = trajs.iter().flat_map(|t| t.fields.clone()).collect();
        let basis = pod(&fields, Truncation::Relative(1e-5), &g).unwrap().basis;
        let eim = eim_from(&m, &trajs, 1e-3);
        let rom = reduce_operators(&m, &g, &basis, &eim).unwrap();
        let small_basis = RBasis { vectors: basis.vectors[..2].to_vec(), ..Default::default() };
        let direct = reduce_operators(&m, &g, &small_basis, &eim.prefix(2)).unwrap();
        let cut = rom.truncate(2, 2).unwrap();
        assert_eq!(cut.mass, direct.mass);
        assert_eq!(cut.table, direct.table);
        assert_eq!(cut.b, direct.b);
    }
}
