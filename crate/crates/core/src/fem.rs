//! High-fidelity P1 finite-element model and its semi-implicit Euler march.
//!
//! Each step solves
//! `(M + Δtᵏ A₀) uᵏ = Δtᵏ lᵏ + M uᵏ⁻¹ − Δtᵏ n_Γ(μ, uᵏ⁻¹)`,
//! with the diffusion `κ₀` implicit and the nonlinear conductivity explicit.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::archive::write_rows;
use crate::mesh::{eval_grid, EvalGrid, GridMode, Mesh, Point};
use crate::numerics::{BandCholesky, SparseSymMatrix};
use crate::{PreimError, Result};

/// What the nonlinear conductivity depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearityKind {
    Solution,
    Gradient,
}

pub type ValueFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(f64, Point) -> f64 + Send + Sync>;

/// Nonlinear part `Γ(μ, ·)` of the conductivity `κ₀ + Γ`.
#[derive(Clone)]
pub enum Nonlinearity {
    Zero,
    /// `sin(2πμ/period · ((v − u_ref)/(u_max − u_ref))²)`
    SolutionSine { u_ref: f64, u_max: f64, period: f64 },
    /// `sin(ω μ |∇u|²)²`
    GradientSineSquared { omega: f64 },
    CustomValue(ValueFn),
    CustomGradient(GradientFn),
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Zero => f.write_str("Zero"),
            Nonlinearity::SolutionSine { u_ref, u_max, period } => f
                .debug_struct("SolutionSine")
                .field("u_ref", u_ref)
                .field("u_max", u_max)
                .field("period", period)
                .finish(),
            Nonlinearity::GradientSineSquared { omega } => {
                f.debug_struct("GradientSineSquared").field("omega", omega).finish()
            }
            Nonlinearity::CustomValue(_) => f.write_str("CustomValue(..)"),
            Nonlinearity::CustomGradient(_) => f.write_str("CustomGradient(..)"),
        }
    }
}

impl Nonlinearity {
    pub fn kind(&self) -> NonlinearityKind {
        match self {
            Nonlinearity::Zero | Nonlinearity::SolutionSine { .. } | Nonlinearity::CustomValue(_) => {
                NonlinearityKind::Solution
            }
            Nonlinearity::GradientSineSquared { .. } | Nonlinearity::CustomGradient(_) => {
                NonlinearityKind::Gradient
            }
        }
    }

    /// Evaluates a solution-kind nonlinearity at the value `v`.
    #[inline]
    pub fn eval_value(&self, mu: f64, v: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::SolutionSine { u_ref, u_max, period } => {
                let s = (v - u_ref) / (u_max - u_ref);
                (2.0 * std::f64::consts::PI * mu / period * s * s).sin()
            }
            Nonlinearity::CustomValue(f) => f(mu, v),
            Nonlinearity::GradientSineSquared { .. } | Nonlinearity::CustomGradient(_) => {
                panic!("gradient nonlinearity evaluated on a point value")
            }
        }
    }

    /// Evaluates a gradient-kind nonlinearity at the gradient `g`.
    #[inline]
    pub fn eval_gradient(&self, mu: f64, g: Point) -> f64 {
        match self {
            Nonlinearity::GradientSineSquared { omega } => {
                let s = (omega * mu * (g[0] * g[0] + g[1] * g[1])).sin();
                s * s
            }
            Nonlinearity::CustomGradient(f) => f(mu, g),
            _ => panic!("solution nonlinearity evaluated on a gradient"),
        }
    }
}

/// Nodal snapshots `u⁰ … uᴷ` of one high-fidelity (or reconstructed) trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mu: f64,
    pub fields: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// One row per time node, one column per node.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, self.fields.iter().cloned())
    }
}

/// Exact P1 mass matrix.
pub fn assemble_mass(mesh: &Mesh) -> SparseSymMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.area(t) / 12.0;
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], if i == j { 2.0 * a } else { a }));
            }
        }
    }
    SparseSymMatrix::from_triplets(mesh.num_nodes(), triplets)
}

/// Exact P1 stiffness matrix scaled by `kappa0`.
pub fn assemble_stiffness(mesh: &Mesh, kappa0: f64) -> SparseSymMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let g = mesh.hat_gradients(t);
        let a = kappa0 * mesh.area(t);
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], a * (g[i][0] * g[j][0] + g[i][1] * g[j][1])));
            }
        }
    }
    SparseSymMatrix::from_triplets(mesh.num_nodes(), triplets)
}

/// `∫_∂Ω φ_p`, i.e. the boundary load for a unit flux.
pub fn boundary_load(mesh: &Mesh) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_nodes()];
    for e in &mesh.boundary_edges {
        b[e.nodes[0]] += 0.5 * e.length;
        b[e.nodes[1]] += 0.5 * e.length;
    }
    b
}

/// `lᵏ(φ_p) = ∫ fᵏ φ_p + ∫_∂Ω φ_e φ_p` for a nodal source and a uniform flux.
pub fn assemble_load(mesh: &Mesh, source: Option<&[f64]>, flux: f64) -> Result<Vec<f64>> {
    let mut l: Vec<f64> = boundary_load(mesh).into_iter().map(|b| flux * b).collect();
    if let Some(f) = source {
        if f.len() != mesh.num_nodes() {
            return Err(PreimError::invalid("source field length does not match the mesh"));
        }
        let mf = assemble_mass(mesh).matvec(f);
        for (li, mi) in l.iter_mut().zip(mf) {
            *li += mi;
        }
    }
    Ok(l)
}

/// Per-triangle coefficient from a field sampled on the evaluation grid:
/// the centroid value, or the vertex average for a nodal grid.
pub fn element_coefficients(mesh: &Mesh, mode: GridMode, grid_values: &[f64]) -> Vec<f64> {
    match mode {
        GridMode::Centroids => grid_values.to_vec(),
        GridMode::Nodes => mesh
            .triangles
            .iter()
            .map(|t| (grid_values[t[0]] + grid_values[t[1]] + grid_values[t[2]]) / 3.0)
            .collect(),
    }
}

/// High-fidelity model data. Immutable once built.
#[derive(Debug, Clone)]
pub struct HfModel {
    pub mesh: Mesh,
    pub grid: EvalGrid,
    pub kappa0: f64,
    pub gamma: Nonlinearity,
    pub u0: Vec<f64>,
    /// Time nodes `t⁰ < … < tᴷ`.
    pub times: Vec<f64>,
    mass: SparseSymMatrix,
    stiffness: SparseSymMatrix,
    loads: Vec<Vec<f64>>,
    factors: Vec<(u64, BandCholesky)>,
}

/// Inputs for [`HfModel::new`].
#[derive(Debug, Clone)]
pub struct HfModelSpec {
    pub mesh: Mesh,
    pub grid_mode: GridMode,
    pub kappa0: f64,
    pub gamma: Nonlinearity,
    pub u0: Vec<f64>,
    pub times: Vec<f64>,
    /// Boundary flux at each time node.
    pub flux: Vec<f64>,
    /// Optional nodal source at each time node.
    pub source: Option<Vec<Vec<f64>>>,
}

impl HfModel {
    pub fn new(spec: HfModelSpec) -> Result<Self> {
        let HfModelSpec { mesh, grid_mode, kappa0, gamma, u0, times, flux, source } = spec;
        if !(kappa0 > 0.0) {
            return Err(PreimError::invalid("kappa0 must be positive"));
        }
        if gamma.kind() == NonlinearityKind::Gradient && grid_mode == GridMode::Nodes {
            return Err(PreimError::UnsupportedConfiguration(
                "gradient nonlinearity needs the centroid evaluation grid".into(),
            ));
        }
        if u0.len() != mesh.num_nodes() {
            return Err(PreimError::invalid("initial field length does not match the mesh"));
        }
        if times.len() < 2 {
            return Err(PreimError::invalid("need at least two time nodes"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PreimError::invalid("time nodes must be strictly increasing"));
        }
        if flux.len() != times.len() {
            return Err(PreimError::invalid("flux must have one value per time node"));
        }
        if let Some(src) = &source {
            if src.len() != times.len() {
                return Err(PreimError::invalid("source must have one field per time node"));
            }
        }

        let mass = assemble_mass(&mesh);
        let stiffness = assemble_stiffness(&mesh, kappa0);
        let loads = (0..times.len())
            .map(|k| assemble_load(&mesh, source.as_ref().map(|s| s[k].as_slice()), flux[k]))
            .collect::<Result<Vec<_>>>()?;

        let mut factors: Vec<(u64, BandCholesky)> = Vec::new();
        for w in times.windows(2) {
            let dt = w[1] - w[0];
            if factors.iter().all(|(bits, _)| *bits != dt.to_bits()) {
                let system = mass.add_scaled(dt, &stiffness);
                factors.push((dt.to_bits(), BandCholesky::new(&system)?));
            }
        }

        let grid = eval_grid(&mesh, grid_mode);
        Ok(Self { mesh, grid, kappa0, gamma, u0, times, mass, stiffness, loads, factors })
    }

    /// Number of time steps `K`.
    pub fn num_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_nodes()
    }

    /// `Δtᵏ` for `k ≥ 1`.
    pub fn dt(&self, k: usize) -> f64 {
        self.times[k] - self.times[k - 1]
    }

    pub fn mass(&self) -> &SparseSymMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseSymMatrix {
        &self.stiffness
    }

    /// Load vector `lᵏ`.
    pub fn load(&self, k: usize) -> &[f64] {
        &self.loads[k]
    }

    fn factor(&self, dt: f64) -> &BandCholesky {
        &self
            .factors
            .iter()
            .find(|(bits, _)| *bits == dt.to_bits())
            .expect("time step without a factorization")
            .1
    }

    /// Smallest and largest `κ₀ + Γ(μ, ·)` over the evaluation grid for state `u`.
    pub fn conductivity_bounds(&self, mu: f64, u: &[f64]) -> Result<(f64, f64)> {
        let g = gamma_field(self, mu, u)?;
        Ok(g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(self.kappa0 + v), hi.max(self.kappa0 + v))
        }))
    }
}

/// `γ(μ, ·) = Γ(μ, u(·))` sampled on the model's evaluation grid.
pub fn gamma_field(model: &HfModel, mu: f64, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != model.num_dofs() {
        return Err(PreimError::invalid("nodal field length does not match the mesh"));
    }
    let mesh = &model.mesh;
    let gamma = &model.gamma;
    Ok(match (gamma.kind(), model.grid.mode) {
        (NonlinearityKind::Solution, GridMode::Nodes) => {
            u.iter().map(|&v| gamma.eval_value(mu, v)).collect()
        }
        (NonlinearityKind::Solution, GridMode::Centroids) => mesh
            .triangles
            .iter()
            .map(|t| gamma.eval_value(mu, (u[t[0]] + u[t[1]] + u[t[2]]) / 3.0))
            .collect(),
        (NonlinearityKind::Gradient, GridMode::Centroids) => (0..mesh.num_triangles())
            .map(|t| gamma.eval_gradient(mu, mesh.triangle_gradient(t, u)))
            .collect(),
        (NonlinearityKind::Gradient, GridMode::Nodes) => {
            return Err(PreimError::UnsupportedConfiguration(
                "gradient nonlinearity on a nodal grid".into(),
            ))
        }
    })
}

/// `n_p = Σ_e |e| γ_e (∇u·∇φ_p)|_e` with `γ_e` taken from the grid values.
pub fn assemble_nonlinear_vector(model: &HfModel, u: &[f64], grid_values: &[f64]) -> Result<Vec<f64>> {
    if u.len() != model.num_dofs() || grid_values.len() != model.grid.len() {
        return Err(PreimError::invalid("nonlinear assembly input length mismatch"));
    }
    let mesh = &model.mesh;
    let coeff = element_coefficients(mesh, model.grid.mode, grid_values);
    let mut out = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if coeff[t] == 0.0 {
            continue;
        }
        let grad_u = mesh.triangle_gradient(t, u);
        let w = mesh.area(t) * coeff[t];
        let g = mesh.hat_gradients(t);
        for a in 0..3 {
            out[tri[a]] += w * (grad_u[0] * g[a][0] + grad_u[1] * g[a][1]);
        }
    }
    Ok(out)
}

/// One semi-implicit Euler step from `u_prev` to time node `k`, with the
/// explicit nonlinearity supplied as grid values.
pub fn hf_step(model: &HfModel, k: usize, u_prev: &[f64], grid_values: &[f64]) -> Result<Vec<f64>> {
    let dt = model.dt(k);
    let nl = assemble_nonlinear_vector(model, u_prev, grid_values)?;
    let mut rhs = model.mass.matvec(u_prev);
    for ((r, l), n) in rhs.iter_mut().zip(model.load(k)).zip(&nl) {
        *r += dt * (l - n);
    }
    let u = model.factor(dt).solve(&rhs);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(PreimError::numerical(format!("non-finite state at time node {k}")));
    }
    Ok(u)
}

/// Residual of the discrete scheme at step `k`:
/// `(M + Δt A₀) uᵏ − Δt lᵏ − M uᵏ⁻¹ + Δt n(uᵏ⁻¹, γ)`.
pub fn step_residual(
    model: &HfModel,
    k: usize,
    u_prev: &[f64],
    u_next: &[f64],
    grid_values: &[f64],
) -> Result<Vec<f64>> {
    let dt = model.dt(k);
    let nl = assemble_nonlinear_vector(model, u_prev, grid_values)?;
    let m_next = model.mass.matvec(u_next);
    let a_next = model.stiffness.matvec(u_next);
    let m_prev = model.mass.matvec(u_prev);
    Ok((0..model.num_dofs())
        .map(|i| m_next[i] + dt * a_next[i] - dt * model.load(k)[i] - m_prev[i] + dt * nl[i])
        .collect())
}

/// Full high-fidelity trajectory for parameter `mu`.
pub fn hf_solve(model: &HfModel, mu: f64) -> Result<Trajectory> {
    let mut fields = Vec::with_capacity(model.times.len());
    fields.push(model.u0.clone());
    for k in 1..model.times.len() {
        let prev = &fields[k - 1];
        let g = gamma_field(model, mu, prev)?;
        let next = hf_step(model, k, prev, &g)?;
        fields.push(next);
    }
    Ok(Trajectory { mu, fields })
}
