//! Standard offline stage: every training trajectory is computed in high
//! fidelity, then compressed by progressive POD and interpolated by greedy EIM.

use std::time::Instant;

use rayon::prelude::*;

use crate::eim::{standard_eim, EimApprox, GammaTrajectory};
use crate::fem::{gamma_field, hf_solve, HfModel, Trajectory};
use crate::pod::{progressive_rb, GramOperator, RBasis};
use crate::rom::{reduce_operators, ReducedModel};
use crate::{PreimError, Result};

#[derive(Debug, Clone)]
pub struct StandardOutput {
    pub basis: RBasis,
    pub eim: EimApprox,
    /// Greedy residual sup norms, ending with the terminating value.
    pub eim_decay: Vec<f64>,
    pub rom: ReducedModel,
    pub hf: Vec<Trajectory>,
    pub seconds: f64,
}

/// Solves every parameter in parallel, preserving input order.
pub fn hf_sweep(model: &HfModel, params: &[f64]) -> Result<Vec<Trajectory>> {
    params.par_iter().map(|&mu| hf_solve(model, mu)).collect()
}

/// `γ(μ, k, ·)` for all time nodes of a trajectory.
pub fn gamma_trajectory(model: &HfModel, traj: &Trajectory) -> Result<GammaTrajectory> {
    Ok(GammaTrajectory {
        mu: traj.mu,
        fields: traj.fields.iter().map(|u| gamma_field(model, traj.mu, u)).collect::<Result<_>>()?,
    })
}

pub fn standard_offline(model: &HfModel, params: &[f64], eps_pod: f64, eps_eim: f64) -> Result<StandardOutput> {
    if params.is_empty() {
        return Err(PreimError::invalid("empty training set"));
    }
    let start = Instant::now();
    let gram = GramOperator::h1(model);
    let hf = hf_sweep(model, params)?;
    let snapshots: Vec<&[Vec<f64>]> = hf.iter().map(|t| t.fields.as_slice()).collect();
    let basis = progressive_rb(&snapshots, eps_pod, &gram)?;
    let training = hf.par_iter().map(|t| gamma_trajectory(model, t)).collect::<Result<Vec<_>>>()?;
    let greedy = standard_eim(&training, eps_eim, None)?;
    let rom = reduce_operators(model, &gram, &basis, &greedy.approx)?;
    Ok(StandardOutput {
        basis,
        eim: greedy.approx,
        eim_decay: greedy.decay,
        rom,
        hf,
        seconds: start.elapsed().as_secs_f64(),
    })
}
