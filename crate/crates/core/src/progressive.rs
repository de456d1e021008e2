//! Progressive construction of the reduced basis and the empirical
//! interpolation, where reduced trajectories stand in for high-fidelity ones
//! that have not been computed yet.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::eim::{EimApprox, FieldSource};
use crate::fem::{gamma_field, hf_solve, step_residual, HfModel, Trajectory};
use crate::numerics::{dot, norm_inf};
use crate::pod::{init_rb, update_rb, GramOperator, RBasis};
use crate::rom::{online_solve, reconstruct, reduce_operators, ReducedModel};
use crate::standard::hf_sweep;
use crate::{PreimError, Result};

/// Which flavour of the interpolation update to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// High-fidelity residuals with re-selection after every new solve.
    Preim,
    /// High-fidelity residuals without re-selection.
    PreimNr,
    /// Reduced trajectories everywhere, including for the interpolation functions.
    User,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Preim => "preim",
            Variant::PreimNr => "preim-nr",
            Variant::User => "user",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = PreimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "preim" => Ok(Variant::Preim),
            "preim-nr" => Ok(Variant::PreimNr),
            "user" => Ok(Variant::User),
            other => Err(PreimError::invalid(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreimConfig {
    pub eps_pod: f64,
    pub eps_eim: f64,
    pub eps_rb: f64,
    pub rb_criterion: bool,
    pub variant: Variant,
    /// Training indices of the initial high-fidelity set.
    pub init: Vec<usize>,
    /// Cap on interpolation updates; defaults to `10 · P · K`.
    pub max_iterations: Option<usize>,
}

impl PreimConfig {
    pub fn new(eps_pod: f64, eps_eim: f64, variant: Variant) -> Self {
        Self { eps_pod, eps_eim, eps_rb: 1e-1, rb_criterion: false, variant, init: vec![0], max_iterations: None }
    }
}

/// One accepted rank increase.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub m: usize,
    /// Greedy pair.
    pub mu: f64,
    pub k: usize,
    /// Pair whose residual was appended.
    pub mu_bar: f64,
    pub k_bar: usize,
    /// Whether the greedy pair triggered a new high-fidelity solve.
    pub new_hf: bool,
    /// Solves triggered by the estimator greedy during this iteration.
    pub extra_hf: usize,
    pub delta_eim: f64,
    pub delta_rb: Option<f64>,
    pub basis_len: usize,
    pub hf_count: usize,
    pub source: FieldSource,
}

/// Result of one interpolation update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub incr_rk: bool,
    pub mu_index: usize,
    pub k: usize,
    pub mu_bar_index: usize,
    pub k_bar: usize,
    /// Training index of a freshly computed trajectory, if any.
    pub new_hf: Option<usize>,
    pub delta_eim: f64,
}

/// Working state of the progressive construction.
pub struct PreimState<'a> {
    model: &'a HfModel,
    pub gram: GramOperator,
    pub params: Vec<f64>,
    hf: Vec<Option<Trajectory>>,
    hf_gamma: Vec<Option<Vec<Vec<f64>>>>,
    /// Training indices with a high-fidelity trajectory, in order of computation.
    pub hf_order: Vec<usize>,
    pub basis: RBasis,
    pub pod_threshold: f64,
    pub eim: EimApprox,
    pub rom: ReducedModel,
    pub log: Vec<IterationRecord>,
}

/// Strictly larger wins; on an exact tie a parameter without a
/// high-fidelity trajectory displaces one that has it.
fn better(value: f64, fresh: bool, best: f64, best_fresh: bool) -> bool {
    value > best || (value == best && fresh && !best_fresh)
}

impl<'a> PreimState<'a> {
    /// Computes the initial trajectories, basis and rank-one interpolation.
    pub fn init(model: &'a HfModel, params: &[f64], init: &[usize], eps_pod: f64) -> Result<Self> {
        if init.is_empty() {
            return Err(PreimError::invalid("initial high-fidelity set must not be empty"));
        }
        if init.iter().any(|&i| i >= params.len()) {
            return Err(PreimError::invalid("initial index outside the training set"));
        }
        let mut order: Vec<usize> = Vec::new();
        for &i in init {
            if !order.contains(&i) {
                order.push(i);
            }
        }
        let gram = GramOperator::h1(model);
        let mu_init: Vec<f64> = order.iter().map(|&i| params[i]).collect();
        let trajs = hf_sweep(model, &mu_init)?;

        let (mut basis, pod_threshold) = init_rb(&trajs[0].fields, eps_pod, &gram)?;
        for t in &trajs[1..] {
            basis = update_rb(&basis, &t.fields, pod_threshold, &gram)?;
        }

        let mut hf = vec![None; params.len()];
        let mut hf_gamma = vec![None; params.len()];
        for (&i, t) in order.iter().zip(trajs) {
            hf_gamma[i] = Some(t.fields.iter().map(|u| gamma_field(model, t.mu, u)).collect::<Result<Vec<_>>>()?);
            hf[i] = Some(t);
        }

        let (mut bi, mut bk, mut best) = (order[0], 0, -1.0);
        for &i in &order {
            for (k, g) in hf_gamma[i].as_ref().expect("computed").iter().enumerate() {
                let v = norm_inf(g);
                if v > best {
                    (bi, bk, best) = (i, k, v);
                }
            }
        }
        let mut eim = EimApprox::new(model.grid.len());
        let r1 = hf_gamma[bi].as_ref().expect("computed")[bk].clone();
        eim.append(&r1, params[bi], bk, FieldSource::HighFidelity)?;
        let rom = reduce_operators(model, &gram, &basis, &eim)?;

        let log = vec![IterationRecord {
            m: 1,
            mu: params[bi],
            k: bk,
            mu_bar: params[bi],
            k_bar: bk,
            new_hf: true,
            extra_hf: 0,
            delta_eim: best,
            delta_rb: None,
            basis_len: basis.len(),
            hf_count: order.len(),
            source: FieldSource::HighFidelity,
        }];
        Ok(Self {
            model,
            gram,
            params: params.to_vec(),
            hf,
            hf_gamma,
            hf_order: order,
            basis,
            pod_threshold,
            eim,
            rom,
            log,
        })
    }

    pub fn model(&self) -> &HfModel {
        self.model
    }

    pub fn has_hf(&self, i: usize) -> bool {
        self.hf[i].is_some()
    }

    pub fn hf_trajectory(&self, i: usize) -> Option<&Trajectory> {
        self.hf[i].as_ref()
    }

    pub fn hf_count(&self) -> usize {
        self.hf_order.len()
    }

    pub fn hf_trajectories(&self) -> Vec<&Trajectory> {
        self.hf_order.iter().map(|&i| self.hf[i].as_ref().expect("listed")).collect()
    }

    fn compute_hf(&mut self, i: usize) -> Result<()> {
        if self.hf[i].is_none() {
            let t = hf_solve(self.model, self.params[i])?;
            self.hf_gamma[i] =
                Some(t.fields.iter().map(|u| gamma_field(self.model, t.mu, u)).collect::<Result<Vec<_>>>()?);
            self.hf[i] = Some(t);
            self.hf_order.push(i);
        }
        Ok(())
    }

    fn rebuild_rom(&mut self) -> Result<()> {
        self.rom = reduce_operators(self.model, &self.gram, &self.basis, &self.eim)?;
        Ok(())
    }

    fn enrich_basis(&mut self, i: usize) -> Result<()> {
        let fields = &self.hf[i].as_ref().expect("computed before enrichment").fields;
        self.basis = update_rb(&self.basis, fields, self.pod_threshold, &self.gram)?;
        self.rebuild_rom()
    }

    /// Reduced trajectory for training index `i`, reconstructed on the mesh.
    pub fn reduced_field(&self, i: usize) -> Result<Trajectory> {
        let mu = self.params[i];
        reconstruct(&self.basis, mu, &online_solve(&self.rom, mu)?)
    }

    /// High-fidelity trajectory when known, reduced reconstruction otherwise.
    pub fn surrogate_field(&self, i: usize) -> Result<Trajectory> {
        match &self.hf[i] {
            Some(t) => Ok(t.clone()),
            None => self.reduced_field(i),
        }
    }

    fn reduced_gamma(&self, i: usize) -> Result<Vec<Vec<f64>>> {
        let t = self.reduced_field(i)?;
        t.fields.iter().map(|u| gamma_field(self.model, t.mu, u)).collect()
    }

    /// One interpolation update. Appends to `self.eim` when the rank grows and
    /// records newly computed trajectories; the basis is left untouched.
    pub fn update_eim(&mut self, eps_eim: f64, variant: Variant) -> Result<UpdateOutcome> {
        let p = self.params.len();
        let use_hf = variant != Variant::User;
        let surrogate: Vec<Vec<Vec<f64>>> = (0..p)
            .into_par_iter()
            .map(|i| match (&self.hf_gamma[i], use_hf) {
                (Some(g), true) => Ok(g.clone()),
                _ => self.reduced_gamma(i),
            })
            .collect::<Result<_>>()?;
        let norms: Vec<Vec<f64>> = surrogate
            .par_iter()
            .map(|traj| traj.iter().map(|g| norm_inf(&self.eim.residual(g))).collect())
            .collect();

        let (mut mi, mut mk, mut best, mut best_fresh) = (0, 0, -1.0, false);
        for (i, row) in norms.iter().enumerate() {
            let fresh = !self.has_hf(i);
            for (k, &v) in row.iter().enumerate() {
                if better(v, fresh, best, best_fresh) {
                    (mi, mk, best, best_fresh) = (i, k, v, fresh);
                }
            }
        }
        let r_tilde = self.eim.residual(&surrogate[mi][mk]);

        let new_hf = if self.has_hf(mi) { None } else { Some(mi) };
        if let Some(i) = new_hf {
            self.compute_hf(i)?;
        }

        let (mut bi, mut bk) = (mi, mk);
        if variant == Variant::Preim && new_hf.is_some() {
            let mut top = -1.0;
            for &i in &self.hf_order {
                let values: Vec<f64> = if Some(i) == new_hf {
                    self.hf_gamma[i]
                        .as_ref()
                        .expect("computed")
                        .iter()
                        .map(|g| norm_inf(&self.eim.residual(g)))
                        .collect()
                } else {
                    norms[i].clone()
                };
                for (k, v) in values.into_iter().enumerate() {
                    if v > top || (v == top && (i, k) < (bi, bk)) {
                        (bi, bk, top) = (i, k, v);
                    }
                }
            }
        }

        let (r_bar, source) = if use_hf {
            let g = &self.hf_gamma[bi].as_ref().expect("pair has a high-fidelity trajectory")[bk];
            (self.eim.residual(g), FieldSource::HighFidelity)
        } else {
            (r_tilde.clone(), FieldSource::Reduced)
        };
        let r_bar_norm = norm_inf(&r_bar);

        let (incr_rk, delta_eim) = if r_bar_norm < eps_eim || r_bar_norm < 1e-14 {
            (false, norm_inf(&r_tilde))
        } else {
            self.eim.append(&r_bar, self.params[bi], bk, source)?;
            (true, r_bar_norm)
        };
        Ok(UpdateOutcome { incr_rk, mu_index: mi, k: mk, mu_bar_index: bi, k_bar: bk, new_hf, delta_eim })
    }

    /// Residual-based indicator `(Σ_k Δtᵏ ‖ρᵏ‖²)^{1/2}` of the reduced
    /// trajectory in the high-fidelity scheme with interpolated nonlinearity.
    pub fn error_estimator(&self, mu: f64) -> Result<f64> {
        error_estimator(self.model, &self.basis, &self.eim, &self.rom, mu)
    }
}

/// See [`PreimState::error_estimator`].
pub fn error_estimator(model: &HfModel, basis: &RBasis, eim: &EimApprox, rom: &ReducedModel, mu: f64) -> Result<f64> {
    let traj = reconstruct(basis, mu, &online_solve(rom, mu)?)?;
    let mut total = 0.0;
    for k in 1..traj.len() {
        let prev = &traj.fields[k - 1];
        let g = gamma_field(model, mu, prev)?;
        let g = if eim.is_empty() { vec![0.0; g.len()] } else { eim.interpolate(&g) };
        let rho = step_residual(model, k, prev, &traj.fields[k], &g)?;
        total += model.dt(k) * dot(&rho, &rho);
    }
    Ok(total.sqrt())
}

#[derive(Debug, Clone)]
pub struct PreimOutput {
    pub variant: Variant,
    pub basis: RBasis,
    pub eim: EimApprox,
    pub rom: ReducedModel,
    /// High-fidelity trajectories in order of computation.
    pub hf: Vec<Trajectory>,
    pub log: Vec<IterationRecord>,
    /// Number of interpolation updates performed, including rejected ones.
    pub updates: usize,
    pub delta_eim: f64,
    pub delta_rb: Option<f64>,
    pub seconds: f64,
}

fn max_estimator(state: &PreimState<'_>, candidates: &[usize]) -> Result<Option<(usize, f64)>> {
    let values: Vec<f64> =
        candidates.par_iter().map(|&i| state.error_estimator(state.params[i])).collect::<Result<_>>()?;
    let mut best: Option<(usize, f64)> = None;
    for (&i, &v) in candidates.iter().zip(&values) {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    Ok(best)
}

/// Full progressive offline stage.
pub fn preim_offline(model: &HfModel, params: &[f64], config: &PreimConfig) -> Result<PreimOutput> {
    let PreimConfig { eps_pod, eps_eim, eps_rb, rb_criterion, variant, ref init, max_iterations } = *config;
    if !(eps_pod > 0.0 && eps_eim > 0.0 && eps_rb > 0.0) {
        return Err(PreimError::invalid("thresholds must be positive"));
    }
    if params.is_empty() {
        return Err(PreimError::invalid("empty training set"));
    }
    let start = Instant::now();
    let cap = max_iterations.unwrap_or(10 * params.len() * model.num_steps());
    let all: Vec<usize> = (0..params.len()).collect();

    let mut state = PreimState::init(model, params, init, eps_pod)?;
    let rb_delta = |state: &PreimState<'_>| -> Result<Option<f64>> {
        if rb_criterion {
            Ok(max_estimator(state, &all)?.map(|(_, v)| v))
        } else {
            Ok(None)
        }
    };
    let rb_ok = |d: Option<f64>| d.is_none_or(|v| v <= eps_rb);

    let mut delta_eim = state.log[0].delta_eim;
    let mut delta_rb = rb_delta(&state)?;
    state.log[0].delta_rb = delta_rb;
    let mut updates = 0usize;

    // The initial measure only covers the initial trajectories, so the loop is
    // left only once an update over the whole training set finds nothing to add.
    'outer: loop {
        let mut extra_hf = 0;
        let outcome = loop {
            if updates >= cap {
                return Err(PreimError::NonTermination {
                    iterations: updates,
                    diagnostic: format!(
                        "rank {}, {} high-fidelity trajectories, last delta_eim {delta_eim:e}",
                        state.eim.rank(),
                        state.hf_count()
                    ),
                });
            }
            updates += 1;
            let out = state.update_eim(eps_eim, variant)?;
            if out.incr_rk {
                break out;
            }
            delta_eim = out.delta_eim;
            if let Some(i) = out.new_hf {
                state.enrich_basis(i)?;
            }
            if delta_eim <= eps_eim {
                delta_rb = rb_delta(&state)?;
                if rb_ok(delta_rb) {
                    break 'outer;
                }
            }
            if out.new_hf.is_some() {
                // the basis changed, so the same update may now succeed
                continue;
            }
            let fresh: Vec<usize> = (0..params.len()).filter(|&i| !state.has_hf(i)).collect();
            match max_estimator(&state, &fresh)? {
                Some((i, _)) => {
                    state.compute_hf(i)?;
                    state.enrich_basis(i)?;
                    extra_hf += 1;
                }
                None => {
                    if delta_eim <= eps_eim && rb_ok(delta_rb) {
                        break 'outer;
                    }
                    return Err(PreimError::NonTermination {
                        iterations: updates,
                        diagnostic: "every training parameter already has a high-fidelity trajectory".into(),
                    });
                }
            }
        };
        if let Some(i) = outcome.new_hf {
            state.enrich_basis(i)?;
        } else {
            state.rebuild_rom()?;
        }
        delta_eim = outcome.delta_eim;
        delta_rb = rb_delta(&state)?;
        let sel = *state.eim.log().last().expect("rank increased");
        state.log.push(IterationRecord {
            m: state.eim.rank(),
            mu: params[outcome.mu_index],
            k: outcome.k,
            mu_bar: params[outcome.mu_bar_index],
            k_bar: outcome.k_bar,
            new_hf: outcome.new_hf.is_some(),
            extra_hf,
            delta_eim,
            delta_rb,
            basis_len: state.basis.len(),
            hf_count: state.hf_count(),
            source: sel.source,
        });
    }

    Ok(PreimOutput {
        variant,
        hf: state.hf_trajectories().into_iter().cloned().collect(),
        basis: state.basis,
        eim: state.eim,
        rom: state.rom,
        log: state.log,
        updates,
        delta_eim,
        delta_rb,
        seconds: start.elapsed().as_secs_f64(),
    })
}
