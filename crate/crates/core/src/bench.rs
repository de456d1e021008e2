//! The two heat-transfer test cases, error metrics and the comparison report.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::archive::ArchiveInfo;
use crate::eim::{EimApprox, FieldSource, GammaTrajectory};
use crate::fem::{HfModel, HfModelSpec, Nonlinearity, Trajectory};
use crate::mesh::{generate_perforated_plate, GridMode};
use crate::pod::{GramOperator, RBasis};
use crate::progressive::{preim_offline, IterationRecord, PreimConfig, Variant};
use crate::rom::{online_solve, reconstruct, ReducedModel};
use crate::standard::{gamma_trajectory, hf_sweep, standard_offline};
use crate::{PreimError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseId {
    A,
    B,
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseId::A => "a",
            CaseId::B => "b",
        })
    }
}

impl FromStr for CaseId {
    type Err = PreimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(CaseId::A),
            "b" => Ok(CaseId::B),
            other => Err(PreimError::invalid(format!("unknown case `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaseConfig {
    pub id: CaseId,
    pub kappa0: f64,
    pub flux: f64,
    pub u0: f64,
    pub gamma: Nonlinearity,
    pub t_final: f64,
    pub steps: usize,
    pub training: Vec<f64>,
    pub verification: Vec<f64>,
    pub eps_pod: f64,
    pub eps_eim: f64,
    pub eps_rb: f64,
    pub grid_mode: GridMode,
    pub refine: usize,
}

/// Nonlinearity on the solution, nodal evaluation grid.
pub fn testcase_a() -> CaseConfig {
    CaseConfig {
        id: CaseId::A,
        kappa0: 1.05,
        flux: 3.0,
        u0: 293.0,
        gamma: Nonlinearity::SolutionSine { u_ref: 293.0, u_max: 323.0, period: 20.0 },
        t_final: 5.0,
        steps: 50,
        training: (1..=20).map(f64::from).collect(),
        verification: (4..=80).map(|i| 0.25 * f64::from(i)).collect(),
        eps_pod: 1e-3,
        eps_eim: 5e-2,
        eps_rb: 1e-1,
        grid_mode: GridMode::Nodes,
        refine: 10,
    }
}

/// Nonlinearity on the gradient, centroid evaluation grid.
pub fn testcase_b() -> CaseConfig {
    CaseConfig {
        id: CaseId::B,
        kappa0: 1.0,
        flux: 3.0,
        u0: 293.0,
        gamma: Nonlinearity::GradientSineSquared { omega: 6.25e-3 },
        t_final: 2.5,
        steps: 50,
        training: (1..=40).map(f64::from).collect(),
        verification: (0..=78).map(|i| 1.0 + 0.5 * f64::from(i)).collect(),
        eps_pod: 5e-2,
        eps_eim: 1e-1,
        eps_rb: 1e-1,
        grid_mode: GridMode::Centroids,
        refine: 10,
    }
}

pub fn testcase(id: CaseId) -> CaseConfig {
    match id {
        CaseId::A => testcase_a(),
        CaseId::B => testcase_b(),
    }
}

impl CaseConfig {
    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.steps).map(|k| k as f64 * dt).collect()
    }

    /// Archive metadata for a model built from this configuration.
    pub fn archive_info(&self, algorithm: Algorithm) -> ArchiveInfo {
        let lo = self.training.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.training.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ArchiveInfo {
            case: self.id.to_string(),
            algorithm: algorithm.name().to_string(),
            refine: self.refine,
            eps_pod: self.eps_pod,
            eps_eim: self.eps_eim,
            eps_rb: match algorithm {
                Algorithm::Standard => None,
                Algorithm::Progressive(_) => Some(self.eps_rb),
            },
            grid_mode: self.grid_mode,
            mu_range: (lo, hi),
        }
    }

    pub fn build_model(&self) -> Result<HfModel> {
        let mesh = generate_perforated_plate(self.refine)?;
        let n = mesh.num_nodes();
        let times = self.times();
        HfModel::new(HfModelSpec {
            mesh,
            grid_mode: self.grid_mode,
            kappa0: self.kappa0,
            gamma: self.gamma.clone(),
            u0: vec![self.u0; n],
            flux: vec![self.flux; times.len()],
            times,
            source: None,
        })
    }
}

/// `(Σ_{k≥1} Δtᵏ ‖uᵏ − vᵏ‖²_C)^{1/2}`
pub fn spacetime_error(u: &Trajectory, v: &Trajectory, gram: &GramOperator, times: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.len() != times.len() {
        return Err(PreimError::invalid("trajectories and time grid differ in length"));
    }
    let mut total = 0.0;
    for k in 1..times.len() {
        if u.fields[k].len() != v.fields[k].len() || u.fields[k].len() != gram.matrix.dim() {
            return Err(PreimError::invalid("field length mismatch"));
        }
        let d: Vec<f64> = u.fields[k].iter().zip(&v.fields[k]).map(|(a, b)| a - b).collect();
        total += (times[k] - times[k - 1]) * gram.inner(&d, &d);
    }
    Ok(total.sqrt())
}

/// Largest `‖γ − I_M γ‖_∞` over every field of every trajectory.
pub fn eim_sup_error(eim: &EimApprox, training: &[GammaTrajectory]) -> f64 {
    training
        .par_iter()
        .map(|t| {
            t.fields
                .iter()
                .map(|g| crate::numerics::norm_inf(&if eim.is_empty() { g.clone() } else { eim.residual(g) }))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Standard,
    Progressive(Variant),
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Standard => "standard",
            Algorithm::Progressive(v) => v.as_str(),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = PreimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Algorithm::Standard),
            other => Ok(Algorithm::Progressive(other.parse()?)),
        }
    }
}

/// Output of one offline pipeline, in a form shared by all algorithms.
#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub basis: RBasis,
    pub eim: EimApprox,
    pub rom: ReducedModel,
    pub hf: Vec<Trajectory>,
    /// `δ_m` per interpolation term; for the standard greedy the terminating value is appended.
    pub eim_decay: Vec<f64>,
    pub log: Vec<IterationRecord>,
    pub delta_eim: f64,
    pub updates: usize,
    pub seconds: f64,
}

impl AlgorithmRun {
    pub fn hf_params(&self) -> Vec<f64> {
        self.hf.iter().map(|t| t.mu).collect()
    }
}

/// Offline options beyond the case defaults.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub rb_criterion: bool,
    /// Training indices of the initial high-fidelity set; first parameter when empty.
    pub init: Vec<usize>,
}

pub fn run_algorithm(config: &CaseConfig, model: &HfModel, algorithm: Algorithm, opts: &RunOptions) -> Result<AlgorithmRun> {
    match algorithm {
        Algorithm::Standard => {
            let out = standard_offline(model, &config.training, config.eps_pod, config.eps_eim)?;
            let delta_eim = *out.eim_decay.last().expect("greedy records its stopping value");
            Ok(AlgorithmRun {
                algorithm,
                basis: out.basis,
                eim: out.eim,
                rom: out.rom,
                hf: out.hf,
                eim_decay: out.eim_decay,
                log: Vec::new(),
                delta_eim,
                updates: 0,
                seconds: out.seconds,
            })
        }
        Algorithm::Progressive(variant) => {
            let mut cfg = PreimConfig::new(config.eps_pod, config.eps_eim, variant);
            cfg.eps_rb = config.eps_rb;
            cfg.rb_criterion = opts.rb_criterion;
            if !opts.init.is_empty() {
                cfg.init = opts.init.clone();
            }
            let out = preim_offline(model, &config.training, &cfg)?;
            Ok(AlgorithmRun {
                algorithm,
                eim_decay: out.log.iter().map(|r| r.delta_eim).collect(),
                basis: out.basis,
                eim: out.eim,
                rom: out.rom,
                hf: out.hf,
                log: out.log,
                delta_eim: out.delta_eim,
                updates: out.updates,
                seconds: out.seconds,
            })
        }
    }
}

/// Reduced-order error against high-fidelity references, one value per reference.
pub fn errors_vs_mu(model: &HfModel, run: &AlgorithmRun, references: &[Trajectory]) -> Result<Vec<f64>> {
    let gram = GramOperator::h1(model);
    references
        .par_iter()
        .map(|hf| {
            let red = reconstruct(&run.basis, hf.mu, &online_solve(&run.rom, hf.mu)?)?;
            spacetime_error(hf, &red, &gram, &model.times)
        })
        .collect()
}

/// Per-algorithm summary line.
#[derive(Debug, Clone)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub basis_len: usize,
    pub eim_rank: usize,
    pub hf_count: usize,
    pub offline_seconds: f64,
    pub delta_eim: f64,
    pub max_error: f64,
    pub mean_error: f64,
}

/// Everything a comparison produced.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<AlgorithmRun>,
    pub errors: Vec<Vec<f64>>,
    pub summaries: Vec<Summary>,
    pub references: Vec<Trajectory>,
}

/// Runs every algorithm, evaluates it on the verification grid and, when
/// `out` is given, writes `<out>/<case>/<algo>/{eim_decay,selection,errors_vs_mu,summary}.csv`.
pub fn run_comparison(
    config: &CaseConfig,
    algorithms: &[Algorithm],
    opts: &RunOptions,
    out: Option<&Path>,
) -> Result<Comparison> {
    let model = config.build_model()?;
    let references = hf_sweep(&model, &config.verification)?;
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    let mut summaries = Vec::new();
    for &algo in algorithms {
        let run = run_algorithm(config, &model, algo, opts)?;
        let err = errors_vs_mu(&model, &run, &references)?;
        summaries.push(Summary {
            algorithm: algo,
            basis_len: run.basis.len(),
            eim_rank: run.eim.rank(),
            hf_count: run.hf.len(),
            offline_seconds: run.seconds,
            delta_eim: run.delta_eim,
            max_error: err.iter().copied().fold(0.0, f64::max),
            mean_error: err.iter().sum::<f64>() / err.len().max(1) as f64,
        });
        runs.push(run);
        errors.push(err);
    }
    let cmp = Comparison { runs, errors, summaries, references };
    if let Some(dir) = out {
        write_report(config, &model, &cmp, &dir.join(config.id.to_string()))?;
    }
    Ok(cmp)
}

/// Writes `eim_decay.csv` and `selection.csv` for one run into `dir`.
pub fn write_run_logs(run: &AlgorithmRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("eim_decay.csv"))?;
    writeln!(f, "m,delta_eim")?;
    for (m, v) in run.eim_decay.iter().enumerate() {
        writeln!(f, "{},{v:.16e}", m + 1)?;
    }

    let mut f = fs::File::create(dir.join("selection.csv"))?;
    writeln!(f, "m,mu,k,mu_bar,k_bar,point,residual_norm,new_hf,extra_hf,delta_eim,N,hf_count,source")?;
    if run.log.is_empty() {
        for (m, s) in run.eim.log().iter().enumerate() {
            writeln!(
                f,
                "{},{},{},{},{},{},{:.16e},,,{:.16e},{},{},{}",
                m + 1,
                s.mu,
                s.k,
                s.mu,
                s.k,
                s.point,
                s.residual_norm,
                s.residual_norm,
                run.basis.len(),
                run.hf.len(),
                s.source.as_str()
            )?;
        }
    } else {
        for (r, s) in run.log.iter().zip(run.eim.log()) {
            writeln!(
                f,
                "{},{},{},{},{},{},{:.16e},{},{},{:.16e},{},{},{}",
                r.m,
                r.mu,
                r.k,
                r.mu_bar,
                r.k_bar,
                s.point,
                s.residual_norm,
                u8::from(r.new_hf),
                r.extra_hf,
                r.delta_eim,
                r.basis_len,
                r.hf_count,
                r.source.as_str()
            )?;
        }
    }
    Ok(())
}

fn write_report(config: &CaseConfig, model: &HfModel, cmp: &Comparison, dir: &Path) -> Result<()> {
    let gram = GramOperator::h1(model);
    let standard = cmp.summaries.iter().find(|s| s.algorithm == Algorithm::Standard);
    let p = config.training.len() as f64;
    for ((run, err), summary) in cmp.runs.iter().zip(&cmp.errors).zip(&cmp.summaries) {
        let d = dir.join(run.algorithm.name());
        fs::create_dir_all(&d)?;

        write_run_logs(run, &d)?;

        let mut f = fs::File::create(d.join("errors_vs_mu.csv"))?;
        writeln!(f, "mu,error,relative_error")?;
        for (hf, e) in cmp.references.iter().zip(err) {
            let zero = Trajectory { mu: hf.mu, fields: vec![vec![0.0; model.num_dofs()]; hf.len()] };
            let norm = spacetime_error(hf, &zero, &gram, &model.times)?;
            writeln!(f, "{},{e:.16e},{:.16e}", hf.mu, e / norm)?;
        }

        let mut f = fs::File::create(d.join("summary.csv"))?;
        writeln!(
            f,
            "algorithm,N,M,hf_count,hf_percent,offline_seconds,time_percent,delta_eim,max_error,mean_error"
        )?;
        let time_percent = standard.map_or(String::new(), |s| {
            format!("{:.2}", 100.0 * summary.offline_seconds / s.offline_seconds.max(f64::MIN_POSITIVE))
        });
        let hf_base = standard.map_or(p, |s| s.hf_count as f64);
        writeln!(
            f,
            "{},{},{},{},{:.2},{:.6},{},{:.16e},{:.16e},{:.16e}",
            summary.algorithm,
            summary.basis_len,
            summary.eim_rank,
            summary.hf_count,
            100.0 * summary.hf_count as f64 / hf_base,
            summary.offline_seconds,
            time_percent,
            summary.delta_eim,
            summary.max_error,
            summary.mean_error
        )?;
    }
    Ok(())
}

/// γ-fields of every trajectory, for error measurements.
pub fn gamma_training(model: &HfModel, trajectories: &[Trajectory]) -> Result<Vec<GammaTrajectory>> {
    trajectories.par_iter().map(|t| gamma_trajectory(model, t)).collect()
}

/// Whether every interpolation function came from high-fidelity data.
pub fn all_high_fidelity(eim: &EimApprox) -> bool {
    eim.log().iter().all(|s| s.source == FieldSource::HighFidelity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_constants() {
        let a = testcase_a();
        assert_eq!(a.dt() * a.steps as f64, 5.0);
        assert_eq!(a.dt(), 0.1);
        assert_eq!(a.training.len(), 20);
        assert_eq!(a.verification.len(), 77);
        assert_eq!(a.verification[0], 1.0);
        assert_eq!(*a.verification.last().unwrap(), 20.0);
        assert_eq!(a.gamma.eval_value(7.0, 293.0), 0.0);
        assert!((a.gamma.eval_value(5.0, 323.0) - 1.0).abs() < 1e-15);

        let b = testcase_b();
        assert_eq!(b.dt() * b.steps as f64, 2.5);
        assert_eq!(b.dt(), 0.05);
        assert_eq!(b.training.len(), 40);
        assert_eq!(b.verification.len(), 79);
        assert_eq!(b.gamma.eval_gradient(3.0, [0.0, 0.0]), 0.0);
        for mu in [1.0, 17.0, 40.0] {
            for g in [[1.0, 2.0], [10.0, -3.0], [30.0, 5.0]] {
                let v = b.gamma.eval_gradient(mu, g);
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn spacetime_error_of_constant() {
        let mut cfg = testcase_a();
        cfg.refine = 1;
        let model = cfg.build_model().unwrap();
        let gram = GramOperator::h1(&model);
        let n = model.num_dofs();
        let c = 2.5;
        let u = Trajectory { mu: 1.0, fields: vec![vec![c; n]; model.times.len()] };
        let z = Trajectory { mu: 1.0, fields: vec![vec![0.0; n]; model.times.len()] };
        let e = spacetime_error(&u, &z, &gram, &model.times).unwrap();
        assert!((e - c * (5.0f64 * 12.0).sqrt()).abs() < 1e-10);
        assert_eq!(spacetime_error(&u, &u, &gram, &model.times).unwrap(), 0.0);
        let short = Trajectory { mu: 1.0, fields: vec![vec![0.0; n]; 3] };
        assert!(spacetime_error(&u, &short, &gram, &model.times).is_err());
    }

    #[test]
    fn spacetime_error_triangle_inequality() {
        use rand::{Rng, SeedableRng};
        let mut cfg = testcase_a();
        cfg.refine = 1;
        cfg.steps = 4;
        let model = cfg.build_model().unwrap();
        let gram = GramOperator::h1(&model);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut random = || Trajectory {
            mu: 1.0,
            fields: (0..5).map(|_| (0..model.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
        };
        for _ in 0..10 {
            let (a, b, c) = (random(), random(), random());
            let ab = spacetime_error(&a, &b, &gram, &model.times).unwrap();
            let bc = spacetime_error(&b, &c, &gram, &model.times).unwrap();
            let ac = spacetime_error(&a, &c, &gram, &model.times).unwrap();
            assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn sup_error_of_empty_interpolant_is_peak() {
        let training = vec![GammaTrajectory { mu: 1.0, fields: vec![vec![0.5, -2.0], vec![1.0, 0.0]] }];
        assert_eq!(eim_sup_error(&EimApprox::new(2), &training), 2.0);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for name in ["standard", "preim", "preim-nr", "user"] {
            assert_eq!(name.parse::<Algorithm>().unwrap().name(), name);
        }
        assert!("fast".parse::<Algorithm>().is_err());
    }
}
