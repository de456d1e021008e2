//! Empirical interpolation of parametrized fields sampled on the evaluation grid.

use rayon::prelude::*;

use crate::numerics::{norm_inf, DenseMatrix};
use crate::{PreimError, Result};

/// Where the field that produced an interpolation function came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSource {
    HighFidelity,
    Reduced,
}

impl FieldSource {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldSource::HighFidelity => "hf",
            FieldSource::Reduced => "rb",
        }
    }
}

/// One greedy selection: the training pair, the magic point it produced and
/// the sup norm of the residual that was appended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub mu: f64,
    pub k: usize,
    pub point: usize,
    pub residual_norm: f64,
    pub source: FieldSource,
}

/// Rank-`M` interpolant `I_M γ = Σ_j φ_j q_j` with `B φ = γ(X_M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EimApprox {
    grid_len: usize,
    points: Vec<usize>,
    q: Vec<Vec<f64>>,
    /// Row `i` holds `q_j(x_i)` for `j < i`; the diagonal is implicitly 1.
    b_lower: Vec<Vec<f64>>,
    log: Vec<Selection>,
}

impl EimApprox {
    pub fn new(grid_len: usize) -> Self {
        Self { grid_len, points: Vec::new(), q: Vec::new(), b_lower: Vec::new(), log: Vec::new() }
    }

    /// Rebuilds an approximation from stored points and functions. The
    /// interpolation matrix is recomputed and its structure verified.
    pub fn from_parts(grid_len: usize, points: Vec<usize>, q: Vec<Vec<f64>>, log: Vec<Selection>) -> Result<Self> {
        if points.len() != q.len() {
            return Err(PreimError::invalid("point and function counts differ"));
        }
        if q.iter().any(|f| f.len() != grid_len) {
            return Err(PreimError::invalid("interpolation function length does not match the grid"));
        }
        let mut b_lower = Vec::with_capacity(points.len());
        for (i, &p) in points.iter().enumerate() {
            if p >= grid_len || points[..i].contains(&p) {
                return Err(PreimError::invalid("interpolation points must be distinct grid indices"));
            }
            if q[i][p] != 1.0 || points[..i].iter().any(|&x| q[i][x] != 0.0) {
                return Err(PreimError::invalid("interpolation functions are not nested at their points"));
            }
            b_lower.push(q[..i].iter().map(|f| f[p]).collect());
        }
        Ok(Self { grid_len, points, q, b_lower, log })
    }

    pub fn rank(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn q_funcs(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn log(&self) -> &[Selection] {
        &self.log
    }

    /// Full `M × M` interpolation matrix.
    pub fn b_matrix(&self) -> DenseMatrix {
        let m = self.rank();
        let mut b = DenseMatrix::identity(m);
        for (i, row) in self.b_lower.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                b[(i, j)] = *v;
            }
        }
        b
    }

    /// Values of `field` at the interpolation points.
    pub fn sample(&self, field: &[f64]) -> Vec<f64> {
        self.points.iter().map(|&p| field[p]).collect()
    }

    /// Solves `B φ = values` by forward substitution.
    pub fn coefficients(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.rank() {
            return Err(PreimError::invalid(format!(
                "expected {} point values, got {}",
                self.rank(),
                values.len()
            )));
        }
        let mut phi = Vec::with_capacity(values.len());
        for (row, v) in self.b_lower.iter().zip(values) {
            let s: f64 = row.iter().zip(&phi).map(|(b, p)| b * p).sum();
            phi.push(v - s);
        }
        Ok(phi)
    }

    /// `Σ_j φ_j q_j` over the whole grid.
    pub fn evaluate(&self, phi: &[f64]) -> Vec<f64> {
        assert_eq!(phi.len(), self.rank(), "coefficient count must equal the rank");
        let mut out = vec![0.0; self.grid_len];
        for (c, q) in phi.iter().zip(&self.q) {
            if *c != 0.0 {
                crate::numerics::axpy(*c, q, &mut out);
            }
        }
        out
    }

    pub fn interpolate(&self, field: &[f64]) -> Vec<f64> {
        let phi = self.coefficients(&self.sample(field)).expect("sample length equals rank");
        self.evaluate(&phi)
    }

    /// `field − I_M field`
    pub fn residual(&self, field: &[f64]) -> Vec<f64> {
        let mut r = field.to_vec();
        let phi = self.coefficients(&self.sample(field)).expect("sample length equals rank");
        for (c, q) in phi.iter().zip(&self.q) {
            if *c != 0.0 {
                crate::numerics::axpy(-c, q, &mut r);
            }
        }
        r
    }

    /// Adds the interpolation function built from `residual`, which must be
    /// the residual of some field against the current approximation.
    /// Returns the new magic point.
    pub fn append(&mut self, residual: &[f64], mu: f64, k: usize, source: FieldSource) -> Result<usize> {
        if residual.len() != self.grid_len {
            return Err(PreimError::invalid("residual length does not match the grid"));
        }
        let (point, peak) = argmax_abs(residual);
        if !(peak.abs() > 0.0) || !peak.is_finite() {
            return Err(PreimError::DegenerateResidual(peak.abs()));
        }
        let mut q: Vec<f64> = residual.iter().map(|r| r / peak).collect();
        // the residual vanishes at earlier points up to rounding; make it exact
        for &p in &self.points {
            q[p] = 0.0;
        }
        q[point] = 1.0;
        let row = self.q.iter().map(|f| f[point]).collect();
        self.points.push(point);
        self.q.push(q);
        self.b_lower.push(row);
        self.log.push(Selection { mu, k, point, residual_norm: peak.abs(), source });
        Ok(point)
    }

    /// First `m` terms.
    pub fn prefix(&self, m: usize) -> Self {
        let m = m.min(self.rank());
        Self {
            grid_len: self.grid_len,
            points: self.points[..m].to_vec(),
            q: self.q[..m].to_vec(),
            b_lower: self.b_lower[..m].to_vec(),
            log: self.log[..m.min(self.log.len())].to_vec(),
        }
    }
}

/// Index and signed value of the entry of largest magnitude; the smallest
/// index wins ties.
pub fn argmax_abs(v: &[f64]) -> (usize, f64) {
    let mut best = (0, 0.0_f64);
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best.1.abs() {
            best = (i, x);
        }
    }
    best
}

/// Fields `γ(μ, k, ·)` for `k = 0..=K` at one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTrajectory {
    pub mu: f64,
    pub fields: Vec<Vec<f64>>,
}

/// Result of the standard greedy.
#[derive(Debug, Clone)]
pub struct StandardEim {
    pub approx: EimApprox,
    /// `‖r_m‖_∞` of every selected residual, followed by the terminating one.
    pub decay: Vec<f64>,
}

/// Standard greedy EIM over every `(μ, k)` pair of the training set.
///
/// Stops when the largest remaining residual is `≤ eps`, or at `max_rank`.
pub fn standard_eim(training: &[GammaTrajectory], eps: f64, max_rank: Option<usize>) -> Result<StandardEim> {
    if !(eps > 0.0) {
        return Err(PreimError::invalid("EIM threshold must be positive"));
    }
    let grid_len = training
        .first()
        .and_then(|t| t.fields.first())
        .map(Vec::len)
        .ok_or_else(|| PreimError::invalid("empty EIM training set"))?;
    if training.iter().flat_map(|t| &t.fields).any(|f| f.len() != grid_len) {
        return Err(PreimError::invalid("training fields have inconsistent lengths"));
    }
    let cap = max_rank.unwrap_or(grid_len).min(grid_len);

    let mut residuals: Vec<Vec<Vec<f64>>> = training.iter().map(|t| t.fields.clone()).collect();
    let mut approx = EimApprox::new(grid_len);
    let mut decay = Vec::new();
    loop {
        let norms: Vec<Vec<f64>> =
            residuals.par_iter().map(|traj| traj.iter().map(|r| norm_inf(r)).collect()).collect();
        let (mut bi, mut bk, mut best) = (0, 0, -1.0);
        for (i, row) in norms.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                if v > best {
                    (bi, bk, best) = (i, k, v);
                }
            }
        }
        decay.push(best);
        if best <= eps || approx.rank() >= cap {
            break;
        }
        let point = approx.append(&residuals[bi][bk], training[bi].mu, bk, FieldSource::HighFidelity)?;
        let q = approx.q_funcs().last().expect("just appended").clone();
        residuals.par_iter_mut().flatten().for_each(|r| {
            let c = r[point];
            if c != 0.0 {
                crate::numerics::axpy(-c, &q, r);
            }
        });
    }
    Ok(StandardEim { approx, decay })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_field(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn build(n: usize, m: usize, seed: u64) -> (EimApprox, Vec<Vec<f64>>) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let fields: Vec<Vec<f64>> = (0..m).map(|_| random_field(&mut rng, n)).collect();
        let mut e = EimApprox::new(n);
        for (i, f) in fields.iter().enumerate() {
            let r = e.residual(f);
            e.append(&r, i as f64, 0, FieldSource::HighFidelity).unwrap();
        }
        (e, fields)
    }

    #[test]
    fn rank_one_constant() {
        let e = {
            let mut e = EimApprox::new(4);
            e.append(&[0.5, -2.0, 1.0, 2.0], 1.0, 3, FieldSource::HighFidelity).unwrap();
            e
        };
        assert_eq!(e.points(), &[1]);
        assert_eq!(e.q_funcs()[0][1], 1.0);
        assert_eq!(e.b_matrix().as_slice(), &[1.0]);
        assert_eq!(e.coefficients(&[3.0]).unwrap(), vec![3.0]);
        assert_eq!(e.coefficients(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn append_picks_peak() {
        let mut r = vec![0.0; 10];
        r[7] = 2.0;
        r[3] = -1.5;
        let mut e = EimApprox::new(10);
        assert_eq!(e.append(&r, 1.0, 0, FieldSource::HighFidelity).unwrap(), 7);
        assert_eq!(e.q_funcs()[0][7], 1.0);
        assert_eq!(e.q_funcs()[0][3], -0.75);
    }

    #[test]
    fn ties_go_to_smallest_index() {
        assert_eq!(argmax_abs(&[1.0, -3.0, 3.0]), (1, -3.0));
    }

    #[test]
    fn zero_residual_is_rejected() {
        let mut e = EimApprox::new(3);
        assert!(matches!(
            e.append(&[0.0; 3], 1.0, 0, FieldSource::HighFidelity),
            Err(PreimError::DegenerateResidual(_))
        ));
        assert!(e.is_empty());
    }

    #[test]
    fn coefficients_reject_wrong_length() {
        let (e, _) = build(8, 2, 1);
        assert!(e.coefficients(&[1.0]).is_err());
    }

    #[test]
    fn evaluate_unit_and_zero() {
        let (e, _) = build(12, 3, 2);
        assert_eq!(e.evaluate(&[1.0, 0.0, 0.0]), e.q_funcs()[0]);
        assert!(e.evaluate(&[0.0; 3]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn from_parts_round_trip() {
        let (e, _) = build(15, 4, 3);
        let back = EimApprox::from_parts(15, e.points().to_vec(), e.q_funcs().to_vec(), e.log().to_vec()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn prefix_is_consistent() {
        let (e, _) = build(15, 4, 4);
        let p = e.prefix(2);
        assert_eq!(p.rank(), 2);
        assert_eq!(p.b_matrix().as_slice(), e.prefix(2).b_matrix().as_slice());
        assert_eq!(p.points(), &e.points()[..2]);
    }

    #[test]
    fn separable_training_set_gives_rank_one() {
        let shape: Vec<f64> = (0..20).map(|i| ((i as f64) * 0.3).sin()).collect();
        let training: Vec<GammaTrajectory> = (1..4)
            .map(|m| GammaTrajectory {
                mu: m as f64,
                fields: (0..5).map(|k| shape.iter().map(|s| s * (m * (k + 1)) as f64).collect()).collect(),
            })
            .collect();
        let out = standard_eim(&training, 1e-10, None).unwrap();
        assert_eq!(out.approx.rank(), 1);
        assert!(out.decay[1] <= 1e-12 * out.decay[0]);
        let peak = training.iter().flat_map(|t| &t.fields).map(|f| norm_inf(f)).fold(0.0, f64::max);
        assert_eq!(out.decay[0], peak);
    }

    #[test]
    fn standard_eim_is_deterministic_and_converges() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let training: Vec<GammaTrajectory> = (0..4)
            .map(|i| GammaTrajectory { mu: i as f64, fields: (0..6).map(|_| random_field(&mut rng, 30)).collect() })
            .collect();
        let a = standard_eim(&training, 1e-3, None).unwrap();
        let b = standard_eim(&training, 1e-3, None).unwrap();
        assert_eq!(a.approx, b.approx);
        assert!(*a.decay.last().unwrap() <= 1e-3);
        for s in a.approx.log() {
            assert!(s.residual_norm > 1e-3);
        }
        for t in &training {
            for f in &t.fields {
                let r = a.approx.residual(f);
                assert!(norm_inf(&r) <= 1e-3);
            }
        }
    }

    fn check_structure(e: &EimApprox) {
        let b = e.b_matrix();
        let m = e.rank();
        for i in 0..m {
            assert_eq!(b[(i, i)], 1.0);
            for j in 0..m {
                if j > i {
                    assert_eq!(b[(i, j)], 0.0);
                } else if j < i {
                    assert!(b[(i, j)].abs() <= 1.0);
                }
            }
            for j in i + 1..m {
                assert_eq!(e.q_funcs()[j][e.points()[i]], 0.0);
            }
            assert_eq!(norm_inf(&e.q_funcs()[i]), 1.0);
        }
        let mut pts = e.points().to_vec();
        pts.sort_unstable();
        pts.dedup();
        assert_eq!(pts.len(), m);
    }

    proptest! {
        #[test]
        fn structure_and_exactness(seed in 0u64..1000, m in 1usize..8) {
            let (e, fields) = build(40, m, seed);
            check_structure(&e);
            for f in &fields {
                let interp = e.interpolate(f);
                for &p in e.points() {
                    prop_assert!((interp[p] - f[p]).abs() <= 1e-12 * norm_inf(f));
                }
            }
        }

        #[test]
        fn forward_substitution_reconstructs(seed in 0u64..1000, vals in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let (e, _) = build(25, 3, seed);
            let phi = e.coefficients(&vals).unwrap();
            let back = e.sample(&e.evaluate(&phi));
            for (a, b) in back.iter().zip(&vals) {
                prop_assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn evaluate_is_linear(seed in 0u64..1000, a in proptest::collection::vec(-3.0f64..3.0, 4), b in proptest::collection::vec(-3.0f64..3.0, 4)) {
            let (e, _) = build(20, 4, seed);
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = e.evaluate(&sum);
            let ea = e.evaluate(&a);
            let eb = e.evaluate(&b);
            for i in 0..20 {
                prop_assert!((lhs[i] - ea[i] - eb[i]).abs() <= 1e-12);
            }
        }
    }
}
