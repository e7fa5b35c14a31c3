//! Ridge-regression oracles approximating `(A^T A + lambda I)^{-1} u`, and the
//! `S = (A^T A + lambda I)^{-1}(A^T A - lambda I)` multiply built on top of them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

/// Tolerance used when validating `sigma_max(A) <= 1`.
pub const SPECTRAL_NORM_TOL: f64 = 1e-6;

/// Accuracy of the "exact" solve underneath the noise-injected oracle.
pub const NOISY_BASE_EPS: f64 = 1e-13;

/// Dense data matrix `A` (`rows = d'`, `cols = d`) with `sigma_max(A) <= 1`.
///
/// Keeps a transposed copy so that single rows are contiguous for SVRG and
/// `A^T u` is a plain column-major product.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    a: DMatrix<f64>,
    at: DMatrix<f64>,
}

impl DataMatrix {
    /// Validates the spectral norm by power iteration and rejects `sigma_max > 1`.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let m = Self::new_unchecked(a);
        let sigma = m.spectral_norm_estimate();
        if sigma > 1.0 + SPECTRAL_NORM_TOL {
            return Err(Error::SpectralNorm { sigma });
        }
        Ok(m)
    }

    /// Divides `A` by its estimated largest singular value.
    pub fn scaled_to_unit(a: DMatrix<f64>) -> Result<Self> {
        let m = Self::new_unchecked(a);
        let sigma = m.spectral_norm_estimate();
        if sigma == 0.0 {
            return Ok(m);
        }
        // Power iteration approaches sigma from below; the slack keeps the
        // rescaled norm at or under one.
        Ok(Self::new_unchecked(m.a / (sigma * (1.0 + SPECTRAL_NORM_TOL))))
    }

    pub(crate) fn new_unchecked(a: DMatrix<f64>) -> Self {
        let at = a.transpose();
        DataMatrix { a, at }
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `A v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.a * v
    }

    /// `A^T u`.
    pub fn apply_t(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.at * u
    }

    /// `A^T A v`.
    pub fn gram_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_t(&self.apply(v))
    }

    /// Row `i` of `A` as a contiguous slice.
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        let d = self.cols();
        &self.at.as_slice()[i * d..(i + 1) * d]
    }

    /// Largest singular value by power iteration on `A^T A`, run until the
    /// Rayleigh quotient settles to 1e-12 relative.
    pub fn spectral_norm_estimate(&self) -> f64 {
        let d = self.cols();
        if d == 0 || self.rows() == 0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut v = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let norm = v.norm();
        v /= norm;
        let mut estimate = 0.0;
        for _ in 0..20_000 {
            let w = self.gram_apply(&v);
            let rq = v.dot(&w);
            let wn = w.norm();
            if wn == 0.0 {
                return 0.0;
            }
            v = w / wn;
            if (rq - estimate).abs() <= 1e-12 * rq.abs() {
                estimate = rq;
                break;
            }
            estimate = rq;
        }
        estimate.max(0.0).sqrt()
    }
}

/// Conjugate gradient on `(A^T A + lambda I) x = u`, stopping once the residual
/// satisfies `||(A^T A + lambda I) x - u|| <= tol ||u||`.
///
/// The iteration cap is ten times the textbook bound
/// `ceil(sqrt(k)/2 * ln(2 sqrt(k) / tol))` for condition number `k = (1 + lambda)/lambda`.
pub fn ridge_cg(
    matrix: &DataMatrix,
    lambda: f64,
    u: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", lambda, "must be positive"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", tol, "must be positive"));
    }
    check_dim("ridge right-hand side", matrix.cols(), u.len())?;

    let target = tol * u.norm();
    let mut x = DVector::zeros(u.len());
    if target == 0.0 {
        return Ok(x);
    }
    let cond = (1.0 + lambda) / lambda;
    let bound = (0.5 * cond.sqrt() * (2.0 * cond.sqrt() / tol).ln()).ceil() as usize;
    let max_iter = 10 * bound.max(1) + 10;

    let mut r = u.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..max_iter {
        if rr.sqrt() <= target {
            // the recursive residual drifts from the true one; restart from
            // the true residual when they disagree
            let true_r = residual(matrix, lambda, u, &x);
            if true_r.norm() <= target {
                return Ok(x);
            }
            r = true_r;
            p = r.clone();
            rr = r.dot(&r);
            continue;
        }
        let mut ap = matrix.gram_apply(&p);
        ap.axpy(lambda, &p, 1.0);
        let alpha = rr / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.dot(&r);
        let beta = rr_new / rr;
        rr = rr_new;
        p *= beta;
        p += &r;
    }
    let true_r = residual(matrix, lambda, u, &x).norm();
    if true_r <= target {
        return Ok(x);
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: true_r / u.norm(),
    })
}

/// `u - (A^T A + lambda I) x`.
fn residual(matrix: &DataMatrix, lambda: f64, u: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut r = matrix.gram_apply(x);
    r.axpy(lambda, x, 1.0);
    u - r
}

/// Exact solve followed by i.i.d. uniform noise on every coordinate.
///
/// The noise amplitude is `10^-k * ||u||`, so for unit-norm right-hand sides the
/// perturbation lies in `[-10^-k, 10^-k]` per coordinate. `k = None` disables
/// the noise.
pub fn ridge_noisy(
    matrix: &DataMatrix,
    lambda: f64,
    u: &DVector<f64>,
    k: Option<u32>,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    let mut x = ridge_cg(matrix, lambda, u, NOISY_BASE_EPS * lambda)?;
    if let Some(k) = k {
        let amp = 10f64.powi(-(k as i32)) * u.norm();
        if amp > 0.0 {
            for xi in x.iter_mut() {
                *xi += rng.gen_range(-amp..=amp);
            }
        }
    }
    Ok(x)
}

/// SVRG on `f(y) = 1/2 y^T (A^T A + lambda I) y - u^T y`, written as the
/// average over rows `i` of `f_i(y) = d'/2 (a_i^T y)^2 + lambda/2 ||y||^2 - u^T y`.
///
/// Epochs are one full gradient followed by `2 d'` sampled steps; a full
/// gradient and every `d'` sampled steps each count as one pass. The step is
/// `1 / (2 L)` with `L = d' * mean_i ||a_i||^2 + lambda`. Returns the iterate
/// once `passes` is spent.
pub fn ridge_svrg(
    matrix: &DataMatrix,
    lambda: f64,
    u: &DVector<f64>,
    passes: usize,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", lambda, "must be positive"));
    }
    if passes < 2 {
        return Err(Error::invalid("passes", passes as f64, "SVRG needs at least 2 passes"));
    }
    check_dim("ridge right-hand side", matrix.cols(), u.len())?;

    let rows = matrix.rows();
    let d = matrix.cols();
    let mut y = DVector::zeros(d);
    let u_norm = u.norm();
    if u_norm == 0.0 || rows == 0 {
        return if rows == 0 { Ok(u / lambda) } else { Ok(y) };
    }
    let scale = rows as f64;
    let mean_row_sq = (0..rows)
        .map(|i| matrix.row(i).iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / scale;
    let step = 1.0 / (2.0 * (scale * mean_row_sq + lambda));

    let full_gradient = |y: &DVector<f64>| {
        let mut g = matrix.gram_apply(y);
        g.axpy(lambda, y, 1.0);
        g -= u;
        g
    };

    let mut used = 0usize;
    let epoch_steps = 2 * rows;
    while used < passes {
        let snapshot = y.clone();
        let mu = full_gradient(&snapshot);
        used += 1;
        let g_norm = mu.norm();
        if !g_norm.is_finite() || g_norm > 10.0 * u_norm {
            return Err(Error::Diverged {
                gradient: g_norm,
                initial: u_norm,
                passes: used,
            });
        }
        let budget_steps = (passes - used) * rows;
        let steps = epoch_steps.min(budget_steps);
        if steps == 0 {
            break;
        }
        let snap_dots: Vec<f64> = (0..rows)
            .map(|i| dot(matrix.row(i), snapshot.as_slice()))
            .collect();
        for _ in 0..steps {
            let i = rng.gen_range(0..rows);
            let row = matrix.row(i);
            let coef = scale * (dot(row, y.as_slice()) - snap_dots[i]);
            // g = d' a_i (a_i^T y - a_i^T w) + lambda (y - w) + mu
            let ys = y.as_mut_slice();
            for j in 0..d {
                let g = coef * row[j] + lambda * (ys[j] - snapshot[j]) + mu[j];
                ys[j] -= step * g;
            }
        }
        used += steps.div_ceil(rows);
    }
    Ok(y)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Which solver backs a [`RidgeOracle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKind {
    /// Conjugate gradient to solution error `eps` (residual `eps * lambda`).
    ExactCg { eps: f64 },
    /// Tight CG solve plus uniform noise of amplitude `10^-k`; `None` adds none.
    Noisy { k: Option<u32> },
    /// SVRG with a pass budget; `eps` is the caller's declared accuracy.
    Svrg { passes: usize, eps: f64 },
}

/// Black-box ridge solver: `||solve(u) - (A^T A + lambda I)^{-1} u|| <= eps_prime() ||u||`.
pub trait RidgeSolver {
    fn matrix(&self) -> &DataMatrix;

    fn lambda(&self) -> f64;

    fn eps_prime(&self) -> f64;

    fn solve(&mut self, u: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Seeded ridge oracle that counts its calls.
#[derive(Debug, Clone)]
pub struct RidgeOracle {
    matrix: Arc<DataMatrix>,
    lambda: f64,
    kind: OracleKind,
    rng: ChaCha8Rng,
    calls: usize,
}

impl RidgeOracle {
    pub fn new(matrix: Arc<DataMatrix>, lambda: f64, kind: OracleKind, seed: u64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::invalid("lambda", lambda, "must lie in (0, 1)"));
        }
        match kind {
            OracleKind::ExactCg { eps } if !(eps > 0.0) => {
                return Err(Error::invalid("eps", eps, "CG accuracy must be positive"))
            }
            OracleKind::Svrg { passes, .. } if passes < 2 => {
                return Err(Error::invalid("passes", passes as f64, "SVRG needs at least 2 passes"))
            }
            _ => {}
        }
        Ok(RidgeOracle {
            matrix,
            lambda,
            kind,
            rng: ChaCha8Rng::seed_from_u64(seed),
            calls: 0,
        })
    }

    pub fn exact(matrix: Arc<DataMatrix>, lambda: f64, eps: f64) -> Result<Self> {
        Self::new(matrix, lambda, OracleKind::ExactCg { eps }, 0)
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn reset_calls(&mut self) {
        self.calls = 0;
    }

    pub fn shared_matrix(&self) -> &Arc<DataMatrix> {
        &self.matrix
    }
}

impl RidgeSolver for RidgeOracle {
    fn matrix(&self) -> &DataMatrix {
        &self.matrix
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Declared accuracy: `eps` for CG, `sqrt(d) 10^-k` (plus the base solve) for
    /// the noisy oracle, the caller's value for SVRG.
    fn eps_prime(&self) -> f64 {
        match self.kind {
            OracleKind::ExactCg { eps } => eps,
            OracleKind::Noisy { k: None } => NOISY_BASE_EPS,
            OracleKind::Noisy { k: Some(k) } => {
                (self.matrix.cols() as f64).sqrt() * 10f64.powi(-(k as i32)) + NOISY_BASE_EPS
            }
            OracleKind::Svrg { eps, .. } => eps,
        }
    }

    fn solve(&mut self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.calls += 1;
        match self.kind {
            OracleKind::ExactCg { eps } => ridge_cg(&self.matrix, self.lambda, u, eps * self.lambda),
            OracleKind::Noisy { k } => ridge_noisy(&self.matrix, self.lambda, u, k, &mut self.rng),
            OracleKind::Svrg { passes, .. } => {
                ridge_svrg(&self.matrix, self.lambda, u, passes, &mut self.rng)
            }
        }
    }
}

/// Approximate `S chi` with one ridge call: `solve(A^T A chi - lambda chi)`.
pub fn mult_s<O: RidgeSolver + ?Sized>(oracle: &mut O, chi: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("MultS input", oracle.matrix().cols(), chi.len())?;
    let mut rhs = oracle.matrix().gram_apply(chi);
    rhs.axpy(-oracle.lambda(), chi, 1.0);
    oracle.solve(&rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_data(rows: usize, cols: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
        DataMatrix::scaled_to_unit(a).unwrap()
    }

    fn random_vec(d: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng))
    }

    fn dense_solve(m: &DataMatrix, lambda: f64, u: &DVector<f64>) -> DVector<f64> {
        let g = m.matrix().transpose() * m.matrix()
            + DMatrix::identity(m.cols(), m.cols()) * lambda;
        g.cholesky().unwrap().solve(u)
    }

    #[test]
    fn spectral_norm_validation() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.3, 0.2]));
        match DataMatrix::new(a) {
            Err(Error::SpectralNorm { sigma }) => assert!((sigma - 1.3).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
        let ok = DataMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5])));
        assert!(ok.is_ok());
        let m = random_data(30, 20, 1);
        assert!(m.spectral_norm_estimate() <= 1.0);
    }

    #[test]
    fn cg_zero_rhs() {
        let m = random_data(10, 6, 2);
        let x = ridge_cg(&m, 0.1, &DVector::zeros(6), 1e-10).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cg_zero_matrix_divides_by_lambda() {
        let m = DataMatrix::new(DMatrix::zeros(5, 4)).unwrap();
        let u = random_vec(4, 3);
        let x = ridge_cg(&m, 0.5, &u, 1e-12).unwrap();
        assert!((x - &u * 2.0).norm() < 1e-12 * u.norm());
    }

    #[test]
    fn cg_matches_dense_solve() {
        let m = random_data(20, 15, 4);
        let u = random_vec(15, 5);
        let tol = 1e-10;
        let x = ridge_cg(&m, 0.1, &u, tol).unwrap();
        let want = dense_solve(&m, 0.1, &u);
        // residual tol maps to solution error tol / lambda
        assert!((x - want).norm() <= tol / 0.1 * u.norm());
    }

    #[test]
    fn cg_reports_non_convergence() {
        let m = random_data(20, 15, 4);
        let err = ridge_cg(&m, 0.1, &random_vec(15, 6), 1e-40).unwrap_err();
        assert!(matches!(err, Error::NotConverged { .. }), "{err}");
    }

    #[test]
    fn noisy_without_noise_equals_cg() {
        let m = random_data(20, 15, 7);
        let u = random_vec(15, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = ridge_noisy(&m, 0.1, &u, None, &mut rng).unwrap();
        let b = ridge_cg(&m, 0.1, &u, NOISY_BASE_EPS * 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_perturbation_bounded_and_deterministic() {
        let m = random_data(20, 15, 9);
        let u = random_vec(15, 10).normalize();
        let exact = ridge_cg(&m, 0.1, &u, NOISY_BASE_EPS * 0.1).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let a = ridge_noisy(&m, 0.1, &u, Some(6), &mut r1).unwrap();
        let b = ridge_noisy(&m, 0.1, &u, Some(6), &mut r2).unwrap();
        assert_eq!(a, b);
        let max = (a - exact).amax();
        assert!(max <= 1e-6 && max > 0.0);
    }

    #[test]
    fn svrg_zero_rhs_stays_at_zero() {
        let m = random_data(50, 30, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = ridge_svrg(&m, 0.1, &DVector::zeros(30), 50, &mut rng).unwrap();
        assert!(y.norm() <= 1e-8);
    }

    #[test]
    fn svrg_converges_on_random_instance() {
        let m = random_data(100, 50, 12);
        let u = random_vec(50, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = ridge_svrg(&m, 0.1, &u, 50, &mut rng).unwrap();
        let want = dense_solve(&m, 0.1, &u);
        let rel = (y - &want).norm() / want.norm();
        assert!(rel <= 1e-4, "relative error {rel:e}");
    }

    #[test]
    fn svrg_objective_decreases_over_epochs() {
        let m = random_data(60, 40, 14);
        let u = random_vec(40, 15);
        let objective = |y: &DVector<f64>| {
            let mut g = m.gram_apply(y);
            g.axpy(0.1, y, 1.0);
            0.5 * y.dot(&g) - u.dot(y)
        };
        let mut last = 0.0;
        let mut decreases = 0;
        for passes in (3..=30).step_by(3) {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let f = objective(&ridge_svrg(&m, 0.1, &u, passes, &mut rng).unwrap());
            if f <= last {
                decreases += 1;
            }
            last = f;
        }
        assert!(decreases >= 9, "{decreases}");
    }

    #[test]
    fn svrg_rejects_short_budget() {
        let m = random_data(10, 5, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(ridge_svrg(&m, 0.1, &random_vec(5, 1), 1, &mut rng).is_err());
    }

    #[test]
    fn mult_s_special_cases() {
        let zero = Arc::new(DataMatrix::new(DMatrix::zeros(6, 4)).unwrap());
        let mut oracle = RidgeOracle::exact(zero, 0.5, 1e-12).unwrap();
        let chi = random_vec(4, 17);
        let out = mult_s(&mut oracle, &chi).unwrap();
        assert!((out + &chi).norm() < 1e-11 * chi.norm());

        // orthonormal columns: A^T A = I, S = (1 - lambda)/(1 + lambda) I
        let q = {
            let mut rng = ChaCha8Rng::seed_from_u64(18);
            let g = DMatrix::from_fn(8, 5, |_, _| StandardNormal.sample(&mut rng));
            g.qr().q()
        };
        let mut oracle =
            RidgeOracle::exact(Arc::new(DataMatrix::new(q).unwrap()), 0.5, 1e-12).unwrap();
        let chi = random_vec(5, 19);
        let out = mult_s(&mut oracle, &chi).unwrap();
        assert!((out - &chi / 3.0).norm() < 1e-10 * chi.norm());
    }

    #[test]
    fn mult_s_matches_dense_operator() {
        let m = Arc::new(random_data(20, 15, 19));
        let lambda = 0.1;
        let g = m.matrix().transpose() * m.matrix();
        let id = DMatrix::<f64>::identity(15, 15);
        let s = (&g + &id * lambda).try_inverse().unwrap() * (&g - &id * lambda);
        let mut oracle = RidgeOracle::exact(m, lambda, 1e-12).unwrap();
        let chi = random_vec(15, 20);
        let got = mult_s(&mut oracle, &chi).unwrap();
        assert!((got - &s * &chi).norm() <= 2e-12 * chi.norm() + 1e-12);
        assert_eq!(oracle.calls(), 1);
    }

    #[test]
    fn s_spectrum_in_expected_range() {
        for seed in 0..5 {
            let m = random_data(25, 12, 100 + seed);
            let lambda = 0.05 + 0.1 * seed as f64;
            let g = m.matrix().transpose() * m.matrix();
            let id = DMatrix::<f64>::identity(12, 12);
            let s = (&g + &id * lambda).try_inverse().unwrap() * (&g - &id * lambda);
            // S is similar to a symmetric matrix; its eigenvalues are real
            let sym = (&s + s.transpose()) * 0.5;
            let eig = sym.symmetric_eigenvalues();
            let top = (1.0 - lambda) / (1.0 + lambda);
            assert!(eig.iter().all(|e| *e >= -1.0 - 1e-12 && *e <= top + 1e-9));
        }
    }

    #[test]
    fn mult_s_is_linear_with_exact_oracle() {
        let m = Arc::new(random_data(20, 15, 21));
        let mut oracle = RidgeOracle::exact(m, 0.2, 1e-13).unwrap();
        let x1 = random_vec(15, 22);
        let x2 = random_vec(15, 23);
        let (a, b) = (0.7, -1.9);
        let lhs = mult_s(&mut oracle, &(&x1 * a + &x2 * b)).unwrap();
        let rhs = mult_s(&mut oracle, &x1).unwrap() * a + mult_s(&mut oracle, &x2).unwrap() * b;
        assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn oracle_rejects_bad_config() {
        let m = Arc::new(random_data(5, 3, 1));
        assert!(RidgeOracle::exact(m.clone(), 0.0, 1e-8).is_err());
        assert!(RidgeOracle::exact(m.clone(), 1.5, 1e-8).is_err());
        assert!(RidgeOracle::new(m, 0.1, OracleKind::Svrg { passes: 1, eps: 1e-3 }, 0).is_err());
    }
}
