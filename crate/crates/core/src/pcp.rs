//! QuickPCP: approximate `P_lambda chi` without an eigendecomposition.
//!
//! `P_lambda = (I + sgn(S)) / 2` with `S = (A^T A + lambda I)^{-1}(A^T A - lambda I)`.
//! The sign function is replaced by `g(x) = x q(1 + kappa - 2x^2)` and
//! `q((1 + kappa) I - 2 S^2) chi` is evaluated with the backward recurrence,
//! where each application of `S` costs one ridge call.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::metrics::EigenReference;
use crate::recurrence::{cheb_matrix_sum, MatVecOracle};
use crate::ridge::{mult_s, DataMatrix, RidgeSolver};
use crate::signpoly::{inner_coeffs, min_degree};

/// Parameters of one QuickPCP run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcpParams {
    lambda: f64,
    gamma: f64,
    n: usize,
    gamma_eff: f64,
    alpha: f64,
    kappa: f64,
}

impl PcpParams {
    /// `gamma = 0` selects the gap-free default `gamma_eff = ln(n) / n`.
    pub fn new(lambda: f64, gamma: f64, n: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::invalid("lambda", lambda, "must lie in (0, 1)"));
        }
        if !(0.0..=2.0 / 3.0).contains(&gamma) {
            return Err(Error::invalid("gamma", gamma, "must lie in [0, 2/3]"));
        }
        if n == 0 {
            return Err(Error::invalid(
                "n",
                0.0,
                "QuickPCP needs at least one recurrence step",
            ));
        }
        let nf = n as f64;
        let gamma_eff = gamma.max(nf.ln() / nf);
        if !(gamma_eff > 0.0) {
            return Err(Error::invalid(
                "gamma",
                gamma,
                "gamma = 0 needs n >= 2 so that ln(n)/n > 0",
            ));
        }
        let alpha = gamma_eff / (2.0 + gamma_eff);
        Ok(PcpParams {
            lambda,
            gamma,
            n,
            gamma_eff,
            alpha,
            kappa: 2.0 * alpha * alpha,
        })
    }

    /// Degree chosen so the sign polynomial reaches accuracy `eps` at gap
    /// half-width `alpha = gamma / (2 + gamma)`:
    /// `n = ceil(constant * ln(3 / (eps alpha^2)) / (sqrt(2) alpha))`.
    pub fn for_accuracy(lambda: f64, gamma: f64, eps: f64, constant: f64) -> Result<Self> {
        let n = pcp_degree(gamma, eps, constant)?;
        Self::new(lambda, gamma, n)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma_eff(&self) -> f64 {
        self.gamma_eff
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Ridge calls made by one run: `2n + 1`.
    pub fn ridge_calls(&self) -> usize {
        2 * self.n + 1
    }
}

/// Inner degree for target accuracy `eps` at approximation ratio `gamma`.
pub fn pcp_degree(gamma: f64, eps: f64, constant: f64) -> Result<usize> {
    if !(gamma > 0.0 && gamma <= 2.0 / 3.0) {
        return Err(Error::invalid("gamma", gamma, "schedule needs gamma in (0, 2/3]"));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid("eps", eps, "must lie in (0, 1/2)"));
    }
    if !(constant > 0.0) {
        return Err(Error::invalid("constant", constant, "must be positive"));
    }
    let alpha = gamma / (2.0 + gamma);
    Ok(((min_degree(alpha, eps) as f64) * constant).ceil().max(1.0) as usize)
}

/// `M = (1 + kappa) I - 2 S^2`, applied with two `MultS` calls.
pub struct PcpOperator<'a, O: ?Sized> {
    oracle: &'a mut O,
    kappa: f64,
}

impl<'a, O: RidgeSolver + ?Sized> PcpOperator<'a, O> {
    pub fn new(oracle: &'a mut O, kappa: f64) -> Self {
        PcpOperator { oracle, kappa }
    }
}

impl<O: RidgeSolver + ?Sized> MatVecOracle for PcpOperator<'_, O> {
    fn dim(&self) -> usize {
        self.oracle.matrix().cols()
    }

    fn apply(&mut self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let s1 = mult_s(self.oracle, u)?;
        let s2 = mult_s(self.oracle, &s1)?;
        let mut w = u * (1.0 + self.kappa);
        w.axpy(-2.0, &s2, 1.0);
        Ok(w)
    }

    fn err_bound(&self) -> f64 {
        operator_eps(self.oracle.eps_prime())
    }
}

/// Error of one application of `M` given ridge accuracy `eps`.
///
/// `MultS` errs by at most `eps ||x||` because `||A^T A - lambda I|| <= 1`, and
/// `||S|| <= 1`, so two chained calls err by `eps (2 + eps)` and `M` by twice that.
pub fn operator_eps(ridge_eps: f64) -> f64 {
    2.0 * ridge_eps * (2.0 + ridge_eps)
}

/// Runs QuickPCP and returns `xi ~ P_lambda chi`. Makes exactly `2n + 1` ridge calls.
pub fn quick_pcp<O: RidgeSolver + ?Sized>(
    oracle: &mut O,
    chi: &DVector<f64>,
    params: &PcpParams,
) -> Result<DVector<f64>> {
    check_dim("QuickPCP input", oracle.matrix().cols(), chi.len())?;
    if (oracle.lambda() - params.lambda).abs() > 0.0 {
        return Err(Error::invalid(
            "lambda",
            params.lambda,
            format!("oracle is configured for lambda = {}", oracle.lambda()),
        ));
    }
    let coeffs = inner_coeffs(params.kappa, params.n);
    // q(M) chi = b_0 - w, where w = M b_1 is the last recurrence output.
    let q_chi = {
        let mut op = PcpOperator::new(oracle, params.kappa);
        cheb_matrix_sum(&mut op, &coeffs, chi)?
    };
    let mut u = mult_s(oracle, &q_chi)?;
    u += chi;
    u *= 0.5;
    Ok(u)
}

/// Exact `P_lambda chi` through a dense eigendecomposition of `A^T A`.
pub fn exact_pcp_reference(
    matrix: &DataMatrix,
    lambda: f64,
    chi: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim("PCP reference input", matrix.cols(), chi.len())?;
    let reference = EigenReference::from_matrix(matrix);
    Ok(reference.spectral_projector(lambda, chi))
}

/// Upper bound on `||xi_hat - xi_exact|| / ||chi||` caused by oracle inexactness,
/// where `xi_exact` is QuickPCP run with exact ridge solves.
///
/// Combines the recurrence bound for `q(M) chi` with the error of the final
/// `MultS`: `(e_q + eps (Q + e_q)) / 2`, where `Q = sum_k |c_k| rho^k` bounds
/// `||q(M)||` on `[-1, 1 + kappa]`.
pub fn predicted_pcp_error(params: &PcpParams, ridge_eps: f64) -> Result<f64> {
    let budget = crate::recurrence::budget_for_pcp(params, operator_eps(ridge_eps));
    let e_q = budget.predicted_error()?;
    let q_sup: f64 = inner_coeffs(params.kappa, params.n)
        .coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| c.abs() * budget.rho.powi(k as i32))
        .sum();
    Ok(0.5 * (e_q + ridge_eps * (q_sup + e_q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ridge::RidgeOracle;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};
    use std::sync::Arc;

    fn random_vec(d: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng))
    }

    fn orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let g = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
        g.qr().q()
    }

    /// A = U diag(sigma) V^T with no eigenvalue of A^T A in [lo, hi].
    fn gapped(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = orthonormal(rows, cols, &mut rng);
        let v = orthonormal(cols, cols, &mut rng);
        let below = Uniform::new(0.0, lo.sqrt());
        let above = Uniform::new_inclusive(hi.sqrt(), 1.0);
        let sigma = DVector::from_fn(cols, |i, _| {
            if i % 2 == 0 {
                below.sample(&mut rng)
            } else {
                above.sample(&mut rng)
            }
        });
        DataMatrix::new(u * DMatrix::from_diagonal(&sigma) * v.transpose()).unwrap()
    }

    /// Exact dense ridge solver that counts calls.
    struct DenseRidge {
        matrix: DataMatrix,
        lambda: f64,
        chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
        calls: usize,
    }

    impl DenseRidge {
        fn new(matrix: DataMatrix, lambda: f64) -> Self {
            let d = matrix.cols();
            let g = matrix.matrix().transpose() * matrix.matrix()
                + DMatrix::<f64>::identity(d, d) * lambda;
            DenseRidge {
                matrix,
                lambda,
                chol: g.cholesky().unwrap(),
                calls: 0,
            }
        }
    }

    impl RidgeSolver for DenseRidge {
        fn matrix(&self) -> &DataMatrix {
            &self.matrix
        }
        fn lambda(&self) -> f64 {
            self.lambda
        }
        fn eps_prime(&self) -> f64 {
            0.0
        }
        fn solve(&mut self, u: &DVector<f64>) -> Result<DVector<f64>> {
            self.calls += 1;
            Ok(self.chol.solve(u))
        }
    }

    #[test]
    fn params_derivation() {
        let p = PcpParams::new(0.1, 0.1, 200).unwrap();
        assert_eq!(p.gamma_eff(), 0.1);
        let alpha = 0.1 / 2.1;
        assert!((p.alpha() - alpha).abs() < 1e-16);
        assert!((p.kappa() - 2.0 * alpha * alpha).abs() < 1e-16);
        assert_eq!(p.ridge_calls(), 401);

        let free = PcpParams::new(0.1, 0.0, 100).unwrap();
        assert!((free.gamma_eff() - 100f64.ln() / 100.0).abs() < 1e-16);

        assert!(PcpParams::new(0.1, 0.1, 0).is_err());
        assert!(PcpParams::new(0.1, 0.0, 1).is_err());
        assert!(PcpParams::new(0.1, 0.7, 10).is_err());
        assert!(PcpParams::new(1.0, 0.1, 10).is_err());
    }

    #[test]
    fn identity_covariance_projects_to_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = DataMatrix::new(orthonormal(12, 8, &mut rng)).unwrap();
        let mut oracle = DenseRidge::new(q, 0.5);
        let chi = random_vec(8, 2);
        let params = PcpParams::for_accuracy(0.5, 0.1, 1e-6, 1.0).unwrap();
        let xi = quick_pcp(&mut oracle, &chi, &params).unwrap();
        assert!((xi - &chi).norm() <= 1e-6 * chi.norm());
    }

    #[test]
    fn zero_matrix_projects_to_nothing() {
        let m = DataMatrix::new(DMatrix::zeros(10, 6)).unwrap();
        let mut oracle = RidgeOracle::exact(Arc::new(m), 0.5, 1e-12).unwrap();
        let chi = random_vec(6, 3);
        let params = PcpParams::for_accuracy(0.5, 0.1, 1e-6, 1.0).unwrap();
        let xi = quick_pcp(&mut oracle, &chi, &params).unwrap();
        assert!(xi.norm() <= 1e-6 * chi.norm());
    }

    #[test]
    fn eigengap_instance_matches_reference() {
        let m = gapped(40, 30, 0.09, 0.11, 4);
        let chi = random_vec(30, 5);
        let want = exact_pcp_reference(&m, 0.1, &chi).unwrap();
        let params = PcpParams::for_accuracy(0.1, 0.1, 1e-4, 1.0).unwrap();
        let mut oracle = RidgeOracle::exact(Arc::new(m), 0.1, 1e-12).unwrap();
        let xi = quick_pcp(&mut oracle, &chi, &params).unwrap();
        assert!((xi - want).norm() <= 1e-4 * chi.norm());
        assert_eq!(oracle.calls(), params.ridge_calls());
    }

    #[test]
    fn counts_exactly_two_n_plus_one_calls() {
        let m = gapped(20, 10, 0.09, 0.11, 6);
        let mut oracle = DenseRidge::new(m, 0.1);
        for n in [1, 2, 7, 33] {
            oracle.calls = 0;
            let params = PcpParams::new(0.1, 0.1, n).unwrap();
            quick_pcp(&mut oracle, &random_vec(10, n as u64), &params).unwrap();
            assert_eq!(oracle.calls, 2 * n + 1);
        }
    }

    #[test]
    fn approximately_idempotent() {
        let m = gapped(40, 30, 0.09, 0.11, 7);
        let eps = 1e-5;
        let params = PcpParams::for_accuracy(0.1, 0.1, eps, 1.0).unwrap();
        let mut oracle = DenseRidge::new(m, 0.1);
        let chi = random_vec(30, 8);
        let once = quick_pcp(&mut oracle, &chi, &params).unwrap();
        let twice = quick_pcp(&mut oracle, &once, &params).unwrap();
        assert!((twice - &once).norm() <= 3.0 * eps * chi.norm());
    }

    #[test]
    fn reference_on_eigenvectors() {
        let m = gapped(20, 10, 0.09, 0.11, 9);
        let reference = EigenReference::from_matrix(&m);
        let top = reference.eigenvector(0).clone_owned();
        let bottom = reference.eigenvector(9).clone_owned();
        assert!(reference.eigenvalues()[0] > 0.1 && reference.eigenvalues()[9] < 0.1);
        let p_top = exact_pcp_reference(&m, 0.1, &top).unwrap();
        let p_bottom = exact_pcp_reference(&m, 0.1, &bottom).unwrap();
        assert!((p_top - &top).norm() < 1e-10);
        assert!(p_bottom.norm() < 1e-10);
    }

    #[test]
    fn sign_of_s_gives_projector() {
        let m = gapped(25, 12, 0.05, 0.2, 10);
        let lambda = 0.1;
        let d = 12;
        let g = m.matrix().transpose() * m.matrix();
        let id = DMatrix::<f64>::identity(d, d);
        // S is symmetric: (G + lI)^{-1} and (G - lI) commute.
        let s = (&g + &id * lambda).try_inverse().unwrap() * (&g - &id * lambda);
        let s = (&s + s.transpose()) * 0.5;
        let eig = s.symmetric_eigen();
        let sgn = DVector::from_fn(d, |i, _| eig.eigenvalues[i].signum());
        let sign_s = &eig.eigenvectors * DMatrix::from_diagonal(&sgn) * eig.eigenvectors.transpose();
        let projector = (&id + sign_s) * 0.5;
        let chi = random_vec(d, 11);
        let want = exact_pcp_reference(&m, lambda, &chi).unwrap();
        assert!((projector * &chi - want).norm() < 1e-10);
    }

    #[test]
    fn predicted_error_is_finite_for_small_noise() {
        let params = PcpParams::new(0.1, 0.1, 100).unwrap();
        let e = predicted_pcp_error(&params, 1e-10).unwrap();
        assert!(e.is_finite() && e > 0.0);
        assert_eq!(predicted_pcp_error(&params, 0.0).unwrap(), 0.0);
        assert!(predicted_pcp_error(&params, 0.1).is_err());
    }

    #[test]
    fn lambda_mismatch_rejected() {
        let m = gapped(20, 10, 0.09, 0.11, 12);
        let mut oracle = DenseRidge::new(m, 0.2);
        let params = PcpParams::new(0.1, 0.1, 5).unwrap();
        assert!(quick_pcp(&mut oracle, &random_vec(10, 1), &params).is_err());
    }
}
