//! Clenshaw backward recurrence for `sum_k c_k T_k(M) chi`, where `M` is only
//! reachable through an approximate matrix-vector oracle.
//!
//! The recurrence keeps three live vectors plus the last oracle output, so
//! memory is `O(d)` regardless of the number of terms. When every oracle call
//! carries relative error at most `eps`, the output error is bounded by
//! [`StabilityBudget::predicted_error`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chebyshev::{cheb_u, ChebSum};
use crate::error::{check_dim, Error, Result};
use crate::pcp::PcpParams;
use crate::signpoly::inner_coeffs;

/// Approximate application of an implicit symmetric matrix `M`.
///
/// Implementations promise `||apply(u) - M u|| <= err_bound() * ||u||`, and in
/// particular must map the zero vector to zero.
pub trait MatVecOracle {
    fn dim(&self) -> usize;

    fn apply(&mut self, u: &DVector<f64>) -> Result<DVector<f64>>;

    fn err_bound(&self) -> f64 {
        0.0
    }
}

/// Exact oracle around an explicit dense matrix.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    m: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_dim("dense operator (square)", m.nrows(), m.ncols())?;
        Ok(DenseOperator { m })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

impl MatVecOracle for DenseOperator {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn apply(&mut self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("dense operator apply", self.dim(), u.len())?;
        Ok(&self.m * u)
    }
}

/// Wraps an oracle and adds, on every call, a seeded pseudo-random error vector
/// of norm exactly `eps * ||u||`.
#[derive(Debug)]
pub struct NoisyOperator<O> {
    inner: O,
    eps: f64,
    rng: ChaCha8Rng,
}

impl<O: MatVecOracle> NoisyOperator<O> {
    pub fn new(inner: O, eps: f64, seed: u64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::invalid("eps", eps, "noise level must be finite and >= 0"));
        }
        Ok(NoisyOperator {
            inner,
            eps,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: MatVecOracle> MatVecOracle for NoisyOperator<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&mut self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = self.inner.apply(u)?;
        let scale = self.eps * u.norm();
        if scale > 0.0 {
            let dir = DVector::from_fn(u.len(), |_, _| {
                StandardNormal.sample(&mut self.rng)
            });
            let norm = dir.norm();
            if norm > 0.0 {
                out.axpy(scale / norm, &dir, 1.0);
            }
        }
        Ok(out)
    }

    fn err_bound(&self) -> f64 {
        self.inner.err_bound() + self.eps
    }
}

/// `sum_{k=0}^{N} c_k T_k(M) chi` by the backward recurrence
///
/// `b_N = c_N chi`, `b_r = 2 M(b_{r+1}) - b_{r+2} + c_r chi`, output `b_0 - M(b_1)`.
///
/// The final `M(b_1)` is the oracle output already computed for `r = 0`, so the
/// oracle is called exactly `N` times. `N = 0` returns `c_0 chi` with no calls.
pub fn cheb_matrix_sum<O: MatVecOracle + ?Sized>(
    oracle: &mut O,
    sum: &ChebSum,
    chi: &DVector<f64>,
) -> Result<DVector<f64>> {
    cheb_matrix_sum_observed(oracle, sum, chi, |_, _| {})
}

/// [`cheb_matrix_sum`] that also reports every intermediate `b_r` (for
/// `r = N..=0`) to `observe`.
pub fn cheb_matrix_sum_observed<O, F>(
    oracle: &mut O,
    sum: &ChebSum,
    chi: &DVector<f64>,
    mut observe: F,
) -> Result<DVector<f64>>
where
    O: MatVecOracle + ?Sized,
    F: FnMut(usize, &DVector<f64>),
{
    check_dim("Chebyshev sum input", oracle.dim(), chi.len())?;
    let c = sum.coeffs();
    let n = c.len() - 1;

    let mut b_next = chi * c[n];
    observe(n, &b_next);
    if n == 0 {
        return Ok(b_next);
    }
    let mut b_next2 = DVector::zeros(chi.len());
    let mut w = DVector::zeros(chi.len());
    for r in (0..n).rev() {
        w = oracle.apply(&b_next)?;
        check_dim("oracle output", chi.len(), w.len())?;
        // b_r = 2w - b_{r+2} + c_r chi, written into the b_{r+2} buffer.
        b_next2 *= -1.0;
        b_next2.axpy(2.0, &w, 1.0);
        b_next2.axpy(c[r], chi, 1.0);
        std::mem::swap(&mut b_next, &mut b_next2);
        observe(r, &b_next);
    }
    // b_next = b_0, w = M(b_1).
    b_next -= &w;
    Ok(b_next)
}

/// Constants of the inexact-recurrence error bound:
/// `rho^k ||c_k|| <= c_c`, `|T_k| <= c_t rho^k` and `|U_k| <= c_u rho^k` on the
/// spectrum of `M`, for every `k <= n_terms`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityBudget {
    pub n_terms: usize,
    pub c_t: f64,
    pub c_u: f64,
    pub rho: f64,
    pub c_c: f64,
    pub eps_prime: f64,
}

impl StabilityBudget {
    /// Largest oracle error for which the bound applies, `1 / (4 N C_U)`.
    pub fn admissible_eps(&self) -> f64 {
        1.0 / (4.0 * self.n_terms.max(1) as f64 * self.c_u)
    }

    /// `eps' * 2 (1 + 2 N C_T) N C_U C_c`.
    ///
    /// Fails with [`Error::Inadmissible`] when `eps'` exceeds `1 / (4 N C_U)`.
    pub fn predicted_error(&self) -> Result<f64> {
        if self.c_t < 1.0 || self.c_u < 1.0 || self.rho < 1.0 || self.c_c < 0.0 {
            return Err(Error::invalid(
                "budget",
                self.c_u.min(self.c_t).min(self.rho),
                "requires C_T >= 1, C_U >= 1, rho >= 1, C_c >= 0",
            ));
        }
        if self.eps_prime < 0.0 || self.eps_prime.is_nan() {
            return Err(Error::invalid("eps_prime", self.eps_prime, "must be >= 0"));
        }
        let limit = self.admissible_eps();
        if self.eps_prime > limit {
            return Err(Error::Inadmissible {
                eps: self.eps_prime,
                limit,
            });
        }
        let n = self.n_terms as f64;
        Ok(self.eps_prime * 2.0 * (1.0 + 2.0 * n * self.c_t) * n * self.c_u * self.c_c)
    }
}

/// Free-standing form of [`StabilityBudget::predicted_error`].
pub fn predicted_error(budget: &StabilityBudget) -> Result<f64> {
    budget.predicted_error()
}

/// Budget for the QuickPCP operator `M = (1 + kappa) I - 2 S^2`, whose spectrum
/// lies in `[-1, 1 + kappa]`. `C_c` is per unit `||chi||`; `eps_m` is the error of
/// one application of `M`.
///
/// `C_T = 1`, `rho = 1 + kappa + sqrt(2 kappa + kappa^2)`, `C_c = max_k rho^k |c_k|`.
/// `C_U` starts from the closed-form value `rho / (2 sqrt(2 kappa + kappa^2))`,
/// the supremum of `U_k / rho^k` at `1 + kappa`, and is raised where needed to
/// also cover `|U_k| <= k + 1` on `[-1, 1]`.
pub fn budget_for_pcp(params: &PcpParams, eps_m: f64) -> StabilityBudget {
    let kappa = params.kappa();
    let n = params.n();
    let root = (2.0 * kappa + kappa * kappa).sqrt();
    let rho = 1.0 + kappa + root;
    let coeffs = inner_coeffs(kappa, n);
    let c_c = coeffs
        .coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| rho.powi(k as i32) * c.abs())
        .fold(0.0, f64::max);
    let edge = (0..=n)
        .map(|k| (k as f64 + 1.0) / rho.powi(k as i32))
        .fold(0.0, f64::max);
    let c_u = (rho / (2.0 * root)).max(edge).max(1.0);
    StabilityBudget {
        n_terms: n,
        c_t: 1.0,
        c_u,
        rho,
        c_c,
        eps_prime: eps_m,
    }
}

/// Budget when the spectrum of `M` stays inside `[-1, 1]` (eigengap regime):
/// `rho = 1`, `C_T = 1`, `C_U = n + 1`, `C_c = max_k |c_k|`.
pub fn budget_for_pcp_eigengap(params: &PcpParams, eps_m: f64) -> StabilityBudget {
    let n = params.n();
    let coeffs = inner_coeffs(params.kappa(), n);
    let c_c = coeffs.coeffs().iter().fold(0.0f64, |m, c| m.max(c.abs()));
    StabilityBudget {
        n_terms: n,
        c_t: 1.0,
        c_u: n as f64 + 1.0,
        rho: 1.0,
        c_c,
        eps_prime: eps_m,
    }
}

/// `sup_{x in [-1, 1+kappa]} |U_k(x)| / rho^k` over `k <= n`, evaluated exactly.
/// Used by tests to confirm the `C_U` chosen by [`budget_for_pcp`] is a bound.
pub fn u_ratio_sup(kappa: f64, n: usize) -> f64 {
    let rho = 1.0 + kappa + (2.0 * kappa + kappa * kappa).sqrt();
    (0..=n)
        .map(|k| {
            let top = cheb_u(k, 1.0 + kappa).abs().max(k as f64 + 1.0);
            top / rho.powi(k as i32)
        })
        .fold(0.0, f64::max)
}
