//! QuickPCR: principal component regression from a QuickPCP output.
//!
//! With `v ~ P_lambda A^T b`, the iteration `s <- lambda R s + R v`, where
//! `R = (A^T A + lambda I)^{-1}`, converges on the retained eigenspace to
//! `(A^T A)^{-1} v`, since `x / (1 - lambda x)` composed with `1 / (x + lambda)`
//! is `1 / x`.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::metrics::EigenReference;
use crate::pcp::{pcp_degree, quick_pcp, PcpParams};
use crate::ridge::{DataMatrix, RidgeSolver};

/// Parameters of one QuickPCR run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcrParams {
    pcp: PcpParams,
    m: usize,
}

/// Accuracy schedule for the PCP-to-PCR reduction. Both ask for ridge
/// accuracy `eps / m^2`; they differ in the PCP accuracy fed into the reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcrSchedule {
    /// Eigengap regime: PCP error `eps sqrt(lambda) / m^2` measured as `||xi - P xi||`.
    Eigengap,
    /// Gap-free regime: `(gamma, eps lambda / m^2)`-approximate PCP.
    GapFree,
}

impl PcrParams {
    pub fn new(pcp: PcpParams, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("m", 0.0, "PCR needs at least one reduction step"));
        }
        Ok(PcrParams { pcp, m })
    }

    /// Full schedule for target accuracy `eps`:
    /// `m = ceil(ln(1 / (eps gamma)))`, PCP accuracy per `schedule`, and the PCP
    /// degree from [`pcp_degree`] with the given constant.
    pub fn for_accuracy(
        lambda: f64,
        gamma: f64,
        eps: f64,
        constant: f64,
        schedule: PcrSchedule,
    ) -> Result<Self> {
        let m = reduction_steps(gamma, eps)?;
        let m2 = (m * m) as f64;
        let pcp_eps = match schedule {
            PcrSchedule::Eigengap => eps * lambda.sqrt() / m2,
            PcrSchedule::GapFree => eps * lambda / m2,
        };
        let n = pcp_degree(gamma, pcp_eps, constant)?;
        Self::new(PcpParams::new(lambda, gamma, n)?, m)
    }

    pub fn pcp(&self) -> &PcpParams {
        &self.pcp
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Ridge calls made by one run: `2n + m + 2`.
    pub fn ridge_calls(&self) -> usize {
        2 * self.pcp.n() + self.m + 2
    }
}

/// `m = ceil(ln(1 / (eps gamma)))`, at least 1.
pub fn reduction_steps(gamma: f64, eps: f64) -> Result<usize> {
    if !(gamma > 0.0) || !(eps > 0.0) {
        return Err(Error::invalid(
            "eps",
            eps,
            "reduction schedule needs eps > 0 and gamma > 0",
        ));
    }
    Ok((1.0 / (eps * gamma)).ln().ceil().max(1.0) as usize)
}

/// Recommended ridge accuracy `eps / m^2`.
pub fn ridge_accuracy(eps: f64, m: usize) -> f64 {
    eps / (m * m) as f64
}

#[derive(Debug, Clone)]
pub struct PcrOutput {
    /// Regression solution.
    pub x: DVector<f64>,
    /// The intermediate projection `v ~ P_lambda A^T b`.
    pub xi: DVector<f64>,
}

/// Runs QuickPCR on regressand `b` (length `d'`). Makes `2n + m + 2` ridge calls.
pub fn quick_pcr<O: RidgeSolver + ?Sized>(
    oracle: &mut O,
    b: &DVector<f64>,
    params: &PcrParams,
) -> Result<PcrOutput> {
    quick_pcr_observed(oracle, b, params, |_, _| {})
}

/// [`quick_pcr`] that reports `s` after each of the `m` reduction steps.
pub fn quick_pcr_observed<O, F>(
    oracle: &mut O,
    b: &DVector<f64>,
    params: &PcrParams,
    mut observe: F,
) -> Result<PcrOutput>
where
    O: RidgeSolver + ?Sized,
    F: FnMut(usize, &DVector<f64>),
{
    check_dim("QuickPCR regressand", oracle.matrix().rows(), b.len())?;
    let lambda = params.pcp.lambda();
    let atb = oracle.matrix().apply_t(b);
    let v = quick_pcp(oracle, &atb, &params.pcp)?;
    let mut s = v.clone();
    let s1 = oracle.solve(&v)?;
    for r in 1..=params.m {
        let mut next = oracle.solve(&s)?;
        next *= lambda;
        next += &s1;
        s = next;
        observe(r, &s);
    }
    Ok(PcrOutput { x: s, xi: v })
}

/// Exact `(A^T A)^+ P_lambda A^T b` from a dense eigendecomposition.
pub fn exact_pcr_reference(
    matrix: &DataMatrix,
    lambda: f64,
    b: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim("PCR reference regressand", matrix.rows(), b.len())?;
    let reference = EigenReference::from_matrix(matrix);
    Ok(reference.pcr_solution(lambda, &matrix.apply_t(b)))
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

    fn orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng)).qr().q()
    }

    fn random_vec(d: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng))
    }

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

    #[test]
    fn schedule_values() {
        assert_eq!(reduction_steps(0.1, 1e-3).unwrap(), 10);
        assert_eq!(reduction_steps(0.1, 1e-4).unwrap(), 12);
        let p = PcrParams::for_accuracy(0.1, 0.1, 1e-3, 1.0, PcrSchedule::GapFree).unwrap();
        assert_eq!(p.m(), 10);
        assert_eq!(p.ridge_calls(), 2 * p.pcp().n() + 12);
        assert!(PcrParams::new(p.pcp, 0).is_err());
        assert!((ridge_accuracy(1e-3, 10) - 1e-5).abs() < 1e-20);
    }

    #[test]
    fn regressand_orthogonal_to_columns_gives_zero() {
        let m = gapped(30, 10, 0.09, 0.11, 1);
        // b in the left null space of A: project a random vector off range(A)
        let a = m.matrix().clone();
        let q = a.clone().qr().q();
        let r = random_vec(30, 2);
        let b = &r - &q * (q.transpose() * &r);
        let params = PcrParams::new(PcpParams::new(0.1, 0.1, 50).unwrap(), 5).unwrap();
        let mut oracle = RidgeOracle::exact(Arc::new(m), 0.1, 1e-12).unwrap();
        let out = quick_pcr(&mut oracle, &b, &params).unwrap();
        assert!(out.x.norm() <= 1e-9 * b.norm());
    }

    #[test]
    fn identity_covariance_returns_at_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DataMatrix::new(orthonormal(15, 8, &mut rng)).unwrap();
        let b = random_vec(15, 4);
        let atb = m.apply_t(&b);
        let params = PcrParams::for_accuracy(0.5, 0.1, 1e-6, 1.0, PcrSchedule::Eigengap)
            .unwrap();
        let params = PcrParams::new(*params.pcp(), 30).unwrap();
        let mut oracle = RidgeOracle::exact(Arc::new(m), 0.5, 1e-13).unwrap();
        let out = quick_pcr(&mut oracle, &b, &params).unwrap();
        assert!((out.x - atb).norm() <= 1e-5 * b.norm());
    }

    #[test]
    fn eigengap_instance_matches_reference() {
        let m = gapped(40, 30, 0.09, 0.11, 5);
        let b = random_vec(40, 6);
        let want = exact_pcr_reference(&m, 0.1, &b).unwrap();
        let params =
            PcrParams::for_accuracy(0.1, 0.1, 1e-4, 1.0, PcrSchedule::Eigengap).unwrap();
        let mut oracle = RidgeOracle::exact(Arc::new(m), 0.1, 1e-12).unwrap();
        let out = quick_pcr(&mut oracle, &b, &params).unwrap();
        let err = (&out.x - &want).norm() / b.norm();
        assert!(err <= 1e-3, "relative error {err:e}");
        assert_eq!(oracle.calls(), params.ridge_calls());
    }

    #[test]
    fn reduction_contracts_geometrically() {
        let m = gapped(40, 30, 0.09, 0.11, 7);
        let b = random_vec(40, 8);
        let params = PcrParams::new(PcpParams::new(0.1, 0.1, 150).unwrap(), 25).unwrap();
        let mut oracle = RidgeOracle::exact(Arc::new(m), 0.1, 1e-13).unwrap();
        let mut iterates = Vec::new();
        let out = quick_pcr_observed(&mut oracle, &b, &params, |_, s| iterates.push(s.clone()))
            .unwrap();
        let limit = &out.x;
        let gaps: Vec<f64> = iterates.iter().map(|s| (s - limit).norm()).collect();
        for k in 0..10 {
            assert!(gaps[k + 1] <= 0.75 * gaps[k] + 1e-12, "k={k}: {} -> {}", gaps[k], gaps[k + 1]);
        }
    }

    #[test]
    fn reference_single_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = orthonormal(12, 6, &mut rng);
        let v = orthonormal(6, 6, &mut rng);
        let sigma = DVector::from_vec(vec![0.9, 0.2, 0.15, 0.1, 0.05, 0.01]);
        let m = DataMatrix::new(&u * DMatrix::from_diagonal(&sigma) * v.transpose()).unwrap();
        let b = random_vec(12, 10);
        // only sigma = 0.9 survives the threshold 0.5
        let nu = v.column(0);
        let coef = nu.dot(&m.apply_t(&b)) / 0.81;
        let want = nu * coef;
        let got = exact_pcr_reference(&m, 0.5, &b).unwrap();
        assert!((got - want).norm() < 1e-10);
    }

    #[test]
    fn reference_minimizes_restricted_residual() {
        let m = gapped(20, 10, 0.09, 0.11, 11);
        let b = random_vec(20, 12);
        let reference = EigenReference::from_matrix(&m);
        let x = exact_pcr_reference(&m, 0.1, &b).unwrap();
        let resid = |y: &DVector<f64>| (m.apply(&reference.spectral_projector(0.1, y)) - &b).norm();
        let best = resid(&x);
        for seed in 0..100 {
            let y = &x + random_vec(10, 100 + seed) * 0.1;
            assert!(best <= resid(&y) + 1e-12);
        }
    }
}
