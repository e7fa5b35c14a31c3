//! Self-verification suites run by `quickpcr verify`.
//!
//! Every suite returns named checks of the form `measured <= bound`; a suite
//! passes when all its checks do. References are dense (eigendecompositions,
//! Cholesky solves) and the instances are small enough to finish in seconds.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::chebyshev::{cheb_t, cheb_u, ChebSum};
use crate::datagen::{gen_random_a, SynthSpec};
use crate::error::Result;
use crate::format::{decode_binary, encode_binary};
use crate::metrics::{check_pcp_approx, check_pcr_approx, EigenReference};
use crate::pcp::{quick_pcp, PcpParams};
use crate::pcr::{quick_pcr, PcrParams, PcrSchedule};
use crate::recurrence::{budget_for_pcp, cheb_matrix_sum, DenseOperator, NoisyOperator};
use crate::ridge::{DataMatrix, OracleKind, RidgeOracle, RidgeSolver};
use crate::signpoly::{build_sign_poly, coeff_bound, SignPoly};

/// `(alpha, eps)` pairs for the sign polynomial suites.
pub const SIGN_CASES: [(f64, f64); 3] = [(0.05, 1e-3), (0.1, 1e-3), (0.2, 1e-2)];

/// Oracle noise levels for the recurrence stability suite.
pub const RECURRENCE_NOISE: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Oracle configurations checked against their declared accuracy.
pub const ORACLE_CASES: [OracleKind; 4] = [
    OracleKind::ExactCg { eps: 1e-8 },
    OracleKind::Noisy { k: None },
    OracleKind::Noisy { k: Some(6) },
    OracleKind::Svrg {
        passes: 60,
        eps: 1e-4,
    },
];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub measured: f64,
    pub bound: f64,
}

impl Check {
    pub fn new(label: impl Into<String>, measured: f64, bound: f64) -> Self {
        Check {
            label: label.into(),
            measured,
            bound,
        }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.bound
    }

    pub fn margin(&self) -> f64 {
        self.bound - self.measured
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(Check::passed)
    }

    /// The check closest to (or furthest past) its bound, relative to the bound.
    pub fn worst(&self) -> Option<&Check> {
        let rel = |c: &Check| {
            if c.bound == 0.0 {
                // exact checks: a pass has unlimited relative room
                if c.passed() { f64::INFINITY } else { f64::NEG_INFINITY }
            } else {
                c.margin() / c.bound.abs()
            }
        };
        self.checks.iter().min_by(|a, b| rel(a).total_cmp(&rel(b)))
    }

    /// One summary line.
    pub fn summary(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let worst = match self.worst() {
            Some(c) => format!(
                "worst {}: {:.3e} <= {:.3e}",
                c.label, c.measured, c.bound
            ),
            None => "no checks".to_string(),
        };
        format!(
            "{status} {:<22} {:>3} checks  {worst}  ({:.2}s)",
            self.name,
            self.checks.len(),
            self.elapsed.as_secs_f64()
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    /// Flip the sign of this inner coefficient before the sign polynomial suites.
    pub tamper_coeff: Option<usize>,
    pub seed: u64,
}

type Suite = fn(&VerifyOptions) -> Result<Vec<Check>>;

/// Names and entry points of all suites, in run order.
pub const SUITES: [(&str, Suite); 11] = [
    ("sign-accuracy", suite_sign_accuracy),
    ("inner-bound", suite_inner_bound),
    ("coefficient-decay", suite_coefficient_decay),
    ("recurrence-stability", suite_recurrence_stability),
    ("oracle-contracts", suite_oracle_contracts),
    ("chebyshev", suite_chebyshev),
    ("metrics", suite_metrics),
    ("datagen", suite_datagen),
    ("pcp", suite_pcp),
    ("pcr", suite_pcr),
    ("format", suite_format),
];

/// Runs one suite by name. Errors raised inside a suite become a failed check.
pub fn run_suite(name: &'static str, suite: Suite, options: &VerifyOptions) -> SuiteOutcome {
    let start = Instant::now();
    let checks = match suite(options) {
        Ok(checks) => checks,
        Err(e) => vec![Check::new(format!("error: {e}"), f64::INFINITY, 0.0)],
    };
    SuiteOutcome {
        name,
        checks,
        elapsed: start.elapsed(),
    }
}

pub fn run_all(options: &VerifyOptions) -> Vec<SuiteOutcome> {
    SUITES
        .iter()
        .map(|&(name, suite)| run_suite(name, suite, options))
        .collect()
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (b - a) / (n - 1) as f64;
    (0..n).map(move |i| a + step * i as f64)
}

fn sign_poly(alpha: f64, eps: f64, options: &VerifyOptions) -> Result<SignPoly> {
    let p = build_sign_poly(alpha, eps)?;
    Ok(match options.tamper_coeff {
        Some(k) => p.with_negated_coeff(k),
        None => p,
    })
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_vector(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `max |g - sgn|` on `[-1, -alpha] U [alpha, 1]` and `max |g|` on `[-alpha, alpha]`.
pub fn suite_sign_accuracy(options: &VerifyOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for &(alpha, eps) in &SIGN_CASES {
        let p = sign_poly(alpha, eps, options)?;
        let outside = linspace(alpha, 1.0, 5000)
            .flat_map(|x| [(p.eval(x) - 1.0).abs(), (p.eval(-x) + 1.0).abs()])
            .fold(0.0, f64::max);
        let inside = linspace(-alpha, alpha, 2001)
            .map(|x| p.eval(x).abs())
            .fold(0.0, f64::max);
        checks.push(Check::new(format!("alpha={alpha} |g-sgn|"), outside, eps));
        checks.push(Check::new(format!("alpha={alpha} |g| in gap"), inside, 1.0 + 1e-12));
    }
    Ok(checks)
}

/// `0 <= q(1 + y) <= ((kappa - y)/2)^(-1/2)` for `y` in `[0, kappa (1 - 1e-6)]`.
pub fn suite_inner_bound(options: &VerifyOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for &(alpha, eps) in &SIGN_CASES {
        let p = sign_poly(alpha, eps, options)?;
        let kappa = p.kappa();
        let mut worst_low: f64 = f64::NEG_INFINITY;
        let mut worst_high: f64 = f64::NEG_INFINITY;
        for y in linspace(0.0, kappa * (1.0 - 1e-6), 1000) {
            let q = p.eval_inner(1.0 + y);
            worst_low = worst_low.max(-q);
            worst_high = worst_high.max(q - ((kappa - y) / 2.0).powf(-0.5));
        }
        checks.push(Check::new(format!("alpha={alpha} -q"), worst_low, 0.0));
        checks.push(Check::new(format!("alpha={alpha} q-f"), worst_high, 0.0));
    }
    Ok(checks)
}

/// `|c_i| <= coeff_bound(kappa, i)` for every coefficient, with no slack.
pub fn suite_coefficient_decay(options: &VerifyOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for &(alpha, eps) in &SIGN_CASES {
        let p = sign_poly(alpha, eps, options)?;
        let worst = p
            .q_coeffs()
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.abs() / coeff_bound(p.kappa(), i)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        checks.push(Check::new(
            format!("alpha={alpha} |c_{}|/bound", worst.0),
            worst.1,
            1.0,
        ));
    }
    Ok(checks)
}

/// Random symmetric `M` with spectrum in `[-1, 1 + kappa]` (endpoints included).
pub fn stretched_symmetric(d: usize, kappa: f64, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let q = gaussian_matrix(d, d, rng).qr().q();
    let mut eig = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..=1.0 + kappa));
    eig[0] = -1.0;
    eig[d - 1] = 1.0 + kappa;
    let m = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (m, q, eig)
}

/// Inexact Chebyshev recurrence on a 30 x 30 matrix against the
/// eigendecomposition value `Q diag(sum_k c_k T_k(lambda_i)) Q^T chi`.
pub fn suite_recurrence_stability(options: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x5eed_0004);
    let params = PcpParams::new(0.1, 0.1, 25)?;
    let kappa = params.kappa();
    let (m, q, eig) = stretched_symmetric(30, kappa, &mut rng);
    let coeffs = crate::signpoly::inner_coeffs(kappa, params.n());
    let chi = gaussian_vector(30, &mut rng);
    let exact = reference_sum(&coeffs, &q, &eig, &chi);

    let mut checks = Vec::new();
    let mut plain = DenseOperator::new(m.clone())?;
    let got = cheb_matrix_sum(&mut plain, &coeffs, &chi)?;
    checks.push(Check::new(
        "exact oracle rel",
        (&got - &exact).norm() / exact.norm(),
        1e-9,
    ));
    for (i, &eps) in RECURRENCE_NOISE.iter().enumerate() {
        let mut noisy = NoisyOperator::new(DenseOperator::new(m.clone())?, eps, options.seed + i as u64)?;
        let got = cheb_matrix_sum(&mut noisy, &coeffs, &chi)?;
        let predicted = budget_for_pcp(&params, eps).predicted_error()? * chi.norm();
        checks.push(Check::new(
            format!("eps'={eps:e}"),
            (&got - &exact).norm(),
            predicted,
        ));
    }
    Ok(checks)
}

fn reference_sum(coeffs: &ChebSum, q: &DMatrix<f64>, eig: &DVector<f64>, chi: &DVector<f64>) -> DVector<f64> {
    let mut coords = q.tr_mul(chi);
    for (i, c) in coords.iter_mut().enumerate() {
        let value: f64 = coeffs
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, ck)| ck * cheb_t(k, eig[i]))
            .sum();
        *c *= value;
    }
    q * coords
}

/// Dense `(A^T A + lambda I)^{-1} u` by Cholesky.
pub fn dense_ridge(matrix: &DataMatrix, lambda: f64, u: &DVector<f64>) -> DVector<f64> {
    let a = matrix.matrix();
    let mut gram = a.tr_mul(a);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    gram.cholesky()
        .expect("A^T A + lambda I is positive definite")
        .solve(u)
}

/// Each oracle kind on 100 random right-hand sides:
/// `||solve(u) - (A^T A + lambda I)^{-1} u|| <= eps' ||u||`.
pub fn suite_oracle_contracts(options: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x5eed_0009);
    let matrix = Arc::new(DataMatrix::scaled_to_unit(gaussian_matrix(100, 50, &mut rng))?);
    let lambda = 0.1;
    let rhs: Vec<DVector<f64>> = (0..100).map(|_| gaussian_vector(50, &mut rng)).collect();
    let exact: Vec<DVector<f64>> = rhs.iter().map(|u| dense_ridge(&matrix, lambda, u)).collect();
    let mut checks = Vec::new();
    for (i, kind) in ORACLE_CASES.iter().enumerate() {
        let mut oracle = RidgeOracle::new(matrix.clone(), lambda, *kind, options.seed + i as u64)?;
        let declared = oracle.eps_prime();
        let mut worst = 0.0f64;
        for (u, want) in rhs.iter().zip(&exact) {
            let got = oracle.solve(u)?;
            worst = worst.max((got - want).norm() / u.norm());
        }
        checks.push(Check::new(format!("{kind:?}"), worst, declared));
    }
    Ok(checks)
}

/// Recurrence against the trigonometric forms and the standard bounds on `[-1, 1]`.
pub fn suite_chebyshev(_: &VerifyOptions) -> Result<Vec<Check>> {
    let mut t_err = 0.0f64;
    let mut u_err = 0.0f64;
    let mut t_sup = 0.0f64;
    let mut u_sup = 0.0f64;
    for theta in linspace(0.01, PI - 0.01, 301) {
        let x = theta.cos();
        for n in 0..=60usize {
            let t = cheb_t(n, x);
            let u = cheb_u(n, x);
            let nf = n as f64;
            t_err = t_err.max((t - (nf * theta).cos()).abs());
            u_err = u_err.max((u - ((nf + 1.0) * theta).sin() / theta.sin()).abs() / (nf + 1.0));
            t_sup = t_sup.max(t.abs());
            u_sup = u_sup.max(u.abs() / (nf + 1.0));
        }
    }
    let mut cosh_err = 0.0f64;
    for x in linspace(1.0, 1.5, 51) {
        for n in 0..=30usize {
            let want = (n as f64 * x.acosh()).cosh();
            cosh_err = cosh_err.max((cheb_t(n, x) - want).abs() / want);
        }
    }
    Ok(vec![
        Check::new("T_n vs cos", t_err, 1e-11),
        Check::new("U_n vs sin ratio", u_err, 1e-11),
        Check::new("|T_n| <= 1", t_sup, 1.0 + 1e-12),
        Check::new("|U_n| <= n+1", u_sup, 1.0 + 1e-12),
        Check::new("T_n vs cosh", cosh_err, 1e-11),
    ])
}

pub fn suite_metrics(options: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x5eed_0007);
    let matrix = DataMatrix::scaled_to_unit(gaussian_matrix(60, 40, &mut rng))?;
    let r = EigenReference::from_matrix(&matrix);
    let mut idem = 0.0f64;
    let mut sym = 0.0f64;
    let mut nested = 0.0f64;
    for _ in 0..20 {
        let u = gaussian_vector(40, &mut rng);
        let v = gaussian_vector(40, &mut rng);
        let t = rng.gen_range(0.0..r.eigenvalues()[0]);
        let pv = r.spectral_projector(t, &v);
        idem = idem.max((r.spectral_projector(t, &pv) - &pv).amax());
        sym = sym.max((u.dot(&pv) - r.spectral_projector(t, &u).dot(&v)).abs());
        let hi = r.spectral_projector(1.2 * t, &v);
        nested = nested.max((r.spectral_projector(t, &hi) - &hi).amax());
    }
    let chi = gaussian_vector(40, &mut rng);
    let exact = r.spectral_projector(0.1, &chi);
    let own = check_pcp_approx(&r, 0.1, 0.1, 0.0, &chi, &exact)?;
    Ok(vec![
        Check::new("eigen residual", r.max_residual(&matrix), 1e-8),
        Check::new("orthonormality", r.orthonormality_defect(), 1e-10),
        Check::new("projector idempotent", idem, 1e-12),
        Check::new("projector symmetric", sym, 1e-10),
        Check::new("nested ranges", nested, 1e-12),
        Check::new(
            "exact PCP is (0,0)-approximate",
            if own.passed() { 0.0 } else { 1.0 },
            0.0,
        ),
    ])
}

pub fn suite_datagen(options: &VerifyOptions) -> Result<Vec<Check>> {
    let spec = SynthSpec::new(120, 80, 0.1, options.seed);
    let data = gen_random_a(&spec)?;
    let again = gen_random_a(&spec)?;
    let eye = DMatrix::<f64>::identity(80, 80);
    let lo = (spec.lambda * (1.0 - spec.a)).sqrt();
    let hi = (spec.lambda * (1.0 + spec.a)).sqrt();
    let in_gap = data.sigma.iter().filter(|&&s| s > lo && s < hi).count();
    let above = data.sigma.iter().filter(|&&s| s >= hi).count();
    let clean = data.matrix.apply(&data.x_true);
    let same = data.matrix.matrix() == again.matrix.matrix() && data.b == again.b;
    Ok(vec![
        Check::new("U orthonormal", (data.u.tr_mul(&data.u) - &eye).amax(), 1e-10),
        Check::new("V orthonormal", (data.v.tr_mul(&data.v) - &eye).amax(), 1e-10),
        Check::new("sigma in gap", in_gap as f64, 0.0),
        Check::new("|#above - d/2|", (above as f64 - 40.0).abs(), 0.0),
        Check::new("sigma_max", data.sigma.max(), 1.0),
        Check::new("-<b, A x_true>", -data.b.dot(&clean), 0.0),
        Check::new("seed determinism", if same { 0.0 } else { 1.0 }, 0.0),
    ])
}

pub fn suite_pcp(options: &VerifyOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    // eigengap: close to the exact projection
    let gap = gen_random_a(&SynthSpec::new(120, 80, 0.1, options.seed))?;
    let matrix = Arc::new(gap.matrix.clone());
    let r = gap.reference();
    let chi = matrix.apply_t(&gap.b);
    let params = PcpParams::for_accuracy(0.1, 0.1, 1e-4, 1.0)?;
    let mut oracle = RidgeOracle::exact(matrix.clone(), 0.1, 1e-12)?;
    let xi = quick_pcp(&mut oracle, &chi, &params)?;
    let exact = r.spectral_projector(0.1, &chi);
    checks.push(Check::new("eigengap ||xi - P chi||/||chi||", (&xi - &exact).norm() / chi.norm(), 1e-4));
    checks.push(Check::new(
        "ridge calls - (2n+1)",
        (oracle.calls() as f64 - params.ridge_calls() as f64).abs(),
        0.0,
    ));

    // gap-free: all three approximation properties
    let free = gen_random_a(&SynthSpec::new(120, 80, 0.0, options.seed + 1))?;
    let matrix = Arc::new(free.matrix.clone());
    let r = free.reference();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x5eed_0010);
    let params = PcpParams::for_accuracy(0.1, 0.1, 1e-3, 1.0)?;
    let mut oracle = RidgeOracle::exact(matrix, 0.1, 1e-10)?;
    for trial in 0..3 {
        let chi = gaussian_vector(80, &mut rng);
        let xi = quick_pcp(&mut oracle, &chi, &params)?;
        let report = check_pcp_approx(&r, 0.1, 0.1, 1e-3, &chi, &xi)?;
        for m in report.margins {
            checks.push(Check::new(format!("gap-free #{trial} {}", m.property), m.measured, m.bound));
        }
    }
    Ok(checks)
}

pub fn suite_pcr(options: &VerifyOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let free = gen_random_a(&SynthSpec::new(120, 80, 0.0, options.seed + 2))?;
    let matrix = Arc::new(free.matrix.clone());
    let r = free.reference();
    let eps = 1e-3;
    let params = PcrParams::for_accuracy(0.1, 0.1, eps, 1.0, PcrSchedule::GapFree)?;
    let ridge_eps = crate::pcr::ridge_accuracy(eps, params.m());
    let mut oracle = RidgeOracle::exact(matrix.clone(), 0.1, ridge_eps)?;
    let out = quick_pcr(&mut oracle, &free.b, &params)?;
    checks.push(Check::new(
        "ridge calls - (2n+m+2)",
        (oracle.calls() as f64 - params.ridge_calls() as f64).abs(),
        0.0,
    ));
    let report = check_pcr_approx(&r, &matrix, 0.1, 0.1, eps, &free.b, &out.x)?;
    for m in report.margins {
        checks.push(Check::new(format!("gap-free {}", m.property), m.measured, m.bound));
    }

    // regressand orthogonal to range(A) gives zero
    let q = matrix.matrix().clone().qr().q();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x5eed_0011);
    let raw = gaussian_vector(120, &mut rng);
    let b = &raw - &q * q.tr_mul(&raw);
    let mut oracle = RidgeOracle::exact(matrix, 0.1, 1e-12)?;
    let small = PcrParams::new(PcpParams::new(0.1, 0.1, 40)?, 5)?;
    let out = quick_pcr(&mut oracle, &b, &small)?;
    checks.push(Check::new("A^T b = 0 output", out.x.norm() / b.norm(), 1e-9));
    Ok(checks)
}

pub fn suite_format(options: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x5eed_0012);
    let m = gaussian_matrix(17, 9, &mut rng);
    let back = decode_binary(&encode_binary(&m), std::path::Path::new("memory"))?;
    let mismatched = m
        .iter()
        .zip(back.iter())
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count();
    let text = crate::format::encode_csv(&m);
    let parsed = crate::format::decode_csv(&text, std::path::Path::new("memory"))?;
    Ok(vec![
        Check::new("binary bit mismatches", mismatched as f64, 0.0),
        Check::new("csv max rel diff", (parsed - &m).amax() / m.amax(), 1e-15),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        let outcomes = run_all(&VerifyOptions::default());
        for o in &outcomes {
            assert!(o.passed(), "{}\n{:#?}", o.summary(), o.checks);
        }
    }

    #[test]
    fn tampered_coefficient_is_caught() {
        let options = VerifyOptions {
            tamper_coeff: Some(3),
            seed: 0,
        };
        let sign = run_suite("sign-accuracy", suite_sign_accuracy, &options);
        assert!(!sign.passed());
    }

    #[test]
    fn suite_errors_become_failures() {
        fn broken(_: &VerifyOptions) -> Result<Vec<Check>> {
            Err(crate::Error::invalid("x", 1.0, "broken"))
        }
        let o = run_suite("broken", broken, &VerifyOptions::default());
        assert!(!o.passed());
        assert!(o.summary().starts_with("FAIL"));
    }
}
