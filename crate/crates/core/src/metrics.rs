//! Dense spectral references and error measures.
//!
//! Everything here decomposes `A^T A` explicitly and is meant for tests,
//! verification and reporting, not for the solvers themselves.

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::pcr::PcrOutput;
use crate::ridge::DataMatrix;

/// Eigenvalues within this distance below a threshold count as above it.
pub const THRESHOLD_TIE: f64 = 1e-12;

/// Absolute roundoff allowance (relative to the bound's scale) in the
/// approximation checks.
const CHECK_SLACK: f64 = 1e-10;

/// Default factor for the small-threshold denoising error.
pub const DEFAULT_SMALL_FACTOR: f64 = 0.81;

/// Eigenpairs of `A^T A`, eigenvalues sorted in decreasing order.
#[derive(Debug, Clone)]
pub struct EigenReference {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl EigenReference {
    /// Decomposes `A^T A` densely.
    pub fn from_matrix(matrix: &DataMatrix) -> Self {
        let a = matrix.matrix();
        let gram = a.transpose() * a;
        let eig = SymmetricEigen::new(gram);
        Self::sorted(eig.eigenvalues, eig.eigenvectors)
    }

    /// Builds the reference from right singular vectors (columns of `v`) and
    /// singular values, without decomposing anything.
    pub fn from_factors(sigma: &DVector<f64>, v: &DMatrix<f64>) -> Result<Self> {
        check_dim("singular vectors", sigma.len(), v.ncols())?;
        check_dim("singular vector length", v.nrows(), v.ncols())?;
        Ok(Self::sorted(sigma.map(|s| s * s), v.clone()))
    }

    /// Unpacks the `d x (d+1)` layout written by [`EigenReference::to_packed`].
    pub fn from_packed(packed: &DMatrix<f64>) -> Result<Self> {
        let d = packed.nrows();
        check_dim("packed eigen reference columns", d + 1, packed.ncols())?;
        let values = packed.column(0).clone_owned();
        if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid(
                "eigenvalue",
                values.iter().copied().find(|x| !x.is_finite() || *x < 0.0).unwrap(),
                "eigenvalues of A^T A must be finite and nonnegative",
            ));
        }
        Ok(Self::sorted(values, packed.columns(1, d).clone_owned()))
    }

    /// Column 0 holds the eigenvalues, columns 1.. the eigenvectors.
    pub fn to_packed(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d + 1);
        out.set_column(0, &self.values);
        out.columns_mut(1, d).copy_from(&self.vectors);
        out
    }

    fn sorted(values: DVector<f64>, vectors: DMatrix<f64>) -> Self {
        let d = values.len();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
        let values = DVector::from_iterator(d, order.iter().map(|&i| values[i].max(0.0)));
        let mut sorted = DMatrix::zeros(vectors.nrows(), d);
        for (k, &i) in order.iter().enumerate() {
            sorted.set_column(k, &vectors.column(i));
        }
        EigenReference {
            values,
            vectors: sorted,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn eigenvector(&self, i: usize) -> DVectorView<'_, f64> {
        self.vectors.column(i)
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Largest `max_i ||A^T A nu_i - lambda_i nu_i||`.
    pub fn max_residual(&self, matrix: &DataMatrix) -> f64 {
        (0..self.dim())
            .map(|i| {
                let nu = self.vectors.column(i).clone_owned();
                (matrix.gram_apply(&nu) - nu * self.values[i]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `max |V^T V - I|` entrywise.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.vectors.transpose() * &self.vectors;
        let d = self.dim();
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    fn above(&self, threshold: f64, i: usize) -> bool {
        self.values[i] >= threshold - THRESHOLD_TIE
    }

    /// Applies `diag(w(lambda_i))` in the eigenbasis.
    fn filter(&self, v: &DVector<f64>, weight: impl Fn(usize) -> f64) -> DVector<f64> {
        let mut coords = self.vectors.tr_mul(v);
        for (i, c) in coords.iter_mut().enumerate() {
            *c *= weight(i);
        }
        &self.vectors * coords
    }

    /// `P_threshold v`: projection onto eigenvectors with eigenvalue at least
    /// `threshold` (ties within [`THRESHOLD_TIE`] included).
    pub fn spectral_projector(&self, threshold: f64, v: &DVector<f64>) -> DVector<f64> {
        self.filter(v, |i| if self.above(threshold, i) { 1.0 } else { 0.0 })
    }

    /// `v - P_threshold v`.
    pub fn complement(&self, threshold: f64, v: &DVector<f64>) -> DVector<f64> {
        self.filter(v, |i| if self.above(threshold, i) { 0.0 } else { 1.0 })
    }

    /// `(A^T A)^+ P_threshold v`.
    pub fn pcr_solution(&self, threshold: f64, v: &DVector<f64>) -> DVector<f64> {
        self.filter(v, |i| {
            let l = self.values[i];
            if self.above(threshold, i) && l > 0.0 {
                1.0 / l
            } else {
                0.0
            }
        })
    }
}

/// One inequality of an approximation check. `margin = bound - measured`.
#[derive(Debug, Clone, PartialEq)]
pub struct Margin {
    pub property: String,
    pub measured: f64,
    pub bound: f64,
}

impl Margin {
    fn new(property: impl Into<String>, measured: f64, bound: f64) -> Self {
        Margin {
            property: property.into(),
            measured,
            bound,
        }
    }

    pub fn margin(&self) -> f64 {
        self.bound - self.measured
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.bound + CHECK_SLACK * self.bound.abs().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub margins: Vec<Margin>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.margins.iter().all(Margin::passed)
    }

    /// Smallest margin over all properties.
    pub fn worst_margin(&self) -> f64 {
        self.margins
            .iter()
            .map(Margin::margin)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Margin> {
        self.margins.iter().filter(|m| !m.passed())
    }
}

/// Evaluates the three `(gamma, eps)`-approximate projection properties for
/// the output `xi` on input `chi`. Property 3 contributes the worst
/// eigenvector in the band `[(1-gamma) lambda, (1+gamma) lambda]`, or nothing
/// when the band is empty.
pub fn check_pcp_approx(
    reference: &EigenReference,
    lambda: f64,
    gamma: f64,
    eps: f64,
    chi: &DVector<f64>,
    xi: &DVector<f64>,
) -> Result<CheckReport> {
    check_dim("PCP check input", reference.dim(), chi.len())?;
    check_dim("PCP check output", reference.dim(), xi.len())?;
    let hi = (1.0 + gamma) * lambda;
    let lo = (1.0 - gamma) * lambda;
    let scale = eps * chi.norm();
    let diff = xi - chi;
    let mut margins = vec![
        Margin::new("top", reference.spectral_projector(hi, &diff).norm(), scale),
        Margin::new("bottom", reference.complement(lo, xi).norm(), scale),
    ];
    let diff_coords = reference.eigenvectors().tr_mul(&diff);
    let chi_coords = reference.eigenvectors().tr_mul(chi);
    let worst = (0..reference.dim())
        .filter(|&i| {
            let l = reference.eigenvalues()[i];
            l >= lo - THRESHOLD_TIE && l <= hi + THRESHOLD_TIE
        })
        .map(|i| Margin::new(format!("band[{i}]"), diff_coords[i].abs(), chi_coords[i].abs() + scale))
        .min_by(|a, b| a.margin().total_cmp(&b.margin()));
    margins.extend(worst);
    Ok(CheckReport { margins })
}

/// Evaluates the two `(gamma, eps)`-approximate regression properties for
/// output `x` on regressand `b`, against the exact solution at `(1+gamma) lambda`.
pub fn check_pcr_approx(
    reference: &EigenReference,
    matrix: &DataMatrix,
    lambda: f64,
    gamma: f64,
    eps: f64,
    b: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<CheckReport> {
    check_dim("PCR check regressand", matrix.rows(), b.len())?;
    check_dim("PCR check output", matrix.cols(), x.len())?;
    check_dim("PCR check reference", matrix.cols(), reference.dim())?;
    let scale = eps * b.norm();
    let x_tilde = reference.pcr_solution((1.0 + gamma) * lambda, &matrix.apply_t(b));
    let optimal = (matrix.apply(&x_tilde) - b).norm();
    let margins = vec![
        Margin::new(
            "bottom",
            reference.complement((1.0 - gamma) * lambda, x).norm(),
            scale,
        ),
        Margin::new("residual", (matrix.apply(x) - b).norm(), optimal + scale),
    ];
    Ok(CheckReport { margins })
}

/// Error ratios for one run. `None` marks a ratio whose denominator is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxReport {
    pub regression_error: Option<f64>,
    pub projection_error: Option<f64>,
    pub denoising_error: Option<f64>,
    pub denoising_error_small: Option<f64>,
    pub ridge_calls: usize,
}

pub const REPORT_COLUMNS: &str =
    "ridge_calls,regression_error,projection_error,denoising_error,denoising_error_small";

impl ApproxReport {
    /// Fields in [`REPORT_COLUMNS`] order; missing ratios print as `NA`.
    pub fn csv_row(&self) -> String {
        let cell = |v: Option<f64>| match v {
            Some(x) => format!("{x:e}"),
            None => "NA".to_string(),
        };
        format!(
            "{},{},{},{},{}",
            self.ridge_calls,
            cell(self.regression_error),
            cell(self.projection_error),
            cell(self.denoising_error),
            cell(self.denoising_error_small)
        )
    }
}

/// What a report is computed for.
#[derive(Debug, Clone, Copy)]
pub enum ReportInput<'a> {
    /// Projection of `chi` with output `xi`.
    Pcp {
        chi: &'a DVector<f64>,
        xi: &'a DVector<f64>,
    },
    /// Regression on `b`; the projection errors use the intermediate `xi`
    /// against `P_lambda A^T b`.
    Pcr {
        b: &'a DVector<f64>,
        output: &'a PcrOutput,
    },
}

/// `num / den`, or `None` when `den` is zero relative to `scale` (roundoff
/// leftovers of an exactly vanishing quantity count as zero).
fn ratio(num: f64, den: f64, scale: f64) -> Option<f64> {
    (den > 1e-12 * scale).then(|| num / den)
}

/// Computes the error ratios. `small_factor` scales the threshold of the
/// small denoising error (usually [`DEFAULT_SMALL_FACTOR`]).
pub fn error_report(
    reference: &EigenReference,
    matrix: &DataMatrix,
    lambda: f64,
    small_factor: f64,
    input: ReportInput<'_>,
    ridge_calls: usize,
) -> Result<ApproxReport> {
    check_dim("report reference", matrix.cols(), reference.dim())?;
    let (chi, xi, regression_error) = match input {
        ReportInput::Pcp { chi, xi } => (chi.clone(), xi, None),
        ReportInput::Pcr { b, output } => {
            check_dim("report regressand", matrix.rows(), b.len())?;
            let atb = matrix.apply_t(b);
            let x_star = reference.pcr_solution(lambda, &atb);
            let reg = ratio(
                (&output.x - &x_star).norm(),
                x_star.norm(),
                atb.norm() / reference.eigenvalues().max().max(f64::MIN_POSITIVE),
            );
            (atb, &output.xi, reg)
        }
    };
    check_dim("report projection", reference.dim(), xi.len())?;
    let xi_star = reference.spectral_projector(lambda, &chi);
    let xi_norm = xi.norm();
    Ok(ApproxReport {
        regression_error,
        projection_error: ratio((xi - &xi_star).norm(), xi_star.norm(), chi.norm()),
        denoising_error: ratio(reference.complement(lambda, xi).norm(), xi_norm, chi.norm()),
        denoising_error_small: ratio(
            reference.complement(small_factor * lambda, xi).norm(),
            xi_norm,
            chi.norm(),
        ),
        ridge_calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng)).qr().q()
    }

    fn random_vec(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
    }

    /// A = U diag(sigma) V^T with known factors.
    fn instance(sigma: &[f64], rows: usize, seed: u64) -> (DataMatrix, DVector<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = sigma.len();
        let u = orthonormal(rows, d, &mut rng);
        let v = orthonormal(d, d, &mut rng);
        let s = DVector::from_column_slice(sigma);
        let a = &u * DMatrix::from_diagonal(&s) * v.transpose();
        (DataMatrix::new(a).unwrap(), s, v)
    }

    #[test]
    fn decomposition_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DMatrix::from_fn(40, 25, |_, _| StandardNormal.sample(&mut rng));
        let m = DataMatrix::scaled_to_unit(a).unwrap();
        let r = EigenReference::from_matrix(&m);
        assert!(r.max_residual(&m) <= 1e-8);
        assert!(r.orthonormality_defect() <= 1e-10);
        let l = r.eigenvalues();
        assert!((1..l.len()).all(|i| l[i - 1] >= l[i]));
        assert!(l.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn factors_agree_with_decomposition() {
        let sigma = [0.9, 0.7, 0.5, 0.3, 0.2, 0.1];
        let (m, s, v) = instance(&sigma, 10, 2);
        let a = EigenReference::from_factors(&s, &v).unwrap();
        let b = EigenReference::from_matrix(&m);
        assert!((a.eigenvalues() - b.eigenvalues()).amax() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_vec(6, &mut rng);
        let pa = a.spectral_projector(0.2, &x);
        let pb = b.spectral_projector(0.2, &x);
        assert!((pa - pb).norm() < 1e-10);
        let packed = EigenReference::from_packed(&a.to_packed()).unwrap();
        assert_eq!(packed.to_packed(), a.to_packed());
    }

    #[test]
    fn projector_extremes() {
        let (m, _, _) = instance(&[0.9, 0.5, 0.3, 0.1], 6, 4);
        let r = EigenReference::from_matrix(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_vec(4, &mut rng);
        assert!((r.spectral_projector(0.0, &v) - &v).norm() < 1e-12);
        assert_eq!(r.spectral_projector(0.82, &v).norm(), 0.0);
    }

    #[test]
    fn threshold_tie_counts_as_above() {
        let (m, s, v) = instance(&[0.9, 0.5], 4, 6);
        let r = EigenReference::from_factors(&s, &v).unwrap();
        let e = v.column(1).clone_owned();
        let p = r.spectral_projector(0.25 + 5e-13, &e);
        assert!((p - &e).norm() < 1e-12);
        let _ = m;
    }

    #[test]
    fn pcp_check_accepts_exact_projection() {
        let (m, _, _) = instance(&[0.95, 0.8, 0.5, 0.34, 0.3, 0.2, 0.1, 0.05], 12, 7);
        let r = EigenReference::from_matrix(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let chi = random_vec(8, &mut rng);
            let xi = r.spectral_projector(0.1, &chi);
            for eps in [0.0, 1e-6, 0.1] {
                assert!(check_pcp_approx(&r, 0.1, 0.2, eps, &chi, &xi).unwrap().passed());
            }
        }
    }

    #[test]
    fn pcp_check_rejects_identity_below_band() {
        let (m, _, _) = instance(&[0.2, 0.15, 0.1, 0.05], 6, 9);
        let r = EigenReference::from_matrix(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let chi = random_vec(4, &mut rng);
        let report = check_pcp_approx(&r, 0.5, 0.1, 1e-3, &chi, &chi).unwrap();
        assert!(!report.passed());
        let bottom = &report.margins[1];
        assert!(!bottom.passed());
        assert!((bottom.measured - chi.norm()).abs() < 1e-12);
    }

    #[test]
    fn pcr_check_accepts_exact_solution() {
        let (m, _, _) = instance(&[0.95, 0.7, 0.5, 0.33, 0.3, 0.2, 0.1, 0.02], 14, 11);
        let r = EigenReference::from_matrix(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = random_vec(14, &mut rng);
        let x = r.pcr_solution(1.1 * 0.1, &m.apply_t(&b));
        let report = check_pcr_approx(&r, &m, 0.1, 0.1, 0.0, &b, &x).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.margins[1].margin().abs() < 1e-12);
    }

    #[test]
    fn pcr_check_zero_output_orthogonal_regressand() {
        let (m, _, _) = instance(&[0.9, 0.6, 0.3, 0.1], 10, 13);
        let r = EigenReference::from_matrix(&m);
        let q = m.matrix().clone().qr().q();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let raw = random_vec(10, &mut rng);
        let b = &raw - &q * q.tr_mul(&raw);
        let x = DVector::zeros(4);
        assert!(check_pcr_approx(&r, &m, 0.1, 0.1, 0.0, &b, &x).unwrap().passed());
    }

    #[test]
    fn report_edge_cases() {
        let (m, _, v) = instance(&[0.9, 0.6, 0.2, 0.1], 8, 15);
        let r = EigenReference::from_matrix(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let chi = random_vec(4, &mut rng);
        let xi = r.spectral_projector(0.1, &chi);
        let rep = error_report(&r, &m, 0.1, 0.81, ReportInput::Pcp { chi: &chi, xi: &xi }, 9)
            .unwrap();
        assert_eq!(rep.projection_error, Some(0.0));
        assert!(rep.denoising_error.unwrap() < 1e-12);
        assert_eq!(rep.ridge_calls, 9);

        let low = v.column(3).clone_owned();
        let rep = error_report(&r, &m, 0.1, 0.81, ReportInput::Pcp { chi: &low, xi: &low }, 0)
            .unwrap();
        assert!((rep.denoising_error.unwrap() - 1.0).abs() < 1e-12);
        // chi entirely below the threshold: xi* = 0, ratio not applicable
        assert_eq!(rep.projection_error, None);
        assert!(rep.csv_row().contains("NA"));
        assert_eq!(rep.csv_row().split(',').count(), REPORT_COLUMNS.split(',').count());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn projector_is_idempotent_and_symmetric(seed in 0u64..1000, threshold in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(12, 8, |_, _| StandardNormal.sample(&mut rng));
            let m = DataMatrix::scaled_to_unit(a).unwrap();
            let r = EigenReference::from_matrix(&m);
            let u = random_vec(8, &mut rng);
            let v = random_vec(8, &mut rng);
            let pv = r.spectral_projector(threshold, &v);
            let ppv = r.spectral_projector(threshold, &pv);
            prop_assert!((&ppv - &pv).amax() <= 1e-12);
            let pu = r.spectral_projector(threshold, &u);
            prop_assert!((u.dot(&pv) - pu.dot(&v)).abs() <= 1e-10);
        }

        #[test]
        fn projector_ranges_are_nested(seed in 0u64..1000, lambda in 0.05f64..0.5, gamma in 0.0f64..0.6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(12, 8, |_, _| StandardNormal.sample(&mut rng));
            let m = DataMatrix::scaled_to_unit(a).unwrap();
            let r = EigenReference::from_matrix(&m);
            let v = random_vec(8, &mut rng);
            let hi = r.spectral_projector((1.0 + gamma) * lambda, &v);
            // P_lo P_hi = P_hi when range(P_hi) is inside range(P_lo)
            let mid = r.spectral_projector(lambda, &hi);
            let lo = r.spectral_projector((1.0 - gamma) * lambda, &r.spectral_projector(lambda, &v));
            prop_assert!((mid - &hi).amax() <= 1e-12);
            prop_assert!((lo - r.spectral_projector(lambda, &v)).amax() <= 1e-12);
        }
    }
}
