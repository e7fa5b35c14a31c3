//! Synthetic `random-a` datasets and dataset bundles on disk.
//!
//! A bundle is a directory holding `a.qpm` (the data matrix), `b.qpm` (the
//! regressand), optionally `eigen.qpm` (packed eigenpairs of `A^T A`, see
//! [`EigenReference::to_packed`]) and `x_true.qpm`, and a `manifest.txt` of
//! `key = value` lines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::format::{read_matrix, read_vector, write_matrix, write_vector};
use crate::metrics::EigenReference;
use crate::ridge::DataMatrix;

pub const MANIFEST_VERSION: &str = "quickpcr-dataset-v1";

/// Generation refuses to allocate more than this many bytes of dense storage.
pub const MAX_GENERATION_BYTES: u128 = 4 << 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub d_prime: usize,
    pub d: usize,
    /// Relative gap around `sqrt(lambda)`.
    pub a: f64,
    pub lambda: f64,
    pub seed: u64,
    /// `||noise|| / ||A x_true||`.
    pub noise_scale: f64,
}

impl SynthSpec {
    pub fn new(d_prime: usize, d: usize, a: f64, seed: u64) -> Self {
        SynthSpec {
            d_prime,
            d,
            a,
            lambda: 0.1,
            seed,
            noise_scale: 0.1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d % 2 != 0 {
            return Err(Error::invalid(
                "d",
                self.d as f64,
                "must be positive and even: half the singular values go below the threshold, half above",
            ));
        }
        if self.d > self.d_prime {
            return Err(Error::invalid(
                "d",
                self.d as f64,
                format!("must not exceed d' = {}", self.d_prime),
            ));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::invalid("lambda", self.lambda, "must lie in (0, 1)"));
        }
        if !(self.a >= 0.0 && self.a < 1.0) || self.lambda.sqrt() * (1.0 + self.a) > 1.0 {
            return Err(Error::invalid(
                "a",
                self.a,
                "need 0 <= a < 1 and sqrt(lambda) (1 + a) <= 1",
            ));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::invalid("noise", self.noise_scale, "must be finite and >= 0"));
        }
        let (dp, d) = (self.d_prime as u128, self.d as u128);
        // two d' x d Gaussians/factors, two d x d, plus the product
        let bytes = 8 * (3 * dp * d + 2 * d * d);
        if bytes > MAX_GENERATION_BYTES {
            return Err(Error::TooLarge {
                rows: self.d_prime,
                cols: self.d,
                bytes,
            });
        }
        Ok(())
    }

    pub fn manifest(&self) -> String {
        let mut s = String::new();
        writeln!(s, "format = {MANIFEST_VERSION}").unwrap();
        writeln!(s, "generator = random-a").unwrap();
        writeln!(s, "d_prime = {}", self.d_prime).unwrap();
        writeln!(s, "d = {}", self.d).unwrap();
        writeln!(s, "a = {:?}", self.a).unwrap();
        writeln!(s, "lambda = {:?}", self.lambda).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "noise_scale = {:?}", self.noise_scale).unwrap();
        s
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    pub matrix: DataMatrix,
    pub b: DVector<f64>,
    pub x_true: DVector<f64>,
    /// Singular values; entry `i` pairs with column `i` of `v`.
    pub sigma: DVector<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl SynthDataset {
    pub fn reference(&self) -> EigenReference {
        EigenReference::from_factors(&self.sigma, &self.v).expect("factor shapes agree")
    }
}

fn gaussian_orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// `A = U diag(sigma) V^T` with the first `d/2` singular values uniform in
/// `[sqrt(lambda)(1+a), 1]` and the rest uniform in `[0, sqrt(lambda)(1-a)]`.
/// `x_true` is a uniformly random unit vector in the span of the top `d/2`
/// right singular vectors and `b = A x_true + eta` with
/// `||eta|| = noise_scale ||A x_true||`.
pub fn gen_random_a(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let (dp, d) = (spec.d_prime, spec.d);
    let half = d / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u = gaussian_orthonormal(dp, d, &mut rng);
    let v = gaussian_orthonormal(d, d, &mut rng);
    let root = spec.lambda.sqrt();
    let (hi_lo, lo_hi) = (root * (1.0 + spec.a), root * (1.0 - spec.a));
    let sigma = DVector::from_fn(d, |i, _| {
        if i < half {
            rng.gen_range(hi_lo..=1.0)
        } else {
            rng.gen_range(0.0..=lo_hi)
        }
    });
    let a = &u * DMatrix::from_diagonal(&sigma) * v.transpose();
    let matrix = DataMatrix::new(a)?;

    let coef = DVector::from_fn(half, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x_true = (v.columns(0, half) * coef).normalize();
    let clean = matrix.apply(&x_true);
    let eta = DVector::from_fn(dp, |_, _| rng.sample::<f64, _>(StandardNormal));
    let eta_norm = eta.norm();
    let b = if eta_norm > 0.0 {
        &clean + eta * (spec.noise_scale * clean.norm() / eta_norm)
    } else {
        clean
    };
    Ok(SynthDataset {
        spec: *spec,
        matrix,
        b,
        x_true,
        sigma,
        u,
        v,
    })
}

/// A loaded bundle.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub matrix: DataMatrix,
    pub b: DVector<f64>,
    pub reference: Option<EigenReference>,
    pub manifest: Vec<(String, String)>,
}

impl Dataset {
    pub fn manifest_value(&self, key: &str) -> Option<&str> {
        self.manifest
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub const MATRIX_FILE: &str = "a.qpm";
pub const VECTOR_FILE: &str = "b.qpm";
pub const EIGEN_FILE: &str = "eigen.qpm";
pub const TRUTH_FILE: &str = "x_true.qpm";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Writes a generated dataset as a bundle, creating `dir` if needed. Returns
/// the paths written.
pub fn save_dataset(dir: &Path, data: &SynthDataset) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> = [MATRIX_FILE, VECTOR_FILE, EIGEN_FILE, TRUTH_FILE, MANIFEST_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write_matrix(&paths[0], data.matrix.matrix())?;
    write_vector(&paths[1], &data.b)?;
    write_matrix(&paths[2], &data.reference().to_packed())?;
    write_vector(&paths[3], &data.x_true)?;
    fs::write(&paths[4], data.spec.manifest()).map_err(|e| Error::io(&paths[4], e))?;
    Ok(paths)
}

fn parse_manifest(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| {
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                return None;
            }
            let (k, v) = l.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Loads a bundle directory. `a.qpm` and `b.qpm` are required; the eigen
/// reference and manifest are optional. When `scale` is set the matrix is
/// rescaled to spectral norm one (and `b` left as is); otherwise a matrix with
/// spectral norm above one is rejected.
pub fn load_dataset(dir: &Path, scale: bool) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let a = read_matrix(&dir.join(MATRIX_FILE))?;
    let matrix = if scale {
        DataMatrix::scaled_to_unit(a)?
    } else {
        DataMatrix::new(a)?
    };
    let b = read_vector(&dir.join(VECTOR_FILE))?;
    crate::error::check_dim("dataset regressand", matrix.rows(), b.len())?;
    let eigen_path = dir.join(EIGEN_FILE);
    let reference = if eigen_path.exists() && !scale {
        let r = EigenReference::from_packed(&read_matrix(&eigen_path)?)?;
        crate::error::check_dim("dataset eigen reference", matrix.cols(), r.dim())?;
        Some(r)
    } else {
        None
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        parse_manifest(&fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?)
    } else {
        Vec::new()
    };
    Ok(Dataset {
        matrix,
        b,
        reference,
        manifest,
    })
}
