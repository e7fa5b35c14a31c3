//! Odd polynomial approximation of `sgn(x)` built from a Chebyshev
//! interpolant of `f(t) = ((1 + kappa - t) / 2)^(-1/2)`:
//!
//! `g(x) = x * q(1 + kappa - 2 x^2)`, with `kappa = 2 alpha^2`.
//!
//! For `|x| >= alpha` the inner argument lies in `[-1, 1]`, where `q`
//! interpolates `f` and `x f(1 + kappa - 2x^2) = sgn(x)`. For `|x| < alpha` the
//! argument lands in `(1, 1 + kappa]` and `q` stays between `0` and `f`, which
//! keeps `g` inside `[-1, 1]`.

use std::f64::consts::{E, PI, SQRT_2};
use std::fmt::Write as _;
use std::path::Path;

use crate::chebyshev::{interp_coeffs, ChebSum};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SignPoly {
    alpha: f64,
    kappa: f64,
    degree_q: usize,
    q_coeffs: ChebSum,
    eps_target: f64,
}

/// Smallest `n` with `n >= ln(3 / (eps alpha^2)) / (sqrt(2) alpha)`.
pub fn min_degree(alpha: f64, eps: f64) -> usize {
    let bound = (3.0 / (eps * alpha * alpha)).ln() / (SQRT_2 * alpha);
    bound.ceil().max(1.0) as usize
}

/// Coefficients of the degree-`n` interpolant of `((1 + kappa - t)/2)^(-1/2)`
/// in the explicit cosine form
/// `c_k = (2 - [k=0])/(n+1) sum_j sqrt(2) cos(k theta_j) (1 + kappa - cos theta_j)^(-1/2)`.
pub fn inner_coeffs(kappa: f64, n: usize) -> ChebSum {
    let scale = 1.0 / (n as f64 + 1.0);
    let theta: Vec<f64> = (0..=n)
        .map(|j| (j as f64 + 0.5) * PI * scale)
        .collect();
    let weight: Vec<f64> = theta
        .iter()
        .map(|t| SQRT_2 / (1.0 + kappa - t.cos()).sqrt())
        .collect();
    let coeffs = (0..=n)
        .map(|k| {
            let acc: f64 = theta
                .iter()
                .zip(&weight)
                .map(|(t, w)| w * (k as f64 * t).cos())
                .sum();
            if k == 0 {
                scale * acc
            } else {
                2.0 * scale * acc
            }
        })
        .collect();
    ChebSum::new(coeffs).expect("kappa > 0 keeps every sample finite")
}

/// Same coefficients through the generic interpolation routine.
pub fn inner_coeffs_generic(kappa: f64, n: usize) -> Result<ChebSum> {
    interp_coeffs(|t| ((1.0 + kappa - t) / 2.0).powf(-0.5), n)
}

/// Upper bound on `|c_i|`: `(e sqrt(32 (i+1)) / kappa) * rho^(-i)` with
/// `rho = 1 + kappa + sqrt(2 kappa + kappa^2)`.
pub fn coeff_bound(kappa: f64, i: usize) -> f64 {
    let rho = 1.0 + kappa + (2.0 * kappa + kappa * kappa).sqrt();
    E * (32.0 * (i as f64 + 1.0)).sqrt() / kappa * rho.powf(-(i as f64))
}

fn validate(alpha: f64, eps: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("alpha", alpha, "must lie in (0, 1]"));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid("eps", eps, "must lie in (0, 1/2)"));
    }
    Ok(())
}

/// Builds the sign polynomial for gap half-width `alpha` and accuracy `eps`,
/// using the smallest admissible inner degree.
pub fn build_sign_poly(alpha: f64, eps: f64) -> Result<SignPoly> {
    validate(alpha, eps)?;
    let n = min_degree(alpha, eps);
    let kappa = 2.0 * alpha * alpha;
    Ok(SignPoly {
        alpha,
        kappa,
        degree_q: n,
        q_coeffs: inner_coeffs(kappa, n),
        eps_target: eps,
    })
}

impl SignPoly {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Degree of the inner polynomial `q`. `g` itself has degree `2n + 1`.
    pub fn degree_q(&self) -> usize {
        self.degree_q
    }

    pub fn q_coeffs(&self) -> &ChebSum {
        &self.q_coeffs
    }

    pub fn eps_target(&self) -> f64 {
        self.eps_target
    }

    /// `g(x) = x * q(1 + kappa - 2 x^2)`.
    pub fn eval(&self, x: f64) -> f64 {
        x * self.q_coeffs.eval(1.0 + self.kappa - 2.0 * x * x)
    }

    /// `q(t)`, meaningful for `t` in `[-1, 1 + kappa]`.
    pub fn eval_inner(&self, t: f64) -> f64 {
        self.q_coeffs.eval(t)
    }

    /// Copy with the sign of coefficient `k` flipped. Used as a negative control
    /// for the property checks.
    pub fn with_negated_coeff(&self, k: usize) -> SignPoly {
        let mut out = self.clone();
        if let Some(c) = out.q_coeffs.coeffs_mut().get_mut(k) {
            *c = -*c;
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("# quickpcr sign polynomial v1\n");
        s.push_str("alpha,kappa,n,eps\n");
        let _ = writeln!(
            s,
            "{:?},{:?},{},{:?}",
            self.alpha, self.kappa, self.degree_q, self.eps_target
        );
        for c in self.q_coeffs.coeffs() {
            let _ = writeln!(s, "{c:?}");
        }
        s
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<SignPoly> {
        let parse_err = |line: usize, reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (ln, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "empty file".into()))?;
        if header != "alpha,kappa,n,eps" {
            return Err(parse_err(ln, format!("unexpected header `{header}`")));
        }
        let (ln, meta) = lines
            .next()
            .ok_or_else(|| parse_err(ln, "missing parameter row".into()))?;
        let fields: Vec<&str> = meta.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(ln, "parameter row needs 4 fields".into()));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| parse_err(ln, format!("`{s}`: {e}")))
        };
        let alpha = num(fields[0])?;
        let kappa = num(fields[1])?;
        let n: usize = fields[2]
            .parse()
            .map_err(|e| parse_err(ln, format!("`{}`: {e}", fields[2])))?;
        let eps = num(fields[3])?;

        let coeffs = lines
            .map(|(ln, l)| {
                l.parse::<f64>()
                    .map_err(|e| parse_err(ln, format!("`{l}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if coeffs.len() != n + 1 {
            return Err(parse_err(
                0,
                format!("expected {} coefficients, found {}", n + 1, coeffs.len()),
            ));
        }
        Ok(SignPoly {
            alpha,
            kappa,
            degree_q: n,
            q_coeffs: ChebSum::new(coeffs)?,
            eps_target: eps,
        })
    }
}
