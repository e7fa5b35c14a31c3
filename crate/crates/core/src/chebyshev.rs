//! Scalar Chebyshev machinery: polynomials of the first and second kind,
//! interpolation coefficients at Chebyshev points, and Clenshaw evaluation.
//!
//! Everything here is evaluated with the three-term recurrence, including
//! arguments outside `[-1, 1]`. The matrix recurrence in
//! [`crate::recurrence`] follows the same path, so the scalar routines double
//! as its reference.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `T_n(x)` by the three-term recurrence `T_{k+1} = 2x T_k - T_{k-1}`.
pub fn cheb_t(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for _ in 1..n {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `U_n(x)` by the three-term recurrence `U_{k+1} = 2x U_k - U_{k-1}`.
pub fn cheb_u(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0 * x,
        _ => {
            let (mut prev, mut cur) = (1.0, 2.0 * x);
            for _ in 1..n {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// The `n + 1` Chebyshev points of order `n`, `x_j = cos((j + 1/2) pi / (n + 1))`.
///
/// Points are strictly inside `(-1, 1)` and strictly decreasing in `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebPoints {
    order: usize,
    points: Vec<f64>,
}

impl ChebPoints {
    pub fn new(order: usize) -> Self {
        let points = (0..=order).map(|j| point_angle(order, j).cos()).collect();
        ChebPoints { order, points }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

#[inline]
fn point_angle(order: usize, j: usize) -> f64 {
    (j as f64 + 0.5) * PI / (order as f64 + 1.0)
}

/// Coefficients `c_0..c_n` of a Chebyshev sum `sum_k c_k T_k(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebSum {
    coeffs: Vec<f64>,
}

impl ChebSum {
    /// Wraps a coefficient list. It must be non-empty and finite.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid(
                "coeffs.len",
                0.0,
                "a Chebyshev sum needs at least one coefficient",
            ));
        }
        if let Some(index) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCoefficient { index });
        }
        Ok(ChebSum { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Polynomial degree, i.e. `coeffs.len() - 1`.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Evaluates the sum at `x` with the Clenshaw backward recurrence.
    pub fn eval(&self, x: f64) -> f64 {
        clenshaw_scalar(self, x)
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }
}

/// Chebyshev interpolation coefficients of `f` at the points of order `n`:
///
/// `c_k = (2 - [k = 0]) / (n + 1) * sum_j f(x_j) T_k(x_j)`.
///
/// The induced polynomial matches `f` at every Chebyshev point. Uses the
/// direct `O(n^2)` sum.
pub fn interp_coeffs<F>(f: F, n: usize) -> Result<ChebSum>
where
    F: Fn(f64) -> f64,
{
    let samples = (0..=n)
        .map(|j| {
            let x = point_angle(n, j).cos();
            let value = f(x);
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::NonFiniteSample { index: j, x, value })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(coeffs_from_samples(&samples))
}

/// Same formula as [`interp_coeffs`] for pre-sampled values `f(x_j)`, `j = 0..=n`.
/// `T_k(x_j)` is evaluated as `cos(k theta_j)`.
pub(crate) fn coeffs_from_samples(samples: &[f64]) -> ChebSum {
    let n = samples.len() - 1;
    let scale = 1.0 / (n as f64 + 1.0);
    let coeffs = (0..=n)
        .map(|k| {
            let acc: f64 = samples
                .iter()
                .enumerate()
                .map(|(j, fx)| fx * (k as f64 * point_angle(n, j)).cos())
                .sum();
            let weight = if k == 0 { 1.0 } else { 2.0 };
            weight * scale * acc
        })
        .collect();
    ChebSum { coeffs }
}

/// Clenshaw evaluation of `sum_k c_k T_k(x)`: `b_r = 2x b_{r+1} - b_{r+2} + c_r`,
/// result `b_0 - x b_1`.
pub fn clenshaw_scalar(sum: &ChebSum, x: f64) -> f64 {
    let c = sum.coeffs();
    let n = c.len() - 1;
    if n == 0 {
        return c[0];
    }
    let mut b2 = 0.0;
    let mut b1 = c[n];
    for r in (0..n).rev() {
        let b0 = 2.0 * x * b1 - b2 + c[r];
        b2 = b1;
        b1 = b0;
    }
    // b1 now holds b_0 and b2 holds b_1.
    b1 - x * b2
}
