//! Special functions: Gamma, Bessel `J_ν` and `I_ν`, the Mittag-Leffler
//! function and distribution, and the fixed-time marginal of a Bessel
//! process started at the origin.
//!
//! Everything here is pure; random draws take a caller-owned generator.

mod mittag_leffler;

pub use mittag_leffler::{
    ml_density, ml_function, ml_moment, ml_sample, MittagLefflerDist, MlCdfTable,
};

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Maximum number of terms summed by any series in this module.
pub const MAX_SERIES_TERMS: usize = 500;

/// Relative size below which a term counts as negligible.
const TERM_RTOL: f64 = 1e-16;

/// Consecutive negligible terms needed to stop a series.
const SMALL_RUN: usize = 3;

/// Outcome of a truncated series evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesEval {
    pub value: f64,
    /// False when the term cap was hit before the truncation rule fired.
    pub converged: bool,
    /// False when the estimated cancellation error exceeds `1e-10` relative.
    pub well_conditioned: bool,
    pub terms: usize,
    /// Sum of the absolute values of the terms; scales the rounding error.
    pub abs_sum: f64,
}

/// Compensated (Neumaier) accumulator that also applies the truncation rule.
#[derive(Debug, Default)]
pub(crate) struct SeriesSum {
    sum: f64,
    comp: f64,
    abs_sum: f64,
    small_run: usize,
    terms: usize,
}

impl SeriesSum {
    /// Adds a term; returns true once the series may be truncated.
    pub(crate) fn push(&mut self, term: f64) -> bool {
        let t = self.sum + term;
        if self.sum.abs() >= term.abs() {
            self.comp += (self.sum - t) + term;
        } else {
            self.comp += (term - t) + self.sum;
        }
        self.sum = t;
        self.abs_sum += term.abs();
        self.terms += 1;
        if term.abs() < TERM_RTOL * self.value().abs() {
            self.small_run += 1;
        } else {
            self.small_run = 0;
        }
        self.small_run >= SMALL_RUN
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }

    pub(crate) fn abs_sum(&self) -> f64 {
        self.abs_sum
    }

    pub(crate) fn terms(&self) -> usize {
        self.terms
    }
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(xm1: f64) -> f64 {
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (xm1 + i as f64);
    }
    a
}

/// `sin(πx)` with exact zeros at the integers.
pub fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).round();
    if r == 0.0 || r.abs() == 1.0 {
        return 0.0;
    }
    if r > 0.5 {
        (PI * (1.0 - r)).sin()
    } else if r < -0.5 {
        (PI * (-1.0 - r)).sin()
    } else {
        (PI * r).sin()
    }
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// The Gamma function.
///
/// Lanczos approximation for `x ≥ 1/2`, reflection below; poles at the
/// non-positive integers are a domain error. Overflows to `+∞` past ~171.6.
pub fn gamma(x: f64) -> Result<f64> {
    if x.is_nan() || is_nonpositive_integer(x) {
        return Err(Error::domain(format!("gamma has a pole at {x}")));
    }
    if x < 0.5 {
        return Ok(PI / (sin_pi(x) * gamma(1.0 - x)?));
    }
    if x > 171.7 {
        return Ok(f64::INFINITY);
    }
    let xm1 = x - 1.0;
    let t = xm1 + LANCZOS_G + 0.5;
    // split the power so t^(x-1/2) does not overflow before the product does
    let half_pow = t.powf(0.5 * (xm1 + 0.5));
    Ok((2.0 * PI).sqrt() * half_pow * (-t).exp() * half_pow * lanczos_sum(xm1))
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "ln_gamma needs a positive argument, got {x}");
    if x < 0.5 {
        return (PI / sin_pi(x)).ln() - ln_gamma(1.0 - x);
    }
    let xm1 = x - 1.0;
    let t = xm1 + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (xm1 + 0.5) * t.ln() - t + lanczos_sum(xm1).ln()
}

/// Leading factor `(x/2)^ν / Γ(ν+1)` shared by the `J` and `I` series.
fn bessel_leading(order: f64, x: f64) -> f64 {
    (order * (0.5 * x).ln() - ln_gamma(order + 1.0)).exp()
}

fn check_bessel_args(order: f64, x: f64) -> Result<()> {
    if !(order > -1.0) || !order.is_finite() {
        return Err(Error::domain(format!(
            "Bessel order must exceed -1, got {order}"
        )));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain(format!(
            "Bessel argument must be >= 0, got {x}"
        )));
    }
    Ok(())
}

fn bessel_at_zero(order: f64) -> f64 {
    if order == 0.0 {
        1.0
    } else if order > 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Below this argument `J_ν` is summed from its ascending series; above it
/// the series cancels too much and Miller's backward recurrence takes over.
const J_SERIES_MAX_X: f64 = 12.0;

/// Bessel function of the first kind `J_ν(x)` for `ν > -1`, `x ≥ 0`.
pub fn bessel_j(order: f64, x: f64) -> Result<f64> {
    check_bessel_args(order, x)?;
    if x == 0.0 {
        return Ok(bessel_at_zero(order));
    }
    if x <= J_SERIES_MAX_X {
        Ok(bessel_j_series(order, x).value)
    } else {
        Ok(bessel_j_miller(order, x))
    }
}

/// Ascending series `Σ (-1)^k (x/2)^(2k+ν) / (k! Γ(k+ν+1))`.
pub fn bessel_j_series(order: f64, x: f64) -> SeriesEval {
    let q = -0.25 * x * x;
    let mut term = bessel_leading(order, x);
    let mut acc = SeriesSum::default();
    let mut converged = false;
    for k in 0..MAX_SERIES_TERMS {
        if acc.push(term) {
            converged = true;
            break;
        }
        let kf = k as f64 + 1.0;
        term *= q / (kf * (kf + order));
    }
    finish(acc, converged)
}

fn finish(acc: SeriesSum, converged: bool) -> SeriesEval {
    let value = acc.value();
    let est = 4.0 * f64::EPSILON * acc.abs_sum();
    SeriesEval {
        value,
        converged,
        well_conditioned: est <= 1e-10 * value.abs(),
        terms: acc.terms(),
        abs_sum: acc.abs_sum(),
    }
}

/// Miller backward recurrence normalised by
/// `(x/2)^ν = Σ_k (ν+2k) Γ(ν+k)/k! · J_{ν+2k}(x)`.
fn bessel_j_miller(order: f64, x: f64) -> f64 {
    let mut top = (x + 60.0 + 6.0 * x.sqrt()) as usize;
    top += top % 2;
    let mut j_next = 0.0; // J_{ν+m+1}
    let mut j_cur = 1e-30; // J_{ν+m}
    let mut norm = 0.0;
    let mut m = top;
    loop {
        if m % 2 == 0 {
            let k = m / 2;
            let coeff = if k == 0 {
                (ln_gamma(order + 1.0)).exp()
            } else {
                (order + 2.0 * k as f64)
                    * (ln_gamma(order + k as f64) - ln_gamma(k as f64 + 1.0)).exp()
            };
            norm += coeff * j_cur;
        }
        if m == 0 {
            break;
        }
        let mu = order + m as f64;
        let j_prev = 2.0 * mu / x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        m -= 1;
        if j_cur.abs() > 1e200 {
            j_cur *= 1e-200;
            j_next *= 1e-200;
            norm *= 1e-200;
        }
    }
    j_cur * (order * (0.5 * x).ln()).exp() / norm
}

/// Modified Bessel function `I_ν(x)` for `ν > -1`, `x ≥ 0`, by its
/// (cancellation-free) ascending series.
pub fn bessel_i(order: f64, x: f64) -> Result<f64> {
    check_bessel_args(order, x)?;
    if x == 0.0 {
        return Ok(bessel_at_zero(order));
    }
    let q = 0.25 * x * x;
    let mut term = bessel_leading(order, x);
    let mut acc = SeriesSum::default();
    let mut converged = false;
    for k in 0..MAX_SERIES_TERMS {
        if acc.push(term) {
            converged = true;
            break;
        }
        let kf = k as f64 + 1.0;
        term *= q / (kf * (kf + order));
    }
    if !converged {
        return Err(Error::Numeric {
            what: "bessel_i series",
            achieved: term.abs(),
            requested: TERM_RTOL * acc.value().abs(),
        });
    }
    Ok(acc.value())
}

/// Density at `x > 0` of `B_1` for the Bessel process of index `ν > -1`
/// started at 0: `x^(2ν+1) e^(-x²/2) / (2^ν Γ(ν+1))`.
pub fn bessel_marginal_density(index: f64, x: f64) -> Result<f64> {
    if !(index > -1.0) {
        return Err(Error::domain(format!(
            "Bessel index must exceed -1, got {index}"
        )));
    }
    if !(x > 0.0) {
        return Err(Error::domain(format!(
            "marginal density needs x > 0, got {x}"
        )));
    }
    let ln = (2.0 * index + 1.0) * x.ln()
        - 0.5 * x * x
        - index * std::f64::consts::LN_2
        - ln_gamma(index + 1.0);
    Ok(ln.exp())
}
