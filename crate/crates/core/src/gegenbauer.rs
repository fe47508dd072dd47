//! Gegenbauer polynomials `P_n^{(α)}` normalised by `P_n(1) = 1`.
//!
//! The polynomials obey `x P_n = a_n P_{n-1} + c_n P_{n+1}` with
//! `a_n = n/(2n+2α+1)` and `c_n = (n+2α+1)/(2n+2α+1)`, and `x P_0 = P_1`.
//! Linearization coefficients are obtained by running the same recurrence
//! on the tridiagonal multiplication-by-`x` operator `J` acting on
//! coefficient vectors: `P_m P_n = Σ_k (P_m(J) e_n)_k P_k`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::GaussRule;
use crate::specfun::{gamma, ln_gamma};

/// Index `α ≥ -1/2` of the Gegenbauer hypergroup together with `λ = α + 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HypergroupIndex {
    alpha: f64,
    lambda: f64,
}

impl TryFrom<f64> for HypergroupIndex {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        HypergroupIndex::new(alpha)
    }
}

impl From<HypergroupIndex> for f64 {
    fn from(idx: HypergroupIndex) -> f64 {
        idx.alpha
    }
}

impl HypergroupIndex {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < -0.5 {
            return Err(Error::domain(format!(
                "hypergroup index must satisfy alpha >= -1/2, got {alpha}"
            )));
        }
        Ok(HypergroupIndex {
            alpha,
            lambda: alpha + 0.5,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `a_n`: coefficient of `P_{n-1}` in `x P_n`. Zero at `n = 0`.
    #[inline]
    pub fn down(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let nf = n as f64;
        nf / (2.0 * nf + 2.0 * self.alpha + 1.0)
    }

    /// `c_n`: coefficient of `P_{n+1}` in `x P_n`. One at `n = 0`.
    #[inline]
    pub fn up(&self, n: usize) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let nf = n as f64;
        (nf + 2.0 * self.alpha + 1.0) / (2.0 * nf + 2.0 * self.alpha + 1.0)
    }
}

fn check_unit_interval(x: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "Gegenbauer polynomials are evaluated on [-1, 1], got {x}"
        )))
    }
}

/// `P_n^{(α)}(x)` by upward three-term recurrence, `|x| ≤ 1`.
pub fn eval_poly(idx: HypergroupIndex, n: usize, x: f64) -> Result<f64> {
    check_unit_interval(x)?;
    Ok(eval_unchecked(idx, n, x))
}

fn eval_unchecked(idx: HypergroupIndex, n: usize, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let two_a1 = 2.0 * idx.alpha + 1.0;
    let (mut prev, mut cur) = (1.0, x);
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + two_a1) * x * cur - jf * prev) / (jf + two_a1);
        prev = cur;
        cur = next;
    }
    cur
}

/// `[P_0(x), …, P_{n_max}(x)]`.
pub fn eval_all(idx: HypergroupIndex, n_max: usize, x: f64) -> Result<Vec<f64>> {
    check_unit_interval(x)?;
    let two_a1 = 2.0 * idx.alpha + 1.0;
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    if n_max >= 1 {
        out.push(x);
    }
    for j in 1..n_max {
        let jf = j as f64;
        let next = ((2.0 * jf + two_a1) * x * out[j] - jf * out[j - 1]) / (jf + two_a1);
        out.push(next);
    }
    Ok(out)
}

/// Orthogonality weight `w_n^{(α)} = (∫ P_n² dπ_α)^{-1}` for
/// `dπ_α = (1 - x²)^α dx` on `[-1, 1]`.
pub fn weight(idx: HypergroupIndex, n: usize) -> f64 {
    let a = idx.alpha;
    let denom_ln = (2.0 * a + 1.0) * std::f64::consts::LN_2 + 2.0 * ln_gamma(a + 1.0);
    if n == 0 {
        if a == -0.5 {
            return 1.0 / std::f64::consts::PI;
        }
        // (2α+1) Γ(2α+1) = Γ(2α+2)
        return (ln_gamma(2.0 * a + 2.0) - denom_ln).exp();
    }
    let nf = n as f64;
    let ratio = if n < 150 {
        gamma(nf + 2.0 * a + 1.0).expect("positive argument")
            / gamma(nf + 1.0).expect("positive argument")
    } else {
        (ln_gamma(nf + 2.0 * a + 1.0) - ln_gamma(nf + 1.0)).exp()
    };
    let prefactor = (-denom_ln).exp();
    (2.0 * nf + 2.0 * a + 1.0) * ratio * prefactor
}

type RuleKey = (u64, usize);

fn rule_cache() -> &'static Mutex<HashMap<RuleKey, Arc<GaussRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Arc<GaussRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss–Gegenbauer rule for `dπ_α` sized for products of polynomials up to
/// index `max_degree` (`2·max_degree + 16` nodes). Rules are memoised.
pub fn weighted_rule(idx: HypergroupIndex, max_degree: usize) -> Result<Arc<GaussRule>> {
    let nodes = 2 * max_degree + 16;
    let key = (idx.alpha.to_bits(), nodes);
    if let Some(rule) = rule_cache().lock().expect("rule cache poisoned").get(&key) {
        return Ok(Arc::clone(rule));
    }
    let rule = Arc::new(GaussRule::gegenbauer(idx.alpha, nodes)?);
    rule_cache()
        .lock()
        .expect("rule cache poisoned")
        .insert(key, Arc::clone(&rule));
    Ok(rule)
}

/// Largest index accepted by [`orthogonality_integral`].
pub const ORTHOGONALITY_MAX_INDEX: usize = 200;

/// `∫ P_n P_m dπ_α` by Gauss–Gegenbauer quadrature; ≈ 0 for `n ≠ m` and
/// ≈ `1/w_n` for `n = m`.
pub fn orthogonality_integral(idx: HypergroupIndex, n: usize, m: usize) -> Result<f64> {
    let top = n.max(m);
    if top > ORTHOGONALITY_MAX_INDEX {
        return Err(Error::domain(format!(
            "orthogonality_integral supports indices up to {ORTHOGONALITY_MAX_INDEX}, got {top}"
        )));
    }
    let integral =
        |rule: &GaussRule| rule.apply(|x| eval_unchecked(idx, n, x) * eval_unchecked(idx, m, x));
    let main = integral(weighted_rule(idx, top)?.as_ref());
    // a larger rule must agree; otherwise the nodes are not trustworthy
    let check = integral(weighted_rule(idx, top + 4)?.as_ref());
    let achieved = (main - check).abs();
    let requested = 1e-10 * main.abs().max(1.0);
    if achieved > requested {
        return Err(Error::Numeric {
            what: "Gauss-Gegenbauer orthogonality integral",
            achieved,
            requested,
        });
    }
    Ok(main)
}

/// Coefficients of `P_m P_n = Σ_r C(m,n,r) P_{n-m+2r}` for `m ≤ n`,
/// equivalently the law `δ_m ⋆ δ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationRow {
    m: usize,
    n: usize,
    coeffs: Vec<f64>,
}

/// Negative round-off tolerated (and clamped to zero) in a linearization row.
pub const NEGATIVE_CLAMP: f64 = 1e-14;

impl LinearizationRow {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Smallest state `n - m` carrying (possibly) positive mass.
    pub fn lowest_state(&self) -> usize {
        self.n - self.m
    }

    /// `C(m, n, r)` for `r = 0..=m`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `P_k`; zero off the support lattice `n-m+2r`.
    pub fn get(&self, k: usize) -> f64 {
        let lo = self.lowest_state();
        if k < lo || (k - lo) % 2 == 1 {
            return 0.0;
        }
        self.coeffs.get((k - lo) / 2).copied().unwrap_or(0.0)
    }

    /// `(state, coefficient)` pairs in increasing state order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.lowest_state();
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(r, &c)| (lo + 2 * r, c))
    }

    pub fn sum(&self) -> f64 {
        self.coeffs.iter().sum()
    }
}

/// Applies `J` to a coefficient vector stored on the window
/// `[offset, offset + v.len())`: `(Jv)_k = a_{k+1} v_{k+1} + c_{k-1} v_{k-1}`.
fn apply_jacobi(idx: HypergroupIndex, offset: usize, v: &[f64], out: &mut [f64]) {
    let len = v.len();
    for i in 0..len {
        let k = offset + i;
        let from_above = if i + 1 < len {
            idx.down(k + 1) * v[i + 1]
        } else {
            0.0
        };
        let from_below = if i > 0 { idx.up(k - 1) * v[i - 1] } else { 0.0 };
        out[i] = from_above + from_below;
    }
}

/// Linearization coefficients of `P_m P_n` (arguments may come in either
/// order), computed as `P_min(J) e_max`.
pub fn linearization(idx: HypergroupIndex, m: usize, n: usize) -> Result<LinearizationRow> {
    let (m, n) = if m <= n { (m, n) } else { (n, m) };
    let offset = n - m;
    let width = 2 * m + 1;
    let two_a1 = 2.0 * idx.alpha + 1.0;

    let mut prev = vec![0.0; width];
    let mut cur = vec![0.0; width];
    cur[m] = 1.0;
    let mut jv = vec![0.0; width];
    for j in 0..m {
        apply_jacobi(idx, offset, &cur, &mut jv);
        if j == 0 {
            std::mem::swap(&mut prev, &mut cur);
            cur.copy_from_slice(&jv);
        } else {
            let jf = j as f64;
            let scale = 2.0 * jf + two_a1;
            let denom = jf + two_a1;
            for i in 0..width {
                prev[i] = (scale * jv[i] - jf * prev[i]) / denom;
            }
            std::mem::swap(&mut prev, &mut cur);
        }
    }

    let mut coeffs = Vec::with_capacity(m + 1);
    for r in 0..=m {
        let c = cur[2 * r];
        if c < -NEGATIVE_CLAMP {
            return Err(Error::Internal(format!(
                "linearization coefficient C(m={m}, n={n}, r={r}) = {c:e} is negative"
            )));
        }
        coeffs.push(c.max(0.0));
    }
    for r in 0..m {
        let off_lattice = cur[2 * r + 1];
        if off_lattice != 0.0 {
            return Err(Error::Internal(format!(
                "linearization of P_{m}·P_{n} leaked mass {off_lattice:e} off the parity lattice"
            )));
        }
    }
    let total: f64 = coeffs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Internal(format!(
            "linearization of P_{m}·P_{n} sums to {total}, not 1"
        )));
    }
    if total != 1.0 {
        coeffs.iter_mut().for_each(|c| *c /= total);
    }
    Ok(LinearizationRow { m, n, coeffs })
}
