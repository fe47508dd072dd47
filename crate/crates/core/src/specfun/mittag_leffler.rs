//! Mittag-Leffler function `E_α(x) = Σ (-x)^p / Γ(αp+1)` and the
//! Mittag-Leffler distribution `ℳ(α)`, whose Laplace transform it is.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;

use super::{gamma, ln_gamma, sin_pi, SeriesEval, SeriesSum, MAX_SERIES_TERMS};
use crate::error::{Error, Result};
use crate::quad;

fn check_order(order: f64) -> Result<()> {
    if order > 0.0 && order <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "Mittag-Leffler order must lie in (0, 1], got {order}"
        )))
    }
}

/// `E_α(x)` for `x ≥ 0` by its alternating series.
///
/// `order = 1` is `e^{-x}` and is returned directly. For other orders the
/// series is summed with compensation; `well_conditioned` turns false when
/// cancellation makes the relative error estimate exceed `1e-10`.
pub fn ml_function(order: f64, x: f64) -> Result<SeriesEval> {
    check_order(order)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("ml_function needs x >= 0, got {x}")));
    }
    if order == 1.0 {
        return Ok(SeriesEval {
            value: (-x).exp(),
            converged: true,
            well_conditioned: true,
            terms: 0,
            abs_sum: 1.0,
        });
    }
    if x == 0.0 {
        return Ok(SeriesEval {
            value: 1.0,
            converged: true,
            well_conditioned: true,
            terms: 1,
            abs_sum: 1.0,
        });
    }
    let lx = x.ln();
    let mut acc = SeriesSum::default();
    let mut converged = false;
    for p in 0..MAX_SERIES_TERMS {
        let pf = p as f64;
        let mag = (pf * lx - ln_gamma(pf * order + 1.0)).exp();
        let term = if p % 2 == 0 { mag } else { -mag };
        if acc.push(term) {
            converged = true;
            break;
        }
    }
    Ok(super::finish(acc, converged))
}

/// `p!/Γ(αp+1)`, the `p`-th moment of `ℳ(α)`.
pub fn ml_moment(order: f64, p: u32) -> Result<f64> {
    check_order(order)?;
    let pf = p as f64;
    if p <= 170 && order * pf < 170.0 {
        Ok(gamma(pf + 1.0)? / gamma(order * pf + 1.0)?)
    } else {
        Ok((ln_gamma(pf + 1.0) - ln_gamma(order * pf + 1.0)).exp())
    }
}

/// Density of `ℳ(α)` for `0 < α < 1`. See [`ContinuousMl::density`].
pub fn ml_density(order: f64, x: f64) -> Result<f64> {
    match MittagLefflerDist::new(order)? {
        MittagLefflerDist::PointMass => Err(Error::domain(
            "ℳ(1) is the point mass at 1 and has no density; use MittagLefflerDist::PointMass",
        )),
        MittagLefflerDist::Continuous(ml) => ml.density(x),
    }
}

/// One draw from `ℳ(α)`.
pub fn ml_sample<R: Rng + ?Sized>(order: f64, rng: &mut R) -> Result<f64> {
    Ok(MittagLefflerDist::new(order)?.sample(rng))
}

/// The Mittag-Leffler distribution `ℳ(α)`, `α ∈ (0, 1]`.
///
/// `ℳ(1)` is the point mass at 1; it is kept as its own variant so that
/// sampling and the CDF stay total.
#[derive(Debug, Clone)]
pub enum MittagLefflerDist {
    PointMass,
    Continuous(ContinuousMl),
}

impl MittagLefflerDist {
    pub fn new(order: f64) -> Result<Self> {
        check_order(order)?;
        if order == 1.0 {
            Ok(MittagLefflerDist::PointMass)
        } else {
            Ok(MittagLefflerDist::Continuous(ContinuousMl::new(order)))
        }
    }

    pub fn order(&self) -> f64 {
        match self {
            MittagLefflerDist::PointMass => 1.0,
            MittagLefflerDist::Continuous(ml) => ml.order,
        }
    }

    pub fn moment(&self, p: u32) -> f64 {
        ml_moment(self.order(), p).expect("order validated at construction")
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            MittagLefflerDist::PointMass => {
                if x < 1.0 {
                    0.0
                } else {
                    1.0
                }
            }
            MittagLefflerDist::Continuous(ml) => ml.cdf(x),
        }
    }

    /// Draws `S^{-α}` where `S` is one-sided `α`-stable with Laplace
    /// transform `e^{-s^α}`, generated by Kanter's trigonometric method.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            MittagLefflerDist::PointMass => 1.0,
            MittagLefflerDist::Continuous(ml) => ml.sample(rng),
        }
    }
}

/// Series coefficient `(-1)^{k-1} sin(πkα) Γ(kα) / (π (k-1)!)` stored as a
/// sign and a log-magnitude. Zero coefficients carry `sign == 0`.
#[derive(Debug, Clone, Copy)]
struct DensityCoeff {
    sign: f64,
    ln_mag: f64,
}

/// `ℳ(α)` for `0 < α < 1`.
#[derive(Debug, Clone)]
pub struct ContinuousMl {
    order: f64,
    coeffs: Vec<DensityCoeff>,
    cdf_table: OnceLock<MlCdfTable>,
}

/// Estimated relative cancellation error above which the density series is
/// abandoned for the integral representation.
const DENSITY_SERIES_RTOL: f64 = 1e-11;

impl ContinuousMl {
    fn new(order: f64) -> Self {
        let coeffs = (1..=MAX_SERIES_TERMS)
            .map(|k| {
                let ka = k as f64 * order;
                if (ka - ka.round()).abs() < 1e-12 {
                    return DensityCoeff {
                        sign: 0.0,
                        ln_mag: f64::NEG_INFINITY,
                    };
                }
                let s = sin_pi(ka);
                let alt = if k % 2 == 1 { 1.0 } else { -1.0 };
                DensityCoeff {
                    sign: alt * s.signum(),
                    ln_mag: s.abs().ln() + ln_gamma(ka) - ln_gamma(k as f64) - PI.ln(),
                }
            })
            .collect();
        ContinuousMl {
            order,
            coeffs,
            cdf_table: OnceLock::new(),
        }
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    /// The power series `(1/π) Σ_{k≥1} (-1)^{k-1}/(k-1)! sin(πkα) Γ(kα) x^{k-1}`.
    ///
    /// Terms with `sin(πkα) = 0` are skipped and do not count towards the
    /// truncation rule.
    pub fn density_series(&self, x: f64) -> SeriesEval {
        if x == 0.0 {
            let c = self.coeffs[0];
            let value = c.sign * c.ln_mag.exp();
            return SeriesEval {
                value,
                converged: true,
                well_conditioned: true,
                terms: 1,
                abs_sum: value.abs(),
            };
        }
        let lx = x.ln();
        let mut acc = SeriesSum::default();
        let mut converged = false;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.sign == 0.0 {
                continue;
            }
            let term = c.sign * (c.ln_mag + k as f64 * lx).exp();
            if acc.push(term) {
                converged = true;
                break;
            }
        }
        super::finish(acc, converged)
    }

    /// Density through `M = (E / A(U))^{1-α}` with `E ~ Exp(1)` and
    /// `U ~ Uniform(0, π)`:
    /// `f(x) = x^{α/(1-α)} / (π(1-α)) ∫₀^π A(u) exp(-A(u) x^{1/(1-α)}) du`.
    pub fn density_integral(&self, x: f64) -> Result<f64> {
        let a = self.order;
        let t = x.powf(1.0 / (1.0 - a));
        let integral = quad::integrate(
            |u| {
                if u <= 0.0 || u >= PI {
                    return 0.0;
                }
                let la = kanter_ln_a(a, u);
                (la - la.exp() * t).exp()
            },
            0.0,
            PI,
            0.0,
            1e-12,
        )?;
        Ok(x.powf(a / (1.0 - a)) / (PI * (1.0 - a)) * integral.value)
    }

    /// Density at `x ≥ 0`.
    ///
    /// The power series is used wherever its cancellation error estimate
    /// stays below `1e-11` relative; past that point (large `x`, or orders
    /// near 1) the integral representation takes over.
    pub fn density(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(Error::domain(format!("ml density needs x >= 0, got {x}")));
        }
        let s = self.density_series(x);
        // each term carries the rounding of exp() of an O(10²) argument
        let est = 64.0 * f64::EPSILON * s.abs_sum;
        if s.converged && est <= DENSITY_SERIES_RTOL * s.value.abs() {
            return Ok(s.value);
        }
        self.density_integral(x)
    }

    /// CDF from the cached quadrature table of the density.
    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_table().cdf(x)
    }

    pub fn cdf_table(&self) -> &MlCdfTable {
        self.cdf_table.get_or_init(|| {
            MlCdfTable::build(self).expect("density quadrature converges on (0, x_max)")
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.order;
        let u = loop {
            let v: f64 = rng.random();
            if v > 0.0 {
                break PI * v;
            }
        };
        let e = -(1.0 - rng.random::<f64>()).ln();
        let ln_a = kanter_ln_a(a, u);
        ((1.0 - a) * (e.ln() - ln_a)).exp()
    }
}

/// `ln A(u)` with
/// `A(u) = sin(αu)^{α/(1-α)} sin((1-α)u) / sin(u)^{1/(1-α)}`.
fn kanter_ln_a(a: f64, u: f64) -> f64 {
    let b = 1.0 - a;
    (a / b) * (a * u).sin().ln() + (b * u).sin().ln() - u.sin().ln() / b
}

/// Tabulated CDF of `ℳ(α)`: panel integrals of the density on a uniform grid
/// with cubic Hermite interpolation inside each panel (the density supplies
/// the slopes).
#[derive(Debug, Clone)]
pub struct MlCdfTable {
    step: f64,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
}

const CDF_STEP: f64 = 0.01;
const CDF_X_CAP: f64 = 400.0;

impl MlCdfTable {
    fn build(ml: &ContinuousMl) -> Result<Self> {
        let step = CDF_STEP;
        let mut cdf = vec![0.0];
        let mut pdf = vec![ml.density(0.0)?];
        let mut acc = 0.0;
        let mut k = 0usize;
        loop {
            let a = k as f64 * step;
            let b = a + step;
            let err = RefCell::new(None);
            let (v, _) = quad::gk15(
                &|x| match ml.density(x) {
                    Ok(v) => v,
                    Err(e) => {
                        err.borrow_mut().get_or_insert(e);
                        0.0
                    }
                },
                a,
                b,
            );
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
            acc += v;
            let fb = ml.density(b)?;
            cdf.push(acc);
            pdf.push(fb);
            k += 1;
            if (b > 2.0 && fb < 1e-16) || b >= CDF_X_CAP {
                break;
            }
        }
        Ok(MlCdfTable { step, cdf, pdf })
    }

    /// Right end of the tabulated range; the CDF is taken as 1 beyond it.
    pub fn x_max(&self) -> f64 {
        (self.cdf.len() - 1) as f64 * self.step
    }

    /// Integral of the density over the tabulated range.
    pub fn total_mass(&self) -> f64 {
        *self.cdf.last().expect("table is never empty")
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let pos = x / self.step;
        let k = pos.floor() as usize;
        if k + 1 >= self.cdf.len() {
            return self.total_mass().min(1.0);
        }
        let s = pos - k as f64;
        let h = self.step;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let v = h00 * self.cdf[k]
            + h10 * h * self.pdf[k]
            + h01 * self.cdf[k + 1]
            + h11 * h * self.pdf[k + 1];
        v.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn continuous(order: f64) -> ContinuousMl {
        match MittagLefflerDist::new(order).unwrap() {
            MittagLefflerDist::Continuous(ml) => ml,
            MittagLefflerDist::PointMass => unreachable!(),
        }
    }

    /// erfc by quadrature of the Gaussian tail, independent of the ML code.
    fn erfc_quad(x: f64) -> f64 {
        let tail = quad::integrate(|t: f64| (-t * t).exp(), x, x + 12.0, 0.0, 1e-13)
            .unwrap()
            .value;
        2.0 / PI.sqrt() * tail
    }

    #[test]
    fn order_out_of_range_rejected() {
        for o in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(MittagLefflerDist::new(o).is_err());
            assert!(ml_function(o, 1.0).is_err());
        }
    }

    #[test]
    fn ml_function_examples() {
        for &a in &[0.1, 0.5, 0.9, 1.0] {
            assert_eq!(ml_function(a, 0.0).unwrap().value, 1.0);
        }
        for i in 0..=100 {
            let x = 0.1 * i as f64;
            assert!((ml_function(1.0, x).unwrap().value - (-x).exp()).abs() < 1e-12);
        }
        let v = ml_function(0.5, 1.0).unwrap();
        let expect = 1f64.exp() * erfc_quad(1.0);
        assert!((v.value - expect).abs() < 1e-12, "{} vs {expect}", v.value);
        assert!((v.value - 0.427_583_576_155_807).abs() < 1e-9);
        assert!(v.well_conditioned);
    }

    #[test]
    fn ml_function_half_matches_erfc_identity_on_grid() {
        for i in 1..=30 {
            let x = 0.1 * i as f64;
            let v = ml_function(0.5, x).unwrap().value;
            let expect = (x * x).exp() * erfc_quad(x);
            assert!((v - expect).abs() < 1e-10 * expect.max(1.0), "x={x}");
        }
    }

    #[test]
    fn ml_function_flags_cancellation() {
        let v = ml_function(0.5, 8.0).unwrap();
        assert!(!v.well_conditioned);
    }

    #[test]
    fn ml_moment_examples() {
        assert_eq!(ml_moment(0.3, 0).unwrap(), 1.0);
        assert_relative_eq!(
            ml_moment(0.5, 1).unwrap(),
            2.0 / PI.sqrt(),
            max_relative = 1e-14
        );
        for p in 0..=20 {
            assert_relative_eq!(ml_moment(1.0, p).unwrap(), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn ml_moment_times_gamma_is_factorial() {
        for i in 1..=9 {
            let a = 0.1 * i as f64;
            let mut fact = 1.0_f64;
            for p in 0..=20u32 {
                if p > 0 {
                    fact *= p as f64;
                }
                let lhs = ml_moment(a, p).unwrap() * gamma(a * p as f64 + 1.0).unwrap();
                assert_relative_eq!(lhs, fact, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn density_half_is_half_gaussian() {
        for &x in &[0.1, 1.0, 2.0] {
            let d = ml_density(0.5, x).unwrap();
            let expect = (-x * x / 4.0).exp() / PI.sqrt();
            assert!((d - expect).abs() < 1e-8, "x={x}: {d} vs {expect}");
        }
        assert!((ml_density(0.5, 1.0).unwrap() - 0.439_391_289_467_722).abs() < 1e-9);
        for i in 0..=1600 {
            let x = 0.01 * i as f64;
            let d = ml_density(0.5, x).unwrap();
            let expect = (-x * x / 4.0).exp() / PI.sqrt();
            assert!(
                (d - expect).abs() < 1e-8 * expect.max(1e-3),
                "x={x}: {d} vs {expect}"
            );
        }
    }

    #[test]
    fn density_at_zero_is_first_coefficient() {
        for &a in &[0.2, 0.5, 0.8] {
            let expect = sin_pi(a) * gamma(a).unwrap() / PI;
            assert_relative_eq!(ml_density(a, 0.0).unwrap(), expect, max_relative = 1e-13);
        }
    }

    #[test]
    fn density_point_mass_is_domain_error() {
        assert!(matches!(ml_density(1.0, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn series_and_integral_agree_where_both_are_accurate() {
        for &a in &[0.2, 0.25, 0.5, 0.7] {
            let ml = continuous(a);
            for &x in &[0.3, 0.8, 1.5] {
                let s = ml.density_series(x).value;
                let i = ml.density_integral(x).unwrap();
                assert!((s - i).abs() < 1e-10, "α={a} x={x}: {s} vs {i}");
            }
        }
    }

    fn integral_of(a: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let ml = continuous(a);
        let x_max = ml.cdf_table().x_max();
        quad::integrate(|x| f(x, ml.density(x).unwrap()), 0.0, x_max, 1e-10, 0.0)
            .unwrap()
            .value
    }

    #[test]
    fn density_quarter_integrates_to_one() {
        let mass = integral_of(0.25, |_, d| d);
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
    }

    #[test]
    fn density_moments_match_formula() {
        for &a in &[0.25, 0.5, 0.75] {
            for p in 0..=4 {
                let m = integral_of(a, |x, d| x.powi(p) * d);
                let expect = ml_moment(a, p as u32).unwrap();
                assert!((m - expect).abs() < 1e-5, "α={a} p={p}: {m} vs {expect}");
            }
        }
    }

    #[test]
    fn ml_function_is_laplace_transform_of_density() {
        for &a in &[0.25, 0.5, 0.75] {
            for &s in &[0.5, 1.0, 2.0] {
                let lt = integral_of(a, |x, d| (-s * x).exp() * d);
                let e = ml_function(a, s).unwrap().value;
                assert!((lt - e).abs() < 1e-6, "α={a} s={s}: {lt} vs {e}");
            }
        }
    }

    #[test]
    fn cdf_table_is_consistent() {
        let ml = continuous(0.5);
        let t = ml.cdf_table();
        assert!((t.total_mass() - 1.0).abs() < 1e-9);
        // half-normal with variance 2: F(x) = erf(x/2)
        for &x in &[0.05, 0.5, 1.0, 2.345, 4.0] {
            let expect = 1.0 - erfc_quad(x / 2.0);
            assert!((ml.cdf(x) - expect).abs() < 1e-9, "x={x}");
        }
        assert_eq!(ml.cdf(-1.0), 0.0);
        assert_eq!(ml.cdf(1e6), 1.0_f64.min(t.total_mass()));
    }

    #[test]
    fn point_mass_variant_is_total() {
        let d = MittagLefflerDist::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(d.sample(&mut rng), 1.0);
        assert_eq!(d.cdf(0.999), 0.0);
        assert_eq!(d.cdf(1.0), 1.0);
        assert_eq!(d.moment(7), 1.0);
    }

    #[test]
    fn sampler_moments_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = ml_sample(0.5, &mut rng).unwrap();
            s1 += x;
            s2 += x * x;
        }
        let m1 = s1 / n as f64;
        let m2 = s2 / n as f64;
        assert!((m1 / (2.0 / PI.sqrt()) - 1.0).abs() < 0.02, "mean {m1}");
        assert!((m2 / 2.0 - 1.0).abs() < 0.03, "second moment {m2}");
    }
}
