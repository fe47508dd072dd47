//! Desk-scale checks of the limit theorems for the walk.
//!
//! Each check compares exact n-step probabilities or Monte Carlo local
//! times against the predicted asymptote and returns a [`VerifyReport`].
//! Predictions are computed from closed forms only, never fitted. A
//! report's verdict is recomputed from its rows and [`TolerancePolicy`], so
//! a saved report can be re-judged under a different policy.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gegenbauer::{weight, HypergroupIndex};
use crate::hypergroup::{
    drift_constant, n_step_snapshots, GegenbauerKernel, SparseMeasure, TransitionOperator,
};
use crate::io::{format_number, NumberFormat};
use crate::quad;
use crate::specfun::{bessel_i, bessel_marginal_density, gamma, ln_gamma, MittagLefflerDist};
use crate::walk_sim::{local_time_counts, sample_moments, LocalTimeSamples, Scaling, WalkConfig};

/// Which limit statement a report exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremId {
    /// `p^(n)(x,y) ~ w_y Γ(α+1) / (2 (Cn)^{α+1})` for aperiodic μ.
    AperiodicLlt,
    /// `p^(n)(x,y) ~ w_y 2^{α+1} Γ(α+1) n^{-(α+1)}` on the right parity for μ = δ₁.
    PeriodicLlt,
    /// Space-scaled asymptotics with Bessel-process densities.
    SpaceScaledLlt,
    /// Limit laws of the local time `N_n(y)`.
    LocalTimeLimit,
}

/// Limit law of the scaled local time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "law")]
pub enum LimitLaw {
    /// `scale · ℳ(order)`.
    MittagLeffler { order: f64, scale: f64 },
    /// Exponential distribution with the given mean.
    Exponential { mean: f64 },
}

impl LimitLaw {
    pub fn moment(&self, p: u32) -> Result<f64> {
        match *self {
            LimitLaw::MittagLeffler { order, scale } => {
                Ok(scale.powi(p as i32) * crate::specfun::ml_moment(order, p)?)
            }
            LimitLaw::Exponential { mean } => Ok(gamma(p as f64 + 1.0)? * mean.powi(p as i32)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Params {
    pub alpha: f64,
    pub mu: BTreeMap<usize, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub x_real: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub n_list: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub drift_constant: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitLaw>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RowKind {
    /// Ratio to the asymptote; the largest `n` of each series is judged.
    Asymptote,
    /// The observed probability must be exactly zero.
    ExactZero,
    /// Empirical moment of the given order against the limit moment.
    Moment { order: u32 },
    /// Kolmogorov–Smirnov distance (predicted value is 0).
    Ks,
    /// Two computations of the same quantity.
    Identity,
    /// Reported, never judged.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub series: String,
    pub n: usize,
    pub observed: f64,
    pub predicted: f64,
    /// `observed / predicted`; absent when the prediction is zero.
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std_error: Option<f64>,
    #[serde(flatten)]
    pub kind: RowKind,
}

impl ReportRow {
    pub fn new(
        series: impl Into<String>,
        n: usize,
        observed: f64,
        predicted: f64,
        kind: RowKind,
    ) -> Self {
        let ratio = (predicted != 0.0).then(|| observed / predicted);
        ReportRow {
            series: series.into(),
            n,
            observed,
            predicted,
            ratio,
            std_error: None,
            kind,
        }
    }

    fn with_std_error(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }
}

/// Windows used to turn rows into a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    /// Accepted `[low, high]` ratio at the largest `n` of each series.
    pub ratio_window: [f64; 2],
    /// Fixed relative window for moments; when absent the window is
    /// `moment_se_multiplier · SE + moment_floor · |predicted|`.
    pub moment_rel_tol: Option<f64>,
    pub moment_se_multiplier: f64,
    pub moment_floor: f64,
    /// Moments of order above this are reported but not judged.
    pub moments_checked: u32,
    pub ks_max: Option<f64>,
    pub identity_abs_tol: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            ratio_window: [0.95, 1.05],
            moment_rel_tol: None,
            moment_se_multiplier: 3.0,
            moment_floor: 0.02,
            moments_checked: 3,
            ks_max: Some(0.02),
            identity_abs_tol: 1e-6,
        }
    }
}

impl TolerancePolicy {
    pub fn with_ratio_window(mut self, low: f64, high: f64) -> Self {
        self.ratio_window = [low, high];
        self
    }

    pub fn with_moment_rel_tol(mut self, tol: f64) -> Self {
        self.moment_rel_tol = Some(tol);
        self
    }

    pub fn with_moments_checked(mut self, k: u32) -> Self {
        self.moments_checked = k;
        self
    }

    pub fn with_ks_max(mut self, ks: Option<f64>) -> Self {
        self.ks_max = ks;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub theorem: TheoremId,
    pub params: Params,
    pub rows: Vec<ReportRow>,
    pub tolerances: TolerancePolicy,
    pub notes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    theorem: TheoremId,
    params: Params,
    rows: Vec<ReportRow>,
    #[serde(default, skip_deserializing)]
    verdict: Option<Verdict>,
    tolerances: TolerancePolicy,
    #[serde(default)]
    notes: Vec<String>,
}

impl VerifyReport {
    fn new(theorem: TheoremId, params: Params) -> Self {
        VerifyReport {
            theorem,
            params,
            rows: Vec::new(),
            tolerances: TolerancePolicy::default(),
            notes: Vec::new(),
        }
    }

    pub fn with_policy(mut self, policy: TolerancePolicy) -> Self {
        self.tolerances = policy;
        self
    }

    /// Judges every row against the current policy.
    pub fn verdict(&self) -> Verdict {
        let pol = &self.tolerances;
        let mut failures = Vec::new();
        let mut last_asymptote: BTreeMap<&str, &ReportRow> = BTreeMap::new();
        for row in &self.rows {
            let what = format!("{} n={}", row.series, row.n);
            match row.kind {
                RowKind::Asymptote => {
                    let slot = last_asymptote.entry(&row.series).or_insert(row);
                    if row.n >= slot.n {
                        *slot = row;
                    }
                }
                RowKind::ExactZero => {
                    if row.observed != 0.0 {
                        failures.push(format!(
                            "{what}: expected exact zero, got {:e}",
                            row.observed
                        ));
                    }
                }
                RowKind::Moment { order } if order <= pol.moments_checked => {
                    let tol = match pol.moment_rel_tol {
                        Some(rel) => rel * row.predicted.abs(),
                        None => {
                            pol.moment_se_multiplier * row.std_error.unwrap_or(0.0)
                                + pol.moment_floor * row.predicted.abs()
                        }
                    };
                    if !((row.observed - row.predicted).abs() <= tol) {
                        failures.push(format!(
                            "{what}: moment {order} is {}, predicted {} (window ±{tol:.3e})",
                            row.observed, row.predicted
                        ));
                    }
                }
                RowKind::Moment { .. } | RowKind::Info => {}
                RowKind::Ks => {
                    if let Some(max) = pol.ks_max {
                        if !(row.observed <= max) {
                            failures.push(format!(
                                "{what}: KS distance {} exceeds {max}",
                                row.observed
                            ));
                        }
                    }
                }
                RowKind::Identity => {
                    if !((row.observed - row.predicted).abs() <= pol.identity_abs_tol) {
                        failures.push(format!(
                            "{what}: {} differs from {} by more than {:e}",
                            row.observed, row.predicted, pol.identity_abs_tol
                        ));
                    }
                }
            }
        }
        let [lo, hi] = pol.ratio_window;
        for (series, row) in last_asymptote {
            match row.ratio {
                Some(r) if (lo..=hi).contains(&r) => {}
                other => failures.push(format!(
                    "{series} n={}: ratio {other:?} outside [{lo}, {hi}]",
                    row.n
                )),
            }
        }
        Verdict {
            pass: failures.is_empty(),
            failures,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict().pass
    }

    /// Rows of one series, in stored order.
    pub fn series(&self, name: &str) -> Vec<&ReportRow> {
        self.rows.iter().filter(|r| r.series == name).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ReportDoc {
            theorem: self.theorem,
            params: self.params.clone(),
            rows: self.rows.clone(),
            verdict: Some(self.verdict()),
            tolerances: self.tolerances.clone(),
            notes: self.notes.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Loads a report; any stored verdict is discarded and recomputed.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ReportDoc = serde_json::from_str(s)?;
        Ok(VerifyReport {
            theorem: doc.theorem,
            params: doc.params,
            rows: doc.rows,
            tolerances: doc.tolerances,
            notes: doc.notes,
        })
    }

    /// CSV with header `series,n,observed,predicted,ratio,std_error,kind`.
    pub fn write_csv<W: Write>(&self, w: W, fmt: NumberFormat) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "series",
            "n",
            "observed",
            "predicted",
            "ratio",
            "std_error",
            "kind",
        ])?;
        let opt = |v: Option<f64>| v.map(|v| format_number(v, fmt)).unwrap_or_default();
        for r in &self.rows {
            let kind = match r.kind {
                RowKind::Asymptote => "asymptote".to_string(),
                RowKind::ExactZero => "exact-zero".to_string(),
                RowKind::Moment { order } => format!("moment-{order}"),
                RowKind::Ks => "ks".to_string(),
                RowKind::Identity => "identity".to_string(),
                RowKind::Info => "info".to_string(),
            };
            out.write_record([
                r.series.clone(),
                r.n.to_string(),
                format_number(r.observed, fmt),
                format_number(r.predicted, fmt),
                opt(r.ratio),
                opt(r.std_error),
                kind,
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn base_params(idx: HypergroupIndex, mu: &SparseMeasure) -> Params {
    Params {
        alpha: idx.alpha(),
        mu: mu.iter().collect(),
        drift_constant: drift_constant(idx, mu),
        ..Params::default()
    }
}

fn require_ascending(n_list: &[usize]) -> Result<()> {
    if n_list.is_empty() {
        return Err(Error::domain("n list is empty"));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("n list must be strictly increasing"));
    }
    if n_list[0] == 0 {
        return Err(Error::domain("asymptotic checks need n ≥ 1"));
    }
    Ok(())
}

fn aperiodic_kernel(idx: HypergroupIndex, mu: &SparseMeasure) -> Result<GegenbauerKernel> {
    let kernel = GegenbauerKernel::new(idx, mu.clone())?;
    if !kernel.is_aperiodic() {
        return Err(Error::precondition(
            "the support of mu lies in the even integers, so the walk is periodic; \
             the aperiodic local limit theorem does not apply (use the periodic check, \
             which requires mu = δ₁)",
        ));
    }
    Ok(kernel)
}

/// Checks `p^(n)(x,y) ~ w_y Γ(α+1) / (2 (Cn)^{α+1})` for aperiodic μ.
pub fn check_llt_aperiodic(
    idx: HypergroupIndex,
    mu: &SparseMeasure,
    x: usize,
    y: usize,
    n_list: &[usize],
) -> Result<VerifyReport> {
    require_ascending(n_list)?;
    let kernel = aperiodic_kernel(idx, mu)?;
    let a = idx.alpha();
    let c = drift_constant(idx, mu);
    let lead = weight(idx, y) * gamma(a + 1.0)? / 2.0;
    let laws = n_step_snapshots(&kernel, x, n_list)?;
    let mut report = VerifyReport::new(
        TheoremId::AperiodicLlt,
        Params {
            x: Some(x),
            y: Some(y),
            n_list: n_list.to_vec(),
            ..base_params(idx, mu)
        },
    );
    for (&n, law) in n_list.iter().zip(&laws) {
        let predicted = lead / (c * n as f64).powf(a + 1.0);
        report.rows.push(ReportRow::new(
            "p_n(x,y)",
            n,
            law.get(y),
            predicted,
            RowKind::Asymptote,
        ));
    }
    report.notes.push(monotonicity_note(&report.rows));
    Ok(report)
}

fn monotonicity_note(rows: &[ReportRow]) -> String {
    let gaps: Vec<f64> = rows
        .iter()
        .rev()
        .take(4)
        .filter_map(|r| r.ratio.map(|q| (q - 1.0).abs()))
        .collect();
    if gaps.len() == 4 && gaps.windows(2).all(|w| w[0] <= w[1]) {
        "ratios approach 1 monotonically over the last four n".to_string()
    } else {
        "ratios are not monotone toward 1 over the last four n".to_string()
    }
}

/// Checks the nearest-neighbour walk μ = δ₁: on the parity class
/// `n + x + y` even, `p^(n)(x,y) ~ w_y 2^{α+1} Γ(α+1) n^{-(α+1)}`; on the
/// other class the probability must be exactly zero.
pub fn check_llt_periodic(
    idx: HypergroupIndex,
    mu: &SparseMeasure,
    x: usize,
    y: usize,
    n_list: &[usize],
) -> Result<VerifyReport> {
    require_ascending(n_list)?;
    if *mu != SparseMeasure::dirac(1) {
        return Err(Error::precondition(
            "the periodic local limit theorem is stated for mu = δ₁ only",
        ));
    }
    let kernel = GegenbauerKernel::new(idx, mu.clone())?;
    let a = idx.alpha();
    let lead = weight(idx, y) * (a + 1.0).exp2() * gamma(a + 1.0)?;
    let laws = n_step_snapshots(&kernel, x, n_list)?;
    let mut report = VerifyReport::new(
        TheoremId::PeriodicLlt,
        Params {
            x: Some(x),
            y: Some(y),
            n_list: n_list.to_vec(),
            ..base_params(idx, mu)
        },
    );
    for (&n, law) in n_list.iter().zip(&laws) {
        let p = law.get(y);
        if (n + x + y) % 2 == 0 {
            let predicted = lead * (n as f64).powf(-(a + 1.0));
            report.rows.push(ReportRow::new(
                "even parity",
                n,
                p,
                predicted,
                RowKind::Asymptote,
            ));
        } else {
            report
                .rows
                .push(ReportRow::new("odd parity", n, p, 0.0, RowKind::ExactZero));
        }
    }
    let even: Vec<ReportRow> = report.series("even parity").into_iter().cloned().collect();
    if even.len() >= 4 {
        report.notes.push(monotonicity_note(&even));
    }
    Ok(report)
}

/// Limit density of `√n p^(n)(0, ⌊x√n⌋)`:
/// `x^{2α+1} e^{-x²/4C} / (2^{2α+1} C^{α+1} Γ(α+1))`.
pub fn from_origin_density(idx: HypergroupIndex, c: f64, x: f64) -> f64 {
    let a = idx.alpha();
    if x <= 0.0 {
        return if a == -0.5 {
            1.0 / (c.sqrt() * std::f64::consts::PI.sqrt())
        } else {
            0.0
        };
    }
    let ln = (2.0 * a + 1.0) * x.ln()
        - x * x / (4.0 * c)
        - (2.0 * a + 1.0) * LN_2
        - (a + 1.0) * c.ln()
        - ln_gamma(a + 1.0);
    ln.exp()
}

/// Limit of `√n p^(n)(⌊x√n⌋, ⌊x√n⌋)`: `(x/2C) e^{-x²/2C} I_α(x²/2C)`.
pub fn diagonal_density(idx: HypergroupIndex, c: f64, x: f64) -> Result<f64> {
    let z = x * x / (2.0 * c);
    Ok(x / (2.0 * c) * (-z).exp() * bessel_i(idx.alpha(), z)?)
}

/// Checks both space-scaled asymptotics at each `x` in `x_values`, plus two
/// identities for the from-origin density: it equals the density of
/// `√(2C) B₁` for the Bessel process `B` started at 0, and it integrates to 1.
pub fn check_space_scaled_llt(
    idx: HypergroupIndex,
    mu: &SparseMeasure,
    x_values: &[f64],
    n_list: &[usize],
) -> Result<VerifyReport> {
    require_ascending(n_list)?;
    if x_values.is_empty() || x_values.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::domain("space points must be positive and finite"));
    }
    let kernel = aperiodic_kernel(idx, mu)?;
    let c = drift_constant(idx, mu);
    let a = idx.alpha();
    let mut report = VerifyReport::new(
        TheoremId::SpaceScaledLlt,
        Params {
            x_real: x_values.to_vec(),
            n_list: n_list.to_vec(),
            ..base_params(idx, mu)
        },
    );
    let from_origin = n_step_snapshots(&kernel, 0, n_list)?;
    for &x in x_values {
        let label = format_number(x, NumberFormat::Short);
        let dens = from_origin_density(idx, c, x);
        for (&n, law) in n_list.iter().zip(&from_origin) {
            let rn = (n as f64).sqrt();
            let k = (x * rn).floor() as usize;
            report.rows.push(ReportRow::new(
                format!("from-origin x={label}"),
                n,
                rn * law.get(k),
                dens,
                RowKind::Asymptote,
            ));
        }
        let diag = diagonal_density(idx, c, x)?;
        for &n in n_list {
            let rn = (n as f64).sqrt();
            let k = (x * rn).floor() as usize;
            let law = crate::hypergroup::n_step(&kernel, k, n)?;
            report.rows.push(ReportRow::new(
                format!("diagonal x={label}"),
                n,
                rn * law.get(k),
                diag,
                RowKind::Asymptote,
            ));
        }
        let s = (2.0 * c).sqrt();
        let marginal = bessel_marginal_density(a, x / s)? / s;
        report.rows.push(ReportRow::new(
            format!("bessel-marginal x={label}"),
            0,
            dens,
            marginal,
            RowKind::Identity,
        ));
    }
    let mass = from_origin_mass(idx, c)?;
    report.rows.push(ReportRow::new(
        "from-origin density mass",
        0,
        mass,
        1.0,
        RowKind::Identity,
    ));
    Ok(report)
}

/// `∫₀^∞` of [`from_origin_density`], by adaptive quadrature.
pub fn from_origin_mass(idx: HypergroupIndex, c: f64) -> Result<f64> {
    let f = |x: f64| from_origin_density(idx, c, x);
    // the Gaussian factor is below e^{-200} past this point
    let top = (800.0 * c).sqrt();
    let split = (4.0 * c).sqrt();
    let head = quad::integrate(f, 0.0, split, 1e-12, 0.0)?;
    let tail = quad::integrate(f, split, top, 1e-12, 0.0)?;
    Ok(head.value + tail.value)
}

/// Limit law of `N_n(y)` (scaled as in [`Scaling::for_index`]) for
/// `α ∈ [-1/2, 0]`.
///
/// For μ = δ₁ the constant is `(2y+2α+1) Γ(y+2α+1) Γ(|α|) /
/// (2^{α+1} Γ(y+1) Γ(α+1))` with `0 · Γ(0) = 1`, and the law at `α = 0` is
/// exponential with mean `(2y+1)/2`. Otherwise the constant is
/// `w_y Γ(α+1) Γ(|α|) / (2 C^{α+1})` and the mean at `α = 0` is `(2y+1)/(4C)`.
pub fn local_time_limit_law(
    idx: HypergroupIndex,
    mu: &SparseMeasure,
    y: usize,
) -> Result<LimitLaw> {
    let a = idx.alpha();
    if a > 0.0 {
        return Err(Error::precondition(
            "the walk is transient for α > 0, so local times stay bounded and have no scaling limit",
        ));
    }
    let kernel = GegenbauerKernel::new(idx, mu.clone())?;
    let yf = y as f64;
    if kernel.is_nearest_neighbour() {
        if a == 0.0 {
            return Ok(LimitLaw::Exponential {
                mean: (2.0 * yf + 1.0) / 2.0,
            });
        }
        let head = if y == 0 && a == -0.5 {
            1.0
        } else {
            (2.0 * yf + 2.0 * a + 1.0) * gamma(yf + 2.0 * a + 1.0)?
        };
        let scale = head * gamma(-a)? / ((a + 1.0).exp2() * gamma(yf + 1.0)? * gamma(a + 1.0)?);
        return Ok(LimitLaw::MittagLeffler { order: -a, scale });
    }
    if !kernel.is_aperiodic() {
        return Err(Error::precondition(
            "the support of mu lies in the even integers; the local-time limit needs an aperiodic mu",
        ));
    }
    let c = drift_constant(idx, mu);
    if a == 0.0 {
        return Ok(LimitLaw::Exponential {
            mean: (2.0 * yf + 1.0) / (4.0 * c),
        });
    }
    let scale = weight(idx, y) * gamma(a + 1.0)? * gamma(-a)? / (2.0 * c.powf(a + 1.0));
    Ok(LimitLaw::MittagLeffler { order: -a, scale })
}

/// Largest horizon for which [`exact_local_time_moments`] is attached to
/// local-time reports.
pub const EXACT_MOMENT_MAX_N: usize = 20_000;

/// Exact `E_x N_n(y)` and `E_x N_n(y)²`.
///
/// With `a_k = p^(k)(x,y)` and `b_k = p^(k)(y,y)`, the Markov property gives
/// `E N = Σ_k a_k` and `E N² = Σ_k a_k + 2 Σ_{j<k} a_j b_{k-j}`.
pub fn exact_local_time_moments(
    kernel: &GegenbauerKernel,
    x: usize,
    y: usize,
    n: usize,
) -> Result<(f64, f64)> {
    let diagonal = |start: usize| -> Result<Vec<f64>> {
        let mut op = TransitionOperator::new(kernel);
        let mut law = vec![0.0; start + 1];
        law[start] = 1.0;
        let mut seq = Vec::with_capacity(n + 1);
        seq.push(law.get(y).copied().unwrap_or(0.0));
        for _ in 0..n {
            law = op.step(&law)?;
            seq.push(law.get(y).copied().unwrap_or(0.0));
        }
        Ok(seq)
    };
    let a = diagonal(x)?;
    let b = if x == y { a.clone() } else { diagonal(y)? };
    let first: f64 = a.iter().sum();
    // Σ_{j<k≤n} a_j b_{k-j} = Σ_j a_j B_{n-j} with B_m = Σ_{1≤d≤m} b_d
    let mut cum_b = vec![0.0; n + 1];
    for d in 1..=n {
        cum_b[d] = cum_b[d - 1] + b[d];
    }
    let cross: f64 = a.iter().enumerate().map(|(j, aj)| aj * cum_b[n - j]).sum();
    Ok((first, first + 2.0 * cross))
}

/// Simulates `replicas` walks from `x` for `horizon` steps and compares the
/// scaled local time at `y` with its limit law: three moments and the
/// Kolmogorov–Smirnov distance. For horizons up to [`EXACT_MOMENT_MAX_N`]
/// the exact finite-n moments are attached as information rows, which
/// separates Monte Carlo error from the distance to the limit.
pub fn check_local_time_limit(
    idx: HypergroupIndex,
    mu: &SparseMeasure,
    x: usize,
    y: usize,
    horizon: usize,
    replicas: usize,
    seed: u64,
) -> Result<(VerifyReport, LocalTimeSamples)> {
    let law = local_time_limit_law(idx, mu, y)?;
    if horizon < 2 {
        return Err(Error::domain("horizon must be at least 2"));
    }
    let cfg = WalkConfig::new(idx, mu.clone(), x, horizon, replicas, vec![y], seed)?;
    let samples = local_time_counts(&cfg)?;
    let scaled = samples.scaled(y, Scaling::for_index(idx))?;
    let mut report = VerifyReport::new(
        TheoremId::LocalTimeLimit,
        Params {
            x: Some(x),
            y: Some(y),
            n_list: vec![horizon],
            replicas: Some(replicas),
            seed: Some(seed),
            limit: Some(law),
            ..base_params(idx, mu)
        },
    );
    for m in sample_moments(&scaled, 3) {
        report.rows.push(
            ReportRow::new(
                "moments",
                horizon,
                m.value,
                law.moment(m.order)?,
                RowKind::Moment { order: m.order },
            )
            .with_std_error(m.std_error),
        );
    }
    let ks = match law {
        LimitLaw::Exponential { mean } => {
            ks_statistic(
                &scaled,
                |t| {
                    if t <= 0.0 {
                        0.0
                    } else {
                        -(-t / mean).exp_m1()
                    }
                },
            )?
        }
        LimitLaw::MittagLeffler { order, scale } => {
            let ml = MittagLefflerDist::new(order)?;
            ks_statistic(&scaled, |t| if t <= 0.0 { 0.0 } else { ml.cdf(t / scale) })?
        }
    };
    report
        .rows
        .push(ReportRow::new("ks", horizon, ks, 0.0, RowKind::Ks));
    let mean_raw = samples
        .counts_for(y)?
        .iter()
        .map(|&c| c as f64)
        .sum::<f64>()
        / replicas as f64;
    report.rows.push(ReportRow::new(
        "mean visits",
        horizon,
        mean_raw,
        0.0,
        RowKind::Info,
    ));
    if horizon <= EXACT_MOMENT_MAX_N {
        let kernel = GegenbauerKernel::new(idx, mu.clone())?;
        let (m1, m2) = exact_local_time_moments(&kernel, x, y, horizon)?;
        let d = Scaling::for_index(idx).divisor(horizon);
        let moments = &report.rows[..2];
        let (e1, e2) = (moments[0].observed, moments[1].observed);
        report.rows.push(ReportRow::new(
            "exact finite-n moments",
            horizon,
            e1,
            m1 / d,
            RowKind::Info,
        ));
        report.rows.push(ReportRow::new(
            "exact finite-n moments",
            horizon,
            e2,
            m2 / (d * d),
            RowKind::Info,
        ));
    }
    Ok((report, samples))
}

/// Minimum sample size accepted by [`ks_statistic`].
pub const KS_MIN_SAMPLES: usize = 100;

/// `sup_t |F_n(t) - F(t)|` for the empirical CDF `F_n` of `samples`.
///
/// Ties are handled exactly: at each distinct value `v` both `F_n(v)` against
/// `F(v)` and `F_n(v-)` against `F(v-)` are compared, so lattice-valued data
/// and step CDFs are measured correctly.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::domain(format!(
            "KS statistic needs at least {KS_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|s| s.is_nan()) {
        return Err(Error::domain("samples contain NaN"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let below = i as f64 / n;
        let upto = j as f64 / n;
        d = d
            .max((upto - cdf(v)).abs())
            .max((below - cdf(v.next_down())).abs());
        i = j;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::ml_moment;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn idx(a: f64) -> HypergroupIndex {
        HypergroupIndex::new(a).unwrap()
    }

    fn pair() -> SparseMeasure {
        SparseMeasure::from_pairs([(1, 0.5), (2, 0.5)]).unwrap()
    }

    fn row(series: &str, n: usize, obs: f64, pred: f64, kind: RowKind) -> ReportRow {
        ReportRow::new(series, n, obs, pred, kind)
    }

    #[test]
    fn ks_step_cdf_and_ties() {
        let s = vec![2.5; 200];
        let d = ks_statistic(&s, |t| if t >= 2.5 { 1.0 } else { 0.0 }).unwrap();
        assert!(d <= 1.0 / 200.0);
        assert!(ks_statistic(&s[..50], |_| 0.5).is_err());
        let u: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&u, |t| t.clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.0005).abs() < 1e-12);
    }

    #[test]
    fn ks_sampler_self_test_and_negative_control() {
        let ml = MittagLefflerDist::new(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<f64> = (0..100_000).map(|_| ml.sample(&mut rng)).collect();
        assert!(ks_statistic(&draws, |t| ml.cdf(t)).unwrap() <= 0.01);
        let wrong =
            ks_statistic(&draws, |t| if t <= 0.0 { 0.0 } else { 1.0 - (-t).exp() }).unwrap();
        assert!(wrong >= 0.1);
    }

    #[test]
    fn verdict_rules() {
        let mut r = VerifyReport::new(TheoremId::AperiodicLlt, Params::default());
        r.rows.push(row("s", 10, 0.5, 1.0, RowKind::Asymptote));
        r.rows.push(row("s", 20, 1.01, 1.0, RowKind::Asymptote));
        assert!(r.passed());
        r.rows.push(row("z", 3, 0.0, 0.0, RowKind::ExactZero));
        r.rows.push(row("i", 0, 1.0 + 1e-7, 1.0, RowKind::Identity));
        r.rows.push(row("info", 0, 7.0, 0.0, RowKind::Info));
        assert!(r.passed());
        r.rows.push(row("z", 5, 1e-300, 0.0, RowKind::ExactZero));
        assert!(!r.passed());
        r.rows.pop();
        r.rows.push(row("k", 5, 0.03, 0.0, RowKind::Ks));
        assert!(!r.passed());
        r.tolerances.ks_max = Some(0.05);
        assert!(r.passed());
        r.rows.push(row("s", 30, 1.2, 1.0, RowKind::Asymptote));
        assert_eq!(r.verdict().failures.len(), 1);
        r.tolerances.ratio_window = [0.5, 1.5];
        assert!(r.passed());
    }

    #[test]
    fn moment_windows() {
        let mut r = VerifyReport::new(TheoremId::LocalTimeLimit, Params::default());
        r.rows
            .push(row("m", 1, 1.04, 1.0, RowKind::Moment { order: 1 }).with_std_error(0.005));
        // 3·0.005 + 0.02 = 0.035 < 0.04
        assert!(!r.passed());
        r.tolerances.moment_rel_tol = Some(0.05);
        assert!(r.passed());
        r.rows
            .push(row("m", 1, 2.0, 1.0, RowKind::Moment { order: 3 }));
        assert!(!r.passed());
        r.tolerances.moments_checked = 2;
        assert!(r.passed());
    }

    #[test]
    fn json_round_trip_recomputes_verdict() {
        let mut r = VerifyReport::new(
            TheoremId::PeriodicLlt,
            base_params(idx(-0.5), &SparseMeasure::dirac(1)),
        );
        r.rows
            .push(row("even parity", 100, 0.08, 0.0797, RowKind::Asymptote));
        r.rows
            .push(row("odd parity", 101, 0.0, 0.0, RowKind::ExactZero));
        let json = r.to_json().unwrap();
        assert!(json.contains("\"verdict\""));
        let back = VerifyReport::from_json(&json).unwrap();
        assert_eq!(back, r);
        let strict = json.replace("1.05", "1.001");
        let back = VerifyReport::from_json(&strict).unwrap();
        assert!(r.passed());
        assert!(!back.passed());
    }

    #[test]
    fn csv_layout() {
        let mut r = VerifyReport::new(TheoremId::PeriodicLlt, Params::default());
        r.rows
            .push(row("odd parity", 3, 0.0, 0.0, RowKind::ExactZero));
        r.rows
            .push(row("m", 5, 0.5, 0.25, RowKind::Moment { order: 2 }).with_std_error(0.125));
        let mut buf = Vec::new();
        r.write_csv(&mut buf, NumberFormat::Short).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "series,n,observed,predicted,ratio,std_error,kind\nodd parity,3,0,0,,,exact-zero\nm,5,0.5,0.25,2,0.125,moment-2\n"
        );
    }

    #[test]
    fn periodic_measure_is_rejected_by_aperiodic_check() {
        let even = SparseMeasure::from_pairs([(0, 0.5), (2, 0.5)]).unwrap();
        assert!(matches!(
            check_llt_aperiodic(idx(0.0), &even, 0, 0, &[4, 8]),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            check_llt_periodic(idx(0.0), &pair(), 0, 0, &[4, 8]),
            Err(Error::Precondition(_))
        ));
        assert!(check_llt_aperiodic(idx(0.0), &pair(), 0, 0, &[8, 4]).is_err());
    }

    #[test]
    fn periodic_check_small_case() {
        let r = check_llt_periodic(idx(-0.5), &SparseMeasure::dirac(1), 0, 1, &[1, 2, 3, 4, 5])
            .unwrap();
        let odd: Vec<_> = r.series("odd parity");
        assert_eq!(odd.len(), 2);
        assert!(odd.iter().all(|r| r.observed == 0.0));
        let even = r.series("even parity");
        // w_1 = 2/π at α = -1/2; asymptote (2/π)·√2·√π / √n
        let lead = 2.0 / std::f64::consts::PI * 2f64.sqrt() * std::f64::consts::PI.sqrt();
        assert!((even[0].predicted - lead).abs() < 1e-14);
        assert_eq!(even[0].observed, 1.0);
    }

    #[test]
    fn aperiodic_report_rows() {
        let r = check_llt_aperiodic(idx(-0.25), &pair(), 0, 0, &[16, 64, 256]).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.params.drift_constant, 13.0 / 12.0);
        for w in r.rows.windows(2) {
            assert!((w[1].ratio.unwrap() - 1.0).abs() < (w[0].ratio.unwrap() - 1.0).abs());
        }
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn from_origin_density_is_a_probability_density() {
        for &(a, c) in &[(-0.25, 13.0 / 12.0), (-0.5, 0.5), (0.0, 0.7), (1.5, 2.0)] {
            let m = from_origin_mass(idx(a), c).unwrap();
            assert!((m - 1.0).abs() < 1e-9, "α={a}: {m}");
        }
    }

    #[test]
    fn diagonal_and_origin_densities_agree_near_zero() {
        // I_α(z) ~ (z/2)^α / Γ(α+1), so the diagonal density tends to the
        // origin density as x → 0
        let i = idx(0.5);
        let c = 0.8;
        let x = 1e-4;
        let d = diagonal_density(i, c, x).unwrap();
        let o = from_origin_density(i, c, x);
        assert!((d / o - 1.0).abs() < 1e-6);
    }

    #[test]
    fn limit_law_constants() {
        let d1 = SparseMeasure::dirac(1);
        let law = local_time_limit_law(idx(-0.5), &d1, 0).unwrap();
        match law {
            LimitLaw::MittagLeffler { order, scale } => {
                assert_eq!(order, 0.5);
                assert!((scale - 0.5f64.sqrt()).abs() < 1e-15);
            }
            _ => panic!(),
        }
        let mean = law.moment(1).unwrap();
        assert!((mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
        assert!((law.moment(2).unwrap() - 1.0).abs() < 1e-14);
        match local_time_limit_law(idx(-0.5), &d1, 2).unwrap() {
            LimitLaw::MittagLeffler { scale, .. } => assert!((scale - 2f64.sqrt()).abs() < 1e-14),
            _ => panic!(),
        }
        assert_eq!(
            local_time_limit_law(idx(0.0), &d1, 0).unwrap(),
            LimitLaw::Exponential { mean: 0.5 }
        );
        assert!(matches!(
            local_time_limit_law(idx(0.2), &d1, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn nearest_neighbour_constant_matches_general_formula() {
        let d1 = SparseMeasure::dirac(1);
        for &a in &[-0.45, -0.25, -0.1] {
            let i = idx(a);
            for y in 0..5 {
                let special = local_time_limit_law(i, &d1, y).unwrap();
                let scale = weight(i, y) * gamma(a + 1.0).unwrap() * gamma(-a).unwrap()
                    / (2.0 * 0.5f64.powf(a + 1.0));
                match special {
                    LimitLaw::MittagLeffler { scale: s, .. } => {
                        assert!((s / scale - 1.0).abs() < 1e-12, "α={a} y={y}")
                    }
                    _ => panic!(),
                }
            }
        }
        // at α = 0 the general mean (2y+1)/(4C) with C = 1/2 is (2y+1)/2
        for y in 0..5 {
            let general = (2.0 * y as f64 + 1.0) / (4.0 * 0.5);
            assert_eq!(
                local_time_limit_law(idx(0.0), &d1, y).unwrap(),
                LimitLaw::Exponential { mean: general }
            );
        }
    }

    #[test]
    fn aperiodic_constant_example() {
        let law = local_time_limit_law(idx(-0.25), &pair(), 0).unwrap();
        let c: f64 = 13.0 / 12.0;
        let expect = weight(idx(-0.25), 0) * gamma(0.75).unwrap() * gamma(0.25).unwrap()
            / (2.0 * c.powf(0.75));
        match law {
            LimitLaw::MittagLeffler { order, scale } => {
                assert_eq!(order, 0.25);
                assert!((scale / expect - 1.0).abs() < 1e-14);
                assert!(
                    (law.moment(2).unwrap() / (expect * expect * ml_moment(0.25, 2).unwrap())
                        - 1.0)
                        .abs()
                        < 1e-13
                );
            }
            _ => panic!(),
        }
    }

    #[test]
    fn exact_moments_of_reflected_walk() {
        // reflected simple walk: p^(2m)(0,0) = C(2m,m)/4^m
        let k = GegenbauerKernel::new(idx(-0.5), SparseMeasure::dirac(1)).unwrap();
        let n = 12;
        let p: Vec<f64> = (0..=n)
            .map(|j| {
                if j % 2 == 1 {
                    return 0.0;
                }
                let m = j / 2;
                (1..=m).map(|i| (m + i) as f64 / (4.0 * i as f64)).product()
            })
            .collect();
        let m1: f64 = p.iter().sum();
        let mut m2 = m1;
        for j in 0..=n {
            for l in j + 1..=n {
                m2 += 2.0 * p[j] * p[l - j];
            }
        }
        let (e1, e2) = exact_local_time_moments(&k, 0, 0, n).unwrap();
        assert!((e1 - m1).abs() < 1e-14);
        assert!((e2 - m2).abs() < 1e-13);
    }

    #[test]
    fn exact_moments_match_path_enumeration() {
        // brute force over all paths of a three-point step law
        let mu = SparseMeasure::from_pairs([(0, 0.2), (1, 0.5), (3, 0.3)]).unwrap();
        let k = GegenbauerKernel::new(idx(-0.25), mu).unwrap();
        let (x, y, n) = (2, 1, 6);
        let mut states = vec![(x, 1.0, u32::from(x == y))];
        for _ in 0..n {
            let mut next = Vec::new();
            for (s, p, c) in states {
                for (t, q) in crate::hypergroup::kernel_row(&k, s).unwrap().iter() {
                    next.push((t, p * q, c + u32::from(t == y)));
                }
            }
            states = next;
        }
        let m1: f64 = states.iter().map(|(_, p, c)| p * *c as f64).sum();
        let m2: f64 = states.iter().map(|(_, p, c)| p * (*c as f64).powi(2)).sum();
        let (e1, e2) = exact_local_time_moments(&k, x, y, n).unwrap();
        assert!((e1 - m1).abs() < 1e-12);
        assert!((e2 - m2).abs() < 1e-12);
    }

    #[test]
    fn small_local_time_run() {
        let (r, s) =
            check_local_time_limit(idx(-0.5), &SparseMeasure::dirac(1), 0, 0, 400, 2000, 5)
                .unwrap();
        assert_eq!(s.replicas(), 2000);
        assert_eq!(r.rows.len(), 7);
        assert!(r.rows.iter().any(|row| row.kind == RowKind::Ks));
        let m1 = &r.rows[0];
        assert!((m1.observed / m1.predicted - 1.0).abs() < 0.1);
    }
}
