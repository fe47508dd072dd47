//! Probability measures on ℕ, the Gegenbauer convolution `⋆`, the random
//! walk kernel `p(x, ·) = δ_x ⋆ μ`, exact n-step laws and the generalized
//! Fourier transform.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gegenbauer::{eval_all, linearization, weight, HypergroupIndex};
use crate::quad;

/// Tolerance on the total mass of a probability measure.
pub const MASS_TOL: f64 = 1e-12;

/// Default bound on the number of states an exact computation may touch.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    /// Nonnegative masses summing to one.
    Probability,
    /// Arbitrary real masses, e.g. reconstructed by quadrature.
    Signed,
}

#[derive(Debug, Clone)]
enum Storage {
    Dense { offset: usize, masses: Vec<f64> },
    Sparse(BTreeMap<usize, f64>),
}

/// Finitely supported measure on ℕ.
///
/// Masses live in a contiguous buffer when at least a quarter of the spanned
/// states are occupied and in an ordered map otherwise; the choice is not
/// observable through the API.
#[derive(Debug, Clone)]
pub struct SparseMeasure {
    storage: Storage,
    kind: MeasureKind,
}

impl PartialEq for SparseMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.iter().eq(other.iter())
    }
}

impl SparseMeasure {
    pub fn dirac(state: usize) -> Self {
        SparseMeasure {
            storage: Storage::Dense {
                offset: state,
                masses: vec![1.0],
            },
            kind: MeasureKind::Probability,
        }
    }

    /// Probability measure from `(state, mass)` pairs; repeated states add up.
    pub fn from_pairs<I: IntoIterator<Item = (usize, f64)>>(pairs: I) -> Result<Self> {
        let map = collect_pairs(pairs)?;
        let m = Self::from_map(map, MeasureKind::Probability);
        m.check_probability()?;
        Ok(m)
    }

    /// Like [`from_pairs`](Self::from_pairs) but accepts a total within
    /// `tol` of one and rescales it to one.
    pub fn normalized_from_pairs<I: IntoIterator<Item = (usize, f64)>>(
        pairs: I,
        tol: f64,
    ) -> Result<Self> {
        let mut map = collect_pairs(pairs)?;
        let total: f64 = map.values().sum();
        if !((total - 1.0).abs() <= tol) {
            return Err(Error::domain(format!(
                "masses sum to {total}, which is not within {tol:e} of 1"
            )));
        }
        map.values_mut().for_each(|v| *v /= total);
        let m = Self::from_map(map, MeasureKind::Probability);
        m.check_probability()?;
        Ok(m)
    }

    /// Probability measure stored densely on `[offset, offset + masses.len())`.
    pub fn from_dense(offset: usize, masses: Vec<f64>) -> Result<Self> {
        if let Some(bad) = masses.iter().find(|m| !(**m >= 0.0)) {
            return Err(Error::domain(format!("negative or NaN mass {bad}")));
        }
        let m = Self::pack_dense(offset, masses, MeasureKind::Probability);
        m.check_probability()?;
        Ok(m)
    }

    /// Signed measure, e.g. the output of a Fourier inversion.
    pub fn signed_from_pairs<I: IntoIterator<Item = (usize, f64)>>(pairs: I) -> Self {
        let mut map = BTreeMap::new();
        for (s, v) in pairs {
            *map.entry(s).or_insert(0.0) += v;
        }
        Self::from_map(map, MeasureKind::Signed)
    }

    fn from_map(mut map: BTreeMap<usize, f64>, kind: MeasureKind) -> Self {
        map.retain(|_, v| *v != 0.0);
        let (lo, hi) = match (map.keys().next(), map.keys().next_back()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => {
                return SparseMeasure {
                    storage: Storage::Sparse(map),
                    kind,
                }
            }
        };
        let span = hi - lo + 1;
        if 4 * map.len() > span {
            let mut masses = vec![0.0; span];
            for (s, v) in map {
                masses[s - lo] = v;
            }
            SparseMeasure {
                storage: Storage::Dense { offset: lo, masses },
                kind,
            }
        } else {
            SparseMeasure {
                storage: Storage::Sparse(map),
                kind,
            }
        }
    }

    fn pack_dense(offset: usize, masses: Vec<f64>, kind: MeasureKind) -> Self {
        let occupied = masses.iter().filter(|m| **m != 0.0).count();
        if 4 * occupied > masses.len() {
            // trim zero ends so min/max state report the support
            let first = masses.iter().position(|m| *m != 0.0).unwrap_or(0);
            let last = masses.iter().rposition(|m| *m != 0.0).unwrap_or(0);
            let masses = masses[first..=last].to_vec();
            SparseMeasure {
                storage: Storage::Dense {
                    offset: offset + first,
                    masses,
                },
                kind,
            }
        } else {
            let map = masses
                .into_iter()
                .enumerate()
                .filter(|(_, m)| *m != 0.0)
                .map(|(i, m)| (offset + i, m))
                .collect();
            SparseMeasure {
                storage: Storage::Sparse(map),
                kind,
            }
        }
    }

    fn check_probability(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::domain("probability measure has empty support"));
        }
        let total = self.total_mass();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::domain(format!(
                "probability masses sum to {total}, not 1 within {MASS_TOL:e}"
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn is_probability(&self) -> bool {
        self.kind == MeasureKind::Probability
    }

    /// Mass at `state` (zero off the support).
    pub fn get(&self, state: usize) -> f64 {
        match &self.storage {
            Storage::Dense { offset, masses } => state
                .checked_sub(*offset)
                .and_then(|i| masses.get(i))
                .copied()
                .unwrap_or(0.0),
            Storage::Sparse(map) => map.get(&state).copied().unwrap_or(0.0),
        }
    }

    /// Nonzero `(state, mass)` pairs in increasing state order.
    pub fn iter(&self) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match &self.storage {
            Storage::Dense { offset, masses } => Box::new(
                masses
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| **m != 0.0)
                    .map(move |(i, m)| (offset + i, *m)),
            ),
            Storage::Sparse(map) => Box::new(map.iter().map(|(s, m)| (*s, *m))),
        }
    }

    pub fn support(&self) -> Vec<usize> {
        self.iter().map(|(s, _)| s).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.iter().next().is_none()
    }

    pub fn min_state(&self) -> Option<usize> {
        self.iter().next().map(|(s, _)| s)
    }

    pub fn max_state(&self) -> Option<usize> {
        match &self.storage {
            Storage::Dense { offset, masses } => {
                masses.iter().rposition(|m| *m != 0.0).map(|i| offset + i)
            }
            Storage::Sparse(map) => map.keys().next_back().copied(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.iter().map(|(_, m)| m).sum()
    }

    /// Dense copy of the masses on `[0, len)`.
    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (s, m) in self.iter() {
            if s < len {
                out[s] = m;
            }
        }
        out
    }

    /// `Σ |μ(s) − ν(s)|`.
    pub fn l1_distance(&self, other: &SparseMeasure) -> f64 {
        let mut states: Vec<usize> = self.support();
        states.extend(other.support());
        states.sort_unstable();
        states.dedup();
        states
            .into_iter()
            .map(|s| (self.get(s) - other.get(s)).abs())
            .sum()
    }

    /// Total-variation distance `½ Σ |μ(s) − ν(s)|`.
    pub fn tv_distance(&self, other: &SparseMeasure) -> f64 {
        0.5 * self.l1_distance(other)
    }
}

impl fmt::Display for SparseMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(s, m)| format!("{s}:{m}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

fn collect_pairs<I: IntoIterator<Item = (usize, f64)>>(pairs: I) -> Result<BTreeMap<usize, f64>> {
    let mut map = BTreeMap::new();
    for (s, v) in pairs {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::domain(format!("invalid mass {v} at state {s}")));
        }
        *map.entry(s).or_insert(0.0) += v;
    }
    Ok(map)
}

fn require_probability(mu: &SparseMeasure, name: &str) -> Result<()> {
    if mu.is_probability() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} must be a probability measure"
        )))
    }
}

/// `μ ⋆ ν = Σ μ(a) ν(b) δ_a ⋆ δ_b`.
///
/// Pair weights are merged per unordered pair `{a, b}` before expansion, so
/// `convolve(μ, ν)` and `convolve(ν, μ)` agree bit for bit.
pub fn convolve(
    idx: HypergroupIndex,
    mu: &SparseMeasure,
    nu: &SparseMeasure,
) -> Result<SparseMeasure> {
    require_probability(mu, "mu")?;
    require_probability(nu, "nu")?;
    let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (a, ma) in mu.iter() {
        for (b, nb) in nu.iter() {
            *pairs.entry((a.min(b), a.max(b))).or_insert(0.0) += ma * nb;
        }
    }
    let top = mu.max_state().unwrap_or(0) + nu.max_state().unwrap_or(0);
    let mut out = vec![0.0; top + 1];
    for ((lo, hi), w) in pairs {
        let row = linearization(idx, lo, hi)?;
        for (k, c) in row.iter() {
            out[k] += w * c;
        }
    }
    SparseMeasure::from_dense(0, out)
        .or_else(|_| Err(Error::Internal("convolution lost mass".into())))
}

/// Transition probabilities out of one state, stored densely from `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRow {
    pub offset: usize,
    pub masses: Vec<f64>,
}

impl KernelRow {
    pub fn to_measure(&self) -> Result<SparseMeasure> {
        SparseMeasure::from_dense(self.offset, self.masses.clone())
    }
}

/// Markov kernel `p(x, ·) = δ_x ⋆ μ` of the Gegenbauer random walk.
#[derive(Debug, Clone)]
pub struct GegenbauerKernel {
    idx: HypergroupIndex,
    step: SparseMeasure,
    aperiodic: bool,
    max_step: usize,
}

impl GegenbauerKernel {
    pub fn new(idx: HypergroupIndex, step_measure: SparseMeasure) -> Result<Self> {
        require_probability(&step_measure, "step measure")?;
        let aperiodic = step_measure.iter().any(|(s, _)| s % 2 == 1);
        let max_step = step_measure.max_state().unwrap_or(0);
        Ok(GegenbauerKernel {
            idx,
            step: step_measure,
            aperiodic,
            max_step,
        })
    }

    pub fn index(&self) -> HypergroupIndex {
        self.idx
    }

    pub fn step_measure(&self) -> &SparseMeasure {
        &self.step
    }

    /// Support of μ is not contained in 2ℕ.
    pub fn is_aperiodic(&self) -> bool {
        self.aperiodic
    }

    /// μ = δ₁, the birth-and-death case.
    pub fn is_nearest_neighbour(&self) -> bool {
        self.step.get(1) == 1.0
    }

    pub fn max_step(&self) -> usize {
        self.max_step
    }

    /// `δ_x ⋆ μ` as a dense row on `[x - max_step, x + max_step] ∩ ℕ`.
    pub fn row(&self, x: usize) -> Result<KernelRow> {
        let offset = x.saturating_sub(self.max_step);
        let mut masses = vec![0.0; x + self.max_step - offset + 1];
        for (m, w) in self.step.iter() {
            let lin = linearization(self.idx, m, x)?;
            for (k, c) in lin.iter() {
                masses[k - offset] += w * c;
            }
        }
        Ok(KernelRow { offset, masses })
    }
}

/// `δ_x ⋆ μ`.
pub fn kernel_row(kernel: &GegenbauerKernel, x: usize) -> Result<SparseMeasure> {
    kernel.row(x)?.to_measure()
}

/// The one-step transition operator acting on dense laws, with rows built
/// lazily and kept for reuse.
#[derive(Debug)]
pub struct TransitionOperator<'a> {
    kernel: &'a GegenbauerKernel,
    rows: Vec<KernelRow>,
}

impl<'a> TransitionOperator<'a> {
    pub fn new(kernel: &'a GegenbauerKernel) -> Self {
        TransitionOperator {
            kernel,
            rows: Vec::new(),
        }
    }

    fn ensure_rows(&mut self, upto: usize) -> Result<()> {
        while self.rows.len() < upto {
            let x = self.rows.len();
            self.rows.push(self.kernel.row(x)?);
        }
        Ok(())
    }

    /// One step of the chain: `next(y) = Σ_x law(x) p(x, y)`.
    pub fn step(&mut self, law: &[f64]) -> Result<Vec<f64>> {
        self.ensure_rows(law.len())?;
        let mut next = vec![0.0; law.len() + self.kernel.max_step];
        for (x, &p) in law.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let row = &self.rows[x];
            for (j, &q) in row.masses.iter().enumerate() {
                next[row.offset + j] += p * q;
            }
        }
        Ok(next)
    }
}

fn check_cap(kernel: &GegenbauerKernel, x: usize, n: usize, cap: usize) -> Result<()> {
    let required = n
        .checked_mul(kernel.max_step)
        .and_then(|s| s.checked_add(x + 1))
        .unwrap_or(usize::MAX);
    if required > cap {
        return Err(Error::StateCap { required, cap });
    }
    Ok(())
}

/// Exact n-step law `P^{(n)}(x, ·)` under the default state cap.
pub fn n_step(kernel: &GegenbauerKernel, x: usize, n: usize) -> Result<SparseMeasure> {
    n_step_with_cap(kernel, x, n, DEFAULT_STATE_CAP)
}

pub fn n_step_with_cap(
    kernel: &GegenbauerKernel,
    x: usize,
    n: usize,
    cap: usize,
) -> Result<SparseMeasure> {
    let mut laws = n_step_snapshots_with_cap(kernel, x, &[n], cap)?;
    Ok(laws.pop().expect("one checkpoint requested"))
}

/// Laws `P^{(n)}(x, ·)` for every `n` in `checkpoints` (ascending), from a
/// single forward iteration.
pub fn n_step_snapshots(
    kernel: &GegenbauerKernel,
    x: usize,
    checkpoints: &[usize],
) -> Result<Vec<SparseMeasure>> {
    n_step_snapshots_with_cap(kernel, x, checkpoints, DEFAULT_STATE_CAP)
}

pub fn n_step_snapshots_with_cap(
    kernel: &GegenbauerKernel,
    x: usize,
    checkpoints: &[usize],
    cap: usize,
) -> Result<Vec<SparseMeasure>> {
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain("checkpoints must be ascending"));
    }
    let last = checkpoints.last().copied().unwrap_or(0);
    check_cap(kernel, x, last, cap)?;
    let mut op = TransitionOperator::new(kernel);
    let mut law = vec![0.0; x + 1];
    law[x] = 1.0;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut done = 0;
    for &target in checkpoints {
        while done < target {
            law = op.step(&law)?;
            done += 1;
        }
        out.push(snapshot(&law)?);
    }
    Ok(out)
}

fn snapshot(law: &[f64]) -> Result<SparseMeasure> {
    let total: f64 = law.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Internal(format!("n-step law has mass {total}")));
    }
    Ok(SparseMeasure::pack_dense(
        0,
        law.to_vec(),
        MeasureKind::Probability,
    ))
}

/// `δ_x ⋆ μ^{⋆n}` by repeated convolution; the slow route kept as an
/// oracle for [`n_step`].
pub fn n_step_via_convolution(
    kernel: &GegenbauerKernel,
    x: usize,
    n: usize,
) -> Result<SparseMeasure> {
    let idx = kernel.idx;
    let mut power = SparseMeasure::dirac(0);
    for _ in 0..n {
        power = convolve(idx, &power, &kernel.step)?;
    }
    convolve(idx, &SparseMeasure::dirac(x), &power)
}

fn check_angle(theta: f64) -> Result<()> {
    if (0.0..=PI).contains(&theta) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "angle must lie in [0, π], got {theta}"
        )))
    }
}

/// Generalized Fourier transform `μ̂(θ) = Σ μ(n) P_n(cos θ)`.
pub fn fourier(idx: HypergroupIndex, mu: &SparseMeasure, theta: f64) -> Result<f64> {
    check_angle(theta)?;
    let top = mu.max_state().unwrap_or(0);
    let p = eval_all(idx, top, theta.cos())?;
    Ok(mu.iter().map(|(s, m)| m * p[s]).sum())
}

/// Absolute accuracy of [`inverse_fourier`].
pub const INVERSION_TOL: f64 = 1e-9;

/// `w_n ∫₀^π f(θ) P_n(cos θ) sin^{2α+1}(θ) dθ`: the mass at `n` of the
/// measure whose transform is `f`.
pub fn inverse_fourier<F: Fn(f64) -> f64>(idx: HypergroupIndex, f: F, n: usize) -> Result<f64> {
    let w = weight(idx, n);
    let expo = 2.0 * idx.alpha() + 1.0;
    let integrand = |theta: f64| {
        let c = theta.cos().clamp(-1.0, 1.0);
        let p = eval_all(idx, n, c).expect("cosine lies in [-1, 1]")[n];
        f(theta) * p * theta.sin().powf(expo)
    };
    let r = quad::integrate(integrand, 0.0, PI, INVERSION_TOL / w, 0.0)?;
    Ok(w * r.value)
}

/// Recurrence class of the walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainClass {
    Recurrent,
    Transient,
}

/// Recurrent for `α ≤ 0`, transient for `α > 0`.
pub fn classify(idx: HypergroupIndex) -> ChainClass {
    if idx.alpha() <= 0.0 {
        ChainClass::Recurrent
    } else {
        ChainClass::Transient
    }
}

/// `C = 1/(4(α+1)) Σ μ(n) n (n + 2α + 1)`.
pub fn drift_constant(idx: HypergroupIndex, mu: &SparseMeasure) -> f64 {
    let a = idx.alpha();
    let s: f64 = mu
        .iter()
        .map(|(n, m)| {
            let nf = n as f64;
            m * nf * (nf + 2.0 * a + 1.0)
        })
        .sum();
    s / (4.0 * (a + 1.0))
}

/// Outcome of [`is_gegenbauer_walk`].
#[derive(Debug, Clone)]
pub struct MembershipCheck {
    pub is_member: bool,
    pub max_residual: f64,
    /// `μ(n) = p(0, n)`.
    pub step_measure: SparseMeasure,
}

/// Residual threshold for [`is_gegenbauer_walk`].
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// Tests whether a kernel on states `0..=N` (row `i` lists `p(i, 0), p(i, 1), …`;
/// rows may have different lengths) satisfies the hypergroup relation
///
/// `i/(2(i+λ)) p(i-1,j) + (i+2λ)/(2(i+λ)) p(i+1,j)
///   = (j+2λ-1)/(2(j+λ-1)) p(i,j-1) + (j+1)/(2(j+λ+1)) p(i,j+1)`
///
/// for every row `i ≤ N - 2`. The `p(·, -1)` terms are dropped, and the
/// coefficients at index 0 take their limits (`0` below, `1` above), which
/// removes the `0/0` at `λ = 0`.
pub fn is_gegenbauer_walk(transition: &[Vec<f64>], lambda: f64) -> Result<MembershipCheck> {
    if !(0.0..=0.5).contains(&lambda) {
        return Err(Error::domain(format!(
            "lambda must lie in [0, 1/2], got {lambda}"
        )));
    }
    if transition.len() < 3 {
        return Err(Error::domain("membership test needs at least three rows"));
    }
    for (i, row) in transition.iter().enumerate() {
        if row.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::domain(format!(
                "row {i} has a negative or NaN entry"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("row {i} sums to {s}, not 1")));
        }
    }
    let p = |i: usize, j: usize| transition[i].get(j).copied().unwrap_or(0.0);
    // a_n = n/(2(n+λ)), c_n = (n+2λ)/(2(n+λ)); a_0 = 0, c_0 = 1
    let down = |n: usize| {
        if n == 0 {
            0.0
        } else {
            n as f64 / (2.0 * (n as f64 + lambda))
        }
    };
    let up = |n: usize| {
        if n == 0 {
            1.0
        } else {
            (n as f64 + 2.0 * lambda) / (2.0 * (n as f64 + lambda))
        }
    };
    let last = transition.len() - 1;
    let mut max_residual = 0.0_f64;
    for i in 0..=last - 2 {
        let width = transition[i..=i + 1]
            .iter()
            .chain(i.checked_sub(1).map(|k| &transition[k]))
            .map(Vec::len)
            .max()
            .unwrap_or(0);
        for j in 0..=width {
            let mut lhs = up(i) * p(i + 1, j);
            if i > 0 {
                lhs += down(i) * p(i - 1, j);
            }
            let mut rhs = down(j + 1) * p(i, j + 1);
            if j > 0 {
                rhs += up(j - 1) * p(i, j - 1);
            }
            max_residual = max_residual.max((lhs - rhs).abs());
        }
    }
    let step_measure =
        SparseMeasure::normalized_from_pairs(transition[0].iter().copied().enumerate(), 1e-9)?;
    Ok(MembershipCheck {
        is_member: max_residual <= MEMBERSHIP_TOL,
        max_residual,
        step_measure,
    })
}

/// Kernel rows `p(i, ·)` for `i = 0..=last` as plain vectors starting at
/// state 0, the input format of [`is_gegenbauer_walk`].
pub fn kernel_matrix(kernel: &GegenbauerKernel, last: usize) -> Result<Vec<Vec<f64>>> {
    (0..=last)
        .map(|i| {
            let row = kernel.row(i)?;
            let mut v = vec![0.0; row.offset];
            v.extend_from_slice(&row.masses);
            Ok(v)
        })
        .collect()
}
