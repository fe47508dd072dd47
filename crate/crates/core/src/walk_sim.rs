//! Monte Carlo simulation of the walk and of its local time
//! `N_n(y) = Σ_{k=0}^{n} 1{S_k = y}`.
//!
//! Replica `r` draws from its own ChaCha8 stream `(seed, r)`, so results do
//! not depend on how replicas are scheduled across threads. Note that the
//! visit at time 0 is counted.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gegenbauer::HypergroupIndex;
use crate::hypergroup::{GegenbauerKernel, SparseMeasure};

/// Rows kept per worker by the general sampler.
pub const ROW_CACHE_SLOTS: usize = 4096;

/// Parameters of a simulation run.
#[derive(Debug, Clone)]
pub struct WalkConfig {
    pub idx: HypergroupIndex,
    pub mu: SparseMeasure,
    pub start: usize,
    pub horizon: usize,
    pub replicas: usize,
    pub target_states: Vec<usize>,
    pub seed: u64,
}

impl WalkConfig {
    pub fn new(
        idx: HypergroupIndex,
        mu: SparseMeasure,
        start: usize,
        horizon: usize,
        replicas: usize,
        target_states: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        let cfg = WalkConfig {
            idx,
            mu,
            start,
            horizon,
            replicas,
            target_states,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::domain("at least one replica is required"));
        }
        if !self.mu.is_probability() {
            return Err(Error::domain("step measure must be a probability measure"));
        }
        Ok(())
    }

    fn kernel(&self) -> Result<GegenbauerKernel> {
        GegenbauerKernel::new(self.idx, self.mu.clone())
    }

    /// Independent generator for replica `r`.
    pub fn replica_rng(&self, replica: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replica as u64);
        rng
    }
}

#[derive(Debug, Clone)]
struct CumulativeRow {
    offset: usize,
    cum: Vec<f64>,
}

impl CumulativeRow {
    fn build(kernel: &GegenbauerKernel, x: usize) -> Result<Self> {
        let row = kernel.row(x)?;
        let first = row.masses.iter().position(|m| *m > 0.0).unwrap_or(0);
        let last = row.masses.iter().rposition(|m| *m > 0.0).unwrap_or(0);
        let mut cum = Vec::with_capacity(last - first + 1);
        let mut acc = 0.0;
        for &m in &row.masses[first..=last] {
            acc += m;
            cum.push(acc);
        }
        // the top state absorbs the rounding of the running sum
        *cum.last_mut().expect("rows are nonempty") = 1.0;
        Ok(CumulativeRow {
            offset: row.offset + first,
            cum,
        })
    }

    fn sample(&self, u: f64) -> usize {
        self.offset + self.cum.partition_point(|&c| c <= u)
    }
}

/// Direct-mapped cache of cumulative rows keyed by `state % ROW_CACHE_SLOTS`.
#[derive(Debug)]
struct RowCache {
    slots: Vec<Option<(usize, Arc<CumulativeRow>)>>,
}

impl RowCache {
    fn new() -> Self {
        RowCache {
            slots: vec![None; ROW_CACHE_SLOTS],
        }
    }

    fn get(&mut self, kernel: &GegenbauerKernel, x: usize) -> Result<Arc<CumulativeRow>> {
        let slot = &mut self.slots[x % ROW_CACHE_SLOTS];
        if let Some((s, row)) = slot {
            if *s == x {
                return Ok(Arc::clone(row));
            }
        }
        let row = Arc::new(CumulativeRow::build(kernel, x)?);
        *slot = Some((x, Arc::clone(&row)));
        Ok(row)
    }
}

/// One-step sampler. `μ = δ₁` uses the closed-form two-point row with a
/// single uniform per step; anything else samples cached rows by inverse CDF.
#[derive(Debug)]
enum Stepper<'k> {
    NearestNeighbour {
        two_alpha_plus_one: f64,
    },
    General {
        kernel: &'k GegenbauerKernel,
        cache: RowCache,
    },
}

impl<'k> Stepper<'k> {
    fn new(kernel: &'k GegenbauerKernel) -> Self {
        if kernel.is_nearest_neighbour() {
            Stepper::NearestNeighbour {
                two_alpha_plus_one: 2.0 * kernel.index().alpha() + 1.0,
            }
        } else {
            Stepper::General {
                kernel,
                cache: RowCache::new(),
            }
        }
    }

    #[inline]
    fn step<R: Rng>(&mut self, x: usize, rng: &mut R) -> Result<usize> {
        let u: f64 = rng.random();
        match self {
            Stepper::NearestNeighbour { two_alpha_plus_one } => {
                if x == 0 {
                    return Ok(1);
                }
                // p(x, x-1) = x / (2x + 2α + 1)
                let xf = x as f64;
                if u * (2.0 * xf + *two_alpha_plus_one) < xf {
                    Ok(x - 1)
                } else {
                    Ok(x + 1)
                }
            }
            Stepper::General { kernel, cache } => Ok(cache.get(kernel, x)?.sample(u)),
        }
    }
}

/// Runs one replica, calling `visit(k, S_k)` for `k = 0..=horizon`.
fn run_path<F: FnMut(usize, usize)>(
    cfg: &WalkConfig,
    stepper: &mut Stepper<'_>,
    replica: usize,
    horizon: usize,
    mut visit: F,
) -> Result<usize> {
    let mut rng = cfg.replica_rng(replica);
    let mut x = cfg.start;
    visit(0, x);
    for k in 1..=horizon {
        x = stepper.step(x, &mut rng)?;
        visit(k, x);
    }
    Ok(x)
}

/// Result of one replica: terminal state and local times at the targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaResult {
    pub terminal: usize,
    pub counts: Vec<u64>,
}

/// Simulates replica `replica` of `cfg`.
pub fn simulate_replica(cfg: &WalkConfig, replica: usize) -> Result<ReplicaResult> {
    let kernel = cfg.kernel()?;
    let mut stepper = Stepper::new(&kernel);
    replica_counts(cfg, &mut stepper, replica)
}

fn replica_counts(
    cfg: &WalkConfig,
    stepper: &mut Stepper<'_>,
    replica: usize,
) -> Result<ReplicaResult> {
    let targets = &cfg.target_states;
    let mut counts = vec![0u64; targets.len()];
    let terminal = run_path(cfg, stepper, replica, cfg.horizon, |_, x| {
        for (c, &y) in counts.iter_mut().zip(targets) {
            if x == y {
                *c += 1;
            }
        }
    })?;
    Ok(ReplicaResult { terminal, counts })
}

/// Full trajectory `S_0, …, S_horizon` of one replica.
pub fn sample_path(cfg: &WalkConfig, replica: usize) -> Result<Vec<usize>> {
    let kernel = cfg.kernel()?;
    let mut stepper = Stepper::new(&kernel);
    let mut path = Vec::with_capacity(cfg.horizon + 1);
    run_path(cfg, &mut stepper, replica, cfg.horizon, |_, x| path.push(x))?;
    Ok(path)
}

/// Debug mode: local time at every visited state for one replica.
pub fn full_histogram(cfg: &WalkConfig, replica: usize) -> Result<BTreeMap<usize, u64>> {
    let kernel = cfg.kernel()?;
    let mut stepper = Stepper::new(&kernel);
    let mut hist = BTreeMap::new();
    run_path(cfg, &mut stepper, replica, cfg.horizon, |_, x| {
        *hist.entry(x).or_insert(0u64) += 1
    })?;
    Ok(hist)
}

/// Runs `f` for every replica in parallel on the current rayon pool and
/// returns the results in replica order.
fn fan_out<T, F>(cfg: &WalkConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Stepper<'_>, usize) -> Result<T> + Sync,
{
    cfg.validate()?;
    let kernel = cfg.kernel()?;
    (0..cfg.replicas)
        .into_par_iter()
        .map_init(|| Stepper::new(&kernel), |stepper, r| f(stepper, r))
        .collect()
}

/// Local times `N_n(y)` at the targets for all replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeSamples {
    pub targets: Vec<usize>,
    pub horizon: usize,
    /// `counts[r][t]` is the local time of replica `r` at `targets[t]`.
    pub counts: Vec<Vec<u64>>,
    pub terminal: Vec<usize>,
}

/// Simulates every replica of `cfg` and collects local times.
pub fn local_time_counts(cfg: &WalkConfig) -> Result<LocalTimeSamples> {
    let results = fan_out(cfg, |stepper, r| replica_counts(cfg, stepper, r))?;
    let (counts, terminal) = results.into_iter().map(|r| (r.counts, r.terminal)).unzip();
    Ok(LocalTimeSamples {
        targets: cfg.target_states.clone(),
        horizon: cfg.horizon,
        counts,
        terminal,
    })
}

/// Normalization of the local time at readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "exponent")]
pub enum Scaling {
    /// `N_n(y) / n^p`.
    Power(f64),
    /// `N_n(y) / log n`.
    Log,
    /// Raw counts.
    Identity,
}

impl Scaling {
    /// `n^{|α|}` for `α < 0`, `log n` at `α = 0`, raw counts when transient.
    pub fn for_index(idx: HypergroupIndex) -> Self {
        let a = idx.alpha();
        if a < 0.0 {
            Scaling::Power(-a)
        } else if a == 0.0 {
            Scaling::Log
        } else {
            Scaling::Identity
        }
    }

    pub fn divisor(&self, n: usize) -> f64 {
        match *self {
            Scaling::Power(p) => (n as f64).powf(p),
            Scaling::Log => (n as f64).ln(),
            Scaling::Identity => 1.0,
        }
    }
}

/// Sample moments with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub order: u32,
    pub value: f64,
    pub std_error: f64,
}

/// `E[X^p]` for `p = 1..=max_order` with the standard error of each mean.
pub fn sample_moments(samples: &[f64], max_order: u32) -> Vec<MomentSummary> {
    let n = samples.len() as f64;
    (1..=max_order)
        .map(|p| {
            let pw: Vec<f64> = samples.iter().map(|x| x.powi(p as i32)).collect();
            let mean = pw.iter().sum::<f64>() / n;
            let var = if samples.len() > 1 {
                pw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            MomentSummary {
                order: p,
                value: mean,
                std_error: (var / n).sqrt(),
            }
        })
        .collect()
}

/// Per-target summary written next to the sample CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub y: usize,
    pub scaling: Scaling,
    pub divisor: f64,
    pub mean_count: f64,
    pub moments: Vec<MomentSummary>,
    /// `histogram[k]` counts replicas with scaled statistic in `[k, k+1)`.
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub horizon: usize,
    pub replicas: usize,
    pub targets: Vec<TargetSummary>,
}

impl LocalTimeSamples {
    pub fn replicas(&self) -> usize {
        self.counts.len()
    }

    fn target_column(&self, y: usize) -> Result<usize> {
        self.targets
            .iter()
            .position(|&t| t == y)
            .ok_or_else(|| Error::domain(format!("state {y} is not a simulated target")))
    }

    /// Raw counts at target `y`, in replica order.
    pub fn counts_for(&self, y: usize) -> Result<Vec<u64>> {
        let t = self.target_column(y)?;
        Ok(self.counts.iter().map(|c| c[t]).collect())
    }

    /// `N_n(y) / divisor`.
    pub fn scaled(&self, y: usize, scaling: Scaling) -> Result<Vec<f64>> {
        let d = scaling.divisor(self.horizon);
        Ok(self
            .counts_for(y)?
            .into_iter()
            .map(|c| c as f64 / d)
            .collect())
    }

    pub fn summary(&self, scaling: Scaling, max_order: u32) -> Result<SampleSummary> {
        let targets = self
            .targets
            .iter()
            .map(|&y| {
                let raw = self.counts_for(y)?;
                let scaled = self.scaled(y, scaling)?;
                let mut histogram = Vec::new();
                for &s in &scaled {
                    let bin = s.floor() as usize;
                    if histogram.len() <= bin {
                        histogram.resize(bin + 1, 0);
                    }
                    histogram[bin] += 1;
                }
                Ok(TargetSummary {
                    y,
                    scaling,
                    divisor: scaling.divisor(self.horizon),
                    mean_count: raw.iter().map(|&c| c as f64).sum::<f64>() / raw.len() as f64,
                    moments: sample_moments(&scaled, max_order),
                    histogram,
                })
            })
            .collect::<Result<_>>()?;
        Ok(SampleSummary {
            horizon: self.horizon,
            replicas: self.replicas(),
            targets,
        })
    }

    /// CSV with header `replica,y,count`, replica-major.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["replica", "y", "count"])?;
        for (r, row) in self.counts.iter().enumerate() {
            for (&y, &c) in self.targets.iter().zip(row) {
                out.write_record([r.to_string(), y.to_string(), c.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Mean local time at each target after each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitCurve {
    pub targets: Vec<usize>,
    pub checkpoints: Vec<usize>,
    /// `means[i][t]`: mean of `N_{checkpoints[i]}(targets[t])`.
    pub means: Vec<Vec<f64>>,
}

/// Empirical `E N_n(y)` at each `n` in `checkpoints` (ascending), one pass
/// per replica up to the last checkpoint; `cfg.horizon` is ignored.
pub fn mean_visits_curve(cfg: &WalkConfig, checkpoints: &[usize]) -> Result<VisitCurve> {
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain("checkpoints must be ascending"));
    }
    let last = checkpoints.last().copied().unwrap_or(0);
    let targets = &cfg.target_states;
    let per_replica = fan_out(cfg, |stepper, r| {
        let mut counts = vec![0u64; targets.len()];
        let mut snaps = Vec::with_capacity(checkpoints.len());
        let mut next = 0;
        run_path(cfg, stepper, r, last, |k, x| {
            for (c, &y) in counts.iter_mut().zip(targets) {
                if x == y {
                    *c += 1;
                }
            }
            while next < checkpoints.len() && checkpoints[next] == k {
                snaps.push(counts.clone());
                next += 1;
            }
        })?;
        Ok(snaps)
    })?;
    let mut means = vec![vec![0.0; targets.len()]; checkpoints.len()];
    for snaps in &per_replica {
        for (row, snap) in means.iter_mut().zip(snaps) {
            for (m, &c) in row.iter_mut().zip(snap) {
                *m += c as f64;
            }
        }
    }
    let reps = cfg.replicas as f64;
    means.iter_mut().flatten().for_each(|m| *m /= reps);
    Ok(VisitCurve {
        targets: targets.clone(),
        checkpoints: checkpoints.to_vec(),
        means,
    })
}

/// Runs `f` on a dedicated pool with `threads` workers (all cores if `None`).
pub fn with_threads<T: Send, F: FnOnce() -> T + Send>(threads: Option<usize>, f: F) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
