//! Statistical checks of the simulator against exact laws computed from the
//! transition kernel.

use hypergroup_walk::gegenbauer::HypergroupIndex;
use hypergroup_walk::hypergroup::{kernel_row, n_step, GegenbauerKernel, SparseMeasure};
use hypergroup_walk::verify::exact_local_time_moments;
use hypergroup_walk::walk_sim::{local_time_counts, mean_visits_curve, sample_path, WalkConfig};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn idx(a: f64) -> HypergroupIndex {
    HypergroupIndex::new(a).unwrap()
}

fn pair() -> SparseMeasure {
    SparseMeasure::from_pairs([(1, 0.5), (2, 0.5)]).unwrap()
}

/// Pearson p-value; cells with expected count below 5 are pooled.
fn chi_square_p(observed: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = observed.iter().sum();
    let mut cells = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        o_acc += o as f64;
        e_acc += p * total as f64;
        if e_acc >= 5.0 {
            cells.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += o_acc;
        last.1 += e_acc;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = (cells.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

fn terminal_histogram(terminal: &[usize], len: usize) -> Vec<u64> {
    let mut h = vec![0u64; len];
    for &t in terminal {
        h[t] += 1;
    }
    h
}

#[test]
fn ten_step_law_matches_kernel_power() {
    for (a, mu, seed) in [
        (-0.25, SparseMeasure::dirac(1), 11),
        (-0.25, pair(), 12),
        (0.3, pair(), 13),
    ] {
        let kernel = GegenbauerKernel::new(idx(a), mu.clone()).unwrap();
        let exact = n_step(&kernel, 0, 10).unwrap();
        let cfg = WalkConfig::new(idx(a), mu, 0, 10, 100_000, vec![], seed).unwrap();
        let sim = local_time_counts(&cfg).unwrap();
        let len = 10 * kernel.max_step() + 1;
        let obs = terminal_histogram(&sim.terminal, len);
        let p = chi_square_p(&obs, &exact.to_dense(len));
        assert!(p > 1e-3, "α={a}: chi-square p = {p}");
    }
}

/// Exact law of `N_n(y)` by dynamic programming over (state, visits so far).
fn local_time_law(kernel: &GegenbauerKernel, x: usize, y: usize, n: usize) -> Vec<f64> {
    let width = x + n * kernel.max_step() + 1;
    let rows: Vec<Vec<f64>> = (0..width)
        .map(|s| {
            kernel_row(kernel, s)
                .unwrap()
                .to_dense(width + kernel.max_step())
        })
        .collect();
    let mut dp = vec![vec![0.0; n + 2]; width];
    dp[x][usize::from(x == y)] = 1.0;
    for _ in 0..n {
        let mut next = vec![vec![0.0; n + 2]; width];
        for (s, by_count) in dp.iter().enumerate() {
            for (c, &p) in by_count.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (t, &q) in rows[s].iter().enumerate().take(width) {
                    if q > 0.0 {
                        next[t][c + usize::from(t == y)] += p * q;
                    }
                }
            }
        }
        dp = next;
    }
    (0..n + 2)
        .map(|c| dp.iter().map(|row| row[c]).sum())
        .collect()
}

#[test]
fn short_horizon_local_time_law_matches_dynamic_programming() {
    let n = 20;
    for (a, mu) in [(-0.5, SparseMeasure::dirac(1)), (-0.25, pair())] {
        let kernel = GegenbauerKernel::new(idx(a), mu.clone()).unwrap();
        let law = local_time_law(&kernel, 0, 0, n);
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let cfg = WalkConfig::new(idx(a), mu, 0, n, 1_000_000, vec![0], 21).unwrap();
        let sim = local_time_counts(&cfg).unwrap();
        let mut freq = vec![0.0; n + 2];
        for c in &sim.counts {
            freq[c[0] as usize] += 1.0 / cfg.replicas as f64;
        }
        let tv: f64 = 0.5
            * freq
                .iter()
                .zip(&law)
                .map(|(f, p)| (f - p).abs())
                .sum::<f64>();
        assert!(tv <= 0.01, "α={a}: TV distance {tv}");
    }
}

#[test]
fn path_transitions_follow_kernel_rows() {
    let kernel = GegenbauerKernel::new(idx(-0.25), pair()).unwrap();
    let cfg = WalkConfig::new(idx(-0.25), pair(), 0, 20_000, 200, vec![], 31).unwrap();
    let mut obs = vec![vec![0u64; 9]; 6];
    for r in 0..cfg.replicas {
        let path = sample_path(&cfg, r).unwrap();
        assert_eq!(path.len(), cfg.horizon + 1);
        for w in path.windows(2).filter(|w| w[0] < 6) {
            obs[w[0]][w[1]] += 1;
        }
    }
    for (x, counts) in obs.iter().enumerate() {
        assert!(
            counts.iter().sum::<u64>() > 1000,
            "state {x} rarely visited"
        );
        let row = kernel_row(&kernel, x).unwrap();
        let p = chi_square_p(counts, &row.to_dense(counts.len()));
        assert!(p > 1e-3, "row {x}: chi-square p = {p}");
    }
}

#[test]
fn reflected_walk_mean_local_time_grows_like_root_n() {
    let n = 10_000;
    let cfg = WalkConfig::new(
        idx(-0.5),
        SparseMeasure::dirac(1),
        0,
        n,
        10_000,
        vec![0],
        41,
    )
    .unwrap();
    let sim = local_time_counts(&cfg).unwrap();
    let mean = sim.counts.iter().map(|c| c[0] as f64).sum::<f64>() / cfg.replicas as f64;
    let ratio = mean / (n as f64).sqrt() / (2.0 / std::f64::consts::PI).sqrt();
    assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
}

#[test]
fn mean_visit_curve_matches_exact_expectations() {
    let checkpoints = [100, 500, 2000];
    for start in [0, 3] {
        let cfg = WalkConfig::new(
            idx(-0.25),
            pair(),
            start,
            0,
            20_000,
            vec![0],
            51 + start as u64,
        )
        .unwrap();
        let curve = mean_visits_curve(&cfg, &checkpoints).unwrap();
        let kernel = GegenbauerKernel::new(idx(-0.25), pair()).unwrap();
        for (k, means) in checkpoints.iter().zip(&curve.means) {
            let (m1, m2) = exact_local_time_moments(&kernel, start, 0, *k).unwrap();
            let se = ((m2 - m1 * m1) / cfg.replicas as f64).sqrt();
            let z = (means[0] - m1) / se;
            assert!(
                z.abs() < 4.0,
                "x={start} n={k}: mean {} vs exact {m1} (z = {z:.2})",
                means[0]
            );
        }
    }
}

#[test]
fn curve_endpoint_agrees_with_local_time_counts() {
    let cfg = WalkConfig::new(idx(0.0), pair(), 0, 300, 500, vec![0, 1], 61).unwrap();
    let curve = mean_visits_curve(&cfg, &[300]).unwrap();
    let sim = local_time_counts(&cfg).unwrap();
    for t in 0..2 {
        let mean = sim.counts.iter().map(|c| c[t] as f64).sum::<f64>() / 500.0;
        assert_eq!(curve.means[0][t], mean);
    }
}
