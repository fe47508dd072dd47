use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hypergroup_walk::error::{Error, Result};
use hypergroup_walk::gegenbauer::{eval_poly, linearization, weight, HypergroupIndex};
use hypergroup_walk::hypergroup::{
    classify, drift_constant, is_gegenbauer_walk, n_step_with_cap, ChainClass, GegenbauerKernel,
    SparseMeasure, DEFAULT_STATE_CAP,
};
use hypergroup_walk::io::{
    format_number, measure_from_json, measure_to_json, parse_mu_spec, read_measure_csv,
    write_measure_csv, NumberFormat,
};
use hypergroup_walk::specfun::{
    bessel_i, bessel_j, bessel_marginal_density, gamma, ml_density, ml_function, ml_moment,
    MittagLefflerDist,
};
use hypergroup_walk::verify::{self, TolerancePolicy, VerifyReport};
use hypergroup_walk::walk_sim::{self, local_time_counts, mean_visits_curve, Scaling, WalkConfig};

/// Random walks on the Gegenbauer polynomial hypergroup: exact kernels,
/// Monte Carlo local times and checks of the limit theorems.
#[derive(Parser, Debug)]
#[command(name = "hgwalk", version)]
struct Cli {
    /// Print floats with 17 significant digits (shortest round-trip form)
    /// instead of 11.
    #[arg(long, global = true)]
    full_precision: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact n-step law P^(n)(x, ·) = δ_x ⋆ μ^(n), sorted by state.
    Kernel(KernelArgs),
    /// Monte Carlo local times N_n(y) per replica (CSV `replica,y,count`).
    Simulate(SimulateArgs),
    /// Mean local time E N_n(y) at a list of checkpoints, from simulation.
    Localtime(LocaltimeArgs),
    /// Local limit theorem for aperiodic μ: p^(n)(x,y) against
    /// w_y Γ(α+1) / (2 (Cn)^{α+1}).
    VerifyLlt(LltArgs),
    /// Local limit theorem for μ = δ₁: p^(n)(x,y) against
    /// w_y 2^{α+1} Γ(α+1) n^{-(α+1)} when n+x+y is even, exact zeros otherwise.
    VerifyLltPeriodic(LltArgs),
    /// Space-scaled local limit theorem: √n p^(n) at ⌊x√n⌋ against the
    /// Bessel-process transition densities.
    VerifySpaceLlt(SpaceLltArgs),
    /// Local-time limit theorem: N_n(y)/n^{|α|} against a scaled
    /// Mittag-Leffler law (α < 0) or N_n(y)/log n against an exponential
    /// law (α = 0).
    VerifyLt(LtArgs),
    /// Test whether a kernel matrix satisfies the hypergroup consistency relation.
    Membership(MembershipArgs),
    /// Special functions.
    #[command(subcommand)]
    Specfun(SpecfunCommand),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct MuArgs {
    /// Step measure μ as `state:mass,...` (masses must sum to 1 within 1e-9).
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Step measure μ read from a `state,mass` CSV or a JSON measure file.
    #[arg(long)]
    mu_file: Option<PathBuf>,
}

impl MuArgs {
    fn measure(&self) -> Result<SparseMeasure> {
        match (&self.mu, &self.mu_file) {
            (Some(spec), None) => parse_mu_spec(spec),
            (None, Some(path)) => read_mu_file(path),
            _ => unreachable!("clap enforces exactly one source"),
        }
    }
}

fn read_mu_file(path: &Path) -> Result<SparseMeasure> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        Ok(measure_from_json(&text)?.1)
    } else {
        read_measure_csv(text.as_bytes())
    }
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write to this file instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl OutputArgs {
    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn open(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.output {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

#[derive(Args, Debug)]
struct ThreadArgs {
    /// Worker threads for replica fan-out (default: all cores).
    #[arg(long, env = "HGWALK_THREADS")]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct KernelArgs {
    /// Hypergroup index α ≥ -1/2.
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[command(flatten)]
    mu: MuArgs,
    /// Starting state.
    #[arg(long)]
    x: usize,
    /// Number of steps.
    #[arg(long)]
    n: usize,
    /// Maximum number of states the exact iteration may touch.
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    state_cap: usize,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[command(flatten)]
    mu: MuArgs,
    /// Starting state.
    #[arg(long, default_value_t = 0)]
    x: usize,
    /// Target states y (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    y: Vec<usize>,
    /// Horizon n.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    replicas: usize,
    /// Random seed; replica r uses the stream (seed, r).
    #[arg(long)]
    seed: u64,
    /// Also write a JSON summary (moments and unit-bin histogram of the
    /// scaled local time) to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    threads: ThreadArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct LocaltimeArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[command(flatten)]
    mu: MuArgs,
    #[arg(long, default_value_t = 0)]
    x: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    y: Vec<usize>,
    /// Ascending checkpoints n (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    checkpoints: Vec<usize>,
    #[arg(long)]
    replicas: usize,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    threads: ThreadArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct PolicyArgs {
    /// Accepted ratio window at the largest n, as `low,high`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    window: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct LltArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    /// Step measure μ as `state:mass,...`.
    #[arg(long, allow_hyphen_values = true, default_value = "1:1")]
    mu: String,
    #[arg(long, default_value_t = 0)]
    x: usize,
    #[arg(long, default_value_t = 0)]
    y: usize,
    /// Strictly increasing step counts (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct SpaceLltArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    mu: String,
    /// Positive space points x (comma separated).
    #[arg(long = "xs", value_delimiter = ',', required = true)]
    xs: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct LtArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    mu: String,
    #[arg(long, default_value_t = 0)]
    x: usize,
    #[arg(long, default_value_t = 0)]
    y: usize,
    /// Horizon n.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    replicas: usize,
    #[arg(long)]
    seed: u64,
    /// Fixed relative window for the moments (default: 3 standard errors
    /// plus 2%).
    #[arg(long)]
    moment_tol: Option<f64>,
    /// Number of moments that enter the verdict.
    #[arg(long, default_value_t = 3)]
    moments_checked: u32,
    /// Largest accepted Kolmogorov–Smirnov distance.
    #[arg(long, default_value_t = 0.02)]
    ks_max: f64,
    /// Also write the raw samples (CSV `replica,y,count`) to this file.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[command(flatten)]
    threads: ThreadArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct MembershipArgs {
    /// CSV file without header; line i holds p(i,0), p(i,1), ...
    #[arg(long)]
    input: PathBuf,
    /// λ in [0, 1/2].
    #[arg(long)]
    lambda: f64,
}

#[derive(Subcommand, Debug)]
enum SpecfunCommand {
    /// Moment E[ℳ(order)^p] = p!/Γ(order·p + 1).
    MlMoment {
        #[arg(long)]
        order: f64,
        #[arg(long)]
        p: u32,
    },
    /// Mittag-Leffler function E_order(-x).
    MlFunction {
        #[arg(long)]
        order: f64,
        #[arg(long)]
        x: f64,
    },
    /// Density of the Mittag-Leffler distribution ℳ(order).
    MlDensity {
        #[arg(long)]
        order: f64,
        #[arg(long)]
        x: f64,
    },
    /// Distribution function of ℳ(order).
    MlCdf {
        #[arg(long)]
        order: f64,
        #[arg(long)]
        x: f64,
    },
    /// Gamma function.
    Gamma {
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    /// Bessel function J_order(x).
    BesselJ {
        #[arg(long, allow_hyphen_values = true)]
        order: f64,
        #[arg(long)]
        x: f64,
    },
    /// Modified Bessel function I_order(x).
    BesselI {
        #[arg(long, allow_hyphen_values = true)]
        order: f64,
        #[arg(long)]
        x: f64,
    },
    /// Density at x of the Bessel process of the given index at time 1, started at 0.
    BesselDensity {
        #[arg(long, allow_hyphen_values = true)]
        index: f64,
        #[arg(long)]
        x: f64,
    },
    /// Normalized Gegenbauer polynomial P_n(x) with P_n(1) = 1.
    Gegenbauer {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    /// Orthogonality weight w_n.
    Weight {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        n: usize,
    },
    /// Linearization coefficients of P_m P_n (CSV `state,mass`).
    Linearization {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
    },
    /// Drift constant C = Σ μ(n) n (n+2α+1) / (4(α+1)) and recurrence class.
    Drift {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        mu: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let fmt = if cli.full_precision {
        NumberFormat::RoundTrip
    } else {
        NumberFormat::Short
    };
    match run(cli.command, fmt) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether every verdict passed.
fn run(cmd: Command, fmt: NumberFormat) -> Result<bool> {
    match cmd {
        Command::Kernel(a) => cmd_kernel(a, fmt),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Localtime(a) => cmd_localtime(a, fmt),
        Command::VerifyLlt(a) => {
            let (idx, mu) = (HypergroupIndex::new(a.alpha)?, parse_mu_spec(&a.mu)?);
            let r = verify::check_llt_aperiodic(idx, &mu, a.x, a.y, &a.n)?;
            emit_report(r, &a.policy, &a.out, Format::Csv, fmt)
        }
        Command::VerifyLltPeriodic(a) => {
            let (idx, mu) = (HypergroupIndex::new(a.alpha)?, parse_mu_spec(&a.mu)?);
            let r = verify::check_llt_periodic(idx, &mu, a.x, a.y, &a.n)?;
            emit_report(r, &a.policy, &a.out, Format::Csv, fmt)
        }
        Command::VerifySpaceLlt(a) => {
            let (idx, mu) = (HypergroupIndex::new(a.alpha)?, parse_mu_spec(&a.mu)?);
            let r = verify::check_space_scaled_llt(idx, &mu, &a.xs, &a.n)?;
            emit_report(r, &a.policy, &a.out, Format::Csv, fmt)
        }
        Command::VerifyLt(a) => cmd_verify_lt(a, fmt),
        Command::Membership(a) => cmd_membership(a, fmt),
        Command::Specfun(c) => cmd_specfun(c, fmt),
    }
}

fn cmd_kernel(a: KernelArgs, fmt: NumberFormat) -> Result<bool> {
    let idx = HypergroupIndex::new(a.alpha)?;
    let kernel = GegenbauerKernel::new(idx, a.mu.measure()?)?;
    let law = n_step_with_cap(&kernel, a.x, a.n, a.state_cap)?;
    let mut w = a.out.open()?;
    match a.out.format_or(Format::Csv) {
        Format::Csv => write_measure_csv(&law, &mut w, fmt)?,
        Format::Json => writeln!(w, "{}", measure_to_json(idx, &law)?)?,
    }
    w.flush()?;
    Ok(true)
}

fn cmd_simulate(a: SimulateArgs) -> Result<bool> {
    let idx = HypergroupIndex::new(a.alpha)?;
    let cfg = WalkConfig::new(idx, a.mu.measure()?, a.x, a.n, a.replicas, a.y, a.seed)?;
    let samples = walk_sim::with_threads(a.threads.threads, || local_time_counts(&cfg))??;
    let summary = samples.summary(Scaling::for_index(idx), 3)?;
    let mut w = a.out.open()?;
    match a.out.format_or(Format::Csv) {
        Format::Csv => samples.write_csv(&mut w)?,
        Format::Json => writeln!(w, "{}", serde_json::to_string_pretty(&summary)?)?,
    }
    w.flush()?;
    if let Some(path) = a.summary {
        std::fs::write(path, serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    Ok(true)
}

fn cmd_localtime(a: LocaltimeArgs, fmt: NumberFormat) -> Result<bool> {
    let idx = HypergroupIndex::new(a.alpha)?;
    let last = a.checkpoints.last().copied().unwrap_or(0);
    let cfg = WalkConfig::new(idx, a.mu.measure()?, a.x, last, a.replicas, a.y, a.seed)?;
    let curve = walk_sim::with_threads(a.threads.threads, || {
        mean_visits_curve(&cfg, &a.checkpoints)
    })??;
    let mut w = a.out.open()?;
    match a.out.format_or(Format::Csv) {
        Format::Csv => {
            writeln!(w, "n,y,mean")?;
            for (n, row) in curve.checkpoints.iter().zip(&curve.means) {
                for (y, m) in curve.targets.iter().zip(row) {
                    writeln!(w, "{n},{y},{}", format_number(*m, fmt))?;
                }
            }
        }
        Format::Json => writeln!(w, "{}", serde_json::to_string_pretty(&curve)?)?,
    }
    w.flush()?;
    Ok(true)
}

fn emit_report(
    mut report: VerifyReport,
    policy: &PolicyArgs,
    out: &OutputArgs,
    default: Format,
    fmt: NumberFormat,
) -> Result<bool> {
    if let Some(w) = &policy.window {
        if w.len() != 2 || !(w[0] <= w[1]) {
            return Err(Error::Parse(format!(
                "--window expects low,high, got {w:?}"
            )));
        }
        report.tolerances = report.tolerances.clone().with_ratio_window(w[0], w[1]);
    }
    write_report(&report, out, default, fmt)
}

fn write_report(
    report: &VerifyReport,
    out: &OutputArgs,
    default: Format,
    fmt: NumberFormat,
) -> Result<bool> {
    let mut w = out.open()?;
    match out.format_or(default) {
        Format::Csv => report.write_csv(&mut w, fmt)?,
        Format::Json => writeln!(w, "{}", report.to_json()?)?,
    }
    w.flush()?;
    let verdict = report.verdict();
    for f in &verdict.failures {
        eprintln!("FAIL {f}");
    }
    Ok(verdict.pass)
}

fn cmd_verify_lt(a: LtArgs, fmt: NumberFormat) -> Result<bool> {
    let idx = HypergroupIndex::new(a.alpha)?;
    let mu = parse_mu_spec(&a.mu)?;
    let (report, samples) = walk_sim::with_threads(a.threads.threads, || {
        verify::check_local_time_limit(idx, &mu, a.x, a.y, a.n, a.replicas, a.seed)
    })??;
    let mut policy = TolerancePolicy::default()
        .with_moments_checked(a.moments_checked)
        .with_ks_max(Some(a.ks_max));
    if let Some(t) = a.moment_tol {
        policy = policy.with_moment_rel_tol(t);
    }
    let report = report.with_policy(policy);
    if let Some(path) = &a.samples {
        samples.write_csv(BufWriter::new(File::create(path)?))?;
    }
    write_report(&report, &a.out, Format::Json, fmt)
}

fn cmd_membership(a: MembershipArgs, fmt: NumberFormat) -> Result<bool> {
    let text = std::fs::read_to_string(&a.input)?;
    let mut rows = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let row = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number {v:?}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let check = is_gegenbauer_walk(&rows, a.lambda)?;
    println!("member,{}", check.is_member);
    println!("max_residual,{}", format_number(check.max_residual, fmt));
    println!("mu,{}", check.step_measure);
    Ok(check.is_member)
}

fn cmd_specfun(c: SpecfunCommand, fmt: NumberFormat) -> Result<bool> {
    let show = |v: f64| println!("{}", format_number(v, fmt));
    match c {
        SpecfunCommand::MlMoment { order, p } => show(ml_moment(order, p)?),
        SpecfunCommand::MlFunction { order, x } => {
            let e = ml_function(order, x)?;
            if !e.well_conditioned {
                eprintln!("warning: series cancellation, result may be inaccurate");
            }
            show(e.value)
        }
        SpecfunCommand::MlDensity { order, x } => show(ml_density(order, x)?),
        SpecfunCommand::MlCdf { order, x } => show(MittagLefflerDist::new(order)?.cdf(x)),
        SpecfunCommand::Gamma { x } => show(gamma(x)?),
        SpecfunCommand::BesselJ { order, x } => show(bessel_j(order, x)?),
        SpecfunCommand::BesselI { order, x } => show(bessel_i(order, x)?),
        SpecfunCommand::BesselDensity { index, x } => show(bessel_marginal_density(index, x)?),
        SpecfunCommand::Gegenbauer { alpha, n, x } => {
            show(eval_poly(HypergroupIndex::new(alpha)?, n, x)?)
        }
        SpecfunCommand::Weight { alpha, n } => show(weight(HypergroupIndex::new(alpha)?, n)),
        SpecfunCommand::Linearization { alpha, m, n } => {
            let row = linearization(HypergroupIndex::new(alpha)?, m, n)?;
            let law = SparseMeasure::signed_from_pairs(row.iter());
            let mut out = io::stdout().lock();
            write_measure_csv(&law, &mut out, fmt)?;
        }
        SpecfunCommand::Drift { alpha, mu } => {
            let idx = HypergroupIndex::new(alpha)?;
            let mu = parse_mu_spec(&mu)?;
            println!("C,{}", format_number(drift_constant(idx, &mu), fmt));
            let class = match classify(idx) {
                ChainClass::Recurrent => "recurrent",
                ChainClass::Transient => "transient",
            };
            println!("class,{class}");
        }
    }
    Ok(true)
}
