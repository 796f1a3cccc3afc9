//! `spanless` command-line driver.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 on usage
//! errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use spanless::backward::Fault;
use spanless::bench::{cost_by_dimension, flat_compute_check, is_affine, memory_table, oracle_step_costs, Learner};
use spanless::episode::{make_random_walk, render_episodes, sample_episode, Features, MarkovRewardProcess};
use spanless::equivalence::{randomized_suite, shrink_failure, subsumption_suite, EquivalenceReport, Pair, SuiteConfig, Tolerance};
use spanless::fixedpoint::{convergence_run, single_step_process, ConvergenceConfig, ConvergenceTrace, Residuals};
use spanless::{Schedule, StepSchedule};

/// λ used by the built-in random walks in convergence runs unless `--lambda`
/// says otherwise.
const WALK_LAMBDA: f64 = 0.9;

#[derive(Parser, Debug)]
#[command(name = "spanless", version, about = "Span-independent multi-step prediction: oracles, learners and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Randomized forward-view vs backward-view comparison.
    Equiv(EquivArgs),
    /// Reductions of the general learner to its special cases.
    Subsume(SubsumeArgs),
    /// Error trajectory of the general learner against the analytic fixed point.
    Converge(ConvergeArgs),
    /// Memory table and per-step compute report.
    Bench(BenchArgs),
    /// Sample episodes from a process into an episode file.
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EquivArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: u64,
    /// Comma-separated pairs (offline, online, trust, lambda, general) or `all`.
    #[arg(long, default_value = "all", value_parser = parse_pairs)]
    pairs: PairList,
    #[arg(long, default_value_t = 1e-9, value_parser = positive)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1e-12, value_parser = positive)]
    abs_floor: f64,
    /// Smallest and largest feature dimension.
    #[arg(long, num_args = 2, default_values_t = [1, 8])]
    n_range: Vec<usize>,
    /// Smallest and largest episode length.
    #[arg(long, num_args = 2, default_values_t = [1, 50])]
    t_range: Vec<usize>,
    /// Let step sizes exceed 1.2/‖φ‖².
    #[arg(long)]
    unclamped: bool,
    /// Run the learners with a deliberate bug: `trace-decay` or `aux-range`.
    #[arg(long)]
    inject_fault: Option<Fault>,
    /// Where failing cases go; next to `--out` (or the working directory) by default.
    #[arg(long)]
    fail_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SubsumeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: u64,
    #[arg(long, default_value_t = 1e-12, value_parser = positive)]
    abs_floor: f64,
    /// Replace the λ ≡ 1 of the reductions that need it (a negative control).
    #[arg(long, value_parser = unit_interval)]
    lambda: Option<f64>,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[command(flatten)]
    common: Common,
    /// `walk<N>`, `single<N>` or a JSON process file.
    #[arg(long, default_value = "walk5")]
    mrp: String,
    #[arg(long, default_value_t = 200_000, value_parser = clap::value_parser!(u64).range(1..))]
    steps: u64,
    #[arg(long, default_value = "0.5/(1+t/1000)")]
    alpha: Schedule,
    #[arg(long, default_value = "1")]
    beta: Schedule,
    /// Constant λ for every state. Built-in walks default to 0.9.
    #[arg(long, value_parser = unit_interval)]
    lambda: Option<f64>,
    /// Constant γ for every non-terminal state.
    #[arg(long, value_parser = unit_interval)]
    gamma: Option<f64>,
    /// Independent runs with seeds `seed, seed+1, …`.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    record_every: u64,
    /// Exit 1 when the median final trusted-weight error exceeds this.
    #[arg(long, value_parser = positive)]
    max_error: Option<f64>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Only the memory table.
    #[arg(long)]
    memory: bool,
    /// Only the compute report.
    #[arg(long)]
    compute: bool,
    /// Feature dimension for the compute report.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "walk5")]
    mrp: String,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: u64,
    #[arg(long, default_value = "0.1")]
    alpha: Schedule,
    #[arg(long, default_value = "1")]
    beta: Schedule,
}

#[derive(Debug, Clone)]
struct PairList(Vec<Pair>);

fn parse_pairs(s: &str) -> std::result::Result<PairList, String> {
    Pair::parse_list(s).map(PairList).map_err(|e| e.to_string())
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn unit_interval(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("`{s}` is not in [0, 1]")),
    }
}

/// A flag value that parsed but makes no sense; exits like a clap error.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Check outcome of a command that ran to completion.
enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Equiv(a) => equiv(a),
        Command::Subsume(a) => subsume(a),
        Command::Converge(a) => converge(a),
        Command::Bench(a) => bench(a),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) if e.downcast_ref::<Usage>().is_some() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn header(command: &str, seed: u64, config: &str) -> String {
    format!("# spanless {command}\n# seed={seed}\n# config: {config}\n")
}

fn equiv(a: EquivArgs) -> Result<Outcome> {
    let pairs = a.pairs.0.clone();
    let cfg = SuiteConfig {
        episodes: a.episodes as usize,
        n_range: range(&a.n_range, "n-range")?,
        horizon_range: range(&a.t_range, "t-range")?,
        seed: a.common.seed,
        tolerance: Tolerance { rel: a.rel_tol, abs_floor: a.abs_floor },
        clamp_alpha: !a.unclamped,
        fault: a.inject_fault,
    };
    let outcome = randomized_suite(&pairs, &cfg);
    let names: Vec<&str> = pairs.iter().map(|p| p.name()).collect();
    let mut text = header(
        "equiv",
        cfg.seed,
        &format!(
            "episodes={} pairs={} rel_tol={:e} abs_floor={:e} n={:?} T={:?} clamp_alpha={} fault={:?}",
            cfg.episodes,
            names.join("+"),
            a.rel_tol,
            a.abs_floor,
            cfg.n_range,
            cfg.horizon_range,
            cfg.clamp_alpha,
            a.inject_fault
        ),
    );
    let coverage: Vec<String> = outcome.coverage.iter().map(|(d, c)| format!("[{}]:{c}", d.name())).collect();
    let _ = writeln!(text, "# coverage: {}", coverage.join(" "));
    let _ = writeln!(text, "{}", EquivalenceReport::csv_header());
    for r in &outcome.reports {
        let _ = writeln!(text, "{}", r.csv_row());
    }
    emit(&a.common, &text)?;

    let fail_dir = a
        .fail_dir
        .clone()
        .or_else(|| a.common.out.as_deref().and_then(Path::parent).map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    for (pair, r) in pairs.iter().zip(&outcome.reports) {
        let Some(failed) = &r.first_failure else { continue };
        fs::create_dir_all(&fail_dir)?;
        let raw = fail_dir.join(format!("fail-{}-{}.episode", pair.name(), failed.episode_index));
        fs::write(&raw, failed.case.render()?)?;
        eprintln!("{}: failing case written to {}", pair.name(), raw.display());
        match shrink_failure(&failed.case, *pair, &cfg.tolerance, cfg.fault) {
            Ok(small) => {
                let path = fail_dir.join(format!("fail-{}-{}.shrunk.episode", pair.name(), failed.episode_index));
                fs::write(&path, small.render()?)?;
                eprintln!("{}: shrunk to T={} at {}", pair.name(), small.episode.horizon(), path.display());
            }
            Err(e) => eprintln!("{}: could not shrink: {e}", pair.name()),
        }
    }
    Ok(if outcome.pass() { Outcome::Pass } else { Outcome::Fail })
}

fn range(v: &[usize], flag: &str) -> Result<std::ops::RangeInclusive<usize>> {
    match v {
        [lo, hi] if *lo >= 1 && lo <= hi => Ok(*lo..=*hi),
        _ => Err(usage(format!("--{flag} needs two values 1 <= lo <= hi"))),
    }
}

fn subsume(a: SubsumeArgs) -> Result<Outcome> {
    let reports = subsumption_suite(a.episodes as usize, a.common.seed, a.abs_floor, a.lambda)?;
    let mut text = header(
        "subsume",
        a.common.seed,
        &format!("episodes={} abs_tol={:e} lambda_override={:?}", a.episodes, a.abs_floor, a.lambda),
    );
    let _ = writeln!(text, "{}", EquivalenceReport::csv_header());
    for r in &reports {
        let _ = writeln!(text, "{}", r.csv_row());
    }
    emit(&a.common, &text)?;
    Ok(if reports.iter().all(|r| r.pass) { Outcome::Pass } else { Outcome::Fail })
}

/// Resolves `--mrp`. Returns the process and whether it is a built-in walk.
fn load_mrp(name: &str, seed: u64) -> Result<(MarkovRewardProcess, bool)> {
    if let Some(k) = name.strip_prefix("walk") {
        let k: usize = k.parse().map_err(|_| usage(format!("bad walk size in `{name}`")))?;
        return Ok((make_random_walk(k, 1.0, Features::Tabular)?, true));
    }
    if let Some(k) = name.strip_prefix("single") {
        let k: usize = k.parse().map_err(|_| usage(format!("bad state count in `{name}`")))?;
        if k == 0 {
            return Err(usage(format!("`{name}` needs at least one start state")));
        }
        return Ok((single_step_process(k, k.min(3), seed), false));
    }
    let text = fs::read_to_string(name).map_err(|_| usage(format!("`{name}` is neither walk<N>, single<N> nor a readable file")))?;
    let mrp: MarkovRewardProcess = serde_json::from_str(&text).with_context(|| format!("parsing {name}"))?;
    mrp.validate()?;
    Ok((mrp, false))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn converge(a: ConvergeArgs) -> Result<Outcome> {
    let (mut mrp, walk) = load_mrp(&a.mrp, a.common.seed)?;
    let lambda = a.lambda.or(walk.then_some(WALK_LAMBDA));
    if let Some(l) = lambda {
        mrp.lambda.iter_mut().for_each(|x| *x = l);
    }
    if let Some(g) = a.gamma {
        for (s, x) in mrp.gamma.iter_mut().enumerate() {
            if !mrp.terminal[s] {
                *x = g;
            }
        }
    }
    mrp.validate()?;

    let mut text = header(
        "converge",
        a.common.seed,
        &format!(
            "mrp={} steps={} alpha={} beta={} lambda={:?} gamma={:?} seeds={}",
            a.mrp, a.steps, a.alpha, a.beta, lambda, a.gamma, a.seeds
        ),
    );
    let mut traces = Vec::new();
    for k in 0..a.seeds {
        let cfg = ConvergenceConfig {
            alpha: a.alpha.clone(),
            beta: a.beta.clone(),
            residuals: Residuals::Bootstrapped,
            steps: a.steps as usize,
            record_every: a.record_every as usize,
            seed: a.common.seed + k,
            theta0: None,
        };
        match convergence_run(&mrp, &cfg) {
            Ok(t) => traces.push((cfg.seed, t)),
            Err(e) => {
                eprintln!("error: {e}");
                return Ok(Outcome::Fail);
            }
        }
    }
    let theta_star: Vec<String> = traces[0].1.target.theta_star.iter().map(|x| format!("{x:?}")).collect();
    let _ = writeln!(text, "# theta_star: {}", theta_star.join(" "));
    let med_trusted = median(traces.iter().map(|(_, t)| t.final_error_trusted()).collect());
    let med_online = median(traces.iter().map(|(_, t)| t.final_error_online()).collect());
    let trusted_wins = traces.iter().filter(|(_, t)| t.final_error_trusted() <= t.final_error_online()).count();
    let _ = writeln!(
        text,
        "# final: median_error_online={med_online:e} median_error_trusted={med_trusted:e} trusted_le_online={trusted_wins}/{}",
        traces.len()
    );
    let _ = writeln!(text, "seed,{}", ConvergenceTrace::csv_header());
    for (seed, t) in &traces {
        for row in t.csv_rows() {
            let _ = writeln!(text, "{seed},{row}");
        }
    }
    emit(&a.common, &text)?;
    eprintln!("median final error: online {med_online:.4e}, trusted {med_trusted:.4e}");
    Ok(match a.max_error {
        Some(limit) if med_trusted.is_nan() || med_trusted > limit => Outcome::Fail,
        _ => Outcome::Pass,
    })
}

fn bench(a: BenchArgs) -> Result<Outcome> {
    let (memory, compute) = if a.memory || a.compute { (a.memory, a.compute) } else { (true, true) };
    let mut text = header("bench", a.common.seed, &format!("memory={memory} compute={compute} n={}", a.n));
    let mut pass = true;
    if memory {
        let _ = writeln!(text, "# memory: 1e6 features x 4 bytes every 10 ms");
        let _ = writeln!(text, "span,conventional_bytes,span_independent_bytes");
        for (label, conv, flat) in memory_table() {
            let _ = writeln!(text, "{label},{conv},{flat}");
        }
    }
    if compute {
        let n = a.n as usize;
        let lengths = [10, 100, 1000];
        if memory {
            text.push('\n');
        }
        let _ = writeln!(text, "# compute: multiply-adds per step, T in {lengths:?}");
        let _ = writeln!(text, "view,n,per_step_flops,flat,affine_in_n");
        for learner in Learner::ALL {
            let r = flat_compute_check(learner, &lengths, n, a.common.seed)?;
            let affine = is_affine(&cost_by_dimension(learner, &[1, 2, 4, 8], a.common.seed)?);
            pass &= r.pass && affine;
            let cost = r.constant.map_or_else(|| "varies".to_string(), |c| c.to_string());
            let _ = writeln!(text, "{},{n},{cost},{},{affine}", learner.name(), r.pass);
        }
        let oracle = oracle_step_costs(n, 100, a.common.seed)?;
        let grows = oracle.windows(2).all(|w| w[1] > w[0]);
        pass &= grows;
        let _ = writeln!(
            text,
            "forward-oracle,{n},{}..{},{},false",
            oracle[0],
            oracle[oracle.len() - 1],
            !grows
        );
    }
    emit(&a.common, &text)?;
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}

fn generate(a: GenerateArgs) -> Result<Outcome> {
    let (mrp, _) = load_mrp(&a.mrp, a.common.seed)?;
    let sched = StepSchedule { alpha: a.alpha.clone(), beta: a.beta.clone() };
    let episodes = (0..a.episodes)
        .map(|i| sample_episode(&mrp, &sched, a.common.seed.wrapping_add(i)))
        .collect::<spanless::Result<Vec<_>>>()?;
    let body = render_episodes(&episodes)?;
    // The episode header has to stay on the first line.
    let (first, rest) = body.split_once('\n').unwrap_or((&body, ""));
    let meta = header(
        "generate",
        a.common.seed,
        &format!("mrp={} episodes={} alpha={} beta={}", a.mrp, a.episodes, a.alpha, a.beta),
    );
    emit(&a.common, &format!("{first}\n{meta}{rest}"))?;
    Ok(Outcome::Pass)
}
