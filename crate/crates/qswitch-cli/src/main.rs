//! Command-line front end: capacity sweeps, yield tables, stability
//! simulations, and self-verification, all driven by one flat config.
//!
//! Exit codes: 0 success, 1 invalid input or I/O failure, 2 verification
//! check failure. Output files are written to a temp file and renamed,
//! so a failed run never leaves a partial file behind.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use qswitch::bell::{NoiseClass, ProtocolId};
use qswitch::capacity::{
    boundary_csv, boundary_sweep, capacity_boundary, certificate_violation, enumerate_schedules,
    CapacityOptions, Schedule, LP_TOL,
};
use qswitch::config::SwitchConfig;
use qswitch::link::SwapMatrix;
use qswitch::model::SwitchModel;
use qswitch::numfmt::format_sig;
use qswitch::purify::{monte_carlo_yield_oracle, plan_rounds, yield_model};
use qswitch::sim::{estimate_stability, mw_ps_schedule, run_replica};

#[derive(Parser)]
#[command(
    name = "qswitch",
    version,
    about = "Capacity analysis and stability simulation for an entanglement switch"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the capacity-region boundary and write it as CSV (and JSON).
    Capacity(CapacityCmd),
    /// Tabulate the purification yield distribution and its mean.
    Yield(YieldCmd),
    /// Run max-weight simulations and report a stability verdict.
    Simulate(SimulateCmd),
    /// Run internal cross-checks and report per-check deltas.
    Verify(VerifyCmd),
}

/// Config resolution shared by all subcommands. Sources apply in order:
/// preset, config file, --arch, --set (last wins).
#[derive(Args)]
struct ConfigArgs {
    /// Named preset to start from.
    #[arg(long, default_value = "table4")]
    preset: String,
    /// Key-value config file applied on top of the preset.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Architecture shorthand: PS, SP, or NoiseLess.
    #[arg(long, value_name = "ARCH")]
    arch: Option<String>,
    /// Inline override, repeatable; applied after everything else.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<SwitchConfig> {
        let mut config = SwitchConfig::preset(&self.preset)?;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            config = config
                .parse(&text)
                .with_context(|| format!("in {}", path.display()))?;
        }
        if let Some(arch) = &self.arch {
            config.apply_override(&format!("switch.architecture={arch}"))?;
        }
        for assignment in &self.set {
            config.apply_override(assignment)?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct CapacityCmd {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of boundary directions, uniform over the first quadrant.
    #[arg(long, default_value_t = 17)]
    angles: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write the full sweep as capacity_boundary.json.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct YieldCmd {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateCmd {
    #[command(flatten)]
    config: ConfigArgs,
    /// Load relative to the boundary point along --along.
    #[arg(long)]
    scale: Option<f64>,
    /// Boundary direction as comma weights over pairs (padded with 0).
    #[arg(long, value_name = "W,W,...")]
    along: Option<String>,
    /// Explicit per-pair arrival rates; overrides --scale/--along.
    #[arg(long, value_name = "R,R,...")]
    rates: Option<String>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write a per-slot NDJSON trace of the first replica to this path.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyCmd {
    /// Which suite to run: yield, mw, lp, or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are success; usage mistakes are invalid input.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Capacity(cmd) => cmd_capacity(&cmd),
        Command::Yield(cmd) => cmd_yield(&cmd),
        Command::Simulate(cmd) => cmd_simulate(&cmd),
        Command::Verify(cmd) => cmd_verify(&cmd),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Writes the whole file or nothing: temp file in the target directory,
/// then an atomic rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn capacity_options(config: &SwitchConfig) -> CapacityOptions {
    CapacityOptions {
        p_cut: config.p_cut,
        column_cap: config.column_cap,
        ..CapacityOptions::default()
    }
}

fn cmd_capacity(cmd: &CapacityCmd) -> anyhow::Result<ExitCode> {
    let config = cmd.config.resolve()?;
    let model = SwitchModel::build(&config)?;
    let opts = capacity_options(&config);
    let points = boundary_sweep(cmd.angles, &model.capacity, &opts)?;
    let csv = boundary_csv(config.architecture, config.protocol.name(), &points);
    write_atomic(&cmd.out.join("capacity_boundary.csv"), csv.as_bytes())?;
    if cmd.json {
        let mut json = serde_json::to_string_pretty(&points)?;
        json.push('\n');
        write_atomic(&cmd.out.join("capacity_boundary.json"), json.as_bytes())?;
    }
    let mid = &points[points.len() / 2];
    println!(
        "{} {}: {} boundary points, lambda* at the symmetric direction {}",
        config.architecture.label(),
        config.protocol.name(),
        points.len(),
        format_sig(mid.result.lambda_star, 12),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_yield(cmd: &YieldCmd) -> anyhow::Result<ExitCode> {
    let config = cmd.config.resolve()?;
    let model = SwitchModel::build(&config)?;
    let ym = model
        .yield_model
        .as_ref()
        .ok_or_else(|| anyhow!("the NoiseLess architecture has no purification yield"))?;
    let spec = model.spec.as_ref().expect("yield model implies a schedule");

    let mut pmf = String::from("x,y,probability\n");
    for x in 0..=ym.x_max() {
        for (y, &p) in ym.row(x).iter().enumerate() {
            pmf.push_str(&format!("{x},{y},{}\n", format_sig(p, 12)));
        }
    }
    write_atomic(&cmd.out.join("yield_pmf.csv"), pmf.as_bytes())?;

    let mut mean = String::from("x,mean\n");
    for x in 0..=ym.x_max() {
        mean.push_str(&format!("{x},{}\n", format_sig(ym.mean(x), 12)));
    }
    write_atomic(&cmd.out.join("yield_mean.csv"), mean.as_bytes())?;

    println!(
        "{} {}: {} purification rounds, E[Y | X = {}] = {}",
        config.architecture.label(),
        config.protocol.name(),
        spec.rounds,
        ym.x_max(),
        format_sig(ym.mean(ym.x_max()), 12),
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_list(text: &str, what: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad {what} entry '{}'", v.trim()))
        })
        .collect()
}

/// Expands a comma list to pair length: single values broadcast, short
/// lists pad with zeros.
fn expand_pairs(mut values: Vec<f64>, np: usize, what: &str) -> anyhow::Result<Vec<f64>> {
    if values.len() == 1 {
        return Ok(vec![values[0]; np]);
    }
    if values.len() > np {
        bail!("{what} has {} entries but there are {np} pairs", values.len());
    }
    values.resize(np, 0.0);
    Ok(values)
}

fn cmd_simulate(cmd: &SimulateCmd) -> anyhow::Result<ExitCode> {
    let mut config = cmd.config.resolve()?;
    if let Some(h) = cmd.horizon {
        config.horizon = h;
    }
    if let Some(r) = cmd.replicas {
        config.replicas = r;
    }
    if let Some(s) = cmd.seed {
        config.seed = s;
    }
    let model = SwitchModel::build(&config)?;
    let np = config.pair_count();

    // Rate resolution: explicit --rates, else a scaled boundary point,
    // else the config's own rates.
    let mut boundary_lambda = None;
    let rates: Vec<f64> = if let Some(text) = &cmd.rates {
        expand_pairs(parse_list(text, "--rates")?, np, "--rates")?
    } else if let Some(scale) = cmd.scale {
        if !(scale.is_finite() && scale >= 0.0) {
            bail!("--scale must be a finite nonnegative number");
        }
        let along = match &cmd.along {
            Some(text) => expand_pairs(parse_list(text, "--along")?, np, "--along")?,
            None => vec![1.0; np],
        };
        let opts = capacity_options(&config);
        let point = capacity_boundary(&along, &model.capacity, &opts)?;
        boundary_lambda = Some(point.lambda_star);
        point.rates.iter().map(|r| r * scale).collect()
    } else {
        model.rates()
    };

    let report = estimate_stability(
        &model.sim,
        &rates,
        config.horizon,
        config.replicas,
        config.seed,
        config.arrival_process,
    )?;

    if let Some(trace_path) = &cmd.trace {
        let run = run_replica(
            &model.sim,
            &rates,
            config.horizon,
            config.seed,
            config.arrival_process,
            true,
        )?;
        let mut ndjson = String::new();
        for slot in run.trace.as_deref().unwrap_or_default() {
            ndjson.push_str(&serde_json::to_string(slot)?);
            ndjson.push('\n');
        }
        write_atomic(trace_path, ndjson.as_bytes())?;
    }

    let doc = serde_json::json!({
        "architecture": config.architecture.label(),
        "protocol": config.protocol.name(),
        "rates": rates,
        "scale": cmd.scale,
        "boundary_lambda": boundary_lambda,
        "report": report,
    });
    let mut json = serde_json::to_string_pretty(&doc)?;
    json.push('\n');
    write_atomic(&cmd.out.join("stability.json"), json.as_bytes())?;

    println!(
        "{} verdict: {:?} (median slope {}, median tail queue {})",
        config.architecture.label(),
        report.verdict,
        format_sig(report.median_slope, 12),
        format_sig(report.median_tail_mean, 12),
    );
    Ok(ExitCode::SUCCESS)
}

struct CheckLog {
    failures: usize,
}

impl CheckLog {
    fn new() -> Self {
        Self { failures: 0 }
    }

    fn check(&mut self, name: &str, delta: f64, tol: f64) {
        let ok = delta <= tol;
        if !ok {
            self.failures += 1;
        }
        println!(
            "{} {name}: delta {} (tol {})",
            if ok { "PASS" } else { "FAIL" },
            format_sig(delta, 12),
            format_sig(tol, 12),
        );
    }
}

/// Total variation distance between two pmfs over the same support.
fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn verify_yield(log: &mut CheckLog, seed: u64) -> anyhow::Result<()> {
    let werner = NoiseClass::Werner.state(0.9)?;
    let binary = NoiseClass::Binary.state(0.9)?;
    let cases = [
        ("dejmps-binary", ProtocolId::DejmpsBinary, binary, 0.95),
        ("dejmps-bd", ProtocolId::DejmpsBellDiagonal, werner, 0.985),
        ("bbpssw", ProtocolId::BbpsswWerner, werner, 0.92),
        ("pumping", ProtocolId::Pumping(NoiseClass::Werner), werner, 0.93),
    ];
    const SAMPLES: usize = 100_000;
    for (i, (name, proto, input, f_target)) in cases.into_iter().enumerate() {
        let spec = plan_rounds(proto, input, f_target, 16)?;
        let ym = yield_model(&spec, 8)?;
        for x in [4usize, 8] {
            let mc = monte_carlo_yield_oracle(&spec, x, SAMPLES, seed + i as u64);
            log.check(
                &format!("yield {name} L={} x={x} tv", spec.rounds),
                tv_distance(ym.row(x), &mc),
                0.01,
            );
        }
    }
    Ok(())
}

fn verify_mw(log: &mut CheckLog, seed: u64) -> anyhow::Result<()> {
    // Deterministic xorshift instance generator; the checks compare two
    // exact searches, so the distribution does not matter.
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).max(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let k = 3;
    let swap = SwapMatrix::from_constant(k, 0.9)?;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let avail: Vec<usize> = (0..k).map(|_| (next() % 5) as usize).collect();
        let queues: Vec<u32> = (0..3).map(|_| (next() % 50) as u32).collect();
        let chosen = mw_ps_schedule(&avail, &queues, &swap)?;
        let weight = |s: &Schedule| {
            s.pair_counts()
                .iter()
                .zip(&queues)
                .map(|(&pi, &q)| pi as f64 * 0.9 * q as f64)
                .sum::<f64>()
        };
        let best = enumerate_schedules(&avail, false, 1 << 20)?
            .iter()
            .map(weight)
            .fold(0.0, f64::max);
        worst = worst.max((best - weight(&chosen)).abs());
    }
    log.check("mw argmax vs brute force (200 instances)", worst, 0.0);
    Ok(())
}

fn verify_lp(log: &mut CheckLog) -> anyhow::Result<()> {
    let mut config = SwitchConfig {
        alpha_max: 3,
        x_max: 8,
        ..SwitchConfig::default()
    };
    for arch in ["PS", "SP"] {
        config.apply_override(&format!("switch.architecture={arch}"))?;
        config.validate()?;
        let model = SwitchModel::build(&config)?;
        let full = CapacityOptions {
            maximal_only: false,
            ..capacity_options(&config)
        };
        let maximal = capacity_options(&config);
        let mut worst_gap = 0.0f64;
        let mut worst_cert = 0.0f64;
        for weights in [[1.0, 1.0, 1.0], [1.0, 1.0, 0.0], [2.0, 1.0, 3.0]] {
            let a = capacity_boundary(&weights, &model.capacity, &maximal)?;
            let b = capacity_boundary(&weights, &model.capacity, &full)?;
            worst_gap = worst_gap.max((a.lambda_star - b.lambda_star).abs());
            worst_cert = worst_cert.max(certificate_violation(&model.capacity, &a));
        }
        log.check(&format!("lp {arch} maximal vs full columns"), worst_gap, LP_TOL);
        log.check(&format!("lp {arch} certificate violation"), worst_cert, LP_TOL);
    }
    Ok(())
}

fn cmd_verify(cmd: &VerifyCmd) -> anyhow::Result<ExitCode> {
    let mut log = CheckLog::new();
    let known = ["yield", "mw", "lp", "all"];
    if !known.contains(&cmd.suite.as_str()) {
        bail!("unknown suite '{}'; expected one of {known:?}", cmd.suite);
    }
    let run_all = cmd.suite == "all";
    if run_all || cmd.suite == "yield" {
        verify_yield(&mut log, cmd.seed)?;
    }
    if run_all || cmd.suite == "mw" {
        verify_mw(&mut log, cmd.seed)?;
    }
    if run_all || cmd.suite == "lp" {
        verify_lp(&mut log)?;
    }
    if log.failures == 0 {
        println!("all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{} check(s) failed", log.failures);
        Ok(ExitCode::from(2))
    }
}
