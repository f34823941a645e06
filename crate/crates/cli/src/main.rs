//! Command-line runner for the preset emitter-bath scenarios.
//!
//! ```text
//! emitter2d run --scenario <id> [--config <file>] [--N <sites>] [--g <g>]
//!               [--delta <Δ>] [--n12 <x,y>] [--n <scale>] [--t-final <t>]
//!               [--dt <dt>] [--threads <k>] [--out <dir>] [--dry-run]
//! ```
//!
//! Configuration may also come from a flat `key = value` file (`--config`);
//! explicit command-line flags override file entries. Recognised keys match
//! the flag names: `scenario`, `N`, `g`, `delta`, `n12`, `n`, `t_final`,
//! `dt`, `threads`, `out`.
//!
//! Exit codes: `0` success, `1` configuration error, `2` numerical failure
//! (including I/O problems while writing artifacts), `3` completed run with
//! failed comparisons.
//!
//! Every run with `--out` writes the scenario artifacts plus `manifest.txt`
//! (written atomically via a temporary file and rename) recording the tool
//! version, timestamps, the resolved configuration, the artifact list, and
//! the pass/fail status. Nothing is ever written outside `--out`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use emitter2d::error::Error;
use emitter2d::scenarios::{resolve_plan, run_scenario, ScenarioConfig, ScenarioId, ScenarioRun};

#[derive(Parser)]
#[command(
    name = "emitter2d",
    version,
    about = "Simulator for quantum emitters coupled to a 2D square-lattice bath"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset scenario and report its claim-by-claim outcome.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario id: fig2a|fig2bc|fig3a|fig3bcde|tail|poles|residue4.
    #[arg(long)]
    scenario: Option<String>,

    /// Flat key=value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Lattice edge length (sites per side); default: chosen from the
    /// revival guard for the configured horizon.
    #[arg(long = "N")]
    lattice_n: Option<usize>,

    /// Emitter coupling g in units of J.
    #[arg(long)]
    g: Option<f64>,

    /// Emitter detuning Δ from the band centre in units of J.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,

    /// Two-emitter offset as "x,y" (pair scenarios).
    #[arg(long, allow_hyphen_values = true)]
    n12: Option<String>,

    /// Four-emitter diamond scale n (trapping scenario).
    #[arg(long)]
    n: Option<i64>,

    /// Evolution horizon in units of 1/J (tail: end of the fit window).
    #[arg(long = "t-final")]
    t_final: Option<f64>,

    /// Integrator step in units of 1/J (must satisfy 4J·dt ≤ 0.05).
    #[arg(long)]
    dt: Option<f64>,

    /// Worker threads (default: all cores). Results are independent of the
    /// thread count.
    #[arg(long)]
    threads: Option<usize>,

    /// Output directory for artifacts; nothing is written without it.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Print the resolved plan (lattice size, step, revival guard) and exit
    /// without computing or writing anything.
    #[arg(long)]
    dry_run: bool,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are configuration errors (exit 1), regardless
            // of clap's own exit-code conventions.
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Run(args) => run_command(args),
    };
    std::process::exit(code);
}

/// Scenario settings merged from the config file and the command line.
#[derive(Debug, Default)]
struct MergedConfig {
    scenario: Option<String>,
    lattice_n: Option<usize>,
    g: Option<f64>,
    delta: Option<f64>,
    n12: Option<(i64, i64)>,
    diamond_n: Option<i64>,
    t_final: Option<f64>,
    dt: Option<f64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
}

fn parse_n12(raw: &str) -> Result<(i64, i64), String> {
    let (a, b) = raw
        .split_once(',')
        .ok_or_else(|| format!("expected \"x,y\", got {raw:?}"))?;
    let x = a.trim().parse::<i64>().map_err(|e| format!("bad x in {raw:?}: {e}"))?;
    let y = b.trim().parse::<i64>().map_err(|e| format!("bad y in {raw:?}: {e}"))?;
    Ok((x, y))
}

fn parse_config_file(path: &Path) -> Result<MergedConfig, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    let mut merged = MergedConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value, got {line:?}", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let parse_err = |e: String| format!("line {}: key {key}: {e}", lineno + 1);
        match key {
            "scenario" => merged.scenario = Some(value.to_string()),
            "N" => {
                merged.lattice_n =
                    Some(value.parse().map_err(|e| parse_err(format!("{e}")))?)
            }
            "g" => merged.g = Some(value.parse().map_err(|e| parse_err(format!("{e}")))?),
            "delta" => merged.delta = Some(value.parse().map_err(|e| parse_err(format!("{e}")))?),
            "n12" => merged.n12 = Some(parse_n12(value).map_err(parse_err)?),
            "n" => merged.diamond_n = Some(value.parse().map_err(|e| parse_err(format!("{e}")))?),
            "t_final" => {
                merged.t_final = Some(value.parse().map_err(|e| parse_err(format!("{e}")))?)
            }
            "dt" => merged.dt = Some(value.parse().map_err(|e| parse_err(format!("{e}")))?),
            "threads" => {
                merged.threads = Some(value.parse().map_err(|e| parse_err(format!("{e}")))?)
            }
            "out" => merged.out = Some(PathBuf::from(value)),
            other => return Err(format!("line {}: unknown key {other:?}", lineno + 1)),
        }
    }
    Ok(merged)
}

fn merge(args: &RunArgs) -> Result<MergedConfig, String> {
    let mut merged = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => MergedConfig::default(),
    };
    if let Some(s) = &args.scenario {
        merged.scenario = Some(s.clone());
    }
    if args.lattice_n.is_some() {
        merged.lattice_n = args.lattice_n;
    }
    if args.g.is_some() {
        merged.g = args.g;
    }
    if args.delta.is_some() {
        merged.delta = args.delta;
    }
    if let Some(raw) = &args.n12 {
        merged.n12 = Some(parse_n12(raw).map_err(|e| format!("--n12: {e}"))?);
    }
    if args.n.is_some() {
        merged.diamond_n = args.n;
    }
    if args.t_final.is_some() {
        merged.t_final = args.t_final;
    }
    if args.dt.is_some() {
        merged.dt = args.dt;
    }
    if args.threads.is_some() {
        merged.threads = args.threads;
    }
    if let Some(out) = &args.out {
        merged.out = Some(out.clone());
    }
    Ok(merged)
}

fn run_command(args: RunArgs) -> i32 {
    let dry_run = args.dry_run;
    let merged = match merge(&args) {
        Ok(m) => m,
        Err(msg) => {
            eprintln!("configuration error: {msg}");
            return 1;
        }
    };
    let Some(scenario_raw) = merged.scenario.as_deref() else {
        eprintln!("configuration error: no scenario given (use --scenario or a config file)");
        return 1;
    };
    let scenario: ScenarioId = match scenario_raw.parse() {
        Ok(id) => id,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return 1;
        }
    };

    let mut config = ScenarioConfig::new(scenario);
    config.n = merged.lattice_n;
    config.g = merged.g;
    config.delta = merged.delta;
    config.n12 = merged.n12;
    config.diamond_n = merged.diamond_n;
    config.t_final = merged.t_final;
    config.dt = merged.dt;
    config.out_dir = merged.out.clone();

    // Validate everything (and fix the lattice size) before any work.
    let plan = match resolve_plan(&config) {
        Ok(plan) => plan,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return 1;
        }
    };
    if dry_run {
        print!("{}", plan.describe());
        return 0;
    }

    if let Some(threads) = merged.threads {
        if threads == 0 {
            eprintln!("configuration error: --threads must be ≥ 1");
            return 1;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("configuration error: cannot configure {threads} threads: {e}");
            return 1;
        }
    }

    let started_unix = unix_now();
    let run = match run_scenario(&config) {
        Ok(run) => run,
        Err(Error::Io(e)) => {
            eprintln!("i/o failure: {e}");
            return 2;
        }
        Err(e) => {
            eprintln!("configuration error: {e}");
            return 1;
        }
    };
    let finished_unix = unix_now();

    print!("{}", run.report.to_text());

    if let Some(out) = &merged.out {
        if let Err(e) = write_manifest(out, &run, started_unix, finished_unix) {
            eprintln!("i/o failure: cannot write manifest: {e}");
            return 2;
        }
    }

    if let Some(msg) = &run.report.aborted {
        eprintln!("numerical failure: {msg}");
        2
    } else if !run.report.passed() {
        3
    } else {
        0
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Writes `manifest.txt` atomically (temporary file + rename): tool version,
/// timestamps, resolved configuration, artifact list, pass/fail status.
fn write_manifest(
    out: &Path,
    run: &ScenarioRun,
    started_unix: u64,
    finished_unix: u64,
) -> std::io::Result<()> {
    let mut text = String::new();
    text.push_str("tool = emitter2d\n");
    text.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    text.push_str(&format!("started_unix = {started_unix}\n"));
    text.push_str(&format!("finished_unix = {finished_unix}\n"));
    let status = if run.report.aborted.is_some() {
        "aborted"
    } else if run.report.passed() {
        "pass"
    } else {
        "fail"
    };
    text.push_str(&format!("status = {status}\n"));
    for line in run.plan.describe().lines() {
        text.push_str(&format!("config.{line}\n"));
    }
    let mut files = Vec::new();
    for artifact in &run.artifacts {
        let name = artifact.strip_prefix(out).unwrap_or(artifact);
        files.push(name.display().to_string());
    }
    text.push_str(&format!("files = {}\n", files.len()));
    for (i, name) in files.iter().enumerate() {
        text.push_str(&format!("file.{} = {name}\n", i + 1));
    }

    let tmp = out.join("manifest.txt.tmp");
    let final_path = out.join("manifest.txt");
    fs::write(&tmp, &text)?;
    fs::rename(&tmp, &final_path)
}
