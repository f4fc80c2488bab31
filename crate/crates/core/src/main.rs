use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use byzfloor::aggregators::robustness::estimate_kappa;
use byzfloor::aggregators::AggregatorSpec;
use byzfloor::experiments::{self, output, Suite};
use byzfloor::problems::dissimilarity::{certify_dissimilarity, minimal_g};
use byzfloor::problems::ProblemInstance;
use byzfloor::trainer::{RecordMode, Trainer};

const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_NUMERIC: u8 = 4;
const THREADS_ENV: &str = "BYZFLOOR_THREADS";

#[derive(Parser)]
#[command(name = "byzfloor", version, about = "Byzantine-robust distributed SGD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write trace.csv and summary.json.
    Run {
        config: PathBuf,
        /// Output directory (default: runs/<config stem>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record every iteration instead of the floor window only.
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Run a grid sweep and report the best cell per group.
    Sweep {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in verification checks.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::Fast)]
        suite: SuiteArg,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Empirically estimate the robustness coefficient of a rule.
    EstimateKappa {
        #[arg(long)]
        rule: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        b: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trimming or selection parameter for cwtm and multi_krum.
        #[arg(long)]
        q: Option<usize>,
        /// Target κ for the oracle rule.
        #[arg(long)]
        kappa: Option<f64>,
    },
    /// Certify (G, B)-dissimilarity of a quadratic instance.
    Certify {
        /// `hetero`, `noise`, `synthetic`, or a configuration file with a quadratic problem.
        #[arg(long)]
        instance: String,
        #[arg(long = "G")]
        g: f64,
        #[arg(long = "B")]
        b: f64,
        /// Curvature parameter of the built-in constructions.
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Noise level of the built-in noise construction.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Fast,
    Full,
}

enum Outcome {
    Ok,
    VerificationFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_pool() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match dispatch(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(EXIT_VERIFY),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<byzfloor::Error>()) {
        Some(byzfloor::Error::NonFinite(_)) => EXIT_NUMERIC,
        Some(byzfloor::Error::Io(_)) => 1,
        Some(_) => EXIT_CONFIG,
        None => 1,
    }
}

fn configure_pool() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = raw.trim().parse().with_context(|| format!("{THREADS_ENV} must be a positive integer"))?;
    if threads == 0 {
        bail!("{THREADS_ENV} must be a positive integer");
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn dispatch(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Run { config, out, emit_plot_data } => cmd_run(&config, out, emit_plot_data),
        Command::Sweep { file, out } => cmd_sweep(&file, out),
        Command::Verify { suite, json } => cmd_verify(suite, json),
        Command::EstimateKappa { rule, n, b, samples, dim, seed, q, kappa } => {
            let mut text = format!("aggregator.rule = {rule}\n");
            if let Some(q) = q {
                text += &format!("aggregator.q = {q}\n");
            }
            if let Some(k) = kappa {
                text += &format!("aggregator.kappa = {k}\n");
            }
            let spec = AggregatorSpec::new(experiments::parse_rule(&text)?, n, b)?;
            let est = estimate_kappa(&spec, samples, dim, seed)?;
            println!("{}", serde_json::to_string_pretty(&est)?);
            Ok(Outcome::Ok)
        }
        Command::Certify { instance, g, b, mu, sigma } => cmd_certify(&instance, g, b, mu, sigma),
    }
}

fn run_dir(out: Option<PathBuf>, source: &Path) -> PathBuf {
    out.unwrap_or_else(|| {
        let stem = source.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        PathBuf::from("runs").join(stem)
    })
}

fn echo_config(dir: &Path, source: &Path) -> anyhow::Result<String> {
    let text = std::fs::read_to_string(source).with_context(|| format!("reading {}", source.display()))?;
    let name = source.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "config.txt".into());
    output::prepare_run_dir(dir, &name, &text).with_context(|| format!("creating {}", dir.display()))?;
    Ok(text)
}

fn cmd_run(path: &Path, out: Option<PathBuf>, emit_plot_data: bool) -> anyhow::Result<Outcome> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = experiments::parse_config_str(&text).with_context(|| format!("in {}", path.display()))?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let dir = run_dir(out, path);
    echo_config(&dir, path)?;
    let trainer = Trainer::new(&parsed.config)?;
    let mode = if emit_plot_data { RecordMode::Full } else { RecordMode::Summary };
    let record = trainer.run_replicate(0, mode)?;
    let mut trace = BufWriter::new(File::create(dir.join("trace.csv"))?);
    output::write_trace_csv(&mut trace, &record.rows)?;
    trace.flush()?;
    output::write_json(&dir.join("summary.json"), &record.summary)?;
    if let Some(lyap) = &record.lyapunov {
        output::write_json(&dir.join("lyapunov.json"), lyap)?;
    }
    if parsed.config.replicates > 1 {
        let mc = trainer.monte_carlo()?;
        let mut w = BufWriter::new(File::create(dir.join("replicates.csv"))?);
        writeln!(w, "replicate,final_grad_norm_sq,final_f_gap,floor_estimate,time_avg_grad_norm_sq")?;
        for (i, s) in mc.summaries.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{}",
                output::fmt_num(s.final_grad_norm_sq),
                output::fmt_num(s.final_f_gap),
                output::fmt_num(s.floor_estimate),
                output::fmt_num(s.time_avg_grad_norm_sq)
            )?;
        }
        w.flush()?;
        let (floor, floor_se) = mc.mean_se(|i| mc.summaries[i].floor_estimate);
        let (gap, gap_se) = mc.mean_se(|i| mc.summaries[i].final_f_gap);
        let report = serde_json::json!({
            "replicates": mc.summaries.len(),
            "floor_estimate": { "mean": floor, "se": floor_se },
            "final_f_gap": { "mean": gap, "se": gap_se },
        });
        output::write_json(&dir.join("monte_carlo.json"), &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&record.summary)?);
    eprintln!("wrote {}", dir.display());
    Ok(Outcome::Ok)
}

fn cmd_sweep(path: &Path, out: Option<PathBuf>) -> anyhow::Result<Outcome> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = experiments::parse_sweep_str(&text).with_context(|| format!("in {}", path.display()))?;
    let dir = run_dir(out, path);
    echo_config(&dir, path)?;
    let result = experiments::run_sweep(&spec)?;
    let mut cells = BufWriter::new(File::create(dir.join("cells.csv"))?);
    output::write_sweep_csv(&mut cells, &result)?;
    cells.flush()?;
    let mut best = BufWriter::new(File::create(dir.join("best.csv"))?);
    output::write_best_csv(&mut best, &result)?;
    best.flush()?;
    let failed = result.cells.iter().filter(|c| c.error.is_some()).count();
    output::write_best_csv(std::io::stdout().lock(), &result)?;
    eprintln!("{} cells, {failed} failed; wrote {}", result.cells.len(), dir.display());
    Ok(Outcome::Ok)
}

fn cmd_verify(suite: SuiteArg, json: Option<PathBuf>) -> anyhow::Result<Outcome> {
    let suite = match suite {
        SuiteArg::Fast => Suite::Fast,
        SuiteArg::Full => Suite::Full,
    };
    let rows = experiments::run_verification(suite)?;
    println!("{:<6} {:<55} {:>22} {:>22} {:>10} {:>8}", "status", "check", "predicted", "measured", "tolerance", "time_s");
    for r in &rows {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!(
            "{status:<6} {:<55} {:>22.15e} {:>22.15e} {:>10.1e} {:>8.3}",
            r.check, r.predicted, r.measured, r.tolerance, r.runtime_s
        );
        println!("       basis: {}; {}", r.basis, r.comparison);
    }
    if let Some(path) = json {
        output::write_json(&path, &rows)?;
    }
    Ok(if rows.iter().all(|r| r.passed) { Outcome::Ok } else { Outcome::VerificationFailed })
}

fn cmd_certify(instance: &str, g: f64, b: f64, mu: f64, sigma: f64) -> anyhow::Result<Outcome> {
    let inst = match instance {
        "hetero" => ProblemInstance::hetero_lower_bound(mu, g, b)?,
        "noise" => ProblemInstance::noise_lower_bound(mu, b, sigma)?,
        "synthetic" => ProblemInstance::synthetic_family(20, 7, mu, g, b)?,
        path => {
            let parsed = experiments::parse_config(Path::new(path)).with_context(|| format!("in {path}"))?;
            parsed.config.build_instance()?
        }
    };
    let cert = certify_dissimilarity(&inst, g, b)?;
    let report = serde_json::json!({
        "G": g,
        "B": b,
        "certificate": cert,
        "holds": cert.holds(),
        "minimal_G": minimal_g(&inst, b)?,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if cert.holds() { Outcome::Ok } else { Outcome::VerificationFailed })
}
