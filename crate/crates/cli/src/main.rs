//! `cs3vm` command-line pipeline: prepare → solve → evaluate → report, plus
//! a brute-force `oracle` check for small manifests.
//!
//! Every subcommand prints a JSON summary on stdout. Failures print
//! `{"error": {"kind": ..., "message": ...}}` on stderr and exit with status 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cs3vm::config::RunConfig;
use cs3vm::eval::{BenchmarkRecord, Method};
use cs3vm::{pipeline, Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "cs3vm",
    version,
    about = "Cardinality-constrained semi-supervised SVM benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: GlobalOpts,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent (instance, method) cells.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seconds per solve.
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    /// Methods to run, comma separated or repeated.
    #[arg(long, global = true, value_delimiter = ',')]
    method: Vec<String>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true)]
    label_column: Option<String>,
    /// Directory for per-run iteration traces (JSONL).
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    /// Samples drawn per dataset.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Reject hyperparameters outside their plausible ranges.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean, rescale and sample CSV datasets into JSON manifests.
    Prepare {
        /// CSV files; defaults to the datasets listed in the config.
        datasets: Vec<PathBuf>,
    },
    /// Run the configured methods on manifests and write benchmark records.
    Solve {
        /// Manifests; defaults to every sample manifest under the output directory.
        manifests: Vec<PathBuf>,
        /// Output file, `<out-dir>/records.jsonl` by default.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Add metric ratios, SVM deltas and optimality gaps to records.
    Evaluate {
        manifests: Vec<PathBuf>,
        /// Input file, `<out-dir>/records.jsonl` by default.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Output file, `<out-dir>/evaluated.jsonl` by default.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write ECDF, boxplot and summary CSV files.
    Report {
        /// Input file, `<out-dir>/evaluated.jsonl` by default.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Runs slower than this count as unsolved; defaults to the time limit.
        #[arg(long)]
        censor_limit: Option<f64>,
        #[arg(long, default_value_t = 101)]
        grid_points: usize,
    },
    /// Compare branch-and-bound with full enumeration on small manifests.
    Oracle {
        manifests: Vec<PathBuf>,
        #[arg(long, default_value_t = 16)]
        max_binaries: usize,
    },
}

fn load_config(o: &GlobalOpts) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(j) = o.jobs {
        cfg.jobs = j;
    }
    if let Some(t) = o.time_limit {
        cfg.time_limit = t;
    }
    if !o.method.is_empty() {
        cfg.methods = o
            .method
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<Result<_>>()?;
    }
    if let Some(c) = &o.label_column {
        cfg.label_column = c.clone();
    }
    if let Some(n) = o.samples {
        cfg.samples = n;
    }
    cfg.strict |= o.strict;
    cfg.validate()?;
    Ok(cfg)
}

/// Sample manifests one directory below `out_dir`, sorted by path.
fn discover_manifests(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |e| Error::InvalidArgument(format!("cannot list {}: {e}", out_dir.display()));
    let mut found = Vec::new();
    for entry in std::fs::read_dir(out_dir).map_err(io)? {
        let dir = entry.map_err(io)?.path();
        if !dir.is_dir() {
            continue;
        }
        for f in std::fs::read_dir(&dir).map_err(io)? {
            let p = f.map_err(io)?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("sample_") && name.ends_with(".json") {
                found.push(p);
            }
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no sample manifests under {}",
            out_dir.display()
        )));
    }
    Ok(found)
}

fn manifests_or_discover(given: Vec<PathBuf>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if given.is_empty() {
        discover_manifests(out_dir)
    } else {
        Ok(given)
    }
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    let mut cfg = load_config(&cli.opts)?;
    let out_dir = &cli.opts.out_dir;
    match cli.command {
        Command::Prepare { datasets } => {
            if !datasets.is_empty() {
                cfg.datasets = datasets;
            }
            let manifests = pipeline::prepare(&cfg, out_dir)?;
            Ok(json!({ "manifests": manifests }))
        }
        Command::Solve { manifests, records } => {
            let manifests = manifests_or_discover(manifests, out_dir)?;
            let recs = pipeline::solve_all(&manifests, &cfg, cli.opts.trace.as_deref())?;
            let path = records.unwrap_or_else(|| out_dir.join("records.jsonl"));
            pipeline::write_jsonl(&path, &recs)?;
            let errors = recs.iter().filter(|r| r.error.is_some()).count();
            Ok(json!({ "records": path, "count": recs.len(), "errors": errors }))
        }
        Command::Evaluate {
            manifests,
            records,
            output,
        } => {
            let manifests = manifests_or_discover(manifests, out_dir)?;
            let input = records.unwrap_or_else(|| out_dir.join("records.jsonl"));
            let mut recs: Vec<BenchmarkRecord> = pipeline::read_jsonl(&input)?;
            pipeline::evaluate(&mut recs, &manifests, &cfg)?;
            let path = output.unwrap_or_else(|| out_dir.join("evaluated.jsonl"));
            pipeline::write_jsonl(&path, &recs)?;
            Ok(json!({ "records": path, "count": recs.len() }))
        }
        Command::Report {
            records,
            censor_limit,
            grid_points,
        } => {
            let input = records.unwrap_or_else(|| out_dir.join("evaluated.jsonl"));
            let recs: Vec<BenchmarkRecord> = pipeline::read_jsonl(&input)?;
            let files = pipeline::report(
                &recs,
                censor_limit.unwrap_or(cfg.time_limit),
                grid_points,
                out_dir,
            )?;
            Ok(json!({
                "ecdf": files.ecdf,
                "boxplot": files.boxplot,
                "summary": files.summary,
            }))
        }
        Command::Oracle {
            manifests,
            max_binaries,
        } => {
            let manifests = manifests_or_discover(manifests, out_dir)?;
            let checks = manifests
                .iter()
                .map(|p| pipeline::oracle_check(p, &cfg, max_binaries))
                .collect::<Result<Vec<_>>>()?;
            if let Some(bad) = checks.iter().find(|c| !c.agree) {
                return Err(Error::Solver(format!(
                    "{}: branch-and-bound {:?} disagrees with enumeration {:?}",
                    bad.instance, bad.branch_and_bound, bad.brute_force
                )));
            }
            Ok(json!({ "checks": checks }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::debug!("{e:?}");
            let err = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{err}");
            ExitCode::FAILURE
        }
    }
}
