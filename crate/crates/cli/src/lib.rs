//! Config-driven runner for the lattice studies.
//!
//! `dgl run <config.json>` writes into the output directory:
//!
//! - `report.json`: schema version, normalized config, results, provenance;
//! - `results.json`: the results block alone, byte-stable across runs and
//!   thread counts;
//! - `<table>.csv` / `<table>.dat` and `plot.gp` for every table;
//! - `diagnostic.json` whenever the exit status is non-zero.
//!
//! Exit status: 0 success, 1 hypothesis violated or a check failed, 2 config
//! error, 3 numerical failure.

pub mod config;
pub mod output;
pub mod profile;
pub mod run;

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use config::{load_config, ConfigError, Format, RunConfig, SCHEMA_VERSION};
use output::{plot_script, to_json_bytes, write_file};
use run::{run_experiment, Failure, Outcome, EXIT_CONFIG, EXIT_OK};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DGL_OUT_DIR";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Published config schema, generated from the config types.
pub const CONFIG_SCHEMA: &str = include_str!("../../../schema/config.schema.json");

/// Published report schema.
pub const REPORT_SCHEMA: &str = include_str!("../../../schema/report.schema.json");

pub fn generated_config_schema() -> String {
    let schema = schemars::schema_for!(RunConfig);
    let mut s = serde_json::to_string_pretty(&schema).expect("schema serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

/// `--out`, then the config's `output.directory`, then the environment,
/// then `./dgl_out`.
pub fn resolve_out_dir(args: &RunArgs, cfg: Option<&RunConfig>) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.directory.clone()))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("dgl_out"))
}

fn write_diagnostic(dir: &Path, failure: &Failure, experiment: Option<&str>) {
    let mut record = failure.to_json();
    record["schema_version"] = SCHEMA_VERSION.into();
    record["experiment"] = experiment.into();
    eprintln!("error ({}): {}", failure.kind, failure.message);
    if std::fs::create_dir_all(dir).is_ok() {
        if let Err(e) = write_file(dir, "diagnostic.json", &to_json_bytes(&record)) {
            eprintln!("cannot write diagnostic: {e}");
        }
    }
}

fn io_failure(e: std::io::Error, dir: &Path) -> Failure {
    Failure {
        exit_code: EXIT_CONFIG,
        kind: "config",
        key: Some("output.directory".into()),
        message: format!("cannot write to {}: {e}", dir.display()),
    }
}

fn write_outputs(
    dir: &Path,
    cfg: &RunConfig,
    outcome: &Outcome,
    provenance: Value,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let stale = dir.join("diagnostic.json");
    if stale.exists() {
        std::fs::remove_file(stale)?;
    }
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "config_echo": cfg,
        "results": outcome.results,
        "provenance": provenance,
    });
    write_file(dir, "report.json", &to_json_bytes(&report))?;
    write_file(dir, "results.json", &to_json_bytes(&outcome.results))?;
    for table in &outcome.tables {
        if cfg.output.formats.contains(&Format::Csv) {
            write_file(dir, &format!("{}.csv", table.name), &table.to_csv())?;
        }
        if cfg.output.formats.contains(&Format::Dat) {
            write_file(dir, &format!("{}.dat", table.name), &table.to_dat())?;
        }
    }
    if cfg.output.formats.contains(&Format::Dat) {
        write_file(dir, "plot.gp", plot_script(&outcome.tables).as_bytes())?;
    }
    Ok(())
}

/// Executes `dgl run` and returns the exit status.
pub fn run_command(args: &RunArgs) -> i32 {
    let started = chrono::Utc::now();
    let mut cfg = match load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            write_diagnostic(&resolve_out_dir(args, None), &Failure::from(e), None);
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let dir = resolve_out_dir(args, Some(&cfg));
    let name = cfg.experiment.name();
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();

    let result = match args.threads {
        Some(0) => Err(ConfigError::invalid("--threads", "must be at least 1").into()),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run_experiment(&cfg, &base).map(|o| (o, n))),
            Err(e) => Err(ConfigError::invalid("--threads", e.to_string()).into()),
        },
        None => run_experiment(&cfg, &base).map(|o| (o, rayon::current_num_threads())),
    };
    let (outcome, threads) = match result {
        Ok(r) => r,
        Err(failure) => {
            write_diagnostic(&dir, &failure, Some(name));
            return failure.exit_code;
        }
    };

    let provenance = json!({
        "started": started.to_rfc3339(),
        "finished": chrono::Utc::now().to_rfc3339(),
        "version": VERSION,
        "seed": cfg.seed,
        "threads": threads,
    });
    if let Err(e) = write_outputs(&dir, &cfg, &outcome, provenance) {
        let failure = io_failure(e, &dir);
        eprintln!("error ({}): {}", failure.kind, failure.message);
        return failure.exit_code;
    }
    match &outcome.failure {
        Some(f) => {
            write_diagnostic(&dir, f, Some(name));
            f.exit_code
        }
        None => {
            println!("{name}: ok, outputs in {}", dir.display());
            EXIT_OK
        }
    }
}
