//! Writing a report: `<name>_trials.csv`, `<name>_summary.csv` and
//! `<name>_manifest.json` in the output directory.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::run::{run_spec, Report, RunOptions};
use crate::spec::ExperimentSpec;

/// Environment variable consulted for the output directory when neither
/// the command line nor the spec names one.
pub const OUTPUT_DIR_ENV: &str = "EZAG_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq)]
pub struct Artifacts {
    pub trials: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    artifact_version: &'static str,
    created_unix: u64,
    full: bool,
    trials: u32,
    seed_rule: &'static str,
    first_seed: u64,
    last_seed: u64,
    sizes: &'a [usize],
    trial_rows: usize,
    files: [String; 2],
    spec: String,
}

/// Command line first, then the spec's `output`, then the environment,
/// then `./results`.
pub fn resolve_dir(cli: Option<&Path>, spec: &ExperimentSpec) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| spec.output.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| HarnessError::io(path, e))
}

/// Runs `spec` and writes its artifacts into `dir`. The files are opened
/// before any simulation so an unwritable directory fails fast.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions, dir: &Path) -> Result<Artifacts> {
    spec.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let paths = Artifacts {
        trials: dir.join(format!("{}_trials.csv", spec.name)),
        summary: dir.join(format!("{}_summary.csv", spec.name)),
        manifest: dir.join(format!("{}_manifest.json", spec.name)),
    };
    let mut files = [create(&paths.trials)?, create(&paths.summary)?, create(&paths.manifest)?];
    let report = run_spec(spec, opts)?;
    let bodies = [report.trials_csv()?, report.summary_csv()?, manifest_json(&report, opts, &paths)?];
    for ((file, body), path) in files.iter_mut().zip(&bodies).zip([&paths.trials, &paths.summary, &paths.manifest]) {
        file.write_all(body.as_bytes()).map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(paths)
}

fn manifest_json(report: &Report, opts: &RunOptions, paths: &Artifacts) -> Result<String> {
    let spec = &report.spec;
    let file_name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let m = Manifest {
        name: &spec.name,
        artifact_version: env!("CARGO_PKG_VERSION"),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        full: opts.full,
        trials: spec.trials,
        seed_rule: "seed = base_seed + trial",
        first_seed: spec.seed(0),
        last_seed: spec.seed(spec.trials - 1),
        sizes: &report.sizes,
        trial_rows: report.trials_csv()?.lines().count().saturating_sub(1),
        files: [file_name(&paths.trials), file_name(&paths.summary)],
        spec: spec.to_text(),
    };
    Ok(serde_json::to_string_pretty(&m)? + "\n")
}
