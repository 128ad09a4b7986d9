//! Experiment runner: specs, seeded batch execution and CSV output.

pub mod builtin;
pub mod error;
pub mod output;
pub mod run;
pub mod spec;

pub use error::{HarnessError, Result};
pub use output::{run_experiment, Artifacts};
pub use run::{run_spec, Report, RunOptions};
pub use spec::{ExperimentKind, ExperimentSpec, Mode};

/// Resolves a spec argument: a readable file first, then a built-in name.
pub fn load_spec(arg: &str) -> Result<ExperimentSpec> {
    let path = std::path::Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        return ExperimentSpec::parse(&text);
    }
    builtin::get(arg).ok_or_else(|| HarnessError::UnknownSpec(arg.to_string()))
}
