//! erglab command-line front end: experiment runner and fuzz harness over
//! the erglab-core numerics. Every run is reproducible from (config, seed);
//! data files carry no timestamps (only the report header does).

pub mod cfg;
pub mod runs;

use std::fmt;

/// CLI-level failures mapped onto the exit-code contract:
/// schema violations exit 2, numeric failures exit 3, property-run
/// failures exit 1 with the counterexample seeds.
#[derive(Debug)]
pub enum CliError {
    Schema(String),
    Numeric(String),
    Property { summary: String, seeds: Vec<String> },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Property { .. } => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema(msg) => write!(f, "schema error: {msg}"),
            CliError::Numeric(msg) => write!(f, "numeric error: {msg}"),
            CliError::Property { summary, seeds } => {
                write!(f, "property failure: {summary}")?;
                for s in seeds {
                    write!(f, "\n  reproduce with seed {s}")?;
                }
                Ok(())
            }
        }
    }
}

impl From<erglab_core::ErgError> for CliError {
    fn from(e: erglab_core::ErgError) -> Self {
        use erglab_core::ErgError::*;
        match e {
            Argument(_) | Format { .. } | Io(_) => CliError::Schema(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Install the global worker pool. `ERGLAB_WORKERS` overrides the default;
/// an explicit flag overrides both. Worker count never affects results.
pub fn init_workers(flag: Option<usize>) {
    let env = std::env::var("ERGLAB_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(env) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
