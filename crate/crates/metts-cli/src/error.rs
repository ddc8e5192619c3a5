use std::fmt::Display;
use std::path::Path;

/// Failures are sorted into the three exit classes the tool promises:
/// 1 for config problems, 2 for numerical ones, 3 for I/O.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

/// Config error naming the exact key path that is wrong.
pub fn config_err(path: &str, msg: impl Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

/// Library failure during a run; the sampler already attaches step context.
pub fn num_err(e: metts::Error) -> CliError {
    CliError::Numerical(e.to_string())
}

/// I/O failure tagged with the file it concerns.
pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}
