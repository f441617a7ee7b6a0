use std::fmt;
use std::path::Path;

/// A failed command: printed as `E:<module>:<reason>` on stderr.
#[derive(Debug)]
pub struct CliError {
    pub module: &'static str,
    pub reason: String,
    usage: bool,
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn cli(reason: impl Into<String>) -> Self {
        Self {
            module: "cli",
            reason: reason.into(),
            usage: false,
        }
    }

    /// Bad arguments that clap could not catch on its own; exits with 2.
    pub fn usage(reason: impl Into<String>) -> Self {
        Self {
            usage: true,
            ..Self::cli(reason)
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self {
            module: "io",
            reason: format!("{}: {e}", path.display()),
            usage: false,
        }
    }

    pub fn exit_code(&self) -> u8 {
        if self.usage {
            2
        } else {
            1
        }
    }
}

impl From<swingpinn::Error> for CliError {
    fn from(e: swingpinn::Error) -> Self {
        Self {
            module: e.module(),
            reason: e.to_string(),
            usage: false,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E:{}:{}", self.module, self.reason.replace('\n', " "))
    }
}
