use std::fmt;

/// Failure classes, each with its own exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    External,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Usage,
            msg: msg.into(),
        }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        CliError {
            kind: Kind::Data,
            msg: msg.to_string(),
        }
    }

    pub fn external(msg: impl fmt::Display) -> Self {
        CliError {
            kind: Kind::External,
            msg: msg.to_string(),
        }
    }

    pub fn code(&self) -> i32 {
        match self.kind {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::External => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e)
    }
}

impl From<polysim::scoring::ScoreError> for CliError {
    fn from(e: polysim::scoring::ScoreError) -> Self {
        use polysim::scoring::ScoreError;
        match e {
            ScoreError::Service(_) => CliError::external(e),
            ScoreError::Config(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e),
        }
    }
}

impl From<polysim::encoder::EncodeError> for CliError {
    fn from(e: polysim::encoder::EncodeError) -> Self {
        if e.is_service_failure() {
            CliError::external(e)
        } else {
            CliError::data(e)
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::data(e)
    }
}
