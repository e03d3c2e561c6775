use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// The state left the domain of the right-hand side (non-positive volume).
    #[error("domain error at step {step}: {msg}")]
    Domain { step: usize, msg: String },

    /// Integrated state became non-finite or exceeded the magnitude bound.
    #[error("numeric blowup at step {step}{}", fmt_sample(*.sample))]
    Blowup { step: usize, sample: Option<usize> },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("batch {batch}: {source}")]
    Batch {
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownName {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_sample(sample: Option<usize>) -> String {
    sample
        .map(|s| format!(" in sample {s}"))
        .unwrap_or_default()
}

impl Error {
    /// Attach a sample index to a blowup or domain error raised without one.
    pub fn in_sample(self, index: usize) -> Self {
        match self {
            Error::Blowup { step, sample: None } => Error::Blowup {
                step,
                sample: Some(index),
            },
            Error::Domain { step, msg } => Error::Domain {
                step,
                msg: format!("{msg} (sample {index})"),
            },
            other => other,
        }
    }

    pub fn is_blowup(&self) -> bool {
        match self {
            Error::Blowup { .. } | Error::NonFinite(_) | Error::Domain { .. } => true,
            Error::Batch { source, .. } => source.is_blowup(),
            _ => false,
        }
    }
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn contract_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
