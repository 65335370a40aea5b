use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Numeric payloads are carried as `f64` regardless of the scalar type the
/// computation ran in.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{what} is outside the domain (value {value})")]
    Domain { what: &'static str, value: f64 },

    #[error("profile support does not intersect the model domain")]
    EmptySupport,

    #[error("distribution diverges: {0}")]
    Divergence(String),

    #[error("no maximum: {0}")]
    NoMaximum(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("power-law fit failed: {0}")]
    Fit(String),

    #[error("config: {0}")]
    Config(String),

    #[error("at N={n}: {source}")]
    AtSize {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: impl num_traits::ToPrimitive) -> Self {
        Error::Domain {
            what,
            value: value.to_f64().unwrap_or(f64::NAN),
        }
    }

    /// Attach the system size a failure happened at.
    pub fn at_size(self, n: usize) -> Self {
        Error::AtSize {
            n,
            source: Box::new(self),
        }
    }

    /// The innermost error, with any size annotation stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtSize { source, .. } => source.root(),
            other => other,
        }
    }

    /// Short regime name used on the CLI diagnostic stream.
    pub fn regime(&self) -> &'static str {
        match self.root() {
            Error::Divergence(_) => "divergence",
            Error::NoMaximum(_) => "no-maximum",
            Error::EmptySupport => "empty-support",
            Error::Domain { .. } => "domain",
            Error::Contract(_) => "contract",
            Error::Fit(_) => "fit",
            Error::Config(_) | Error::Argument(_) => "usage",
            Error::Io(_) => "io",
            Error::AtSize { .. } => unreachable!(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
