use thiserror::Error;

/// Errors produced anywhere in the scattering engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("potential singular at rho={rho}, theta={theta}")]
    Singularity { rho: f64, theta: f64 },

    #[error("operator assembly failed at rho={rho}: {reason}")]
    Assembly { rho: f64, reason: String },

    #[error("overlap metric is ill-conditioned (smallest eigenvalue {smallest:e})")]
    Conditioning { smallest: f64 },

    #[error("no avoided crossing found between curves {i} and {j} in the scanned window")]
    CrossingNotFound { i: usize, j: usize },

    #[error("propagation blew up at rho={rho}, E={energy} hartree")]
    BlowUp { rho: f64, energy: f64 },

    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("matching system is rank deficient (residual {residual:e})")]
    Matching { residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("stage `{stage}` failed{}: {source}", energy.map(|e| format!(" at E={e:e} eV")).unwrap_or_default())]
    Stage {
        stage: String,
        energy: Option<f64>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors caused by bad configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
