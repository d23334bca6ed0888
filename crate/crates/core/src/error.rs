use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the range where a model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no guided fundamental mode at {wavelength_nm} nm")]
    ModeCutoff { wavelength_nm: f64 },

    #[error("no sign change of {quantity} between {lo} and {hi}")]
    Bracket { quantity: &'static str, lo: f64, hi: f64 },

    #[error("pump at {pump_nm} nm is in the anomalous dispersion regime (beta2 = {beta2:e} s^2/m)")]
    Regime { pump_nm: f64, beta2: f64 },

    #[error("no phase-matched sideband for pump {pump_nm} nm at {peak_power_w} W")]
    NoPhaseMatch { pump_nm: f64, peak_power_w: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate count record: C_raw = {c_raw} does not exceed C_b = {c_b}")]
    DegenerateRecord { c_raw: f64, c_b: f64 },

    #[error("root finder did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the failure comes from bad user input rather than from a
    /// numerical model.
    pub fn is_usage(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_usage();
        }
        matches!(
            self,
            Error::Argument(_) | Error::Config(_) | Error::Json(_) | Error::Csv(_) | Error::Io(_)
        )
    }

    /// Tags the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage { stage, source: Box::new(other) },
        }
    }
}

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
