use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("band structure did not converge: eigenvalue shift {shift:e} E_R between cutoff {cutoff} and {}", cutoff + 2)]
    Convergence { cutoff: usize, shift: f64 },

    #[error("inverted band: effective dispersion {value} < 0 (K0 = {k0})")]
    InvertedBand { k0: f64, value: f64 },

    #[error("singular Bogoliubov mode at q = 0 (condensate)")]
    SingularMode,

    #[error("no critical amplitude: g/omega = {ratio} > 1")]
    NoCriticalAmplitude { ratio: f64 },

    #[error("inconsistent cusp measurement: omega_c = {omega_c} <= 4 J_eff = {four_j_eff}")]
    InconsistentMeasurement { omega_c: f64, four_j_eff: f64 },

    #[error("symplectic norm drifted by {drift:e} at t = {t}; increase steps_per_period")]
    IntegratorTolerance { drift: f64, t: f64 },

    #[error("field blew up at step {step} (t = {t})")]
    BlowUp { step: usize, t: f64 },

    #[error("realization {realization} failed: {source}")]
    Realization {
        realization: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("bootstrap unstable: {failed} of {total} resample fits failed")]
    BootstrapUnstable { failed: usize, total: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
