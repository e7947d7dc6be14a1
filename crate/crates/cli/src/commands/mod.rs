pub mod bdg;
pub mod endphase;
pub mod fit;
pub mod k0c;
pub mod rates;
pub mod twa;

use fbdg_core::lattice::Trajectory;
use fbdg_core::{rad_s_to_hz, Error as CoreError};

use crate::config::parse_trajectory;
use crate::error::{CliError, Result};
use crate::output::fmt_opt;

/// `(rad/s, Hz)` cells of an angular frequency.
pub(crate) fn freq_pair(rad_s: Option<f64>) -> [String; 2] {
    [fmt_opt(rad_s), fmt_opt(rad_s.map(rad_s_to_hz))]
}

pub(crate) fn parse_trajectories(names: &[String]) -> Result<Vec<Trajectory>> {
    if names.is_empty() {
        return Err(CliError::config("trajectories must not be empty"));
    }
    names.iter().map(|n| parse_trajectory(n)).collect()
}

/// Short status code for a failed scan point.
pub(crate) fn error_code(e: &CoreError) -> &'static str {
    match e {
        CoreError::Realization { source, .. } => error_code(source),
        CoreError::IntegratorTolerance { .. } => "integrator_tolerance",
        CoreError::BlowUp { .. } => "blow_up",
        CoreError::InvertedBand { .. } => "inverted_band",
        CoreError::SingularMode => "singular_mode",
        CoreError::InsufficientData(_) => "insufficient_data",
        CoreError::BootstrapUnstable { .. } => "bootstrap_unstable",
        _ => "error",
    }
}

/// A scan succeeds if at least one point does; failed points stay in the output.
pub(crate) fn finish_scan(points: usize, failures: Vec<CoreError>) -> Result<()> {
    if points > 0 && failures.len() == points {
        return Err(failures.into_iter().next().expect("non-empty").into());
    }
    Ok(())
}

pub(crate) fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
