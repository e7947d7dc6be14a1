//! Closed-form Floquet-Bogoliubov instability theory.
//!
//! Only the dominant `l = 1` parametric resonance `E_eff^Bog(q) = omega` is
//! considered. Rates use `|J2(K0)|` so they stay non-negative past the first
//! zero of `J2`.

use std::f64::consts::PI;

use crate::lattice::{DriveSpec, LatticeParams, Momentum, Trajectory};
use crate::special::{bessel_j0_inverse, j0_first_zero, jn};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `omega < omega_c`: the most unstable mode moves with `omega`.
    LowFreq,
    /// `omega >= omega_c`: the most unstable mode sits on the zone boundary.
    HighFreq,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::LowFreq => "low_freq",
            Regime::HighFreq => "high_freq",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityResult {
    pub q_mum_set: Vec<Momentum>,
    /// Mode-amplitude growth rate.
    pub gamma: f64,
    /// Observable rate `multiplicity * 2 * gamma + gamma0`.
    pub gamma_mum: f64,
    pub regime: Regime,
    /// Number of simultaneously maximally unstable channels (1 or 2).
    pub multiplicity: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuspData {
    pub omega_c: f64,
    pub bandwidth: f64,
    pub equals_bandwidth: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveDimensionality {
    OneD,
    TwoD,
}

impl From<Trajectory> for DriveDimensionality {
    fn from(t: Trajectory) -> Self {
        match t {
            Trajectory::LinearX => DriveDimensionality::OneD,
            _ => DriveDimensionality::TwoD,
        }
    }
}

/// `J_eff = J J0(K0)`.
pub fn effective_hopping(k0: f64, j: f64) -> f64 {
    j * jn(0, k0)
}

/// Momentum-resolved rate factor `s(q)` at the drive frequency.
pub fn s_of_q(q: &Momentum, drive: &DriveSpec, p: &LatticeParams) -> f64 {
    let sx = (0.5 * q.qx).sin().powi(2);
    let sy = (0.5 * q.qy).sin().powi(2);
    let weight = match drive.trajectory {
        Trajectory::LinearX => sx,
        Trajectory::Diagonal => sx + sy,
        Trajectory::Circular => (sx - sy).abs(),
    };
    4.0 * p.j * jn(2, drive.k0).abs() * weight * p.g / drive.omega
}

/// Saturation frequency `omega_c` and effective bandwidth.
pub fn omega_c(drive: &DriveSpec, p: &LatticeParams) -> Result<CuspData> {
    let j_eff = effective_hopping(drive.k0, p.j);
    if j_eff <= 0.0 || drive.k0 >= j0_first_zero() {
        return Err(Error::InvertedBand {
            k0: drive.k0,
            value: j_eff,
        });
    }
    let edge = match drive.trajectory {
        Trajectory::Diagonal => 8.0 * j_eff,
        _ => 4.0 * j_eff,
    };
    Ok(CuspData {
        omega_c: (edge * (edge + 2.0 * p.g)).sqrt(),
        bandwidth: bandwidth(drive.trajectory.into(), p, drive.k0),
        equals_bandwidth: drive.trajectory == Trajectory::Diagonal,
    })
}

/// Effective Bogoliubov bandwidth of the in-plane lattice.
pub fn bandwidth(dim: DriveDimensionality, p: &LatticeParams, k0: f64) -> f64 {
    let j0 = jn(0, k0).abs();
    let top = match dim {
        DriveDimensionality::TwoD => 8.0 * p.j * j0,
        DriveDimensionality::OneD => 4.0 * p.j * (j0 + 1.0),
    };
    (top * (top + 2.0 * p.g)).sqrt()
}

fn multiplicity(t: Trajectory) -> u32 {
    match t {
        Trajectory::LinearX => 1,
        _ => 2,
    }
}

/// Most unstable modes, growth rate and observable rate for a drive.
pub fn gamma_and_qmum(drive: &DriveSpec, p: &LatticeParams) -> Result<InstabilityResult> {
    let cusp = omega_c(drive, p)?;
    let w = drive.omega;
    let j0 = jn(0, drive.k0);
    let j2 = jn(2, drive.k0).abs();
    let tr = drive.trajectory;

    let c = match tr {
        Trajectory::Diagonal => 8.0,
        _ => 4.0,
    };
    let resonant_eps = (p.g * p.g + w * w).sqrt() - p.g;
    let arg = resonant_eps / (c * p.j * j0);

    let (regime, q_mum_set, gamma) = if w >= cusp.omega_c || arg >= 1.0 {
        let set = match tr {
            Trajectory::LinearX => vec![Momentum::new(PI, 0.0, 0.0)],
            Trajectory::Diagonal => vec![Momentum::new(PI, PI, 0.0), Momentum::new(-PI, PI, 0.0)],
            Trajectory::Circular => vec![Momentum::new(PI, 0.0, 0.0), Momentum::new(0.0, PI, 0.0)],
        };
        let gamma = match tr {
            Trajectory::Diagonal => 8.0 * p.j * j2 * p.g / w,
            _ => 4.0 * p.j * j2 * p.g / w,
        };
        (Regime::HighFreq, set, gamma)
    } else {
        let qm = 2.0 * arg.sqrt().asin();
        let set = match tr {
            Trajectory::LinearX => vec![Momentum::new(qm, 0.0, 0.0), Momentum::new(-qm, 0.0, 0.0)],
            Trajectory::Diagonal => vec![
                Momentum::new(qm, qm, 0.0),
                Momentum::new(qm, -qm, 0.0),
                Momentum::new(-qm, qm, 0.0),
                Momentum::new(-qm, -qm, 0.0),
            ],
            Trajectory::Circular => vec![
                Momentum::new(qm, 0.0, 0.0),
                Momentum::new(-qm, 0.0, 0.0),
                Momentum::new(0.0, qm, 0.0),
                Momentum::new(0.0, -qm, 0.0),
            ],
        };
        (Regime::LowFreq, set, resonant_eps * (j2 / j0) * p.g / w)
    };

    let mult = multiplicity(tr);
    Ok(InstabilityResult {
        q_mum_set,
        gamma,
        gamma_mum: mult as f64 * 2.0 * gamma + p.gamma0,
        regime,
        multiplicity: mult,
    })
}

/// Critical amplitude `K0c = J0^{-1}(g / omega)`.
pub fn k0_critical(omega: f64, g: f64) -> Result<f64> {
    let ratio = g / omega;
    if !(omega > 0.0) || !ratio.is_finite() {
        return Err(Error::domain(format!("need omega > 0, got {omega}")));
    }
    if ratio > 1.0 {
        return Err(Error::NoCriticalAmplitude { ratio });
    }
    if ratio <= 0.0 {
        return Err(Error::domain(format!(
            "g/omega must be in (0, 1], got {ratio}"
        )));
    }
    bessel_j0_inverse(ratio)
}

/// Interaction `g` that reproduces a measured x-drive cusp frequency.
pub fn calibrate_g_from_cusp(measured_omega_c: f64, j: f64, k0: f64) -> Result<f64> {
    let four_j_eff = 4.0 * effective_hopping(k0, j);
    if four_j_eff <= 0.0 {
        return Err(Error::InvertedBand {
            k0,
            value: four_j_eff / 4.0,
        });
    }
    if measured_omega_c < four_j_eff {
        return Err(Error::InconsistentMeasurement {
            omega_c: measured_omega_c,
            four_j_eff,
        });
    }
    Ok((measured_omega_c * measured_omega_c - four_j_eff * four_j_eff) / (2.0 * four_j_eff))
}

/// Quasimomentum where a condensate is dynamically stable under the drive.
pub fn stable_momentum(drive: &DriveSpec) -> Momentum {
    if drive.k0 <= j0_first_zero() {
        return Momentum::zero();
    }
    match drive.trajectory {
        Trajectory::LinearX => Momentum::new(PI, 0.0, 0.0),
        _ => Momentum::new(PI, PI, 0.0),
    }
}
