use fbdg_core::analytics::{gamma_and_qmum, k0_critical, omega_c};
use fbdg_core::lattice::{DriveSpec, LatticeParams, Trajectory};
use fbdg_core::Error as CoreError;
use rayon::prelude::*;

use super::{freq_pair, parse_trajectories};
use crate::config::Config;
use crate::error::Result;
use crate::output::{fmt_flag, fmt_num, fmt_opt, Outputs, Table};

pub const FILE: &str = "rates.csv";

const HEADER: &[&str] = &[
    "point",
    "trajectory",
    "k0",
    "omega_rad_s",
    "omega_hz",
    "j_rad_s",
    "j_hz",
    "g_rad_s",
    "g_hz",
    "gj_over_omega_rad_s",
    "gj_over_omega_hz",
    "regime",
    "q_mum_x",
    "q_mum_y",
    "multiplicity",
    "gamma_per_s",
    "gamma_mum_per_s",
    "gamma0_per_s",
    "omega_c_rad_s",
    "omega_c_hz",
    "k0c",
    "inverted_band",
    "note",
];

fn row(point: usize, drive: &DriveSpec, p: &LatticeParams) -> Result<Vec<String>> {
    let mut notes = Vec::new();
    let instability = match gamma_and_qmum(drive, p) {
        Ok(r) => Some(r),
        Err(CoreError::InvertedBand { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let cusp = match omega_c(drive, p) {
        Ok(c) => Some(c.omega_c),
        Err(CoreError::InvertedBand { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let k0c = match k0_critical(drive.omega, p.g) {
        Ok(k) => Some(k),
        Err(CoreError::NoCriticalAmplitude { .. }) => {
            notes.push("g_exceeds_omega");
            None
        }
        Err(_) if p.g == 0.0 => {
            notes.push("no_interaction");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let inverted = instability.is_none();
    if inverted {
        notes.push("inverted_band");
    }
    let q = instability.as_ref().map(|r| r.q_mum_set[0]);
    let gj_over_omega = p.g * p.j / drive.omega;
    let mut cells = vec![
        point.to_string(),
        drive.trajectory.name().to_string(),
        fmt_num(drive.k0),
    ];
    cells.extend(freq_pair(Some(drive.omega)));
    cells.extend(freq_pair(Some(p.j)));
    cells.extend(freq_pair(Some(p.g)));
    cells.extend(freq_pair(Some(gj_over_omega)));
    cells.push(
        instability
            .as_ref()
            .map(|r| r.regime.name().to_string())
            .unwrap_or_default(),
    );
    cells.push(fmt_opt(q.map(|q| q.qx)));
    cells.push(fmt_opt(q.map(|q| q.qy)));
    cells.push(
        instability
            .as_ref()
            .map(|r| r.multiplicity.to_string())
            .unwrap_or_default(),
    );
    cells.push(fmt_opt(instability.as_ref().map(|r| r.gamma)));
    cells.push(fmt_opt(instability.as_ref().map(|r| r.gamma_mum)));
    cells.push(fmt_num(p.gamma0));
    cells.extend(freq_pair(cusp));
    cells.push(fmt_opt(k0c));
    cells.push(fmt_flag(inverted));
    cells.push(notes.join(";"));
    Ok(cells)
}

/// Closed-form rates at every scan point for every requested trajectory.
pub fn run(cfg: &Config, out: &mut Outputs) -> Result<()> {
    let trajectories: Vec<Trajectory> = match &cfg.raw.rates.trajectories {
        Some(names) => parse_trajectories(names)?,
        None => Trajectory::ALL.to_vec(),
    };
    let mut jobs = Vec::new();
    for point in cfg.points()? {
        let p = point.fixed.params()?;
        for &tr in &trajectories {
            jobs.push((point.index, point.fixed.drive(tr)?, p));
        }
    }
    let rows: Vec<Result<Vec<String>>> = jobs.par_iter().map(|(i, d, p)| row(*i, d, p)).collect();
    let mut table = Table::new(HEADER);
    for r in rows {
        table.push(r?);
    }
    out.write_table(FILE, &table)
}
