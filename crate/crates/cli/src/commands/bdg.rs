use fbdg_core::analytics::gamma_and_qmum;
use fbdg_core::bdg::{grid_instability_scan, BdgRunConfig, GridScan};
use fbdg_core::lattice::{DriveSpec, LatticeParams};
use fbdg_core::Error as CoreError;
use rayon::prelude::*;

use super::{error_code, finish_scan, freq_pair};
use crate::config::Config;
use crate::error::{invalid, Result};
use crate::output::{fmt_num, fmt_opt, Outputs, Table};

pub const FILE: &str = "bdg.csv";

const HEADER: &[&str] = &[
    "point",
    "trajectory",
    "k0",
    "omega_rad_s",
    "omega_hz",
    "g_rad_s",
    "g_hz",
    "extracted_rate_per_s",
    "analytic_rate_per_s",
    "extracted_over_analytic",
    "q_max_x",
    "q_max_y",
    "q_max_z",
    "fit_window_start_s",
    "fit_window_end_s",
    "status",
    "diagnostic",
];

pub fn run_config(cfg: &Config) -> Result<BdgRunConfig> {
    let b = &cfg.raw.bdg;
    BdgRunConfig::new(
        b.steps_per_period,
        b.n_cycles,
        (b.grid[0], b.grid[1], b.grid[2]),
        b.lz,
    )
    .and_then(|c| c.with_fit_window(b.fit_window_cycles))
    .map_err(invalid)
}

/// Single-mode occupation rate `2 gamma` of linear theory, `None` past the
/// band inversion.
fn analytic_mode_rate(drive: &DriveSpec, p: &LatticeParams) -> Result<Option<f64>> {
    match gamma_and_qmum(drive, p) {
        Ok(r) => Ok(Some(2.0 * r.gamma)),
        Err(CoreError::InvertedBand { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Extracted fastest-mode rate against the closed form at every scan point.
/// A point whose integration fails is kept with its diagnostic.
pub fn run(cfg: &Config, out: &mut Outputs) -> Result<()> {
    let run_cfg = run_config(cfg)?;
    let mut jobs = Vec::new();
    for point in cfg.points()? {
        jobs.push((
            point.index,
            point.fixed.drive(cfg.fixed.trajectory)?,
            point.fixed.params()?,
        ));
    }
    let scans: Vec<std::result::Result<GridScan, CoreError>> = jobs
        .par_iter()
        .map(|(_, d, p)| grid_instability_scan(d, p, &run_cfg))
        .collect();

    let mut table = Table::new(HEADER);
    let mut failures = Vec::new();
    for ((index, drive, p), scan) in jobs.iter().zip(scans) {
        let analytic = analytic_mode_rate(drive, p)?;
        let period = drive.period();
        let window = (
            (run_cfg.n_cycles - run_cfg.fit_window_cycles as usize) as f64 * period,
            run_cfg.n_cycles as f64 * period,
        );
        let mut cells = vec![
            index.to_string(),
            drive.trajectory.name().to_string(),
            fmt_num(drive.k0),
        ];
        cells.extend(freq_pair(Some(drive.omega)));
        cells.extend(freq_pair(Some(p.g)));
        let mut status = Vec::new();
        if analytic.is_none() {
            status.push("inverted_band");
        }
        match scan {
            Ok(s) => {
                let ratio = analytic.filter(|a| *a > 0.0).map(|a| s.rate / a);
                cells.extend([fmt_num(s.rate), fmt_opt(analytic), fmt_opt(ratio)]);
                cells.extend([
                    fmt_num(s.q_max.qx),
                    fmt_num(s.q_max.qy),
                    fmt_num(s.q_max.qz),
                ]);
                cells.extend([fmt_num(window.0), fmt_num(window.1)]);
                if status.is_empty() {
                    status.push("ok");
                }
                cells.extend([status.join(";"), String::new()]);
            }
            Err(e) => {
                status.push(error_code(&e));
                cells.extend([String::new(), fmt_opt(analytic), String::new()]);
                cells.extend([String::new(), String::new(), String::new()]);
                cells.extend([fmt_num(window.0), fmt_num(window.1)]);
                cells.extend([status.join(";"), e.to_string()]);
                failures.push(e);
            }
        }
        table.push(cells);
    }
    out.write_table(FILE, &table)?;
    finish_scan(jobs.len(), failures)
}
