use std::f64::consts::TAU;

use fbdg_core::lattice::{DriveSpec, Envelope};
use fbdg_core::special::BandProblem;
use fbdg_core::twa::{
    sample_initial, stop_and_hold, Grid, SampleOptions, StopHoldResult, TwaRunConfig,
};
use fbdg_core::Error as CoreError;
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{invalid, CliError, Result};
use crate::output::{fmt_num, fmt_opt, Outputs, Table};

pub const FILE: &str = "endphase.csv";

const HEADER: &[&str] = &[
    "variant",
    "end_phase",
    "stop_time_s",
    "n_ex_at_stop",
    "n_ex_at_stop_sem",
    "n_ex_after_hold",
    "n_ex_after_hold_sem",
    "condensed_fraction_after_hold",
];

fn mean_and_sem(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Abrupt stops at equally spaced end phases and a smoothly ramped control of
/// the same duration, each followed by a static hold; the same noise
/// realizations are used for every variant.
pub fn run(cfg: &Config, out: &mut Outputs) -> Result<()> {
    if cfg.scan.is_some() {
        return Err(CliError::config("endphase does not take a [scan] section"));
    }
    let e = &cfg.raw.endphase;
    if e.phases == 0 || e.realizations == 0 || e.drive_periods == 0 {
        return Err(CliError::config(
            "endphase needs phases, realizations and drive_periods >= 1",
        ));
    }
    if !(e.static_hold_periods >= 0.0 && e.static_hold_periods.is_finite()) {
        return Err(CliError::config("static_hold_periods must be >= 0"));
    }
    let p = cfg.fixed.params()?;
    let base = DriveSpec::new(cfg.fixed.trajectory, cfg.fixed.k0()?, cfg.fixed.omega()?)
        .map_err(invalid)?;
    let grid = Grid::new(e.grid[0], e.grid[1], e.grid[2], e.lz).map_err(invalid)?;
    let band = BandProblem::rubidium_87(e.depth_er, cfg.fixed.wavelength_m).map_err(invalid)?;
    let run_cfg = TwaRunConfig::new(e.steps_per_period, 1)
        .map_err(invalid)?
        .with_stop_kick(band);
    let opts = SampleOptions {
        noise_variance: e.noise_variance,
        ..SampleOptions::default()
    };

    let mut variants: Vec<(String, Option<f64>, DriveSpec)> = Vec::new();
    for i in 0..e.phases {
        let phase = i as f64 * TAU / e.phases as f64;
        let env = Envelope::abrupt(e.ramp_up_periods, e.drive_periods, phase).map_err(invalid)?;
        variants.push((
            "abrupt".into(),
            Some(phase),
            base.with_envelope(env).map_err(invalid)?,
        ));
    }
    let ramp = Envelope::ramped(e.ramp_up_periods, e.drive_periods - 1, 1).map_err(invalid)?;
    variants.push((
        "ramped".into(),
        None,
        base.with_envelope(ramp).map_err(invalid)?,
    ));

    let jobs: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..e.realizations).map(move |r| (v, r)))
        .collect();
    let results: Vec<std::result::Result<StopHoldResult, CoreError>> = jobs
        .par_iter()
        .map(|&(v, r)| {
            let init = sample_initial(&grid, &p, &opts, cfg.seed, r as u64)?;
            stop_and_hold(&init, &variants[v].2, &p, &run_cfg, e.static_hold_periods).map_err(
                |err| CoreError::Realization {
                    realization: r,
                    source: Box::new(err),
                },
            )
        })
        .collect();
    let results: Vec<StopHoldResult> =
        results.into_iter().collect::<std::result::Result<_, _>>()?;

    let mut table = Table::new(HEADER);
    for (v, (name, phase, drive)) in variants.iter().enumerate() {
        let runs = &results[v * e.realizations..(v + 1) * e.realizations];
        let at_stop: Vec<f64> = runs.iter().map(|r| r.at_stop.n_ex).collect();
        let after: Vec<f64> = runs.iter().map(|r| r.after_hold.n_ex).collect();
        let cf: Vec<f64> = runs
            .iter()
            .map(|r| r.after_hold.condensed_fraction)
            .collect();
        let (stop_mean, stop_sem) = mean_and_sem(&at_stop);
        let (hold_mean, hold_sem) = mean_and_sem(&after);
        table.push(vec![
            name.clone(),
            fmt_opt(*phase),
            fmt_opt(drive.stop_time()),
            fmt_num(stop_mean),
            fmt_opt(stop_sem),
            fmt_num(hold_mean),
            fmt_opt(hold_sem),
            fmt_num(mean_and_sem(&cf).0),
        ]);
    }
    out.write_table(FILE, &table)
}
