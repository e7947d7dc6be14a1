use fbdg_core::bdg::{excited_density, BdgRunConfig};
use fbdg_core::fit::{
    bootstrap_rate, convex_to_concave, regime_rates, BootstrapRate, DecayTrace, RegimeRates,
    TraceKind,
};
use fbdg_core::lattice::{DriveSpec, LatticeParams};
use fbdg_core::twa::{
    ensemble_run, EnsembleConfig, EnsembleResult, Grid, SampleOptions, TwaRunConfig,
};
use fbdg_core::Error as CoreError;
use rayon::prelude::*;

use super::{error_code, finish_scan, freq_pair, ols_slope};
use crate::config::{Config, ScanVariable};
use crate::error::{invalid, CliError, Result};
use crate::output::{fmt_num, fmt_opt, Outputs, Table};

pub const FILE: &str = "twa.csv";
pub const SCALING_FILE: &str = "twa_g_scaling.csv";

pub fn trace_file(point: usize) -> String {
    format!("twa_trace_{point:03}.csv")
}

// Keeps bootstrap streams apart from the realization streams of the same seed.
const BOOTSTRAP_SALT: u64 = 0x7e57_ab1e_0dd5_eed5;

const SUMMARY_HEADER: &[&str] = &[
    "point",
    "trajectory",
    "k0",
    "omega_rad_s",
    "omega_hz",
    "g_rad_s",
    "g_hz",
    "realizations",
    "departure_cycle",
    "short_rate_per_s",
    "short_rate_std_per_s",
    "short_window_start_s",
    "short_window_end_s",
    "long_rate_per_s",
    "long_rate_std_per_s",
    "long_window_start_s",
    "long_window_end_s",
    "curvature_turn_cycle",
    "final_n_ex",
    "final_condensed_fraction",
    "max_particle_drift",
    "trace_file",
    "status",
    "diagnostic",
];

const TRACE_HEADER: &[&str] = &[
    "cycle",
    "t_s",
    "n_ex",
    "n_ex_std",
    "n_ex_raw",
    "condensed_fraction",
    "condensed_fraction_std",
    "bdg_n_ex",
    "particle_number",
];

struct Settings {
    grid: Grid,
    run: TwaRunConfig,
    bdg: BdgRunConfig,
    ensemble: EnsembleConfig,
    sample: SampleOptions,
    tolerance: f64,
    short: usize,
    long: usize,
}

fn settings(cfg: &Config) -> Result<Settings> {
    let t = &cfg.raw.twa;
    let grid = Grid::new(t.grid[0], t.grid[1], t.grid[2], t.lz).map_err(invalid)?;
    let run = TwaRunConfig::new(t.steps_per_period, t.n_cycles).map_err(invalid)?;
    let window = t.n_cycles.min(8) as u32;
    let bdg = BdgRunConfig::new(
        t.steps_per_period.max(64),
        t.n_cycles,
        (t.grid[0], t.grid[1], t.grid[2]),
        t.lz,
    )
    .and_then(|c| c.with_fit_window(window))
    .map_err(invalid)?;
    let ensemble = EnsembleConfig::new(t.realizations, cfg.seed)
        .and_then(|e| e.with_bootstrap_resamples(t.bootstrap_resamples))
        .map_err(invalid)?;
    if !(t.noise_variance >= 0.0 && t.noise_variance.is_finite()) {
        return Err(CliError::config("twa noise_variance must be >= 0"));
    }
    if !(t.departure_tolerance > 0.0 && t.departure_tolerance < 1.0) {
        return Err(CliError::config(
            "twa departure_tolerance must be in (0, 1)",
        ));
    }
    if t.short_window_cycles == 0 || t.long_window_cycles == 0 {
        return Err(CliError::config("twa fit windows must span >= 1 cycle"));
    }
    Ok(Settings {
        grid,
        run,
        bdg,
        ensemble,
        sample: SampleOptions {
            noise_variance: t.noise_variance,
            ..SampleOptions::default()
        },
        tolerance: t.departure_tolerance,
        short: t.short_window_cycles,
        long: t.long_window_cycles,
    })
}

struct Fits {
    rates: RegimeRates,
    short_std: Option<f64>,
    long_std: Option<f64>,
}

struct PointRun {
    ensemble: EnsembleResult,
    /// Linear-theory excited density scaled by the noise variance.
    reference: Vec<f64>,
    fits: std::result::Result<Fits, CoreError>,
}

fn bootstrap_std(
    ensemble: &EnsembleResult,
    reference: &[f64],
    s: &Settings,
    pick: fn(RegimeRates) -> fbdg_core::fit::FitResult,
) -> Option<f64> {
    if ensemble.traces.len() < 2 {
        return None;
    }
    let first = &ensemble.traces[0];
    let offset = first.n_ex_raw[0] - first.n_ex[0];
    let raw: std::result::Result<Vec<DecayTrace>, CoreError> = ensemble
        .traces
        .iter()
        .map(|t| {
            DecayTrace::new(
                t.times.clone(),
                t.n_ex_raw.clone(),
                TraceKind::ModeOccupation,
            )
        })
        .collect();
    let fitter = |m: &DecayTrace| {
        let values = m.values().iter().map(|v| v - offset).collect();
        let trace = DecayTrace::new(m.times().to_vec(), values, TraceKind::ModeOccupation)?;
        regime_rates(&trace, reference, s.tolerance, s.short, s.long).map(pick)
    };
    let seed = s.ensemble.master_seed ^ BOOTSTRAP_SALT;
    raw.and_then(|r| bootstrap_rate(&r, fitter, s.ensemble.bootstrap_resamples, seed))
        .ok()
        .filter(|b: &BootstrapRate| !b.degenerate)
        .map(|b| b.std)
}

fn run_point(
    drive: &DriveSpec,
    p: &LatticeParams,
    s: &Settings,
) -> std::result::Result<PointRun, CoreError> {
    let ensemble = ensemble_run(&s.ensemble, &s.grid, p, drive, &s.sample, &s.run)?;
    let reference: Vec<f64> = excited_density(drive, p, &s.bdg)?
        .into_iter()
        .map(|n| n * s.sample.noise_variance)
        .collect();
    let fits = DecayTrace::new(
        ensemble.times.clone(),
        ensemble.mean_n_ex.clone(),
        TraceKind::ModeOccupation,
    )
    .and_then(|trace| regime_rates(&trace, &reference, s.tolerance, s.short, s.long))
    .map(|rates| Fits {
        short_std: bootstrap_std(&ensemble, &reference, s, |r| r.short_time),
        long_std: bootstrap_std(&ensemble, &reference, s, |r| r.long_time),
        rates,
    });
    Ok(PointRun {
        ensemble,
        reference,
        fits,
    })
}

fn trace_table(run: &PointRun) -> Table {
    let e = &run.ensemble;
    let mut table = Table::new(TRACE_HEADER);
    let n = e.traces.len() as f64;
    for k in 0..e.times.len() {
        let particles = e.traces.iter().map(|t| t.particle_number[k]).sum::<f64>() / n;
        table.push(vec![
            k.to_string(),
            fmt_num(e.times[k]),
            fmt_num(e.mean_n_ex[k]),
            fmt_opt(e.n_ex_band.as_ref().map(|b| b[k])),
            fmt_num(e.mean_n_ex_raw[k]),
            fmt_num(e.mean_condensed_fraction[k]),
            fmt_opt(e.condensed_fraction_band.as_ref().map(|b| b[k])),
            fmt_num(run.reference[k]),
            fmt_num(particles),
        ]);
    }
    table
}

fn max_drift(e: &EnsembleResult) -> f64 {
    e.traces
        .iter()
        .flat_map(|t| {
            t.particle_number
                .iter()
                .map(move |n| (n / t.particle_number[0] - 1.0).abs())
        })
        .fold(0.0, f64::max)
}

/// Truncated-Wigner ensembles at every scan point: a trace file per point, a
/// summary of short- and long-time rates, and for a `g` scan the log-log
/// slope of both rates against `g`.
pub fn run(cfg: &Config, out: &mut Outputs) -> Result<()> {
    let s = settings(cfg)?;
    let mut jobs = Vec::new();
    for point in cfg.points()? {
        jobs.push((
            point.index,
            point.fixed.drive(cfg.fixed.trajectory)?,
            point.fixed.params()?,
        ));
    }
    let runs: Vec<std::result::Result<PointRun, CoreError>> = jobs
        .par_iter()
        .map(|(_, d, p)| run_point(d, p, &s))
        .collect();

    let mut summary = Table::new(SUMMARY_HEADER);
    let mut failures = Vec::new();
    let mut scaling = Vec::new();
    for ((index, drive, p), result) in jobs.iter().zip(runs) {
        let mut cells = vec![
            index.to_string(),
            drive.trajectory.name().to_string(),
            fmt_num(drive.k0),
        ];
        cells.extend(freq_pair(Some(drive.omega)));
        cells.extend(freq_pair(Some(p.g)));
        cells.push(s.ensemble.n_realizations.to_string());
        match result {
            Ok(run) => {
                let name = trace_file(*index);
                out.write_table(&name, &trace_table(&run))?;
                let e = &run.ensemble;
                let last = e.times.len() - 1;
                let (status, diagnostic) = match &run.fits {
                    Ok(f) => {
                        let (a, b) = (&f.rates.short_time, &f.rates.long_time);
                        cells.push(f.rates.departure.to_string());
                        cells.extend([
                            fmt_num(a.rate),
                            fmt_opt(f.short_std),
                            fmt_num(a.window.0),
                            fmt_num(a.window.1),
                        ]);
                        cells.extend([
                            fmt_num(b.rate),
                            fmt_opt(f.long_std),
                            fmt_num(b.window.0),
                            fmt_num(b.window.1),
                        ]);
                        scaling.push((p.g, a.rate, b.rate));
                        ("ok", String::new())
                    }
                    Err(err) => {
                        cells.extend(std::iter::repeat_n(String::new(), 9));
                        ("no_regime_fit", err.to_string())
                    }
                };
                cells.push(
                    convex_to_concave(&e.mean_n_ex, 2)
                        .map(|k| k.to_string())
                        .unwrap_or_default(),
                );
                cells.extend([
                    fmt_num(e.mean_n_ex[last]),
                    fmt_num(e.mean_condensed_fraction[last]),
                ]);
                cells.extend([fmt_num(max_drift(e)), name, status.to_string(), diagnostic]);
            }
            Err(err) => {
                cells.extend(std::iter::repeat_n(String::new(), 14));
                cells.extend([error_code(&err).to_string(), err.to_string()]);
                failures.push(err);
            }
        }
        summary.push(cells);
    }
    out.write_table(FILE, &summary)?;

    if cfg
        .scan
        .as_ref()
        .is_some_and(|sp| sp.variable == ScanVariable::G)
    {
        let usable: Vec<&(f64, f64, f64)> = scaling
            .iter()
            .filter(|(g, a, b)| *g > 0.0 && *a > 0.0 && *b > 0.0)
            .collect();
        let mut table = Table::new(&["quantity", "loglog_slope_vs_g", "points"]);
        if usable.len() >= 2 {
            let lg: Vec<f64> = usable.iter().map(|r| r.0.ln()).collect();
            let short: Vec<f64> = usable.iter().map(|r| r.1.ln()).collect();
            let long: Vec<f64> = usable.iter().map(|r| r.2.ln()).collect();
            table.push(vec![
                "short_time_rate".into(),
                fmt_num(ols_slope(&lg, &short)),
                usable.len().to_string(),
            ]);
            table.push(vec![
                "long_time_rate".into(),
                fmt_num(ols_slope(&lg, &long)),
                usable.len().to_string(),
            ]);
        }
        out.write_table(SCALING_FILE, &table)?;
    }
    finish_scan(jobs.len(), failures)
}
