use std::path::Path;

use fbdg_core::fit::{fit_auto, DecayTrace, FitResult, TraceKind};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::output::{fmt_flag, fmt_num, Outputs, Table};

pub const FILE: &str = "fit.csv";

const HEADER: &[&str] = &[
    "source",
    "kind",
    "samples",
    "method",
    "amplitude",
    "rate_per_s",
    "rate_stderr_per_s",
    "r_squared",
    "window_start_s",
    "window_end_s",
    "sign_warning",
    "stable_mode",
];

fn parse_kind(name: &str) -> Result<TraceKind> {
    match name {
        "condensed_fraction" => Ok(TraceKind::CondensedFraction),
        "mode_occupation" => Ok(TraceKind::ModeOccupation),
        other => Err(CliError::config(format!(
            "unknown fit kind `{other}`; use condensed_fraction or mode_occupation"
        ))),
    }
}

fn column(
    headers: &csv::StringRecord,
    name: Option<&str>,
    default: usize,
    path: &Path,
) -> Result<usize> {
    match name {
        Some(n) => headers
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| CliError::config(format!("{}: no column `{n}`", path.display()))),
        None if default < headers.len() => Ok(default),
        None => Err(CliError::config(format!(
            "{}: need at least two columns",
            path.display()
        ))),
    }
}

/// Reads `(t, y)` samples from a CSV file with a header row.
///
/// Errors name the offending line; times must increase strictly.
pub fn read_trace(
    path: &Path,
    time_column: Option<&str>,
    value_column: Option<&str>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        .clone();
    let tc = column(&headers, time_column, 0, path)?;
    let vc = column(&headers, value_column, 1, path)?;
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |c: usize| -> Result<f64> {
            let text = record.get(c).unwrap_or("");
            text.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    CliError::config(format!(
                        "{} line {line}: `{text}` in column `{}` is not a finite number",
                        path.display(),
                        &headers[c]
                    ))
                })
        };
        let (t, y) = (cell(tc)?, cell(vc)?);
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(CliError::config(format!(
                    "{} line {line}: time {t} does not increase (previous {prev})",
                    path.display()
                )));
            }
        }
        times.push(t);
        values.push(y);
    }
    Ok((times, values))
}

fn fit_row(source: &str, kind: &str, samples: usize, f: &FitResult) -> Vec<String> {
    vec![
        source.to_string(),
        kind.to_string(),
        samples.to_string(),
        f.method.name().to_string(),
        fmt_num(f.amplitude),
        fmt_num(f.rate),
        fmt_num(f.stderr),
        fmt_num(f.r_squared),
        fmt_num(f.window.0),
        fmt_num(f.window.1),
        fmt_flag(f.sign_warning),
        fmt_flag(f.stable_mode),
    ]
}

/// Fits a decay or growth trace read from `input` and writes one result row.
pub fn run(cfg: &Config, input: &Path, out: &mut Outputs) -> Result<()> {
    let f = &cfg.raw.fit;
    let kind = parse_kind(&f.kind)?;
    if !(f.r2_threshold > 0.0 && f.r2_threshold <= 1.0) {
        return Err(CliError::config("fit r2_threshold must be in (0, 1]"));
    }
    let (times, values) = read_trace(input, f.time_column.as_deref(), f.value_column.as_deref())?;
    let samples = times.len();
    let trace = DecayTrace::new(times, values, kind)
        .map_err(|e| CliError::config(format!("{}: {e}", input.display())))?;
    let result = fit_auto(&trace, f.r2_threshold)?;
    let source = input
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut table = Table::new(HEADER);
    table.push(fit_row(&source, &f.kind, samples, &result));
    out.write_table(FILE, &table)
}
