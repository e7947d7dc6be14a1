//! Rate extraction from decay and growth traces.
//!
//! Exponential fits are ordinary least squares on `log y`, restricted to the
//! samples that are at least half the initial value. When that fit explains
//! too little of the variance the trace is treated as linear instead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

/// Default log-space R² below which the linear fallback is used.
pub const DEFAULT_R2_THRESHOLD: f64 = 0.9;

/// Largest fraction of bootstrap resamples allowed to fail.
pub const MAX_BOOTSTRAP_FAILURE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// Decaying quantity; a positive rate means decay.
    CondensedFraction,
    /// Growing quantity; a positive rate means growth.
    ModeOccupation,
}

impl TraceKind {
    fn sign(self) -> f64 {
        match self {
            TraceKind::CondensedFraction => -1.0,
            TraceKind::ModeOccupation => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayTrace {
    times: Vec<f64>,
    values: Vec<f64>,
    kind: TraceKind,
}

impl DecayTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>, kind: TraceKind) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::domain(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::domain(format!(
                "times not strictly increasing at sample {}",
                i + 1
            )));
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::domain(format!("non-finite time at sample {i}")));
        }
        if let Some(i) = values.iter().position(|y| !(*y >= 0.0) || !y.is_finite()) {
            return Err(Error::domain(format!(
                "value at sample {i} must be finite and >= 0"
            )));
        }
        Ok(Self {
            times,
            values,
            kind,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> TraceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Samples with `y >= y(0) / 2`, `y(0)` being the earliest sample.
    fn half_initial_window(&self) -> (Vec<f64>, Vec<f64>) {
        let Some(&y0) = self.values.first() else {
            return (Vec::new(), Vec::new());
        };
        self.times
            .iter()
            .zip(&self.values)
            .filter(|(_, &y)| y >= 0.5 * y0)
            .map(|(&t, &y)| (t, y))
            .unzip()
    }
}

/// Pointwise mean of traces that share one time grid.
pub fn mean_trace(traces: &[&DecayTrace]) -> Result<DecayTrace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InsufficientData("no traces to average".into()))?;
    let mut sum = vec![0.0; first.len()];
    for tr in traces {
        if tr.times != first.times {
            return Err(Error::domain("traces do not share a time grid"));
        }
        for (s, y) in sum.iter_mut().zip(&tr.values) {
            *s += y;
        }
    }
    let n = traces.len() as f64;
    DecayTrace::new(
        first.times.clone(),
        sum.into_iter().map(|s| s / n).collect(),
        first.kind,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Exponential,
    LinearFallback,
    WindowedLogSlope,
}

impl FitMethod {
    pub fn name(self) -> &'static str {
        match self {
            FitMethod::Exponential => "exponential",
            FitMethod::LinearFallback => "linear_fallback",
            FitMethod::WindowedLogSlope => "windowed_log_slope",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Fitted value at `t = 0` (or at the window start for the linear fallback).
    pub amplitude: f64,
    /// Positive means decay for a condensed fraction and growth for an occupation.
    pub rate: f64,
    /// One standard deviation of `rate`.
    pub stderr: f64,
    pub method: FitMethod,
    pub window: (f64, f64),
    /// Coefficient of determination of the underlying straight-line fit.
    pub r_squared: f64,
    /// The fitted trend has the opposite sign to what the trace kind implies.
    pub sign_warning: bool,
    /// Non-positive values in the window; reported as rate 0.
    pub stable_mode: bool,
}

struct LineFit {
    slope: f64,
    intercept: f64,
    slope_se: f64,
    r_squared: f64,
}

fn least_squares(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_se = if x.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 {
        (1.0 - ssr / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    LineFit {
        slope,
        intercept,
        slope_se,
        r_squared,
    }
}

fn window_of(t: &[f64]) -> (f64, f64) {
    (t[0], t[t.len() - 1])
}

/// Two-parameter exponential `A exp(-rate t)` (or growth) on the half-initial window.
pub fn fit_exponential(trace: &DecayTrace) -> Result<FitResult> {
    let (t, y) = trace.half_initial_window();
    let positive = y.iter().filter(|v| **v > 0.0).count();
    if positive < 4 || positive != y.len() {
        return Err(Error::InsufficientData(format!(
            "need at least 4 positive samples above half the initial value, have {positive}"
        )));
    }
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let line = least_squares(&t, &logs);
    let rate = trace.kind.sign() * line.slope;
    Ok(FitResult {
        amplitude: line.intercept.exp(),
        rate,
        stderr: line.slope_se,
        method: FitMethod::Exponential,
        window: window_of(&t),
        r_squared: line.r_squared,
        sign_warning: rate < 0.0,
        stable_mode: false,
    })
}

/// Straight line on the half-initial window; rate is `|slope| / y(t_start)`.
pub fn fit_linear_fallback(trace: &DecayTrace) -> Result<FitResult> {
    let (t, y) = trace.half_initial_window();
    if t.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 samples in window, have {}",
            t.len()
        )));
    }
    let line = least_squares(&t, &y);
    let y_start = line.intercept + line.slope * t[0];
    if !(y_start > 0.0) {
        return Err(Error::InsufficientData(
            "fitted initial value is not positive".into(),
        ));
    }
    Ok(FitResult {
        amplitude: y_start,
        rate: line.slope.abs() / y_start,
        stderr: line.slope_se / y_start,
        method: FitMethod::LinearFallback,
        window: window_of(&t),
        r_squared: line.r_squared,
        sign_warning: trace.kind.sign() * line.slope < 0.0,
        stable_mode: false,
    })
}

/// Exponential fit unless its log-space R² falls below `r2_threshold`.
pub fn fit_auto(trace: &DecayTrace, r2_threshold: f64) -> Result<FitResult> {
    let exp = fit_exponential(trace)?;
    if exp.r_squared >= r2_threshold {
        Ok(exp)
    } else {
        fit_linear_fallback(trace)
    }
}

/// Least-squares slope of `log y` over the final `window_cycles` periods.
pub fn windowed_log_slope(
    trace: &DecayTrace,
    window_cycles: u32,
    period: f64,
) -> Result<FitResult> {
    if window_cycles == 0 || !(period > 0.0) {
        return Err(Error::domain("window_cycles must be >= 1 and period > 0"));
    }
    if trace.len() < window_cycles as usize + 1 {
        return Err(Error::InsufficientData(format!(
            "need {} samples for a {window_cycles}-cycle window, have {}",
            window_cycles + 1,
            trace.len()
        )));
    }
    let t_end = *trace.times.last().expect("non-empty");
    log_slope_between(
        trace,
        t_end - window_cycles as f64 * period * (1.0 + 1e-9),
        t_end,
    )
}

/// Least-squares slope of `log y` over the samples with `t_start <= t <= t_end`.
///
/// A window holding a non-positive value is reported as a stable mode with rate 0.
pub fn log_slope_between(trace: &DecayTrace, t_start: f64, t_end: f64) -> Result<FitResult> {
    let (t, y): (Vec<f64>, Vec<f64>) = trace
        .times
        .iter()
        .zip(&trace.values)
        .filter(|(t, _)| **t >= t_start && **t <= t_end)
        .map(|(&t, &y)| (t, y))
        .unzip();
    if t.len() < 2 {
        return Err(Error::InsufficientData(
            "fewer than 2 samples in the fit window".into(),
        ));
    }
    let window = window_of(&t);
    if y.iter().any(|v| !(*v > 0.0)) {
        return Ok(FitResult {
            amplitude: 0.0,
            rate: 0.0,
            stderr: 0.0,
            method: FitMethod::WindowedLogSlope,
            window,
            r_squared: 0.0,
            sign_warning: false,
            stable_mode: true,
        });
    }
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let line = least_squares(&t, &logs);
    let rate = trace.kind.sign() * line.slope;
    Ok(FitResult {
        amplitude: line.intercept.exp(),
        rate,
        stderr: line.slope_se,
        method: FitMethod::WindowedLogSlope,
        window,
        r_squared: line.r_squared,
        sign_warning: rate < 0.0,
        stable_mode: false,
    })
}

/// First sample at which `measured` falls below `(1 - rel_tol) * reference`.
///
/// Both slices are sampled on the same time grid; the comparison stops at the
/// shorter of the two.
pub fn departure_index(measured: &[f64], reference: &[f64], rel_tol: f64) -> Option<usize> {
    measured
        .iter()
        .zip(reference)
        .position(|(m, r)| *m < (1.0 - rel_tol) * r)
}

/// Growth rates on either side of the point where a trace leaves its
/// linear-theory reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeRates {
    /// Sample index of the departure.
    pub departure: usize,
    /// Fit over the last `short_cycles` periods before the departure, or over
    /// the whole agreement region if that is shorter.
    pub short_time: FitResult,
    /// Fit over the `long_cycles` samples starting at the departure.
    pub long_time: FitResult,
}

/// Splits a stroboscopic growth trace at its departure from `reference` and
/// fits `log y` on each side.
///
/// `trace` holds one sample per period. Fails if the trace never departs,
/// departs before its second sample, or ends inside the long-time window.
pub fn regime_rates(
    trace: &DecayTrace,
    reference: &[f64],
    rel_tol: f64,
    short_cycles: usize,
    long_cycles: usize,
) -> Result<RegimeRates> {
    if short_cycles == 0 || long_cycles == 0 {
        return Err(Error::domain("fit windows must span >= 1 cycle"));
    }
    let departure = departure_index(trace.values(), reference, rel_tol)
        .ok_or_else(|| Error::InsufficientData("trace never departs from its reference".into()))?;
    if departure < 2 {
        return Err(Error::InsufficientData(format!(
            "departure at sample {departure} leaves no short-time window"
        )));
    }
    let short = short_cycles.min(departure - 1);
    let end = departure + long_cycles;
    if end >= trace.len() {
        return Err(Error::InsufficientData(format!(
            "long-time window needs {} samples, have {}",
            end + 1,
            trace.len()
        )));
    }
    let t = trace.times();
    Ok(RegimeRates {
        departure,
        short_time: log_slope_between(trace, t[departure - 1 - short], t[departure - 1])?,
        long_time: log_slope_between(trace, t[departure], t[end])?,
    })
}

/// Index of the first convex-to-concave turn of `y`.
///
/// Curvature is the second difference at spacing `stride`,
/// `c_k = y[k + s] - 2 y[k] + y[k - s]`. The turn is the first `k` with
/// `c_k < 0` that follows a positive `c` and after which the mean curvature
/// stays negative. Returns `None` if there is no such turn.
pub fn convex_to_concave(y: &[f64], stride: usize) -> Option<usize> {
    if stride == 0 || y.len() < 2 * stride + 1 {
        return None;
    }
    let c: Vec<f64> = (stride..y.len() - stride)
        .map(|k| y[k + stride] - 2.0 * y[k] + y[k - stride])
        .collect();
    let mut seen_convex = false;
    for (i, &ci) in c.iter().enumerate() {
        if ci > 0.0 {
            seen_convex = true;
        } else if ci < 0.0 && seen_convex {
            let rest = &c[i..];
            if rest.iter().sum::<f64>() < 0.0 {
                return Some(i + stride);
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapRate {
    pub mean: f64,
    pub std: f64,
    pub succeeded: usize,
    pub failed: usize,
    /// Fewer than two successful resamples; `std` is reported as 0.
    pub degenerate: bool,
}

/// Bootstrap over realizations: each resample fits the mean of a
/// with-replacement draw of the traces.
pub fn bootstrap_rate<F>(
    traces: &[DecayTrace],
    fitter: F,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapRate>
where
    F: Fn(&DecayTrace) -> Result<FitResult> + Sync,
{
    if traces.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "bootstrap needs >= 2 realizations, have {}",
            traces.len()
        )));
    }
    if resamples == 0 {
        return Err(Error::domain("resamples must be >= 1"));
    }
    let n = traces.len();
    let rates: Vec<Option<f64>> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let picks: Vec<&DecayTrace> = (0..n).map(|_| &traces[rng.gen_range(0..n)]).collect();
            mean_trace(&picks)
                .and_then(|m| fitter(&m))
                .ok()
                .map(|f| f.rate)
        })
        .collect();
    let ok: Vec<f64> = rates.into_iter().flatten().collect();
    let failed = resamples - ok.len();
    if ok.is_empty() || failed as f64 > MAX_BOOTSTRAP_FAILURE * resamples as f64 {
        return Err(Error::BootstrapUnstable {
            failed,
            total: resamples,
        });
    }
    let mean = ok.iter().sum::<f64>() / ok.len() as f64;
    let degenerate = ok.len() < 2;
    let std = if degenerate {
        0.0
    } else {
        (ok.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (ok.len() - 1) as f64).sqrt()
    };
    Ok(BootstrapRate {
        mean,
        std,
        succeeded: ok.len(),
        failed,
        degenerate,
    })
}
