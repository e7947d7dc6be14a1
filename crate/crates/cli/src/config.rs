//! Run configuration: `key = value` lines grouped under `[section]` headers
//! (a TOML subset). A preset is loaded first and a config file overrides it
//! key by key.

use std::path::Path;

use fbdg_core::hz_to_rad_s;
use fbdg_core::lattice::{DriveSpec, Envelope, LatticeParams, Trajectory};
use fbdg_core::special::{hopping_from_depth, BandProblem};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{invalid, CliError, Result};

/// Checked-in parameter presets, selectable with `--preset NAME`.
pub const PRESETS: &[(&str, &str)] = &[("paper-11ER", include_str!("../presets/paper-11ER.toml"))];

pub fn preset(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::config(format!(
                "unknown preset `{name}`; available: {}",
                known.join(", ")
            ))
        })
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawConfig {
    pub run: RunSection,
    pub lattice: LatticeSection,
    pub drive: DriveSection,
    pub scan: Option<ScanSection>,
    pub rates: RatesSection,
    pub bdg: BdgSection,
    pub twa: TwaSection,
    pub endphase: EndphaseSection,
    pub fit: FitSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
}

/// Exactly one of `j_hz`, `j_rad_s`, `v0_er` sets the hopping; `v0_er` uses
/// the rubidium-87 band structure at `wavelength_nm`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    pub j_hz: Option<f64>,
    pub j_rad_s: Option<f64>,
    pub v0_er: Option<f64>,
    pub wavelength_nm: f64,
    pub g_hz: Option<f64>,
    pub g_rad_s: Option<f64>,
    pub gamma0_per_s: f64,
    pub n0: f64,
    /// Tube mass (`hbar = a = 1`); defaults to `1 / J`.
    pub m_z: Option<f64>,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            j_hz: None,
            j_rad_s: None,
            v0_er: None,
            wavelength_nm: 814.0,
            g_hz: None,
            g_rad_s: None,
            gamma0_per_s: 0.0,
            n0: 50.0,
            m_z: None,
        }
    }
}

/// Drive parameters. Any envelope key switches the envelope on; `end_phase`
/// selects an abrupt stop, otherwise the drive ramps down.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    pub trajectory: String,
    pub k0: Option<f64>,
    pub omega_hz: Option<f64>,
    pub omega_rad_s: Option<f64>,
    pub ramp_up_periods: Option<u32>,
    pub hold_periods: Option<u32>,
    pub ramp_down_periods: Option<u32>,
    pub end_phase: Option<f64>,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            trajectory: "linear_x".into(),
            k0: None,
            omega_hz: None,
            omega_rad_s: None,
            ramp_up_periods: None,
            hold_periods: None,
            ramp_down_periods: None,
            end_phase: None,
        }
    }
}

/// Either `values` or `start`, `stop`, `count`. `unit` (`hz` or `rad_s`) is
/// required for `omega`, `g` and `gj_over_omega` and rejected otherwise.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub variable: String,
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub count: Option<usize>,
    pub unit: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesSection {
    /// Defaults to all three trajectories.
    pub trajectories: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct BdgSection {
    pub grid: [usize; 3],
    pub lz: f64,
    pub steps_per_period: usize,
    pub n_cycles: usize,
    pub fit_window_cycles: u32,
}

impl Default for BdgSection {
    fn default() -> Self {
        Self {
            grid: [24, 24, 9],
            lz: 9.0,
            steps_per_period: 128,
            n_cycles: 40,
            fit_window_cycles: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwaSection {
    pub grid: [usize; 3],
    pub lz: f64,
    pub steps_per_period: usize,
    pub n_cycles: usize,
    pub realizations: usize,
    pub bootstrap_resamples: usize,
    pub noise_variance: f64,
    /// TWA leaves linear theory once it falls below `1 - tol` of the BdG sum.
    pub departure_tolerance: f64,
    pub short_window_cycles: usize,
    pub long_window_cycles: usize,
}

impl Default for TwaSection {
    fn default() -> Self {
        Self {
            grid: [16, 16, 8],
            lz: 4.5,
            steps_per_period: 128,
            n_cycles: 32,
            realizations: 20,
            bootstrap_resamples: 200,
            noise_variance: 1.0,
            departure_tolerance: 0.2,
            short_window_cycles: 5,
            long_window_cycles: 8,
        }
    }
}

/// Abrupt stops at `phases` equally spaced end phases plus a ramped control
/// of the same total duration, each followed by a static hold.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EndphaseSection {
    pub phases: usize,
    pub ramp_up_periods: u32,
    pub drive_periods: u32,
    pub static_hold_periods: f64,
    pub realizations: usize,
    /// Lattice depth used to project atoms kicked out of the lowest band.
    pub depth_er: f64,
    pub grid: [usize; 3],
    pub lz: f64,
    pub steps_per_period: usize,
    pub noise_variance: f64,
}

impl Default for EndphaseSection {
    fn default() -> Self {
        Self {
            phases: 8,
            ramp_up_periods: 5,
            drive_periods: 10,
            static_hold_periods: 12.0,
            realizations: 16,
            depth_er: 11.0,
            grid: [16, 16, 1],
            lz: 1.0,
            steps_per_period: 128,
            noise_variance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// `condensed_fraction` (decay) or `mode_occupation` (growth).
    pub kind: String,
    pub r2_threshold: f64,
    /// Defaults to the first column.
    pub time_column: Option<String>,
    /// Defaults to the second column.
    pub value_column: Option<String>,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            kind: "condensed_fraction".into(),
            r2_threshold: 0.9,
            time_column: None,
            value_column: None,
        }
    }
}

fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn parse_table(text: &str, origin: &str) -> Result<Table> {
    text.parse::<Table>()
        .map_err(|e| CliError::config(format!("{origin}: {e}")))
}

/// A loaded configuration and the canonical text its hash is taken over.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub raw: RawConfig,
    pub canonical: String,
}

/// Loads `preset` (if any) overridden by the file at `path` (if any).
pub fn load(preset_name: Option<&str>, path: Option<&Path>) -> Result<Loaded> {
    let mut table = Table::new();
    if let Some(name) = preset_name {
        merge(
            &mut table,
            parse_table(preset(name)?, &format!("preset {name}"))?,
        );
    }
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        merge(&mut table, parse_table(&text, &path.display().to_string())?);
    }
    from_table(table)
}

pub fn from_table(table: Table) -> Result<Loaded> {
    let canonical = toml::to_string(&table).map_err(|e| CliError::config(e.to_string()))?;
    let raw: RawConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
    Ok(Loaded { raw, canonical })
}

pub fn parse_trajectory(name: &str) -> Result<Trajectory> {
    Trajectory::parse(name).ok_or_else(|| {
        CliError::config(format!(
            "unknown trajectory `{name}`; use linear_x, diagonal or circular"
        ))
    })
}

fn one_of(what: &str, options: &[(&str, Option<f64>)]) -> Result<Option<(usize, f64)>> {
    let set: Vec<(usize, f64)> = options
        .iter()
        .enumerate()
        .filter_map(|(i, (_, v))| v.map(|v| (i, v)))
        .collect();
    if set.len() > 1 {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        return Err(CliError::config(format!(
            "{what}: give only one of {}",
            names.join(", ")
        )));
    }
    Ok(set.first().copied())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanVariable {
    K0,
    Omega,
    GjOverOmega,
    G,
    V0,
}

impl ScanVariable {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "k0" => Ok(ScanVariable::K0),
            "omega" => Ok(ScanVariable::Omega),
            "gj_over_omega" => Ok(ScanVariable::GjOverOmega),
            "g" => Ok(ScanVariable::G),
            "v0" => Ok(ScanVariable::V0),
            other => Err(CliError::config(format!(
                "unknown scan variable `{other}`; use k0, omega, gj_over_omega, g or v0"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScanVariable::K0 => "k0",
            ScanVariable::Omega => "omega",
            ScanVariable::GjOverOmega => "gj_over_omega",
            ScanVariable::G => "g",
            ScanVariable::V0 => "v0",
        }
    }

    fn has_unit(self) -> bool {
        matches!(
            self,
            ScanVariable::Omega | ScanVariable::GjOverOmega | ScanVariable::G
        )
    }
}

/// Scanned variable and its values in internal units (rad/s for energies).
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub variable: ScanVariable,
    pub values: Vec<f64>,
}

impl ScanSpec {
    pub fn from_section(s: &ScanSection) -> Result<Self> {
        let variable = ScanVariable::parse(&s.variable)?;
        let values = match (&s.values, s.start, s.stop, s.count) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => {
                if n == 0 {
                    return Err(CliError::config("scan count must be >= 1"));
                }
                if n == 1 {
                    vec![a]
                } else {
                    (0..n)
                        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                        .collect()
                }
            }
            _ => {
                return Err(CliError::config(
                    "scan needs either `values` or all of `start`, `stop`, `count`",
                ))
            }
        };
        if values.is_empty() {
            return Err(CliError::config("scan values must not be empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::config("scan values must be finite"));
        }
        let up = values.windows(2).all(|w| w[1] > w[0]);
        let down = values.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(CliError::config("scan values must be strictly monotone"));
        }
        let scale = match (variable.has_unit(), s.unit.as_deref()) {
            (true, Some("hz")) => hz_to_rad_s(1.0),
            (true, Some("rad_s")) => 1.0,
            (true, Some(u)) => {
                return Err(CliError::config(format!(
                    "unknown scan unit `{u}`; use hz or rad_s"
                )))
            }
            (true, None) => {
                return Err(CliError::config(format!(
                    "scan over {} needs `unit = \"hz\"` or `\"rad_s\"`",
                    variable.name()
                )))
            }
            (false, Some(_)) => {
                return Err(CliError::config(format!(
                    "scan over {} is dimensionless and takes no unit",
                    variable.name()
                )))
            }
            (false, None) => 1.0,
        };
        Ok(Self {
            variable,
            values: values.into_iter().map(|v| v * scale).collect(),
        })
    }
}

/// Non-scanned physical parameters, in rad/s. A scan fills in the missing one.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixed {
    pub trajectory: Trajectory,
    pub k0: Option<f64>,
    pub omega: Option<f64>,
    pub j: Option<f64>,
    pub g: Option<f64>,
    pub gamma0: f64,
    pub n0: f64,
    pub m_z: Option<f64>,
    pub wavelength_m: f64,
    pub envelope: Option<Envelope>,
}

fn hopping_at_depth(depth_er: f64, wavelength_m: f64) -> Result<f64> {
    let band = BandProblem::rubidium_87(depth_er, wavelength_m).map_err(invalid)?;
    Ok(hz_to_rad_s(hopping_from_depth(&band)?))
}

impl Fixed {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let l = &raw.lattice;
        let d = &raw.drive;
        if !(l.wavelength_nm > 0.0 && l.wavelength_nm.is_finite()) {
            return Err(CliError::config("wavelength_nm must be > 0"));
        }
        let wavelength_m = l.wavelength_nm * 1e-9;
        let j = match one_of(
            "lattice hopping",
            &[("j_hz", l.j_hz), ("j_rad_s", l.j_rad_s), ("v0_er", l.v0_er)],
        )? {
            Some((0, v)) => Some(hz_to_rad_s(v)),
            Some((1, v)) => Some(v),
            Some((_, v)) => Some(hopping_at_depth(v, wavelength_m)?),
            None => None,
        };
        let g = one_of(
            "lattice interaction",
            &[("g_hz", l.g_hz), ("g_rad_s", l.g_rad_s)],
        )?
        .map(|(i, v)| if i == 0 { hz_to_rad_s(v) } else { v });
        let omega = one_of(
            "drive frequency",
            &[("omega_hz", d.omega_hz), ("omega_rad_s", d.omega_rad_s)],
        )?
        .map(|(i, v)| if i == 0 { hz_to_rad_s(v) } else { v });
        let envelope = match (
            d.ramp_up_periods,
            d.hold_periods,
            d.ramp_down_periods,
            d.end_phase,
        ) {
            (None, None, None, None) => None,
            (up, hold, None, Some(phase)) => {
                Some(Envelope::abrupt(up.unwrap_or(1), hold.unwrap_or(0), phase).map_err(invalid)?)
            }
            (_, _, Some(_), Some(_)) => {
                return Err(CliError::config(
                    "drive: give either ramp_down_periods or end_phase, not both",
                ))
            }
            (up, hold, down, None) => Some(
                Envelope::ramped(up.unwrap_or(1), hold.unwrap_or(0), down.unwrap_or(1))
                    .map_err(invalid)?,
            ),
        };
        Ok(Self {
            trajectory: parse_trajectory(&d.trajectory)?,
            k0: d.k0,
            omega,
            j,
            g,
            gamma0: l.gamma0_per_s,
            n0: l.n0,
            m_z: l.m_z,
            wavelength_m,
            envelope,
        })
    }

    /// Copy with the scanned variable set to `value`.
    pub fn at(&self, variable: ScanVariable, value: f64) -> Result<Self> {
        let mut f = self.clone();
        match variable {
            ScanVariable::K0 => f.k0 = Some(value),
            ScanVariable::Omega => f.omega = Some(value),
            ScanVariable::G => f.g = Some(value),
            ScanVariable::V0 => f.j = Some(hopping_at_depth(value, self.wavelength_m)?),
            ScanVariable::GjOverOmega => {
                if value.is_nan() || value <= 0.0 {
                    return Err(CliError::config(format!(
                        "gj_over_omega must be > 0, got {value}"
                    )));
                }
                f.omega = Some(self.g()? * self.j()? / value);
            }
        }
        Ok(f)
    }

    /// Rejects a scan whose variable is also fixed.
    pub fn check_scan(&self, raw: &RawConfig, variable: ScanVariable) -> Result<()> {
        let l = &raw.lattice;
        let clash = match variable {
            ScanVariable::K0 => self.k0.is_some(),
            ScanVariable::Omega | ScanVariable::GjOverOmega => self.omega.is_some(),
            ScanVariable::G => self.g.is_some(),
            ScanVariable::V0 => l.j_hz.is_some() || l.j_rad_s.is_some() || l.v0_er.is_some(),
        };
        if clash {
            return Err(CliError::config(format!(
                "{} is scanned and must not also be fixed in [lattice] or [drive]",
                variable.name()
            )));
        }
        Ok(())
    }

    fn need(v: Option<f64>, what: &str) -> Result<f64> {
        v.ok_or_else(|| CliError::config(format!("missing {what}")))
    }

    pub fn j(&self) -> Result<f64> {
        Self::need(self.j, "hopping (lattice j_hz, j_rad_s or v0_er)")
    }

    pub fn g(&self) -> Result<f64> {
        Self::need(self.g, "interaction (lattice g_hz or g_rad_s)")
    }

    pub fn omega(&self) -> Result<f64> {
        Self::need(
            self.omega,
            "drive frequency (drive omega_hz or omega_rad_s)",
        )
    }

    pub fn k0(&self) -> Result<f64> {
        Self::need(self.k0, "drive amplitude (drive k0)")
    }

    pub fn params(&self) -> Result<LatticeParams> {
        let j = self.j()?;
        LatticeParams::new(
            j,
            self.g()?,
            self.n0,
            self.gamma0,
            self.m_z.unwrap_or(1.0 / j),
        )
        .map_err(invalid)
    }

    pub fn drive(&self, trajectory: Trajectory) -> Result<DriveSpec> {
        let d = DriveSpec::new(trajectory, self.k0()?, self.omega()?).map_err(invalid)?;
        match self.envelope {
            Some(env) => d.with_envelope(env).map_err(invalid),
            None => Ok(d),
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub raw: RawConfig,
    pub canonical: String,
    pub fixed: Fixed,
    pub scan: Option<ScanSpec>,
    pub seed: u64,
}

/// One scan point: its index, the scanned value (if any) and the parameters.
#[derive(Debug, Clone)]
pub struct Point {
    pub index: usize,
    pub value: Option<f64>,
    pub fixed: Fixed,
}

impl Config {
    pub fn resolve(loaded: Loaded, seed_override: Option<u64>) -> Result<Self> {
        let fixed = Fixed::from_raw(&loaded.raw)?;
        let scan = match &loaded.raw.scan {
            Some(s) => {
                let spec = ScanSpec::from_section(s)?;
                fixed.check_scan(&loaded.raw, spec.variable)?;
                Some(spec)
            }
            None => None,
        };
        let seed = seed_override.unwrap_or(loaded.raw.run.seed);
        Ok(Self {
            raw: loaded.raw,
            canonical: loaded.canonical,
            fixed,
            scan,
            seed,
        })
    }

    /// Scan points in order; a single point without a scan.
    pub fn points(&self) -> Result<Vec<Point>> {
        match &self.scan {
            None => Ok(vec![Point {
                index: 0,
                value: None,
                fixed: self.fixed.clone(),
            }]),
            Some(spec) => spec
                .values
                .iter()
                .enumerate()
                .map(|(index, &v)| {
                    Ok(Point {
                        index,
                        value: Some(v),
                        fixed: self.fixed.at(spec.variable, v)?,
                    })
                })
                .collect(),
        }
    }
}
