use fbdg_core::analytics::k0_critical;
use fbdg_core::special::j0_first_zero;
use fbdg_core::Error as CoreError;

use super::freq_pair;
use crate::config::{Config, ScanVariable};
use crate::error::{CliError, Result};
use crate::output::{fmt_flag, fmt_num, fmt_opt, Outputs, Table};

pub const FILE: &str = "k0c.csv";

const HEADER: &[&str] = &[
    "point",
    "omega_rad_s",
    "omega_hz",
    "g_rad_s",
    "g_hz",
    "g_over_omega",
    "k0c",
    "k0c_asymptote",
    "g_exceeds_omega",
];

/// Critical amplitude `J0^{-1}(g / omega)` over a frequency scan; rows with
/// `g > omega` have no critical amplitude and are flagged.
pub fn run(cfg: &Config, out: &mut Outputs) -> Result<()> {
    if let Some(spec) = &cfg.scan {
        if spec.variable != ScanVariable::Omega {
            return Err(CliError::config("k0c scans omega only"));
        }
    }
    let mut table = Table::new(HEADER);
    for point in cfg.points()? {
        let omega = point.fixed.omega()?;
        let g = point.fixed.g()?;
        if !(omega > 0.0 && g > 0.0) {
            return Err(CliError::config(format!(
                "k0c needs omega > 0 and g > 0, got omega {omega}, g {g}"
            )));
        }
        let (k0c, above) = match k0_critical(omega, g) {
            Ok(k) => (Some(k), false),
            Err(CoreError::NoCriticalAmplitude { .. }) => (None, true),
            Err(e) => return Err(e.into()),
        };
        let mut cells = vec![point.index.to_string()];
        cells.extend(freq_pair(Some(omega)));
        cells.extend(freq_pair(Some(g)));
        cells.push(fmt_num(g / omega));
        cells.push(fmt_opt(k0c));
        cells.push(fmt_num(j0_first_zero()));
        cells.push(fmt_flag(above));
        table.push(cells);
    }
    out.write_table(FILE, &table)
}
