//! Text checkpoint of a [`FieldState`].
//!
//! Layout (version 1), UTF-8, one item per line:
//!
//! ```text
//! fbdg-field 1
//! dims <nx> <ny> <nz>
//! lz <f64>
//! t <f64>
//! gauge drive-shift
//! seed <u64 | none>
//! q0 <qx> <qy> <qz>
//! noise_variance <f64>
//! excited_band_atoms <f64>
//! data
//! <re> <im>        # nx*ny*nz lines, index (ix*ny + iy)*nz + iz
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a write/read cycle is
//! exact.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use super::{FieldState, Gauge, Grid};
use crate::lattice::Momentum;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "fbdg-field";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(state: &FieldState, mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
    let g = state.grid;
    let seed = state
        .seed
        .map_or_else(|| "none".to_string(), |s| s.to_string());
    write!(
        out,
        "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\ndims {} {} {}\nlz {:?}\nt {:?}\ngauge {}\nseed {seed}\nq0 {:?} {:?} {:?}\nnoise_variance {:?}\nexcited_band_atoms {:?}\ndata\n",
        g.nx,
        g.ny,
        g.nz,
        g.lz,
        state.t,
        state.gauge.name(),
        state.q0.qx,
        state.q0.qy,
        state.q0.qz,
        state.noise_variance,
        state.excited_band_atoms,
    )
    .map_err(io)?;
    for a in &state.amplitudes {
        writeln!(out, "{:?} {:?}", a.re, a.im).map_err(io)?;
    }
    out.flush().map_err(io)
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(Error::Checkpoint(format!("line {}: {e}", self.line))),
            None => Err(Error::Checkpoint(format!(
                "line {}: unexpected end of file",
                self.line
            ))),
        }
    }

    fn field(&mut self, key: &str) -> Result<Vec<String>> {
        let l = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.bad(&format!("expected `{key}`")));
        }
        Ok(parts.map(str::to_string).collect())
    }

    fn bad(&self, msg: &str) -> Error {
        Error::Checkpoint(format!("line {}: {msg}", self.line))
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse()
            .map_err(|_| self.bad(&format!("cannot parse `{s}`")))
    }

    fn scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        if v.len() != 1 {
            return Err(self.bad(&format!("`{key}` takes one value")));
        }
        self.parse(&v[0])
    }
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<FieldState> {
    let mut lines = Lines {
        inner: input.lines(),
        line: 0,
    };
    let version: u32 = lines.scalar(CHECKPOINT_MAGIC)?;
    if version != CHECKPOINT_VERSION {
        return Err(lines.bad(&format!("unsupported version {version}")));
    }
    let dims = lines.field("dims")?;
    if dims.len() != 3 {
        return Err(lines.bad("`dims` takes three values"));
    }
    let (nx, ny, nz) = (
        lines.parse(&dims[0])?,
        lines.parse(&dims[1])?,
        lines.parse(&dims[2])?,
    );
    let lz: f64 = lines.scalar("lz")?;
    let grid = Grid::new(nx, ny, nz, lz)?;
    let t: f64 = lines.scalar("t")?;
    let gauge_name: String = lines.scalar("gauge")?;
    let gauge = Gauge::parse(&gauge_name)
        .ok_or_else(|| lines.bad(&format!("unknown gauge `{gauge_name}`")))?;
    let seed_text: String = lines.scalar("seed")?;
    let seed = if seed_text == "none" {
        None
    } else {
        Some(lines.parse(&seed_text)?)
    };
    let q = lines.field("q0")?;
    if q.len() != 3 {
        return Err(lines.bad("`q0` takes three values"));
    }
    let q0 = Momentum {
        qx: lines.parse(&q[0])?,
        qy: lines.parse(&q[1])?,
        qz: lines.parse(&q[2])?,
    };
    let noise_variance: f64 = lines.scalar("noise_variance")?;
    let excited_band_atoms: f64 = lines.scalar("excited_band_atoms")?;
    if !lines.field("data")?.is_empty() {
        return Err(lines.bad("`data` takes no values"));
    }
    let mut amplitudes = Vec::with_capacity(grid.volume());
    for _ in 0..grid.volume() {
        let l = lines.next()?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(lines.bad("expected `<re> <im>`"));
        }
        amplitudes.push(Complex64::new(
            lines.parse(parts[0])?,
            lines.parse(parts[1])?,
        ));
    }
    let state = FieldState {
        grid,
        amplitudes,
        t,
        gauge,
        seed,
        q0,
        noise_variance,
        excited_band_atoms,
    };
    state.validate()?;
    Ok(state)
}
