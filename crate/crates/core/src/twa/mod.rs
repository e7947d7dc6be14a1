//! Truncated-Wigner simulation of the driven lattice Gross-Pitaevskii equation.
//!
//! The classical field lives on an `Nx x Ny x Nz` grid: lattice sites in the
//! plane and a periodic transverse box of length `Lz` discretised into `Nz`
//! points. Fourier transforms are unitary, so `sum_r |a_r|^2 = sum_k |a_k|^2`.
//!
//! Evolution uses the drive gauge of [`crate::lattice`]: the kinetic energy
//! is diagonal in momentum and carries the drive as a quasimomentum shift.
//! One step is a Strang splitting (half kinetic step, full nonlinear phase
//! `exp(-i U |a_r|^2 dt)`, half kinetic step), each kinetic half evaluated
//! at its own midpoint.
//!
//! A single-band model cannot hold the population that an abrupt lattice
//! stop transfers to excited bands. When a [`BandProblem`] is supplied, the
//! stop projects the field onto the ground band using
//! [`crate::special::boost_survival`] and books the remainder as a separate
//! excited-band population that counts towards `n_ex`.

mod checkpoint;
mod fft;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::lattice::{
    axis_energy, fft_wavenumbers, BogoliubovFrame, DriveSpec, LatticeParams, Momentum,
};
use crate::special::{boost_survival, BandProblem};
use crate::{Error, Result};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
use fft::Fft3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Transverse box length.
    pub lz: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nz: usize, lz: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::config("grid dimensions must be >= 1"));
        }
        if !(lz > 0.0 && lz.is_finite()) {
            return Err(Error::config(format!("lz must be > 0, got {lz}")));
        }
        Ok(Self { nx, ny, nz, lz })
    }

    /// Number of grid points `V`.
    pub fn volume(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.ny + iy) * self.nz + iz
    }

    fn wavenumbers(&self) -> [Vec<f64>; 3] {
        [
            fft_wavenumbers(self.nx, self.nx as f64),
            fft_wavenumbers(self.ny, self.ny as f64),
            fft_wavenumbers(self.nz, self.lz),
        ]
    }

    /// Index along an in-plane axis of the grid wavenumber equal to `q` (mod 2 pi).
    fn axis_index(n: usize, q: f64) -> Option<usize> {
        fft_wavenumbers(n, n as f64).iter().position(|k| {
            let d = (k - q).rem_euclid(2.0 * PI);
            d.min(2.0 * PI - d) < 1e-9
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    /// Drive enters as a time-dependent quasimomentum shift of the kinetic term.
    DriveShift,
}

impl Gauge {
    pub fn name(self) -> &'static str {
        "drive-shift"
    }

    pub fn parse(s: &str) -> Option<Self> {
        (s.trim() == "drive-shift").then_some(Gauge::DriveShift)
    }
}

/// Classical field in real space plus bookkeeping for observables.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub grid: Grid,
    /// `a_r` in row-major `(x, y, z)` order.
    pub amplitudes: Vec<Complex64>,
    pub t: f64,
    pub gauge: Gauge,
    /// Seed the noise was drawn from, if any.
    pub seed: Option<u64>,
    /// Condensate momentum `q0`.
    pub q0: Momentum,
    /// Multiplier on the Wigner vacuum variance (1 for the physical vacuum).
    pub noise_variance: f64,
    /// Atoms moved out of the simulated band by stop kicks.
    pub excited_band_atoms: f64,
}

impl FieldState {
    /// Total atom number including the excited-band reservoir.
    pub fn particle_number(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() + self.excited_band_atoms
    }

    fn validate(&self) -> Result<()> {
        if self.amplitudes.len() != self.grid.volume() {
            return Err(Error::domain(format!(
                "field has {} amplitudes for a grid of {}",
                self.amplitudes.len(),
                self.grid.volume()
            )));
        }
        condensate_index(&self.grid, &self.q0).map(|_| ())
    }
}

/// Initial-state options for [`sample_initial`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    /// Condensate momentum; in-plane components must be 0 or pi and `qz = 0`.
    pub q0: Momentum,
    /// Hopping multipliers `(x, y)` of the Bogoliubov problem used for the vacuum.
    pub hopping_scale: (f64, f64),
    /// Multiplier on the vacuum variance; 0 gives a noiseless condensate.
    pub noise_variance: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            q0: Momentum::zero(),
            hopping_scale: (1.0, 1.0),
            noise_variance: 1.0,
        }
    }
}

fn condensate_index(grid: &Grid, q0: &Momentum) -> Result<usize> {
    let err = || {
        Error::domain(format!(
            "condensate momentum {q0:?} is not a grid point with components 0 or pi"
        ))
    };
    let allowed = |q: f64| q == 0.0 || q.abs() == PI;
    if q0.qz != 0.0 || !allowed(q0.qx) || !allowed(q0.qy) {
        return Err(err());
    }
    let ix = Grid::axis_index(grid.nx, q0.qx).ok_or_else(err)?;
    let iy = Grid::axis_index(grid.ny, q0.qy).ok_or_else(err)?;
    Ok(grid.index(ix, iy, 0))
}

/// Static Bogoliubov `(u_k, v_k)` for every relative momentum `k` on the grid
/// in FFT order; the `k = 0` entry is `(1, 0)` and unused.
pub fn bogoliubov_amplitudes(
    grid: &Grid,
    p: &LatticeParams,
    opts: &SampleOptions,
) -> Result<Vec<(f64, f64)>> {
    let [kx, ky, kz] = grid.wavenumbers();
    let curv = (
        opts.hopping_scale.0 * opts.q0.qx.cos(),
        opts.hopping_scale.1 * opts.q0.qy.cos(),
    );
    let mut out = Vec::with_capacity(grid.volume());
    for (ix, &a) in kx.iter().enumerate() {
        for (iy, &b) in ky.iter().enumerate() {
            for (iz, &c) in kz.iter().enumerate() {
                if ix == 0 && iy == 0 && iz == 0 {
                    out.push((1.0, 0.0));
                    continue;
                }
                let eps = 4.0
                    * p.j
                    * (curv.0 * (0.5 * a).sin().powi(2) + curv.1 * (0.5 * b).sin().powi(2))
                    + p.transverse_kinetic(c);
                let frame =
                    BogoliubovFrame::from_energies(eps, p.g).map_err(|_| Error::InvertedBand {
                        k0: 0.0,
                        value: eps,
                    })?;
                let (ch, sh) = frame.half_angle();
                out.push((ch, -sh));
            }
        }
    }
    Ok(out)
}

/// Draws one Wigner realization of the Bogoliubov vacuum around `opts.q0`.
///
/// `a_{q0+k} = u_k g_k + v_k conj(g_{-k})` with complex Gaussian `g_k`,
/// `<|g_k|^2> = noise_variance / 2`. The noise comes from the ChaCha stream
/// `(seed, stream)`, so realizations are independent of scheduling.
pub fn sample_initial(
    grid: &Grid,
    p: &LatticeParams,
    opts: &SampleOptions,
    seed: u64,
    stream: u64,
) -> Result<FieldState> {
    if !(opts.noise_variance >= 0.0 && opts.noise_variance.is_finite()) {
        return Err(Error::domain("noise_variance must be >= 0"));
    }
    let c_index = condensate_index(grid, &opts.q0)?;
    let uv = bogoliubov_amplitudes(grid, p, opts)?;
    let v = grid.volume();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, 0.5 * opts.noise_variance.sqrt()).expect("finite std");
    let gamma: Vec<Complex64> = (0..v)
        .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();

    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    let (cx, cy) = (c_index / (ny * nz), (c_index / nz) % ny);
    let mut ak = vec![Complex64::default(); v];
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..nz {
                let rel = grid.index(ix, iy, iz);
                let abs = grid.index((ix + cx) % nx, (iy + cy) % ny, iz);
                if rel == 0 {
                    ak[abs] = Complex64::new((p.n0 * v as f64).sqrt(), 0.0);
                    continue;
                }
                let neg = grid.index((nx - ix) % nx, (ny - iy) % ny, (nz - iz) % nz);
                let (u, vv) = uv[rel];
                ak[abs] = gamma[rel] * u + gamma[neg].conj() * vv;
            }
        }
    }
    Fft3::new(nx, ny, nz).inverse(&mut ak);
    Ok(FieldState {
        grid: *grid,
        amplitudes: ak,
        t: 0.0,
        gauge: Gauge::DriveShift,
        seed: Some(seed),
        q0: opts.q0,
        noise_variance: opts.noise_variance,
        excited_band_atoms: 0.0,
    })
}

/// Run parameters shared by single trajectories and ensembles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwaRunConfig {
    pub steps_per_period: usize,
    /// Number of stroboscopic samples after `t = 0`.
    pub n_cycles: usize,
    /// Lattice used to project the field at an abrupt stop; `None` keeps the
    /// single-band dynamics unchanged through the stop.
    pub stop_kick: Option<BandProblem>,
}

impl TwaRunConfig {
    pub const DEFAULT_STEPS_PER_PERIOD: usize = 256;

    pub fn new(steps_per_period: usize, n_cycles: usize) -> Result<Self> {
        let cfg = Self {
            steps_per_period,
            n_cycles,
            stop_kick: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_stop_kick(mut self, band: BandProblem) -> Self {
        self.stop_kick = Some(band);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_period < 8 {
            return Err(Error::config(format!(
                "steps_per_period must be >= 8, got {}",
                self.steps_per_period
            )));
        }
        if self.n_cycles == 0 {
            return Err(Error::config("n_cycles must be >= 1"));
        }
        Ok(())
    }
}

/// Stroboscopic observables of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableTrace {
    pub realization: Option<usize>,
    pub times: Vec<f64>,
    /// Excited density with the Wigner half quantum of every non-condensate mode removed.
    pub n_ex: Vec<f64>,
    /// Excited density `(1/V) sum_{k != q0} |a_k|^2` plus the excited-band reservoir.
    pub n_ex_raw: Vec<f64>,
    pub condensed_fraction: Vec<f64>,
    pub particle_number: Vec<f64>,
}

/// Instantaneous observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub n_ex: f64,
    pub n_ex_raw: f64,
    pub condensed_fraction: f64,
    pub particle_number: f64,
}

struct Simulation<'a> {
    grid: Grid,
    fft: Fft3,
    k: [Vec<f64>; 3],
    ak: Vec<Complex64>,
    t: f64,
    step: usize,
    excited_band_atoms: f64,
    condensate: usize,
    half_quantum: f64,
    drive: &'a DriveSpec,
    p: &'a LatticeParams,
    cfg: &'a TwaRunConfig,
    state_meta: (Option<u64>, Momentum, f64),
    kicked: bool,
}

impl<'a> Simulation<'a> {
    fn new(
        initial: &FieldState,
        drive: &'a DriveSpec,
        p: &'a LatticeParams,
        cfg: &'a TwaRunConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        initial.validate()?;
        let grid = initial.grid;
        let mut fft = Fft3::new(grid.nx, grid.ny, grid.nz);
        let mut ak = initial.amplitudes.clone();
        fft.forward(&mut ak);
        let v = grid.volume() as f64;
        let kicked = drive.stop_time().is_some_and(|ts| initial.t > ts);
        Ok(Self {
            grid,
            fft,
            k: grid.wavenumbers(),
            ak,
            t: initial.t,
            step: 0,
            excited_band_atoms: initial.excited_band_atoms,
            condensate: condensate_index(&grid, &initial.q0)?,
            half_quantum: initial.noise_variance * (v - 1.0) / (2.0 * v),
            drive,
            p,
            cfg,
            state_meta: (initial.seed, initial.q0, initial.noise_variance),
            kicked,
        })
    }

    fn kinetic(&mut self, t_mid: f64, dt: f64) {
        let (ax, ay) = self.drive.shift(t_mid);
        let j = self.p.j;
        let phase = |e: f64| Complex64::from_polar(1.0, -e * dt);
        let px: Vec<Complex64> = self.k[0]
            .iter()
            .map(|&q| phase(axis_energy(j, q, ax)))
            .collect();
        let py: Vec<Complex64> = self.k[1]
            .iter()
            .map(|&q| phase(axis_energy(j, q, ay)))
            .collect();
        let pz: Vec<Complex64> = self.k[2]
            .iter()
            .map(|&q| phase(self.p.transverse_kinetic(q)))
            .collect();
        let (ny, nz) = (self.grid.ny, self.grid.nz);
        for (i, a) in self.ak.iter_mut().enumerate() {
            *a *= px[i / (ny * nz)] * py[(i / nz) % ny] * pz[i % nz];
        }
    }

    fn nonlinear(&mut self, dt: f64) -> Result<()> {
        let u = self.p.u;
        for a in self.ak.iter_mut() {
            let n = a.norm_sqr();
            if !n.is_finite() {
                return Err(Error::BlowUp {
                    step: self.step,
                    t: self.t,
                });
            }
            *a *= Complex64::from_polar(1.0, -u * n * dt);
        }
        Ok(())
    }

    fn strang_step(&mut self, dt: f64) -> Result<()> {
        self.kinetic(self.t + 0.25 * dt, 0.5 * dt);
        self.fft.inverse(&mut self.ak);
        self.nonlinear(dt)?;
        self.fft.forward(&mut self.ak);
        self.kinetic(self.t + 0.75 * dt, 0.5 * dt);
        self.t += dt;
        self.step += 1;
        Ok(())
    }

    fn integrate(&mut self, t_end: f64) -> Result<()> {
        let span = t_end - self.t;
        if span <= 0.0 {
            return Ok(());
        }
        let nominal = self.drive.period() / self.cfg.steps_per_period as f64;
        let n = ((span / nominal) - 1e-9).ceil().max(1.0) as usize;
        let dt = span / n as f64;
        let start = self.t;
        for i in 0..n {
            self.t = start + i as f64 * dt;
            self.strang_step(dt)?;
        }
        self.t = t_end;
        Ok(())
    }

    /// Advances to `t_end`, stopping exactly at an abrupt drive stop on the way.
    fn advance_to(&mut self, t_end: f64) -> Result<()> {
        let abrupt = self.drive.envelope.is_some_and(|e| e.abrupt_stop);
        if let (true, Some(ts)) = (abrupt && !self.kicked, self.drive.stop_time()) {
            if ts <= t_end {
                self.integrate(ts)?;
                self.apply_stop_kick()?;
            }
        }
        self.integrate(t_end)
    }

    fn apply_stop_kick(&mut self) -> Result<()> {
        self.kicked = true;
        let Some(band) = self.cfg.stop_kick else {
            return Ok(());
        };
        let d = self.drive;
        let wt = d.omega * self.t;
        let ax = d.k0 * wt.sin();
        let ay = d.kappa() * d.k0 * (wt + d.phase()).sin();
        let survive = boost_survival(&band, ax)? * boost_survival(&band, ay)?;
        let lowest: f64 = self.ak.iter().map(|a| a.norm_sqr()).sum();
        let scale = survive.sqrt();
        self.ak.iter_mut().for_each(|a| *a *= scale);
        self.excited_band_atoms += (1.0 - survive) * lowest;
        Ok(())
    }

    fn snapshot(&self) -> Snapshot {
        let lowest: f64 = self.ak.iter().map(|a| a.norm_sqr()).sum();
        let cond = self.ak[self.condensate].norm_sqr();
        let total = lowest + self.excited_band_atoms;
        let v = self.grid.volume() as f64;
        let raw = (lowest - cond + self.excited_band_atoms) / v;
        Snapshot {
            t: self.t,
            n_ex: raw - self.half_quantum,
            n_ex_raw: raw,
            condensed_fraction: if total > 0.0 { cond / total } else { 0.0 },
            particle_number: total,
        }
    }

    fn field(&mut self) -> FieldState {
        let mut a = self.ak.clone();
        self.fft.inverse(&mut a);
        FieldState {
            grid: self.grid,
            amplitudes: a,
            t: self.t,
            gauge: Gauge::DriveShift,
            seed: self.state_meta.0,
            q0: self.state_meta.1,
            noise_variance: self.state_meta.2,
            excited_band_atoms: self.excited_band_atoms,
        }
    }
}

/// Output of [`run_trajectory`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRun {
    pub trace: ObservableTrace,
    pub final_state: FieldState,
}

/// Evolves a field for `cfg.n_cycles` periods, sampling at `t0 + k T`.
pub fn run_trajectory(
    initial: &FieldState,
    drive: &DriveSpec,
    p: &LatticeParams,
    cfg: &TwaRunConfig,
) -> Result<TrajectoryRun> {
    let mut sim = Simulation::new(initial, drive, p, cfg)?;
    let period = drive.period();
    let t0 = initial.t;
    let mut trace = ObservableTrace {
        realization: None,
        times: Vec::with_capacity(cfg.n_cycles + 1),
        n_ex: Vec::with_capacity(cfg.n_cycles + 1),
        n_ex_raw: Vec::with_capacity(cfg.n_cycles + 1),
        condensed_fraction: Vec::with_capacity(cfg.n_cycles + 1),
        particle_number: Vec::with_capacity(cfg.n_cycles + 1),
    };
    for k in 0..=cfg.n_cycles {
        let t = t0 + k as f64 * period;
        sim.advance_to(t)?;
        let s = sim.snapshot();
        trace.times.push(t);
        trace.n_ex.push(s.n_ex);
        trace.n_ex_raw.push(s.n_ex_raw);
        trace.condensed_fraction.push(s.condensed_fraction);
        trace.particle_number.push(s.particle_number);
    }
    Ok(TrajectoryRun {
        trace,
        final_state: sim.field(),
    })
}

/// Observables right after the drive stops and after a static hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopHoldResult {
    pub at_stop: Snapshot,
    pub after_hold: Snapshot,
}

/// Runs an enveloped drive to its stop, then holds the static lattice for
/// `hold_periods` drive periods.
pub fn stop_and_hold(
    initial: &FieldState,
    drive: &DriveSpec,
    p: &LatticeParams,
    cfg: &TwaRunConfig,
    hold_periods: f64,
) -> Result<StopHoldResult> {
    let stop = drive
        .stop_time()
        .ok_or_else(|| Error::config("stop-and-hold needs a drive envelope"))?;
    if !(hold_periods >= 0.0) {
        return Err(Error::config("hold_periods must be >= 0"));
    }
    let mut sim = Simulation::new(initial, drive, p, cfg)?;
    sim.advance_to(stop)?;
    let at_stop = sim.snapshot();
    sim.advance_to(stop + hold_periods * drive.period())?;
    Ok(StopHoldResult {
        at_stop,
        after_hold: sim.snapshot(),
    })
}

/// Kinetic plus interaction energy `sum_k eps(k,t) |a_k|^2 + U/2 sum_r |a_r|^4`.
pub fn energy(state: &FieldState, drive: &DriveSpec, p: &LatticeParams) -> f64 {
    let g = state.grid;
    let [kx, ky, kz] = g.wavenumbers();
    let (ax, ay) = drive.shift(state.t);
    let mut ak = state.amplitudes.clone();
    Fft3::new(g.nx, g.ny, g.nz).forward(&mut ak);
    let mut kinetic = 0.0;
    for (i, a) in ak.iter().enumerate() {
        let e = axis_energy(p.j, kx[i / (g.ny * g.nz)], ax)
            + axis_energy(p.j, ky[(i / g.nz) % g.ny], ay)
            + p.transverse_kinetic(kz[i % g.nz]);
        kinetic += e * a.norm_sqr();
    }
    let interaction: f64 = state
        .amplitudes
        .iter()
        .map(|a| a.norm_sqr().powi(2))
        .sum::<f64>()
        * 0.5
        * p.u;
    kinetic + interaction
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub n_realizations: usize,
    pub master_seed: u64,
    pub bootstrap_resamples: usize,
}

impl EnsembleConfig {
    pub fn new(n_realizations: usize, master_seed: u64) -> Result<Self> {
        if n_realizations == 0 {
            return Err(Error::config("n_realizations must be >= 1"));
        }
        Ok(Self {
            n_realizations,
            master_seed,
            bootstrap_resamples: 200,
        })
    }

    pub fn with_bootstrap_resamples(mut self, resamples: usize) -> Result<Self> {
        if resamples == 0 {
            return Err(Error::config("bootstrap_resamples must be >= 1"));
        }
        self.bootstrap_resamples = resamples;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub mean_n_ex: Vec<f64>,
    pub mean_n_ex_raw: Vec<f64>,
    pub mean_condensed_fraction: Vec<f64>,
    /// Bootstrap standard deviation of the mean; `None` for a single realization.
    pub n_ex_band: Option<Vec<f64>>,
    pub condensed_fraction_band: Option<Vec<f64>>,
    pub traces: Vec<ObservableTrace>,
}

// Bootstrap resamples use their own stream family, disjoint from realizations.
const BOOTSTRAP_SEED_OFFSET: u64 = 0x5eed_b007_5742_a9e1;

/// Runs independent realizations in parallel and averages them pointwise.
pub fn ensemble_run(
    ens: &EnsembleConfig,
    grid: &Grid,
    p: &LatticeParams,
    drive: &DriveSpec,
    opts: &SampleOptions,
    cfg: &TwaRunConfig,
) -> Result<EnsembleResult> {
    let results: Vec<Result<ObservableTrace>> = (0..ens.n_realizations)
        .into_par_iter()
        .map(|r| {
            let init = sample_initial(grid, p, opts, ens.master_seed, r as u64)?;
            let mut trace = run_trajectory(&init, drive, p, cfg)?.trace;
            trace.realization = Some(r);
            Ok(trace)
        })
        .collect();
    let mut traces = Vec::with_capacity(ens.n_realizations);
    for (r, res) in results.into_iter().enumerate() {
        traces.push(res.map_err(|e| Error::Realization {
            realization: r,
            source: Box::new(e),
        })?);
    }
    let times = traces[0].times.clone();
    let mean = |f: fn(&ObservableTrace) -> &Vec<f64>, pick: &[usize]| -> Vec<f64> {
        let mut acc = vec![0.0; times.len()];
        for &i in pick {
            for (a, v) in acc.iter_mut().zip(f(&traces[i])) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / pick.len() as f64).collect()
    };
    let all: Vec<usize> = (0..traces.len()).collect();
    let n_ex_of: fn(&ObservableTrace) -> &Vec<f64> = |t| &t.n_ex;
    let cf_of: fn(&ObservableTrace) -> &Vec<f64> = |t| &t.condensed_fraction;
    let mean_n_ex = mean(n_ex_of, &all);
    let mean_cf = mean(cf_of, &all);
    let (n_ex_band, cf_band) = if traces.len() < 2 {
        (None, None)
    } else {
        let n = traces.len();
        let draws: Vec<Vec<usize>> = (0..ens.bootstrap_resamples)
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(ens.master_seed ^ BOOTSTRAP_SEED_OFFSET);
                rng.set_stream(b as u64);
                (0..n)
                    .map(|_| rand::Rng::gen_range(&mut rng, 0..n))
                    .collect()
            })
            .collect();
        let band = |f: fn(&ObservableTrace) -> &Vec<f64>| -> Vec<f64> {
            let means: Vec<Vec<f64>> = draws.iter().map(|d| mean(f, d)).collect();
            (0..times.len())
                .map(|k| std_dev(means.iter().map(|m| m[k])))
                .collect()
        };
        (Some(band(n_ex_of)), Some(band(cf_of)))
    };
    Ok(EnsembleResult {
        mean_n_ex_raw: mean(|t| &t.n_ex_raw, &all),
        times,
        mean_n_ex,
        mean_condensed_fraction: mean_cf,
        n_ex_band,
        condensed_fraction_band: cf_band,
        traces,
    })
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    let m = values.clone().sum::<f64>() / n as f64;
    (values.map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}
