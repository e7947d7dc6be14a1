//! Direct integration of the driven Bogoliubov equations, one `(q, -q)` pair
//! at a time.
//!
//! Each pair obeys `i d/dt (u, v) = M(t) (u, v)` with
//!
//! ```text
//! M(t) = [  eps(q, t) + g          g          ]
//!        [      -g          -eps(-q, t) - g   ]
//! ```
//!
//! `M` is a scalar plus an element of `su(1,1)`, so every exact exponential of
//! it preserves `|u|^2 - |v|^2`. The integrator is the fourth-order
//! commutator-free Magnus scheme with two exponentials per step, each evaluated
//! in closed form.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::fit::{windowed_log_slope, DecayTrace, TraceKind};
use crate::lattice::{
    dispersion, fft_wavenumbers, BogoliubovFrame, DriveSpec, LatticeParams, Momentum,
};
use crate::{Error, Result};

/// Relative symplectic-norm drift that aborts an integration.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModePairState {
    pub u: Complex64,
    pub v: Complex64,
    pub q: Momentum,
    pub t: f64,
}

impl ModePairState {
    /// `|u|^2 - |v|^2`, equal to 1 for a properly normalised pair.
    pub fn symplectic_norm(&self) -> f64 {
        self.u.norm_sqr() - self.v.norm_sqr()
    }

    pub fn occupation(&self) -> f64 {
        self.v.norm_sqr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdgRunConfig {
    pub steps_per_period: usize,
    pub n_cycles: usize,
    /// Momentum grid `(Nx, Ny, Nz)`.
    pub grid: (usize, usize, usize),
    /// Transverse box length; `qz` spacing is `2 pi / lz`.
    pub lz: f64,
    pub fit_window_cycles: u32,
}

impl BdgRunConfig {
    pub fn new(
        steps_per_period: usize,
        n_cycles: usize,
        grid: (usize, usize, usize),
        lz: f64,
    ) -> Result<Self> {
        let cfg = Self {
            steps_per_period,
            n_cycles,
            grid,
            lz,
            fit_window_cycles: 8,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_fit_window(mut self, cycles: u32) -> Result<Self> {
        self.fit_window_cycles = cycles;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_period < 64 {
            return Err(Error::config(format!(
                "steps_per_period must be >= 64, got {}",
                self.steps_per_period
            )));
        }
        if self.fit_window_cycles == 0 || self.n_cycles < self.fit_window_cycles as usize {
            return Err(Error::config(format!(
                "need n_cycles ({}) >= fit_window_cycles ({}) >= 1",
                self.n_cycles, self.fit_window_cycles
            )));
        }
        let (nx, ny, nz) = self.grid;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::config("grid dimensions must be >= 1"));
        }
        if !(self.lz > 0.0 && self.lz.is_finite()) {
            return Err(Error::config(format!("lz must be > 0, got {}", self.lz)));
        }
        Ok(())
    }

    /// Every grid momentum except the condensate, sorted lexicographically.
    pub fn modes(&self) -> Vec<Momentum> {
        let (nx, ny, nz) = self.grid;
        let sorted = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v
        };
        let qx = sorted(fft_wavenumbers(nx, nx as f64));
        let qy = sorted(fft_wavenumbers(ny, ny as f64));
        let qz = sorted(fft_wavenumbers(nz, self.lz));
        let mut out = Vec::with_capacity(nx * ny * nz);
        for &a in &qx {
            for &b in &qy {
                for &c in &qz {
                    let q = Momentum {
                        qx: a,
                        qy: b,
                        qz: c,
                    };
                    if !q.is_zero() {
                        out.push(q);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrajectory {
    pub q: Momentum,
    pub period: f64,
    /// Stroboscopic times `k T`, `k = 0..=n_cycles`.
    pub times: Vec<f64>,
    /// `|v|^2` at each stroboscopic time.
    pub occupations: Vec<f64>,
    /// Largest `| |u|^2 - |v|^2 - 1 |` seen at any step.
    pub max_norm_drift: f64,
    pub final_state: ModePairState,
}

impl ModeTrajectory {
    pub fn trace(&self) -> Result<DecayTrace> {
        DecayTrace::new(
            self.times.clone(),
            self.occupations.clone(),
            TraceKind::ModeOccupation,
        )
    }

    /// Slope of `log n_q` over the last `window_cycles` periods; 0 for modes
    /// whose occupation vanishes in the window.
    pub fn growth_rate(&self, window_cycles: u32) -> Result<f64> {
        Ok(windowed_log_slope(&self.trace()?, window_cycles, self.period)?.rate)
    }
}

/// Stationary mode of the undriven problem at `q`: `(cosh theta, -sinh theta)`.
pub fn init_mode(q: &Momentum, drive: &DriveSpec, p: &LatticeParams) -> Result<ModePairState> {
    if q.is_zero() {
        return Err(Error::SingularMode);
    }
    let still = drive.with_k0(0.0)?;
    let eps = dispersion(q, 0.0, &still, p);
    let (c, s) = BogoliubovFrame::from_energies(eps, p.g)?.half_angle();
    Ok(ModePairState {
        u: Complex64::new(c, 0.0),
        v: Complex64::new(-s, 0.0),
        q: *q,
        t: 0.0,
    })
}

/// Diagonal entries `(eps(q,t) + g, eps(-q,t) + g)` of `M(t)`.
fn diagonal(
    q: &Momentum,
    mq: &Momentum,
    t: f64,
    drive: &DriveSpec,
    p: &LatticeParams,
) -> (f64, f64) {
    (
        dispersion(q, t, drive, p) + p.g,
        dispersion(mq, t, drive, p) + p.g,
    )
}

/// Applies `exp(-i h [[a, g], [-g, -b]])` to `(u, v)`.
fn apply_exp(a: f64, b: f64, g: f64, h: f64, u: Complex64, v: Complex64) -> (Complex64, Complex64) {
    let scalar = 0.5 * (a - b);
    let c = 0.5 * (a + b);
    let w2 = c * c - g * g;
    // exp(-i h N) = cos_part I - i sin_part N, with N^2 = w2 I.
    let x2 = h * h * w2;
    let (cos_part, sin_part) = if x2.abs() < 1e-8 {
        (
            1.0 - 0.5 * x2 + x2 * x2 / 24.0,
            h * (1.0 - x2 / 6.0 + x2 * x2 / 120.0),
        )
    } else if w2 > 0.0 {
        let w = w2.sqrt();
        ((h * w).cos(), (h * w).sin() / w)
    } else {
        let w = (-w2).sqrt();
        ((h * w).cosh(), (h * w).sinh() / w)
    };
    let mi = Complex64::new(0.0, -sin_part);
    let nu = u * c + v * g;
    let nv = -(u * g) - v * c;
    let phase = Complex64::from_polar(1.0, -h * scalar);
    (
        phase * (u * cos_part + mi * nu),
        phase * (v * cos_part + mi * nv),
    )
}

const SQRT3_6: f64 = 0.288_675_134_594_812_9;

/// Advances the pair by one Magnus step of length `h`.
fn magnus_step(
    state: &mut ModePairState,
    mq: &Momentum,
    h: f64,
    drive: &DriveSpec,
    p: &LatticeParams,
) {
    let (a1, b1) = diagonal(&state.q, mq, state.t + (0.5 - SQRT3_6) * h, drive, p);
    let (a2, b2) = diagonal(&state.q, mq, state.t + (0.5 + SQRT3_6) * h, drive, p);
    let (early, late) = (0.25 + SQRT3_6, 0.25 - SQRT3_6);
    // The off-diagonal g enters both exponentials with total weight 1/2 each.
    let (u, v) = apply_exp(
        early * a1 + late * a2,
        early * b1 + late * b2,
        0.5 * p.g,
        h,
        state.u,
        state.v,
    );
    let (u, v) = apply_exp(
        late * a1 + early * a2,
        late * b1 + early * b2,
        0.5 * p.g,
        h,
        u,
        v,
    );
    state.u = u;
    state.v = v;
    state.t += h;
}

/// Integrates a mode pair over `cfg.n_cycles` periods and samples `|v|^2`
/// stroboscopically.
pub fn evolve_mode(
    state: &ModePairState,
    drive: &DriveSpec,
    p: &LatticeParams,
    cfg: &BdgRunConfig,
) -> Result<ModeTrajectory> {
    cfg.validate()?;
    let period = drive.period();
    let h = period / cfg.steps_per_period as f64;
    let mq = state.q.neg();
    let mut s = *state;
    let t0 = s.t;
    let mut times = Vec::with_capacity(cfg.n_cycles + 1);
    let mut occupations = Vec::with_capacity(cfg.n_cycles + 1);
    times.push(t0);
    occupations.push(s.occupation());
    let mut max_drift = (s.symplectic_norm() - 1.0).abs();
    for k in 1..=cfg.n_cycles {
        for step in 0..cfg.steps_per_period {
            // Times are rebuilt from integers so no rounding accumulates.
            s.t = t0 + (k - 1) as f64 * period + step as f64 * h;
            magnus_step(&mut s, &mq, h, drive, p);
            let (nu, nv) = (s.u.norm_sqr(), s.v.norm_sqr());
            let drift = (nu - nv - 1.0).abs();
            max_drift = max_drift.max(drift);
            if !(drift <= NORM_TOLERANCE * (nu + nv)) {
                return Err(Error::IntegratorTolerance { drift, t: s.t });
            }
        }
        s.t = t0 + k as f64 * period;
        times.push(s.t);
        occupations.push(s.occupation());
    }
    Ok(ModeTrajectory {
        q: state.q,
        period,
        times,
        occupations,
        max_norm_drift: max_drift,
        final_state: s,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRate {
    pub q: Momentum,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScan {
    pub q_max: Momentum,
    pub rate: f64,
    /// One entry per non-condensate grid mode, in lexicographic `q` order.
    pub per_mode: Vec<ModeRate>,
}

impl GridScan {
    /// Modes whose rate lies within `rel_tol` of the maximum.
    pub fn near_maxima(&self, rel_tol: f64) -> Vec<&ModeRate> {
        self.per_mode
            .iter()
            .filter(|m| m.rate >= self.rate * (1.0 - rel_tol))
            .collect()
    }
}

/// Growth rate of a single grid mode from its windowed log slope.
pub fn mode_rate(
    q: &Momentum,
    drive: &DriveSpec,
    p: &LatticeParams,
    cfg: &BdgRunConfig,
) -> Result<f64> {
    let init = init_mode(q, drive, p)?;
    evolve_mode(&init, drive, p, cfg)?.growth_rate(cfg.fit_window_cycles)
}

/// Evolves every grid mode and returns the fastest-growing one. Ties go to
/// the lexicographically smallest momentum.
pub fn grid_instability_scan(
    drive: &DriveSpec,
    p: &LatticeParams,
    cfg: &BdgRunConfig,
) -> Result<GridScan> {
    cfg.validate()?;
    let modes = cfg.modes();
    if modes.is_empty() {
        return Err(Error::config("grid holds no modes besides the condensate"));
    }
    let rates: Vec<Result<f64>> = modes
        .par_iter()
        .map(|q| mode_rate(q, drive, p, cfg))
        .collect();
    let mut per_mode = Vec::with_capacity(modes.len());
    for (q, r) in modes.into_iter().zip(rates) {
        per_mode.push(ModeRate { q, rate: r? });
    }
    let mut best = 0;
    for (i, m) in per_mode.iter().enumerate() {
        if m.rate > per_mode[best].rate {
            best = i;
        }
    }
    Ok(GridScan {
        q_max: per_mode[best].q,
        rate: per_mode[best].rate,
        per_mode,
    })
}

/// Summed linear-theory excited density `(1/V) sum_{q != 0} n_q(t_k)` at
/// every stroboscopic sample, `V` being the number of grid points.
pub fn excited_density(
    drive: &DriveSpec,
    p: &LatticeParams,
    cfg: &BdgRunConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let modes = cfg.modes();
    let volume = (cfg.grid.0 * cfg.grid.1 * cfg.grid.2) as f64;
    let runs: Vec<Result<ModeTrajectory>> = modes
        .par_iter()
        .map(|q| init_mode(q, drive, p).and_then(|s| evolve_mode(&s, drive, p, cfg)))
        .collect();
    let mut total = vec![0.0; cfg.n_cycles + 1];
    for run in runs {
        for (acc, n) in total.iter_mut().zip(&run?.occupations) {
            *acc += n;
        }
    }
    Ok(total.into_iter().map(|n| n / volume).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{gamma_and_qmum, omega_c};
    use crate::lattice::{bog_frame, Trajectory};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit_params(g: f64) -> LatticeParams {
        LatticeParams::new(1.0, g, 1.0, 0.0, 1.0).unwrap()
    }

    fn cfg(steps: usize, cycles: usize) -> BdgRunConfig {
        BdgRunConfig::new(steps, cycles, (8, 8, 1), 1.0).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(BdgRunConfig::new(32, 24, (4, 4, 1), 1.0).is_err());
        assert!(BdgRunConfig::new(64, 4, (4, 4, 1), 1.0).is_err());
        assert!(BdgRunConfig::new(64, 24, (0, 4, 1), 1.0).is_err());
        assert!(BdgRunConfig::new(64, 24, (4, 4, 1), 0.0).is_err());
        assert!(cfg(64, 24).with_fit_window(5).is_ok());
    }

    #[test]
    fn grid_modes() {
        let c = BdgRunConfig::new(64, 8, (4, 2, 3), 6.0).unwrap();
        let m = c.modes();
        assert_eq!(m.len(), 4 * 2 * 3 - 1);
        assert!(m
            .windows(2)
            .all(|w| (w[0].qx, w[0].qy, w[0].qz) < (w[1].qx, w[1].qy, w[1].qz)));
        assert!(m.iter().any(|q| q.qx == PI && q.qy == PI));
        assert!(m.iter().any(|q| (q.qz - 2.0 * PI / 6.0).abs() < 1e-15));
    }

    #[test]
    fn init_mode_examples() {
        let d = DriveSpec::new(Trajectory::LinearX, 1.0, 10.0).unwrap();
        let q = Momentum::new(0.7, -0.3, 0.0);
        let free = init_mode(&q, &d, &unit_params(0.0)).unwrap();
        assert_eq!(
            (free.u, free.v),
            (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
        );
        // eps = 2g gives cosh 2theta = 3 / (2 sqrt 2).
        let p = unit_params(2.0);
        let qe = Momentum::new(PI / 2.0, PI / 2.0, 0.0);
        let m = init_mode(&qe, &d, &p).unwrap();
        let cosh2 = m.u.norm_sqr() + m.v.norm_sqr();
        assert_abs_diff_eq!(cosh2, 3.0 / (2.0 * 2f64.sqrt()), epsilon = 1e-14);
        assert_abs_diff_eq!(m.symplectic_norm(), 1.0, epsilon = 1e-14);
        assert!(matches!(
            init_mode(&Momentum::zero(), &d, &p),
            Err(Error::SingularMode)
        ));
    }

    #[test]
    fn undriven_mode_is_stationary() {
        let d = DriveSpec::new(Trajectory::Circular, 0.0, 7.0).unwrap();
        let p = unit_params(5.0);
        let q = Momentum::new(1.1, 0.4, 0.0);
        let tr = evolve_mode(&init_mode(&q, &d, &p).unwrap(), &d, &p, &cfg(64, 20)).unwrap();
        let n0 = tr.occupations[0];
        assert!(tr.occupations.iter().all(|n| (n - n0).abs() < 1e-12 * n0));
        // The phase winds at the Bogoliubov energy.
        let e = bog_frame(&q, &d, &p).unwrap().e_bog;
        let want = Complex64::from_polar(tr.final_state.u.norm(), -e * tr.final_state.t);
        assert!((tr.final_state.u - want).norm() < 1e-10);
    }

    #[test]
    fn magnus_order_is_four() {
        let d = DriveSpec::new(Trajectory::Diagonal, 1.25, 20.0).unwrap();
        let p = unit_params(12.0);
        let q = Momentum::new(2.0, 1.0, 0.0);
        let init = init_mode(&q, &d, &p).unwrap();
        let run = |steps| {
            evolve_mode(&init, &d, &p, &cfg(steps, 8))
                .unwrap()
                .final_state
        };
        let reference = run(4096);
        let e1 = (run(64).v - reference.v).norm();
        let e2 = (run(128).v - reference.v).norm();
        let order = (e1 / e2).log2();
        assert!(order > 3.7 && order < 4.3, "observed order {order}");
    }

    #[test]
    fn pairing_symmetry() {
        let d = DriveSpec::new(Trajectory::Circular, 1.25, 20.0).unwrap();
        let p = unit_params(12.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let q = Momentum::new(
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
                rng.gen_range(-1.0..1.0),
            );
            let a = evolve_mode(&init_mode(&q, &d, &p).unwrap(), &d, &p, &cfg(64, 24)).unwrap();
            let b =
                evolve_mode(&init_mode(&q.neg(), &d, &p).unwrap(), &d, &p, &cfg(64, 24)).unwrap();
            for (x, y) in a.occupations.iter().zip(&b.occupations) {
                assert!((x - y).abs() <= 1e-10 * x.max(1.0));
            }
        }
    }

    #[test]
    fn resonant_mode_grows_at_twice_analytic_rate() {
        let p = unit_params(12.0);
        let d = DriveSpec::new(Trajectory::LinearX, 1.25, 10.0).unwrap();
        assert!(d.omega > omega_c(&d, &p).unwrap().omega_c);
        let analytic = gamma_and_qmum(&d, &p).unwrap().gamma;
        // Above the cusp the x-edge mode resonates through the undriven y axis.
        let eps = (p.g * p.g + d.omega * d.omega).sqrt() - p.g;
        let sy = (eps - 4.0 * p.j * crate::special::bessel_j(0, d.k0).unwrap()) / (4.0 * p.j);
        let q = Momentum::new(PI, 2.0 * sy.sqrt().asin(), 0.0);
        let rate = mode_rate(&q, &d, &p, &cfg(128, 40)).unwrap();
        assert!(
            (rate - 2.0 * analytic).abs() < 0.1 * 2.0 * analytic,
            "{rate} vs {}",
            2.0 * analytic
        );
    }

    #[test]
    fn zero_drive_scan_is_flat() {
        let d = DriveSpec::new(Trajectory::LinearX, 0.0, 20.0).unwrap();
        let scan = grid_instability_scan(&d, &unit_params(12.0), &cfg(64, 16)).unwrap();
        assert!(scan.per_mode.iter().all(|m| m.rate.abs() < 1e-8));
    }

    #[test]
    fn scan_is_deterministic() {
        let d = DriveSpec::new(Trajectory::LinearX, 1.25, 10.0).unwrap();
        let p = unit_params(12.0);
        let a = grid_instability_scan(&d, &p, &cfg(64, 16)).unwrap();
        let serial: Vec<f64> = cfg(64, 16)
            .modes()
            .iter()
            .map(|q| mode_rate(q, &d, &p, &cfg(64, 16)).unwrap())
            .collect();
        assert_eq!(
            a.per_mode.iter().map(|m| m.rate).collect::<Vec<_>>(),
            serial
        );
        assert_eq!(a.q_max.qx, PI);
        assert_eq!(a, grid_instability_scan(&d, &p, &cfg(64, 16)).unwrap());
    }

    #[test]
    fn undriven_excited_density_is_the_static_depletion() {
        let p = unit_params(3.0);
        let drive = DriveSpec::new(Trajectory::LinearX, 0.0, 10.0).unwrap();
        let cfg = BdgRunConfig::new(64, 8, (4, 6, 3), 2.0).unwrap();
        let n = excited_density(&drive, &p, &cfg).unwrap();
        let expected: f64 = cfg
            .modes()
            .iter()
            .map(|q| {
                let eps = 4.0 * ((0.5 * q.qx).sin().powi(2) + (0.5 * q.qy).sin().powi(2))
                    + 0.5 * q.qz * q.qz;
                let e = (eps * (eps + 2.0 * p.g)).sqrt();
                0.5 * ((eps + p.g) / e - 1.0)
            })
            .sum::<f64>()
            / 72.0;
        assert_eq!(n.len(), 9);
        for v in n {
            assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
        }
    }
}
