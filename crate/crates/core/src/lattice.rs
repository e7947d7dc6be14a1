//! Driven square lattice with a continuous transverse direction.
//!
//! The drive is represented in the gauge where it appears as a time-dependent
//! quasimomentum shift `A(t)` of the kinetic energy. Along a driven axis the
//! single-particle energy (shifted so that the condensate at `q = 0` sits at
//! zero) is `4J sin(q/2) sin(q/2 - A(t))`, with
//!
//! ```text
//! A_x(t) = K(t) sin(wt),    A_y(t) = kappa K(t) sin(wt + phi)
//! ```
//!
//! and `K(t) = K0 * envelope(t)`. The lattice displacement is proportional to
//! `-cos(wt)`, i.e. the shift follows the lattice velocity.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::special::{j0_first_zero, jn, MAX_ARG, PLANCK_H};
use crate::{Error, Result};

/// Lattice and interaction parameters, all energies in rad/s (`hbar = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeParams {
    /// Nearest-neighbour hopping `J`.
    pub j: f64,
    /// Mean-field interaction energy `g = U n0`.
    pub g: f64,
    /// On-site interaction `U`.
    pub u: f64,
    /// Condensate density per grid site.
    pub n0: f64,
    /// Background loss rate `gamma0` in 1/s.
    pub gamma0: f64,
    /// Transverse mass: the tube kinetic energy is `qz^2 / (2 m_z)`.
    pub m_z: f64,
}

impl LatticeParams {
    pub fn new(j: f64, g: f64, n0: f64, gamma0: f64, m_z: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite();
        if !(ok(j) && j > 0.0) {
            return Err(Error::domain(format!("J must be > 0, got {j}")));
        }
        if !(ok(g) && g >= 0.0) {
            return Err(Error::domain(format!("g must be >= 0, got {g}")));
        }
        if !(ok(n0) && n0 > 0.0) {
            return Err(Error::domain(format!("n0 must be > 0, got {n0}")));
        }
        if !(ok(gamma0) && gamma0 >= 0.0) {
            return Err(Error::domain(format!("gamma0 must be >= 0, got {gamma0}")));
        }
        if !(ok(m_z) && m_z > 0.0) {
            return Err(Error::domain(format!("m_z must be > 0, got {m_z}")));
        }
        Ok(Self {
            j,
            g,
            u: g / n0,
            n0,
            gamma0,
            m_z,
        })
    }

    /// Same as [`LatticeParams::new`] with `J` and `g` given in Hz.
    pub fn from_hz(j_hz: f64, g_hz: f64, n0: f64, gamma0: f64, m_z: f64) -> Result<Self> {
        Self::new(TAU * j_hz, TAU * g_hz, n0, gamma0, m_z)
    }

    /// Returns a copy with a different `g`, keeping `U n0 = g`.
    pub fn with_g(&self, g: f64) -> Result<Self> {
        Self::new(self.j, g, self.n0, self.gamma0, self.m_z)
    }

    pub(crate) fn transverse_kinetic(&self, qz: f64) -> f64 {
        qz * qz / (2.0 * self.m_z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trajectory {
    LinearX,
    Diagonal,
    Circular,
}

impl Trajectory {
    pub const ALL: [Trajectory; 3] = [
        Trajectory::LinearX,
        Trajectory::Diagonal,
        Trajectory::Circular,
    ];

    /// 0 for the x-only drive, 1 for the two 2D drives.
    pub fn kappa(self) -> f64 {
        match self {
            Trajectory::LinearX => 0.0,
            _ => 1.0,
        }
    }

    /// Relative phase of the y component.
    pub fn phase(self) -> f64 {
        match self {
            Trajectory::Circular => -FRAC_PI_2,
            _ => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Trajectory::LinearX => "linear_x",
            Trajectory::Diagonal => "diagonal",
            Trajectory::Circular => "circular",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear_x" | "linear" | "x" | "lin" => Some(Trajectory::LinearX),
            "diagonal" | "diag" => Some(Trajectory::Diagonal),
            "circular" | "circ" | "circle" => Some(Trajectory::Circular),
            _ => None,
        }
    }
}

/// Ramp-up / hold / stop schedule, counted in drive periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub ramp_up_periods: u32,
    pub hold_periods: u32,
    pub ramp_down_periods: u32,
    /// Phase of the lattice displacement at which an abrupt stop happens.
    pub end_phase: f64,
    pub abrupt_stop: bool,
}

impl Envelope {
    pub fn ramped(ramp_up_periods: u32, hold_periods: u32, ramp_down_periods: u32) -> Result<Self> {
        let env = Self {
            ramp_up_periods,
            hold_periods,
            ramp_down_periods,
            end_phase: 0.0,
            abrupt_stop: false,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn abrupt(ramp_up_periods: u32, hold_periods: u32, end_phase: f64) -> Result<Self> {
        let env = Self {
            ramp_up_periods,
            hold_periods,
            ramp_down_periods: 0,
            end_phase: end_phase.rem_euclid(TAU),
            abrupt_stop: true,
        };
        env.validate()?;
        Ok(env)
    }

    fn validate(&self) -> Result<()> {
        if self.ramp_up_periods < 1 {
            return Err(Error::domain("ramp_up_periods must be >= 1"));
        }
        if !(self.end_phase >= 0.0 && self.end_phase < TAU) {
            return Err(Error::domain(format!(
                "end_phase must be in [0, 2pi), got {}",
                self.end_phase
            )));
        }
        Ok(())
    }
}

/// A periodic lattice drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSpec {
    pub trajectory: Trajectory,
    /// Dimensionless amplitude `K0`.
    pub k0: f64,
    /// Angular frequency `omega`.
    pub omega: f64,
    /// `None` means constant amplitude at all times.
    pub envelope: Option<Envelope>,
}

impl DriveSpec {
    pub fn new(trajectory: Trajectory, k0: f64, omega: f64) -> Result<Self> {
        if !(0.0..=MAX_ARG).contains(&k0) {
            return Err(Error::domain(format!(
                "K0 must be in [0, {MAX_ARG}], got {k0}"
            )));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::domain(format!("omega must be > 0, got {omega}")));
        }
        Ok(Self {
            trajectory,
            k0,
            omega,
            envelope: None,
        })
    }

    pub fn with_envelope(mut self, envelope: Envelope) -> Result<Self> {
        envelope.validate()?;
        self.envelope = Some(envelope);
        Ok(self)
    }

    pub fn with_k0(mut self, k0: f64) -> Result<Self> {
        let checked = Self::new(self.trajectory, k0, self.omega)?;
        self.k0 = checked.k0;
        Ok(self)
    }

    pub fn with_omega(mut self, omega: f64) -> Result<Self> {
        let checked = Self::new(self.trajectory, self.k0, omega)?;
        self.omega = checked.omega;
        Ok(self)
    }

    pub fn kappa(&self) -> f64 {
        self.trajectory.kappa()
    }

    pub fn phase(&self) -> f64 {
        self.trajectory.phase()
    }

    pub fn period(&self) -> f64 {
        TAU / self.omega
    }

    /// Time at which the drive is switched off, or `None` for constant drive.
    pub fn stop_time(&self) -> Option<f64> {
        let env = self.envelope?;
        let t = self.period();
        let held = (env.ramp_up_periods + env.hold_periods) as f64 * t;
        if env.abrupt_stop {
            // Displacement phase wt - pi/2 reaches end_phase.
            let offset = (env.end_phase + FRAC_PI_2).rem_euclid(TAU) / self.omega;
            Some(held + offset)
        } else {
            Some(held + env.ramp_down_periods as f64 * t)
        }
    }

    /// Instantaneous amplitude `K0 * envelope(t)`.
    pub fn amplitude(&self, t: f64) -> f64 {
        self.k0 * envelope_value(t, self)
    }

    /// Quasimomentum shift `(A_x, A_y)` at time `t`.
    pub fn shift(&self, t: f64) -> (f64, f64) {
        let k = self.amplitude(t);
        let wt = self.omega * t;
        (k * wt.sin(), self.kappa() * k * (wt + self.phase()).sin())
    }
}

/// Multiplicative drive envelope in `[0, 1]`: `sin^2` rise, flat hold, and
/// either a `cos^2` fall or an abrupt stop at the requested displacement phase.
pub fn envelope_value(t: f64, drive: &DriveSpec) -> f64 {
    let Some(env) = drive.envelope else {
        return 1.0;
    };
    if t <= 0.0 {
        return 0.0;
    }
    let period = drive.period();
    let rise = env.ramp_up_periods as f64 * period;
    if t < rise {
        return (FRAC_PI_2 * t / rise).sin().powi(2);
    }
    let held = rise + env.hold_periods as f64 * period;
    if env.abrupt_stop {
        let stop = drive.stop_time().unwrap_or(held);
        return if t < stop { 1.0 } else { 0.0 };
    }
    if t < held {
        return 1.0;
    }
    let fall = env.ramp_down_periods as f64 * period;
    if t < held + fall {
        (FRAC_PI_2 * (t - held) / fall).cos().powi(2)
    } else {
        0.0
    }
}

/// Crystal momentum `(qx, qy)` in units of `1/a` plus transverse `qz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Momentum {
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
}

impl Momentum {
    /// Builds a momentum, folding `qx`, `qy` into `[-pi, pi]` by `2pi` periodicity.
    pub fn new(qx: f64, qy: f64, qz: f64) -> Self {
        Self {
            qx: fold(qx),
            qy: fold(qy),
            qz,
        }
    }

    pub fn zero() -> Self {
        Self {
            qx: 0.0,
            qy: 0.0,
            qz: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.qx == 0.0 && self.qy == 0.0 && self.qz == 0.0
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.qx, -self.qy, -self.qz)
    }

    /// Distance on the Brillouin-zone torus (in-plane) plus plain `qz` distance.
    pub fn distance(&self, other: &Momentum) -> f64 {
        let dx = periodic_diff(self.qx, other.qx);
        let dy = periodic_diff(self.qy, other.qy);
        let dz = self.qz - other.qz;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

fn fold(q: f64) -> f64 {
    if q.abs() <= PI {
        q
    } else {
        let r = (q + PI).rem_euclid(TAU) - PI;
        if r == -PI {
            PI
        } else {
            r
        }
    }
}

fn periodic_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

pub(crate) fn axis_energy(j: f64, q: f64, shift: f64) -> f64 {
    let s = (0.5 * q).sin();
    4.0 * j * s * (0.5 * q - shift).sin()
}

/// Instantaneous single-particle energy in the drive gauge.
pub fn dispersion(q: &Momentum, t: f64, drive: &DriveSpec, p: &LatticeParams) -> f64 {
    let (ax, ay) = drive.shift(t);
    axis_energy(p.j, q.qx, ax) + axis_energy(p.j, q.qy, ay) + p.transverse_kinetic(q.qz)
}

/// Effective dispersion without the sign check; may be negative past the
/// first zero of `J0`.
pub fn eps_eff_raw(q: &Momentum, drive: &DriveSpec, p: &LatticeParams) -> f64 {
    let j0 = jn(0, drive.k0);
    let sx = (0.5 * q.qx).sin().powi(2);
    let sy = (0.5 * q.qy).sin().powi(2);
    let in_plane = match drive.trajectory {
        Trajectory::LinearX => 4.0 * p.j * (j0 * sx + sy),
        Trajectory::Diagonal | Trajectory::Circular => 4.0 * p.j * j0 * (sx + sy),
    };
    in_plane + p.transverse_kinetic(q.qz)
}

/// Period-averaged dispersion `eps_eff(q)`.
///
/// A negative value (inverted band around `q = 0`) is reported as
/// [`Error::InvertedBand`].
pub fn eps_eff(q: &Momentum, drive: &DriveSpec, p: &LatticeParams) -> Result<f64> {
    let e = eps_eff_raw(q, drive, p);
    if e < 0.0 {
        return Err(Error::InvertedBand {
            k0: drive.k0,
            value: e,
        });
    }
    Ok(e)
}

/// Static Bogoliubov quantities built on `eps_eff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BogoliubovFrame {
    pub eps_eff: f64,
    pub e_bog: f64,
    pub cosh_2theta: f64,
    pub sinh_2theta: f64,
}

impl BogoliubovFrame {
    /// Builds the frame from an effective kinetic energy and interaction.
    pub fn from_energies(eps: f64, g: f64) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::SingularMode);
        }
        let e_bog = (eps * (eps + 2.0 * g)).sqrt();
        Ok(Self {
            eps_eff: eps,
            e_bog,
            cosh_2theta: (eps + g) / e_bog,
            sinh_2theta: g / e_bog,
        })
    }

    /// `(cosh theta, sinh theta)` of the rotation.
    pub fn half_angle(&self) -> (f64, f64) {
        let c = (0.5 * (self.cosh_2theta + 1.0)).sqrt();
        let s = (0.5 * (self.cosh_2theta - 1.0)).max(0.0).sqrt();
        (c, s)
    }
}

/// Bogoliubov frame of the effective static problem at `q`.
pub fn bog_frame(q: &Momentum, drive: &DriveSpec, p: &LatticeParams) -> Result<BogoliubovFrame> {
    if q.is_zero() {
        return Err(Error::SingularMode);
    }
    let eps = eps_eff(q, drive, p)?;
    BogoliubovFrame::from_energies(eps, p.g)
}

/// Fourier coefficients `c_l` of `h_q(t) = sum_l c_l cos(2 l w t)` for
/// `l = 1..=l_max`, at full drive amplitude.
pub fn h_coefficients(
    q: &Momentum,
    drive: &DriveSpec,
    p: &LatticeParams,
    l_max: u32,
) -> Result<Vec<f64>> {
    if l_max < 1 || 2 * l_max > crate::special::MAX_ORDER {
        return Err(Error::domain(format!(
            "l_max must be in 1..=32, got {l_max}"
        )));
    }
    let sx = (0.5 * q.qx).sin().powi(2);
    let sy = (0.5 * q.qy).sin().powi(2);
    Ok((1..=l_max)
        .map(|l| {
            let weight = match drive.trajectory {
                Trajectory::LinearX => sx,
                Trajectory::Diagonal => sx + sy,
                Trajectory::Circular => sx + if l % 2 == 0 { sy } else { -sy },
            };
            8.0 * p.j * weight * jn(2 * l, drive.k0)
        })
        .collect())
}

/// Physical shaking amplitude `hbar K0 / (a omega m)` in metres, with `a` in
/// metres, `omega` of the drive in rad/s and `m` in kg.
pub fn displacement_from_k0(drive: &DriveSpec, a: f64, m: f64) -> f64 {
    let hbar = PLANCK_H / TAU;
    hbar * drive.k0 / (a * drive.omega * m)
}

/// True when `K0` is past the first zero of `J0` (negative effective hopping).
pub fn is_inverted(k0: f64) -> bool {
    k0 >= j0_first_zero()
}

/// Fourier-grid wavenumbers `2 pi m / length` in FFT order, `m` folded to
/// `-n/2 < m <= n/2`.
pub fn fft_wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let m = if 2 * i <= n {
                i as f64
            } else {
                i as f64 - n as f64
            };
            TAU * m / length
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::RB87_MASS;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> LatticeParams {
        LatticeParams::new(1.0, 12.0, 50.0, 0.0, 0.5).unwrap()
    }

    fn drive(tr: Trajectory, k0: f64) -> DriveSpec {
        DriveSpec::new(tr, k0, 20.0).unwrap()
    }

    fn period_average(q: &Momentum, d: &DriveSpec, p: &LatticeParams) -> f64 {
        let m = 1024;
        let t = d.period();
        (0..m)
            .map(|i| dispersion(q, t * i as f64 / m as f64, d, p))
            .sum::<f64>()
            / m as f64
    }

    #[test]
    fn params_validation_and_redundancy() {
        let p = LatticeParams::new(2.0, 7.0, 50.0, 1.0, 1.0).unwrap();
        assert!(((p.u * p.n0) - p.g).abs() <= 1e-12 * p.g);
        assert!(LatticeParams::new(0.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(LatticeParams::new(1.0, -1.0, 1.0, 0.0, 1.0).is_err());
        assert!(LatticeParams::new(1.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(LatticeParams::new(1.0, 1.0, 1.0, -1.0, 1.0).is_err());
        assert!(LatticeParams::new(1.0, 1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn trajectory_fixes_kappa_and_phase() {
        assert_eq!(Trajectory::LinearX.kappa(), 0.0);
        assert_eq!(
            (Trajectory::Diagonal.kappa(), Trajectory::Diagonal.phase()),
            (1.0, 0.0)
        );
        assert_eq!(
            (Trajectory::Circular.kappa(), Trajectory::Circular.phase()),
            (1.0, -FRAC_PI_2)
        );
    }

    #[test]
    fn momentum_folding() {
        let q = Momentum::new(3.0 * PI / 2.0, -5.0 * PI / 2.0, 7.0);
        assert_abs_diff_eq!(q.qx, -PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.qy, -PI / 2.0, epsilon = 1e-12);
        assert_eq!(q.qz, 7.0);
        assert_eq!(Momentum::new(-PI, PI, 0.0).qx, -PI);
        assert_abs_diff_eq!(
            Momentum::new(PI, 0.0, 0.0).distance(&Momentum::new(-PI, 0.0, 0.0)),
            0.0
        );
    }

    #[test]
    fn static_band_edge() {
        let p = params();
        let d = drive(Trajectory::Diagonal, 0.0);
        assert_abs_diff_eq!(
            dispersion(&Momentum::new(PI, 0.0, 0.0), 0.3, &d, &p),
            4.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn linear_dispersion_substitution() {
        let p = params();
        // K0 sin(wt) = pi at wt = pi/2 with K0 = pi.
        let d = DriveSpec::new(Trajectory::LinearX, PI, 1.0).unwrap();
        let e = dispersion(&Momentum::new(PI, PI, 0.0), FRAC_PI_2, &d, &p);
        assert_abs_diff_eq!(e, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn transverse_kinetic_term() {
        let p = params();
        let d = drive(Trajectory::LinearX, 0.0);
        assert_abs_diff_eq!(
            dispersion(&Momentum::new(0.0, 0.0, 2.0), 0.0, &d, &p),
            4.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn period_average_equals_eps_eff() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let tr = Trajectory::ALL[rng.gen_range(0..3)];
            let d = DriveSpec::new(tr, rng.gen_range(0.0..2.3), rng.gen_range(1.0..40.0)).unwrap();
            let q = Momentum::new(
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
                rng.gen_range(-3.0..3.0),
            );
            assert_abs_diff_eq!(
                period_average(&q, &d, &p),
                eps_eff(&q, &d, &p).unwrap(),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn eps_eff_examples() {
        let p = params();
        let k0 = 1.25;
        let d = drive(Trajectory::Diagonal, k0);
        assert_abs_diff_eq!(
            eps_eff(&Momentum::new(PI, PI, 0.0), &d, &p).unwrap(),
            8.0 * jn(0, k0),
            epsilon = 1e-12
        );
        for tr in Trajectory::ALL {
            assert_eq!(eps_eff(&Momentum::zero(), &drive(tr, k0), &p).unwrap(), 0.0);
        }
        let hz = LatticeParams::from_hz(50.0, 700.0, 50.0, 1.0, 1.0).unwrap();
        let lin = DriveSpec::new(Trajectory::LinearX, 1.25, TAU * 2500.0).unwrap();
        let e = eps_eff(&Momentum::new(PI, 0.0, 0.0), &lin, &hz).unwrap();
        assert_abs_diff_eq!(e / TAU, 129.18, epsilon = 0.01);
    }

    #[test]
    fn inverted_band_is_flagged() {
        let p = params();
        let d = drive(Trajectory::Diagonal, 3.0);
        assert!(matches!(
            eps_eff(&Momentum::new(1.0, 0.5, 0.0), &d, &p),
            Err(Error::InvertedBand { .. })
        ));
        assert!(is_inverted(2.5) && !is_inverted(2.3));
    }

    #[test]
    fn bogoliubov_frame_properties() {
        let p = params();
        let d = drive(Trajectory::LinearX, 1.25);
        let je = jn(0, 1.25);
        let f = bog_frame(&Momentum::new(PI, 0.0, 0.0), &d, &p).unwrap();
        assert_abs_diff_eq!(
            f.e_bog,
            (4.0 * je * (4.0 * je + 2.0 * p.g)).sqrt(),
            epsilon = 1e-12
        );

        let free = LatticeParams::new(1.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        let f0 = bog_frame(&Momentum::new(1.0, 0.3, 0.0), &d, &free).unwrap();
        assert_eq!((f0.cosh_2theta, f0.sinh_2theta), (1.0, 0.0));
        assert_abs_diff_eq!(f0.e_bog, f0.eps_eff, epsilon = 1e-14);

        assert!(matches!(
            bog_frame(&Momentum::zero(), &d, &p),
            Err(Error::SingularMode)
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let q = Momentum::new(
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
                rng.gen_range(-2.0..2.0),
            );
            let f = bog_frame(&q, &d, &p).unwrap();
            assert!(f.e_bog >= 0.0);
            assert!((f.cosh_2theta.powi(2) - f.sinh_2theta.powi(2) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn h_coefficient_examples() {
        let p = params();
        let q = Momentum::new(1.1, 0.4, 0.0);
        for tr in Trajectory::ALL {
            assert!(h_coefficients(&q, &drive(tr, 0.0), &p, 5)
                .unwrap()
                .iter()
                .all(|&c| c == 0.0));
        }
        let c = h_coefficients(&q, &drive(Trajectory::Circular, 1.25), &p, 1).unwrap();
        let want = 8.0 * ((0.55f64).sin().powi(2) - (0.2f64).sin().powi(2)) * jn(2, 1.25);
        assert_abs_diff_eq!(c[0], want, epsilon = 1e-14);
        assert!(h_coefficients(&q, &drive(Trajectory::Circular, 1.25), &p, 0).is_err());
    }

    // Cosine projection of the symmetrised drive term onto cos(2 l w t).
    fn h_fourier(q: &Momentum, d: &DriveSpec, p: &LatticeParams, l: u32) -> f64 {
        let m = 2048;
        let t = d.period();
        let avg = eps_eff(q, d, p).unwrap();
        let mut s = 0.0;
        for i in 0..m {
            let ti = t * i as f64 / m as f64;
            let h = 0.5 * (dispersion(q, ti, d, p) + dispersion(&q.neg(), ti, d, p)) - avg;
            s += h * (2.0 * l as f64 * d.omega * ti).cos();
        }
        2.0 * s / m as f64
    }

    #[test]
    fn h_coefficients_match_time_signal() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for tr in Trajectory::ALL {
            for _ in 0..10 {
                let d =
                    DriveSpec::new(tr, rng.gen_range(0.1..2.3), rng.gen_range(5.0..30.0)).unwrap();
                let q = Momentum::new(rng.gen_range(-PI..PI), rng.gen_range(-PI..PI), 0.3);
                let c = h_coefficients(&q, &d, &p, 6).unwrap();
                for l in 1..=6u32 {
                    assert_abs_diff_eq!(
                        c[l as usize - 1],
                        h_fourier(&q, &d, &p, l),
                        epsilon = 1e-8
                    );
                }
            }
        }
    }

    #[test]
    fn drive_symmetries() {
        let p = params();
        let d = drive(Trajectory::Diagonal, 1.7);
        let c = drive(Trajectory::Circular, 1.7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (a, b) = (rng.gen_range(-PI..PI), rng.gen_range(-PI..PI));
            let t = rng.gen_range(0.0..1.0);
            let q = Momentum::new(a, b, 0.2);
            let swapped = Momentum::new(b, a, 0.2);
            assert_abs_diff_eq!(
                dispersion(&q, t, &d, &p),
                dispersion(&swapped, t, &d, &p),
                epsilon = 1e-12
            );
            let h = h_coefficients(&q, &c, &p, 1).unwrap()[0];
            let hs = h_coefficients(&swapped, &c, &p, 1).unwrap()[0];
            assert_abs_diff_eq!(h, -hs, epsilon = 1e-12);
        }
    }

    #[test]
    fn parity_of_effective_and_instantaneous_dispersion() {
        let p = params();
        let d = drive(Trajectory::LinearX, 1.25);
        let q = Momentum::new(1.0, 0.7, 0.4);
        let mirrored = Momentum::new(-1.0, 0.7, 0.4);
        assert_eq!(
            eps_eff(&q, &d, &p).unwrap(),
            eps_eff(&mirrored, &d, &p).unwrap()
        );
        let t = 0.25 * d.period();
        assert!((dispersion(&q, t, &d, &p) - dispersion(&mirrored, t, &d, &p)).abs() > 1e-3);
    }

    #[test]
    fn envelope_shape() {
        let d = drive(Trajectory::Circular, 1.0)
            .with_envelope(Envelope::ramped(2, 4, 2).unwrap())
            .unwrap();
        let t = d.period();
        assert_eq!(envelope_value(0.0, &d), 0.0);
        assert_abs_diff_eq!(envelope_value(t, &d), 0.5, epsilon = 1e-12);
        assert_eq!(envelope_value(4.0 * t, &d), 1.0);
        assert_abs_diff_eq!(envelope_value(7.0 * t, &d), 0.5, epsilon = 1e-12);
        assert_eq!(envelope_value(8.5 * t, &d), 0.0);
        assert_abs_diff_eq!(d.stop_time().unwrap(), 8.0 * t, epsilon = 1e-12);
        for i in 0..1000 {
            let v = envelope_value(9.0 * t * i as f64 / 1000.0, &d);
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!(envelope_value(123.0, &drive(Trajectory::LinearX, 1.0)), 1.0);
    }

    #[test]
    fn abrupt_stop_phase_sets_shift_at_stop() {
        let base = drive(Trajectory::LinearX, 2.0);
        let at = |phase: f64| {
            let d = base
                .with_envelope(Envelope::abrupt(2, 3, phase).unwrap())
                .unwrap();
            let ts = d.stop_time().unwrap();
            // Shift just before the stop follows the lattice velocity, cos(phase).
            let (ax, _) = d.shift(ts - 1e-12);
            assert_eq!(envelope_value(ts + 1e-12, &d), 0.0);
            ax
        };
        assert_abs_diff_eq!(at(0.0), 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(at(FRAC_PI_2), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(at(PI), -2.0, epsilon = 1e-9);
    }

    #[test]
    fn displacement() {
        let d = DriveSpec::new(Trajectory::LinearX, 1.25, TAU * 2500.0).unwrap();
        let a = 407e-9;
        let dx = displacement_from_k0(&d, a, RB87_MASS);
        // hbar / (a m omega) computed by hand in SI units.
        let hbar = 1.054_571_817e-34;
        let want = hbar * 1.25 / (a * RB87_MASS * TAU * 2500.0);
        assert!(dx.is_finite() && dx > 0.0);
        assert!((dx - want).abs() < 1e-6 * want, "{dx} vs {want}");
        assert_eq!(
            displacement_from_k0(&d.with_k0(0.0).unwrap(), a, RB87_MASS),
            0.0
        );
        let d2 = d.with_omega(2.0 * d.omega).unwrap();
        assert_abs_diff_eq!(
            displacement_from_k0(&d2, a, RB87_MASS),
            0.5 * dx,
            epsilon = 1e-20
        );
    }
}
