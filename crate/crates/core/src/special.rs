//! Bessel functions of the first kind and the lowest Bloch band of a 1D
//! sinusoidal lattice.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::{Error, Result};

/// Largest supported Bessel order.
pub const MAX_ORDER: u32 = 64;
/// Largest supported `|x|` for [`bessel_j`].
pub const MAX_ARG: f64 = 50.0;

// Below this the ascending series is summed directly; the worst-case
// cancellation at |x| = 12 costs about four digits.
const SERIES_LIMIT: f64 = 12.0;

/// Bessel function of the first kind `J_order(x)` for integer order.
///
/// Absolute error is below `1e-10` on the supported domain
/// (`order <= 64`, `|x| <= 50`).
pub fn bessel_j(order: u32, x: f64) -> Result<f64> {
    if order > MAX_ORDER {
        return Err(Error::domain(format!(
            "Bessel order {order} exceeds {MAX_ORDER}"
        )));
    }
    if !x.is_finite() || x.abs() > MAX_ARG {
        return Err(Error::domain(format!(
            "Bessel argument {x} outside [-{MAX_ARG}, {MAX_ARG}]"
        )));
    }
    let value = if x.abs() <= SERIES_LIMIT {
        series(order, x)
    } else {
        miller(order, x.abs()) * if order % 2 == 1 && x < 0.0 { -1.0 } else { 1.0 }
    };
    Ok(value)
}

/// `J_order(x)` for arguments already known to be in range.
///
/// Every caller in this crate passes a drive amplitude, which is validated at
/// construction; out-of-range input panics.
pub(crate) fn jn(order: u32, x: f64) -> f64 {
    bessel_j(order, x).expect("Bessel argument validated upstream")
}

fn series(order: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let n = order as f64;
    // (x/2)^n / n!
    let mut term = 1.0;
    for k in 1..=order {
        term *= half / k as f64;
    }
    let quarter_sq = half * half;
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= -quarter_sq / (k * (n + k));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && k > half.abs() {
            break;
        }
        if term == 0.0 {
            break;
        }
    }
    sum
}

// Miller's backward recurrence normalised by J0 + 2 sum J_2k = 1.
fn miller(order: u32, x: f64) -> f64 {
    let n = order as usize;
    let top = n.max(x.ceil() as usize);
    let mut m = top + 40 + (40.0 * top as f64).sqrt() as usize;
    m += m % 2;

    let two_over_x = 2.0 / x;
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-30; // J_k
    let mut norm = 0.0;
    let mut wanted = 0.0;
    for k in (1..=m).rev() {
        let prev = k as f64 * two_over_x * cur - next; // J_{k-1}
        next = cur;
        cur = prev;
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            wanted *= 1e-250;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * cur;
        }
        if k - 1 == n {
            wanted = cur;
        }
    }
    norm += cur;
    wanted / norm
}

/// First positive zero of `J_0`, 2.404825557695773.
pub fn j0_first_zero() -> f64 {
    static ZERO: OnceLock<f64> = OnceLock::new();
    *ZERO.get_or_init(|| {
        let mut x: f64 = 2.4;
        for _ in 0..50 {
            let step = jn(0, x) / jn(1, x);
            x += step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x
    })
}

/// Inverse of `J_0` on its principal branch `[0, j0_first_zero()]`.
pub fn bessel_j0_inverse(y: f64) -> Result<f64> {
    if !(y > 0.0 && y <= 1.0) {
        return Err(Error::domain(format!(
            "J0 inverse needs y in (0, 1], got {y}"
        )));
    }
    if y == 1.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, j0_first_zero());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if jn(0, mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    // Newton polish; J0' = -J1 and J1 > 0 on the open branch.
    for _ in 0..3 {
        let d = jn(1, x);
        if d <= 0.0 {
            break;
        }
        let candidate = x + (jn(0, x) - y) / d;
        if candidate > 0.0 && candidate < j0_first_zero() {
            x = candidate;
        }
    }
    Ok(x)
}

pub const PLANCK_H: f64 = 6.626_070_15e-34;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Mass of a rubidium-87 atom in kg.
pub const RB87_MASS: f64 = 86.909_180_527 * ATOMIC_MASS_UNIT;

/// Recoil energy `E_R = h^2 / (2 m lambda^2)` expressed as a frequency in Hz.
pub fn recoil_hz(wavelength_m: f64, mass_kg: f64) -> f64 {
    PLANCK_H / (2.0 * mass_kg * wavelength_m * wavelength_m)
}

/// Default number of plane waves on each side of the origin.
pub const DEFAULT_CUTOFF: usize = 21;

/// 1D lattice `V0 sin^2(k_L x)` with depth in recoil units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandProblem {
    pub depth_er: f64,
    pub cutoff: usize,
    pub recoil_hz: f64,
}

impl BandProblem {
    pub fn new(depth_er: f64, cutoff: usize, recoil_hz: f64) -> Result<Self> {
        if !(depth_er >= 0.0 && depth_er.is_finite()) {
            return Err(Error::domain(format!(
                "lattice depth must be >= 0, got {depth_er}"
            )));
        }
        if cutoff < 5 {
            return Err(Error::domain(format!(
                "plane-wave cutoff must be >= 5, got {cutoff}"
            )));
        }
        if !(recoil_hz > 0.0 && recoil_hz.is_finite()) {
            return Err(Error::domain(format!(
                "recoil frequency must be > 0, got {recoil_hz}"
            )));
        }
        Ok(Self {
            depth_er,
            cutoff,
            recoil_hz,
        })
    }

    /// Rubidium-87 in a lattice of the given laser wavelength.
    pub fn rubidium_87(depth_er: f64, wavelength_m: f64) -> Result<Self> {
        Self::new(depth_er, DEFAULT_CUTOFF, recoil_hz(wavelength_m, RB87_MASS))
    }
}

/// Lowest band energy in units of `E_R` at quasimomentum `q` (units of `1/a`).
///
/// The Hamiltonian is tridiagonal in the plane-wave basis `e^{i(q/a + 2 k_L n) x}`;
/// its lowest eigenvalue is located by Sturm-sequence bisection. The energy
/// includes the constant `V0/2` offset of the potential.
pub fn band_energy(problem: &BandProblem, q: f64) -> Result<f64> {
    if !q.is_finite() || q.abs() > PI + 1e-12 {
        return Err(Error::domain(format!(
            "quasimomentum {q} outside [-pi, pi]"
        )));
    }
    let e = lowest_eigenvalue(problem.depth_er, q, problem.cutoff);
    let e_wider = lowest_eigenvalue(problem.depth_er, q, problem.cutoff + 2);
    let shift = (e - e_wider).abs();
    if shift > 1e-6 {
        return Err(Error::Convergence {
            cutoff: problem.cutoff,
            shift,
        });
    }
    Ok(e)
}

/// Tunnelling `J = [E(pi) - E(0)] / 4` as an ordinary frequency in Hz.
pub fn hopping_from_depth(problem: &BandProblem) -> Result<f64> {
    let width = band_energy(problem, PI)? - band_energy(problem, 0.0)?;
    Ok(0.25 * width * problem.recoil_hz)
}

/// Probability that a ground-band Bloch state stays in the ground band when
/// the lattice is stopped while moving, i.e. under a Galilean boost by
/// `shift` (units of `1/a`) that returns it to `q = 0`.
///
/// Equals `|<u_0| e^{i shift x} |u_{-shift}>|^2` for the ground-band Bloch
/// functions; 1 at zero shift and below 1 otherwise.
pub fn boost_survival(problem: &BandProblem, shift: f64) -> Result<f64> {
    if !shift.is_finite() || shift.abs() > 4.0 * PI {
        return Err(Error::domain(format!(
            "boost {shift} outside [-4 pi, 4 pi]"
        )));
    }
    let at_rest = ground_band_vector(problem.depth_er, 0.0, problem.cutoff);
    let moving = ground_band_vector(problem.depth_er, -shift, problem.cutoff);
    let overlap: f64 = at_rest.iter().zip(&moving).map(|(a, b)| a * b).sum();
    Ok((overlap * overlap).min(1.0))
}

fn tridiagonal(depth: f64, q: f64, cutoff: usize) -> (Vec<f64>, f64) {
    let c = cutoff as i64;
    let diag = (-c..=c)
        .map(|n| {
            let k = q / PI + 2.0 * n as f64;
            k * k + 0.5 * depth
        })
        .collect();
    (diag, -0.25 * depth)
}

// Inverse iteration at the Sturm eigenvalue; the shifted matrix is positive
// definite so the Thomas sweep needs no pivoting.
fn ground_band_vector(depth: f64, q: f64, cutoff: usize) -> Vec<f64> {
    let (diag, off) = tridiagonal(depth, q, cutoff);
    let lambda = lowest_eigenvalue(depth, q, cutoff);
    let shift = lambda - 1e-9 * lambda.abs().max(1.0);
    let n = diag.len();
    let mut x = vec![1.0; n];
    for _ in 0..4 {
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let b = diag[i] - shift - if i > 0 { off * c[i - 1] } else { 0.0 };
            c[i] = off / b;
            d[i] = (x[i] - if i > 0 { off * d[i - 1] } else { 0.0 }) / b;
        }
        for i in (0..n).rev() {
            x[i] = d[i] - if i + 1 < n { c[i] * x[i + 1] } else { 0.0 };
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
    }
    // Fix the sign so overlaps of smoothly varying states are positive.
    if x.iter().sum::<f64>() < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    x
}

fn lowest_eigenvalue(depth: f64, q: f64, cutoff: usize) -> f64 {
    let (diag, off) = tridiagonal(depth, q, cutoff);

    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (dmin - 2.0 * off.abs() - 1.0, dmin + 1.0);
    // Lowest eigenvalue is <= smallest diagonal entry.
    while count_below(&diag, off, hi) < 1 {
        hi += 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(&diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

// Number of eigenvalues of the symmetric tridiagonal matrix below x.
fn count_below(diag: &[f64], off: f64, x: f64) -> usize {
    let off_sq = off * off;
    let mut count = 0;
    let mut p = 1.0;
    for (i, &d) in diag.iter().enumerate() {
        p = if i == 0 { d - x } else { d - x - off_sq / p };
        if p == 0.0 {
            p = -1e-300;
        }
        if p < 0.0 {
            count += 1;
        }
    }
    count
}
