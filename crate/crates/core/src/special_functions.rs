//! Cylinder functions of integer order and complex argument.
//!
//! Values come from an Amos-style evaluator (the `complex-bessel` crate) and
//! are exposed through a small surface tailored to the cylindrical Green's
//! tensor: single values, argument derivatives, and whole order sequences
//! `0..=n_max` evaluated at one argument.
//!
//! Supported domain: `0 <= n <= 64`, `|z| <= 1e4`, `|Im z| <= 1e2`.

use complex_bessel::{besselj_seq, hankel1_seq, Scaling};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Highest supported order.
pub const MAX_ORDER: usize = 64;
/// Largest supported modulus of the argument.
pub const MAX_MODULUS: f64 = 1.0e4;
/// Largest supported magnitude of the imaginary part of the argument.
pub const MAX_IMAG: f64 = 1.0e2;

/// Which cylinder function a derivative refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CylinderKind {
    /// Bessel function of the first kind.
    J,
    /// Hankel function of the first kind.
    H1,
}

fn check_domain(n: usize, z: C64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Domain(format!("non-finite argument {z}")));
    }
    if n > MAX_ORDER {
        return Err(Error::Domain(format!("order {n} exceeds {MAX_ORDER}")));
    }
    if z.norm() > MAX_MODULUS {
        return Err(Error::Domain(format!("|z| = {:.3e} exceeds {MAX_MODULUS:e}", z.norm())));
    }
    if z.im.abs() > MAX_IMAG {
        return Err(Error::Domain(format!("|Im z| = {:.3e} exceeds {MAX_IMAG:e}", z.im.abs())));
    }
    Ok(())
}

fn map_backend(kind: CylinderKind, n: usize, z: C64, e: complex_bessel::Error) -> Error {
    Error::Domain(format!("{kind:?}_{n}({z}) could not be evaluated: {e}"))
}

/// Orders `0..count` of `kind` at `z`, without domain checks.
///
/// When the top orders underflow the backend may also spoil the low orders,
/// so the sequence is recomputed without them and padded with zeros.
fn raw_sequence(kind: CylinderKind, z: C64, count: usize) -> std::result::Result<Vec<C64>, complex_bessel::Error> {
    let eval = |count: usize| match kind {
        CylinderKind::J => besselj_seq(0.0, z, count, Scaling::Unscaled),
        CylinderKind::H1 => hankel1_seq(0.0, z, count, Scaling::Unscaled),
    };
    let mut kept = count;
    loop {
        let out = eval(kept)?;
        if out.underflow_count == 0 {
            let mut values = out.values;
            values.resize(count, C64::new(0.0, 0.0));
            return Ok(values);
        }
        if kept <= 1 {
            return Ok(vec![C64::new(0.0, 0.0); count]);
        }
        kept = kept.saturating_sub(out.underflow_count).max(1);
    }
}

/// Bessel function of the first kind `J_n(z)`.
pub fn bessel_j(n: usize, z: C64) -> Result<C64> {
    check_domain(n, z)?;
    if z == C64::new(0.0, 0.0) {
        return Ok(if n == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    }
    let seq = raw_sequence(CylinderKind::J, z, n + 1).map_err(|e| map_backend(CylinderKind::J, n, z, e))?;
    Ok(seq[n])
}

/// Hankel function of the first kind `H_n^(1)(z)`.
pub fn hankel1(n: usize, z: C64) -> Result<C64> {
    check_domain(n, z)?;
    if z == C64::new(0.0, 0.0) {
        return Err(Error::Singularity(format!("H^(1)_{n} is singular at z = 0")));
    }
    let seq = raw_sequence(CylinderKind::H1, z, n + 1).map_err(|e| map_backend(CylinderKind::H1, n, z, e))?;
    Ok(seq[n])
}

/// Derivative with respect to the argument, `f_n'(z)`.
///
/// Uses `f_n' = (f_{n-1} - f_{n+1}) / 2` and `f_0' = -f_1`. The chain-rule
/// factor of a scaled argument is left to the caller.
pub fn radial_derivative(kind: CylinderKind, n: usize, z: C64) -> Result<C64> {
    check_domain(n, z)?;
    if z == C64::new(0.0, 0.0) {
        return match kind {
            CylinderKind::J => Ok(match n {
                1 => C64::new(0.5, 0.0),
                _ => C64::new(0.0, 0.0),
            }),
            CylinderKind::H1 => Err(Error::Singularity(format!("H^(1)_{n}' is singular at z = 0"))),
        };
    }
    let seq = CylinderSequence::new(kind, z, n)?;
    Ok(seq.derivative(n))
}

/// Values and argument derivatives of one cylinder function for orders
/// `0..=n_max` at a fixed argument.
#[derive(Debug, Clone)]
pub struct CylinderSequence {
    values: Vec<C64>,
}

impl CylinderSequence {
    /// Evaluates orders `0..=n_max` (one extra order is kept for derivatives).
    pub fn new(kind: CylinderKind, z: C64, n_max: usize) -> Result<Self> {
        check_domain(n_max, z)?;
        if kind == CylinderKind::H1 && z == C64::new(0.0, 0.0) {
            return Err(Error::Singularity("H^(1) sequence requested at z = 0".into()));
        }
        let values = raw_sequence(kind, z, n_max + 2).map_err(|e| map_backend(kind, n_max, z, e))?;
        Ok(Self { values })
    }

    /// Like [`CylinderSequence::new`] but shortens the sequence instead of
    /// failing when the highest orders overflow (Hankel functions near the
    /// origin). Returns `None` if not even order 1 is representable.
    pub fn new_truncating(kind: CylinderKind, z: C64, n_max: usize) -> Result<Option<Self>> {
        check_domain(n_max, z)?;
        let mut count = n_max + 2;
        loop {
            match raw_sequence(kind, z, count) {
                Ok(values) if values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) => {
                    return Ok(Some(Self { values }))
                }
                Ok(_) | Err(complex_bessel::Error::Overflow) => {
                    if count <= 2 {
                        return Ok(None);
                    }
                    count = (count / 2).max(2);
                }
                Err(e) => return Err(map_backend(kind, n_max, z, e)),
            }
        }
    }

    /// Highest order with both value and derivative available.
    pub fn n_max(&self) -> usize {
        self.values.len() - 2
    }

    pub fn value(&self, n: usize) -> C64 {
        self.values[n]
    }

    pub fn derivative(&self, n: usize) -> C64 {
        if n == 0 {
            -self.values[1]
        } else {
            (self.values[n - 1] - self.values[n + 1]) * 0.5
        }
    }
}

/// Order sequence stored as `mantissa * exp(log_scale)` so that orders which
/// over- or underflow in plain arithmetic remain usable in ratios.
#[derive(Debug, Clone)]
pub struct ScaledSequence {
    mantissa: Vec<C64>,
    log_scale: Vec<f64>,
}

impl ScaledSequence {
    /// Orders `0..=n_max + 1` of `kind` at `z`.
    pub fn new(kind: CylinderKind, z: C64, n_max: usize) -> Result<Self> {
        check_domain(n_max, z)?;
        let count = n_max + 2;
        if z == C64::new(0.0, 0.0) {
            return match kind {
                CylinderKind::H1 => Err(Error::Singularity("H^(1) sequence requested at z = 0".into())),
                CylinderKind::J => {
                    let mut mantissa = vec![C64::new(0.0, 0.0); count];
                    mantissa[0] = C64::new(1.0, 0.0);
                    Ok(Self { mantissa, log_scale: vec![0.0; count] })
                }
            };
        }
        let plain = match kind {
            CylinderKind::J => besselj_seq(0.0, z, count, Scaling::Unscaled),
            CylinderKind::H1 => hankel1_seq(0.0, z, count, Scaling::Unscaled),
        };
        if let Ok(out) = plain {
            let normal = out.values.iter().all(|v| v.re.is_finite() && v.im.is_finite() && v.norm() > 1e-290);
            if out.underflow_count == 0 && normal {
                return Ok(Self::normalized(out.values, vec![0.0; count]));
            }
        }
        let raw = match kind {
            CylinderKind::J => Self::j_series(z, count)?,
            CylinderKind::H1 => Self::h_recurrence(z, count)?,
        };
        Ok(Self::normalized(raw.mantissa, raw.log_scale))
    }

    /// Moves all magnitude into the log scale so products of mantissas
    /// cannot overflow.
    fn normalized(mut mantissa: Vec<C64>, mut log_scale: Vec<f64>) -> Self {
        for (m, s) in mantissa.iter_mut().zip(log_scale.iter_mut()) {
            let a = m.norm();
            if a > 0.0 && a.is_finite() {
                *m /= a;
                *s += a.ln();
            }
        }
        Self { mantissa, log_scale }
    }

    /// `J_n(z) = (z/2)^n / n! * sum_k (-z^2/4)^k / (k! (n+1)_k)`, for small `|z|`.
    fn j_series(z: C64, count: usize) -> Result<Self> {
        if z.norm() > 2.0 {
            return Err(Error::Domain(format!("J sequence at {z} lost orders to underflow")));
        }
        let q = -z * z * 0.25;
        let half = z * 0.5;
        let phase = half / half.norm();
        let mut mantissa = Vec::with_capacity(count);
        let mut log_scale = Vec::with_capacity(count);
        let mut log_fact = 0.0;
        let mut ph = C64::new(1.0, 0.0);
        for n in 0..count {
            if n > 0 {
                log_fact += (n as f64).ln();
                ph *= phase;
            }
            let mut term = C64::new(1.0, 0.0);
            let mut sum = term;
            for k in 1..60 {
                term *= q / (k as f64 * (n + k) as f64);
                sum += term;
                if term.norm() < 1e-17 * sum.norm() {
                    break;
                }
            }
            mantissa.push(ph * sum);
            log_scale.push(n as f64 * half.norm().ln() - log_fact);
        }
        Ok(Self { mantissa, log_scale })
    }

    /// Upward recurrence `H_{n+1} = (2n/z) H_n - H_{n-1}`, which is stable
    /// for the Hankel function, renormalizing as it goes.
    fn h_recurrence(z: C64, count: usize) -> Result<Self> {
        let start = raw_sequence(CylinderKind::H1, z, 2).map_err(|e| map_backend(CylinderKind::H1, 1, z, e))?;
        if !start.iter().all(|v| v.re.is_finite() && v.im.is_finite() && v.norm() > 0.0) {
            return Err(Error::Domain(format!("H^(1)_0,1({z}) not representable")));
        }
        let mut mantissa = vec![start[0], start[1]];
        let mut log_scale = vec![0.0, 0.0];
        let (mut prev, mut cur, mut scale) = (start[0], start[1], 0.0_f64);
        for n in 1..count.saturating_sub(1) {
            let next = cur * (2.0 * n as f64 / z) - prev;
            prev = cur;
            cur = next;
            let m = cur.norm();
            if m > 1e100 {
                prev /= m;
                cur /= m;
                scale += m.ln();
            }
            mantissa.push(cur);
            log_scale.push(scale);
        }
        mantissa.truncate(count);
        log_scale.truncate(count);
        Ok(Self { mantissa, log_scale })
    }

    /// Highest order with both value and derivative available.
    pub fn n_max(&self) -> usize {
        self.mantissa.len() - 2
    }

    /// `(m, s)` with `f_n = m exp(s)`.
    pub fn scaled(&self, n: usize) -> (C64, f64) {
        (self.mantissa[n], self.log_scale[n])
    }

    /// `f_{n+shift}` expressed relative to `exp(log_scale[n])`.
    fn relative(&self, n: usize, other: usize) -> C64 {
        self.mantissa[other] * (self.log_scale[other] - self.log_scale[n]).exp()
    }

    /// `(f_n, f_n', f_{n-1})` divided by `exp(log_scale[n])`, with
    /// `f_{-1} = -f_1`.
    pub fn triple(&self, n: usize) -> (C64, C64, C64) {
        let v = self.mantissa[n];
        if n == 0 {
            let f1 = self.relative(0, 1);
            return (v, -f1, -f1);
        }
        let prev = self.relative(n, n - 1);
        let next = self.relative(n, n + 1);
        (v, (prev - next) * 0.5, prev)
    }

    pub fn log_scale(&self, n: usize) -> f64 {
        self.log_scale[n]
    }

    /// Plain value, which may over- or underflow.
    pub fn value(&self, n: usize) -> C64 {
        self.mantissa[n] * self.log_scale[n].exp()
    }
}
