//! Scattering Green's tensor of a metallic cylinder for radial dipoles and
//! the spectral-density entries it induces.
//!
//! The field of a z-Fourier component `kz` and azimuthal order `n` is
//! expanded in cylindrical vector wave functions
//!
//! ```text
//! M = curl(Z_n(kr r) trig(n phi) e^{i kz z} z_hat),   N = curl(M) / k
//! ```
//!
//! A regular incident wave `M_o` (or `N_e`) hitting the wire excites the
//! outgoing waves `A M_o + B N_e` (or `D M_o + C N_e`) outside and regular
//! waves inside. Continuity of tangential `E` and of tangential `curl E` at
//! `r = R` gives one 4x4 system per `(n, kz)` shared by both incident waves.
//!
//! For two radial dipoles at the same `(r, phi)` the rr element reduces to
//!
//! ```text
//! G_rr = (i / 8 pi) Int dkz Sum_n (2 - delta_n0) e^{i kz dz} xi_n(kz)
//! xi_n = n^2/x^2 H (J + A H) + (kz/k0)^2 H' (J' + C H') + i n kz/(k0 x) (B - D) H H'
//! ```
//!
//! with `x = kr0 r` and primes denoting argument derivatives. Only `Im G_rr`
//! enters the spectral density, so the real coincidence delta term is
//! dropped and `Im G = Re[Int ...] / 8 pi`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix4, Matrix4x2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::{radial_wavenumber, vacuum_wavenumber, DrudeMetal, PhysicalSystem, WireGeometry};
use crate::quadrature::{integrate_vec, QuadOptions};
use crate::special_functions::{CylinderKind, CylinderSequence, ScaledSequence, C64, MAX_IMAG, MAX_ORDER};

/// Condition number above which the boundary system is rejected.
pub const MAX_CONDITION: f64 = 1.0e12;

/// Numerical controls for the kz integral and the azimuthal sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// kz cutoff in multiples of `max(k0, |k1|)`; the evanescent decay
    /// length of the reflected field can push the cutoff further out.
    pub cutoff_factor: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Azimuthal sum stops after three consecutive orders below this
    /// fraction of the running sum.
    pub azimuthal_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            cutoff_factor: 40.0,
            abs_tol: 0.0,
            rel_tol: 1e-7,
            max_subdivisions: 2000,
            azimuthal_tol: 1e-8,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff_factor > 0.0) {
            return Err(Error::Validation("quadrature.cutoff_factor must be > 0".into()));
        }
        if !(self.rel_tol > 0.0) || self.abs_tol < 0.0 || !(self.azimuthal_tol > 0.0) {
            return Err(Error::Validation("quadrature tolerances must be > 0".into()));
        }
        if self.max_subdivisions < 4 {
            return Err(Error::Validation("quadrature.max_subdivisions must be >= 4".into()));
        }
        Ok(())
    }
}

/// Reflection and transmission coefficients of one `(n, kz)` component.
///
/// `a_r`/`b_r`: outgoing `M_o`/`N_e` amplitudes for an incident regular `M_o`.
/// `d_r`/`c_r`: outgoing `M_o`/`N_e` amplitudes for an incident regular `N_e`.
/// The `*_t` fields are the matching interior amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCoefficients {
    pub n: usize,
    pub kz: f64,
    pub a_r: C64,
    pub b_r: C64,
    pub c_r: C64,
    pub d_r: C64,
    pub a_t: C64,
    pub b_t: C64,
    pub c_t: C64,
    pub d_t: C64,
    /// Max-norm residual of the boundary equations relative to the largest
    /// entry of the column-equilibrated system.
    pub residual: f64,
    /// 1-norm condition number of the column-equilibrated system.
    pub condition: f64,
}

/// Tangential boundary data of the `M_o` and `N_e` waves built on `Z_n`.
/// Rows: E_phi, E_z, (curl E)_phi, (curl E)_z; trig factors stripped.
fn boundary_columns(n: usize, kz: f64, k: C64, kr: C64, z: C64, dz: C64, radius: f64) -> ([C64; 4], [C64; 4]) {
    let i = C64::new(0.0, 1.0);
    let nf = n as f64;
    let m_col = [-kr * dz, C64::new(0.0, 0.0), i * kz * nf * z / radius, kr * kr * z];
    let n_col = [-i * kz * nf * z / (k * radius), kr * kr * z / k, -k * kr * dz, C64::new(0.0, 0.0)];
    (m_col, n_col)
}

/// Cylinder-function data at `r = R`. Each function is divided by its own
/// order-`n` scale; the solution is then in units of `exp(out_log)` for the
/// outgoing and `exp(in_log)` for the inner amplitudes.
struct BoundaryInputs {
    k0: f64,
    k1: C64,
    kr0: C64,
    kr1: C64,
    j_out: (C64, C64),
    h_out: (C64, C64),
    /// `H_{n-1}` at `kr0 R` (`-H_1` for `n = 0`).
    h_out_prev: C64,
    j_in: (C64, C64),
    out_log: f64,
    in_log: f64,
}

impl BoundaryInputs {
    fn new(n: usize, k0: f64, k1: C64, kr: (C64, C64), j_r: &ScaledSequence, h_r: &ScaledSequence, j_in: &ScaledSequence) -> Self {
        let (jv, jd, _) = j_r.triple(n);
        let (hv, hd, hp) = h_r.triple(n);
        let (iv, id, _) = j_in.triple(n);
        Self {
            k0,
            k1,
            kr0: kr.0,
            kr1: kr.1,
            j_out: (jv, jd),
            h_out: (hv, hd),
            h_out_prev: hp,
            j_in: (iv, id),
            out_log: j_r.log_scale(n) - h_r.log_scale(n),
            in_log: j_r.log_scale(n) - j_in.log_scale(n),
        }
    }
}

/// Below this `kz / k0` (and for `n > 0`) the outgoing waves use the shifted basis.
const SHIFTED_BASIS_LIMIT: f64 = 2.0;

/// Returns the coefficients (in the units of [`BoundaryInputs`]) together
/// with the `M` amplitudes of the shifted basis, `(a_r - beta b_r, d_r - beta c_r)`,
/// which stay well scaled at the light line. The second value is `None` when
/// the plain basis was used.
fn solve_system(n: usize, kz: f64, omega: f64, radius: f64, b: &BoundaryInputs) -> Result<(ModeCoefficients, Option<[C64; 2]>)> {
    let k0 = C64::new(b.k0, 0.0);
    let (hm, mut hn) = boundary_columns(n, kz, k0, b.kr0, b.h_out.0, b.h_out.1, radius);
    // Near the light line the outgoing M and N columns become parallel in the
    // phi rows. Solve for N' = N + beta M instead, with beta = i kz / k0, whose
    // entries follow from x H_n' + n H_n = x H_{n-1} without cancellation.
    let beta = C64::new(0.0, kz / b.k0);
    let shifted = n > 0 && kz.abs() < SHIFTED_BASIS_LIMIT * b.k0;
    if shifted {
        let (hv, hp) = (b.h_out.0, b.h_out_prev);
        let nf = n as f64;
        let kr = b.kr0;
        hn = [
            -beta * kr * hp,
            kr * kr * hv / k0,
            -(k0 * k0 * kr * hp - kr * kr * nf * hv / radius) / k0,
            beta * kr * kr * hv,
        ];
    }
    let (jm_in, jn_in) = boundary_columns(n, kz, b.k1, b.kr1, b.j_in.0, b.j_in.1, radius);
    let (inc_m, inc_n) = boundary_columns(n, kz, k0, b.kr0, b.j_out.0, b.j_out.1, radius);

    let mut m = Matrix4::<C64>::zeros();
    for r in 0..4 {
        m[(r, 0)] = hm[r];
        m[(r, 1)] = hn[r];
        m[(r, 2)] = -jm_in[r];
        m[(r, 3)] = -jn_in[r];
    }
    let mut scale = [0.0_f64; 4];
    for c in 0..4 {
        let s = (0..4).fold(0.0_f64, |acc, r| acc.max(m[(r, c)].norm()));
        scale[c] = if s > 0.0 && s.is_finite() { s } else { 1.0 };
        for r in 0..4 {
            m[(r, c)] /= scale[c];
        }
    }
    let mut rhs = Matrix4x2::<C64>::zeros();
    for r in 0..4 {
        rhs[(r, 0)] = -inc_m[r];
        rhs[(r, 1)] = -inc_n[r];
    }
    // rows differ by powers of kr near the light line; equilibrate them too
    for r in 0..4 {
        let s = (0..4).fold(0.0_f64, |acc, c| acc.max(m[(r, c)].norm()));
        if s > 0.0 && s.is_finite() {
            for c in 0..4 {
                m[(r, c)] /= s;
            }
            rhs[(r, 0)] /= s;
            rhs[(r, 1)] /= s;
        }
    }

    let norm1 = |a: &Matrix4<C64>| (0..4).map(|c| (0..4).map(|r| a[(r, c)].norm()).sum::<f64>()).fold(0.0, f64::max);
    let ill = |condition: f64| Error::IllConditioned { n, kz, omega, condition };
    let inv = m.try_inverse().ok_or_else(|| ill(f64::INFINITY))?;
    let condition = norm1(&m) * norm1(&inv);
    if !(condition <= MAX_CONDITION) {
        return Err(ill(condition));
    }
    let y = m.lu().solve(&rhs).ok_or_else(|| ill(f64::INFINITY))?;
    let resid = &m * &y - &rhs;
    let entry_max = m.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
    let y_max = y.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
    let rhs_max = rhs.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
    let residual = resid.iter().fold(0.0_f64, |a, v| a.max(v.norm())) / (entry_max * y_max + rhs_max).max(f64::MIN_POSITIVE);

    let x = |r: usize, c: usize| y[(r, c)] / scale[r];
    // back to the M/N basis: a M + b N' = (a + beta b) M + b N
    let shift = if shifted { beta } else { C64::new(0.0, 0.0) };
    let coeffs = ModeCoefficients {
        n,
        kz,
        a_r: x(0, 0) + shift * x(1, 0),
        b_r: x(1, 0),
        a_t: x(2, 0),
        b_t: x(3, 0),
        d_r: x(0, 1) + shift * x(1, 1),
        c_r: x(1, 1),
        d_t: x(2, 1),
        c_t: x(3, 1),
        residual,
        condition,
    };
    Ok((coeffs, shifted.then(|| [x(0, 0), x(0, 1)])))
}

/// Boundary solve for a wire of permittivity `eps` (vacuum outside).
pub fn solve_boundary(n: usize, kz: f64, omega: f64, eps: C64, radius: f64) -> Result<ModeCoefficients> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("omega must be > 0 (got {omega})")));
    }
    let k0 = vacuum_wavenumber(omega);
    let k1 = k0 * eps.sqrt();
    let kr0 = radial_wavenumber(C64::new(k0, 0.0), kz);
    let kr1 = radial_wavenumber(k1, kz);
    let j_out = ScaledSequence::new(CylinderKind::J, kr0 * radius, n)?;
    let h_out = ScaledSequence::new(CylinderKind::H1, kr0 * radius, n)?;
    let j_in = ScaledSequence::new(CylinderKind::J, kr1 * radius, n)?;
    let inputs = BoundaryInputs::new(n, k0, k1, (kr0, kr1), &j_out, &h_out, &j_in);
    let mut c = solve_system(n, kz, omega, radius, &inputs)?.0;
    let (out, inner) = (inputs.out_log.exp(), inputs.in_log.exp());
    for v in [&mut c.a_r, &mut c.b_r, &mut c.c_r, &mut c.d_r] {
        *v *= out;
    }
    for v in [&mut c.a_t, &mut c.b_t, &mut c.c_t, &mut c.d_t] {
        *v *= inner;
    }
    Ok(c)
}

/// Reflection/transmission coefficients of the Drude wire.
pub fn scattering_coefficients(n: usize, kz: f64, omega: f64, metal: &DrudeMetal, geometry: &WireGeometry) -> Result<ModeCoefficients> {
    let eps = metal.permittivity(omega)?;
    solve_boundary(n, kz, omega, eps, geometry.radius)
}

/// `xi_n` at radius `r` (free plus reflected field) for the Drude wire.
pub fn xi_n(n: usize, kz: f64, omega: f64, r: f64, metal: &DrudeMetal, geometry: &WireGeometry) -> Result<C64> {
    if !(r > geometry.radius) {
        return Err(Error::Domain(format!("xi_n needs r > R (r = {r}, R = {})", geometry.radius)));
    }
    let coeffs = scattering_coefficients(n, kz, omega, metal, geometry)?;
    let k0 = vacuum_wavenumber(omega);
    let x = radial_wavenumber(C64::new(k0, 0.0), kz) * r;
    let j = CylinderSequence::new(CylinderKind::J, x, n)?;
    let h = CylinderSequence::new(CylinderKind::H1, x, n)?;
    Ok(xi_from_parts(n, kz, k0, x, (j.value(n), j.derivative(n)), (h.value(n), h.derivative(n)), &coeffs))
}

/// Assembles `xi_n` from cylinder-function values at `x = kr0 r`.
pub fn xi_from_parts(n: usize, kz: f64, k0: f64, x: C64, j: (C64, C64), h: (C64, C64), c: &ModeCoefficients) -> C64 {
    let nf = n as f64;
    let i = C64::new(0.0, 1.0);
    let (jv, jd) = j;
    let (hv, hd) = h;
    let t1 = nf * nf / (x * x) * hv * (jv + c.a_r * hv);
    let t2 = (kz / k0).powi(2) * hd * (jd + c.c_r * hd);
    let t3 = i * nf * kz / (k0 * x) * (c.b_r - c.d_r) * hv * hd;
    t1 + t2 + t3
}

/// Reflected part of `xi_n` only.
///
/// `h = (H_n, H_n', H_{n-1})` at `x`. With shifted-basis amplitudes,
/// substituting `a = a' + beta b` and `d = d' + beta c` and using
/// `H_n' + n H_n / x = H_{n-1}` removes the cancellations that otherwise
/// appear near the light line.
fn xi_reflected(n: usize, kz: f64, k0: f64, x: C64, h: (C64, C64, C64), c: &ModeCoefficients, shifted: Option<[C64; 2]>) -> C64 {
    let q = kz / k0;
    let (hv, hd, hp) = h;
    if n == 0 {
        return q * q * c.c_r * hd * hd;
    }
    let nf = n as f64;
    let i = C64::new(0.0, 1.0);
    match shifted {
        Some([a, d]) => {
            nf * nf / (x * x) * a * hv * hv - i * nf * q / x * d * hv * hd
                + i * nf * q / x * c.b_r * hv * hp
                + q * q * c.c_r * hd * hp
        }
        None => nf * nf / (x * x) * c.a_r * hv * hv + q * q * c.c_r * hd * hd + i * nf * q / x * (c.b_r - c.d_r) * hv * hd,
    }
}

/// Free-space part of `Re xi_n` for a propagating component (real `x`).
fn xi_free_real(n: usize, kz: f64, k0: f64, x: f64, j: (f64, f64)) -> f64 {
    let nf = n as f64;
    let (jv, jd) = j;
    let mut t = (kz / k0).powi(2) * jd * jd;
    if n > 0 {
        t += nf * nf / (x * x) * jv * jv;
    }
    t
}

/// `Re Sum_n (2 - delta_n0) xi_n(kz)` at the emitter radius, plus the
/// number of azimuthal orders used.
pub struct AzimuthalSum {
    pub value: f64,
    pub orders: usize,
}

/// Evaluates the azimuthal sum of the kz-resolved kernel at one `kz`.
///
/// `include_free` adds the free-space part, which is only nonzero for
/// `kz < k0`. `extra_orders` forces that many orders beyond the adaptive stop.
pub fn azimuthal_sum(
    system: &PhysicalSystem,
    omega: f64,
    eps: C64,
    kz: f64,
    include_free: bool,
    spec: &QuadratureSpec,
    extra_orders: usize,
) -> Result<AzimuthalSum> {
    let k0 = vacuum_wavenumber(omega);
    let radius = system.wire.radius;
    let r_a = system.emitters.r_a;
    let kr0 = radial_wavenumber(C64::new(k0, 0.0), kz);
    let x_a = kr0 * r_a;
    let propagating = kz < k0;

    let free_seq = if include_free && propagating && x_a.re > 0.0 {
        Some(CylinderSequence::new(CylinderKind::J, x_a, MAX_ORDER)?)
    } else {
        None
    };

    let mut refl = None;
    if system.wire.present {
        let k1 = k0 * eps.sqrt();
        let kr1 = radial_wavenumber(k1, kz);
        let h_a = ScaledSequence::new(CylinderKind::H1, x_a, MAX_ORDER)?;
        let h_r = ScaledSequence::new(CylinderKind::H1, kr0 * radius, MAX_ORDER)?;
        let j_r = ScaledSequence::new(CylinderKind::J, kr0 * radius, MAX_ORDER)?;
        let j_in = ScaledSequence::new(CylinderKind::J, kr1 * radius, MAX_ORDER)?;
        refl = Some((k1, kr1, h_a, h_r, j_r, j_in));
    }

    let mut sum = 0.0;
    let mut quiet = 0usize;
    let mut stop_at = None;
    let mut used = 0;
    for n in 0..=MAX_ORDER {
        let mut term = 0.0;
        if let Some(j) = &free_seq {
            term += xi_free_real(n, kz, k0, x_a.re, (j.value(n).re, j.derivative(n).re));
        }
        if let Some((k1, kr1, h_a, h_r, j_r, j_in)) = &refl {
            let inputs = BoundaryInputs::new(n, k0, *k1, (kr0, *kr1), j_r, h_r, j_in);
            let (c, shifted) = solve_system(n, kz, omega, radius, &inputs)?;
            let scale = (inputs.out_log + 2.0 * h_a.log_scale(n)).exp();
            term += (xi_reflected(n, kz, k0, x_a, h_a.triple(n), &c, shifted) * scale).re;
        }
        let weight = if n == 0 { 1.0 } else { 2.0 };
        sum += weight * term;
        used = n + 1;
        if let Some(last) = stop_at {
            if n >= last {
                break;
            }
            continue;
        }
        if n >= 2 && (weight * term).abs() < spec.azimuthal_tol * sum.abs() {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if quiet >= 3 {
            if extra_orders == 0 {
                break;
            }
            stop_at = Some(n + extra_orders);
        }
    }
    Ok(AzimuthalSum { value: sum, orders: used })
}

/// Cutoff and mapped break points of the kz integral.
#[derive(Debug, Clone)]
pub(crate) struct KzPlan {
    pub k0: f64,
    /// Break points in the mapped variable `u`:
    /// `u <= pi/2` maps to `kz = k0 sin u`, `u > pi/2` to `kz = k0 cosh(u - pi/2)`.
    pub points: Vec<f64>,
}

impl KzPlan {
    pub fn map(&self, u: f64) -> (f64, f64) {
        if u <= FRAC_PI_2 {
            (self.k0 * u.sin(), self.k0 * u.cos())
        } else {
            let t = u - FRAC_PI_2;
            (self.k0 * t.cosh(), self.k0 * t.sinh())
        }
    }

    fn to_u(k0: f64, kz: f64) -> f64 {
        FRAC_PI_2 + (kz / k0).max(1.0).acosh()
    }
}

fn scaled_determinant(n: usize, kz: f64, omega: f64, eps: C64, radius: f64) -> Option<f64> {
    let k0 = vacuum_wavenumber(omega);
    let k1 = k0 * eps.sqrt();
    let kr0 = radial_wavenumber(C64::new(k0, 0.0), kz);
    let kr1 = radial_wavenumber(k1, kz);
    let h = CylinderSequence::new(CylinderKind::H1, kr0 * radius, n).ok()?;
    let j = CylinderSequence::new(CylinderKind::J, kr1 * radius, n).ok()?;
    let (hm, hn) = boundary_columns(n, kz, C64::new(k0, 0.0), kr0, h.value(n), h.derivative(n), radius);
    let (jm, jn) = boundary_columns(n, kz, k1, kr1, j.value(n), j.derivative(n), radius);
    let mut m = Matrix4::<C64>::zeros();
    for (c, col) in [hm, hn, jm, jn].iter().enumerate() {
        let s = col.iter().fold(0.0_f64, |a, v| a.max(v.norm())).max(f64::MIN_POSITIVE);
        for r in 0..4 {
            m[(r, c)] = col[r] / s;
        }
    }
    Some(m.determinant().norm())
}

pub(crate) fn plan_kz(system: &PhysicalSystem, omega: f64, eps: C64, spec: &QuadratureSpec) -> Result<KzPlan> {
    let k0 = vacuum_wavenumber(omega);
    let mut points = vec![0.0, FRAC_PI_2];
    if !system.wire.present {
        return Ok(KzPlan { k0, points });
    }
    let radius = system.wire.radius;
    let r_a = system.emitters.r_a;
    let gap = r_a - radius;
    let k1 = k0 * eps.sqrt();

    // reflected field decays like exp(-2 kz gap) beyond the light line
    let decay_cutoff = 36.0 / (2.0 * gap);
    let mut kz_max = (spec.cutoff_factor * k0.max(k1.norm())).max(decay_cutoff);
    let domain_cap = 0.98 * MAX_IMAG / r_a;
    if kz_max > domain_cap {
        let tail = (-2.0 * domain_cap * gap).exp();
        if tail > spec.rel_tol {
            return Err(Error::Quadrature {
                error: tail,
                tolerance: spec.rel_tol,
                context: format!("kz cutoff limited to {domain_cap:.3e} 1/nm by the special-function domain (gap {gap:.3e} nm)"),
            });
        }
        kz_max = domain_cap;
    }
    if kz_max <= k0 {
        kz_max = 2.0 * k0;
    }

    // coarse log grid between the light line and the cutoff
    let u_max = KzPlan::to_u(k0, kz_max);
    let mut interior: Vec<f64> = Vec::new();
    let mut kz = 2.0 * k0;
    while kz < kz_max {
        interior.push(KzPlan::to_u(k0, kz));
        kz *= 2.0;
    }
    for scale in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let kq = scale / gap;
        if kq > k0 && kq < kz_max {
            interior.push(KzPlan::to_u(k0, kq));
        }
    }

    // guided-mode neighbourhoods: minima of the boundary determinant
    let scan = 240;
    let ratio = (kz_max / k0).ln();
    for n in 0..=1 {
        let samples: Vec<(f64, f64)> = (1..scan)
            .filter_map(|s| {
                let kz = k0 * (ratio * s as f64 / scan as f64).exp();
                scaled_determinant(n, kz, omega, eps, radius).map(|d| (kz, d))
            })
            .collect();
        for w in samples.windows(3) {
            if w[1].1 < w[0].1 && w[1].1 < w[2].1 {
                for p in [w[0].0, w[1].0, w[2].0] {
                    interior.push(KzPlan::to_u(k0, p));
                }
            }
        }
    }
    interior.retain(|&u| u > FRAC_PI_2 && u < u_max);
    points.extend(interior);
    points.push(u_max);
    points.sort_by(f64::total_cmp);
    points.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    Ok(KzPlan { k0, points })
}

/// Spectral-density entries `J_m(omega)` for `m = 0..=max_m` (eV).
///
/// `J_m = 3 gamma0 (omega/omega0)^3 Im G_rr(z, z + m d) / k0`, which makes the
/// free-space value `gamma0 omega^3 / (2 pi omega0^3)` and thus the
/// Markovian decay rate `2 pi J_0(omega0) = gamma0`.
pub fn spectral_density_entries(system: &PhysicalSystem, omega: f64, max_m: usize, spec: &QuadratureSpec) -> Result<Vec<f64>> {
    let sum = kz_integral(system, omega, max_m, spec, 0)?;
    Ok(sum.into_iter().map(|v| spectral_prefactor(system, omega) * v).collect())
}

/// Single entry `J_m(omega)`.
pub fn spectral_density_entry(m: usize, omega: f64, system: &PhysicalSystem, spec: &QuadratureSpec) -> Result<f64> {
    Ok(spectral_density_entries(system, omega, m, spec)?[m])
}

pub(crate) fn spectral_prefactor(system: &PhysicalSystem, omega: f64) -> f64 {
    let e = &system.emitters;
    let k0 = vacuum_wavenumber(omega);
    3.0 * e.gamma_0 * (omega / e.omega_0).powi(3) / (4.0 * PI * k0)
}

/// `Int_0^inf dkz cos(kz m d) Re Sum_n (2 - delta_n0) xi_n` for each m.
pub(crate) fn kz_integral(system: &PhysicalSystem, omega: f64, max_m: usize, spec: &QuadratureSpec, extra_orders: usize) -> Result<Vec<f64>> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("omega must be > 0 (got {omega})")));
    }
    let eps = system.wire_permittivity(omega)?;
    let plan = plan_kz(system, omega, eps, spec)?;
    let d = system.emitters.d;
    let dim = max_m + 1;
    let integrand = |u: f64| -> Result<Vec<f64>> {
        let (kz, jac) = plan.map(u);
        // the light line itself has measure zero and x = 0 there
        if jac == 0.0 || kz == plan.k0 {
            return Ok(vec![0.0; dim]);
        }
        let s = azimuthal_sum(system, omega, eps, kz, true, spec, extra_orders)?;
        Ok((0..dim).map(|m| (kz * m as f64 * d).cos() * s.value * jac).collect())
    };
    let opts = QuadOptions {
        abs_tol: spec.abs_tol,
        rel_tol: spec.rel_tol,
        max_subdivisions: spec.max_subdivisions,
    };
    let r = integrate_vec(integrand, &plan.points, dim, &opts).map_err(|e| match e {
        Error::Quadrature { error, tolerance, context } => Error::Quadrature {
            error,
            tolerance,
            context: format!("omega = {omega:.6e} eV: {context}"),
        },
        other => other,
    })?;
    Ok(r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::EmitterArray;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn fig2_system(r_a_factor: f64) -> PhysicalSystem {
        let omega_0 = 2.0;
        let lambda0 = crate::material::wavelength(omega_0);
        PhysicalSystem {
            metal: DrudeMetal::SILVER,
            wire: WireGeometry::new(0.01 * lambda0),
            emitters: EmitterArray { count: 2, omega_0, gamma_0: 1e-4, r_a: r_a_factor * lambda0, d: 5.0 },
        }
    }

    #[test]
    fn vacuum_cylinder_does_not_scatter() {
        for n in [0, 1, 3] {
            for kz in [0.001, 0.02, 0.5] {
                let m = solve_boundary(n, kz, 2.0, c(1.0, 0.0), 6.0).unwrap();
                for v in [m.a_r, m.b_r, m.c_r, m.d_r] {
                    assert!(v.norm() < 1e-10, "n={n} kz={kz}: {v}");
                }
                assert!((m.a_t - 1.0).norm() < 1e-12);
                assert!((m.c_t - 1.0).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn order_zero_decouples() {
        let wire = WireGeometry::new(6.2);
        for kz in [0.003, 0.01, 0.05, 1.0] {
            let m = scattering_coefficients(0, kz, 2.0, &DrudeMetal::SILVER, &wire).unwrap();
            assert!(m.b_r.norm() < 1e-13 * (1.0 + m.a_r.norm()));
            assert!(m.d_r.norm() < 1e-13 * (1.0 + m.c_r.norm()));
        }
    }

    #[test]
    fn boundary_residual_small() {
        let wire = WireGeometry::new(6.2);
        for n in [0, 1, 2, 7, 30] {
            for kz in [0.002, 0.0101, 0.03, 0.3, 3.0, 10.0] {
                let m = scattering_coefficients(n, kz, 2.5, &DrudeMetal::SILVER, &wire).unwrap();
                assert!(m.residual <= 1e-10, "n={n} kz={kz} residual {}", m.residual);
            }
        }
    }

    #[test]
    fn cross_coefficients_are_odd_in_kz() {
        let wire = WireGeometry::new(6.2);
        for n in [1, 2, 5] {
            let p = scattering_coefficients(n, 0.04, 3.0, &DrudeMetal::SILVER, &wire).unwrap();
            let q = scattering_coefficients(n, -0.04, 3.0, &DrudeMetal::SILVER, &wire).unwrap();
            assert!((p.a_r - q.a_r).norm() < 1e-12 * p.a_r.norm());
            assert!((p.c_r - q.c_r).norm() < 1e-12 * p.c_r.norm());
            assert!((p.b_r + q.b_r).norm() < 1e-12 * p.b_r.norm());
            assert!((p.d_r + q.d_r).norm() < 1e-12 * p.d_r.norm());
        }
    }

    #[test]
    fn xi_is_even_in_kz() {
        let wire = WireGeometry::new(6.2);
        for n in [0, 1, 4] {
            for kz in [0.005, 0.02, 0.4] {
                let a = xi_n(n, kz, 2.0, 7.5, &DrudeMetal::SILVER, &wire).unwrap();
                let b = xi_n(n, -kz, 2.0, 7.5, &DrudeMetal::SILVER, &wire).unwrap();
                assert!((a - b).norm() <= 1e-10 * a.norm(), "n={n} kz={kz}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn xi_without_reflection_is_free_combination() {
        let coeffs = ModeCoefficients {
            n: 2,
            kz: 0.004,
            a_r: C64::default(),
            b_r: C64::default(),
            c_r: C64::default(),
            d_r: C64::default(),
            a_t: C64::default(),
            b_t: C64::default(),
            c_t: C64::default(),
            d_t: C64::default(),
            residual: 0.0,
            condition: 1.0,
        };
        let k0 = vacuum_wavenumber(2.0);
        let x = radial_wavenumber(c(k0, 0.0), 0.004) * 7.5;
        let j = (crate::special_functions::bessel_j(2, x).unwrap(), crate::special_functions::radial_derivative(CylinderKind::J, 2, x).unwrap());
        let h = (crate::special_functions::hankel1(2, x).unwrap(), crate::special_functions::radial_derivative(CylinderKind::H1, 2, x).unwrap());
        let v = xi_from_parts(2, 0.004, k0, x, j, h, &coeffs);
        let expected = 4.0 / (x * x) * j.0 * h.0 + (0.004 / k0).powi(2) * j.1 * h.1;
        assert!((v - expected).norm() < 1e-14 * expected.norm());
    }

    #[test]
    fn order_zero_xi_keeps_only_the_derivative_term() {
        let wire = WireGeometry::new(6.2);
        let (omega, kz, r) = (2.0, 0.006, 7.5);
        let k0 = vacuum_wavenumber(omega);
        let m = scattering_coefficients(0, kz, omega, &DrudeMetal::SILVER, &wire).unwrap();
        let x = radial_wavenumber(c(k0, 0.0), kz) * r;
        let jd = crate::special_functions::radial_derivative(CylinderKind::J, 0, x).unwrap();
        let hd = crate::special_functions::radial_derivative(CylinderKind::H1, 0, x).unwrap();
        let expected = (kz / k0).powi(2) * hd * (jd + m.c_r * hd);
        let v = xi_n(0, kz, omega, r, &DrudeMetal::SILVER, &wire).unwrap();
        assert!((v - expected).norm() < 1e-13 * expected.norm());
    }

    #[test]
    fn free_space_sum_rule() {
        // Sum over all orders of J_n'^2 and n^2 J_n^2 / x^2 is 1/2 each
        let mut sys = fig2_system(0.012);
        sys.wire.present = false;
        let omega = 2.0;
        let k0 = vacuum_wavenumber(omega);
        for frac in [0.1, 0.5, 0.9] {
            let kz = frac * k0;
            let s = azimuthal_sum(&sys, omega, c(1.0, 0.0), kz, true, &QuadratureSpec::default(), 0).unwrap();
            let expected = 0.5 + 0.5 * frac * frac;
            assert!((s.value - expected).abs() < 1e-9, "{} vs {expected}", s.value);
        }
    }

    #[test]
    fn azimuthal_terms_are_nonnegative() {
        let sys = fig2_system(0.012);
        let omega = 3.0;
        let eps = sys.metal.permittivity(omega).unwrap();
        let k0 = vacuum_wavenumber(omega);
        for kz in [0.3 * k0, 0.99 * k0, 1.01 * k0, 3.0 * k0, 0.5, 2.0] {
            let s = azimuthal_sum(&sys, omega, eps, kz, true, &QuadratureSpec::default(), 0).unwrap();
            assert!(s.value >= 0.0, "kz = {kz}: {}", s.value);
        }
    }

    /// Boundary solve written out directly: plain cylinder functions, no
    /// scaling, no shifted basis. Columns are (alpha M_o + beta N_e) data.
    fn xi_dual(n: usize, kz: f64, omega: f64, r: f64, metal: &DrudeMetal, radius: f64) -> C64 {
        use crate::special_functions::{bessel_j, hankel1, radial_derivative, CylinderKind::*};
        use nalgebra::{Matrix4, Vector4};
        let i = c(0.0, 1.0);
        let nf = n as f64;
        let k0 = vacuum_wavenumber(omega);
        let k1 = k0 * metal.permittivity(omega).unwrap().sqrt();
        let kr = |k: C64| (k * k - kz * kz).sqrt();
        let col = |k: C64, z: C64, dz: C64, alpha: f64, beta: f64| {
            let q = kr(k);
            Vector4::new(
                alpha * (-q * dz) + beta * (-i * kz * nf * z / (k * radius)),
                beta * (q * q * z / k),
                alpha * (i * kz * nf * z / radius) + beta * (-k * q * dz),
                alpha * (q * q * z),
            )
        };
        let (k0c, x0, x1) = (c(k0, 0.0), kr(c(k0, 0.0)) * radius, kr(k1) * radius);
        let jo = (bessel_j(n, x0).unwrap(), radial_derivative(J, n, x0).unwrap());
        let ho = (hankel1(n, x0).unwrap(), radial_derivative(H1, n, x0).unwrap());
        let ji = (bessel_j(n, x1).unwrap(), radial_derivative(J, n, x1).unwrap());
        let m = Matrix4::from_columns(&[
            col(k0c, ho.0, ho.1, 1.0, 0.0),
            col(k0c, ho.0, ho.1, 0.0, 1.0),
            -col(k1, ji.0, ji.1, 1.0, 0.0),
            -col(k1, ji.0, ji.1, 0.0, 1.0),
        ]);
        let lu = m.lu();
        let from_m = lu.solve(&-col(k0c, jo.0, jo.1, 1.0, 0.0)).unwrap();
        let from_n = lu.solve(&-col(k0c, jo.0, jo.1, 0.0, 1.0)).unwrap();
        let (a, b) = (from_m[0], from_m[1]);
        let (d, cc) = (from_n[0], from_n[1]);
        let x = kr(k0c) * r;
        let (jv, jd) = (bessel_j(n, x).unwrap(), radial_derivative(J, n, x).unwrap());
        let (hv, hd) = (hankel1(n, x).unwrap(), radial_derivative(H1, n, x).unwrap());
        let q = kz / k0;
        nf * nf / (x * x) * hv * (jv + a * hv) + q * q * hd * (jd + cc * hd) + i * nf * q / x * (b - d) * hv * hd
    }

    #[test]
    fn xi_matches_direct_solve() {
        let sys = fig2_system(0.012);
        let (omega, radius) = (2.0, sys.wire.radius);
        let k0 = vacuum_wavenumber(omega);
        for (n, kz) in [(1, 0.5 * k0), (2, 0.5 * k0), (1, 3.0 * k0)] {
            let r = 1.2 * radius;
            let got = xi_n(n, kz, omega, r, &sys.metal, &sys.wire).unwrap();
            let want = xi_dual(n, kz, omega, r, &sys.metal, radius);
            assert!((got - want).norm() <= 1e-9 * want.norm(), "n={n} kz={kz}: {got} vs {want}");
        }
    }

    #[test]
    fn separation_sign_does_not_matter() {
        // full-line integrand at +-kz for z_l - z_j = +-s
        let sys = fig2_system(0.012);
        let k0 = vacuum_wavenumber(2.0);
        let r = sys.emitters.r_a;
        let s = 5.0;
        for q in [0.3, 2.0, 7.0] {
            let kz = q * k0;
            let mut f = [c(0.0, 0.0); 2];
            for (slot, sep) in f.iter_mut().zip([s, -s]) {
                for n in 0..6 {
                    let w = if n == 0 { 1.0 } else { 2.0 };
                    for k in [kz, -kz] {
                        let xi = xi_n(n, k, 2.0, r, &sys.metal, &sys.wire).unwrap();
                        *slot += w * xi * (c(0.0, k * sep)).exp();
                    }
                }
            }
            assert!((f[0] - f[1]).norm() <= 1e-12 * f[0].norm(), "{f:?}");
        }
    }

    #[test]
    fn cutoff_and_order_convergence() {
        let sys = fig2_system(0.012);
        let spec = QuadratureSpec::default();
        let base = kz_integral(&sys, 2.0, 1, &spec, 0).unwrap();
        let more_orders = kz_integral(&sys, 2.0, 1, &spec, 4).unwrap();
        let wider = QuadratureSpec { cutoff_factor: 2.0 * spec.cutoff_factor, ..spec };
        let longer = kz_integral(&sys, 2.0, 1, &wider, 0).unwrap();
        for m in 0..2 {
            assert!((more_orders[m] - base[m]).abs() < 1e-6 * base[m].abs(), "orders m={m}");
            assert!((longer[m] - base[m]).abs() < 1e-6 * base[m].abs(), "cutoff m={m}");
        }
    }

    #[test]
    fn neighbour_entry_tends_to_self_entry() {
        let mut sys = fig2_system(0.012);
        sys.emitters.d = 1e-3;
        let j = spectral_density_entries(&sys, 2.0, 1, &QuadratureSpec::default()).unwrap();
        assert!((j[1] - j[0]).abs() < 1e-4 * j[0]);
    }
}
