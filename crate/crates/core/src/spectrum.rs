//! Bound states below the continuum and the long-time amplitudes they
//! carry.
//!
//! For a channel density `D(w)` the pole condition is
//! `y(v) = omega_0 - Int D(w) / (w - v) dw = v`, searched for `v < 0`. The
//! continuum starts at `w = 0`: below the first table node the densities
//! follow the `omega^3` envelope, exactly as in the memory kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special_functions::C64;
use crate::spectral_matrix::{three_point_slope, SpectralTable};

/// Behaviour of a density below its first node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// Zero outside the nodes.
    None,
    /// `D(w) = D(x_0) (w / x_0)^3` on `[0, x_0]`.
    Cubic,
}

/// Piecewise cubic Hermite density with the table's slope rule.
#[derive(Debug, Clone)]
pub struct Profile {
    x: Vec<f64>,
    y: Vec<f64>,
    dy: Vec<f64>,
    tail: Tail,
}

// 10-point Gauss-Legendre on [0, 1].
const GL_X: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_W: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_14,
];

fn gauss_legendre(f: impl Fn(f64) -> f64) -> f64 {
    GL_X.iter()
        .zip(GL_W)
        .map(|(&x, w)| w * (f(0.5 * (1.0 - x)) + f(0.5 * (1.0 + x))))
        .sum::<f64>()
        * 0.5
}

/// `(Int_0^1 p(t)/(t+s) dt, Int_0^1 p(t)/(t+s)^2 dt)` for a cubic with
/// monomial coefficients `c`, `s > 0`.
fn cubic_moments(c: [f64; 4], s: f64) -> (f64, f64) {
    let p = |t: f64| c[0] + t * (c[1] + t * (c[2] + t * c[3]));
    if s > 2.0 {
        return (gauss_legendre(|t| p(t) / (t + s)), gauss_legendre(|t| p(t) / ((t + s) * (t + s))));
    }
    // expand about t = -s: p = sum b_k v^k, v = t + s in [s, 1 + s]
    let u = -s;
    let b0 = p(u);
    let b1 = c[1] + u * (2.0 * c[2] + 3.0 * u * c[3]);
    let b2 = c[2] + 3.0 * u * c[3];
    let b3 = c[3];
    let (v0, v1) = (s, 1.0 + s);
    let lg = (1.0 / s).ln_1p();
    let d2 = (v1 * v1 - v0 * v0) / 2.0;
    let d3 = (v1 * v1 * v1 - v0 * v0 * v0) / 3.0;
    let first = b0 * lg + b1 + b2 * d2 + b3 * d3;
    let second = b0 * (1.0 / v0 - 1.0 / v1) + b1 * lg + b2 + b3 * d2;
    (first, second)
}

/// Same moments for `u^3` on `[0, 1]`, `sigma >= 0`.
fn tail_moments(sigma: f64) -> (f64, f64) {
    if sigma > 2.0 {
        return cubic_moments([0.0, 0.0, 0.0, 1.0], sigma);
    }
    if sigma == 0.0 {
        return (1.0 / 3.0, 0.5);
    }
    let s = sigma;
    let lg = (1.0 / s).ln_1p();
    let v1 = 1.0 + s;
    let first = (v1.powi(3) - s.powi(3)) / 3.0 - 1.5 * s * (v1 * v1 - s * s) + 3.0 * s * s - s.powi(3) * lg;
    let second = (v1 * v1 - s * s) / 2.0 - 3.0 * s + 3.0 * s * s * lg - s.powi(3) * (1.0 / s - 1.0 / v1);
    (first, second)
}

impl Profile {
    pub fn new(x: Vec<f64>, y: Vec<f64>, tail: Tail) -> Result<Self> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(Error::Invalid("a density profile needs >= 2 nodes and matching values".into()));
        }
        if x[0] <= 0.0 || x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("profile nodes must be positive and strictly increasing".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("profile values must be finite".into()));
        }
        let dy = (0..x.len()).map(|i| three_point_slope(&x, |j| y[j], i)).collect();
        Ok(Self { x, y, dy, tail })
    }

    /// `Sum_m coeffs[m] J_m` from a table, with the cubic tail.
    pub fn from_table(table: &SpectralTable, coeffs: &[f64]) -> Result<Self> {
        let y = table
            .entries
            .iter()
            .map(|row| row.iter().zip(coeffs).map(|(a, b)| a * b).sum())
            .collect();
        Self::new(table.omega.clone(), y, Tail::Cubic)
    }

    /// Value at node `i`.
    pub fn node_value(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn is_zero(&self) -> bool {
        self.y.iter().all(|&v| v == 0.0)
    }

    /// Lower edge of the continuum.
    pub fn edge(&self) -> f64 {
        match self.tail {
            Tail::None => self.x[0],
            Tail::Cubic => 0.0,
        }
    }

    /// `(Int D/(w - v) dw, Int D/(w - v)^2 dw)`.
    pub fn moments(&self, varpi: f64) -> Result<(f64, f64)> {
        let edge = self.edge();
        let inside = match self.tail {
            Tail::None => !(varpi < edge),
            Tail::Cubic => !(varpi <= edge),
        };
        if inside {
            return Err(Error::Domain(format!("varpi = {varpi} lies inside the continuum (edge {edge})")));
        }
        let (mut first, mut second) = (0.0, 0.0);
        if self.tail == Tail::Cubic {
            let x0 = self.x[0];
            let (a, b) = tail_moments(-varpi / x0);
            first += self.y[0] * a;
            second += self.y[0] * b / x0;
        }
        for k in 0..self.x.len() - 1 {
            let h = self.x[k + 1] - self.x[k];
            let (y0, y1) = (self.y[k], self.y[k + 1]);
            let (m0, m1) = (h * self.dy[k], h * self.dy[k + 1]);
            let c = [y0, m0, 3.0 * (y1 - y0) - 2.0 * m0 - m1, 2.0 * (y0 - y1) + m0 + m1];
            let (a, b) = cubic_moments(c, (self.x[k] - varpi) / h);
            first += a;
            second += b / h;
        }
        Ok((first, second))
    }
}

/// `Int D(w) / (w - varpi) dw`.
pub fn self_energy(profile: &Profile, varpi: f64) -> Result<f64> {
    Ok(profile.moments(varpi)?.0)
}

/// A discrete root `varpi_b` of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundState {
    /// Channel number, starting at 1.
    pub channel: usize,
    /// Pole energy (eV).
    pub varpi: f64,
    /// `[1 + Int D / (w - varpi)^2]^-1`.
    pub residue: f64,
}

/// Channel densities in the symmetry-adapted order: for two emitters
/// `J0 + J1`, `J0 - J1`; for three `J0 - J2` and the lower and upper
/// eigenvalues of the symmetric block. Larger arrays use the sorted
/// eigenvalues (labels may swap at crossings).
pub fn channel_profiles(table: &SpectralTable) -> Result<Vec<Profile>> {
    table.validate()?;
    match table.emitters {
        1 => Ok(vec![Profile::from_table(table, &[1.0])?]),
        2 => Ok(vec![Profile::from_table(table, &[1.0, 1.0])?, Profile::from_table(table, &[1.0, -1.0])?]),
        3 => {
            let anti = Profile::from_table(table, &[1.0, 0.0, -1.0])?;
            let branch = |sign: f64| -> Vec<f64> {
                table
                    .entries
                    .iter()
                    .map(|r| 0.5 * (2.0 * r[0] + r[2] + sign * (8.0 * r[1] * r[1] + r[2] * r[2]).sqrt()))
                    .collect()
            };
            Ok(vec![
                anti,
                Profile::new(table.omega.clone(), branch(-1.0), Tail::Cubic)?,
                Profile::new(table.omega.clone(), branch(1.0), Tail::Cubic)?,
            ])
        }
        n => {
            let values: Vec<Vec<f64>> = table
                .entries
                .iter()
                .map(|r| {
                    let mut v = crate::spectral_matrix::numeric_channel_values(r);
                    v.sort_by(f64::total_cmp);
                    v
                })
                .collect();
            (0..n)
                .map(|j| Profile::new(table.omega.clone(), values.iter().map(|v| v[j]).collect(), Tail::Cubic))
                .collect()
        }
    }
}

/// Tolerance on `|y(varpi) - varpi|`, relative to `omega_0`.
const ROOT_TOL: f64 = 1e-10;

/// Root of a decreasing function on `(-inf, 0]` with `g(0) < 0`, by
/// geometric bracketing and bisection.
fn decreasing_root<F>(g: F, omega_0: f64, channel: &str) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let scale = omega_0.abs().max(1e-12);
    let mut span = scale;
    let mut samples = Vec::new();
    loop {
        let v = g(-span)?;
        samples.push((-span, v));
        if v > 0.0 {
            break;
        }
        span *= 2.0;
        if samples.len() > 60 {
            return Err(Error::Bracketing {
                channel: channel.into(),
                detail: format!("no sign change found; samples (varpi, y - varpi): {samples:?}"),
            });
        }
    }
    // sampled monotonicity check
    let mut last = f64::INFINITY;
    for i in 0..=16 {
        let v = -span * (1.0 - i as f64 / 16.0);
        let gv = g(v)?;
        if gv > last + 1e-12 * scale {
            return Err(Error::Bracketing {
                channel: channel.into(),
                detail: format!("y - varpi is not decreasing near varpi = {v} ({gv} after {last})"),
            });
        }
        last = gv;
    }
    let (mut lo, mut hi) = (-span, 0.0);
    let mut best = (hi, g(hi)?);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        let gm = g(mid)?;
        if gm.abs() < best.1.abs() {
            best = (mid, gm);
        }
        if gm.abs() <= 1e-3 * ROOT_TOL * scale {
            break;
        }
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.1.abs() > ROOT_TOL * scale {
        return Err(Error::Bracketing {
            channel: channel.into(),
            detail: format!("bisection stalled at varpi = {} with residual {}", best.0, best.1),
        });
    }
    Ok(best.0)
}

/// Bound state of one channel, if any. A channel with identically zero
/// density has no continuum and keeps the bare level `omega_0`.
pub fn channel_bound_state(profile: &Profile, omega_0: f64, channel: usize) -> Result<Option<BoundState>> {
    if profile.is_zero() {
        return Ok(Some(BoundState { channel, varpi: omega_0, residue: 1.0 }));
    }
    let g = |v: f64| -> Result<f64> { Ok(omega_0 - self_energy(profile, v)? - v) };
    if g(0.0)? >= 0.0 {
        return Ok(None);
    }
    let varpi = decreasing_root(g, omega_0, &format!("channel {channel}"))?;
    let (_, d) = profile.moments(varpi)?;
    Ok(Some(BoundState { channel, varpi, residue: 1.0 / (1.0 + d) }))
}

/// Bound states of every channel of `table`.
pub fn find_bound_states(table: &SpectralTable, omega_0: f64) -> Result<Vec<BoundState>> {
    let mut out = Vec::new();
    for (j, p) in channel_profiles(table)?.iter().enumerate() {
        if let Some(b) = channel_bound_state(p, omega_0, j + 1)? {
            out.push(b);
        }
    }
    Ok(out)
}

fn require_initial(c0: &[C64], n: usize) -> Result<()> {
    let mut expected = vec![C64::new(0.0, 0.0); n];
    expected[0] = C64::new(1.0, 0.0);
    if c0 != expected.as_slice() {
        return Err(Error::Validation(format!(
            "the closed-form steady state needs the first emitter excited, c(0) = {expected:?} (got {c0:?})"
        )));
    }
    Ok(())
}

/// Long-time amplitudes of two emitters started in `(1, 0)`.
pub fn steady_state_n2(states: &[BoundState], c0: &[C64], t: f64) -> Result<[C64; 2]> {
    require_initial(c0, 2)?;
    let mut z = [C64::new(0.0, 0.0); 2];
    for b in states {
        let sign = match b.channel {
            1 => 1.0,
            2 => -1.0,
            c => return Err(Error::Invalid(format!("two-emitter bound state with channel {c}"))),
        };
        let e = C64::from_polar(0.5 * b.residue, -b.varpi * t);
        z[0] += e;
        z[1] += sign * e;
    }
    Ok(z)
}

/// Long-time concurrence of two emitters in terms of the residues:
/// `0`, `2 K^2` or `2 |K_1^2 - K_2^2 + 2 i K_1 K_2 sin((v_1 - v_2) t)|`
/// for zero, one or two bound states.
pub fn steady_concurrence_n2(states: &[BoundState], c0: &[C64], t: f64) -> Result<f64> {
    require_initial(c0, 2)?;
    match states {
        [] => Ok(0.0),
        [b] => Ok(2.0 * b.residue * b.residue),
        [a, b] => {
            let (a, b) = if a.channel <= b.channel { (a, b) } else { (b, a) };
            let d = C64::new(0.0, 2.0 * a.residue * b.residue * ((a.varpi - b.varpi) * t).sin());
            Ok(2.0 * (a.residue * a.residue - b.residue * b.residue + d).norm())
        }
        _ => Err(Error::Invalid(format!("{} bound states for two emitters", states.len()))),
    }
}

/// Pole of the three-emitter problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct N3Pole {
    pub varpi: f64,
    /// Coefficient of `e^{-i varpi t}` in each of `Z_1, Z_2, Z_3`.
    pub weights: [f64; 3],
    /// `true` for the antisymmetric family (`J0 - J2`).
    pub antisymmetric: bool,
}

/// Closed-form long-time state of three emitters started in `(1, 0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateN3 {
    pub poles: Vec<N3Pole>,
    pub warnings: Vec<String>,
}

impl SteadyStateN3 {
    pub fn amplitudes(&self, t: f64) -> [C64; 3] {
        let mut z = [C64::new(0.0, 0.0); 3];
        for p in &self.poles {
            let e = C64::from_polar(1.0, -p.varpi * t);
            for (zl, w) in z.iter_mut().zip(p.weights) {
                *zl += w * e;
            }
        }
        z
    }

    /// Number of isolated poles.
    pub fn count(&self) -> usize {
        self.poles.len()
    }
}

/// Self-energies `Sigma_m(v) = Int J_m / (w - v)` and their derivatives.
struct SelfEnergies {
    profiles: Vec<Profile>,
}

impl SelfEnergies {
    fn eval(&self, v: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut s = Vec::with_capacity(self.profiles.len());
        let mut d = Vec::with_capacity(self.profiles.len());
        for p in &self.profiles {
            let (a, b) = p.moments(v)?;
            s.push(a);
            d.push(b);
        }
        Ok((s, d))
    }
}

/// Closed-form long-time amplitudes for three emitters.
///
/// Poles come from two families: zeros of the determinant `Y` of the
/// symmetric block (at most two) and of `K_02^(2)` (the `J0 - J2`
/// channel). Derivatives of `Y` are analytic and cross-checked against a
/// central difference.
pub fn steady_state_n3(table: &SpectralTable, omega_0: f64, c0: &[C64]) -> Result<SteadyStateN3> {
    if table.emitters != 3 {
        return Err(Error::Validation(format!("three-emitter steady state on a {}-emitter table", table.emitters)));
    }
    require_initial(c0, 3)?;
    table.validate()?;
    let se = SelfEnergies {
        profiles: (0..3)
            .map(|m| {
                let mut c = [0.0; 3];
                c[m] = 1.0;
                Profile::from_table(table, &c)
            })
            .collect::<Result<_>>()?,
    };
    if se.profiles.iter().all(Profile::is_zero) {
        return Ok(SteadyStateN3 {
            poles: vec![N3Pole { varpi: omega_0, weights: [1.0, 0.0, 0.0], antisymmetric: false }],
            warnings: vec!["no coupling: free evolution".into()],
        });
    }

    // f0 = omega_0 - v - S0, f1 = -S1, f2 = -S2
    let fs = |v: f64| -> Result<([f64; 3], [f64; 3])> {
        let (s, d) = se.eval(v)?;
        Ok(([omega_0 - v - s[0], -s[1], -s[2]], [-1.0 - d[0], -d[1], -d[2]]))
    };
    // eigenvalues of [[f0 + f2, sqrt2 f1], [sqrt2 f1, f0]]
    let branch = |v: f64, sign: f64| -> Result<f64> {
        let ([f0, f1, f2], _) = fs(v)?;
        Ok(f0 + 0.5 * f2 + sign * (0.25 * f2 * f2 + 2.0 * f1 * f1).sqrt())
    };
    let y = |v: f64| -> Result<f64> {
        let ([f0, f1, f2], _) = fs(v)?;
        Ok(f0 * (f0 + f2) - 2.0 * f1 * f1)
    };

    let mut warnings = Vec::new();
    let mut poles = Vec::new();
    let mut symmetric_roots = Vec::new();
    for (sign, name) in [(-1.0, "symmetric lower"), (1.0, "symmetric upper")] {
        if branch(0.0, sign)? < 0.0 {
            symmetric_roots.push(decreasing_root(|v| branch(v, sign), omega_0, name)?);
        }
    }
    if let [a, b] = symmetric_roots[..] {
        if (a - b).abs() < 1e-6 * omega_0 {
            warnings.push(format!("near-degenerate symmetric poles at {a} and {b}"));
        }
    }
    for &v in &symmetric_roots {
        let ([f0, f1, f2], [d0, d1, d2]) = fs(v)?;
        let dy = d0 * (2.0 * f0 + f2) + f0 * d2 - 4.0 * f1 * d1;
        let h = (1e-5 * omega_0).min(0.5 * v.abs());
        let numeric = (y(v + h)? - y(v - h)?) / (2.0 * h);
        if (numeric - dy).abs() > 1e-4 * dy.abs().max(1e-12) {
            warnings.push(format!("dY/dv at {v}: analytic {dy:.6e}, central difference {numeric:.6e}"));
        }
        if dy == 0.0 {
            return Err(Error::Singularity(format!("dY/dv vanishes at the pole {v}")));
        }
        poles.push(N3Pole {
            varpi: v,
            weights: [-0.5 * f0 / dy, f1 / dy, -0.5 * f0 / dy],
            antisymmetric: false,
        });
    }

    let anti = Profile::from_table(table, &[1.0, 0.0, -1.0])?;
    if let Some(b) = channel_bound_state(&anti, omega_0, 1)? {
        let half = 0.5 * b.residue;
        poles.push(N3Pole { varpi: b.varpi, weights: [half, 0.0, -half], antisymmetric: true });
    }
    if let Some(p) = poles.iter().find(|p| p.antisymmetric) {
        for q in poles.iter().filter(|q| !q.antisymmetric) {
            if (p.varpi - q.varpi).abs() < 1e-6 * omega_0 {
                warnings.push(format!("antisymmetric pole {} nearly coincides with {}", p.varpi, q.varpi));
            }
        }
    }
    Ok(SteadyStateN3 { poles, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(eta: f64, a: f64, b: f64, n: usize) -> Profile {
        let x: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
        Profile::new(x, vec![eta; n], Tail::None).unwrap()
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn zero_density_has_no_self_energy() {
        let p = flat(0.0, 0.1, 3.0, 20);
        assert_eq!(self_energy(&p, -1.0).unwrap(), 0.0);
        let b = channel_bound_state(&p, 2.0, 1).unwrap().unwrap();
        assert_eq!((b.varpi, b.residue), (2.0, 1.0));
    }

    #[test]
    fn flat_band_self_energy_is_a_logarithm() {
        let (eta, a, b) = (0.7, 0.05, 4.0);
        let p = flat(eta, a, b, 37);
        for v in [-1e-4, -0.3, -2.0, -50.0, -1e4] {
            let exact = eta * ((b - v) / (a - v)).ln();
            let got = self_energy(&p, v).unwrap();
            assert!((got - exact).abs() < 1e-13 * exact.abs().max(1.0), "v={v}: {got} vs {exact}");
        }
        assert!(self_energy(&p, 0.06).is_err());
    }

    #[test]
    fn cubic_segments_are_integrated_exactly() {
        // D = w^3 - w is reproduced exactly by the Hermite interpolant except
        // at the end slopes; use a quadratic instead, which the parabola slopes
        // capture exactly.
        let x: Vec<f64> = (0..30).map(|i| 0.2 + 0.1 * i as f64).collect();
        let y = x.iter().map(|w| 1.0 + w - 0.3 * w * w).collect();
        let p = Profile::new(x, y, Tail::None).unwrap();
        let (a, b) = (0.2_f64, 3.1_f64);
        for v in [-0.01, -1.0, -20.0] {
            // Int (1 + w - 0.3 w^2)/(w - v); substitute u = w - v
            let q = |u: f64| {
                let (c0, c1, c2) = (1.0 + v - 0.3 * v * v, 1.0 - 0.6 * v, -0.3);
                c0 * u.ln() + c1 * u + c2 * u * u / 2.0
            };
            let exact = q(b - v) - q(a - v);
            let got = self_energy(&p, v).unwrap();
            assert!((got - exact).abs() < 1e-12 * exact.abs(), "{got} vs {exact}");
        }
    }

    #[test]
    fn cubic_tail_moments() {
        for sigma in [0.0, 1e-6, 0.3, 1.9, 2.1, 40.0] {
            let (a, b) = tail_moments(sigma);
            // brute-force midpoint
            let n = 200_000;
            let (mut ea, mut eb) = (0.0, 0.0);
            for i in 0..n {
                let u = (i as f64 + 0.5) / n as f64;
                ea += u.powi(3) / (u + sigma);
                eb += u.powi(3) / (u + sigma).powi(2);
            }
            ea /= n as f64;
            eb /= n as f64;
            assert!((a - ea).abs() < 1e-8, "sigma={sigma}");
            assert!((b - eb).abs() < 1e-8, "sigma={sigma}");
        }
    }

    /// Exhaustive scan of the closed form, then plain bisection.
    fn oracle_root(omega_0: f64, eta: f64, a: f64, b: f64) -> f64 {
        let g = |v: f64| omega_0 - eta * ((b - v) / (a - v)).ln() - v;
        let mut prev = (-100.0, g(-100.0));
        let mut bracket = None;
        for i in 1..=1_000_000 {
            let v = -100.0 + 100.0 * i as f64 / 1e6;
            let gv = g(v.min(-1e-300));
            if prev.1 > 0.0 && gv <= 0.0 {
                bracket = Some((prev.0, v));
                break;
            }
            prev = (v, gv);
        }
        let (mut lo, mut hi) = bracket.unwrap();
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if g(m) > 0.0 {
                lo = m;
            } else {
                hi = m;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn flat_band_root_matches_oracle() {
        let (omega_0, eta, a, b) = (2.0, 1.0, 0.01, 6.0);
        let p = flat(eta, a, b, 101);
        let s = channel_bound_state(&p, omega_0, 1).unwrap().unwrap();
        let v = oracle_root(omega_0, eta, a, b);
        assert!((s.varpi - v).abs() < 1e-8 * omega_0, "{} vs {v}", s.varpi);
        // residue against a finite difference of y
        let y = |v: f64| omega_0 - self_energy(&p, v).unwrap();
        let h = 1e-5;
        let dy = (y(s.varpi + h) - y(s.varpi - h)) / (2.0 * h);
        assert!((s.residue - 1.0 / (1.0 - dy)).abs() < 1e-6);
        assert!(s.residue > 0.0 && s.residue <= 1.0);
    }

    #[test]
    fn no_root_when_y_at_zero_is_positive() {
        let p = flat(0.1, 0.5, 3.0, 10);
        assert!(channel_bound_state(&p, 2.0, 1).unwrap().is_none());
    }

    #[test]
    fn two_emitter_steady_state() {
        let b = BoundState { channel: 1, varpi: 2.0, residue: 0.4 };
        let z = steady_state_n2(&[b], &[c(1.0), c(0.0)], 0.0).unwrap();
        assert!((z[0] - c(0.2)).norm() < 1e-15 && (z[1] - c(0.2)).norm() < 1e-15);
        assert_eq!(steady_state_n2(&[], &[c(1.0), c(0.0)], 3.0).unwrap(), [c(0.0); 2]);
        assert!(steady_state_n2(&[b], &[c(0.0), c(1.0)], 0.0).is_err());
    }

    #[test]
    fn two_emitter_concurrence() {
        let init = [c(1.0), c(0.0)];
        let k = |channel, varpi, residue| BoundState { channel, varpi, residue };
        assert_eq!(steady_concurrence_n2(&[], &init, 1.0).unwrap(), 0.0);
        assert!((steady_concurrence_n2(&[k(1, -1.0, 0.5)], &init, 1.0).unwrap() - 0.5).abs() < 1e-15);
        // degenerate pair loses the entanglement
        let deg = [k(1, -1.0, 0.3), k(2, -1.0, 0.3)];
        for t in [0.0, 1.0, 77.0] {
            assert!(steady_concurrence_n2(&deg, &init, t).unwrap().abs() < 1e-15);
        }
        // beat-period average against fine sampling
        let pair = [k(1, -1.2, 0.6), k(2, -0.9, 0.3)];
        let period = 2.0 * std::f64::consts::PI / 0.3;
        let n = 20_000;
        let mean = (0..n)
            .map(|i| steady_concurrence_n2(&pair, &init, period * (i as f64 + 0.5) / n as f64).unwrap())
            .sum::<f64>()
            / n as f64;
        let direct = (0..n)
            .map(|i| {
                let t = period * (i as f64 + 0.5) / n as f64;
                2.0 * C64::new(0.36 - 0.09, 2.0 * 0.18 * (-0.3 * t).sin()).norm()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - direct).abs() < 1e-12);
    }

    fn table(n: usize, f: impl Fn(f64) -> Vec<f64>) -> SpectralTable {
        let omega: Vec<f64> = (0..1500).map(|i| 1e-3 + 6.0 * (i as f64 / 1499.0).powi(2)).collect();
        let entries = omega.iter().map(|&w| f(w)).collect();
        SpectralTable::from_samples(n, omega, entries).unwrap()
    }

    fn bump(w: f64, height: f64) -> f64 {
        height * w.powi(3) / (1.0 + w.powi(4)) * (-(w - 3.0).powi(2)).exp()
    }

    #[test]
    fn free_three_emitters() {
        let t = table(3, |_| vec![0.0; 3]);
        let s = steady_state_n3(&t, 2.0, &[c(1.0), c(0.0), c(0.0)]).unwrap();
        let z = s.amplitudes(1.3);
        assert!((z[0] - C64::from_polar(1.0, -2.6)).norm() < 1e-15);
        assert_eq!((z[1], z[2]), (c(0.0), c(0.0)));
    }

    #[test]
    fn three_emitter_poles_match_the_pole_matrix() {
        let t = table(3, |w| vec![bump(w, 8.0), bump(w, 5.0), bump(w, 2.0)]);
        let omega_0 = 2.0;
        let s = steady_state_n3(&t, omega_0, &[c(1.0), c(0.0), c(0.0)]).unwrap();
        assert!(s.count() >= 1);
        assert!(s.warnings.is_empty(), "{:?}", s.warnings);
        let profiles: Vec<Profile> = (0..3)
            .map(|m| {
                let mut k = [0.0; 3];
                k[m] = 1.0;
                Profile::from_table(&t, &k).unwrap()
            })
            .collect();
        for p in &s.poles {
            // det[(omega_0 - v) I - Sigma(v)] = 0 and the weights follow from
            // the null vector: Z = K v (v . c0), K = -1 / (v^T F' v)
            let sig: Vec<(f64, f64)> = profiles.iter().map(|q| q.moments(p.varpi).unwrap()).collect();
            let f = nalgebra::Matrix3::from_fn(|i, j| {
                (if i == j { omega_0 - p.varpi } else { 0.0 }) - sig[i.abs_diff(j)].0
            });
            let df = nalgebra::Matrix3::from_fn(|i, j| (if i == j { -1.0 } else { 0.0 }) - sig[i.abs_diff(j)].1);
            let eig = f.symmetric_eigen();
            let (k, _) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
            assert!(eig.eigenvalues[k].abs() < 1e-8, "{}", eig.eigenvalues[k]);
            let v = eig.eigenvectors.column(k);
            let kres = -1.0 / (v.transpose() * df * v)[(0, 0)];
            for l in 0..3 {
                assert!((p.weights[l] - kres * v[l] * v[0]).abs() < 1e-8, "{:?}", p);
            }
        }
        // mirror structure: Z1 - Z3 comes only from the antisymmetric pole
        for p in s.poles.iter().filter(|p| !p.antisymmetric) {
            assert_eq!(p.weights[0], p.weights[2]);
        }
    }

    #[test]
    fn rejects_wrong_initial_state_for_three() {
        let t = table(3, |_| vec![0.0; 3]);
        assert!(steady_state_n3(&t, 2.0, &[c(0.0), c(1.0), c(0.0)]).is_err());
    }

    #[test]
    fn two_channel_bound_states_from_a_table() {
        let t = table(2, |w| vec![bump(w, 8.0), bump(w, 3.0)]);
        let states = find_bound_states(&t, 2.0).unwrap();
        for s in &states {
            assert!(s.varpi < 0.0);
            assert!(s.residue > 0.0 && s.residue <= 1.0);
        }
        // weights of the long-time state never exceed the initial population
        let z = steady_state_n2(&states, &[c(1.0), c(0.0)], 0.0).unwrap();
        assert!(z[0].norm_sqr() + z[1].norm_sqr() <= 1.0 + 1e-6);
    }

    proptest! {
        #[test]
        fn residues_and_monotone_self_energy(
            eta in 0.01f64..5.0, a in 0.001f64..1.0, width in 0.1f64..8.0,
            v1 in -20.0f64..-1e-3, dv in 1e-3f64..5.0, omega_0 in 0.5f64..3.0,
        ) {
            let p = flat(eta, a, a + width, 12);
            let (s1, s2) = (self_energy(&p, v1).unwrap(), self_energy(&p, v1 - dv).unwrap());
            prop_assert!(s2 < s1);
            if let Some(b) = channel_bound_state(&p, omega_0, 1).unwrap() {
                prop_assert!(b.residue > 0.0 && b.residue <= 1.0);
                prop_assert!(b.varpi < 0.0);
            }
        }
    }
}
