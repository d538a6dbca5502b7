//! Single-excitation amplitudes `c_l(t)` of the emitter array, from
//!
//! ```text
//! dc/dt = -i omega_0 c - Int_0^t K(t - tau) c(tau) dtau,   K_lj(t) = Int dw e^{-i w t} J_|l-j|(w)
//! ```
//!
//! Time stepping is the implicit trapezoidal rule with a trapezoidal history
//! sum. The history sums are exact discrete convolutions; they are evaluated
//! by divide and conquer with FFT block products, so a run of `T` steps costs
//! `O(T log^2 T)` instead of `O(T^2)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special_functions::C64;
use crate::spectral_matrix::SpectralTable;

/// Kernel samples `K_m(k dt)` for `m = 0..N`, `k = 0..len`.
#[derive(Debug, Clone)]
pub struct MemoryKernel {
    pub dt: f64,
    /// `samples[m][k] = K_m(k dt)`.
    pub samples: Vec<Vec<C64>>,
    /// Highest frequency (eV) represented in the kernel.
    pub omega_max: f64,
    /// Resolution and truncation notes for the caller to surface.
    pub warnings: Vec<String>,
}

/// Largest FFT used to tabulate the kernel.
const MAX_KERNEL_FFT: usize = 1 << 26;

/// `Int_0^1 (1 - v) e^{-i a v} dv`.
fn half_hat(a: f64) -> C64 {
    if a.abs() < 1e-3 {
        let ia = C64::new(0.0, -a);
        // 1/2 + (-ia)/6 + (-ia)^2/24 + (-ia)^3/120
        return C64::new(0.5, 0.0) + ia / 6.0 + ia * ia / 24.0 + ia * ia * ia / 120.0;
    }
    let ia = C64::new(0.0, a);
    let e = (-ia).exp();
    1.0 / ia - (1.0 - e) / (ia * ia)
}

impl MemoryKernel {
    /// Kernel from a closure returning `K_m(t)` for all `m`.
    pub fn from_fn<F>(emitters: usize, dt: f64, len: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<C64>,
    {
        check_grid(dt, len)?;
        let mut samples = vec![Vec::with_capacity(len); emitters];
        for k in 0..len {
            let v = f(k as f64 * dt);
            if v.len() != emitters {
                return Err(Error::Invalid("kernel closure returned the wrong number of entries".into()));
            }
            for (m, x) in v.into_iter().enumerate() {
                samples[m].push(x);
            }
        }
        Ok(Self { dt, samples, omega_max: f64::INFINITY, warnings: Vec::new() })
    }

    pub fn emitters(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_grid(dt: f64, len: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Validation(format!("dt must be > 0 (got {dt})")));
    }
    if len == 0 {
        return Err(Error::Validation("kernel needs at least one time sample".into()));
    }
    Ok(())
}

/// Tabulates `K_m(k dt)` for `k < len` from a spectral table.
///
/// The table is resampled (cubic interpolation) onto a uniform frequency
/// grid whose spacing is matched to an FFT, and the piecewise-linear
/// interpolant of those samples is integrated against `e^{-i w t}` exactly.
/// Below the first table node `J` follows the `omega^3` envelope down to 0;
/// above the last node it is taken as zero.
pub fn memory_kernel(table: &SpectralTable, dt: f64, len: usize) -> Result<MemoryKernel> {
    check_grid(dt, len)?;
    table.validate()?;
    let w_top = table.omega_max();
    let w_min = table.omega_min();
    let mut warnings = Vec::new();
    if w_top * dt >= 2.0 * PI {
        return Err(Error::Validation(format!(
            "dt = {dt} aliases the spectral window: omega_max * dt = {:.3} >= 2 pi",
            w_top * dt
        )));
    }
    if w_top * dt > 1.0 {
        warnings.push(format!(
            "coarse time step: omega_max * dt = {:.3} (> 1); expect O(dt^2) errors of a few percent",
            w_top * dt
        ));
    }

    let min_spacing = table.omega.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let target = min_spacing.min(1e-3) / 4.0;
    let needed = (2.0 * PI / (dt * target)).ceil() as usize;
    let mut fft_len = needed.max(len).next_power_of_two();
    if fft_len > MAX_KERNEL_FFT {
        fft_len = MAX_KERNEL_FFT.max(len.next_power_of_two());
        warnings.push(format!(
            "kernel frequency resolution limited to {:.3e} eV by the FFT size",
            2.0 * PI / (dt * fft_len as f64)
        ));
    }
    let dw = 2.0 * PI / (dt * fft_len as f64);
    let top = ((w_top / dw).floor() as usize).min(fft_len - 1);

    let last = table.entries[table.entries.len() - 1][0];
    let peak = table.entries.iter().map(|r| r[0].abs()).fold(0.0, f64::max);
    if last.abs() > 1e-3 * peak {
        warnings.push(format!(
            "spectral density truncated at omega_max = {w_top:.4} eV where J_0 = {last:.3e} eV ({:.2e} of its peak)",
            last / peak
        ));
    }

    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);
    let mut samples = Vec::with_capacity(table.emitters);
    let mut buf = vec![C64::new(0.0, 0.0); fft_len];
    let first = &table.entries[0];
    for m in 0..table.emitters {
        buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        let mut j_top = 0.0;
        for (j, slot) in buf.iter_mut().enumerate().take(top + 1).skip(1) {
            let w = j as f64 * dw;
            let v = if w < w_min { first[m] * (w / w_min).powi(3) } else { table.interpolate(w)?[m] };
            *slot = C64::new(v, 0.0);
            j_top = v;
        }
        fft.process(&mut buf);
        let w_last = top as f64 * dw;
        let k_m: Vec<C64> = (0..len)
            .map(|k| {
                let t = k as f64 * dt;
                let a = t * dw;
                let s = if a == 0.0 { 1.0 } else { (0.5 * a).sin() / (0.5 * a) };
                // full hats everywhere, minus the half hat that pokes above the last node
                let phase = C64::from_polar(1.0, -w_last * t);
                buf[k] * (dw * s * s) - phase * (j_top * dw) * half_hat(a)
            })
            .collect();
        samples.push(k_m);
    }
    Ok(MemoryKernel { dt, samples, omega_max: w_top, warnings })
}

/// Sampled amplitudes `c_l(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeTrajectory {
    pub times: Vec<f64>,
    /// `amplitudes[i][l] = c_l(times[i])`.
    pub amplitudes: Vec<Vec<C64>>,
    pub config_hash: String,
}

impl AmplitudeTrajectory {
    pub fn populations(&self, i: usize) -> f64 {
        self.amplitudes[i].iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn last(&self) -> (f64, &[C64]) {
        let i = self.times.len() - 1;
        (self.times[i], &self.amplitudes[i])
    }
}

/// Options of [`evolve_with_kernel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Keep every `record_every`-th step in the trajectory (the last step is
    /// always kept).
    pub record_every: usize,
    /// Abort when the total population exceeds `1 + norm_tolerance`.
    pub norm_tolerance: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { record_every: 1, norm_tolerance: 1e-3 }
    }
}

/// Steps needed to reach `t_max` with step `dt`, requiring `dt | t_max`.
pub fn step_count(t_max: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && t_max > 0.0 && dt.is_finite() && t_max.is_finite()) {
        return Err(Error::Validation(format!("need dt > 0 and t_max > 0 (got dt = {dt}, t_max = {t_max})")));
    }
    let n = t_max / dt;
    let steps = n.round();
    if (n - steps).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::Validation(format!("dt = {dt} does not divide t_max = {t_max}")));
    }
    Ok(steps as usize)
}

/// Builds the kernel from `table` and evolves `c0` to `t_max`.
pub fn evolve(
    omega_0: f64,
    table: &SpectralTable,
    c0: &[C64],
    t_max: f64,
    dt: f64,
    opts: &EvolveOptions,
) -> Result<(AmplitudeTrajectory, Vec<String>)> {
    let steps = step_count(t_max, dt)?;
    let kernel = memory_kernel(table, dt, steps + 1)?;
    let mut traj = evolve_with_kernel(omega_0, &kernel, c0, steps, opts)?;
    traj.config_hash = table.metadata.config_hash.clone();
    Ok((traj, kernel.warnings))
}

/// Evolves `c0` for `steps` steps of `kernel.dt`.
pub fn evolve_with_kernel(
    omega_0: f64,
    kernel: &MemoryKernel,
    c0: &[C64],
    steps: usize,
    opts: &EvolveOptions,
) -> Result<AmplitudeTrajectory> {
    let n = kernel.emitters();
    if c0.len() != n {
        return Err(Error::Validation(format!("initial state has {} entries, expected {n}", c0.len())));
    }
    let norm0: f64 = c0.iter().map(|c| c.norm_sqr()).sum();
    if !(norm0 <= 1.0 + 1e-12) {
        return Err(Error::Validation(format!("initial state norm {norm0} exceeds 1")));
    }
    if kernel.len() < steps + 1 {
        return Err(Error::Invalid(format!(
            "kernel has {} samples but {} steps were requested",
            kernel.len(),
            steps
        )));
    }
    if opts.record_every == 0 {
        return Err(Error::Validation("record_every must be >= 1".into()));
    }
    let mut solver = Solver::new(omega_0, kernel, c0, steps, opts.norm_tolerance)?;
    if steps > 0 {
        let size = steps.next_power_of_two();
        solver.solve(1, 1 + size)?;
    }

    let mut times = Vec::new();
    let mut amplitudes = Vec::new();
    for k in (0..=steps).step_by(opts.record_every).chain(std::iter::once(steps)) {
        if times.last().is_some_and(|&t: &f64| t == k as f64 * kernel.dt) {
            continue;
        }
        times.push(k as f64 * kernel.dt);
        amplitudes.push(solver.c[k * n..(k + 1) * n].to_vec());
    }
    Ok(AmplitudeTrajectory { times, amplitudes, config_hash: String::new() })
}

/// Leaf size of the divide and conquer.
const LEAF: usize = 32;
/// Largest FFT size whose kernel transforms are cached.
const CACHE_LIMIT: usize = 1 << 20;

struct Solver<'a> {
    n: usize,
    dt: f64,
    omega_0: f64,
    kernel: &'a MemoryKernel,
    steps: usize,
    norm_tolerance: f64,
    /// `c[k * n + l]`.
    c: Vec<C64>,
    /// `s[k * n + l] = Sum_{j=1}^{k-1} (K_{k-j} c_j)_l`.
    s: Vec<C64>,
    a_inv: DMatrix<C64>,
    /// Trapezoidal history integral at the previous step.
    p_prev: Vec<C64>,
    planner: FftPlanner<f64>,
    plans: HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
    kernel_ffts: HashMap<usize, Vec<Vec<C64>>>,
}

impl<'a> Solver<'a> {
    fn new(omega_0: f64, kernel: &'a MemoryKernel, c0: &[C64], steps: usize, norm_tolerance: f64) -> Result<Self> {
        let n = kernel.emitters();
        let dt = kernel.dt;
        let k0 = kernel_matrix(kernel, 0);
        let a = DMatrix::<C64>::identity(n, n) * C64::new(1.0, 0.5 * omega_0 * dt) + k0 * C64::new(0.25 * dt * dt, 0.0);
        let a_inv = a
            .try_inverse()
            .ok_or_else(|| Error::Invalid("implicit step matrix is singular".into()))?;
        let mut c = vec![C64::new(0.0, 0.0); (steps + 1) * n];
        c[..n].copy_from_slice(c0);
        Ok(Self {
            n,
            dt,
            omega_0,
            kernel,
            steps,
            norm_tolerance,
            c,
            s: vec![C64::new(0.0, 0.0); (steps + 1) * n],
            a_inv,
            p_prev: vec![C64::new(0.0, 0.0); n],
            planner: FftPlanner::new(),
            plans: HashMap::new(),
            kernel_ffts: HashMap::new(),
        })
    }

    fn k(&self, m: usize, lag: usize) -> C64 {
        self.kernel.samples[m][lag]
    }

    /// Computes `c_k` for `k` in `[lo, hi)` (clipped to the run length),
    /// given that `s` already holds all contributions from `j < lo`.
    fn solve(&mut self, lo: usize, hi: usize) -> Result<()> {
        if lo > self.steps {
            return Ok(());
        }
        if hi - lo <= LEAF {
            let end = hi.min(self.steps + 1);
            for k in lo..end {
                for j in lo..k {
                    self.accumulate_direct(k, j);
                }
                self.step(k)?;
            }
            return Ok(());
        }
        let mid = lo + (hi - lo) / 2;
        self.solve(lo, mid)?;
        if mid <= self.steps {
            self.convolve_block(lo, mid, hi);
        }
        self.solve(mid, hi)
    }

    fn accumulate_direct(&mut self, k: usize, j: usize) {
        let n = self.n;
        for l in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..n {
                acc += self.k(l.abs_diff(i), k - j) * self.c[j * n + i];
            }
            self.s[k * n + l] += acc;
        }
    }

    fn plans(&mut self, size: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        if let Some(p) = self.plans.get(&size) {
            return p.clone();
        }
        let p = (self.planner.plan_fft_forward(size), self.planner.plan_fft_inverse(size));
        self.plans.insert(size, p.clone());
        p
    }

    fn kernel_transform(&mut self, size: usize, forward: &Arc<dyn Fft<f64>>) -> Vec<Vec<C64>> {
        if let Some(t) = self.kernel_ffts.get(&size) {
            return t.clone();
        }
        let len = self.kernel.len();
        let out: Vec<Vec<C64>> = (0..self.n)
            .map(|m| {
                let mut buf: Vec<C64> = (0..size)
                    .map(|lag| if lag < len { self.k(m, lag) } else { C64::new(0.0, 0.0) })
                    .collect();
                forward.process(&mut buf);
                buf
            })
            .collect();
        if size <= CACHE_LIMIT {
            self.kernel_ffts.insert(size, out.clone());
        }
        out
    }

    /// Adds the contributions of `c_j`, `j` in `[lo, mid)`, to `s_k`, `k` in
    /// `[mid, hi)`. A cyclic convolution of length `hi - lo` suffices: the
    /// wrapped terms land below `mid - lo`.
    fn convolve_block(&mut self, lo: usize, mid: usize, hi: usize) {
        let size = hi - lo;
        let n = self.n;
        let (forward, inverse) = self.plans(size);
        let kernel = self.kernel_transform(size, &forward);
        let source_end = mid.min(self.steps + 1);
        // one source transform at a time keeps the peak at 2n + 1 buffers
        let mut out = vec![vec![C64::new(0.0, 0.0); size]; n];
        let mut buf = vec![C64::new(0.0, 0.0); size];
        for i in 0..n {
            buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for j in lo..source_end {
                buf[j - lo] = self.c[j * n + i];
            }
            forward.process(&mut buf);
            for (l, o) in out.iter_mut().enumerate() {
                let kh = &kernel[l.abs_diff(i)];
                for ((o, a), b) in o.iter_mut().zip(&buf).zip(kh) {
                    *o += a * b;
                }
            }
        }
        drop(buf);
        drop(kernel);
        let scale = 1.0 / size as f64;
        let target_end = hi.min(self.steps + 1);
        for (l, o) in out.iter_mut().enumerate() {
            inverse.process(o);
            for k in mid..target_end {
                self.s[k * n + l] += o[k - lo] * scale;
            }
        }
    }

    /// Implicit trapezoidal step from `k - 1` to `k`.
    fn step(&mut self, k: usize) -> Result<()> {
        let n = self.n;
        let dt = self.dt;
        let w0 = C64::new(0.0, self.omega_0);
        // history part of P_k: dt [K_k c_0 / 2 + s_k]
        let mut h = vec![C64::new(0.0, 0.0); n];
        for l in 0..n {
            let mut acc = self.s[k * n + l];
            for i in 0..n {
                acc += 0.5 * self.k(l.abs_diff(i), k) * self.c[i];
            }
            h[l] = acc * dt;
        }
        let prev = &self.c[(k - 1) * n..k * n];
        let rhs: Vec<C64> = (0..n)
            .map(|l| {
                let f_prev = -w0 * prev[l] - self.p_prev[l];
                prev[l] + 0.5 * dt * f_prev - 0.5 * dt * h[l]
            })
            .collect();
        let mut next = vec![C64::new(0.0, 0.0); n];
        for l in 0..n {
            for i in 0..n {
                next[l] += self.a_inv[(l, i)] * rhs[i];
            }
        }
        let norm: f64 = next.iter().map(|c| c.norm_sqr()).sum();
        if !(norm <= 1.0 + self.norm_tolerance) {
            return Err(Error::Norm(format!(
                "total population {norm:.6} exceeds 1 at t = {:.4} (step {k}); check the kernel resolution and dt",
                k as f64 * dt
            )));
        }
        // P_k = H_k + dt/2 K_0 c_k
        for l in 0..n {
            let mut acc = h[l];
            for i in 0..n {
                acc += 0.5 * dt * self.k(l.abs_diff(i), 0) * next[i];
            }
            self.p_prev[l] = acc;
        }
        self.c[k * n..(k + 1) * n].copy_from_slice(&next);
        Ok(())
    }
}

/// `[K_|l-j|(k dt)]`.
pub fn kernel_matrix(kernel: &MemoryKernel, k: usize) -> DMatrix<C64> {
    let n = kernel.emitters();
    DMatrix::from_fn(n, n, |l, j| kernel.samples[l.abs_diff(j)][k])
}
