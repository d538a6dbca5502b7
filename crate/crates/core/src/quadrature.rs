//! Globally adaptive Gauss-Kronrod (7/15) quadrature for vector-valued
//! integrands. All components share the same nodes, so weighted sums of the
//! components inherit any sign structure of the integrand.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 0.0,
            rel_tol: 1e-10,
            max_subdivisions: 4000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: Vec<f64>,
    /// Estimated absolute error (max-norm over components).
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn gauss_kronrod<F>(f: &mut F, a: f64, b: f64, dim: usize) -> Result<Panel>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];

    let fc = f(center)?;
    for i in 0..dim {
        kronrod[i] = WGK[7] * fc[i];
        gauss[i] = WG[3] * fc[i];
    }
    for (j, &x) in XGK.iter().enumerate().take(7) {
        let f1 = f(center - half * x)?;
        let f2 = f(center + half * x)?;
        for i in 0..dim {
            let s = f1[i] + f2[i];
            kronrod[i] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[i] += WG[j / 2] * s;
            }
        }
    }
    let mut error = 0.0_f64;
    for i in 0..dim {
        kronrod[i] *= half;
        gauss[i] *= half;
        error = error.max((kronrod[i] - gauss[i]).abs());
    }
    // the raw Kronrod-Gauss difference overestimates badly for smooth panels
    let scale = max_norm(&kronrod);
    if error > 0.0 && scale > 0.0 {
        let r = (200.0 * error / scale).powf(1.5);
        if r < 1.0 {
            error = scale * r;
        }
        error = error.max(50.0 * f64::EPSILON * scale);
    }
    Ok(Panel { a, b, value: kronrod, error })
}

/// Integrates `f` over `[points[0], points[last]]`, starting from the panels
/// delimited by `points` (which must be increasing).
pub fn integrate_vec<F>(mut f: F, points: &[f64], dim: usize, opts: &QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    if points.len() < 2 {
        return Err(Error::Invalid("quadrature needs at least two points".into()));
    }
    if points.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("quadrature break points must be strictly increasing".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in points.windows(2) {
        heap.push(gauss_kronrod(&mut f, w[0], w[1], dim)?);
        evaluations += 15;
    }
    let mut total = vec![0.0; dim];
    let mut err;
    loop {
        total.iter_mut().for_each(|t| *t = 0.0);
        err = 0.0_f64;
        for p in heap.iter() {
            for i in 0..dim {
                total[i] += p.value[i];
            }
            err += p.error;
        }
        let tol = opts.abs_tol.max(opts.rel_tol * max_norm(&total));
        if err <= tol {
            break;
        }
        if heap.len() >= opts.max_subdivisions {
            return Err(Error::Quadrature {
                error: err,
                tolerance: tol,
                context: format!("{} panels on [{:.4e}, {:.4e}]", heap.len(), points[0], points[points.len() - 1]),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // panel collapsed to machine resolution; accept what we have
            heap.push(worst);
            break;
        }
        heap.push(gauss_kronrod(&mut f, worst.a, mid, dim)?);
        heap.push(gauss_kronrod(&mut f, mid, worst.b, dim)?);
        evaluations += 30;
    }
    Ok(QuadResult { value: total, error: err, evaluations })
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_vec(|x| Ok(vec![f(x)]), &[a, b], 1, opts)?;
    Ok((r.value[0], r.error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let (v, _) = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, &QuadOptions::default()).unwrap();
        assert!((v - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        let (v, _) = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, &QuadOptions::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sharp_peak_with_breakpoints() {
        let w = 1e-3;
        let f = |x: f64| w / ((x - 0.3).powi(2) + w * w);
        let opts = QuadOptions::default();
        let r = integrate_vec(|x| Ok(vec![f(x)]), &[0.0, 0.3, 1.0], 1, &opts).unwrap();
        let exact = (0.7 / w).atan() + (0.3 / w).atan();
        assert!((r.value[0] - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn vector_components_share_nodes() {
        let r = integrate_vec(|x| Ok(vec![x.cos(), x.sin()]), &[0.0, 1.0], 2, &QuadOptions::default()).unwrap();
        assert!((r.value[0] - 1.0_f64.sin()).abs() < 1e-13);
        assert!((r.value[1] - (1.0 - 1.0_f64.cos())).abs() < 1e-13);
    }

    #[test]
    fn reports_nonconvergence() {
        let opts = QuadOptions { max_subdivisions: 3, rel_tol: 1e-14, abs_tol: 0.0 };
        let e = integrate(|x| (50.0 * x).sin() / x.sqrt(), 1e-9, 10.0, &opts);
        assert!(matches!(e, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(integrate_vec(|_| Ok(vec![1.0]), &[1.0, 0.0], 1, &QuadOptions::default()).is_err());
    }
}
