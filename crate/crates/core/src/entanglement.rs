//! Reduced states of the emitters in the single-excitation sector and their
//! entanglement: Wootters concurrence for pairs and the SO(4)-generator
//! measure `C3` for three emitters.
//!
//! Qubit basis per emitter: index 0 = excited, 1 = ground. Two-emitter
//! basis `{ee, eg, ge, gg}`; three emitters `|q1 q2 q3>` with index
//! `4 q1 + 2 q2 + q3`.
//!
//! Concurrences are evaluated through a factor `rho = V V^dagger`: the
//! square roots of the eigenvalues of `rho S rho^* S` are the singular
//! values of the symmetric matrix `V^dagger S V^*`, which avoids taking
//! square roots of eigenvalues near zero.

use nalgebra::{DMatrix, Matrix4};

use crate::error::{Error, Result};
use crate::special_functions::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Hermitian, unit-trace, positive semidefinite density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    data: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(data: DMatrix<C64>) -> Result<Self> {
        let d = data.nrows();
        if d != data.ncols() || !(d == 4 || d == 8) {
            return Err(Error::Invalid(format!("density matrix must be 4x4 or 8x8 (got {}x{})", d, data.ncols())));
        }
        let scale = data.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        let herm = (&data - data.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-12 * scale {
            return Err(Error::Invalid(format!("density matrix is not Hermitian (deviation {herm:.2e})")));
        }
        let trace = data.trace();
        if (trace - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::Invalid(format!("density matrix trace {trace} != 1")));
        }
        let min = data.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(Error::Invalid(format!("density matrix is not positive semidefinite (eigenvalue {min:.3e})")));
        }
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.data
    }
}

fn check_norm(c: &[C64]) -> Result<f64> {
    let p: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    if !(p <= 1.0 + 1e-12) {
        return Err(Error::Norm(format!("single-excitation population {p} exceeds 1")));
    }
    Ok(p.min(1.0))
}

/// Reduced state of emitters `l` and `j` with amplitudes `c_l`, `c_j`.
pub fn pair_density_matrix(cl: C64, cj: C64) -> Result<DensityMatrix> {
    let p = check_norm(&[cl, cj])?;
    let mut m = DMatrix::from_element(4, 4, ZERO);
    m[(1, 1)] = C64::new(cl.norm_sqr(), 0.0);
    m[(2, 2)] = C64::new(cj.norm_sqr(), 0.0);
    m[(3, 3)] = C64::new(1.0 - p, 0.0);
    m[(1, 2)] = cl * cj.conj();
    m[(2, 1)] = cj * cl.conj();
    DensityMatrix::new(m)
}

/// Reduced state of three emitters.
pub fn triple_density_matrix(c: &[C64; 3]) -> Result<DensityMatrix> {
    let p = check_norm(c)?;
    let idx = [3, 5, 6];
    let mut m = DMatrix::from_element(8, 8, ZERO);
    for a in 0..3 {
        for b in 0..3 {
            m[(idx[a], idx[b])] = c[a] * c[b].conj();
        }
    }
    m[(7, 7)] = C64::new(1.0 - p, 0.0);
    DensityMatrix::new(m)
}

/// `max(0, s_1 - s_2 - ...)` for the singular values of `V^dagger S V^*`.
fn concurrence_from_factor(v: &DMatrix<C64>, s: &DMatrix<C64>) -> f64 {
    let tau = v.adjoint() * s * v.map(|z| z.conj());
    let mut sv: Vec<f64> = tau.singular_values().iter().cloned().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let rest: f64 = sv.iter().skip(1).sum();
    (sv.first().copied().unwrap_or(0.0) - rest).max(0.0)
}

/// `rho = V V^dagger` from the eigendecomposition, dropping null directions.
fn factor(rho: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = rho.clone().symmetric_eigen();
    let cols: Vec<_> = (0..rho.nrows())
        .filter(|&k| eig.eigenvalues[k] > 1e-14)
        .map(|k| eig.eigenvectors.column(k) * C64::new(eig.eigenvalues[k].sqrt(), 0.0))
        .collect();
    if cols.is_empty() {
        return DMatrix::from_element(rho.nrows(), 1, ZERO);
    }
    DMatrix::from_columns(&cols)
}

fn sigma_y() -> [[C64; 2]; 2] {
    [[ZERO, C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), ZERO]]
}

fn sigma_yy() -> DMatrix<C64> {
    let y = sigma_y();
    DMatrix::from_fn(4, 4, |i, j| y[i / 2][j / 2] * y[i % 2][j % 2])
}

/// Wootters concurrence of a two-qubit state.
pub fn concurrence2(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::Invalid(format!("concurrence2 needs a 4x4 state (got {})", rho.dim())));
    }
    let m = rho.matrix();
    let x_state = (0..4).all(|i| (0..4).all(|j| i == j || i + j == 3 || m[(i, j)] == ZERO));
    let c = if x_state {
        // closed form for states supported on the diagonal and anti-diagonal
        let d = |i: usize| m[(i, i)].re.max(0.0);
        let a = m[(1, 2)].norm() - (d(0) * d(3)).sqrt();
        let b = m[(0, 3)].norm() - (d(1) * d(2)).sqrt();
        2.0 * a.max(b).max(0.0)
    } else {
        concurrence_from_factor(&factor(m), &sigma_yy())
    };
    Ok(c.min(1.0))
}

/// Concurrence between emitters `l` and `j` (0-based) of amplitudes `c`.
pub fn pairwise_concurrence(c: &[C64], l: usize, j: usize) -> Result<f64> {
    if l >= c.len() || j >= c.len() || l == j {
        return Err(Error::Invalid(format!("pair ({l}, {j}) invalid for {} emitters", c.len())));
    }
    check_norm(c)?;
    concurrence2(&pair_density_matrix(c[l], c[j])?)
}

/// The six SO(4) generators `E_pq - E_qp`, `p < q`, in the order
/// (0,1), (0,2), (0,3), (1,2), (1,3), (2,3).
pub fn so4_generators() -> [Matrix4<f64>; 6] {
    let mut out = [Matrix4::zeros(); 6];
    let mut k = 0;
    for p in 0..4 {
        for q in p + 1..4 {
            out[k][(p, q)] = 1.0;
            out[k][(q, p)] = -1.0;
            k += 1;
        }
    }
    out
}

/// Bipartitions `(m, n | l)` in the order 12|3, 31|2, 23|1 (0-based).
pub const BIPARTITIONS: [(usize, usize, usize); 3] = [(0, 1, 2), (2, 0, 1), (1, 2, 0)];

/// `L (x) sigma_y` with the pair factor first.
fn generator_operator(l: &Matrix4<f64>) -> DMatrix<C64> {
    let y = sigma_y();
    DMatrix::from_fn(8, 8, |i, j| C64::new(l[(i / 2, j / 2)], 0.0) * y[i % 2][j % 2])
}

/// Tripartite measure `C3 = sqrt(1/3 sum_j sum_partitions (C_j^{mn|l})^2)`.
///
/// `C_j^{mn|l}` uses the generator `L_j` on the pair `(m, n)` and `sigma_y`
/// on `l`, in the basis `|q_m q_n q_l>`. The eigenvalues of
/// `rho (L (x) sigma_y) rho^* (L (x) sigma_y)` are non-positive for these
/// operators; their magnitudes enter the concurrence.
pub fn tripartite_c3(c: &[C64; 3]) -> Result<f64> {
    let p = check_norm(c)?;
    let gens = so4_generators();
    let mut total = 0.0;
    for &(m, n, l) in &BIPARTITIONS {
        // factor of rho in the |q_m q_n q_l> basis: the single-excitation
        // vector and the ground-state weight
        let mut v = DMatrix::from_element(8, 2, ZERO);
        for (k, amp) in [(m, 3usize), (n, 5), (l, 6)] {
            v[(amp, 0)] = c[k];
        }
        v[(7, 1)] = C64::new((1.0 - p).sqrt(), 0.0);
        for g in &gens {
            let cj = concurrence_from_factor(&v, &generator_operator(g));
            total += cj * cj;
        }
    }
    Ok((total / 3.0).sqrt())
}
