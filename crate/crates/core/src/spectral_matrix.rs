//! Tabulated spectral-density matrix `[J_|l-j|(omega)]`, its eigen-channels,
//! and interpolation between grid points.

use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::green::{spectral_density_entries, QuadratureSpec};
use crate::material::PhysicalSystem;

/// Layout of the frequency grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub points: usize,
    /// Lower end in units of `omega_0`.
    pub omega_min_factor: f64,
    /// Upper end (eV); `None` picks `max(3 omega_0, 1.2 omega_sp)`.
    pub omega_max: Option<f64>,
    /// Width (in units of `omega_0`) of the region around `omega_0` where
    /// points cluster; spacing grows linearly with distance beyond it.
    pub cluster_width: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 2000,
            omega_min_factor: 1e-3,
            omega_max: None,
            cluster_width: 0.05,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 4 {
            return Err(Error::Validation(format!("grid.points must be >= 4 (got {})", self.points)));
        }
        if !(self.omega_min_factor > 0.0 && self.omega_min_factor < 1.0) {
            return Err(Error::Validation(format!(
                "grid.omega_min_factor must lie in (0, 1) (got {})",
                self.omega_min_factor
            )));
        }
        if !(self.cluster_width > 0.0 && self.cluster_width.is_finite()) {
            return Err(Error::Validation("grid.cluster_width must be > 0".into()));
        }
        if let Some(w) = self.omega_max {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Validation(format!("grid.omega_max must be > 0 (got {w})")));
            }
        }
        Ok(())
    }

    /// `(omega_min, omega_max)` for `system`.
    pub fn window(&self, system: &PhysicalSystem) -> (f64, f64) {
        let w0 = system.emitters.omega_0;
        let default_max = (3.0 * w0).max(1.2 * system.metal.surface_plasmon_energy());
        (self.omega_min_factor * w0, self.omega_max.unwrap_or(default_max))
    }

    /// Grid points `omega_0 + w sinh(s)` for uniform `s`, so the spacing is
    /// finest at `omega_0` and relative (logarithmic) far from it.
    pub fn grid(&self, system: &PhysicalSystem) -> Result<Vec<f64>> {
        self.validate()?;
        let (lo, hi) = self.window(system);
        if !(hi > lo) {
            return Err(Error::Validation(format!("grid window [{lo}, {hi}] is empty")));
        }
        let w0 = system.emitters.omega_0;
        let width = self.cluster_width * w0;
        let s_lo = ((lo - w0) / width).asinh();
        let s_hi = ((hi - w0) / width).asinh();
        let last = self.points - 1;
        let mut grid: Vec<f64> = (0..self.points)
            .map(|i| {
                if i == 0 {
                    lo
                } else if i == last {
                    hi
                } else {
                    let s = s_lo + (s_hi - s_lo) * i as f64 / last as f64;
                    w0 + width * s.sinh()
                }
            })
            .collect();
        grid.dedup();
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("grid is not strictly increasing".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    /// SHA-256 of the physical system, grid and quadrature settings.
    pub config_hash: String,
    pub quadrature: QuadratureSpec,
    pub grid: GridSpec,
    /// Seconds since the Unix epoch.
    pub built_at: u64,
}

/// `J_m(omega)` for `m = 0..N` on a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTable {
    pub emitters: usize,
    pub omega: Vec<f64>,
    /// `entries[i][m] = J_m(omega[i])`.
    pub entries: Vec<Vec<f64>>,
    pub metadata: TableMetadata,
}

#[derive(Serialize)]
struct HashedInputs<'a> {
    system: &'a PhysicalSystem,
    grid: &'a GridSpec,
    quadrature: &'a QuadratureSpec,
}

/// Hex SHA-256 over everything a table depends on.
pub fn table_hash(system: &PhysicalSystem, grid: &GridSpec, quadrature: &QuadratureSpec) -> String {
    let payload = serde_json::to_vec(&HashedInputs { system, grid, quadrature }).expect("config serializes");
    let digest = Sha256::digest(&payload);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Samples `J_0..J_{N-1}` on the grid, in parallel over frequencies.
pub fn build_table(system: &PhysicalSystem, grid: &GridSpec, quadrature: &QuadratureSpec) -> Result<SpectralTable> {
    system.validate()?;
    quadrature.validate()?;
    let omega = grid.grid(system)?;
    let max_m = system.emitters.count - 1;
    let entries = omega
        .par_iter()
        .map(|&w| spectral_density_entries(system, w, max_m, quadrature))
        .collect::<Result<Vec<_>>>()?;
    let built_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let table = SpectralTable {
        emitters: system.emitters.count,
        omega,
        entries,
        metadata: TableMetadata {
            config_hash: table_hash(system, grid, quadrature),
            quadrature: *quadrature,
            grid: *grid,
            built_at,
        },
    };
    table.validate()?;
    Ok(table)
}

impl SpectralTable {
    /// Table from explicit samples (tests, toy models).
    pub fn from_samples(emitters: usize, omega: Vec<f64>, entries: Vec<Vec<f64>>) -> Result<Self> {
        let table = Self {
            emitters,
            omega,
            entries,
            metadata: TableMetadata {
                config_hash: String::new(),
                quadrature: QuadratureSpec::default(),
                grid: GridSpec::default(),
                built_at: 0,
            },
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.emitters < 1 {
            return Err(Error::Invalid("table needs at least one emitter".into()));
        }
        if self.omega.len() < 2 || self.omega.len() != self.entries.len() {
            return Err(Error::Invalid("table grid and entries disagree in length".into()));
        }
        if !(self.omega[0] > 0.0) || self.omega.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("table grid must be positive and strictly increasing".into()));
        }
        for (w, row) in self.omega.iter().zip(&self.entries) {
            if row.len() != self.emitters || row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("bad table row at omega = {w}")));
            }
        }
        Ok(())
    }

    pub fn omega_min(&self) -> f64 {
        self.omega[0]
    }

    pub fn omega_max(&self) -> f64 {
        self.omega[self.omega.len() - 1]
    }

    /// Everything except the build timestamp, for determinism checks.
    pub fn payload_eq(&self, other: &Self) -> bool {
        self.emitters == other.emitters
            && self.omega == other.omega
            && self.entries == other.entries
            && self.metadata.config_hash == other.metadata.config_hash
    }

    /// Toeplitz matrix `[J_|l-j|]` at grid index `i`.
    pub fn matrix(&self, i: usize) -> DMatrix<f64> {
        toeplitz(&self.entries[i])
    }

    /// Cubic Hermite interpolation of all `J_m` at `omega`, with node slopes
    /// from the three-point non-uniform difference formula (exact for
    /// quadratics, C1 across nodes).
    pub fn interpolate(&self, omega: f64) -> Result<Vec<f64>> {
        let n = self.omega.len();
        if !(omega >= self.omega[0] && omega <= self.omega[n - 1]) {
            return Err(Error::Domain(format!(
                "omega = {omega} outside the table span [{}, {}]",
                self.omega[0],
                self.omega[n - 1]
            )));
        }
        let k = match self.omega.partition_point(|&w| w <= omega) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.omega[k], self.omega[k + 1]);
        let h = x1 - x0;
        let t = (omega - x0) / h;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        Ok((0..self.emitters)
            .map(|m| {
                let y0 = self.entries[k][m];
                let y1 = self.entries[k + 1][m];
                h00 * y0 + h10 * h * self.slope(k, m) + h01 * y1 + h11 * h * self.slope(k + 1, m)
            })
            .collect())
    }

    fn slope(&self, i: usize, m: usize) -> f64 {
        three_point_slope(&self.omega, |j| self.entries[j][m], i)
    }
}

/// Derivative at `x[i]` of the parabola through `i` and its neighbours
/// (one-sided at the ends); the slope rule of the table interpolant.
pub fn three_point_slope(x: &[f64], y: impl Fn(usize) -> f64, i: usize) -> f64 {
    let n = x.len();
    if n == 2 {
        return (y(1) - y(0)) / (x[1] - x[0]);
    }
    let (a, b, c) = if i == 0 {
        (0, 1, 2)
    } else if i == n - 1 {
        (n - 3, n - 2, n - 1)
    } else {
        (i - 1, i, i + 1)
    };
    let (xa, xb, xc) = (x[a], x[b], x[c]);
    let xi = x[i];
    y(a) * (2.0 * xi - xb - xc) / ((xa - xb) * (xa - xc))
        + y(b) * (2.0 * xi - xa - xc) / ((xb - xa) * (xb - xc))
        + y(c) * (2.0 * xi - xa - xb) / ((xc - xa) * (xc - xb))
}

/// Symmetric Toeplitz matrix with first row `row`.
pub fn toeplitz(row: &[f64]) -> DMatrix<f64> {
    let n = row.len();
    DMatrix::from_fn(n, n, |l, j| row[l.abs_diff(j)])
}

/// Eigenvalues `D_j(omega)` of the spectral matrix, sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenChannels {
    pub omega: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Channel values for one row `J_0..J_{N-1}`: closed forms for `N <= 3`,
/// a symmetric eigensolve otherwise.
pub fn channel_values(row: &[f64]) -> Vec<f64> {
    let mut d = match *row {
        [j0] => vec![j0],
        [j0, j1] => vec![j0 + j1, j0 - j1],
        [j0, j1, j2] => {
            let root = (8.0 * j1 * j1 + j2 * j2).sqrt();
            vec![j0 - j2, (2.0 * j0 + j2 - root) / 2.0, (2.0 * j0 + j2 + root) / 2.0]
        }
        _ => numeric_channel_values(row),
    };
    d.sort_by(|a, b| b.total_cmp(a));
    d
}

/// Channel values from a numeric symmetric eigensolve, sorted descending.
pub fn numeric_channel_values(row: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = SymmetricEigen::new(toeplitz(row)).eigenvalues.iter().copied().collect();
    d.sort_by(|a, b| b.total_cmp(a));
    d
}

pub fn eigen_channels(table: &SpectralTable) -> Result<EigenChannels> {
    table.validate()?;
    Ok(EigenChannels {
        omega: table.omega.clone(),
        values: table.entries.iter().map(|row| channel_values(row)).collect(),
    })
}
