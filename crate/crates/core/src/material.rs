//! Physical configuration: Drude metal, wire geometry and the emitter array.
//!
//! Units are fixed across the crate: `hbar = 1`, energies and frequencies in
//! eV, lengths in nm, times in hbar/eV. Wavenumbers are in 1/nm and follow
//! from `k = omega / HBAR_C`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special_functions::C64;

/// hbar * c in eV nm.
pub const HBAR_C: f64 = 197.326_980_4;

/// Vacuum wavenumber (1/nm) at energy `omega` (eV).
pub fn vacuum_wavenumber(omega: f64) -> f64 {
    omega / HBAR_C
}

/// Vacuum wavelength (nm) at energy `omega` (eV).
pub fn wavelength(omega: f64) -> f64 {
    2.0 * PI * HBAR_C / omega
}

/// Lossy metal with a Drude permittivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrudeMetal {
    pub eps_inf: f64,
    /// Bulk plasma energy (eV).
    pub omega_p: f64,
    /// Damping (eV).
    pub gamma_p: f64,
}

impl DrudeMetal {
    /// Silver: 9 eV plasma energy, eps_inf 5.7, 0.1 eV damping.
    pub const SILVER: DrudeMetal = DrudeMetal {
        eps_inf: 5.7,
        omega_p: 9.0,
        gamma_p: 0.1,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_p > 0.0 && self.omega_p.is_finite()) {
            return Err(Error::Validation(format!("metal.omega_p must be > 0 (got {})", self.omega_p)));
        }
        if !(self.gamma_p >= 0.0 && self.gamma_p.is_finite()) {
            return Err(Error::Validation(format!("metal.gamma_p must be >= 0 (got {})", self.gamma_p)));
        }
        if !(self.eps_inf >= 1.0 && self.eps_inf.is_finite()) {
            return Err(Error::Validation(format!("metal.eps_inf must be >= 1 (got {})", self.eps_inf)));
        }
        Ok(())
    }

    /// `eps_inf - omega_p^2 / (omega (omega + i gamma_p))`.
    pub fn permittivity(&self, omega: f64) -> Result<C64> {
        if !(omega > 0.0) {
            return Err(Error::Domain(format!("permittivity needs omega > 0 (got {omega})")));
        }
        let denom = C64::new(omega * omega, omega * self.gamma_p);
        Ok(C64::new(self.eps_inf, 0.0) - self.omega_p * self.omega_p / denom)
    }

    /// Planar surface-plasmon energy `omega_p / sqrt(eps_inf + 1)`.
    pub fn surface_plasmon_energy(&self) -> f64 {
        self.omega_p / (self.eps_inf + 1.0).sqrt()
    }
}

impl Default for DrudeMetal {
    fn default() -> Self {
        Self::SILVER
    }
}

/// Infinite circular cylinder along z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireGeometry {
    /// Radius (nm).
    pub radius: f64,
    /// When false the wire is removed and the emitters sit in vacuum.
    pub present: bool,
}

impl WireGeometry {
    pub fn new(radius: f64) -> Self {
        Self { radius, present: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Validation(format!("wire radius must be > 0 (got {})", self.radius)));
        }
        Ok(())
    }
}

/// Identical emitters on a line parallel to the wire, dipoles radial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterArray {
    pub count: usize,
    /// Transition energy (eV).
    pub omega_0: f64,
    /// Free-space decay rate (eV).
    pub gamma_0: f64,
    /// Distance from the wire axis (nm).
    pub r_a: f64,
    /// Nearest-neighbour spacing along z (nm).
    pub d: f64,
}

impl EmitterArray {
    pub fn validate(&self, wire: &WireGeometry) -> Result<()> {
        if self.count < 1 {
            return Err(Error::Validation("emitters.count must be >= 1".into()));
        }
        if !(self.omega_0 > 0.0 && self.omega_0.is_finite()) {
            return Err(Error::Validation(format!("emitters.omega_0 must be > 0 (got {})", self.omega_0)));
        }
        if !(self.gamma_0 > 0.0 && self.gamma_0.is_finite()) {
            return Err(Error::Validation(format!("emitters.gamma_0 must be > 0 (got {})", self.gamma_0)));
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(Error::Validation(format!("emitters.d must be >= 0 (got {})", self.d)));
        }
        if !(self.r_a > wire.radius && self.r_a.is_finite()) {
            return Err(Error::Validation(format!(
                "emitters.r_a ({}) must exceed the wire radius ({})",
                self.r_a, wire.radius
            )));
        }
        Ok(())
    }

    /// Free-space wavelength at the emitter transition (nm).
    pub fn lambda_0(&self) -> f64 {
        wavelength(self.omega_0)
    }
}

/// Complete physical setup shared by every stage of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSystem {
    pub metal: DrudeMetal,
    pub wire: WireGeometry,
    pub emitters: EmitterArray,
}

impl PhysicalSystem {
    pub fn validate(&self) -> Result<()> {
        self.metal.validate()?;
        self.wire.validate()?;
        self.emitters.validate(&self.wire)
    }

    /// Permittivity of the cylinder, vacuum when the wire is removed.
    pub fn wire_permittivity(&self, omega: f64) -> Result<C64> {
        if self.wire.present {
            self.metal.permittivity(omega)
        } else if omega > 0.0 {
            Ok(C64::new(1.0, 0.0))
        } else {
            Err(Error::Domain(format!("omega must be > 0 (got {omega})")))
        }
    }
}

/// `sqrt(k^2 - kz^2)` on the branch with `Im >= 0` (and `Re >= 0` when real).
pub fn radial_wavenumber(k: C64, kz: f64) -> C64 {
    let mut kr = (k * k - kz * kz).sqrt();
    if kr.im < 0.0 || (kr.im == 0.0 && kr.re < 0.0) {
        kr = -kr;
    }
    kr
}
