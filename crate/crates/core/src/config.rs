//! Run configuration (TOML).
//!
//! Lengths are either plain numbers in nm or `{ lambda0 = x }`, meaning
//! `x` times the vacuum wavelength at `omega_0`. Every section is optional;
//! the defaults describe two emitters near a silver wire:
//!
//! ```toml
//! [metal]                 # Drude silver
//! eps_inf = 5.7
//! omega_p = 9.0           # eV
//! gamma_p = 0.1           # eV
//!
//! [geometry]
//! radius = { lambda0 = 0.01 }
//! present = true
//!
//! [emitters]
//! count = 2
//! omega_0 = 2.0           # eV
//! gamma_0 = 1e-4          # eV
//! r_a = { lambda0 = 0.012 }
//! d = 5.0                 # nm
//!
//! [grid]                  # frequency grid of the spectral table
//! [quadrature]            # kz integral and azimuthal sum controls
//!
//! [solver]
//! t_max = 200.0           # hbar/eV
//! dt = 0.01               # optional; default keeps omega_max * dt <= 0.1
//! initial = [[1.0, 0.0], [0.0, 0.0]]   # (Re, Im) per emitter
//! record_every = 10
//! samples = 201           # time samples of closed-form steady states
//!
//! [outputs]
//! formats = ["csv", "json"]
//!
//! [sweep]
//! parameter = "r_a"       # or "d"
//! unit = "lambda0"        # or "nm"
//! values = [0.011, 0.012, 0.014]
//! command = "bound-states"
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::green::QuadratureSpec;
use crate::material::{wavelength, DrudeMetal, EmitterArray, PhysicalSystem, WireGeometry};
use crate::special_functions::C64;
use crate::spectral_matrix::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Length {
    Nm(f64),
    Relative {
        lambda0: f64,
    },
}

impl Length {
    pub fn nm(self, lambda_0: f64) -> f64 {
        match self {
            Length::Nm(v) => v,
            Length::Relative { lambda0 } => lambda0 * lambda_0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub radius: Length,
    pub present: bool,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { radius: Length::Relative { lambda0: 0.01 }, present: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitterConfig {
    pub count: usize,
    pub omega_0: f64,
    pub gamma_0: f64,
    pub r_a: Length,
    pub d: Length,
}

impl Default for EmitterConfig {
    fn default() -> Self {
        Self {
            count: 2,
            omega_0: 2.0,
            gamma_0: 1e-4,
            r_a: Length::Relative { lambda0: 0.012 },
            d: Length::Nm(5.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub t_max: f64,
    pub dt: Option<f64>,
    /// `(Re, Im)` per emitter; defaults to the first emitter excited.
    pub initial: Option<Vec<[f64; 2]>>,
    pub record_every: usize,
    pub samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { t_max: 200.0, dt: None, initial: None, record_every: 1, samples: 201 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { formats: vec![Format::Csv, Format::Json] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SpectralDensity,
    BoundStates,
    Dynamics,
    SteadyState,
    Entanglement,
    Sweep,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::SpectralDensity,
        Command::BoundStates,
        Command::Dynamics,
        Command::SteadyState,
        Command::Entanglement,
        Command::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SpectralDensity => "spectral-density",
            Command::BoundStates => "bound-states",
            Command::Dynamics => "dynamics",
            Command::SteadyState => "steady-state",
            Command::Entanglement => "entanglement",
            Command::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    RA,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    Nm,
    Lambda0,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepAxis,
    #[serde(default = "default_unit")]
    pub unit: LengthUnit,
    pub values: Vec<f64>,
    pub command: Command,
}

fn default_unit() -> LengthUnit {
    LengthUnit::Nm
}

impl SweepConfig {
    pub fn length(&self, value: f64) -> Length {
        match self.unit {
            LengthUnit::Nm => Length::Nm(value),
            LengthUnit::Lambda0 => Length::Relative { lambda0: value },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub metal: DrudeMetal,
    pub geometry: GeometryConfig,
    pub emitters: EmitterConfig,
    pub grid: GridSpec,
    pub quadrature: QuadratureSpec,
    pub solver: SolverConfig,
    pub outputs: OutputConfig,
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn system(&self) -> Result<PhysicalSystem> {
        let e = &self.emitters;
        if !(e.omega_0 > 0.0 && e.omega_0.is_finite()) {
            return Err(Error::Validation(format!("emitters.omega_0 must be > 0 (got {})", e.omega_0)));
        }
        let lambda_0 = wavelength(e.omega_0);
        let system = PhysicalSystem {
            metal: self.metal,
            wire: WireGeometry { radius: self.geometry.radius.nm(lambda_0), present: self.geometry.present },
            emitters: EmitterArray {
                count: e.count,
                omega_0: e.omega_0,
                gamma_0: e.gamma_0,
                r_a: e.r_a.nm(lambda_0),
                d: e.d.nm(lambda_0),
            },
        };
        system.validate()?;
        Ok(system)
    }

    /// Initial amplitudes, first emitter excited by default.
    pub fn initial_state(&self) -> Result<Vec<C64>> {
        let n = self.emitters.count;
        match &self.solver.initial {
            None => {
                let mut c = vec![C64::new(0.0, 0.0); n];
                c[0] = C64::new(1.0, 0.0);
                Ok(c)
            }
            Some(v) if v.len() != n => Err(Error::Validation(format!(
                "solver.initial has {} entries for {n} emitters",
                v.len()
            ))),
            Some(v) => {
                let c: Vec<C64> = v.iter().map(|p| C64::new(p[0], p[1])).collect();
                let norm: f64 = c.iter().map(|z| z.norm_sqr()).sum();
                if !(norm <= 1.0 + 1e-12) {
                    return Err(Error::Validation(format!("solver.initial has norm {norm} > 1")));
                }
                Ok(c)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system()?;
        self.grid.validate()?;
        self.quadrature.validate()?;
        let s = &self.solver;
        if !(s.t_max > 0.0 && s.t_max.is_finite()) {
            return Err(Error::Validation(format!("solver.t_max must be > 0 (got {})", s.t_max)));
        }
        if let Some(dt) = s.dt {
            if !(dt > 0.0 && dt <= s.t_max) {
                return Err(Error::Validation(format!("solver.dt must lie in (0, t_max] (got {dt})")));
            }
        }
        if s.record_every == 0 {
            return Err(Error::Validation("solver.record_every must be >= 1".into()));
        }
        if s.samples < 2 {
            return Err(Error::Validation("solver.samples must be >= 2".into()));
        }
        self.initial_state()?;
        if self.outputs.formats.is_empty() {
            return Err(Error::Validation("outputs.formats must not be empty".into()));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::Validation("sweep.values must not be empty".into()));
            }
            if sw.command == Command::Sweep {
                return Err(Error::Validation("sweep.command cannot be \"sweep\"".into()));
            }
            for &v in &sw.values {
                self.with_sweep_value(sw, v)?.system()?;
            }
        }
        Ok(())
    }

    /// Copy of `self` with the sweep parameter set to `value`.
    pub fn with_sweep_value(&self, sweep: &SweepConfig, value: f64) -> Result<RunConfig> {
        let mut cfg = self.clone();
        cfg.sweep = None;
        match sweep.parameter {
            SweepAxis::RA => cfg.emitters.r_a = sweep.length(value),
            SweepAxis::D => cfg.emitters.d = sweep.length(value),
        }
        Ok(cfg)
    }

    /// SHA-256 over the canonical JSON form of the whole configuration.
    pub fn hash(&self) -> String {
        let payload = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&payload).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    RunConfig::parse(&text, &path.display().to_string())
}
