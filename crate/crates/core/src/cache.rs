//! On-disk cache of spectral tables, keyed by the table hash.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::green::QuadratureSpec;
use crate::material::PhysicalSystem;
use crate::spectral_matrix::{build_table, table_hash, GridSpec, SpectralTable};

/// Environment variable that overrides the default cache directory.
pub const CACHE_ENV: &str = "PLASMON_QI_CACHE";
pub const DEFAULT_CACHE_DIR: &str = ".plasmon-qi-cache";

#[derive(Debug, Clone)]
pub struct TableCache {
    dir: PathBuf,
}

impl TableCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `explicit`, else `$PLASMON_QI_CACHE`, else the default directory.
    pub fn resolve(explicit: Option<&Path>) -> Self {
        match explicit {
            Some(p) => Self::new(p),
            None => match std::env::var_os(CACHE_ENV) {
                Some(p) if !p.is_empty() => Self::new(p),
                _ => Self::new(DEFAULT_CACHE_DIR),
            },
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("table-{hash}.json"))
    }

    /// Cached table for `hash`, if present. A file whose contents do not
    /// match its key is an error.
    pub fn load(&self, hash: &str) -> Result<Option<SpectralTable>> {
        let path = self.path_for(hash);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let table: SpectralTable = serde_json::from_str(&text)
            .map_err(|e| Error::Cache(format!("{}: unreadable table ({e})", path.display())))?;
        if table.metadata.config_hash != hash {
            return Err(Error::Cache(format!(
                "{}: stored hash {} does not match key {hash}",
                path.display(),
                table.metadata.config_hash
            )));
        }
        table.validate().map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
        Ok(Some(table))
    }

    pub fn store(&self, table: &SpectralTable) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path_for(&table.metadata.config_hash);
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(table)?)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Loads the table for the inputs or builds and stores it. The flag is
    /// true when the table came from the cache.
    pub fn get_or_build(
        &self,
        system: &PhysicalSystem,
        grid: &GridSpec,
        quadrature: &QuadratureSpec,
    ) -> Result<(SpectralTable, bool)> {
        let hash = table_hash(system, grid, quadrature);
        if let Some(t) = self.load(&hash)? {
            return Ok((t, true));
        }
        let table = build_table(system, grid, quadrature)?;
        self.store(&table)?;
        Ok((table, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{DrudeMetal, EmitterArray, WireGeometry};

    fn system() -> PhysicalSystem {
        PhysicalSystem {
            metal: DrudeMetal::SILVER,
            wire: WireGeometry { radius: 6.2, present: true },
            emitters: EmitterArray { count: 2, omega_0: 2.0, gamma_0: 1e-4, r_a: 8.0, d: 5.0 },
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TableCache::new(dir.path());
        let grid = GridSpec { points: 12, ..GridSpec::default() };
        let q = QuadratureSpec { rel_tol: 1e-6, ..QuadratureSpec::default() };
        let (fresh, cached) = cache.get_or_build(&system(), &grid, &q).unwrap();
        assert!(!cached);
        let (again, cached) = cache.get_or_build(&system(), &grid, &q).unwrap();
        assert!(cached);
        assert_eq!(fresh, again);
        let bits = |t: &SpectralTable| t.entries.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&fresh), bits(&again));
    }

    #[test]
    fn mismatched_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TableCache::new(dir.path());
        let t = SpectralTable::from_samples(1, vec![1.0, 2.0], vec![vec![0.1], vec![0.2]]).unwrap();
        let path = cache.path_for("deadbeef");
        std::fs::write(&path, serde_json::to_vec(&t).unwrap()).unwrap();
        assert!(matches!(cache.load("deadbeef"), Err(Error::Cache(_))));
        std::fs::write(&path, b"{not json").unwrap();
        assert!(matches!(cache.load("deadbeef"), Err(Error::Cache(_))));
        assert!(cache.load("absent").unwrap().is_none());
    }

    #[test]
    fn explicit_directory_wins() {
        let c = TableCache::resolve(Some(Path::new("/tmp/x")));
        assert_eq!(c.dir(), Path::new("/tmp/x"));
    }
}
