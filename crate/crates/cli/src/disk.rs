//! On-disk path-table cache keyed by a hash of the process.
//!
//! Layout: `<dir>/<key>/T<t>.bin`, each file holding a magic tag, `T`,
//! the alphabet size, the word count, then `log ℙ_T` and `log ℙ̂_T` as
//! little-endian `f64`.

use std::path::{Path, PathBuf};

use qmep::format::InstrumentFile;
use qmep::instrument::Process;
use qmep::pathspace::{PathCache, PathTable};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const CACHE_DIR_ENV: &str = "QMEP_CACHE_DIR";
pub const WORKERS_ENV: &str = "QMEP_WORKERS";

const MAGIC: &[u8; 8] = b"QMEPTAB1";

pub struct DiskCache {
    dir: PathBuf,
}

pub fn process_key(p: &Process) -> Result<String> {
    let text = InstrumentFile::from_process(p).to_json()?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DiskCache { dir: dir.into() }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(DiskCache::new)
    }

    fn file(&self, key: &str, t: usize) -> PathBuf {
        self.dir.join(key).join(format!("T{t}.bin"))
    }

    /// Load every cached `T ≤ t_max` into `cache`; unreadable files are skipped.
    pub fn preload(&self, cache: &PathCache, t_max: usize) -> Result<usize> {
        let key = process_key(cache.process())?;
        let mut loaded = 0;
        for t in 1..=t_max {
            let path = self.file(&key, t);
            if let Some(table) = read_table(&path) {
                if table.t() == t && cache.preload(table).is_ok() {
                    loaded += 1;
                }
            }
        }
        Ok(loaded)
    }

    /// Write tables that are not on disk yet.
    pub fn store(&self, cache: &PathCache) -> Result<()> {
        let key = process_key(cache.process())?;
        let dir = self.dir.join(&key);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        for table in cache.cached() {
            let path = self.file(&key, table.t());
            if path.exists() {
                continue;
            }
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, encode(&table)).map_err(|e| CliError::io(&tmp, e))?;
            std::fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

fn encode(table: &PathTable) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 16 * table.len());
    out.extend_from_slice(MAGIC);
    for n in [table.t(), table.letters(), table.len()] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for x in table.log_p().iter().chain(table.log_p_hat()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn read_table(path: &Path) -> Option<PathTable> {
    let bytes = std::fs::read(path).ok()?;
    if bytes.len() < 32 || &bytes[..8] != MAGIC {
        return None;
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap()) as usize;
    let (t, letters, n) = (word(0), word(1), word(2));
    if bytes.len() != 32 + 16 * n {
        return None;
    }
    let floats: Vec<f64> = bytes[32..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (lp, lph) = floats.split_at(n);
    PathTable::from_parts(t, letters, lp.to_vec(), lph.to_vec()).ok()
}

/// Size the global thread pool from the environment, once.
pub fn configure_workers() {
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qmep::instrument::bernoulli;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let disk = DiskCache::new(dir.path());
        let p = bernoulli(0.7).unwrap();
        let cache = PathCache::new(&p, 1 << 20);
        let original = cache.table(5).unwrap();
        disk.store(&cache).unwrap();
        let fresh = PathCache::new(&p, 1 << 20);
        assert_eq!(disk.preload(&fresh, 6).unwrap(), 1);
        let loaded = fresh.table(5).unwrap();
        assert_eq!(loaded.log_p(), original.log_p());
        assert_eq!(loaded.log_p_hat(), original.log_p_hat());
    }
}
