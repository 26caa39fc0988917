//! Studentized-range quantiles by Monte Carlo table.
//!
//! Quantiles are estimated from 10^6 draws of `(max - min of k standard
//! normals) / sqrt(chi2_df / df)` per `(level, k, df)` cell, which is the
//! definition itself; accuracy is about +/-0.02, sufficient for
//! simulation-level claims. Cells are cached in memory and optionally in a
//! versioned tab-separated file keyed by `(level, k, df)`, regenerated when
//! absent or stale. The generating seed is fixed and recorded in the file
//! header, so every cell is reproducible regardless of cache state.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::rng::rng_stream;

const FORMAT_VERSION: u32 = 1;
const DRAWS: usize = 1_000_000;
// Fixed generating seed; recorded in the cache header.
const SRANGE_SEED: u64 = 0x7372_616e_6765_3031;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct CellKey {
    level_bits: u64,
    k: usize,
    df_bits: u64,
}

impl CellKey {
    fn new(level: f64, k: usize, df: f64) -> Self {
        CellKey {
            level_bits: level.to_bits(),
            k,
            df_bits: df.to_bits(),
        }
    }
}

/// Cache of Monte Carlo studentized-range quantiles.
///
/// Read-mostly; a cell is computed once under the interior lock on first
/// use and shared afterwards.
pub struct SrangeTable {
    path: Option<PathBuf>,
    cells: Mutex<HashMap<CellKey, f64>>,
}

impl SrangeTable {
    /// Table without disk backing.
    pub fn in_memory() -> Self {
        SrangeTable {
            path: None,
            cells: Mutex::new(HashMap::new()),
        }
    }

    /// Table backed by a cache file; existing entries are loaded when the
    /// header (version, draw count, seed) matches, otherwise the file is
    /// regenerated from scratch as cells are requested.
    pub fn with_cache_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut cells = HashMap::new();
        match fs::read_to_string(&path) {
            Ok(text) => {
                if let Some(parsed) = parse_cache(&text) {
                    cells = parsed;
                } else {
                    // stale or foreign file: start over
                    write_header(&path)
                        .map_err(|e| Error::Numerical(format!("srange cache: {e}")))?;
                }
            }
            Err(_) => {
                write_header(&path).map_err(|e| Error::Numerical(format!("srange cache: {e}")))?;
            }
        }
        Ok(SrangeTable {
            path: Some(path),
            cells: Mutex::new(cells),
        })
    }

    /// Upper-`level` quantile of the studentized range of `k` means with
    /// `df` error degrees of freedom.
    pub fn quantile(&self, level: f64, k: usize, df: f64) -> f64 {
        assert!(k >= 2, "studentized range needs k >= 2");
        assert!(df > 0.0, "degrees of freedom must be positive");
        assert!(level > 0.0 && level < 1.0, "level must be in (0,1)");
        let key = CellKey::new(level, k, df);
        let mut cells = self.cells.lock().unwrap();
        if let Some(&q) = cells.get(&key) {
            return q;
        }
        let q = simulate_cell(level, k, df);
        cells.insert(key, q);
        if let Some(ref path) = self.path {
            // best-effort append; the value is already served from memory
            let _ = append_cell(path, level, k, df, q);
        }
        q
    }
}

/// Convenience entry point backed by a process-wide in-memory table.
pub fn studentized_range_quantile(level: f64, k: usize, df: f64) -> f64 {
    static GLOBAL: OnceLock<SrangeTable> = OnceLock::new();
    GLOBAL.get_or_init(SrangeTable::in_memory).quantile(level, k, df)
}

fn cell_stream_id(level: f64, k: usize, df: f64) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for v in [level.to_bits(), k as u64, df.to_bits()] {
        h ^= v;
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 27;
        h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

fn simulate_cell(level: f64, k: usize, df: f64) -> f64 {
    let mut rng = rng_stream(SRANGE_SEED, cell_stream_id(level, k, df));
    let mut draws = Vec::with_capacity(DRAWS);
    for _ in 0..DRAWS {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..k {
            let z = rng.standard_normal();
            lo = lo.min(z);
            hi = hi.max(z);
        }
        let s = (rng.chi_square(df) / df).sqrt();
        draws.push((hi - lo) / s);
    }
    draws.sort_unstable_by(f64::total_cmp);
    let idx = ((DRAWS as f64) * (1.0 - level)) as usize;
    draws[idx.min(DRAWS - 1)]
}

fn header_line() -> String {
    format!("# srange-table v{FORMAT_VERSION} draws={DRAWS} seed={SRANGE_SEED}")
}

fn write_header(path: &Path) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut f = fs::File::create(path)?;
    writeln!(f, "{}", header_line())?;
    writeln!(f, "# level\tk\tdf\tquantile")?;
    Ok(())
}

fn append_cell(path: &Path, level: f64, k: usize, df: f64, q: f64) -> std::io::Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{level}\t{k}\t{df}\t{q}")
}

fn parse_cache(text: &str) -> Option<HashMap<CellKey, f64>> {
    let mut lines = text.lines();
    if lines.next()? != header_line() {
        return None;
    }
    let mut cells = HashMap::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let level: f64 = parts.next()?.parse().ok()?;
        let k: usize = parts.next()?.parse().ok()?;
        let df: f64 = parts.next()?.parse().ok()?;
        let q: f64 = parts.next()?.parse().ok()?;
        cells.insert(CellKey::new(level, k, df), q);
    }
    Some(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::normal_quantile;

    #[test]
    fn k2_large_df_reduces_to_normal_quantile() {
        // q(0.05, 2, inf) = sqrt(2) * z_{0.975} = 2.772
        let q = studentized_range_quantile(0.05, 2, 1e6);
        let expected = std::f64::consts::SQRT_2 * normal_quantile(0.975);
        assert!((q - expected).abs() < 0.01, "q={q} expected={expected}");
    }

    #[test]
    fn quantile_increases_with_k() {
        let table = SrangeTable::in_memory();
        let mut prev = 0.0;
        for k in 2..=10 {
            let q = table.quantile(0.05, k, 10.0);
            assert!(q > prev, "k={k}: {q} <= {prev}");
            prev = q;
        }
    }

    #[test]
    fn repeated_lookups_are_identical() {
        let table = SrangeTable::in_memory();
        let a = table.quantile(0.05, 3, 12.0);
        let b = table.quantile(0.05, 3, 12.0);
        assert_eq!(a, b);
        // and across tables (fixed generating seed)
        let other = SrangeTable::in_memory();
        assert_eq!(a, other.quantile(0.05, 3, 12.0));
    }

    #[test]
    fn cache_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("srange.tsv");
        let q1 = {
            let table = SrangeTable::with_cache_file(&path).unwrap();
            table.quantile(0.05, 4, 20.0)
        };
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# srange-table v1"));
        assert!(text.lines().any(|l| l.starts_with("0.05\t4\t20")));
        // reload parses the same value without recomputation
        let table = SrangeTable::with_cache_file(&path).unwrap();
        assert_eq!(table.quantile(0.05, 4, 20.0), q1);
    }

    #[test]
    fn stale_cache_is_regenerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("srange.tsv");
        fs::write(&path, "# srange-table v0 draws=10 seed=1\n0.05\t3\t10\t99.0\n").unwrap();
        let table = SrangeTable::with_cache_file(&path).unwrap();
        let q = table.quantile(0.05, 3, 10.0);
        assert!(q < 10.0, "stale value must not be served: {q}");
    }
}
