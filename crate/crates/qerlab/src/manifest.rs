//! Run manifests and on-disk artifact formats: sha256-accounted outputs, the
//! binary eigenpair container, and CSV emitters.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Domain;
use crate::spectral::{Grid, Parity, SpectralBatch};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed container {path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error(
        "missing upstream artifact {path}: run the `{subcommand}` subcommand first"
    )]
    MissingUpstream { path: String, subcommand: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Stable content hash of the domain, used to bind artifacts to their run.
pub fn domain_hash(domain: &Domain) -> [u8; 32] {
    let json = serde_json::to_string(domain).expect("domain serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hasher.finalize().into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub subcommand: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_secs: f64,
    pub outputs: Vec<OutputEntry>,
}

impl Manifest {
    pub fn new(subcommand: &str, config_text: &str, seed: u64, threads: usize) -> Manifest {
        Manifest {
            schema_version: 1,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            threads,
            wall_time_secs: 0.0,
            outputs: Vec::new(),
        }
    }

    /// Record an already-written artifact with its content hash.
    pub fn account(&mut self, path: &Path) -> Result<(), ManifestError> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        self.outputs.push(OutputEntry {
            path: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, ManifestError> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json).map_err(io_err(&path))?;
        Ok(path)
    }
}

/// Write a text artifact and account for it in the manifest.
pub fn emit(
    manifest: &mut Manifest,
    dir: &Path,
    name: &str,
    contents: &str,
) -> Result<PathBuf, ManifestError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(io_err(&path))?;
    manifest.account(&path)?;
    Ok(path)
}

const BATCH_MAGIC: &[u8; 8] = b"QERBATCH";
const BATCH_VERSION: u32 = 1;

/// Binary eigenpair container: fixed header (magic, version, domain hash,
/// grid spacing, mode count, grid geometry), interior-node mask, then a
/// little-endian f64 payload of eigenvalues, residuals, parities, and
/// grid-sampled eigenvectors.
pub fn save_batch(
    path: &Path,
    domain: &Domain,
    batch: &SpectralBatch,
) -> Result<(), ManifestError> {
    let g = &batch.grid;
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(BATCH_MAGIC);
    buf.extend_from_slice(&BATCH_VERSION.to_le_bytes());
    buf.extend_from_slice(&domain_hash(domain));
    buf.extend_from_slice(&g.h.to_le_bytes());
    buf.extend_from_slice(&(batch.len() as u64).to_le_bytes());
    buf.extend_from_slice(&g.x0.to_le_bytes());
    buf.extend_from_slice(&g.y0.to_le_bytes());
    buf.extend_from_slice(&(g.nx as u64).to_le_bytes());
    buf.extend_from_slice(&(g.ny as u64).to_le_bytes());
    buf.extend_from_slice(&g.mirror_m.to_le_bytes());
    buf.extend_from_slice(&(g.len() as u64).to_le_bytes());
    for &(ix, iy) in &g.points {
        buf.extend_from_slice(&ix.to_le_bytes());
        buf.extend_from_slice(&iy.to_le_bytes());
    }
    for v in &batch.eigenvalues {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in &batch.residuals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for p in &batch.parity {
        buf.push(match p {
            Parity::Even => 0,
            Parity::Odd => 1,
            Parity::Mixed => 2,
        });
    }
    for vec in &batch.vectors {
        for v in vec {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))?;
    Ok(())
}

struct Reader<'a> {
    path: &'a Path,
    buf: Vec<u8>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&[u8], ManifestError> {
        if self.pos + n > self.buf.len() {
            return Err(ManifestError::Malformed {
                path: self.path.display().to_string(),
                reason: "truncated".into(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn f64(&mut self) -> Result<f64, ManifestError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ManifestError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, ManifestError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Load an eigenpair container, checking it was produced for `domain`.
pub fn load_batch(path: &Path, domain: &Domain) -> Result<SpectralBatch, ManifestError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut buf)
        .map_err(io_err(path))?;
    let mut r = Reader { path, buf, pos: 0 };
    let malformed = |reason: &str| ManifestError::Malformed {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if r.take(8)? != BATCH_MAGIC {
        return Err(malformed("bad magic"));
    }
    if r.u32()? != BATCH_VERSION {
        return Err(malformed("unsupported version"));
    }
    let hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    if hash != domain_hash(domain) {
        return Err(malformed("container was produced for a different domain"));
    }
    let h = r.f64()?;
    let m = r.u64()? as usize;
    let x0 = r.f64()?;
    let y0 = r.f64()?;
    let nx = r.u64()? as usize;
    let ny = r.u64()? as usize;
    let mirror_m = i64::from_le_bytes(r.take(8)?.try_into().unwrap());
    let n = r.u64()? as usize;
    let mut points = Vec::with_capacity(n);
    let mut index = vec![-1i32; nx * ny];
    for l in 0..n {
        let ix = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        let iy = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        points.push((ix, iy));
        let flat = iy as usize * nx + ix as usize;
        if flat >= index.len() {
            return Err(malformed("mask index out of bounds"));
        }
        index[flat] = l as i32;
    }
    let grid = Grid {
        h,
        x0,
        y0,
        nx,
        ny,
        index,
        points,
        mirror_m,
    };
    let mut eigenvalues = Vec::with_capacity(m);
    for _ in 0..m {
        eigenvalues.push(r.f64()?);
    }
    let mut residuals = Vec::with_capacity(m);
    for _ in 0..m {
        residuals.push(r.f64()?);
    }
    let mut parity = Vec::with_capacity(m);
    for _ in 0..m {
        parity.push(match r.take(1)?[0] {
            0 => Parity::Even,
            1 => Parity::Odd,
            2 => Parity::Mixed,
            _ => return Err(malformed("bad parity tag")),
        });
    }
    let mut vectors = Vec::with_capacity(m);
    for _ in 0..m {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(r.f64()?);
        }
        vectors.push(v);
    }
    let frequencies = eigenvalues.iter().map(|&e: &f64| e.max(0.0).sqrt()).collect();
    Ok(SpectralBatch {
        grid,
        eigenvalues,
        frequencies,
        vectors,
        residuals,
        parity,
    })
}

/// Guard for subcommands that consume artifacts of an earlier stage.
pub fn require_upstream(dir: &Path, name: &str, subcommand: &str) -> Result<PathBuf, ManifestError> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(ManifestError::MissingUpstream {
            path: path.display().to_string(),
            subcommand: subcommand.to_string(),
        })
    }
}

/// Deterministic float formatting for CSV artifacts.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}
