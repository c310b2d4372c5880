//! Data products: probe traces (CSV), field snapshots (raw little-endian
//! `f64` with a JSON sidecar) and the run manifest (JSON).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tearfilm::{HaltReason, ProbeTrace, Quantity};

use crate::config::{Mode, RunConfig};

pub const TRACE_HEADER: [&str; 10] =
    ["t", "h", "p", "c", "f", "I", "advection", "diffusion", "evaporation", "osmosis"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// An output directory that remembers what was written into it.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    fn record(&mut self, rel: &str) -> Result<()> {
        let bytes = fs::read(self.root.join(rel))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry { path: rel.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        Ok(())
    }

    /// Writes a CSV with `header` and one row per entry of `rows`.
    pub fn csv<R: AsRef<[String]>>(&mut self, rel: &str, header: &[&str], rows: &[R]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(rel)?)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.as_ref())?;
        }
        w.flush()?;
        self.record(rel)
    }

    /// Probe trace with the standard header.
    pub fn trace(&mut self, rel: &str, tr: &ProbeTrace) -> Result<()> {
        let get = |v: &[f64], k: usize| v.get(k).map_or(String::new(), |x| num(*x));
        let rows: Vec<Vec<String>> = (0..tr.t.len())
            .map(|k| {
                vec![
                    num(tr.t[k]),
                    num(tr.h[k]),
                    num(tr.p[k]),
                    num(tr.c[k]),
                    get(&tr.f, k),
                    get(&tr.intensity, k),
                    num(tr.advection[k]),
                    num(tr.diffusion[k]),
                    num(tr.evaporation[k]),
                    num(tr.osmosis[k]),
                ]
            })
            .collect();
        self.csv(rel, &TRACE_HEADER, &rows)
    }

    /// `<stem>.bin` plus `<stem>.json`.
    pub fn snapshot(&mut self, stem: &str, meta: &SnapshotMeta, data: &[f64]) -> Result<()> {
        if data.len() != meta.len {
            bail!("snapshot {stem}: {} values, sidecar says {}", data.len(), meta.len);
        }
        let bin = format!("{stem}.bin");
        let mut w = BufWriter::new(fs::File::create(self.path(&bin)?)?);
        for x in data {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        drop(w);
        self.record(&bin)?;
        let side = format!("{stem}.json");
        fs::write(self.path(&side)?, serde_json::to_string_pretty(meta)?)?;
        self.record(&side)
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        fs::write(self.path(rel)?, serde_json::to_string_pretty(value)?)?;
        self.record(rel)
    }

    pub fn raw(&mut self, rel: &str, write: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<()> {
        let mut f = fs::File::create(self.path(rel)?)?;
        write(&mut f)?;
        f.flush()?;
        self.record(rel)
    }

    /// Writes `manifest.json` through a temporary file and a rename.
    pub fn finish(self, mut manifest: Manifest) -> Result<Manifest> {
        manifest.files = self.files;
        let tmp = self.root.join("manifest.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&manifest)?)?;
        fs::rename(&tmp, self.root.join("manifest.json"))?;
        Ok(manifest)
    }
}

/// Shortest representation that reads back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub nx: usize,
    pub ny: usize,
    pub len: usize,
    pub variable: String,
    pub t: f64,
    pub byte_order: String,
    pub dtype: String,
    /// Node coordinates for radial profiles, absent on periodic grids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<Vec<f64>>,
}

impl SnapshotMeta {
    pub fn grid(nx: usize, ny: usize, variable: &str, t: f64) -> Self {
        Self {
            nx,
            ny,
            len: nx * ny,
            variable: variable.to_string(),
            t,
            byte_order: "little".into(),
            dtype: "float64".into(),
            radius: None,
        }
    }

    pub fn radial(nodes: &[f64], variable: &str, t: f64) -> Self {
        Self { nx: nodes.len(), ny: 1, radius: Some(nodes.to_vec()), ..Self::grid(nodes.len(), 1, variable, t) }
    }
}

/// Reads a snapshot written by [`OutputDir::snapshot`], given either file.
pub fn read_snapshot(path: &Path) -> Result<(SnapshotMeta, Vec<f64>)> {
    let bin = path.with_extension("bin");
    let meta: SnapshotMeta = serde_json::from_slice(&fs::read(path.with_extension("json"))?)?;
    let bytes = fs::read(&bin).with_context(|| format!("reading {}", bin.display()))?;
    if meta.byte_order != "little" || meta.dtype != "float64" {
        bail!("unsupported snapshot encoding {} {}", meta.byte_order, meta.dtype);
    }
    if bytes.len() != 8 * meta.len {
        bail!("{}: {} bytes, expected {}", bin.display(), bytes.len(), 8 * meta.len);
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((meta, data))
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub code_version: String,
    pub mode: Mode,
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub tbut: Option<f64>,
    pub tbut_dimensional: Option<Quantity>,
    pub halted: Option<HaltReason>,
    /// Mode-specific numbers (solver statistics, timings, errors).
    pub summary: serde_json::Value,
    pub files: Vec<FileEntry>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}
