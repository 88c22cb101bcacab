//! Checkpoint container: little-endian binary with a fixed header (magic,
//! version, layer-width table, frame count, latent dim) followed by flat
//! 32-bit float tensors in declaration order. A sibling manifest JSON records
//! byte offsets for external tooling; loading reads the binary alone.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"LCFIELD1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub step: u64,
    pub seed: u64,
    pub num_frames: u32,
    pub latent_dim: u32,
    /// Layer widths of every network, in declaration order.
    pub widths: Vec<Vec<u32>>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestTensor {
    name: String,
    offset_bytes: u64,
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    config_hash: u64,
    step: u64,
    seed: u64,
    num_frames: u32,
    latent_dim: u32,
    widths: Vec<Vec<u32>>,
    tensors: Vec<ManifestTensor>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Result<&[f32]> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.data.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&self.config_hash.to_le_bytes());
        buf.extend_from_slice(&self.step.to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&self.num_frames.to_le_bytes());
        buf.extend_from_slice(&self.latent_dim.to_le_bytes());
        buf.extend_from_slice(&(self.widths.len() as u32).to_le_bytes());
        for w in &self.widths {
            buf.extend_from_slice(&(w.len() as u32).to_le_bytes());
            for &d in w {
                buf.extend_from_slice(&d.to_le_bytes());
            }
        }
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            let name = t.name.as_bytes();
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name);
            buf.extend_from_slice(&(t.data.len() as u64).to_le_bytes());
        }
        let mut manifest = Manifest {
            version: VERSION,
            config_hash: self.config_hash,
            step: self.step,
            seed: self.seed,
            num_frames: self.num_frames,
            latent_dim: self.latent_dim,
            widths: self.widths.clone(),
            tensors: Vec::with_capacity(self.tensors.len()),
        };
        for t in &self.tensors {
            manifest.tensors.push(ManifestTensor {
                name: t.name.clone(),
                offset_bytes: buf.len() as u64,
                len: t.data.len() as u64,
            });
            for &v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        f.sync_all()?;
        let mj = serde_json::to_string_pretty(&manifest)?;
        fs::write(manifest_path(path), mj)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = Reader { bytes: &bytes, at: 0 };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic in {}: expected {:02x?}, found {:02x?}",
                path.display(),
                MAGIC,
                magic
            )));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version} (expected {VERSION})"
            )));
        }
        let config_hash = r.u64()?;
        let step = r.u64()?;
        let seed = r.u64()?;
        let num_frames = r.u32()?;
        let latent_dim = r.u32()?;
        let n_widths = r.u32()? as usize;
        let mut widths = Vec::with_capacity(n_widths);
        for _ in 0..n_widths {
            let n = r.u32()? as usize;
            let mut w = Vec::with_capacity(n);
            for _ in 0..n {
                w.push(r.u32()?);
            }
            widths.push(w);
        }
        let n_tensors = r.u32()? as usize;
        let mut names = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let nl = r.u32()? as usize;
            let name = String::from_utf8(r.take(nl)?.to_vec())
                .map_err(|e| Error::Checkpoint(format!("tensor name not utf8: {e}")))?;
            let len = r.u64()? as usize;
            names.push((name, len));
        }
        let mut tensors = Vec::with_capacity(n_tensors);
        for (name, len) in names {
            let raw = r.take(len * 4)?;
            let mut data = Vec::with_capacity(len);
            for c in raw.chunks_exact(4) {
                data.push(f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
            }
            tensors.push(TensorEntry { name, data });
        }
        if r.at != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "trailing bytes: read {} of {}",
                r.at,
                bytes.len()
            )));
        }
        Ok(Checkpoint {
            config_hash,
            step,
            seed,
            num_frames,
            latent_dim,
            widths,
            tensors,
        })
    }

    /// Load and refuse mismatched config identity, as resuming under a
    /// different configuration would silently corrupt training.
    pub fn load_expecting(path: &Path, config_hash: u64) -> Result<Checkpoint> {
        let ck = Self::load(path)?;
        if ck.config_hash != config_hash {
            return Err(Error::Checkpoint(format!(
                "config hash mismatch: checkpoint {:016x}, current {:016x}",
                ck.config_hash, config_hash
            )));
        }
        Ok(ck)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated: need {} bytes at offset {}, have {}",
                n,
                self.at,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }
}
