//! `.hcf` feature archives: per-frame, per-layer full-frame feature stacks.
//!
//! Layout (little-endian):
//!
//! ```text
//! header:  b"HCFT"  version: u32 = 1  record_count: u32
//! record:  frame_index: u32  id_len: u8  layer_id: [u8; id_len] (ASCII)
//!          m: u32  n: u32  d: u32  values: [f32; m * n * d]
//! ```
//!
//! Values are channel-planar, each plane row-major (`n` rows of `m`).
//! Records are sorted by `(frame_index, layer_id)`; frame indices are 1-based.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

pub const MAGIC: &[u8; 4] = b"HCFT";
pub const VERSION: u32 = 1;

/// One stored layer of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveRecord {
    pub frame_index: u32,
    pub features: FeatureMap,
}

#[derive(Debug, Clone, Copy)]
struct RecordInfo {
    offset: u64,
    m: usize,
    n: usize,
    d: usize,
}

/// Read-only index over an archive on disk. Records are loaded on demand,
/// so one archive can be shared between readers.
#[derive(Debug, Clone)]
pub struct FeatureArchive {
    path: PathBuf,
    index: BTreeMap<(u32, String), RecordInfo>,
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated archive".into())
    } else {
        Error::Io(e)
    }
}

impl FeatureArchive {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path)?;
        let file_len = file.metadata()?.len();
        let mut r = BufReader::new(file);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r).map_err(truncated)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let count = read_u32(&mut r).map_err(truncated)?;

        let mut index = BTreeMap::new();
        let mut pos: u64 = 12;
        let mut last: Option<(u32, String)> = None;
        for i in 0..count {
            let frame = read_u32(&mut r).map_err(truncated)?;
            let mut len = [0u8; 1];
            r.read_exact(&mut len).map_err(truncated)?;
            let mut id = vec![0u8; len[0] as usize];
            r.read_exact(&mut id).map_err(truncated)?;
            if id.is_empty() || !id.is_ascii() {
                return Err(Error::Format(format!("record {i}: layer id is not ASCII")));
            }
            let layer = String::from_utf8(id).expect("ascii is utf-8");
            let (m, n, d) = (
                read_u32(&mut r).map_err(truncated)? as usize,
                read_u32(&mut r).map_err(truncated)? as usize,
                read_u32(&mut r).map_err(truncated)? as usize,
            );
            if m == 0 || n == 0 || d == 0 {
                return Err(Error::Format(format!("record {i}: empty dims {m}x{n}x{d}")));
            }
            let bytes = (m as u64)
                .checked_mul(n as u64)
                .and_then(|v| v.checked_mul(d as u64))
                .and_then(|v| v.checked_mul(4))
                .ok_or_else(|| Error::Format(format!("record {i}: dims overflow")))?;
            pos += 4 + 1 + layer.len() as u64 + 12;
            if pos + bytes > file_len {
                return Err(Error::Format(format!("record {i}: truncated values")));
            }
            let key = (frame, layer);
            if last.as_ref().is_some_and(|prev| prev >= &key) {
                return Err(Error::Format(format!(
                    "record {i} ({}, {}) out of order",
                    key.0, key.1
                )));
            }
            index.insert(key.clone(), RecordInfo { offset: pos, m, n, d });
            last = Some(key);
            pos += bytes;
            r.seek(SeekFrom::Start(pos))?;
        }
        if pos != file_len {
            return Err(Error::Format(format!(
                "{} trailing bytes after {count} records",
                file_len - pos
            )));
        }
        Ok(Self { path, index })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record_count(&self) -> usize {
        self.index.len()
    }

    /// Distinct layer ids, ascending.
    pub fn layer_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.index.keys().map(|(_, l)| l.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn frames(&self) -> Vec<u32> {
        let mut f: Vec<u32> = self.index.keys().map(|(f, _)| *f).collect();
        f.dedup();
        f
    }

    pub fn contains(&self, frame: u32, layer: &str) -> bool {
        self.index.contains_key(&(frame, layer.to_string()))
    }

    /// Dimensions `(m, n, d)` of a stored record.
    pub fn dims(&self, frame: u32, layer: &str) -> Option<(usize, usize, usize)> {
        self.index
            .get(&(frame, layer.to_string()))
            .map(|r| (r.m, r.n, r.d))
    }

    pub fn load(&self, frame: u32, layer: &str) -> Result<FeatureMap> {
        let info = self
            .index
            .get(&(frame, layer.to_string()))
            .ok_or_else(|| Error::FeatureMissing {
                frame,
                layer: layer.to_string(),
            })?;
        let mut file = File::open(&self.path)?;
        file.seek(SeekFrom::Start(info.offset))?;
        let mut raw = vec![0u8; info.m * info.n * info.d * 4];
        file.read_exact(&mut raw).map_err(truncated)?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite value in frame {frame}, layer {layer}"
            )));
        }
        FeatureMap::new(layer, info.m, info.n, info.d, values)
    }
}

/// Serialize records in archive order (sorted by frame, then layer id).
pub fn encode_archive(records: &[ArchiveRecord], out: &mut impl Write) -> Result<()> {
    let mut sorted: Vec<&ArchiveRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.frame_index, a.features.layer_id()).cmp(&(b.frame_index, b.features.layer_id()))
    });
    for pair in sorted.windows(2) {
        if (pair[0].frame_index, pair[0].features.layer_id())
            == (pair[1].frame_index, pair[1].features.layer_id())
        {
            return Err(Error::Format(format!(
                "duplicate record for frame {}, layer {}",
                pair[0].frame_index,
                pair[0].features.layer_id()
            )));
        }
    }
    let count = u32::try_from(sorted.len())
        .map_err(|_| Error::Format("too many records".into()))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&count.to_le_bytes())?;
    for rec in sorted {
        let fm = &rec.features;
        let id = fm.layer_id().as_bytes();
        if id.is_empty() || id.len() > u8::MAX as usize || !id.is_ascii() {
            return Err(Error::Format(format!("layer id `{}` not storable", fm.layer_id())));
        }
        out.write_all(&rec.frame_index.to_le_bytes())?;
        out.write_all(&[id.len() as u8])?;
        out.write_all(id)?;
        for dim in [fm.m(), fm.n(), fm.d()] {
            let dim = u32::try_from(dim).map_err(|_| Error::Format("dimension too large".into()))?;
            out.write_all(&dim.to_le_bytes())?;
        }
        for v in fm.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_archive(path: impl AsRef<Path>, records: &[ArchiveRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_archive(records, &mut w)?;
    w.flush()?;
    Ok(())
}
