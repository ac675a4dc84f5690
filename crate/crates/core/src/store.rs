//! Embedding records and the CPEM binary store format.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "CPEM" | version u16 | flags u16 | dim_d u32 | patches_m u32
//! | class_count u32 | record_count u64
//! | per record: record_id u64, label u32, class f32 x dim_d,
//!   patches f32 x (patches_m * dim_d)
//! | if flags bit 0: per record, count u16 then count x u16 indices
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const STORE_MAGIC: [u8; 4] = *b"CPEM";
pub const STORE_VERSION: u16 = 1;
pub const FLAG_GROUND_TRUTH: u16 = 1;
/// Bytes before the first record.
pub const STORE_HEADER_LEN: usize = 4 + 2 + 2 + 4 + 4 + 4 + 8;

/// One image: its class embedding and `M` patch embeddings of width `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub record_id: u64,
    pub label: u32,
    pub class_embedding: Vec<f64>,
    /// Row-major `M x D`.
    pub patch_embeddings: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn new(
        record_id: u64,
        label: u32,
        class_embedding: Vec<f64>,
        patches: &[Vec<f64>],
    ) -> Result<Self> {
        let dim = class_embedding.len();
        let mut flat = Vec::with_capacity(patches.len() * dim);
        for p in patches {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            flat.extend_from_slice(p);
        }
        Ok(Self {
            record_id,
            label,
            class_embedding,
            patch_embeddings: flat,
        })
    }

    pub fn dim(&self) -> usize {
        self.class_embedding.len()
    }

    pub fn patch_count(&self) -> usize {
        match self.dim() {
            0 => 0,
            d => self.patch_embeddings.len() / d,
        }
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.patch_embeddings[i * d..(i + 1) * d]
    }

    pub fn patches(&self) -> impl Iterator<Item = &[f64]> {
        self.patch_embeddings.chunks_exact(self.dim().max(1))
    }

    fn is_finite(&self) -> bool {
        self.class_embedding
            .iter()
            .chain(&self.patch_embeddings)
            .all(|v| v.is_finite())
    }

    /// Copy with every value rounded through `f32`, i.e. what a store file
    /// holds.
    pub fn quantized(&self) -> Self {
        let q = |v: &Vec<f64>| v.iter().map(|&x| x as f32 as f64).collect();
        Self {
            record_id: self.record_id,
            label: self.label,
            class_embedding: q(&self.class_embedding),
            patch_embeddings: q(&self.patch_embeddings),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    patches_m: usize,
    class_count: usize,
    records: Vec<EmbeddingRecord>,
    ground_truth: Option<Vec<Vec<u16>>>,
}

impl EmbeddingStore {
    /// Validates shapes, labels, finiteness, class coverage, and the
    /// optional ground-truth section.
    pub fn new(
        dim: usize,
        patches_m: usize,
        class_count: usize,
        records: Vec<EmbeddingRecord>,
        ground_truth: Option<Vec<Vec<u16>>>,
    ) -> Result<Self> {
        if dim > u32::MAX as usize || patches_m > u16::MAX as usize + 1 {
            return Err(Error::InvalidStore("dimensions too large".into()));
        }
        let mut seen = vec![false; class_count];
        for r in &records {
            if r.dim() != dim {
                return Err(Error::InvalidStore(format!(
                    "record {} has dim {}, store dim is {dim}",
                    r.record_id,
                    r.dim()
                )));
            }
            if r.patch_embeddings.len() != patches_m * dim {
                return Err(Error::InvalidStore(format!(
                    "record {} has {} patch values, expected {}",
                    r.record_id,
                    r.patch_embeddings.len(),
                    patches_m * dim
                )));
            }
            let label = r.label as usize;
            if label >= class_count {
                return Err(Error::InvalidStore(format!(
                    "record {} has label {label} >= class count {class_count}",
                    r.record_id
                )));
            }
            if !r.is_finite() {
                return Err(Error::NonFiniteValue("record embeddings"));
            }
            seen[label] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidStore(format!("class {c} has no records")));
        }
        let ids: BTreeSet<u64> = records.iter().map(|r| r.record_id).collect();
        if ids.len() != records.len() {
            return Err(Error::InvalidStore("duplicate record ids".into()));
        }
        if let Some(gt) = &ground_truth {
            if gt.len() != records.len() {
                return Err(Error::InvalidStore(format!(
                    "{} ground-truth entries for {} records",
                    gt.len(),
                    records.len()
                )));
            }
            for set in gt {
                let distinct: BTreeSet<u16> = set.iter().copied().collect();
                if distinct.len() != set.len() || set.iter().any(|&i| i as usize >= patches_m) {
                    return Err(Error::InvalidStore("malformed ground-truth indices".into()));
                }
            }
        }
        Ok(Self {
            dim,
            patches_m,
            class_count,
            records,
            ground_truth,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn patches_m(&self) -> usize {
        self.patches_m
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn ground_truth(&self) -> Option<&[Vec<u16>]> {
        self.ground_truth.as_deref()
    }

    pub fn position_of(&self, record_id: u64) -> Option<usize> {
        self.records.iter().position(|r| r.record_id == record_id)
    }

    /// Store after one `f64 -> f32 -> f64` round trip.
    pub fn quantized(&self) -> Self {
        Self {
            records: self.records.iter().map(EmbeddingRecord::quantized).collect(),
            ..self.clone()
        }
    }

    /// Record indices grouped by label.
    pub fn records_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.class_count];
        for (i, r) in self.records.iter().enumerate() {
            by_class[r.label as usize].push(i);
        }
        by_class
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<u64> {
        let mut w = BufWriter::new(File::create(path)?);
        let n = write_store(self, &mut w)?;
        w.flush()?;
        Ok(n)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_store(BufReader::new(File::open(path)?))
    }
}

/// Serializes `store` in CPEM format, returning the number of bytes written.
pub fn write_store<W: Write>(store: &EmbeddingStore, mut out: W) -> Result<u64> {
    let flags = if store.ground_truth.is_some() {
        FLAG_GROUND_TRUTH
    } else {
        0
    };
    let mut buf = Vec::with_capacity(STORE_HEADER_LEN);
    buf.extend_from_slice(&STORE_MAGIC);
    buf.extend_from_slice(&STORE_VERSION.to_le_bytes());
    buf.extend_from_slice(&flags.to_le_bytes());
    buf.extend_from_slice(&(store.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(store.patches_m as u32).to_le_bytes());
    buf.extend_from_slice(&(store.class_count as u32).to_le_bytes());
    buf.extend_from_slice(&(store.records.len() as u64).to_le_bytes());
    out.write_all(&buf)?;
    let mut written = buf.len() as u64;

    for r in &store.records {
        buf.clear();
        buf.extend_from_slice(&r.record_id.to_le_bytes());
        buf.extend_from_slice(&r.label.to_le_bytes());
        for &v in r.class_embedding.iter().chain(&r.patch_embeddings) {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
        written += buf.len() as u64;
    }

    if let Some(gt) = &store.ground_truth {
        for set in gt {
            buf.clear();
            buf.extend_from_slice(&(set.len() as u16).to_le_bytes());
            for &i in set {
                buf.extend_from_slice(&i.to_le_bytes());
            }
            out.write_all(&buf)?;
            written += buf.len() as u64;
        }
    }
    Ok(written)
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn exact<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(truncation)?;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16> {
        self.exact().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        self.exact().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.exact().map(u64::from_le_bytes)
    }

    fn f32s(&mut self, n: usize, scratch: &mut Vec<u8>) -> Result<Vec<f64>> {
        scratch.resize(n * 4, 0);
        self.inner.read_exact(scratch).map_err(truncation)?;
        scratch
            .chunks_exact(4)
            .map(|c| {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if v.is_finite() {
                    Ok(f64::from(v))
                } else {
                    Err(Error::NonFiniteValue("stored embedding"))
                }
            })
            .collect()
    }
}

fn truncation(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::TruncatedFile
    } else {
        Error::Io(e)
    }
}

/// Parses a CPEM store, validating magic, version, section sizes, and that
/// no bytes follow the last section.
pub fn read_store<R: Read>(source: R) -> Result<EmbeddingStore> {
    let mut cur = Cursor { inner: source };
    let magic: [u8; 4] = cur.exact()?;
    if magic != STORE_MAGIC {
        return Err(Error::BadMagic {
            expected: STORE_MAGIC,
            found: magic,
        });
    }
    let version = cur.u16()?;
    if version != STORE_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let flags = cur.u16()?;
    let dim = cur.u32()? as usize;
    let patches_m = cur.u32()? as usize;
    let class_count = cur.u32()? as usize;
    let record_count = cur.u64()?;

    let mut scratch = Vec::new();
    let mut records = Vec::new();
    for _ in 0..record_count {
        let record_id = cur.u64()?;
        let label = cur.u32()?;
        let class_embedding = cur.f32s(dim, &mut scratch)?;
        let patch_embeddings = cur.f32s(patches_m * dim, &mut scratch)?;
        records.push(EmbeddingRecord {
            record_id,
            label,
            class_embedding,
            patch_embeddings,
        });
    }

    let ground_truth = if flags & FLAG_GROUND_TRUTH != 0 {
        let mut gt = Vec::with_capacity(records.len());
        for _ in 0..record_count {
            let n = cur.u16()? as usize;
            let set = (0..n).map(|_| cur.u16()).collect::<Result<Vec<_>>>()?;
            gt.push(set);
        }
        Some(gt)
    } else {
        None
    };

    let mut rest = Vec::new();
    cur.inner.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::TrailingData(rest.len()));
    }

    EmbeddingStore::new(dim, patches_m, class_count, records, ground_truth)
}
