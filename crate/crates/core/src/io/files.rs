//! Binary checkpoint and path files. All integers and floats are
//! little-endian; floats are stored as raw IEEE-754 bits, so round-trips are
//! bit-exact.
//!
//! Checkpoint (`S` = spec block length, `n` = parameter count):
//!
//! | offset      | size | field                              |
//! |-------------|------|------------------------------------|
//! | 0           | 4    | magic `GWCK`                       |
//! | 4           | 4    | u32 format version                 |
//! | 8           | 4    | u32 flattening order               |
//! | 12          | 4    | u32 `S`                            |
//! | 16          | S    | canonical spec bytes               |
//! | 16 + S      | 8    | u64 `n`                            |
//! | 24 + S      | 8n   | f64 weights                        |
//!
//! Path (`K` checkpoints):
//!
//! | offset                 | size     | field                                  |
//! |------------------------|----------|----------------------------------------|
//! | 0                      | 4        | magic `GWPT`                           |
//! | 4                      | 4        | u32 format version                     |
//! | 8                      | 4        | u32 flattening order                   |
//! | 12                     | 4        | u32 `S`                                |
//! | 16                     | S        | canonical spec bytes                   |
//! | 16 + S                 | 8        | u64 spec id                            |
//! | 24 + S                 | 8        | u64 `n`                                |
//! | 32 + S                 | 8        | u64 `K`                                |
//! | 40 + S                 | 8Kn      | f64 weights, checkpoint-major          |
//! | 40 + S + 8Kn           | 25K      | per checkpoint: f64 distance, u8 has-eval, f64 loss, f64 accuracy |
//! | 40 + S + 8Kn + 25K     | 16(K-1)  | per segment: f64 energy, f64 length    |
//!
//! A path file is therefore `40 + S + 8Kn + 25K + 16(K - 1)` bytes.

use std::fs;
use std::io::Write;
use std::path::Path as FsPath;

use crate::error::{Error, Result};
use crate::geometry::{CheckpointRecord, Path, SegmentRecord};
use crate::nn::{Evaluation, NetworkSpec, SpecId, WeightVector, FLATTENING_ORDER};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GWCK";
pub const PATH_MAGIC: [u8; 4] = *b"GWPT";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const PATH_VERSION: u32 = 1;

/// Byte size of a path file with `k` checkpoints of `spec`.
pub fn path_file_size(spec: &NetworkSpec, k: usize) -> usize {
    let s = spec.canonical_bytes().len();
    let n = spec.num_params();
    40 + s + 8 * k * n + 25 * k + 16 * k.saturating_sub(1)
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &FsPath, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => FsPath::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub(crate) fn read_file(path: &FsPath) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            e.into()
        }
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::format(
                self.pos as u64,
                format!("file ends inside {what}"),
            )),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_bits(self.u64(what)?))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.pos as u64,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }

    fn header(&mut self, magic: [u8; 4], version: u32) -> Result<NetworkSpec> {
        if self.take(4, "magic")? != magic {
            return Err(Error::format(
                0,
                format!("bad magic, expected {:?}", String::from_utf8_lossy(&magic)),
            ));
        }
        let found = self.u32("version")?;
        if found != version {
            return Err(Error::Version {
                found,
                expected: version,
            });
        }
        let order = self.u32("flattening order")?;
        if order != FLATTENING_ORDER {
            return Err(Error::format(
                8,
                format!("flattening order {order}, expected {FLATTENING_ORDER}"),
            ));
        }
        let len = self.u32("spec length")? as usize;
        let base = self.pos as u64;
        NetworkSpec::decode(self.take(len, "spec block")?, base)
    }
}

fn header(out: &mut Vec<u8>, magic: [u8; 4], version: u32, spec: &NetworkSpec) {
    let spec_bytes = spec.canonical_bytes();
    out.extend_from_slice(&magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&FLATTENING_ORDER.to_le_bytes());
    out.extend_from_slice(&(spec_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec_bytes);
}

pub fn encode_checkpoint(spec: &NetworkSpec, w: &WeightVector) -> Result<Vec<u8>> {
    w.check_spec(spec)?;
    let mut out = Vec::with_capacity(32 + 8 * w.len());
    header(&mut out, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, spec);
    out.extend_from_slice(&(w.len() as u64).to_le_bytes());
    for v in w.iter() {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(NetworkSpec, WeightVector)> {
    let mut r = Reader { bytes, pos: 0 };
    let spec = r.header(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let at = r.pos as u64;
    let n = r.u64("parameter count")? as usize;
    if n != spec.num_params() {
        return Err(Error::format(
            at,
            format!("parameter count {n}, spec has {}", spec.num_params()),
        ));
    }
    let values = (0..n)
        .map(|_| r.f64("weights"))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let w = WeightVector::new(&spec, values)?;
    Ok((spec, w))
}

pub fn save_checkpoint(path: &FsPath, spec: &NetworkSpec, w: &WeightVector) -> Result<()> {
    write_atomic(path, &encode_checkpoint(spec, w)?)
}

pub fn load_checkpoint(path: &FsPath) -> Result<(NetworkSpec, WeightVector)> {
    decode_checkpoint(&read_file(path)?)
}

pub fn encode_path(path: &Path) -> Vec<u8> {
    let spec = path.spec();
    let (k, n) = (path.len(), spec.num_params());
    let mut out = Vec::with_capacity(path_file_size(spec, k));
    header(&mut out, PATH_MAGIC, PATH_VERSION, spec);
    out.extend_from_slice(&spec.id().0.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(k as u64).to_le_bytes());
    for c in path.checkpoints() {
        for v in c.iter() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    for r in path.records() {
        out.extend_from_slice(&r.distance_to_goal.to_bits().to_le_bytes());
        let (flag, loss, acc) = match r.eval {
            Some(e) => (1u8, e.loss, e.accuracy),
            None => (0u8, 0.0, 0.0),
        };
        out.push(flag);
        out.extend_from_slice(&loss.to_bits().to_le_bytes());
        out.extend_from_slice(&acc.to_bits().to_le_bytes());
    }
    for s in path.segments() {
        out.extend_from_slice(&s.energy.to_bits().to_le_bytes());
        out.extend_from_slice(&s.length.to_bits().to_le_bytes());
    }
    out
}

/// Decodes a path file; with `expected` given, its spec must match exactly.
pub fn decode_path(bytes: &[u8], expected: Option<&NetworkSpec>) -> Result<Path> {
    let mut r = Reader { bytes, pos: 0 };
    let spec = r.header(PATH_MAGIC, PATH_VERSION)?;
    let stored = SpecId(r.u64("spec id")?);
    if stored != spec.id() {
        return Err(Error::SpecMismatch(format!(
            "stored spec id {stored} does not match spec block {}",
            spec.id()
        )));
    }
    if let Some(e) = expected {
        if e.id() != spec.id() {
            return Err(Error::SpecMismatch(format!(
                "path is for {spec} ({}), expected {e} ({})",
                spec.id(),
                e.id()
            )));
        }
    }
    let at = r.pos as u64;
    let n = r.u64("parameter count")? as usize;
    if n != spec.num_params() {
        return Err(Error::format(
            at,
            format!("parameter count {n}, spec has {}", spec.num_params()),
        ));
    }
    let at = r.pos as u64;
    let k = r.u64("checkpoint count")? as usize;
    if k == 0 || k.checked_mul(8 * n).is_none_or(|b| b > bytes.len()) {
        return Err(Error::format(
            at,
            format!("implausible checkpoint count {k}"),
        ));
    }
    let mut checkpoints = Vec::with_capacity(k);
    for _ in 0..k {
        let values = (0..n)
            .map(|_| r.f64("weights"))
            .collect::<Result<Vec<_>>>()?;
        checkpoints.push(WeightVector::new(&spec, values)?);
    }
    let mut records = Vec::with_capacity(k);
    for _ in 0..k {
        let distance_to_goal = r.f64("checkpoint record")?;
        let at = r.pos as u64;
        let flag = r.u8("checkpoint record")?;
        let loss = r.f64("checkpoint record")?;
        let accuracy = r.f64("checkpoint record")?;
        let eval = match flag {
            0 => None,
            1 => Some(Evaluation { loss, accuracy }),
            f => return Err(Error::format(at, format!("bad evaluation flag {f}"))),
        };
        records.push(CheckpointRecord {
            distance_to_goal,
            eval,
        });
    }
    let mut segments = Vec::with_capacity(k - 1);
    for _ in 1..k {
        let energy = r.f64("segment record")?;
        let length = r.f64("segment record")?;
        segments.push(SegmentRecord { energy, length });
    }
    r.finish()?;
    Path::new(spec, checkpoints, segments, records)
}

pub fn save_path(file: &FsPath, path: &Path) -> Result<()> {
    write_atomic(file, &encode_path(path))
}

pub fn load_path(file: &FsPath, expected: Option<&NetworkSpec>) -> Result<Path> {
    decode_path(&read_file(file)?, expected)
}
