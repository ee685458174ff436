//! Binary persistence of value tables.
//!
//! Layout (little-endian): magic, format version, config fingerprint,
//! backend tag with sample count and seed, horizon, varieties, the per-period
//! supply caps, then one record per `(t, y)` in table order holding `t`, `y`,
//! `C_t(y)` and, for Monte Carlo tables, its standard error. Continuation
//! values are recomputed on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::tables::{Backend, ValueTables};
use crate::error::{Error, Result};
use crate::market::{Fingerprint, MarketConfig};

const MAGIC: &[u8; 8] = b"FLXMTBL\0";
const VERSION: u32 = 1;

/// Writes `tables` to `path`, replacing any existing file.
pub fn save_tables(tables: &ValueTables, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&tables.fingerprint.0)?;
    let (tag, samples, seed) = match tables.backend {
        Backend::Exact => (0u8, 0u64, 0u64),
        Backend::MonteCarlo { samples, seed } => (1u8, samples, seed),
    };
    w.write_all(&[tag])?;
    w.write_all(&samples.to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&(tables.horizon as u32).to_le_bytes())?;
    w.write_all(&(tables.varieties as u32).to_le_bytes())?;
    for b in &tables.boxes {
        for &c in b.caps() {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    for (t0, b) in tables.boxes.iter().enumerate() {
        for (idx, y) in b.iter().enumerate() {
            w.write_all(&(t0 as u32 + 1).to_le_bytes())?;
            for &v in y.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&tables.values[t0][idx].to_le_bytes())?;
            if let Some(se) = &tables.std_errors {
                w.write_all(&se[t0][idx].to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<R: Read> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::CorruptCache(format!("truncated file: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

/// Reads tables written by [`save_tables`] for `cfg`.
///
/// Fails with [`Error::TableMismatch`] if the file was built for a different
/// configuration and with [`Error::CorruptCache`] if it is malformed.
pub fn load_tables(path: impl AsRef<Path>, cfg: &MarketConfig) -> Result<ValueTables> {
    let mut r = Cursor { inner: BufReader::new(File::open(path)?) };
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::CorruptCache("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CorruptCache(format!("unsupported version {version}")));
    }
    let found = Fingerprint(r.bytes::<32>()?);
    if found != cfg.fingerprint() {
        return Err(Error::TableMismatch {
            expected: cfg.fingerprint().to_string(),
            found: found.to_string(),
        });
    }
    let tag = r.bytes::<1>()?[0];
    let samples = r.u64()?;
    let seed = r.u64()?;
    let backend = match tag {
        0 => Backend::Exact,
        1 => Backend::MonteCarlo { samples, seed },
        other => return Err(Error::CorruptCache(format!("unknown backend tag {other}"))),
    };
    let horizon = r.u32()? as usize;
    let varieties = r.u32()? as usize;
    if horizon != cfg.horizon() || varieties != cfg.varieties() {
        return Err(Error::CorruptCache("dimensions disagree with configuration".into()));
    }
    for t in 1..=horizon {
        let caps = (0..varieties).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if caps != cfg.supply_caps(t) {
            return Err(Error::CorruptCache(format!("supply caps of period {t} disagree")));
        }
    }
    let with_se = matches!(backend, Backend::MonteCarlo { .. });
    let mut values = Vec::with_capacity(horizon);
    let mut errors = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let b = super::tables::SupplyBox::new(cfg.supply_caps(t));
        let mut vals = Vec::with_capacity(b.len());
        let mut ses = Vec::new();
        for y in b.iter() {
            let rt = r.u32()? as usize;
            let ry = (0..varieties).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            if rt != t || ry != y.0 {
                return Err(Error::CorruptCache(format!("record ({rt}, {ry:?}) out of order")));
            }
            vals.push(r.f64()?);
            if with_se {
                ses.push(r.f64()?);
            }
        }
        values.push(vals);
        errors.push(ses);
    }
    let mut rest = Vec::new();
    r.inner.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::CorruptCache(format!("{} trailing bytes", rest.len())));
    }
    Ok(ValueTables::from_parts(cfg, backend, values, with_se.then_some(errors)))
}
