//! Versioned binary snapshots of a [`PpmModel`].
//!
//! Layout (little-endian):
//!
//! ```text
//! "PPMS" | version u8 | D u32 | mode u8 (0 full, 1 capped) | K u32
//!        | alpha num u32 | alpha den u32 | full_limit u64 | max_entries u64
//!        | n u64 | total_neg_log f64 | orders u32 | log2 PPM_k f64 x orders
//! full:   history u32 x n
//! capped: recent_len u32 | recent u32 x recent_len
//!         then for k = 0..=K: grams u64 | (key u128, count u64)* sorted by key
//!                             contexts u64 | (key u128, count u64)* sorted by key
//! ```

use crate::base::{Alphabet, Rational};
use crate::error::{Error, Result};

use super::counts::{ContextCounts, GramTable, SuffixCounts};
use super::model::{Counter, PpmModel};
use super::{Mode, PpmConfig};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"PPMS";
pub const SNAPSHOT_VERSION: u8 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len()).ok_or(Error::Truncated {
            needed: self.pos.saturating_add(len),
            available: self.buf.len(),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::CorruptPayload("length overflows usize"))
    }
}

fn write_table(out: &mut Vec<u8>, table: &GramTable) {
    let mut entries: Vec<(u128, u64)> = table.iter().map(|(&k, &v)| (k, v)).collect();
    entries.sort_unstable();
    out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (k, v) in entries {
        out.extend_from_slice(&k.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_table(r: &mut Reader<'_>) -> Result<GramTable> {
    let len = r.usize()?;
    if len > r.buf.len() / 24 {
        return Err(Error::CorruptPayload("table length exceeds snapshot size"));
    }
    let mut t = GramTable::default();
    t.reserve(len);
    for _ in 0..len {
        let k = r.u128()?;
        let v = r.u64()?;
        if t.insert(k, v).is_some() {
            return Err(Error::CorruptPayload("duplicate table key"));
        }
    }
    Ok(t)
}

impl PpmModel {
    pub fn to_snapshot(&self) -> Vec<u8> {
        let cfg = self.config();
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.push(SNAPSHOT_VERSION);
        out.extend_from_slice(&(cfg.alphabet.size() as u32).to_le_bytes());
        let (mode, k) = match cfg.mode {
            Mode::Full => (0u8, 0u32),
            Mode::Capped(k) => (1u8, k as u32),
        };
        out.push(mode);
        out.extend_from_slice(&k.to_le_bytes());
        out.extend_from_slice(&cfg.smoothing.num.to_le_bytes());
        out.extend_from_slice(&cfg.smoothing.den.to_le_bytes());
        out.extend_from_slice(&(cfg.full_limit as u64).to_le_bytes());
        out.extend_from_slice(&(cfg.max_entries as u64).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.total_neg_log().bits().to_le_bytes());
        out.extend_from_slice(&(self.order_log2().len() as u32).to_le_bytes());
        for lp in self.order_log2() {
            out.extend_from_slice(&lp.to_le_bytes());
        }
        match self.counter() {
            Counter::Suffix(s) => {
                for &sym in s.history() {
                    out.extend_from_slice(&(sym as u32).to_le_bytes());
                }
            }
            Counter::Tables(t) => {
                let recent: Vec<usize> = t.recent().collect();
                out.extend_from_slice(&(recent.len() as u32).to_le_bytes());
                for sym in recent {
                    out.extend_from_slice(&(sym as u32).to_le_bytes());
                }
                for (g, c) in t.grams().iter().zip(t.contexts()) {
                    write_table(&mut out, g);
                    write_table(&mut out, c);
                }
            }
        }
        out
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<PpmModel> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4).map_err(|_| Error::CorruptHeader("missing magic"))? != SNAPSHOT_MAGIC {
            return Err(Error::CorruptHeader("bad magic"));
        }
        let version = r.u8()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: SNAPSHOT_VERSION });
        }
        let alphabet =
            Alphabet::new(r.u32()? as usize).map_err(|_| Error::CorruptHeader("alphabet size"))?;
        let mode = match (r.u8()?, r.u32()?) {
            (0, _) => Mode::Full,
            (1, k) => Mode::Capped(k as usize),
            _ => return Err(Error::CorruptHeader("mode")),
        };
        let smoothing =
            Rational::new(r.u32()?, r.u32()?).map_err(|_| Error::CorruptHeader("smoothing"))?;
        let config = PpmConfig {
            alphabet,
            mode,
            smoothing,
            full_limit: r.usize()?,
            max_entries: r.usize()?,
        };
        config.validate().map_err(|_| Error::CorruptHeader("configuration"))?;
        let n = r.usize()?;
        let total = r.f64()?;
        let orders = r.u32()? as usize;
        let expected_orders = match mode {
            Mode::Full => n,
            Mode::Capped(k) => k + 1,
        };
        if orders != expected_orders {
            return Err(Error::CorruptPayload("order count does not match mode"));
        }
        let order_log2 = (0..orders).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let counter = match mode {
            Mode::Full => {
                let mut s = SuffixCounts::new(alphabet);
                for _ in 0..n {
                    s.push(r.u32()? as usize).map_err(|_| Error::CorruptPayload("symbol out of range"))?;
                }
                Counter::Suffix(s)
            }
            Mode::Capped(k) => {
                let len = r.u32()? as usize;
                let recent = (0..len).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
                let mut grams = Vec::with_capacity(k + 1);
                let mut contexts = Vec::with_capacity(k + 1);
                for _ in 0..=k {
                    grams.push(read_table(&mut r)?);
                    contexts.push(read_table(&mut r)?);
                }
                Counter::Tables(ContextCounts::from_parts(
                    alphabet,
                    k,
                    config.max_entries,
                    grams,
                    contexts,
                    recent,
                    n,
                )?)
            }
        };
        if r.pos != bytes.len() {
            return Err(Error::CorruptPayload("trailing bytes after snapshot"));
        }
        Ok(PpmModel::from_parts(config, counter, order_log2, total, n))
    }
}
