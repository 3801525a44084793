//! Append-only binary event log.
//!
//! One 17-byte little-endian record per change, no header:
//!
//! | offset | type | field |
//! |--------|------|-------|
//! | 0      | f64  | event time |
//! | 8      | u8   | kind: bits 0-3 cause code, bits 4-5 new state, bit 7 null-event flag |
//! | 9      | u32  | site |
//! | 13     | u32  | neighbour (parent or infector), `u32::MAX` when absent |
//!
//! Cause codes: 0 birth, 1 infection, 2 invasion, 3 death, 4 recovery.
//! Changes sharing one instant are written consecutively in application
//! order.

use std::io::{self, Read, Write};

use crate::engine::observer::{Cause, Change, Observer};
use crate::model::{Configuration, State};
use crate::{Error, Result};

pub const RECORD_LEN: usize = 17;
const NO_NEIGHBOR: u32 = u32::MAX;
const NULL_FLAG: u8 = 0x80;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub cause: Cause,
    pub to: State,
    pub null: bool,
    pub site: u32,
    pub neighbor: Option<u32>,
}

impl LogRecord {
    pub fn from_change(time: f64, c: &Change) -> Self {
        Self { time, cause: c.cause, to: c.to, null: c.is_null(), site: c.site, neighbor: c.source }
    }

    pub fn to_bytes(&self) -> [u8; RECORD_LEN] {
        let mut b = [0u8; RECORD_LEN];
        b[0..8].copy_from_slice(&self.time.to_le_bytes());
        b[8] = (self.cause as u8) | ((self.to as u8) << 4) | if self.null { NULL_FLAG } else { 0 };
        b[9..13].copy_from_slice(&self.site.to_le_bytes());
        b[13..17].copy_from_slice(&self.neighbor.unwrap_or(NO_NEIGHBOR).to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; RECORD_LEN]) -> Result<Self> {
        let time = f64::from_le_bytes(b[0..8].try_into().expect("8 bytes"));
        let kind = b[8];
        let cause = Cause::from_code(kind & 0x0F).ok_or_else(|| Error::Parse(format!("bad cause code in {kind:#x}")))?;
        let to = State::try_from((kind >> 4) & 0x03).map_err(|_| Error::Parse(format!("bad state in {kind:#x}")))?;
        if kind & 0x40 != 0 {
            return Err(Error::Parse(format!("reserved bit set in {kind:#x}")));
        }
        let site = u32::from_le_bytes(b[9..13].try_into().expect("4 bytes"));
        let nb = u32::from_le_bytes(b[13..17].try_into().expect("4 bytes"));
        Ok(Self { time, cause, to, null: kind & NULL_FLAG != 0, site, neighbor: (nb != NO_NEIGHBOR).then_some(nb) })
    }
}

/// Observer writing every change to `W`. The first IO error is kept and
/// reported by [`EventLogWriter::into_inner`]; later writes are skipped.
pub struct EventLogWriter<W: Write> {
    out: W,
    nulls: bool,
    error: Option<io::Error>,
    records: u64,
}

impl<W: Write> EventLogWriter<W> {
    pub fn new(out: W, nulls: bool) -> Self {
        Self { out, nulls, error: None, records: 0 }
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn into_inner(mut self) -> Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> Observer for EventLogWriter<W> {
    fn event(&mut self, t: f64, changes: &[Change], _cfg: &Configuration) {
        if self.error.is_some() {
            return;
        }
        for c in changes {
            if c.is_null() && !self.nulls {
                continue;
            }
            if let Err(e) = self.out.write_all(&LogRecord::from_change(t, c).to_bytes()) {
                self.error = Some(e);
                return;
            }
            self.records += 1;
        }
    }

    fn wants_null_events(&self) -> bool {
        self.nulls
    }
}

/// Reads every record from `r`.
pub fn read_event_log<R: Read>(mut r: R) -> Result<Vec<LogRecord>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % RECORD_LEN != 0 {
        return Err(Error::Parse(format!("event log length {} is not a multiple of {RECORD_LEN}", bytes.len())));
    }
    bytes
        .chunks_exact(RECORD_LEN)
        .map(|c| LogRecord::from_bytes(c.try_into().expect("exact chunk")))
        .collect()
}

/// Applies non-null records to `cfg` in order.
pub fn apply_log(cfg: &mut Configuration, records: &[LogRecord]) -> Result<()> {
    for r in records.iter().filter(|r| !r.null) {
        if r.site as usize >= cfg.n_sites() {
            return Err(Error::Parse(format!("record site {} out of range", r.site)));
        }
        cfg.set(r.site as usize, r.to);
    }
    Ok(())
}
