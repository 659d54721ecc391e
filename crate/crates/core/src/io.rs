//! The SSIG signal file: a 20-byte little-endian header followed by the
//! samples as little-endian f64, laid out `[channel][t][p]`.

use std::path::Path;

use crate::error::{DiscoError, Result};
use crate::grid::Bandlimit;
use crate::signal::SphericalSignal;

pub const SIGNAL_MAGIC: &[u8; 4] = b"SSIG";
pub const SIGNAL_VERSION: u32 = 1;
pub const DTYPE_F64: u32 = 1;
const HEADER_LEN: usize = 20;

fn bad(reason: impl Into<String>) -> DiscoError {
    DiscoError::Format {
        what: "signal file",
        reason: reason.into(),
    }
}

pub fn signal_to_bytes(signal: &SphericalSignal) -> Vec<u8> {
    let data = signal.data();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * data.len());
    out.extend_from_slice(SIGNAL_MAGIC);
    out.extend_from_slice(&SIGNAL_VERSION.to_le_bytes());
    out.extend_from_slice(&signal.bandlimit().get().to_le_bytes());
    out.extend_from_slice(&(signal.channels() as u32).to_le_bytes());
    out.extend_from_slice(&DTYPE_F64.to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn signal_from_bytes(bytes: &[u8]) -> Result<SphericalSignal> {
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != SIGNAL_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let (version, l, channels, dtype) = (word(1), word(2), word(3), word(4));
    if version != SIGNAL_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    if dtype != DTYPE_F64 {
        return Err(bad(format!("unsupported dtype tag {dtype}")));
    }
    if channels == 0 {
        return Err(bad("zero channels"));
    }
    let l = Bandlimit::new(l).map_err(|_| bad(format!("invalid bandlimit {l}")))?;
    let expected = (channels as u64) * l.n_samples() as u64 * 8;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != expected {
        return Err(bad(format!("payload is {} bytes, expected {expected}", payload.len())));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SphericalSignal::new(l, channels as usize, data)
}

pub fn write_signal(path: &Path, signal: &SphericalSignal) -> Result<()> {
    std::fs::write(path, signal_to_bytes(signal))?;
    Ok(())
}

pub fn read_signal(path: &Path) -> Result<SphericalSignal> {
    signal_from_bytes(&std::fs::read(path)?)
}
