//! Shared binary container: a fixed 21-byte header followed by a payload of
//! little-endian IEEE-754 floats. Stores and both index kinds reuse the same
//! header layout and differ only in magic and payload interpretation.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) const MAGIC_STORE: [u8; 4] = *b"GTNN";
pub(crate) const MAGIC_SUM: [u8; 4] = *b"GTNS";
pub(crate) const MAGIC_MAX: [u8; 4] = *b"GTNM";

pub(crate) const VERSION: u32 = 1;
pub(crate) const FLAG_ALLOW_NEGATIVE: u8 = 0b0000_0001;

/// Header layout: magic (4) | version u32 LE (4) | flags u8 (1) |
/// dim u32 LE (4) | count u64 LE (8).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Header {
    pub version: u32,
    pub flags: u8,
    pub dim: u32,
    pub count: u64,
}

impl Header {
    pub fn allow_negative(&self) -> bool {
        self.flags & FLAG_ALLOW_NEGATIVE != 0
    }
}

pub(crate) fn write_header<W: Write>(w: &mut W, magic: [u8; 4], h: &Header) -> Result<()> {
    w.write_all(&magic)?;
    w.write_all(&h.version.to_le_bytes())?;
    w.write_all(&[h.flags])?;
    w.write_all(&h.dim.to_le_bytes())?;
    w.write_all(&h.count.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_header<R: Read>(r: &mut R, expected_magic: [u8; 4]) -> Result<Header> {
    let mut buf = [0u8; 21];
    read_exact(r, &mut buf)?;
    let magic: [u8; 4] = buf[0..4].try_into().unwrap();
    if magic != expected_magic {
        return Err(Error::BadMagic { expected: expected_magic, actual: magic });
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion { version });
    }
    Ok(Header {
        version,
        flags: buf[8],
        dim: u32::from_le_bytes(buf[9..13].try_into().unwrap()),
        count: u64::from_le_bytes(buf[13..21].try_into().unwrap()),
    })
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated { expected: buf.len() as u64 }
        } else {
            Error::Io(e)
        }
    })
}

const CHUNK_FLOATS: usize = 8192;

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(CHUNK_FLOATS * 4);
    for chunk in values.chunks(CHUNK_FLOATS) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(count);
    let mut buf = vec![0u8; CHUNK_FLOATS * 4];
    let mut remaining = count;
    while remaining > 0 {
        let take = remaining.min(CHUNK_FLOATS);
        let bytes = &mut buf[..take * 4];
        read_exact(r, bytes)?;
        for b in bytes.chunks_exact(4) {
            out.push(f32::from_le_bytes(b.try_into().unwrap()));
        }
        remaining -= take;
    }
    Ok(out)
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(CHUNK_FLOATS * 8);
    for chunk in values.chunks(CHUNK_FLOATS) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut buf = vec![0u8; CHUNK_FLOATS * 8];
    let mut remaining = count;
    while remaining > 0 {
        let take = remaining.min(CHUNK_FLOATS);
        let bytes = &mut buf[..take * 8];
        read_exact(r, bytes)?;
        for b in bytes.chunks_exact(8) {
            out.push(f64::from_le_bytes(b.try_into().unwrap()));
        }
        remaining -= take;
    }
    Ok(out)
}
