//! Binary packet trace dumps.
//!
//! Layout, all little-endian:
//!
//! ```text
//! header:  "ATRC" | version: u16 | p: u32
//! record:  flag: u8 | hop: u16 | x: u32 | y: u32      (11 bytes)
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::FieldCtx;
use crate::marking::Packet;

pub const MAGIC: [u8; 4] = *b"ATRC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 10;
pub const RECORD_LEN: usize = 11;

pub fn encode_packet(pkt: &Packet) -> Result<[u8; RECORD_LEN]> {
    let hop = u16::try_from(pkt.hop)
        .map_err(|_| Error::BadTrace(format!("hop {} does not fit in u16", pkt.hop)))?;
    let mut out = [0u8; RECORD_LEN];
    out[0] = pkt.flag as u8;
    out[1..3].copy_from_slice(&hop.to_le_bytes());
    out[3..7].copy_from_slice(&(pkt.x.value() as u32).to_le_bytes());
    out[7..11].copy_from_slice(&(pkt.y.value() as u32).to_le_bytes());
    Ok(out)
}

pub fn decode_packet(buf: &[u8; RECORD_LEN], ctx: &FieldCtx) -> Result<Packet> {
    let flag = match buf[0] {
        0 => false,
        1 => true,
        b => return Err(Error::BadTrace(format!("flag byte {b}"))),
    };
    let hop = u16::from_le_bytes([buf[1], buf[2]]) as u32;
    let x = u32::from_le_bytes(buf[3..7].try_into().unwrap()) as u64;
    let y = u32::from_le_bytes(buf[7..11].try_into().unwrap()) as u64;
    Ok(Packet {
        flag,
        hop,
        x: ctx.element(x)?,
        y: ctx.element(y)?,
    })
}

pub fn write_trace<W: Write>(mut w: W, ctx: &FieldCtx, packets: &[Packet]) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(ctx.modulus() as u32).to_le_bytes())?;
    for p in packets {
        w.write_all(&encode_packet(p)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(mut r: R) -> Result<(FieldCtx, Vec<Packet>)> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::BadTrace("truncated header".into()))?;
    if header[..4] != MAGIC {
        return Err(Error::BadTrace("bad magic".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::BadTrace(format!("unsupported version {version}")));
    }
    let ctx = FieldCtx::new(u32::from_le_bytes(header[6..10].try_into().unwrap()) as u64)?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() % RECORD_LEN != 0 {
        return Err(Error::BadTrace(format!(
            "{} trailing bytes",
            body.len() % RECORD_LEN
        )));
    }
    let packets = body
        .chunks_exact(RECORD_LEN)
        .map(|c| decode_packet(c.try_into().unwrap(), &ctx))
        .collect::<Result<Vec<_>>>()?;
    Ok((ctx, packets))
}
