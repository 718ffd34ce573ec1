//! Binary weight files.
//!
//! Layout (little-endian): magic `EASRNW1\0`, `u32` entry count, then for each
//! entry a `u16` name length, the UTF-8 name, a `u8` rank, `rank` `u32` dims,
//! and the `f32` data in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::graph::weights::{GraphWeights, Param};

pub const MAGIC: &[u8; 8] = b"EASRNW1\0";

pub fn write_weights<W: Write>(weights: &GraphWeights, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(
        u32::try_from(weights.len()).map_err(|_| Error::Format("too many entries".into()))?,
    )?;
    for (name, p) in weights.iter() {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len()).map_err(|_| Error::Format(format!("name too long: {name}")))?;
        out.write_u16::<LittleEndian>(len)?;
        out.write_all(bytes)?;
        let rank = u8::try_from(p.shape.len()).map_err(|_| Error::Format(format!("rank too large: {name}")))?;
        out.write_u8(rank)?;
        for &d in &p.shape {
            out.write_u32::<LittleEndian>(u32::try_from(d).map_err(|_| Error::Format(format!("dim too large: {name}")))?)?;
        }
        if p.shape.iter().product::<usize>() != p.data.len() {
            return Err(Error::Format(format!("entry `{name}` data does not match its shape")));
        }
        for &v in &p.data {
            out.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    Ok(())
}

pub fn read_weights<R: Read>(mut input: R) -> Result<GraphWeights> {
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let truncated = |_| Error::Format("truncated weight file".into());
    let count = input.read_u32::<LittleEndian>().map_err(truncated)?;
    let mut weights = GraphWeights::new();
    for _ in 0..count {
        let len = input.read_u16::<LittleEndian>().map_err(truncated)? as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
        let rank = input.read_u8().map_err(truncated)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(input.read_u32::<LittleEndian>().map_err(truncated)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0f32; n];
        input.read_f32_into::<LittleEndian>(&mut raw).map_err(truncated)?;
        if weights.get(&name).is_some() {
            return Err(Error::Format(format!("duplicate entry `{name}`")));
        }
        weights.insert(
            name,
            Param {
                shape,
                data: raw.into_iter().map(f64::from).collect(),
            },
        );
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last entry".into()));
    }
    Ok(weights)
}

pub fn save_weights(weights: &GraphWeights, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_weights(weights, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<GraphWeights> {
    read_weights(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphConfig;

    #[test]
    fn bytes_round_trip_exactly() {
        let w = GraphWeights::seeded(&GraphConfig::toy(), 3, 1.0);
        let mut a = Vec::new();
        write_weights(&w, &mut a).unwrap();
        let back = read_weights(&a[..]).unwrap();
        assert_eq!(back, w.quantized_f32());
        let mut b = Vec::new();
        write_weights(&back, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn header_layout() {
        let mut w = GraphWeights::new();
        w.insert("ab", Param { shape: vec![2], data: vec![1.0, -2.0] });
        let mut buf = Vec::new();
        write_weights(&w, &mut buf).unwrap();
        let mut expect = b"EASRNW1\0".to_vec();
        expect.extend(1u32.to_le_bytes());
        expect.extend(2u16.to_le_bytes());
        expect.extend(b"ab");
        expect.push(1);
        expect.extend(2u32.to_le_bytes());
        expect.extend(1f32.to_le_bytes());
        expect.extend((-2f32).to_le_bytes());
        assert_eq!(buf, expect);
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_weights(&b"NOTMAGIC\0\0\0\0"[..]).is_err());
        let mut w = GraphWeights::new();
        w.insert("x", Param { shape: vec![3], data: vec![0.0; 3] });
        let mut buf = Vec::new();
        write_weights(&w, &mut buf).unwrap();
        assert!(read_weights(&buf[..buf.len() - 1]).is_err());
        buf.push(0);
        assert!(read_weights(&buf[..]).is_err());
    }
}
