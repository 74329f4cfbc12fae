//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `DBPMCKPT`, `u32` version, then until end
//! of file one record per array: `u32` name length, name bytes, `u32` rank,
//! `rank` x `u32` dims, `f32` data.

use std::io::{ErrorKind, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{EncoderError, ParamTensor, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DBPMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_NAME: usize = 4096;
const MAX_RANK: usize = 8;

pub fn write_checkpoint<W: Write>(mut out: W, tensors: &[ParamTensor]) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    for t in tensors {
        let expected: usize = t.shape.iter().product();
        if expected != t.data.len() {
            return Err(EncoderError::Checkpoint(format!("array `{}` length does not match shape", t.name)));
        }
        out.write_u32::<LittleEndian>(t.name.len() as u32)?;
        out.write_all(t.name.as_bytes())?;
        out.write_u32::<LittleEndian>(t.shape.len() as u32)?;
        for &d in &t.shape {
            out.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in &t.data {
            out.write_f32::<LittleEndian>(v)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn truncated(e: std::io::Error) -> EncoderError {
    if e.kind() == ErrorKind::UnexpectedEof {
        EncoderError::Checkpoint("truncated file".into())
    } else {
        EncoderError::Io(e)
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<ParamTensor>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(EncoderError::Checkpoint("bad magic".into()));
    }
    let version = input.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != CHECKPOINT_VERSION {
        return Err(EncoderError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut tensors = Vec::new();
    loop {
        let name_len = match input.read_u32::<LittleEndian>() {
            Ok(n) => n as usize,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        if name_len > MAX_NAME {
            return Err(EncoderError::Checkpoint(format!("name length {name_len} too large")));
        }
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| EncoderError::Checkpoint("name is not utf-8".into()))?;
        let rank = input.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(EncoderError::Checkpoint(format!("array `{name}` has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(input.read_u32::<LittleEndian>().map_err(truncated)? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| EncoderError::Checkpoint(format!("array `{name}` dimensions overflow")))?;
        let mut data = vec![0f32; len];
        input.read_f32_into::<LittleEndian>(&mut data).map_err(truncated)?;
        tensors.push(ParamTensor { name, shape, data });
    }
    Ok(tensors)
}
