//! Binary parameter container.
//!
//! Layout: magic `RPCK`, `u32` version, `u32` tensor count, then per tensor a
//! `u32` name length, UTF-8 name, `u64` rows, `u64` cols and `rows*cols`
//! little-endian `f64` values in row-major order.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use crate::error::{NnError, Result};
use crate::params::ParamStore;
use crate::tape::Mat;

const MAGIC: &[u8; 4] = b"RPCK";
pub const VERSION: u32 = 1;

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, name, value) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(value.ncols() as u64).to_le_bytes());
        for x in value.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

fn read_u32(r: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| bad("truncated"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut Cursor<&[u8]>) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| bad("truncated"))?;
    Ok(u64::from_le_bytes(b))
}

/// Named tensors in file order.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Mat)>> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|_| bad("truncated"))?;
        let name = String::from_utf8(name).map_err(|_| bad("name is not UTF-8"))?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let n = rows.checked_mul(cols).ok_or_else(|| bad("shape overflow"))?;
        if n.saturating_mul(8) > bytes.len() {
            return Err(bad("truncated"));
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_bits(read_u64(&mut r)?));
        }
        out.push((name, Mat::from_shape_vec((rows, cols), data).unwrap()));
    }
    if (r.position() as usize) != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(out)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    fs::write(path, encode(store))?;
    Ok(())
}

/// Loads values into an already-built store; every stored name must exist
/// with the same shape.
pub fn load_into(store: &mut ParamStore, path: &Path) -> Result<()> {
    let named = decode(&fs::read(path)?)?;
    store.load_values(named)
}
