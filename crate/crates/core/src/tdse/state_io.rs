//! Binary state-vector dumps.
//!
//! Layout: 4-byte magic `MSGS`, little-endian `u32` format version, `u64`
//! dimension, then `dim` pairs of little-endian `f64` (real, imaginary) in the
//! basis order documented in the parent module.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MSGS";
pub const VERSION: u32 = 1;

pub fn write_state(mut w: impl Write, state: &[Complex64]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(state.len() as u64).to_le_bytes())?;
    for z in state {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_state(mut r: impl Read) -> Result<Vec<Complex64>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(Error::Invalid("not a state dump (bad magic)".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Invalid(format!("unsupported state dump version {version}")));
    }
    let dim = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; 16 * dim];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect())
}

pub fn save_state(path: &Path, state: &[Complex64]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_state(&mut w, state)?;
    w.flush()?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<Vec<Complex64>> {
    read_state(std::io::BufReader::new(std::fs::File::open(path)?))
}
