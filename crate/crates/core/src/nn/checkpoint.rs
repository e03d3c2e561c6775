//! Checkpoint file layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size          field
//! 0       8             magic "GBXMLP\0\0"
//! 8       4             format version (u32) = 1
//! 12      8             hidden width (u64)
//! 20      16*hidden     w1, hidden rows of (w_x, w_s), f64
//! ...     8*hidden      b1, f64
//! ...     8*hidden      w2, f64
//! ...     8             b2, f64
//! ```

use std::io::{Read, Write};

use super::{param_count, MlpParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"GBXMLP\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

// Guards against allocating from a corrupt header.
const MAX_HIDDEN: u64 = 1 << 24;

pub fn write_checkpoint<W: Write>(mut w: W, p: &MlpParams) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(p.hidden() as u64).to_le_bytes())?;
    for v in p.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<MlpParams> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a network checkpoint (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let hidden = u64::from_le_bytes(b8);
    if hidden == 0 || hidden > MAX_HIDDEN {
        return Err(Error::Format(format!("implausible hidden width {hidden}")));
    }
    let hidden = hidden as usize;
    let mut values = Vec::with_capacity(param_count(hidden));
    for _ in 0..param_count(hidden) {
        r.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    MlpParams::from_flat(hidden, values)
}
