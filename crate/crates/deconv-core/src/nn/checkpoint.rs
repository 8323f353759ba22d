//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"NDCP"
//! version u32            (currently 1)
//! scalar  u8             (4 = f32, 8 = f64)
//! count   u32            entries that follow
//! entry   name_len u16, name utf-8,
//!         kind u8        (0 param, 1 buffer, 2 counter)
//!         counter:       value u64
//!         tensor:        rank u8, dims u32 × rank, values (4|8 bytes each)
//! ```
//!
//! Entry names are the layer-indexed state paths (`layer0.weight`,
//! `layer3.deconv.block0.running_matrix`, …); loading requires the target
//! network to expose exactly the same paths and shapes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Network, StateRef};

const MAGIC: &[u8; 4] = b"NDCP";
const VERSION: u32 = 1;

pub fn save_checkpoint<T: Scalar>(network: &mut Network<T>, path: &Path) -> Result<()> {
    let mut entries: Vec<(String, EntryOwned<T>)> = Vec::new();
    network.visit_state(&mut |name, state| {
        let entry = match state {
            StateRef::Param(t) => EntryOwned::Tensor { kind: 0, tensor: t.clone() },
            StateRef::Buffer(t) => EntryOwned::Tensor { kind: 1, tensor: t.clone() },
            StateRef::Counter(c) => EntryOwned::Counter(*c),
        };
        entries.push((name, entry));
        Ok(())
    })?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[std::mem::size_of::<T>() as u8])?;
    w.write_all(&u32::try_from(entries.len()).expect("entry count").to_le_bytes())?;
    for (name, entry) in &entries {
        let name_bytes = name.as_bytes();
        w.write_all(&u16::try_from(name_bytes.len()).expect("name length").to_le_bytes())?;
        w.write_all(name_bytes)?;
        match entry {
            EntryOwned::Counter(c) => {
                w.write_all(&[2u8])?;
                w.write_all(&c.to_le_bytes())?;
            }
            EntryOwned::Tensor { kind, tensor } => {
                w.write_all(&[*kind])?;
                w.write_all(&[u8::try_from(tensor.rank()).expect("rank")])?;
                for &d in tensor.shape() {
                    w.write_all(&u32::try_from(d).expect("dim").to_le_bytes())?;
                }
                for &v in tensor.data() {
                    write_scalar(&mut w, v)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint saved by [`save_checkpoint`] into a structurally
/// identical network.
pub fn load_checkpoint<T: Scalar>(network: &mut Network<T>, path: &Path) -> Result<()> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let width = read_u8(&mut r)?;
    if width as usize != std::mem::size_of::<T>() {
        return Err(Error::Checkpoint(format!(
            "precision mismatch: file holds {width}-byte scalars, target expects {}",
            std::mem::size_of::<T>()
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let mut entries: HashMap<String, EntryOwned<T>> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u16(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("non-utf8 name".into()))?;
        let kind = read_u8(&mut r)?;
        let entry = match kind {
            2 => {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                EntryOwned::Counter(u64::from_le_bytes(b))
            }
            0 | 1 => {
                let rank = read_u8(&mut r)? as usize;
                let mut shape = Vec::with_capacity(rank);
                for _ in 0..rank {
                    shape.push(read_u32(&mut r)? as usize);
                }
                let len: usize = shape.iter().product();
                let mut data = Vec::with_capacity(len);
                for _ in 0..len {
                    data.push(read_scalar::<T>(&mut r)?);
                }
                EntryOwned::Tensor { kind, tensor: Tensor::new(shape, data)? }
            }
            other => return Err(Error::Checkpoint(format!("unknown entry kind {other}"))),
        };
        entries.insert(name, entry);
    }

    let mut assigned = 0usize;
    network.visit_state(&mut |name, state| {
        let entry = entries
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry `{name}`")))?;
        match (state, entry) {
            (StateRef::Counter(c), EntryOwned::Counter(v)) => *c = *v,
            (StateRef::Param(t) | StateRef::Buffer(t), EntryOwned::Tensor { tensor, .. }) => {
                if t.shape() != tensor.shape() {
                    return Err(Error::Checkpoint(format!(
                        "shape mismatch for `{name}`: file {:?}, target {:?}",
                        tensor.shape(),
                        t.shape()
                    )));
                }
                *t = tensor.clone();
            }
            _ => return Err(Error::Checkpoint(format!("entry kind mismatch for `{name}`"))),
        }
        assigned += 1;
        Ok(())
    })?;
    if assigned != entries.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} entries, network consumed {assigned}",
            entries.len()
        )));
    }
    Ok(())
}

enum EntryOwned<T> {
    Tensor { kind: u8, tensor: Tensor<T> },
    Counter(u64),
}

fn write_scalar<T: Scalar, W: Write>(w: &mut W, v: T) -> Result<()> {
    if std::mem::size_of::<T>() == 4 {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    } else {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

fn read_scalar<T: Scalar>(r: &mut impl Read) -> Result<T> {
    if std::mem::size_of::<T>() == 4 {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(T::from_f64(f64::from(f32::from_le_bytes(b))))
    } else {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(T::from_f64(f64::from_le_bytes(b)))
    }
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
