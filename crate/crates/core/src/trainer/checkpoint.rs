//! Binary checkpoints.
//!
//! Layout, all integers little-endian: the magic `RCV1`, a `u32` version, a
//! `u32` tensor count, then per tensor a `u32` name length, the UTF-8 name,
//! a `u32` dim count, the dims as `u32` and the values as `f32`.
//!
//! Tensors are named `layer.<idx>.<param>` and written in model order, so
//! equal models produce equal bytes. The architecture itself is not stored;
//! a checkpoint is loaded into a model built from the same config.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RCV1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

fn put_u32(w: &mut impl Write, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} {v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read, what: &str) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated while reading {what}: {e}")))?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn write_checkpoint<T: Real>(model: &Model<T>, mut w: impl Write) -> Result<()> {
    let named = model.named_params();
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    put_u32(&mut w, named.len(), "tensor count")?;
    for (name, p) in named {
        put_u32(&mut w, name.len(), "name length")?;
        w.write_all(name.as_bytes())?;
        put_u32(&mut w, p.shape.len(), "dim count")?;
        for &d in &p.shape {
            put_u32(&mut w, d, "dim")?;
        }
        for v in &p.value {
            w.write_all(&v.as_f32().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Vec<CheckpointTensor>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file is shorter than the magic bytes".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}, expected \"RCV1\"")));
    }
    let version = get_u32(&mut r, "version")?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = get_u32(&mut r, "tensor count")?;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = get_u32(&mut r, "name length")?;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|_| Error::Checkpoint("truncated tensor name".into()))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let ndims = get_u32(&mut r, "dim count")?;
        let dims = (0..ndims).map(|_| get_u32(&mut r, "dim")).collect::<Result<Vec<_>>>()?;
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: element count overflows")))?;
        let mut bytes = vec![0u8; numel * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Checkpoint(format!("{name}: truncated data")))?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        tensors.push(CheckpointTensor { name, dims, data });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after the last tensor".into()));
    }
    Ok(tensors)
}

pub fn save_checkpoint<T: Real>(model: &Model<T>, path: &Path) -> Result<()> {
    write_checkpoint(model, BufWriter::new(File::create(path)?))
}

/// Reads `path` into `model`, which must have exactly the stored tensors.
pub fn load_checkpoint<T: Real>(model: &mut Model<T>, path: &Path) -> Result<()> {
    let tensors = read_checkpoint(BufReader::new(File::open(path)?))?;
    apply_tensors(model, tensors)
}

pub(crate) fn apply_tensors<T: Real>(model: &mut Model<T>, tensors: Vec<CheckpointTensor>) -> Result<()> {
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    if names.len() != tensors.len() {
        return Err(Error::Checkpoint(format!(
            "model has {} tensors, checkpoint has {}",
            names.len(),
            tensors.len()
        )));
    }
    for ((name, p), t) in names.iter().zip(model.params_mut()).zip(tensors) {
        if *name != t.name {
            return Err(Error::Checkpoint(format!("expected tensor {name}, found {}", t.name)));
        }
        if p.shape != t.dims {
            return Err(Error::Checkpoint(format!("{name}: expected dims {:?}, found {:?}", p.shape, t.dims)));
        }
        p.value = t.data.iter().map(|&v| T::lit(v as f64)).collect();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::layers::{LayerKind, LayerSpec};
    use crate::model::small_cnn;

    fn model(seed: u64) -> Model<f32> {
        let specs = small_cnn(LayerKind::Rsdw, 3, 3, &[4, 5], 10, true).unwrap();
        let mut m = Model::new(&specs, (3, 8, 8)).unwrap();
        m.init_glorot(&mut ChaCha8Rng::seed_from_u64(seed));
        m
    }

    #[test]
    fn round_trip_restores_every_value() {
        let a = model(1);
        let mut bytes = Vec::new();
        write_checkpoint(&a, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"RCV1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        let mut b = model(2);
        apply_tensors(&mut b, read_checkpoint(bytes.as_slice()).unwrap()).unwrap();
        for (p, q) in a.params().zip(b.params()) {
            assert_eq!(p.value, q.value);
        }
        let mut again = Vec::new();
        write_checkpoint(&b, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn names_follow_layer_order() {
        let t = {
            let mut bytes = Vec::new();
            write_checkpoint(&model(1), &mut bytes).unwrap();
            read_checkpoint(bytes.as_slice()).unwrap()
        };
        assert_eq!(t[0].name, "layer.0.expand");
        assert_eq!(t[0].dims, vec![4, 3, 1, 1]);
        assert!(t.iter().any(|t| t.name == "layer.1.running_var"));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut bytes = Vec::new();
        write_checkpoint(&model(1), &mut bytes).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(read_checkpoint(magic.as_slice()).is_err());
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let mut bytes = Vec::new();
        write_checkpoint(&model(1), &mut bytes).unwrap();
        let other = small_cnn(LayerKind::Conv, 3, 3, &[4, 5], 10, true).unwrap();
        let mut m = Model::<f32>::new(&other, (3, 8, 8)).unwrap();
        assert!(apply_tensors(&mut m, read_checkpoint(bytes.as_slice()).unwrap()).is_err());
        let mut small = Model::<f32>::new(&[LayerSpec::relu()], (3, 8, 8)).unwrap();
        assert!(apply_tensors(&mut small, read_checkpoint(bytes.as_slice()).unwrap()).is_err());
    }
}
