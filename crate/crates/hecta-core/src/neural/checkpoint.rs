//! Binary parameter container.
//!
//! Layout: magic, format version, a UTF-8 metadata blob (JSON, owned by the
//! caller), then each tensor as name / shape / little-endian f64 payload.
//! Raw bit copies make a load/save round trip reproduce forward passes
//! exactly.

use std::io::{Read, Write};

use super::tensor::{ParamStore, Tensor};
use super::NeuralError;

const MAGIC: &[u8; 8] = b"HECTAPS\x01";
const VERSION: u32 = 1;

pub fn save(store: &ParamStore, meta: &str, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let meta_bytes = meta.as_bytes();
    w.write_all(&(meta_bytes.len() as u64).to_le_bytes())?;
    w.write_all(meta_bytes)?;
    w.write_all(&(store.len() as u64).to_le_bytes())?;
    for (name, tensor) in store.iter() {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &dim in tensor.shape() {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N], NeuralError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32, NeuralError> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64, NeuralError> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

pub fn load(mut r: impl Read) -> Result<(ParamStore, String), NeuralError> {
    let magic = read_exact::<8>(&mut r)?;
    if &magic != MAGIC {
        return Err(NeuralError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NeuralError::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let meta_len = read_u64(&mut r)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)
        .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    let meta = String::from_utf8(meta_bytes)
        .map_err(|_| NeuralError::Checkpoint("metadata is not UTF-8".into()))?;

    let count = read_u64(&mut r)? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)
            .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| NeuralError::Checkpoint("tensor name is not UTF-8".into()))?;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(&mut r)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f64::from_le_bytes(read_exact::<8>(&mut r)?));
        }
        store.insert(name, Tensor::from_vec(&shape, data)?);
    }
    Ok((store, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut store = ParamStore::new();
        let data: Vec<f64> = (0..24).map(|_| rng.random_range(-3.0..3.0)).collect();
        store.insert("layer.w", Tensor::from_vec(&[4, 6], data).unwrap());
        store.insert("layer.b", Tensor::from_vec(&[4], vec![0.1, -0.2, 1e-300, 3.7]).unwrap());

        let mut buf = Vec::new();
        save(&store, "{\"k\":1}", &mut buf).unwrap();
        let (loaded, meta) = load(buf.as_slice()).unwrap();
        assert_eq!(meta, "{\"k\":1}");
        assert_eq!(loaded, store);
        for (name, t) in store.iter() {
            let l = loaded.get(name);
            for (a, b) in t.iter().zip(l.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn rejects_truncated_or_foreign_files() {
        assert!(load(&b"not a checkpoint"[..]).is_err());
        let mut buf = Vec::new();
        save(&ParamStore::new(), "", &mut buf).unwrap();
        buf.truncate(10);
        assert!(load(buf.as_slice()).is_err());
    }
}
