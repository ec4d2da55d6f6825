//! Binary parameter container: named flat `f64` arrays with shapes.
//!
//! Layout (little-endian): magic `UAVCKPT1`, `u32` entry count, then per
//! entry `u32` name length, UTF-8 name, `u32` rank, `u64` per dimension,
//! and the raw `f64` bits. Values are stored bit-for-bit.

use std::io::{Read, Write};

use super::params::ParamSet;
use super::tensor::Tensor;
use super::AutodiffError;

const MAGIC: &[u8; 8] = b"UAVCKPT1";

pub fn write_checkpoint<W: Write>(mut w: W, params: &ParamSet) -> Result<(), AutodiffError> {
    w.write_all(MAGIC)?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, AutodiffError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, AutodiffError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamSet, AutodiffError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(AutodiffError::Checkpoint("bad magic".into()));
    }
    let count = read_u32(&mut r)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_bits(read_u64(&mut r)?));
        }
        params.insert(name, Tensor::new(shape, data)?);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            a in proptest::collection::vec(any::<f64>(), 1..20),
            b in proptest::collection::vec(-1e300f64..1e300, 6),
        ) {
            let mut p = ParamSet::new();
            p.insert("layer.w", Tensor::new(vec![a.len()], a.clone()).unwrap());
            p.insert("layer.b", Tensor::matrix(2, 3, b).unwrap());
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &p).unwrap();
            let q = read_checkpoint(buf.as_slice()).unwrap();
            prop_assert_eq!(p.checksum(), q.checksum());
            for ((n1, t1), (n2, t2)) in p.iter().zip(q.iter()) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(t1.shape(), t2.shape());
                let bits1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
                let bits2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(bits1, bits2);
            }
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&b"NOTACKPT\0\0\0\0"[..]).is_err());
    }
}
