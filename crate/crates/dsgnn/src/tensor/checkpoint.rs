//! Binary parameter checkpoint: little-endian, magic `DMN1`, then one
//! record per parameter (name length u32, name bytes, rank u32, dims u32
//! each, f32 payload).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const MAGIC: &[u8; 4] = b"DMN1";

pub fn save_params<T: Scalar>(path: impl AsRef<Path>, params: &[(String, Tensor<T>)]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(MAGIC)?;
    for (name, tensor) in params {
        let bytes = name.as_bytes();
        f.write_all(&(bytes.len() as u32).to_le_bytes())?;
        f.write_all(bytes)?;
        f.write_all(&2u32.to_le_bytes())?;
        f.write_all(&(tensor.rows() as u32).to_le_bytes())?;
        f.write_all(&(tensor.cols() as u32).to_le_bytes())?;
        for &v in tensor.data() {
            f.write_all(&(v.to_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_params<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<T>)>> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let mut out = Vec::new();
    loop {
        let mut len_buf = [0u8; 4];
        match f.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        f.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let mut rank_buf = [0u8; 4];
        f.read_exact(&mut rank_buf)?;
        let rank = u32::from_le_bytes(rank_buf);
        if rank != 2 {
            return Err(Error::Checkpoint(format!("unsupported rank {rank}")));
        }
        let mut dim_buf = [0u8; 4];
        f.read_exact(&mut dim_buf)?;
        let rows = u32::from_le_bytes(dim_buf) as usize;
        f.read_exact(&mut dim_buf)?;
        let cols = u32::from_le_bytes(dim_buf) as usize;
        let mut data = Vec::with_capacity(rows * cols);
        let mut val_buf = [0u8; 4];
        for _ in 0..rows * cols {
            f.read_exact(&mut val_buf)?;
            data.push(T::from_f64(f32::from_le_bytes(val_buf) as f64));
        }
        out.push((name, Tensor::from_vec(rows, cols, data)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        let params = vec![
            (
                "layer0.w0".to_string(),
                Tensor::<f32>::from_vec(2, 3, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]).unwrap(),
            ),
            (
                "classifier".to_string(),
                Tensor::<f32>::from_vec(3, 1, vec![1.5, 2.5, -3.5]).unwrap(),
            ),
        ];
        save_params(&p, &params).unwrap();
        let loaded: Vec<(String, Tensor<f32>)> = load_params(&p).unwrap();
        assert_eq!(loaded.len(), 2);
        for ((n0, t0), (n1, t1)) in params.iter().zip(&loaded) {
            assert_eq!(n0, n1);
            assert_eq!(t0.data(), t1.data());
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.ckpt");
        std::fs::write(&p, b"NOPE1234").unwrap();
        assert!(matches!(
            load_params::<f32>(&p),
            Err(Error::Checkpoint(_))
        ));
    }
}
