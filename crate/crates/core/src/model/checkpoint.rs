//! Model checkpoint: magic, version (u32), scalar width (u8), user count,
//! item count and dimension (u64 each), then the user and item tables row by
//! row. Little-endian throughout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{ModelError, ModelParams};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"RBCKPT\0\0";
const VERSION: u32 = 1;

pub fn write_checkpoint<T: Scalar, W: Write>(params: &ModelParams<T>, w: &mut W) -> Result<(), ModelError> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u8(T::WIDTH)?;
    w.write_u64::<LittleEndian>(params.num_users() as u64)?;
    w.write_u64::<LittleEndian>(params.num_items() as u64)?;
    w.write_u64::<LittleEndian>(params.dim() as u64)?;
    for &v in params.user_emb.as_slice().iter().chain(params.item_emb.as_slice()) {
        v.write_le(w)?;
    }
    Ok(())
}

/// Reads a checkpoint of either width, converting to `T`.
pub fn read_checkpoint<T: Scalar, R: Read>(r: &mut R) -> Result<ModelParams<T>, ModelError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let width = r.read_u8()?;
    let users = r.read_u64::<LittleEndian>()? as usize;
    let items = r.read_u64::<LittleEndian>()? as usize;
    let dim = r.read_u64::<LittleEndian>()? as usize;
    let read_table = |r: &mut R, rows: usize| -> Result<Matrix<T>, ModelError> {
        let n = rows
            .checked_mul(dim)
            .ok_or_else(|| ModelError::Checkpoint("table size overflows".into()))?;
        let mut data = Vec::with_capacity(n.min(1 << 26));
        for _ in 0..n {
            let v = match width {
                4 => T::of(f32::read_le(r)? as f64),
                8 => T::of(f64::read_le(r)?),
                w => return Err(ModelError::Checkpoint(format!("unsupported scalar width {w}"))),
            };
            data.push(v);
        }
        Ok(Matrix::from_vec(rows, dim, data).unwrap())
    };
    let user_emb = read_table(r, users)?;
    let item_emb = read_table(r, items)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(ModelError::Checkpoint("trailing bytes".into()));
    }
    ModelParams::new(user_emb, item_emb)
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: &Path) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(params, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ModelParams<T>, ModelError> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn roundtrip_and_width_conversion() {
        let p = init_params::<f32>(3, 5, 4, 8).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 1 + 24 + 4 * 32);
        assert_eq!(read_checkpoint::<f32, _>(&mut &buf[..]).unwrap(), p);
        let wide: ModelParams<f64> = read_checkpoint(&mut &buf[..]).unwrap();
        assert_eq!(wide.cast::<f32>(), p);
        assert!(read_checkpoint::<f32, _>(&mut &buf[..buf.len() - 2]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint::<f32, _>(&mut &extra[..]).is_err());
    }
}
