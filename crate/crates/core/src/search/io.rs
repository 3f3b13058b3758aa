//! Index file: magic, version (u32), scalar width (u8), variant tag (u8:
//! 0 exact, 1 IVF), item count and dimension (u64), item vectors; IVF adds
//! the cluster count (u64), centroids, and per list its length (u64) and
//! ids (u32). Little-endian throughout.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{ExactIndex, ItemIndex, IvfIndex, SearchError};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"RBINDEX\0";
const VERSION: u32 = 1;

fn write_matrix<T: Scalar, W: Write>(m: &Matrix<T>, w: &mut W) -> Result<(), SearchError> {
    for &v in m.as_slice() {
        v.write_le(w)?;
    }
    Ok(())
}

fn read_matrix<T: Scalar, R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Matrix<T>, SearchError> {
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| SearchError::Format("matrix size overflows".into()))?;
    let mut data = Vec::with_capacity(n.min(1 << 26));
    for _ in 0..n {
        data.push(T::read_le(r)?);
    }
    Ok(Matrix::from_vec(rows, cols, data).unwrap())
}

pub fn write_index<T: Scalar, W: Write>(index: &ItemIndex<T>, w: &mut W) -> Result<(), SearchError> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u8(T::WIDTH)?;
    w.write_u8(match index {
        ItemIndex::Exact(_) => 0,
        ItemIndex::Ivf(_) => 1,
    })?;
    let items = index.items();
    w.write_u64::<LittleEndian>(items.rows() as u64)?;
    w.write_u64::<LittleEndian>(items.cols() as u64)?;
    write_matrix(items, w)?;
    if let ItemIndex::Ivf(ivf) = index {
        w.write_u64::<LittleEndian>(ivf.n_clusters() as u64)?;
        write_matrix(ivf.centroids(), w)?;
        for list in ivf.lists() {
            w.write_u64::<LittleEndian>(list.len() as u64)?;
            for &id in list {
                w.write_u32::<LittleEndian>(id)?;
            }
        }
    }
    Ok(())
}

pub fn read_index<T: Scalar, R: Read>(r: &mut R) -> Result<ItemIndex<T>, SearchError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SearchError::Format("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(SearchError::Format(format!("unsupported version {version}")));
    }
    let width = r.read_u8()?;
    if width != T::WIDTH {
        return Err(SearchError::Format(format!(
            "index stores {width}-byte scalars, expected {}",
            T::WIDTH
        )));
    }
    let tag = r.read_u8()?;
    let rows = r.read_u64::<LittleEndian>()? as usize;
    let cols = r.read_u64::<LittleEndian>()? as usize;
    let items = read_matrix(r, rows, cols)?;
    match tag {
        0 => Ok(ItemIndex::Exact(ExactIndex { items })),
        1 => {
            let nc = r.read_u64::<LittleEndian>()? as usize;
            let centroids = read_matrix(r, nc, cols)?;
            let mut lists = Vec::with_capacity(nc.min(1 << 20));
            for _ in 0..nc {
                let len = r.read_u64::<LittleEndian>()? as usize;
                let mut list = Vec::with_capacity(len.min(1 << 24));
                for _ in 0..len {
                    list.push(r.read_u32::<LittleEndian>()?);
                }
                lists.push(list);
            }
            Ok(ItemIndex::Ivf(IvfIndex::from_parts(items, centroids, lists)?))
        }
        t => Err(SearchError::Format(format!("unknown variant tag {t}"))),
    }
}
