//! Versioned binary cache of a [`Split`] and the per-dataset cache lock.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::{build_split, DataError, InteractionStore, Split};

const SPLIT_MAGIC: &[u8; 8] = b"RBSPLIT\0";
const SPLIT_VERSION: u32 = 1;

/// Layout: magic, version (u32), train store, test store, SHA-256 of all
/// preceding bytes. Integers are little-endian.
pub fn encode_split(split: &Split) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(SPLIT_MAGIC);
    buf.write_u32::<LittleEndian>(SPLIT_VERSION).unwrap();
    split.train().write_binary(&mut buf).unwrap();
    split.test().write_binary(&mut buf).unwrap();
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

pub fn decode_split(bytes: &[u8]) -> Result<Split, DataError> {
    if bytes.len() < SPLIT_MAGIC.len() + 4 + 32 {
        return Err(DataError::Cache("split cache truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(DataError::Cache("split cache checksum mismatch".into()));
    }
    let mut r = body;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SPLIT_MAGIC {
        return Err(DataError::Cache("bad split cache magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != SPLIT_VERSION {
        return Err(DataError::Cache(format!("unsupported split cache version {version}")));
    }
    let train = InteractionStore::read_binary(&mut r)?;
    let test = InteractionStore::read_binary(&mut r)?;
    if !r.is_empty() {
        return Err(DataError::Cache("trailing bytes in split cache".into()));
    }
    build_split(train, test)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let dir = path
        .parent()
        .ok_or_else(|| DataError::Cache(format!("{} has no parent", path.display())))?;
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().unwrap().to_string_lossy(),
        std::process::id()
    ));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(bytes)?;
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_split_cache(path: &Path) -> Result<Split, DataError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_split(&bytes)
}

/// Exclusive advisory lock on `<dir>/.lock`, released on drop.
#[derive(Debug)]
pub struct CacheLock {
    file: File,
    path: PathBuf,
}

impl CacheLock {
    pub fn acquire(dir: &Path) -> Result<Self, DataError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)?;
        file.lock()?;
        Ok(Self { file, path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Drop for CacheLock {
    fn drop(&mut self) {
        let _ = self.file.unlock();
    }
}
