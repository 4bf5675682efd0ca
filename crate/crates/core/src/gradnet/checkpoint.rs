//! Binary checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "FLSBCKPT"
//! version    u32
//! meta_len   u32, then meta_len bytes of UTF-8 model description
//! n_blocks   u32
//! per block: name_len u32, name bytes, count u64, count x f32
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::ParamStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FLSBCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(mut w: impl Write, meta: &str, store: &ParamStore) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    w.write_all(&(store.blocks().len() as u32).to_le_bytes())?;
    let mut buf = Vec::new();
    for b in store.blocks() {
        w.write_all(&(b.name.len() as u32).to_le_bytes())?;
        w.write_all(b.name.as_bytes())?;
        w.write_all(&(b.len as u64).to_le_bytes())?;
        buf.clear();
        for v in &store.values[b.offset..b.offset + b.len] {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Returns the meta text and a store holding the blocks in file order.
pub fn read_checkpoint(mut r: impl Read) -> Result<(String, ParamStore)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)?;
    let meta = String::from_utf8(meta).map_err(|_| Error::Format("checkpoint meta is not UTF-8".into()))?;
    let n_blocks = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..n_blocks {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 4096 {
            return Err(Error::Format("implausible block name length".into()));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("block name is not UTF-8".into()))?;
        let count = read_u64(&mut r)? as usize;
        let mut raw = vec![0u8; count * 4];
        r.read_exact(&mut raw)?;
        let off = store.add_block(&name, count);
        for (dst, chunk) in store.values_mut(off, count).iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
        }
    }
    Ok((meta, store))
}

pub fn save_checkpoint(path: &Path, meta: &str, store: &ParamStore) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(&mut w, meta, store)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(String, ParamStore)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_byte_identical() {
        let mut s = ParamStore::new();
        let a = s.add_block("alpha", 3);
        s.add_block("beta.l0.weight", 2);
        s.values_mut(a, 3).copy_from_slice(&[1.5, -2.25, 3.0e-4]);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "kind = \"test\"", &s).unwrap();
        let (meta, back) = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(meta, "kind = \"test\"");
        assert_eq!(back.blocks().len(), 2);
        assert_eq!(back.values[0], 1.5);
        let mut buf2 = Vec::new();
        write_checkpoint(&mut buf2, &meta, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_checkpoint(&b"NOTACKPT\x01\0\0\0"[..]).is_err());
        let mut s = ParamStore::new();
        s.add_block("a", 4);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "", &s).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(&buf[..]).is_err());
    }
}
