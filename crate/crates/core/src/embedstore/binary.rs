// Binary vector store layout (all integers little-endian):
//
//   magic      8 bytes  "PSIMVEC\0"
//   version    u32
//   dim        u32
//   count      u64
//   casing     u8       0 = lower, 1 = preserve
//   lang       u16 length + UTF-8 bytes
//   keys       count x (u32 length + UTF-8 bytes), sorted
//   payload    count x dim f32, rows in key order
//   checksum   32 bytes, SHA-256 of everything above

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Casing, StoreError, VectorStore};

const MAGIC: &[u8; 8] = b"PSIMVEC\0";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

pub fn compile_binary(store: &VectorStore, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let words = store.words();
    let mut buf = Vec::with_capacity(64 + words.len() * (store.dim() * 4 + 16));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(store.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(words.len() as u64).to_le_bytes());
    buf.push(match store.casing() {
        Casing::Lower => 0,
        Casing::Preserve => 1,
    });
    buf.extend_from_slice(&(store.lang().len() as u16).to_le_bytes());
    buf.extend_from_slice(store.lang().as_bytes());
    for w in &words {
        buf.extend_from_slice(&(w.len() as u32).to_le_bytes());
        buf.extend_from_slice(w.as_bytes());
    }
    for w in &words {
        let row = store.index[*w];
        for v in &store.data[row * store.dim()..(row + 1) * store.dim()] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    fs::write(path, buf).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, len: usize) -> Result<String, String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| e.to_string())
    }
}

pub fn open_binary(path: impl AsRef<Path>) -> Result<VectorStore, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |msg: String| StoreError::Malformed {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < MAGIC.len() + 4 + CHECKSUM_LEN || &bytes[..MAGIC.len()] != MAGIC {
        return Err(malformed("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(StoreError::Checksum { path: path.to_path_buf() });
    }

    let mut r = Reader { buf: body, pos: 12 };
    let parsed = (|| -> Result<VectorStore, String> {
        let dim = r.u32()? as usize;
        let count = r.u64()? as usize;
        let casing = match r.take(1)?[0] {
            0 => Casing::Lower,
            1 => Casing::Preserve,
            other => return Err(format!("unknown casing tag {other}")),
        };
        let lang_len = r.u16()? as usize;
        let lang = r.string(lang_len)?;
        let mut words = Vec::with_capacity(count.min(body.len()));
        for _ in 0..count {
            let len = r.u32()? as usize;
            words.push(r.string(len)?);
        }
        let mut store = VectorStore::new(lang, dim, casing);
        store.data.reserve(count * dim);
        for w in words {
            let raw = r.take(dim * 4)?;
            let row: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let idx = store.index.len();
            if store.index.insert(w.clone(), idx).is_some() {
                return Err(format!("duplicate key {w:?}"));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(format!("non-finite component for {w:?}"));
            }
            store.data.extend_from_slice(&row);
        }
        if r.pos != body.len() {
            return Err(format!("{} trailing bytes", body.len() - r.pos));
        }
        Ok(store)
    })();
    parsed.map_err(malformed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> VectorStore {
        let mut s = VectorStore::new("pt", 3, Casing::Lower);
        s.insert("cela", &[1.0, 2.0, 3.0]).unwrap();
        s.insert("quarto", &[-1.0, 0.5, 0.25]).unwrap();
        s.insert("célula", &[0.0, 1.0, 0.0]).unwrap();
        s
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pt.bin");
        let s = fixture();
        compile_binary(&s, &p).unwrap();
        let back = open_binary(&p).unwrap();
        assert_eq!(back.lang(), "pt");
        assert_eq!(back.dim(), 3);
        for w in s.words() {
            assert_eq!(s.get(w), back.get(w));
        }
        assert_eq!(back.len(), 3);
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        compile_binary(&VectorStore::new("en", 5, Casing::Preserve), &p).unwrap();
        let back = open_binary(&p).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim(), 5);
        assert_eq!(back.casing(), Casing::Preserve);
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pt.bin");
        compile_binary(&fixture(), &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        let n = bytes.len();
        bytes[n - CHECKSUM_LEN - 5] ^= 0x40;
        fs::write(&p, bytes).unwrap();
        assert!(matches!(open_binary(&p), Err(StoreError::Checksum { .. })));
    }

    #[test]
    fn version_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pt.bin");
        compile_binary(&fixture(), &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes[8] = 9;
        fs::write(&p, bytes).unwrap();
        assert!(matches!(open_binary(&p), Err(StoreError::VersionMismatch { found: 9, .. })));
    }
}
