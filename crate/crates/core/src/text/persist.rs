//! Binary index file. Layout (all integers LEB128 varints unless noted):
//!
//! ```text
//! magic      4 bytes  "CSIX"
//! version    u32 LE   currently 1
//! flags      1 byte   bit 0: stopword removal
//! doc_count
//! doc_count × { id_len, id bytes (UTF-8), doc_length }
//! term_count
//! term_count × { term_len, term bytes (UTF-8), df, df × { doc_gap, tf } }
//! ```
//!
//! Documents appear in ascending id order and terms in ascending byte order;
//! `doc_gap` is the difference from the previous document number in the same
//! postings list (the first gap is the document number itself).

use std::path::Path;

use super::{InvertedIndex, Posting, Tokenizer};
use crate::{Error, Result};

pub const INDEX_MAGIC: &[u8; 4] = b"CSIX";
pub const INDEX_VERSION: u32 = 1;

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_varint(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn truncated(&self) -> Error {
        Error::Malformed(format!("index file truncated at byte {}", self.pos))
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| self.truncated())?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = *self.buf.get(self.pos).ok_or_else(|| self.truncated())?;
            self.pos += 1;
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Malformed(format!("varint overflow at byte {}", self.pos)))
    }

    fn u32_varint(&mut self) -> Result<u32> {
        u32::try_from(self.varint()?).map_err(|_| Error::Malformed(format!("value out of range at byte {}", self.pos)))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.varint()? as usize;
        let b = self.bytes(len)?;
        String::from_utf8(b.to_vec()).map_err(|e| Error::Malformed(format!("invalid UTF-8 in index: {e}")))
    }
}

impl InvertedIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.push(u8::from(self.tokenizer.remove_stopwords));
        put_varint(&mut out, self.doc_ids.len() as u64);
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            put_str(&mut out, id);
            put_varint(&mut out, *len as u64);
        }
        put_varint(&mut out, self.terms.len() as u64);
        for (term, plist) in self.terms.iter().zip(&self.postings) {
            put_str(&mut out, term);
            put_varint(&mut out, plist.len() as u64);
            let mut prev = 0u32;
            for p in plist {
                put_varint(&mut out, (p.doc - prev) as u64);
                put_varint(&mut out, p.tf as u64);
                prev = p.doc;
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.bytes(4)? != INDEX_MAGIC {
            return Err(Error::Malformed("not an index file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(r.bytes(4)?.try_into().unwrap());
        if version != INDEX_VERSION {
            return Err(Error::Malformed(format!("unsupported index version {version}")));
        }
        let tokenizer = Tokenizer {
            remove_stopwords: r.bytes(1)?[0] & 1 == 1,
        };
        let n = r.varint()? as usize;
        let mut doc_ids = Vec::with_capacity(n.min(1 << 20));
        let mut doc_lengths = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            doc_ids.push(r.string()?);
            doc_lengths.push(r.u32_varint()?);
        }
        if doc_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Malformed("document ids not strictly ascending".into()));
        }
        let nt = r.varint()? as usize;
        let mut terms = Vec::with_capacity(nt.min(1 << 20));
        let mut postings = Vec::with_capacity(nt.min(1 << 20));
        for _ in 0..nt {
            let term = r.string()?;
            let df = r.varint()? as usize;
            let mut plist = Vec::with_capacity(df.min(n));
            let mut doc = 0u32;
            for i in 0..df {
                let gap = r.u32_varint()?;
                if i > 0 && gap == 0 {
                    return Err(Error::Malformed(format!("repeated document in postings of `{term}`")));
                }
                doc = doc.checked_add(gap).filter(|&d| (d as usize) < n).ok_or_else(|| {
                    Error::Malformed(format!("posting of `{term}` points past the document table"))
                })?;
                plist.push(Posting { doc, tf: r.u32_varint()? });
            }
            terms.push(term);
            postings.push(plist);
        }
        if r.pos != buf.len() {
            return Err(Error::Malformed("trailing bytes after index".into()));
        }
        Ok(Self::assemble(tokenizer, doc_ids, doc_lengths, terms, postings, None))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}
