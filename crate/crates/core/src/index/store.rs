//! On-disk layout of an index directory:
//!
//! - `manifest.json`: format version, BM25 parameters, collection statistics,
//!   stopword fingerprint and a SHA-256 checksum over the payload files.
//! - `postings.bin`: vocabulary, postings and document lengths.
//! - `paragraphs.jsonl`: the document table, one paragraph per ordinal.
//! - `stopwords.txt`: the stopword list the index was built with.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Bm25Params, InvertedIndex, Posting};
use crate::corpus::{Paragraph, Stopwords};
use crate::error::{Error, Result};
use crate::jsonl;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MSIX";

const MANIFEST: &str = "manifest.json";
const POSTINGS: &str = "postings.bin";
const PARAGRAPHS: &str = "paragraphs.jsonl";
const STOPWORDS: &str = "stopwords.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    pub k1: f64,
    pub b: f64,
    pub stopword_hash: String,
    pub doc_count: usize,
    pub avg_doc_len: f64,
    pub vocab_size: usize,
    pub checksum: String,
}

impl InvertedIndex {
    pub fn manifest(&self) -> Result<IndexManifest> {
        let payload = self.encode_payload()?;
        Ok(self.manifest_for(&payload))
    }

    fn manifest_for(&self, payload: &Payload) -> IndexManifest {
        IndexManifest {
            format_version: FORMAT_VERSION,
            k1: self.params.k1,
            b: self.params.b,
            stopword_hash: self.stopwords.fingerprint(),
            doc_count: self.doc_count(),
            avg_doc_len: self.avg_doc_len,
            vocab_size: self.vocab.len(),
            checksum: payload.checksum(),
        }
    }

    /// Writes the index into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<IndexManifest> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let payload = self.encode_payload()?;
        let manifest = self.manifest_for(&payload);
        write(&dir.join(POSTINGS), &payload.postings)?;
        write(&dir.join(PARAGRAPHS), &payload.paragraphs)?;
        write(&dir.join(STOPWORDS), &payload.stopwords)?;
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        write(&dir.join(MANIFEST), &json)?;
        Ok(manifest)
    }

    /// Loads an index directory, verifying the payload checksum.
    pub fn load(dir: &Path) -> Result<InvertedIndex> {
        let manifest = read_manifest(dir)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::IndexFormat(format!("unsupported format_version {}", manifest.format_version)));
        }
        let payload = Payload {
            postings: read(&dir.join(POSTINGS))?,
            paragraphs: read(&dir.join(PARAGRAPHS))?,
            stopwords: read(&dir.join(STOPWORDS))?,
        };
        if payload.checksum() != manifest.checksum {
            return Err(Error::IndexFormat(format!("checksum mismatch in {}", dir.display())));
        }
        let params = Bm25Params::new(manifest.k1, manifest.b)?;
        let stopwords = Stopwords::parse(
            std::str::from_utf8(&payload.stopwords).map_err(|e| Error::IndexFormat(format!("stopwords: {e}")))?,
        );
        let mut paragraphs = Vec::new();
        for (i, line) in payload.paragraphs.split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let p: Paragraph = serde_json::from_slice(line).map_err(|e| Error::Parse {
                path: dir.join(PARAGRAPHS),
                line: i + 1,
                message: e.to_string(),
            })?;
            paragraphs.push(p);
        }
        let decoded = decode_postings(&payload.postings)?;
        if decoded.doc_len.len() != paragraphs.len() {
            return Err(Error::IndexFormat("document table length mismatch".into()));
        }
        let mut doc_terms: Vec<Vec<(u32, u32)>> = vec![Vec::new(); paragraphs.len()];
        for (id, list) in decoded.postings.iter().enumerate() {
            for p in list {
                let slot = doc_terms.get_mut(p.ordinal as usize).ok_or(Error::UnknownOrdinal(p.ordinal as usize))?;
                slot.push((id as u32, p.tf));
            }
        }
        let index = InvertedIndex::from_parts(
            params,
            stopwords,
            decoded.vocab,
            decoded.postings,
            doc_terms,
            decoded.doc_len,
            paragraphs,
        );
        Ok(index)
    }

    fn encode_payload(&self) -> Result<Payload> {
        let mut postings = Vec::new();
        postings.extend_from_slice(MAGIC);
        put_u32(&mut postings, FORMAT_VERSION);
        put_u32(&mut postings, self.vocab.len() as u32);
        for (term, list) in self.vocab.iter().zip(&self.postings) {
            put_u32(&mut postings, term.len() as u32);
            postings.extend_from_slice(term.as_bytes());
            put_u32(&mut postings, list.len() as u32);
            for p in list {
                put_u32(&mut postings, p.ordinal);
                put_u32(&mut postings, p.tf);
            }
        }
        put_u32(&mut postings, self.doc_len.len() as u32);
        for &len in &self.doc_len {
            put_u32(&mut postings, len);
        }

        let mut paragraphs = Vec::new();
        jsonl::write_to(&mut paragraphs, &self.paragraphs).map_err(|e| Error::io("encoding paragraphs", e))?;

        let mut stopwords = String::new();
        for term in self.stopwords.iter() {
            stopwords.push_str(term);
            stopwords.push('\n');
        }
        Ok(Payload { postings, paragraphs, stopwords: stopwords.into_bytes() })
    }
}

/// Reads only `manifest.json` from an index directory.
pub fn read_manifest(dir: &Path) -> Result<IndexManifest> {
    let bytes = read(&dir.join(MANIFEST))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Hex SHA-256 of the raw `manifest.json` bytes.
pub fn manifest_hash(dir: &Path) -> Result<String> {
    let bytes = read(&dir.join(MANIFEST))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Payload {
    postings: Vec<u8>,
    paragraphs: Vec<u8>,
    stopwords: Vec<u8>,
}

impl Payload {
    fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for part in [&self.postings, &self.paragraphs, &self.stopwords] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part);
        }
        hex::encode(hasher.finalize())
    }
}

struct DecodedPostings {
    vocab: Vec<String>,
    postings: Vec<Vec<Posting>>,
    doc_len: Vec<u32>,
}

fn decode_postings(bytes: &[u8]) -> Result<DecodedPostings> {
    let mut r = Cursor { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::IndexFormat("bad magic in postings.bin".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::IndexFormat(format!("postings.bin version {version}")));
    }
    let vocab_len = r.u32()? as usize;
    let mut vocab = Vec::with_capacity(vocab_len);
    let mut postings = Vec::with_capacity(vocab_len);
    for _ in 0..vocab_len {
        let len = r.u32()? as usize;
        let term = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::IndexFormat(format!("term is not UTF-8: {e}")))?
            .to_string();
        let count = r.u32()? as usize;
        let mut list = Vec::with_capacity(count);
        for _ in 0..count {
            list.push(Posting { ordinal: r.u32()?, tf: r.u32()? });
        }
        vocab.push(term);
        postings.push(list);
    }
    let docs = r.u32()? as usize;
    let mut doc_len = Vec::with_capacity(docs);
    for _ in 0..docs {
        doc_len.push(r.u32()?);
    }
    if r.pos != bytes.len() {
        return Err(Error::IndexFormat("trailing bytes in postings.bin".into()));
    }
    Ok(DecodedPostings { vocab, postings, doc_len })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::IndexFormat("truncated postings.bin".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}
