//! On-disk store: `documents.jsonl`, `embeddings.bin` (f32 LE, row-major,
//! same order as documents), `manifest.json` and `lexical.idx`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusSnapshot, Document, KindCounts};
use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};
use crate::lexical::InvertedIndex;

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LEXICAL_FILE: &str = "lexical.idx";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dimension: usize,
    pub count: usize,
    pub embedder_id: String,
    #[serde(default)]
    pub built_at: i64,
    #[serde(default)]
    pub counts: KindCounts,
}

pub fn save(snapshot: &CorpusSnapshot, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut docs = BufWriter::new(fs::File::create(dir.join(DOCUMENTS_FILE))?);
    let mut emb = BufWriter::new(fs::File::create(dir.join(EMBEDDINGS_FILE))?);
    for d in snapshot.documents() {
        serde_json::to_writer(&mut docs, d)?;
        docs.write_all(b"\n")?;
        for x in d
            .embedding
            .as_ref()
            .expect("snapshot docs are embedded")
            .values()
        {
            emb.write_all(&x.to_le_bytes())?;
        }
    }
    docs.flush()?;
    emb.flush()?;
    let mut lex = BufWriter::new(fs::File::create(dir.join(LEXICAL_FILE))?);
    snapshot.lexical().write_to(&mut lex)?;
    lex.flush()?;
    let manifest = Manifest {
        dimension: snapshot.dimension(),
        count: snapshot.len(),
        embedder_id: snapshot.embedder_id().to_string(),
        built_at: snapshot.built_at(),
        counts: snapshot.counts(),
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Writes into a sibling staging directory, then swaps it into place, so
/// readers never see a half-written store.
pub fn save_atomic(snapshot: &CorpusSnapshot, dir: &Path) -> Result<()> {
    let staging = dir.with_extension("staging");
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    save(snapshot, &staging)?;
    let old = dir.with_extension("old");
    if dir.exists() {
        if old.exists() {
            fs::remove_dir_all(&old)?;
        }
        fs::rename(dir, &old)?;
    }
    fs::rename(&staging, dir)?;
    if old.exists() {
        fs::remove_dir_all(&old)?;
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let bytes = fs::read(dir.join(MANIFEST_FILE))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::CorruptStore(format!("manifest: {e}")))
}

pub fn load(dir: &Path) -> Result<CorpusSnapshot> {
    let manifest = read_manifest(dir)?;
    let reader = BufReader::new(fs::File::open(dir.join(DOCUMENTS_FILE))?);
    let mut documents: Vec<Document> = Vec::with_capacity(manifest.count);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        documents.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::CorruptStore(format!("{DOCUMENTS_FILE}:{}: {e}", i + 1)))?,
        );
    }
    if documents.len() != manifest.count {
        return Err(Error::CorruptStore(format!(
            "manifest says {} documents, found {}",
            manifest.count,
            documents.len()
        )));
    }
    let raw = fs::read(dir.join(EMBEDDINGS_FILE))?;
    let row_bytes = manifest.dimension * 4;
    if raw.len() != row_bytes * manifest.count {
        return Err(Error::CorruptStore(format!(
            "{EMBEDDINGS_FILE} has {} bytes, expected {}",
            raw.len(),
            row_bytes * manifest.count
        )));
    }
    for (d, row) in documents.iter_mut().zip(raw.chunks_exact(row_bytes.max(1))) {
        let values = row
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        d.embedding = Some(EmbeddingVector::from_unit(values));
    }
    let lexical = match fs::File::open(dir.join(LEXICAL_FILE)) {
        Ok(f) => InvertedIndex::read_from(&mut BufReader::new(f))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            InvertedIndex::build(documents.iter().map(|d| (d.id.as_str(), d.indexed_text())))
        }
        Err(e) => return Err(e.into()),
    };
    CorpusSnapshot::with_index(documents, manifest.built_at, &manifest.embedder_id, lexical)
}
