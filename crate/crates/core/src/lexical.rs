//! Positional inverted index with BM25 scoring restricted to document views.
//!
//! Tokens are lowercased Unicode words; contiguous Han runs are indexed as
//! single characters plus overlapping bigrams. The persisted layout is
//! described in `docs/lexical-index.md`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};
use crate::text::is_cjk;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

const MAGIC: &[u8; 4] = b"OLIX";
const FORMAT_VERSION: u32 = 1;

fn is_han_word(w: &str) -> bool {
    let mut chars = w.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if is_cjk(c))
}

/// Index/query tokenizer.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    let mut run: Vec<char> = Vec::new();
    let mut run_end = 0usize;
    let flush = |run: &mut Vec<char>, out: &mut Vec<String>| {
        for (i, c) in run.iter().enumerate() {
            out.push(c.to_string());
            if let Some(n) = run.get(i + 1) {
                out.push([*c, *n].iter().collect());
            }
        }
        run.clear();
    };
    for (start, word) in lowered.unicode_word_indices() {
        if is_han_word(word) {
            if !run.is_empty() && start != run_end {
                flush(&mut run, &mut out);
            }
            run.extend(word.chars());
            run_end = start + word.len();
        } else {
            flush(&mut run, &mut out);
            out.push(word.to_string());
        }
    }
    flush(&mut run, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    /// Document ordinal within the snapshot.
    pub doc: u32,
    pub positions: Vec<u32>,
}

impl Posting {
    pub fn tf(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    terms: BTreeMap<String, Vec<Posting>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: BM25_K1,
            b: BM25_B,
        }
    }
}

impl InvertedIndex {
    /// Builds from `(doc id, text)` in snapshot order.
    pub fn build<'a>(docs: impl IntoIterator<Item = (&'a str, String)>) -> Self {
        let mut idx = Self::default();
        for (ord, (id, text)) in docs.into_iter().enumerate() {
            let tokens = tokenize(&text);
            idx.doc_ids.push(id.to_string());
            idx.doc_lengths.push(tokens.len() as u32);
            for (pos, tok) in tokens.into_iter().enumerate() {
                let postings = idx.terms.entry(tok).or_default();
                match postings.last_mut() {
                    Some(p) if p.doc == ord as u32 => p.positions.push(pos as u32),
                    _ => postings.push(Posting {
                        doc: ord as u32,
                        positions: vec![pos as u32],
                    }),
                }
            }
        }
        idx
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn doc_id(&self, ord: u32) -> &str {
        &self.doc_ids[ord as usize]
    }

    pub fn doc_length(&self, ord: u32) -> u32 {
        self.doc_lengths[ord as usize]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.terms.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    /// BM25 over the documents in `view` (ordinals), with collection
    /// statistics (N, df, average length) taken from the view alone. Returns
    /// the top `min(n, |view|)` ordinals with scores, score descending, ties
    /// by ascending document id. Documents without query terms score 0.
    pub fn bm25(
        &self,
        query: &str,
        view: &[u32],
        n: usize,
        params: Bm25Params,
    ) -> Result<Vec<(u32, f64)>> {
        let q = tokenize(query);
        if q.is_empty() {
            return Err(Error::EmptyQuery);
        }
        if view.is_empty() || n == 0 {
            return Ok(Vec::new());
        }
        let mut in_view = vec![false; self.doc_ids.len()];
        for &o in view {
            in_view[o as usize] = true;
        }
        let big_n = view.len() as f64;
        let avgdl = view
            .iter()
            .map(|&o| f64::from(self.doc_lengths[o as usize]))
            .sum::<f64>()
            / big_n;
        let mut scores: BTreeMap<u32, f64> = view.iter().map(|&o| (o, 0.0)).collect();
        for term in &q {
            let postings: Vec<&Posting> = self
                .postings(term)
                .iter()
                .filter(|p| in_view[p.doc as usize])
                .collect();
            if postings.is_empty() {
                continue;
            }
            let df = postings.len() as f64;
            let idf = (1.0 + (big_n - df + 0.5) / (df + 0.5)).ln();
            for p in postings {
                let tf = p.tf() as f64;
                let dl = f64::from(self.doc_lengths[p.doc as usize]);
                let norm = params.k1 * (1.0 - params.b + params.b * dl / avgdl);
                *scores.get_mut(&p.doc).expect("view member") +=
                    idf * tf * (params.k1 + 1.0) / (tf + norm);
            }
        }
        let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[a.0 as usize].cmp(&self.doc_ids[b.0 as usize]))
        });
        ranked.truncate(n);
        Ok(ranked)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        fn u32le(w: &mut impl Write, v: u32) -> std::io::Result<()> {
            w.write_all(&v.to_le_bytes())
        }
        fn bytes(w: &mut impl Write, b: &[u8]) -> std::io::Result<()> {
            u32le(w, b.len() as u32)?;
            w.write_all(b)
        }
        w.write_all(MAGIC)?;
        u32le(w, FORMAT_VERSION)?;
        u32le(w, self.doc_ids.len() as u32)?;
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            bytes(w, id.as_bytes())?;
            u32le(w, *len)?;
        }
        u32le(w, self.terms.len() as u32)?;
        for (term, postings) in &self.terms {
            bytes(w, term.as_bytes())?;
            u32le(w, postings.len() as u32)?;
            for p in postings {
                u32le(w, p.doc)?;
                u32le(w, p.positions.len() as u32)?;
                for pos in &p.positions {
                    u32le(w, *pos)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptStore(format!("lexical index: {m}"));
        fn u32le(r: &mut impl Read) -> std::io::Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        }
        fn string(r: &mut impl Read) -> Result<String> {
            let len = u32le(r)? as usize;
            let mut b = vec![0u8; len];
            r.read_exact(&mut b)?;
            String::from_utf8(b)
                .map_err(|_| Error::CorruptStore("lexical index: invalid utf-8".into()))
        }
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32le(r)?;
        if version != FORMAT_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let n_docs = u32le(r)? as usize;
        let mut idx = Self::default();
        for _ in 0..n_docs {
            idx.doc_ids.push(string(r)?);
            idx.doc_lengths.push(u32le(r)?);
        }
        let n_terms = u32le(r)?;
        for _ in 0..n_terms {
            let term = string(r)?;
            let n_post = u32le(r)?;
            let mut postings = Vec::with_capacity(n_post as usize);
            for _ in 0..n_post {
                let doc = u32le(r)?;
                if doc as usize >= n_docs {
                    return Err(corrupt("posting references unknown document"));
                }
                let n_pos = u32le(r)?;
                let positions = (0..n_pos)
                    .map(|_| u32le(r))
                    .collect::<std::io::Result<Vec<_>>>()?;
                postings.push(Posting { doc, positions });
            }
            idx.terms.insert(term, postings);
        }
        Ok(idx)
    }
}
