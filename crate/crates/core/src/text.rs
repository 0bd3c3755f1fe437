//! Script helpers shared by the tokenizer, the embedder and language detection.

/// True for Han ideographs (CJK unified, extensions and compatibility blocks).
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x30000..=0x3134F)
}

/// 64-bit FNV-1a. Stable across platforms and toolchains, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Collapse runs of whitespace into a single ASCII space and trim both ends.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits text into segments of either consecutive CJK ideographs or runs of
/// other alphanumeric characters. Everything else acts as a separator.
pub fn script_runs(text: &str) -> Vec<(bool, &str)> {
    let mut out = Vec::new();
    // (byte offset, is_cjk) of the run being accumulated
    let mut open: Option<(usize, bool)> = None;
    for (i, c) in text.char_indices() {
        let class = if is_cjk(c) {
            Some(true)
        } else if c.is_alphanumeric() || (c == '\'' && matches!(open, Some((_, false)))) {
            Some(false)
        } else {
            None
        };
        match (open, class) {
            (Some((_, cjk)), Some(k)) if cjk == k => {}
            (Some((s, cjk)), k) => {
                out.push((cjk, &text[s..i]));
                open = k.map(|k| (i, k));
            }
            (None, k) => open = k.map(|k| (i, k)),
        }
    }
    if let Some((s, cjk)) = open {
        out.push((cjk, &text[s..]));
    }
    out
}
