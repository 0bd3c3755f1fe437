//! Data bundled into the binary so the engine works with no files on disk.

use crate::lang::LanguageTag;

pub const SEED_EN: &str = include_str!("../assets/seed_en.txt");
pub const SEED_FR: &str = include_str!("../assets/seed_fr.txt");
pub const SEED_ZH: &str = include_str!("../assets/seed_zh.txt");

pub const PHRASE_TABLE: &str = include_str!("../assets/phrase_table.jsonl");
pub const LEXICON: &str = include_str!("../assets/lexicon.jsonl");
pub const TOOLS: &str = include_str!("../assets/tools.jsonl");
pub const GAZETTEER: &str = include_str!("../assets/gazetteer.txt");
pub const DEMO_CORPUS: &str = include_str!("../assets/demo_corpus.jsonl");
pub const DEMO_MANIFEST: &str = include_str!("../assets/demo_manifest.json");
pub const INTENT_TRAIN: &str = include_str!("../assets/intent_train.jsonl");
pub const INTENT_TEST: &str = include_str!("../assets/intent_test.jsonl");

pub const PROMPT_TEMPLATE: &str = include_str!("../assets/prompt_template.txt");
/// sha256 of `PROMPT_TEMPLATE`; a test keeps the two in sync.
pub const PROMPT_TEMPLATE_SHA256: &str =
    "67bd1f3fb65559a833882bdec4f568d5005fb252d66056d08557b8c507bd56ce";

pub fn seed_corpora() -> Vec<(LanguageTag, &'static str)> {
    ["en", "fr", "zh"]
        .into_iter()
        .zip([SEED_EN, SEED_FR, SEED_ZH])
        .map(|(c, s)| (LanguageTag::new(c).expect("static tag"), s))
        .collect()
}
