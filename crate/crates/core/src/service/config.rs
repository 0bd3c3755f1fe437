//! Service configuration: a TOML key/value file plus `ALOHA_*` environment
//! overrides (`ALOHA_TOP_N=5` overrides `top_n`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intent::IntentParams;
use crate::lang::LanguageTag;
use crate::lexical::Bm25Params;
use crate::retrieval::{
    Bm25ParamsWire, RetrievalParams, ThresholdOn, DEFAULT_THRESHOLD, DEFAULT_TOP_N,
};

pub const ENV_PREFIX: &str = "ALOHA_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pivot_lang: String,
    pub k: usize,
    pub k_vote: usize,
    pub intent_gate: f64,
    pub top_n: usize,
    pub threshold: f64,
    pub threshold_on: ThresholdOn,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub provider_timeout_ms: u64,
    pub embed_url: Option<String>,
    pub translate_url: Option<String>,
    pub generate_url: Option<String>,
    pub classify_url: Option<String>,
    pub rerank_url: Option<String>,
    pub parse_url: Option<String>,
    pub plan_url: Option<String>,
    /// Directory written by `ingest`; the bundled demo corpus is used when unset.
    pub store_path: Option<PathBuf>,
    /// Start from an empty corpus instead of the demo corpus when no store is set.
    pub empty_corpus: bool,
    pub tools_path: Option<PathBuf>,
    pub gazetteer_path: Option<PathBuf>,
    pub intent_train_path: Option<PathBuf>,
    pub trace_retention: usize,
    /// `POST /v1/ingest` is disabled unless set.
    pub admin_token: Option<String>,
    pub bind: String,
}

impl Default for Config {
    fn default() -> Self {
        let ip = IntentParams::default();
        let bm = Bm25Params::default();
        Self {
            pivot_lang: "zh".into(),
            k: ip.k,
            k_vote: ip.k_vote,
            intent_gate: ip.gate,
            top_n: DEFAULT_TOP_N,
            threshold: DEFAULT_THRESHOLD,
            threshold_on: ThresholdOn::Rerank,
            bm25_k1: bm.k1,
            bm25_b: bm.b,
            provider_timeout_ms: crate::providers::DEFAULT_TIMEOUT.as_millis() as u64,
            embed_url: None,
            translate_url: None,
            generate_url: None,
            classify_url: None,
            rerank_url: None,
            parse_url: None,
            plan_url: None,
            store_path: None,
            empty_corpus: false,
            tools_path: None,
            gazetteer_path: None,
            intent_train_path: None,
            trace_retention: 1024,
            admin_token: None,
            bind: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Clone, Copy)]
enum Ty {
    Str,
    Int,
    Float,
    Bool,
}

const KEYS: &[(&str, Ty)] = &[
    ("pivot_lang", Ty::Str),
    ("k", Ty::Int),
    ("k_vote", Ty::Int),
    ("intent_gate", Ty::Float),
    ("top_n", Ty::Int),
    ("threshold", Ty::Float),
    ("threshold_on", Ty::Str),
    ("bm25_k1", Ty::Float),
    ("bm25_b", Ty::Float),
    ("provider_timeout_ms", Ty::Int),
    ("embed_url", Ty::Str),
    ("translate_url", Ty::Str),
    ("generate_url", Ty::Str),
    ("classify_url", Ty::Str),
    ("rerank_url", Ty::Str),
    ("parse_url", Ty::Str),
    ("plan_url", Ty::Str),
    ("store_path", Ty::Str),
    ("empty_corpus", Ty::Bool),
    ("tools_path", Ty::Str),
    ("gazetteer_path", Ty::Str),
    ("intent_train_path", Ty::Str),
    ("trace_retention", Ty::Int),
    ("admin_token", Ty::Str),
    ("bind", Ty::Str),
];

fn env_value(key: &str, ty: Ty, raw: &str) -> Result<toml::Value> {
    let bad = |what: &str| {
        Error::Config(format!(
            "{ENV_PREFIX}{}={raw:?} is not {what}",
            key.to_uppercase()
        ))
    };
    Ok(match ty {
        Ty::Str => toml::Value::String(raw.to_string()),
        Ty::Int => toml::Value::Integer(raw.trim().parse().map_err(|_| bad("an integer"))?),
        Ty::Float => toml::Value::Float(raw.trim().parse().map_err(|_| bad("a number"))?),
        Ty::Bool => toml::Value::Boolean(raw.trim().parse().map_err(|_| bad("true or false"))?),
    })
}

impl Config {
    /// Parses `text` and applies overrides from `env` (name, value) pairs.
    /// Unknown `ALOHA_*` names are ignored; unknown file keys are errors.
    pub fn from_toml_str<I, K, V>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for (name, value) in env {
            let Some(key) = name.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = key.to_lowercase();
            if let Some(&(k, ty)) = KEYS.iter().find(|(k, _)| *k == key) {
                table.insert(k.to_string(), env_value(k, ty, value.as_ref())?);
            }
        }
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if any) and the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, std::env::vars())
    }

    pub fn validate(&self) -> Result<()> {
        LanguageTag::new(&self.pivot_lang)?;
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if self.k == 0 || self.k_vote == 0 || self.top_n == 0 {
            return err("k, k_vote and top_n must be positive");
        }
        if !(-1.0..=1.0).contains(&self.threshold) || !(-1.0..=1.0).contains(&self.intent_gate) {
            return err("threshold and intent_gate must lie in [-1, 1]");
        }
        if self.bm25_k1 < 0.0 || !(0.0..=1.0).contains(&self.bm25_b) {
            return err("bm25_k1 must be >= 0 and bm25_b in [0, 1]");
        }
        if self.provider_timeout_ms == 0 {
            return err("provider_timeout_ms must be positive");
        }
        Ok(())
    }

    pub fn pivot(&self) -> LanguageTag {
        LanguageTag::new(&self.pivot_lang).expect("validated")
    }

    pub fn intent_params(&self) -> IntentParams {
        IntentParams {
            k: self.k,
            k_vote: self.k_vote,
            gate: self.intent_gate,
        }
    }

    pub fn retrieval_params(&self) -> RetrievalParams {
        RetrievalParams {
            top_n: self.top_n,
            threshold: self.threshold,
            threshold_on: self.threshold_on,
            bm25: Bm25ParamsWire {
                k1: self.bm25_k1,
                b: self.bm25_b,
            },
        }
    }

    pub fn provider_urls(&self) -> [(&'static str, Option<&str>); 7] {
        [
            ("embed", self.embed_url.as_deref()),
            ("translate", self.translate_url.as_deref()),
            ("generate", self.generate_url.as_deref()),
            ("classify", self.classify_url.as_deref()),
            ("rerank", self.rerank_url.as_deref()),
            ("parse", self.parse_url.as_deref()),
            ("plan", self.plan_url.as_deref()),
        ]
    }
}
