//! The bundled policy corpus, each policy paired with a brute-force oracle.

pub mod oracles;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DeviceConfig;
use crate::rules::{compile_source, CompileError, CompiledPolicy};
use crate::sim::{TraceEvent, VerdictDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "Prohibition")]
    Prohibition,
    #[serde(rename = "Time limitation")]
    TimeLimitation,
    #[serde(rename = "Time and count limitation")]
    TimeAndCountLimitation,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::Prohibition => "Prohibition",
            Category::TimeLimitation => "Time limitation",
            Category::TimeAndCountLimitation => "Time and count limitation",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Deployment scenario: parental control or device control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    PC,
    DC,
}

/// A corpus policy and its reference semantics.
pub trait CorpusPolicy: Send + Sync {
    fn id(&self) -> &'static str;
    fn category(&self) -> Category;
    fn tags(&self) -> &'static [Scenario];
    /// Policy text in the policy language.
    fn source(&self) -> &'static str;
    /// Expected decision for every trace event, computed without the engine.
    fn oracle(&self, trace: &[TraceEvent], config: &DeviceConfig) -> Vec<VerdictDecision>;

    fn compile(&self) -> Result<CompiledPolicy, CompileError> {
        compile_source(self.source())
    }
}

type OracleFn = fn(&[TraceEvent], &DeviceConfig) -> Vec<VerdictDecision>;

struct Bundled {
    id: &'static str,
    category: Category,
    tags: &'static [Scenario],
    source: &'static str,
    oracle: OracleFn,
}

impl CorpusPolicy for Bundled {
    fn id(&self) -> &'static str {
        self.id
    }

    fn category(&self) -> Category {
        self.category
    }

    fn tags(&self) -> &'static [Scenario] {
        self.tags
    }

    fn source(&self) -> &'static str {
        self.source
    }

    fn oracle(&self, trace: &[TraceEvent], config: &DeviceConfig) -> Vec<VerdictDecision> {
        (self.oracle)(trace, config)
    }
}

pub const MANIFEST: &str = include_str!("../../corpus/manifest.json");

/// One entry of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub category: Category,
    pub tags: Vec<Scenario>,
}

pub fn manifest() -> Vec<ManifestEntry> {
    serde_json::from_str(MANIFEST).expect("bundled manifest parses")
}

macro_rules! bundled {
    ($id:literal, $cat:ident, [$($tag:ident),*], $oracle:path) => {
        Bundled {
            id: $id,
            category: Category::$cat,
            tags: &[$(Scenario::$tag),*],
            source: include_str!(concat!("../../corpus/", $id, ".dcp")),
            oracle: $oracle,
        }
    };
}

fn bundled() -> Vec<Bundled> {
    vec![
        bundled!("PhoneExtBlk", Prohibition, [DC], oracles::phone_ext_blk),
        bundled!("URLBlkReq", Prohibition, [PC, DC], oracles::url_blk_req),
        bundled!("WiFiLmt", Prohibition, [DC], oracles::wifi_lmt),
        bundled!("FileAccessLmt", Prohibition, [PC, DC], oracles::file_access_lmt),
        bundled!("PhoneTimeLim", TimeLimitation, [PC, DC], oracles::phone_time_lim),
        bundled!("GamePlayLmt", TimeLimitation, [PC], oracles::game_play_lmt),
        bundled!("OneHrPerSittingOnly", TimeLimitation, [PC], oracles::one_hr_per_sitting),
        bundled!("MsgTimeLmt", TimeLimitation, [DC], oracles::msg_time_lmt),
        bundled!("MsgCntLmt", TimeAndCountLimitation, [PC], oracles::msg_cnt_lmt),
        bundled!("MsgCntLmtHr", TimeAndCountLimitation, [PC], oracles::msg_cnt_lmt_hr),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown policy id `{0}`")]
pub struct UnknownPolicy(pub String);

/// Corpus policies keyed by id, in corpus order.
pub struct PolicyRegistry {
    order: Vec<&'static str>,
    entries: BTreeMap<&'static str, Box<dyn CorpusPolicy>>,
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        Self { order: Vec::new(), entries: BTreeMap::new() }
    }

    /// The ten bundled policies.
    pub fn standard() -> Self {
        let mut reg = Self::empty();
        for b in bundled() {
            reg.register(Box::new(b));
        }
        reg
    }

    /// Adds a policy, replacing any with the same id.
    pub fn register(&mut self, policy: Box<dyn CorpusPolicy>) {
        let id = policy.id();
        if self.entries.insert(id, policy).is_none() {
            self.order.push(id);
        }
    }

    pub fn get(&self, id: &str) -> Result<&dyn CorpusPolicy, UnknownPolicy> {
        self.entries.get(id).map(|b| b.as_ref()).ok_or_else(|| UnknownPolicy(id.to_string()))
    }

    pub fn ids(&self) -> Vec<&'static str> {
        self.order.clone()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn CorpusPolicy> {
        self.order.iter().map(|id| self.entries[id].as_ref())
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Resolves `all` or a comma-separated id list.
    pub fn select(&self, spec: &str) -> Result<Vec<&dyn CorpusPolicy>, UnknownPolicy> {
        if spec.trim() == "all" {
            return Ok(self.iter().collect());
        }
        spec.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|id| self.get(id)).collect()
    }
}

/// `(id, category, tags)` for every bundled policy.
pub fn list_corpus() -> Vec<(&'static str, Category, &'static [Scenario])> {
    PolicyRegistry::standard().iter().map(|p| (p.id(), p.category(), p.tags())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::check_policy;

    #[test]
    fn ten_policies_compile_and_fit_the_catalog() {
        let reg = PolicyRegistry::standard();
        assert_eq!(reg.len(), 10);
        for p in reg.iter() {
            let cp = p.compile().unwrap_or_else(|e| panic!("{}: {:?}", p.id(), e.diagnostics()));
            let errs = check_policy(&cp);
            assert!(errs.is_empty(), "{}: {errs:?}", p.id());
        }
    }

    #[test]
    fn manifest_agrees_with_registry() {
        let reg = PolicyRegistry::standard();
        let m = manifest();
        assert_eq!(m.iter().map(|e| e.id.as_str()).collect::<Vec<_>>(), reg.ids());
        for e in &m {
            let p = reg.get(&e.id).unwrap();
            assert_eq!(e.file, format!("{}.dcp", e.id));
            assert_eq!(e.category, p.category());
            assert_eq!(e.tags, p.tags());
        }
    }

    #[test]
    fn category_counts() {
        let list = list_corpus();
        let count = |c| list.iter().filter(|(_, cat, _)| *cat == c).count();
        assert_eq!(count(Category::Prohibition), 4);
        assert_eq!(count(Category::TimeLimitation), 4);
        assert_eq!(count(Category::TimeAndCountLimitation), 2);
    }

    #[test]
    fn selection() {
        let reg = PolicyRegistry::standard();
        assert_eq!(reg.select("all").unwrap().len(), 10);
        let two = reg.select("WiFiLmt, MsgCntLmtHr").unwrap();
        assert_eq!(two.iter().map(|p| p.id()).collect::<Vec<_>>(), vec!["WiFiLmt", "MsgCntLmtHr"]);
        assert_eq!(reg.select("WiFiLmt,Nope").err(), Some(UnknownPolicy("Nope".into())));
    }
}
