use std::fmt;

use chrono::{DateTime, Utc};
use semindex_core::multiaxial::{AxisBinding, Situation};
use semindex_core::{ConceptName, Key};
use serde::{Deserialize, Serialize};

/// Episodes are identified by id and timestamp together.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EpisodeKey {
    pub id: String,
    pub ts: DateTime<Utc>,
}

impl fmt::Display for EpisodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.id, crate::format_ts(&self.ts))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    Affirmed,
    Negated,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Affirmed => "affirmed",
            Polarity::Negated => "negated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "affirmed" => Some(Polarity::Affirmed),
            "negated" => Some(Polarity::Negated),
            _ => None,
        }
    }
}

/// What a stored key denotes, by name, so it can be found again after the
/// axis has been reindexed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstancePath {
    /// Concept names from the root to the node.
    Node(Vec<ConceptName>),
    /// The key is a concept key.
    Concept(ConceptName),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub axis: String,
    pub node_key: Key,
    #[serde(default)]
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<InstancePath>,
    /// Set by remapping when the path no longer resolves.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub orphaned: bool,
}

impl InstanceRecord {
    pub fn affirmed(axis: &str, node_key: Key) -> Self {
        InstanceRecord { axis: axis.to_string(), node_key, polarity: Polarity::Affirmed, value: None, path: None, orphaned: false }
    }

    pub fn negated(axis: &str, node_key: Key) -> Self {
        InstanceRecord { polarity: Polarity::Negated, ..Self::affirmed(axis, node_key) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EpisodeMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub subject: String,
    pub instances: Vec<InstanceRecord>,
    #[serde(default)]
    pub meta: EpisodeMeta,
}

impl Episode {
    pub fn key(&self) -> EpisodeKey {
        EpisodeKey { id: self.id.clone(), ts: self.timestamp }
    }

    /// Affirmed, non-orphaned bindings.
    pub fn situation(&self) -> Situation {
        Situation::new(
            self.instances
                .iter()
                .filter(|r| r.polarity == Polarity::Affirmed && !r.orphaned)
                .map(|r| AxisBinding::new(&r.axis, r.node_key.clone())),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Assessment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// A problem (episodes, oldest first), its solution and an optional
/// assessment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    #[serde(default)]
    pub id: i64,
    pub problem: Vec<EpisodeKey>,
    pub solution: Vec<InstanceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessment: Option<Assessment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RemapReport {
    pub rewritten: usize,
    pub unchanged: usize,
    pub orphaned: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisInfo {
    pub axis: String,
    pub version: u64,
    pub title: Option<String>,
    pub index_version: u64,
}
