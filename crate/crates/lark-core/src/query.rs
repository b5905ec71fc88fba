//! Typed representation of the 14 fixed FOL query shapes.
//!
//! A query is stored flat — type tag plus ordered anchor and relation slots —
//! because the tag fully determines the DAG shape. Relations are listed in
//! the order they appear left-to-right in the query's logical form.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ids::{EntityId, RelationId};
use crate::kg::KnowledgeGraph;
use crate::Result;

/// One of the 14 query shapes: projections (`1p`..`3p`), intersections and
/// unions (`2i`, `3i`, `2u`), compounds (`ip`, `pi`, `up`), and negations
/// (`2in`, `3in`, `inp`, `pin`, `pni`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryType {
    #[serde(rename = "1p")]
    OneP,
    #[serde(rename = "2p")]
    TwoP,
    #[serde(rename = "3p")]
    ThreeP,
    #[serde(rename = "2i")]
    TwoI,
    #[serde(rename = "3i")]
    ThreeI,
    #[serde(rename = "ip")]
    Ip,
    #[serde(rename = "pi")]
    Pi,
    #[serde(rename = "2u")]
    TwoU,
    #[serde(rename = "up")]
    Up,
    #[serde(rename = "2in")]
    TwoIn,
    #[serde(rename = "3in")]
    ThreeIn,
    #[serde(rename = "inp")]
    Inp,
    #[serde(rename = "pin")]
    Pin,
    #[serde(rename = "pni")]
    Pni,
}

impl QueryType {
    /// All 14 types, in the conventional report order (projection, geometric,
    /// compound, then negation).
    pub const ALL: [QueryType; 14] = [
        QueryType::OneP,
        QueryType::TwoP,
        QueryType::ThreeP,
        QueryType::TwoI,
        QueryType::ThreeI,
        QueryType::Ip,
        QueryType::Pi,
        QueryType::TwoU,
        QueryType::Up,
        QueryType::TwoIn,
        QueryType::ThreeIn,
        QueryType::Inp,
        QueryType::Pin,
        QueryType::Pni,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            QueryType::OneP => "1p",
            QueryType::TwoP => "2p",
            QueryType::ThreeP => "3p",
            QueryType::TwoI => "2i",
            QueryType::ThreeI => "3i",
            QueryType::Ip => "ip",
            QueryType::Pi => "pi",
            QueryType::TwoU => "2u",
            QueryType::Up => "up",
            QueryType::TwoIn => "2in",
            QueryType::ThreeIn => "3in",
            QueryType::Inp => "inp",
            QueryType::Pin => "pin",
            QueryType::Pni => "pni",
        }
    }

    /// Number of anchor entity slots.
    pub fn anchor_count(self) -> usize {
        match self {
            QueryType::OneP | QueryType::TwoP | QueryType::ThreeP => 1,
            QueryType::TwoI | QueryType::TwoU | QueryType::TwoIn => 2,
            QueryType::ThreeI | QueryType::ThreeIn => 3,
            QueryType::Ip
            | QueryType::Pi
            | QueryType::Up
            | QueryType::Inp
            | QueryType::Pin
            | QueryType::Pni => 2,
        }
    }

    /// Number of relation slots.
    pub fn relation_count(self) -> usize {
        match self {
            QueryType::OneP => 1,
            QueryType::TwoP | QueryType::TwoI | QueryType::TwoU | QueryType::TwoIn => 2,
            QueryType::ThreeP
            | QueryType::ThreeI
            | QueryType::ThreeIn
            | QueryType::Ip
            | QueryType::Pi
            | QueryType::Up
            | QueryType::Inp
            | QueryType::Pin
            | QueryType::Pni => 3,
        }
    }

    /// Depth of the k-level traversal the type requires: the longest chain of
    /// relation hops in its DAG. Never exceeds 3.
    pub fn traversal_depth(self) -> usize {
        match self {
            QueryType::OneP
            | QueryType::TwoI
            | QueryType::ThreeI
            | QueryType::TwoU
            | QueryType::TwoIn
            | QueryType::ThreeIn => 1,
            QueryType::TwoP
            | QueryType::Ip
            | QueryType::Pi
            | QueryType::Up
            | QueryType::Inp
            | QueryType::Pin
            | QueryType::Pni => 2,
            QueryType::ThreeP => 3,
        }
    }

    /// Whether the shape contains a negated atom.
    pub fn has_negation(self) -> bool {
        matches!(
            self,
            QueryType::TwoIn | QueryType::ThreeIn | QueryType::Inp | QueryType::Pin | QueryType::Pni
        )
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for QueryType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QueryType::ALL
            .into_iter()
            .find(|t| t.tag() == s)
            .ok_or_else(|| Error::UnknownType(s.to_string()))
    }
}

/// A validated query instance: type tag plus ordered anchor and relation
/// slots, with an opaque identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryDag {
    pub id: String,
    #[serde(rename = "type")]
    pub qtype: QueryType,
    pub anchors: Vec<EntityId>,
    pub relations: Vec<RelationId>,
}

impl QueryDag {
    /// Build and validate slot counts against the type.
    pub fn new(
        id: impl Into<String>,
        qtype: QueryType,
        anchors: Vec<EntityId>,
        relations: Vec<RelationId>,
    ) -> Result<Self> {
        if anchors.len() != qtype.anchor_count() {
            return Err(Error::SlotMismatch {
                qtype: qtype.tag().to_string(),
                slot: "anchor",
                expected: qtype.anchor_count(),
                got: anchors.len(),
            });
        }
        if relations.len() != qtype.relation_count() {
            return Err(Error::SlotMismatch {
                qtype: qtype.tag().to_string(),
                slot: "relation",
                expected: qtype.relation_count(),
                got: relations.len(),
            });
        }
        Ok(Self { id: id.into(), qtype, anchors, relations })
    }

    /// Parse one query-file record (a flat JSON object).
    pub fn parse_record(record: &str) -> Result<Self> {
        let raw: RawQueryRecord = serde_json::from_str(record).map_err(|e| {
            // Distinguish an unknown type tag from other malformed input.
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(record) {
                if let Some(tag) = v.get("type").and_then(|t| t.as_str()) {
                    if QueryType::from_str(tag).is_err() {
                        return Error::UnknownType(tag.to_string());
                    }
                }
            }
            Error::Record(e.to_string())
        })?;
        let anchors = raw
            .anchors
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<EntityId>>>()?;
        let relations = raw
            .relations
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<RelationId>>>()?;
        Self::new(raw.id, raw.qtype, anchors, relations)
    }

    /// Serialize to the query-file record format.
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("query record serialization cannot fail")
    }

    /// Check that every referenced ID exists in the graph.
    pub fn validate_against(&self, kg: &KnowledgeGraph) -> Result<()> {
        for &a in &self.anchors {
            if !kg.contains_entity(a) {
                return Err(Error::UnknownId(a.to_string()));
            }
        }
        for &r in &self.relations {
            if !kg.contains_relation(r) {
                return Err(Error::UnknownId(r.to_string()));
            }
        }
        Ok(())
    }

    /// Deduplicated anchor and relation sets.
    pub fn entities_and_relations(&self) -> (BTreeSet<EntityId>, BTreeSet<RelationId>) {
        (
            self.anchors.iter().copied().collect(),
            self.relations.iter().copied().collect(),
        )
    }
}

#[derive(Deserialize)]
struct RawQueryRecord {
    id: String,
    #[serde(rename = "type")]
    qtype: QueryType,
    anchors: Vec<String>,
    relations: Vec<String>,
}

/// One gold-answer file record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub id: String,
    pub answers: Vec<EntityId>,
}

/// Read a newline-delimited query file.
pub fn read_query_file(content: &str) -> Result<Vec<QueryDag>> {
    content
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(QueryDag::parse_record)
        .collect()
}
