//! Budgeted k-level neighborhood extraction and context serialization.
//!
//! Expansion is level-synchronous: level 1 gathers triplets incident to the
//! query anchors, level j expands the entities first introduced at level
//! j-1, up to k = min(traversal depth of the type, configured depth limit).
//! A triplet joins the neighborhood when its head or tail sits on the
//! frontier. Within a level, frontier entities are visited in ascending ID
//! order and each entity's unseen triplets are appended in ascending
//! `(head, relation, tail)` order, so the appended stream is a deterministic
//! function of `(graph, query, config)` and raising the token budget only
//! extends it.
//!
//! Relation filtering: for types without negation the expansion is
//! restricted to the query's relation set (when
//! `relation_constrained_first_level` is set); for negation types with
//! `negation_relaxation` the filter is dropped entirely, since their
//! templates ask for entities connected "by any relation other than" a named
//! one and the answering backend must see those edges.

use std::collections::BTreeSet;

use crate::ids::EntityId;
use crate::kg::{KnowledgeGraph, Triplet};
use crate::query::QueryDag;
use crate::Result;

/// Fixed context preamble that precedes the triplet list in every prompt.
pub const CONTEXT_PREAMBLE: &str =
    "Given the following (h,r,t) triplets where entity h is related to entity t by relation r;";

/// Token-counting contract. The default approximation splits on whitespace
/// and punctuation; a model-specific tokenizer can be injected instead.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Default tokenizer: each run of alphanumeric/underscore characters is one
/// token, every other non-whitespace character is one token by itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxTokenizer;

impl Tokenizer for ApproxTokenizer {
    fn count(&self, text: &str) -> usize {
        let mut count = 0;
        let mut in_word = false;
        for c in text.chars() {
            if c.is_whitespace() {
                in_word = false;
            } else if c.is_alphanumeric() || c == '_' {
                if !in_word {
                    count += 1;
                    in_word = true;
                }
            } else {
                count += 1;
                in_word = false;
            }
        }
        count
    }
}

/// Retrieval limits and relaxation switches.
#[derive(Debug, Clone)]
pub struct RetrievalConfig {
    /// Token budget for the serialized context (default 2048).
    pub token_limit: usize,
    /// Hard cap on traversal depth (default 3, the maximum any type needs).
    pub depth_limit: usize,
    /// Restrict expansion to the query's relations for non-negation types.
    pub relation_constrained_first_level: bool,
    /// Drop the relation filter for negation types so "any relation other
    /// than" edges are present.
    pub negation_relaxation: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            token_limit: 2048,
            depth_limit: 3,
            relation_constrained_first_level: true,
            negation_relaxation: true,
        }
    }
}

impl RetrievalConfig {
    /// A configuration with no token budget, for exact-oracle runs.
    pub fn unbounded() -> Self {
        Self { token_limit: usize::MAX, ..Self::default() }
    }
}

/// The retrieved subgraph for one query, with its serialized form's token
/// count and the level at which each triplet entered.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    triplets: Vec<Triplet>,
    /// Level (1..=k) per triplet, parallel to `triplets`.
    levels: Vec<u8>,
    truncated: bool,
    token_count: usize,
}

impl Neighborhood {
    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn level_of(&self, index: usize) -> u8 {
        self.levels[index]
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// Token count of [`serialize_context`] over the stored triplets.
    pub fn token_count(&self) -> usize {
        self.token_count
    }

    /// The context text fed to prompts.
    pub fn context_text(&self) -> String {
        serialize_context(&self.triplets)
    }
}

/// Serialize a triplet list into the context block: the preamble, then
/// comma-separated `(h,r,t)` tuples in stored order, terminated by a period.
pub fn serialize_context(triplets: &[Triplet]) -> String {
    let mut out = String::from(CONTEXT_PREAMBLE);
    out.push(' ');
    for (i, t) in triplets.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&t.tuple_text());
    }
    out.push('.');
    out
}

/// Extract the k-level neighborhood of a query under the configured budget.
///
/// Appending stops — and `truncated` is set — the first time the next
/// triplet would push the serialized context past `token_limit`.
pub fn retrieve_neighborhood(
    kg: &KnowledgeGraph,
    query: &QueryDag,
    cfg: &RetrievalConfig,
    tokenizer: &dyn Tokenizer,
) -> Result<Neighborhood> {
    query.validate_against(kg)?;

    let depth = query.qtype.traversal_depth().min(cfg.depth_limit).max(1);
    let (anchors, query_relations) = query.entities_and_relations();
    let constrained = if query.qtype.has_negation() {
        !cfg.negation_relaxation
    } else {
        cfg.relation_constrained_first_level
    };
    let filter = constrained.then_some(&query_relations);

    let unbounded = cfg.token_limit == usize::MAX;
    let mut context = String::from(CONTEXT_PREAMBLE);
    context.push_str(" .");
    let mut token_count = tokenizer.count(&context);

    let mut triplets: Vec<Triplet> = Vec::new();
    let mut levels: Vec<u8> = Vec::new();
    let mut seen_triplets: BTreeSet<Triplet> = BTreeSet::new();
    let mut seen_entities: BTreeSet<EntityId> = anchors.clone();
    let mut truncated = false;

    let mut frontier = anchors;
    'expand: for level in 1..=depth {
        if frontier.is_empty() {
            break;
        }
        let mut introduced: BTreeSet<EntityId> = BTreeSet::new();
        for &entity in &frontier {
            for triplet in kg.incident_of(entity, filter) {
                if !seen_triplets.insert(triplet) {
                    continue;
                }
                if !unbounded {
                    // Re-serialize the candidate prefix; whole-triplet grain,
                    // tuples are never split across the budget boundary.
                    let mut candidate = context.clone();
                    candidate.truncate(candidate.len() - 1); // drop '.'
                    if triplets.is_empty() {
                        candidate.truncate(candidate.len() - 1); // drop ' '
                        candidate.push(' ');
                    } else {
                        candidate.push_str(", ");
                    }
                    candidate.push_str(&triplet.tuple_text());
                    candidate.push('.');
                    let candidate_count = tokenizer.count(&candidate);
                    if candidate_count > cfg.token_limit {
                        truncated = true;
                        break 'expand;
                    }
                    context = candidate;
                    token_count = candidate_count;
                }
                triplets.push(triplet);
                levels.push(level as u8);
                for endpoint in [triplet.head, triplet.tail] {
                    if seen_entities.insert(endpoint) {
                        introduced.insert(endpoint);
                    }
                }
            }
        }
        frontier = introduced;
    }

    if unbounded {
        token_count = tokenizer.count(&serialize_context(&triplets));
    }

    Ok(Neighborhood { triplets, levels, truncated, token_count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::RelationId;
    use crate::query::QueryType;

    fn e(i: u32) -> EntityId {
        EntityId(i)
    }

    fn r(i: u32) -> RelationId {
        RelationId(i)
    }

    fn g0() -> KnowledgeGraph {
        KnowledgeGraph::from_triplets([
            Triplet::new(e(1), r(1), e(2)),
            Triplet::new(e(1), r(1), e(3)),
            Triplet::new(e(2), r(2), e(4)),
            Triplet::new(e(3), r(2), e(4)),
            Triplet::new(e(3), r(3), e(5)),
            Triplet::new(e(4), r(3), e(5)),
        ])
        .unwrap()
    }

    fn q(qtype: QueryType, anchors: &[u32], relations: &[u32]) -> QueryDag {
        QueryDag::new(
            "q",
            qtype,
            anchors.iter().map(|&i| e(i)).collect(),
            relations.iter().map(|&i| r(i)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tokenizer_examples() {
        let tk = ApproxTokenizer;
        assert_eq!(tk.count(""), 0);
        assert_eq!(tk.count("Which entities are connected"), 4);
        // Pinned golden for the default rule: 3 IDs + 2 parens + 2 commas.
        assert_eq!(tk.count("(e1,r1,e2)"), 7);
    }

    #[test]
    fn serialize_context_examples() {
        assert_eq!(serialize_context(&[]), format!("{CONTEXT_PREAMBLE} ."));
        assert_eq!(
            serialize_context(&[Triplet::new(e(1), r(1), e(2))]),
            format!("{CONTEXT_PREAMBLE} (e1,r1,e2).")
        );
        assert_eq!(
            serialize_context(&[Triplet::new(e(1), r(1), e(2)), Triplet::new(e(2), r(2), e(4))]),
            format!("{CONTEXT_PREAMBLE} (e1,r1,e2), (e2,r2,e4).")
        );
    }

    #[test]
    fn one_hop_retrieval_covers_anchor_edges() {
        let kg = g0();
        let nb = retrieve_neighborhood(
            &kg,
            &q(QueryType::OneP, &[1], &[1]),
            &RetrievalConfig::default(),
            &ApproxTokenizer,
        )
        .unwrap();
        assert!(!nb.truncated());
        assert!(nb.triplets().contains(&Triplet::new(e(1), r(1), e(2))));
        assert!(nb.triplets().contains(&Triplet::new(e(1), r(1), e(3))));
    }

    #[test]
    fn two_hop_retrieval_reaches_second_level() {
        let kg = g0();
        let nb = retrieve_neighborhood(
            &kg,
            &q(QueryType::TwoP, &[1], &[1, 2]),
            &RetrievalConfig::default(),
            &ApproxTokenizer,
        )
        .unwrap();
        for expected in [
            Triplet::new(e(1), r(1), e(2)),
            Triplet::new(e(1), r(1), e(3)),
            Triplet::new(e(2), r(2), e(4)),
            Triplet::new(e(3), r(2), e(4)),
        ] {
            assert!(nb.triplets().contains(&expected), "missing {expected:?}");
        }
        // r3 edges are outside the query's relation set.
        assert!(!nb.triplets().contains(&Triplet::new(e(3), r(3), e(5))));
    }

    #[test]
    fn budget_below_preamble_yields_empty_truncated() {
        let kg = g0();
        let cfg = RetrievalConfig { token_limit: 1, ..RetrievalConfig::default() };
        let nb =
            retrieve_neighborhood(&kg, &q(QueryType::OneP, &[1], &[1]), &cfg, &ApproxTokenizer)
                .unwrap();
        assert!(nb.truncated());
        assert!(nb.triplets().is_empty());
    }

    #[test]
    fn token_count_matches_serialization() {
        let kg = g0();
        for limit in [40, 60, 100, usize::MAX] {
            let cfg = RetrievalConfig { token_limit: limit, ..RetrievalConfig::default() };
            let nb =
                retrieve_neighborhood(&kg, &q(QueryType::ThreeP, &[1], &[1, 2, 3]), &cfg, &ApproxTokenizer)
                    .unwrap();
            assert_eq!(nb.token_count(), ApproxTokenizer.count(&nb.context_text()));
            if limit != usize::MAX {
                assert!(nb.token_count() <= limit || nb.triplets().is_empty());
            }
        }
    }

    #[test]
    fn retrieval_is_deterministic() {
        let kg = g0();
        let query = q(QueryType::ThreeP, &[1], &[1, 2, 3]);
        let cfg = RetrievalConfig::default();
        let a = retrieve_neighborhood(&kg, &query, &cfg, &ApproxTokenizer).unwrap();
        let b = retrieve_neighborhood(&kg, &query, &cfg, &ApproxTokenizer).unwrap();
        assert_eq!(a.context_text(), b.context_text());
    }

    #[test]
    fn raising_limit_extends_the_prefix() {
        let kg = g0();
        let query = q(QueryType::ThreeP, &[1], &[1, 2, 3]);
        let mut previous: Vec<Triplet> = Vec::new();
        for limit in 20..120 {
            let cfg = RetrievalConfig { token_limit: limit, ..RetrievalConfig::default() };
            let nb = retrieve_neighborhood(&kg, &query, &cfg, &ApproxTokenizer).unwrap();
            assert!(
                nb.triplets().starts_with(&previous),
                "limit {limit} did not extend the previous prefix"
            );
            previous = nb.triplets().to_vec();
        }
    }

    #[test]
    fn negation_type_admits_all_relations() {
        let kg = g0();
        // 2in anchored at e1 and e3; e3's r3 edge must be retrievable even
        // though r3 is not in the query's relation slots.
        let nb = retrieve_neighborhood(
            &kg,
            &q(QueryType::TwoIn, &[1, 3], &[1, 2]),
            &RetrievalConfig::default(),
            &ApproxTokenizer,
        )
        .unwrap();
        assert!(nb.triplets().contains(&Triplet::new(e(3), r(3), e(5))));
    }

    #[test]
    fn levels_are_monotone() {
        let kg = g0();
        let nb = retrieve_neighborhood(
            &kg,
            &q(QueryType::ThreeP, &[1], &[1, 2, 3]),
            &RetrievalConfig::unbounded(),
            &ApproxTokenizer,
        )
        .unwrap();
        let mut introduced_at: std::collections::HashMap<EntityId, u8> = std::collections::HashMap::new();
        introduced_at.insert(e(1), 0);
        for (i, t) in nb.triplets().iter().enumerate() {
            let level = nb.level_of(i);
            assert!(
                introduced_at.get(&t.head).is_some_and(|&l| l < level)
                    || introduced_at.get(&t.tail).is_some_and(|&l| l < level),
                "triplet {t:?} at level {level} not incident to an earlier entity"
            );
            introduced_at.entry(t.head).or_insert(level);
            introduced_at.entry(t.tail).or_insert(level);
        }
    }
}
