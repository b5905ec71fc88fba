//! Exact brute-force evaluation of all 14 query types over the full graph.
//!
//! Each shape is evaluated bottom-up with plain set algebra over the
//! adjacency indexes: projection via successors, intersection and union as
//! set operations, and negation under one of two semantics. The results feed
//! gold-answer files and serve as the oracle in equivalence tests.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ids::EntityId;
use crate::kg::{KnowledgeGraph, Triplet};
use crate::query::{QueryDag, QueryType};
use crate::Result;

/// How a negated atom is evaluated.
///
/// The FOL reading complements the atom over the whole entity set; the
/// template reading asks for entities connected by any relation other than
/// the named one, which is what the prompts literally request. The template
/// reading is the default so gold sets match what a backend is asked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegationSemantics {
    #[default]
    TemplateOtherRelation,
    FolComplement,
}

/// Gold answer set for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldAnswers {
    pub query_id: String,
    pub answers: BTreeSet<EntityId>,
    pub semantics: NegationSemantics,
}

struct Evaluator<'a> {
    kg: &'a KnowledgeGraph,
    semantics: NegationSemantics,
    touched: Option<BTreeSet<Triplet>>,
}

impl<'a> Evaluator<'a> {
    fn project(&mut self, sources: &BTreeSet<EntityId>, r: crate::ids::RelationId) -> BTreeSet<EntityId> {
        let mut out = BTreeSet::new();
        for &e in sources {
            for t in self.kg.successors(e, r).expect("validated ids") {
                if let Some(touched) = &mut self.touched {
                    touched.insert(Triplet::new(e, r, t));
                }
                out.insert(t);
            }
        }
        out
    }

    fn project_negated(&mut self, sources: &BTreeSet<EntityId>, r: crate::ids::RelationId) -> BTreeSet<EntityId> {
        match self.semantics {
            NegationSemantics::TemplateOtherRelation => {
                let mut out = BTreeSet::new();
                for &e in sources {
                    for other in self.kg.incident_of(e, None) {
                        if other.head == e && other.relation != r {
                            if let Some(touched) = &mut self.touched {
                                touched.insert(other);
                            }
                            out.insert(other.tail);
                        }
                    }
                }
                out
            }
            NegationSemantics::FolComplement => {
                let reachable = self.project(sources, r);
                self.kg.entities().iter().copied().filter(|e| !reachable.contains(e)).collect()
            }
        }
    }

    fn eval(&mut self, q: &QueryDag) -> BTreeSet<EntityId> {
        let a: Vec<BTreeSet<EntityId>> =
            q.anchors.iter().map(|&e| BTreeSet::from([e])).collect();
        let r = &q.relations;
        use QueryType::*;
        match q.qtype {
            OneP => self.project(&a[0], r[0]),
            TwoP => {
                let first = self.project(&a[0], r[0]);
                self.project(&first, r[1])
            }
            ThreeP => {
                let first = self.project(&a[0], r[0]);
                let second = self.project(&first, r[1]);
                self.project(&second, r[2])
            }
            TwoI => {
                let left = self.project(&a[0], r[0]);
                let right = self.project(&a[1], r[1]);
                &left & &right
            }
            ThreeI => {
                let first = self.project(&a[0], r[0]);
                let second = self.project(&a[1], r[1]);
                let third = self.project(&a[2], r[2]);
                &(&first & &second) & &third
            }
            Ip => {
                let left = self.project(&a[0], r[0]);
                let right = self.project(&a[1], r[1]);
                let both = &left & &right;
                self.project(&both, r[2])
            }
            Pi => {
                let chain = self.project(&a[0], r[0]);
                let chain = self.project(&chain, r[1]);
                let branch = self.project(&a[1], r[2]);
                &chain & &branch
            }
            TwoU => {
                let left = self.project(&a[0], r[0]);
                let right = self.project(&a[1], r[1]);
                &left | &right
            }
            Up => {
                let left = self.project(&a[0], r[0]);
                let right = self.project(&a[1], r[1]);
                let either = &left | &right;
                self.project(&either, r[2])
            }
            TwoIn => {
                let left = self.project(&a[0], r[0]);
                let right = self.project_negated(&a[1], r[1]);
                &left & &right
            }
            ThreeIn => {
                let first = self.project(&a[0], r[0]);
                let second = self.project(&a[1], r[1]);
                let third = self.project_negated(&a[2], r[2]);
                &(&first & &second) & &third
            }
            Inp => {
                let left = self.project(&a[0], r[0]);
                let right = self.project_negated(&a[1], r[1]);
                let both = &left & &right;
                self.project(&both, r[2])
            }
            Pin => {
                let chain = self.project(&a[0], r[0]);
                let chain = self.project(&chain, r[1]);
                let branch = self.project_negated(&a[1], r[2]);
                &chain & &branch
            }
            Pni => {
                let chain = self.project(&a[0], r[0]);
                let chain = self.project_negated(&chain, r[1]);
                let branch = self.project(&a[1], r[2]);
                &chain & &branch
            }
        }
    }
}

/// Evaluate one query exactly over the full graph.
pub fn ground_truth(
    kg: &KnowledgeGraph,
    query: &QueryDag,
    semantics: NegationSemantics,
) -> Result<GoldAnswers> {
    query.validate_against(kg)?;
    let mut eval = Evaluator { kg, semantics, touched: None };
    let answers = eval.eval(query);
    Ok(GoldAnswers { query_id: query.id.clone(), answers, semantics })
}

/// [`ground_truth`] plus the set of triplets the evaluation traversed, for
/// retrieval-sufficiency checks. Complement-based negation does not traverse
/// edges and contributes nothing to the trace.
pub fn ground_truth_traced(
    kg: &KnowledgeGraph,
    query: &QueryDag,
    semantics: NegationSemantics,
) -> Result<(GoldAnswers, BTreeSet<Triplet>)> {
    query.validate_against(kg)?;
    let mut eval = Evaluator { kg, semantics, touched: Some(BTreeSet::new()) };
    let answers = eval.eval(query);
    let touched = eval.touched.take().unwrap_or_default();
    Ok((GoldAnswers { query_id: query.id.clone(), answers, semantics }, touched))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::RelationId;

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

    fn answers(qtype: QueryType, anchors: &[u32], relations: &[u32]) -> BTreeSet<EntityId> {
        ground_truth(&g0(), &q(qtype, anchors, relations), NegationSemantics::default())
            .unwrap()
            .answers
    }

    #[test]
    fn three_p_chains_to_e5() {
        assert_eq!(answers(QueryType::ThreeP, &[1], &[1, 2, 3]), BTreeSet::from([e(5)]));
    }

    #[test]
    fn two_u_unions_branches() {
        assert_eq!(
            answers(QueryType::TwoU, &[1, 3], &[1, 3]),
            BTreeSet::from([e(2), e(3), e(5)])
        );
    }

    #[test]
    fn two_in_template_semantics() {
        // positive (e1, r1) = {e2, e3}; negated (e3, r2) = {e5}; disjoint.
        assert_eq!(answers(QueryType::TwoIn, &[1, 3], &[1, 2]), BTreeSet::new());
    }

    #[test]
    fn two_i_with_identical_branches_is_one_p() {
        assert_eq!(
            answers(QueryType::TwoI, &[1, 1], &[1, 1]),
            answers(QueryType::OneP, &[1], &[1])
        );
    }

    #[test]
    fn fol_complement_partitions_the_entity_set() {
        let kg = g0();
        for &anchor in kg.entities() {
            for &relation in kg.relations() {
                let positive: BTreeSet<EntityId> =
                    kg.successors(anchor, relation).unwrap().into_iter().collect();
                let mut eval = Evaluator {
                    kg: &kg,
                    semantics: NegationSemantics::FolComplement,
                    touched: None,
                };
                let negated = eval.project_negated(&BTreeSet::from([anchor]), relation);
                let union: BTreeSet<EntityId> = positive.union(&negated).copied().collect();
                assert_eq!(&union, kg.entities());
                assert!(positive.is_disjoint(&negated));
            }
        }
    }

    #[test]
    fn traced_evaluation_records_traversed_edges() {
        let kg = g0();
        let (gold, touched) =
            ground_truth_traced(&kg, &q(QueryType::TwoP, &[1], &[1, 2]), NegationSemantics::default())
                .unwrap();
        assert_eq!(gold.answers, BTreeSet::from([e(4)]));
        assert!(touched.contains(&Triplet::new(e(1), r(1), e(2))));
        assert!(touched.contains(&Triplet::new(e(2), r(2), e(4))));
        assert!(!touched.contains(&Triplet::new(e(4), r(3), e(5))));
    }

    #[test]
    fn unknown_anchor_is_rejected() {
        let kg = g0();
        let query = q(QueryType::OneP, &[99], &[1]);
        assert!(ground_truth(&kg, &query, NegationSemantics::default()).is_err());
    }
}
