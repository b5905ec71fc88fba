//! Prompt templates and rendering.
//!
//! Two prompt kinds exist per query type: the full prompt states the whole
//! multi-operation question at once; the step prompts ask one elementary
//! question each, with `[PP<i>]` placeholders standing in for answer sets
//! produced by earlier phases. Placeholders are filled from the per-query
//! answer cache with the cached IDs in ascending order, or the literal
//! `none` when a prior step produced nothing.
//!
//! Template texts are kept verbatim, including their idiosyncrasies (the
//! intersection questions close over set names the preceding sentence never
//! introduced; `inp`'s intersection has a comma before "and"). Full
//! templates carry `{e1}`/`{r1}`-style slots resolved from the query; step
//! templates carry `{anchor}`/`{relation}` slots resolved from the step.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ids::EntityId;
use crate::plan::{decompose_with, ElementaryStep, PlanOptions};
use crate::query::{QueryDag, QueryType};
use crate::retrieval::{serialize_context, Tokenizer};
use crate::Result;

/// Whether a prompt poses the whole query or one decomposed step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Full,
    Step,
}

/// A rendered prompt with its token count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub token_count: usize,
    pub kind: PromptKind,
    pub query_id: String,
    pub step_index: Option<usize>,
}

/// Per-query map from placeholder names to answer lists. Each slot is
/// written exactly once, at a phase boundary.
#[derive(Debug, Clone, Default)]
pub struct AnswerCache {
    slots: BTreeMap<String, Vec<EntityId>>,
}

impl AnswerCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, slot: &str, answers: Vec<EntityId>) -> Result<()> {
        if self.slots.contains_key(slot) {
            return Err(Error::SlotRewrite(slot.to_string()));
        }
        self.slots.insert(slot.to_string(), answers);
        Ok(())
    }

    pub fn get(&self, slot: &str) -> Option<&[EntityId]> {
        self.slots.get(slot).map(Vec::as_slice)
    }

    /// Cached IDs in ascending order as prompt text, `none` when empty.
    fn expansion(&self, slot: &str) -> Result<String> {
        let answers = self.get(slot).ok_or_else(|| Error::MissingPlaceholder(slot.to_string()))?;
        if answers.is_empty() {
            return Ok("none".to_string());
        }
        let mut sorted: Vec<EntityId> = answers.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        Ok(sorted.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))
    }
}

// ─── Full prompt templates ──────────────────────────────────────────

const FULL_1P: &str = "Which entities are connected to {e1} by relation {r1}?";
const FULL_2P: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1}. Then, what are the entities connected to E by relation {r2}?";
const FULL_3P: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1} and the set of entities F is connected to entities in E by relation {r2}. Then, what are the entities connected to F by relation {r3}?";
const FULL_2I: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1} and the set of entities F is connected to entity {e2} by relation {r2}. Then, what are the entities in the intersection of set E and F, i.e., entities present in both F and G?";
const FULL_3I: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1}, the set of entities F is connected to entity {e2} by relation {r2} and the set of entities G is connected to entity {e3} by relation {r3}. Then, what are the entities in the intersection of set E, F and G, i.e., entities present in all E, F and G?";
const FULL_IP: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1}, F is the set of entities connected to entity {e2} by relation {r2}, and G is the set of entities in the intersection of E and F. Then, what are the entities connected to entities in set G by relation {r3}?";
const FULL_PI: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1}, F is the set of entities connected to entities in E by relation {r2}, and G is the set of entities connected to entity {e2} by relation {r3}. Then, what are the entities in the intersection of set F and G, i.e., entities present in both F and G?";
const FULL_2U: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1} and F is the set of entities connected to entity {e2} by relation {r2}. Then, what are the entities in the union of set F and G, i.e., entities present in either F or G?";
const FULL_UP: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1} and F is the set of entities connected to entity {e2} by relation {r2}. G is the set of entities in the union of E and F. Then, what are the entities connected to entities in G by relation {r3}?";
const FULL_2IN: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1} and F is the set of entities connected to entity {e2} by any relation other than relation {r2}. Then, what are the entities in the intersection of set E and F, i.e., entities present in both F and G?";
const FULL_3IN: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1}, F is the set of entities connected to entity {e2} by relation {r2}, and F is the set of entities connected to entity {e3} by any relation other than relation {r3}. Then, what are the entities in the intersection of set E and F, i.e., entities present in both F and G?";
const FULL_INP: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1}, and F is the set of entities connected to entity {e2} by any relation other than relation {r2}. Then, what are the entities that are connected to the entities in the intersection of set E and F by relation {r3}?";
const FULL_PIN: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1}, F is the set of entities connected to entities in E by relation {r2}, and G is the set of entities connected to entity {e2} by any relation other than relation {r3}. Then, what are the entities in the intersection of set F and G, i.e., entities present in both F and G?";
const FULL_PNI: &str = "Let us assume that the set of entities E is connected to entity {e1} by relation {r1}, F is the set of entities connected to entities in E by any relation other than {r2}, and G is the set of entities connected to entity {e2} by relation {r3}. Then, what are the entities in the intersection of set F and G, i.e., entities present in both F and G?";

/// Full-prompt question template for a query type.
pub fn full_template(qtype: QueryType) -> &'static str {
    match qtype {
        QueryType::OneP => FULL_1P,
        QueryType::TwoP => FULL_2P,
        QueryType::ThreeP => FULL_3P,
        QueryType::TwoI => FULL_2I,
        QueryType::ThreeI => FULL_3I,
        QueryType::Ip => FULL_IP,
        QueryType::Pi => FULL_PI,
        QueryType::TwoU => FULL_2U,
        QueryType::Up => FULL_UP,
        QueryType::TwoIn => FULL_2IN,
        QueryType::ThreeIn => FULL_3IN,
        QueryType::Inp => FULL_INP,
        QueryType::Pin => FULL_PIN,
        QueryType::Pni => FULL_PNI,
    }
}

// ─── Step prompt templates ──────────────────────────────────────────

const STEP_PROJECT: &str = "Which entities are connected to {anchor} by relation {relation}?";
const STEP_PROJECT_NEGATED: &str =
    "Which entities are connected to {anchor} by any relation other than {relation}?";
const STEP_FROM_PP1: &str =
    "Which entities are connected to any entity in [PP1] by relation {relation}?";
const STEP_FROM_PP2: &str =
    "Which entities are connected to any entity in [PP2] by relation {relation}?";
const STEP_FROM_PP3: &str =
    "Which entities are connected to any entity in [PP3] by relation {relation}?";
const STEP_WHAT_FROM_PP3: &str =
    "What are the entities connected to any entity in [PP3] by relation {relation}?";
const STEP_INTERSECT_2: &str =
    "What are the entities in the intersection of entity sets [PP1] and [PP2]?";
const STEP_INTERSECT_3: &str =
    "What are the entities in the intersection of entity sets [PP1], [PP2] and [PP3]?";
const STEP_INTERSECT_2_COMMA: &str =
    "What are the entities in the intersection of entity sets [PP1], and [PP2]?";
const STEP_INTERSECT_23: &str =
    "What are the entities in the intersection of entity sets [PP2] and [PP3]?";
const STEP_UNION_2: &str = "What are the entities in the union of entity sets [PP1] and [PP2]?";
const STEP_PI_FROM_PP1: &str = "Which entities are connected to [PP1] by relation {relation}?";
const STEP_PIN_FROM_PP1: &str =
    "Which entities are connected to entity set in [PP1] by relation {relation}?";
const STEP_PNI_FROM_PP1: &str =
    "Which entities are connected to any entity in [PP1] by any relation other than {relation}?";

/// Question template for step `index` (1-based) of a query type's
/// decomposition. With `table6_literal`, the `2in`/`3in` positive atoms use
/// the negated wording their published step lists carry.
pub fn step_template(qtype: QueryType, index: usize, table6_literal: bool) -> &'static str {
    use QueryType::*;
    let positive = if table6_literal { STEP_PROJECT_NEGATED } else { STEP_PROJECT };
    match (qtype, index) {
        (OneP, 1) => STEP_PROJECT,
        (TwoP, 1) => STEP_PROJECT,
        (TwoP, 2) => STEP_FROM_PP1,
        (ThreeP, 1) => STEP_PROJECT,
        (ThreeP, 2) => STEP_FROM_PP1,
        (ThreeP, 3) => STEP_FROM_PP2,
        (TwoI, 1 | 2) => STEP_PROJECT,
        (TwoI, 3) => STEP_INTERSECT_2,
        (ThreeI, 1 | 2 | 3) => STEP_PROJECT,
        (ThreeI, 4) => STEP_INTERSECT_3,
        (Ip, 1 | 2) => STEP_PROJECT,
        (Ip, 3) => STEP_INTERSECT_2,
        (Ip, 4) => STEP_WHAT_FROM_PP3,
        (Pi, 1) => STEP_PROJECT,
        (Pi, 2) => STEP_PI_FROM_PP1,
        (Pi, 3) => STEP_PROJECT,
        (Pi, 4) => STEP_INTERSECT_23,
        (TwoU, 1 | 2) => STEP_PROJECT,
        (TwoU, 3) => STEP_UNION_2,
        (Up, 1 | 2) => STEP_PROJECT,
        (Up, 3) => STEP_UNION_2,
        (Up, 4) => STEP_FROM_PP3,
        (TwoIn, 1) => positive,
        (TwoIn, 2) => STEP_PROJECT_NEGATED,
        (TwoIn, 3) => STEP_INTERSECT_2,
        (ThreeIn, 1 | 2) => positive,
        (ThreeIn, 3) => STEP_PROJECT_NEGATED,
        (ThreeIn, 4) => STEP_INTERSECT_3,
        (Inp, 1) => STEP_PROJECT,
        (Inp, 2) => STEP_PROJECT_NEGATED,
        (Inp, 3) => STEP_INTERSECT_2_COMMA,
        (Inp, 4) => STEP_WHAT_FROM_PP3,
        (Pin, 1) => STEP_PROJECT,
        (Pin, 2) => STEP_PIN_FROM_PP1,
        (Pin, 3) => STEP_PROJECT_NEGATED,
        (Pin, 4) => STEP_INTERSECT_23,
        (Pni, 1) => STEP_PROJECT,
        (Pni, 2) => STEP_PNI_FROM_PP1,
        (Pni, 3) => STEP_PROJECT,
        (Pni, 4) => STEP_INTERSECT_23,
        _ => unreachable!("no step {index} for {qtype}"),
    }
}

// ─── Rendering ──────────────────────────────────────────────────────

fn fill_query_slots(template: &str, query: &QueryDag) -> String {
    let mut text = template.to_string();
    for (i, anchor) in query.anchors.iter().enumerate() {
        text = text.replace(&format!("{{e{}}}", i + 1), &anchor.to_string());
    }
    for (i, relation) in query.relations.iter().enumerate() {
        text = text.replace(&format!("{{r{}}}", i + 1), &relation.to_string());
    }
    text
}

/// Resolve a step's `{anchor}`/`{relation}` slots, leaving `[PP*]` markers.
pub fn fill_step_slots(step: &ElementaryStep) -> String {
    let mut text = step.template.to_string();
    if let Some(anchor) = step.anchor {
        text = text.replace("{anchor}", &anchor.to_string());
    }
    if let Some(relation) = step.relation {
        text = text.replace("{relation}", &relation.to_string());
    }
    text
}

/// Compose the full prompt: context, a blank line, then the type's question
/// with the query's IDs substituted.
pub fn render_full_prompt(
    query: &QueryDag,
    context: &str,
    tokenizer: &dyn Tokenizer,
) -> PromptText {
    let text = format!("{context}\n\n{}", fill_query_slots(full_template(query.qtype), query));
    PromptText {
        token_count: tokenizer.count(&text),
        text,
        kind: PromptKind::Full,
        query_id: query.id.clone(),
        step_index: None,
    }
}

/// Compose one step prompt, substituting every `[PP<i>]` the step consumes
/// with the cached answer list. Projection steps are prefixed with the
/// context block; set-operation steps operate on the listed IDs alone and
/// omit it.
pub fn render_step_prompt(
    step: &ElementaryStep,
    context: &str,
    cache: &AnswerCache,
    tokenizer: &dyn Tokenizer,
    query_id: &str,
) -> Result<PromptText> {
    let mut question = fill_step_slots(step);
    for slot in &step.inputs {
        question = question.replace(&format!("[{slot}]"), &cache.expansion(slot)?);
    }
    let text = if step.op.uses_context() {
        format!("{context}\n\n{question}")
    } else {
        question
    };
    Ok(PromptText {
        token_count: tokenizer.count(&text),
        text,
        kind: PromptKind::Step,
        query_id: query_id.to_string(),
        step_index: Some(step.index),
    })
}

// ─── Canonical renderings (golden fixtures, `render` command) ───────

fn canonical_query(qtype: QueryType) -> QueryDag {
    QueryDag::new(
        format!("canonical-{qtype}"),
        qtype,
        (1..=qtype.anchor_count() as u32).map(EntityId).collect(),
        (1..=qtype.relation_count() as u32).map(crate::ids::RelationId).collect(),
    )
    .expect("canonical slots match by construction")
}

/// Full prompt over an empty context with canonical slot names (`e1`, `r1`,
/// ...), as checked against the golden transcriptions.
pub fn canonical_full_prompt(qtype: QueryType) -> String {
    let context = serialize_context(&[]);
    format!("{context}\n\n{}", fill_query_slots(full_template(qtype), &canonical_query(qtype)))
}

/// Step prompts with canonical slot names and placeholders left unexpanded.
pub fn canonical_step_prompts(qtype: QueryType, table6_literal: bool) -> Vec<String> {
    let plan = decompose_with(
        &canonical_query(qtype),
        PlanOptions { follow_table6_literal: table6_literal },
    );
    let context = serialize_context(&[]);
    plan.steps
        .iter()
        .map(|step| {
            let question = fill_step_slots(step);
            if step.op.uses_context() {
                format!("{context}\n\n{question}")
            } else {
                question
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::RelationId;
    use crate::plan::decompose;
    use crate::retrieval::{ApproxTokenizer, CONTEXT_PREAMBLE};

    fn e(i: u32) -> EntityId {
        EntityId(i)
    }

    fn r(i: u32) -> RelationId {
        RelationId(i)
    }

    #[test]
    fn full_1p_prompt() {
        let q = QueryDag::new("q", QueryType::OneP, vec![e(1)], vec![r(1)]).unwrap();
        let context = serialize_context(&[]);
        let p = render_full_prompt(&q, &context, &ApproxTokenizer);
        assert_eq!(
            p.text,
            format!("{CONTEXT_PREAMBLE} .\n\nWhich entities are connected to e1 by relation r1?")
        );
        assert_eq!(p.token_count, ApproxTokenizer.count(&p.text));
    }

    #[test]
    fn full_2u_fills_both_slots() {
        let q = QueryDag::new("q", QueryType::TwoU, vec![e(4), e(9)], vec![r(2), r(7)]).unwrap();
        let p = render_full_prompt(&q, "ctx", &ApproxTokenizer);
        assert!(p.text.contains("entity e4 by relation r2"));
        assert!(p.text.contains("entity e9 by relation r7"));
        assert!(p.text.contains("union of set F and G"));
        assert!(!p.text.contains('{'));
    }

    #[test]
    fn step_prompt_substitutes_cached_answers() {
        let q = QueryDag::new("q", QueryType::TwoP, vec![e(1)], vec![r(1), r(2)]).unwrap();
        let plan = decompose(&q);
        let mut cache = AnswerCache::new();
        cache.write("PP1", vec![e(2), e(3)]).unwrap();
        let p = render_step_prompt(&plan.steps[1], "ctx", &cache, &ApproxTokenizer, "q").unwrap();
        assert_eq!(
            p.text,
            "ctx\n\nWhich entities are connected to any entity in e2, e3 by relation r2?"
        );
    }

    #[test]
    fn intersect_step_omits_context_and_lists_ids() {
        let q = QueryDag::new("q", QueryType::TwoI, vec![e(1), e(2)], vec![r(1), r(2)]).unwrap();
        let plan = decompose(&q);
        let mut cache = AnswerCache::new();
        cache.write("PP1", vec![e(4)]).unwrap();
        cache.write("PP2", vec![e(4)]).unwrap();
        let p = render_step_prompt(&plan.steps[2], "ctx", &cache, &ApproxTokenizer, "q").unwrap();
        assert_eq!(p.text, "What are the entities in the intersection of entity sets e4 and e4?");
    }

    #[test]
    fn missing_placeholder_is_an_error() {
        let q = QueryDag::new("q", QueryType::TwoP, vec![e(1)], vec![r(1), r(2)]).unwrap();
        let plan = decompose(&q);
        let cache = AnswerCache::new();
        let err = render_step_prompt(&plan.steps[1], "ctx", &cache, &ApproxTokenizer, "q");
        assert!(matches!(err, Err(Error::MissingPlaceholder(s)) if s == "PP1"));
    }

    #[test]
    fn empty_cached_set_renders_as_none() {
        let q = QueryDag::new("q", QueryType::TwoP, vec![e(1)], vec![r(1), r(2)]).unwrap();
        let plan = decompose(&q);
        let mut cache = AnswerCache::new();
        cache.write("PP1", vec![]).unwrap();
        let p = render_step_prompt(&plan.steps[1], "ctx", &cache, &ApproxTokenizer, "q").unwrap();
        assert!(p.text.contains("any entity in none by relation r2?"));
    }

    #[test]
    fn placeholder_expansion_is_sorted_ascending() {
        let q = QueryDag::new("q", QueryType::TwoP, vec![e(1)], vec![r(1), r(2)]).unwrap();
        let plan = decompose(&q);
        let mut cache = AnswerCache::new();
        cache.write("PP1", vec![e(30), e(4), e(12)]).unwrap();
        let p = render_step_prompt(&plan.steps[1], "ctx", &cache, &ApproxTokenizer, "q").unwrap();
        assert!(p.text.contains("in e4, e12, e30 by"));
    }

    #[test]
    fn cache_slots_are_write_once() {
        let mut cache = AnswerCache::new();
        cache.write("PP1", vec![e(1)]).unwrap();
        assert!(matches!(cache.write("PP1", vec![e(2)]), Err(Error::SlotRewrite(_))));
    }

    #[test]
    fn full_plan_render_leaves_no_placeholder_markers() {
        for t in QueryType::ALL {
            let q = canonical_query(t);
            let plan = decompose(&q);
            let mut cache = AnswerCache::new();
            for phase in &plan.phases {
                for &idx in phase {
                    let step = plan.step(idx);
                    let p = render_step_prompt(step, "ctx", &cache, &ApproxTokenizer, &q.id).unwrap();
                    assert!(!p.text.contains("[PP"), "{t}: unsubstituted placeholder in {}", p.text);
                    cache.write(&step.output, vec![e(1)]).unwrap();
                }
            }
        }
    }
}
