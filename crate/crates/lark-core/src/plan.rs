//! Chain decomposition of queries into single-operation steps, and phase
//! scheduling.
//!
//! Every query type lowers to a fixed list of elementary steps: a k-level
//! projection becomes k one-level projections, a k-intersection becomes k
//! projections plus an intersection, unions likewise. Steps feeding off an
//! earlier answer reference it through a placeholder slot (`PP<i>`), filled
//! from the answer cache at execution time. Scheduling groups steps into
//! phases so that everything in phase p depends only on phases before it;
//! independent steps share a phase and can be submitted to the backend
//! together.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ids::{EntityId, RelationId};
use crate::prompts::step_template;
use crate::query::{QueryDag, QueryType};
use crate::Result;

/// The single operation an elementary step performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOp {
    /// Entities connected to an anchor by a relation.
    Project,
    /// Entities connected to an anchor by any relation other than the named one.
    ProjectNegated,
    /// Entities connected to any member of a cached set by a relation.
    ProjectFromPlaceholder,
    /// Entities connected to any member of a cached set by any other relation.
    ProjectNegatedFromPlaceholder,
    Intersect,
    Union,
}

impl StepOp {
    /// Whether the step reads the triplet context (set operations work on
    /// listed IDs only).
    pub fn uses_context(self) -> bool {
        !matches!(self, StepOp::Intersect | StepOp::Union)
    }
}

/// One single-operation step of a decomposition plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementaryStep {
    /// 1-based step number; the output slot is `PP<index>`.
    pub index: usize,
    pub op: StepOp,
    pub anchor: Option<EntityId>,
    pub relation: Option<RelationId>,
    /// Placeholder names this step consumes, e.g. `["PP1", "PP2"]`.
    pub inputs: Vec<String>,
    /// Placeholder name this step produces.
    pub output: String,
    /// Question template for this step, with `{e*}`/`{r*}` already resolved
    /// to concrete IDs at render time and `[PP*]` markers left for the cache.
    pub template: &'static str,
}

impl ElementaryStep {
    pub fn output_slot(index: usize) -> String {
        format!("PP{index}")
    }
}

/// A scheduled decomposition: ordered steps plus their phase assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionPlan {
    pub qtype: QueryType,
    pub steps: Vec<ElementaryStep>,
    /// Phases of 1-based step indices; every input of a phase-p step was
    /// produced in a phase before p.
    pub phases: Vec<Vec<usize>>,
    /// Output slot of the answer-producing step.
    pub final_slot: String,
}

impl DecompositionPlan {
    pub fn step(&self, index: usize) -> &ElementaryStep {
        &self.steps[index - 1]
    }
}

/// Decomposition switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlanOptions {
    /// Reproduce the decomposed templates literally for `2in`/`3in`, which
    /// negate every atom, instead of the logical form that negates only the
    /// last one.
    pub follow_table6_literal: bool,
}

/// Lower a query into its fixed step structure and schedule it.
pub fn decompose(query: &QueryDag) -> DecompositionPlan {
    decompose_with(query, PlanOptions::default())
}

/// [`decompose`] with explicit options.
pub fn decompose_with(query: &QueryDag, opts: PlanOptions) -> DecompositionPlan {
    let literal = opts.follow_table6_literal;
    let a = &query.anchors;
    let r = &query.relations;
    let t = query.qtype;

    // Shorthand per-step builders; placeholder wiring follows the fixed
    // per-type step lists.
    let mut steps: Vec<ElementaryStep> = Vec::new();
    let mut push = |op: StepOp, anchor: Option<EntityId>, relation: Option<RelationId>, inputs: Vec<usize>| {
        let index = steps.len() + 1;
        steps.push(ElementaryStep {
            index,
            op,
            anchor,
            relation,
            inputs: inputs.iter().map(|&i| ElementaryStep::output_slot(i)).collect(),
            output: ElementaryStep::output_slot(index),
            template: step_template(t, index, literal),
        });
    };

    use StepOp::*;
    match t {
        QueryType::OneP => {
            push(Project, Some(a[0]), Some(r[0]), vec![]);
        }
        QueryType::TwoP => {
            push(Project, Some(a[0]), Some(r[0]), vec![]);
            push(ProjectFromPlaceholder, None, Some(r[1]), vec![1]);
        }
        QueryType::ThreeP => {
            push(Project, Some(a[0]), Some(r[0]), vec![]);
            push(ProjectFromPlaceholder, None, Some(r[1]), vec![1]);
            push(ProjectFromPlaceholder, None, Some(r[2]), vec![2]);
        }
        QueryType::TwoI | QueryType::TwoU => {
            push(Project, Some(a[0]), Some(r[0]), vec![]);
            push(Project, Some(a[1]), Some(r[1]), vec![]);
            push(if t == QueryType::TwoI { Intersect } else { Union }, None, None, vec![1, 2]);
        }
        QueryType::ThreeI => {
            push(Project, Some(a[0]), Some(r[0]), vec![]);
            push(Project, Some(a[1]), Some(r[1]), vec![]);
            push(Project, Some(a[2]), Some(r[2]), vec![]);
            push(Intersect, None, None, vec![1, 2, 3]);
        }
        QueryType::Ip => {
            push(Project, Some(a[0]), Some(r[0]), vec![]);
            push(Project, Some(a[1]), Some(r[1]), vec![]);
            push(Intersect, None, None, vec![1, 2]);
            push(ProjectFromPlaceholder, None, Some(r[2]), vec![3]);
        }
        QueryType::Up => {
            push(Project, Some(a[0]), Some(r[0]), vec![]);
            push(Project, Some(a[1]), Some(r[1]), vec![]);
            push(Union, None, None, vec![1, 2]);
            push(ProjectFromPlaceholder, None, Some(r[2]), vec![3]);
        }
        QueryType::Pi => {
            push(Project, Some(a[0]), Some(r[0]), vec![]);
            push(ProjectFromPlaceholder, None, Some(r[1]), vec![1]);
            push(Project, Some(a[1]), Some(r[2]), vec![]);
            push(Intersect, None, None, vec![2, 3]);
        }
        QueryType::TwoIn => {
            let first = if literal { ProjectNegated } else { Project };
            push(first, Some(a[0]), Some(r[0]), vec![]);
            push(ProjectNegated, Some(a[1]), Some(r[1]), vec![]);
            push(Intersect, None, None, vec![1, 2]);
        }
        QueryType::ThreeIn => {
            let positive = if literal { ProjectNegated } else { Project };
            push(positive, Some(a[0]), Some(r[0]), vec![]);
            push(positive, Some(a[1]), Some(r[1]), vec![]);
            push(ProjectNegated, Some(a[2]), Some(r[2]), vec![]);
            push(Intersect, None, None, vec![1, 2, 3]);
        }
        QueryType::Inp => {
            push(Project, Some(a[0]), Some(r[0]), vec![]);
            push(ProjectNegated, Some(a[1]), Some(r[1]), vec![]);
            push(Intersect, None, None, vec![1, 2]);
            push(ProjectFromPlaceholder, None, Some(r[2]), vec![3]);
        }
        QueryType::Pin => {
            push(Project, Some(a[0]), Some(r[0]), vec![]);
            push(ProjectFromPlaceholder, None, Some(r[1]), vec![1]);
            push(ProjectNegated, Some(a[1]), Some(r[2]), vec![]);
            push(Intersect, None, None, vec![2, 3]);
        }
        QueryType::Pni => {
            push(Project, Some(a[0]), Some(r[0]), vec![]);
            push(ProjectNegatedFromPlaceholder, None, Some(r[1]), vec![1]);
            push(Project, Some(a[1]), Some(r[2]), vec![]);
            push(Intersect, None, None, vec![2, 3]);
        }
    }

    let final_slot = steps.last().expect("every type has steps").output.clone();
    let phases = schedule(&steps).expect("fixed shapes are acyclic");
    DecompositionPlan { qtype: t, steps, phases, final_slot }
}

/// Greedy phase assignment: a step's phase is one past the latest phase among
/// the producers of its inputs; independent steps share a phase.
pub fn schedule(steps: &[ElementaryStep]) -> Result<Vec<Vec<usize>>> {
    let mut phase_of = vec![0usize; steps.len() + 1];
    for step in steps {
        let mut phase = 1;
        for input in &step.inputs {
            let producer: usize = input
                .strip_prefix("PP")
                .and_then(|s| s.parse().ok())
                .filter(|&i| i >= 1 && i < step.index)
                .ok_or_else(|| Error::CyclicDependency(format!("step {}", step.index)))?;
            phase = phase.max(phase_of[producer] + 1);
        }
        phase_of[step.index] = phase;
    }
    let max_phase = phase_of.iter().copied().max().unwrap_or(0);
    let mut phases = vec![Vec::new(); max_phase];
    for step in steps {
        phases[phase_of[step.index] - 1].push(step.index);
    }
    Ok(phases)
}

/// Flat record form used by the CLI `decompose` output and plan goldens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub op: StepOp,
    pub anchor: Option<EntityId>,
    pub relation: Option<RelationId>,
    pub inputs: Vec<String>,
    pub output: String,
}

impl From<&ElementaryStep> for StepRecord {
    fn from(s: &ElementaryStep) -> Self {
        Self {
            step: s.index,
            op: s.op,
            anchor: s.anchor,
            relation: s.relation,
            inputs: s.inputs.clone(),
            output: s.output.clone(),
        }
    }
}
