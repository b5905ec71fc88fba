//! Phase-driven execution against a pluggable answer backend.
//!
//! A run walks the plan's phases in order; within a phase every step is
//! rendered against the current answer cache and submitted together (across
//! queries too, in batch mode), and every response is parsed and cached
//! before the next phase begins. Three backends cover the execution modes:
//!
//! - [`SymbolicBackend`] answers with exact set algebra over the retrieved
//!   neighborhood, standing in for a language model in correctness tests.
//! - [`ReplayBackend`] serves responses from a recorded trace keyed by a
//!   content hash of the prompt, for offline regression.
//! - [`RemoteBackend`] POSTs chat-completions requests to a configurable
//!   endpoint with bounded retries.
//!
//! A failed item (after retries) leaves its slot empty and flags the record
//! degraded; downstream steps see `none`, as a live model would.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::Error;
use crate::ids::EntityId;
use crate::kg::Triplet;
use crate::plan::{decompose, DecompositionPlan, ElementaryStep, StepOp};
use crate::prompts::{render_full_prompt, render_step_prompt, AnswerCache, PromptText};
use crate::query::QueryDag;
use crate::retrieval::{Neighborhood, Tokenizer};
use crate::Result;

/// Which answering machinery a backend is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Symbolic,
    Remote,
    Replay,
}

/// Whole-query or single-step execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Full,
    Decomposed,
}

/// Structured view of one submitted item, alongside its rendered prompt, so
/// exact backends need not parse prompt text.
#[derive(Debug)]
pub enum TaskPayload<'a> {
    Step {
        step: &'a ElementaryStep,
        /// Resolved placeholder inputs, in the step's input order.
        inputs: Vec<(String, Vec<EntityId>)>,
    },
    Full(&'a QueryDag),
}

/// One unit of work for a backend.
#[derive(Debug)]
pub struct BackendItem<'a> {
    pub prompt: &'a PromptText,
    pub payload: TaskPayload<'a>,
    pub neighborhood: &'a Neighborhood,
}

/// Raw response text plus the entity list parsed from it.
#[derive(Debug, Clone)]
pub struct BackendAnswer {
    pub raw: String,
    pub entities: Vec<EntityId>,
}

/// Backend-side failure.
#[derive(Debug, Error)]
pub enum BackendError {
    /// No trace entry for this prompt; aborts the run.
    #[error("no trace entry for prompt hash {0}")]
    MissingTrace(String),
    /// Transient or permanent call failure after retries; degrades the record.
    #[error("{0}")]
    Failed(String),
}

/// An answer source. Implementations must return exactly one result per
/// submitted item, order-aligned.
pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Maximum items per `answers` call; the executor chunks submissions.
    fn batch_limit(&self) -> usize {
        usize::MAX
    }

    fn answers(&self, items: &[BackendItem]) -> Vec<std::result::Result<BackendAnswer, BackendError>>;
}

/// Extract entity IDs (`e<digits>`) from free-form answer text, keeping
/// first-appearance order and dropping duplicates. `none` or no matches
/// yields an empty list.
pub fn parse_answer(text: &str) -> Vec<EntityId> {
    static ID_PATTERN: std::sync::LazyLock<regex::Regex> =
        std::sync::LazyLock::new(|| regex::Regex::new(r"\be(\d+)\b").unwrap());
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for cap in ID_PATTERN.captures_iter(text) {
        if let Ok(index) = cap[1].parse::<u32>() {
            let id = EntityId(index);
            if seen.insert(id) {
                out.push(id);
            }
        }
    }
    out
}

/// Render an entity list the way backends emit it: `e4, e7`, or `none`.
pub fn format_answer(entities: &[EntityId]) -> String {
    if entities.is_empty() {
        "none".to_string()
    } else {
        entities.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
    }
}

/// Content hash used to key replay traces.
pub fn prompt_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ─── Symbolic backend ───────────────────────────────────────────────

/// Exact set-algebra answer for one step, restricted to the retrieved
/// neighborhood. Output is ascending and deduplicated.
pub fn symbolic_answer(
    step: &ElementaryStep,
    inputs: &[(String, Vec<EntityId>)],
    triplets: &[Triplet],
) -> Vec<EntityId> {
    let input_set = |slot: &str| -> BTreeSet<EntityId> {
        inputs
            .iter()
            .find(|(name, _)| name == slot)
            .map(|(_, v)| v.iter().copied().collect())
            .unwrap_or_default()
    };
    let project = |sources: &BTreeSet<EntityId>, negated: bool| -> BTreeSet<EntityId> {
        let relation = step.relation.expect("projection steps carry a relation");
        triplets
            .iter()
            .filter(|t| {
                sources.contains(&t.head)
                    && if negated { t.relation != relation } else { t.relation == relation }
            })
            .map(|t| t.tail)
            .collect()
    };

    let result: BTreeSet<EntityId> = match step.op {
        StepOp::Project => {
            project(&BTreeSet::from([step.anchor.expect("anchored step")]), false)
        }
        StepOp::ProjectNegated => {
            project(&BTreeSet::from([step.anchor.expect("anchored step")]), true)
        }
        StepOp::ProjectFromPlaceholder => project(&input_set(&step.inputs[0]), false),
        StepOp::ProjectNegatedFromPlaceholder => project(&input_set(&step.inputs[0]), true),
        StepOp::Intersect => {
            let mut sets = step.inputs.iter().map(|s| input_set(s));
            let first = sets.next().unwrap_or_default();
            sets.fold(first, |acc, s| &acc & &s)
        }
        StepOp::Union => step
            .inputs
            .iter()
            .map(|s| input_set(s))
            .fold(BTreeSet::new(), |acc, s| &acc | &s),
    };
    result.into_iter().collect()
}

/// Exact executor over the retrieved neighborhood.
#[derive(Debug, Default)]
pub struct SymbolicBackend;

impl SymbolicBackend {
    fn answer_full(query: &QueryDag, neighborhood: &Neighborhood) -> Vec<EntityId> {
        let plan = decompose(query);
        let mut cache: HashMap<String, Vec<EntityId>> = HashMap::new();
        for step in &plan.steps {
            let inputs: Vec<(String, Vec<EntityId>)> = step
                .inputs
                .iter()
                .map(|slot| (slot.clone(), cache.get(slot).cloned().unwrap_or_default()))
                .collect();
            let out = symbolic_answer(step, &inputs, neighborhood.triplets());
            cache.insert(step.output.clone(), out);
        }
        cache.remove(&plan.final_slot).unwrap_or_default()
    }
}

impl Backend for SymbolicBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Symbolic
    }

    fn answers(&self, items: &[BackendItem]) -> Vec<std::result::Result<BackendAnswer, BackendError>> {
        items
            .iter()
            .map(|item| {
                let entities = match &item.payload {
                    TaskPayload::Step { step, inputs } => {
                        symbolic_answer(step, inputs, item.neighborhood.triplets())
                    }
                    TaskPayload::Full(query) => Self::answer_full(query, item.neighborhood),
                };
                Ok(BackendAnswer { raw: format_answer(&entities), entities })
            })
            .collect()
    }
}

// ─── Replay backend ─────────────────────────────────────────────────

/// One replay trace record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub hash: String,
    pub prompt: String,
    pub response: String,
}

/// Serves recorded responses keyed by prompt hash.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    entries: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn from_records(records: impl IntoIterator<Item = TraceRecord>) -> Self {
        Self {
            entries: records.into_iter().map(|r| (r.hash, r.response)).collect(),
        }
    }

    /// Parse a newline-delimited trace file.
    pub fn from_trace_text(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<TraceRecord>)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self::from_records(records))
    }
}

impl Backend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn answers(&self, items: &[BackendItem]) -> Vec<std::result::Result<BackendAnswer, BackendError>> {
        items
            .iter()
            .map(|item| {
                let hash = prompt_hash(&item.prompt.text);
                match self.entries.get(&hash) {
                    Some(response) => Ok(BackendAnswer {
                        raw: response.clone(),
                        entities: parse_answer(response),
                    }),
                    None => Err(BackendError::MissingTrace(hash)),
                }
            })
            .collect()
    }
}

/// Wraps any backend and captures `(hash, prompt, response)` for later
/// replay. Failed items are not recorded.
pub struct RecordingBackend<'a> {
    inner: &'a dyn Backend,
    records: Mutex<Vec<TraceRecord>>,
}

impl<'a> RecordingBackend<'a> {
    pub fn new(inner: &'a dyn Backend) -> Self {
        Self { inner, records: Mutex::new(Vec::new()) }
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records.into_inner().expect("recording mutex poisoned")
    }
}

impl Backend for RecordingBackend<'_> {
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn batch_limit(&self) -> usize {
        self.inner.batch_limit()
    }

    fn answers(&self, items: &[BackendItem]) -> Vec<std::result::Result<BackendAnswer, BackendError>> {
        let outcomes = self.inner.answers(items);
        let mut records = self.records.lock().expect("recording mutex poisoned");
        for (item, outcome) in items.iter().zip(&outcomes) {
            if let Ok(answer) = outcome {
                records.push(TraceRecord {
                    hash: prompt_hash(&item.prompt.text),
                    prompt: item.prompt.text.clone(),
                    response: answer.raw.clone(),
                });
            }
        }
        outcomes
    }
}

// ─── Remote backend ─────────────────────────────────────────────────

/// Connection settings for a chat-completions endpoint.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Bearer token, usually from `LARK_API_KEY`.
    pub api_key: Option<String>,
    /// Concurrent in-flight requests within one batch.
    pub parallelism: usize,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            temperature: 0.0,
            max_tokens: 256,
            api_key: None,
            parallelism: 4,
            max_retries: 3,
            retry_backoff_ms: 250,
        }
    }
}

/// Calls a chat-completions API over HTTP with bounded retries and
/// exponential backoff on transient failures.
pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.endpoint.is_empty() || config.model.is_empty() {
            return Err(Error::InvalidConfig(
                "remote backend requires endpoint and model".to_string(),
            ));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn call_once(&self, prompt: &str) -> std::result::Result<String, (bool, String)> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        });
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| (true, e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| (true, e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err((true, format!("status {status}: {text}")));
        }
        if !status.is_success() {
            return Err((false, format!("status {status}: {text}")));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| (false, format!("bad response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| (false, "response has no choices[0].message.content".to_string()))
    }

    fn call_with_retries(&self, prompt: &str) -> std::result::Result<String, BackendError> {
        let mut attempt = 0;
        loop {
            match self.call_once(prompt) {
                Ok(content) => return Ok(content),
                Err((retryable, cause)) => {
                    attempt += 1;
                    if !retryable || attempt >= self.config.max_retries {
                        return Err(BackendError::Failed(cause));
                    }
                    let backoff = self.config.retry_backoff_ms << (attempt - 1);
                    std::thread::sleep(std::time::Duration::from_millis(backoff));
                }
            }
        }
    }
}

impl Backend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn batch_limit(&self) -> usize {
        64
    }

    fn answers(&self, items: &[BackendItem]) -> Vec<std::result::Result<BackendAnswer, BackendError>> {
        let workers = self.config.parallelism.clamp(1, items.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<std::result::Result<BackendAnswer, BackendError>>>> =
            items.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= items.len() {
                        break;
                    }
                    let outcome = self.call_with_retries(&items[i].prompt.text).map(|raw| {
                        BackendAnswer { entities: parse_answer(&raw), raw }
                    });
                    *slots[i].lock().expect("answer slot poisoned") = Some(outcome);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| slot.into_inner().expect("answer slot poisoned").expect("worker filled slot"))
            .collect()
    }
}

// ─── Execution ──────────────────────────────────────────────────────

/// Per-query execution trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: String,
    pub mode: RunMode,
    pub prompts: Vec<String>,
    pub raw_responses: Vec<String>,
    pub parsed: Vec<Vec<EntityId>>,
    /// The cache slot named by the plan's final step (decomposed mode) or
    /// the single parsed response (full mode), in backend emission order.
    pub final_answers: Vec<EntityId>,
    pub truncated: bool,
    /// Set when a step failed after retries and its slot stayed empty.
    pub degraded: bool,
    /// Wall-clock milliseconds per phase; omit for byte-stable output files.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing_ms: Option<Vec<u64>>,
}

fn submit_chunked<'a>(
    backend: &dyn Backend,
    items: Vec<BackendItem<'a>>,
) -> Vec<std::result::Result<BackendAnswer, BackendError>> {
    let limit = backend.batch_limit().max(1);
    let mut outcomes = Vec::with_capacity(items.len());
    let mut items = items;
    while !items.is_empty() {
        let rest = items.split_off(items.len().min(limit));
        outcomes.extend(backend.answers(&items));
        items = rest;
    }
    outcomes
}

fn absorb_outcome(
    record: &mut RunRecord,
    outcome: std::result::Result<BackendAnswer, BackendError>,
    step_index: usize,
) -> Result<Vec<EntityId>> {
    match outcome {
        Ok(answer) => {
            record.raw_responses.push(answer.raw);
            record.parsed.push(answer.entities.clone());
            Ok(answer.entities)
        }
        Err(BackendError::MissingTrace(hash)) => Err(Error::MissingTrace(hash)),
        Err(BackendError::Failed(cause)) => {
            record.degraded = true;
            record.raw_responses.push(format!("<failed step {step_index}: {cause}>"));
            record.parsed.push(Vec::new());
            Ok(Vec::new())
        }
    }
}

/// Run one query phase by phase against the backend.
pub fn execute_decomposed(
    query: &QueryDag,
    plan: &DecompositionPlan,
    neighborhood: &Neighborhood,
    backend: &dyn Backend,
    tokenizer: &dyn Tokenizer,
) -> Result<RunRecord> {
    let mut records = execute_batch_decomposed(
        &[(query, plan, neighborhood)],
        backend,
        tokenizer,
    )?;
    Ok(records.pop().expect("one record per query"))
}

/// Run a batch of queries with equal-phase steps grouped for joint backend
/// submission. Every phase-p response is cached before any phase-p+1 prompt
/// is rendered or submitted.
pub fn execute_batch_decomposed(
    runs: &[(&QueryDag, &DecompositionPlan, &Neighborhood)],
    backend: &dyn Backend,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<RunRecord>> {
    let mut records: Vec<RunRecord> = runs
        .iter()
        .map(|(query, _, neighborhood)| RunRecord {
            query_id: query.id.clone(),
            mode: RunMode::Decomposed,
            prompts: Vec::new(),
            raw_responses: Vec::new(),
            parsed: Vec::new(),
            final_answers: Vec::new(),
            truncated: neighborhood.truncated(),
            degraded: false,
            timing_ms: Some(Vec::new()),
        })
        .collect();
    let contexts: Vec<String> =
        runs.iter().map(|(_, _, neighborhood)| neighborhood.context_text()).collect();
    let mut caches: Vec<AnswerCache> = runs.iter().map(|_| AnswerCache::new()).collect();
    let max_phases = runs.iter().map(|(_, plan, _)| plan.phases.len()).max().unwrap_or(0);

    for phase in 0..max_phases {
        let started = Instant::now();
        // (run index, step) pairs participating in this phase.
        let mut scheduled: Vec<(usize, &ElementaryStep)> = Vec::new();
        let mut prompts: Vec<PromptText> = Vec::new();
        for (run_idx, (query, plan, _)) in runs.iter().enumerate() {
            let Some(step_indices) = plan.phases.get(phase) else { continue };
            for &idx in step_indices {
                let step = plan.step(idx);
                let prompt =
                    render_step_prompt(step, &contexts[run_idx], &caches[run_idx], tokenizer, &query.id)?;
                scheduled.push((run_idx, step));
                prompts.push(prompt);
            }
        }
        if scheduled.is_empty() {
            continue;
        }

        let items: Vec<BackendItem> = scheduled
            .iter()
            .zip(&prompts)
            .map(|(&(run_idx, step), prompt)| BackendItem {
                prompt,
                payload: TaskPayload::Step {
                    step,
                    inputs: step
                        .inputs
                        .iter()
                        .map(|slot| {
                            (slot.clone(), caches[run_idx].get(slot).unwrap_or_default().to_vec())
                        })
                        .collect(),
                },
                neighborhood: runs[run_idx].2,
            })
            .collect();
        let outcomes = submit_chunked(backend, items);

        let elapsed = started.elapsed().as_millis() as u64;
        for (((run_idx, step), prompt), outcome) in
            scheduled.into_iter().zip(prompts).zip(outcomes)
        {
            let record = &mut records[run_idx];
            record.prompts.push(prompt.text);
            let entities = absorb_outcome(record, outcome, step.index)?;
            caches[run_idx].write(&step.output, entities)?;
        }
        for (run_idx, (_, plan, _)) in runs.iter().enumerate() {
            if plan.phases.get(phase).is_some() {
                if let Some(timing) = &mut records[run_idx].timing_ms {
                    timing.push(elapsed);
                }
            }
        }
    }

    for (run_idx, (_, plan, _)) in runs.iter().enumerate() {
        records[run_idx].final_answers = caches[run_idx]
            .get(&plan.final_slot)
            .ok_or_else(|| Error::MissingPlaceholder(plan.final_slot.clone()))?
            .to_vec();
    }
    Ok(records)
}

/// Run one query as a single full prompt.
pub fn execute_full(
    query: &QueryDag,
    neighborhood: &Neighborhood,
    backend: &dyn Backend,
    tokenizer: &dyn Tokenizer,
) -> Result<RunRecord> {
    let mut records = execute_batch_full(&[(query, neighborhood)], backend, tokenizer)?;
    Ok(records.pop().expect("one record per query"))
}

/// Run a batch of full prompts in backend-sized chunks.
pub fn execute_batch_full(
    runs: &[(&QueryDag, &Neighborhood)],
    backend: &dyn Backend,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<RunRecord>> {
    let prompts: Vec<PromptText> = runs
        .iter()
        .map(|(query, neighborhood)| {
            render_full_prompt(query, &neighborhood.context_text(), tokenizer)
        })
        .collect();
    let items: Vec<BackendItem> = runs
        .iter()
        .zip(&prompts)
        .map(|(&(query, neighborhood), prompt)| BackendItem {
            prompt,
            payload: TaskPayload::Full(query),
            neighborhood,
        })
        .collect();

    let started = Instant::now();
    let outcomes = submit_chunked(backend, items);
    let elapsed = started.elapsed().as_millis() as u64;

    runs.iter()
        .zip(prompts)
        .zip(outcomes)
        .map(|((&(query, neighborhood), prompt), outcome)| {
            let mut record = RunRecord {
                query_id: query.id.clone(),
                mode: RunMode::Full,
                prompts: vec![prompt.text],
                raw_responses: Vec::new(),
                parsed: Vec::new(),
                final_answers: Vec::new(),
                truncated: neighborhood.truncated(),
                degraded: false,
                timing_ms: Some(vec![elapsed]),
            };
            record.final_answers = absorb_outcome(&mut record, outcome, 1)?;
            Ok(record)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::RelationId;
    use crate::kg::KnowledgeGraph;
    use crate::query::QueryType;
    use crate::retrieval::{retrieve_neighborhood, ApproxTokenizer, RetrievalConfig};

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

    fn run_decomposed(query: &QueryDag) -> RunRecord {
        let kg = g0();
        let nb =
            retrieve_neighborhood(&kg, query, &RetrievalConfig::unbounded(), &ApproxTokenizer)
                .unwrap();
        let plan = decompose(query);
        execute_decomposed(query, &plan, &nb, &SymbolicBackend, &ApproxTokenizer).unwrap()
    }

    #[test]
    fn parse_answer_examples() {
        assert_eq!(parse_answer("The answers are e4 and e7."), vec![e(4), e(7)]);
        assert_eq!(parse_answer("e4, e4, e2"), vec![e(4), e(2)]);
        assert_eq!(parse_answer("No entities satisfy this."), Vec::<EntityId>::new());
        assert_eq!(parse_answer("none"), Vec::<EntityId>::new());
        // Not entity tokens: embedded in words.
        assert_eq!(parse_answer("see4 thee42x"), Vec::<EntityId>::new());
    }

    #[test]
    fn symbolic_answer_examples() {
        let kg = g0();
        let query = q(QueryType::OneP, &[1], &[1]);
        let nb = retrieve_neighborhood(&kg, &query, &RetrievalConfig::unbounded(), &ApproxTokenizer)
            .unwrap();
        let plan = decompose(&query);
        assert_eq!(symbolic_answer(&plan.steps[0], &[], nb.triplets()), vec![e(2), e(3)]);

        let neg = q(QueryType::TwoIn, &[1, 3], &[1, 2]);
        let nb = retrieve_neighborhood(&kg, &neg, &RetrievalConfig::unbounded(), &ApproxTokenizer)
            .unwrap();
        let plan = decompose(&neg);
        // Second step: entities connected to e3 by any relation other than r2.
        assert_eq!(symbolic_answer(&plan.steps[1], &[], nb.triplets()), vec![e(5)]);

        // Intersection with an empty side is empty.
        let two_i = decompose(&q(QueryType::TwoI, &[1, 2], &[1, 2]));
        let inputs = vec![("PP1".to_string(), vec![]), ("PP2".to_string(), vec![e(4)])];
        assert_eq!(symbolic_answer(&two_i.steps[2], &inputs, &[]), vec![]);
    }

    #[test]
    fn decomposed_2p_reaches_e4() {
        let record = run_decomposed(&q(QueryType::TwoP, &[1], &[1, 2]));
        assert_eq!(record.final_answers, vec![e(4)]);
        assert!(!record.degraded);
        assert_eq!(record.prompts.len(), 2);
    }

    #[test]
    fn decomposed_2i_intersects_to_e4() {
        let record = run_decomposed(&q(QueryType::TwoI, &[2, 3], &[2, 2]));
        assert_eq!(record.final_answers, vec![e(4)]);
    }

    #[test]
    fn full_mode_1p() {
        let kg = g0();
        let query = q(QueryType::OneP, &[1], &[1]);
        let nb = retrieve_neighborhood(&kg, &query, &RetrievalConfig::unbounded(), &ApproxTokenizer)
            .unwrap();
        let record = execute_full(&query, &nb, &SymbolicBackend, &ApproxTokenizer).unwrap();
        assert_eq!(record.final_answers, vec![e(2), e(3)]);
        assert_eq!(record.prompts.len(), 1);
    }

    #[test]
    fn full_and_decomposed_agree_on_up() {
        let kg = g0();
        let query = q(QueryType::Up, &[1, 3], &[1, 3, 3]);
        let nb = retrieve_neighborhood(&kg, &query, &RetrievalConfig::unbounded(), &ApproxTokenizer)
            .unwrap();
        let full = execute_full(&query, &nb, &SymbolicBackend, &ApproxTokenizer).unwrap();
        let plan = decompose(&query);
        let decomposed =
            execute_decomposed(&query, &plan, &nb, &SymbolicBackend, &ApproxTokenizer).unwrap();
        let as_set = |v: &[EntityId]| v.iter().copied().collect::<BTreeSet<_>>();
        assert_eq!(as_set(&full.final_answers), as_set(&decomposed.final_answers));
    }

    /// Backend that answers prose with no IDs, like a misbehaving model.
    struct ProseBackend;

    impl Backend for ProseBackend {
        fn kind(&self) -> BackendKind {
            BackendKind::Remote
        }

        fn answers(&self, items: &[BackendItem]) -> Vec<std::result::Result<BackendAnswer, BackendError>> {
            items
                .iter()
                .map(|_| {
                    let raw = "I could not find anything relevant.".to_string();
                    Ok(BackendAnswer { entities: parse_answer(&raw), raw })
                })
                .collect()
        }
    }

    #[test]
    fn prose_answers_yield_empty_final_answers() {
        let kg = g0();
        let query = q(QueryType::OneP, &[1], &[1]);
        let nb = retrieve_neighborhood(&kg, &query, &RetrievalConfig::unbounded(), &ApproxTokenizer)
            .unwrap();
        let record = execute_full(&query, &nb, &ProseBackend, &ApproxTokenizer).unwrap();
        assert!(record.final_answers.is_empty());
        assert!(!record.degraded); // parsed fine, just no IDs
    }

    /// Backend that fails every call.
    struct FailingBackend;

    impl Backend for FailingBackend {
        fn kind(&self) -> BackendKind {
            BackendKind::Remote
        }

        fn answers(&self, items: &[BackendItem]) -> Vec<std::result::Result<BackendAnswer, BackendError>> {
            items.iter().map(|_| Err(BackendError::Failed("boom".to_string()))).collect()
        }
    }

    #[test]
    fn failed_steps_degrade_and_propagate_empty_sets() {
        let kg = g0();
        let query = q(QueryType::TwoP, &[1], &[1, 2]);
        let nb = retrieve_neighborhood(&kg, &query, &RetrievalConfig::unbounded(), &ApproxTokenizer)
            .unwrap();
        let plan = decompose(&query);
        let record =
            execute_decomposed(&query, &plan, &nb, &FailingBackend, &ApproxTokenizer).unwrap();
        assert!(record.degraded);
        assert!(record.final_answers.is_empty());
        // The second-phase prompt saw "none" in place of the empty slot.
        assert!(record.prompts[1].contains("none"));
    }

    #[test]
    fn record_and_replay_round_trip() {
        let kg = g0();
        let query = q(QueryType::ThreeP, &[1], &[1, 2, 3]);
        let nb = retrieve_neighborhood(&kg, &query, &RetrievalConfig::unbounded(), &ApproxTokenizer)
            .unwrap();
        let plan = decompose(&query);

        let recorder = RecordingBackend::new(&SymbolicBackend);
        let original =
            execute_decomposed(&query, &plan, &nb, &recorder, &ApproxTokenizer).unwrap();
        let trace = recorder.into_records();
        assert_eq!(trace.len(), 3);

        let replay = ReplayBackend::from_records(trace);
        let replayed = execute_decomposed(&query, &plan, &nb, &replay, &ApproxTokenizer).unwrap();
        assert_eq!(replayed.final_answers, original.final_answers);
        assert_eq!(replayed.raw_responses, original.raw_responses);
    }

    #[test]
    fn replay_without_entry_names_the_hash() {
        let kg = g0();
        let query = q(QueryType::OneP, &[1], &[1]);
        let nb = retrieve_neighborhood(&kg, &query, &RetrievalConfig::unbounded(), &ApproxTokenizer)
            .unwrap();
        let plan = decompose(&query);
        let replay = ReplayBackend::default();
        match execute_decomposed(&query, &plan, &nb, &replay, &ApproxTokenizer) {
            Err(Error::MissingTrace(hash)) => assert_eq!(hash.len(), 64),
            other => panic!("expected MissingTrace, got {other:?}"),
        }
    }

    /// Backend that logs which step indices arrive in each call.
    struct ProbeBackend {
        calls: Mutex<Vec<Vec<usize>>>,
    }

    impl Backend for ProbeBackend {
        fn kind(&self) -> BackendKind {
            BackendKind::Symbolic
        }

        fn answers(&self, items: &[BackendItem]) -> Vec<std::result::Result<BackendAnswer, BackendError>> {
            let indices = items
                .iter()
                .map(|i| match &i.payload {
                    TaskPayload::Step { step, .. } => step.index,
                    TaskPayload::Full(_) => 0,
                })
                .collect();
            self.calls.lock().unwrap().push(indices);
            SymbolicBackend.answers(items)
        }
    }

    #[test]
    fn phases_are_isolated() {
        let kg = g0();
        let query = q(QueryType::Ip, &[1, 1], &[1, 1, 2]);
        let nb = retrieve_neighborhood(&kg, &query, &RetrievalConfig::unbounded(), &ApproxTokenizer)
            .unwrap();
        let plan = decompose(&query);
        let probe = ProbeBackend { calls: Mutex::new(Vec::new()) };
        execute_decomposed(&query, &plan, &nb, &probe, &ApproxTokenizer).unwrap();
        let calls = probe.calls.into_inner().unwrap();
        assert_eq!(calls, vec![vec![1, 2], vec![3], vec![4]]);
    }

    #[test]
    fn batch_mode_groups_equal_phases_across_queries() {
        let kg = g0();
        let qa = QueryDag::new("qa", QueryType::TwoI, vec![e(2), e(3)], vec![r(2), r(2)]).unwrap();
        let qb = QueryDag::new("qb", QueryType::TwoP, vec![e(1)], vec![r(1), r(2)]).unwrap();
        let plans = [decompose(&qa), decompose(&qb)];
        let nbs: Vec<Neighborhood> = [&qa, &qb]
            .iter()
            .map(|query| {
                retrieve_neighborhood(&kg, query, &RetrievalConfig::unbounded(), &ApproxTokenizer)
                    .unwrap()
            })
            .collect();
        let probe = ProbeBackend { calls: Mutex::new(Vec::new()) };
        let runs = [(&qa, &plans[0], &nbs[0]), (&qb, &plans[1], &nbs[1])];
        let records = execute_batch_decomposed(&runs, &probe, &ApproxTokenizer).unwrap();
        assert_eq!(records[0].final_answers, vec![e(4)]);
        assert_eq!(records[1].final_answers, vec![e(4)]);
        let calls = probe.calls.into_inner().unwrap();
        // Phase 1 carries qa's two projections plus qb's first; later phases shrink.
        assert_eq!(calls[0], vec![1, 2, 1]);
        assert_eq!(calls[1], vec![3, 2]);
        assert_eq!(calls[2], vec![3]);
    }

    #[test]
    fn chunking_respects_batch_limit() {
        struct TinyBatch(Mutex<Vec<usize>>);
        impl Backend for TinyBatch {
            fn kind(&self) -> BackendKind {
                BackendKind::Symbolic
            }
            fn batch_limit(&self) -> usize {
                2
            }
            fn answers(&self, items: &[BackendItem]) -> Vec<std::result::Result<BackendAnswer, BackendError>> {
                self.0.lock().unwrap().push(items.len());
                SymbolicBackend.answers(items)
            }
        }
        let kg = g0();
        let query = q(QueryType::ThreeI, &[1, 2, 3], &[1, 2, 2]);
        let nb = retrieve_neighborhood(&kg, &query, &RetrievalConfig::unbounded(), &ApproxTokenizer)
            .unwrap();
        let plan = decompose(&query);
        let backend = TinyBatch(Mutex::new(Vec::new()));
        execute_decomposed(&query, &plan, &nb, &backend, &ApproxTokenizer).unwrap();
        assert_eq!(*backend.0.lock().unwrap(), vec![2, 1, 1]);
    }
}
