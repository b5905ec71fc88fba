//! Triplet store with forward/backward adjacency indexes.
//!
//! Loading interns labels to abstract IDs in first-appearance order,
//! deduplicates rows, and builds every index eagerly. The graph is immutable
//! afterward and safe to share across any number of reader threads.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use crate::error::Error;
use crate::ids::{EntityId, RelationId};
use crate::Result;

/// A single `(head, relation, tail)` edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triplet {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self { head, relation, tail }
    }

    /// Textual tuple form used in prompt contexts, e.g. `(e1,r1,e2)`.
    pub fn tuple_text(&self) -> String {
        format!("({},{},{})", self.head, self.relation, self.tail)
    }
}

/// Bidirectional mapping between original labels and abstract IDs.
#[derive(Debug, Clone, Default)]
pub struct IdMap {
    entity_labels: Vec<String>,
    relation_labels: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relation_ids: HashMap<String, RelationId>,
}

impl IdMap {
    fn intern_entity(&mut self, label: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(label) {
            return id;
        }
        let id = EntityId(self.entity_labels.len() as u32);
        self.entity_labels.push(label.to_string());
        self.entity_ids.insert(label.to_string(), id);
        id
    }

    fn intern_relation(&mut self, label: &str) -> RelationId {
        if let Some(&id) = self.relation_ids.get(label) {
            return id;
        }
        let id = RelationId(self.relation_labels.len() as u32);
        self.relation_labels.push(label.to_string());
        self.relation_ids.insert(label.to_string(), id);
        id
    }

    pub fn entity_label(&self, id: EntityId) -> Option<&str> {
        self.entity_labels.get(id.0 as usize).map(String::as_str)
    }

    pub fn relation_label(&self, id: RelationId) -> Option<&str> {
        self.relation_labels.get(id.0 as usize).map(String::as_str)
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entity_ids.get(label).copied()
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relation_ids.get(label).copied()
    }

    pub fn entity_count(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_labels.len()
    }

    /// `(id, label)` rows in ID order, for the two-column TSV export.
    pub fn entity_rows(&self) -> impl Iterator<Item = (EntityId, &str)> {
        self.entity_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (EntityId(i as u32), l.as_str()))
    }

    pub fn relation_rows(&self) -> impl Iterator<Item = (RelationId, &str)> {
        self.relation_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (RelationId(i as u32), l.as_str()))
    }
}

/// Immutable, fully indexed triplet store over abstract IDs.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: BTreeSet<EntityId>,
    relations: BTreeSet<RelationId>,
    /// All triplets, deduplicated, sorted by `(head, relation, tail)`.
    triplets: Vec<Triplet>,
    out_index: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    in_index: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    /// Entity -> indices into `triplets` (ascending, hence sorted triplets).
    incident_index: HashMap<EntityId, Vec<usize>>,
}

impl KnowledgeGraph {
    /// Build a graph directly from abstract-ID triplets.
    ///
    /// Duplicates are dropped. The entity and relation tables are exactly the
    /// IDs mentioned by the input.
    pub fn from_triplets(triplets: impl IntoIterator<Item = Triplet>) -> Result<Self> {
        let set: BTreeSet<Triplet> = triplets.into_iter().collect();
        if set.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let triplets: Vec<Triplet> = set.into_iter().collect();

        let mut entities = BTreeSet::new();
        let mut relations = BTreeSet::new();
        let mut out_index: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        let mut in_index: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        let mut incident_index: HashMap<EntityId, Vec<usize>> = HashMap::new();

        for (i, t) in triplets.iter().enumerate() {
            entities.insert(t.head);
            entities.insert(t.tail);
            relations.insert(t.relation);
            out_index.entry((t.head, t.relation)).or_default().push(t.tail);
            in_index.entry((t.tail, t.relation)).or_default().push(t.head);
            incident_index.entry(t.head).or_default().push(i);
            if t.tail != t.head {
                incident_index.entry(t.tail).or_default().push(i);
            }
        }
        // Input is sorted by (h,r,t), so out_index values arrive sorted; the
        // in_index values do not and need a sort of their own.
        for v in in_index.values_mut() {
            v.sort_unstable();
            v.dedup();
        }

        Ok(Self { entities, relations, triplets, out_index, in_index, incident_index })
    }

    /// Load a `head<TAB>relation<TAB>tail` stream, interning labels to
    /// abstract IDs in first-appearance order.
    pub fn load_triplets(reader: impl BufRead) -> Result<(Self, IdMap)> {
        let mut id_map = IdMap::default();
        let mut triplets = Vec::new();
        for (line_no, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (h, r, t) = split_triplet_line(&line).ok_or(Error::MalformedLine(line_no + 1))?;
            let head = id_map.intern_entity(h);
            let relation = id_map.intern_relation(r);
            let tail = id_map.intern_entity(t);
            triplets.push(Triplet::new(head, relation, tail));
        }
        if triplets.is_empty() {
            return Err(Error::EmptyGraph);
        }
        Ok((Self::from_triplets(triplets)?, id_map))
    }

    pub fn entities(&self) -> &BTreeSet<EntityId> {
        &self.entities
    }

    pub fn relations(&self) -> &BTreeSet<RelationId> {
        &self.relations
    }

    /// All triplets, sorted by `(head, relation, tail)`.
    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn contains_entity(&self, e: EntityId) -> bool {
        self.entities.contains(&e)
    }

    pub fn contains_relation(&self, r: RelationId) -> bool {
        self.relations.contains(&r)
    }

    fn check_ids(&self, e: EntityId, r: RelationId) -> Result<()> {
        if !self.contains_entity(e) {
            return Err(Error::UnknownId(e.to_string()));
        }
        if !self.contains_relation(r) {
            return Err(Error::UnknownId(r.to_string()));
        }
        Ok(())
    }

    /// `{ t : (e, r, t) ∈ triplets }`, ascending.
    pub fn successors(&self, e: EntityId, r: RelationId) -> Result<Vec<EntityId>> {
        self.check_ids(e, r)?;
        Ok(self.out_index.get(&(e, r)).cloned().unwrap_or_default())
    }

    /// `{ t : ∃ r' ≠ r, (e, r', t) ∈ triplets }`, ascending.
    pub fn successors_excluding(&self, e: EntityId, r: RelationId) -> Result<Vec<EntityId>> {
        self.check_ids(e, r)?;
        let mut out: BTreeSet<EntityId> = BTreeSet::new();
        for &i in self.incident_index.get(&e).into_iter().flatten() {
            let t = &self.triplets[i];
            if t.head == e && t.relation != r {
                out.insert(t.tail);
            }
        }
        Ok(out.into_iter().collect())
    }

    /// `{ h : (h, r, e) ∈ triplets }`, ascending.
    pub fn predecessors(&self, e: EntityId, r: RelationId) -> Result<Vec<EntityId>> {
        self.check_ids(e, r)?;
        Ok(self.in_index.get(&(e, r)).cloned().unwrap_or_default())
    }

    /// All triplets with head or tail in `frontier`, optionally restricted to
    /// a relation set, sorted by `(head, relation, tail)`.
    pub fn incident_triplets(
        &self,
        frontier: &BTreeSet<EntityId>,
        relation_filter: Option<&BTreeSet<RelationId>>,
    ) -> Vec<Triplet> {
        let mut indices: BTreeSet<usize> = BTreeSet::new();
        for e in frontier {
            for &i in self.incident_index.get(e).into_iter().flatten() {
                if relation_filter.is_none_or(|f| f.contains(&self.triplets[i].relation)) {
                    indices.insert(i);
                }
            }
        }
        indices.into_iter().map(|i| self.triplets[i]).collect()
    }

    /// Incident triplets of a single entity, sorted, optionally filtered.
    pub fn incident_of(
        &self,
        e: EntityId,
        relation_filter: Option<&BTreeSet<RelationId>>,
    ) -> impl Iterator<Item = Triplet> + '_ {
        self.incident_index
            .get(&e)
            .into_iter()
            .flatten()
            .map(|&i| self.triplets[i])
            .filter(move |t| relation_filter.is_none_or(|f| f.contains(&t.relation)))
    }
}

fn split_triplet_line(line: &str) -> Option<(&str, &str, &str)> {
    let mut parts = line.split('\t');
    let h = parts.next()?;
    let r = parts.next()?;
    let t = parts.next()?;
    if parts.next().is_some() || h.is_empty() || r.is_empty() || t.is_empty() {
        return None;
    }
    Some((h, r, t))
}

/// Abstract a raw triplet TSV without building the graph: dedup rows, intern
/// labels in first-appearance order, and return the abstract rows plus the
/// mapping.
///
/// Rows come back in first-appearance order, so the abstract TSV re-abstracts
/// to itself (the export is a fixed point of loading).
pub fn abstract_tsv(reader: impl BufRead) -> Result<(Vec<Triplet>, IdMap)> {
    let mut id_map = IdMap::default();
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (h, r, t) = split_triplet_line(&line).ok_or(Error::MalformedLine(line_no + 1))?;
        let triplet = Triplet::new(
            id_map.intern_entity(h),
            id_map.intern_relation(r),
            id_map.intern_entity(t),
        );
        if seen.insert(triplet) {
            rows.push(triplet);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyGraph);
    }
    Ok((rows, id_map))
}
