//! In-memory lexicon graph: concepts, typed relation edges, form lookup and
//! hypernym closures.
//!
//! The on-disk format is line-delimited JSON, one concept record per line:
//!
//! ```text
//! {"id":"w1","pos":"n","forms":["sugar"],"definition":"...","relations":[{"kind":"hypernym","target":"w2"}]}
//! ```
//!
//! Line order is irrelevant; the loader symmetrizes hypernym/hyponym edges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque identifier of a concept (synset).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub String);

impl ConceptId {
    pub fn new(id: impl Into<String>) -> Self {
        ConceptId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ConceptId {
    fn from(s: &str) -> Self {
        ConceptId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PartOfSpeech {
    #[serde(rename = "n")]
    Noun,
    #[serde(rename = "v")]
    Verb,
    #[serde(rename = "a")]
    Adjective,
    #[serde(rename = "r")]
    Adverb,
}

impl PartOfSpeech {
    /// One-letter code used in lexicon files.
    pub fn code(self) -> &'static str {
        match self {
            PartOfSpeech::Noun => "n",
            PartOfSpeech::Verb => "v",
            PartOfSpeech::Adjective => "a",
            PartOfSpeech::Adverb => "r",
        }
    }

    /// Full English name, used when rendering prompts.
    pub fn full_name(self) -> &'static str {
        match self {
            PartOfSpeech::Noun => "noun",
            PartOfSpeech::Verb => "verb",
            PartOfSpeech::Adjective => "adjective",
            PartOfSpeech::Adverb => "adverb",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Hypernym,
    Hyponym,
    Derivation,
    Topic,
    Holonym,
    Meronym,
}

impl RelationKind {
    pub fn name(self) -> &'static str {
        match self {
            RelationKind::Hypernym => "hypernym",
            RelationKind::Hyponym => "hyponym",
            RelationKind::Derivation => "derivation",
            RelationKind::Topic => "topic",
            RelationKind::Holonym => "holonym",
            RelationKind::Meronym => "meronym",
        }
    }
}

impl std::str::FromStr for RelationKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "hypernym" => Ok(RelationKind::Hypernym),
            "hyponym" => Ok(RelationKind::Hyponym),
            "derivation" => Ok(RelationKind::Derivation),
            "topic" => Ok(RelationKind::Topic),
            "holonym" => Ok(RelationKind::Holonym),
            "meronym" => Ok(RelationKind::Meronym),
            other => Err(format!("unknown relation kind `{other}`")),
        }
    }
}

/// A directed, typed edge between two concepts.
///
/// For `holonym`, `src -> dst` reads "dst is a whole of src" (src is a part
/// of dst); `meronym` is the reverse.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationEdge {
    pub src: ConceptId,
    pub kind: RelationKind,
    pub dst: ConceptId,
}

/// A lexical concept: identifier, part-of-speech, written forms and a
/// definition. The first written form is the canonical one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub pos: PartOfSpeech,
    pub written_forms: Vec<String>,
    pub definition: String,
}

impl Concept {
    pub fn canonical_form(&self) -> &str {
        &self.written_forms[0]
    }

    /// Case-folded written forms, deduplicated.
    pub fn folded_forms(&self) -> BTreeSet<String> {
        self.written_forms.iter().map(|f| fold(f)).collect()
    }
}

/// Case folding used for all form matching: Unicode lowercase.
pub fn fold(s: &str) -> String {
    s.to_lowercase()
}

#[derive(Debug, Serialize, Deserialize)]
struct ConceptRecord {
    id: String,
    pos: PartOfSpeech,
    forms: Vec<String>,
    definition: String,
    #[serde(default)]
    relations: Vec<RelationRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RelationRecord {
    kind: RelationKind,
    target: String,
}

/// Immutable lexicon graph. Safe for concurrent reads after loading.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lexicon {
    concepts: BTreeMap<ConceptId, Concept>,
    outgoing: BTreeMap<ConceptId, BTreeMap<RelationKind, BTreeSet<ConceptId>>>,
    incoming: BTreeMap<ConceptId, BTreeMap<RelationKind, BTreeSet<ConceptId>>>,
    form_index: BTreeMap<String, BTreeSet<ConceptId>>,
}

impl Lexicon {
    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn get(&self, id: &ConceptId) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.concepts.contains_key(id)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ConceptId> {
        self.concepts.keys()
    }

    /// Concept ids carrying the given case-folded written form.
    pub fn ids_with_form(&self, folded_form: &str) -> Option<&BTreeSet<ConceptId>> {
        self.form_index.get(folded_form)
    }

    /// Outgoing neighbors of `id` over edges of `kind`.
    pub fn neighbors(&self, id: &ConceptId, kind: RelationKind) -> impl Iterator<Item = &ConceptId> {
        self.outgoing
            .get(id)
            .and_then(|m| m.get(&kind))
            .into_iter()
            .flatten()
    }

    /// Sources of edges of `kind` pointing at `id`.
    pub fn incoming(&self, id: &ConceptId, kind: RelationKind) -> impl Iterator<Item = &ConceptId> {
        self.incoming
            .get(id)
            .and_then(|m| m.get(&kind))
            .into_iter()
            .flatten()
    }

    /// All edges, sorted by (src, kind, dst).
    pub fn edges(&self) -> Vec<RelationEdge> {
        let mut out = Vec::new();
        for (src, by_kind) in &self.outgoing {
            for (kind, dsts) in by_kind {
                for dst in dsts {
                    out.push(RelationEdge {
                        src: src.clone(),
                        kind: *kind,
                        dst: dst.clone(),
                    });
                }
            }
        }
        out
    }

    fn add_edge(&mut self, src: &ConceptId, kind: RelationKind, dst: &ConceptId) {
        self.outgoing
            .entry(src.clone())
            .or_default()
            .entry(kind)
            .or_default()
            .insert(dst.clone());
        self.incoming
            .entry(dst.clone())
            .or_default()
            .entry(kind)
            .or_default()
            .insert(src.clone());
    }

    /// Transitive closure of hypernym edges, restricted to pairs whose both
    /// endpoints lie in `restrict`. Reachability is computed over the full
    /// graph, so paths may pass through concepts outside `restrict`. The
    /// output is irreflexive even when the graph contains hypernym cycles.
    ///
    /// Returned pairs read (hyponym, hypernym).
    pub fn hypernym_closure(
        &self,
        restrict: &BTreeSet<ConceptId>,
    ) -> BTreeSet<(ConceptId, ConceptId)> {
        let mut pairs = BTreeSet::new();
        for start in restrict {
            if !self.contains(start) {
                continue;
            }
            let mut seen: BTreeSet<&ConceptId> = BTreeSet::new();
            let mut stack: Vec<&ConceptId> = self.neighbors(start, RelationKind::Hypernym).collect();
            while let Some(node) = stack.pop() {
                if !seen.insert(node) {
                    continue;
                }
                if node != start && restrict.contains(node) {
                    pairs.insert((start.clone(), node.clone()));
                }
                stack.extend(self.neighbors(node, RelationKind::Hypernym));
            }
        }
        pairs
    }

    /// Direct (part, whole) pairs among `restrict`, derived from holonym and
    /// meronym edges.
    pub fn part_whole_pairs(
        &self,
        restrict: &BTreeSet<ConceptId>,
    ) -> BTreeSet<(ConceptId, ConceptId)> {
        let mut pairs = BTreeSet::new();
        for id in restrict {
            for whole in self.neighbors(id, RelationKind::Holonym) {
                if restrict.contains(whole) {
                    pairs.insert((id.clone(), whole.clone()));
                }
            }
            for part in self.neighbors(id, RelationKind::Meronym) {
                if restrict.contains(part) {
                    pairs.insert((part.clone(), id.clone()));
                }
            }
        }
        pairs
    }

    /// Concepts (lexicon-wide) sharing at least one case-folded written form
    /// with `id`, excluding `id` itself.
    pub fn homonyms(&self, id: &ConceptId) -> Result<BTreeSet<ConceptId>> {
        let concept = self
            .get(id)
            .ok_or_else(|| Error::UnknownConcept(id.to_string()))?;
        let mut out = BTreeSet::new();
        for form in concept.folded_forms() {
            if let Some(ids) = self.form_index.get(&form) {
                out.extend(ids.iter().cloned());
            }
        }
        out.remove(id);
        Ok(out)
    }

    /// Serialize to the line-delimited record format, records sorted by id.
    pub fn save(&self, mut w: impl Write) -> Result<()> {
        for concept in self.concepts.values() {
            let relations = self
                .outgoing
                .get(&concept.id)
                .map(|by_kind| {
                    by_kind
                        .iter()
                        .flat_map(|(kind, dsts)| {
                            dsts.iter().map(|dst| RelationRecord {
                                kind: *kind,
                                target: dst.0.clone(),
                            })
                        })
                        .collect()
                })
                .unwrap_or_default();
            let record = ConceptRecord {
                id: concept.id.0.clone(),
                pos: concept.pos,
                forms: concept.written_forms.clone(),
                definition: concept.definition.clone(),
                relations,
            };
            serde_json::to_writer(&mut w, &record)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Load a lexicon from a line-delimited record stream.
///
/// Loading is order-independent; hypernym/hyponym edges are symmetrized.
/// Malformed records fail with the offending line number, duplicate ids and
/// dangling relation targets are reported explicitly.
pub fn load_lexicon(reader: impl BufRead) -> Result<Lexicon> {
    let mut lex = Lexicon::default();
    let mut pending_edges: Vec<(ConceptId, RelationKind, ConceptId)> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ConceptRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let (concept, edges) = validate_record(record, line_no)?;
        let id = concept.id.clone();
        if lex.concepts.contains_key(&id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        for form in concept.folded_forms() {
            lex.form_index.entry(form).or_default().insert(id.clone());
        }
        lex.concepts.insert(id, concept);
        pending_edges.extend(edges);
    }

    let mut dangling = BTreeSet::new();
    for (src, kind, dst) in &pending_edges {
        if !lex.concepts.contains_key(dst) {
            dangling.insert(format!("{src} -[{}]-> {dst}", kind.name()));
        }
    }
    if !dangling.is_empty() {
        return Err(Error::DanglingTargets(dangling.into_iter().collect()));
    }

    for (src, kind, dst) in pending_edges {
        lex.add_edge(&src, kind, &dst);
        match kind {
            RelationKind::Hypernym => lex.add_edge(&dst, RelationKind::Hyponym, &src),
            RelationKind::Hyponym => lex.add_edge(&dst, RelationKind::Hypernym, &src),
            _ => {}
        }
    }
    Ok(lex)
}

type RecordEdges = Vec<(ConceptId, RelationKind, ConceptId)>;

fn validate_record(record: ConceptRecord, line_no: usize) -> Result<(Concept, RecordEdges)> {
    let parse_err = |message: &str| Error::Parse {
        line: line_no,
        message: message.to_owned(),
    };
    if record.id.is_empty() {
        return Err(parse_err("empty id"));
    }
    if record.forms.is_empty() || record.forms.iter().any(|f| f.trim().is_empty()) {
        return Err(parse_err("forms must be non-empty"));
    }
    if record.definition.trim().is_empty() {
        return Err(parse_err("empty definition"));
    }
    let id = ConceptId::new(record.id);
    let edges = record
        .relations
        .iter()
        .map(|rel| (id.clone(), rel.kind, ConceptId::new(rel.target.clone())))
        .collect();
    Ok((
        Concept {
            id,
            pos: record.pos,
            written_forms: record.forms,
            definition: record.definition,
        },
        edges,
    ))
}
