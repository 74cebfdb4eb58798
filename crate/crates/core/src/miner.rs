//! Domain mining: breadth-first exploration of the lexicon from root
//! concepts over a user-selected set of relations.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{ConceptId, Lexicon, RelationKind};

/// A mined domain dataset: the concepts reachable from the roots within
/// `depth` hops, plus the hypernym pairs induced among them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub roots: Vec<ConceptId>,
    pub depth: usize,
    pub relations: BTreeSet<RelationKind>,
    pub members: BTreeSet<ConceptId>,
    pub hypernym_pairs: BTreeSet<(ConceptId, ConceptId)>,
}

impl Domain {
    pub fn contains(&self, id: &ConceptId) -> bool {
        self.members.contains(id)
    }

    /// Canonical serialized form, used both for the manifest file and for
    /// digesting.
    pub fn to_manifest_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("domain serializes");
        s.push('\n');
        s
    }

    pub fn from_manifest_json(s: &str) -> Result<Self> {
        serde_json::from_str(s.trim()).map_err(Error::from)
    }
}

/// Traversal knobs. The defaults descend the taxonomy (root towards
/// subclasses) and walk derivation/topic edges in both directions.
#[derive(Debug, Clone, Copy)]
pub struct MineOptions {
    /// When a taxonomic relation (hypernym or hyponym) is selected, follow
    /// hyponym edges (downwards) if true, hypernym edges (upwards) if false.
    pub descend_taxonomy: bool,
    /// Treat derivation and topic edges as undirected.
    pub bidirectional_lateral: bool,
}

impl Default for MineOptions {
    fn default() -> Self {
        MineOptions {
            descend_taxonomy: true,
            bidirectional_lateral: true,
        }
    }
}

/// Summary counts for a domain, one row of a statistics table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainStats {
    pub concepts: usize,
    pub hypernyms: usize,
    pub depth: usize,
    pub roots: Vec<ConceptId>,
}

pub fn mine_domain(
    lex: &Lexicon,
    roots: &[ConceptId],
    relations: &BTreeSet<RelationKind>,
    depth: usize,
) -> Result<Domain> {
    mine_domain_with(lex, roots, relations, depth, MineOptions::default())
}

/// Breadth-first exploration from `roots`, visiting only edges of the
/// selected `relations` (see [`MineOptions`] for direction handling). The
/// frontier is expanded in sorted id order, so the member set and its
/// iteration order are deterministic.
pub fn mine_domain_with(
    lex: &Lexicon,
    roots: &[ConceptId],
    relations: &BTreeSet<RelationKind>,
    depth: usize,
    options: MineOptions,
) -> Result<Domain> {
    if relations.is_empty() {
        return Err(Error::EmptyRelations);
    }
    for kind in relations {
        if matches!(kind, RelationKind::Holonym | RelationKind::Meronym) {
            return Err(Error::NonTraversalRelation(kind.name().to_owned()));
        }
    }
    if roots.is_empty() {
        return Err(Error::UnknownConcept("<no roots given>".to_owned()));
    }
    for root in roots {
        if !lex.contains(root) {
            return Err(Error::UnknownConcept(root.to_string()));
        }
    }

    let taxonomic = relations.contains(&RelationKind::Hypernym)
        || relations.contains(&RelationKind::Hyponym);
    let taxonomy_kind = if options.descend_taxonomy {
        RelationKind::Hyponym
    } else {
        RelationKind::Hypernym
    };

    let mut dist: BTreeMap<ConceptId, usize> = BTreeMap::new();
    let mut frontier: BTreeSet<ConceptId> = roots.iter().cloned().collect();
    for root in &frontier {
        dist.insert(root.clone(), 0);
    }

    for hop in 1..=depth {
        let mut next = BTreeSet::new();
        for node in &frontier {
            let mut push = |id: &ConceptId| {
                if !dist.contains_key(id) {
                    next.insert(id.clone());
                }
            };
            if taxonomic {
                lex.neighbors(node, taxonomy_kind).for_each(&mut push);
            }
            for lateral in [RelationKind::Derivation, RelationKind::Topic] {
                if relations.contains(&lateral) {
                    lex.neighbors(node, lateral).for_each(&mut push);
                    if options.bidirectional_lateral {
                        lex.incoming(node, lateral).for_each(&mut push);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        for id in &next {
            dist.insert(id.clone(), hop);
        }
        frontier = next;
    }

    let members: BTreeSet<ConceptId> = dist.into_keys().collect();
    let hypernym_pairs = lex.hypernym_closure(&members);
    Ok(Domain {
        roots: roots.to_vec(),
        depth,
        relations: relations.clone(),
        members,
        hypernym_pairs,
    })
}

pub fn domain_stats(domain: &Domain) -> DomainStats {
    DomainStats {
        concepts: domain.members.len(),
        hypernyms: domain.hypernym_pairs.len(),
        depth: domain.depth,
        roots: domain.roots.clone(),
    }
}
