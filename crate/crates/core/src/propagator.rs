//! Propagation of gibberish representations and definitions across a domain.
//!
//! Concepts with no internal dependencies are fully processed first (their
//! definitions keep any text that mentions nothing in-domain). Each further
//! round fully processes every concept whose definition mentions only
//! already-covered concepts (or itself); homonyms of processed concepts
//! become partially processed alongside. When no progress is possible, one
//! unprocessed concept is sampled (seeded) and given a representation only,
//! which unblocks the next round. The loop is bounded by
//! `|members| + |members ∪ homonyms|` iterations.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{fold, ConceptId, Lexicon, PartOfSpeech};
use crate::linker::{dependency_free, domain_forms, tokenize, DefinitionLink};
use crate::miner::Domain;
use crate::translator::FormMap;
use crate::{sha256_hex, sub_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Unprocessed,
    Partial,
    Full,
}

/// One concept of the parallel corpus: the English side is lexicon content
/// verbatim, the gibberish side substitutes every in-domain mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: ConceptId,
    pub pos: PartOfSpeech,
    pub forms_en: Vec<String>,
    pub definition_en: String,
    pub forms_gib: Vec<String>,
    pub definition_gib: String,
}

impl CorpusEntry {
    pub fn canonical_en(&self) -> &str {
        &self.forms_en[0]
    }

    pub fn canonical_gib(&self) -> &str {
        &self.forms_gib[0]
    }
}

/// The finished parallel corpus; immutable and share-safe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub seed: u64,
    pub domain_digest: String,
    pub entries: BTreeMap<ConceptId, CorpusEntry>,
    pub form_map: FormMap,
}

#[derive(Serialize, Deserialize)]
struct CorpusHeader {
    seed: u64,
    domain_digest: String,
    form_map_digest: String,
}

impl ParallelCorpus {
    pub fn get(&self, id: &ConceptId) -> Option<&CorpusEntry> {
        self.entries.get(id)
    }

    pub fn form_map_digest(&self) -> String {
        digest_form_map(&self.form_map)
    }

    /// Header line with seed and input digests, then one record per concept.
    pub fn save(&self, mut w: impl Write) -> Result<()> {
        let header = CorpusHeader {
            seed: self.seed,
            domain_digest: self.domain_digest.clone(),
            form_map_digest: self.form_map_digest(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for entry in self.entries.values() {
            serde_json::to_writer(&mut w, entry)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Load corpus records and re-attach the form map, verifying that it is
    /// the map the corpus was built with.
    pub fn load(reader: impl BufRead, form_map: FormMap) -> Result<Self> {
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::CorruptArtifact("corpus: missing header".into()))??;
        let header: CorpusHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::CorruptArtifact(format!("corpus header: {e}")))?;
        let actual = digest_form_map(&form_map);
        if actual != header.form_map_digest {
            return Err(Error::CorruptArtifact(format!(
                "corpus was built with form map {} but {} was supplied",
                header.form_map_digest, actual
            )));
        }
        let mut entries = BTreeMap::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CorpusEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 2,
                message: e.to_string(),
            })?;
            entries.insert(entry.id.clone(), entry);
        }
        Ok(ParallelCorpus {
            seed: header.seed,
            domain_digest: header.domain_digest,
            entries,
            form_map,
        })
    }
}

fn digest_form_map(map: &FormMap) -> String {
    let mut bytes = Vec::new();
    map.save(&mut bytes).expect("form map serializes");
    sha256_hex(&bytes)
}

/// Replace every linked span with the gibberish form of its matched form.
/// Non-link text is copied byte for byte. `links` must belong to one concept
/// and be ordered by span start.
pub fn substitute_definition(
    definition: &str,
    links: &[&DefinitionLink],
    map: &FormMap,
) -> Result<String> {
    let mut out = String::with_capacity(definition.len());
    let mut cursor = 0;
    for link in links {
        let gib = map
            .get(&link.form)
            .ok_or_else(|| Error::UnresolvedDependency {
                form: link.form.clone(),
            })?;
        out.push_str(&definition[cursor..link.start]);
        out.push_str(gib);
        cursor = link.end;
    }
    out.push_str(&definition[cursor..]);
    Ok(out)
}

/// Diagnostics of one propagation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropagateStats {
    /// Loop iterations after the initial step (each grew the full or the
    /// partial set).
    pub iterations: usize,
    /// How often the stall rule sampled a concept.
    pub stall_samples: usize,
    /// The enforced iteration bound.
    pub bound: usize,
}

pub fn propagate(
    lex: &Lexicon,
    domain: &Domain,
    links: &[DefinitionLink],
    seed: u64,
) -> Result<ParallelCorpus> {
    propagate_with_stats(lex, domain, links, seed).map(|(corpus, _)| corpus)
}

pub fn propagate_with_stats(
    lex: &Lexicon,
    domain: &Domain,
    links: &[DefinitionLink],
    seed: u64,
) -> Result<(ParallelCorpus, PropagateStats)> {
    let reserved = domain_forms(lex, domain);
    let mut map = FormMap::new(seed, reserved);
    // No gibberish word may shadow a word that stays English in some
    // definition, otherwise inversion could rewrite untouched text.
    for id in &domain.members {
        if let Some(concept) = lex.get(id) {
            let def = &concept.definition;
            map.ban_tokens(
                tokenize(def)
                    .into_iter()
                    .map(|(s, e)| fold(&def[s..e])),
            );
        }
    }

    let mut links_by_owner: BTreeMap<&ConceptId, Vec<&DefinitionLink>> = BTreeMap::new();
    for link in links {
        links_by_owner.entry(&link.concept_id).or_default().push(link);
    }

    // layers = D_n: ids at least partially processed, homonyms included.
    let mut layers: BTreeSet<ConceptId> = BTreeSet::new();
    let mut status: BTreeMap<ConceptId, Status> = domain
        .members
        .iter()
        .map(|id| (id.clone(), Status::Unprocessed))
        .collect();
    let mut gib_defs: BTreeMap<ConceptId, String> = BTreeMap::new();
    let mut full_count = 0usize;

    let mut layer_universe: BTreeSet<ConceptId> = domain.members.clone();
    for id in &domain.members {
        layer_universe.extend(lex.homonyms(id)?);
    }
    let bound = domain.members.len() + layer_universe.len();

    let mut stall_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "stall"));
    let mut stall_samples = 0usize;

    let mut translate_all_forms = |map: &mut FormMap, id: &ConceptId| -> Result<()> {
        let concept = lex
            .get(id)
            .ok_or_else(|| Error::UnknownConcept(id.to_string()))?;
        for form in &concept.written_forms {
            map.gibberish_form(form, concept.pos)?;
        }
        Ok(())
    };

    let process_fully = |map: &mut FormMap,
                         id: &ConceptId,
                         links_by_owner: &BTreeMap<&ConceptId, Vec<&DefinitionLink>>,
                         gib_defs: &mut BTreeMap<ConceptId, String>|
     -> Result<()> {
        let concept = lex
            .get(id)
            .ok_or_else(|| Error::UnknownConcept(id.to_string()))?;
        for form in &concept.written_forms {
            map.gibberish_form(form, concept.pos)?;
        }
        let own_links = links_by_owner.get(id).map(Vec::as_slice).unwrap_or(&[]);
        let gib_def = substitute_definition(&concept.definition, own_links, map)?;
        gib_defs.insert(id.clone(), gib_def);
        Ok(())
    };

    // Step 0: dependency-free concepts become full; their definitions only
    // change where they mention their own form.
    let free = dependency_free(domain, links);
    let mut newly_processed: Vec<ConceptId> = Vec::new();
    for id in &free {
        process_fully(&mut map, id, &links_by_owner, &mut gib_defs)?;
        status.insert(id.clone(), Status::Full);
        full_count += 1;
        layers.insert(id.clone());
        newly_processed.push(id.clone());
    }
    add_homonyms(
        lex,
        &newly_processed,
        &mut layers,
        &mut status,
        &mut map,
        &mut translate_all_forms,
    )?;

    let mut iterations = 0usize;
    while full_count < domain.members.len() {
        iterations += 1;
        if iterations > bound {
            return Err(Error::IterationBoundExceeded { bound });
        }

        // Eligibility is judged against the layer set as it stood at the
        // start of the iteration.
        let snapshot = layers.clone();
        let eligible: Vec<ConceptId> = status
            .iter()
            .filter(|(_, s)| **s != Status::Full)
            .map(|(id, _)| id.clone())
            .filter(|id| {
                links_by_owner
                    .get(id)
                    .map(Vec::as_slice)
                    .unwrap_or(&[])
                    .iter()
                    .all(|link| {
                        link.referenced
                            .iter()
                            .any(|r| r == id || snapshot.contains(r))
                    })
            })
            .collect();

        if !eligible.is_empty() {
            let mut processed = Vec::new();
            for id in eligible {
                process_fully(&mut map, &id, &links_by_owner, &mut gib_defs)?;
                status.insert(id.clone(), Status::Full);
                full_count += 1;
                layers.insert(id.clone());
                processed.push(id);
            }
            add_homonyms(
                lex,
                &processed,
                &mut layers,
                &mut status,
                &mut map,
                &mut translate_all_forms,
            )?;
        } else {
            // Stall: sample one unprocessed member and give it a
            // representation only.
            let unprocessed: Vec<&ConceptId> = status
                .iter()
                .filter(|(_, s)| **s == Status::Unprocessed)
                .map(|(id, _)| id)
                .collect();
            debug_assert!(!unprocessed.is_empty(), "stall with no unprocessed member");
            let pick = unprocessed[stall_rng.random_range(0..unprocessed.len())].clone();
            stall_samples += 1;
            translate_all_forms(&mut map, &pick)?;
            status.insert(pick.clone(), Status::Partial);
            layers.insert(pick);
        }
    }

    let mut entries = BTreeMap::new();
    for id in &domain.members {
        let concept = lex
            .get(id)
            .ok_or_else(|| Error::UnknownConcept(id.to_string()))?;
        let forms_gib = concept
            .written_forms
            .iter()
            .map(|f| {
                map.get(f)
                    .map(str::to_owned)
                    .ok_or_else(|| Error::UnresolvedDependency { form: fold(f) })
            })
            .collect::<Result<Vec<_>>>()?;
        entries.insert(
            id.clone(),
            CorpusEntry {
                id: id.clone(),
                pos: concept.pos,
                forms_en: concept.written_forms.clone(),
                definition_en: concept.definition.clone(),
                forms_gib,
                definition_gib: gib_defs
                    .remove(id)
                    .ok_or_else(|| Error::UnknownConcept(id.to_string()))?,
            },
        );
    }

    let corpus = ParallelCorpus {
        seed,
        domain_digest: sha256_hex(domain.to_manifest_json().as_bytes()),
        entries,
        form_map: map,
    };
    let stats = PropagateStats {
        iterations,
        stall_samples,
        bound,
    };
    Ok((corpus, stats))
}

fn add_homonyms(
    lex: &Lexicon,
    processed: &[ConceptId],
    layers: &mut BTreeSet<ConceptId>,
    status: &mut BTreeMap<ConceptId, Status>,
    map: &mut FormMap,
    translate_all_forms: &mut impl FnMut(&mut FormMap, &ConceptId) -> Result<()>,
) -> Result<()> {
    for id in processed {
        for homonym in lex.homonyms(id)? {
            if layers.contains(&homonym) {
                continue;
            }
            translate_all_forms(map, &homonym)?;
            layers.insert(homonym.clone());
            if let Some(s) = status.get_mut(&homonym) {
                if *s == Status::Unprocessed {
                    *s = Status::Partial;
                }
            }
        }
    }
    Ok(())
}
