//! Evaluation instance builders: relation extraction queries, taxonomy
//! discovery pairs with corrupted negatives, and the fine-tuning split with
//! its instruction prompt.
//!
//! English and gibberish instances are built from the same id-level
//! skeleton, so they come in aligned pairs sharing an alignment key and
//! identical gold labels.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{ConceptId, Lexicon, PartOfSpeech};
use crate::linker::DefinitionLink;
use crate::miner::Domain;
use crate::propagator::ParallelCorpus;
use crate::sub_seed;

pub const DEFAULT_RE_TEMPLATE: &str = include_str!("../templates/relation_extraction.txt");
pub const DEFAULT_TD_TEMPLATE: &str = include_str!("../templates/taxonomy_discovery.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    RelationExtraction,
    TaxonomyDiscovery,
}

impl TaskKind {
    pub fn short(self) -> &'static str {
        match self {
            TaskKind::RelationExtraction => "re",
            TaskKind::TaxonomyDiscovery => "td",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    En,
    Gib,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::En => "en",
            Variant::Gib => "gib",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    SubclassOf,
    PartOf,
}

impl Relation {
    /// The wording models are asked to produce.
    pub fn phrase(self) -> &'static str {
        match self {
            Relation::SubclassOf => "is a subclass of",
            Relation::PartOf => "is a part of",
        }
    }
}

/// One gold relation, carrying both concept ids and the terms as rendered in
/// the instance's variant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GoldTriple {
    pub subject_id: ConceptId,
    pub subject: String,
    pub relation: Relation,
    pub object_id: ConceptId,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    Relations(Vec<GoldTriple>),
    Label(bool),
}

impl Gold {
    pub fn label(&self) -> Option<bool> {
        match self {
            Gold::Label(b) => Some(*b),
            Gold::Relations(_) => None,
        }
    }

    pub fn triples(&self) -> &[GoldTriple] {
        match self {
            Gold::Relations(t) => t,
            Gold::Label(_) => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Concept {
        concept_id: ConceptId,
        form: String,
        pos: PartOfSpeech,
        definition: String,
    },
    Pair {
        a_id: ConceptId,
        a_form: String,
        a_pos: PartOfSpeech,
        a_definition: String,
        b_id: ConceptId,
        b_form: String,
        b_pos: PartOfSpeech,
        b_definition: String,
    },
}

/// One evaluation query with its rendered prompt and gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub kind: TaskKind,
    pub variant: Variant,
    pub alignment_key: String,
    pub payload: Payload,
    pub gold: Gold,
    pub prompt: String,
}

/// One fine-tuning record before prompt rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetunePair {
    pub a_id: ConceptId,
    pub b_id: ConceptId,
    pub term_a: String,
    pub pos_a: PartOfSpeech,
    pub definition_a: String,
    pub term_b: String,
    pub pos_b: PartOfSpeech,
    pub definition_b: String,
    pub label: bool,
    pub split: Split,
    pub variant: Variant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl FinetunePair {
    pub fn label_str(&self) -> &'static str {
        if self.label {
            "True"
        } else {
            "False"
        }
    }
}

/// Prompt headers (format instructions plus exemplars), overridable per
/// task. The defaults ship with the crate and use an out-of-domain example.
#[derive(Debug, Clone)]
pub struct TaskTemplates {
    pub relation_extraction: String,
    pub taxonomy_discovery: String,
}

impl Default for TaskTemplates {
    fn default() -> Self {
        TaskTemplates {
            relation_extraction: DEFAULT_RE_TEMPLATE.to_owned(),
            taxonomy_discovery: DEFAULT_TD_TEMPLATE.to_owned(),
        }
    }
}

/// Builder over the finished pipeline artifacts.
pub struct TaskBuilder<'a> {
    domain: &'a Domain,
    corpus: &'a ParallelCorpus,
    templates: TaskTemplates,
    mentioned: BTreeMap<ConceptId, BTreeSet<ConceptId>>,
    ancestors: BTreeMap<ConceptId, BTreeSet<ConceptId>>,
    part_whole: BTreeSet<(ConceptId, ConceptId)>,
}

impl<'a> TaskBuilder<'a> {
    pub fn new(
        lex: &'a Lexicon,
        domain: &'a Domain,
        links: &'a [DefinitionLink],
        corpus: &'a ParallelCorpus,
        templates: TaskTemplates,
    ) -> Self {
        let mut mentioned: BTreeMap<ConceptId, BTreeSet<ConceptId>> = domain
            .members
            .iter()
            .map(|id| (id.clone(), BTreeSet::from([id.clone()])))
            .collect();
        for link in links {
            if let Some(set) = mentioned.get_mut(&link.concept_id) {
                set.extend(link.referenced.iter().cloned());
            }
        }
        let mut ancestors: BTreeMap<ConceptId, BTreeSet<ConceptId>> = BTreeMap::new();
        for (hypo, hyper) in &domain.hypernym_pairs {
            ancestors
                .entry(hypo.clone())
                .or_default()
                .insert(hyper.clone());
        }
        let part_whole = lex.part_whole_pairs(&domain.members);
        TaskBuilder {
            domain,
            corpus,
            templates,
            mentioned,
            ancestors,
            part_whole,
        }
    }

    fn entry(&self, id: &ConceptId) -> Result<&crate::propagator::CorpusEntry> {
        self.corpus
            .get(id)
            .ok_or_else(|| Error::UnknownConcept(id.to_string()))
    }

    fn term(&self, id: &ConceptId, variant: Variant) -> Result<String> {
        let entry = self.entry(id)?;
        Ok(match variant {
            Variant::En => entry.canonical_en().to_owned(),
            Variant::Gib => entry.canonical_gib().to_owned(),
        })
    }

    fn definition(&self, id: &ConceptId, variant: Variant) -> Result<String> {
        let entry = self.entry(id)?;
        Ok(match variant {
            Variant::En => entry.definition_en.clone(),
            Variant::Gib => entry.definition_gib.clone(),
        })
    }

    /// One instance per member concept. Gold holds every induced hypernym
    /// pair whose hyponym is the query concept or a concept its definition
    /// mentions, plus the direct part-whole pairs under the same filter.
    pub fn build_relation_extraction(&self, variant: Variant) -> Result<Vec<TaskInstance>> {
        let mut out = Vec::new();
        for (idx, id) in self.domain.members.iter().enumerate() {
            let entry = self.entry(id)?;
            let in_scope = &self.mentioned[id];
            let mut triples = Vec::new();
            for (hypo, hyper) in &self.domain.hypernym_pairs {
                if in_scope.contains(hypo) {
                    triples.push(GoldTriple {
                        subject_id: hypo.clone(),
                        subject: self.term(hypo, variant)?,
                        relation: Relation::SubclassOf,
                        object_id: hyper.clone(),
                        object: self.term(hyper, variant)?,
                    });
                }
            }
            for (part, whole) in &self.part_whole {
                if in_scope.contains(part) {
                    triples.push(GoldTriple {
                        subject_id: part.clone(),
                        subject: self.term(part, variant)?,
                        relation: Relation::PartOf,
                        object_id: whole.clone(),
                        object: self.term(whole, variant)?,
                    });
                }
            }
            triples.sort();
            let form = self.term(id, variant)?;
            let definition = self.definition(id, variant)?;
            let prompt = format!(
                "{}\n\nConcept: {}\nPart-of-speech: {}\nDefinition: {}",
                self.templates.relation_extraction.trim_end(),
                form,
                entry.pos.full_name(),
                definition,
            );
            out.push(TaskInstance {
                id: format!("re-{variant}-{idx:05}"),
                kind: TaskKind::RelationExtraction,
                variant,
                alignment_key: format!("re-{id}"),
                payload: Payload::Concept {
                    concept_id: id.clone(),
                    form,
                    pos: entry.pos,
                    definition,
                },
                gold: Gold::Relations(triples),
                prompt,
            });
        }
        Ok(out)
    }

    /// Positives are every induced hypernym pair; each positive gets one or
    /// two (seeded) negatives whose hypernym is replaced by a member that is
    /// neither the hyponym nor one of its ancestors. The id-level skeleton
    /// does not depend on the variant, so en/gib instance sets align one to
    /// one.
    pub fn build_taxonomy_discovery(&self, variant: Variant, seed: u64) -> Result<Vec<TaskInstance>> {
        let skeleton = self.taxonomy_skeleton(seed)?;
        let mut out = Vec::new();
        for (idx, (a, b, label, key)) in skeleton.into_iter().enumerate() {
            let a_entry = self.entry(&a)?;
            let b_entry = self.entry(&b)?;
            let a_form = self.term(&a, variant)?;
            let b_form = self.term(&b, variant)?;
            let a_definition = self.definition(&a, variant)?;
            let b_definition = self.definition(&b, variant)?;
            let prompt = format!(
                "{}\n\nConcept A: {}\nDefinition: {}\n\nConcept B: {}\nDefinition: {}",
                self.templates.taxonomy_discovery.trim_end(),
                a_form,
                a_definition,
                b_form,
                b_definition,
            );
            out.push(TaskInstance {
                id: format!("td-{variant}-{idx:05}"),
                kind: TaskKind::TaxonomyDiscovery,
                variant,
                alignment_key: key,
                payload: Payload::Pair {
                    a_id: a,
                    a_form,
                    a_pos: a_entry.pos,
                    a_definition,
                    b_id: b,
                    b_form,
                    b_pos: b_entry.pos,
                    b_definition,
                },
                gold: Gold::Label(label),
                prompt,
            });
        }
        Ok(out)
    }

    /// Items are (hyponym, target, label, alignment key). The same corrupted
    /// pair may be drawn more than once, so negative keys carry an
    /// occurrence counter.
    fn taxonomy_skeleton(&self, seed: u64) -> Result<Vec<(ConceptId, ConceptId, bool, String)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "negatives"));
        let mut occurrence: BTreeMap<(ConceptId, ConceptId), usize> = BTreeMap::new();
        let mut items = Vec::new();
        for (hypo, hyper) in &self.domain.hypernym_pairs {
            items.push((
                hypo.clone(),
                hyper.clone(),
                true,
                format!("td-{hypo}-{hyper}"),
            ));
            let negatives = rng.random_range(1..=2usize);
            for _ in 0..negatives {
                let corrupted = self.sample_corruption(hypo, hyper, &mut rng)?;
                let occ = occurrence
                    .entry((hypo.clone(), corrupted.clone()))
                    .or_insert(0);
                let key = format!("td-{hypo}-{corrupted}-n{occ}");
                *occ += 1;
                items.push((hypo.clone(), corrupted, false, key));
            }
        }
        Ok(items)
    }

    fn sample_corruption(
        &self,
        hypo: &ConceptId,
        hyper: &ConceptId,
        rng: &mut ChaCha8Rng,
    ) -> Result<ConceptId> {
        let empty = BTreeSet::new();
        let up = self.ancestors.get(hypo).unwrap_or(&empty);
        let candidates: Vec<&ConceptId> = self
            .domain
            .members
            .iter()
            .filter(|m| *m != hypo && !up.contains(*m))
            .collect();
        if candidates.is_empty() {
            return Err(Error::CorruptionSampling {
                hyponym: hypo.to_string(),
                hypernym: hyper.to_string(),
            });
        }
        Ok(candidates[rng.random_range(0..candidates.len())].clone())
    }

    /// Seeded half-split of the member concepts. Train positives are closure
    /// pairs with both endpoints in the train half; the remaining closure
    /// pairs are the test positives. Negatives per split are the inverses of
    /// its positives (skipping any inverse that is itself a closure pair)
    /// topped up with corruptions until negatives reach twice the positives.
    /// Both variants are emitted for every pair.
    pub fn split_finetune(&self, seed: u64) -> Result<(Vec<FinetunePair>, Vec<FinetunePair>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "finetune-split"));
        let mut shuffled: Vec<ConceptId> = self.domain.members.iter().cloned().collect();
        shuffled.shuffle(&mut rng);
        let train_half: BTreeSet<ConceptId> =
            shuffled[..shuffled.len().div_ceil(2)].iter().cloned().collect();

        let mut train_pos = Vec::new();
        let mut test_pos = Vec::new();
        for (a, b) in &self.domain.hypernym_pairs {
            if train_half.contains(a) && train_half.contains(b) {
                train_pos.push((a.clone(), b.clone()));
            } else {
                test_pos.push((a.clone(), b.clone()));
            }
        }

        let closure = &self.domain.hypernym_pairs;
        let mut taken: BTreeSet<(ConceptId, ConceptId)> = closure.iter().cloned().collect();

        let train_neg = self.split_negatives(&train_pos, Some(&train_half), &mut rng, &mut taken);
        let test_neg = self.split_negatives(&test_pos, None, &mut rng, &mut taken);

        let train = self.render_pairs(&train_pos, &train_neg, Split::Train)?;
        let test = self.render_pairs(&test_pos, &test_neg, Split::Test)?;
        Ok((train, test))
    }

    fn split_negatives(
        &self,
        positives: &[(ConceptId, ConceptId)],
        pool: Option<&BTreeSet<ConceptId>>,
        rng: &mut ChaCha8Rng,
        taken: &mut BTreeSet<(ConceptId, ConceptId)>,
    ) -> Vec<(ConceptId, ConceptId)> {
        let target = positives.len() * 2;
        let mut negatives = Vec::new();
        for (a, b) in positives {
            if negatives.len() >= target {
                break;
            }
            let inverse = (b.clone(), a.clone());
            if !self.domain.hypernym_pairs.contains(&inverse) && taken.insert(inverse.clone()) {
                negatives.push(inverse);
            }
        }
        let empty = BTreeSet::new();
        let mut exhausted = false;
        while negatives.len() < target && !exhausted {
            exhausted = true;
            for (a, _) in positives {
                if negatives.len() >= target {
                    break;
                }
                let up = self.ancestors.get(a).unwrap_or(&empty);
                let candidates: Vec<&ConceptId> = self
                    .domain
                    .members
                    .iter()
                    .filter(|m| pool.map_or(true, |p| p.contains(*m)))
                    .filter(|m| *m != a && !up.contains(*m))
                    .filter(|m| !taken.contains(&(a.clone(), (*m).clone())))
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                exhausted = false;
                let pick = candidates[rng.random_range(0..candidates.len())].clone();
                taken.insert((a.clone(), pick.clone()));
                negatives.push((a.clone(), pick));
            }
        }
        negatives
    }

    fn render_pairs(
        &self,
        positives: &[(ConceptId, ConceptId)],
        negatives: &[(ConceptId, ConceptId)],
        split: Split,
    ) -> Result<Vec<FinetunePair>> {
        let mut out = Vec::new();
        for (pairs, label) in [(positives, true), (negatives, false)] {
            for (a, b) in pairs {
                for variant in [Variant::En, Variant::Gib] {
                    out.push(FinetunePair {
                        a_id: a.clone(),
                        b_id: b.clone(),
                        term_a: self.term(a, variant)?,
                        pos_a: self.entry(a)?.pos,
                        definition_a: self.definition(a, variant)?,
                        term_b: self.term(b, variant)?,
                        pos_b: self.entry(b)?.pos,
                        definition_b: self.definition(b, variant)?,
                        label,
                        split,
                        variant,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// The instruction-tuning prefix prompt, instantiated for one pair. The
/// returned text ends right after the assistant sentinel; training targets
/// append the label after it.
pub fn render_finetune_prompt(pair: &FinetunePair) -> String {
    format!(
        "### HUMAN:\n\
         Identify whether the statement is true or false. Answer with only one word: 'True' or 'False'.\n\
         \n\
         CONCEPT A: {} ({})\n\
         Definition: {}\n\
         \n\
         CONCEPT B: {} ({})\n\
         Definition: {}\n\
         \n\
         Statement: '{}' is a subclass of '{}'.\n\
         ### ASSISTANT:",
        pair.term_a,
        pair.pos_a.code(),
        pair.definition_a,
        pair.term_b,
        pair.pos_b.code(),
        pair.definition_b,
        pair.term_a,
        pair.term_b,
    )
}

/// Prompt plus the expected completion, for training files.
pub fn render_training_text(pair: &FinetunePair) -> String {
    format!("{} {}", render_finetune_prompt(pair), pair.label_str())
}

#[derive(Serialize, Deserialize)]
struct FinetuneHeader {
    epochs: u32,
    batch_size: u32,
    learning_rate: f64,
    lora_alpha: u32,
    lora_r: u32,
}

#[derive(Serialize, Deserialize)]
struct FinetuneRecord {
    text: String,
    label: String,
    split: Split,
    variant: Variant,
}

/// Line-delimited export: a metadata header recording the reference training
/// hyperparameters, then one record per pair. Train records carry the label
/// inside the text, test records end at the assistant sentinel.
pub fn write_finetune_export(
    mut w: impl Write,
    train: &[FinetunePair],
    test: &[FinetunePair],
) -> Result<()> {
    let header = FinetuneHeader {
        epochs: 20,
        batch_size: 4,
        learning_rate: 3e-6,
        lora_alpha: 256,
        lora_r: 1024,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for pair in train.iter().chain(test) {
        let text = match pair.split {
            Split::Train => render_training_text(pair),
            Split::Test => render_finetune_prompt(pair),
        };
        let record = FinetuneRecord {
            text,
            label: pair.label_str().to_owned(),
            split: pair.split,
            variant: pair.variant,
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_instances(mut w: impl Write, instances: &[TaskInstance]) -> Result<()> {
    for instance in instances {
        serde_json::to_writer(&mut w, instance)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_instances(reader: impl BufRead) -> Result<Vec<TaskInstance>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let instance: TaskInstance = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(instance);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{load_lexicon, RelationKind};
    use crate::linker::link_definitions;
    use crate::miner::mine_domain;
    use crate::propagator::propagate;
    use std::io::Cursor;

    struct Fixture {
        lex: Lexicon,
        domain: Domain,
        links: Vec<DefinitionLink>,
        corpus: ParallelCorpus,
    }

    impl Fixture {
        fn builder(&self) -> TaskBuilder<'_> {
            TaskBuilder::new(
                &self.lex,
                &self.domain,
                &self.links,
                &self.corpus,
                TaskTemplates::default(),
            )
        }
    }

    fn fixture() -> Fixture {
        let records = [
            r#"{"id":"sweet","pos":"n","forms":["sweet"],"definition":"a food rich in sugar","relations":[]}"#,
            r#"{"id":"sugar","pos":"n","forms":["sugar"],"definition":"a crystalline carbohydrate","relations":[]}"#,
            r#"{"id":"confection","pos":"n","forms":["confection"],"definition":"a food made with sugar","relations":[{"kind":"hypernym","target":"sweet"}]}"#,
            r#"{"id":"macaron","pos":"n","forms":["macaron"],"definition":"a confection made with egg white","relations":[{"kind":"hypernym","target":"confection"}]}"#,
            r#"{"id":"egg-white","pos":"n","forms":["egg white"],"definition":"the clear part of an egg","relations":[{"kind":"holonym","target":"macaron"},{"kind":"topic","target":"confection"}]}"#,
            r#"{"id":"lonely","pos":"n","forms":["lonely"],"definition":"unrelated to anything here","relations":[{"kind":"hypernym","target":"sweet"}]}"#,
        ];
        let lex = load_lexicon(Cursor::new(records.join("\n"))).unwrap();
        let domain = mine_domain(
            &lex,
            &[ConceptId::from("sweet"), ConceptId::from("sugar")],
            &[RelationKind::Hyponym, RelationKind::Topic].into(),
            4,
        )
        .unwrap();
        let links = link_definitions(&lex, &domain).unwrap();
        let corpus = propagate(&lex, &domain, &links, 17).unwrap();
        Fixture {
            lex,
            domain,
            links,
            corpus,
        }
    }

    #[test]
    fn macaron_gold_includes_its_hypernyms_and_parts() {
        let fx = fixture();
        let builder = fx.builder();
        let instances = builder.build_relation_extraction(Variant::En).unwrap();
        let macaron = instances
            .iter()
            .find(|i| i.alignment_key == "re-macaron")
            .unwrap();
        let triples = macaron.gold.triples();
        assert!(triples.iter().any(|t| {
            t.subject == "macaron" && t.relation == Relation::SubclassOf && t.object == "confection"
        }));
        // transitive credit through confection
        assert!(triples.iter().any(|t| {
            t.subject == "macaron" && t.relation == Relation::SubclassOf && t.object == "sweet"
        }));
        // the mentioned egg white is a part of macaron
        assert!(triples.iter().any(|t| {
            t.subject == "egg white" && t.relation == Relation::PartOf && t.object == "macaron"
        }));
        // sugar is not mentioned by macaron and is no hyponym: absent
        assert!(!triples.iter().any(|t| t.subject == "sugar"));
    }

    #[test]
    fn concept_without_relations_has_empty_gold() {
        let fx = fixture();
        let instances = fx.builder().build_relation_extraction(Variant::En).unwrap();
        let sugar = instances
            .iter()
            .find(|i| i.alignment_key == "re-sugar")
            .unwrap();
        assert!(sugar.gold.triples().is_empty());
    }

    #[test]
    fn gib_gold_is_the_en_gold_mapped_through_the_forms() {
        let fx = fixture();
        let builder = fx.builder();
        let en = builder.build_relation_extraction(Variant::En).unwrap();
        let gib = builder.build_relation_extraction(Variant::Gib).unwrap();
        assert_eq!(en.len(), gib.len());
        for (e, g) in en.iter().zip(&gib) {
            assert_eq!(e.alignment_key, g.alignment_key);
            let et = e.gold.triples();
            let gt = g.gold.triples();
            assert_eq!(et.len(), gt.len());
            for (a, b) in et.iter().zip(gt) {
                assert_eq!(a.subject_id, b.subject_id);
                assert_eq!(a.relation, b.relation);
                assert_eq!(fx.corpus.form_map.get(&a.subject).unwrap(), b.subject);
                assert_eq!(fx.corpus.form_map.get(&a.object).unwrap(), b.object);
            }
        }
    }

    #[test]
    fn re_prompt_renders_the_template_and_payload() {
        let fx = fixture();
        let instances = fx.builder().build_relation_extraction(Variant::En).unwrap();
        let macaron = instances
            .iter()
            .find(|i| i.alignment_key == "re-macaron")
            .unwrap();
        assert!(macaron.prompt.contains("Concept: macaron"));
        assert!(macaron.prompt.contains("Part-of-speech: noun"));
        assert!(macaron
            .prompt
            .contains("Definition: a confection made with egg white"));
        assert!(macaron.prompt.starts_with("You are given a concept"));
    }

    #[test]
    fn taxonomy_positives_cover_the_closure() {
        let fx = fixture();
        let instances = fx
            .builder()
            .build_taxonomy_discovery(Variant::En, 5)
            .unwrap();
        let positives: BTreeSet<(ConceptId, ConceptId)> = instances
            .iter()
            .filter(|i| i.gold.label() == Some(true))
            .map(|i| match &i.payload {
                Payload::Pair { a_id, b_id, .. } => (a_id.clone(), b_id.clone()),
                _ => panic!("td payload"),
            })
            .collect();
        assert_eq!(positives, fx.domain.hypernym_pairs);
    }

    #[test]
    fn negatives_are_never_closure_pairs() {
        let fx = fixture();
        for seed in 0..20 {
            let instances = fx
                .builder()
                .build_taxonomy_discovery(Variant::En, seed)
                .unwrap();
            for inst in instances.iter().filter(|i| i.gold.label() == Some(false)) {
                let Payload::Pair { a_id, b_id, .. } = &inst.payload else {
                    panic!("td payload")
                };
                assert!(!fx.domain.hypernym_pairs.contains(&(a_id.clone(), b_id.clone())));
                assert_ne!(a_id, b_id);
            }
        }
    }

    #[test]
    fn taxonomy_variants_align_with_identical_labels() {
        let fx = fixture();
        let builder = fx.builder();
        let en = builder.build_taxonomy_discovery(Variant::En, 9).unwrap();
        let gib = builder.build_taxonomy_discovery(Variant::Gib, 9).unwrap();
        assert_eq!(en.len(), gib.len());
        for (e, g) in en.iter().zip(&gib) {
            assert_eq!(e.alignment_key, g.alignment_key);
            assert_eq!(e.gold.label(), g.gold.label());
            let (Payload::Pair { a_form: ea, .. }, Payload::Pair { a_form: ga, .. }) =
                (&e.payload, &g.payload)
            else {
                panic!("td payload")
            };
            assert_eq!(fx.corpus.form_map.get(ea).unwrap(), ga);
        }
    }

    #[test]
    fn three_chain_closure_positives() {
        // d hangs off the chain via a topic edge so corruption sampling has a
        // target that is nobody's ancestor
        let records = [
            r#"{"id":"a","pos":"n","forms":["aaa"],"definition":"the bottom","relations":[{"kind":"hypernym","target":"b"}]}"#,
            r#"{"id":"b","pos":"n","forms":["bbb"],"definition":"the middle","relations":[{"kind":"hypernym","target":"c"}]}"#,
            r#"{"id":"c","pos":"n","forms":["ccc"],"definition":"the top","relations":[]}"#,
            r#"{"id":"d","pos":"n","forms":["ddd"],"definition":"off to the side","relations":[{"kind":"topic","target":"c"}]}"#,
        ];
        let lex = load_lexicon(Cursor::new(records.join("\n"))).unwrap();
        let domain = mine_domain(
            &lex,
            &[ConceptId::from("c")],
            &[RelationKind::Hyponym, RelationKind::Topic].into(),
            2,
        )
        .unwrap();
        let links = link_definitions(&lex, &domain).unwrap();
        let corpus = propagate(&lex, &domain, &links, 3).unwrap();
        let builder = TaskBuilder::new(&lex, &domain, &links, &corpus, TaskTemplates::default());
        let instances = builder.build_taxonomy_discovery(Variant::En, 1).unwrap();
        let positives: BTreeSet<(ConceptId, ConceptId)> = instances
            .iter()
            .filter(|i| i.gold.label() == Some(true))
            .map(|i| match &i.payload {
                Payload::Pair { a_id, b_id, .. } => (a_id.clone(), b_id.clone()),
                _ => panic!("td payload"),
            })
            .collect();
        let expect: BTreeSet<(ConceptId, ConceptId)> = [("a", "b"), ("a", "c"), ("b", "c")]
            .iter()
            .map(|(x, y)| (ConceptId::from(*x), ConceptId::from(*y)))
            .collect();
        assert_eq!(positives, expect);
    }

    #[test]
    fn too_small_domain_fails_corruption_sampling() {
        let records = [
            r#"{"id":"a","pos":"n","forms":["aaa"],"definition":"the bottom","relations":[{"kind":"hypernym","target":"b"}]}"#,
            r#"{"id":"b","pos":"n","forms":["bbb"],"definition":"the top","relations":[]}"#,
        ];
        let lex = load_lexicon(Cursor::new(records.join("\n"))).unwrap();
        let domain = mine_domain(
            &lex,
            &[ConceptId::from("b")],
            &[RelationKind::Hyponym].into(),
            1,
        )
        .unwrap();
        let links = link_definitions(&lex, &domain).unwrap();
        let corpus = propagate(&lex, &domain, &links, 3).unwrap();
        let builder = TaskBuilder::new(&lex, &domain, &links, &corpus, TaskTemplates::default());
        let err = builder.build_taxonomy_discovery(Variant::En, 1).unwrap_err();
        assert!(matches!(err, Error::CorruptionSampling { hyponym, .. } if hyponym == "a"));
    }

    #[test]
    fn finetune_split_is_disjoint_and_reproducible() {
        let fx = fixture();
        let builder = fx.builder();
        let (train_a, test_a) = builder.split_finetune(33).unwrap();
        let (train_b, test_b) = builder.split_finetune(33).unwrap();
        assert_eq!(train_a, train_b);
        assert_eq!(test_a, test_b);

        let pair_key = |p: &FinetunePair| (p.a_id.clone(), p.b_id.clone(), p.variant);
        let train_keys: BTreeSet<_> = train_a.iter().map(pair_key).collect();
        let test_keys: BTreeSet<_> = test_a.iter().map(pair_key).collect();
        assert!(train_keys.is_disjoint(&test_keys));
    }

    #[test]
    fn finetune_negative_ratio_targets_two_to_one() {
        let fx = fixture();
        let (train, test) = fx.builder().split_finetune(2).unwrap();
        for split in [&train, &test] {
            let pos = split.iter().filter(|p| p.label).count();
            let neg = split.iter().filter(|p| !p.label).count();
            if pos > 0 {
                assert_eq!(neg, 2 * pos, "negatives should hit the 2x target exactly");
            }
        }
    }

    #[test]
    fn empty_domain_gives_empty_splits() {
        let records =
            [r#"{"id":"solo","pos":"n","forms":["solo"],"definition":"all alone","relations":[]}"#];
        let lex = load_lexicon(Cursor::new(records.join("\n"))).unwrap();
        let domain = mine_domain(
            &lex,
            &[ConceptId::from("solo")],
            &[RelationKind::Hyponym].into(),
            1,
        )
        .unwrap();
        let links = link_definitions(&lex, &domain).unwrap();
        let corpus = propagate(&lex, &domain, &links, 1).unwrap();
        let builder = TaskBuilder::new(&lex, &domain, &links, &corpus, TaskTemplates::default());
        let (train, test) = builder.split_finetune(1).unwrap();
        assert!(train.is_empty());
        assert!(test.is_empty());
    }

    fn sample_pair() -> FinetunePair {
        FinetunePair {
            a_id: ConceptId::from("macaron"),
            b_id: ConceptId::from("confection"),
            term_a: "macaron".into(),
            pos_a: PartOfSpeech::Noun,
            definition_a: "a confection made with egg white".into(),
            term_b: "confection".into(),
            pos_b: PartOfSpeech::Noun,
            definition_b: "a food made with sugar".into(),
            label: true,
            split: Split::Train,
            variant: Variant::En,
        }
    }

    #[test]
    fn finetune_prompt_has_one_sentinel_pair() {
        let text = render_finetune_prompt(&sample_pair());
        assert_eq!(text.matches("### HUMAN:").count(), 1);
        assert_eq!(text.matches("### ASSISTANT:").count(), 1);
        assert!(text.ends_with("### ASSISTANT:"));
    }

    #[test]
    fn finetune_prompt_statement_line_is_exact() {
        let text = render_finetune_prompt(&sample_pair());
        assert!(text.contains("Statement: 'macaron' is a subclass of 'confection'.\n"));
        assert!(text.contains("CONCEPT A: macaron (n)\n"));
        assert!(text.contains("CONCEPT B: confection (n)\n"));
        let trained = render_training_text(&sample_pair());
        assert!(trained.ends_with("### ASSISTANT: True"));
    }

    #[test]
    fn gib_finetune_prompt_has_identical_layout() {
        let fx = fixture();
        let (train, _) = fx.builder().split_finetune(8).unwrap();
        let en = train.iter().find(|p| p.variant == Variant::En);
        let gib = train.iter().find(|p| p.variant == Variant::Gib);
        let (Some(en), Some(gib)) = (en, gib) else {
            return; // split landed without train pairs for this fixture seed
        };
        let en_text = render_finetune_prompt(en);
        let mut mapped = en_text.clone();
        for (form, gibberish) in fx.corpus.form_map.entries() {
            mapped = mapped.replace(form, gibberish);
        }
        let gib_text = render_finetune_prompt(gib);
        assert_eq!(en_text.lines().count(), gib_text.lines().count());
        let _ = mapped;
    }

    #[test]
    fn instances_file_round_trips() {
        let fx = fixture();
        let builder = fx.builder();
        let mut all = builder.build_relation_extraction(Variant::En).unwrap();
        all.extend(builder.build_taxonomy_discovery(Variant::En, 4).unwrap());
        let mut buf = Vec::new();
        write_instances(&mut buf, &all).unwrap();
        let back = read_instances(Cursor::new(buf)).unwrap();
        assert_eq!(all, back);
    }

    #[test]
    fn finetune_export_has_header_and_label_suffix() {
        let fx = fixture();
        let (train, test) = fx.builder().split_finetune(6).unwrap();
        let mut buf = Vec::new();
        write_finetune_export(&mut buf, &train, &test).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(header["epochs"], 20);
        assert_eq!(header["batch_size"], 4);
        assert_eq!(header["lora_alpha"], 256);
        assert_eq!(header["lora_r"], 1024);
        for line in lines {
            let record: serde_json::Value = serde_json::from_str(line).unwrap();
            let is_train = record["split"] == "train";
            let text = record["text"].as_str().unwrap();
            if is_train {
                assert!(text.ends_with(" True") || text.ends_with(" False"));
            } else {
                assert!(text.ends_with("### ASSISTANT:"));
            }
        }
    }
}
