//! Metrics: ground-truth scoring per variant and en-vs-gib alignment
//! scoring, with the transitive-credit rule for relation extraction.
//!
//! Relation extraction against ground truth works at the concept-pair level:
//! predicted terms are resolved to member concepts by case-folded form
//! lookup (ambiguous terms ground to the gold-consistent reading when one
//! exists), the resolved pair set is closed transitively, and the closed set
//! is compared with the instance gold. Unresolvable triples count as false
//! positives. Taxonomy discovery ignores answers that are neither True nor
//! False, excluding them from numerator and denominator alike.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{fold, ConceptId};
use crate::propagator::ParallelCorpus;
use crate::runner::{ParsedAnswer, PredictedTriple, Prediction, TdAnswer};
use crate::tasks::{Relation, TaskInstance, TaskKind, Variant};
use crate::translator::FormMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    GtEn,
    GtGib,
    EnVsGib,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::GtEn => "gt_en",
            Setting::GtGib => "gt_gib",
            Setting::EnVsGib => "en_vs_gib",
        }
    }
}

/// Precision/recall/F1 with their raw counts; `zero_division` records that a
/// denominator was empty and the 0-by-convention rule fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfCounts {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub zero_division: bool,
}

impl PrfCounts {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let mut zero_division = false;
        let precision = if tp + fp == 0 {
            zero_division = true;
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            zero_division = true;
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        PrfCounts {
            precision,
            recall,
            f1: f1_of(precision, recall),
            tp,
            fp,
            fn_,
            zero_division,
        }
    }

    /// Perfect agreement on an empty pair of sets.
    fn vacuous() -> Self {
        PrfCounts {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            tp: 0,
            fp: 0,
            fn_: 0,
            zero_division: false,
        }
    }
}

fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// One scored table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub setting: Setting,
    pub task: TaskKind,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Answers excluded because they were neither True nor False (or the
    /// backend did not answer).
    pub ignored: usize,
    pub zero_division: bool,
    /// Per-class breakdown for taxonomy discovery ("true"/"false").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<BTreeMap<String, PrfCounts>>,
    /// Per-concept breakdown for alignment macro-averages, keyed by
    /// alignment key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_concept: Option<BTreeMap<String, PrfCounts>>,
}

fn predictions_by_id(predictions: &[Prediction]) -> BTreeMap<&str, &Prediction> {
    predictions
        .iter()
        .map(|p| (p.instance_id.as_str(), p))
        .collect()
}

fn filtered_instances<'a>(
    instances: &'a [TaskInstance],
    kind: TaskKind,
    variant: Variant,
) -> Result<Vec<&'a TaskInstance>> {
    let filtered: Vec<&TaskInstance> = instances
        .iter()
        .filter(|i| i.kind == kind && i.variant == variant)
        .collect();
    if filtered.is_empty() {
        return Err(Error::VariantMismatch {
            expected: format!("{} {}", kind.short(), variant),
            found: "no matching instances".to_owned(),
            instance: "-".to_owned(),
        });
    }
    Ok(filtered)
}

/// Case-folded form lookup over the corpus members, in the given variant's
/// form space.
fn variant_form_index(
    corpus: &ParallelCorpus,
    variant: Variant,
) -> BTreeMap<String, BTreeSet<ConceptId>> {
    let mut index: BTreeMap<String, BTreeSet<ConceptId>> = BTreeMap::new();
    for entry in corpus.entries.values() {
        let forms = match variant {
            Variant::En => &entry.forms_en,
            Variant::Gib => &entry.forms_gib,
        };
        for form in forms {
            index.entry(fold(form)).or_default().insert(entry.id.clone());
        }
    }
    index
}

/// Transitive closure over bare id pairs, self-pairs dropped.
fn close_pairs(pairs: &BTreeSet<(ConceptId, ConceptId)>) -> BTreeSet<(ConceptId, ConceptId)> {
    let mut succ: BTreeMap<&ConceptId, BTreeSet<&ConceptId>> = BTreeMap::new();
    for (a, b) in pairs {
        succ.entry(a).or_default().insert(b);
    }
    let mut closed = BTreeSet::new();
    for start in succ.keys().copied().collect::<Vec<_>>() {
        let mut seen: BTreeSet<&ConceptId> = BTreeSet::new();
        let mut stack: Vec<&ConceptId> = succ[start].iter().copied().collect();
        while let Some(node) = stack.pop() {
            if !seen.insert(node) {
                continue;
            }
            if node != start {
                closed.insert((start.clone(), node.clone()));
            }
            if let Some(next) = succ.get(node) {
                stack.extend(next.iter().copied());
            }
        }
    }
    closed
}

fn parsed_triples(prediction: &Prediction) -> (BTreeSet<PredictedTriple>, bool) {
    match &prediction.parsed {
        Some(ParsedAnswer::RelationExtraction {
            triples,
            parse_warning,
        }) => (triples.clone(), *parse_warning),
        _ => (BTreeSet::new(), true),
    }
}

fn parsed_td(prediction: &Prediction) -> TdAnswer {
    match &prediction.parsed {
        Some(ParsedAnswer::TaxonomyDiscovery { answer }) => *answer,
        _ => TdAnswer::Invalid,
    }
}

/// GT(X)-vs-X relation extraction. Only hypernym (subclass) relations are
/// scored; metrics are micro-averaged over all instances.
pub fn score_relation_extraction(
    predictions: &[Prediction],
    instances: &[TaskInstance],
    corpus: &ParallelCorpus,
    variant: Variant,
) -> Result<MetricsReport> {
    let filtered = filtered_instances(instances, TaskKind::RelationExtraction, variant)?;
    let by_id = predictions_by_id(predictions);
    let index = variant_form_index(corpus, variant);

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for instance in filtered {
        let prediction = by_id
            .get(instance.id.as_str())
            .ok_or_else(|| Error::MissingPrediction(instance.id.clone()))?;
        let gold: BTreeSet<(ConceptId, ConceptId)> = instance
            .gold
            .triples()
            .iter()
            .filter(|t| t.relation == Relation::SubclassOf)
            .map(|t| (t.subject_id.clone(), t.object_id.clone()))
            .collect();

        let (triples, _) = parsed_triples(prediction);
        let mut resolved: BTreeSet<(ConceptId, ConceptId)> = BTreeSet::new();
        let mut unresolved = 0usize;
        for triple in triples
            .iter()
            .filter(|t| t.relation == Relation::SubclassOf)
        {
            let subjects = index.get(&fold(&triple.subject));
            let objects = index.get(&fold(&triple.object));
            let (Some(subjects), Some(objects)) = (subjects, objects) else {
                unresolved += 1;
                continue;
            };
            let mut pairs: BTreeSet<(ConceptId, ConceptId)> = BTreeSet::new();
            for s in subjects {
                for o in objects {
                    pairs.insert((s.clone(), o.clone()));
                }
            }
            // ground ambiguous terms to the gold-consistent reading
            let in_gold: BTreeSet<_> = pairs.intersection(&gold).cloned().collect();
            resolved.extend(if in_gold.is_empty() { pairs } else { in_gold });
        }
        let credited = close_pairs(&resolved);
        tp += credited.intersection(&gold).count();
        fp += credited.difference(&gold).count() + unresolved;
        fn_ += gold.difference(&credited).count();
    }

    let prf = PrfCounts::from_counts(tp, fp, fn_);
    Ok(MetricsReport {
        setting: gt_setting(variant),
        task: TaskKind::RelationExtraction,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        tp,
        fp,
        fn_,
        ignored: 0,
        zero_division: prf.zero_division,
        per_class: None,
        per_concept: None,
    })
}

fn gt_setting(variant: Variant) -> Setting {
    match variant {
        Variant::En => Setting::GtEn,
        Variant::Gib => Setting::GtGib,
    }
}

fn td_class_metrics(pairs: &[(bool, TdAnswer)]) -> (BTreeMap<String, PrfCounts>, usize) {
    let mut ignored = 0usize;
    let mut valid: Vec<(bool, bool)> = Vec::new();
    for (label, answer) in pairs {
        match answer {
            TdAnswer::True => valid.push((*label, true)),
            TdAnswer::False => valid.push((*label, false)),
            TdAnswer::Invalid => ignored += 1,
        }
    }
    let mut per_class = BTreeMap::new();
    for (name, class) in [("true", true), ("false", false)] {
        let tp = valid.iter().filter(|(l, p)| *l == class && *p == class).count();
        let fp = valid.iter().filter(|(l, p)| *l != class && *p == class).count();
        let fn_ = valid.iter().filter(|(l, p)| *l == class && *p != class).count();
        per_class.insert(name.to_owned(), PrfCounts::from_counts(tp, fp, fn_));
    }
    (per_class, ignored)
}

fn macro_report(
    setting: Setting,
    task: TaskKind,
    groups: &BTreeMap<String, PrfCounts>,
    ignored: usize,
    breakdown_is_classes: bool,
) -> MetricsReport {
    let n = groups.len().max(1) as f64;
    let precision = groups.values().map(|c| c.precision).sum::<f64>() / n;
    let recall = groups.values().map(|c| c.recall).sum::<f64>() / n;
    let f1 = groups.values().map(|c| c.f1).sum::<f64>() / n;
    let tp = groups.values().map(|c| c.tp).sum();
    let fp = groups.values().map(|c| c.fp).sum();
    let fn_ = groups.values().map(|c| c.fn_).sum();
    let zero_division = groups.values().any(|c| c.zero_division);
    MetricsReport {
        setting,
        task,
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        ignored,
        zero_division,
        per_class: breakdown_is_classes.then(|| groups.clone()),
        per_concept: (!breakdown_is_classes).then(|| groups.clone()),
    }
}

/// GT(X)-vs-X taxonomy discovery: per-class precision/recall/F1 over the
/// valid answers, macro-averaged over the True and False classes.
pub fn score_taxonomy(
    predictions: &[Prediction],
    instances: &[TaskInstance],
    variant: Variant,
) -> Result<MetricsReport> {
    let filtered = filtered_instances(instances, TaskKind::TaxonomyDiscovery, variant)?;
    let by_id = predictions_by_id(predictions);
    let mut pairs = Vec::new();
    for instance in filtered {
        let prediction = by_id
            .get(instance.id.as_str())
            .ok_or_else(|| Error::MissingPrediction(instance.id.clone()))?;
        let label = instance
            .gold
            .label()
            .ok_or_else(|| Error::CorruptArtifact(format!("{} has no label", instance.id)))?;
        pairs.push((label, parsed_td(prediction)));
    }
    let (per_class, ignored) = td_class_metrics(&pairs);
    Ok(macro_report(
        gt_setting(variant),
        TaskKind::TaxonomyDiscovery,
        &per_class,
        ignored,
        true,
    ))
}

fn normalized_triples(
    prediction: &Prediction,
    map_through: Option<&FormMap>,
) -> BTreeSet<(String, Relation, String)> {
    let (triples, _) = parsed_triples(prediction);
    triples
        .into_iter()
        .map(|t| {
            let (subject, object) = match map_through {
                Some(map) => (map.invert_term(&t.subject), map.invert_term(&t.object)),
                None => (t.subject, t.object),
            };
            (fold(&subject), t.relation, fold(&object))
        })
        .collect()
}

/// en-vs-gib consistency. Gibberish predictions are mapped back to English
/// through the form map (unmappable terms kept verbatim) and compared with
/// the same backend's English predictions: per-concept precision/recall for
/// relation extraction (both relation kinds), macro-averaged over concepts;
/// the usual per-class scheme for taxonomy discovery with the English
/// answers as labels.
pub fn score_alignment(
    pred_en: &[Prediction],
    pred_gib: &[Prediction],
    instances: &[TaskInstance],
    form_map: &FormMap,
    task: TaskKind,
) -> Result<MetricsReport> {
    let en_instances = filtered_instances(instances, task, Variant::En)?;
    let gib_instances = filtered_instances(instances, task, Variant::Gib)?;

    let mut en_by_key: BTreeMap<&str, &TaskInstance> = BTreeMap::new();
    for instance in &en_instances {
        en_by_key.insert(instance.alignment_key.as_str(), instance);
    }
    let mut gib_by_key: BTreeMap<&str, &TaskInstance> = BTreeMap::new();
    for instance in &gib_instances {
        gib_by_key.insert(instance.alignment_key.as_str(), instance);
    }
    let en_keys: BTreeSet<&str> = en_by_key.keys().copied().collect();
    let gib_keys: BTreeSet<&str> = gib_by_key.keys().copied().collect();
    if en_keys != gib_keys {
        let unmatched: Vec<String> = en_keys
            .symmetric_difference(&gib_keys)
            .map(|k| (*k).to_owned())
            .collect();
        return Err(Error::Misaligned(unmatched));
    }

    let en_preds = predictions_by_id(pred_en);
    let gib_preds = predictions_by_id(pred_gib);
    let lookup = |map: &BTreeMap<&str, &Prediction>, instance: &TaskInstance| {
        map.get(instance.id.as_str())
            .copied()
            .ok_or_else(|| Error::MissingPrediction(instance.id.clone()))
            .cloned()
    };

    match task {
        TaskKind::TaxonomyDiscovery => {
            let mut pairs = Vec::new();
            let mut ignored_en = 0usize;
            for key in &en_keys {
                let en_pred = lookup(&en_preds, en_by_key[key])?;
                let gib_pred = lookup(&gib_preds, gib_by_key[key])?;
                let label = match parsed_td(&en_pred) {
                    TdAnswer::True => true,
                    TdAnswer::False => false,
                    TdAnswer::Invalid => {
                        ignored_en += 1;
                        continue;
                    }
                };
                pairs.push((label, parsed_td(&gib_pred)));
            }
            let (per_class, ignored) = td_class_metrics(&pairs);
            Ok(macro_report(
                Setting::EnVsGib,
                TaskKind::TaxonomyDiscovery,
                &per_class,
                ignored + ignored_en,
                true,
            ))
        }
        TaskKind::RelationExtraction => {
            let mut per_concept = BTreeMap::new();
            for key in &en_keys {
                let en_pred = lookup(&en_preds, en_by_key[key])?;
                let gib_pred = lookup(&gib_preds, gib_by_key[key])?;
                let en_set = normalized_triples(&en_pred, None);
                let gib_set = normalized_triples(&gib_pred, Some(form_map));
                let prf = if en_set.is_empty() && gib_set.is_empty() {
                    PrfCounts::vacuous()
                } else {
                    let tp = gib_set.intersection(&en_set).count();
                    PrfCounts::from_counts(tp, gib_set.len() - tp, en_set.len() - tp)
                };
                per_concept.insert((*key).to_owned(), prf);
            }
            Ok(macro_report(
                Setting::EnVsGib,
                TaskKind::RelationExtraction,
                &per_concept,
                0,
                false,
            ))
        }
    }
}

/// Plain-text table mirroring the three-setting layout.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:<22} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6} {:>8}\n",
        "setting", "task", "Pre.", "Rec.", "F1", "tp", "fp", "fn", "ignored"
    ));
    for report in reports {
        out.push_str(&format!(
            "{:<12} {:<22} {:>8.3} {:>8.3} {:>8.3} {:>6} {:>6} {:>6} {:>8}\n",
            report.setting.name(),
            match report.task {
                TaskKind::RelationExtraction => "relation_extraction",
                TaskKind::TaxonomyDiscovery => "taxonomy_discovery",
            },
            report.precision,
            report.recall,
            report.f1,
            report.tp,
            report.fp,
            report.fn_,
            report.ignored,
        ));
    }
    out
}

pub fn write_reports(mut w: impl std::io::Write, reports: &[MetricsReport]) -> Result<()> {
    let json = serde_json::to_string_pretty(reports)?;
    w.write_all(json.as_bytes())?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_reports(reader: impl std::io::BufRead) -> Result<Vec<MetricsReport>> {
    serde_json::from_reader(reader).map_err(Error::from)
}
