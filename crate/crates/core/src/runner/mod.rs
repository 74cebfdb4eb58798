//! Instance execution: pluggable answer backends, bounded concurrency,
//! budget control and answer parsing.

mod backends;

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::{Relation, TaskInstance};

pub use backends::{
    Backend, BackendReply, EnglishOnlyOracle, FixedAnswer, GoldOracle, RemoteChat,
    RemoteChatConfig, ReplayCache,
};

/// One extracted relation triple, as strings straight from the answer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PredictedTriple {
    pub subject: String,
    pub relation: Relation,
    pub object: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TdAnswer {
    True,
    False,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum ParsedAnswer {
    RelationExtraction {
        triples: BTreeSet<PredictedTriple>,
        parse_warning: bool,
    },
    TaxonomyDiscovery {
        answer: TdAnswer,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionStatus {
    Ok,
    Failed,
    Skipped,
}

/// One backend answer with its parse and accounting. Latency is runtime
/// diagnostics only and stays out of the serialized record, which keeps
/// replayed prediction files byte-comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub backend_id: String,
    pub raw: String,
    pub parsed: Option<ParsedAnswer>,
    pub status: PredictionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub cost: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(skip)]
    pub latency_ms: u64,
}

/// Extract relation triples from a raw answer. A well-formed JSON list of
/// `{"subject", "relation", "object"}` objects is preferred (also when
/// embedded in surrounding prose); otherwise `(A, is a subclass of, B)`
/// lines are collected. Unparseable input yields the empty set with the
/// warning flag raised; this never fails.
pub fn parse_re_response(raw: &str) -> (BTreeSet<PredictedTriple>, bool) {
    let trimmed = raw.trim();
    if let Some(triples) = parse_json_triples(trimmed) {
        return (triples, false);
    }
    // the answer may embed the JSON list in prose
    if let (Some(start), Some(end)) = (trimmed.find('['), trimmed.rfind(']')) {
        if start < end {
            if let Some(triples) = parse_json_triples(&trimmed[start..=end]) {
                return (triples, false);
            }
        }
    }
    let fallback = parse_triple_lines(trimmed);
    if fallback.is_empty() {
        (BTreeSet::new(), true)
    } else {
        (fallback, false)
    }
}

fn relation_from_text(text: &str) -> Option<Relation> {
    let folded = text.to_lowercase();
    if folded.contains("subclass") {
        Some(Relation::SubclassOf)
    } else if folded.contains("part") {
        Some(Relation::PartOf)
    } else {
        None
    }
}

fn parse_json_triples(text: &str) -> Option<BTreeSet<PredictedTriple>> {
    let value: serde_json::Value = serde_json::from_str(text).ok()?;
    let array = value.as_array()?;
    let mut out = BTreeSet::new();
    for item in array {
        let (Some(subject), Some(relation), Some(object)) = (
            item.get("subject").and_then(|v| v.as_str()),
            item.get("relation").and_then(|v| v.as_str()),
            item.get("object").and_then(|v| v.as_str()),
        ) else {
            continue;
        };
        let Some(relation) = relation_from_text(relation) else {
            continue;
        };
        out.insert(PredictedTriple {
            subject: subject.trim().to_owned(),
            relation,
            object: object.trim().to_owned(),
        });
    }
    Some(out)
}

fn parse_triple_lines(text: &str) -> BTreeSet<PredictedTriple> {
    let re = regex::Regex::new(
        r"(?i)\(\s*([^,()]+?)\s*,\s*(?:is\s+a\s+)?(subclass|part)\s+of\s*,\s*([^,()]+?)\s*\)",
    )
    .expect("valid pattern");
    let mut out = BTreeSet::new();
    for captures in re.captures_iter(text) {
        let relation = match &captures[2].to_lowercase()[..] {
            "subclass" => Relation::SubclassOf,
            _ => Relation::PartOf,
        };
        out.insert(PredictedTriple {
            subject: captures[1].trim().to_owned(),
            relation,
            object: captures[3].trim().to_owned(),
        });
    }
    out
}

/// The first standalone `true`/`false` token, case-insensitive; anything
/// else is Invalid.
pub fn parse_td_response(raw: &str) -> TdAnswer {
    for token in raw.split(|c: char| !c.is_alphanumeric()) {
        if token.eq_ignore_ascii_case("true") {
            return TdAnswer::True;
        }
        if token.eq_ignore_ascii_case("false") {
            return TdAnswer::False;
        }
    }
    TdAnswer::Invalid
}

fn parse_for(instance: &TaskInstance, raw: &str) -> ParsedAnswer {
    match instance.kind {
        crate::tasks::TaskKind::RelationExtraction => {
            let (triples, parse_warning) = parse_re_response(raw);
            ParsedAnswer::RelationExtraction {
                triples,
                parse_warning,
            }
        }
        crate::tasks::TaskKind::TaxonomyDiscovery => ParsedAnswer::TaxonomyDiscovery {
            answer: parse_td_response(raw),
        },
    }
}

/// Execute every instance against the backend with at most `max_in_flight`
/// outstanding calls. Once accumulated cost reaches the budget, remaining
/// instances are marked skipped instead of issued. Results come back sorted
/// by instance id regardless of completion order.
pub async fn run(
    instances: &[TaskInstance],
    backend: &dyn Backend,
    max_in_flight: usize,
    budget: Option<f64>,
) -> Result<Vec<Prediction>> {
    if instances.is_empty() {
        return Err(Error::NoInstances);
    }
    if max_in_flight == 0 {
        return Err(Error::InvalidConcurrency);
    }
    let spent = Arc::new(Mutex::new(0.0_f64));

    let mut predictions: Vec<Prediction> = stream::iter(instances.iter())
        .map(|instance| {
            let spent = Arc::clone(&spent);
            async move {
                let over_budget = match budget {
                    Some(ceiling) => *spent.lock().expect("cost lock") >= ceiling,
                    None => false,
                };
                if over_budget {
                    return Prediction {
                        instance_id: instance.id.clone(),
                        backend_id: backend.id().to_owned(),
                        raw: String::new(),
                        parsed: None,
                        status: PredictionStatus::Skipped,
                        error: None,
                        cost: 0.0,
                        prompt_tokens: 0,
                        completion_tokens: 0,
                        latency_ms: 0,
                    };
                }
                let started = Instant::now();
                match backend.answer(instance).await {
                    Ok(reply) => {
                        *spent.lock().expect("cost lock") += reply.cost;
                        Prediction {
                            instance_id: instance.id.clone(),
                            backend_id: reply.backend_id,
                            raw: reply.raw.clone(),
                            parsed: Some(parse_for(instance, &reply.raw)),
                            status: PredictionStatus::Ok,
                            error: None,
                            cost: reply.cost,
                            prompt_tokens: reply.prompt_tokens,
                            completion_tokens: reply.completion_tokens,
                            latency_ms: started.elapsed().as_millis() as u64,
                        }
                    }
                    Err(err) => Prediction {
                        instance_id: instance.id.clone(),
                        backend_id: backend.id().to_owned(),
                        raw: String::new(),
                        parsed: None,
                        status: PredictionStatus::Failed,
                        error: Some(err.to_string()),
                        cost: 0.0,
                        prompt_tokens: 0,
                        completion_tokens: 0,
                        latency_ms: started.elapsed().as_millis() as u64,
                    },
                }
            }
        })
        .buffer_unordered(max_in_flight)
        .collect()
        .await;

    predictions.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok(predictions)
}

pub fn write_predictions(mut w: impl std::io::Write, predictions: &[Prediction]) -> Result<()> {
    for prediction in predictions {
        serde_json::to_writer(&mut w, prediction)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_predictions(reader: impl std::io::BufRead) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let prediction: Prediction = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(prediction);
    }
    Ok(out)
}
