//! Pipeline configuration: a sectioned TOML file, every value overridable by
//! a command-line flag. Secrets (the endpoint key) come from the environment
//! only.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use gibberlex::lexicon::{ConceptId, RelationKind};
use gibberlex::miner::MineOptions;
use gibberlex::tasks::TaskTemplates;

use crate::{CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub lexicon: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub templates: TemplatesSection,
    #[serde(default)]
    pub backend: BackendSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub name: Option<String>,
    pub roots: Option<Vec<String>>,
    pub depth: Option<usize>,
    pub relations: Option<Vec<String>>,
    pub descend_taxonomy: Option<bool>,
    pub bidirectional_lateral: Option<bool>,
    pub plural_tolerant: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatesSection {
    pub relation_extraction: Option<PathBuf>,
    pub taxonomy_discovery: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: Option<String>,
    pub fixed_answer: Option<String>,
    pub replay_from: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub input_price_per_1k: Option<f64>,
    pub output_price_per_1k: Option<f64>,
    pub budget: Option<f64>,
    pub max_in_flight: Option<usize>,
}

/// Which answer source the run stage uses.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    GoldOracle,
    EnglishOnlyOracle,
    Fixed(String),
    Replay(PathBuf),
    Remote {
        endpoint: String,
        model: String,
        api_key_env: String,
        input_price_per_1k: f64,
        output_price_per_1k: f64,
    },
}

/// Fully resolved configuration, after merging file values and flags.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub seed: u64,
    pub lexicon: PathBuf,
    pub out_dir: PathBuf,
    pub domain_name: String,
    pub roots: Vec<ConceptId>,
    pub depth: usize,
    pub relations: BTreeSet<RelationKind>,
    pub mine_options: MineOptions,
    pub plural_tolerant: bool,
    pub templates: TaskTemplates,
    pub backend: BackendSpec,
    pub budget: Option<f64>,
    pub max_in_flight: usize,
}

fn parse_relations(names: &[String]) -> CliResult<BTreeSet<RelationKind>> {
    names
        .iter()
        .map(|name| {
            name.parse::<RelationKind>()
                .map_err(|e| CliError::Usage(format!("invalid relation: {e}")))
        })
        .collect()
}

impl PipelineConfig {
    /// Merge the config file (if any) with flag overrides and validate.
    /// Referenced paths must exist and the seed must be explicit.
    pub fn resolve(file: FileConfig, overrides: &crate::GlobalOpts) -> CliResult<Self> {
        let seed = overrides
            .seed
            .or(file.seed)
            .ok_or_else(|| CliError::Usage("a seed is required (flag --seed or `seed` in the config); runs never draw implicit entropy".into()))?;
        let lexicon = overrides
            .lexicon
            .clone()
            .or(file.lexicon)
            .ok_or_else(|| CliError::Usage("a lexicon path is required (--lexicon or `lexicon`)".into()))?;
        if !lexicon.exists() {
            return Err(CliError::Usage(format!(
                "lexicon file not found: {}",
                lexicon.display()
            )));
        }
        let out_dir = overrides
            .out_dir
            .clone()
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from("out"));

        let roots_source = overrides
            .roots
            .clone()
            .or(file.domain.roots)
            .unwrap_or_default();
        let roots: Vec<ConceptId> = roots_source.iter().map(|r| ConceptId::new(r.clone())).collect();
        let depth = overrides.depth.or(file.domain.depth).unwrap_or(5);
        let relation_names = overrides
            .relations
            .clone()
            .or(file.domain.relations)
            .unwrap_or_else(|| vec!["hyponym".into(), "derivation".into(), "topic".into()]);
        let relations = parse_relations(&relation_names)?;
        let mine_options = MineOptions {
            descend_taxonomy: overrides
                .descend_taxonomy
                .or(file.domain.descend_taxonomy)
                .unwrap_or(true),
            bidirectional_lateral: overrides
                .bidirectional_lateral
                .or(file.domain.bidirectional_lateral)
                .unwrap_or(true),
        };
        let plural_tolerant = overrides
            .plural_tolerant
            .or(file.domain.plural_tolerant)
            .unwrap_or(false);

        let templates = TaskTemplates {
            relation_extraction: read_template(
                overrides
                    .re_template
                    .as_ref()
                    .or(file.templates.relation_extraction.as_ref()),
                gibberlex::tasks::DEFAULT_RE_TEMPLATE,
            )?,
            taxonomy_discovery: read_template(
                overrides
                    .td_template
                    .as_ref()
                    .or(file.templates.taxonomy_discovery.as_ref()),
                gibberlex::tasks::DEFAULT_TD_TEMPLATE,
            )?,
        };

        let backend_kind = overrides
            .backend
            .clone()
            .or(file.backend.kind)
            .unwrap_or_else(|| "gold-oracle".into());
        let backend = match backend_kind.as_str() {
            "gold-oracle" => BackendSpec::GoldOracle,
            "english-only-oracle" => BackendSpec::EnglishOnlyOracle,
            "fixed" => BackendSpec::Fixed(
                overrides
                    .fixed_answer
                    .clone()
                    .or(file.backend.fixed_answer)
                    .unwrap_or_else(|| "False".into()),
            ),
            "replay" => {
                let path = overrides
                    .replay_from
                    .clone()
                    .or(file.backend.replay_from)
                    .ok_or_else(|| {
                        CliError::Usage("backend `replay` needs replay_from/--replay-from".into())
                    })?;
                if !path.exists() {
                    return Err(CliError::Usage(format!(
                        "replay source not found: {}",
                        path.display()
                    )));
                }
                BackendSpec::Replay(path)
            }
            "remote" => BackendSpec::Remote {
                endpoint: overrides
                    .endpoint
                    .clone()
                    .or(file.backend.endpoint)
                    .ok_or_else(|| {
                        CliError::Usage("backend `remote` needs endpoint/--endpoint".into())
                    })?,
                model: overrides
                    .model
                    .clone()
                    .or(file.backend.model)
                    .ok_or_else(|| CliError::Usage("backend `remote` needs model/--model".into()))?,
                api_key_env: overrides
                    .api_key_env
                    .clone()
                    .or(file.backend.api_key_env)
                    .unwrap_or_else(|| "OPENAI_API_KEY".into()),
                input_price_per_1k: overrides
                    .input_price
                    .or(file.backend.input_price_per_1k)
                    .unwrap_or(0.0),
                output_price_per_1k: overrides
                    .output_price
                    .or(file.backend.output_price_per_1k)
                    .unwrap_or(0.0),
            },
            other => {
                return Err(CliError::Usage(format!(
                    "unknown backend kind `{other}` (expected gold-oracle, english-only-oracle, fixed, replay or remote)"
                )))
            }
        };

        Ok(PipelineConfig {
            seed,
            lexicon,
            out_dir,
            domain_name: overrides
                .domain_name
                .clone()
                .or(file.domain.name)
                .unwrap_or_else(|| "domain".into()),
            roots,
            depth,
            relations,
            mine_options,
            plural_tolerant,
            templates,
            backend,
            budget: overrides.budget.or(file.backend.budget),
            max_in_flight: overrides
                .max_in_flight
                .or(file.backend.max_in_flight)
                .unwrap_or(4),
        })
    }
}

fn read_template(path: Option<&PathBuf>, default: &str) -> CliResult<String> {
    match path {
        Some(path) => std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read template {}: {e}", path.display()))
        }),
        None => Ok(default.to_owned()),
    }
}

pub fn load_file_config(path: Option<&Path>) -> CliResult<FileConfig> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            toml::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
        }
        None => Ok(FileConfig::default()),
    }
}
