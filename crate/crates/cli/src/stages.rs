//! Stage implementations. Each stage reads its declared inputs from the
//! output directory, writes its declared outputs and nothing else, so
//! re-running a stage with unchanged inputs reproduces identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gibberlex::lexicon::{load_lexicon, Lexicon};
use gibberlex::linker::{link_definitions_with, DefinitionLink};
use gibberlex::miner::{domain_stats, mine_domain_with, Domain};
use gibberlex::propagator::{propagate, ParallelCorpus};
use gibberlex::runner::{
    run, write_predictions, Backend, EnglishOnlyOracle, FixedAnswer, GoldOracle, PredictionStatus,
    RemoteChat, RemoteChatConfig, ReplayCache,
};
use gibberlex::scorer::{
    render_table, score_alignment, score_relation_extraction, score_taxonomy, write_reports,
    MetricsReport,
};
use gibberlex::tasks::{
    read_instances, write_finetune_export, write_instances, TaskBuilder, TaskInstance, TaskKind,
    Variant,
};
use gibberlex::translator::FormMap;
use gibberlex::Error as CoreError;

use crate::config::{BackendSpec, PipelineConfig};
use crate::{CliError, CliResult};

pub const DOMAIN_FILE: &str = "domain.json";
pub const LINKS_FILE: &str = "links.jsonl";
pub const FORM_MAP_FILE: &str = "form_map.jsonl";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TABLE: &str = "metrics.txt";
pub const FINETUNE_FILE: &str = "finetune.jsonl";

fn artifact(config: &PipelineConfig, name: &str) -> PathBuf {
    config.out_dir.join(name)
}

fn open_artifact(path: &Path) -> CliResult<BufReader<File>> {
    if !path.exists() {
        return Err(CliError::Stage(format!(
            "missing upstream artifact: {} (run the producing stage first)",
            path.display()
        )));
    }
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Stage(format!("{}: {e}", path.display())))
    }

fn create_output(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Usage(format!("{}: {e}", parent.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn stage_err(path: &Path) -> impl Fn(CoreError) -> CliError + '_ {
    move |e| CliError::Stage(format!("{}: {e}", path.display()))
}

fn load_lexicon_file(config: &PipelineConfig) -> CliResult<Lexicon> {
    let reader = open_artifact(&config.lexicon)?;
    load_lexicon(reader).map_err(|e| CliError::Usage(format!("{}: {e}", config.lexicon.display())))
}

fn load_domain(config: &PipelineConfig) -> CliResult<Domain> {
    let path = artifact(config, DOMAIN_FILE);
    let text = std::fs::read_to_string(&path).map_err(|_| {
        CliError::Stage(format!(
            "missing upstream artifact: {} (run `mine` first)",
            path.display()
        ))
    })?;
    Domain::from_manifest_json(&text).map_err(stage_err(&path))
}

fn load_links(config: &PipelineConfig) -> CliResult<Vec<DefinitionLink>> {
    let path = artifact(config, LINKS_FILE);
    let reader = open_artifact(&path)?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufRead::lines(reader).enumerate() {
        let line = line.map_err(|e| CliError::Stage(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let link: DefinitionLink = serde_json::from_str(&line).map_err(|e| {
            CliError::Stage(format!("{}: line {}: {e}", path.display(), idx + 1))
        })?;
        out.push(link);
    }
    Ok(out)
}

fn load_corpus(config: &PipelineConfig) -> CliResult<ParallelCorpus> {
    let map_path = artifact(config, FORM_MAP_FILE);
    let map = FormMap::load(open_artifact(&map_path)?).map_err(stage_err(&map_path))?;
    let corpus_path = artifact(config, CORPUS_FILE);
    ParallelCorpus::load(open_artifact(&corpus_path)?, map).map_err(stage_err(&corpus_path))
}

fn load_instance_file(config: &PipelineConfig) -> CliResult<Vec<TaskInstance>> {
    let path = artifact(config, INSTANCES_FILE);
    read_instances(open_artifact(&path)?).map_err(stage_err(&path))
}

pub fn stage_mine(config: &PipelineConfig) -> CliResult<()> {
    if config.roots.is_empty() {
        return Err(CliError::Usage(
            "no root concepts configured ([domain].roots or --roots)".into(),
        ));
    }
    let lex = load_lexicon_file(config)?;
    let domain = mine_domain_with(
        &lex,
        &config.roots,
        &config.relations,
        config.depth,
        config.mine_options,
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = create_output(&artifact(config, DOMAIN_FILE))?;
    out.write_all(domain.to_manifest_json().as_bytes())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    eprintln!(
        "mined {} concepts, {} hypernym pairs",
        domain.members.len(),
        domain.hypernym_pairs.len()
    );
    Ok(())
}

pub fn stage_link(config: &PipelineConfig) -> CliResult<()> {
    let lex = load_lexicon_file(config)?;
    let domain = load_domain(config)?;
    let links = link_definitions_with(&lex, &domain, config.plural_tolerant)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = create_output(&artifact(config, LINKS_FILE))?;
    for link in &links {
        serde_json::to_writer(&mut out, link).map_err(|e| CliError::Usage(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| CliError::Usage(e.to_string()))?;
    }
    eprintln!("linked {} mentions", links.len());
    Ok(())
}

pub fn stage_gibberify(config: &PipelineConfig) -> CliResult<()> {
    let lex = load_lexicon_file(config)?;
    let domain = load_domain(config)?;
    let links = load_links(config)?;
    let corpus = propagate(&lex, &domain, &links, config.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut map_out = create_output(&artifact(config, FORM_MAP_FILE))?;
    corpus
        .form_map
        .save(&mut map_out)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut corpus_out = create_output(&artifact(config, CORPUS_FILE))?;
    corpus
        .save(&mut corpus_out)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    eprintln!(
        "gibberified {} concepts ({} mapped forms)",
        corpus.entries.len(),
        corpus.form_map.len()
    );
    Ok(())
}

pub fn stage_build_tasks(config: &PipelineConfig) -> CliResult<()> {
    let lex = load_lexicon_file(config)?;
    let domain = load_domain(config)?;
    let links = load_links(config)?;
    let corpus = load_corpus(config)?;
    let builder = TaskBuilder::new(&lex, &domain, &links, &corpus, config.templates.clone());
    let mut instances = Vec::new();
    for variant in [Variant::En, Variant::Gib] {
        instances.extend(
            builder
                .build_relation_extraction(variant)
                .map_err(|e| CliError::Usage(e.to_string()))?,
        );
    }
    for variant in [Variant::En, Variant::Gib] {
        instances.extend(
            builder
                .build_taxonomy_discovery(variant, config.seed)
                .map_err(|e| CliError::Usage(e.to_string()))?,
        );
    }
    let mut out = create_output(&artifact(config, INSTANCES_FILE))?;
    write_instances(&mut out, &instances).map_err(|e| CliError::Usage(e.to_string()))?;
    eprintln!("built {} instances", instances.len());
    Ok(())
}

fn build_backend(config: &PipelineConfig) -> CliResult<Arc<dyn Backend>> {
    Ok(match &config.backend {
        BackendSpec::GoldOracle => Arc::new(GoldOracle),
        BackendSpec::EnglishOnlyOracle => Arc::new(EnglishOnlyOracle),
        BackendSpec::Fixed(answer) => Arc::new(FixedAnswer {
            answer: answer.clone(),
        }),
        BackendSpec::Replay(path) => {
            let predictions = gibberlex::runner::read_predictions(open_artifact(path)?)
                .map_err(stage_err(path))?;
            Arc::new(ReplayCache::from_predictions(&predictions))
        }
        BackendSpec::Remote {
            endpoint,
            model,
            api_key_env,
            input_price_per_1k,
            output_price_per_1k,
        } => {
            let mut remote = RemoteChatConfig::new(endpoint.clone(), model.clone());
            remote.api_key = std::env::var(api_key_env).ok();
            remote.input_price_per_1k = *input_price_per_1k;
            remote.output_price_per_1k = *output_price_per_1k;
            Arc::new(RemoteChat::new(remote).map_err(|e| CliError::Usage(e.to_string()))?)
        }
    })
}

/// Returns false when any instance failed or was skipped, which the caller
/// turns into the transport/budget exit code.
pub fn stage_run(config: &PipelineConfig) -> CliResult<bool> {
    let instances = load_instance_file(config)?;
    let backend = build_backend(config)?;
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Usage(format!("tokio runtime: {e}")))?;
    let predictions = runtime
        .block_on(run(
            &instances,
            backend.as_ref(),
            config.max_in_flight,
            config.budget,
        ))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = create_output(&artifact(config, PREDICTIONS_FILE))?;
    write_predictions(&mut out, &predictions).map_err(|e| CliError::Usage(e.to_string()))?;
    let answered = predictions
        .iter()
        .filter(|p| p.status == PredictionStatus::Ok)
        .count();
    let cost: f64 = predictions.iter().map(|p| p.cost).sum();
    eprintln!(
        "answered {answered}/{} instances, cost {cost:.4}",
        predictions.len()
    );
    Ok(answered == predictions.len())
}

pub fn stage_score(config: &PipelineConfig) -> CliResult<()> {
    let corpus = load_corpus(config)?;
    let instances = load_instance_file(config)?;
    let predictions_path = artifact(config, PREDICTIONS_FILE);
    let predictions = gibberlex::runner::read_predictions(open_artifact(&predictions_path)?)
        .map_err(stage_err(&predictions_path))?;

    let score_err = |e: CoreError| CliError::Stage(format!("scoring: {e}"));
    let mut reports: Vec<MetricsReport> = Vec::new();
    for variant in [Variant::En, Variant::Gib] {
        reports.push(
            score_relation_extraction(&predictions, &instances, &corpus, variant)
                .map_err(score_err)?,
        );
        reports.push(score_taxonomy(&predictions, &instances, variant).map_err(score_err)?);
    }
    for task in [TaskKind::RelationExtraction, TaskKind::TaxonomyDiscovery] {
        reports.push(
            score_alignment(
                &predictions,
                &predictions,
                &instances,
                &corpus.form_map,
                task,
            )
            .map_err(score_err)?,
        );
    }

    let mut json_out = create_output(&artifact(config, METRICS_JSON))?;
    write_reports(&mut json_out, &reports).map_err(|e| CliError::Usage(e.to_string()))?;
    let table = render_table(&reports);
    let mut table_out = create_output(&artifact(config, METRICS_TABLE))?;
    table_out
        .write_all(table.as_bytes())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    print!("{table}");
    Ok(())
}

pub fn stage_export_finetune(config: &PipelineConfig) -> CliResult<()> {
    let lex = load_lexicon_file(config)?;
    let domain = load_domain(config)?;
    let links = load_links(config)?;
    let corpus = load_corpus(config)?;
    let builder = TaskBuilder::new(&lex, &domain, &links, &corpus, config.templates.clone());
    let (train, test) = builder
        .split_finetune(config.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = create_output(&artifact(config, FINETUNE_FILE))?;
    write_finetune_export(&mut out, &train, &test).map_err(|e| CliError::Usage(e.to_string()))?;
    eprintln!(
        "exported {} train and {} test records",
        train.len(),
        test.len()
    );
    Ok(())
}

/// Prints a statistics row for the mined domain. Reads the manifest when
/// present, otherwise mines in memory without writing anything.
pub fn stage_stats(config: &PipelineConfig) -> CliResult<()> {
    let domain = if artifact(config, DOMAIN_FILE).exists() {
        load_domain(config)?
    } else {
        if config.roots.is_empty() {
            return Err(CliError::Usage(
                "no domain manifest and no roots configured".into(),
            ));
        }
        let lex = load_lexicon_file(config)?;
        mine_domain_with(
            &lex,
            &config.roots,
            &config.relations,
            config.depth,
            config.mine_options,
        )
        .map_err(|e| CliError::Usage(e.to_string()))?
    };
    let stats = domain_stats(&domain);
    println!(
        "{:<16} {:>9} {:>10} {:>6}  {}",
        config.domain_name,
        stats.concepts,
        stats.hypernyms,
        stats.depth,
        stats
            .roots
            .iter()
            .map(|r| r.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

pub fn stage_pipeline(config: &PipelineConfig) -> CliResult<bool> {
    stage_mine(config)?;
    stage_link(config)?;
    stage_gibberify(config)?;
    stage_build_tasks(config)?;
    let clean = stage_run(config)?;
    stage_score(config)?;
    stage_export_finetune(config)?;
    Ok(clean)
}
