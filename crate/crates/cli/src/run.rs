//! Stage implementations shared by the individual subcommands and the
//! end-to-end pipeline. Every stage appends an event to the run manifest;
//! failures are recorded before the error propagates, so partial runs are
//! visible as incomplete.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use satd_core::augment::{
    augment_training_set, check_leakage, entropy_balance, plan_augmentation, AugmentOptions,
    AugmentScope, ClassDistribution,
};
use satd_core::categorizer::{
    train_categorizer, two_step_classify, TrainedCategorizer,
};
use satd_core::corpus::{
    class_counts, load_dataset, stratified_split, to_binary, write_dataset, BinaryLabel,
    DatasetFormat, LabeledInstance, SatdLabel, SplitBundle,
};
use satd_core::embeddings::WordTable;
use satd_core::gateway::build_client;
use satd_core::identifier::{train_identifier, TrainedIdentifier};
use satd_core::keywords::{
    keyword_tables, write_keywords_csv, Embedder, HashedEmbedder, KeywordQuery, TableEmbedder,
};
use satd_core::manifest::{sha256_file, RunManifest, SeedFanout};
use satd_core::metrics::{f1_scores, render_report, ReportFormat};
use satd_core::preprocess::{deduplicate, preprocess_text};
use satd_core::reference::{reproduce_tables, BENCHMARK_COUNTS};

use crate::config::AppConfig;

pub struct RunContext {
    pub config: AppConfig,
    pub out: PathBuf,
    pub manifest: RunManifest,
    pub seeds: SeedFanout,
}

impl RunContext {
    pub fn open(config: AppConfig) -> Result<RunContext> {
        let out = config
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs/out"));
        std::fs::create_dir_all(&out)
            .with_context(|| format!("cannot create output directory {}", out.display()))?;
        let manifest_path = out.join("manifest.json");
        let seeds = SeedFanout::from_master(config.seed);
        let manifest = if manifest_path.exists() {
            RunManifest::load(&manifest_path)?
        } else {
            RunManifest::new(config.snapshot(), config.seed)
        };
        Ok(RunContext {
            config,
            out,
            manifest,
            seeds,
        })
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out.join("manifest.json")
    }

    fn save_manifest(&self) -> Result<()> {
        self.manifest.save(&self.manifest_path())?;
        Ok(())
    }

    /// Run one stage, recording completion or failure in the manifest.
    pub fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut RunContext) -> Result<(T, StageReport)>,
    ) -> Result<T> {
        match f(self) {
            Ok((value, report)) => {
                self.manifest
                    .record(name, "completed", report.inputs, report.outputs, report.details);
                self.save_manifest()?;
                Ok(value)
            }
            Err(error) => {
                self.manifest.record(
                    name,
                    "failed",
                    BTreeMap::new(),
                    BTreeMap::new(),
                    serde_json::json!({"error": error.to_string()}),
                );
                self.save_manifest()?;
                Err(error)
            }
        }
    }
}

#[derive(Default)]
pub struct StageReport {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub details: serde_json::Value,
}

impl StageReport {
    fn input(mut self, name: &str, fingerprint: String) -> Self {
        self.inputs.insert(name.to_string(), fingerprint);
        self
    }

    fn output(mut self, path: &Path) -> Result<Self> {
        self.outputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(self)
    }

    fn details(mut self, details: serde_json::Value) -> Self {
        self.details = details;
        self
    }
}

// Canonical file layout under the output directory.
pub fn dataset_path(out: &Path) -> PathBuf {
    out.join("dataset.jsonl")
}
fn split_dir(out: &Path) -> PathBuf {
    out.join("split")
}
fn split_part(out: &Path, part: &str) -> PathBuf {
    split_dir(out).join(format!("{part}.jsonl"))
}
pub fn augmented_path(out: &Path) -> PathBuf {
    out.join("augmented.jsonl")
}
fn plan_path(out: &Path) -> PathBuf {
    out.join("augment").join("plan.json")
}
fn identifier_ckpt(out: &Path) -> PathBuf {
    out.join("checkpoints").join("identifier")
}
fn categorizer_ckpt(out: &Path) -> PathBuf {
    out.join("checkpoints").join("categorizer")
}
pub fn metrics_path(out: &Path) -> PathBuf {
    out.join("metrics.json")
}
pub fn report_path(out: &Path) -> PathBuf {
    out.join("report.md")
}
pub fn keywords_path(out: &Path) -> PathBuf {
    out.join("keywords.csv")
}
pub fn tables_path(out: &Path) -> PathBuf {
    out.join("tables.json")
}

pub fn ingest(ctx: &mut RunContext) -> Result<()> {
    ctx.stage("ingest", |ctx| {
        let source = ctx
            .config
            .dataset
            .path
            .clone()
            .ok_or_else(|| anyhow::anyhow!("no dataset path; set --dataset or dataset.path"))?;
        let format = ctx
            .config
            .dataset_format()
            .ok_or_else(|| anyhow::anyhow!("cannot infer dataset format; set dataset.format"))?;
        let mut data: Vec<LabeledInstance> = load_dataset(&source, format)?;
        if let Some(artifact) = ctx.config.artifact_filter() {
            data.retain(|i| i.source == artifact);
        }
        if data.is_empty() {
            bail!("dataset is empty after filtering");
        }
        let target = dataset_path(&ctx.out);
        write_dataset(&target, DatasetFormat::Jsonl, &data)?;
        let report = StageReport::default()
            .input("dataset", sha256_file(&source)?)
            .details(serde_json::json!({
                "rows": data.len(),
                "class_counts": class_counts(&data),
            }))
            .output(&target)?;
        Ok(((), report))
    })
}

fn read_canonical(out: &Path) -> Result<Vec<LabeledInstance>> {
    let path = dataset_path(out);
    if !path.exists() {
        bail!("missing {}; run the ingest stage first", path.display());
    }
    Ok(load_dataset(&path, DatasetFormat::Jsonl)?)
}

fn read_split(out: &Path, ratios: [f64; 3], seed: u64) -> Result<SplitBundle<SatdLabel>> {
    for part in ["train", "validation", "test"] {
        if !split_part(out, part).exists() {
            bail!("missing split files; run the split stage first");
        }
    }
    Ok(SplitBundle {
        train: load_dataset(&split_part(out, "train"), DatasetFormat::Jsonl)?,
        validation: load_dataset(&split_part(out, "validation"), DatasetFormat::Jsonl)?,
        test: load_dataset(&split_part(out, "test"), DatasetFormat::Jsonl)?,
        seed,
        ratios,
    })
}

pub fn split(ctx: &mut RunContext) -> Result<()> {
    ctx.stage("split", |ctx| {
        let data = read_canonical(&ctx.out)?;
        let (deduped, dedup_report) = deduplicate(&data, &ctx.config.preprocess);
        let bundle = stratified_split(&deduped, ctx.config.split.ratios, ctx.seeds.split)?;
        std::fs::create_dir_all(split_dir(&ctx.out))?;
        let mut report = StageReport::default().input("dataset", sha256_file(&dataset_path(&ctx.out))?);
        for (part, instances) in [
            ("train", &bundle.train),
            ("validation", &bundle.validation),
            ("test", &bundle.test),
        ] {
            let path = split_part(&ctx.out, part);
            write_dataset(&path, DatasetFormat::Jsonl, instances)?;
            report = report.output(&path)?;
        }
        let summary = serde_json::json!({
            "seed": bundle.seed,
            "ratios": bundle.ratios,
            "dedup_removed": dedup_report.removed,
            "label_conflicts": dedup_report.label_conflicts,
            "train_counts": class_counts(&bundle.train),
            "validation_counts": class_counts(&bundle.validation),
            "test_counts": class_counts(&bundle.test),
        });
        let summary_path = split_dir(&ctx.out).join("summary.json");
        std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;
        report = report.output(&summary_path)?.details(summary);
        Ok(((), report))
    })
}

/// Debt-type distribution of the augmentation input.
fn debt_distribution(instances: &[LabeledInstance]) -> ClassDistribution {
    let mut distribution = ClassDistribution::new();
    for label in SatdLabel::DEBT_TYPES {
        distribution.insert(label.name(), 0);
    }
    for instance in instances.iter().filter(|i| i.label.is_debt()) {
        let name = instance.label.name();
        distribution.insert(name, distribution.get(name) + 1);
    }
    distribution
}

pub fn augment(ctx: &mut RunContext, input_override: Option<PathBuf>) -> Result<()> {
    ctx.stage("augment", |ctx| {
        let bundle = read_split(&ctx.out, ctx.config.split.ratios, ctx.seeds.split)?;
        let (input, input_path) = match &input_override {
            Some(path) => (
                load_dataset::<SatdLabel>(path, DatasetFormat::Jsonl)?,
                path.clone(),
            ),
            None => (bundle.train.clone(), split_part(&ctx.out, "train")),
        };

        // Augmentation is training-set-only by contract: abort on any
        // held-out id among the inputs.
        let holdout: HashSet<String> = bundle
            .validation
            .iter()
            .chain(&bundle.test)
            .map(|i| i.id.clone())
            .collect();
        check_leakage(&input, &holdout)?;

        let distribution = debt_distribution(&input);
        let plan = plan_augmentation(&distribution, AugmentScope::TypesOnly)?;

        let mut gateway_config = ctx.config.gateway.clone();
        gateway_config.mock_seed = ctx.seeds.mock;
        gateway_config.max_retries = ctx.config.augment.max_retries;
        let client = build_client(&gateway_config)?;
        let options = AugmentOptions {
            max_retries: ctx.config.augment.max_retries,
            concurrency: ctx.config.augment.concurrency,
        };
        let outcome = augment_training_set(&input, &plan, client.as_ref(), &options)?;

        let augmented_file = augmented_path(&ctx.out);
        satd_core::augment::write_augmented(&augmented_file, &outcome.augmented)?;

        let combined = outcome.extend_training_set(&input);
        let entropy_before_types = entropy_balance(&distribution).ok();
        let after_types = debt_distribution(&combined);
        let entropy_after_types = entropy_balance(&after_types).ok();
        let binary_of = |data: &[LabeledInstance]| {
            ClassDistribution::from_instances(&to_binary(data))
        };
        let plan_details = serde_json::json!({
            "gateway": client.kind().to_string(),
            "distribution": distribution,
            "plan": plan,
            "shortfalls": outcome.shortfalls,
            "generated": outcome.augmented.len(),
            "entropy": {
                "types_before": entropy_before_types,
                "types_after": entropy_after_types,
                "binary_before": entropy_balance(&binary_of(&input)).ok(),
                "binary_after": entropy_balance(&binary_of(&combined)).ok(),
            },
        });
        std::fs::create_dir_all(ctx.out.join("augment"))?;
        std::fs::write(
            plan_path(&ctx.out),
            serde_json::to_string_pretty(&plan_details)? + "\n",
        )?;

        let report = StageReport::default()
            .input("train", sha256_file(&input_path)?)
            .details(plan_details)
            .output(&augmented_file)?
            .output(&plan_path(&ctx.out))?;
        Ok(((), report))
    })
}

/// Preprocess instance texts in place.
fn preprocess_instances(
    instances: &[LabeledInstance],
    config: &satd_core::preprocess::PreprocessConfig,
) -> Vec<LabeledInstance> {
    instances
        .iter()
        .map(|i| {
            let mut out = i.clone();
            out.text = preprocess_text(&i.text, config);
            out
        })
        .filter(|i| !i.text.is_empty())
        .collect()
}

/// Training set plus any augmented instances, after asserting that no
/// augmented row derives from a held-out instance.
fn augmented_training_instances(
    ctx: &RunContext,
    bundle: &SplitBundle<SatdLabel>,
) -> Result<Vec<LabeledInstance>> {
    let mut train = bundle.train.clone();
    let path = augmented_path(&ctx.out);
    if path.exists() {
        let augmented = satd_core::augment::load_augmented(&path)?;
        let holdout: HashSet<&str> = bundle
            .validation
            .iter()
            .chain(&bundle.test)
            .map(|i| i.id.as_str())
            .collect();
        let train_ids: HashSet<&str> = bundle.train.iter().map(|i| i.id.as_str()).collect();
        for a in &augmented {
            if holdout.contains(a.origin_id.as_str()) || !train_ids.contains(a.origin_id.as_str())
            {
                bail!(
                    "augmented instance {} derives from {} outside the training split",
                    a.id,
                    a.origin_id
                );
            }
        }
        log::info!("including {} augmented instances", augmented.len());
        train.extend(augmented.iter().map(|a| a.to_instance()));
    }
    Ok(train)
}

pub fn train_identify(ctx: &mut RunContext) -> Result<()> {
    ctx.stage("train-identify", |ctx| {
        let bundle = read_split(&ctx.out, ctx.config.split.ratios, ctx.seeds.split)?;
        let train = augmented_training_instances(ctx, &bundle)?;

        let preprocessed = SplitBundle {
            train: preprocess_instances(&train, &ctx.config.preprocess),
            validation: preprocess_instances(&bundle.validation, &ctx.config.preprocess),
            test: Vec::new(),
            seed: bundle.seed,
            ratios: bundle.ratios,
        };
        let binary = preprocessed.map_labels(BinaryLabel::from);

        let table = match &ctx.config.identifier.embedding_path {
            Some(path) => Some(WordTable::load(path)?),
            None => None,
        };
        let mut config = ctx.config.identifier.config.clone();
        config.seed = ctx.seeds.identifier;
        let model = train_identifier(&binary, table.as_ref(), &config)?;

        let ckpt = identifier_ckpt(&ctx.out);
        model.save(&ckpt)?;
        let report = StageReport::default()
            .details(serde_json::json!({
                "train_size": binary.train.len(),
                "stopped_epoch": model.stopped_epoch,
                "history": model.history,
                "embedding_source": model.embedding_source,
                "checkpoint": ckpt.display().to_string(),
            }))
            .output(&ckpt.join("model.json"))?
            .output(&ckpt.join("weights.bin"))?;
        Ok(((), report))
    })
}

pub fn train_categorize(ctx: &mut RunContext) -> Result<()> {
    ctx.stage("train-categorize", |ctx| {
        let bundle = read_split(&ctx.out, ctx.config.split.ratios, ctx.seeds.split)?;
        let train = augmented_training_instances(ctx, &bundle)?;

        let prepare = |instances: &[LabeledInstance]| -> Vec<LabeledInstance> {
            let satd_only: Vec<LabeledInstance> = instances
                .iter()
                .filter(|i| i.label.is_debt())
                .cloned()
                .collect();
            if ctx.config.categorizer_raw_text {
                satd_only
            } else {
                preprocess_instances(&satd_only, &ctx.config.preprocess)
            }
        };
        let splits = SplitBundle {
            train: prepare(&train),
            validation: prepare(&bundle.validation),
            test: Vec::new(),
            seed: bundle.seed,
            ratios: bundle.ratios,
        };

        let mut config = ctx.config.categorizer.clone();
        config.seed = ctx.seeds.categorizer;
        let model = train_categorizer(&splits, &config)?;

        let ckpt = categorizer_ckpt(&ctx.out);
        model.save(&ckpt)?;
        let report = StageReport::default()
            .details(serde_json::json!({
                "train_size": splits.train.len(),
                "best_epoch": model.best_epoch,
                "history": model.history,
                "checkpoint": ckpt.display().to_string(),
            }))
            .output(&ckpt.join("model.json"))?
            .output(&ckpt.join("weights.bin"))?;
        Ok(((), report))
    })
}

fn entropy_details(out: &Path) -> (Option<f64>, Option<f64>) {
    let Ok(content) = std::fs::read_to_string(plan_path(out)) else {
        return (None, None);
    };
    let Ok(value) = serde_json::from_str::<serde_json::Value>(&content) else {
        return (None, None);
    };
    (
        value["entropy"]["types_before"].as_f64(),
        value["entropy"]["types_after"].as_f64(),
    )
}

pub fn evaluate(ctx: &mut RunContext) -> Result<()> {
    ctx.stage("evaluate", |ctx| {
        let bundle = read_split(&ctx.out, ctx.config.split.ratios, ctx.seeds.split)?;
        let mut identifier = TrainedIdentifier::load(&identifier_ckpt(&ctx.out))
            .context("load identifier checkpoint (run train-identify first)")?;
        let mut categorizer = TrainedCategorizer::load(&categorizer_ckpt(&ctx.out))
            .context("load categorizer checkpoint (run train-categorize first)")?;

        let test = preprocess_instances(&bundle.test, &ctx.config.preprocess);
        if test.is_empty() {
            bail!("test split is empty after preprocessing");
        }
        let texts: Vec<&str> = test.iter().map(|i| i.text.as_str()).collect();

        // Step one in isolation.
        let gold_binary: Vec<BinaryLabel> = test.iter().map(|i| i.label.into()).collect();
        let predicted_binary: Vec<BinaryLabel> =
            identifier.predict(&texts).iter().map(|(l, _)| *l).collect();
        let mut identification =
            f1_scores(&gold_binary, &predicted_binary, &BinaryLabel::ALL)?;

        // Step two on gold SATD instances, mirroring the reference tables.
        let satd_gold: Vec<&LabeledInstance> =
            test.iter().filter(|i| i.label.is_debt()).collect();
        let categorization = if satd_gold.is_empty() {
            None
        } else {
            let texts: Vec<&str> = satd_gold.iter().map(|i| i.text.as_str()).collect();
            let gold: Vec<SatdLabel> = satd_gold.iter().map(|i| i.label).collect();
            let predicted: Vec<SatdLabel> = categorizer
                .predict(&texts)
                .iter()
                .map(|(l, _)| *l)
                .collect();
            Some(f1_scores(&gold, &predicted, &SatdLabel::DEBT_TYPES)?)
        };

        // Composed two-step labels over the whole test set.
        let gold_full: Vec<SatdLabel> = test.iter().map(|i| i.label).collect();
        let predicted_full = two_step_classify(&mut identifier, &mut categorizer, &texts);
        let two_step = f1_scores(&gold_full, &predicted_full, &SatdLabel::ALL)?;

        let (entropy_before, entropy_after) = entropy_details(&ctx.out);
        identification.entropy_before_augmentation = entropy_before;
        identification.entropy_after_augmentation = entropy_after;
        // Relative so identical seeded runs emit identical bytes.
        identification.manifest_ref = Some("manifest.json".to_string());

        let metrics = serde_json::json!({
            "schema_version": 1,
            "identification": identification,
            "categorization": categorization,
            "two_step": two_step,
        });
        let metrics_file = metrics_path(&ctx.out);
        std::fs::write(&metrics_file, serde_json::to_string_pretty(&metrics)? + "\n")?;

        let mut markdown = String::from("# Evaluation report\n\n## Identification\n\n");
        markdown.push_str(&render_report(&identification, ReportFormat::Markdown));
        if let Some(categorization) = &categorization {
            markdown.push_str("\n## Categorization (gold SATD instances)\n\n");
            markdown.push_str(&render_report(categorization, ReportFormat::Markdown));
        }
        markdown.push_str("\n## Two-step composition\n\n");
        markdown.push_str(&render_report(&two_step, ReportFormat::Markdown));
        let report_file = report_path(&ctx.out);
        std::fs::write(&report_file, markdown)?;

        let report = StageReport::default()
            .details(serde_json::json!({
                "test_size": test.len(),
                "identification_macro_f1": identification.macro_f1,
                "two_step_macro_f1": two_step.macro_f1,
            }))
            .output(&metrics_file)?
            .output(&report_file)?;
        Ok(((), report))
    })
}

/// Load a JSONL dataset for keyword extraction, rejecting any record that
/// carries augmentation provenance.
pub fn load_original_jsonl(path: &Path) -> Result<Vec<LabeledInstance>> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .with_context(|| format!("line {} is not valid JSON", i + 1))?;
        if value.get("origin_id").is_some() {
            bail!(
                "{} line {}: augmented instance {} in keyword input; extraction runs on original data only",
                path.display(),
                i + 1,
                value["id"]
            );
        }
    }
    Ok(load_dataset(path, DatasetFormat::Jsonl)?)
}

pub fn keywords(ctx: &mut RunContext, input_override: Option<PathBuf>) -> Result<()> {
    ctx.stage("keywords", |ctx| {
        let input_path = input_override
            .clone()
            .unwrap_or_else(|| dataset_path(&ctx.out));
        let mut dataset = load_original_jsonl(&input_path)?;
        if let Some(artifact) = ctx.config.artifact_filter() {
            dataset.retain(|i| i.source == artifact);
        }
        let cap = ctx.config.keywords.max_documents_per_group;
        if cap > 0 {
            dataset = cap_per_group(dataset, cap);
        }

        let section = &ctx.config.keywords;
        let query = KeywordQuery {
            group: String::new(),
            ngram_range: (section.ngram_min, section.ngram_max),
            top_k: section.top_k,
            diversity: section.diversity,
        };
        let embedder: Box<dyn Embedder> = match &section.embedder_table {
            Some(path) => Box::new(TableEmbedder::new(WordTable::load(path)?)),
            None => Box::new(HashedEmbedder::new(section.embedder_dim, 0)),
        };
        let tables = keyword_tables(&dataset, &query, embedder.as_ref())?;
        let csv_path = keywords_path(&ctx.out);
        write_keywords_csv(&csv_path, &tables)?;

        let report = StageReport::default()
            .input("dataset", sha256_file(&input_path)?)
            .details(serde_json::json!({
                "embedder": embedder.identifier(),
                "documents": dataset.len(),
                "groups": tables.per_source.len() + tables.per_type.len(),
            }))
            .output(&csv_path)?;
        Ok(((), report))
    })
}

/// Keep at most `cap` instances per (source, SATD) group, preserving order.
fn cap_per_group(dataset: Vec<LabeledInstance>, cap: usize) -> Vec<LabeledInstance> {
    let mut seen: BTreeMap<(String, bool), usize> = BTreeMap::new();
    dataset
        .into_iter()
        .filter(|i| {
            let key = (i.source.code().to_string(), i.label.is_debt());
            let count = seen.entry(key).or_insert(0);
            *count += 1;
            *count <= cap
        })
        .collect()
}

pub fn tables(ctx: &mut RunContext) -> Result<()> {
    ctx.stage("tables", |ctx| {
        let tables = reproduce_tables(&BENCHMARK_COUNTS)?;
        let path = tables_path(&ctx.out);
        std::fs::write(&path, serde_json::to_string_pretty(&tables)? + "\n")?;

        for artifact in &tables.artifacts {
            println!("artifact {}", artifact.source);
            println!("  plan multipliers: {:?}", artifact.plan.multipliers);
            println!("  augmented counts: {:?}", artifact.augmented);
            println!(
                "  entropy identification {:.3} -> {:.3}, categorization {:.3} -> {:.3}",
                artifact.entropy_identification_original,
                artifact.entropy_identification_augmented,
                artifact.entropy_categorization_original,
                artifact.entropy_categorization_augmented,
            );
        }

        let report = StageReport::default()
            .details(serde_json::to_value(&tables)?)
            .output(&path)?;
        Ok(((), report))
    })
}

pub fn pipeline(ctx: &mut RunContext) -> Result<()> {
    ingest(ctx)?;
    split(ctx)?;
    augment(ctx, None)?;
    train_identify(ctx)?;
    train_categorize(ctx)?;
    evaluate(ctx)?;
    Ok(())
}
