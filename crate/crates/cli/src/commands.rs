use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use resume_ie::classify::{
    embed_texts, train_head as fit_head, AdamConfig, Classifier, ClassifierHead, EmbeddingPort, LabeledEmbedding,
    Pooling, TrainConfig,
};
use resume_ie::corpus::{
    class_counts, load_text_dataset, save_text_dataset, split_by_person, write_text_dataset, ClassLabel,
    SectionRecord, SplitRatios, NUM_CLASSES,
};
use resume_ie::ingest::{ExternalRenderer, ExternalTextMiner};
use resume_ie::metrics::{confusion, f1_report, load_detections, load_ground_truth, load_yolo_label_dir, map_eval};
use resume_ie::pipeline::{Pipeline, PipelineConfig, ResumeExtraction};
use resume_ie::ports::{DictionaryTranslator, PortManifest, SimilarityTable};
use resume_ie::textprep::{
    build_vocabulary, AugmentPlan, AugmentRates, Augmenter, NormalizationRules, Strategy, DEFAULT_HEADERS,
    DEFAULT_STOPWORDS,
};
use resume_ie::tokenizers::{build_tokenizer, Tokenizer, VocabFiles};

use crate::args::{
    require, AugmentArgs, EvalDetectArgs, EvalTextArgs, ModelArgs, ParseArgs, SplitArgs, SplitKey, TrainArgs,
};
use crate::report::TextEvalReport;
use crate::Global;

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

/// An explicit file, else `name` under the artifact root if it exists there.
fn optional_artifact(m: &ModelArgs, explicit: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
    explicit
        .clone()
        .or_else(|| m.root().map(|r| r.join(name)).filter(|p| p.is_file()))
}

fn vocab_files(m: &ModelArgs) -> Result<VocabFiles> {
    let family = m.family();
    let conventional = m.root().map(|r| VocabFiles::in_dir(r, family));
    let vocab = match (&m.vocab, &conventional) {
        (Some(v), _) => v.clone(),
        (None, Some(c)) => c.vocab.clone(),
        (None, None) => bail!("no vocabulary: pass --vocab, --model-dir or set {}", crate::args::MODEL_DIR_ENV),
    };
    Ok(VocabFiles {
        vocab,
        merges: m.merges.clone().or_else(|| conventional.and_then(|c| c.merges)),
    })
}

/// Header and stopword lists from files, else the built-in lists.
fn normalization_rules(headers: Option<PathBuf>, stopwords: Option<PathBuf>) -> Result<NormalizationRules> {
    let list = |p: Option<PathBuf>, default: &[&str]| -> Result<Vec<String>> {
        match p {
            Some(p) => read_lines(&p),
            None => Ok(default.iter().map(|s| s.to_string()).collect()),
        }
    };
    let headers = list(headers, DEFAULT_HEADERS)?;
    let stopwords = list(stopwords, DEFAULT_STOPWORDS)?;
    Ok(NormalizationRules::new(headers.iter().map(String::as_str), stopwords.iter().map(String::as_str)))
}

/// Normalization, tokenizer and frozen backbone: everything that turns text
/// into a pooled embedding.
struct TextModel {
    rules: NormalizationRules,
    tokenizer: Tokenizer,
    port: Arc<dyn EmbeddingPort>,
    pooling: Pooling,
}

impl TextModel {
    fn load(m: &ModelArgs) -> Result<Self> {
        let family = m.family();
        let manifest_path = m.artifact(&m.backbone, "backbone.json")?;
        let port = PortManifest::load(&manifest_path)?.backbone()?;
        let tokenizer = build_tokenizer(family, &vocab_files(m)?)?;
        let rules = normalization_rules(
            optional_artifact(m, &m.headers, "headers.txt"),
            optional_artifact(m, &m.stopwords, "stopwords.txt"),
        )?;
        Ok(Self {
            rules,
            tokenizer,
            port,
            pooling: m.pooling.unwrap_or_else(|| Pooling::default_for(family)),
        })
    }

    fn embed(&self, records: &[SectionRecord]) -> Result<Vec<LabeledEmbedding>> {
        let texts: Vec<&str> = records
            .iter()
            .map(|r| r.normalized_text.as_deref().unwrap_or(&r.text))
            .collect();
        let xs = embed_texts(&texts, &self.rules, &self.tokenizer, self.port.as_ref(), self.pooling)?;
        Ok(xs
            .into_iter()
            .zip(records)
            .map(|(x, r)| LabeledEmbedding { x, label: r.label })
            .collect())
    }

    fn classifier(self, head: ClassifierHead) -> Result<Classifier> {
        Ok(Classifier::new(self.rules, self.tokenizer, self.port, self.pooling, head)?)
    }
}

fn split_command(command: &str) -> Result<(String, Vec<String>)> {
    let mut parts = command.split_whitespace().map(String::from);
    let program = parts.next().context("empty command")?;
    Ok((program, parts.collect()))
}

pub fn parse(a: ParseArgs, global: Global) -> Result<ExitCode> {
    let m = &a.model;
    let family = m.family();
    let vocab = vocab_files(m)?;
    let mut config = PipelineConfig::with_root(m.root().unwrap_or_default(), family);
    config.detector = m.artifact(&a.detector, "detector.json")?;
    config.recognizer = m.artifact(&a.recognizer, "recognizer.json")?;
    config.backbone = m.artifact(&m.backbone, "backbone.json")?;
    config.head = m.artifact(&a.head, "head.bin")?;
    config.charset = m.artifact(&a.charset, "charset.txt")?;
    config.vocab = vocab.vocab;
    config.merges = vocab.merges;
    config.headers = optional_artifact(m, &m.headers, "headers.txt");
    config.stopwords = optional_artifact(m, &m.stopwords, "stopwords.txt");
    config.pooling = m.pooling;
    config.conf_threshold = a.conf.unwrap_or(config.conf_threshold);
    config.iou_threshold = a.iou.unwrap_or(config.iou_threshold);
    config.dpi = a.dpi.unwrap_or(config.dpi);
    config.crop_margin = a.crop_margin.unwrap_or(config.crop_margin);
    config.seed = a.seed.unwrap_or(config.seed);
    config.prefer_mined = a.prefer_mined;
    config.merge_labels = a.merge_labels;

    let renderer = match &a.pdf_renderer {
        Some(cmd) => {
            let (program, args) = split_command(cmd)?;
            ExternalRenderer { program, args }
        }
        None => ExternalRenderer::pdftoppm(),
    };
    let mut pipeline = Pipeline::load(config)?.with_renderer(Arc::new(renderer));
    if let Some(cmd) = &a.doc_miner {
        pipeline = pipeline.with_doc_miner(Arc::new(ExternalTextMiner::from_command(cmd)?));
    }

    let timestamp =
        (!global.deterministic).then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    let results: Vec<resume_ie::Result<ResumeExtraction>> = a
        .inputs
        .par_iter()
        .map(|path| {
            let mut doc = pipeline.run(path)?;
            doc.pipeline_meta.timestamp = timestamp.clone();
            Ok(doc)
        })
        .collect();

    let mut docs = Vec::new();
    let mut failed = 0;
    for (path, result) in a.inputs.iter().zip(results) {
        match result {
            Ok(doc) => {
                doc.validate()?;
                log::info!("{}: {} sections", path.display(), doc.sections.len());
                docs.push(doc);
            }
            Err(e) => {
                failed += 1;
                eprintln!("error: {}: {e}", path.display());
            }
        }
    }

    match &a.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for doc in &docs {
                let path = dir.join(format!("{}.json", doc.document_id));
                emit(Some(&path), &(doc.to_json() + "\n"))?;
            }
        }
        None if a.inputs.len() == 1 => {
            if let Some(doc) = docs.first() {
                emit(None, &(doc.to_json() + "\n"))?;
            }
        }
        None => emit(None, &to_json(&docs)?)?,
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    model: &'a Path,
    train_records: usize,
    val_records: usize,
    epochs: usize,
    best_epoch: usize,
    best_val_f1_macro: f64,
    best_val_loss: f64,
    stopped_early: bool,
}

pub fn train_head(a: TrainArgs) -> Result<()> {
    let output = require(&a.output, "model")?;
    let records = load_text_dataset(require(&a.train, "train")?)?;
    let seed = a.seed.unwrap_or(0);
    let (train, val) = match &a.val {
        Some(path) => (records, load_text_dataset(path)?),
        None => {
            let split = split_by_person(&records, SplitRatios::default(), seed)?;
            let (train, val, test) = split.apply(&records);
            log::warn!(
                "no --val given: using a person split of the training file ({} train, {} val, {} held out)",
                train.len(),
                val.len(),
                test.len()
            );
            (train, val)
        }
    };

    let defaults = TrainConfig::default();
    let config = TrainConfig {
        adam: AdamConfig {
            lr: a.lr.unwrap_or(defaults.adam.lr),
            ..defaults.adam
        },
        batch_size: a.batch.unwrap_or(defaults.batch_size),
        max_epochs: a.max_epochs.unwrap_or(defaults.max_epochs),
        patience: a.patience.unwrap_or(defaults.patience),
        hidden_dim: a.hidden.unwrap_or(defaults.hidden_dim),
        dropout: a.dropout.unwrap_or(defaults.dropout),
        seed,
    };
    config.validate()?;

    let model = TextModel::load(&a.model)?;
    let train_x = model.embed(&train)?;
    let val_x = model.embed(&val)?;
    let (head, history) = fit_head(&train_x, &val_x, &config)?;
    for e in &history.epochs {
        log::info!(
            "epoch {:>3}  train loss {:.4}  val loss {:.4}  val F1-macro {:.4}",
            e.epoch,
            e.train_loss,
            e.val_loss,
            e.val_f1_macro
        );
    }
    head.save(&output)?;
    if let Some(path) = &a.history {
        emit(Some(path), &to_json(&history)?)?;
    }
    let best = history.best();
    emit(
        None,
        &to_json(&TrainSummary {
            model: &output,
            train_records: train.len(),
            val_records: val.len(),
            epochs: history.epochs.len(),
            best_epoch: history.best_epoch,
            best_val_f1_macro: best.val_f1_macro,
            best_val_loss: best.val_loss,
            stopped_early: history.stopped_early,
        })?,
    )
}

pub fn eval_text(a: EvalTextArgs) -> Result<()> {
    let gold = load_text_dataset(require(&a.data, "data")?)?;
    let predicted: Vec<ClassLabel> = match (&a.predictions, &a.head) {
        (Some(path), _) => {
            let preds: HashMap<String, ClassLabel> = load_text_dataset(path)?
                .into_iter()
                .map(|r| (r.record_id, r.label))
                .collect();
            gold.iter()
                .map(|r| {
                    preds
                        .get(&r.record_id)
                        .copied()
                        .with_context(|| format!("no prediction for record {}", r.record_id))
                })
                .collect::<Result<_>>()?
        }
        (None, Some(head)) => {
            let classifier = TextModel::load(&a.model)?.classifier(ClassifierHead::load(head)?)?;
            gold.par_iter()
                .map(|r| Ok(classifier.predict(r.normalized_text.as_deref().unwrap_or(&r.text))?.label))
                .collect::<Result<_>>()?
        }
        (None, None) => bail!("pass --predictions or --head"),
    };
    let truth: Vec<usize> = gold.iter().map(|r| r.label.id()).collect();
    let pred: Vec<usize> = predicted.iter().map(|l| l.id()).collect();
    let cm = confusion(&truth, &pred, NUM_CLASSES)?;
    let report = TextEvalReport {
        classes: ClassLabel::ALL.to_vec(),
        records: gold.len(),
        report: f1_report(&cm)?,
        confusion: cm.rows(),
    };
    emit(a.output.as_deref(), &to_json(&report)?)
}

pub fn eval_detect(a: EvalDetectArgs) -> Result<()> {
    let preds = load_detections(require(&a.predictions, "predictions")?)?;
    let gt = match (&a.labels, &a.ground_truth) {
        (Some(dir), _) => load_yolo_label_dir(dir)?,
        (None, Some(file)) => load_ground_truth(file)?,
        (None, None) => bail!("pass --labels or --ground-truth"),
    };
    let eval = map_eval(&preds, &gt)?;
    emit(a.output.as_deref(), &to_json(&eval)?)
}

fn parse_mix(text: &str) -> Result<[f64; 5]> {
    let weights: Vec<f64> = text
        .split(',')
        .map(|w| w.trim().parse::<f64>().with_context(|| format!("bad mix weight {w:?}")))
        .collect::<Result<_>>()?;
    weights
        .try_into()
        .map_err(|w: Vec<f64>| anyhow::anyhow!("--mix needs 5 weights, got {}", w.len()))
}

pub fn augment(a: AugmentArgs) -> Result<()> {
    let mut records = load_text_dataset(require(&a.input, "input")?)?;
    if !a.augment_raw {
        let rules = normalization_rules(a.headers.clone(), a.stopwords.clone())?;
        for r in &mut records {
            let normalized = r.normalized_text.take().unwrap_or_else(|| rules.normalize(&r.text));
            if normalized.is_empty() {
                log::warn!("record {} is empty after normalization, augmenting its raw text", r.record_id);
                continue;
            }
            r.text = normalized.clone();
            r.normalized_text = Some(normalized);
        }
    }
    let similarity = a.similarity.as_ref().map(SimilarityTable::load).transpose()?;
    let translator = a.translator.as_ref().map(DictionaryTranslator::load).transpose()?;
    let mix = match &a.mix {
        Some(text) => parse_mix(text)?,
        None => [
            1.0,
            1.0,
            1.0,
            if similarity.is_some() { 1.0 } else { 0.0 },
            if translator.is_some() { 1.0 } else { 0.0 },
        ],
    };
    for (strategy, needs, present) in [
        (Strategy::ContextualSubstitute, "--similarity", similarity.is_some()),
        (Strategy::BackTranslate, "--translator", translator.is_some()),
    ] {
        let idx = Strategy::ALL.iter().position(|s| *s == strategy).expect("strategy listed");
        if mix[idx] > 0.0 && !present {
            bail!("{} has weight {} but {needs} was not given", strategy.name(), mix[idx]);
        }
    }
    let defaults = AugmentPlan::default();
    let plan = AugmentPlan {
        factor: a.factor.unwrap_or(defaults.factor),
        strategy_mix: mix,
        seed: a.seed.unwrap_or(defaults.seed),
        rates: AugmentRates {
            char_rate: a.char_rate.unwrap_or(defaults.rates.char_rate),
            insert_rate: a.insert_rate.unwrap_or(defaults.rates.insert_rate),
            contextual_rate: a.contextual_rate.unwrap_or(defaults.rates.contextual_rate),
        },
    };
    plan.validate()?;

    let mut augmenter = Augmenter::new(plan, build_vocabulary(&records));
    if let Some(t) = &similarity {
        augmenter = augmenter.with_similarity(t);
    }
    if let Some(t) = &translator {
        augmenter = augmenter.with_translator(t);
    }
    let out = augmenter.augment_dataset_par(&records)?;
    log::info!("class counts {:?} -> {:?}", class_counts(&records), class_counts(&out));
    match &a.output {
        Some(path) => save_text_dataset(path, &out)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            write_text_dataset(&mut stdout, &out)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SplitSummary {
    seed: u64,
    persons: [usize; 3],
    records: [usize; 3],
}

pub fn split(a: SplitArgs) -> Result<()> {
    let records = load_text_dataset(require(&a.input, "input")?)?;
    let defaults = SplitRatios::default();
    let ratios = SplitRatios {
        train: a.train.unwrap_or(defaults.train),
        val: a.val.unwrap_or(defaults.val),
        test: a.test.unwrap_or(defaults.test),
    };
    match a.by.unwrap_or_default() {
        SplitKey::Person => {}
    }
    let seed = a.seed.unwrap_or(0);
    let assignment = split_by_person(&records, ratios, seed)?;
    let (train, val, test) = assignment.apply(&records);
    match &a.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
                save_text_dataset(dir.join(format!("{name}.jsonl")), part)?;
            }
            emit(Some(&dir.join("split.json")), &to_json(&assignment)?)?;
            emit(
                None,
                &to_json(&SplitSummary {
                    seed,
                    persons: assignment.person_counts(),
                    records: [train.len(), val.len(), test.len()],
                })?,
            )
        }
        None => emit(None, &to_json(&assignment)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_needs_five_weights() {
        assert_eq!(parse_mix("1, 0,2,0,0.5").unwrap(), [1.0, 0.0, 2.0, 0.0, 0.5]);
        assert!(parse_mix("1,1").is_err());
        assert!(parse_mix("1,1,x,1,1").is_err());
    }

    #[test]
    fn renderer_command_splits_on_whitespace() {
        let (program, args) = split_command("mutool draw -r {dpi} -o {output}-%d.png {input}").unwrap();
        assert_eq!(program, "mutool");
        assert_eq!(args.len(), 6);
        assert!(split_command("  ").is_err());
    }
}
