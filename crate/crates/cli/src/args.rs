use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use resume_ie::classify::Pooling;
use resume_ie::tokenizers::ModelFamily;

pub const MODEL_DIR_ENV: &str = "RESUME_IE_MODEL_DIR";

#[derive(Debug, Parser)]
#[command(name = "resume-ie", version, about = "Resume section extraction and head training tools")]
pub struct Cli {
    /// TOML file with defaults for any flag below.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Omit run timestamps so equal inputs give byte-identical output.
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract labeled sections from resume documents.
    Parse(ParseArgs),
    /// Train a classification head on frozen backbone embeddings.
    TrainHead(TrainArgs),
    /// Score section predictions against gold labels.
    EvalText(EvalTextArgs),
    /// Compute per-class AP and mAP for detector output.
    EvalDetect(EvalDetectArgs),
    /// Grow a text dataset with label-preserving copies.
    Augment(AugmentArgs),
    /// Person-disjoint train/val/test split of a text dataset.
    Split(SplitArgs),
    /// Render an extraction or evaluation document as a table.
    ExportReport(ReportArgs),
}

/// Backbone, tokenizer and normalization artifacts.
#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModelArgs {
    /// Artifact directory with the conventional file names
    /// [env: RESUME_IE_MODEL_DIR].
    #[arg(long, value_name = "DIR")]
    pub model_dir: Option<PathBuf>,
    /// Backbone family, selects the tokenizer [default: distilbert].
    #[arg(long)]
    pub tokenizer: Option<ModelFamily>,
    /// Pooling of hidden states [default: cls, last for xlnet].
    #[arg(long)]
    pub pooling: Option<Pooling>,
    #[arg(long, value_name = "FILE")]
    pub backbone: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub merges: Option<PathBuf>,
    /// Header lexicon, one entry per line.
    #[arg(long, value_name = "FILE")]
    pub headers: Option<PathBuf>,
    /// Stopword list, one entry per line.
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ParseArgs {
    /// PNG, JPEG, PDF or DOC files.
    #[arg(required = true, value_name = "DOCUMENT")]
    #[serde(skip)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub model: ModelArgs,
    #[arg(long, value_name = "FILE")]
    pub detector: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub recognizer: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub charset: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub head: Option<PathBuf>,
    /// Detection confidence threshold [default: 0.25].
    #[arg(long)]
    pub conf: Option<f64>,
    /// NMS IoU threshold [default: 0.45].
    #[arg(long)]
    pub iou: Option<f64>,
    /// Rasterization resolution for paged documents [default: 150].
    #[arg(long)]
    pub dpi: Option<u32>,
    /// Canvas pixels added around each region before recognition [default: 2].
    #[arg(long)]
    pub crop_margin: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the embedded text layer of PDF/DOC files when present.
    #[arg(long)]
    pub prefer_mined: bool,
    /// Join consecutive sections with the same label.
    #[arg(long)]
    pub merge_labels: bool,
    /// PDF rasterizer command; `{input}`, `{output}` and `{dpi}` are
    /// substituted [default: pdftoppm -r {dpi} -png {input} {output}].
    #[arg(long, value_name = "COMMAND")]
    pub pdf_renderer: Option<String>,
    /// Command printing the text of a word document, e.g. "antiword".
    #[arg(long, value_name = "COMMAND")]
    pub doc_miner: Option<String>,
    /// Write one `<document id>.json` per input here instead of stdout.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub model: ModelArgs,
    /// Training records (JSON lines).
    #[arg(long, value_name = "FILE")]
    pub train: Option<PathBuf>,
    /// Validation records; split off the training file by person if absent.
    #[arg(long, value_name = "FILE")]
    pub val: Option<PathBuf>,
    /// Where to write the trained head.
    #[arg(long = "model", value_name = "FILE")]
    #[serde(rename = "model")]
    pub output: Option<PathBuf>,
    /// Per-epoch losses and scores as JSON.
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvalTextArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub model: ModelArgs,
    /// Gold records (JSON lines).
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Predicted records with the same ids; labels are compared.
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
    /// Predict with this head instead of reading predictions.
    #[arg(long, value_name = "FILE")]
    pub head: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvalDetectArgs {
    /// Lines of `image_id class score x1 y1 x2 y2`.
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
    /// Directory of per-image `class cx cy w h` files, normalized to the canvas.
    #[arg(long, value_name = "DIR", conflicts_with = "ground_truth")]
    pub labels: Option<PathBuf>,
    /// Lines of `image_id class x1 y1 x2 y2`; a bare `image_id` declares an
    /// image without boxes.
    #[arg(long, value_name = "FILE")]
    pub ground_truth: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct AugmentArgs {
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Output size as a multiple of the input, originals included [default: 3].
    #[arg(long)]
    pub factor: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated weights for char_delete, char_substitute,
    /// word_insert, contextual_substitute, back_translate
    /// [default: 1 for each strategy whose table is given].
    #[arg(long, value_name = "WEIGHTS")]
    pub mix: Option<String>,
    /// Tab-separated `word<TAB>neighbour…` table.
    #[arg(long, value_name = "FILE")]
    pub similarity: Option<PathBuf>,
    /// Tab-separated `source<TAB>pivot` phrase table.
    #[arg(long, value_name = "FILE")]
    pub translator: Option<PathBuf>,
    #[arg(long)]
    pub char_rate: Option<f64>,
    #[arg(long)]
    pub insert_rate: Option<f64>,
    #[arg(long)]
    pub contextual_rate: Option<f64>,
    /// Augment the raw text instead of normalizing it first.
    #[arg(long)]
    pub augment_raw: bool,
    /// Header lexicon used by normalization, one entry per line.
    #[arg(long, value_name = "FILE")]
    pub headers: Option<PathBuf>,
    /// Stopword list used by normalization, one entry per line.
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKey {
    #[default]
    Person,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SplitArgs {
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Receives train.jsonl, val.jsonl and test.jsonl.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<f64>,
    #[arg(long)]
    pub val: Option<f64>,
    #[arg(long)]
    pub test: Option<f64>,
    #[arg(long, value_enum)]
    pub by: Option<SplitKey>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Markdown,
    Tsv,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReportArgs {
    /// Output of parse, eval-text or eval-detect.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

/// Config file layout: global keys, a `[model]` table shared by every
/// command, and one table per subcommand keyed by its name. Relative paths
/// are resolved against the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub deterministic: Option<bool>,
    pub jobs: Option<usize>,
    pub model: ModelArgs,
    pub parse: ParseArgs,
    pub train_head: TrainArgs,
    pub eval_text: EvalTextArgs,
    pub eval_detect: EvalDetectArgs,
    pub augment: AugmentArgs,
    pub split: SplitArgs,
    pub export_report: ReportArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        self.model.rebase(base);
        self.parse.rebase(base);
        self.train_head.rebase(base);
        self.eval_text.rebase(base);
        self.eval_detect.rebase(base);
        self.augment.rebase(base);
        self.split.rebase(base);
        self.export_report.rebase(base);
    }
}

/// Command-line values win; file values fill the gaps. Paths from the file
/// are rebased once at load time.
pub trait Layered: Sized {
    fn rebase(&mut self, base: &Path);
    fn fill_from(&mut self, file: Self);
}

fn rebase_path(p: &mut Option<PathBuf>, base: &Path) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

macro_rules! layered {
    ($ty:ty { paths: [$($p:ident),*], values: [$($v:ident),*], flags: [$($f:ident),*] }) => {
        impl Layered for $ty {
            fn rebase(&mut self, _base: &Path) {
                $(rebase_path(&mut self.$p, _base);)*
            }

            fn fill_from(&mut self, _file: Self) {
                $(if self.$p.is_none() { self.$p = _file.$p; })*
                $(if self.$v.is_none() { self.$v = _file.$v; })*
                $(self.$f |= _file.$f;)*
            }
        }
    };
}

layered!(ModelArgs {
    paths: [model_dir, backbone, vocab, merges, headers, stopwords],
    values: [tokenizer, pooling],
    flags: []
});
layered!(ParseArgs {
    paths: [detector, recognizer, charset, head, out_dir],
    values: [conf, iou, dpi, crop_margin, seed, pdf_renderer, doc_miner],
    flags: [prefer_mined, merge_labels]
});
layered!(TrainArgs {
    paths: [train, val, output, history],
    values: [lr, batch, patience, max_epochs, hidden, dropout, seed],
    flags: []
});
layered!(EvalTextArgs {
    paths: [data, predictions, head, output],
    values: [],
    flags: []
});
layered!(EvalDetectArgs {
    paths: [predictions, labels, ground_truth, output],
    values: [],
    flags: []
});
layered!(AugmentArgs {
    paths: [input, output, similarity, translator, headers, stopwords],
    values: [factor, seed, mix, char_rate, insert_rate, contextual_rate],
    flags: [augment_raw]
});
layered!(SplitArgs {
    paths: [input, out_dir],
    values: [train, val, test, by, seed],
    flags: []
});
layered!(ReportArgs {
    paths: [input, output],
    values: [format],
    flags: []
});

impl ModelArgs {
    /// Explicit directory, else the environment variable.
    pub fn root(&self) -> Option<PathBuf> {
        self.model_dir
            .clone()
            .or_else(|| std::env::var_os(MODEL_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
    }

    pub fn family(&self) -> ModelFamily {
        self.tokenizer.unwrap_or(ModelFamily::Distilbert)
    }

    /// `explicit`, else `name` under the artifact root.
    pub fn artifact(&self, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        match (explicit, self.root()) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(root)) => Ok(root.join(name)),
            (None, None) => bail!("no {name}: pass its path, --model-dir or set {MODEL_DIR_ENV}"),
        }
    }
}

pub fn require<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value.clone().with_context(|| format!("--{flag} is required (flag or config file)"))
}
