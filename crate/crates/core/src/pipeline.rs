//! Config-driven experiment pipeline: transform, extract, train parsers,
//! train CBOW, extract vectors, train probes, report. Every stage writes
//! plain files under the output directory and leaves a stamp, so a rerun
//! picks up where the last one stopped.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::cbow::{train_cbow, CbowConfig, CbowError, EmbeddingTable};
use crate::conllu::{read_conllu_file, serialize_conllu, ConlluError, Sentence};
use crate::numeric::AdamConfig;
use crate::parser::{
    evaluate_las, load_model, model_to_bytes, parse_treebank, render_log, train_parser, ModelConfig, ParserError,
    TrainConfig,
};
use crate::probe::{
    cell_seed, extract_vectors, parse_probe_report, render_probe_report, run_probe, shuffle_labels, Layer, ProbeConfig,
    ProbeError, ProbeKind, ProbeResult, Split, Target, VectorSet, VectorSource,
};
use crate::stats::{build_results, render, Format, RenderOptions, SdKind, Sidedness, StatsError};
use crate::treebank::{
    build_task_dataset, read_instances, transform_treebank, write_instances, ExtractionOptions, ReattachPolicy,
    Representation, TargetKind, Task, TreebankError, CATALAN_AUX_LEMMAS,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),

    #[error("stage `{stage}` needs stage `{missing}` to have run")]
    Dependency { stage: Stage, missing: Stage },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {source}", path.display())]
    Conllu {
        path: PathBuf,
        #[source]
        source: ConlluError,
    },

    #[error(transparent)]
    Treebank(#[from] TreebankError),

    #[error(transparent)]
    Parser(#[from] ParserError),

    #[error(transparent)]
    Probe(#[from] ProbeError),

    #[error(transparent)]
    Cbow(#[from] CbowError),

    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn read_file(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

pub fn read_treebank(path: &Path) -> Result<Vec<Sentence>, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Usage(format!("no such treebank file: {}", path.display())));
    }
    read_conllu_file(path, true).map_err(|source| PipelineError::Conllu {
        path: path.to_owned(),
        source,
    })
}

/// Every knob of a run. Text form is one `key=value` per line; `#` starts
/// a comment.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Language or treebank name used in reports.
    pub treebank: String,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub out: PathBuf,
    pub repr: Representation,
    /// Also train and probe a recursive parser.
    pub recursive: bool,
    pub seed: u64,
    pub model: ModelConfig,
    pub parser: TrainConfig,
    pub cbow: CbowConfig,
    pub probe: ProbeConfig,
    pub classifiers: Vec<ProbeKind>,
    pub null_control: bool,
    /// `none`, `catalan` or a comma-separated lemma list.
    pub aux_lemmas: String,
    pub fmv_reject_aux_heads: bool,
    pub reattach: ReattachPolicy,
    pub sd: SdKind,
    pub significance: Sidedness,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            treebank: "treebank".to_owned(),
            train: None,
            dev: None,
            out: PathBuf::from("out"),
            repr: Representation::Ud,
            recursive: false,
            seed: 1,
            model: ModelConfig::default(),
            parser: TrainConfig::default(),
            cbow: CbowConfig::default(),
            probe: ProbeConfig::default(),
            classifiers: vec![ProbeKind::Mlp1, ProbeKind::Linear],
            null_control: true,
            aux_lemmas: "none".to_owned(),
            fmv_reject_aux_heads: true,
            reattach: ReattachPolicy::NearestRight,
            sd: SdKind::Sample,
            significance: Sidedness::Greater,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| PipelineError::Usage(format!("bad value `{}` for `{}`", value, key)))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let v = value.trim();
        match key.trim() {
            "treebank" => self.treebank = v.to_owned(),
            "train" => self.train = (!v.is_empty()).then(|| PathBuf::from(v)),
            "dev" => self.dev = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "repr" => self.repr = v.parse()?,
            "recursive" => self.recursive = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "word_dim" => self.model.word_dim = parse(key, v)?,
            "char_dim" => self.model.char_dim = parse(key, v)?,
            "char_hidden" => self.model.char_hidden = parse(key, v)?,
            "lstm_hidden" => self.model.lstm_hidden = parse(key, v)?,
            "lstm_layers" => self.model.lstm_layers = parse(key, v)?,
            "mlp_hidden" => self.model.mlp_hidden = parse(key, v)?,
            "rel_dim" => self.model.rel_dim = parse(key, v)?,
            "forget_bias" => self.model.forget_bias = parse(key, v)?,
            "epochs" => self.parser.epochs = parse(key, v)?,
            "lr" => self.parser.adam.lr = parse(key, v)?,
            "exploration" => self.parser.exploration = parse(key, v)?,
            "word_dropout" => self.parser.word_dropout = parse(key, v)?,
            "include_punct" => self.parser.include_punct = parse(key, v)?,
            "cbow_dim" => self.cbow.dim = parse(key, v)?,
            "cbow_window" => self.cbow.window = parse(key, v)?,
            "cbow_min_count" => self.cbow.min_count = parse(key, v)?,
            "cbow_negatives" => self.cbow.negatives = parse(key, v)?,
            "cbow_epochs" => self.cbow.epochs = parse(key, v)?,
            "cbow_lr" => self.cbow.lr = parse(key, v)?,
            "probe_hidden" => self.probe.hidden = parse(key, v)?,
            "probe_epochs" => self.probe.epochs = parse(key, v)?,
            "probe_batch" => self.probe.batch = parse(key, v)?,
            "probe_lr" => self.probe.adam.lr = parse(key, v)?,
            "classifiers" => {
                self.classifiers = v
                    .split(',')
                    .map(|c| c.trim().parse())
                    .collect::<Result<_, _>>()?;
                if self.classifiers.is_empty() {
                    return Err(PipelineError::Usage("no classifiers".to_owned()));
                }
            }
            "null_control" => self.null_control = parse(key, v)?,
            "aux_lemmas" => self.aux_lemmas = v.to_owned(),
            "fmv_reject_aux_heads" => self.fmv_reject_aux_heads = parse(key, v)?,
            "reattach" => self.reattach = v.parse()?,
            "sd" => self.sd = v.parse()?,
            "significance" => self.significance = v.parse()?,
            other => return Err(PipelineError::Usage(format!("unknown config key `{}`", other))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Usage(format!("config line {}: expected key=value", i + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(String::new, |p| p.display().to_string());
        let sd = match self.sd {
            SdKind::Sample => "sample",
            SdKind::Population => "population",
        };
        let sig = match self.significance {
            Sidedness::TwoSided => "two-sided",
            Sidedness::Greater => "greater",
        };
        let classifiers: Vec<String> = self.classifiers.iter().map(ToString::to_string).collect();
        let entries: Vec<(&str, String)> = vec![
            ("treebank", self.treebank.clone()),
            ("train", path(&self.train)),
            ("dev", path(&self.dev)),
            ("out", self.out.display().to_string()),
            ("repr", self.repr.to_string()),
            ("recursive", self.recursive.to_string()),
            ("seed", self.seed.to_string()),
            ("word_dim", self.model.word_dim.to_string()),
            ("char_dim", self.model.char_dim.to_string()),
            ("char_hidden", self.model.char_hidden.to_string()),
            ("lstm_hidden", self.model.lstm_hidden.to_string()),
            ("lstm_layers", self.model.lstm_layers.to_string()),
            ("mlp_hidden", self.model.mlp_hidden.to_string()),
            ("rel_dim", self.model.rel_dim.to_string()),
            ("forget_bias", self.model.forget_bias.to_string()),
            ("epochs", self.parser.epochs.to_string()),
            ("lr", self.parser.adam.lr.to_string()),
            ("exploration", self.parser.exploration.to_string()),
            ("word_dropout", self.parser.word_dropout.to_string()),
            ("include_punct", self.parser.include_punct.to_string()),
            ("cbow_dim", self.cbow.dim.to_string()),
            ("cbow_window", self.cbow.window.to_string()),
            ("cbow_min_count", self.cbow.min_count.to_string()),
            ("cbow_negatives", self.cbow.negatives.to_string()),
            ("cbow_epochs", self.cbow.epochs.to_string()),
            ("cbow_lr", self.cbow.lr.to_string()),
            ("probe_hidden", self.probe.hidden.to_string()),
            ("probe_epochs", self.probe.epochs.to_string()),
            ("probe_batch", self.probe.batch.to_string()),
            ("probe_lr", self.probe.adam.lr.to_string()),
            ("classifiers", classifiers.join(",")),
            ("null_control", self.null_control.to_string()),
            ("aux_lemmas", self.aux_lemmas.clone()),
            ("fmv_reject_aux_heads", self.fmv_reject_aux_heads.to_string()),
            ("reattach", self.reattach.to_string()),
            ("sd", sd.to_owned()),
            ("significance", sig.to_owned()),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            writeln!(out, "{}={}", k, v).expect("writing to a string");
        }
        out
    }

    pub fn extraction(&self) -> ExtractionOptions {
        let opts = ExtractionOptions {
            fmv_reject_aux_heads: self.fmv_reject_aux_heads,
            reattach: self.reattach,
            ..ExtractionOptions::default()
        };
        match self.aux_lemmas.as_str() {
            "" | "none" => opts,
            "catalan" => opts.with_aux_lemmas(CATALAN_AUX_LEMMAS.iter().copied()),
            list => opts.with_aux_lemmas(list.split(',').map(|l| l.trim().to_owned())),
        }
    }

    /// Parser settings to train: always the plain one, plus the
    /// recursive one when enabled.
    pub fn settings(&self) -> Vec<(&'static str, bool)> {
        let mut s = vec![("bas", false)];
        if self.recursive {
            s.push(("rc", true));
        }
        s
    }

    fn probe_config(&self, kind: ProbeKind, seed: u64) -> ProbeConfig {
        ProbeConfig {
            kind,
            seed,
            adam: AdamConfig { ..self.probe.adam },
            ..self.probe.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Transform,
    Extract,
    TrainParser,
    Cbow,
    ExtractVectors,
    TrainProbe,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Transform,
        Stage::Extract,
        Stage::TrainParser,
        Stage::Cbow,
        Stage::ExtractVectors,
        Stage::TrainProbe,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Transform => "transform",
            Stage::Extract => "extract",
            Stage::TrainParser => "train-parser",
            Stage::Cbow => "cbow",
            Stage::ExtractVectors => "extract-vectors",
            Stage::TrainProbe => "train-probe",
            Stage::Report => "report",
        }
    }

    pub fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Transform => &[],
            Stage::Extract | Stage::TrainParser | Stage::Cbow => &[Stage::Transform],
            Stage::ExtractVectors => &[Stage::Extract, Stage::TrainParser, Stage::Cbow],
            Stage::TrainProbe => &[Stage::ExtractVectors],
            Stage::Report => &[Stage::TrainProbe],
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| PipelineError::Usage(format!("unknown stage `{}`", s)))
    }
}

/// Cap rayon's global pool at `NUCLEUS_PROBE_WORKERS` threads when set.
/// Returns the cap in effect.
pub fn init_workers() -> Result<Option<usize>, PipelineError> {
    let Ok(raw) = std::env::var("NUCLEUS_PROBE_WORKERS") else {
        return Ok(None);
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => {
            return Err(PipelineError::Usage(format!(
                "NUCLEUS_PROBE_WORKERS must be a positive integer, got `{}`",
                raw
            )))
        }
    };
    // A second call finds the pool already built; the first cap stays.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

/// Target kinds that exist under a representation.
pub fn target_kinds(repr: Representation) -> [TargetKind; 3] {
    match repr {
        Representation::Ud => [TargetKind::Fmv, TargetKind::Nfmv, TargetKind::Punct],
        Representation::Ms => [TargetKind::Fmv, TargetKind::Maux, TargetKind::Punct],
    }
}

/// Layers probed for a target kind under one parser setting.
pub fn layers_for(kind: TargetKind, setting: &str, recursive: bool) -> Vec<Layer> {
    let mut layers = match kind {
        TargetKind::Fmv => vec![Layer::Type, Layer::Char, Layer::Token],
        TargetKind::Punct => vec![Layer::Token],
        TargetKind::Nfmv | TargetKind::Maux => vec![Layer::Token],
    };
    if recursive && kind != TargetKind::Punct {
        layers.push(Layer::Composed);
    }
    if kind == TargetKind::Fmv && setting == "bas" {
        layers.push(Layer::W2v);
    }
    layers
}

/// File layout of one output directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }
    pub fn version(&self) -> PathBuf {
        self.root.join("VERSION")
    }
    pub fn stamp(&self, stage: Stage) -> PathBuf {
        self.root.join("stages").join(format!("{}.done", stage.name()))
    }
    pub fn treebank(&self, split: Split) -> PathBuf {
        self.root.join("treebank").join(format!("{}.conllu", split))
    }
    pub fn dataset(&self, task: Task, kind: TargetKind, split: Split) -> PathBuf {
        self.root.join("datasets").join(format!("{}-{}.{}.tsv", task, kind, split))
    }
    pub fn model(&self, setting: &str) -> PathBuf {
        self.root.join("models").join(format!("{}.model", setting))
    }
    pub fn train_log(&self, setting: &str) -> PathBuf {
        self.root.join("models").join(format!("{}.log.tsv", setting))
    }
    pub fn eval(&self, setting: &str) -> PathBuf {
        self.root.join("models").join(format!("{}.eval.tsv", setting))
    }
    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings").join("w2v.txt")
    }
    pub fn vectors(&self, setting: &str, task: Task, kind: TargetKind, layer: Layer, split: Split) -> PathBuf {
        self.root
            .join("vectors")
            .join(setting)
            .join(format!("{}-{}-{}.{}.vec", task, kind, layer, split))
    }
    pub fn probes(&self, setting: &str) -> PathBuf {
        self.root.join("reports").join(format!("probes-{}.tsv", setting))
    }
    pub fn null_probes(&self, setting: &str) -> PathBuf {
        self.root.join("reports").join(format!("null-{}.tsv", setting))
    }
    pub fn table(&self, classifier: ProbeKind, format: Format) -> PathBuf {
        let ext = match format {
            Format::Tsv => "tsv",
            Format::Markdown => "md",
        };
        self.root.join("reports").join(format!("table-{}.{}", classifier, ext))
    }
    pub fn diagnostics(&self) -> PathBuf {
        self.root.join("reports").join("diagnostics.txt")
    }
}

/// What a pipeline run did.
#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub ran: Vec<Stage>,
    pub skipped: Vec<Stage>,
    /// Report cells without a value, as `language: column`.
    pub missing_cells: Vec<String>,
}

pub struct Pipeline {
    pub config: RunConfig,
    pub layout: Layout,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Self {
        let layout = Layout {
            root: config.out.clone(),
        };
        Pipeline { config, layout }
    }

    /// Write the config echo, or check that an existing one matches.
    fn prepare(&self) -> Result<(), PipelineError> {
        let echo = self.config.to_text();
        let path = self.layout.config();
        if path.exists() {
            let old = read_file(&path)?;
            if old != echo {
                return Err(PipelineError::Usage(format!(
                    "{} holds outputs of a different configuration; use a fresh output directory",
                    self.layout.root.display()
                )));
            }
        } else {
            write_file(&path, echo)?;
        }
        write_file(&self.layout.version(), format!("nucleus {}\n", VERSION))
    }

    fn done(&self, stage: Stage) -> bool {
        self.layout.stamp(stage).exists()
    }

    /// Run every stage not yet stamped, or only `only` (whose
    /// prerequisites must be stamped).
    pub fn run(&self, only: Option<Stage>) -> Result<RunSummary, PipelineError> {
        self.prepare()?;
        let mut summary = RunSummary::default();
        let stages: Vec<Stage> = match only {
            Some(stage) => {
                if let Some(&missing) = stage.requires().iter().find(|&&r| !self.done(r)) {
                    return Err(PipelineError::Dependency { stage, missing });
                }
                vec![stage]
            }
            None => Stage::ALL.to_vec(),
        };
        for stage in stages {
            if only.is_none() && self.done(stage) {
                info!("stage {}: already done", stage);
                summary.skipped.push(stage);
                continue;
            }
            info!("stage {}", stage);
            match stage {
                Stage::Transform => self.transform()?,
                Stage::Extract => self.extract()?,
                Stage::TrainParser => self.train_parsers()?,
                Stage::Cbow => self.cbow()?,
                Stage::ExtractVectors => self.extract_vectors()?,
                Stage::TrainProbe => self.train_probes()?,
                Stage::Report => summary.missing_cells = self.report()?,
            }
            write_file(&self.layout.stamp(stage), "")?;
            summary.ran.push(stage);
        }
        if stages_all_done(self) {
            info!("all stages done in {}", self.layout.root.display());
        }
        Ok(summary)
    }

    fn input(&self, split: Split) -> Result<&Path, PipelineError> {
        let p = match split {
            Split::Train => &self.config.train,
            Split::Dev => &self.config.dev,
        };
        p.as_deref()
            .ok_or_else(|| PipelineError::Usage(format!("no {} treebank configured", split)))
    }

    fn treebank(&self, split: Split) -> Result<Vec<Sentence>, PipelineError> {
        read_treebank(&self.layout.treebank(split))
    }

    fn transform(&self) -> Result<(), PipelineError> {
        let opts = self.config.extraction();
        for split in [Split::Train, Split::Dev] {
            let tb = read_treebank(self.input(split)?)?;
            let tb = match self.config.repr {
                Representation::Ud => tb,
                Representation::Ms => transform_treebank(&tb, &opts)?,
            };
            write_file(&self.layout.treebank(split), serialize_conllu(&tb))?;
        }
        Ok(())
    }

    fn extract(&self) -> Result<(), PipelineError> {
        let (train, dev) = (self.treebank(Split::Train)?, self.treebank(Split::Dev)?);
        let opts = self.config.extraction();
        for task in Task::ALL {
            for kind in target_kinds(self.config.repr) {
                let ds = build_task_dataset(&train, &dev, task, kind, self.config.repr, &opts)?;
                for (split, insts) in [(Split::Train, &ds.train), (Split::Dev, &ds.dev)] {
                    let mut buf = Vec::new();
                    write_instances(&mut buf, insts, task).map_err(io_err(&self.layout.dataset(task, kind, split)))?;
                    write_file(&self.layout.dataset(task, kind, split), buf)?;
                }
            }
        }
        Ok(())
    }

    fn train_parsers(&self) -> Result<(), PipelineError> {
        let (train, dev) = (self.treebank(Split::Train)?, self.treebank(Split::Dev)?);
        for (setting, recursive) in self.config.settings() {
            let model_cfg = ModelConfig {
                recursive,
                ..self.config.model.clone()
            };
            let train_cfg = TrainConfig {
                seed: self.config.seed,
                ..self.config.parser.clone()
            };
            let trained = train_parser(&train, &dev, model_cfg, &train_cfg, |e| info!("{} epoch {}", setting, e))?;
            let path = self.layout.model(setting);
            write_file(&path, model_to_bytes(&trained.model))?;
            write_file(&self.layout.train_log(setting), render_log(&trained.log))?;
            let pred = parse_treebank(&trained.model, &dev)?;
            let eval = evaluate_las(&dev, &pred, self.config.parser.include_punct)?;
            write_file(
                &self.layout.eval(setting),
                format!("best_epoch\t{}\n{}", trained.best_epoch, eval),
            )?;
        }
        Ok(())
    }

    fn cbow(&self) -> Result<(), PipelineError> {
        let train = self.treebank(Split::Train)?;
        let corpus: Vec<Vec<String>> = train
            .iter()
            .map(|s| s.tokens.iter().map(|t| t.form.clone()).collect())
            .collect();
        let cfg = CbowConfig {
            seed: self.config.seed,
            ..self.config.cbow.clone()
        };
        let out = train_cbow(&corpus, &cfg)?;
        write_file(&self.layout.embeddings(), out.table.to_text())
    }

    fn extract_vectors(&self) -> Result<(), PipelineError> {
        let tbs = [self.treebank(Split::Train)?, self.treebank(Split::Dev)?];
        let table = EmbeddingTable::from_text(&read_file(&self.layout.embeddings())?)?;
        for (setting, recursive) in self.config.settings() {
            let model = load_model(self.layout.model(setting))?;
            let src = VectorSource {
                model: &model,
                embeddings: Some(&table),
            };
            for task in Task::ALL {
                for kind in target_kinds(self.config.repr) {
                    for (si, split) in [Split::Train, Split::Dev].into_iter().enumerate() {
                        let rows = read_instances(&read_file(&self.layout.dataset(task, kind, split))?)?;
                        let targets: Vec<Target> = rows.iter().map(Target::from).collect();
                        for layer in layers_for(kind, setting, recursive) {
                            let set = extract_vectors(&src, &tbs[si], &targets, task, layer, kind, split)?;
                            write_file(&self.layout.vectors(setting, task, kind, layer, split), set.to_text())?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn train_probes(&self) -> Result<(), PipelineError> {
        for (setting, recursive) in self.config.settings() {
            let mut cells = Vec::new();
            for task in Task::ALL {
                for kind in target_kinds(self.config.repr) {
                    for layer in layers_for(kind, setting, recursive) {
                        cells.push((task, kind, layer));
                    }
                }
            }
            let load = |task, kind, layer, split| -> Result<VectorSet, PipelineError> {
                let path = self.layout.vectors(setting, task, kind, layer, split);
                Ok(VectorSet::from_text(&read_file(&path)?)?)
            };
            let results: Vec<(Vec<ProbeResult>, Option<ProbeResult>)> = cells
                .par_iter()
                .map(|&(task, kind, layer)| -> Result<_, PipelineError> {
                    let train = load(task, kind, layer, Split::Train)?;
                    let dev = load(task, kind, layer, Split::Dev)?;
                    let key = format!("{}/{}/{}/{}", setting, task, kind, layer);
                    let mut out = Vec::new();
                    for &classifier in &self.config.classifiers {
                        let seed = cell_seed(self.config.seed, &format!("{}/{}", key, classifier));
                        out.push(run_probe(&train, &dev, &self.config.probe_config(classifier, seed))?);
                    }
                    let null = if self.config.null_control {
                        let seed = cell_seed(self.config.seed, &format!("{}/null", key));
                        let shuffled = shuffle_labels(&train, seed);
                        Some(run_probe(&shuffled, &dev, &self.config.probe_config(ProbeKind::Mlp1, seed))?)
                    } else {
                        None
                    };
                    Ok((out, null))
                })
                .collect::<Result<_, _>>()?;
            let (real, null): (Vec<_>, Vec<_>) = results.into_iter().unzip();
            let real: Vec<ProbeResult> = real.into_iter().flatten().collect();
            let null: Vec<ProbeResult> = null.into_iter().flatten().collect();
            write_file(&self.layout.probes(setting), render_probe_report(&real))?;
            if self.config.null_control {
                write_file(&self.layout.null_probes(setting), render_probe_report(&null))?;
            }
        }
        Ok(())
    }

    /// Returns the cells that have no value.
    fn report(&self) -> Result<Vec<String>, PipelineError> {
        let mut reports = Vec::new();
        for (setting, _) in self.config.settings() {
            let results = parse_probe_report(&read_file(&self.layout.probes(setting))?)?;
            reports.push((self.config.treebank.clone(), setting.to_owned(), results));
        }
        let mut missing = Vec::new();
        for &classifier in &self.config.classifiers {
            let matrix = build_results(&reports, classifier);
            for format in [Format::Tsv, Format::Markdown] {
                let opts = RenderOptions {
                    format,
                    sd: self.config.sd,
                    sidedness: self.config.significance,
                };
                write_file(&self.layout.table(classifier, format), render(&matrix, &opts))?;
            }
            for (lang, key) in matrix.missing() {
                let cell = format!("{} {}: {} {}", classifier, lang, key.task, key);
                warn!("missing report cell {}", cell);
                missing.push(cell);
            }
        }
        write_file(&self.layout.diagnostics(), self.diagnostics(&reports)?)?;
        Ok(missing)
    }

    /// Sign agreement between classifiers and null-control gaps.
    fn diagnostics(&self, reports: &[(String, String, Vec<ProbeResult>)]) -> Result<String, PipelineError> {
        let mut out = String::new();
        let (mut agree, mut total) = (0, 0);
        for (_, _, results) in reports {
            for mlp in results.iter().filter(|r| r.classifier == ProbeKind::Mlp1) {
                let linear = results.iter().find(|r| {
                    r.classifier == ProbeKind::Linear && (r.task, r.kind, r.layer) == (mlp.task, mlp.kind, mlp.layer)
                });
                if let (Some(a), Some(b)) = (mlp.delta(), linear.and_then(ProbeResult::delta)) {
                    total += 1;
                    agree += (a.signum() == b.signum() || a.abs() < 0.05 && b.abs() < 0.05) as usize;
                }
            }
        }
        if total > 0 {
            writeln!(
                out,
                "mlp1/linear delta sign agreement\t{}/{}\t{:.1}%",
                agree,
                total,
                100.0 * agree as f64 / total as f64
            )
            .expect("writing to a string");
        }
        if self.config.null_control {
            // shuffled labels should leave a probe within 5 points of the
            // majority baseline; small datasets often miss that
            writeln!(out, "null control\tsetting\ttask\ttarget\tlayer\tgap_to_majority\twithin_5")
                .expect("writing to a string");
            for (setting, _) in self.config.settings() {
                let null = parse_probe_report(&read_file(&self.layout.null_probes(setting))?)?;
                for r in null {
                    let (gap, within) = match r.delta() {
                        Some(d) => (format!("{:.1}", d), if d.abs() <= 5.0 { "yes" } else { "no" }),
                        None => ("-".to_owned(), "-"),
                    };
                    writeln!(out, "null control\t{}\t{}\t{}\t{}\t{}\t{}", setting, r.task, r.kind, r.layer, gap, within)
                        .expect("writing to a string");
                }
            }
        }
        Ok(out)
    }
}

fn stages_all_done(p: &Pipeline) -> bool {
    Stage::ALL.iter().all(|&s| p.done(s))
}
