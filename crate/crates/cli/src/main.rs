//! `nucleus-probe`: train parsers on UD treebanks and probe what their
//! vectors know about auxiliary verb constructions.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use nucleus_core::cbow::{train_cbow, EmbeddingTable};
use nucleus_core::conllu::{serialize_conllu, Sentence};
use nucleus_core::parser::{evaluate_las, load_model, parse_treebank, render_log, save_model, train_parser};
use nucleus_core::pipeline::{
    init_workers, read_file, read_treebank, target_kinds, write_file, Pipeline, RunConfig, Stage,
};
use nucleus_core::probe::{
    cell_seed, extract_vectors, parse_probe_report, render_probe_report, run_probe, shuffle_labels, Layer, ProbeConfig,
    ProbeKind, Split, Target, VectorSet, VectorSource,
};
use nucleus_core::stats::{build_results, render, Format, RenderOptions};
use nucleus_core::treebank::{
    build_task_dataset, read_instances, transform_treebank, write_instances, Representation, Task,
};

#[derive(Parser)]
#[command(name = "nucleus-probe", version, about = "Parse, probe and report on auxiliary verb constructions")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. A `--config` file is read first;
/// flags override it.
#[derive(Args)]
struct Common {
    /// Line-oriented key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Training treebank (CoNLL-U).
    #[arg(long, global = true)]
    train: Option<PathBuf>,

    /// Development treebank (CoNLL-U).
    #[arg(long, global = true)]
    dev: Option<PathBuf>,

    /// Annotation style: ud or ms.
    #[arg(long, global = true)]
    repr: Option<String>,

    /// Compose auxiliary verb constructions while parsing.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    recursive: Option<bool>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Parser training epochs (default 30).
    #[arg(long, global = true)]
    epochs: Option<usize>,

    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Any other config key, e.g. `--set probe_epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_text(&read_file(path)?).with_context(|| format!("in {}", path.display()))?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{}`", kv))?;
            cfg.set(k, v)?;
        }
        if let Some(p) = &self.train {
            cfg.train = Some(p.clone());
        }
        if let Some(p) = &self.dev {
            cfg.dev = Some(p.clone());
        }
        if let Some(r) = &self.repr {
            cfg.set("repr", r)?;
        }
        if let Some(r) = self.recursive {
            cfg.recursive = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.parser.epochs = e;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        Ok(cfg)
    }

    fn out(&self) -> Result<&Path> {
        self.out.as_deref().context("--out is required")
    }
}

#[derive(Subcommand)]
enum Command {
    /// Convert a UD treebank to MS (auxiliaries head their verb chains).
    Transform {
        #[arg(long)]
        input: PathBuf,
    },
    /// Write probe datasets for every task and target into --out.
    Extract,
    /// Train a parser on --train, selecting epochs on --dev; writes the
    /// model to --out and the training log next to it.
    TrainParser,
    /// Parse a treebank with a trained model.
    Parse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Attachment scores of a predicted treebank.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Leave punctuation out of the scores.
        #[arg(long)]
        no_punct: bool,
    },
    /// Vectors of one layer for the targets of a dataset file.
    ExtractVectors {
        #[arg(long)]
        model: PathBuf,
        /// Treebank the dataset indexes into.
        #[arg(long)]
        input: PathBuf,
        /// Dataset file written by `extract`.
        #[arg(long)]
        instances: PathBuf,
        /// type, char, token, composed or w2v.
        #[arg(long)]
        layer: Layer,
        #[arg(long, default_value = "train")]
        split: Split,
        /// Embedding table for the w2v layer.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Train CBOW embeddings on the word forms of --train.
    Cbow,
    /// Train a probe on one vector file and test it on another.
    TrainProbe {
        #[arg(long)]
        train_vectors: PathBuf,
        #[arg(long)]
        dev_vectors: PathBuf,
        /// mlp1 or linear.
        #[arg(long, default_value = "mlp1")]
        classifier: ProbeKind,
        /// Train on shuffled labels instead (control task).
        #[arg(long)]
        null: bool,
    },
    /// Summary tables from probe reports. Exits nonzero if a cell is missing.
    Report {
        /// LANGUAGE:SETTING=FILE, e.g. `hr:bas=probes.tsv`. Repeatable.
        #[arg(long = "probes", required = true)]
        probes: Vec<String>,
        #[arg(long, default_value = "mlp1")]
        classifier: ProbeKind,
        /// tsv or markdown.
        #[arg(long, default_value = "tsv")]
        format: Format,
    },
    /// Run every stage into --out, resuming from what is already there.
    Pipeline {
        /// Name used in reports, or a UD directory holding
        /// `*-ud-train.conllu` and `*-ud-dev.conllu`.
        #[arg(long)]
        treebank: Option<String>,
        /// Run just this stage; its prerequisites must be done.
        #[arg(long)]
        only: Option<Stage>,
    },
}

fn find_split(dir: &Path, suffix: &str) -> Result<Option<PathBuf>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)) {
            found.push(path);
        }
    }
    found.sort();
    Ok(found.into_iter().next())
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => Ok(write_file(path, text)?),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    init_workers()?;
    let common = &cli.common;
    let mut cfg = common.run_config()?;
    match cli.command {
        Command::Transform { input } => {
            let tb = read_treebank(&input)?;
            let ms = transform_treebank(&tb, &cfg.extraction()).with_context(|| format!("{}", input.display()))?;
            write_or_print(common.out.as_deref(), &serialize_conllu(&ms))?;
        }
        Command::Extract => {
            let out = common.out()?;
            let (train, dev) = inputs(&cfg)?;
            let opts = cfg.extraction();
            for task in Task::ALL {
                for kind in target_kinds(cfg.repr) {
                    let ds = build_task_dataset(&train, &dev, task, kind, cfg.repr, &opts)?;
                    for (split, insts) in [(Split::Train, &ds.train), (Split::Dev, &ds.dev)] {
                        let mut buf = Vec::new();
                        write_instances(&mut buf, insts, task)?;
                        let path = out.join(format!("{}-{}.{}.tsv", task, kind, split));
                        write_file(&path, buf)?;
                        println!("{}\t{}", path.display(), insts.len());
                    }
                }
            }
        }
        Command::TrainParser => {
            let out = common.out()?.to_owned();
            let (train, dev) = inputs(&cfg)?;
            cfg.model.recursive = cfg.recursive;
            cfg.parser.seed = cfg.seed;
            let trained = train_parser(&train, &dev, cfg.model.clone(), &cfg.parser, |e| info!("epoch {}", e))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            save_model(&trained.model, &out).with_context(|| format!("writing {}", out.display()))?;
            write_file(&out.with_extension("log.tsv"), render_log(&trained.log))?;
            println!("best epoch {} of {}", trained.best_epoch, trained.log.len());
        }
        Command::Parse { model, input } => {
            let model = load_model(&model).with_context(|| format!("{}", model.display()))?;
            let tb = read_treebank(&input)?;
            write_or_print(common.out.as_deref(), &serialize_conllu(&parse_treebank(&model, &tb)?))?;
        }
        Command::Eval { gold, pred, no_punct } => {
            let report = evaluate_las(&read_treebank(&gold)?, &read_treebank(&pred)?, !no_punct)?;
            write_or_print(common.out.as_deref(), &report.to_string())?;
        }
        Command::ExtractVectors {
            model,
            input,
            instances,
            layer,
            split,
            embeddings,
        } => {
            let model = load_model(&model).with_context(|| format!("{}", model.display()))?;
            let table = match embeddings {
                Some(p) => Some(EmbeddingTable::from_text(&read_file(&p)?)?),
                None => None,
            };
            let tb = read_treebank(&input)?;
            let rows = read_instances(&read_file(&instances)?)?;
            let Some(first) = rows.first() else {
                bail!("{} has no instances", instances.display());
            };
            let (task, kind) = (first.task, first.kind);
            if rows.iter().any(|r| (r.task, r.kind) != (task, kind)) {
                bail!("{} mixes tasks or targets", instances.display());
            }
            let targets: Vec<Target> = rows.iter().map(Target::from).collect();
            let src = VectorSource {
                model: &model,
                embeddings: table.as_ref(),
            };
            let set = extract_vectors(&src, &tb, &targets, task, layer, kind, split)?;
            write_or_print(common.out.as_deref(), &set.to_text())?;
        }
        Command::Cbow => {
            let train = read_treebank(cfg.train.as_deref().context("--train is required")?)?;
            let corpus: Vec<Vec<String>> = train.iter().map(forms).collect();
            cfg.cbow.seed = cfg.seed;
            let out = train_cbow(&corpus, &cfg.cbow)?;
            for (epoch, loss) in out.epoch_loss.iter().enumerate() {
                info!("cbow epoch {} loss {:.4}", epoch + 1, loss);
            }
            write_or_print(common.out.as_deref(), &out.table.to_text())?;
        }
        Command::TrainProbe {
            train_vectors,
            dev_vectors,
            classifier,
            null,
        } => {
            let train = VectorSet::from_text(&read_file(&train_vectors)?)?;
            let dev = VectorSet::from_text(&read_file(&dev_vectors)?)?;
            let seed = cell_seed(cfg.seed, &format!("{}/{}", train_vectors.display(), classifier));
            let train = if null { shuffle_labels(&train, seed) } else { train };
            let pc = ProbeConfig {
                kind: classifier,
                seed,
                ..cfg.probe.clone()
            };
            let result = run_probe(&train, &dev, &pc)?;
            write_or_print(common.out.as_deref(), &render_probe_report(&[result]))?;
        }
        Command::Report {
            probes,
            classifier,
            format,
        } => {
            let mut reports = Vec::new();
            for spec in &probes {
                let (name, file) = spec
                    .split_once('=')
                    .with_context(|| format!("--probes expects LANGUAGE:SETTING=FILE, got `{}`", spec))?;
                let (lang, setting) = name.split_once(':').unwrap_or((name, "bas"));
                let results = parse_probe_report(&read_file(Path::new(file))?)?;
                reports.push((lang.to_owned(), setting.to_owned(), results));
            }
            let matrix = build_results(&reports, classifier);
            let opts = RenderOptions {
                format,
                sd: cfg.sd,
                sidedness: cfg.significance,
            };
            write_or_print(common.out.as_deref(), &render(&matrix, &opts))?;
            let missing = matrix.missing();
            if !missing.is_empty() {
                for (lang, key) in &missing {
                    eprintln!("missing cell: {} {} {}", lang, key.task, key);
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Pipeline { treebank, only } => {
            if let Some(name) = treebank {
                let dir = Path::new(&name);
                if dir.is_dir() {
                    if cfg.train.is_none() {
                        cfg.train = find_split(dir, "train.conllu")?;
                    }
                    if cfg.dev.is_none() {
                        cfg.dev = find_split(dir, "dev.conllu")?;
                    }
                }
                let short = dir.file_name().and_then(|n| n.to_str()).unwrap_or(&name);
                cfg.treebank = short.to_owned();
            }
            let summary = Pipeline::new(cfg).run(only)?;
            for stage in &summary.ran {
                println!("ran\t{}", stage);
            }
            for stage in &summary.skipped {
                println!("done\t{}", stage);
            }
            if !summary.missing_cells.is_empty() {
                for cell in &summary.missing_cells {
                    eprintln!("missing cell: {}", cell);
                }
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn forms(s: &Sentence) -> Vec<String> {
    s.tokens.iter().map(|t| t.form.clone()).collect()
}

fn inputs(cfg: &RunConfig) -> Result<(Vec<Sentence>, Vec<Sentence>)> {
    let train = cfg.train.as_deref().context("--train is required")?;
    let dev = cfg.dev.as_deref().context("--dev is required")?;
    let (train, dev) = (read_treebank(train)?, read_treebank(dev)?);
    if cfg.repr == Representation::Ms {
        info!("treebanks are used as given; run `transform` first to get MS input");
    }
    Ok((train, dev))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {:#}", err);
            ExitCode::from(2)
        }
    }
}
