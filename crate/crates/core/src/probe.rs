//! Diagnostic classifiers over frozen parser vectors: vector extraction,
//! vector files, majority baselines and MLP / linear probes.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cbow::EmbeddingTable;
use crate::conllu::Sentence;
use crate::numeric::{rng_from_seed, Adam, AdamConfig, Gradients, Graph, Init, NumericError, ParamId, ParamSet};
use crate::parser::{ParserError, ParserModel};
use crate::treebank::{InstanceRow, ProbeInstance, TargetKind, Task};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("{0}")]
    Usage(String),

    #[error("vector dimension {found} does not match {expected}")]
    Shape { expected: usize, found: usize },

    #[error("vector file line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error(transparent)]
    Parser(#[from] ParserError),

    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    Type,
    Char,
    Token,
    Composed,
    W2v,
}

impl Layer {
    pub const ALL: [Layer; 5] = [Layer::Type, Layer::Char, Layer::Token, Layer::Composed, Layer::W2v];

    pub fn name(self) -> &'static str {
        match self {
            Layer::Type => "type",
            Layer::Char => "char",
            Layer::Token => "token",
            Layer::Composed => "composed",
            Layer::W2v => "w2v",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Layer {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Layer::ALL
            .into_iter()
            .find(|l| l.name() == s.to_ascii_lowercase())
            .ok_or_else(|| ProbeError::Usage(format!("unknown layer `{}`", s)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
        })
    }
}

impl FromStr for Split {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            _ => Err(ProbeError::Usage(format!("unknown split `{}`", s))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorRow {
    /// `sentence:target`, both as in the dataset.
    pub id: String,
    pub label: String,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorSet {
    pub layer: Layer,
    pub kind: TargetKind,
    pub task: Task,
    pub split: Split,
    pub dim: usize,
    pub rows: Vec<VectorRow>,
}

impl VectorSet {
    pub fn labels(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.label.as_str()).collect()
    }

    /// Header line, then `id \t label \t v1 … vd` per instance.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#vectors\tlayer={}\ttarget={}\ttask={}\tsplit={}\tdim={}\tcount={}\n",
            self.layer,
            self.kind,
            self.task,
            self.split,
            self.dim,
            self.rows.len()
        );
        for r in &self.rows {
            write!(out, "{}\t{}\t", r.id, r.label).expect("writing to a string");
            for (i, v) in r.vector.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{}", v).expect("writing to a string");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ProbeError> {
        let err = |line: usize, msg: String| ProbeError::Format { line, msg };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "empty file".to_owned()))?;
        let mut fields: HashMap<&str, &str> = HashMap::new();
        let mut parts = header.split('\t');
        if parts.next() != Some("#vectors") {
            return Err(err(1, "missing `#vectors` header".to_owned()));
        }
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| err(1, format!("bad field `{}`", p)))?;
            fields.insert(k, v);
        }
        let field = |k: &str| fields.get(k).copied().ok_or_else(|| err(1, format!("missing `{}`", k)));
        let num = |k: &str| -> Result<usize, ProbeError> {
            field(k)?.parse().map_err(|_| err(1, format!("bad `{}`", k)))
        };
        let layer: Layer = field("layer")?.parse()?;
        let kind: TargetKind = field("target")?.parse().map_err(|e| err(1, format!("{}", e)))?;
        let task: Task = field("task")?.parse().map_err(|e| err(1, format!("{}", e)))?;
        let split: Split = field("split")?.parse()?;
        let (dim, count) = (num("dim")?, num("count")?);

        let mut rows = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let cols: Vec<&str> = line.splitn(3, '\t').collect();
            if cols.len() != 3 {
                return Err(err(i + 2, "expected three tab-separated columns".to_owned()));
            }
            let vector = if dim == 0 {
                Vec::new()
            } else {
                cols[2]
                    .split(' ')
                    .map(|v| v.parse::<f64>().map_err(|_| err(i + 2, format!("bad number `{}`", v))))
                    .collect::<Result<Vec<_>, _>>()?
            };
            if vector.len() != dim {
                return Err(ProbeError::Shape { expected: dim, found: vector.len() });
            }
            rows.push(VectorRow {
                id: cols[0].to_owned(),
                label: cols[1].to_owned(),
                vector,
            });
        }
        if rows.len() != count {
            return Err(err(1, format!("header declares {} rows, file has {}", count, rows.len())));
        }
        Ok(VectorSet { layer, kind, task, split, dim, rows })
    }
}

/// A token to collect a vector for, with its gold label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    /// Index into the treebank.
    pub sentence: usize,
    /// 1-based token id.
    pub target: usize,
    pub label: String,
}

impl Target {
    /// Targets of `instances` labelled for `task`; unlabelled ones are
    /// skipped.
    pub fn from_instances(instances: &[ProbeInstance], task: Task) -> Vec<Target> {
        instances
            .iter()
            .filter_map(|i| {
                Some(Target {
                    sentence: i.sentence,
                    target: i.target,
                    label: i.label(task)?,
                })
            })
            .collect()
    }
}

impl From<&InstanceRow> for Target {
    fn from(r: &InstanceRow) -> Self {
        Target {
            sentence: r.sentence,
            target: r.target,
            label: r.label.clone(),
        }
    }
}

/// Where vectors come from.
pub struct VectorSource<'a> {
    pub model: &'a ParserModel,
    /// Needed for the `w2v` layer only.
    pub embeddings: Option<&'a EmbeddingTable>,
}

/// Vectors for `targets` (indices into `tb`) from one layer. Token and
/// composed vectors come from running the frozen model over the sentence;
/// type and character vectors only look at the word form.
pub fn extract_vectors(
    src: &VectorSource,
    tb: &[Sentence],
    targets: &[Target],
    task: Task,
    layer: Layer,
    kind: TargetKind,
    split: Split,
) -> Result<VectorSet, ProbeError> {
    if layer == Layer::Composed && !src.model.config.recursive {
        return Err(ProbeError::Usage("composed vectors need a recursive parser".to_owned()));
    }
    let table = match (layer, src.embeddings) {
        (Layer::W2v, None) => return Err(ProbeError::Usage("the w2v layer needs an embedding table".to_owned())),
        (_, t) => t,
    };
    for inst in targets {
        let ok = tb.get(inst.sentence).is_some_and(|s| (1..=s.len()).contains(&inst.target));
        if !ok {
            return Err(ProbeError::Usage(format!(
                "instance {}:{} is outside the treebank",
                inst.sentence, inst.target
            )));
        }
    }

    let mut by_sentence: BTreeMap<usize, Vec<&Target>> = BTreeMap::new();
    for inst in targets {
        by_sentence.entry(inst.sentence).or_default().push(inst);
    }
    let groups: Vec<(usize, Vec<&Target>)> = by_sentence.into_iter().collect();
    let vectors: Vec<Vec<(usize, usize, Vec<f64>)>> = groups
        .par_iter()
        .map(|(si, insts)| -> Result<_, ProbeError> {
            let s = &tb[*si];
            let per_sentence: Option<Vec<Vec<f64>>> = match layer {
                Layer::Token => Some(src.model.token_vectors(s)?.tokens),
                Layer::Composed => src.model.parse(s)?.composed,
                _ => None,
            };
            insts
                .iter()
                .map(|inst| {
                    let form = &s.token(inst.target).form;
                    let v = match layer {
                        Layer::Type => src.model.word_vectors(form)?.0,
                        Layer::Char => src.model.word_vectors(form)?.1,
                        Layer::W2v => table.expect("checked above").vector_or_zero(form),
                        Layer::Token | Layer::Composed => {
                            per_sentence.as_ref().expect("computed above")[inst.target - 1].clone()
                        }
                    };
                    Ok((inst.sentence, inst.target, v))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    // Back to the dataset's instance order.
    let lookup: HashMap<(usize, usize), Vec<f64>> = vectors
        .into_iter()
        .flatten()
        .map(|(s, t, v)| ((s, t), v))
        .collect();
    let rows: Vec<VectorRow> = targets
        .iter()
        .map(|inst| VectorRow {
            id: format!("{}:{}", inst.sentence, inst.target),
            label: inst.label.clone(),
            vector: lookup[&(inst.sentence, inst.target)].clone(),
        })
        .collect();
    let dim = match rows.first() {
        Some(r) => r.vector.len(),
        None => match layer {
            Layer::Type => src.model.config.word_dim,
            Layer::Char => src.model.config.char_out(),
            Layer::Token | Layer::Composed => src.model.config.token_dim(),
            Layer::W2v => table.map_or(0, |t| t.dim),
        },
    };
    Ok(VectorSet { layer, kind, task, split, dim, rows })
}

/// Accuracy (percent) of always predicting the most frequent training
/// label; ties go to the label seen first. `None` without training or dev
/// labels.
pub fn majority_baseline(train: &[&str], dev: &[&str]) -> Option<f64> {
    majority_label(train).and_then(|m| {
        (!dev.is_empty()).then(|| 100.0 * dev.iter().filter(|&&l| l == m).count() as f64 / dev.len() as f64)
    })
}

pub fn majority_label<'a>(labels: &[&'a str]) -> Option<&'a str> {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for &l in labels {
        match counts.iter_mut().find(|(x, _)| *x == l) {
            Some((_, c)) => *c += 1,
            None => counts.push((l, 1)),
        }
    }
    // `max_by_key` keeps the last maximum; scan for the first instead.
    let best = counts.iter().map(|&(_, c)| c).max()?;
    counts.into_iter().find(|&(_, c)| c == best).map(|(l, _)| l)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProbeKind {
    /// One tanh hidden layer, then softmax.
    Mlp1,
    /// Softmax regression.
    Linear,
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeKind::Mlp1 => "mlp1",
            ProbeKind::Linear => "linear",
        })
    }
}

impl FromStr for ProbeKind {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp1" | "mlp" => Ok(ProbeKind::Mlp1),
            "linear" => Ok(ProbeKind::Linear),
            _ => Err(ProbeError::Usage(format!("unknown probe kind `{}`", s))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            kind: ProbeKind::Mlp1,
            hidden: 100,
            epochs: 20,
            batch: 32,
            adam: AdamConfig::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProbeModel {
    pub kind: ProbeKind,
    pub dim: usize,
    /// Output classes, sorted.
    pub labels: Vec<String>,
    params: ParamSet,
    layers: Vec<(ParamId, ParamId)>,
}

impl ProbeModel {
    fn logits(&self, g: &mut Graph, x: &[f64]) -> Result<crate::numeric::Var, NumericError> {
        let mut h = g.vector(x.to_vec())?;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let (w, b) = (g.param(w)?, g.param(b)?);
            h = g.affine(w, h, b)?;
            if i + 1 < self.layers.len() {
                h = g.tanh(h)?;
            }
        }
        Ok(h)
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str, ProbeError> {
        if x.len() != self.dim {
            return Err(ProbeError::Shape { expected: self.dim, found: x.len() });
        }
        let mut g = Graph::new(&self.params);
        let out = self.logits(&mut g, x)?;
        let scores = g.value(out);
        let best = (0..scores.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        Ok(&self.labels[best])
    }
}

/// Train on `train` only. Every epoch visits the instances in a fresh
/// seeded order, in mini-batches whose gradients are averaged.
pub fn train_probe(train: &VectorSet, cfg: &ProbeConfig) -> Result<ProbeModel, ProbeError> {
    if train.rows.is_empty() {
        return Err(ProbeError::Usage("no training vectors".to_owned()));
    }
    if let Some(r) = train.rows.iter().find(|r| r.vector.len() != train.dim) {
        return Err(ProbeError::Shape { expected: train.dim, found: r.vector.len() });
    }
    let mut labels: Vec<String> = train.rows.iter().map(|r| r.label.clone()).collect();
    labels.sort();
    labels.dedup();
    let label_index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let targets: Vec<usize> = train.rows.iter().map(|r| label_index[r.label.as_str()]).collect();

    let mut rng = rng_from_seed(cfg.seed);
    let mut params = ParamSet::new();
    let mut layers = Vec::new();
    let sizes: Vec<usize> = match cfg.kind {
        ProbeKind::Mlp1 => vec![train.dim, cfg.hidden, labels.len()],
        ProbeKind::Linear => vec![train.dim, labels.len()],
    };
    for (i, pair) in sizes.windows(2).enumerate() {
        layers.push((
            params.add(&format!("layer{}.w", i), &[pair[1], pair[0]], Init::Glorot, &mut rng),
            params.add(&format!("layer{}.b", i), &[pair[1]], Init::Constant(0.0), &mut rng),
        ));
    }
    let mut model = ProbeModel {
        kind: cfg.kind,
        dim: train.dim,
        labels,
        params,
        layers,
    };

    let mut adam = Adam::new(&model.params, cfg.adam);
    let mut grads = Gradients::new(&model.params);
    let mut order: Vec<usize> = (0..train.rows.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch.max(1)) {
            for &i in batch {
                let mut g = Graph::new(&model.params);
                let logits = model.logits(&mut g, &train.rows[i].vector)?;
                let loss = g.softmax_xent(logits, targets[i])?;
                g.backward(loss, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.update(&mut model.params, &mut grads);
        }
    }
    Ok(model)
}

/// Accuracy in percent; dev labels unseen in training count as errors.
pub fn eval_probe(model: &ProbeModel, dev: &VectorSet) -> Result<Option<f64>, ProbeError> {
    if dev.rows.is_empty() {
        return Ok(None);
    }
    let mut correct = 0;
    for r in &dev.rows {
        correct += (model.predict(&r.vector)? == r.label) as usize;
    }
    Ok(Some(100.0 * correct as f64 / dev.rows.len() as f64))
}

/// A copy of `set` with its labels permuted.
pub fn shuffle_labels(set: &VectorSet, seed: u64) -> VectorSet {
    let mut labels: Vec<String> = set.rows.iter().map(|r| r.label.clone()).collect();
    labels.shuffle(&mut rng_from_seed(seed));
    let mut out = set.clone();
    for (r, l) in out.rows.iter_mut().zip(labels) {
        r.label = l;
    }
    out
}

/// Seed for one cell of a probe grid, independent of scheduling order.
pub fn cell_seed(base: u64, key: &str) -> u64 {
    let digest = Sha256::new().chain_update(base.to_le_bytes()).chain_update(key.as_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub task: Task,
    pub layer: Layer,
    pub kind: TargetKind,
    pub classifier: ProbeKind,
    pub train_count: usize,
    pub dev_count: usize,
    pub majority: Option<f64>,
    pub accuracy: Option<f64>,
}

impl ProbeResult {
    pub fn delta(&self) -> Option<f64> {
        Some(self.accuracy? - self.majority?)
    }
}

/// Train and evaluate one probe.
pub fn run_probe(train: &VectorSet, dev: &VectorSet, cfg: &ProbeConfig) -> Result<ProbeResult, ProbeError> {
    if dev.dim != train.dim {
        return Err(ProbeError::Shape { expected: train.dim, found: dev.dim });
    }
    let majority = majority_baseline(&train.labels(), &dev.labels());
    let accuracy = if train.rows.is_empty() {
        None
    } else {
        eval_probe(&train_probe(train, cfg)?, dev)?
    };
    Ok(ProbeResult {
        task: train.task,
        layer: train.layer,
        kind: train.kind,
        classifier: cfg.kind,
        train_count: train.rows.len(),
        dev_count: dev.rows.len(),
        majority,
        accuracy,
    })
}

fn opt1(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{:.1}", x))
}

pub const REPORT_HEADER: &str = "task\tlayer\ttarget\tclassifier\ttrain\tdev\tmajority\taccuracy\tdelta";

/// Tab-separated probe results, one line per cell.
pub fn render_probe_report(results: &[ProbeResult]) -> String {
    let mut out = format!("{}\n", REPORT_HEADER);
    for r in results {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.task,
            r.layer,
            r.kind,
            r.classifier,
            r.train_count,
            r.dev_count,
            opt1(r.majority),
            opt1(r.accuracy),
            opt1(r.delta())
        )
        .expect("writing to a string");
    }
    out
}

pub fn parse_probe_report(text: &str) -> Result<Vec<ProbeResult>, ProbeError> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(ProbeError::Format { line: 1, msg: "unexpected header".to_owned() });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let err = |msg: &str| ProbeError::Format { line: i + 2, msg: msg.to_owned() };
            let c: Vec<&str> = line.split('\t').collect();
            if c.len() != 9 {
                return Err(err("expected nine columns"));
            }
            let opt = |s: &str| -> Result<Option<f64>, ProbeError> {
                if s == "-" {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| err("bad number"))
                }
            };
            Ok(ProbeResult {
                task: c[0].parse().map_err(|_| err("bad task"))?,
                layer: c[1].parse()?,
                kind: c[2].parse().map_err(|_| err("bad target"))?,
                classifier: c[3].parse()?,
                train_count: c[4].parse().map_err(|_| err("bad count"))?,
                dev_count: c[5].parse().map_err(|_| err("bad count"))?,
                majority: opt(c[6])?,
                accuracy: opt(c[7])?,
            })
        })
        .collect()
}
