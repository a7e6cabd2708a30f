use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::eval::evaluate_las;
use super::model::{ModelConfig, ParserModel};
use super::oracle::{min_cost, GoldTree, Oracle};
use super::transition::Transition;
use super::vocab::Vocab;
use super::ParserError;
use crate::conllu::Sentence;
use crate::numeric::{rng_from_seed, Adam, AdamConfig, Gradients, Graph};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    /// Probability of following a higher-scoring wrong transition.
    pub exploration: f64,
    /// `alpha` in the word dropout rate `alpha / (alpha + count)`.
    pub word_dropout: f64,
    pub margin: f64,
    pub adam: AdamConfig,
    /// Whether dev LAS counts punctuation.
    pub include_punct: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            seed: 1,
            exploration: 0.1,
            word_dropout: 0.25,
            margin: 1.0,
            adam: AdamConfig::default(),
            include_punct: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean hinge loss per sentence.
    pub train_loss: f64,
    pub dev_las: Option<f64>,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dev_las {
            Some(las) => write!(f, "{}\t{:.6}\t{:.2}", self.epoch, self.train_loss, las),
            None => write!(f, "{}\t{:.6}\t-", self.epoch, self.train_loss),
        }
    }
}

/// Tab-separated training log with a header line.
pub fn render_log(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch\ttrain_loss\tdev_LAS\n");
    for e in log {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainedParser {
    pub model: ParserModel,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
}

pub(crate) fn gold_tree(model: &ParserModel, s: &Sentence) -> Result<GoldTree, ParserError> {
    s.validate()
        .map_err(|e| ParserError::Usage(format!("training sentence is not a tree: {}", e)))?;
    let mut heads = vec![0];
    let mut labels = vec![0];
    for t in &s.tokens {
        heads.push(t.head);
        labels.push(
            model
                .vocab
                .label(&t.deprel)
                .ok_or_else(|| ParserError::Usage(format!("label `{}` is not in the vocabulary", t.deprel)))?,
        );
    }
    Ok(GoldTree::new(heads, labels))
}

/// Hinge loss of `s` along the oracle path, with no word dropout and no
/// exploration; gradients are accumulated into `grads`.
pub fn sentence_loss(model: &ParserModel, s: &Sentence, margin: f64, grads: &mut Gradients) -> Result<f64, ParserError> {
    let cfg = TrainConfig {
        margin,
        ..TrainConfig::default()
    };
    train_sentence(model, grads, s, &cfg, None)
}

/// One greedy pass over a sentence, accumulating hinge losses into
/// `grads`; returns the summed loss. Without `rng` there is no word
/// dropout and no exploration.
pub(crate) fn train_sentence(
    model: &ParserModel,
    grads: &mut Gradients,
    s: &Sentence,
    cfg: &TrainConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<f64, ParserError> {
    let gold = gold_tree(model, s)?;
    let labels = model.labels();
    let mut g = Graph::new(&model.params);
    let enc = model.encode(&mut g, s, rng.as_deref_mut().map(|r| (r, cfg.word_dropout)))?;
    let mut st = model.start(&mut g, s, &enc)?;
    let mut oracle = Oracle::new(&gold);
    let mut losses = Vec::new();

    while !st.config.is_terminal() {
        let scores = model.score(&mut g, &st)?;
        let costs = oracle.costs(&st.config, labels);
        let correct = min_cost(&costs);
        let wrong: Vec<Transition> = costs
            .iter()
            .filter(|(t, _)| !correct.contains(t))
            .map(|(t, _)| *t)
            .collect();

        let sv = g.value(scores).to_vec();
        let argmax = |set: &[Transition]| {
            set.iter().copied().fold(None, |best: Option<Transition>, t| match best {
                Some(b) if sv[b.index()] >= sv[t.index()] => Some(b),
                _ => Some(t),
            })
        };
        let best_correct = argmax(&correct).expect("some transition is legal");
        let best_wrong = argmax(&wrong);

        if let Some(bw) = best_wrong {
            if sv[best_correct.index()] < sv[bw.index()] + cfg.margin {
                let good: Vec<usize> = correct.iter().map(|t| t.index()).collect();
                let bad: Vec<usize> = wrong.iter().map(|t| t.index()).collect();
                losses.push(g.hinge(scores, &good, &bad, cfg.margin)?);
            }
        }

        let next = match best_wrong {
            Some(bw)
                if sv[bw.index()] > sv[best_correct.index()]
                    && rng.as_deref_mut().is_some_and(|r| r.gen_bool(cfg.exploration)) =>
            {
                bw
            }
            _ => best_correct,
        };
        oracle.observe(&st.config, next);
        model.apply(&mut g, &mut st, next)?;
    }

    if losses.is_empty() {
        return Ok(0.0);
    }
    let total = g.sum_scalars(&losses)?;
    let value = g.scalar(total);
    g.backward(total, grads)?;
    Ok(value)
}

/// Parse a treebank with the current model, in parallel over sentences.
pub fn parse_treebank(model: &ParserModel, treebank: &[Sentence]) -> Result<Vec<Sentence>, ParserError> {
    treebank
        .par_iter()
        .map(|s| model.parse(s).map(|p| p.sentence))
        .collect()
}

/// Train for `cfg.epochs` epochs and keep the parameters of the epoch with
/// the best dev LAS (the last epoch when `dev` is empty). `on_epoch` sees
/// each log line as it is produced.
pub fn train_parser(
    train: &[Sentence],
    dev: &[Sentence],
    model_config: ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainedParser, ParserError> {
    if train.iter().all(Sentence::is_empty) {
        return Err(ParserError::Usage("training treebank is empty".to_owned()));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut model = ParserModel::new(model_config, Vocab::build(train), rng.gen());
    let mut adam = Adam::new(&model.params, cfg.adam);
    let mut grads = Gradients::new(&model.params);
    let mut order: Vec<usize> = (0..train.len()).filter(|&i| !train[i].is_empty()).collect();

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, crate::numeric::ParamSet)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        for &i in &order {
            loss += train_sentence(&model, &mut grads, &train[i], cfg, Some(&mut rng))?;
            adam.update(&mut model.params, &mut grads);
        }
        let dev_las = if dev.is_empty() {
            None
        } else {
            Some(evaluate_las(dev, &parse_treebank(&model, dev)?, cfg.include_punct)?.las)
        };
        let entry = EpochLog {
            epoch,
            train_loss: loss / order.len() as f64,
            dev_las,
        };
        on_epoch(&entry);
        log.push(entry);

        let score = dev_las.unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|(b, _, _)| score > *b || dev_las.is_none()) {
            best = Some((score, epoch, model.params.clone()));
        }
    }

    let best_epoch = match best {
        Some((_, epoch, params)) => {
            model.params = params;
            epoch
        }
        None => 0,
    };
    Ok(TrainedParser {
        model,
        log,
        best_epoch,
    })
}
