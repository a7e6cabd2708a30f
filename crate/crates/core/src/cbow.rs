//! Continuous-bag-of-words embeddings with negative sampling, trained on
//! treebank forms as a language-model baseline for the type vectors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::numeric::rng_from_seed;

#[derive(Debug, Error)]
pub enum CbowError {
    #[error("{0}")]
    Usage(String),

    #[error("embedding file line {line}: {msg}")]
    Format { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CbowConfig {
    pub dim: usize,
    pub window: usize,
    pub min_count: u64,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Hogwild updates from several threads. Fast, not reproducible.
    pub parallel: bool,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            dim: 100,
            window: 5,
            min_count: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            seed: 1,
            parallel: false,
        }
    }
}

/// Word types with one row each.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub words: Vec<String>,
    pub dim: usize,
    pub data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(words: Vec<String>, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(words.len() * dim, data.len(), "table shape");
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        EmbeddingTable { words, dim, data, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Vector of `word`, zeros when it is not in the table.
    pub fn vector_or_zero(&self, word: &str) -> Vec<f64> {
        self.get(word).map_or_else(|| vec![0.0; self.dim], <[f64]>::to_vec)
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (x, y) = (self.get(a)?, self.get(b)?);
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let norm = |v: &[f64]| v.iter().map(|p| p * p).sum::<f64>().sqrt();
        Some(dot / (norm(x) * norm(y)))
    }

    /// `|V| dim` header, then one `word v1 … vd` line per type.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for (i, w) in self.words.iter().enumerate() {
            out.push_str(w);
            for v in &self.data[i * self.dim..(i + 1) * self.dim] {
                write!(out, " {}", v).expect("writing to a string");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CbowError> {
        let err = |line: usize, msg: &str| CbowError::Format { line, msg: msg.to_owned() };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "empty file"))?;
        let (n, dim) = header
            .split_once(' ')
            .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)))
            .ok_or_else(|| err(1, "expected `count dim`"))?;
        let mut words = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * dim);
        for (i, line) in lines.enumerate() {
            let mut parts = line.split(' ');
            let word = parts.next().filter(|w| !w.is_empty()).ok_or_else(|| err(i + 2, "missing word"))?;
            let values = parts
                .map(|p| p.parse::<f64>().map_err(|_| err(i + 2, "bad number")))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != dim {
                return Err(err(i + 2, &format!("expected {} values, found {}", dim, values.len())));
            }
            words.push(word.to_owned());
            data.extend(values);
        }
        if words.len() != n {
            return Err(err(1, &format!("header declares {} words, file has {}", n, words.len())));
        }
        Ok(EmbeddingTable::new(words, dim, data))
    }
}

/// Shared f64 matrix updated without locks; with one worker it behaves
/// like a plain array.
struct Shared(Vec<AtomicU64>);

impl Shared {
    fn new(values: impl IntoIterator<Item = f64>) -> Self {
        Shared(values.into_iter().map(|v| AtomicU64::new(v.to_bits())).collect())
    }

    fn get(&self, i: usize) -> f64 {
        f64::from_bits(self.0[i].load(Ordering::Relaxed))
    }

    fn add(&self, i: usize, dv: f64) {
        self.0[i].store((self.get(i) + dv).to_bits(), Ordering::Relaxed);
    }

    fn into_vec(self) -> Vec<f64> {
        self.0.into_iter().map(|a| f64::from_bits(a.into_inner())).collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Trainer<'a> {
    cfg: &'a CbowConfig,
    input: Shared,
    output: Shared,
    noise: WeightedIndex<f64>,
    total_words: u64,
}

impl Trainer<'_> {
    /// One pass over `sentences`; returns (summed loss, examples).
    fn run(&self, sentences: &[Vec<usize>], processed_before: u64, rng: &mut impl Rng) -> (f64, u64) {
        let dim = self.cfg.dim;
        let budget = (self.cfg.epochs as u64 * self.total_words) as f64 + 1.0;
        let mut processed = processed_before;
        let (mut loss, mut examples) = (0.0, 0u64);
        let mut hidden = vec![0.0; dim];
        let mut update = vec![0.0; dim];
        for s in sentences {
            for pos in 0..s.len() {
                processed += 1;
                let lr = self.cfg.lr * (1.0 - processed as f64 / budget).max(1e-4);
                let shrink = rng.gen_range(0..self.cfg.window);
                let reach = self.cfg.window - shrink;
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(s.len() - 1);
                let context: Vec<usize> = (lo..=hi).filter(|&j| j != pos).map(|j| s[j]).collect();
                if context.is_empty() {
                    continue;
                }
                hidden.iter_mut().for_each(|h| *h = 0.0);
                for &c in &context {
                    for (k, h) in hidden.iter_mut().enumerate() {
                        *h += self.input.get(c * dim + k);
                    }
                }
                let inv = 1.0 / context.len() as f64;
                hidden.iter_mut().for_each(|h| *h *= inv);
                update.iter_mut().for_each(|u| *u = 0.0);

                let target = s[pos];
                for d in 0..=self.cfg.negatives {
                    let (word, label) = if d == 0 {
                        (target, 1.0)
                    } else {
                        let w = self.noise.sample(rng);
                        if w == target {
                            continue;
                        }
                        (w, 0.0)
                    };
                    let score: f64 = (0..dim).map(|k| hidden[k] * self.output.get(word * dim + k)).sum();
                    let p = sigmoid(score);
                    loss -= if label > 0.0 { p.max(1e-12).ln() } else { (1.0 - p).max(1e-12).ln() };
                    let g = (label - p) * lr;
                    for k in 0..dim {
                        update[k] += g * self.output.get(word * dim + k);
                        self.output.add(word * dim + k, g * hidden[k]);
                    }
                }
                for &c in &context {
                    for (k, u) in update.iter().enumerate() {
                        self.input.add(c * dim + k, *u);
                    }
                }
                examples += 1;
            }
        }
        (loss, examples)
    }
}

/// Trained table plus the mean loss of every epoch.
#[derive(Clone, Debug)]
pub struct CbowOutput {
    pub table: EmbeddingTable,
    pub epoch_loss: Vec<f64>,
}

pub fn train_cbow(sentences: &[Vec<String>], cfg: &CbowConfig) -> Result<CbowOutput, CbowError> {
    if cfg.dim == 0 || cfg.window == 0 {
        return Err(CbowError::Usage("dimension and window must be positive".to_owned()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for w in s {
            *counts.entry(w.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(CbowError::Usage("empty corpus".to_owned()));
    }
    let mut vocab: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= cfg.min_count).collect();
    if vocab.is_empty() {
        return Err(CbowError::Usage(format!("no word occurs at least {} times", cfg.min_count)));
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (*w, i)).collect();
    let corpus: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|w| index.get(w.as_str()).copied()).collect())
        .filter(|s: &Vec<usize>| !s.is_empty())
        .collect();

    let mut rng = rng_from_seed(cfg.seed);
    let dim = cfg.dim;
    let trainer = Trainer {
        cfg,
        input: Shared::new((0..vocab.len() * dim).map(|_| (rng.gen::<f64>() - 0.5) / dim as f64)),
        output: Shared::new(std::iter::repeat_n(0.0, vocab.len() * dim)),
        noise: WeightedIndex::new(vocab.iter().map(|&(_, c)| (c as f64).powf(0.75)))
            .expect("positive counts"),
        total_words: corpus.iter().map(|s| s.len() as u64).sum(),
    };

    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let before = epoch as u64 * trainer.total_words;
        let (loss, n) = if cfg.parallel {
            let chunk = corpus.len().div_ceil(rayon::current_num_threads()).max(1);
            let seeds: Vec<u64> = (0..corpus.len().div_ceil(chunk)).map(|_| rng.gen()).collect();
            corpus
                .par_chunks(chunk)
                .zip(seeds)
                .map(|(part, seed)| trainer.run(part, before, &mut rng_from_seed(seed)))
                .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
        } else {
            trainer.run(&corpus, before, &mut rng)
        };
        epoch_loss.push(if n == 0 { 0.0 } else { loss / n as f64 });
    }

    let data = trainer.input.into_vec();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(CbowError::Usage("training diverged".to_owned()));
    }
    Ok(CbowOutput {
        table: EmbeddingTable::new(vocab.into_iter().map(|(w, _)| w.to_owned()).collect(), dim, data),
        epoch_loss,
    })
}
