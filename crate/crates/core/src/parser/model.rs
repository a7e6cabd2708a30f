use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::transition::{Configuration, Transition, ROOT};
use super::vocab::{Vocab, UNKNOWN};
use super::ParserError;
use crate::conllu::{base_relation, Sentence};
use crate::numeric::{rng_from_seed, BiLstm, Graph, Init, NumericError, ParamId, ParamSet, Var};

/// Network dimensions. Defaults give 100-dim type vectors, 50-dim
/// character vectors and 250-dim token vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    /// Per direction.
    pub char_hidden: usize,
    /// Per direction.
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub mlp_hidden: usize,
    /// Size of the left-aux / right-aux relation vectors.
    pub rel_dim: usize,
    pub forget_bias: f64,
    pub recursive: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 100,
            char_dim: 24,
            char_hidden: 25,
            lstm_hidden: 125,
            lstm_layers: 2,
            mlp_hidden: 100,
            rel_dim: 20,
            forget_bias: 1.0,
            recursive: false,
        }
    }
}

impl ModelConfig {
    pub fn char_out(&self) -> usize {
        2 * self.char_hidden
    }

    pub fn input_dim(&self) -> usize {
        self.word_dim + self.char_out()
    }

    pub fn token_dim(&self) -> usize {
        2 * self.lstm_hidden
    }

    /// Size of the vector a token contributes to the scorer.
    pub fn feature_dim(&self) -> usize {
        if self.recursive {
            2 * self.token_dim()
        } else {
            self.token_dim()
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Composition {
    pub(crate) weights: ParamId,
    pub(crate) bias: ParamId,
    /// Row 0: dependent precedes the head; row 1: it follows.
    pub(crate) relations: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub(crate) words: ParamId,
    pub(crate) chars: ParamId,
    pub(crate) char_lstm: BiLstm,
    pub(crate) sent_lstm: BiLstm,
    pub(crate) root: ParamId,
    pub(crate) pad: ParamId,
    pub(crate) compose: Option<Composition>,
    pub(crate) hidden_w: ParamId,
    pub(crate) hidden_b: ParamId,
    pub(crate) out_w: ParamId,
    pub(crate) out_b: ParamId,
}

/// All learned parameters of the parser plus its vocabularies.
#[derive(Clone, Debug)]
pub struct ParserModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamSet,
    pub(crate) layout: Layout,
}

/// Per-token vectors of one sentence, indexed from token 1 at position 0.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub types: Vec<Var>,
    pub chars: Vec<Var>,
    pub tokens: Vec<Var>,
}

/// Plain copies of the vectors of one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenVectors {
    pub types: Vec<Vec<f64>>,
    pub chars: Vec<Vec<f64>>,
    pub tokens: Vec<Vec<f64>>,
}

/// A predicted tree and, for recursive models, every token's final
/// composed vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseOutput {
    pub sentence: Sentence,
    pub composed: Option<Vec<Vec<f64>>>,
}

impl ParserModel {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut params = ParamSet::new();
        let layout = Layout::build(&config, &vocab, &mut params, &mut rng);
        ParserModel {
            config,
            vocab,
            params,
            layout,
        }
    }

    /// Reassemble a model from stored parameters, checking that names and
    /// shapes match what `config` and `vocab` imply.
    pub fn from_parts(config: ModelConfig, vocab: Vocab, params: ParamSet) -> Result<Self, ParserError> {
        let mut model = ParserModel::new(config, vocab, 0);
        if model.params.len() != params.len() {
            return Err(ParserError::Integrity(format!(
                "expected {} parameter arrays, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for id in model.params.ids() {
            let (want, got) = (model.params.get(id), params.get(id));
            if model.params.name(id) != params.name(id) || want.shape() != got.shape() {
                return Err(ParserError::Integrity(format!(
                    "parameter {} is `{}` {:?}, expected `{}` {:?}",
                    id.index(),
                    params.name(id),
                    got.shape(),
                    model.params.name(id),
                    want.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn labels(&self) -> usize {
        self.vocab.label_count()
    }

    fn char_vector(&self, g: &mut Graph, form: &str) -> Result<Var, NumericError> {
        let xs = form
            .chars()
            .map(|c| g.lookup(self.layout.chars, self.vocab.char_id(c)))
            .collect::<Result<Vec<_>, _>>()?;
        if xs.is_empty() {
            return Ok(g.zeros(self.config.char_out()));
        }
        let out = self.layout.char_lstm.encode(g, &xs)?;
        let h = self.config.char_hidden;
        let fwd = g.slice(*out.last().expect("non-empty"), 0, h)?;
        let bwd = g.slice(out[0], h, h)?;
        g.concat(&[fwd, bwd])
    }

    /// Type, character and BiLSTM vectors of every token. With `dropout`,
    /// a word of training count `c` is replaced by the unknown symbol with
    /// probability `alpha / (alpha + c)`.
    pub fn encode(&self, g: &mut Graph, s: &Sentence, dropout: Option<(&mut ChaCha8Rng, f64)>) -> Result<Encoded, ParserError> {
        if s.is_empty() {
            return Err(ParserError::Usage("cannot encode an empty sentence".to_owned()));
        }
        let mut dropout = dropout;
        let mut char_cache: HashMap<&str, Var> = HashMap::new();
        let (mut types, mut chars, mut xs) = (Vec::new(), Vec::new(), Vec::new());
        for t in &s.tokens {
            let mut w = self.vocab.word(&t.form);
            if let Some((rng, alpha)) = dropout.as_mut() {
                let keep = 1.0 - *alpha / (*alpha + self.vocab.count(w) as f64);
                if w != UNKNOWN && !rng.gen_bool(keep.clamp(0.0, 1.0)) {
                    w = UNKNOWN;
                }
            }
            let e = g.lookup(self.layout.words, w)?;
            let c = match char_cache.get(t.form.as_str()) {
                Some(&c) => c,
                None => {
                    let c = self.char_vector(g, &t.form)?;
                    char_cache.insert(&t.form, c);
                    c
                }
            };
            xs.push(g.concat(&[e, c])?);
            types.push(e);
            chars.push(c);
        }
        let tokens = self.layout.sent_lstm.encode(g, &xs)?;
        Ok(Encoded { types, chars, tokens })
    }

    /// Vectors of a sentence under the frozen model.
    pub fn token_vectors(&self, s: &Sentence) -> Result<TokenVectors, ParserError> {
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, s, None)?;
        let copy = |vs: &[Var]| vs.iter().map(|v| g.value(*v).to_vec()).collect();
        Ok(TokenVectors {
            types: copy(&enc.types),
            chars: copy(&enc.chars),
            tokens: copy(&enc.tokens),
        })
    }

    /// Type and character vectors of a single word outside any sentence.
    pub fn word_vectors(&self, form: &str) -> Result<(Vec<f64>, Vec<f64>), ParserError> {
        let mut g = Graph::new(&self.params);
        let e = g.lookup(self.layout.words, self.vocab.word(form))?;
        let c = self.char_vector(&mut g, form)?;
        Ok((g.value(e).to_vec(), g.value(c).to_vec()))
    }

    pub(crate) fn start<'s>(&self, g: &mut Graph, s: &'s Sentence, enc: &Encoded) -> Result<ParseState<'s>, ParserError> {
        let root = g.param(self.layout.root)?;
        let pad = g.param(self.layout.pad)?;
        let mut composed = vec![root];
        composed.extend(enc.tokens.iter().copied());
        let mut reps = Vec::with_capacity(composed.len());
        for (i, &c) in composed.iter().enumerate() {
            let base = if i == 0 { root } else { enc.tokens[i - 1] };
            reps.push(if self.config.recursive { g.concat(&[base, c])? } else { base });
        }
        let scorer = Scorer {
            hidden_w: g.param(self.layout.hidden_w)?,
            hidden_b: g.param(self.layout.hidden_b)?,
            out_w: g.param(self.layout.out_w)?,
            out_b: g.param(self.layout.out_b)?,
        };
        let compose = match &self.layout.compose {
            Some(c) => Some((g.param(c.weights)?, g.param(c.bias)?)),
            None => None,
        };
        Ok(ParseState {
            sentence: s,
            config: Configuration::new(s.len()),
            tokens: std::iter::once(root).chain(enc.tokens.iter().copied()).collect(),
            composed,
            reps,
            pad,
            scorer,
            compose,
            compositions: 0,
        })
    }

    /// Scores of every transition in the current configuration.
    pub(crate) fn score(&self, g: &mut Graph, st: &ParseState) -> Result<Var, ParserError> {
        let c = &st.config;
        let feat = |i: Option<usize>| i.map_or(st.pad, |i| st.reps[i]);
        let x = g.concat(&[feat(c.s1()), feat(c.s0()), feat(c.b0())])?;
        let h = g.affine(st.scorer.hidden_w, x, st.scorer.hidden_b)?;
        let h = g.tanh(h)?;
        Ok(g.affine(st.scorer.out_w, h, st.scorer.out_b)?)
    }

    /// Apply `t`; an auxiliary arc between two verbal tokens updates the
    /// head's composed vector in recursive mode.
    pub(crate) fn apply(&self, g: &mut Graph, st: &mut ParseState, t: Transition) -> Result<(), ParserError> {
        let arc = st.config.apply(t);
        let (Some((h, l, d)), Some((w, b)), Some(comp)) = (arc, st.compose, &self.layout.compose) else {
            return Ok(());
        };
        if h == ROOT || base_relation(self.vocab.label_name(l)) != "aux" {
            return Ok(());
        }
        if !(st.sentence.token(h).is_verbal() && st.sentence.token(d).is_verbal()) {
            return Ok(());
        }
        let r = g.lookup(comp.relations, if d < h { 0 } else { 1 })?;
        let input = g.concat(&[st.reps[h], st.reps[d], r])?;
        let z = g.affine(w, input, b)?;
        let c = g.tanh(z)?;
        st.composed[h] = c;
        st.reps[h] = g.concat(&[st.tokens[h], c])?;
        st.compositions += 1;
        Ok(())
    }

    /// Greedy decoding.
    pub fn parse(&self, s: &Sentence) -> Result<ParseOutput, ParserError> {
        if s.is_empty() {
            return Ok(ParseOutput {
                sentence: s.clone(),
                composed: self.config.recursive.then(Vec::new),
            });
        }
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, s, None)?;
        let mut st = self.start(&mut g, s, &enc)?;
        let labels = self.labels();
        while !st.config.is_terminal() {
            let scores = self.score(&mut g, &st)?;
            let sv = g.value(scores);
            let best = st
                .config
                .legal_transitions(labels)
                .into_iter()
                .fold(None, |best: Option<Transition>, t| match best {
                    Some(b) if sv[b.index()] >= sv[t.index()] => Some(b),
                    _ => Some(t),
                })
                .expect("non-terminal configurations have a legal transition");
            self.apply(&mut g, &mut st, best)?;
        }
        let mut out = s.clone();
        for d in 1..=s.len() {
            let (h, l) = st.config.heads[d].expect("terminal configuration attaches every token");
            let tok = out.token_mut(d);
            tok.head = h;
            tok.deprel = self.vocab.label_name(l).to_owned();
        }
        let composed = self
            .config
            .recursive
            .then(|| st.composed[1..].iter().map(|v| g.value(*v).to_vec()).collect());
        Ok(ParseOutput { sentence: out, composed })
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Scorer {
    hidden_w: Var,
    hidden_b: Var,
    out_w: Var,
    out_b: Var,
}

/// Configuration plus the graph nodes that represent each token; index 0
/// is the root.
pub(crate) struct ParseState<'s> {
    pub(crate) sentence: &'s Sentence,
    pub(crate) config: Configuration,
    tokens: Vec<Var>,
    pub(crate) composed: Vec<Var>,
    reps: Vec<Var>,
    pad: Var,
    scorer: Scorer,
    compose: Option<(Var, Var)>,
    pub(crate) compositions: usize,
}

impl Layout {
    fn build(config: &ModelConfig, vocab: &Vocab, params: &mut ParamSet, rng: &mut ChaCha8Rng) -> Self {
        let words = params.add_table("words", vocab.word_rows(), config.word_dim, rng);
        let chars = params.add_table("chars", vocab.char_rows(), config.char_dim, rng);
        let char_lstm = BiLstm::new(params, "char", config.char_dim, config.char_hidden, 1, config.forget_bias, rng);
        let sent_lstm = BiLstm::new(
            params,
            "sent",
            config.input_dim(),
            config.lstm_hidden,
            config.lstm_layers,
            config.forget_bias,
            rng,
        );
        let root = params.add("root", &[config.token_dim()], Init::Embedding, rng);
        let pad = params.add("pad", &[config.feature_dim()], Init::Embedding, rng);
        let compose = config.recursive.then(|| {
            let input = 2 * config.feature_dim() + config.rel_dim;
            Composition {
                weights: params.add("compose.w", &[config.token_dim(), input], Init::Glorot, rng),
                bias: params.add("compose.b", &[config.token_dim()], Init::Constant(0.0), rng),
                relations: params.add_table("compose.rel", 2, config.rel_dim, rng),
            }
        });
        let outputs = Transition::count(vocab.label_count());
        Layout {
            words,
            chars,
            char_lstm,
            sent_lstm,
            root,
            pad,
            compose,
            hidden_w: params.add("mlp.hidden.w", &[config.mlp_hidden, 3 * config.feature_dim()], Init::Glorot, rng),
            hidden_b: params.add("mlp.hidden.b", &[config.mlp_hidden], Init::Constant(0.0), rng),
            out_w: params.add("mlp.out.w", &[outputs, config.mlp_hidden], Init::Glorot, rng),
            out_b: params.add("mlp.out.b", &[outputs], Init::Constant(0.0), rng),
        }
    }
}
