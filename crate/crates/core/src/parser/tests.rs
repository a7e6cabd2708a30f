use super::model::ParseState;
use super::oracle::static_transition;
use super::train::gold_tree;
use super::*;
use crate::conllu::{Sentence, Token};
use crate::numeric::{Graph, ParamSet, Tensor};
use crate::synthetic;
use crate::treebank::tests::could_have_done_ud;

pub(crate) fn tiny_config(recursive: bool) -> ModelConfig {
    ModelConfig {
        word_dim: 8,
        char_dim: 4,
        char_hidden: 3,
        lstm_hidden: 6,
        lstm_layers: 1,
        mlp_hidden: 10,
        rel_dim: 3,
        forget_bias: 1.0,
        recursive,
    }
}

fn vocab_of(tb: &[Sentence]) -> Vocab {
    Vocab::build(tb)
}

/// Drive a parse state along the static oracle.
fn follow_gold<'s>(model: &ParserModel, g: &mut Graph, s: &'s Sentence) -> ParseState<'s> {
    let enc = model.encode(g, s, None).unwrap();
    let mut st = model.start(g, s, &enc).unwrap();
    let gold = gold_tree(model, s).unwrap();
    while let Some(t) = static_transition(&st.config, &gold) {
        model.apply(g, &mut st, t).unwrap();
    }
    assert!(st.config.is_terminal());
    st
}

#[test]
fn default_dimensions() {
    let s = Sentence::new(vec![Token::new(1, "hello", "INTJ", 0, "root")]);
    let model = ParserModel::new(ModelConfig::default(), vocab_of(std::slice::from_ref(&s)), 3);
    let v = model.token_vectors(&s).unwrap();
    assert_eq!(v.types[0].len(), 100);
    assert_eq!(v.chars[0].len(), 50);
    assert_eq!(v.tokens[0].len(), 250);
    let out = model.parse(&s).unwrap();
    assert_eq!(out.sentence.tokens[0].head, 0);
    assert!(out.composed.is_none());
}

#[test]
fn composed_vectors_start_as_token_vectors() {
    let s = could_have_done_ud();
    let model = ParserModel::new(tiny_config(true), vocab_of(std::slice::from_ref(&s)), 5);
    let mut g = Graph::new(&model.params);
    let enc = model.encode(&mut g, &s, None).unwrap();
    let st = model.start(&mut g, &s, &enc).unwrap();
    for i in 1..=s.len() {
        assert_eq!(g.value(st.composed[i]), g.value(enc.tokens[i - 1]));
    }
}

#[test]
fn unknown_words_still_get_distinct_char_vectors() {
    let s = could_have_done_ud();
    let model = ParserModel::new(tiny_config(false), vocab_of(&[s]), 5);
    let (t1, c1) = model.word_vectors("zebra").unwrap();
    let (t2, c2) = model.word_vectors("quokka").unwrap();
    assert_eq!(t1, t2, "both map to the unknown row");
    assert_ne!(c1, c2);
    let (_, empty) = model.word_vectors("").unwrap();
    assert!(empty.iter().all(|&x| x == 0.0));
}

#[test]
fn aux_chain_composes_twice() {
    let s = could_have_done_ud();
    let model = ParserModel::new(tiny_config(true), vocab_of(std::slice::from_ref(&s)), 5);
    let mut g = Graph::new(&model.params);
    let st = follow_gold(&model, &mut g, &s);
    assert_eq!(st.compositions, 2);
    let enc_done = model.token_vectors(&s).unwrap().tokens[4].clone();
    assert_ne!(g.value(st.composed[5]), enc_done.as_slice());
    // Non-verbal dependents leave their heads alone.
    assert_eq!(g.value(st.composed[1]), model.token_vectors(&s).unwrap().tokens[0].as_slice());

    let plain = ParserModel::new(tiny_config(false), vocab_of(std::slice::from_ref(&s)), 5);
    let mut g = Graph::new(&plain.params);
    assert_eq!(follow_gold(&plain, &mut g, &s).compositions, 0);
}

#[test]
fn zero_composition_weights_give_zero_vectors() {
    let s = could_have_done_ud();
    let mut model = ParserModel::new(tiny_config(true), vocab_of(std::slice::from_ref(&s)), 5);
    for name in ["compose.w", "compose.b"] {
        let id = model.params.find(name).unwrap();
        model.params.get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    let mut g = Graph::new(&model.params);
    let st = follow_gold(&model, &mut g, &s);
    assert!(g.value(st.composed[5]).iter().all(|&x| x == 0.0));
}

/// Copy a non-recursive model into a recursive one whose scorer ignores
/// the composed half of every feature.
fn embed_plain_in_recursive(plain: &ParserModel, rec: &mut ParserModel) {
    let td = plain.config.token_dim();
    for id in plain.params.ids() {
        let name = plain.params.name(id).to_owned();
        let src = plain.params.get(id).clone();
        let dst_id = rec.params.find(&name).unwrap();
        let dst = rec.params.get_mut(dst_id);
        match name.as_str() {
            "pad" => {
                let mut data = src.data().to_vec();
                data.extend(vec![0.0; td]);
                *dst = Tensor::vector(data);
            }
            "mlp.hidden.w" => {
                let (rows, cols) = src.rows_cols();
                let mut data = Vec::with_capacity(rows * cols * 2);
                for r in 0..rows {
                    for block in src.row(r).chunks(td) {
                        data.extend_from_slice(block);
                        data.extend(vec![0.0; td]);
                    }
                }
                *dst = Tensor::new(vec![rows, 2 * cols], data).unwrap();
            }
            _ => *dst = src,
        }
    }
}

#[test]
fn recursive_scores_match_plain_when_composition_is_ignored() {
    let tb = synthetic::generate(20, 11);
    let plain = ParserModel::new(tiny_config(false), vocab_of(&tb), 1);
    let mut rec = ParserModel::new(tiny_config(true), vocab_of(&tb), 2);
    embed_plain_in_recursive(&plain, &mut rec);
    for s in &tb {
        let mut g1 = Graph::new(&plain.params);
        let e1 = plain.encode(&mut g1, s, None).unwrap();
        let st1 = plain.start(&mut g1, s, &e1).unwrap();
        let mut g2 = Graph::new(&rec.params);
        let e2 = rec.encode(&mut g2, s, None).unwrap();
        let st2 = rec.start(&mut g2, s, &e2).unwrap();
        let a = plain.score(&mut g1, &st1).unwrap();
        let b = rec.score(&mut g2, &st2).unwrap();
        for (x, y) in g1.value(a).iter().zip(g2.value(b)) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(plain.parse(s).unwrap().sentence, rec.parse(s).unwrap().sentence);
    }
}

#[test]
fn untrained_parses_are_trees() {
    let tb = synthetic::generate(60, 4);
    for recursive in [false, true] {
        let model = ParserModel::new(tiny_config(recursive), vocab_of(&tb), 9);
        for s in &tb {
            let out = model.parse(s).unwrap();
            out.sentence.validate().unwrap();
            assert_eq!(out.sentence.tokens.iter().filter(|t| t.head == 0).count(), 1);
            if recursive {
                assert_eq!(out.composed.unwrap().len(), s.len());
            }
        }
    }
}

fn quick_train(tb: &[Sentence], recursive: bool, epochs: usize, seed: u64) -> TrainedParser {
    let cfg = TrainConfig {
        epochs,
        seed,
        adam: crate::numeric::AdamConfig {
            lr: 0.01,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    let model = ModelConfig {
        lstm_hidden: 16,
        mlp_hidden: 32,
        ..tiny_config(recursive)
    };
    train_parser(tb, tb, model, &cfg, |_| {}).unwrap()
}

#[test]
fn memorizes_a_toy_treebank() {
    let tb = synthetic::generate(30, 21);
    for recursive in [false, true] {
        let trained = quick_train(&tb, recursive, 30, 3);
        let pred = parse_treebank(&trained.model, &tb).unwrap();
        let las = evaluate_las(&tb, &pred, true).unwrap().las;
        assert!(las >= 95.0, "recursive={} LAS {:.2}\n{}", recursive, las, render_log(&trained.log));
        assert_eq!(trained.log.len(), 30);
        let best = trained.log.iter().map(|e| e.dev_las.unwrap()).fold(f64::MIN, f64::max);
        assert_eq!(trained.log[trained.best_epoch - 1].dev_las, Some(best));
    }
}

#[test]
fn training_is_deterministic() {
    let tb = synthetic::generate(10, 5);
    let a = quick_train(&tb, true, 2, 8);
    let b = quick_train(&tb, true, 2, 8);
    assert_eq!(model_to_bytes(&a.model), model_to_bytes(&b.model));
    assert_eq!(a.log, b.log);
    let c = quick_train(&tb, true, 2, 9);
    assert_ne!(model_to_bytes(&a.model), model_to_bytes(&c.model));
}

#[test]
fn empty_training_set_is_rejected() {
    let err = train_parser(&[], &[], tiny_config(false), &TrainConfig::default(), |_| {});
    assert!(matches!(err, Err(ParserError::Usage(_))));
}

#[test]
fn save_load_round_trip() {
    let tb = synthetic::generate(100, 13);
    let model = quick_train(&tb[..20], true, 1, 1).model;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("parser.model");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded.config, model.config);
    assert_eq!(loaded.vocab, model.vocab);
    assert_eq!(model_to_bytes(&loaded), model_to_bytes(&model));
    for s in &tb {
        assert_eq!(loaded.parse(s).unwrap(), model.parse(s).unwrap());
    }
}

#[test]
fn damaged_model_files_are_reported() {
    let tb = synthetic::generate(5, 2);
    let model = ParserModel::new(tiny_config(false), vocab_of(&tb), 1);
    let bytes = model_to_bytes(&model);

    let mut flipped = bytes.clone();
    let last = flipped.len() - 1;
    flipped[last] ^= 0x40;
    assert!(matches!(model_from_bytes(&flipped), Err(ParserError::Integrity(_))));

    let truncated = &bytes[..bytes.len() - 9];
    assert!(matches!(model_from_bytes(truncated), Err(ParserError::Integrity(_))));

    let text = String::from_utf8_lossy(&bytes[..40]).into_owned();
    let bumped = [text.replacen("model\t1", "model\t7", 1).as_bytes(), &bytes[40..]].concat();
    match model_from_bytes(&bumped) {
        Err(e @ ParserError::Version { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains('7') && msg.contains('1'), "{}", msg);
        }
        other => panic!("expected a version error, got {:?}", other.map(|_| ())),
    }

    assert!(matches!(model_from_bytes(b"hello\n"), Err(ParserError::Format(_))));
}

#[test]
fn mismatched_parameter_shapes_are_rejected() {
    let tb = synthetic::generate(5, 2);
    let model = ParserModel::new(tiny_config(false), vocab_of(&tb), 1);
    let mut params = ParamSet::new();
    for id in model.params.ids() {
        let mut t = model.params.get(id).clone();
        if model.params.name(id) == "root" {
            t = Tensor::vector(vec![0.0; 3]);
        }
        params.push(model.params.name(id), t, model.params.is_sparse(id));
    }
    let r = ParserModel::from_parts(model.config.clone(), model.vocab.clone(), params);
    assert!(matches!(r, Err(ParserError::Integrity(_))));
}
