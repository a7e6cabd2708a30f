//! Central finite differences against the tape's analytic gradients.

mod common;

use common::{coordinate_check, directional_check, op_check, ops, randomize, rel_err, tiny_parser};
use nucleus_core::conllu::{Sentence, Token};
use nucleus_core::numeric::{lstm_step, rng_from_seed, BiLstm, Graph, LstmParams, ParamId, ParamSet, Var};
use nucleus_core::parser::{sentence_loss, ParserModel};
use nucleus_core::synthetic;
use rand::Rng;

const TRIALS: u64 = 100;
/// Per-op tolerance; smooth ops in f64 do far better than this.
const OP_TOL: f64 = 1e-4;
const PARSER_TOL: f64 = 1e-3;

#[test]
fn every_op_matches_finite_differences() {
    for (name, shapes, build) in ops() {
        let mut rng = rng_from_seed(17);
        let worst = (0..TRIALS)
            .map(|_| op_check(&shapes, build, &mut rng))
            .fold(0.0, f64::max);
        assert!(worst < OP_TOL, "{}: relative error {:e}", name, worst);
    }
}

/// The hinge is piecewise linear; points within reach of a kink (ties in
/// either argmax, or the margin exactly met) have no derivative and are
/// redrawn.
#[test]
fn hinge_matches_finite_differences_away_from_kinks() {
    let (good, bad) = ([0usize, 2], [1usize, 3, 4, 5]);
    let mut rng = rng_from_seed(5);
    let mut checked = 0;
    while checked < TRIALS {
        let scores: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let top = |set: &[usize]| {
            let mut v: Vec<f64> = set.iter().map(|&i| scores[i]).collect();
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            v
        };
        let (tg, tb) = (top(&good), top(&bad));
        let slack = 1.0 - tg[0] + tb[0];
        if tg[0] - tg[1] < 1e-2 || tb[0] - tb[1] < 1e-2 || slack.abs() < 1e-2 {
            continue;
        }
        let mut ps = ParamSet::new();
        let id = ps.add("s", &[6], nucleus_core::numeric::Init::Constant(0.0), &mut rng);
        ps.get_mut(id).data_mut().copy_from_slice(&scores);
        let worst = coordinate_check(&mut ps, &[id], |ps, grads| {
            let mut g = Graph::new(ps);
            let s = g.param(id).unwrap();
            let l = g.hinge(s, &good, &bad, 1.0).unwrap();
            g.backward(l, grads).unwrap();
            g.scalar(l)
        });
        assert!(worst < OP_TOL, "hinge: relative error {:e}", worst);
        checked += 1;
    }
}

#[test]
fn lookup_rows_match_finite_differences() {
    let mut rng = rng_from_seed(9);
    for _ in 0..TRIALS {
        let mut ps = ParamSet::new();
        let table = ps.add_table("e", 4, 3, &mut rng);
        randomize(&mut ps, table, 1.0, &mut rng);
        let worst = coordinate_check(&mut ps, &[table], |ps, grads| {
            let mut g = Graph::new(ps);
            let a = g.lookup(table, 1).unwrap();
            let b = g.lookup(table, 3).unwrap();
            let c = g.lookup(table, 1).unwrap();
            let ab = g.mul(a, b).unwrap();
            let t = g.tanh(ab).unwrap();
            let s = g.add(t, c).unwrap();
            let l = g.sum(s).unwrap();
            g.backward(l, grads).unwrap();
            g.scalar(l)
        });
        assert!(worst < OP_TOL, "lookup: relative error {:e}", worst);
    }
}

#[test]
fn three_chained_lstm_steps() {
    let mut rng = rng_from_seed(21);
    for _ in 0..TRIALS {
        let mut ps = ParamSet::new();
        let p = LstmParams::new(&mut ps, "l", 3, 2, 1.0, &mut rng);
        let xs: Vec<ParamId> = (0..3)
            .map(|i| ps.add(&format!("x{}", i), &[3], nucleus_core::numeric::Init::Constant(0.0), &mut rng))
            .collect();
        let ids: Vec<ParamId> = ps.ids().collect();
        for &id in &ids {
            randomize(&mut ps, id, 1.0, &mut rng);
        }
        let worst = coordinate_check(&mut ps, &ids, |ps, grads| {
            let mut g = Graph::new(ps);
            let (mut h, mut c) = (g.zeros(2), g.zeros(2));
            for &x in &xs {
                let xv = g.param(x).unwrap();
                (h, c) = lstm_step(&mut g, &p, xv, h, c).unwrap();
            }
            let hc = g.concat(&[h, c]).unwrap();
            let w = g.vector(vec![0.3, -1.1, 0.7, 0.4]).unwrap();
            let l = g.dot(hc, w).unwrap();
            g.backward(l, grads).unwrap();
            g.scalar(l)
        });
        assert!(worst < OP_TOL, "lstm chain: relative error {:e}", worst);
    }
}

#[test]
fn bilstm_over_four_positions() {
    let mut rng = rng_from_seed(23);
    for _ in 0..TRIALS {
        let mut ps = ParamSet::new();
        let enc = BiLstm::new(&mut ps, "enc", 3, 2, 2, 1.0, &mut rng);
        let xs: Vec<ParamId> = (0..4)
            .map(|i| ps.add(&format!("x{}", i), &[3], nucleus_core::numeric::Init::Constant(0.0), &mut rng))
            .collect();
        for &x in &xs {
            randomize(&mut ps, x, 1.0, &mut rng);
        }
        let proj: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ids: Vec<ParamId> = ps.ids().collect();
        let worst = coordinate_check(&mut ps, &ids, |ps, grads| {
            let mut g = Graph::new(ps);
            let inputs: Vec<Var> = xs.iter().map(|&x| g.param(x).unwrap()).collect();
            let out = enc.encode(&mut g, &inputs).unwrap();
            let all = g.concat(&out).unwrap();
            let w = g.vector(proj.clone()).unwrap();
            let l = g.dot(all, w).unwrap();
            g.backward(l, grads).unwrap();
            g.scalar(l)
        });
        assert!(worst < OP_TOL, "bilstm: relative error {:e}", worst);
    }
}

fn three_words() -> Sentence {
    Sentence::new(vec![
        Token::new(1, "I", "PRON", 2, "nsubj"),
        Token::new(2, "did", "VERB", 0, "root").with_feats("VerbForm=Fin"),
        Token::new(3, "this", "PRON", 2, "obj"),
    ])
}

#[test]
fn full_parser_loss_on_a_three_word_sentence() {
    let s = three_words();
    for recursive in [false, true] {
        let mut model = tiny_parser(std::slice::from_ref(&s), recursive, 4);
        let ids: Vec<ParamId> = model.params.ids().collect();
        let worst = coordinate_check(&mut model.params, &ids, |ps, grads| {
            let m = ParserModel::from_parts(model.config.clone(), model.vocab.clone(), ps.clone()).unwrap();
            sentence_loss(&m, &s, 1.0, grads).unwrap()
        });
        assert!(worst < PARSER_TOL, "recursive={}: relative error {:e}", recursive, worst);
    }
}

#[test]
fn full_parser_loss_on_random_sentences() {
    let tb = synthetic::generate(TRIALS as usize, 31);
    let mut rng = rng_from_seed(77);
    let (mut worst, mut active) = (0.0f64, 0);
    for (i, s) in tb.iter().enumerate() {
        let recursive = i % 2 == 1;
        let mut model = tiny_parser(std::slice::from_ref(s), recursive, i as u64);
        let mut scratch = nucleus_core::numeric::Gradients::new(&model.params);
        active += (sentence_loss(&model, s, 1.0, &mut scratch).unwrap() > 0.0) as usize;
        let config = model.config.clone();
        let vocab = model.vocab.clone();
        let err = directional_check(&mut model.params, &mut rng, |ps, grads| {
            let m = ParserModel::from_parts(config.clone(), vocab.clone(), ps.clone()).unwrap();
            sentence_loss(&m, s, 1.0, grads).unwrap()
        });
        worst = worst.max(err);
    }
    assert!(worst < PARSER_TOL, "relative error {:e}", worst);
    // an untrained scorer violates the margin almost everywhere
    assert!(active >= 90, "only {} trials had a nonzero loss", active);
}

#[test]
fn rel_err_is_symmetric_and_floored() {
    assert_eq!(rel_err(1.0, 1.0), 0.0);
    assert_eq!(rel_err(2.0, 1.0), rel_err(1.0, 2.0));
    assert!(rel_err(1e-12, 0.0) < 1e-5);
}
