//! Helpers shared by the integration tests: a finite-difference gradient
//! checker, an independent Student-t oracle and the published result table.
#![allow(dead_code)]

use nucleus_core::conllu::Sentence;
use nucleus_core::numeric::{Gradients, Graph, Init, NumericError, ParamId, ParamSet, Var};
use nucleus_core::parser::{ModelConfig, ParserModel, Vocab};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-4;

/// |a - b| relative to the larger magnitude, with a floor so that two tiny
/// numbers are compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference
/// gradients over every coordinate of every parameter in `ids`.
///
/// `loss` must compute the loss from the given parameters and accumulate
/// its gradient into the supplied buffer.
pub fn coordinate_check<F>(ps: &mut ParamSet, ids: &[ParamId], loss: F) -> f64
where
    F: Fn(&ParamSet, &mut Gradients) -> f64,
{
    let mut grads = Gradients::new(ps);
    loss(ps, &mut grads);
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| grads.get(id).to_vec()).collect();
    let mut worst = 0.0f64;
    for (grad, &id) in analytic.iter().zip(ids) {
        for (i, &a) in grad.iter().enumerate() {
            let fd = central_difference(ps, id, i, &loss);
            worst = worst.max(rel_err(a, fd));
        }
    }
    worst
}

fn central_difference<F>(ps: &mut ParamSet, id: ParamId, i: usize, loss: &F) -> f64
where
    F: Fn(&ParamSet, &mut Gradients) -> f64,
{
    let orig = ps.get(id).data()[i];
    ps.get_mut(id).data_mut()[i] = orig + EPS;
    let up = loss(ps, &mut Gradients::new(ps));
    ps.get_mut(id).data_mut()[i] = orig - EPS;
    let down = loss(ps, &mut Gradients::new(ps));
    ps.get_mut(id).data_mut()[i] = orig;
    (up - down) / (2.0 * EPS)
}

/// Compare the analytic directional derivative along a random unit
/// direction over all parameters with its central difference.
pub fn directional_check<F>(ps: &mut ParamSet, rng: &mut ChaCha8Rng, loss: F) -> f64
where
    F: Fn(&ParamSet, &mut Gradients) -> f64,
{
    let mut grads = Gradients::new(ps);
    loss(ps, &mut grads);
    let ids: Vec<ParamId> = ps.ids().collect();
    let mut dir: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| (0..ps.get(id).len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let norm = dir.iter().flatten().map(|d| d * d).sum::<f64>().sqrt();
    dir.iter_mut().flatten().for_each(|d| *d /= norm);
    let analytic: f64 = ids
        .iter()
        .zip(&dir)
        .map(|(&id, d)| grads.get(id).iter().zip(d).map(|(g, d)| g * d).sum::<f64>())
        .sum();

    let original: Vec<Vec<f64>> = ids.iter().map(|&id| ps.get(id).data().to_vec()).collect();
    let shifted = |sign: f64, ps: &mut ParamSet| {
        for ((&id, d), o) in ids.iter().zip(&dir).zip(&original) {
            for ((v, d), o) in ps.get_mut(id).data_mut().iter_mut().zip(d).zip(o) {
                *v = o + sign * EPS * d;
            }
        }
        loss(ps, &mut Gradients::new(ps))
    };
    let up = shifted(1.0, ps);
    let down = shifted(-1.0, ps);
    shifted(0.0, ps);
    rel_err(analytic, (up - down) / (2.0 * EPS))
}

/// Fill a parameter with uniform values in ±`scale`.
pub fn randomize(ps: &mut ParamSet, id: ParamId, scale: f64, rng: &mut ChaCha8Rng) {
    ps.get_mut(id)
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-scale..scale));
}

pub type Build = fn(&mut Graph, &[Var]) -> Result<Var, NumericError>;

/// Gradient check of a single op: `build` maps the parameters (as graph
/// nodes) to an output, which is reduced to a scalar by a fixed random
/// projection.
pub fn op_check(shapes: &[&[usize]], build: Build, rng: &mut ChaCha8Rng) -> f64 {
    let mut ps = ParamSet::new();
    let ids: Vec<ParamId> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| ps.add(&format!("p{}", i), s, Init::Constant(0.0), rng))
        .collect();
    for &id in &ids {
        randomize(&mut ps, id, 1.5, rng);
    }
    let proj_seed: u64 = rng.gen();
    coordinate_check(&mut ps, &ids.clone(), |ps, grads| {
        let mut g = Graph::new(ps);
        let vars: Vec<Var> = ids.iter().map(|&id| g.param(id).unwrap()).collect();
        let out = build(&mut g, &vars).unwrap();
        let n = g.value(out).len();
        let mut prng = nucleus_core::numeric::rng_from_seed(proj_seed);
        let proj = g.vector((0..n).map(|_| prng.gen_range(-1.0..1.0)).collect()).unwrap();
        let loss = g.dot(out, proj).unwrap();
        g.backward(loss, grads).unwrap();
        g.scalar(loss)
    })
}

// ---------------------------------------------------------------------
// Student-t reference, written without any statistics library.

/// The differentiable ops, each with its input shapes.
pub fn ops() -> Vec<(&'static str, Vec<&'static [usize]>, Build)> {
    vec![
        ("affine", vec![&[3, 4], &[4], &[3]], |g, v| g.affine(v[0], v[1], v[2])),
        ("matvec", vec![&[3, 4], &[4]], |g, v| g.matvec(v[0], v[1])),
        ("add", vec![&[5], &[5]], |g, v| g.add(v[0], v[1])),
        ("sub", vec![&[5], &[5]], |g, v| g.sub(v[0], v[1])),
        ("mul", vec![&[5], &[5]], |g, v| g.mul(v[0], v[1])),
        ("scale", vec![&[5]], |g, v| g.scale(v[0], -1.7)),
        ("tanh", vec![&[5]], |g, v| g.tanh(v[0])),
        ("sigmoid", vec![&[5]], |g, v| g.sigmoid(v[0])),
        ("concat", vec![&[2], &[3], &[1]], |g, v| g.concat(&[v[0], v[1], v[2]])),
        ("slice", vec![&[6]], |g, v| g.slice(v[0], 1, 3)),
        ("dot", vec![&[4], &[4]], |g, v| g.dot(v[0], v[1])),
        ("sum", vec![&[5]], |g, v| g.sum(v[0])),
        ("pick", vec![&[5]], |g, v| g.pick(v[0], 2)),
        ("sum_scalars", vec![&[5]], |g, v| {
            let parts = [g.pick(v[0], 0)?, g.pick(v[0], 3)?, g.pick(v[0], 3)?];
            g.sum_scalars(&parts)
        }),
        ("softmax_xent", vec![&[5]], |g, v| g.softmax_xent(v[0], 3)),
        ("fan_out", vec![&[4]], |g, v| {
            let t = g.tanh(v[0])?;
            let m = g.mul(t, v[0])?;
            g.add(m, t)
        }),
    ]
}

/// A parser small enough for exhaustive finite differences.
pub fn tiny_parser(treebank: &[Sentence], recursive: bool, seed: u64) -> ParserModel {
    let config = ModelConfig {
        word_dim: 5,
        char_dim: 3,
        char_hidden: 2,
        lstm_hidden: 3,
        lstm_layers: 1,
        mlp_hidden: 6,
        rel_dim: 3,
        recursive,
        ..ModelConfig::default()
    };
    ParserModel::new(config, Vocab::build(treebank), seed)
}

/// ln Γ(x) by the Lanczos approximation (g = 7, nine coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn t_density(x: f64, df: f64) -> f64 {
    let log_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (log_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f((a + b) / 2.0) + f(b))
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = (a + b) / 2.0;
    let (left, right) = (simpson(f, a, m), simpson(f, m, b));
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive(f, a, m, left, tol / 2.0, depth - 1) + adaptive(f, m, b, right, tol / 2.0, depth - 1)
}

/// P(T > t) by integrating the density. The upper tail is mapped onto a
/// finite interval with x = t + u / (1 - u).
pub fn t_upper_tail(t: f64, df: f64) -> f64 {
    if t < 0.0 {
        return 1.0 - t_upper_tail(-t, df);
    }
    let f = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let x = t + u / (1.0 - u);
        t_density(x, df) / ((1.0 - u) * (1.0 - u))
    };
    // Split so the adaptive rule sees the bulk and the tail separately.
    let cuts = [0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999, 1.0];
    cuts.windows(2)
        .map(|w| adaptive(&f, w[0], w[1], simpson(&f, w[0], w[1]), 1e-13, 50))
        .sum()
}

pub fn reference_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn reference_var(xs: &[f64]) -> f64 {
    let m = reference_mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// (t, df) of the paired test.
pub fn reference_paired(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    (reference_mean(&d) / (reference_var(&d) / n).sqrt(), n - 1.0)
}

/// (t, df) of Welch's test.
pub fn reference_welch(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (a, b) = (reference_var(xs) / nx, reference_var(ys) / ny);
    let t = (reference_mean(xs) - reference_mean(ys)) / (a + b).sqrt();
    let df = (a + b) * (a + b) / (a * a / (nx - 1.0) + b * b / (ny - 1.0));
    (t, df)
}

// ---------------------------------------------------------------------
// Published per-language results (task, column, ca, fi, hr, nl, av, sd,
// stars on av). Delta columns are accuracy minus majority.

pub struct PublishedColumn {
    pub task: &'static str,
    pub column: &'static str,
    pub values: [f64; 4],
    pub av: f64,
    pub sd: f64,
    pub stars: &'static str,
}

pub const TABLE: &[PublishedColumn] = &[
    PublishedColumn { task: "T", column: "FMV maj", values: [70.5, 59.2, 55.9, 61.7], av: 61.8, sd: 6.2, stars: "" },
    PublishedColumn { task: "T", column: "FMV tok", values: [88.7, 86.2, 79.7, 82.1], av: 84.2, sd: 4.0, stars: "" },
    PublishedColumn { task: "T", column: "FMV type", values: [79.4, 72.8, 71.3, 74.0], av: 74.4, sd: 3.5, stars: "" },
    PublishedColumn { task: "T", column: "FMV char", values: [75.0, 74.9, 70.6, 69.4], av: 72.5, sd: 2.9, stars: "" },
    PublishedColumn { task: "T", column: "FMV w2v", values: [74.4, 59.2, 57.8, 64.8], av: 64.0, sd: 7.5, stars: "" },
    PublishedColumn { task: "T", column: "punct maj", values: [67.5, 56.6, 61.5, 62.0], av: 61.9, sd: 4.5, stars: "" },
    PublishedColumn { task: "T", column: "punct tok", values: [71.3, 64.1, 62.7, 69.6], av: 66.9, sd: 4.2, stars: "" },
    PublishedColumn { task: "T", column: "δ FMV tok", values: [18.2, 27.0, 23.8, 20.5], av: 22.4, sd: 3.9, stars: "**" },
    PublishedColumn { task: "T", column: "δ FMV type", values: [9.0, 13.5, 15.4, 12.4], av: 12.6, sd: 2.7, stars: "*" },
    PublishedColumn { task: "T", column: "δ FMV char", values: [4.5, 15.6, 14.7, 7.7], av: 10.7, sd: 5.4, stars: "*" },
    PublishedColumn { task: "T", column: "δ FMV w2v", values: [3.9, 0.0, 1.8, 3.1], av: 2.2, sd: 1.7, stars: "" },
    PublishedColumn { task: "T", column: "δ punct tok", values: [3.8, 7.5, 1.2, 7.6], av: 5.0, sd: 3.1, stars: "*" },
    PublishedColumn { task: "A", column: "FMV maj", values: [74.4, 61.6, 60.9, 81.6], av: 69.6, sd: 10.1, stars: "" },
    PublishedColumn { task: "A", column: "FMV tok", values: [82.2, 86.0, 78.1, 87.2], av: 83.4, sd: 4.1, stars: "" },
    PublishedColumn { task: "A", column: "FMV type", values: [82.6, 63.2, 74.8, 85.7], av: 76.6, sd: 10.0, stars: "" },
    PublishedColumn { task: "A", column: "FMV char", values: [98.4, 93.5, 97.8, 96.3], av: 96.5, sd: 2.2, stars: "" },
    PublishedColumn { task: "A", column: "FMV w2v", values: [74.4, 61.6, 60.9, 81.6], av: 69.6, sd: 10.1, stars: "" },
    PublishedColumn { task: "A", column: "punct maj", values: [76.7, 59.7, 64.0, 81.8], av: 70.5, sd: 10.4, stars: "" },
    PublishedColumn { task: "A", column: "punct tok", values: [76.6, 59.7, 64.0, 80.5], av: 70.2, sd: 10.0, stars: "" },
    PublishedColumn { task: "A", column: "δ FMV tok", values: [7.7, 24.4, 17.2, 5.7], av: 13.7, sd: 8.7, stars: "*" },
    PublishedColumn { task: "A", column: "δ FMV type", values: [8.1, 1.6, 13.9, 4.2], av: 6.9, sd: 5.4, stars: "*" },
    PublishedColumn { task: "A", column: "δ FMV char", values: [24.0, 31.9, 36.9, 14.8], av: 26.9, sd: 9.7, stars: "**" },
    PublishedColumn { task: "A", column: "δ FMV w2v", values: [0.0, 0.0, 0.0, 0.0], av: 0.0, sd: 0.0, stars: "" },
    PublishedColumn { task: "A", column: "δ punct tok", values: [-0.1, 0.0, 0.0, -1.2], av: -0.3, sd: 0.6, stars: "" },
];
