use rand::Rng;

use super::{Graph, Init, NumericError, ParamId, ParamSet, Var};

/// One LSTM layer in one direction. Gate rows are stacked as
/// input, forget, output, candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weights: ParamId,
    pub bias: ParamId,
}

impl LstmParams {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        forget_bias: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let weights = params.add(
            &format!("{}.w", name),
            &[4 * hidden_dim, input_dim + hidden_dim],
            Init::Glorot,
            rng,
        );
        let bias = params.add(&format!("{}.b", name), &[4 * hidden_dim], Init::Constant(0.0), rng);
        params.get_mut(bias).data_mut()[hidden_dim..2 * hidden_dim]
            .iter_mut()
            .for_each(|b| *b = forget_bias);
        LstmParams {
            input_dim,
            hidden_dim,
            weights,
            bias,
        }
    }
}

/// One recurrence step; returns the new hidden and cell states.
pub fn lstm_step(g: &mut Graph, p: &LstmParams, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var), NumericError> {
    let h = p.hidden_dim;
    for (v, dim) in [(x, p.input_dim), (h_prev, h), (c_prev, h)] {
        if g.value(v).len() != dim {
            return Err(NumericError::Shape {
                op: "lstm_step",
                left: vec![dim],
                right: g.shape(v).to_vec(),
            });
        }
    }

    let w = g.param(p.weights)?;
    let b = g.param(p.bias)?;
    let xh = g.concat(&[x, h_prev])?;
    let z = g.affine(w, xh, b)?;

    let i = g.slice(z, 0, h)?;
    let i = g.sigmoid(i)?;
    let f = g.slice(z, h, h)?;
    let f = g.sigmoid(f)?;
    let o = g.slice(z, 2 * h, h)?;
    let o = g.sigmoid(o)?;
    let cand = g.slice(z, 3 * h, h)?;
    let cand = g.tanh(cand)?;

    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let c_squashed = g.tanh(c)?;
    let h_new = g.mul(o, c_squashed)?;
    Ok((h_new, c))
}

/// Run one direction over a sequence, returning hidden states in input order.
fn run_direction(g: &mut Graph, p: &LstmParams, xs: &[Var], reverse: bool) -> Result<Vec<Var>, NumericError> {
    let mut h = g.zeros(p.hidden_dim);
    let mut c = g.zeros(p.hidden_dim);
    let mut out = vec![h; xs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..xs.len()).rev())
    } else {
        Box::new(0..xs.len())
    };
    for t in order {
        let (h_next, c_next) = lstm_step(g, p, xs[t], h, c)?;
        h = h_next;
        c = c_next;
        out[t] = h;
    }
    Ok(out)
}

/// Stacked bidirectional encoder. Layer `k + 1` reads the concatenated
/// outputs of layer `k`; the result is the top layer's `[forward; backward]`
/// state at every position.
pub fn bilstm_encode(g: &mut Graph, fwd: &[LstmParams], bwd: &[LstmParams], xs: &[Var]) -> Result<Vec<Var>, NumericError> {
    if xs.is_empty() {
        return Err(NumericError::Usage("BiLSTM over an empty sequence".to_owned()));
    }
    if fwd.len() != bwd.len() || fwd.is_empty() {
        return Err(NumericError::Usage(format!(
            "BiLSTM needs matching layer stacks, got {} forward and {} backward",
            fwd.len(),
            bwd.len()
        )));
    }

    let mut layer_input = xs.to_vec();
    for (pf, pb) in fwd.iter().zip(bwd) {
        let forward = run_direction(g, pf, &layer_input, false)?;
        let backward = run_direction(g, pb, &layer_input, true)?;
        layer_input = forward
            .iter()
            .zip(&backward)
            .map(|(f, b)| g.concat(&[*f, *b]))
            .collect::<Result<_, _>>()?;
    }
    Ok(layer_input)
}

/// Parameters of a stacked BiLSTM.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiLstm {
    pub forward: Vec<LstmParams>,
    pub backward: Vec<LstmParams>,
}

impl BiLstm {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        layers: usize,
        forget_bias: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut forward = Vec::with_capacity(layers);
        let mut backward = Vec::with_capacity(layers);
        for layer in 0..layers {
            let in_dim = if layer == 0 { input_dim } else { 2 * hidden_dim };
            forward.push(LstmParams::new(
                params,
                &format!("{}.l{}.fwd", name, layer),
                in_dim,
                hidden_dim,
                forget_bias,
                rng,
            ));
            backward.push(LstmParams::new(
                params,
                &format!("{}.l{}.bwd", name, layer),
                in_dim,
                hidden_dim,
                forget_bias,
                rng,
            ));
        }
        BiLstm { forward, backward }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.last().map(|p| p.hidden_dim).unwrap_or(0)
    }

    pub fn encode(&self, g: &mut Graph, xs: &[Var]) -> Result<Vec<Var>, NumericError> {
        bilstm_encode(g, &self.forward, &self.backward, xs)
    }
}
