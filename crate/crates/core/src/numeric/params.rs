use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

/// Deterministic generator used for every random draw in the toolkit.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Glorot,
    /// Uniform in ±sqrt(3 / cols), for embedding tables.
    Embedding,
    Constant(f64),
}

#[derive(Clone, Debug)]
pub(crate) struct Param {
    pub(crate) name: String,
    pub(crate) value: Tensor,
    /// Only rows read through lookups receive gradient.
    pub(crate) sparse: bool,
}

/// Named collection of trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut impl Rng) -> ParamId {
        let mut value = Tensor::zeros(shape);
        let (rows, cols) = value.rows_cols();
        match init {
            Init::Glorot => {
                let bound = (6.0 / (rows + cols) as f64).sqrt();
                value
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.gen_range(-bound..bound));
            }
            Init::Embedding => {
                let bound = (3.0 / cols as f64).sqrt();
                value
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.gen_range(-bound..bound));
            }
            Init::Constant(c) => value.data_mut().iter_mut().for_each(|v| *v = c),
        }
        self.push(name, value, false)
    }

    /// Add an embedding table whose gradient is row-sparse.
    pub fn add_table(&mut self, name: &str, rows: usize, cols: usize, rng: &mut impl Rng) -> ParamId {
        let id = self.add(name, &[rows, cols], Init::Embedding, rng);
        self.params[id.0].sparse = true;
        id
    }

    pub fn push(&mut self, name: &str, value: Tensor, sparse: bool) -> ParamId {
        self.params.push(Param {
            name: name.to_owned(),
            value,
            sparse,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn is_sparse(&self, id: ParamId) -> bool {
        self.params[id.0].sparse
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn size(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Gradient buffers matching a [`ParamSet`]. Buffers are reused between
/// steps; the optimizer clears what it consumed.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub(crate) dense: Vec<Vec<f64>>,
    pub(crate) cols: Vec<usize>,
    /// Rows touched since the last clear, for sparse parameters.
    pub(crate) rows: Vec<Vec<usize>>,
    pub(crate) touched: Vec<bool>,
}

impl Gradients {
    pub fn new(params: &ParamSet) -> Self {
        Gradients {
            dense: params.params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            cols: params.params.iter().map(|p| p.value.rows_cols().1).collect(),
            rows: vec![Vec::new(); params.len()],
            touched: vec![false; params.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.dense[id.0]
    }

    pub(crate) fn dense_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.touched[id.0] = true;
        &mut self.dense[id.0]
    }

    pub(crate) fn row_mut(&mut self, id: ParamId, row: usize) -> &mut [f64] {
        self.touched[id.0] = true;
        let rows = &mut self.rows[id.0];
        if !rows.contains(&row) {
            rows.push(row);
        }
        let cols = self.cols[id.0];
        &mut self.dense[id.0][row * cols..(row + 1) * cols]
    }

    /// Rows that received gradient for a sparse parameter, ascending.
    pub fn touched_rows(&self, id: ParamId) -> Vec<usize> {
        let mut rows = self.rows[id.0].clone();
        rows.sort_unstable();
        rows
    }

    pub fn clear(&mut self) {
        for i in 0..self.dense.len() {
            if !self.touched[i] {
                continue;
            }
            if self.rows[i].is_empty() {
                self.dense[i].iter_mut().for_each(|g| *g = 0.0);
            } else {
                let cols = self.cols[i];
                for &r in &self.rows[i] {
                    self.dense[i][r * cols..(r + 1) * cols]
                        .iter_mut()
                        .for_each(|g| *g = 0.0);
                }
                self.rows[i].clear();
            }
            self.touched[i] = false;
        }
    }

    /// Multiply every gradient by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for buf in &mut self.dense {
            buf.iter_mut().for_each(|g| *g *= factor);
        }
    }
}
