use super::{Gradients, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Row-sparse parameters only update the rows
/// that received gradient in the current step.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros = || -> Vec<Vec<f64>> { params.ids().map(|id| vec![0.0; params.get(id).len()]).collect() };
        Adam {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Apply and then clear `grads`.
    pub fn update(&mut self, params: &mut ParamSet, grads: &mut Gradients) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let lr_t = lr * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));

        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let i = id.index();
            if !grads.touched[i] {
                continue;
            }
            let cols = grads.cols[i];
            let ranges: Vec<(usize, usize)> = if grads.rows[i].is_empty() {
                vec![(0, grads.dense[i].len())]
            } else {
                let mut rows = grads.rows[i].clone();
                rows.sort_unstable();
                rows.into_iter().map(|r| (r * cols, (r + 1) * cols)).collect()
            };

            let value = params.get_mut(id).data_mut();
            let (m, v, g) = (&mut self.first[i], &mut self.second[i], &grads.dense[i]);
            for (start, end) in ranges {
                for k in start..end {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                    value[k] -= lr_t * m[k] / (v[k].sqrt() + eps);
                }
            }
        }
        grads.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{rng_from_seed, Graph, Init};

    #[test]
    fn minimises_quadratic() {
        let mut ps = ParamSet::new();
        let mut rng = rng_from_seed(0);
        let x = ps.add("x", &[2], Init::Constant(3.0), &mut rng);
        let mut grads = Gradients::new(&ps);
        let mut adam = Adam::new(&ps, AdamConfig { lr: 0.05, ..Default::default() });
        for _ in 0..2000 {
            let mut g = Graph::new(&ps);
            let xv = g.param(x).unwrap();
            let loss = g.dot(xv, xv).unwrap();
            g.backward(loss, &mut grads).unwrap();
            drop(g);
            adam.update(&mut ps, &mut grads);
        }
        assert!(ps.get(x).data().iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn sparse_rows_only() {
        let mut ps = ParamSet::new();
        let mut rng = rng_from_seed(0);
        let e = ps.add_table("e", 4, 2, &mut rng);
        let before = ps.get(e).clone();
        let mut grads = Gradients::new(&ps);
        let mut adam = Adam::new(&ps, AdamConfig::default());
        {
            let mut g = Graph::new(&ps);
            let r = g.lookup(e, 2).unwrap();
            let s = g.sum(r).unwrap();
            g.backward(s, &mut grads).unwrap();
        }
        assert_eq!(grads.touched_rows(e), vec![2]);
        adam.update(&mut ps, &mut grads);
        let after = ps.get(e);
        for row in 0..4 {
            assert_eq!(row == 2, after.row(row) != before.row(row));
        }
        assert!(grads.get(e).iter().all(|g| *g == 0.0));
    }
}
