use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::param::join;
use crate::numeric::{Module, Parameter, Tensor};

/// Dense lookup table whose row 0 is the out-of-vocabulary bucket.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub table: Parameter,
}

impl EmbeddingTable {
    pub fn new(vocab: usize, dim: usize, seed: u64) -> Self {
        assert!(vocab >= 1 && dim >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..vocab * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self {
            table: Parameter::new(Tensor::new(vec![vocab, dim], data).expect("shape")),
        }
    }

    pub fn vocab(&self) -> usize {
        self.table.value.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.value.shape()[1]
    }

    /// Row for `id`; anything outside `1..vocab` maps to row 0.
    pub fn index(&self, id: i64) -> usize {
        if id > 0 && (id as u64) < self.vocab() as u64 {
            id as usize
        } else {
            0
        }
    }

    pub fn row(&self, idx: usize) -> &[f64] {
        self.table.value.row(idx)
    }

    pub fn lookup(&self, id: i64) -> &[f64] {
        self.row(self.index(id))
    }

    pub fn add_grad(&mut self, idx: usize, g: &[f64]) {
        for (a, b) in self.table.grad.row_mut(idx).iter_mut().zip(g) {
            *a += b;
        }
    }
}

impl Module for EmbeddingTable {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        f(&join(prefix, "table"), &self.table);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        f(&join(prefix, "table"), &mut self.table);
    }
}
