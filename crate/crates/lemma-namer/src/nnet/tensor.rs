//! Dense arrays and named parameter storage.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Row-major dense array of f64. Training math runs in 64-bit; checkpoints
/// store 32-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape, data: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered, named parameter tensors. Order is the registration order and is
/// the canonical order for checkpoints and gradient buffers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    /// Register a tensor initialized i.i.d. uniform on [-0.1, 0.1].
    pub fn register_uniform(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| rng.gen_range(-0.1..0.1)).collect();
        self.register(name, Tensor { shape, data })
    }

    pub fn register(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name_of(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Gradient buffers aligned with a `ParamSet`.
#[derive(Debug, Clone)]
pub struct GradStore {
    pub grads: Vec<Vec<f64>>,
}

impl GradStore {
    pub fn zeros_like(params: &ParamSet) -> GradStore {
        GradStore { grads: (0..params.len()).map(|i| vec![0.0; params.get(i).len()]).collect() }
    }

    pub fn clear(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn add_from(&mut self, other: &GradStore) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn uniform_init_is_bounded_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParamSet::new();
        let id = ps.register_uniform("w", vec![50, 40], &mut rng);
        assert!(ps.get(id).data.iter().all(|&v| (-0.1..0.1).contains(&v)));

        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        let mut ps2 = ParamSet::new();
        let id2 = ps2.register_uniform("w", vec![50, 40], &mut rng2);
        assert_eq!(ps.get(id).data, ps2.get(id2).data);
    }

    #[test]
    fn sample_mean_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut ps = ParamSet::new();
        let id = ps.register_uniform("big", vec![1_000_000], &mut rng);
        let mean: f64 = ps.get(id).data.iter().sum::<f64>() / 1e6;
        assert!(mean.abs() < 1e-3, "mean = {mean}");
    }
}
