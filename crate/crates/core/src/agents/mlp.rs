//! Fully connected ReLU network with hand-written backpropagation.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `(outputs, inputs)`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Hidden layers use ReLU, the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Parameter-shaped gradient (or momentum) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Grads {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.len())))
                .collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|(w, b)| w.iter().chain(b).map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for (w, b) in &mut self.layers {
            *w *= k;
            *b *= k;
        }
    }

    /// Weights then biases, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b).copied().collect::<Vec<_>>())
            .collect()
    }
}

impl Mlp {
    /// `sizes` lists the width of every layer, input first.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs an input and an output layer");
        Mlp {
            layers: sizes
                .windows(2)
                .map(|p| Dense {
                    w: Array2::zeros((p[1], p[0])),
                    b: Array1::zeros(p[1]),
                })
                .collect(),
        }
    }

    /// He-uniform weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut net = Mlp::zeros(sizes);
        for layer in &mut net.layers {
            let bound = (6.0 / layer.w.ncols() as f64).sqrt();
            layer.w.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied().collect::<Vec<_>>())
            .collect()
    }

    /// # Panics
    /// If `params.len()` differs from [`Mlp::num_params`].
    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params());
        let mut it = params.iter();
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = *it.next().expect("length checked");
            }
        }
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            a = l.w.dot(&a) + &l.b;
            if i < last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        a
    }

    /// Rows of `x` are samples.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).pop().expect("non-empty")
    }

    /// Activations of every layer, input first.
    fn forward_cached(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.w.t()) + &l.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Mean squared error between `Q(x_k)[actions_k]` and `targets_k`.
    pub fn loss(&self, x: ArrayView2<f64>, actions: &[usize], targets: &[f64]) -> f64 {
        let q = self.forward_batch(x);
        let n = targets.len() as f64;
        actions
            .iter()
            .zip(targets)
            .enumerate()
            .map(|(k, (&a, &y))| (q[[k, a]] - y).powi(2))
            .sum::<f64>()
            / n
    }

    /// Loss as in [`Mlp::loss`] and its gradient for every parameter.
    pub fn loss_and_gradient(
        &self,
        x: ArrayView2<f64>,
        actions: &[usize],
        targets: &[f64],
    ) -> (f64, Grads) {
        let acts = self.forward_cached(x);
        let q = acts.last().expect("non-empty");
        let n = targets.len() as f64;
        let mut delta = Array2::<f64>::zeros(q.raw_dim());
        let mut loss = 0.0;
        for (k, (&a, &y)) in actions.iter().zip(targets).enumerate() {
            let err = q[[k, a]] - y;
            loss += err * err;
            delta[[k, a]] = 2.0 * err / n;
        }
        loss /= n;

        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &acts[i];
            let gw = delta.t().dot(input);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].w);
                // ReLU derivative, read off the stored post-activation.
                Zip::from(&mut back).and(input).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        (loss, Grads { layers: grads })
    }

    /// `velocity = momentum * velocity + grad; params -= lr * velocity`.
    pub fn sgd_momentum_step(&mut self, grads: &Grads, velocity: &mut Grads, lr: f64, momentum: f64) {
        for ((layer, (gw, gb)), (vw, vb)) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut velocity.layers)
        {
            Zip::from(&mut *vw).and(gw).for_each(|v, &g| *v = momentum * *v + g);
            Zip::from(&mut *vb).and(gb).for_each(|v, &g| *v = momentum * *v + g);
            layer.w.scaled_add(-lr, vw);
            layer.b.scaled_add(-lr, vb);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[5, 4, 3]);
        let out = net.forward(array![1.0, -2.0, 3.0, 0.5, 9.0].view());
        assert_eq!(out, Array1::<f64>::zeros(3));
    }

    #[test]
    fn single_terminal_sample_loss() {
        let mut rng = crate::env::rng_for(3, 4);
        let net = Mlp::new(&[2, 4, 2], &mut rng);
        let x = array![[0.3, -0.7]];
        let q = net.forward(x.row(0));
        let loss = net.loss(x.view(), &[1], &[1.0]);
        assert!((loss - (q[1] - 1.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn batch_forward_matches_single() {
        let mut rng = crate::env::rng_for(1, 4);
        let net = Mlp::new(&[3, 8, 8, 2], &mut rng);
        let x = array![[0.1, 0.2, 0.3], [-1.0, 0.0, 2.0]];
        let batch = net.forward_batch(x.view());
        for k in 0..2 {
            let single = net.forward(x.row(k));
            for a in 0..2 {
                assert!((batch[[k, a]] - single[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn params_round_trip() {
        let mut rng = crate::env::rng_for(2, 4);
        let net = Mlp::new(&[4, 3, 2], &mut rng);
        let mut other = Mlp::zeros(&[4, 3, 2]);
        other.set_params(&net.params());
        assert_eq!(net, other);
        assert_eq!(net.num_params(), 4 * 3 + 3 + 3 * 2 + 2);
    }
}
