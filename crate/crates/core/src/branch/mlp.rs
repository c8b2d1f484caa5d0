use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One affine layer, `x W + b` with `W` stored `fan_in x fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Fully connected network with tanh on every hidden layer and a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform weights, zero biases.
pub fn init_mlp(layer_sizes: &[usize], seed: u64) -> Result<MlpParams> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::InvalidParameter(format!(
            "layer sizes must have at least two nonzero entries, got {layer_sizes:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = glorot_limit(fan_in, fan_out);
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            Dense {
                weights: Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(&mut rng)),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(MlpParams { layers })
}

impl MlpParams {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            Error::check_dim("layer bias length", l.weights.ncols(), l.bias.len())?;
            if i > 0 {
                Error::check_dim("layer chaining", layers[i - 1].weights.ncols(), l.weights.nrows())?;
            }
        }
        let params = MlpParams { layers };
        if !params.is_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(params)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weights.nrows()];
        sizes.extend(self.layers.iter().map(|l| l.weights.ncols()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weights.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    /// Parameter blocks in a fixed order: `W_0, b_0, W_1, b_1, ...`.
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weights.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| {
            [
                l.weights.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
    }

    /// Batch forward pass, `batch x n -> batch x p`.
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        Error::check_dim("branch input width", self.input_dim(), input.ncols())?;
        let last = self.layers.len() - 1;
        let mut h = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weights) + &layer.bias;
            if i < last {
                h.mapv_inplace(f64::tanh);
            }
        }
        Ok(h)
    }

    /// Loss of `forward(input)` against `targets` together with its gradient.
    pub fn backward(
        &self,
        input: ArrayView2<f64>,
        targets: ArrayView2<f64>,
    ) -> Result<(f64, MlpParams)> {
        Error::check_dim("branch input width", self.input_dim(), input.ncols())?;
        Error::check_dim("target width", self.output_dim(), targets.ncols())?;
        Error::check_dim("target rows", input.nrows(), targets.nrows())?;
        let last = self.layers.len() - 1;
        // activations[i] is the input to layer i
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let mut h = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let next = {
                let mut z = h.dot(&layer.weights) + &layer.bias;
                if i < last {
                    z.mapv_inplace(f64::tanh);
                }
                z
            };
            activations.push(h);
            h = next;
        }
        let pred = h;
        let batch = input.nrows() as f64;
        let diff = &pred - &targets;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / batch;

        let mut grads = self.zeros_like();
        // dL/dpred
        let mut delta = diff * (2.0 / batch);
        for i in (0..self.layers.len()).rev() {
            let a = &activations[i];
            grads.layers[i].weights = a.t().dot(&delta).as_standard_layout().into_owned();
            grads.layers[i].bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                // a = tanh(.) for hidden layers: d tanh = 1 - a^2
                ndarray::Zip::from(&mut back)
                    .and(a)
                    .for_each(|b, &act| *b *= 1.0 - act * act);
                delta = back;
            }
        }
        Ok((loss, grads))
    }
}

/// `(1/B) sum_b ||pred_b - target_b||^2`.
pub fn loss_mse(pred: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
    Error::check_dim("loss rows", pred.nrows(), targets.nrows())?;
    Error::check_dim("loss columns", pred.ncols(), targets.ncols())?;
    if pred.nrows() == 0 {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let total: f64 = pred
        .rows()
        .into_iter()
        .zip(targets.rows())
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(total / pred.nrows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_mlp(&[3, 16, 16, 2], 42).unwrap();
        let b = init_mlp(&[3, 16, 16, 2], 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_mlp(&[3, 16, 16, 2], 43).unwrap());
        for l in &a.layers {
            let lim = glorot_limit(l.weights.nrows(), l.weights.ncols());
            assert!(l.weights.iter().all(|w| w.abs() <= lim));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(a.layer_sizes(), vec![3, 16, 16, 2]);
        assert!(init_mlp(&[3], 0).is_err());
        assert!(init_mlp(&[3, 0, 2], 0).is_err());
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut net = init_mlp(&[2, 4, 3], 1).unwrap();
        for l in &mut net.layers {
            l.weights.fill(0.0);
        }
        net.layers[1].bias = array![1.0, -2.0, 0.5];
        let out = net.forward(random(5, 2, 2).view()).unwrap();
        for row in out.rows() {
            assert_eq!(row, array![1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn single_layer_is_affine() {
        let net = MlpParams::from_layers(vec![Dense {
            weights: array![[2.0, 0.0], [0.0, -1.0]],
            bias: array![0.5, 1.0],
        }])
        .unwrap();
        let out = net.forward(array![[1.0, 3.0], [-2.0, 0.0]].view()).unwrap();
        assert_eq!(out, array![[2.5, -2.0], [-3.5, 1.0]]);
        assert!(net.forward(array![[1.0]].view()).is_err());
    }

    #[test]
    fn hidden_activations_saturate() {
        let mut net = init_mlp(&[1, 5, 1], 3).unwrap();
        net.layers[1].weights.fill(1.0);
        let out = net.forward(array![[1e6], [-1e6]].view()).unwrap();
        // each hidden unit lies in [-1, 1] so the output is bounded by the fan-in
        assert!(out.iter().all(|v| v.abs() <= 5.0));
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let net = init_mlp(&[3, 4, 5, 2], 7).unwrap();
        let x = random(4, 3, 8);
        let out = net.forward(x.view()).unwrap();
        for b in 0..4 {
            let mut h: Vec<f64> = x.row(b).to_vec();
            for (li, l) in net.layers.iter().enumerate() {
                let mut next = vec![0.0; l.weights.ncols()];
                for (o, slot) in next.iter_mut().enumerate() {
                    let mut s = l.bias[o];
                    for (i, hv) in h.iter().enumerate() {
                        s += hv * l.weights[[i, o]];
                    }
                    *slot = if li + 1 < net.layers.len() { s.tanh() } else { s };
                }
                h = next;
            }
            for o in 0..2 {
                assert!((out[[b, o]] - h[o]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_examples() {
        let a = array![[1.0, 2.0]];
        assert_eq!(loss_mse(a.view(), a.view()).unwrap(), 0.0);
        assert_eq!(loss_mse(array![[3.0, 4.0]].view(), array![[0.0, 0.0]].view()).unwrap(), 25.0);
        let pred = array![[1.0, 1.0], [2.0, 0.0]];
        let tgt = array![[0.0, 0.0], [0.0, 0.0]];
        assert_eq!(loss_mse(pred.view(), tgt.view()).unwrap(), 3.0);
        assert!(loss_mse(pred.view(), array![[0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn gradients_vanish_at_targets() {
        let net = init_mlp(&[2, 6, 3], 9).unwrap();
        let x = random(4, 2, 10);
        let y = net.forward(x.view()).unwrap();
        let (loss, g) = net.backward(x.view(), y.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.blocks().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn output_bias_gradient_closed_form() {
        let net = init_mlp(&[2, 6, 3], 11).unwrap();
        let x = random(5, 2, 12);
        let y = random(5, 3, 13);
        let pred = net.forward(x.view()).unwrap();
        let (_, g) = net.backward(x.view(), y.view()).unwrap();
        let expect = (&pred - &y).sum_axis(Axis(0)) * (2.0 / 5.0);
        let got = &g.layers[1].bias;
        assert!((got - &expect).iter().all(|d| d.abs() < 1e-14));
    }

    /// Central differences with h = 1e-6 over every parameter of a small net.
    #[test]
    fn gradients_match_finite_differences() {
        let net = init_mlp(&[3, 7, 5, 2], 14).unwrap();
        let x = random(6, 3, 15);
        let y = random(6, 2, 16);
        let (_, g) = net.backward(x.view(), y.view()).unwrap();
        let analytic: Vec<f64> = g.blocks().flat_map(|b| b.to_vec()).collect();
        let h = 1e-6;
        let mut probe = net.clone();
        let total = net.num_params();
        for k in 0..total {
            let set = |p: &mut MlpParams, delta: f64| {
                let mut seen = 0;
                for block in p.blocks_mut() {
                    if k < seen + block.len() {
                        block[k - seen] += delta;
                        return;
                    }
                    seen += block.len();
                }
            };
            set(&mut probe, h);
            let lp = loss_mse(probe.forward(x.view()).unwrap().view(), y.view()).unwrap();
            set(&mut probe, -2.0 * h);
            let lm = loss_mse(probe.forward(x.view()).unwrap().view(), y.view()).unwrap();
            set(&mut probe, h);
            let fd = (lp - lm) / (2.0 * h);
            let a = analytic[k];
            let rel = (fd - a).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-5, "param {k}: fd {fd} analytic {a}");
        }
    }
}
