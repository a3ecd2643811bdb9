use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Real;

/// Fully connected layer, `y = x W + b` with `W` shaped `(inputs, outputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

/// Stack of dense layers with tanh between them and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Layer inputs recorded by [`Mlp::forward_tape`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTape<T> {
    inputs: Vec<Array2<T>>,
}

/// `rows x cols` matrix (`rows >= cols`) with orthonormal columns, by
/// modified Gram-Schmidt on a gaussian draw.
fn orthonormal_columns<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    debug_assert!(rows >= cols);
    let mut a = Array2::<f64>::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal));
    for j in 0..cols {
        for k in 0..j {
            let dot = a.column(j).dot(&a.column(k));
            let prev = a.column(k).to_owned();
            a.column_mut(j).scaled_add(-dot, &prev);
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt().max(1e-12);
        a.column_mut(j).mapv_inplace(|v| v / norm);
    }
    a
}

/// Orthogonal `(inputs, outputs)` matrix scaled by `gain`.
pub fn orthogonal<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let m = if inputs >= outputs {
        orthonormal_columns(inputs, outputs, rng)
    } else {
        orthonormal_columns(outputs, inputs, rng)
            .reversed_axes()
            .as_standard_layout()
            .into_owned()
    };
    m * gain
}

impl<T: Real> Mlp<T> {
    /// Hidden layers get gain `sqrt(2)`, the output layer `output_gain`;
    /// biases start at zero.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, output_gain: f64, rng: &mut R) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i == last { output_gain } else { 2f64.sqrt() };
                Dense {
                    weight: orthogonal(w[0], w[1], gain, rng).mapv(T::lit),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.mapv(|v| U::lit(v.as_f64())),
                    bias: l.bias.mapv(|v| U::lit(v.as_f64())),
                })
                .collect(),
        }
    }

    fn affine(layer: &Dense<T>, x: ArrayView2<T>) -> Array2<T> {
        let mut z = x.dot(&layer.weight);
        z += &layer.bias;
        z
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut h = Self::affine(&self.layers[0], x);
        for layer in &self.layers[1..] {
            h.mapv_inplace(T::activation);
            h = Self::affine(layer, h.view());
        }
        h
    }

    pub fn forward_tape(&self, x: ArrayView2<T>) -> (Array2<T>, MlpTape<T>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_owned());
        let mut h = Self::affine(&self.layers[0], x);
        for layer in self.layers.iter().skip(1) {
            h.mapv_inplace(T::activation);
            let next = Self::affine(layer, h.view());
            inputs.push(h);
            h = next;
        }
        (h, MlpTape { inputs })
    }

    /// Accumulates parameter gradients of a scalar loss into `grads`, given
    /// `d_out = dLoss/dOutput` for the batch recorded in `tape`.
    pub fn backward(&self, tape: &MlpTape<T>, d_out: ArrayView2<T>, grads: &mut Mlp<T>) {
        let mut delta = d_out.to_owned();
        for i in (0..self.layers.len()).rev() {
            let input = &tape.inputs[i];
            let g = &mut grads.layers[i];
            ndarray::linalg::general_mat_mul(T::one(), &input.t(), &delta, T::one(), &mut g.weight);
            g.bias += &delta.sum_axis(Axis(0));
            if i > 0 {
                let mut prev = delta.dot(&self.layers[i].weight.t());
                // input[i] is tanh output of the previous layer
                Zip::from(&mut prev)
                    .and(input)
                    .for_each(|d, &a| *d = *d * (T::one() - a * a));
                delta = prev;
            }
        }
    }

    /// Mutable views of every parameter tensor, in a fixed order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn squared_norm(&self) -> f64 {
        self.param_slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| {
                let v = v.as_f64();
                v * v
            })
            .sum()
    }

    pub fn scale(&mut self, factor: T) {
        for s in self.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = *v * factor);
        }
    }

    pub fn fill_zero(&mut self) {
        for s in self.param_slices_mut() {
            s.fill(T::zero());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}
