//! Dense ReLU regressor trained with Adam on mini-batches.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    /// Hidden layer widths; input and output widths follow from the data.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 penalty, scaled by 1/batch like the common toolkit convention.
    pub alpha: f64,
    pub standardize: bool,
    /// Stop after `n_iter_no_change` epochs without the loss improving by `tol`.
    pub tol: f64,
    pub n_iter_no_change: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![200; 5],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 200,
            alpha: 1e-4,
            standardize: true,
            tol: 1e-4,
            n_iter_no_change: 10,
        }
    }
}

/// Row-major `n_in × n_out` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn w(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.n_in, self.n_out), &self.weights).expect("weight shape")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub activation: Activation,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Glorot-uniform weights; the output bias starts at `output_bias`.
    pub fn init(n_inputs: usize, hidden: &[usize], activation: Activation, output_bias: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!(n_inputs >= 1 && hidden.iter().all(|&w| w >= 1), "layer widths must be at least 1");
        let mut widths = vec![n_inputs];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for k in 0..widths.len() - 1 {
            let (n_in, n_out) = (widths[k], widths[k + 1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            let weights = (0..n_in * n_out).map(|_| rng.random_range(-bound..bound)).collect();
            let last = k + 2 == widths.len();
            let bias = (0..n_out)
                .map(|_| if last { output_bias } else { rng.random_range(-bound..bound) })
                .collect();
            layers.push(Dense { n_in, n_out, weights, bias });
        }
        Mlp { activation, input_mean: vec![0.0; n_inputs], input_scale: vec![1.0; n_inputs], layers }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat parameters: per layer, weights then biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        for (dst, &src) in self.params_mut().zip(p) {
            *dst = src;
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn standardized(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        for (j, mut col) in a.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.input_mean[j], self.input_scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        a
    }

    /// Activations of every layer, input first.
    fn forward(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![self.standardized(x)];
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = acts[k].dot(&layer.w());
            z += &ArrayView2::from_shape((1, layer.n_out), &layer.bias).expect("bias shape");
            if k + 1 < self.layers.len() {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.forward(x).pop().expect("output layer").column(0).to_vec()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("feature row");
        self.predict_batch(view)[0]
    }

    /// Loss ½·mean((ŷ−y)²) + ½·α·ΣW²/B over the batch and its gradient in
    /// the `parameters` layout.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, y: &[f64], alpha: f64) -> (f64, Vec<f64>) {
        let b = y.len() as f64;
        let acts = self.forward(x);
        let out = acts.last().expect("output layer");
        let mut delta = Array2::from_shape_fn((y.len(), 1), |(i, _)| (out[[i, 0]] - y[i]) / b);
        let mut loss = out.column(0).iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / (2.0 * b);
        loss += 0.5 * alpha * self.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum::<f64>() / b;

        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let mut gw = acts[k].t().dot(&delta);
            gw.scaled_add(alpha / b, &layer.w());
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut next = delta.dot(&layer.w().t());
                next.zip_mut_with(&acts[k], |d, &a| *d *= self.activation.derivative(a));
                delta = next;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        let flat = grads.iter().flat_map(|(gw, gb)| gw.iter().chain(gb.iter()).copied()).collect();
        (loss, flat)
    }
}

/// Adam with bias correction folded into the step size.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut f64>, grad: &[f64]) {
        self.t += 1;
        let lr_t = self.lr * (1.0 - Self::BETA2.powi(self.t)).sqrt() / (1.0 - Self::BETA1.powi(self.t));
        for ((p, &g), (m, v)) in params.zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr_t * *m / (v.sqrt() + Self::EPS);
        }
    }
}

pub fn fit_mlp(x: ArrayView2<f64>, y: &[f64], params: &MlpParams, seed: u64) -> Mlp {
    assert_eq!(x.nrows(), y.len());
    assert!(!y.is_empty(), "cannot train on zero samples");
    let n = y.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut net = Mlp::init(x.ncols(), &params.hidden, params.activation, mean_y, &mut rng);
    if params.standardize {
        for j in 0..x.ncols() {
            let col = x.column(j);
            let m = col.sum() / n as f64;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            net.input_mean[j] = m;
            net.input_scale[j] = if sd > 0.0 { sd } else { 1.0 };
        }
    }

    let batch = params.batch_size.clamp(1, n);
    let mut adam = Adam { m: vec![0.0; net.n_params()], v: vec![0.0; net.n_params()], t: 0, lr: params.learning_rate };
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let xb = Array2::from_shape_fn((chunk.len(), x.ncols()), |(i, j)| x[[chunk[i], j]]);
            let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, grad) = net.loss_and_gradient(xb.view(), &yb, params.alpha);
            epoch_loss += loss * chunk.len() as f64;
            adam.step(net.params_mut(), &grad);
        }
        epoch_loss /= n as f64;
        if epoch_loss > best - params.tol {
            stale += 1;
        } else {
            stale = 0;
        }
        best = best.min(epoch_loss);
        if stale > params.n_iter_no_change {
            break;
        }
    }
    net
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn max_rel_error(net: &Mlp, x: ArrayView2<f64>, y: &[f64], alpha: f64) -> f64 {
        let (_, analytic) = net.loss_and_gradient(x, y, alpha);
        let p0 = net.parameters();
        let mut probe = net.clone();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..p0.len() {
            let mut p = p0.clone();
            p[k] += h;
            probe.set_parameters(&p);
            let up = probe.loss_and_gradient(x, y, alpha).0;
            p[k] -= 2.0 * h;
            probe.set_parameters(&p);
            let down = probe.loss_and_gradient(x, y, alpha).0;
            let numeric = (up - down) / (2.0 * h);
            let denom = analytic[k].abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((analytic[k] - numeric).abs() / denom);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((7, 3), |_| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        for act in [Activation::Tanh, Activation::Relu] {
            let net = Mlp::init(3, &[5], act, 0.1, &mut rng);
            let err = max_rel_error(&net, x.view(), &y, 0.3);
            assert!(err < 1e-4, "{act:?}: {err}");
        }
    }

    #[test]
    fn zero_epochs_keeps_init() {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| (i + j) as f64);
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let p = MlpParams { epochs: 0, hidden: vec![4], ..Default::default() };
        let a = fit_mlp(x.view(), &y, &p, 5);
        let b = Mlp {
            input_mean: a.input_mean.clone(),
            input_scale: a.input_scale.clone(),
            ..Mlp::init(2, &[4], Activation::Relu, 9.5, &mut ChaCha8Rng::seed_from_u64(5))
        };
        assert_eq!(a, b);
        assert_eq!(a.layers[1].bias, vec![9.5]);
    }

    #[test]
    fn learns_linear_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gen = |rng: &mut ChaCha8Rng, n| {
            let x = Array2::from_shape_fn((n, 4), |_| rng.random_range(0.0..1000.0));
            let y: Vec<f64> = (0..n)
                .map(|i| 0.002 * x[[i, 0]] - 0.001 * x[[i, 1]] + 0.0005 * x[[i, 3]] + 0.01 * Distribution::<f64>::sample(&StandardNormal, rng))
                .collect();
            (x, y)
        };
        let (x, y) = gen(&mut rng, 400);
        let (xt, yt) = gen(&mut rng, 200);
        let p = MlpParams { hidden: vec![32, 32], epochs: 300, batch_size: 32, ..Default::default() };
        let net = fit_mlp(x.view(), &y, &p, 1);
        let pred = net.predict_batch(xt.view());
        let rmse = (pred.iter().zip(&yt).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 200.0).sqrt();
        let m = yt.iter().sum::<f64>() / 200.0;
        let sd = (yt.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 200.0).sqrt();
        assert!(rmse < 0.1 * sd, "rmse {rmse} sd {sd}");
    }

    #[test]
    fn fit_is_deterministic() {
        let x = Array2::from_shape_fn((50, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let y: Vec<f64> = (0..50).map(|i| (i % 5) as f64).collect();
        let p = MlpParams { hidden: vec![8, 8], epochs: 5, batch_size: 16, ..Default::default() };
        assert_eq!(fit_mlp(x.view(), &y, &p, 2), fit_mlp(x.view(), &y, &p, 2));
    }
}
