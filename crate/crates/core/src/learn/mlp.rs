//! Dense feed-forward approximator: rectifier hidden layers, identity output.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One dense layer. `weights` is row-major `[out][in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    fn affine(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.biases[o];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            z.push(acc);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Approximator {
    pub layers: Vec<Layer>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts[l + 1]` is the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("forward pass ran")
    }
}

/// Parameter gradients with the same layout as [`Approximator`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(f: &Approximator) -> Self {
        Self { layers: f.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.biases.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|w| *w *= k);
        }
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Flat view in parameter order (per layer: weights, then biases).
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }
}

impl Approximator {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("layer sizes {sizes:?} need >= 2 positive entries")));
        }
        Ok(Self { layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() })
    }

    /// He-normal weights, zero biases.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut f = Self::zeros(sizes)?;
        for l in &mut f.layers {
            let std = (2.0 / l.inputs as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("valid std");
            l.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
        }
        Ok(f)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::Shape { expected: self.input_len(), got: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache)?;
        Ok(cache.acts.pop().expect("output"))
    }

    pub fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) -> Result<()> {
        self.check_input(x)?;
        cache.acts.resize_with(self.layers.len() + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = cache.acts.split_at_mut(l + 1);
            let z = &mut rest[0];
            layer.affine(&done[l], z);
            if l < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(())
    }

    /// Gradient of `output . upstream` with respect to every parameter.
    pub fn gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache)?;
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_gradient(&cache, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Adds the gradient for a cached forward pass into `grads`.
    pub fn accumulate_gradient(&self, cache: &ForwardCache, upstream: &[f64], grads: &mut Gradients) -> Result<()> {
        if upstream.len() != self.output_len() {
            return Err(Error::Shape { expected: self.output_len(), got: upstream.len() });
        }
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.acts[l];
            let g = &mut grads.layers[l];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            // Back through W, then through the rectifier of the layer below
            // (its cached output is zero exactly where the unit was inactive).
            let mut below = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (b, w) in below.iter_mut().zip(row) {
                    *b += d * w;
                }
            }
            for (b, a) in below.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *b = 0.0;
                }
            }
            delta = below;
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape { expected: self.num_params(), got: flat.len() });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *p = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn from_params(sizes: &[usize], flat: &[f64]) -> Result<Self> {
        let mut f = Self::zeros(sizes)?;
        f.set_params(flat)?;
        Ok(f)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.biases).all(|p| p.is_finite()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Plain SGD or Adam over an approximator's flat parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, lr: f64, f: &Approximator) -> Self {
        let n = if kind == OptimizerKind::Adam { f.num_params() } else { 0 };
        Self { kind, lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, f: &mut Approximator, g: &Gradients) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (l, gl) in f.layers.iter_mut().zip(&g.layers) {
                    for (p, d) in l.weights.iter_mut().zip(&gl.weights) {
                        *p -= self.lr * d;
                    }
                    for (p, d) in l.biases.iter_mut().zip(&gl.biases) {
                        *p -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - Self::BETA1.powi(self.t);
                let bc2 = 1.0 - Self::BETA2.powi(self.t);
                let mut i = 0;
                for (l, gl) in f.layers.iter_mut().zip(&g.layers) {
                    let params = l.weights.iter_mut().chain(l.biases.iter_mut());
                    let grads = gl.weights.iter().chain(&gl.biases);
                    for (p, &d) in params.zip(grads) {
                        self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * d;
                        self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * d * d;
                        *p -= self.lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + Self::EPS);
                        i += 1;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight-line reimplementation used as an oracle for `forward`.
    fn naive_forward(f: &Approximator, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for (i, l) in f.layers.iter().enumerate() {
            let mut z = vec![0.0; l.outputs];
            for o in 0..l.outputs {
                z[o] = l.biases[o];
                for j in 0..l.inputs {
                    z[o] += l.weight(o, j) * a[j];
                }
                if i + 1 < f.layers.len() && z[o] < 0.0 {
                    z[o] = 0.0;
                }
            }
            a = z;
        }
        a
    }

    #[test]
    fn zero_net_outputs_zero() {
        let f = Approximator::zeros(&[4, 3, 2]).unwrap();
        assert_eq!(f.forward(&[1.0, -2.0, 3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut f = Approximator::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            f.layers[0].weights[i * 3 + i] = 1.0;
        }
        assert_eq!(f.forward(&[0.5, 2.0, 7.0]).unwrap(), vec![0.5, 2.0, 7.0]);
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for sizes in [vec![5, 7, 3], vec![2, 4, 4, 1], vec![6, 2]] {
            let f = Approximator::random(&sizes, &mut rng).unwrap();
            let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = f.forward(&x).unwrap();
            let b = naive_forward(&f, &x);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let f = Approximator::zeros(&[3, 2]).unwrap();
        assert!(matches!(f.forward(&[1.0]), Err(Error::Shape { expected: 3, got: 1 })));
        assert!(matches!(f.gradient(&[1.0, 2.0, 3.0], &[1.0]), Err(Error::Shape { expected: 2, got: 1 })));
        assert!(Approximator::zeros(&[3]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = Approximator::random(&[4, 5, 3], &mut rng).unwrap();
        let g = f.gradient(&[0.1, 0.2, 0.3, 0.4], &[0.0; 3]).unwrap();
        assert!(g.iter().all(|v| v == 0.0));
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = Approximator::random(&[3, 2], &mut rng).unwrap();
        let x = [0.5, -1.5, 2.0];
        let up = [3.0, -0.25];
        let g = f.gradient(&x, &up).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(g.layers[0].weights[i * 3 + j], up[i] * x[j]);
            }
            assert_eq!(g.layers[0].biases[i], up[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Approximator::random(&[6, 8, 4], &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic: Vec<f64> = f.gradient(&x, &up).unwrap().iter().collect();
        let base = f.params();
        let h = 1e-5;
        let objective = |p: &[f64]| {
            let g = Approximator::from_params(&f.sizes(), p).unwrap();
            g.forward(&x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            let plus = objective(&p);
            p[i] -= 2.0 * h;
            let minus = objective(&p);
            let fd = (plus - minus) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-7);
            worst = worst.max((analytic[i] - fd).abs() / denom);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = Approximator::random(&[3, 4, 2], &mut rng).unwrap();
        let g = Approximator::from_params(&f.sizes(), &f.params()).unwrap();
        assert_eq!(f, g);
        assert!(Approximator::from_params(&[3, 4, 2], &[0.0; 5]).is_err());
    }

    #[test]
    fn optimizers_descend_a_quadratic() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut f = Approximator::random(&[2, 1], &mut rng).unwrap();
            let mut opt = Optimizer::new(kind, 0.05, &f);
            let x = [1.0, 2.0];
            let target = 3.0;
            let loss = |f: &Approximator| (f.forward(&x).unwrap()[0] - target).powi(2);
            let start = loss(&f);
            for _ in 0..300 {
                let e = f.forward(&x).unwrap()[0] - target;
                let g = f.gradient(&x, &[2.0 * e]).unwrap();
                opt.step(&mut f, &g);
            }
            assert!(loss(&f) < 1e-3 * start.max(1.0), "{kind:?}");
        }
    }
}
