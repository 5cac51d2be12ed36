//! Fully connected network: ReLU hidden layers, softmax output, cross-entropy loss.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Same shape as the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(net: &Mlp) -> Gradients {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdOptions {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

fn log_softmax(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = z.iter().map(|v| libm::exp(v - m)).sum();
    let lse = m + libm::log(s);
    for v in z {
        *v -= lse;
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `sizes` lists every layer width including input and output.
    pub fn init(sizes: &[usize], rng: &mut ChaCha8Rng) -> Mlp {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let limit = libm::sqrt(6.0 / (i + o) as f64);
                Dense {
                    inputs: i,
                    outputs: o,
                    weights: (0..i * o).map(|_| rng.random_range(-limit..limit)).collect(),
                    bias: vec![0.0; o],
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Pre-activations of every layer.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (li, l) in self.layers.iter().enumerate() {
            let input: &[f64] = if li == 0 { x } else { zs.last().unwrap() };
            let relu = li > 0;
            let mut z = l.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                let mut s = 0.0;
                for (w, &a) in row.iter().zip(input) {
                    s += w * if relu { a.max(0.0) } else { a };
                }
                *zo += s;
            }
            zs.push(z);
        }
        zs
    }

    pub fn log_probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.forward(x).pop().unwrap_or_default();
        log_softmax(&mut z);
        z
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.log_probabilities(x).into_iter().map(libm::exp).collect()
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, xs: &[&[f64]], ys: &[usize]) -> f64 {
        let total: f64 = xs.iter().zip(ys).map(|(x, &y)| -self.log_probabilities(x)[y]).sum();
        total / xs.len().max(1) as f64
    }

    fn accumulate(&self, x: &[f64], y: usize, g: &mut Gradients) {
        let zs = self.forward(x);
        let mut delta = zs.last().unwrap().clone();
        log_softmax(&mut delta);
        for v in delta.iter_mut() {
            *v = libm::exp(*v);
        }
        delta[y] -= 1.0;
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let input: Vec<f64> = if li == 0 { x.to_vec() } else { zs[li - 1].iter().map(|v| v.max(0.0)).collect() };
            let gw = &mut g.weights[li];
            for (o, d) in delta.iter().enumerate() {
                g.biases[li][o] += d;
                for (i, a) in input.iter().enumerate() {
                    gw[o * l.inputs + i] += d * a;
                }
            }
            if li > 0 {
                let mut prev = vec![0.0; l.inputs];
                for (o, d) in delta.iter().enumerate() {
                    for (i, p) in prev.iter_mut().enumerate() {
                        *p += l.weights[o * l.inputs + i] * d;
                    }
                }
                for (p, z) in prev.iter_mut().zip(&zs[li - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }

    /// Analytic gradient of [`Mlp::loss`] by backpropagation.
    pub fn gradients(&self, xs: &[&[f64]], ys: &[usize]) -> Gradients {
        let mut g = Gradients::zeros_like(self);
        for (x, &y) in xs.iter().zip(ys) {
            self.accumulate(x, y, &mut g);
        }
        let n = xs.len().max(1) as f64;
        for v in g.weights.iter_mut().chain(g.biases.iter_mut()).flatten() {
            *v /= n;
        }
        g
    }

    /// Central-difference estimate of the same gradient, for checking.
    pub fn numerical_gradients(&mut self, xs: &[&[f64]], ys: &[usize], h: f64) -> Gradients {
        let mut g = Gradients::zeros_like(self);
        for li in 0..self.layers.len() {
            for k in 0..self.layers[li].weights.len() {
                let w0 = self.layers[li].weights[k];
                self.layers[li].weights[k] = w0 + h;
                let up = self.loss(xs, ys);
                self.layers[li].weights[k] = w0 - h;
                let down = self.loss(xs, ys);
                self.layers[li].weights[k] = w0;
                g.weights[li][k] = (up - down) / (2.0 * h);
            }
            for k in 0..self.layers[li].bias.len() {
                let b0 = self.layers[li].bias[k];
                self.layers[li].bias[k] = b0 + h;
                let up = self.loss(xs, ys);
                self.layers[li].bias[k] = b0 - h;
                let down = self.loss(xs, ys);
                self.layers[li].bias[k] = b0;
                g.biases[li][k] = (up - down) / (2.0 * h);
            }
        }
        g
    }

    /// Mini-batch SGD with classical momentum; the epoch order is reshuffled from `rng`.
    pub fn fit(&mut self, xs: &[&[f64]], ys: &[usize], opts: SgdOptions, rng: &mut ChaCha8Rng) {
        let mut velocity = Gradients::zeros_like(self);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let batch = opts.batch_size.max(1);
        let mut bx: Vec<&[f64]> = Vec::with_capacity(batch);
        let mut by: Vec<usize> = Vec::with_capacity(batch);
        for _ in 0..opts.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(batch) {
                bx.clear();
                by.clear();
                bx.extend(chunk.iter().map(|&i| xs[i]));
                by.extend(chunk.iter().map(|&i| ys[i]));
                let g = self.gradients(&bx, &by);
                for (li, l) in self.layers.iter_mut().enumerate() {
                    for ((w, v), d) in l.weights.iter_mut().zip(&mut velocity.weights[li]).zip(&g.weights[li]) {
                        *v = opts.momentum * *v - opts.learning_rate * d;
                        *w += *v;
                    }
                    for ((b, v), d) in l.bias.iter_mut().zip(&mut velocity.biases[li]).zip(&g.biases[li]) {
                        *v = opts.momentum * *v - opts.learning_rate * d;
                        *b += *v;
                    }
                }
            }
        }
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn toy(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ys = xs.iter().map(|x| if x[0] + x[1] > 0.0 { 0 } else if x[2] > 0.0 { 1 } else { 2 }).collect();
        (xs, ys)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (xs, ys) = toy(&mut rng, 8);
        let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        for _ in 0..10 {
            let mut net = Mlp::init(&[4, 2, 3], &mut rng);
            let a = net.gradients(&xr, &ys).flatten();
            let n = net.numerical_gradients(&xr, &ys, 1e-5).flatten();
            for (a, n) in a.iter().zip(&n) {
                assert!(relative_error(*a, *n) < 1e-4, "{a} vs {n}");
            }
        }
    }

    #[test]
    fn zero_weights_give_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::init(&[4, 2, 3], &mut rng);
        for l in &mut net.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let x = [0.5, -1.0, 2.0, 0.25];
        let g = net.gradients(&[&x], &[1]);
        // Uniform softmax: output-bias gradient is 1/3 - onehot, everything upstream of a dead layer is zero.
        let third = 1.0 / 3.0;
        assert!((g.biases[1][0] - third).abs() < 1e-15);
        assert!((g.biases[1][1] - (third - 1.0)).abs() < 1e-15);
        assert!(g.weights[0].iter().chain(&g.biases[0]).chain(&g.weights[1]).all(|&v| v == 0.0));
        assert!((net.loss(&[&x], &[1]) - libm::log(3.0)).abs() < 1e-15);
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (xs, ys) = toy(&mut rng, 5);
        let net = Mlp::init(&[4, 2, 3], &mut rng);
        let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let once = net.gradients(&xr, &ys).flatten();
        let twice_x: Vec<&[f64]> = xr.iter().chain(&xr).copied().collect();
        let twice_y: Vec<usize> = ys.iter().chain(&ys).copied().collect();
        let twice = net.gradients(&twice_x, &twice_y).flatten();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn training_lowers_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (xs, ys) = toy(&mut rng, 300);
        let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let mut net = Mlp::init(&[4, 16, 3], &mut rng);
        let before = net.loss(&xr, &ys);
        let opts = SgdOptions { learning_rate: 0.05, momentum: 0.9, epochs: 30, batch_size: 16 };
        net.fit(&xr, &ys, opts, &mut rng);
        let after = net.loss(&xr, &ys);
        assert!(after < 0.5 * before, "{before} -> {after}");
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::init(&[4, 8, 15], &mut rng);
        let p = net.probabilities(&[1e3, -1e3, 0.0, 5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }
}
