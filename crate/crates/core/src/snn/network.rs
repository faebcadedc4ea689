use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::encoder::{EncoderConfig, SpikeRaster};
use super::neuron::{Kernel, NeuronModel};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_SIZES: [usize; 3] = [784, 256, 10];

/// Fully connected layer. Weights are stored input-major
/// (`weights[i * outputs + j]`) so a sparse input row touches contiguous
/// memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// `bias + xᵀW`, skipping zero inputs.
    fn project(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
                for (o, &w) in out.iter_mut().zip(row) {
                    *o += xi * w;
                }
            }
        }
    }
}

/// How the spike nonlinearity is evaluated in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeMode {
    /// Heaviside spikes; the backward pass uses the surrogate derivative.
    #[default]
    Hard,
    /// `S(x) = 1/2 + x / (1 + β|x|)`, whose exact derivative is the
    /// surrogate. Used to check gradients against finite differences.
    Smooth,
}

/// Surrogate slope `1 / (1 + β|x|)²`.
pub fn surrogate_grad(x: f64, beta: f64) -> f64 {
    let d = 1.0 + beta * x.abs();
    1.0 / (d * d)
}

fn spike_value(x: f64, mode: SpikeMode, beta: f64) -> f64 {
    match mode {
        SpikeMode::Hard => {
            if x >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        SpikeMode::Smooth => 0.5 + x / (1.0 + beta * x.abs()),
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    u: Vec<f64>,
    s: Vec<f64>,
    gate: Vec<f64>,
}

/// Output spike counts plus whatever the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub counts: Vec<f64>,
    steps: usize,
    mode: SpikeMode,
    beta: f64,
    caches: Vec<LayerCache>,
}

impl ForwardPass {
    /// Spike trains (steps × width) of layer `l`.
    pub fn spikes(&self, l: usize) -> &[f64] {
        &self.caches[l].s
    }

    pub fn mode(&self) -> SpikeMode {
        self.mode
    }

    pub fn prediction(&self) -> usize {
        argmax(&self.counts)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy of `softmax(logits)` against `label`, and its gradient.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &SpikingNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights
                .iter_mut()
                .zip(&b.weights)
                .for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|x| *x *= k);
            l.bias.iter_mut().for_each(|x| *x *= k);
        }
    }

    /// Weights then bias, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikingNetwork {
    pub sizes: Vec<usize>,
    pub neuron: NeuronModel,
    pub encoder: EncoderConfig,
    pub layers: Vec<Dense>,
}

impl SpikingNetwork {
    /// Uniform init in ±1/√fan_in for weights and biases.
    pub fn new(
        sizes: &[usize],
        neuron: NeuronModel,
        encoder: EncoderConfig,
        seed: u64,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config(
                "snn: need at least two non-empty layer sizes",
            ));
        }
        neuron.validate()?;
        encoder.validate()?;
        let mut rng = seed::stream(seed, &[seed::tag::INIT]);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let k = 1.0 / (w[0] as f64).sqrt();
                let dist = Uniform::new_inclusive(-k, k).expect("finite bound");
                let mut d = Dense::zeros(w[0], w[1]);
                d.weights
                    .iter_mut()
                    .for_each(|x| *x = dist.sample(&mut rng));
                d.bias.iter_mut().for_each(|x| *x = dist.sample(&mut rng));
                d
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            neuron,
            encoder,
            layers,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters in the same order as [`Gradients::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_flat(&mut self, params: &[f64]) {
        let mut it = params.iter();
        for l in &mut self.layers {
            for x in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *x = *it.next().expect("parameter count");
            }
        }
    }

    /// Plain SGD step `θ ← θ - lr·g`.
    pub fn apply(&mut self, grads: &Gradients, learning_rate: f64) {
        for (p, g) in self.layers.iter_mut().zip(&grads.layers) {
            p.weights
                .iter_mut()
                .zip(&g.weights)
                .for_each(|(x, d)| *x -= learning_rate * d);
            p.bias
                .iter_mut()
                .zip(&g.bias)
                .for_each(|(x, d)| *x -= learning_rate * d);
        }
    }

    fn kernel(&self) -> Kernel {
        Kernel::new(&self.neuron, self.encoder.step_dt())
    }

    /// Runs the raster through every layer. Membranes start at 0.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &SpikeRaster,
        mode: SpikeMode,
        beta: f64,
        rng: &mut R,
    ) -> Result<ForwardPass> {
        if input.width != self.n_inputs() {
            return Err(Error::Shape {
                expected: format!("{} inputs", self.n_inputs()),
                got: input.width.to_string(),
            });
        }
        let kernel = self.kernel();
        let steps = input.steps;
        let mut caches: Vec<LayerCache> = self
            .layers
            .iter()
            .map(|l| LayerCache {
                u: vec![0.0; steps * l.outputs],
                s: vec![0.0; steps * l.outputs],
                gate: vec![0.0; steps * l.outputs],
            })
            .collect();
        let mut membranes: Vec<Vec<f64>> =
            self.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
        let mut currents: Vec<Vec<f64>> =
            self.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
        let mut counts = vec![0.0; self.n_outputs()];

        for t in 0..steps {
            for l in 0..self.layers.len() {
                let layer = &self.layers[l];
                let n = layer.outputs;
                {
                    let x: &[f64] = if l == 0 {
                        input.row(t)
                    } else {
                        let w = self.layers[l - 1].outputs;
                        &caches[l - 1].s[t * w..(t + 1) * w]
                    };
                    layer.project(x, &mut currents[l]);
                }
                let cache = &mut caches[l];
                for j in 0..n {
                    let step = kernel.integrate(membranes[l][j], currents[l][j], rng);
                    let s = spike_value(step.u - kernel.threshold, mode, beta);
                    membranes[l][j] = step.u * (1.0 - s);
                    cache.u[t * n + j] = step.u;
                    cache.s[t * n + j] = s;
                    cache.gate[t * n + j] = step.gate;
                }
            }
            let last = caches.last().expect("at least one layer");
            let n = counts.len();
            for (c, s) in counts.iter_mut().zip(&last.s[t * n..(t + 1) * n]) {
                *c += s;
            }
        }
        Ok(ForwardPass {
            counts,
            steps,
            mode,
            beta,
            caches,
        })
    }

    /// BPTT through spikes, membranes and the reset path. Returns the
    /// cross-entropy loss on the output spike counts and its gradient.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        input: &SpikeRaster,
        label: usize,
    ) -> (f64, Gradients) {
        let kernel = self.kernel();
        let (loss, g_out) = cross_entropy(&pass.counts, label);
        let mut grads = Gradients::zeros_like(self);
        let steps = pass.steps;

        let n_top = self.n_outputs();
        let mut g_s: Vec<f64> = (0..steps).flat_map(|_| g_out.iter().copied()).collect();
        debug_assert_eq!(g_s.len(), steps * n_top);

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let cache = &pass.caches[l];
            let (n_in, n_out) = (layer.inputs, layer.outputs);
            let x_all: &[f64] = if l == 0 {
                input.as_slice()
            } else {
                &pass.caches[l - 1].s
            };
            let mut g_below = if l > 0 {
                vec![0.0; steps * n_in]
            } else {
                Vec::new()
            };
            let mut a_m = vec![0.0; n_out];
            let mut d_i = vec![0.0; n_out];
            let g = &mut grads.layers[l];

            for t in (0..steps).rev() {
                for j in 0..n_out {
                    let k = t * n_out + j;
                    let (u, s) = (cache.u[k], cache.s[k]);
                    let sp = surrogate_grad(u - kernel.threshold, pass.beta);
                    let du = sp * (g_s[k] - a_m[j] * u) + a_m[j] * (1.0 - s);
                    d_i[j] = du * cache.gate[k];
                    a_m[j] = du * kernel.leak;
                    g.bias[j] += d_i[j];
                }
                let x = &x_all[t * n_in..(t + 1) * n_in];
                for (i, &xi) in x.iter().enumerate() {
                    if xi != 0.0 {
                        let row = &mut g.weights[i * n_out..(i + 1) * n_out];
                        for (r, &d) in row.iter_mut().zip(&d_i) {
                            *r += xi * d;
                        }
                    }
                }
                if l > 0 {
                    for i in 0..n_in {
                        let row = &layer.weights[i * n_out..(i + 1) * n_out];
                        g_below[t * n_in + i] = row.iter().zip(&d_i).map(|(w, d)| w * d).sum();
                    }
                }
            }
            g_s = g_below;
        }
        (loss, grads)
    }

    pub fn loss_and_gradient<R: Rng + ?Sized>(
        &self,
        input: &SpikeRaster,
        label: usize,
        mode: SpikeMode,
        beta: f64,
        rng: &mut R,
    ) -> Result<(f64, Gradients)> {
        let pass = self.forward(input, mode, beta, rng)?;
        Ok(self.backward(&pass, input, label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::neuron::{DwMtjConfig, LifConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(neuron: NeuronModel, seed: u64) -> SpikingNetwork {
        let enc = EncoderConfig {
            steps_override: Some(50),
            ..Default::default()
        };
        SpikingNetwork::new(&[2, 2, 2], neuron, enc, seed).unwrap()
    }

    fn raster(seed: u64) -> SpikeRaster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = SpikeRaster::zeros(6, 2);
        for t in 0..6 {
            for i in 0..2 {
                if rng.random::<f64>() < 0.6 {
                    r.set(t, i, 1.0);
                }
            }
        }
        r
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
        assert_eq!(argmax(&[0.0; 10]), 0);
    }

    #[test]
    fn softmax_normalizes() {
        for logits in [vec![0.0, 0.0], vec![400.0, 0.0, -3.0], vec![1e3, 1e3 + 1.0]] {
            let p = softmax(&logits);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero() {
        let (loss, g) = cross_entropy(&[2.0, 5.0, 1.0], 1);
        assert!(loss > 0.0);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
        assert!(g[1] < 0.0);
    }

    fn check_gradient(neuron: NeuronModel) {
        // Smooth spikes make the loss differentiable; central differences
        // must match the analytic BPTT gradient.
        let beta = 10.0;
        let input = raster(11);
        let mut worst: f64 = 0.0;
        for seed in 0..4 {
            let net = tiny(neuron, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (_, g) = net
                .loss_and_gradient(&input, 1, SpikeMode::Smooth, beta, &mut rng)
                .unwrap();
            let analytic = g.flatten();
            let theta = net.flatten();
            let h = 1e-6;
            for k in 0..theta.len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let mut tp = theta.clone();
                tp[k] += h;
                plus.set_flat(&tp);
                tp[k] -= 2.0 * h;
                minus.set_flat(&tp);
                let mut r = ChaCha8Rng::seed_from_u64(0);
                let lp = plus
                    .loss_and_gradient(&input, 1, SpikeMode::Smooth, beta, &mut r)
                    .unwrap()
                    .0;
                let mut r = ChaCha8Rng::seed_from_u64(0);
                let lm = minus
                    .loss_and_gradient(&input, 1, SpikeMode::Smooth, beta, &mut r)
                    .unwrap()
                    .0;
                let fd = (lp - lm) / (2.0 * h);
                let rel = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradient_matches_finite_differences_lif() {
        check_gradient(NeuronModel::Lif(LifConfig::default()));
    }

    #[test]
    fn gradient_matches_finite_differences_dwmtj() {
        check_gradient(NeuronModel::DwMtj(DwMtjConfig::default()));
    }

    #[test]
    fn small_step_along_negative_gradient_descends() {
        let input = raster(5);
        let net = tiny(NeuronModel::Lif(LifConfig::default()), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (l0, g) = net
            .loss_and_gradient(&input, 0, SpikeMode::Smooth, 10.0, &mut rng)
            .unwrap();
        let mut stepped = net.clone();
        stepped.apply(&g, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (l1, _) = stepped
            .loss_and_gradient(&input, 0, SpikeMode::Smooth, 10.0, &mut rng)
            .unwrap();
        assert!(l1 < l0, "{l1} >= {l0}");
    }

    #[test]
    fn hard_forward_matches_step_functions() {
        use crate::snn::neuron::{dwmtj_neuron_step, lif_neuron_step};
        let dw = DwMtjConfig::default();
        let net = tiny(NeuronModel::DwMtj(dw), 9);
        let input = raster(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = net
            .forward(&input, SpikeMode::Hard, 10.0, &mut rng)
            .unwrap();

        let mut m = [0.0; 2];
        let mut cur = vec![0.0; 2];
        for t in 0..input.steps {
            net.layers[0].project(input.row(t), &mut cur);
            for j in 0..2 {
                let (next, s) = dwmtj_neuron_step(m[j], cur[j], &dw, &mut rng);
                m[j] = next;
                assert_eq!(pass.spikes(0)[t * 2 + j], if s { 1.0 } else { 0.0 });
            }
        }

        let lif = LifConfig::default();
        let net = tiny(NeuronModel::Lif(lif), 9);
        let pass = net
            .forward(&input, SpikeMode::Hard, 10.0, &mut rng)
            .unwrap();
        let mut m = [0.0; 2];
        for t in 0..input.steps {
            net.layers[0].project(input.row(t), &mut cur);
            for j in 0..2 {
                let (next, s) = lif_neuron_step(m[j], cur[j], &lif, net.encoder.step_dt());
                m[j] = next;
                assert_eq!(pass.spikes(0)[t * 2 + j], if s { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn rejects_wrong_width() {
        let net = tiny(NeuronModel::Lif(LifConfig::default()), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = net.forward(&SpikeRaster::zeros(3, 5), SpikeMode::Hard, 10.0, &mut rng);
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn checkpoint_round_trips() {
        let net = tiny(
            NeuronModel::DwMtj(DwMtjConfig {
                sigma: 0.3,
                ..Default::default()
            }),
            4,
        );
        let json = serde_json::to_string(&net).unwrap();
        let back: SpikingNetwork = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);
    }
}
