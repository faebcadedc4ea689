use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoder::poisson_encode;
use super::network::{Gradients, SpikeMode, SpikingNetwork};
use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::seed::{self, StreamRng};

/// Gradients are summed in fixed-size chunks, then the chunk sums in order,
/// so the result does not depend on the thread count.
const CHUNK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Surrogate sharpness β.
    pub beta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 100,
            epochs: 10,
            beta: 10.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train: learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train: batch_size must be >= 1"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("train: beta must be positive"));
        }
        Ok(())
    }
}

/// One labelled image with its private random stream (encoding and device
/// noise both draw from it).
#[derive(Debug, Clone)]
pub struct Sample {
    pub intensities: Vec<f64>,
    pub label: u8,
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training loss over the epoch; `None` for the pre-training row.
    pub train_loss: Option<f64>,
    pub test_accuracy: f64,
    pub seed: u64,
    pub neuron_type: String,
}

fn sample_gradient(net: &SpikingNetwork, sample: &Sample, beta: f64) -> Result<(f64, Gradients)> {
    let mut rng = StreamRng::seed_from_u64(sample.stream);
    let raster = poisson_encode(&sample.intensities, &net.encoder, &mut rng)?;
    net.loss_and_gradient(
        &raster,
        sample.label as usize,
        SpikeMode::Hard,
        beta,
        &mut rng,
    )
}

/// One SGD update on the batch mean. Returns the mean batch loss, or
/// [`Error::Diverged`] if the loss, gradient or updated parameters are not
/// finite.
pub fn train_step(net: &mut SpikingNetwork, batch: &[Sample], cfg: &TrainConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::config("train: empty batch"));
    }
    let partials: Vec<(f64, Gradients)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grads = Gradients::zeros_like(net);
            for s in chunk {
                let (l, g) = sample_gradient(net, s, cfg.beta)?;
                loss += l;
                grads.add(&g);
            }
            Ok((loss, grads))
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grads = Gradients::zeros_like(net);
    for (l, g) in &partials {
        loss += l;
        grads.add(g);
    }
    let n = batch.len() as f64;
    loss /= n;
    let diverged = |what| Error::Diverged {
        what,
        batch: 0,
        learning_rate: cfg.learning_rate,
    };
    if !loss.is_finite() {
        return Err(diverged("loss"));
    }
    grads.scale(1.0 / n);
    if !grads.flatten().iter().all(|g| g.is_finite()) {
        return Err(diverged("gradient"));
    }
    net.apply(&grads, cfg.learning_rate);
    if !net.flatten().iter().all(|p| p.is_finite()) {
        return Err(diverged("parameters"));
    }
    Ok(loss)
}

/// Prediction for one image (argmax of output spike counts, ties low).
pub fn predict(net: &SpikingNetwork, intensities: &[f64], stream: u64) -> Result<usize> {
    let mut rng = StreamRng::seed_from_u64(stream);
    let raster = poisson_encode(intensities, &net.encoder, &mut rng)?;
    Ok(net
        .forward(&raster, SpikeMode::Hard, 1.0, &mut rng)?
        .prediction())
}

/// Fraction of `split` classified correctly.
pub fn evaluate(net: &SpikingNetwork, split: &Split<'_>, seed: u64) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::config("evaluate: empty split"));
    }
    let hits: Vec<bool> = (0..split.len())
        .into_par_iter()
        .map(|k| {
            let stream = seed::derive(seed, &[seed::tag::EVAL_SAMPLE, k as u64]);
            Ok(predict(net, &split.intensities(k), stream)? == split.label(k) as usize)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / split.len() as f64)
}

/// Trains for `cfg.epochs` epochs and evaluates before training and after
/// each epoch.
pub fn train(
    net: &mut SpikingNetwork,
    train_split: &Split<'_>,
    test_split: &Split<'_>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    train_with(net, train_split, test_split, cfg, |_, _| {})
}

/// [`train`] with a callback after every evaluation.
pub fn train_with<F>(
    net: &mut SpikingNetwork,
    train_split: &Split<'_>,
    test_split: &Split<'_>,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochMetrics>>
where
    F: FnMut(&EpochMetrics, &SpikingNetwork),
{
    cfg.validate()?;
    if train_split.is_empty() {
        return Err(Error::config("train: empty training split"));
    }
    let neuron_type = net.neuron.label();
    let record = |epoch, train_loss, net: &SpikingNetwork| -> Result<EpochMetrics> {
        Ok(EpochMetrics {
            epoch,
            train_loss,
            test_accuracy: evaluate(net, test_split, cfg.seed)?,
            seed: cfg.seed,
            neuron_type: neuron_type.clone(),
        })
    };

    let mut metrics = Vec::with_capacity(cfg.epochs + 1);
    let m = record(0, None, net)?;
    log::info!("epoch 0: test accuracy {:.4}", m.test_accuracy);
    on_epoch(&m, net);
    metrics.push(m);

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_split.len()).collect();
        order.shuffle(&mut seed::stream(
            cfg.seed,
            &[seed::tag::SHUFFLE, epoch as u64],
        ));
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Sample> = idx
                .iter()
                .map(|&k| Sample {
                    intensities: train_split.intensities(k),
                    label: train_split.label(k),
                    stream: seed::derive(
                        cfg.seed,
                        &[seed::tag::TRAIN_SAMPLE, epoch as u64, k as u64],
                    ),
                })
                .collect();
            let loss = train_step(net, &batch, cfg).map_err(|e| match e {
                Error::Diverged {
                    what,
                    learning_rate,
                    ..
                } => Error::Diverged {
                    what,
                    batch: b,
                    learning_rate,
                },
                other => other,
            })?;
            loss_sum += loss * idx.len() as f64;
        }
        let m = record(epoch, Some(loss_sum / train_split.len() as f64), net)?;
        log::info!(
            "epoch {epoch}: train loss {:.4}, test accuracy {:.4}",
            m.train_loss.unwrap_or(f64::NAN),
            m.test_accuracy
        );
        on_epoch(&m, net);
        metrics.push(m);
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_split, IdxImageSet, IdxLabelSet};
    use crate::snn::encoder::EncoderConfig;
    use crate::snn::neuron::{DwMtjConfig, LifConfig, NeuronModel};

    /// Two separable classes on 16 pixels: left half lit or right half lit.
    fn toy(n: usize) -> (IdxImageSet, IdxLabelSet) {
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            for p in 0..16 {
                let lit = (p < 8) == (label == 0);
                pixels.push(if lit { 255 } else { 20 });
            }
            labels.push(label);
        }
        (
            IdxImageSet::new(4, 4, pixels).unwrap(),
            IdxLabelSet { labels },
        )
    }

    fn net(neuron: NeuronModel) -> SpikingNetwork {
        let enc = EncoderConfig {
            steps_override: Some(50),
            ..Default::default()
        };
        SpikingNetwork::new(&[16, 32, 2], neuron, enc, 1).unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 10,
            epochs: 3,
            ..Default::default()
        }
    }

    #[test]
    fn learns_a_separable_toy() {
        let (im, lb) = toy(80);
        let split = make_split(&im, &lb, None, 0).unwrap();
        for neuron in [
            NeuronModel::Lif(LifConfig::default()),
            NeuronModel::DwMtj(DwMtjConfig::default()),
        ] {
            let mut n = net(neuron);
            let m = train(&mut n, &split, &split, &cfg()).unwrap();
            assert_eq!(m.len(), 4);
            assert!(m[0].train_loss.is_none());
            let last = m.last().unwrap();
            assert!(last.test_accuracy >= 0.9, "{neuron:?}: {m:?}");
        }
    }

    #[test]
    fn training_is_reproducible() {
        let (im, lb) = toy(40);
        let split = make_split(&im, &lb, None, 0).unwrap();
        let neuron = NeuronModel::DwMtj(DwMtjConfig {
            sigma: 0.3,
            ..Default::default()
        });
        let mut a = net(neuron);
        let mut b = net(neuron);
        let ma = train(&mut a, &split, &split, &cfg()).unwrap();
        let mb = train(&mut b, &split, &split, &cfg()).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(a, b);
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let (im, lb) = toy(40);
        let split = make_split(&im, &lb, None, 0).unwrap();
        let mut n = net(NeuronModel::Lif(LifConfig::default()));
        let cfg = TrainConfig {
            learning_rate: f64::MAX,
            ..cfg()
        };
        let r = train(&mut n, &split, &split, &cfg);
        assert!(matches!(r, Err(Error::Diverged { .. })), "{r:?}");
    }
}
