use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Poisson rate coding over a sampling window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Maximum spike rate (Hz) for intensity 1.
    pub f_max: f64,
    /// Sampling window T (s).
    pub t_window: f64,
    /// Simulation timestep (s).
    pub dt: f64,
    /// Run with this many steps instead of `t_window / dt`. The per-step
    /// probability is rescaled so the expected spike count over the window
    /// is unchanged.
    pub steps_override: Option<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            f_max: 1e9,
            t_window: 40e-9,
            dt: 0.1e-9,
            steps_override: None,
        }
    }
}

impl EncoderConfig {
    pub fn native_steps(&self) -> usize {
        (self.t_window / self.dt).round() as usize
    }

    pub fn steps(&self) -> usize {
        self.steps_override.unwrap_or_else(|| self.native_steps())
    }

    /// Effective duration of one simulated step.
    pub fn step_dt(&self) -> f64 {
        self.t_window / self.steps() as f64
    }

    /// Spike probability per step at full intensity.
    pub fn max_probability(&self) -> f64 {
        self.f_max * self.step_dt()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.f_max.is_finite() && self.t_window.is_finite() && self.dt.is_finite();
        if !finite || self.f_max < 0.0 || self.t_window <= 0.0 || self.dt <= 0.0 {
            return Err(Error::config(
                "encoder: f_max >= 0, t_window > 0 and dt > 0 required",
            ));
        }
        let ratio = self.t_window / self.dt;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-6 * ratio {
            return Err(Error::config(
                "encoder: t_window / dt must be a positive integer",
            ));
        }
        if self.steps_override == Some(0) {
            return Err(Error::config("encoder: steps_override must be >= 1"));
        }
        if self.max_probability() > 1.0 + 1e-12 {
            return Err(Error::config(format!(
                "encoder: per-step spike probability {} exceeds 1",
                self.max_probability()
            )));
        }
        Ok(())
    }
}

/// Binary spike tensor (steps × width), stored as dense 0/1 values.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeRaster {
    pub steps: usize,
    pub width: usize,
    data: Vec<f64>,
}

impl SpikeRaster {
    pub fn zeros(steps: usize, width: usize) -> Self {
        Self {
            steps,
            width,
            data: vec![0.0; steps * width],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let steps = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Shape {
                expected: format!("rows of width {width}"),
                got: "ragged rows".into(),
            });
        }
        Ok(Self {
            steps,
            width,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn set(&mut self, t: usize, i: usize, v: f64) {
        self.data[t * self.width + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Independent Bernoulli draw per (step, pixel) with probability
/// `intensity · f_max · dt`.
pub fn poisson_encode<R: Rng + ?Sized>(
    image: &[f64],
    enc: &EncoderConfig,
    rng: &mut R,
) -> Result<SpikeRaster> {
    if let Some((index, &value)) = image
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::Intensity { index, value });
    }
    let steps = enc.steps();
    let p_max = enc.max_probability().min(1.0);
    let probs: Vec<f64> = image.iter().map(|&x| x * p_max).collect();
    let mut raster = SpikeRaster::zeros(steps, image.len());
    for t in 0..steps {
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 && rng.random::<f64>() < p {
                raster.set(t, i, 1.0);
            }
        }
    }
    Ok(raster)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_constants_give_tenth_per_step() {
        let enc = EncoderConfig::default();
        enc.validate().unwrap();
        assert_eq!(enc.steps(), 400);
        assert!((enc.max_probability() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn override_keeps_expected_count() {
        let enc = EncoderConfig {
            steps_override: Some(50),
            ..Default::default()
        };
        enc.validate().unwrap();
        assert!((enc.max_probability() * 50.0 - 40.0).abs() < 1e-9);
    }

    #[test]
    fn zero_intensity_is_silent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = poisson_encode(&[0.0; 784], &EncoderConfig::default(), &mut rng).unwrap();
        assert_eq!(r.total(), 0.0);
    }

    #[test]
    fn rejects_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = poisson_encode(&[0.5, 1.5], &EncoderConfig::default(), &mut rng);
        assert!(matches!(r, Err(Error::Intensity { index: 1, .. })));
    }

    #[test]
    fn rejects_probability_above_one() {
        let enc = EncoderConfig {
            steps_override: Some(10),
            ..Default::default()
        };
        assert!(enc.validate().is_err());
    }

    #[test]
    fn full_intensity_count_within_binomial_ci() {
        // 400 steps at p = 0.1: mean 40, sd 6. Over 1000 encodings the mean
        // count has sd 0.19; 2.576 sd is the 99% band.
        let enc = EncoderConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1000;
        let mut total = 0.0;
        for _ in 0..n {
            total += poisson_encode(&[1.0], &enc, &mut rng).unwrap().total();
        }
        let mean = total / n as f64;
        let half_width = 2.576 * (400.0f64 * 0.1 * 0.9).sqrt() / (n as f64).sqrt();
        assert!((mean - 40.0).abs() < half_width, "mean {mean}");
    }
}
