//! Pulses-to-fire statistics, σ fitting and κ calibration.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{DeviceConfig, Lifecycle};
use crate::error::{Error, Result};
use crate::protocol::{Neuron, PulseSpec};
use crate::seed::{self, tag};

/// Distribution of the pulse on which the read MTJ first fires.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SwitchHistogram {
    /// pulses-to-fire (>= 1) -> number of runs
    pub counts: BTreeMap<u32, u64>,
    /// Runs that had not fired after `max_pulses`.
    pub censored: u64,
    pub n_runs: u64,
}

impl SwitchHistogram {
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = Option<u32>>) -> Self {
        let mut h = Self::default();
        for o in outcomes {
            h.push(o);
        }
        h
    }

    pub fn push(&mut self, outcome: Option<u32>) {
        match outcome {
            Some(k) => *self.counts.entry(k).or_insert(0) += 1,
            None => self.censored += 1,
        }
        self.n_runs += 1;
    }

    pub fn fired(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn mean(&self) -> Option<f64> {
        let n = self.fired();
        (n > 0).then(|| {
            self.counts
                .iter()
                .map(|(&k, &c)| k as f64 * c as f64)
                .sum::<f64>()
                / n as f64
        })
    }

    pub fn mode(&self) -> Option<u32> {
        // Ties go to the smaller count.
        self.counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&k, _)| k)
    }

    /// Nearest-rank quantile over fired runs.
    pub fn quantile(&self, q: f64) -> Option<u32> {
        let n = self.fired();
        if n == 0 {
            return None;
        }
        let rank = ((q * n as f64).ceil() as u64).clamp(1, n);
        let mut seen = 0;
        for (&k, &c) in &self.counts {
            seen += c;
            if seen >= rank {
                return Some(k);
            }
        }
        None
    }

    pub fn iqr(&self) -> Option<u32> {
        Some(self.quantile(0.75)? - self.quantile(0.25)?)
    }

    pub fn max_count(&self) -> Option<u32> {
        self.counts.keys().next_back().copied()
    }
}

/// Pulses until the lifecycle label first reaches Fire; `None` when that
/// has not happened within `max_pulses` or the domain left the track first.
pub fn pulses_to_fire<R: rand::Rng + ?Sized>(
    cfg: &DeviceConfig,
    pulse: &PulseSpec,
    max_pulses: u32,
    rng: &mut R,
) -> Result<Option<u32>> {
    let mut neuron = Neuron::new(cfg);
    neuron.write(cfg.write.v_write)?;
    if !neuron.state().is_present() {
        return Err(Error::NucleationFailed {
            v_write: cfg.write.v_write,
            threshold: cfg.write.v_nucleation_threshold,
        });
    }
    let mut label = Lifecycle::Write;
    for k in 1..=max_pulses {
        neuron.pulse(pulse, rng)?;
        label = neuron.classify(label)?;
        if label >= Lifecycle::Fire {
            return Ok(Some(k));
        }
        if !neuron.state().is_present() {
            break;
        }
    }
    Ok(None)
}

/// Monte Carlo histogram of pulses-to-fire under a constant amplitude `v`.
pub fn simulate_switch_counts(
    cfg: &DeviceConfig,
    v: f64,
    max_pulses: u32,
    n_runs: u64,
    sigma: f64,
    master_seed: u64,
) -> Result<SwitchHistogram> {
    simulate_stream(cfg, v, max_pulses, n_runs, sigma, master_seed, tag::SWITCH)
}

fn simulate_stream(
    cfg: &DeviceConfig,
    v: f64,
    max_pulses: u32,
    n_runs: u64,
    sigma: f64,
    master_seed: u64,
    stream_tag: u64,
) -> Result<SwitchHistogram> {
    if n_runs == 0 || max_pulses == 0 {
        return Err(Error::config("n_runs and max_pulses must be >= 1"));
    }
    let cfg = cfg.clone().with_sigma(sigma);
    cfg.validate()?;
    let pulse = PulseSpec {
        amplitude: v,
        ..PulseSpec::default()
    };
    let outcomes: Vec<Option<u32>> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream(master_seed, &[stream_tag, i]);
            pulses_to_fire(&cfg, &pulse, max_pulses, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(SwitchHistogram::from_outcomes(outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub sigma_hat: f64,
    pub loss: f64,
    /// `(sigma, loss)` for every grid point, in grid order.
    pub grid: Vec<(f64, f64)>,
    pub n_runs: u64,
}

const PSEUDOCOUNT: f64 = 0.5;

/// Symmetric chi-square between two histograms over the union of their
/// occupied bins, each bin carrying a +0.5 pseudocount. The model
/// histogram is rescaled to the target's mass. Censored runs are ignored.
pub fn chi_square(target: &SwitchHistogram, model: &SwitchHistogram) -> f64 {
    let mut bins: Vec<u32> = target
        .counts
        .keys()
        .chain(model.counts.keys())
        .copied()
        .collect();
    bins.sort_unstable();
    bins.dedup();
    let t: Vec<f64> = bins
        .iter()
        .map(|b| target.counts.get(b).copied().unwrap_or(0) as f64 + PSEUDOCOUNT)
        .collect();
    let m: Vec<f64> = bins
        .iter()
        .map(|b| model.counts.get(b).copied().unwrap_or(0) as f64 + PSEUDOCOUNT)
        .collect();
    let scale = t.iter().sum::<f64>() / m.iter().sum::<f64>();
    t.iter()
        .zip(&m)
        .map(|(&ti, &mi)| {
            let mi = mi * scale;
            (ti - mi).powi(2) / (ti + mi)
        })
        .sum()
}

/// Grid search for the σ whose simulated histogram is closest to `target`.
///
/// All grid points share one random stream, so the loss curve is smooth in
/// σ. Ties go to the smaller σ.
pub fn fit_sigma(
    target: &SwitchHistogram,
    cfg: &DeviceConfig,
    v: f64,
    sigma_grid: &[f64],
    n_runs: u64,
    master_seed: u64,
) -> Result<FitResult> {
    if target.n_runs == 0 || target.fired() == 0 {
        return Err(Error::EmptyTarget);
    }
    if sigma_grid.is_empty() || sigma_grid.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::config(
            "sigma grid must be non-empty with entries >= 0",
        ));
    }
    let max_pulses = (3 * target.max_count().unwrap_or(1)).max(10);
    let grid = sigma_grid
        .iter()
        .map(|&sigma| {
            let model = simulate_stream(cfg, v, max_pulses, n_runs, sigma, master_seed, tag::FIT)?;
            Ok((sigma, chi_square(target, &model)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sigma_hat, loss) = grid
        .iter()
        .copied()
        .fold(None::<(f64, f64)>, |best, (s, l)| match best {
            Some((bs, bl)) if bl < l || (bl == l && bs <= s) => Some((bs, bl)),
            _ => Some((s, l)),
        })
        .expect("grid non-empty");
    Ok(FitResult {
        sigma_hat,
        loss,
        grid,
        n_runs,
    })
}

/// Deterministic pulses-to-fire for a given κ.
fn count_at(
    cfg: &DeviceConfig,
    kappa: f64,
    pulse: &PulseSpec,
    max_pulses: u32,
) -> Result<Option<u32>> {
    let mut c = cfg.clone().with_sigma(0.0);
    c.kappa = kappa;
    // σ = 0 draws nothing; any stream will do.
    let mut rng = seed::stream(0, &[]);
    pulses_to_fire(&c, pulse, max_pulses, &mut rng)
}

/// Smallest κ (to relative precision) whose σ = 0 count is <= `target`.
fn kappa_boundary(cfg: &DeviceConfig, pulse: &PulseSpec, target: u32) -> Result<f64> {
    let max_pulses = target + 1;
    let fires_by = |k: f64| -> Result<bool> {
        Ok(count_at(cfg, k, pulse, max_pulses)?.is_some_and(|c| c <= target))
    };

    // The one-pulse fire window spans a κ ratio of (B.x1) / (B.x0 - w/2),
    // so the bracket must grow more slowly than that or it can step over it.
    const GROWTH: f64 = 1.25;
    let mut hi = 1e6;
    while !fires_by(hi)? {
        hi *= GROWTH;
        if hi > 1e20 {
            return Err(Error::Calibration(format!(
                "no kappa up to 1e20 A/m^2/V fires within {target} pulses at {} V; \
                 check pinning thresholds and geometry",
                pulse.amplitude
            )));
        }
    }
    let mut lo = hi / GROWTH;
    if fires_by(lo)? {
        // Walk down until the count exceeds the target.
        while fires_by(lo)? {
            hi = lo;
            lo /= GROWTH;
            if lo < 1.0 {
                return Err(Error::Calibration("kappa bracket collapsed".into()));
            }
        }
    }
    for _ in 0..200 {
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if fires_by(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// κ such that a σ = 0 constant-amplitude train at `v` fires exactly on
/// pulse `target_count`.
///
/// Below the ejection limit the count is non-increasing in κ. With κ_n the smallest κ firing within
/// n pulses, the result is the harmonic mean of κ_target and κ_(target-1),
/// i.e. the point where the per-pulse displacement covers the distance in
/// `target_count - 1/2` pulses. This keeps the noisy mean near the target.
/// A target of 1 uses 1.1·κ_1.
pub fn calibrate_kappa(cfg: &DeviceConfig, v: f64, target_count: u32) -> Result<f64> {
    if target_count == 0 {
        return Err(Error::config("target_count must be >= 1"));
    }
    if v.is_nan() || v <= 0.0 {
        return Err(Error::config("calibration voltage must be > 0"));
    }
    cfg.validate()?;
    let pulse = PulseSpec {
        amplitude: v,
        ..PulseSpec::default()
    };
    let k_target = kappa_boundary(cfg, &pulse, target_count)?;
    let kappa = if target_count > 1 {
        let k_prev = kappa_boundary(cfg, &pulse, target_count - 1)?;
        2.0 / (1.0 / k_target + 1.0 / k_prev)
    } else {
        // No lower neighbour; too large a step ejects the domain past B.
        k_target * 1.1
    };
    match count_at(cfg, kappa, &pulse, target_count + 1)? {
        Some(c) if c == target_count => Ok(kappa),
        other => Err(Error::Calibration(format!(
            "re-simulation at kappa = {kappa:e} gave {other:?}, expected {target_count}"
        ))),
    }
}
