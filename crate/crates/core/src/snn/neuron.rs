use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Domain-position neuron: the membrane is the normalized distance the
/// domain has travelled towards the read MTJ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DwMtjConfig {
    pub threshold: f64,
    pub gain: f64,
    /// Velocity noise σ of the N(1, σ) factor.
    pub sigma: f64,
}

impl Default for DwMtjConfig {
    fn default() -> Self {
        Self {
            threshold: 1.0,
            gain: 1.0,
            sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifConfig {
    /// Membrane time constant (s). Leak reversal is 0.
    pub tau_mem: f64,
    pub threshold: f64,
}

impl Default for LifConfig {
    fn default() -> Self {
        Self {
            tau_mem: 10e-9,
            threshold: 1.0,
        }
    }
}

impl LifConfig {
    pub fn leak(&self, dt: f64) -> f64 {
        (-dt / self.tau_mem).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeuronModel {
    DwMtj(DwMtjConfig),
    Lif(LifConfig),
}

impl NeuronModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NeuronModel::DwMtj(c) => {
                if !(c.threshold > 0.0 && c.gain > 0.0 && c.sigma >= 0.0)
                    || !(c.threshold.is_finite() && c.gain.is_finite() && c.sigma.is_finite())
                {
                    return Err(Error::config(
                        "dw_mtj neuron: threshold > 0, gain > 0, sigma >= 0",
                    ));
                }
            }
            NeuronModel::Lif(c) => {
                if !(c.tau_mem > 0.0 && c.threshold > 0.0) || !c.threshold.is_finite() {
                    return Err(Error::config("lif neuron: tau_mem > 0 and threshold > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        match self {
            NeuronModel::DwMtj(c) => c.threshold,
            NeuronModel::Lif(c) => c.threshold,
        }
    }

    /// Short name used in metrics files.
    pub fn label(&self) -> String {
        match self {
            NeuronModel::DwMtj(c) => format!("dw_mtj_sigma{}", c.sigma),
            NeuronModel::Lif(_) => "lif".to_string(),
        }
    }
}

/// Pre-reset membrane and d(increment)/d(input) for one step.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Integrated {
    pub u: f64,
    pub gate: f64,
}

/// Membrane update before threshold and reset, shared by the step
/// functions and the network.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    pub leak: f64,
    pub gain: f64,
    pub sigma: f64,
    pub rectify: bool,
    pub threshold: f64,
}

impl Kernel {
    pub fn new(model: &NeuronModel, dt: f64) -> Self {
        match model {
            NeuronModel::DwMtj(c) => Self {
                leak: 1.0,
                gain: c.gain,
                sigma: c.sigma,
                rectify: true,
                threshold: c.threshold,
            },
            NeuronModel::Lif(c) => Self {
                leak: c.leak(dt),
                gain: 1.0,
                sigma: 0.0,
                rectify: false,
                threshold: c.threshold,
            },
        }
    }

    pub fn integrate<R: Rng + ?Sized>(&self, membrane: f64, input: f64, rng: &mut R) -> Integrated {
        if self.rectify && input <= 0.0 {
            return Integrated {
                u: self.leak * membrane,
                gate: 0.0,
            };
        }
        let gate = self.gain * velocity_factor(self.sigma, rng);
        Integrated {
            u: self.leak * membrane + gate * input,
            gate,
        }
    }
}

pub(crate) fn velocity_factor<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    Normal::new(1.0, sigma)
        .expect("sigma validated")
        .sample(rng)
        .max(0.0)
}

fn fire(u: f64, threshold: f64) -> (f64, bool) {
    if u >= threshold {
        (0.0, true)
    } else {
        (u, false)
    }
}

/// One step of the DW-MTJ neuron. Non-positive input leaves the domain
/// pinned; crossing the threshold fires and resets the membrane to 0.
pub fn dwmtj_neuron_step<R: Rng + ?Sized>(
    membrane: f64,
    input_current: f64,
    cfg: &DwMtjConfig,
    rng: &mut R,
) -> (f64, bool) {
    let next = if input_current > 0.0 {
        membrane + cfg.gain * input_current * velocity_factor(cfg.sigma, rng)
    } else {
        membrane
    };
    fire(next, cfg.threshold)
}

/// One exponential-Euler step of the LIF neuron with leak to 0.
pub fn lif_neuron_step(membrane: f64, input_current: f64, cfg: &LifConfig, dt: f64) -> (f64, bool) {
    fire(membrane * cfg.leak(dt) + input_current, cfg.threshold)
}
