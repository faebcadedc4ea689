//! Pulse trains and write/integrate/fire/reset cycles.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{
    advance_domain, classify_state, read_mtj, write_domain, DeviceConfig, DomainState, Lifecycle,
    Track,
};
use crate::error::{Error, Result};
use crate::seed::{self, tag};

/// One voltage pulse. Only `flat_top` seconds of the `width` drive the
/// domain; the ramps are treated as sub-threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSpec {
    pub amplitude: f64,
    pub width: f64,
    pub flat_top: f64,
}

impl Default for PulseSpec {
    /// 50 ns including 10 ns rise and fall.
    fn default() -> Self {
        Self {
            amplitude: 0.0,
            width: 50e-9,
            flat_top: 40e-9,
        }
    }
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.amplitude.is_finite()
            && self.flat_top.is_finite()
            && self.width.is_finite()
            && self.flat_top > 0.0
            && self.flat_top <= self.width;
        if ok {
            Ok(())
        } else {
            Err(Error::config("pulse: need 0 < flat_top <= width"))
        }
    }

    fn at(&self, amplitude: f64) -> Self {
        Self { amplitude, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    pulses: Vec<PulseSpec>,
}

impl PulseTrain {
    pub fn new(pulses: Vec<PulseSpec>) -> Result<Self> {
        if pulses.is_empty() {
            return Err(Error::config("pulse train must not be empty"));
        }
        for p in &pulses {
            p.validate()?;
        }
        Ok(Self { pulses })
    }

    pub fn pulses(&self) -> &[PulseSpec] {
        &self.pulses
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.pulses.iter().map(|p| p.amplitude).collect()
    }

    /// Apply every pulse `n` times in a row.
    pub fn repeat_each(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("pulses per amplitude must be >= 1"));
        }
        let pulses = self
            .pulses
            .iter()
            .flat_map(|p| std::iter::repeat_n(*p, n))
            .collect();
        Ok(Self { pulses })
    }
}

/// Snap to a nanovolt grid so 1.4 + 13·0.1 reads back as 2.7.
fn snap(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// Amplitudes `v_start, v_start + v_step, …` up to and including `v_end`.
pub fn make_amplitude_ramp(
    v_start: f64,
    v_end: f64,
    v_step: f64,
    template: PulseSpec,
) -> Result<PulseTrain> {
    if v_step.is_nan() || v_step <= 0.0 || !v_step.is_finite() {
        return Err(Error::config("ramp: v_step must be > 0"));
    }
    if v_start.is_nan() || v_end.is_nan() || v_start > v_end {
        return Err(Error::config("ramp: v_start must not exceed v_end"));
    }
    let slack = 1e-9 * v_step;
    let pulses = (0..)
        .map(|i| snap(v_start + i as f64 * v_step))
        .take_while(|v| *v <= v_end + slack)
        .map(|v| template.at(v))
        .collect();
    PulseTrain::new(pulses)
}

pub fn make_constant_train(v: f64, n: usize, template: PulseSpec) -> Result<PulseTrain> {
    if n == 0 {
        return Err(Error::config("constant train needs n >= 1"));
    }
    PulseTrain::new(vec![template.at(v); n])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    /// 1-based.
    pub pulse_index: usize,
    pub amplitude: f64,
    pub r_a: f64,
    pub r_b: f64,
    pub label: Lifecycle,
    /// `(x_left, x_right)` in the device frame, when a domain is present.
    pub walls: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleTrace {
    /// Amplitudes of the full train the cycle was driven with.
    pub schedule: Vec<f64>,
    pub records: Vec<PulseRecord>,
    pub terminal: Lifecycle,
}

impl CycleTrace {
    /// First pulse (1-based) whose label is at or beyond `label`.
    pub fn first_reaching(&self, label: Lifecycle) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.label >= label)
            .map(|r| r.pulse_index)
    }

    pub fn first_label(&self, label: Lifecycle) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.label == label)
            .map(|r| r.pulse_index)
    }
}

/// A device instance: configuration plus the current domain.
#[derive(Debug, Clone)]
pub struct Neuron<'a> {
    cfg: &'a DeviceConfig,
    frame: crate::device::ModelFrame,
    state: DomainState,
}

impl<'a> Neuron<'a> {
    pub fn new(cfg: &'a DeviceConfig) -> Self {
        Self {
            cfg,
            frame: cfg.frame(),
            state: DomainState::Absent,
        }
    }

    pub fn state(&self) -> DomainState {
        self.state
    }

    pub fn write(&mut self, v_write: f64) -> Result<()> {
        self.state = write_domain(
            self.state,
            &self.frame.geometry,
            v_write,
            self.cfg.write.v_nucleation_threshold,
        )?;
        Ok(())
    }

    pub fn pulse<R: Rng + ?Sized>(&mut self, pulse: &PulseSpec, rng: &mut R) -> Result<()> {
        let track = Track {
            geometry: &self.frame.geometry,
            pinning: &self.frame.pinning,
            coverage_threshold: self.frame.electrical.coverage_threshold,
            stochastic: &self.cfg.stochastic,
            material: &self.cfg.material,
            constants: &self.cfg.constants,
        };
        self.state = advance_domain(
            self.state,
            self.cfg.drive(pulse.amplitude),
            pulse.flat_top,
            &track,
            rng,
        )?;
        Ok(())
    }

    /// Physical `(R_A, R_B)`.
    pub fn read(&self) -> (f64, f64) {
        let (w, r) = read_mtj(&self.state, &self.frame.geometry, &self.frame.electrical);
        if self.frame.swap_readout {
            (r, w)
        } else {
            (w, r)
        }
    }

    pub fn classify(&self, history: Lifecycle) -> Result<Lifecycle> {
        let (w, r) = read_mtj(&self.state, &self.frame.geometry, &self.frame.electrical);
        classify_state((w, r), &self.frame.electrical, history)
    }
}

/// Write a domain, then apply the train pulse by pulse, reading and
/// labelling after each. Stops at the first Reset.
pub fn run_cycle<R: Rng + ?Sized>(
    cfg: &DeviceConfig,
    train: &PulseTrain,
    v_write: f64,
    rng: &mut R,
) -> Result<CycleTrace> {
    let mut neuron = Neuron::new(cfg);
    neuron.write(v_write)?;
    if !neuron.state().is_present() {
        return Err(Error::NucleationFailed {
            v_write,
            threshold: cfg.write.v_nucleation_threshold,
        });
    }
    let mut label = neuron.classify(Lifecycle::Write)?;
    if label != Lifecycle::Write {
        return Err(Error::WriteNotObserved(label));
    }

    let mut records = Vec::new();
    for (i, pulse) in train.pulses().iter().enumerate() {
        if !neuron.state().is_present() {
            break;
        }
        neuron.pulse(pulse, rng)?;
        label = neuron.classify(label)?;
        let (r_a, r_b) = neuron.read();
        records.push(PulseRecord {
            pulse_index: i + 1,
            amplitude: pulse.amplitude,
            r_a,
            r_b,
            label,
            walls: neuron.state().walls(),
        });
        if label == Lifecycle::Reset {
            break;
        }
    }
    Ok(CycleTrace {
        schedule: train.amplitudes(),
        records,
        terminal: label,
    })
}

pub fn cycle_rng(master_seed: u64, index: usize) -> seed::StreamRng {
    seed::stream(master_seed, &[tag::CYCLE, index as u64])
}

/// `n_cycles` write-integrate-fire-reset cycles, each on its own stream.
/// Every cycle starts from the empty track left behind by the previous
/// Reset.
pub fn run_cycles(
    cfg: &DeviceConfig,
    train: &PulseTrain,
    n_cycles: usize,
    master_seed: u64,
) -> Result<Vec<CycleTrace>> {
    if n_cycles == 0 {
        return Err(Error::config("n_cycles must be >= 1"));
    }
    cfg.validate()?;
    (0..n_cycles)
        .into_par_iter()
        .map(|i| {
            let mut rng = cycle_rng(master_seed, i);
            run_cycle(cfg, train, cfg.write.v_write, &mut rng).map_err(|e| Error::Cycle {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityPoint {
    pub pulse_index: usize,
    pub amplitude: f64,
    pub p_integrate: f64,
    pub p_fire: f64,
    pub p_reset: f64,
}

/// Fraction of cycles in which each transition has happened by each pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateProbabilities {
    pub points: Vec<ProbabilityPoint>,
    pub n_cycles: usize,
}

/// The three transitions tracked by [`StateProbabilities`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Integrate,
    Fire,
    Reset,
}

impl StateProbabilities {
    fn value(p: &ProbabilityPoint, t: Transition) -> f64 {
        match t {
            Transition::Integrate => p.p_integrate,
            Transition::Fire => p.p_fire,
            Transition::Reset => p.p_reset,
        }
    }

    /// First point where the transition probability reaches `level`.
    pub fn crossing(&self, t: Transition, level: f64) -> Option<&ProbabilityPoint> {
        self.points.iter().find(|p| Self::value(p, t) >= level)
    }
}

pub fn state_probabilities(traces: &[CycleTrace]) -> Result<StateProbabilities> {
    let Some(first) = traces.first() else {
        return Err(Error::config("no traces"));
    };
    let schedule = &first.schedule;
    if let Some(index) = traces.iter().position(|t| &t.schedule != schedule) {
        return Err(Error::ScheduleMismatch { index });
    }
    let n = traces.len() as f64;
    let onsets: Vec<[Option<usize>; 3]> = traces
        .iter()
        .map(|t| {
            [
                t.first_reaching(Lifecycle::Integrate),
                t.first_reaching(Lifecycle::Fire),
                t.first_reaching(Lifecycle::Reset),
            ]
        })
        .collect();
    let frac = |k: usize, which: usize| {
        onsets
            .iter()
            .filter(|o| o[which].is_some_and(|p| p <= k))
            .count() as f64
            / n
    };
    let points = schedule
        .iter()
        .enumerate()
        .map(|(i, &amplitude)| {
            let k = i + 1;
            ProbabilityPoint {
                pulse_index: k,
                amplitude,
                p_integrate: frac(k, 0),
                p_fire: frac(k, 1),
                p_reset: frac(k, 2),
            }
        })
        .collect();
    Ok(StateProbabilities {
        points,
        n_cycles: traces.len(),
    })
}
