//! Run configuration: one JSON document, validated before anything runs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dwmtj_core::protocol::PulseSpec;
use dwmtj_core::snn::{
    DwMtjConfig, EncoderConfig, LifConfig, NeuronModel, TrainConfig, DEFAULT_SIZES,
};
use dwmtj_core::DeviceConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream; copied into `device.stochastic.seed`.
    pub master_seed: u64,
    pub device: DeviceConfig,
    pub protocol: ProtocolSection,
    pub fit: FitSection,
    pub snn: SnnSection,
    pub io: IoSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RampSection {
    pub v_start: f64,
    pub v_end: f64,
    pub v_step: f64,
    pub pulses_per_amplitude: usize,
}

impl Default for RampSection {
    fn default() -> Self {
        Self {
            v_start: 1.4,
            v_end: 2.7,
            v_step: 0.1,
            pulses_per_amplitude: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantSection {
    pub amplitude: f64,
    pub n_pulses: usize,
}

impl Default for ConstantSection {
    fn default() -> Self {
        Self {
            amplitude: 2.4,
            n_pulses: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    /// Used by `device-sweep`.
    pub ramp: RampSection,
    /// Used by `pulse-train`.
    pub constant: ConstantSection,
    /// Shape of every pulse; its amplitude is ignored.
    pub pulse: PulseSpec,
    pub n_cycles: usize,
    /// Defaults to `device.write.v_write`.
    pub v_write: Option<f64>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            ramp: RampSection::default(),
            constant: ConstantSection::default(),
            pulse: PulseSpec::default(),
            n_cycles: 100,
            v_write: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for SigmaGrid {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 1.0,
            step: 0.05,
        }
    }
}

impl SigmaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.start >= 0.0 && self.stop >= self.start) {
            bail!("fit.grid: need step > 0 and 0 <= start <= stop");
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        // Rounded to the grid's decimal resolution so 0.3 prints as 0.3.
        Ok((0..=n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub grid: SigmaGrid,
    pub n_runs: u64,
    /// Constant pulse amplitude of the switching experiment.
    pub amplitude: f64,
    /// CSV with `pulses_to_fire,frequency` rows. Takes precedence over
    /// `synthetic_sigma`.
    pub target_path: Option<PathBuf>,
    /// Generate the target from the model at this σ instead.
    pub synthetic_sigma: Option<f64>,
    pub synthetic_runs: u64,
    /// Pulse count `calibrate` aims for.
    pub calibrate_target: u32,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            grid: SigmaGrid::default(),
            n_runs: 10_000,
            amplitude: 2.4,
            target_path: None,
            synthetic_sigma: Some(0.3),
            synthetic_runs: 10_000,
            calibrate_target: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnnSection {
    pub encoder: EncoderConfig,
    pub sizes: Vec<usize>,
    pub train: TrainConfig,
    /// Every model is trained on every seed.
    pub neurons: Vec<NeuronModel>,
    /// Defaults to `[master_seed]`.
    pub seeds: Option<Vec<u64>>,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    /// Network to evaluate with `snn-eval`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for SnnSection {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            sizes: DEFAULT_SIZES.to_vec(),
            train: TrainConfig::default(),
            neurons: vec![
                NeuronModel::DwMtj(DwMtjConfig {
                    sigma: 0.3,
                    ..Default::default()
                }),
                NeuronModel::DwMtj(DwMtjConfig::default()),
                NeuronModel::Lif(LifConfig::default()),
            ],
            seeds: None,
            train_subset: None,
            test_subset: None,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub data_dir: PathBuf,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    pub out_dir: PathBuf,
    /// Write CSV outputs gzip-compressed.
    pub gzip: bool,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data/fashion-mnist"),
            train_images: "train-images-idx3-ubyte".into(),
            train_labels: "train-labels-idx1-ubyte".into(),
            test_images: "t10k-images-idx3-ubyte".into(),
            test_labels: "t10k-labels-idx1-ubyte".into(),
            out_dir: PathBuf::from("out"),
            gzip: false,
        }
    }
}

impl RunConfig {
    pub fn seeds(&self) -> Vec<u64> {
        self.snn
            .seeds
            .clone()
            .unwrap_or_else(|| vec![self.master_seed])
    }

    /// Cross-field checks beyond what the types enforce.
    pub fn validate(&self) -> Result<()> {
        self.device.validate().context("device")?;
        let p = &self.protocol;
        p.pulse.validate().context("protocol.pulse")?;
        if p.n_cycles == 0 {
            bail!("protocol.n_cycles must be >= 1");
        }
        if p.ramp.pulses_per_amplitude == 0 {
            bail!("protocol.ramp.pulses_per_amplitude must be >= 1");
        }
        if p.constant.n_pulses == 0 {
            bail!("protocol.constant.n_pulses must be >= 1");
        }
        self.fit.grid.values()?;
        if self.fit.n_runs == 0 {
            bail!("fit.n_runs must be >= 1");
        }
        self.snn.encoder.validate().context("snn.encoder")?;
        self.snn.train.validate().context("snn.train")?;
        for n in &self.snn.neurons {
            n.validate().context("snn.neurons")?;
        }
        let s = &self.snn.sizes;
        if s.len() < 2 || s.contains(&0) {
            bail!("snn.sizes needs at least two positive entries");
        }
        if s.last() != Some(&10) {
            bail!("snn.sizes must end in 10 output classes");
        }
        Ok(())
    }
}

/// Set `dotted.key` in a JSON tree. The value is parsed as JSON when it can
/// be, otherwise taken as a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {assignment:?}"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            bail!("--set {key}: empty path segment");
        }
        let map = match node {
            Value::Object(m) => m,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just set")
            }
            _ => bail!("--set {key}: {part:?} is below a non-object value"),
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("split yields at least one part")
}

/// Parse, apply overrides, deserialize with path diagnostics and validate.
pub fn resolve(text: Option<&str>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let mut root: Value = match text {
        Some(t) => serde_json::from_str(t).context("config is not valid JSON")?,
        None => Value::Object(Default::default()),
    };
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    if let Some(s) = seed {
        apply_override(&mut root, &format!("master_seed={s}"))?;
    }
    let mut cfg: RunConfig = serde_path_to_error::deserialize(root).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("config error at `{path}`: {}", e.into_inner())
    })?;
    // One seed drives everything; mirror it into the device record.
    cfg.device.stochastic.seed = cfg.master_seed;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let text = path
        .map(|p| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    resolve(text.as_deref(), overrides, seed)
}
