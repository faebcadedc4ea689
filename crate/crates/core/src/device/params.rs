use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(what.to_string()))
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Constants entering the average-velocity equation.
///
/// `gamma` uses the 1D-model convention (m·A⁻¹·s⁻¹) so that
/// `gamma * delta * h_eff / alpha` is a velocity for `h_eff` in A/m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConstants {
    pub g: f64,
    pub mu_b: f64,
    pub e_charge: f64,
    pub gamma: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            g: 2.0,
            mu_b: 9.274e-24,
            e_charge: 1.602e-19,
            gamma: 2.211e5,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        check(positive(self.g), "constants.g must be > 0")?;
        check(positive(self.mu_b), "constants.mu_b must be > 0")?;
        check(positive(self.e_charge), "constants.e_charge must be > 0")?;
        check(positive(self.gamma), "constants.gamma must be > 0")
    }
}

/// Free-layer material and track cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    /// Saturation magnetization (A/m).
    pub m_sat: f64,
    pub polarization: f64,
    /// Gilbert damping.
    pub alpha: f64,
    /// Domain-wall width (m).
    pub delta: f64,
    /// Track width (m).
    pub width: f64,
    /// Track thickness (m).
    pub thickness: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            m_sat: 8e5,
            polarization: 0.7,
            alpha: 0.05,
            delta: 9.7e-9,
            width: 25e-9,
            thickness: 1.5e-9,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        check(positive(self.m_sat), "material.m_sat must be > 0")?;
        check(
            positive(self.polarization) && self.polarization <= 1.0,
            "material.polarization must be in (0, 1]",
        )?;
        check(positive(self.alpha), "material.alpha must be > 0")?;
        check(positive(self.delta), "material.delta must be > 0")?;
        check(positive(self.width), "material.width must be > 0")?;
        check(positive(self.thickness), "material.thickness must be > 0")
    }
}

/// A closed interval `[x0, x1]` along the track (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span(pub f64, pub f64);

impl Span {
    pub fn start(&self) -> f64 {
        self.0
    }

    pub fn end(&self) -> f64 {
        self.1
    }

    pub fn len(&self) -> f64 {
        self.1 - self.0
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.0 + self.1)
    }

    /// Length of the intersection with `[lo, hi]`.
    pub fn overlap(&self, lo: f64, hi: f64) -> f64 {
        (self.1.min(hi) - self.0.max(lo)).max(0.0)
    }
}

/// Racetrack layout. The write MTJ (`mtj_a_span`) sits left of the read MTJ
/// and domains travel in +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackGeometry {
    pub mtj_a_span: Span,
    pub mtj_b_span: Span,
    /// A domain whose left wall passes this coordinate has left the track.
    pub track_end: f64,
    pub domain_width: f64,
}

impl Default for TrackGeometry {
    fn default() -> Self {
        Self::with_gap(1500e-9)
    }
}

impl TrackGeometry {
    /// MTJ footprints 450 nm long and a 450 nm domain, separated by `gap`.
    pub fn with_gap(gap: f64) -> Self {
        let footprint = 450e-9;
        let b0 = footprint + gap;
        Self {
            mtj_a_span: Span(0.0, footprint),
            mtj_b_span: Span(b0, b0 + footprint),
            track_end: b0 + footprint,
            domain_width: footprint,
        }
    }

    pub fn gap(&self) -> f64 {
        self.mtj_b_span.start() - self.mtj_a_span.end()
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.mtj_a_span.0,
            self.mtj_a_span.1,
            self.mtj_b_span.0,
            self.mtj_b_span.1,
            self.track_end,
            self.domain_width,
        ]
        .iter()
        .all(|x| x.is_finite());
        check(all_finite, "geometry values must be finite")?;
        check(
            !self.mtj_a_span.is_empty() && !self.mtj_b_span.is_empty(),
            "geometry: MTJ spans must have positive length",
        )?;
        check(
            self.mtj_a_span.end() < self.mtj_b_span.start(),
            "geometry: mtj_a_span must lie entirely left of mtj_b_span",
        )?;
        check(
            self.track_end >= self.mtj_b_span.end(),
            "geometry: track_end must be at or right of mtj_b_span",
        )?;
        check(
            positive(self.domain_width),
            "geometry.domain_width must be > 0",
        )
    }

    /// Reflection that swaps the roles of the two MTJs, keeping the write
    /// site at the left end and the exit margin beyond the read site.
    pub fn mirrored(&self) -> Self {
        let s = self.mtj_a_span.start() + self.mtj_b_span.end();
        let margin = self.track_end - self.mtj_b_span.end();
        let a = Span(s - self.mtj_b_span.end(), s - self.mtj_b_span.start());
        let b = Span(s - self.mtj_a_span.end(), s - self.mtj_a_span.start());
        Self {
            mtj_a_span: a,
            mtj_b_span: b,
            track_end: b.end() + margin,
            domain_width: self.domain_width,
        }
    }
}

/// Current-density thresholds (A/m²) a pulse must reach to move the domain
/// out of each pinning region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinningLandscape {
    pub theta_depin_a: f64,
    pub theta_track: f64,
    pub theta_exit_b: f64,
}

impl Default for PinningLandscape {
    fn default() -> Self {
        Self {
            theta_depin_a: 6.0e10,
            theta_track: 4.6e10,
            theta_exit_b: 8.2e10,
        }
    }
}

impl PinningLandscape {
    /// No pinning anywhere.
    pub fn free() -> Self {
        Self {
            theta_depin_a: 0.0,
            theta_track: 0.0,
            theta_exit_b: 0.0,
        }
    }

    pub fn min_threshold(&self) -> f64 {
        self.theta_depin_a
            .min(self.theta_track)
            .min(self.theta_exit_b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.theta_depin_a, self.theta_track, self.theta_exit_b]
            .iter()
            .all(|t| t.is_finite() && *t >= 0.0);
        check(ok, "pinning thresholds must be finite and >= 0")?;
        check(
            self.theta_depin_a < self.theta_exit_b
                || (self.theta_depin_a == 0.0 && self.theta_exit_b == 0.0),
            "pinning: theta_depin_a must be below theta_exit_b",
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtjElectrical {
    pub r_p_a: f64,
    pub r_ap_a: f64,
    pub r_p_b: f64,
    pub r_ap_b: f64,
    /// Fraction of an MTJ footprint the domain must cover to read R_AP.
    pub coverage_threshold: f64,
}

impl Default for MtjElectrical {
    fn default() -> Self {
        let (r_p_a, r_ap_a, r_p_b) = (1650.0, 1930.0, 1180.0);
        Self {
            r_p_a,
            r_ap_a,
            r_p_b,
            // Same TMR ratio as MTJ_A.
            r_ap_b: r_p_b * (r_ap_a / r_p_a),
            coverage_threshold: 0.5,
        }
    }
}

impl MtjElectrical {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.r_p_a, self.r_ap_a, self.r_p_b, self.r_ap_b]
            .iter()
            .all(|r| positive(*r));
        check(finite, "electrical resistances must be finite and > 0")?;
        check(
            self.r_ap_a > self.r_p_a,
            "electrical: r_ap_a must exceed r_p_a",
        )?;
        check(
            self.r_ap_b > self.r_p_b,
            "electrical: r_ap_b must exceed r_p_b",
        )?;
        check(
            self.coverage_threshold > 0.0 && self.coverage_threshold <= 1.0,
            "electrical.coverage_threshold must be in (0, 1]",
        )
    }

    pub fn swapped(&self) -> Self {
        Self {
            r_p_a: self.r_p_b,
            r_ap_a: self.r_ap_b,
            r_p_b: self.r_p_a,
            r_ap_b: self.r_ap_a,
            coverage_threshold: self.coverage_threshold,
        }
    }
}

/// How often the `N(1, σ)` velocity factor is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScope {
    /// One draw per velocity evaluation, i.e. per applied pulse.
    #[default]
    PerPulse,
    /// A fresh draw on every `dt` step.
    PerStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochasticConfig {
    pub sigma: f64,
    /// Integration timestep (s).
    pub dt: f64,
    /// Root of the noise streams. The simulation functions take the seed as
    /// an argument; this field records it alongside the device.
    pub seed: u64,
    pub noise_scope: NoiseScope,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        Self {
            sigma: 0.3,
            dt: 0.1e-9,
            seed: 0,
            noise_scope: NoiseScope::PerPulse,
        }
    }
}

impl StochasticConfig {
    pub fn validate(&self) -> Result<()> {
        check(
            self.sigma.is_finite() && self.sigma >= 0.0,
            "stochastic.sigma must be >= 0",
        )?;
        check(positive(self.dt), "stochastic.dt must be > 0")
    }
}

/// Applied drive: current density `j` (A/m²) and effective field `h_eff` (A/m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DriveConditions {
    pub j: f64,
    pub h_eff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Write under MTJ_A, read at MTJ_B.
    #[default]
    AToB,
    /// Write under MTJ_B, read at MTJ_A.
    BToA,
}

/// Nucleation pulse parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WriteParams {
    pub v_write: f64,
    pub v_nucleation_threshold: f64,
}

impl Default for WriteParams {
    fn default() -> Self {
        Self {
            v_write: 3.1,
            v_nucleation_threshold: 3.0,
        }
    }
}

/// Everything needed to run the device: physics, layout, readout and the
/// voltage-to-current calibration `kappa` (A·m⁻²·V⁻¹).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub constants: PhysicalConstants,
    pub material: MaterialParams,
    pub geometry: TrackGeometry,
    pub pinning: PinningLandscape,
    /// Thresholds used in B-to-A operation (depin from B, exit past A).
    /// Falls back to `pinning` when absent.
    pub mirror_pinning: Option<PinningLandscape>,
    pub electrical: MtjElectrical,
    pub stochastic: StochasticConfig,
    pub write: WriteParams,
    pub kappa: f64,
    pub h_eff: f64,
    pub orientation: Orientation,
}

/// Calibrated so that a constant 2.4 V, 40 ns flat-top train fires on pulse
/// 12 at σ = 0 with the default geometry.
pub const DEFAULT_KAPPA: f64 = 3.084_660_648_819_142_5e10;

/// Gap that makes the default `kappa` fire on pulse 35 at 2.4 V.
pub const GAP_35_PULSES: f64 = 4950e-9;

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            constants: PhysicalConstants::default(),
            material: MaterialParams::default(),
            geometry: TrackGeometry::default(),
            pinning: PinningLandscape::default(),
            mirror_pinning: None,
            electrical: MtjElectrical::default(),
            stochastic: StochasticConfig::default(),
            write: WriteParams::default(),
            kappa: DEFAULT_KAPPA,
            h_eff: 0.0,
            orientation: Orientation::AToB,
        }
    }
}

/// Parameters expressed in the frame where the write MTJ is "A" and the
/// domain moves in +x.
#[derive(Debug, Clone, Copy)]
pub struct ModelFrame {
    pub geometry: TrackGeometry,
    pub pinning: PinningLandscape,
    pub electrical: MtjElectrical,
    /// Readouts come back as (write, read); swap to report (R_A, R_B).
    pub swap_readout: bool,
}

impl DeviceConfig {
    /// Device used for the constant-amplitude experiments: the exit
    /// threshold sits below the 2.4 V drive so the domain fires and then
    /// leaves the track under the same pulse train.
    pub fn pulse_number(target_pulses: u32) -> Self {
        let mut cfg = Self::default();
        cfg.pinning.theta_exit_b = 6.8e10;
        if target_pulses == 35 {
            cfg.geometry = TrackGeometry::with_gap(GAP_35_PULSES);
        }
        cfg
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.stochastic.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.material.validate()?;
        self.geometry.validate()?;
        self.pinning.validate()?;
        if let Some(p) = &self.mirror_pinning {
            p.validate()?;
        }
        self.electrical.validate()?;
        self.stochastic.validate()?;
        check(positive(self.kappa), "kappa must be > 0")?;
        check(self.h_eff.is_finite(), "h_eff must be finite")?;
        check(
            self.write.v_write.is_finite() && self.write.v_nucleation_threshold.is_finite(),
            "write voltages must be finite",
        )
    }

    pub fn frame(&self) -> ModelFrame {
        match self.orientation {
            Orientation::AToB => ModelFrame {
                geometry: self.geometry,
                pinning: self.pinning,
                electrical: self.electrical,
                swap_readout: false,
            },
            Orientation::BToA => ModelFrame {
                geometry: self.geometry.mirrored(),
                pinning: self.mirror_pinning.unwrap_or(self.pinning),
                electrical: self.electrical.swapped(),
                swap_readout: true,
            },
        }
    }

    pub fn drive(&self, v_pulse: f64) -> DriveConditions {
        DriveConditions {
            j: super::voltage_to_current_density(v_pulse, self.kappa),
            h_eff: self.h_eff,
        }
    }
}
