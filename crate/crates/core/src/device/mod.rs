//! Rigid-domain racetrack model.
//!
//! A reverse domain bounded by two walls is nucleated under the write MTJ,
//! pushed along the track by current pulses and read out by the overlap
//! of the domain with each MTJ footprint.

mod params;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use params::{
    DeviceConfig, DriveConditions, MaterialParams, ModelFrame, MtjElectrical, NoiseScope,
    Orientation, PhysicalConstants, PinningLandscape, Span, StochasticConfig, TrackGeometry,
    WriteParams, DEFAULT_KAPPA, GAP_35_PULSES,
};

use crate::error::{Error, Result};

/// Neuron lifecycle label, ordered as the cycle proceeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Lifecycle {
    Write,
    Integrate,
    Fire,
    Reset,
}

impl Lifecycle {
    pub fn as_str(&self) -> &'static str {
        match self {
            Lifecycle::Write => "write",
            Lifecycle::Integrate => "integrate",
            Lifecycle::Fire => "fire",
            Lifecycle::Reset => "reset",
        }
    }
}

impl std::fmt::Display for Lifecycle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The domain on the track, if any. The right wall is always
/// `x_left + width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DomainState {
    Absent,
    Present { x_left: f64, width: f64 },
}

impl DomainState {
    pub fn is_present(&self) -> bool {
        matches!(self, DomainState::Present { .. })
    }

    /// `(x_left, x_right)` when present.
    pub fn walls(&self) -> Option<(f64, f64)> {
        match *self {
            DomainState::Absent => None,
            DomainState::Present { x_left, width } => Some((x_left, x_left + width)),
        }
    }
}

/// Which pinning threshold currently holds the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    UnderA,
    Track,
    UnderB,
}

/// Spin-transfer coefficient g·μ_B·P / (2·e·M_sat), in m³/C.
pub fn stt_coefficient(mat: &MaterialParams, consts: &PhysicalConstants) -> f64 {
    consts.g * consts.mu_b * mat.polarization / (2.0 * consts.e_charge * mat.m_sat)
}

/// Average DW velocity: γΔH_eff/α + g·μ_B·P/(2eM_sat)·j.
pub fn dw_velocity(
    drive: DriveConditions,
    mat: &MaterialParams,
    consts: &PhysicalConstants,
) -> f64 {
    let field = consts.gamma * mat.delta * drive.h_eff / mat.alpha;
    let stt = stt_coefficient(mat, consts) * drive.j;
    field + stt
}

pub fn voltage_to_current_density(v_pulse: f64, kappa: f64) -> f64 {
    kappa * v_pulse
}

fn coverage(span: &Span, x_left: f64, x_right: f64) -> f64 {
    span.overlap(x_left, x_right) / span.len()
}

/// Pinning region of a present domain: it is held by an MTJ while it covers
/// enough of that footprint to switch it.
pub fn region(x_left: f64, x_right: f64, geom: &TrackGeometry, coverage_threshold: f64) -> Region {
    if coverage(&geom.mtj_a_span, x_left, x_right) >= coverage_threshold {
        Region::UnderA
    } else if coverage(&geom.mtj_b_span, x_left, x_right) >= coverage_threshold {
        Region::UnderB
    } else {
        Region::Track
    }
}

fn threshold(pin: &PinningLandscape, region: Region) -> f64 {
    match region {
        Region::UnderA => pin.theta_depin_a,
        Region::Track => pin.theta_track,
        Region::UnderB => pin.theta_exit_b,
    }
}

/// Number of `dt` steps covering `duration`, tolerant of round-off in the
/// ratio (40 ns / 0.1 ns is 400, not 401).
pub fn step_count(duration: f64, dt: f64) -> u64 {
    let ratio = duration / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        ratio.ceil() as u64
    }
}

/// Draw the velocity factor N(1, σ), floored at zero so that a step never
/// reverses the direction set by v̄.
fn noise_factor<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let n = Normal::new(1.0, sigma).expect("sigma validated >= 0");
    n.sample(rng).max(0.0)
}

/// Everything [`advance_domain`] needs besides the state and the RNG.
#[derive(Debug, Clone, Copy)]
pub struct Track<'a> {
    pub geometry: &'a TrackGeometry,
    pub pinning: &'a PinningLandscape,
    pub coverage_threshold: f64,
    pub stochastic: &'a StochasticConfig,
    pub material: &'a MaterialParams,
    pub constants: &'a PhysicalConstants,
}

/// Drive the domain for `duration` seconds.
///
/// Each `dt` step consults the threshold of the region the domain occupies;
/// below it the domain stays put, otherwise both walls move by
/// `v̄·dt·N(1, σ)`. Passing `track_end` with the left wall ejects the domain.
pub fn advance_domain<R: Rng + ?Sized>(
    state: DomainState,
    drive: DriveConditions,
    duration: f64,
    track: &Track<'_>,
    rng: &mut R,
) -> Result<DomainState> {
    let DomainState::Present { mut x_left, width } = state else {
        return Err(Error::NoDomain);
    };
    let v = dw_velocity(drive, track.material, track.constants);
    let dt = track.stochastic.dt;
    let sigma = track.stochastic.sigma;
    let j_abs = drive.j.abs();
    let geom = track.geometry;

    // Below every threshold nothing can change, whatever the duration.
    if j_abs < track.pinning.min_threshold() || v == 0.0 {
        return Ok(state);
    }

    let per_call = match track.stochastic.noise_scope {
        NoiseScope::PerPulse => Some(noise_factor(sigma, rng)),
        NoiseScope::PerStep => None,
    };

    for _ in 0..step_count(duration, dt) {
        let here = region(x_left, x_left + width, geom, track.coverage_threshold);
        if j_abs < threshold(track.pinning, here) {
            // Pinned: the region cannot change without motion.
            break;
        }
        let factor = match per_call {
            Some(f) => f,
            None => noise_factor(sigma, rng),
        };
        x_left += v * dt * factor;
        if x_left > geom.track_end {
            return Ok(DomainState::Absent);
        }
    }
    Ok(DomainState::Present { x_left, width })
}

/// Nucleate a domain centred on the write MTJ.
pub fn write_domain(
    state: DomainState,
    geom: &TrackGeometry,
    v_write: f64,
    v_nucleation_threshold: f64,
) -> Result<DomainState> {
    if state.is_present() {
        return Err(Error::TrackOccupied);
    }
    if v_write < v_nucleation_threshold {
        return Ok(DomainState::Absent);
    }
    let centre = geom.mtj_a_span.center();
    Ok(DomainState::Present {
        x_left: centre - 0.5 * geom.domain_width,
        width: geom.domain_width,
    })
}

/// `(R_A, R_B)` for the current domain position.
pub fn read_mtj(state: &DomainState, geom: &TrackGeometry, elec: &MtjElectrical) -> (f64, f64) {
    let Some((lo, hi)) = state.walls() else {
        return (elec.r_p_a, elec.r_p_b);
    };
    let level = |span: &Span, r_p: f64, r_ap: f64| {
        if coverage(span, lo, hi) >= elec.coverage_threshold {
            r_ap
        } else {
            r_p
        }
    };
    (
        level(&geom.mtj_a_span, elec.r_p_a, elec.r_ap_a),
        level(&geom.mtj_b_span, elec.r_p_b, elec.r_ap_b),
    )
}

const READ_TOLERANCE: f64 = 1e-6;

fn is_level(r: f64, level: f64) -> bool {
    (r - level).abs() <= READ_TOLERANCE * level
}

/// Map a readout to a lifecycle label. The two (R_P, R_P) states are told
/// apart by the previous label.
pub fn classify_state(
    readout: (f64, f64),
    elec: &MtjElectrical,
    history: Lifecycle,
) -> Result<Lifecycle> {
    let (r_a, r_b) = readout;
    let inconsistent = || Error::InconsistentReadout { r_a, r_b };
    let a_ap = if is_level(r_a, elec.r_ap_a) {
        true
    } else if is_level(r_a, elec.r_p_a) {
        false
    } else {
        return Err(inconsistent());
    };
    let b_ap = if is_level(r_b, elec.r_ap_b) {
        true
    } else if is_level(r_b, elec.r_p_b) {
        false
    } else {
        return Err(inconsistent());
    };
    match (a_ap, b_ap) {
        (true, false) => Ok(Lifecycle::Write),
        (false, true) => Ok(Lifecycle::Fire),
        (false, false) => Ok(match history {
            Lifecycle::Write | Lifecycle::Integrate => Lifecycle::Integrate,
            Lifecycle::Fire | Lifecycle::Reset => Lifecycle::Reset,
        }),
        (true, true) => Err(inconsistent()),
    }
}
