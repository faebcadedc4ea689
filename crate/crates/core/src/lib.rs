//! Simulation core for the domain-wall magnetic-tunnel-junction (DW-MTJ)
//! integrate-fire-reset neuron.
//!
//! * [`device`]: rigid two-wall domain on a racetrack with a write MTJ and a
//!   read MTJ, driven by the 1D average-velocity model with multiplicative
//!   velocity noise.
//! * [`protocol`]: amplitude-ramp and constant-amplitude pulse trains and full
//!   write/integrate/fire/reset cycles.
//! * [`fit`]: switching-count histograms, noise fitting and the
//!   voltage-to-current calibration.
//! * [`snn`]: a spiking MLP with DW-MTJ or LIF activations trained by
//!   surrogate-gradient BPTT.
//! * [`dataset`]: IDX parsing for Fashion-MNIST.

pub mod dataset;
pub mod device;
pub mod error;
pub mod fit;
pub mod protocol;
pub mod seed;
pub mod snn;

pub use device::{
    DeviceConfig, DomainState, DriveConditions, Lifecycle, MaterialParams, MtjElectrical,
    NoiseScope, Orientation, PhysicalConstants, PinningLandscape, StochasticConfig, TrackGeometry,
};
pub use error::{Error, Result};
pub use fit::{FitResult, SwitchHistogram};
pub use protocol::{CycleTrace, PulseSpec, PulseTrain, StateProbabilities};
