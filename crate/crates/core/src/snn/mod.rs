//! Spiking MLP with DW-MTJ or LIF neurons on Poisson-coded images, trained
//! by backpropagation through time with a fast-sigmoid surrogate gradient.

pub mod encoder;
pub mod network;
pub mod neuron;
pub mod train;

pub use encoder::{poisson_encode, EncoderConfig, SpikeRaster};
pub use network::{
    argmax, cross_entropy, softmax, surrogate_grad, Dense, ForwardPass, Gradients, SpikeMode,
    SpikingNetwork, DEFAULT_SIZES,
};
pub use neuron::{dwmtj_neuron_step, lif_neuron_step, DwMtjConfig, LifConfig, NeuronModel};
pub use train::{
    evaluate, predict, train, train_step, train_with, EpochMetrics, Sample, TrainConfig,
};
