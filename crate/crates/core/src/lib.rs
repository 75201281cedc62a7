//! Spiking-network image classifier trained by label-gated triplet STDP.
//!
//! Conductance-based LIF neurons with adaptive thresholds are simulated on a
//! fixed 0.1 ms grid. Each hidden neuron is assigned to one digit group; only
//! neurons whose group matches the stimulus label potentiate. Small "base"
//! networks can be trained independently with different hyperparameters and
//! merged for evaluation.

pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod hyper;
pub mod mnist;
pub mod network;
pub mod neuron;
pub mod plasticity;
pub mod report;
pub mod rng;
pub mod search;
pub mod state;
pub mod trainer;

pub use encoder::{encode_poisson, present_adaptive, EncodingParams, Presentation, SpikeTrain};
pub use error::{DataError, Result, SnnError};
pub use evaluator::{evaluate, predict, Metrics, Prediction};
pub use hyper::{sample_config, HyperParams, SearchRanges};
pub use mnist::{Dataset, ImageSet, LabelSet};
pub use network::{Network, NetworkSpec, Phase, SpikeRecord};
pub use neuron::{theta_vt, NeuronParams, NeuronPopulation};
pub use plasticity::{theta_w, StdpParams, TraceBlock};
pub use search::{random_search, SearchConfig, SearchRecord};
pub use state::{merge_states, Provenance, TrainedState};
pub use trainer::{train_direct, train_parallel_diversity, TrainConfig};
