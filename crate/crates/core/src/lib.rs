pub mod bench;
pub mod classifier;
pub mod cli;
pub mod error;
pub mod features;
pub mod fusion;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod pooling;
pub mod predictions;
pub mod rm;
pub mod rng;
pub mod synth;
pub mod tbnf;
pub mod tensor;
