pub mod classifiers;
pub mod cli;
pub mod dataset;
pub mod evaluation;
pub mod features;
pub mod imaging;
pub mod masker;
mod rng;
