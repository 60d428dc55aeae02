//! Vague word and sentence detection for privacy-policy text.

pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod discriminator;
pub mod embeddings;
pub mod evaluation;
pub mod gan_trainer;
pub mod generator;
pub mod harness;
pub mod nn;
pub mod tensor;
pub mod word_tagger;
