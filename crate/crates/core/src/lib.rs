//! Neural sequence tagging with a pre-trained branch augmented by jointly
//! trained random units.

pub mod analysis;
pub mod corpus;
pub mod encoder;
pub mod numerics;
pub mod par;
pub mod rng;
pub mod synthetic;
pub mod tagger;
pub mod training;
