//! Resume section extraction.
//!
//! A document goes through three stages: text groups are located on a
//! letterboxed page image, each group is cropped and read by a recognizer
//! whose per-timestep logits are decoded with greedy CTC, and the recognized
//! text is normalized, tokenized and classified into one of five section
//! classes by a small head on top of a frozen language-model embedding.
//!
//! Model inference is always behind a port trait (see [`ports`]); this crate
//! owns everything around the models: decoding, geometry, tokenization, the
//! trainable head, metrics and the dataset tooling used to train and compare
//! heads.

pub mod classify;
pub mod corpus;
pub mod detect;
pub mod error;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod ocr;
pub mod pipeline;
pub mod ports;
pub mod textprep;
pub mod tokenizers;

mod seed;

pub use corpus::{ClassLabel, SectionRecord};
pub use error::{Error, Result};
pub use geometry::BBox;
