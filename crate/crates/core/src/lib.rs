//! Building blocks for detecting AI-generated maps: a prompt grammar for
//! text-to-image generation, acquisition clients with offline fixtures, a
//! labeled corpus with content addressing and stratified splits, and binary
//! classification metrics.

pub mod acquisition;
pub mod corpus;
pub mod metrics;
pub mod prompt_grammar;

pub use corpus::{Label, Split};
pub use prompt_grammar::{MapType, PromptSpec, Region, RegionLevel, Vocabulary};
