//! Knot-topology workbench: braid-word corpora, classical invariants and
//! contrastive embedding experiments.

pub mod analysis;
pub mod braid;
pub mod contrastive;
pub mod datagen;
pub mod invariants;
pub mod nn;
pub mod oracle;
pub mod poly;
pub mod probe;
pub mod sampler;

pub use braid::{BraidError, BraidWord, MarkovMove, Sign};
pub use poly::LaurentPolynomial;
