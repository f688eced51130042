//! Toolkit for generating, aggregating and evaluating definitions of novel
//! word senses.

pub mod aggregation;
pub mod annotation;
pub mod cli;
pub mod corpus;
pub mod curation;
pub mod embedding;
pub mod formats;
pub mod harness;
pub mod inference;
pub mod metrics;
pub mod prompting;
pub mod text;
