//! Coupled hidden Markov model for discovering cis-regulatory modules and
//! transcription factor motifs in groups of orthologous sequences.

pub mod alignment;
pub mod data;
pub mod dp;
pub mod error;
pub mod evaluate;
pub mod gibbs;
pub mod io;
pub mod math;
pub mod model;
pub mod params;
pub mod posterior;
pub mod simulate;

pub use error::{Error, Result};
