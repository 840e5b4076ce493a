//! Heat operators, wavelet spectra and Markov jump processes on clopen subsets
//! of non-archimedean local fields and on Mumford curves.

pub mod error;
pub mod exact;
pub mod localfield;
pub mod affinoid;
pub mod operator;
pub mod heat;
pub mod mumford;
pub mod cli;

pub use error::{Error, Result};
