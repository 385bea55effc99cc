//! Diffusion-model receiver for hardware-impaired wireless links.
//!
//! The crate simulates a point-to-point link with transmitter and receiver
//! hardware distortion, optional Rayleigh block fading and Gaussian or
//! Laplacian receiver noise, and reconstructs the transmitted symbols with a
//! denoising diffusion model trained from scratch. A small ReLU network serves
//! as the learned baseline receiver.

pub mod baseline;
pub mod channel;
pub mod cli;
pub mod data;
pub mod ddpm;
pub mod error;
pub mod eval;
pub mod modem;
pub mod neural;
pub mod numerics;
pub mod output;
pub mod snapshot;

pub use error::{Error, Result};
