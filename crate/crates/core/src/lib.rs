//! Surface-EMG denoising workbench.
//!
//! The crate synthesizes contaminated sEMG at a controlled SNR, removes the
//! contaminants with classical pipelines ([`iir`], [`template`],
//! [`decomposition`] + [`mode_rules`]) or with a small U-Net/transformer
//! denoiser ([`nn`]), and scores the output with [`metrics`]. [`harness`]
//! ties everything into reproducible experiments.

pub mod decomposition;
pub mod error;
pub mod harness;
pub mod iir;
pub mod metrics;
pub mod mode_rules;
pub mod nn;
pub mod seed;
pub mod signal;
pub mod synthesis;
pub mod template;

pub use error::{Error, Result};
pub use signal::SampleBuffer;
pub use synthesis::ContaminantLabel;
