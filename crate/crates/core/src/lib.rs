//! # biseld
//!
//! Building blocks for binaural sound event localization and detection.
//!
//! - [`hrtf`]: HRIR data model, text database I/O, time windowing, HRTF
//!   derivation from measured transfer functions, non-causality compensation.
//! - [`cues`]: ITD, narrowband/wideband ILD, pinna spectral features and
//!   horizontal-plane directivity.
//! - [`btff`]: the 8-channel binaural time-frequency feature (mel spectra,
//!   velocity maps, ITD/ILD maps, spectral-cue maps).
//! - [`dataset`]: spatialization, SNR mixing and 60-second mixture synthesis
//!   with deci-second label CSVs.
//! - [`speaker`]: sealed-box speaker module response from Thiele-Small
//!   parameters.
//! - [`net`]: forward-only network graph (depthwise separable convolutions,
//!   Trinity modules, GRU, dense), parameter counting and output decoding.
//! - [`metrics`]: location-aware SED and class-aware DOA metrics.
//! - [`vam`]: vector activation maps for regression outputs.
//!
//! Runnable walkthroughs for each area live in the crate's `examples/`.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod btff;
pub mod cues;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod hrtf;
pub mod metrics;
pub mod net;
pub mod speaker;
pub mod vam;
pub mod wav;

pub use error::{Error, Result};
pub use hrtf::{ComplexSpectrum, Direction, HeadGeometry, HrirPair, WindowParams};
