// SPDX-License-Identifier: Apache-2.0

//! In-filter computing for acoustic pattern recognition.
//!
//! A CAR-IHC cochlear filter cascade produces `P` accumulated channel
//! energies per window. After standardization those numbers serve as the
//! template functions of a template SVM, so feature extraction and kernel
//! evaluation are the same computation and inference costs exactly `P`
//! multiply-accumulates.
//!
//! * [`cochlea`]: filter design and the floating-point datapath.
//! * [`fixedpoint`]: bit-exact integer model of the hardware datapath.
//! * [`svm`]: template-SVM training and inference, plus a kernel-SVM baseline.
//! * [`audio`]: WAV I/O, resampling, trimming, framing, noise, manifests.
//! * [`harness`]: end-to-end pipelines, sweeps and reports.

pub mod audio;
pub mod cochlea;
pub mod decimal;
pub mod error;
pub mod fixedpoint;
pub mod harness;
pub mod svm;

pub use error::{Error, Result};
