//! Multi-resolution spectrogram inputs for CNN audio anti-spoofing.
//!
//! Log-power spectrograms computed with several window lengths are stacked
//! as input channels of one network. The crate covers the whole path:
//!
//! * [`tensor`]: f32/f64 tensors and a tape autodiff with finite-difference checks
//! * [`dsp`]: STFT features, multi-window extraction, segmentation, feature caches
//! * [`model`]: LCNN, ResNet18 and SENet50 builders, parameter accounting, checkpoints
//! * [`train`]: Adam with warmup/inverse-sqrt schedule and per-epoch selection
//! * [`eval`]: utterance scores, EER and weighted score fusion
//! * [`data`]: WAV and manifest I/O, run configuration, a synthetic corpus
//! * [`pipeline`] and [`cli`]: the end-to-end steps behind the `multires` binary
//!
//! ```
//! use multires::model::{count_parameters, Arch, Model, ModelSpec};
//!
//! let model = Model::build(&ModelSpec::new(Arch::Resnet18, 3), 0).unwrap();
//! assert_eq!(count_parameters(&model).unwrap().total, 703_376);
//! ```

// NaN-rejecting range checks read best as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
