//! Offline signature identification.
//!
//! A probe signature is first brought into register with a reference. Its
//! tilt comes from a correlation sweep over candidate angles; translation and
//! scale come from the ink bounding boxes. The aligned probe is then reduced
//! to 64 low-frequency DCT coefficients and classified by a Gaussian radial
//! basis function network.
//!
//! ```no_run
//! use sigkit_core::{image, rst, features};
//!
//! let reference = image::load_image("ref.pgm")?;
//! let probe = image::load_image("probe.pgm")?;
//! let alignment = rst::correct_rst(&reference, &probe)?;
//! let features = features::extract_features(&alignment.aligned)?;
//! assert_eq!(features.values().len(), 64);
//! # Ok::<(), sigkit_core::Error>(())
//! ```

pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod image;
pub mod pipeline;
pub mod rbfn;
pub mod rst;

pub mod numfmt;

pub use dataset::{Distortion, Gallery, GalleryEntry, GroundTruth, SignatureDb, SyntheticSpec};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use features::{DctCoeffs, FeatureExtractor, FeatureVector, FEATURE_LEN};
pub use image::{GrayImage, InkBox};
pub use pipeline::Identifier;
pub use rbfn::{Decision, RbfnModel, Sample, TrainState};
pub use rst::{Alignment, CorrelationProfile, RstConfig, RstParams};
