//! Codec-information-assisted recurrent video super-resolution.
//!
//! Motion vectors carried by the encoded stream align the recurrent hidden
//! state, and codec residuals decide which pixels the body Resblocks actually
//! compute. The [`sidecar`] module reads the per-frame codec data, [`model`]
//! runs the recurrent cell, and [`sparse`] holds the masking, annealing and
//! MAC accounting pieces.

pub mod align;
pub mod error;
pub mod metrics;
pub mod model;
pub mod sidecar;
pub mod sparse;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
pub use model::{init_state, FrameReport, ModelConfig, RecurrentState, StepOutput, Variant, VsrModel};
pub use sidecar::{parse_sidecar, serialize_sidecar, FrameType, MotionField, ResidualMap, SidecarFrame, SidecarStream};
pub use sparse::{AnnealSchedule, SpatialMask};
pub use tensor::{ConvWeights, FeatureTensor};
pub use weights::{init_random_weights, load_weights, save_weights, WeightBundle};
