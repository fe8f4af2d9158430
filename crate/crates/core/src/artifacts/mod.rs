//! Degradation operators for training, unseen and composite artifacts.

mod apply;
mod mask;
mod ops;
mod resample;
mod spec;

pub use apply::{apply_spec, degrade_image, SpecInput};
pub use mask::{center_lines, make_cartesian_mask, CartesianMask};
pub use ops::{
    apply_gamma, apply_ghosting, apply_motion, apply_noise, apply_spiking, apply_super_resolution,
    apply_undersampling, motion_window_center, undersample_complex,
};
pub use spec::{ArtifactFamily, ArtifactSpec};
