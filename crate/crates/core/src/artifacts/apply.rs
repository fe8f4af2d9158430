use super::{
    apply_gamma, apply_ghosting, apply_motion, apply_noise, apply_spiking, apply_super_resolution,
    apply_undersampling, make_cartesian_mask, ArtifactSpec,
};
use crate::data::{CineSequence, ImageTensor, PairedSample};
use crate::error::{Error, Result};

/// Clean input to a degradation: a single image or a cine sequence whose
/// target frame is the ground truth.
#[derive(Clone, Copy, Debug)]
pub enum SpecInput<'a> {
    Image(&'a ImageTensor),
    Cine(&'a CineSequence),
}

impl<'a> SpecInput<'a> {
    pub fn clean(&self) -> &'a ImageTensor {
        match *self {
            SpecInput::Image(img) => img,
            SpecInput::Cine(cine) => cine.target(),
        }
    }
}

impl<'a> From<&'a ImageTensor> for SpecInput<'a> {
    fn from(img: &'a ImageTensor) -> Self {
        SpecInput::Image(img)
    }
}

impl<'a> From<&'a CineSequence> for SpecInput<'a> {
    fn from(cine: &'a CineSequence) -> Self {
        SpecInput::Cine(cine)
    }
}

/// Applies a non-motion spec to a single image.
pub fn degrade_image(image: &ImageTensor, spec: &ArtifactSpec) -> Result<ImageTensor> {
    degrade(SpecInput::Image(image), spec)
}

fn degrade(input: SpecInput<'_>, spec: &ArtifactSpec) -> Result<ImageTensor> {
    let image = input.clean();
    match spec {
        ArtifactSpec::None => Ok(image.clone()),
        ArtifactSpec::Motion { s } => match input {
            SpecInput::Cine(cine) => apply_motion(cine, *s),
            SpecInput::Image(_) => Err(Error::arg(format!(
                "{} needs a cine sequence, got a single image",
                spec.id()
            ))),
        },
        ArtifactSpec::SuperResolution { scale } => apply_super_resolution(image, *scale),
        ArtifactSpec::Undersampling {
            acceleration,
            mask_seed,
        } => {
            let mask = make_cartesian_mask(image.shape(), *acceleration, *mask_seed)?;
            apply_undersampling(image, &mask)
        }
        ArtifactSpec::Noise { std, seed } => apply_noise(image, *std, *seed),
        ArtifactSpec::Gamma { gamma } => apply_gamma(image, *gamma),
        ArtifactSpec::Ghosting {
            num_ghosts,
            axis,
            intensity,
        } => apply_ghosting(image, *num_ghosts, *axis, *intensity),
        ArtifactSpec::Spiking {
            num_spikes,
            intensity,
            seed,
        } => apply_spiking(image, *num_spikes, *intensity, *seed),
        ArtifactSpec::Composite { parts } => {
            let first = degrade(input, &parts[0])?;
            degrade(SpecInput::Image(&first), &parts[1])
        }
    }
}

/// Produces the `(degraded, clean)` pair for `spec` applied to `input`.
pub fn apply_spec<'a>(input: impl Into<SpecInput<'a>>, spec: &ArtifactSpec) -> Result<PairedSample> {
    let input = input.into();
    spec.validate()?;
    let degraded = degrade(input, spec)?;
    PairedSample::new(degraded, input.clean().clone())
}
