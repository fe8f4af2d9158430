//! Forward degradation operators. Every operator maps a `[0, 1]` image to a
//! `[0, 1]` image of the same shape; k-space operators take the magnitude of
//! the inverse transform and clip.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;

use super::resample::resize_bicubic;
use super::CartesianMask;
use crate::data::{centered_to_unshifted, fft2, ifft2, ifft2_magnitude, CineSequence, ImageTensor, KSpace};
use crate::error::{Error, Result};

/// Target frame index moved inward so that `[l - s, l + s]` is in range.
pub fn motion_window_center(num_frames: usize, target: usize, s: usize) -> usize {
    target.clamp(s, num_frames - 1 - s)
}

/// Mixes phase-encode lines from the `2s + 1` frames around the target:
/// centered line `m` is taken from window frame `m mod (2s + 1)`.
pub fn apply_motion(seq: &CineSequence, s: usize) -> Result<ImageTensor> {
    let window = 2 * s + 1;
    let t = seq.num_frames();
    if t < window {
        return Err(Error::arg(format!(
            "motion with s={s} needs {window} frames, sequence has {t}"
        )));
    }
    let l = motion_window_center(t, seq.frame_index(), s);
    let spectra: Vec<KSpace> = seq.frames()[l - s..=l + s].iter().map(fft2).collect();
    let (h, w) = seq.shape();
    let mut mixed = Vec::with_capacity(h * w);
    // assemble in unshifted row order so the buffer is a valid spectrum
    for u in 0..h {
        let centered = (u + h / 2) % h;
        debug_assert_eq!(centered_to_unshifted(centered, h), u);
        mixed.extend_from_slice(spectra[centered % window].row(u));
    }
    Ok(ifft2_magnitude(&KSpace::new(h, w, mixed)?))
}

/// Bicubic downsample by `scale`, then bicubic upsample back to the input
/// size.
pub fn apply_super_resolution(image: &ImageTensor, scale: usize) -> Result<ImageTensor> {
    let (h, w) = image.shape();
    if scale < 2 {
        return Err(Error::arg(format!("scale must be >= 2, got {scale}")));
    }
    if scale * 4 > h.min(w) {
        return Err(Error::arg(format!(
            "scale {scale} exceeds a quarter of the image size {h}x{w}"
        )));
    }
    let low_h = (h / scale).max(1);
    let low_w = (w / scale).max(1);
    let values = image.to_f64();
    let low = resize_bicubic(&values, (h, w), (low_h, low_w));
    let back = resize_bicubic(&low, (low_h, low_w), (h, w));
    Ok(ImageTensor::from_f64_clipped(h, w, &back))
}

/// Complex image `F^-1(M ∘ F(x))` before magnitude and clipping.
pub fn undersample_complex(image: &ImageTensor, mask: &CartesianMask) -> Result<Vec<Complex64>> {
    if image.shape() != mask.shape() {
        return Err(Error::arg(format!(
            "mask shape {:?} differs from image shape {:?}",
            mask.shape(),
            image.shape()
        )));
    }
    let mut k = fft2(image);
    for u in 0..k.height() {
        if !mask.keeps_unshifted(u) {
            k.row_mut(u).fill(Complex64::default());
        }
    }
    Ok(ifft2(&k))
}

pub fn apply_undersampling(image: &ImageTensor, mask: &CartesianMask) -> Result<ImageTensor> {
    let z = undersample_complex(image, mask)?;
    let magnitude: Vec<f64> = z.iter().map(|c| c.norm()).collect();
    Ok(ImageTensor::from_f64_clipped(
        image.height(),
        image.width(),
        &magnitude,
    ))
}

/// Additive Gaussian noise with standard deviation `std`, then clipped.
pub fn apply_noise(image: &ImageTensor, std: f64, seed: u64) -> Result<ImageTensor> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::arg(format!("noise std must be >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::arg(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy: Vec<f64> = image
        .pixels()
        .iter()
        .map(|&p| p as f64 + normal.sample(&mut rng))
        .collect();
    Ok(ImageTensor::from_f64_clipped(
        image.height(),
        image.width(),
        &noisy,
    ))
}

/// Intensity transform `x^gamma`.
pub fn apply_gamma(image: &ImageTensor, gamma: f64) -> Result<ImageTensor> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::arg(format!("gamma must be positive, got {gamma}")));
    }
    if gamma == 1.0 {
        return Ok(image.clone());
    }
    Ok(image.map(|p| (p.clamp(0.0, 1.0) as f64).powf(gamma) as f32))
}

/// Signed frequency of unshifted index `u` along an axis of length `n`.
fn signed_frequency(u: usize, n: usize) -> isize {
    ((u + n / 2) % n) as isize - (n / 2) as isize
}

/// Attenuates every `num_ghosts`-th phase-encode line (excluding DC) by
/// `1 - intensity`. Lines run along `axis` (0: rows, 1: columns).
pub fn apply_ghosting(
    image: &ImageTensor,
    num_ghosts: usize,
    axis: usize,
    intensity: f64,
) -> Result<ImageTensor> {
    if num_ghosts < 1 {
        return Err(Error::arg("num_ghosts must be >= 1"));
    }
    if axis > 1 {
        return Err(Error::arg(format!("axis must be 0 or 1, got {axis}")));
    }
    if !(0.0..=1.0).contains(&intensity) {
        return Err(Error::arg(format!(
            "ghosting intensity must lie in [0, 1], got {intensity}"
        )));
    }
    let mut k = fft2(image);
    let (h, w) = k.shape();
    let factor = 1.0 - intensity;
    let hit = |f: isize| f != 0 && f.rem_euclid(num_ghosts as isize) == 0;
    for r in 0..h {
        let row_hit = hit(signed_frequency(r, h));
        for (c, z) in k.row_mut(r).iter_mut().enumerate() {
            let line_hit = if axis == 0 {
                row_hit
            } else {
                hit(signed_frequency(c, w))
            };
            if line_hit {
                *z *= factor;
            }
        }
    }
    Ok(ifft2_magnitude(&k))
}

/// Adds `num_spikes` real spikes of magnitude `intensity * max|k|` at seeded
/// non-DC k-space positions.
pub fn apply_spiking(
    image: &ImageTensor,
    num_spikes: usize,
    intensity: f64,
    seed: u64,
) -> Result<ImageTensor> {
    if !(intensity >= 0.0 && intensity.is_finite()) {
        return Err(Error::arg(format!(
            "spike intensity must be >= 0, got {intensity}"
        )));
    }
    let mut k = fft2(image);
    let total = k.coeffs().len();
    if num_spikes >= total {
        return Err(Error::arg(format!(
            "{num_spikes} spikes do not fit {total} non-DC positions"
        )));
    }
    let peak = k.coeffs().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = k.coeffs_mut();
    for pick in sample(&mut rng, total - 1, num_spikes) {
        // skip flat index 0, the DC coefficient
        coeffs[pick + 1] += Complex64::new(intensity * peak, 0.0);
    }
    Ok(ifft2_magnitude(&k))
}
