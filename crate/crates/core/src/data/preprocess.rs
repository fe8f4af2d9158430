use super::{CineSequence, ImageTensor};
use crate::error::{Error, Result};

/// Per-image min-max scaling to `[0, 1]`. Constant images map to zeros.
pub fn normalize(image: &ImageTensor) -> ImageTensor {
    let (lo, hi) = image.min_max();
    if hi <= lo {
        return ImageTensor::zeros(image.height(), image.width());
    }
    let range = (hi - lo) as f64;
    image.map(|p| (((p - lo) as f64) / range).clamp(0.0, 1.0) as f32)
}

/// Extracts a `size`x`size` window centred on `roi_center`, sliding the
/// window inward when it would leave the image.
pub fn center_crop(image: &ImageTensor, roi_center: (usize, usize), size: usize) -> Result<ImageTensor> {
    let (h, w) = image.shape();
    if size == 0 || size > h || size > w {
        return Err(Error::arg(format!(
            "crop size {size} does not fit a {h}x{w} image"
        )));
    }
    let top = window_start(roi_center.0, size, h);
    let left = window_start(roi_center.1, size, w);
    Ok(ImageTensor::from_fn(size, size, |r, c| {
        image.get(top + r, left + c)
    }))
}

fn window_start(center: usize, size: usize, extent: usize) -> usize {
    center.saturating_sub(size / 2).min(extent - size)
}

/// Crops every frame around `roi_center` (image centre when `None`) and
/// normalizes each frame independently.
pub fn preprocess_cine(
    cine: &CineSequence,
    roi_center: Option<(usize, usize)>,
    size: usize,
) -> Result<CineSequence> {
    let (h, w) = cine.shape();
    let center = roi_center.unwrap_or((h / 2, w / 2));
    cine.map_frames(|f| center_crop(f, center, size).map(|c| normalize(&c)))
}
