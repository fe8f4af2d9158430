use crate::error::{Error, Result};

/// Real-valued single-channel magnitude image stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::arg(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::arg(format!(
                "pixel buffer has {} values, expected {}x{}={}",
                pixels.len(),
                height,
                width,
                height * width
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::arg(format!("non-finite pixel at flat index {i}")));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    /// Builds an image from f64 values, clipping into `[0, 1]`.
    pub(crate) fn from_f64_clipped(height: usize, width: usize, values: &[f64]) -> Self {
        debug_assert_eq!(values.len(), height * width);
        Self {
            height,
            width,
            pixels: values.iter().map(|v| v.clamp(0.0, 1.0) as f32).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.pixels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            })
    }

    /// True when every pixel lies in `[0, 1]`.
    pub fn is_unit_range(&self) -> bool {
        self.pixels.iter().all(|p| (0.0..=1.0).contains(p))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    /// Euclidean norm of the pixel values.
    pub fn l2_norm(&self) -> f64 {
        self.pixels
            .iter()
            .map(|&p| (p as f64) * (p as f64))
            .sum::<f64>()
            .sqrt()
    }
}

/// An ordered stack of equally-sized frames with a designated target frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CineSequence {
    frames: Vec<ImageTensor>,
    frame_index: usize,
}

impl CineSequence {
    pub fn new(frames: Vec<ImageTensor>, frame_index: usize) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::arg("cine sequence needs at least one frame"));
        };
        let shape = first.shape();
        if let Some(i) = frames.iter().position(|f| f.shape() != shape) {
            return Err(Error::arg(format!(
                "frame {i} has shape {:?}, expected {:?}",
                frames[i].shape(),
                shape
            )));
        }
        if frame_index >= frames.len() {
            return Err(Error::arg(format!(
                "frame index {frame_index} out of range for {} frames",
                frames.len()
            )));
        }
        Ok(Self { frames, frame_index })
    }

    pub fn frames(&self) -> &[ImageTensor] {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn target(&self) -> &ImageTensor {
        &self.frames[self.frame_index]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.frames[0].shape()
    }

    pub fn map_frames(&self, f: impl Fn(&ImageTensor) -> Result<ImageTensor>) -> Result<Self> {
        let frames = self.frames.iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(frames, self.frame_index)
    }
}

/// A degraded input together with its clean ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub degraded: ImageTensor,
    pub clean: ImageTensor,
}

impl PairedSample {
    pub fn new(degraded: ImageTensor, clean: ImageTensor) -> Result<Self> {
        if degraded.shape() != clean.shape() {
            return Err(Error::arg(format!(
                "degraded shape {:?} differs from clean shape {:?}",
                degraded.shape(),
                clean.shape()
            )));
        }
        Ok(Self { degraded, clean })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.clean.shape()
    }
}
