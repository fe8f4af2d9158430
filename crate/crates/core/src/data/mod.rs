//! Image containers, Fourier transforms, phantom generation, preprocessing
//! and the on-disk tensor format.

mod fft;
mod image;
mod io;
mod phantom;
mod preprocess;
mod source;

pub use fft::{centered_to_unshifted, fft2, ifft2, ifft2_magnitude, KSpace};
pub use image::{CineSequence, ImageTensor, PairedSample};
pub use io::{load_tensor, read_tensor, save_tensor, write_tensor, Tensor, TensorData};
pub use phantom::generate_phantom_cine;
pub use preprocess::{center_crop, normalize, preprocess_cine};
pub(crate) use source::derive_seed;
pub use source::{CleanSource, DataConfig, SourceKind};
