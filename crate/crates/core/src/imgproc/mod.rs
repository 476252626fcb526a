//! Image containers, pyramids, gradients, and the kernels shared by every
//! descriptor.

mod contrast;
mod gradient;
mod image;
mod kernel;
mod pgm;
mod pyramid;

pub use contrast::{apply_contrast, Contrast};
pub use gradient::{compute_gradient, wrap_angle, GradientField};
pub use image::{GrayImage, MIN_SIDE};
pub use kernel::{angular_kernel, circular_distance, AngularKernel, KernelParams};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use pyramid::{build_pyramid, downsample, to_base, to_level, ImagePyramid, MAX_LEVELS};
