//! Image manipulations: background normalization, occlusion and augmentation.

mod augment;
mod background;
mod color;
mod occlusion;

pub use augment::{augment, AugmentPolicy};
pub use background::{normalize_background, pixel_average, MeanImage};
pub use color::{hsv_to_rgb, rgb_to_hsv, shift_hue};
pub use occlusion::{occlude, occlusion_box, OcclusionMode};
