//! Single-image rain removal: an edge-aware guided filter isolates the
//! high-frequency layer where rain streaks live, and a small attention network
//! subtracts the learned streak features from the image features before
//! reconstructing the clean image.

pub mod error;
pub mod filter;
pub mod image;
pub mod metrics;
pub mod net;
pub mod nn;
pub mod rain;

pub use error::{Error, Result};
pub use image::Image;
