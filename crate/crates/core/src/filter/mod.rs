//! Guided image filtering with O(M) window statistics.

mod box_filter;
mod guided;
mod stats;
mod weights;

pub use box_filter::box_mean;
pub use guided::{
    decompose, gif, guided_filter_unclamped, iwgif, iwgif_coefficients, iwgif_unclamped, residual_mse,
    solve_coefficients, wgif, CoefficientField, Coefficients, Decomposition, FilterKind,
};
pub use stats::{window_stats, WindowStats};
pub use weights::{aggregation_weights, edge_aware_weight, WEIGHT_FLOOR};

use crate::error::{Error, Result};

/// Knobs of the iWGIF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    /// Window radius; windows are `(2ζ+1)²` before border clipping.
    pub zeta: usize,
    /// Ridge penalty on the slope.
    pub lambda: f64,
    /// Stabilizer of the edge-aware weight.
    pub epsilon: f64,
    /// Temperature of the residual-based aggregation weight.
    pub eta: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams { zeta: 7, lambda: 1e-3, epsilon: 1e-4, eta: 0.05 }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.zeta < 1 {
            return Err(Error::param("zeta must be at least 1"));
        }
        for (name, v) in [("lambda", self.lambda), ("epsilon", self.epsilon), ("eta", self.eta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}
