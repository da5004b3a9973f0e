//! Density approximation across spaces, Chebyshev gating, submarginal
//! correction, polygonal geodesic builders and curvature certificates.

use serde::{Deserialize, Serialize};

pub mod approx;
pub mod curvature;
pub mod polygonal;
pub mod submarginal;
pub mod winf_transfer;

pub use approx::{approx_density, Ball};
pub use curvature::{c_kn, check_cd_convexity, check_mcp_inequality, entropy, renyi, tau, CompressionBound};
pub use polygonal::{build_polygonal_inf, build_polygonal_q, PolygonalBuild, PolygonalOptions, Regime};
pub use submarginal::{chebyshev_gate, submarginal_correction};
pub use winf_transfer::winf_marginal_transfer;

/// One instance of an inequality `lhs <= rhs`, kept with both sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Inequality {
    /// `lhs <= rhs` up to an absolute and relative slack of `tol`.
    pub fn le(lhs: f64, rhs: f64, tol: f64) -> Self {
        Inequality {
            lhs,
            rhs,
            holds: lhs <= rhs + tol * (1.0 + rhs.abs()),
        }
    }
}
