//! Closed-form worst-case bounds `φ±(z; Γ)` for a single parameter ellipsoid.
//!
//! For `Γ = Z(N)` with `N₂₂ ≺ 0`,
//! `φ±(z) = −N₁₂N₂₂⁻¹ b(z) ± √((N|N₂₂) b(z)ᵀ(−N₂₂⁻¹) b(z))`,
//! and the gradient follows by differentiating through `b`.

use nalgebra::DVector;

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::regression::ParameterSet;

/// Below this `|b(z)|` the bound is not differentiable.
pub const BZ_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// Lower bound, least-squares estimate and upper bound at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointBounds {
    pub lower: f64,
    pub lse: f64,
    pub upper: f64,
}

impl PointBounds {
    pub fn uncertainty(&self) -> f64 {
        self.upper - self.lower
    }
}

pub fn point_bounds(set: &ParameterSet, basis: &BasisSet, z: &DVector<f64>) -> Result<PointBounds> {
    let b = basis.eval(z)?;
    check_len(set, &b)?;
    let lse = set.lse().dot(&b);
    let r = set.radius_along(&b);
    Ok(PointBounds { lower: lse - r, lse, upper: lse + r })
}

/// `(φ⁻(z; Γ), φ⁺(z; Γ))`.
pub fn phi_bounds(set: &ParameterSet, basis: &BasisSet, z: &DVector<f64>) -> Result<(f64, f64)> {
    let p = point_bounds(set, basis, z)?;
    Ok((p.lower, p.upper))
}

/// `U(z; Γ) = 2√((N|N₂₂) b(z)ᵀ(−N₂₂⁻¹) b(z))`.
pub fn uncertainty(set: &ParameterSet, basis: &BasisSet, z: &DVector<f64>) -> Result<f64> {
    let b = basis.eval(z)?;
    check_len(set, &b)?;
    Ok(2.0 * set.radius_along(&b))
}

/// `∇φ±(z; Γ) = J_b(z) (γ_lse ± √(N|N₂₂) (−N₂₂⁻¹)b / √(bᵀ(−N₂₂⁻¹)b))`.
pub fn grad_phi(set: &ParameterSet, basis: &BasisSet, z: &DVector<f64>, side: Side) -> Result<DVector<f64>> {
    let b = basis.eval(z)?;
    check_len(set, &b)?;
    let norm = b.norm();
    if norm <= BZ_TOL {
        return Err(Error::NonSmooth { norm });
    }
    let gamma = match side {
        Side::Plus => set.support_point(&b),
        Side::Minus => set.support_point(&(-&b)),
    };
    Ok(basis.jacobian(z)? * gamma)
}

fn check_len(set: &ParameterSet, b: &DVector<f64>) -> Result<()> {
    if set.dim() != b.len() {
        return Err(Error::Shape(format!("basis has {} functions, parameter set has dimension {}", b.len(), set.dim())));
    }
    Ok(())
}
