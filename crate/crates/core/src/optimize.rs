//! Cautious minimization of the worst-case bound over a polytope.

use log::warn;
use nalgebra::DVector;

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::intersection::{IntersectionSet, SolverOptions};
use crate::polytope::{frank_wolfe, FwOptions, Polytope};
use crate::regression::ParameterSet;

/// Radius of the ball around 0 that `conv F` must contain.
pub const STENCIL_TOL: f64 = 1e-6;

/// Offsets `F` at which a batch is sampled around a point.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStencil {
    offsets: Vec<DVector<f64>>,
}

impl SampleStencil {
    /// Requires `|F| ≥ n + 1` and `0` in the interior of `conv F`.
    pub fn new(offsets: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = offsets.first() else {
            return Err(Error::Shape("stencil is empty".into()));
        };
        let n = first.len();
        if offsets.iter().any(|f| f.len() != n) {
            return Err(Error::Shape("stencil offsets have different lengths".into()));
        }
        if offsets.len() < n + 1 {
            return Err(Error::Domain(format!("stencil needs at least {} offsets in dimension {n}, got {}", n + 1, offsets.len())));
        }
        let hull = Polytope::new(offsets.clone())?;
        // the cross-polytope with these vertices contains the ball of radius STENCIL_TOL
        let r = STENCIL_TOL * (n as f64).sqrt();
        for i in 0..n {
            for s in [r, -r] {
                let mut p = DVector::zeros(n);
                p[i] = s;
                if hull.nearest(&p).distance > 1e-12 {
                    return Err(Error::Domain("origin is not in the interior of the stencil's convex hull".into()));
                }
            }
        }
        Ok(Self { offsets })
    }

    pub fn offsets(&self) -> &[DVector<f64>] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.offsets[0].len()
    }

    /// `{ z + f : f ∈ F }`.
    pub fn points_at(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        self.offsets.iter().map(|f| z + f).collect()
    }

    /// `S(z) = z + conv F`.
    pub fn polytope_at(&self, z: &DVector<f64>) -> Result<Polytope> {
        Polytope::translated(z, &self.offsets)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OptimizeOptions {
    pub fw: FwOptions,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimized {
    pub z: DVector<f64>,
    /// Feasible-point value of the bound at `z`.
    pub value: f64,
    /// Frank–Wolfe gap at `z`, a bound on suboptimality for convex objectives.
    pub fw_gap: f64,
    /// Certified solver gap of `value`.
    pub solver_gap: f64,
    pub iterations: usize,
}

impl Minimized {
    /// Certified upper bound on the worst case at `z`.
    pub fn bound(&self) -> f64 {
        self.value + self.solver_gap
    }
}

/// Value, gradient and solver gap of `φ⁺(·; ∩Γ_i)`. A point where `b(z)`
/// vanishes gets the gradient of a slightly shifted point.
fn upper_with_gradient(inter: &IntersectionSet, basis: &BasisSet, z: &DVector<f64>, opts: &SolverOptions) -> Result<(f64, DVector<f64>, f64)> {
    let b = basis.eval(z)?;
    let res = match inter.support(&b, opts) {
        Ok(r) => r,
        Err(Error::NotCertified { best }) => {
            warn!("bound at {:?} not certified (gap {:.3e})", z.as_slice(), best.gap);
            *best
        }
        Err(e) => return Err(e),
    };
    let grad_at = if b.norm() <= crate::bounds::BZ_TOL {
        let shifted = z.add_scalar(1e-8 * (1.0 + z.amax()));
        if basis.eval(&shifted)?.norm() <= crate::bounds::BZ_TOL {
            return Err(Error::NonSmooth { norm: b.norm() });
        }
        shifted
    } else {
        z.clone()
    };
    let grad = basis.jacobian(&grad_at)? * &res.maximizer;
    Ok((res.value, grad, res.gap))
}

/// Minimizes `φ⁺(z; ∩Γ_i)` over `poly` by Frank–Wolfe from `z_init`.
pub fn minimize_upper(
    inter: &IntersectionSet,
    basis: &BasisSet,
    poly: &Polytope,
    z_init: &DVector<f64>,
    opts: &OptimizeOptions,
) -> Result<Minimized> {
    if poly.dim() != basis.input_dim() {
        return Err(Error::Shape(format!("polytope dimension {} differs from basis input dimension {}", poly.dim(), basis.input_dim())));
    }
    let r = frank_wolfe(
        poly,
        z_init,
        |z| upper_with_gradient(inter, basis, z, &opts.solver).map(|(v, g, _)| (v, g)),
        &opts.fw,
    )?;
    let (value, _, solver_gap) = upper_with_gradient(inter, basis, &r.z, &opts.solver)?;
    Ok(Minimized { z: r.z, value, fw_gap: r.gap, solver_gap, iterations: r.iterations })
}

/// Minimizes `φ⁺(z; Γ) + λU(z; Γ)`, which equals `φ⁺(z; Γ_λ)`.
pub fn weighted_minimize(
    set: &ParameterSet,
    basis: &BasisSet,
    poly: &Polytope,
    z_init: &DVector<f64>,
    lambda: f64,
    opts: &OptimizeOptions,
) -> Result<Minimized> {
    let inflated = set.inflate(lambda)?;
    minimize_upper(&IntersectionSet::single(inflated), basis, poly, z_init, opts)
}
