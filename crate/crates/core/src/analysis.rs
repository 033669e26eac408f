//! Data-driven certificates: nonnegativity of all consistent parameters,
//! convexity of `φ^γ` and of the uncertainty, and the optimality-gap bracket.

use nalgebra::DVector;

use crate::basis::{BasisSet, ConvexityClass};
use crate::error::{Error, Result};
use crate::intersection::{IntersectionSet, SolverOptions};
use crate::polytope::Polytope;
use crate::qmi::inertia;
use crate::regression::ParameterSet;

/// `Γ ⊆ ℝᵏ_{≥0}`, decided from the inertia of `N` and the least-squares estimate.
pub fn nonneg_params_test(set: &ParameterSet) -> bool {
    let n = set.n();
    let Ok(sig) = inertia(n.matrix(), n.zero_tol()) else { return false };
    let lse = set.lse();
    // N ⪯ 0: Γ is the single point lse
    if sig.positive == 0 && lse.iter().all(|&x| x >= 0.0) {
        return true;
    }
    if sig.positive != 1 || lse.iter().any(|&x| x <= 0.0) {
        return false;
    }
    let inv = set.inv_shape();
    (0..lse.len()).all(|i| set.schur() - lse[i] * lse[i] / inv[(i, i)] <= 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConvexityVerdict {
    NotCertified,
    Convex,
    StrictlyConvex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateMethod {
    /// Nonnegativity of every consistent parameter.
    Nonnegativity,
    /// Per-coordinate parameter intervals.
    CoordinateIntervals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityCertificate {
    pub verdict: ConvexityVerdict,
    pub method: CertificateMethod,
    /// `(inf, sup)` of each parameter coordinate; empty for the nonnegativity method.
    pub details: Vec<(f64, f64)>,
}

impl ConvexityCertificate {
    pub fn is_convex(&self) -> bool {
        self.verdict >= ConvexityVerdict::Convex
    }

    pub fn is_strictly_convex(&self) -> bool {
        self.verdict == ConvexityVerdict::StrictlyConvex
    }
}

/// One-sided certificate that `z ↦ γᵀb(z)` is convex for every `γ ∈ Γ`.
/// `NotCertified` never asserts non-convexity.
pub fn certify_convexity(set: &ParameterSet, basis: &BasisSet) -> Result<ConvexityCertificate> {
    if basis.len() != set.dim() {
        return Err(Error::Shape(format!("basis has {} functions, parameter set has dimension {}", basis.len(), set.dim())));
    }
    let classes = basis.convexity_classes();
    let by_nonneg = if classes.iter().all(|c| c.is_convex()) && nonneg_params_test(set) {
        let strict = classes.iter().all(|&c| c == ConvexityClass::StrictlyConvex) && set.n().m11() < 0.0;
        if strict { ConvexityVerdict::StrictlyConvex } else { ConvexityVerdict::Convex }
    } else {
        ConvexityVerdict::NotCertified
    };

    let k = set.dim();
    let details = (0..k)
        .map(|i| {
            let mut e = DVector::zeros(k);
            e[i] = 1.0;
            set.support_interval(&e)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut convex = true;
    let mut strict = false;
    for (class, &(lo, _)) in classes.iter().zip(&details) {
        match class {
            ConvexityClass::Affine => {}
            ConvexityClass::Convex => convex &= lo >= 0.0,
            ConvexityClass::StrictlyConvex => {
                convex &= lo >= 0.0;
                strict |= lo > 0.0;
            }
            ConvexityClass::Unknown => convex = false,
        }
    }
    let by_intervals = match (convex, strict) {
        (true, true) => ConvexityVerdict::StrictlyConvex,
        (true, false) => ConvexityVerdict::Convex,
        _ => ConvexityVerdict::NotCertified,
    };

    Ok(if by_nonneg > by_intervals {
        ConvexityCertificate { verdict: by_nonneg, method: CertificateMethod::Nonnegativity, details: Vec::new() }
    } else {
        ConvexityCertificate { verdict: by_intervals, method: CertificateMethod::CoordinateIntervals, details }
    })
}

/// Sufficient check that `U(·; Γ)` is convex: every basis function is convex
/// and nonnegative, and `(−N₂₂)⁻¹` is entrywise nonnegative.
pub fn certify_uncertainty_convexity(set: &ParameterSet, basis: &BasisSet) -> bool {
    basis.len() == set.dim()
        && basis.functions().iter().all(|p| p.is_convex_nonnegative())
        && set.inv_shape().iter().all(|&x| x >= 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapOptions {
    /// Grid points per axis of the bounding box, used unless the maximum of
    /// the uncertainty is known to sit at a vertex.
    pub grid_per_axis: usize,
    /// Known suboptimality of `z̄`, subtracted from the lower bound.
    pub suboptimality: f64,
    pub solver: SolverOptions,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self { grid_per_axis: 17, suboptimality: 0.0, solver: SolverOptions::default() }
    }
}

/// Bracket `[lower, upper]` on the optimum of the true function over a polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub upper: f64,
    pub lower: f64,
    pub max_uncertainty: f64,
    pub attained_at: DVector<f64>,
    /// False when the uncertainty maximum came from a grid search rather than
    /// an exact vertex enumeration.
    pub certified: bool,
}

impl GapReport {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Certified-upper uncertainty at one point.
fn uncertainty_upper(inter: &IntersectionSet, basis: &BasisSet, z: &DVector<f64>, opts: &SolverOptions) -> Result<f64> {
    let b = basis.eval(z)?;
    let hi = inter.support_upper(&b, opts)?;
    let lo = inter.support_upper(&(-&b), opts)?;
    Ok((hi + lo).max(0.0))
}

/// `upper = φ⁺(z̄)`, `lower = φ⁺(z̄) − max_S U`, valid when `z̄` minimizes
/// `φ⁺` over `S` up to `opts.suboptimality`.
pub fn optimality_gap(
    inter: &IntersectionSet,
    basis: &BasisSet,
    poly: &Polytope,
    z_bar: &DVector<f64>,
    opts: &GapOptions,
) -> Result<GapReport> {
    if !poly.contains(z_bar) {
        return Err(Error::Domain("z_bar lies outside the polytope".into()));
    }
    let b = basis.eval(z_bar)?;
    let sup = match inter.support(&b, &opts.solver) {
        Ok(r) => r,
        Err(Error::NotCertified { best }) => *best,
        Err(e) => return Err(e),
    };

    // a single-point member makes the uncertainty vanish identically
    let exact = inter.members().iter().any(|m| m.is_singleton())
        || (inter.len() == 1 && certify_uncertainty_convexity(&inter.members()[0], basis));
    let mut candidates: Vec<DVector<f64>> = poly.vertices().to_vec();
    if !exact {
        candidates.extend(grid_points(poly, opts.grid_per_axis));
    }
    let mut max_u = f64::NEG_INFINITY;
    let mut at = z_bar.clone();
    for z in &candidates {
        let u = uncertainty_upper(inter, basis, z, &opts.solver)?;
        if u > max_u {
            max_u = u;
            at = z.clone();
        }
    }
    Ok(GapReport {
        upper: sup.upper(),
        lower: sup.value - max_u - opts.suboptimality,
        max_uncertainty: max_u,
        attained_at: at,
        certified: exact,
    })
}

/// Points of a regular grid over the bounding box that lie in the polytope.
pub fn grid_points(poly: &Polytope, per_axis: usize) -> Vec<DVector<f64>> {
    let (lo, hi) = poly.bounding_box();
    let n = lo.len();
    let per_axis = per_axis.max(2);
    let total = per_axis.pow(n as u32);
    let mut out = Vec::new();
    for mut idx in 0..total {
        let mut z = DVector::zeros(n);
        for d in 0..n {
            let t = (idx % per_axis) as f64 / (per_axis - 1) as f64;
            idx /= per_axis;
            z[d] = lo[d] + t * (hi[d] - lo[d]);
        }
        if poly.contains(&z) {
            out.push(z);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Primitive;
    use crate::qmi::SymQuadSet;
    use nalgebra::DMatrix;

    fn scalar(m: [f64; 4]) -> ParameterSet {
        ParameterSet::new(SymQuadSet::new(DMatrix::from_row_slice(2, 2, &m)).unwrap()).unwrap()
    }

    fn singleton(g: &[f64]) -> ParameterSet {
        let k = g.len();
        let mut m = DMatrix::zeros(k + 1, k + 1);
        m[(0, 0)] = -g.iter().map(|x| x * x).sum::<f64>();
        for i in 0..k {
            m[(0, i + 1)] = g[i];
            m[(i + 1, 0)] = g[i];
            m[(i + 1, i + 1)] = -1.0;
        }
        ParameterSet::new(SymQuadSet::new(m).unwrap()).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn nonnegativity_examples() {
        assert!(nonneg_params_test(&scalar([-3.0, 2.0, 2.0, -1.0])));
        assert!(!nonneg_params_test(&scalar([3.0, 1.0, 1.0, -1.0])));
        assert!(nonneg_params_test(&singleton(&[1.0, 0.0, 0.0, 1.0])));
        assert!(!nonneg_params_test(&singleton(&[1.0, -0.5])));
    }

    #[test]
    fn convexity_examples() {
        let sq = BasisSet::new(1, vec![Primitive::Monomial(vec![2])]).unwrap();
        let wide = scalar([3.0, 1.0, 1.0, -1.0]);
        assert_eq!(certify_convexity(&wide, &sq).unwrap().verdict, ConvexityVerdict::NotCertified);
        let pos = scalar([-3.0, 2.0, 2.0, -1.0]);
        let c = certify_convexity(&pos, &sq).unwrap();
        assert_eq!(c.verdict, ConvexityVerdict::StrictlyConvex);

        let affine = BasisSet::new(1, vec![Primitive::Coordinate(0)]).unwrap();
        let c = certify_convexity(&wide, &affine).unwrap();
        assert_eq!(c.verdict, ConvexityVerdict::Convex);
        assert_eq!(c.method, CertificateMethod::CoordinateIntervals);
        assert_eq!(c.details, vec![(-1.0, 3.0)]);

        let bowl = BasisSet::affine_plus_squared_norm(2);
        let c = certify_convexity(&singleton(&[1.0, 0.0, 0.0, 1.0]), &bowl).unwrap();
        assert_eq!(c.verdict, ConvexityVerdict::StrictlyConvex);
        let c = certify_convexity(&singleton(&[1.0, 0.0, 0.0, 0.0]), &bowl).unwrap();
        assert_eq!(c.verdict, ConvexityVerdict::Convex);

        let gauss = BasisSet::new(1, vec![Primitive::Gaussian { center: v(&[0.0]), width: 1.0 }]).unwrap();
        assert_eq!(certify_convexity(&pos, &gauss).unwrap().verdict, ConvexityVerdict::NotCertified);
    }

    #[test]
    fn uncertainty_convexity_examples() {
        let c = BasisSet::new(1, vec![Primitive::Constant]).unwrap();
        assert!(certify_uncertainty_convexity(&scalar([-3.0, 2.0, 2.0, -1.0]), &c));
        let lin = BasisSet::new(1, vec![Primitive::Coordinate(0)]).unwrap();
        assert!(!certify_uncertainty_convexity(&scalar([-3.0, 2.0, 2.0, -1.0]), &lin));
        // −N₂₂ = [[2,1],[1,1]] has inverse [[1,−1],[−1,2]]
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, -2.0, -1.0, 0.0, -1.0, -1.0]);
        let set = ParameterSet::new(SymQuadSet::new(m).unwrap()).unwrap();
        let two = BasisSet::new(1, vec![Primitive::Constant, Primitive::Monomial(vec![2])]).unwrap();
        assert!(!certify_uncertainty_convexity(&set, &two));
    }

    #[test]
    fn gap_examples() {
        let c = BasisSet::new(1, vec![Primitive::Constant]).unwrap();
        let poly = Polytope::new(vec![v(&[-1.0]), v(&[2.0])]).unwrap();
        let inter = IntersectionSet::single(scalar([-3.0, 2.0, 2.0, -1.0]));
        let r = optimality_gap(&inter, &c, &poly, &v(&[0.5]), &GapOptions::default()).unwrap();
        assert!((r.upper - 3.0).abs() < 1e-8 && (r.max_uncertainty - 2.0).abs() < 1e-8);
        assert!((r.lower - 1.0).abs() < 1e-8);
        assert!(r.certified);

        let bowl = BasisSet::affine_plus_squared_norm(2);
        let inter = IntersectionSet::single(singleton(&[1.0, 0.0, 0.0, 1.0]));
        let poly = Polytope::new(vec![v(&[3.0, 3.0]), v(&[4.0, 3.0]), v(&[3.0, 4.0]), v(&[2.0, 2.0])]).unwrap();
        let r = optimality_gap(&inter, &bowl, &poly, &v(&[2.0, 2.0]), &GapOptions::default()).unwrap();
        assert_eq!(r.max_uncertainty, 0.0);
        assert_eq!(r.lower, r.upper);
        assert!((r.upper - 9.0).abs() < 1e-12);

        assert!(matches!(
            optimality_gap(&inter, &bowl, &poly, &v(&[0.0, 0.0]), &GapOptions::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn grid_stays_inside() {
        let poly = Polytope::new(vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap();
        let pts = grid_points(&poly, 5);
        assert_eq!(pts.len(), 15);
        assert!(pts.iter().all(|p| p[0] + p[1] <= 1.0 + 1e-12));
    }
}
