//! Set-valued regression: from noisy samples to the ellipsoid of all
//! parameters consistent with the data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::linalg;
use crate::qmi::{Ellipsoid, SymQuadSet};

/// Schur complements at or below this fraction of `max|N_ij|` are treated
/// as exactly zero, making the parameter set a single point.
pub const SINGLETON_TOL: f64 = 1e-12;

/// Bounded noise model `Π` with `Π₂₂ ≺ 0` and `Π|Π₂₂ ≥ 0`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pi: SymQuadSet,
    ellipsoid: Ellipsoid,
}

impl NoiseModel {
    pub fn new(pi: SymQuadSet) -> Result<Self> {
        let ellipsoid = pi.to_ellipsoid().map_err(|e| Error::NoiseModel(e.to_string()))?;
        Ok(Self { pi, ellipsoid })
    }

    /// `Π = diag(q, −I_T)`, i.e. `W Wᵀ ≤ q`.
    pub fn ball(q: f64, samples: usize) -> Result<Self> {
        if !(q >= 0.0) {
            return Err(Error::NoiseModel(format!("noise bound q must be nonnegative, got {q}")));
        }
        Self::new(SymQuadSet::ball(q, samples)?)
    }

    pub fn pi(&self) -> &SymQuadSet {
        &self.pi
    }

    pub fn ellipsoid(&self) -> &Ellipsoid {
        &self.ellipsoid
    }

    /// Number of samples `T` per batch.
    pub fn samples(&self) -> usize {
        self.pi.dim()
    }

    pub fn contains(&self, w: &DVector<f64>) -> bool {
        self.pi.contains(w)
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.ellipsoid.sample_uniform(rng)
    }
}

/// Sample points, their measured values, and the feature matrix `Φ` (`k×T`).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBatch {
    pub points: Vec<DVector<f64>>,
    pub y: DVector<f64>,
    pub phi: DMatrix<f64>,
}

impl MeasurementBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Evaluates the basis at every point: `Φ = [b(z_1) ⋯ b(z_T)]`.
pub fn feature_matrix(basis: &BasisSet, points: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let cols = points.iter().map(|z| basis.eval(z)).collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&cols))
}

pub fn assemble_batch(basis: &BasisSet, points: Vec<DVector<f64>>, y: DVector<f64>) -> Result<MeasurementBatch> {
    if points.is_empty() {
        return Err(Error::Shape("a measurement batch needs at least one sample".into()));
    }
    if points.len() != y.len() {
        return Err(Error::Shape(format!("{} points but {} measurements", points.len(), y.len())));
    }
    let phi = feature_matrix(basis, &points)?;
    Ok(MeasurementBatch { points, y, phi })
}

/// `N = [1 Y; 0 −Φ] Π [1 Y; 0 −Φ]ᵀ`, so that the consistent set is `Z(N)`.
pub fn build_n(batch: &MeasurementBatch, noise: &NoiseModel) -> Result<SymQuadSet> {
    let t = batch.len();
    if noise.samples() != t {
        return Err(Error::Shape(format!("noise model is for {} samples, batch has {t}", noise.samples())));
    }
    let k = batch.phi.nrows();
    let mut lift = DMatrix::zeros(1 + k, 1 + t);
    lift[(0, 0)] = 1.0;
    lift.view_mut((0, 1), (1, t)).copy_from(&batch.y.transpose());
    lift.view_mut((1, 1), (k, t)).copy_from(&(-&batch.phi));
    let n = &lift * noise.pi().matrix() * lift.transpose();
    SymQuadSet::new((&n + n.transpose()) * 0.5)
}

/// The bounded, nonempty ellipsoid `Γ = Z(N)` of consistent parameters.
#[derive(Debug, Clone)]
pub struct ParameterSet {
    n: SymQuadSet,
    lse: DVector<f64>,
    schur: f64,
    ellipsoid: Ellipsoid,
    /// `(−N₂₂)⁻¹`
    inv_shape: DMatrix<f64>,
}

impl ParameterSet {
    pub fn new(n: SymQuadSet) -> Result<Self> {
        let ellipsoid = match n.to_ellipsoid() {
            Ok(e) => e,
            Err(Error::Unbounded { .. }) => return Err(Error::NotExciting),
            Err(Error::EmptySet { schur }) => return Err(Error::Inconsistent { schur }),
            Err(e) => return Err(e),
        };
        let mut ellipsoid = ellipsoid;
        if ellipsoid.level <= SINGLETON_TOL * linalg::max_abs(n.matrix()).max(1.0) {
            ellipsoid.level = 0.0;
        }
        let inv_shape = linalg::cholesky(&ellipsoid.shape)?.inverse();
        let inv_shape = (&inv_shape + inv_shape.transpose()) * 0.5;
        Ok(Self {
            lse: ellipsoid.center.clone(),
            schur: ellipsoid.level,
            n,
            ellipsoid,
            inv_shape,
        })
    }

    /// Set-valued regression on one batch.
    pub fn from_batch(batch: &MeasurementBatch, noise: &NoiseModel) -> Result<Self> {
        Self::new(build_n(batch, noise)?)
    }

    pub fn n(&self) -> &SymQuadSet {
        &self.n
    }

    /// Least-squares estimate `−N₂₂⁻¹N₂₁`, the center of `Γ`.
    pub fn lse(&self) -> &DVector<f64> {
        &self.lse
    }

    /// `N|N₂₂`, clamped at zero.
    pub fn schur(&self) -> f64 {
        self.schur
    }

    pub fn ellipsoid(&self) -> &Ellipsoid {
        &self.ellipsoid
    }

    pub fn inv_shape(&self) -> &DMatrix<f64> {
        &self.inv_shape
    }

    pub fn dim(&self) -> usize {
        self.lse.len()
    }

    pub fn is_singleton(&self) -> bool {
        self.schur == 0.0
    }

    pub fn contains(&self, gamma: &DVector<f64>) -> bool {
        self.n.contains(gamma)
    }

    /// Half-width `√((N|N₂₂) vᵀ(−N₂₂⁻¹)v)` of the support interval along `v`.
    pub fn radius_along(&self, v: &DVector<f64>) -> f64 {
        (self.schur * linalg::quad(&self.inv_shape, v)).max(0.0).sqrt()
    }

    /// `(inf, sup)` of `γᵀv` over `Γ`.
    pub fn support_interval(&self, v: &DVector<f64>) -> Result<(f64, f64)> {
        if v.len() != self.dim() {
            return Err(Error::Shape(format!("direction has length {}, expected {}", v.len(), self.dim())));
        }
        let mid = self.lse.dot(v);
        let r = self.radius_along(v);
        Ok((mid - r, mid + r))
    }

    /// Maximizer of `γᵀv` over `Γ`.
    pub fn support_point(&self, v: &DVector<f64>) -> DVector<f64> {
        let sv = &self.inv_shape * v;
        let denom = v.dot(&sv);
        if self.schur == 0.0 || denom <= 0.0 {
            return self.lse.clone();
        }
        &self.lse + sv * (self.schur / denom).sqrt()
    }

    /// `Γ_λ = Z(N_λ)` with `N_λ = N + diag(4λ(1+λ)(N|N₂₂), 0)`.
    pub fn inflate(&self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
        }
        let mut m = self.n.matrix().clone();
        m[(0, 0)] += 4.0 * lambda * (1.0 + lambda) * self.schur;
        Self::new(SymQuadSet::new(m)?)
    }
}
