//! Sets described by quadratic matrix inequalities.
//!
//! A symmetric `(1+ℓ)×(1+ℓ)` matrix `M` defines
//! `Z(M) = { v ∈ ℝ^ℓ : [1; v]ᵀ M [1; v] ≥ 0 }`. When the lower-right block
//! `M₂₂` is negative definite and the Schur complement `M|M₂₂` is
//! nonnegative, `Z(M)` is a bounded ellipsoid (possibly a single point).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, PD_TOL};

/// Eigenvalue signature of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub zero: usize,
    pub negative: usize,
}

/// Counts eigenvalues above `tol`, within `±tol` and below `-tol`.
pub fn inertia(m: &DMatrix<f64>, tol: f64) -> Result<Inertia> {
    let sym = linalg::symmetrize_checked(m)?;
    let eig = linalg::sym_eigenvalues(&sym);
    let mut out = Inertia { positive: 0, zero: 0, negative: 0 };
    for &l in eig.iter() {
        if l > tol {
            out.positive += 1;
        } else if l < -tol {
            out.negative += 1;
        } else {
            out.zero += 1;
        }
    }
    Ok(out)
}

/// Symmetric matrix `M` defining the set `Z(M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymQuadSet {
    m: DMatrix<f64>,
}

impl SymQuadSet {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() < 2 {
            return Err(Error::Shape(format!(
                "quadratic set matrix must be at least 2x2, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { m: linalg::symmetrize_checked(&m)? })
    }

    /// `diag(q, -I_dim)`, the set `{v : |v|² ≤ q}`.
    pub fn ball(q: f64, dim: usize) -> Result<Self> {
        let mut d = vec![-1.0; dim + 1];
        d[0] = q;
        Self::new(DMatrix::from_diagonal(&DVector::from_vec(d)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Dimension ℓ of the vectors in `Z(M)`.
    pub fn dim(&self) -> usize {
        self.m.nrows() - 1
    }

    pub fn m11(&self) -> f64 {
        self.m[(0, 0)]
    }

    pub fn m21(&self) -> DVector<f64> {
        self.m.view((1, 0), (self.dim(), 1)).column(0).into_owned()
    }

    pub fn m22(&self) -> DMatrix<f64> {
        let l = self.dim();
        self.m.view((1, 1), (l, l)).into_owned()
    }

    /// Absolute tolerance used for definiteness of `M₂₂`.
    pub fn pd_tol(&self) -> f64 {
        PD_TOL * linalg::max_abs(&self.m)
    }

    pub fn zero_tol(&self) -> f64 {
        linalg::zero_tol_for(&self.m)
    }

    /// `[1; v]ᵀ M [1; v]`.
    pub fn form(&self, v: &DVector<f64>) -> f64 {
        let mut x = DVector::zeros(self.m.nrows());
        x[0] = 1.0;
        x.rows_mut(1, self.dim()).copy_from(v);
        linalg::quad(&self.m, &x)
    }

    pub fn contains(&self, v: &DVector<f64>) -> bool {
        self.form(v) >= -self.zero_tol()
    }

    /// Checks `M₂₂ ≺ 0` and returns the Cholesky factor of `-M₂₂`.
    fn neg_m22_cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let m22 = self.m22();
        let max_eig = linalg::sym_eigenvalues(&m22).max();
        if !(max_eig < -self.pd_tol()) {
            return Err(Error::Unbounded { max_eig });
        }
        linalg::cholesky(&(-m22))
    }

    /// Schur complement `M₁₁ − M₁₂ M₂₂⁻¹ M₂₁`.
    pub fn schur_22(&self) -> Result<f64> {
        let chol = self.neg_m22_cholesky()?;
        let m21 = self.m21();
        // -M₁₂ M₂₂⁻¹ M₂₁ = M₁₂ (-M₂₂)⁻¹ M₂₁
        Ok(self.m11() + m21.dot(&chol.solve(&m21)))
    }

    /// Completes the square: `Z(M) = {v : (v-c)ᵀ(-M₂₂)(v-c) ≤ M|M₂₂}`.
    pub fn to_ellipsoid(&self) -> Result<Ellipsoid> {
        let chol = self.neg_m22_cholesky()?;
        let m21 = self.m21();
        let center = chol.solve(&m21);
        let schur = self.m11() + m21.dot(&center);
        if schur < -self.zero_tol() {
            return Err(Error::EmptySet { schur });
        }
        Ok(Ellipsoid { center, shape: -self.m22(), level: schur.max(0.0) })
    }

    /// Draws a point uniformly from `Z(M)`.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        Ok(self.to_ellipsoid()?.sample_uniform(rng))
    }
}

/// `{v : (v − center)ᵀ shape (v − center) ≤ level}` with `shape ≻ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub level: f64,
}

impl Ellipsoid {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_singleton(&self) -> bool {
        self.level == 0.0
    }

    /// `(v − center)ᵀ shape (v − center)`.
    pub fn distance2(&self, v: &DVector<f64>) -> f64 {
        linalg::quad(&self.shape, &(v - &self.center))
    }

    /// Maps a point `u` of the unit ball onto the ellipsoid.
    pub fn from_unit_ball(&self, u: &DVector<f64>) -> DVector<f64> {
        let w = linalg::sym_inv_sqrt(&self.shape);
        &self.center + w * u * self.level.sqrt()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        if self.level == 0.0 {
            return self.center.clone();
        }
        let u = sample_unit_ball(self.dim(), rng);
        self.from_unit_ball(&u)
    }
}

/// Uniform draw from the unit ball: Gaussian direction, radius `U^(1/d)`.
pub fn sample_unit_ball<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    let dir = sample_unit_sphere(dim, rng);
    let r: f64 = rng.random::<f64>().powf(1.0 / dim as f64);
    dir * r
}

pub fn sample_unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n: f64 = g.norm();
        if n > 1e-12 {
            return g / n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mat(r: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, r, v)
    }

    #[test]
    fn inertia_examples() {
        let d = mat(2, &[-3.0, 0.0, 0.0, -1.0]);
        assert_eq!(inertia(&d, 1e-12).unwrap(), Inertia { positive: 0, zero: 0, negative: 2 });
        let n = mat(2, &[-3.0, 2.0, 2.0, -1.0]);
        assert_eq!(inertia(&n, 1e-12).unwrap(), Inertia { positive: 1, zero: 0, negative: 1 });
        let z = DMatrix::zeros(3, 3);
        assert_eq!(inertia(&z, 1e-12).unwrap(), Inertia { positive: 0, zero: 3, negative: 0 });
    }

    #[test]
    fn inertia_rejects_bad_shapes() {
        assert!(matches!(inertia(&DMatrix::zeros(2, 3), 0.0), Err(Error::Shape(_))));
        let a = mat(2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(inertia(&a, 0.0), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn schur_examples() {
        let s = SymQuadSet::new(mat(2, &[-3.0, 2.0, 2.0, -1.0])).unwrap();
        assert!((s.schur_22().unwrap() - 1.0).abs() < 1e-14);
        let s = SymQuadSet::new(mat(2, &[3.0, 1.0, 1.0, -1.0])).unwrap();
        assert!((s.schur_22().unwrap() - 4.0).abs() < 1e-14);
        let s = SymQuadSet::ball(7.5, 3).unwrap();
        assert_eq!(s.schur_22().unwrap(), 7.5);
    }

    #[test]
    fn schur_requires_negative_definite_block() {
        let s = SymQuadSet::new(mat(2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(matches!(s.schur_22(), Err(Error::Unbounded { .. })));
        let s = SymQuadSet::new(mat(2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(matches!(s.to_ellipsoid(), Err(Error::Unbounded { .. })));
    }

    #[test]
    fn ellipsoid_examples() {
        let e = SymQuadSet::ball(30.0, 4).unwrap().to_ellipsoid().unwrap();
        assert_eq!(e.center, DVector::zeros(4));
        assert_eq!(e.shape, DMatrix::identity(4, 4));
        assert_eq!(e.level, 30.0);

        let e = SymQuadSet::new(mat(2, &[-3.0, 2.0, 2.0, -1.0])).unwrap().to_ellipsoid().unwrap();
        assert!((e.center[0] - 2.0).abs() < 1e-14);
        assert!((e.shape[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((e.level - 1.0).abs() < 1e-14);

        let e = SymQuadSet::ball(0.0, 2).unwrap().to_ellipsoid().unwrap();
        assert!(e.is_singleton());
        assert_eq!(e.center, DVector::zeros(2));
    }

    #[test]
    fn empty_set_is_an_error() {
        let s = SymQuadSet::ball(-1.0, 2).unwrap();
        assert!(matches!(s.to_ellipsoid(), Err(Error::EmptySet { .. })));
    }

    #[test]
    fn degenerate_sample_is_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = SymQuadSet::ball(0.0, 2).unwrap();
        assert_eq!(s.sample_uniform(&mut rng).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn ball_samples_match_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = SymQuadSet::ball(30.0, 4).unwrap();
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let v = s.sample_uniform(&mut rng).unwrap();
            let r2 = v.norm_squared();
            assert!(r2 <= 30.0 * (1.0 + 1e-12));
            acc += r2 / 30.0;
        }
        let mean = acc / n as f64;
        // E|u|² = d/(d+2) for the unit ball in dimension d
        assert!((mean / (2.0 / 3.0) - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn scalar_samples_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = SymQuadSet::new(mat(2, &[1.0, 0.0, 0.0, -1.0])).unwrap();
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| s.sample_uniform(&mut rng).unwrap()[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Kolmogorov–Smirnov distance to U[-1, 1]
        let mut ks = 0.0_f64;
        for (i, x) in xs.iter().enumerate() {
            let cdf = (x + 1.0) / 2.0;
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            ks = ks.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        assert!(ks < 0.01, "ks {ks}");
    }
}
