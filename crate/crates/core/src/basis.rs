//! Basis functions `φ_j : ℝⁿ → ℝ` with analytic gradients and Hessians.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Conservative convexity label of a basis function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvexityClass {
    Affine,
    Convex,
    StrictlyConvex,
    Unknown,
}

impl ConvexityClass {
    pub fn is_convex(self) -> bool {
        !matches!(self, ConvexityClass::Unknown)
    }
}

/// One basis primitive.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// `1`
    Constant,
    /// `z_i` (zero-based index)
    Coordinate(usize),
    /// `Π z_i^{e_i}`
    Monomial(Vec<u32>),
    /// `zᵀz`
    SquaredNorm,
    /// `exp(-|z - c|² / (2 w²))`
    Gaussian { center: DVector<f64>, width: f64 },
}

impl Primitive {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Primitive::Coordinate(i) if *i >= n => {
                Err(Error::Shape(format!("coordinate index {i} out of range for dimension {n}")))
            }
            Primitive::Monomial(e) if e.len() != n => Err(Error::Shape(format!(
                "monomial has {} exponents, dimension is {n}",
                e.len()
            ))),
            Primitive::Gaussian { center, .. } if center.len() != n => Err(Error::Shape(format!(
                "gaussian center has length {}, dimension is {n}",
                center.len()
            ))),
            Primitive::Gaussian { width, .. } if !(*width > 0.0) => {
                Err(Error::Domain(format!("gaussian width must be positive, got {width}")))
            }
            _ => Ok(()),
        }
    }

    pub fn convexity(&self) -> ConvexityClass {
        match self {
            Primitive::Constant | Primitive::Coordinate(_) => ConvexityClass::Affine,
            Primitive::SquaredNorm => ConvexityClass::StrictlyConvex,
            Primitive::Gaussian { .. } => ConvexityClass::Unknown,
            Primitive::Monomial(e) => {
                let degree: u32 = e.iter().sum();
                let vars = e.iter().filter(|&&p| p > 0).count();
                match (degree, vars) {
                    (0, _) => ConvexityClass::Affine,
                    (1, _) => ConvexityClass::Affine,
                    (d, 1) if d % 2 == 0 && e.len() == 1 => ConvexityClass::StrictlyConvex,
                    (d, 1) if d % 2 == 0 => ConvexityClass::Convex,
                    _ => ConvexityClass::Unknown,
                }
            }
        }
    }

    /// Whether the primitive is both convex and nonnegative on all of ℝⁿ.
    pub fn is_convex_nonnegative(&self) -> bool {
        match self {
            Primitive::Constant | Primitive::SquaredNorm => true,
            Primitive::Monomial(e) => {
                let degree: u32 = e.iter().sum();
                degree == 0 || matches!(self.convexity(), ConvexityClass::Convex | ConvexityClass::StrictlyConvex)
            }
            _ => false,
        }
    }

    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        match self {
            Primitive::Constant => 1.0,
            Primitive::Coordinate(i) => z[*i],
            Primitive::Monomial(e) => e.iter().zip(z.iter()).map(|(&p, &x)| x.powi(p as i32)).product(),
            Primitive::SquaredNorm => z.norm_squared(),
            Primitive::Gaussian { center, width } => {
                (-(z - center).norm_squared() / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = z.len();
        match self {
            Primitive::Constant => DVector::zeros(n),
            Primitive::Coordinate(i) => {
                let mut g = DVector::zeros(n);
                g[*i] = 1.0;
                g
            }
            Primitive::Monomial(e) => DVector::from_fn(n, |i, _| {
                if e[i] == 0 {
                    return 0.0;
                }
                let mut prod = e[i] as f64 * z[i].powi(e[i] as i32 - 1);
                for j in (0..n).filter(|&j| j != i) {
                    prod *= z[j].powi(e[j] as i32);
                }
                prod
            }),
            Primitive::SquaredNorm => z * 2.0,
            Primitive::Gaussian { center, width } => {
                let w2 = width * width;
                (center - z) * (self.eval(z) / w2)
            }
        }
    }

    pub fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = z.len();
        match self {
            Primitive::Constant | Primitive::Coordinate(_) => DMatrix::zeros(n, n),
            Primitive::SquaredNorm => DMatrix::identity(n, n) * 2.0,
            Primitive::Monomial(e) => DMatrix::from_fn(n, n, |a, b| {
                let mut coeff = 1.0;
                let mut exps: Vec<i32> = e.iter().map(|&p| p as i32).collect();
                for idx in [a, b] {
                    if exps[idx] == 0 {
                        return 0.0;
                    }
                    coeff *= exps[idx] as f64;
                    exps[idx] -= 1;
                }
                coeff * exps.iter().zip(z.iter()).map(|(&p, &x)| x.powi(p)).product::<f64>()
            }),
            Primitive::Gaussian { center, width } => {
                let w2 = width * width;
                let d = z - center;
                let g = self.eval(z);
                (&d * d.transpose() / (w2 * w2) - DMatrix::identity(n, n) / w2) * g
            }
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Primitive::Constant => write!(f, "1"),
            Primitive::Coordinate(i) => write!(f, "z{}", i + 1),
            Primitive::Monomial(e) => {
                let terms: Vec<String> = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0)
                    .map(|(i, &p)| if p == 1 { format!("z{}", i + 1) } else { format!("z{}^{p}", i + 1) })
                    .collect();
                if terms.is_empty() {
                    write!(f, "1")
                } else {
                    write!(f, "{}", terms.join("*"))
                }
            }
            Primitive::SquaredNorm => write!(f, "|z|^2"),
            Primitive::Gaussian { width, .. } => write!(f, "gauss(w={width})"),
        }
    }
}

/// Ordered collection of `k` basis functions on ℝⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    n: usize,
    functions: Vec<Primitive>,
}

impl BasisSet {
    pub fn new(n: usize, functions: Vec<Primitive>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Shape("input dimension must be positive".into()));
        }
        if functions.is_empty() {
            return Err(Error::Shape("basis must contain at least one function".into()));
        }
        for f in &functions {
            f.validate(n)?;
        }
        Ok(Self { n, functions })
    }

    /// `{1, z_1, …, z_n, zᵀz}`, the quadratic bowl basis.
    pub fn affine_plus_squared_norm(n: usize) -> Self {
        let mut fs = vec![Primitive::Constant];
        fs.extend((0..n).map(Primitive::Coordinate));
        fs.push(Primitive::SquaredNorm);
        Self { n, functions: fs }
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[Primitive] {
        &self.functions
    }

    pub fn names(&self) -> Vec<String> {
        self.functions.iter().map(|f| f.to_string()).collect()
    }

    pub fn convexity_classes(&self) -> Vec<ConvexityClass> {
        self.functions.iter().map(Primitive::convexity).collect()
    }

    fn check_dim(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.n {
            return Err(Error::Shape(format!("point has dimension {}, basis expects {}", z.len(), self.n)));
        }
        Ok(())
    }

    /// `b(z) = [φ_1(z) … φ_k(z)]ᵀ`.
    pub fn eval(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(z)?;
        Ok(DVector::from_iterator(self.len(), self.functions.iter().map(|f| f.eval(z))))
    }

    /// `n×k` matrix whose column `j` is `∇φ_j(z)`.
    pub fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(z)?;
        let cols: Vec<DVector<f64>> = self.functions.iter().map(|f| f.gradient(z)).collect();
        Ok(DMatrix::from_columns(&cols))
    }

    /// Hessian of `Σ γ_j φ_j` at `z`.
    pub fn combined_hessian(&self, gamma: &DVector<f64>, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(z)?;
        let mut h = DMatrix::zeros(self.n, self.n);
        for (g, f) in gamma.iter().zip(&self.functions) {
            h += f.hessian(z) * *g;
        }
        Ok(h)
    }
}
