//! Vertex-listed polytopes: membership via Wolfe's minimum-norm-point
//! algorithm and minimization by away-step Frank–Wolfe.

use log::trace;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance of the membership test.
pub const MEMBER_TOL: f64 = 1e-9;

/// `conv { v_1, …, v_m }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    vertices: Vec<DVector<f64>>,
}

impl Polytope {
    pub fn new(vertices: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::Shape("a polytope needs at least one vertex".into()));
        };
        let n = first.len();
        if vertices.iter().any(|v| v.len() != n) {
            return Err(Error::Shape("polytope vertices have different lengths".into()));
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Domain("polytope vertex is not finite".into()));
        }
        Ok(Self { vertices })
    }

    /// `z + conv(offsets)`.
    pub fn translated(z: &DVector<f64>, offsets: &[DVector<f64>]) -> Result<Self> {
        Self::new(offsets.iter().map(|f| z + f).collect())
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    fn scale(&self) -> f64 {
        self.vertices.iter().map(|v| v.amax()).fold(1.0, f64::max)
    }

    /// Closest point of the polytope to `target`.
    pub fn nearest(&self, target: &DVector<f64>) -> MinNormPoint {
        min_norm_point(&self.vertices, target)
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        z.len() == self.dim() && self.nearest(z).distance <= MEMBER_TOL * self.scale()
    }

    /// Convex weights expressing `z`, or a domain error if `z` is outside.
    pub fn weights_of(&self, z: &DVector<f64>) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::Shape(format!("point has length {}, polytope dimension is {}", z.len(), self.dim())));
        }
        let mnp = self.nearest(z);
        if mnp.distance > MEMBER_TOL * self.scale() {
            return Err(Error::Domain(format!("point lies outside the polytope (distance {:e})", mnp.distance)));
        }
        Ok(mnp.weights)
    }

    /// Axis-aligned bounding box `(lower, upper)`.
    pub fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        let mut lo = self.vertices[0].clone();
        let mut hi = self.vertices[0].clone();
        for v in &self.vertices[1..] {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinNormPoint {
    /// Convex weights over the input points.
    pub weights: Vec<f64>,
    pub point: DVector<f64>,
    pub distance: f64,
}

/// Wolfe's algorithm for the point of `conv(points)` nearest to `target`.
pub fn min_norm_point(points: &[DVector<f64>], target: &DVector<f64>) -> MinNormPoint {
    let q: Vec<DVector<f64>> = points.iter().map(|p| p - target).collect();
    let m = q.len();
    let scale = q.iter().map(|x| x.norm_squared()).fold(0.0, f64::max).max(1e-300);
    let eps = 1e-12;

    let start = (0..m).min_by(|&a, &b| q[a].norm_squared().total_cmp(&q[b].norm_squared())).expect("nonempty point set");
    let mut corral = vec![start];
    let mut lambda = vec![1.0];
    let mut x = q[start].clone();

    for _ in 0..(50 * m + 50) {
        let (j, best) = (0..m)
            .map(|i| (i, x.dot(&q[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty point set");
        if x.norm_squared() - best <= eps * scale || corral.contains(&j) {
            break;
        }
        corral.push(j);
        lambda.push(0.0);
        while let Some(mu) = affine_minimizer(&q, &corral) {
            if mu.iter().all(|&u| u > eps) {
                lambda = mu;
                break;
            }
            let mut theta = 1.0;
            for (l, u) in lambda.iter().zip(&mu) {
                if *u <= eps {
                    let d = l - u;
                    if d > 0.0 {
                        theta = f64::min(theta, l / d);
                    }
                }
            }
            for (l, u) in lambda.iter_mut().zip(&mu) {
                *l += theta * (u - *l);
            }
            let mut keep_c = Vec::new();
            let mut keep_l = Vec::new();
            for (&c, &l) in corral.iter().zip(&lambda) {
                if l > eps {
                    keep_c.push(c);
                    keep_l.push(l);
                }
            }
            if keep_c.is_empty() {
                keep_c.push(corral[0]);
                keep_l.push(1.0);
            }
            let total: f64 = keep_l.iter().sum();
            corral = keep_c;
            lambda = keep_l.into_iter().map(|l| l / total).collect();
        }
        x = combine(&q, &corral, &lambda);
    }

    let mut weights = vec![0.0; m];
    for (&c, &l) in corral.iter().zip(&lambda) {
        weights[c] += l;
    }
    let point = combine(points, &corral, &lambda);
    let distance = (&point - target).norm();
    MinNormPoint { weights, point, distance }
}

fn combine(points: &[DVector<f64>], idx: &[usize], w: &[f64]) -> DVector<f64> {
    let mut x = DVector::zeros(points[0].len());
    for (&i, &l) in idx.iter().zip(w) {
        x += &points[i] * l;
    }
    x
}

/// Minimizer of `‖Σ μ_i q_i‖` over the affine hull, `Σ μ_i = 1`, as a least-squares
/// problem in the differences `q_i − q_0` (avoids squaring the condition number).
fn affine_minimizer(q: &[DVector<f64>], corral: &[usize]) -> Option<Vec<f64>> {
    let s = corral.len();
    let base = &q[corral[0]];
    if s == 1 {
        return Some(vec![1.0]);
    }
    let d = DMatrix::from_columns(&corral[1..].iter().map(|&i| &q[i] - base).collect::<Vec<_>>());
    let svd = d.svd(true, true);
    let tol = 1e-13 * svd.singular_values.max().max(1e-300);
    let rest = svd.solve(&(-base), tol).ok()?;
    let mut mu = Vec::with_capacity(s);
    mu.push(1.0 - rest.sum());
    mu.extend(rest.iter().copied());
    mu.iter().all(|u| u.is_finite()).then_some(mu)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwOptions {
    /// Stop when the Frank–Wolfe gap falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub backtrack: f64,
}

impl Default for FwOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 500, armijo: 1e-4, backtrack: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwResult {
    pub z: DVector<f64>,
    pub value: f64,
    /// `max_s ⟨−∇f(z), s − z⟩` over the vertices at the returned point.
    pub gap: f64,
    pub iterations: usize,
    pub weights: Vec<f64>,
}

/// Minimizes `f` over `poly` by Frank–Wolfe with away steps, starting from
/// `z_init`. `f` returns value and gradient. Linear-minimization ties go to
/// the lowest vertex index.
pub fn frank_wolfe<F>(poly: &Polytope, z_init: &DVector<f64>, mut f: F, opts: &FwOptions) -> Result<FwResult>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let verts = poly.vertices();
    let mut alpha = poly.weights_of(z_init)?;
    let mut z = combine(verts, &(0..verts.len()).collect::<Vec<_>>(), &alpha);
    let (mut fz, mut g) = f(&z)?;
    // curvature estimate along the last search direction
    let mut curv: Option<f64> = None;

    for it in 0..opts.max_iter {
        let lin: Vec<f64> = verts.iter().map(|v| g.dot(v)).collect();
        let gz = g.dot(&z);
        let s = argmin_first(&lin);
        let gap = gz - lin[s];
        if gap <= opts.tol {
            trace!("frank-wolfe converged after {it} iterations");
            return Ok(FwResult { z, value: fz, gap: gap.max(0.0), iterations: it, weights: alpha });
        }
        let away = (0..verts.len())
            .filter(|&i| alpha[i] > 0.0)
            .fold(None, |acc: Option<usize>, i| match acc {
                Some(a) if lin[a] >= lin[i] => Some(a),
                _ => Some(i),
            })
            .expect("weights sum to one");
        let away_gap = lin[away] - gz;

        let (d, gmax, toward) = if gap >= away_gap || alpha[away] >= 1.0 {
            (&verts[s] - &z, 1.0, true)
        } else {
            (&z - &verts[away], alpha[away] / (1.0 - alpha[away]), false)
        };
        let slope = g.dot(&d);
        let dd = d.norm_squared();
        let mut step = match curv {
            Some(c) if c > 0.0 => (-slope / (c * dd)).min(gmax),
            _ => gmax,
        };
        let accepted = loop {
            let trial = &z + &d * step;
            let (ft, gt) = f(&trial)?;
            if ft <= fz + opts.armijo * step * slope {
                let c = 2.0 * (ft - fz - step * slope) / (step * step * dd);
                curv = c.is_finite().then_some(c);
                break Some((trial, ft, gt));
            }
            step *= opts.backtrack;
            if step * d.amax() <= 1e-15 * (1.0 + z.amax()) {
                break None;
            }
        };
        let Some((zn, fnew, gnew)) = accepted else {
            trace!("frank-wolfe line search stalled at iteration {it}");
            return Ok(FwResult { z, value: fz, gap, iterations: it, weights: alpha });
        };
        if toward {
            for a in alpha.iter_mut() {
                *a *= 1.0 - step;
            }
            alpha[s] += step;
        } else {
            for a in alpha.iter_mut() {
                *a *= 1.0 + step;
            }
            alpha[away] -= step;
            if step >= gmax {
                alpha[away] = 0.0;
            }
        }
        for a in alpha.iter_mut() {
            if *a < 1e-15 {
                *a = 0.0;
            }
        }
        z = zn;
        fz = fnew;
        g = gnew;
    }
    let lin: Vec<f64> = verts.iter().map(|v| g.dot(v)).collect();
    let gap = (g.dot(&z) - lin[argmin_first(&lin)]).max(0.0);
    Ok(FwResult { z, value: fz, gap, iterations: opts.max_iter, weights: alpha })
}

fn argmin_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}
