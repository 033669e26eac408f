//! Support function of an intersection of parameter ellipsoids.
//!
//! There is no closed form for `sup { γᵀv : γ ∈ Γ_0 ∩ … ∩ Γ_m }`, so it is
//! computed by a log-barrier interior-point method started from a strictly
//! feasible witness. Every result carries a certified duality gap computed
//! from the exact Lagrange dual function, and the barrier solution is
//! refined by Newton's method on the KKT system of its active constraints.

mod newton;

use std::sync::OnceLock;

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::basis::BasisSet;
use crate::bounds::BZ_TOL;
use crate::error::{Error, Result};
use crate::regression::ParameterSet;

/// Tolerances and iteration limits of the barrier solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Certified gap target, relative to `1 + |value|`.
    pub tol: f64,
    /// Allowed constraint violation of returned maximizers.
    pub feas_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Barrier parameter growth per outer step.
    pub growth: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, feas_tol: 1e-9, max_outer: 50, max_inner: 50, growth: 10.0 }
    }
}

/// Result of maximizing `γᵀv` over an intersection.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportResult {
    /// `vᵀγ*`, attained by a feasible point and so never above the true support.
    pub value: f64,
    pub maximizer: DVector<f64>,
    /// Certified bound on `support − value`.
    pub gap: f64,
    /// Indices of members whose constraint is active at the maximizer.
    pub active: Vec<usize>,
    pub certified: bool,
}

impl SupportResult {
    /// Certified upper bound on the support.
    pub fn upper(&self) -> f64 {
        self.value + self.gap
    }
}

/// Outcome of the nonemptiness check.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonemptiness {
    /// A point of the intersection. `depth` is `max_i q_i(point)` over the
    /// normalized member constraints `q_i ≤ 1`; below 1 means strictly interior.
    Witness { point: DVector<f64>, depth: f64 },
    /// Two members that do not intersect.
    Disjoint { first: usize, second: usize },
    /// Certified lower bound above 1 on `min_γ max_i q_i(γ)`.
    Infeasible { min_max_level: f64 },
}

impl Nonemptiness {
    pub fn is_nonempty(&self) -> bool {
        matches!(self, Nonemptiness::Witness { .. })
    }

    pub fn witness(&self) -> Option<&DVector<f64>> {
        match self {
            Nonemptiness::Witness { point, .. } => Some(point),
            _ => None,
        }
    }
}

/// Normalized constraint `(γ − c)ᵀ B (γ − c) ≤ 1`.
#[derive(Debug, Clone)]
struct Constraint {
    member: usize,
    center: DVector<f64>,
    b: DMatrix<f64>,
}

impl Constraint {
    fn q(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.center;
        d.dot(&(&self.b * &d))
    }

    /// Value and gradient `2B(x − c)`.
    fn q_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let d = x - &self.center;
        let bd = &self.b * &d;
        (d.dot(&bd), bd * 2.0)
    }
}

/// `Γ_0 ∩ … ∩ Γ_m` for parameter sets of a common dimension.
#[derive(Debug, Clone)]
pub struct IntersectionSet {
    members: Vec<ParameterSet>,
    nonempty: OnceLock<Nonemptiness>,
}

impl IntersectionSet {
    pub fn new(members: Vec<ParameterSet>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::Shape("an intersection needs at least one member".into()));
        };
        let k = first.dim();
        if let Some(bad) = members.iter().find(|m| m.dim() != k) {
            return Err(Error::Shape(format!("member of dimension {} in an intersection of dimension {k}", bad.dim())));
        }
        Ok(Self { members, nonempty: OnceLock::new() })
    }

    pub fn single(member: ParameterSet) -> Self {
        Self { members: vec![member], nonempty: OnceLock::new() }
    }

    pub fn members(&self) -> &[ParameterSet] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    /// A copy with one more member; the nonemptiness cache starts empty.
    pub fn with_member(&self, member: ParameterSet) -> Result<Self> {
        let mut members = self.members.clone();
        members.push(member);
        Self::new(members)
    }

    fn constraints(&self) -> Vec<Constraint> {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_singleton())
            .map(|(i, m)| {
                let e = m.ellipsoid();
                Constraint { member: i, center: e.center.clone(), b: &e.shape / e.level }
            })
            .collect()
    }

    /// Whether the intersection is nonempty, with a witness or a certificate.
    /// Computed once and cached.
    pub fn check_nonempty(&self) -> &Nonemptiness {
        self.nonempty.get_or_init(|| self.compute_nonempty())
    }

    fn compute_nonempty(&self) -> Nonemptiness {
        if let Some((idx, point)) = self.members.iter().enumerate().find(|(_, m)| m.is_singleton()).map(|(i, m)| (i, m.lse().clone())) {
            return match self.members.iter().position(|m| !m.contains(&point)) {
                None => Nonemptiness::Witness { point, depth: 1.0 },
                Some(j) => Nonemptiness::Disjoint { first: idx, second: j },
            };
        }
        let cons = self.constraints();
        let phase = phase_one(&cons, &self.members[0].lse().clone());
        match phase {
            PhaseOne::Feasible { point, depth } => Nonemptiness::Witness { point, depth },
            PhaseOne::Infeasible { lower } => {
                if cons.len() > 2 {
                    for i in 0..cons.len() {
                        for j in (i + 1)..cons.len() {
                            let pair = [cons[i].clone(), cons[j].clone()];
                            if let PhaseOne::Infeasible { .. } = phase_one(&pair, &cons[i].center) {
                                return Nonemptiness::Disjoint { first: cons[i].member, second: cons[j].member };
                            }
                        }
                    }
                } else if cons.len() == 2 {
                    return Nonemptiness::Disjoint { first: cons[0].member, second: cons[1].member };
                }
                Nonemptiness::Infeasible { min_max_level: lower }
            }
        }
    }

    /// Smallest closed-form member support, a valid upper bound on the
    /// support of the intersection.
    fn member_support_bound(&self, v: &DVector<f64>) -> f64 {
        self.members
            .iter()
            .map(|m| m.lse().dot(v) + m.radius_along(v))
            .fold(f64::INFINITY, f64::min)
    }

    /// Maximizes `γᵀv` over the intersection.
    pub fn support(&self, v: &DVector<f64>, opts: &SolverOptions) -> Result<SupportResult> {
        if v.len() != self.dim() {
            return Err(Error::Shape(format!("direction has length {}, expected {}", v.len(), self.dim())));
        }
        let (witness, depth) = match self.check_nonempty() {
            Nonemptiness::Witness { point, depth } => (point.clone(), *depth),
            _ => return Err(Error::Infeasible),
        };
        if let Some(idx) = self.members.iter().position(|m| m.is_singleton()) {
            return Ok(point_result(v, witness, vec![idx], 0.0, true));
        }
        if v.iter().all(|&x| x == 0.0) {
            return Ok(point_result(v, witness, vec![], 0.0, true));
        }
        let bound = self.member_support_bound(v);
        // the tightest member's own maximizer is optimal if all others contain it
        let tightest = (0..self.members.len())
            .min_by(|&i, &j| {
                let s = |m: &ParameterSet| m.lse().dot(v) + m.radius_along(v);
                s(&self.members[i]).total_cmp(&s(&self.members[j]))
            })
            .unwrap_or(0);
        let x = self.members[tightest].support_point(v);
        let forms: Vec<f64> = self.members.iter().map(|m| m.n().form(&x)).collect();
        if forms.iter().enumerate().all(|(i, &f)| i == tightest || f >= 0.0) {
            let active = (0..forms.len())
                .filter(|&i| i == tightest || forms[i] <= self.members[i].n().zero_tol())
                .collect();
            return Ok(point_result(v, x, active, 0.0, true));
        }
        if depth >= 1.0 - 1e-12 {
            // Touching members: no strictly feasible start. The witness is
            // feasible and the member bound is rigorous, but not tight.
            let value = v.dot(&witness);
            let gap = (bound - value).max(0.0);
            let res = point_result(v, witness, vec![], gap, gap <= opts.tol * (1.0 + value.abs()));
            return certify(res);
        }
        let cons = self.constraints();
        barrier_support(&cons, v, witness, bound, opts).and_then(certify)
    }

    /// Certified upper bound on the support; falls back to the uncertified
    /// result's value plus its (still valid) dual gap.
    pub fn support_upper(&self, v: &DVector<f64>, opts: &SolverOptions) -> Result<f64> {
        match self.support(v, opts) {
            Ok(r) => Ok(r.upper()),
            Err(Error::NotCertified { best }) => Ok(best.upper()),
            Err(e) => Err(e),
        }
    }

    /// `φ⁺(z; ∩Γ_i)` with its Danskin gradient `J_b(z) γ*`.
    pub fn eval_upper(&self, basis: &BasisSet, z: &DVector<f64>, opts: &SolverOptions) -> Result<UpperEval> {
        let b = basis.eval(z)?;
        let norm = b.norm();
        if norm <= BZ_TOL {
            return Err(Error::NonSmooth { norm });
        }
        let res = self.support(&b, opts)?;
        let gradient = basis.jacobian(z)? * &res.maximizer;
        Ok(UpperEval { value: res.value, gradient, maximizer: res.maximizer, gap: res.gap })
    }

    /// Width of the guaranteed interval of `γᵀb(z)` over the intersection.
    pub fn uncertainty(&self, basis: &BasisSet, z: &DVector<f64>, opts: &SolverOptions) -> Result<f64> {
        let b = basis.eval(z)?;
        let hi = self.support(&b, opts)?;
        let lo = self.support(&(-&b), opts)?;
        Ok((hi.value + lo.value).max(0.0))
    }

    /// `(inf, sup)` of `γᵀv` over the intersection.
    pub fn support_interval(&self, v: &DVector<f64>, opts: &SolverOptions) -> Result<(f64, f64)> {
        let hi = self.support(v, opts)?;
        let lo = self.support(&(-v), opts)?;
        Ok((-lo.value, hi.value))
    }
}

/// Value, gradient and maximizer of the intersection upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub maximizer: DVector<f64>,
    pub gap: f64,
}

fn point_result(v: &DVector<f64>, point: DVector<f64>, active: Vec<usize>, gap: f64, certified: bool) -> SupportResult {
    SupportResult { value: v.dot(&point), maximizer: point, gap, active, certified }
}

fn certify(res: SupportResult) -> Result<SupportResult> {
    if res.certified {
        Ok(res)
    } else {
        Err(Error::NotCertified { best: Box::new(res) })
    }
}

enum PhaseOne {
    Feasible { point: DVector<f64>, depth: f64 },
    Infeasible { lower: f64 },
}

/// `min_{γ,s} s` subject to `q_i(γ) ≤ s`, by the barrier method.
fn phase_one(cons: &[Constraint], start: &DVector<f64>) -> PhaseOne {
    let k = start.len();
    let m = cons.len() as f64;
    let max_q = |g: &DVector<f64>| cons.iter().map(|c| c.q(g)).fold(f64::NEG_INFINITY, f64::max);
    let s0 = max_q(start);
    let mut x = DVector::zeros(k + 1);
    x.rows_mut(0, k).copy_from(start);
    x[k] = s0 + 1.0 + s0.abs() * 0.1;
    let mut t = m / x[k].abs().max(1.0);
    for _ in 0..60 {
        let f = |x: &DVector<f64>| -> Option<f64> {
            let g = x.rows(0, k).into_owned();
            let s = x[k];
            let mut acc = t * s;
            for c in cons {
                let h = s - c.q(&g);
                if !(h > 0.0) {
                    return None;
                }
                acc -= h.ln();
            }
            Some(acc)
        };
        let gh = |x: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
            let g = x.rows(0, k).into_owned();
            let s = x[k];
            let mut grad = DVector::zeros(k + 1);
            let mut hess = DMatrix::zeros(k + 1, k + 1);
            grad[k] = t;
            for c in cons {
                let (q, dq) = c.q_grad(&g);
                let h = s - q;
                let mut a = DVector::zeros(k + 1);
                a.rows_mut(0, k).copy_from(&dq);
                a[k] = -1.0;
                grad += &a / h;
                hess += &a * a.transpose() / (h * h);
                let mut top = hess.view_mut((0, 0), (k, k));
                top += &c.b * (2.0 / h);
            }
            (grad, hess)
        };
        let centered = newton::minimize(x, f, gh, 1e-10, 100);
        x = centered.x;
        let g = x.rows(0, k).into_owned();
        let depth = max_q(&g);
        // Lagrange dual bound: μ_i ∝ 1/(s − q_i), normalized to sum 1.
        let lower = phase_one_dual(cons, &g, x[k]);
        if depth < 1.0 && (m / t <= 0.1 * (1.0 - depth) || m / t <= 1e-12) {
            return PhaseOne::Feasible { point: g, depth };
        }
        if lower > 1.0 + 1e-9 {
            return PhaseOne::Infeasible { lower };
        }
        if m / t <= 1e-12 {
            return if depth <= 1.0 + 1e-9 {
                PhaseOne::Feasible { point: g, depth }
            } else {
                PhaseOne::Infeasible { lower: lower.max(1.0) }
            };
        }
        t *= 10.0;
    }
    let g = x.rows(0, k).into_owned();
    let depth = max_q(&g);
    if depth <= 1.0 + 1e-9 {
        PhaseOne::Feasible { point: g, depth }
    } else {
        PhaseOne::Infeasible { lower: 1.0 }
    }
}

/// `min_γ Σ μ_i q_i(γ)` with `μ_i ∝ 1/(s − q_i(γ))`, a lower bound on `min max q_i`.
fn phase_one_dual(cons: &[Constraint], g: &DVector<f64>, s: f64) -> f64 {
    let mut mu: Vec<f64> = cons.iter().map(|c| 1.0 / (s - c.q(g)).max(1e-300)).collect();
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|u| *u /= total);
    let k = g.len();
    let mut h = DMatrix::zeros(k, k);
    let mut r = DVector::zeros(k);
    for (c, &u) in cons.iter().zip(&mu) {
        h += &c.b * u;
        r += &c.b * &c.center * u;
    }
    let Some(ch) = h.cholesky() else { return f64::NEG_INFINITY };
    let gamma = ch.solve(&r);
    cons.iter().zip(&mu).map(|(c, &u)| u * c.q(&gamma)).sum()
}

/// Exact Lagrange dual `sup_γ vᵀγ − Σ μ_i (q_i(γ) − 1)` for `μ ≥ 0`.
fn dual_bound(cons: &[Constraint], mu: &[f64], v: &DVector<f64>) -> Option<f64> {
    let k = v.len();
    let mut h = DMatrix::zeros(k, k);
    let mut r = v * 0.5;
    for (c, &u) in cons.iter().zip(mu) {
        if u > 0.0 {
            h += &c.b * u;
            r += &c.b * &c.center * u;
        }
    }
    let gamma = h.cholesky()?.solve(&r);
    let val = v.dot(&gamma) - cons.iter().zip(mu).map(|(c, &u)| if u > 0.0 { u * (c.q(&gamma) - 1.0) } else { 0.0 }).sum::<f64>();
    val.is_finite().then_some(val)
}

fn barrier_support(
    cons: &[Constraint],
    v: &DVector<f64>,
    start: DVector<f64>,
    member_bound: f64,
    opts: &SolverOptions,
) -> Result<SupportResult> {
    let m = cons.len() as f64;
    let spread = (member_bound - v.dot(&start)).max(1e-12 * (1.0 + member_bound.abs()));
    let mut t = m / spread;
    let mut x = start;
    let mut best: Option<SupportResult> = None;

    for outer in 0..opts.max_outer {
        let f = |x: &DVector<f64>| -> Option<f64> {
            let mut acc = -t * v.dot(x);
            for c in cons {
                let h = 1.0 - c.q(x);
                if !(h > 0.0) {
                    return None;
                }
                acc -= h.ln();
            }
            Some(acc)
        };
        let gh = |x: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
            let mut grad = -v * t;
            let mut hess = DMatrix::zeros(x.len(), x.len());
            for c in cons {
                let (q, dq) = c.q_grad(x);
                let h = 1.0 - q;
                grad += &dq / h;
                hess += &c.b * (2.0 / h) + &dq * dq.transpose() / (h * h);
            }
            (grad, hess)
        };
        let centered = newton::minimize(x.clone(), f, gh, 1e-10, opts.max_inner);
        if !centered.converged {
            debug!("centering stopped after {} Newton steps at t = {t:e}", centered.iterations);
        }
        x = centered.x;

        let slacks: Vec<f64> = cons.iter().map(|c| 1.0 - c.q(&x)).collect();
        let mu: Vec<f64> = slacks.iter().map(|s| 1.0 / (t * s)).collect();
        let value = v.dot(&x);
        let upper = dual_bound(cons, &mu, v).unwrap_or(member_bound).min(member_bound);
        let gap = (upper - value).max(0.0);
        let target = opts.tol * (1.0 + value.abs());
        let active = active_members(cons, &slacks);
        let current = SupportResult { value, maximizer: x.clone(), gap, active, certified: gap <= target };
        if best.as_ref().is_none_or(|b| current.gap < b.gap) {
            best = Some(current);
        }

        if gap <= 1e-3 * (1.0 + value.abs()) {
            if let Some(polished) = polish(cons, v, &x, &mu, &slacks, opts) {
                if polished.gap <= target {
                    debug!("support solved after {} outer steps (polished)", outer + 1);
                    return Ok(polished);
                }
            }
        }
        if gap <= target {
            debug!("support solved after {} outer steps", outer + 1);
            return Ok(best.expect("set above"));
        }
        t *= opts.growth;
    }
    let mut res = best.expect("at least one outer step");
    res.certified = res.gap <= opts.tol * (1.0 + res.value.abs());
    Ok(res)
}

fn active_members(cons: &[Constraint], slacks: &[f64]) -> Vec<usize> {
    let mut out: Vec<usize> = cons.iter().zip(slacks).filter(|(_, &s)| s <= 1e-6).map(|(c, _)| c.member).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Newton's method on the KKT system `v = Σ_A μ_i ∇q_i(γ)`, `q_i(γ) = 1`
/// for trial active sets of the smallest slacks.
fn polish(
    cons: &[Constraint],
    v: &DVector<f64>,
    x0: &DVector<f64>,
    mu0: &[f64],
    slacks: &[f64],
    opts: &SolverOptions,
) -> Option<SupportResult> {
    let k = x0.len();
    let mut order: Vec<usize> = (0..cons.len()).collect();
    order.sort_by(|&a, &b| slacks[a].total_cmp(&slacks[b]));
    let max_active = k.min(cons.len());
    let mut best: Option<SupportResult> = None;
    for size in 1..=max_active {
        let set = &order[..size];
        let Some((gamma, mu_a)) = kkt_newton(cons, set, v, x0, mu0) else { continue };
        if mu_a.iter().any(|&u| !(u > 0.0)) {
            continue;
        }
        if cons.iter().any(|c| c.q(&gamma) > 1.0 + opts.feas_tol) {
            continue;
        }
        let mut mu = vec![0.0; cons.len()];
        for (&i, &u) in set.iter().zip(&mu_a) {
            mu[i] = u;
        }
        let value = v.dot(&gamma);
        let Some(upper) = dual_bound(cons, &mu, v) else { continue };
        let gap = (upper - value).max(0.0);
        let mut active: Vec<usize> = set.iter().map(|&i| cons[i].member).collect();
        active.sort_unstable();
        active.dedup();
        let res = SupportResult {
            value,
            maximizer: gamma,
            gap,
            active,
            certified: gap <= opts.tol * (1.0 + value.abs()),
        };
        if res.certified && gap <= 1e-13 * (1.0 + value.abs()) {
            return Some(res);
        }
        if best.as_ref().is_none_or(|b| res.gap < b.gap) {
            best = Some(res);
        }
    }
    best
}

fn kkt_newton(
    cons: &[Constraint],
    set: &[usize],
    v: &DVector<f64>,
    x0: &DVector<f64>,
    mu0: &[f64],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let k = x0.len();
    let a = set.len();
    let mut gamma = x0.clone();
    let mut mu = DVector::from_iterator(a, set.iter().map(|&i| mu0[i]));
    let scale = 1.0 + v.norm();
    for _ in 0..30 {
        let mut f = DVector::zeros(k + a);
        let mut jac = DMatrix::zeros(k + a, k + a);
        let mut stat = v.clone();
        for (j, &i) in set.iter().enumerate() {
            let (q, dq) = cons[i].q_grad(&gamma);
            stat -= &dq * mu[j];
            let mut tl = jac.view_mut((0, 0), (k, k));
            tl -= &cons[i].b * (2.0 * mu[j]);
            jac.view_mut((0, k + j), (k, 1)).copy_from(&(-&dq));
            jac.view_mut((k + j, 0), (1, k)).copy_from(&dq.transpose());
            f[k + j] = q - 1.0;
        }
        f.rows_mut(0, k).copy_from(&stat);
        let res = f.rows(0, k).norm() / scale + f.rows(k, a).norm();
        if res <= 1e-15 {
            return Some((gamma, mu));
        }
        let step = jac.lu().solve(&(-&f))?;
        if !step.iter().all(|x| x.is_finite()) {
            return None;
        }
        gamma += step.rows(0, k);
        mu += step.rows(k, a);
        if res <= 1e-13 {
            return Some((gamma, mu));
        }
    }
    let ok = set.iter().all(|&i| (cons[i].q(&gamma) - 1.0).abs() <= 1e-12);
    ok.then_some((gamma, mu))
}
