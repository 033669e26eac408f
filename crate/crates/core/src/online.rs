//! The online loop: minimize the bound over `S(z_{k−1})` with every
//! parameter set collected so far, then measure around the new point.

use log::{debug, info, warn};
use nalgebra::DVector;

use crate::analysis::{certify_convexity, optimality_gap, ConvexityCertificate, GapOptions, GapReport};
use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::intersection::IntersectionSet;
use crate::linalg;
use crate::optimize::{minimize_upper, OptimizeOptions, SampleStencil};
use crate::oracle::MeasurementOracle;
use crate::regression::{assemble_batch, MeasurementBatch, NoiseModel, ParameterSet};

/// One batch around `z` and the parameter set it defines.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub batch: MeasurementBatch,
    pub set: ParameterSet,
    /// Smallest singular value of the feature matrix.
    pub sigma_min: f64,
}

/// Queries the oracle at `z + F` and builds the consistent parameter set.
pub fn measure_at<O: MeasurementOracle + ?Sized>(
    oracle: &mut O,
    basis: &BasisSet,
    stencil: &SampleStencil,
    noise: &NoiseModel,
    z: &DVector<f64>,
) -> Result<Measurement> {
    let points = stencil.points_at(z);
    let y = oracle.measure(&points)?;
    let batch = assemble_batch(basis, points, y)?;
    let sigma_min = linalg::min_singular_value(&batch.phi);
    debug!("measured at {:?}: sigma_min = {sigma_min:.3e}", z.as_slice());
    let set = ParameterSet::from_batch(&batch, noise).map_err(|e| match e {
        Error::NotExciting => Error::StencilNotExciting { z: z.iter().copied().collect(), source: Box::new(e) },
        e => e,
    })?;
    Ok(Measurement { batch, set, sigma_min })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OnlineOptions {
    /// Continue when the first parameter set is not certified strictly convex.
    pub force: bool,
    /// Keep only the first set and the most recent `m − 1`. Loses the
    /// monotonicity guarantee; `None` keeps everything.
    pub max_members: Option<usize>,
    /// Points at which the uncertainty of the running intersection is recorded.
    pub track_points: Vec<DVector<f64>>,
    /// Compute a gap report every this many steps (and at the last step).
    pub gap_report_every: Option<usize>,
    pub gap: GapOptions,
    pub optimize: OptimizeOptions,
}

/// Log of step `k ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineStep {
    pub k: usize,
    pub z: DVector<f64>,
    /// Certified upper bound `φ⁺(z_k; Γ₀ ∩ … ∩ Γ_{k−1})`.
    pub bound: f64,
    pub uncertainty: f64,
    /// `φ̂(z_k)` when the oracle knows the truth.
    pub phi_hat: Option<f64>,
    pub y: DVector<f64>,
    pub sigma_min: f64,
    pub fw_gap: f64,
    pub solver_gap: f64,
    /// Uncertainty at each tracked point after adding `Γ_k`.
    pub tracked_uncertainty: Vec<f64>,
    pub gap_report: Option<GapReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRunLog {
    pub z0: DVector<f64>,
    pub y0: DVector<f64>,
    pub sigma_min0: f64,
    pub certificate: ConvexityCertificate,
    /// Uncertainty at each tracked point with `Γ₀` alone.
    pub tracked_uncertainty0: Vec<f64>,
    pub steps: Vec<OnlineStep>,
    /// Steps whose bound rose above the previous one by more than the solver slack.
    pub monotonicity_violations: Vec<usize>,
    /// Steps where the point moved but the bound did not strictly decrease.
    pub stalled_moves: Vec<usize>,
}

impl OnlineRunLog {
    pub fn bounds(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.bound).collect()
    }

    pub fn final_step(&self) -> Option<&OnlineStep> {
        self.steps.last()
    }

    pub fn final_report(&self) -> Option<&GapReport> {
        self.steps.iter().rev().find_map(|s| s.gap_report.as_ref())
    }
}

/// Allowed increase between consecutive bounds.
pub fn monotone_slack(bound: f64, tol: f64) -> f64 {
    2.0 * tol * (1.0 + bound.abs())
}

/// Gap bracket for the optimum over `S(z_prev)` given `inter`, at the minimizer `z`.
pub fn stopping_report(
    inter: &IntersectionSet,
    basis: &BasisSet,
    stencil: &SampleStencil,
    z_prev: &DVector<f64>,
    z: &DVector<f64>,
    opts: &GapOptions,
) -> Result<GapReport> {
    optimality_gap(inter, basis, &stencil.polytope_at(z_prev)?, z, opts)
}

/// A run in progress; drive it with [`OnlineRun::step`].
pub struct OnlineRun<'a, O: MeasurementOracle> {
    oracle: O,
    basis: &'a BasisSet,
    stencil: &'a SampleStencil,
    noise: &'a NoiseModel,
    opts: OnlineOptions,
    first: ParameterSet,
    inter: IntersectionSet,
    z: DVector<f64>,
    log: OnlineRunLog,
}

impl<'a, O: MeasurementOracle> OnlineRun<'a, O> {
    /// Measures at `z0` and checks that `Γ₀` certifies strict convexity.
    pub fn start(
        mut oracle: O,
        basis: &'a BasisSet,
        stencil: &'a SampleStencil,
        noise: &'a NoiseModel,
        z0: DVector<f64>,
        opts: OnlineOptions,
    ) -> Result<Self> {
        if z0.len() != stencil.dim() || z0.len() != basis.input_dim() {
            return Err(Error::Shape(format!("z0 has length {}, expected {}", z0.len(), basis.input_dim())));
        }
        let m0 = measure_at(&mut oracle, basis, stencil, noise, &z0)?;
        let certificate = certify_convexity(&m0.set, basis)?;
        if !certificate.is_strictly_convex() {
            let msg = format!("initial parameter set certifies {:?} via {:?}", certificate.verdict, certificate.method);
            if !opts.force {
                return Err(Error::ConvexityPrecondition(format!("{msg}; strict convexity is required")));
            }
            warn!("{msg}; continuing because force is set");
        }
        let inter = IntersectionSet::single(m0.set.clone());
        let tracked = track(&inter, basis, &opts)?;
        let log = OnlineRunLog {
            z0: z0.clone(),
            y0: m0.batch.y.clone(),
            sigma_min0: m0.sigma_min,
            certificate,
            tracked_uncertainty0: tracked,
            steps: Vec::new(),
            monotonicity_violations: Vec::new(),
            stalled_moves: Vec::new(),
        };
        Ok(Self { oracle, basis, stencil, noise, opts, first: m0.set, inter, z: z0, log })
    }

    pub fn log(&self) -> &OnlineRunLog {
        &self.log
    }

    pub fn intersection(&self) -> &IntersectionSet {
        &self.inter
    }

    pub fn point(&self) -> &DVector<f64> {
        &self.z
    }

    /// One optimize-then-measure step. `report` forces a gap report.
    pub fn step(&mut self, report: bool) -> Result<&OnlineStep> {
        let k = self.log.steps.len() + 1;
        let poly = self.stencil.polytope_at(&self.z)?;
        let min = minimize_upper(&self.inter, self.basis, &poly, &self.z, &self.opts.optimize)?;
        let bound = min.bound();
        let b = self.basis.eval(&min.z)?;
        let (lo, hi) = self.inter.support_interval(&b, &self.opts.optimize.solver)?;
        let uncertainty = (hi - lo).max(0.0);

        let due = self.opts.gap_report_every.is_some_and(|n| n > 0 && k.is_multiple_of(n));
        let gap_report = if report || due {
            let gap_opts = GapOptions { suboptimality: min.fw_gap, ..self.opts.gap };
            Some(optimality_gap(&self.inter, self.basis, &poly, &min.z, &gap_opts)?)
        } else {
            None
        };

        let m = measure_at(&mut self.oracle, self.basis, self.stencil, self.noise, &min.z)?;
        self.inter = self.extend(m.set)?;
        if !self.inter.check_nonempty().is_nonempty() {
            return Err(Error::Infeasible);
        }
        let tracked = track(&self.inter, self.basis, &self.opts)?;
        let phi_hat = self.oracle.truth().map(|g| g.dot(&b));

        if let Some(prev) = self.log.steps.last() {
            let slack = monotone_slack(prev.bound, self.opts.optimize.solver.tol);
            if bound > prev.bound + slack {
                warn!("step {k}: bound rose from {} to {bound}", prev.bound);
                self.log.monotonicity_violations.push(k);
            }
            if (&min.z - &self.z).norm() > 0.0 && bound >= prev.bound {
                debug!("step {k}: point moved but the bound did not decrease");
                self.log.stalled_moves.push(k);
            }
        }
        debug!("step {k}: z = {:?}, bound = {bound}, U = {uncertainty}", min.z.as_slice());
        self.z = min.z.clone();
        self.log.steps.push(OnlineStep {
            k,
            z: min.z,
            bound,
            uncertainty,
            phi_hat,
            y: m.batch.y,
            sigma_min: m.sigma_min,
            fw_gap: min.fw_gap,
            solver_gap: min.solver_gap,
            tracked_uncertainty: tracked,
            gap_report,
        });
        Ok(self.log.steps.last().expect("just pushed"))
    }

    fn extend(&self, set: ParameterSet) -> Result<IntersectionSet> {
        match self.opts.max_members {
            Some(m) if self.inter.len() >= m.max(2) => {
                let members = self.inter.members();
                let mut kept = vec![self.first.clone()];
                kept.extend_from_slice(&members[members.len() + 2 - m.max(2)..]);
                kept.push(set);
                IntersectionSet::new(kept)
            }
            _ => self.inter.with_member(set),
        }
    }

    pub fn finish(self) -> OnlineRunLog {
        self.log
    }
}

fn track(inter: &IntersectionSet, basis: &BasisSet, opts: &OnlineOptions) -> Result<Vec<f64>> {
    opts.track_points
        .iter()
        .map(|z| inter.uncertainty(basis, z, &opts.optimize.solver))
        .collect()
}

/// Runs `iterations` steps from `z0`; the last step always carries a gap report.
pub fn run_online<O: MeasurementOracle>(
    oracle: O,
    basis: &BasisSet,
    stencil: &SampleStencil,
    noise: &NoiseModel,
    z0: DVector<f64>,
    iterations: usize,
    opts: OnlineOptions,
) -> Result<OnlineRunLog> {
    let mut run = OnlineRun::start(oracle, basis, stencil, noise, z0, opts)?;
    for k in 1..=iterations {
        run.step(k == iterations)?;
    }
    let log = run.finish();
    if let Some(last) = log.final_step() {
        info!("online run finished: z = {:?}, bound = {}", last.z.as_slice(), last.bound);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{NoiseMode, SyntheticOracle};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn setup() -> (BasisSet, SampleStencil) {
        let stencil = SampleStencil::new(vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[-1.0, -1.0])]).unwrap();
        (BasisSet::affine_plus_squared_norm(2), stencil)
    }

    #[test]
    fn zero_noise_measurement() {
        let (basis, stencil) = setup();
        let noise = NoiseModel::ball(30.0, 4).unwrap();
        let truth = v(&[1.0, 0.0, 0.0, 1.0]);
        let mut o = SyntheticOracle::seeded(truth.clone(), basis.clone(), noise, NoiseMode::Zero, 0).unwrap();
        let exact = NoiseModel::ball(0.0, 4).unwrap();
        let m = measure_at(&mut o, &basis, &stencil, &exact, &v(&[3.0, 3.0])).unwrap();
        assert_eq!(m.batch.y, v(&[19.0, 26.0, 26.0, 9.0]));
        assert!(m.set.is_singleton());
        assert!((m.set.lse() - truth).norm() < 1e-9);
        assert!(m.sigma_min > 0.0);
    }

    #[test]
    fn degenerate_stencil_point_is_reported() {
        // a constant-plus-quadratic basis in 1-D cannot be excited by a symmetric stencil at 0
        let basis = BasisSet::new(1, vec![crate::basis::Primitive::Coordinate(0), crate::basis::Primitive::SquaredNorm]).unwrap();
        let stencil = SampleStencil::new(vec![v(&[-1.0]), v(&[1.0])]).unwrap();
        let noise = NoiseModel::ball(1.0, 2).unwrap();
        let mut o = SyntheticOracle::seeded(v(&[0.0, 1.0]), basis.clone(), noise.clone(), NoiseMode::Zero, 0).unwrap();
        assert!(measure_at(&mut o, &basis, &stencil, &noise, &v(&[0.0])).is_ok());
        let basis = BasisSet::new(1, vec![crate::basis::Primitive::Constant, crate::basis::Primitive::SquaredNorm]).unwrap();
        let mut o = SyntheticOracle::seeded(v(&[0.0, 1.0]), basis.clone(), noise.clone(), NoiseMode::Zero, 0).unwrap();
        assert!(matches!(
            measure_at(&mut o, &basis, &stencil, &noise, &v(&[0.0])),
            Err(Error::StencilNotExciting { .. })
        ));
    }

    #[test]
    fn zero_noise_run_tracks_truth() {
        let (basis, stencil) = setup();
        let noise = NoiseModel::ball(0.0, 4).unwrap();
        let o = SyntheticOracle::seeded(v(&[1.0, 0.0, 0.0, 1.0]), basis.clone(), noise.clone(), NoiseMode::Zero, 0).unwrap();
        let log = run_online(o, &basis, &stencil, &noise, v(&[3.0, 3.0]), 5, OnlineOptions::default()).unwrap();
        assert_eq!(log.steps[0].z, v(&[2.0, 2.0]));
        for s in &log.steps {
            assert!((s.bound - s.phi_hat.unwrap()).abs() < 1e-9);
            assert_eq!(s.uncertainty, 0.0);
        }
        assert!(log.final_step().unwrap().z.norm() < 1e-6);
        let rep = log.final_report().unwrap();
        assert_eq!(rep.upper, rep.lower + rep.max_uncertainty);
        assert_eq!(rep.max_uncertainty, 0.0);
    }

    #[test]
    fn convexity_gate() {
        let (basis, stencil) = setup();
        let noise = NoiseModel::ball(30.0, 4).unwrap();
        // a negative quadratic coefficient can never be certified
        let o = SyntheticOracle::seeded(v(&[1.0, 0.0, 0.0, -1.0]), basis.clone(), noise.clone(), NoiseMode::Zero, 0).unwrap();
        let r = OnlineRun::start(o, &basis, &stencil, &noise, v(&[3.0, 3.0]), OnlineOptions::default());
        assert!(matches!(r, Err(Error::ConvexityPrecondition(_))));
    }
}
