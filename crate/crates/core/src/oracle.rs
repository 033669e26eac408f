//! Measurement oracles: sources of `y_j = φ̂(z_j) + w_j` at requested points.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::regression::NoiseModel;

/// Returns one measurement per query point.
pub trait MeasurementOracle {
    fn measure(&mut self, points: &[DVector<f64>]) -> Result<DVector<f64>>;

    /// True parameter vector, when known.
    fn truth(&self) -> Option<&DVector<f64>> {
        None
    }
}

impl<T: MeasurementOracle + ?Sized> MeasurementOracle for &mut T {
    fn measure(&mut self, points: &[DVector<f64>]) -> Result<DVector<f64>> {
        (**self).measure(points)
    }

    fn truth(&self) -> Option<&DVector<f64>> {
        (**self).truth()
    }
}

impl<T: MeasurementOracle + ?Sized> MeasurementOracle for Box<T> {
    fn measure(&mut self, points: &[DVector<f64>]) -> Result<DVector<f64>> {
        (**self).measure(points)
    }

    fn truth(&self) -> Option<&DVector<f64>> {
        (**self).truth()
    }
}

/// How a synthetic oracle draws the noise row of each batch.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseMode {
    /// Uniform over the admissible noise set.
    Uniform,
    /// The same admissible vector for every batch.
    Constant(DVector<f64>),
    Zero,
}

/// `y = γ̂ᵀb(z) + w` for a known `γ̂`.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    gamma_hat: DVector<f64>,
    basis: BasisSet,
    noise: NoiseModel,
    mode: NoiseMode,
    rng: ChaCha20Rng,
}

impl SyntheticOracle {
    pub fn new(gamma_hat: DVector<f64>, basis: BasisSet, noise: NoiseModel, mode: NoiseMode, rng: ChaCha20Rng) -> Result<Self> {
        if gamma_hat.len() != basis.len() {
            return Err(Error::Shape(format!(
                "gamma_hat has length {}, basis has {} functions",
                gamma_hat.len(),
                basis.len()
            )));
        }
        if let NoiseMode::Constant(w) = &mode {
            if w.len() != noise.samples() {
                return Err(Error::Shape(format!("w_bar has length {}, noise model is for {}", w.len(), noise.samples())));
            }
            if !noise.contains(w) {
                return Err(Error::NoiseModel("w_bar lies outside the admissible noise set".into()));
            }
        }
        Ok(Self { gamma_hat, basis, noise, mode, rng })
    }

    pub fn seeded(gamma_hat: DVector<f64>, basis: BasisSet, noise: NoiseModel, mode: NoiseMode, seed: u64) -> Result<Self> {
        Self::new(gamma_hat, basis, noise, mode, ChaCha20Rng::seed_from_u64(seed))
    }

    /// `φ̂(z)`.
    pub fn true_value(&self, z: &DVector<f64>) -> Result<f64> {
        Ok(self.gamma_hat.dot(&self.basis.eval(z)?))
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }
}

impl MeasurementOracle for SyntheticOracle {
    fn measure(&mut self, points: &[DVector<f64>]) -> Result<DVector<f64>> {
        if points.len() != self.noise.samples() {
            return Err(Error::Shape(format!("{} query points, noise model is for {}", points.len(), self.noise.samples())));
        }
        let w = match &self.mode {
            NoiseMode::Uniform => self.noise.sample_uniform(&mut self.rng),
            NoiseMode::Constant(w) => w.clone(),
            NoiseMode::Zero => DVector::zeros(points.len()),
        };
        let clean = points.iter().map(|z| self.true_value(z)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(clean) + w)
    }

    fn truth(&self) -> Option<&DVector<f64>> {
        Some(&self.gamma_hat)
    }
}

/// Recorded measurements, consumed batch by batch in order.
#[derive(Debug, Clone)]
pub struct ReplayOracle {
    batches: Vec<Vec<(DVector<f64>, f64)>>,
    next: usize,
}

impl ReplayOracle {
    /// Splits rows `(z, y)` into consecutive batches of `batch_size`.
    pub fn new(rows: Vec<(DVector<f64>, f64)>, batch_size: usize) -> Result<Self> {
        if batch_size == 0 || rows.is_empty() || !rows.len().is_multiple_of(batch_size) {
            return Err(Error::Oracle(format!(
                "{} replay rows do not form whole batches of {batch_size}",
                rows.len()
            )));
        }
        let mut batches = Vec::new();
        let mut it = rows.into_iter();
        loop {
            let chunk: Vec<_> = it.by_ref().take(batch_size).collect();
            if chunk.is_empty() {
                break;
            }
            batches.push(chunk);
        }
        Ok(Self { batches, next: 0 })
    }

    pub fn batches(&self) -> &[Vec<(DVector<f64>, f64)>] {
        &self.batches
    }

    pub fn remaining(&self) -> usize {
        self.batches.len() - self.next
    }
}

impl MeasurementOracle for ReplayOracle {
    fn measure(&mut self, points: &[DVector<f64>]) -> Result<DVector<f64>> {
        let Some(batch) = self.batches.get(self.next) else {
            return Err(Error::Oracle(format!("replay data exhausted after {} batches", self.batches.len())));
        };
        if batch.len() != points.len() {
            return Err(Error::Oracle(format!("replay batch has {} rows, {} points requested", batch.len(), points.len())));
        }
        for (j, ((z, _), q)) in batch.iter().zip(points).enumerate() {
            let tol = 1e-9 * (1.0 + z.amax().max(q.amax()));
            if z.len() != q.len() || (z - q).amax() > tol {
                return Err(Error::Oracle(format!(
                    "replay batch {} row {j} was recorded at {:?}, requested {:?}",
                    self.next,
                    z.as_slice(),
                    q.as_slice()
                )));
            }
        }
        self.next += 1;
        Ok(DVector::from_iterator(batch.len(), batch.iter().map(|(_, y)| *y)))
    }
}

/// Independent, reproducible stream for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}
