//! Domain types shared by every other module.

use std::fmt;
use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of aggregation weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Flat vector of model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Returns `Err(NonFinite)` naming `origin` when any entry is NaN or infinite.
    pub fn ensure_finite(&self, origin: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(origin))
        }
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                actual: self.dim(),
            })
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance_sq(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += alpha * v;
        }
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ParameterVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Global analysis constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConstants {
    /// Learning rate.
    pub eta: f64,
    /// Smoothness constant of every local loss.
    pub smoothness: f64,
    /// Bound on the stochastic gradient norm.
    pub grad_bound: f64,
    /// Common mini-batch noise bound.
    pub sigma: f64,
    /// Weight-limit parameter.
    pub theta: f64,
    /// Maximum number of local iterations any client performs in one interval.
    pub max_local_iters: u32,
    pub num_clients: usize,
    pub intervals: usize,
    /// Gradient-alignment constant.
    pub epsilon: f64,
    /// Local dissimilarity bound.
    pub dissimilarity: f64,
    /// FedAsync depreciation factor.
    pub gamma: f64,
    /// FedProx proximal coefficient.
    pub mu: f64,
}

impl SystemConstants {
    /// θ that puts the weight-limit product ηL(1+θ) exactly at 1.
    pub fn equality_theta(eta: f64, smoothness: f64) -> f64 {
        1.0 / (eta * smoothness) - 1.0
    }

    /// ηL(1+θ).
    pub fn weight_limit_product(&self) -> f64 {
        self.eta * self.smoothness * (1.0 + self.theta)
    }

    /// Whether ηL(1+θ) ≥ 1, allowing for the rounding of the equality default.
    pub fn meets_weight_limit(&self) -> bool {
        self.weight_limit_product() >= 1.0 - 1e-12
    }

    /// Largest admissible step for the cumulative-gradient bound, 2ε/(V²L).
    pub fn step_limit(&self) -> f64 {
        2.0 * self.epsilon / (self.dissimilarity * self.dissimilarity * self.smoothness)
    }

    /// Per-client weight cap θ/N.
    pub fn weight_cap(&self) -> f64 {
        self.theta / self.num_clients as f64
    }
}

impl Default for SystemConstants {
    fn default() -> Self {
        let eta = 0.003;
        let smoothness = 1.0;
        Self {
            eta,
            smoothness,
            grad_bound: 1.0,
            sigma: 1.0,
            theta: Self::equality_theta(eta, smoothness),
            max_local_iters: 4,
            num_clients: 20,
            intervals: 50,
            epsilon: 1.0,
            dissimilarity: 1.0,
            gamma: 0.5,
            mu: 0.01,
        }
    }
}

/// A violated analytical precondition. Runs may violate them on purpose, so
/// these are reported rather than raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstantWarning {
    WeightLimit { product: f64 },
    StepTooLarge { eta: f64, limit: f64 },
    ThetaBelowOne { theta: f64 },
}

impl fmt::Display for ConstantWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::WeightLimit { product } => write!(f, "ηL(1+θ)={product} < 1"),
            Self::StepTooLarge { eta, limit } => write!(f, "η={eta} ≥ 2ε/(V²L)={limit}"),
            Self::ThetaBelowOne { theta } => write!(f, "θ={theta} < 1"),
        }
    }
}

pub fn validate_constants(c: &SystemConstants) -> Vec<ConstantWarning> {
    let mut warnings = Vec::new();
    if !c.meets_weight_limit() {
        warnings.push(ConstantWarning::WeightLimit {
            product: c.weight_limit_product(),
        });
    }
    let limit = c.step_limit();
    if c.eta >= limit {
        warnings.push(ConstantWarning::StepTooLarge { eta: c.eta, limit });
    }
    if c.theta < 1.0 {
        warnings.push(ConstantWarning::ThetaBelowOne { theta: c.theta });
    }
    warnings
}

/// Whether a constant was configured or estimated from the task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    Configured,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSources {
    pub smoothness: ConstantSource,
    pub grad_bound: ConstantSource,
    pub sigma: ConstantSource,
    pub epsilon: ConstantSource,
    pub dissimilarity: ConstantSource,
}

impl Default for ConstantSources {
    fn default() -> Self {
        Self {
            smoothness: ConstantSource::Configured,
            grad_bound: ConstantSource::Configured,
            sigma: ConstantSource::Configured,
            epsilon: ConstantSource::Configured,
            dissimilarity: ConstantSource::Configured,
        }
    }
}

/// Per-client data and task constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    /// 1-based client id.
    pub id: usize,
    pub data_size: usize,
    pub batch_size: usize,
    /// Stochastic-gradient deviation bound σ_i.
    pub sigma: f64,
    /// Non-IID degree Γ_i = ‖w* − w_i*‖².
    pub noniid: f64,
}

/// Trace of one communication interval (or round, for the synchronous
/// baseline). Model, loss and gradient describe the global model after the
/// aggregation that closes the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub t: usize,
    pub tau: Vec<u32>,
    pub beta: Vec<bool>,
    pub rho: Vec<f64>,
    pub global_loss: f64,
    pub global_grad_norm_sq: f64,
    pub wall_clock: f64,
    /// Negative spacing weights were clamped to zero.
    pub clamped: bool,
    /// No client contributed; the global model was carried over.
    pub empty_aggregation: bool,
    pub model: ParameterVector,
}

impl IntervalRecord {
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.tau.len();
        if self.beta.len() != n || self.rho.len() != n {
            return Err(Error::InvalidArgument(format!(
                "interval {}: tau/beta/rho lengths differ",
                self.t
            )));
        }
        for (i, (&b, &r)) in self.beta.iter().zip(&self.rho).enumerate() {
            if r < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "interval {}: negative weight {r} for client {i}",
                    self.t
                )));
            }
            if !b && r != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "interval {}: filtered client {i} has weight {r}",
                    self.t
                )));
            }
        }
        if self.beta.iter().any(|&b| b) {
            let sum: f64 = self.rho.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "interval {}: weights sum to {sum}",
                    self.t
                )));
            }
        }
        self.model.ensure_finite("aggregation")
    }
}

/// Arrival of one local model at the server in an event-driven run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub time: f64,
    pub client: usize,
}

/// Complete trace of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub scenario: String,
    pub seed: u64,
    pub strategy: String,
    pub constants: SystemConstants,
    pub constant_sources: ConstantSources,
    pub clients: Vec<ClientProfile>,
    pub initial_model: ParameterVector,
    pub initial_loss: f64,
    pub initial_grad_norm_sq: f64,
    pub records: Vec<IntervalRecord>,
    pub final_model: ParameterVector,
    /// Server arrival order; empty for interval-synchronous runs.
    pub arrivals: Vec<Arrival>,
}

impl RunLog {
    pub fn check_invariants(&self) -> Result<()> {
        for pair in self.records.windows(2) {
            if pair[1].t <= pair[0].t || pair[1].wall_clock <= pair[0].wall_clock {
                return Err(Error::InvalidArgument(format!(
                    "records {} and {} are not strictly increasing",
                    pair[0].t, pair[1].t
                )));
            }
        }
        self.records.iter().try_for_each(IntervalRecord::check_invariants)
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(self.initial_loss, |r| r.global_loss)
    }

    pub fn final_grad_norm_sq(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_grad_norm_sq, |r| r.global_grad_norm_sq)
    }

    pub fn total_wall_clock(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.wall_clock)
    }

    pub fn max_tau(&self) -> u32 {
        self.records
            .iter()
            .flat_map(|r| r.tau.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constants(eta: f64, smoothness: f64, theta: f64, epsilon: f64, v: f64) -> SystemConstants {
        SystemConstants {
            eta,
            smoothness,
            theta,
            epsilon,
            dissimilarity: v,
            ..SystemConstants::default()
        }
    }

    #[test]
    fn boundary_equality_has_no_warnings() {
        assert!(validate_constants(&constants(0.5, 1.0, 1.0, 1.0, 1.0)).is_empty());
    }

    #[test]
    fn small_step_violates_weight_limit() {
        let w = validate_constants(&constants(0.1, 1.0, 1.0, 1.0, 1.0));
        assert_eq!(w.len(), 1);
        match &w[0] {
            ConstantWarning::WeightLimit { product } => assert!((product - 0.2).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(w[0].to_string(), "ηL(1+θ)=0.2 < 1");
    }

    #[test]
    fn large_step_violates_step_limit() {
        let w = validate_constants(&constants(3.0, 1.0, 1.0, 1.0, 1.0));
        assert!(w.contains(&ConstantWarning::StepTooLarge { eta: 3.0, limit: 2.0 }));
        assert!(!w.iter().any(|w| matches!(w, ConstantWarning::WeightLimit { .. })));
    }

    #[test]
    fn equality_theta_passes_weight_limit() {
        for &(eta, l) in &[(0.003, 1.0), (0.1, 1.0), (0.01, 3.7), (0.2, 0.9)] {
            let c = constants(eta, l, SystemConstants::equality_theta(eta, l), 1.0, 1.0);
            assert!(c.meets_weight_limit(), "eta={eta} L={l}");
        }
    }

    #[test]
    fn record_invariants_catch_bad_weights() {
        let mut rec = IntervalRecord {
            t: 0,
            tau: vec![1, 4],
            beta: vec![false, true],
            rho: vec![0.0, 1.0],
            global_loss: 0.0,
            global_grad_norm_sq: 0.0,
            wall_clock: 1.0,
            clamped: false,
            empty_aggregation: false,
            model: ParameterVector::zeros(2),
        };
        rec.check_invariants().unwrap();
        rec.rho = vec![0.1, 0.9];
        assert!(rec.check_invariants().is_err());
        rec.beta = vec![true, true];
        rec.rho = vec![0.5, 0.6];
        assert!(rec.check_invariants().is_err());
        rec.rho = vec![-0.1, 1.1];
        assert!(rec.check_invariants().is_err());
    }
}
