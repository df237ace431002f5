//! Global-model update rules and aggregation-weight engines.

mod bound;
mod dms;

pub use bound::{
    bound_optimal_weights, bound_value, masked_bound_optimal_weights, BoundCoefficients,
    BoundInputs, BoundOptimalForm, PastInterval, SolverOptions, SolverReport,
};
pub use dms::{
    dms_threshold, dms_weights, dms_weights_among, filtering_probability, sample_participation,
    spacing_slope, spacing_weights,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ParameterVector, WEIGHT_SUM_TOL};

/// Which rule produced a weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMethod {
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "uniform")]
    Uniform,
    /// Linear spacing in iteration counts, normalized to the simplex.
    #[serde(rename = "corollary1")]
    Spacing,
    /// Minimizer of the loss upper bound.
    #[serde(rename = "theorem2")]
    BoundOptimal,
    #[serde(rename = "dms")]
    Dms,
}

/// Aggregation weights for one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightAssignment {
    pub rho: Vec<f64>,
    /// Clients allowed to contribute (β); `rho` is zero wherever this is false.
    pub participating: Vec<bool>,
    pub method: WeightMethod,
    /// Negative raw weights were clamped to zero and the rest renormalized.
    pub clamped: bool,
}

impl WeightAssignment {
    pub fn any_participant(&self) -> bool {
        self.participating.iter().any(|&b| b)
    }

    /// Checks Σρ = 1, ρ ≥ 0 and ρ_i = 0 for non-participants.
    pub fn check(&self) -> Result<()> {
        if self.rho.len() != self.participating.len() {
            return Err(Error::DimensionMismatch {
                expected: self.participating.len(),
                actual: self.rho.len(),
            });
        }
        for (&r, &b) in self.rho.iter().zip(&self.participating) {
            if !(r >= 0.0) || (!b && r != 0.0) {
                return Err(Error::InvalidArgument(format!("invalid weight {r} (participating={b})")));
            }
        }
        if self.any_participant() {
            let sum: f64 = self.rho.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::InvalidArgument(format!("weights sum to {sum}")));
            }
        }
        Ok(())
    }

    /// Largest weight above the cap θ/N, if any.
    pub fn cap_violation(&self, cap: f64) -> Option<f64> {
        self.rho.iter().copied().filter(|&r| r > cap + 1e-15).fold(None, |m, r| {
            Some(m.map_or(r, |m: f64| m.max(r)))
        })
    }
}

/// ρ_i = |D_i| / Σ_j |D_j|.
pub fn fedavg_weights(data_sizes: &[usize]) -> Result<WeightAssignment> {
    fedavg_weights_among(data_sizes, &vec![true; data_sizes.len()])
}

/// FedAvg weights renormalized over the clients flagged in `participating`.
pub fn fedavg_weights_among(data_sizes: &[usize], participating: &[bool]) -> Result<WeightAssignment> {
    if data_sizes.is_empty() {
        return Err(Error::EmptyClientSet);
    }
    if participating.len() != data_sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: data_sizes.len(),
            actual: participating.len(),
        });
    }
    if data_sizes.contains(&0) {
        return Err(Error::InvalidArgument("data sizes must be positive".into()));
    }
    let total: usize = data_sizes
        .iter()
        .zip(participating)
        .filter(|(_, &b)| b)
        .map(|(&s, _)| s)
        .sum();
    let rho = data_sizes
        .iter()
        .zip(participating)
        .map(|(&s, &b)| if b { s as f64 / total as f64 } else { 0.0 })
        .collect();
    Ok(WeightAssignment {
        rho,
        participating: participating.to_vec(),
        method: WeightMethod::FedAvg,
        clamped: false,
    })
}

/// 1/M for each of the M participants.
pub fn uniform_weights(participating: &[bool]) -> Result<WeightAssignment> {
    if participating.is_empty() {
        return Err(Error::EmptyClientSet);
    }
    let m = participating.iter().filter(|&&b| b).count();
    let rho = participating
        .iter()
        .map(|&b| if b { 1.0 / m as f64 } else { 0.0 })
        .collect();
    Ok(WeightAssignment {
        rho,
        participating: participating.to_vec(),
        method: WeightMethod::Uniform,
        clamped: false,
    })
}

/// w = Σ ρ_i w_i. Clients with zero weight are skipped, so a single
/// participant of weight 1 is returned bit-exactly.
pub fn aggregate(models: &[ParameterVector], weights: &[f64]) -> Result<ParameterVector> {
    let first = models.first().ok_or(Error::EmptyClientSet)?;
    if weights.len() != models.len() {
        return Err(Error::DimensionMismatch {
            expected: models.len(),
            actual: weights.len(),
        });
    }
    let dim = first.dim();
    let mut out = ParameterVector::zeros(dim);
    for (m, &r) in models.iter().zip(weights) {
        m.check_dim(dim)?;
        if r != 0.0 {
            out.axpy(r, m);
        }
    }
    out.ensure_finite("aggregation")?;
    Ok(out)
}

/// w ← γ w_prev + (1 − γ) · mean(locals).
pub fn fedasync_update(
    prev_global: &ParameterVector,
    local_models: &[ParameterVector],
    gamma: f64,
) -> Result<ParameterVector> {
    if local_models.is_empty() {
        return Err(Error::EmptyClientSet);
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} outside [0, 1]")));
    }
    let dim = prev_global.dim();
    let mut mean = ParameterVector::zeros(dim);
    let scale = 1.0 / local_models.len() as f64;
    for m in local_models {
        m.check_dim(dim)?;
        mean.axpy(scale, m);
    }
    let mut out = prev_global.scaled(gamma);
    out.axpy(1.0 - gamma, &mean);
    out.ensure_finite("fedasync update")?;
    Ok(out)
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter().map(|&x| (x - shift).max(0.0)).collect()
}
