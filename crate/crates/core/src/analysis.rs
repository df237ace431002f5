//! Post-hoc analysis of run logs: the loss upper bound, heterogeneity degree,
//! dissimilarity estimation and the cumulative-gradient check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::SyntheticTask;
use crate::types::{validate_constants, ConstantWarning, ParameterVector, RunLog, SystemConstants};

/// Loss upper bound evaluated from a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Gradient term.
    pub x: f64,
    /// Mini-batch term.
    pub y: f64,
    /// Data-distribution term.
    pub z: f64,
    pub w: f64,
    pub initial_distance_sq: f64,
    /// `(‖w⁰ − w*‖² + X + Y + Z) / W`; `None` when W ≤ 0.
    pub bound_value: Option<f64>,
    /// ‖∇F(w^T)‖² / L².
    pub measured: f64,
    /// ‖w^T − w*‖², the quantity the bound controls before the final
    /// smoothness step.
    pub final_distance_sq: f64,
    pub satisfied: bool,
    /// Weight limit holds and H covers every observed τ.
    pub preconditions_met: bool,
    pub warnings: Vec<ConstantWarning>,
}

impl BoundReport {
    pub fn applicable(&self) -> bool {
        self.bound_value.is_some()
    }
}

/// Evaluates the bound by direct summation over every record in `log`.
pub fn evaluate_bound(
    log: &RunLog,
    constants: &SystemConstants,
    sigma: &[f64],
    noniid: &[f64],
    w_star: &ParameterVector,
) -> Result<BoundReport> {
    let n = sigma.len();
    if noniid.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: noniid.len() });
    }
    let k = constants;
    let (eta, l) = (k.eta, k.smoothness);
    let product = k.weight_limit_product();
    let a = 2.0 * eta * l * (product - 1.0) + eta * eta;
    let b = 2.0 * eta * l * (1.0 - product);
    let h_minus_one = k.max_local_iters.saturating_sub(1) as f64;

    let (mut sx, mut sy, mut sz, mut sw) = (0.0, 0.0, 0.0, 0.0);
    for rec in &log.records {
        if rec.tau.len() != n || rec.rho.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: rec.tau.len() });
        }
        for i in 0..n {
            let tau = rec.tau[i] as f64;
            let rho = rec.rho[i];
            sx += rho * tau * tau;
            sy += sigma[i] * sigma[i] * rho * rho * tau;
            sz += rho * tau * noniid[i];
            sw += rho * tau;
        }
    }
    let x = eta.powi(3) * l * h_minus_one * k.grad_bound * k.grad_bound * sx;
    let y = eta * eta * n as f64 * sy;
    let z = a * sz;
    let w = 1.0 + b * sw;

    let initial_distance_sq = log.initial_model.distance_sq(w_star);
    let bound_value = (w > 0.0).then(|| (initial_distance_sq + x + y + z) / w);
    let measured = log.final_grad_norm_sq() / (l * l);
    let warnings = validate_constants(k);
    let preconditions_met = k.meets_weight_limit() && k.max_local_iters >= log.max_tau();
    Ok(BoundReport {
        x,
        y,
        z,
        w,
        initial_distance_sq,
        bound_value,
        measured,
        final_distance_sq: log.final_model.distance_sq(w_star),
        satisfied: bound_value.is_some_and(|v| measured <= v),
        preconditions_met,
        warnings,
    })
}

/// Population variance of per-client mean iteration counts.
pub fn heterogeneity_degree(tau_mean: &[f64]) -> Result<f64> {
    if tau_mean.is_empty() {
        return Err(Error::EmptyClientSet);
    }
    let n = tau_mean.len() as f64;
    let mean = tau_mean.iter().sum::<f64>() / n;
    Ok(tau_mean.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n)
}

/// Per-client mean τ over the records of a log.
pub fn mean_tau(log: &RunLog) -> Vec<f64> {
    let n = log.clients.len();
    let mut sums = vec![0.0; n];
    for rec in &log.records {
        for (s, &t) in sums.iter_mut().zip(&rec.tau) {
            *s += t as f64;
        }
    }
    let count = log.records.len().max(1) as f64;
    sums.into_iter().map(|s| s / count).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dissimilarity {
    /// V̂
    pub v: f64,
    /// ε̂
    pub epsilon: f64,
    pub probes_used: usize,
}

/// Empirical local dissimilarity and gradient alignment over probe points.
///
/// `V̂² = max E_i‖∇F_i‖² / ‖∇F‖²` and `ε̂ = min ∇Fᵀ E_i∇F_i / ‖∇F‖²`, with the
/// expectation uniform over clients. Probes where ‖∇F‖ ≤ 1e-12 are skipped.
pub fn estimate_dissimilarity(task: &SyntheticTask, probes: &[ParameterVector]) -> Result<Dissimilarity> {
    let n = task.num_clients() as f64;
    let mut v_sq = f64::NEG_INFINITY;
    let mut epsilon = f64::INFINITY;
    let mut used = 0;
    for w in probes {
        w.check_dim(task.dim())?;
        let grads: Vec<ParameterVector> = task.clients().iter().map(|c| c.full_gradient(w)).collect();
        let mut global = ParameterVector::zeros(w.dim());
        for g in &grads {
            global.axpy(1.0 / n, g);
        }
        let global_sq = global.norm_sq();
        if global_sq.sqrt() <= 1e-12 {
            continue;
        }
        used += 1;
        let second_moment = grads.iter().map(ParameterVector::norm_sq).sum::<f64>() / n;
        // E_i ∇F_i is ∇F itself, so the alignment ratio is 1 up to rounding.
        let alignment = grads.iter().map(|g| global.dot(g)).sum::<f64>() / n / global_sq;
        v_sq = v_sq.max(second_moment / global_sq);
        epsilon = epsilon.min(alignment);
    }
    if used == 0 {
        return Err(Error::AllProbesSkipped);
    }
    Ok(Dissimilarity { v: v_sq.sqrt(), epsilon, probes_used: used })
}

/// Cumulative-gradient check of a log against the convergence bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// (1/T) Σ_{t<T} ‖∇F(w^t)‖²
    pub mean_cum_grad: f64,
    /// `2η (F⁰ − F*) / (T (2ε − ηLV²))`; `None` when η ≥ 2ε/(V²L).
    pub bound: Option<f64>,
    pub satisfied: bool,
    /// The same right-hand side divided by η², which is what a plain descent
    /// argument yields. Reported for comparison only.
    pub descent_bound: Option<f64>,
    pub descent_satisfied: bool,
}

impl ConvergenceReport {
    pub fn applicable(&self) -> bool {
        self.bound.is_some()
    }
}

/// Right-hand side of the cumulative-gradient bound; `None` outside the
/// step-size precondition.
pub fn convergence_rhs(constants: &SystemConstants, loss_gap: f64, intervals: usize) -> Option<f64> {
    let k = constants;
    let margin = 2.0 * k.epsilon - k.eta * k.smoothness * k.dissimilarity * k.dissimilarity;
    (k.eta < k.step_limit() && margin > 0.0)
        .then(|| 2.0 * k.eta * loss_gap / (intervals as f64 * margin))
}

/// Compares the mean squared global gradient over `w⁰ … w^{T−1}` with the
/// bound. T is the number of records in `log`.
pub fn verify_convergence(log: &RunLog, constants: &SystemConstants, f0: f64, f_star: f64) -> ConvergenceReport {
    let t = log.records.len();
    let lhs = if t == 0 {
        0.0
    } else {
        let tail: f64 = log.records[..t - 1].iter().map(|r| r.global_grad_norm_sq).sum();
        (log.initial_grad_norm_sq + tail) / t as f64
    };
    let bound = if t == 0 { None } else { convergence_rhs(constants, f0 - f_star, t) };
    let descent_bound = bound.map(|b| b / (constants.eta * constants.eta));
    ConvergenceReport {
        mean_cum_grad: lhs,
        bound,
        satisfied: bound.is_some_and(|b| lhs <= b),
        descent_bound,
        descent_satisfied: descent_bound.is_some_and(|b| lhs <= b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::QuadraticClient;
    use crate::types::{ConstantSources, IntervalRecord};
    use nalgebra::DMatrix;

    fn log_with(records: Vec<IntervalRecord>, w0: ParameterVector, final_model: ParameterVector, g0: f64) -> RunLog {
        RunLog {
            scenario: "test".into(),
            seed: 0,
            strategy: "uniform".into(),
            constants: SystemConstants::default(),
            constant_sources: ConstantSources::default(),
            clients: Vec::new(),
            initial_model: w0,
            initial_loss: 0.0,
            initial_grad_norm_sq: g0,
            records,
            final_model,
            arrivals: Vec::new(),
        }
    }

    fn record(t: usize, tau: Vec<u32>, rho: Vec<f64>, grad_sq: f64) -> IntervalRecord {
        let n = tau.len();
        IntervalRecord {
            t,
            tau,
            beta: vec![true; n],
            rho,
            global_loss: 0.0,
            global_grad_norm_sq: grad_sq,
            wall_clock: (t + 1) as f64,
            clamped: false,
            empty_aggregation: false,
            model: ParameterVector::zeros(1),
        }
    }

    #[test]
    fn empty_log_bound_is_initial_distance() {
        let w0 = ParameterVector::new(vec![3.0, 4.0]);
        let log = log_with(vec![], w0.clone(), w0.clone(), 0.0);
        let r = evaluate_bound(&log, &SystemConstants::default(), &[1.0], &[0.0], &ParameterVector::zeros(2)).unwrap();
        assert_eq!((r.x, r.y, r.z, r.w), (0.0, 0.0, 0.0, 1.0));
        assert_eq!(r.bound_value, Some(25.0));
    }

    #[test]
    fn single_client_hand_evaluation() {
        let k = SystemConstants {
            eta: 0.1,
            smoothness: 1.0,
            grad_bound: 1.0,
            max_local_iters: 1,
            theta: SystemConstants::equality_theta(0.1, 1.0),
            num_clients: 1,
            ..SystemConstants::default()
        };
        let w0 = ParameterVector::new(vec![1.0]);
        let log = log_with(vec![record(0, vec![1], vec![1.0], 0.0)], w0.clone(), w0, 0.0);
        let r = evaluate_bound(&log, &k, &[1.0], &[0.0], &ParameterVector::zeros(1)).unwrap();
        assert_eq!(r.x, 0.0);
        assert!((r.y - 0.01).abs() < 1e-15);
        assert_eq!(r.z, 0.0);
        assert!((r.w - 1.0).abs() < 1e-15);
        assert!((r.bound_value.unwrap() - 1.01).abs() < 1e-14);

        // Z picks up A = η² once Γ is non-zero.
        let r = evaluate_bound(&log, &k, &[1.0], &[1.0], &ParameterVector::zeros(1)).unwrap();
        assert!((r.z - 0.01).abs() < 1e-15);
        assert!((r.bound_value.unwrap() - 1.02).abs() < 1e-14);
    }

    #[test]
    fn negative_denominator_is_inapplicable() {
        let k = SystemConstants { eta: 0.5, theta: 10.0, smoothness: 1.0, ..SystemConstants::default() };
        let w0 = ParameterVector::new(vec![1.0]);
        let log = log_with(vec![record(0, vec![4], vec![1.0], 0.0)], w0.clone(), w0, 0.0);
        let r = evaluate_bound(&log, &k, &[1.0], &[0.0], &ParameterVector::zeros(1)).unwrap();
        assert!(r.w <= 0.0);
        assert!(!r.applicable());
        assert!(!r.satisfied);
    }

    #[test]
    fn heterogeneity_of_cases() {
        let case1: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 4.0 }).collect();
        let case2: Vec<f64> = (0..20).map(|i| (i / 5 + 1) as f64).collect();
        assert_eq!(heterogeneity_degree(&case1).unwrap(), 2.25);
        assert_eq!(heterogeneity_degree(&case2).unwrap(), 1.25);
        assert_eq!(heterogeneity_degree(&[3.0; 7]).unwrap(), 0.0);
        assert!(heterogeneity_degree(&[]).is_err());
    }

    #[test]
    fn heterogeneity_translation_and_scaling() {
        let tau = [1.0, 2.5, 4.0, 7.0];
        let base = heterogeneity_degree(&tau).unwrap();
        let shifted: Vec<f64> = tau.iter().map(|t| t + 11.0).collect();
        let scaled: Vec<f64> = tau.iter().map(|t| 3.0 * t).collect();
        assert!((heterogeneity_degree(&shifted).unwrap() - base).abs() < 1e-12);
        assert!((heterogeneity_degree(&scaled).unwrap() - 9.0 * base).abs() < 1e-12);
    }

    fn scalar_task(centers: &[f64]) -> SyntheticTask {
        let clients = centers
            .iter()
            .map(|&c| QuadraticClient::exact(DMatrix::identity(1, 1), ParameterVector::new(vec![c]), 1).unwrap())
            .collect();
        SyntheticTask::from_quadratics(clients, ParameterVector::zeros(1)).unwrap()
    }

    #[test]
    fn dissimilarity_examples() {
        let probe = [ParameterVector::new(vec![2.0])];
        let d = estimate_dissimilarity(&scalar_task(&[1.0, -1.0]), &probe).unwrap();
        assert!((d.v * d.v - 1.25).abs() < 1e-12);
        assert!((d.epsilon - 1.0).abs() < 1e-12);

        let d = estimate_dissimilarity(&scalar_task(&[0.5]), &probe).unwrap();
        assert!((d.v - 1.0).abs() < 1e-12 && (d.epsilon - 1.0).abs() < 1e-12);

        let d = estimate_dissimilarity(&scalar_task(&[0.5, 0.5]), &probe).unwrap();
        assert!((d.v - 1.0).abs() < 1e-12 && (d.epsilon - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dissimilarity_skips_stationary_probes() {
        let task = scalar_task(&[1.0, -1.0]);
        let at_optimum = [ParameterVector::zeros(1)];
        assert!(matches!(estimate_dissimilarity(&task, &at_optimum), Err(Error::AllProbesSkipped)));
        let mixed = [ParameterVector::zeros(1), ParameterVector::new(vec![2.0])];
        assert_eq!(estimate_dissimilarity(&task, &mixed).unwrap().probes_used, 1);
    }

    #[test]
    fn convergence_rhs_example_and_scaling() {
        let k = SystemConstants { eta: 0.1, smoothness: 1.0, epsilon: 1.0, dissimilarity: 1.0, ..SystemConstants::default() };
        let rhs = convergence_rhs(&k, 1.0, 10).unwrap();
        assert!((rhs - 0.2 / 19.0).abs() < 1e-15);
        assert_eq!(convergence_rhs(&k, 1.0, 20).unwrap(), rhs / 2.0);
        assert!((convergence_rhs(&k, 3.0, 10).unwrap() - 3.0 * rhs).abs() < 1e-16);
        assert_eq!(convergence_rhs(&k, 1.0, 400).unwrap(), convergence_rhs(&k, 1.0, 100).unwrap() / 4.0);
        let too_fast = SystemConstants { eta: 2.0, ..k };
        assert!(convergence_rhs(&too_fast, 1.0, 10).is_none());
    }

    #[test]
    fn start_at_optimum_is_satisfied() {
        let k = SystemConstants { eta: 0.1, ..SystemConstants::default() };
        let w = ParameterVector::zeros(1);
        let log = log_with(vec![record(0, vec![1], vec![1.0], 0.0)], w.clone(), w, 0.0);
        let r = verify_convergence(&log, &k, 0.0, 0.0);
        assert_eq!(r.mean_cum_grad, 0.0);
        assert_eq!(r.bound, Some(0.0));
        assert!(r.satisfied);
    }

    #[test]
    fn cumulative_gradient_uses_pre_aggregation_states() {
        let k = SystemConstants { eta: 0.1, ..SystemConstants::default() };
        let w = ParameterVector::zeros(1);
        let recs = vec![record(0, vec![1], vec![1.0], 2.0), record(1, vec![1], vec![1.0], 100.0)];
        let r = verify_convergence(&log_with(recs, w.clone(), w, 4.0), &k, 1.0, 0.0);
        assert_eq!(r.mean_cum_grad, 3.0);
    }
}
