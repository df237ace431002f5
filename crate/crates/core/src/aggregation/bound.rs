//! Aggregation weights that minimize the loss upper bound
//!
//! `g(ρ) = (‖w⁰ − w*‖² + X + Y + Z) / W` with
//!
//! ```text
//! X = η³L(H−1)G² Σ_t Σ_i ρ_i^t (τ_i^t)²
//! Y = η²N Σ_i σ_i² Σ_t (ρ_i^t)² τ_i^t
//! Z = A Σ_t Σ_i ρ_i^t τ_i^t Γ_i
//! W = 1 + B Σ_t Σ_i ρ_i^t τ_i^t
//! ```
//!
//! where past intervals are fixed and only the current interval's weights
//! are free. Two solvers share the same damped fixed-point loop:
//!
//! * [`BoundOptimalForm::Stationary`] iterates the KKT conditions of `g` on
//!   the simplex. Each step freezes the interval-coupled sums and solves the
//!   remaining separable problem exactly by water-filling.
//! * [`BoundOptimalForm::Printed`] iterates the published closed form
//!   `ρ_i = [B·D_i + (AΓ_i + Cτ_i)W] / (W · 2η²Nσ_i²)` followed by Euclidean
//!   projection onto the simplex. Its sign convention makes weights grow with
//!   τ_i and, for small slopes, reproduces the iteration-spacing rule exactly;
//!   it is not a stationary point of `g`.

use serde::{Deserialize, Serialize};

use super::{project_to_simplex, WeightAssignment, WeightMethod};
use crate::error::{Error, Result};
use crate::types::SystemConstants;

/// Coefficients shared by the bound and its optimal weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCoefficients {
    /// η{2L[ηL(1+θ) − 1] + η}
    pub a: f64,
    /// 2ηL[1 − ηL(1+θ)]
    pub b: f64,
    /// η³L(H−1)G²
    pub c: f64,
}

impl BoundCoefficients {
    pub fn new(k: &SystemConstants) -> Self {
        let eta = k.eta;
        let l = k.smoothness;
        let excess = eta * l * (1.0 + k.theta) - 1.0;
        let h_minus_one = k.max_local_iters.saturating_sub(1) as f64;
        Self {
            a: eta * (2.0 * l * excess + eta),
            b: -2.0 * eta * l * excess,
            c: eta.powi(3) * l * h_minus_one * k.grad_bound * k.grad_bound,
        }
    }
}

/// A completed interval: iteration counts, weights and participation flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PastInterval {
    pub tau: Vec<u32>,
    pub rho: Vec<f64>,
    pub beta: Vec<bool>,
}

/// Everything the bound depends on besides the current interval's weights.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs<'a> {
    pub constants: &'a SystemConstants,
    /// Per-client noise bounds σ_i.
    pub sigma: &'a [f64],
    /// Per-client non-IID degrees Γ_i.
    pub noniid: &'a [f64],
    /// ‖w⁰ − w*‖²
    pub initial_distance_sq: f64,
    pub history: &'a [PastInterval],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundOptimalForm {
    /// True minimizer of the bound over the simplex.
    #[default]
    Stationary,
    /// Published closed form with σ_i² and Γ_i outside the sums of D.
    Printed,
    /// Published closed form with D replaced by the bound's actual numerator
    /// (σ_j², Γ_j inside the sums), which makes D client-independent.
    PrintedSharedD,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    /// Σ ρτ
    rho_tau: f64,
    /// Σ ρ²τ
    rho2_tau: f64,
    /// Σ ρτ²
    rho_tau2: f64,
    /// Σ σ²ρ²τ
    sigma_rho2_tau: f64,
    /// Σ Γρτ
    gamma_rho_tau: f64,
}

impl Sums {
    fn add(&mut self, tau: &[u32], rho: &[f64], sigma: &[f64], noniid: &[f64]) {
        for i in 0..tau.len() {
            let t = tau[i] as f64;
            let r = rho[i];
            self.rho_tau += r * t;
            self.rho2_tau += r * r * t;
            self.rho_tau2 += r * t * t;
            self.sigma_rho2_tau += sigma[i] * sigma[i] * r * r * t;
            self.gamma_rho_tau += noniid[i] * r * t;
        }
    }
}

impl<'a> BoundInputs<'a> {
    fn check(&self, n: usize) -> Result<()> {
        if self.sigma.len() != n || self.noniid.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.sigma.len().min(self.noniid.len()),
            });
        }
        if self
            .history
            .iter()
            .any(|h| h.tau.len() != n || h.rho.len() != n || h.beta.len() != n)
        {
            return Err(Error::InvalidArgument("history width differs from client count".into()));
        }
        Ok(())
    }

    /// Sums over past intervals; with `mask_client = Some(i)` only intervals
    /// in which client `i` participated are counted.
    fn history_sums(&self, mask_client: Option<usize>) -> Sums {
        let mut s = Sums::default();
        for h in self.history {
            if mask_client.is_none_or(|i| h.beta[i]) {
                s.add(&h.tau, &h.rho, self.sigma, self.noniid);
            }
        }
        s
    }
}

/// `(‖w⁰ − w*‖² + X + Y + Z) / W` with the current interval appended to the
/// history. Returns `f64::INFINITY` when W ≤ 0.
pub fn bound_value(tau: &[u32], rho: &[f64], inputs: &BoundInputs<'_>) -> f64 {
    let mut s = inputs.history_sums(None);
    s.add(tau, rho, inputs.sigma, inputs.noniid);
    let (num, w) = numerator_and_denominator(&s, inputs, tau.len());
    if w <= 0.0 {
        f64::INFINITY
    } else {
        num / w
    }
}

fn numerator_and_denominator(s: &Sums, inputs: &BoundInputs<'_>, n: usize) -> (f64, f64) {
    let k = inputs.constants;
    let coef = BoundCoefficients::new(k);
    let eta2n = k.eta * k.eta * n as f64;
    let num = inputs.initial_distance_sq
        + coef.c * s.rho_tau2
        + eta2n * s.sigma_rho2_tau
        + coef.a * s.gamma_rho_tau;
    (num, 1.0 + coef.b * s.rho_tau)
}

/// Weights minimizing the bound for the current interval, all clients eligible.
pub fn bound_optimal_weights(
    tau: &[u32],
    inputs: &BoundInputs<'_>,
    form: BoundOptimalForm,
    options: SolverOptions,
) -> Result<(WeightAssignment, SolverReport)> {
    solve(tau, &vec![true; tau.len()], inputs, form, options, false)
}

/// Bound-optimal weights restricted to clients with β_i = 1; the others get
/// exactly zero. For the printed forms each client's history sums only count
/// intervals in which that client participated.
pub fn masked_bound_optimal_weights(
    tau: &[u32],
    beta: &[bool],
    inputs: &BoundInputs<'_>,
    form: BoundOptimalForm,
    options: SolverOptions,
) -> Result<(WeightAssignment, SolverReport)> {
    solve(tau, beta, inputs, form, options, true)
}

fn solve(
    tau: &[u32],
    participating: &[bool],
    inputs: &BoundInputs<'_>,
    form: BoundOptimalForm,
    options: SolverOptions,
    mask_history: bool,
) -> Result<(WeightAssignment, SolverReport)> {
    let n = tau.len();
    if n == 0 {
        return Err(Error::EmptyClientSet);
    }
    if participating.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: participating.len(),
        });
    }
    inputs.check(n)?;
    let members: Vec<usize> = (0..n).filter(|&i| participating[i]).collect();
    if members.is_empty() {
        return Err(Error::NoParticipants);
    }
    if let Some(&i) = members.iter().find(|&&i| !(inputs.sigma[i] > 0.0)) {
        return Err(Error::InvalidArgument(format!("σ_{i} must be positive")));
    }

    let finish = |rho: Vec<f64>, report: SolverReport| {
        let clamped = members.iter().any(|&i| rho[i] == 0.0);
        (
            WeightAssignment {
                rho,
                participating: participating.to_vec(),
                method: WeightMethod::BoundOptimal,
                clamped,
            },
            report,
        )
    };

    let mut rho = vec![0.0; n];
    for &i in &members {
        rho[i] = 1.0 / members.len() as f64;
    }
    if members.len() == 1 {
        return Ok(finish(rho, SolverReport { iterations: 0, residual: 0.0 }));
    }

    let shared_history = inputs.history_sums(None);
    let masked_history: Vec<Sums> = if mask_history {
        (0..n).map(|i| inputs.history_sums(Some(i))).collect()
    } else {
        vec![shared_history; n]
    };

    let map = |rho: &[f64]| -> Vec<f64> {
        match form {
            BoundOptimalForm::Stationary => {
                stationary_response(tau, rho, &members, inputs, shared_history)
            }
            BoundOptimalForm::Printed | BoundOptimalForm::PrintedSharedD => printed_response(
                tau,
                rho,
                &members,
                inputs,
                &masked_history,
                form == BoundOptimalForm::PrintedSharedD,
            ),
        }
    };

    let mut residual = f64::INFINITY;
    for iteration in 1..=options.max_iterations {
        let next = map(&rho);
        residual = next
            .iter()
            .zip(&rho)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual < options.tolerance {
            return Ok(finish(next, SolverReport { iterations: iteration, residual }));
        }
        for (r, x) in rho.iter_mut().zip(&next) {
            *r = (1.0 - options.damping) * *r + options.damping * x;
        }
    }
    Err(Error::NotConverged {
        iterations: options.max_iterations,
        residual,
    })
}

/// Exact minimizer of the bound with the interval-coupled term B·Num/W
/// frozen at `rho`.
fn stationary_response(
    tau: &[u32],
    rho: &[f64],
    members: &[usize],
    inputs: &BoundInputs<'_>,
    history: Sums,
) -> Vec<f64> {
    let n = tau.len();
    let k = inputs.constants;
    let coef = BoundCoefficients::new(k);
    let mut sums = history;
    sums.add(tau, rho, inputs.sigma, inputs.noniid);
    let (num, w) = numerator_and_denominator(&sums, inputs, n);
    let coupling = coef.b * num / w;
    let eta2n = k.eta * k.eta * n as f64;

    // ∂g/∂ρ_i ∝ τ_i (b_i + s_i ρ_i); KKT gives ρ_i = max(0, (λ/τ_i − b_i)/s_i).
    let busy: Vec<(usize, f64, f64, f64)> = members
        .iter()
        .filter(|&&i| tau[i] > 0)
        .map(|&i| {
            let t = tau[i] as f64;
            let b = coef.c * t + coef.a * inputs.noniid[i] - coupling;
            let s = 2.0 * eta2n * inputs.sigma[i] * inputs.sigma[i];
            (i, t, b, s)
        })
        .collect();
    let idle: Vec<usize> = members.iter().copied().filter(|&i| tau[i] == 0).collect();
    let fill = |lambda: f64| -> f64 {
        busy.iter()
            .map(|&(_, t, b, s)| ((lambda / t - b) / s).max(0.0))
            .sum()
    };

    let mut out = vec![0.0; n];
    if busy.is_empty() {
        for &i in &idle {
            out[i] = 1.0 / idle.len() as f64;
        }
        return out;
    }
    if !idle.is_empty() && fill(0.0) <= 1.0 {
        // Idle clients leave the bound unchanged, so they absorb the remainder.
        let mut used = 0.0;
        for &(i, t, b, s) in &busy {
            out[i] = ((0.0 / t - b) / s).max(0.0);
            used += out[i];
        }
        for &i in &idle {
            out[i] = (1.0 - used) / idle.len() as f64;
        }
        return out;
    }
    let mut lo = busy.iter().map(|&(_, t, b, _)| t * b).fold(f64::INFINITY, f64::min);
    let mut hi = busy
        .iter()
        .map(|&(_, t, b, s)| t * (b + s))
        .fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fill(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    for &(i, t, b, s) in &busy {
        out[i] = ((lambda / t - b) / s).max(0.0);
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|r| *r /= total);
    out
}

/// Published closed form evaluated at `rho`, projected onto the simplex.
fn printed_response(
    tau: &[u32],
    rho: &[f64],
    members: &[usize],
    inputs: &BoundInputs<'_>,
    history: &[Sums],
    shared_d: bool,
) -> Vec<f64> {
    let n = tau.len();
    let k = inputs.constants;
    let coef = BoundCoefficients::new(k);
    let eta2n = k.eta * k.eta * n as f64;
    let raw: Vec<f64> = members
        .iter()
        .map(|&i| {
            let mut s = history[i];
            s.add(tau, rho, inputs.sigma, inputs.noniid);
            let gamma = inputs.noniid[i];
            let sigma2 = inputs.sigma[i] * inputs.sigma[i];
            let d = if shared_d {
                numerator_and_denominator(&s, inputs, n).0
            } else {
                inputs.initial_distance_sq
                    + eta2n * sigma2 * s.rho2_tau
                    + coef.a * gamma * s.rho_tau
                    + coef.c * s.rho_tau2
            };
            let w = 1.0 + coef.b * s.rho_tau;
            (coef.b * d + (coef.a * gamma + coef.c * tau[i] as f64) * w) / (w * 2.0 * eta2n * sigma2)
        })
        .collect();
    let projected = project_to_simplex(&raw);
    let mut out = vec![0.0; n];
    for (&i, p) in members.iter().zip(projected) {
        out[i] = p;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::spacing_weights;
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    /// Independent double-loop evaluation of the bound.
    fn oracle_bound(
        k: &SystemConstants,
        taus: &[Vec<u32>],
        rhos: &[Vec<f64>],
        sigma: &[f64],
        gamma: &[f64],
        d0: f64,
    ) -> f64 {
        let n = sigma.len() as f64;
        let (eta, l) = (k.eta, k.smoothness);
        let h = k.max_local_iters as f64;
        let prod = eta * l * (1.0 + k.theta);
        let (mut x, mut y, mut z, mut w) = (0.0, 0.0, 0.0, 0.0);
        for t in 0..taus.len() {
            for i in 0..sigma.len() {
                let tau = taus[t][i] as f64;
                let r = rhos[t][i];
                x += r * tau * tau;
                y += sigma[i] * sigma[i] * r * r * tau;
                z += r * tau * gamma[i];
                w += r * tau;
            }
        }
        let x = eta.powi(3) * l * (h - 1.0) * k.grad_bound.powi(2) * x;
        let y = eta * eta * n * y;
        let z = (2.0 * eta * l * (prod - 1.0) + eta * eta) * z;
        let w = 1.0 + 2.0 * eta * l * (1.0 - prod) * w;
        (d0 + x + y + z) / w
    }

    struct Instance {
        k: SystemConstants,
        sigma: Vec<f64>,
        gamma: Vec<f64>,
        d0: f64,
        history: Vec<PastInterval>,
        tau: Vec<u32>,
    }

    impl Instance {
        fn inputs(&self) -> BoundInputs<'_> {
            BoundInputs {
                constants: &self.k,
                sigma: &self.sigma,
                noniid: &self.gamma,
                initial_distance_sq: self.d0,
                history: &self.history,
            }
        }

        fn oracle(&self, rho: &[f64]) -> f64 {
            let mut taus: Vec<Vec<u32>> = self.history.iter().map(|h| h.tau.clone()).collect();
            let mut rhos: Vec<Vec<f64>> = self.history.iter().map(|h| h.rho.clone()).collect();
            taus.push(self.tau.clone());
            rhos.push(rho.to_vec());
            oracle_bound(&self.k, &taus, &rhos, &self.sigma, &self.gamma, self.d0)
        }
    }

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let e: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect()
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
        let eta = rng.gen_range(0.05..0.3);
        let l = rng.gen_range(0.5..2.0);
        let excess = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.05) };
        let theta = (1.0 + excess) / (eta * l) - 1.0;
        let k = SystemConstants {
            eta,
            smoothness: l,
            theta,
            grad_bound: rng.gen_range(0.5..2.0),
            max_local_iters: 5,
            num_clients: n,
            ..SystemConstants::default()
        };
        let sigma: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let gamma: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let past = rng.gen_range(0..3);
        let history = (0..past)
            .map(|_| PastInterval {
                tau: (0..n).map(|_| rng.gen_range(1..=5)).collect(),
                rho: random_simplex(rng, n),
                beta: vec![true; n],
            })
            .collect();
        Instance {
            k,
            sigma,
            gamma,
            d0: rng.gen_range(0.5..5.0),
            history,
            tau: (0..n).map(|_| rng.gen_range(1..=5)).collect(),
        }
    }

    #[test]
    fn coefficients_at_equality_theta() {
        let k = SystemConstants {
            eta: 0.1,
            smoothness: 1.0,
            theta: SystemConstants::equality_theta(0.1, 1.0),
            ..SystemConstants::default()
        };
        let c = BoundCoefficients::new(&k);
        assert!((c.a - 0.01).abs() < 1e-15);
        assert!(c.b.abs() < 1e-15);
    }

    #[test]
    fn bound_value_matches_oracle() {
        let mut rng = stream_rng(31, Stream::Task);
        for _ in 0..50 {
            let n = rng.gen_range(1..6);
            let inst = random_instance(&mut rng, n);
            let rho = random_simplex(&mut rng, n);
            let a = bound_value(&inst.tau, &rho, &inst.inputs());
            let b = inst.oracle(&rho);
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn symmetric_inputs_give_uniform_weights() {
        let k = SystemConstants {
            eta: 0.1,
            num_clients: 4,
            theta: SystemConstants::equality_theta(0.1, 1.0) + 0.5,
            ..SystemConstants::default()
        };
        let inputs = BoundInputs {
            constants: &k,
            sigma: &[0.7; 4],
            noniid: &[0.2; 4],
            initial_distance_sq: 2.0,
            history: &[],
        };
        for form in [BoundOptimalForm::Stationary, BoundOptimalForm::Printed, BoundOptimalForm::PrintedSharedD] {
            let (w, _) = bound_optimal_weights(&[3; 4], &inputs, form, SolverOptions::default()).unwrap();
            for r in &w.rho {
                assert!((r - 0.25).abs() < 1e-12, "{form:?}: {r}");
            }
        }
    }

    fn simplex_directional_derivatives(inst: &Instance, rho: &[f64], free: &[usize]) -> Vec<f64> {
        let h = 1e-6;
        let mut out = Vec::new();
        for (a, &i) in free.iter().enumerate() {
            for &j in &free[a + 1..] {
                let mut plus = rho.to_vec();
                let mut minus = rho.to_vec();
                plus[i] += h;
                plus[j] -= h;
                minus[i] -= h;
                minus[j] += h;
                out.push((inst.oracle(&plus) - inst.oracle(&minus)) / (2.0 * h));
            }
        }
        out
    }

    #[test]
    fn two_client_solution_is_stationary() {
        let k = SystemConstants {
            eta: 0.2,
            smoothness: 1.0,
            theta: SystemConstants::equality_theta(0.2, 1.0),
            max_local_iters: 4,
            grad_bound: 1.5,
            num_clients: 2,
            ..SystemConstants::default()
        };
        let inst = Instance {
            k,
            sigma: vec![3.0, 3.0],
            gamma: vec![0.0, 0.0],
            d0: 1.0,
            history: vec![],
            tau: vec![1, 4],
        };
        let (w, report) = bound_optimal_weights(&inst.tau, &inst.inputs(), BoundOptimalForm::Stationary, SolverOptions::default()).unwrap();
        assert!(report.residual < 1e-10);
        assert!(w.rho.iter().all(|&r| r > 0.0));
        for d in simplex_directional_derivatives(&inst, &w.rho, &[0, 1]) {
            assert!(d.abs() < 1e-6, "derivative {d}");
        }
    }

    #[test]
    fn three_client_solution_beats_random_points() {
        let mut rng = stream_rng(77, Stream::Task);
        let inst = random_instance(&mut rng, 3);
        let (w, _) = bound_optimal_weights(&inst.tau, &inst.inputs(), BoundOptimalForm::Stationary, SolverOptions::default()).unwrap();
        let best = inst.oracle(&w.rho);
        for _ in 0..1000 {
            let p = random_simplex(&mut rng, 3);
            assert!(best <= inst.oracle(&p) + 1e-12);
        }
    }

    #[test]
    fn all_participating_mask_reduces_to_unmasked() {
        let mut rng = stream_rng(5, Stream::Task);
        for form in [BoundOptimalForm::Stationary, BoundOptimalForm::Printed] {
            let inst = random_instance(&mut rng, 4);
            let (a, _) = bound_optimal_weights(&inst.tau, &inst.inputs(), form, SolverOptions::default()).unwrap();
            let (b, _) = masked_bound_optimal_weights(&inst.tau, &[true; 4], &inst.inputs(), form, SolverOptions::default()).unwrap();
            assert_eq!(a.rho, b.rho);
        }
    }

    #[test]
    fn single_participant_gets_everything() {
        let mut rng = stream_rng(6, Stream::Task);
        let inst = random_instance(&mut rng, 3);
        let (w, _) = masked_bound_optimal_weights(&inst.tau, &[false, true, false], &inst.inputs(), BoundOptimalForm::Stationary, SolverOptions::default()).unwrap();
        assert_eq!(w.rho, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn masked_solution_is_stationary_on_free_weights() {
        let mut rng = stream_rng(9, Stream::Task);
        let mut checked = 0;
        while checked < 5 {
            let inst = random_instance(&mut rng, 3);
            let beta = [true, false, true];
            let (w, _) = masked_bound_optimal_weights(&inst.tau, &beta, &inst.inputs(), BoundOptimalForm::Stationary, SolverOptions::default()).unwrap();
            assert_eq!(w.rho[1], 0.0);
            if w.rho[0] > 0.0 && w.rho[2] > 0.0 {
                for d in simplex_directional_derivatives(&inst, &w.rho, &[0, 2]) {
                    assert!(d.abs() < 1e-6, "derivative {d}");
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn idle_clients_absorb_weight() {
        let k = SystemConstants {
            eta: 0.1,
            theta: SystemConstants::equality_theta(0.1, 1.0),
            num_clients: 3,
            ..SystemConstants::default()
        };
        let inputs = BoundInputs { constants: &k, sigma: &[1.0; 3], noniid: &[0.0; 3], initial_distance_sq: 1.0, history: &[] };
        let (w, _) = bound_optimal_weights(&[0, 2, 4], &inputs, BoundOptimalForm::Stationary, SolverOptions::default()).unwrap();
        assert_eq!(w.rho, vec![1.0, 0.0, 0.0]);
    }

    /// Euclidean simplex projection by bisection on the shift.
    fn oracle_projection(v: &[f64]) -> Vec<f64> {
        let (mut lo, mut hi) = (v.iter().copied().fold(f64::INFINITY, f64::min) - 1.0, v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            let s: f64 = v.iter().map(|x| (x - mid).max(0.0)).sum();
            if s > 1.0 { lo = mid } else { hi = mid }
        }
        v.iter().map(|x| (x - 0.5 * (lo + hi)).max(0.0)).collect()
    }

    #[test]
    fn printed_form_with_zero_b_is_direct_closed_form() {
        let mut rng = stream_rng(12, Stream::Task);
        for _ in 0..20 {
            let n = 5;
            let eta = rng.gen_range(0.01..0.2);
            let k = SystemConstants {
                eta,
                smoothness: 1.0,
                theta: SystemConstants::equality_theta(eta, 1.0),
                max_local_iters: 6,
                grad_bound: 3.0,
                num_clients: n,
                ..SystemConstants::default()
            };
            let sigma: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..1.0)).collect();
            let tau: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=6)).collect();
            let inputs = BoundInputs { constants: &k, sigma: &sigma, noniid: &[0.0; 5], initial_distance_sq: 1.0, history: &[] };
            let (w, _) = bound_optimal_weights(&tau, &inputs, BoundOptimalForm::Printed, SolverOptions::default()).unwrap();
            let c = eta.powi(3) * 5.0 * 9.0;
            let raw: Vec<f64> = (0..n).map(|i| c * tau[i] as f64 / (2.0 * eta * eta * n as f64 * sigma[i] * sigma[i])).collect();
            for (a, b) in w.rho.iter().zip(oracle_projection(&raw)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn printed_form_reproduces_spacing_rule() {
        let k = SystemConstants {
            eta: 0.003,
            smoothness: 1.0,
            theta: SystemConstants::equality_theta(0.003, 1.0),
            max_local_iters: 4,
            grad_bound: 1.0,
            sigma: 0.5,
            num_clients: 6,
            ..SystemConstants::default()
        };
        let tau = [1, 1, 2, 3, 4, 4];
        let inputs = BoundInputs { constants: &k, sigma: &[0.5; 6], noniid: &[0.0; 6], initial_distance_sq: 1.0, history: &[] };
        let (w, _) = bound_optimal_weights(&tau, &inputs, BoundOptimalForm::Printed, SolverOptions::default()).unwrap();
        let spacing = spacing_weights(&tau, &[true; 6], &k).unwrap();
        for (a, b) in w.rho.iter().zip(&spacing.rho) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_order_in_iterations() {
        // Equal σ and Γ: the published form favours busy clients, the true
        // minimizer favours idle ones.
        let mut rng = stream_rng(40, Stream::Task);
        for _ in 0..50 {
            let mut inst = random_instance(&mut rng, 4);
            inst.sigma = vec![inst.sigma[0]; 4];
            inst.gamma = vec![inst.gamma[0]; 4];
            let printed = bound_optimal_weights(&inst.tau, &inst.inputs(), BoundOptimalForm::Printed, SolverOptions::default()).unwrap().0;
            let stationary = bound_optimal_weights(&inst.tau, &inst.inputs(), BoundOptimalForm::Stationary, SolverOptions::default()).unwrap().0;
            for i in 0..4 {
                for j in 0..4 {
                    if inst.tau[i] > inst.tau[j] {
                        assert!(printed.rho[i] >= printed.rho[j]);
                        assert!(stationary.rho[i] <= stationary.rho[j] + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn non_convergence_reports_residual() {
        let mut rng = stream_rng(3, Stream::Task);
        let inst = random_instance(&mut rng, 4);
        let opts = SolverOptions { max_iterations: 1, ..SolverOptions::default() };
        match bound_optimal_weights(&[1, 2, 3, 5], &inst.inputs(), BoundOptimalForm::Stationary, opts) {
            Err(Error::NotConverged { iterations: 1, residual }) => assert!(residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_sigma_rejected() {
        let k = SystemConstants::default();
        let inputs = BoundInputs { constants: &k, sigma: &[1.0, 0.0], noniid: &[0.0; 2], initial_distance_sq: 1.0, history: &[] };
        assert!(bound_optimal_weights(&[1, 2], &inputs, BoundOptimalForm::Stationary, SolverOptions::default()).is_err());
    }
}
