//! Discriminative model selection: probabilistic filtering of clients below
//! the interval's mean iteration count, followed by iteration-spaced weights.

use rand::Rng;

use super::{WeightAssignment, WeightMethod};
use crate::error::{Error, Result};
use crate::types::SystemConstants;

/// Weight increment per extra local iteration, ηL(H−1)G² / (2Nσ²).
pub fn spacing_slope(c: &SystemConstants, num_clients: usize) -> f64 {
    let h_minus_one = c.max_local_iters.saturating_sub(1) as f64;
    c.eta * c.smoothness * h_minus_one * c.grad_bound * c.grad_bound
        / (2.0 * num_clients as f64 * c.sigma * c.sigma)
}

/// Weights whose pairwise differences are `k (τ_i − τ_j)` among participants
/// and which sum to one. Negative weights are clamped to zero and the rest
/// renormalized; `clamped` records when that happened.
pub fn spacing_weights(
    tau: &[u32],
    participating: &[bool],
    c: &SystemConstants,
) -> Result<WeightAssignment> {
    if tau.len() != participating.len() {
        return Err(Error::DimensionMismatch {
            expected: tau.len(),
            actual: participating.len(),
        });
    }
    let m = participating.iter().filter(|&&b| b).count();
    if m == 0 {
        return Err(Error::NoParticipants);
    }
    if c.sigma == 0.0 {
        return Err(Error::ZeroSigma);
    }
    let k = spacing_slope(c, tau.len());
    let mean_tau = tau
        .iter()
        .zip(participating)
        .filter(|(_, &b)| b)
        .map(|(&t, _)| t as f64)
        .sum::<f64>()
        / m as f64;
    let mut rho: Vec<f64> = tau
        .iter()
        .zip(participating)
        .map(|(&t, &b)| if b { 1.0 / m as f64 + k * (t as f64 - mean_tau) } else { 0.0 })
        .collect();
    let clamped = rho.iter().any(|&r| r < 0.0);
    if clamped {
        rho.iter_mut().for_each(|r| *r = r.max(0.0));
        let total: f64 = rho.iter().sum();
        rho.iter_mut().for_each(|r| *r /= total);
    }
    Ok(WeightAssignment {
        rho,
        participating: participating.to_vec(),
        method: WeightMethod::Spacing,
        clamped,
    })
}

/// K = (1/N) Σ τ_i over every client, idle ones included.
pub fn dms_threshold(tau: &[u32]) -> f64 {
    tau.iter().map(|&t| t as f64).sum::<f64>() / tau.len() as f64
}

/// P = (K − τ)/H below the threshold, 0 otherwise.
pub fn filtering_probability(tau: u32, threshold: f64, max_iters: u32) -> f64 {
    let t = tau as f64;
    if t < threshold {
        ((threshold - t) / max_iters.max(1) as f64).min(1.0)
    } else {
        0.0
    }
}

/// Independent Bernoulli draws: client i is kept with probability 1 − P_i.
/// Exactly one uniform is consumed per client.
pub fn sample_participation<R: Rng + ?Sized>(filter_probs: &[f64], rng: &mut R) -> Vec<bool> {
    filter_probs
        .iter()
        .map(|&p| rng.gen::<f64>() >= p)
        .collect()
}

/// DMS weights over all clients.
pub fn dms_weights<R: Rng + ?Sized>(
    tau: &[u32],
    c: &SystemConstants,
    rng: &mut R,
) -> Result<WeightAssignment> {
    dms_weights_among(tau, &vec![true; tau.len()], c, rng)
}

/// DMS restricted to the `eligible` clients (those that uploaded). The
/// threshold and H are computed over eligible clients; ineligible ones never
/// participate. One uniform is drawn per client regardless of eligibility.
pub fn dms_weights_among<R: Rng + ?Sized>(
    tau: &[u32],
    eligible: &[bool],
    c: &SystemConstants,
    rng: &mut R,
) -> Result<WeightAssignment> {
    if tau.len() != eligible.len() {
        return Err(Error::DimensionMismatch {
            expected: tau.len(),
            actual: eligible.len(),
        });
    }
    let active: Vec<u32> = tau
        .iter()
        .zip(eligible)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    if active.is_empty() {
        return Err(Error::NoParticipants);
    }
    let max_iters = active.iter().copied().max().unwrap_or(0).max(1);
    let threshold = dms_threshold(&active);
    let probs: Vec<f64> = tau
        .iter()
        .zip(eligible)
        .map(|(&t, &e)| if e { filtering_probability(t, threshold, max_iters) } else { 1.0 })
        .collect();
    let beta: Vec<bool> = sample_participation(&probs, rng)
        .into_iter()
        .zip(eligible)
        .map(|(b, &e)| b && e)
        .collect();
    let interval_constants = SystemConstants {
        max_local_iters: max_iters,
        ..c.clone()
    };
    let mut w = spacing_weights(tau, &beta, &interval_constants)?;
    w.method = WeightMethod::Dms;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use nalgebra::{DMatrix, DVector};
    use proptest::{prelude::any, prop_assert, proptest};
    use rand::Rng;

    fn constants(eta: f64, l: f64, h: u32, g: f64, sigma: f64, n: usize) -> SystemConstants {
        SystemConstants {
            eta,
            smoothness: l,
            max_local_iters: h,
            grad_bound: g,
            sigma,
            num_clients: n,
            ..SystemConstants::default()
        }
    }

    #[test]
    fn equal_iterations_give_uniform_weights() {
        let c = constants(0.5, 3.0, 9, 2.0, 0.1, 4);
        let w = spacing_weights(&[3, 3, 3, 3], &[true; 4], &c).unwrap();
        assert!(w.rho.iter().all(|&r| (r - 0.25).abs() < 1e-15));
    }

    #[test]
    fn two_client_spacing() {
        let c = constants(0.003, 1.0, 4, 1.0, 0.5, 2);
        assert!((spacing_slope(&c, 2) - 0.009).abs() < 1e-15);
        let w = spacing_weights(&[1, 4], &[true, true], &c).unwrap();
        assert!((w.rho[0] - 0.4865).abs() < 1e-12);
        assert!((w.rho[1] - 0.5135).abs() < 1e-12);
        assert!(!w.clamped);
    }

    #[test]
    fn zero_sigma_is_an_error() {
        let c = constants(0.003, 1.0, 4, 1.0, 0.0, 2);
        assert!(matches!(spacing_weights(&[1, 4], &[true, true], &c), Err(Error::ZeroSigma)));
    }

    #[test]
    fn clamping_keeps_simplex() {
        let c = constants(0.5, 1.0, 10, 2.0, 0.1, 3);
        let w = spacing_weights(&[0, 5, 10], &[true; 3], &c).unwrap();
        assert!(w.clamped);
        assert_eq!(w.rho[0], 0.0);
        assert!((w.rho.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    /// Solves {ρ_a − ρ_j = k(τ_a − τ_j), Σρ = 1} over participants densely.
    fn linear_system_oracle(tau: &[u32], part: &[bool], k: f64) -> Vec<f64> {
        let idx: Vec<usize> = (0..tau.len()).filter(|&i| part[i]).collect();
        let m = idx.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for r in 1..m {
            a[(r - 1, 0)] = 1.0;
            a[(r - 1, r)] = -1.0;
            b[r - 1] = k * (tau[idx[0]] as f64 - tau[idx[r]] as f64);
        }
        for col in 0..m {
            a[(m - 1, col)] = 1.0;
        }
        b[m - 1] = 1.0;
        let x = a.lu().solve(&b).unwrap();
        let mut out = vec![0.0; tau.len()];
        for (r, &i) in idx.iter().enumerate() {
            out[i] = x[r];
        }
        out
    }

    #[test]
    fn spacing_matches_linear_system_on_random_instances() {
        let mut rng = stream_rng(21, Stream::Task);
        for _ in 0..100 {
            let n = rng.gen_range(2..=20);
            let tau: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=8)).collect();
            let mut part: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
            part[rng.gen_range(0..n)] = true;
            let c = constants(0.003, 1.0, 8, 1.0, 0.5, n);
            let w = spacing_weights(&tau, &part, &c).unwrap();
            assert!(!w.clamped);
            let oracle = linear_system_oracle(&tau, &part, spacing_slope(&c, n));
            for (a, b) in w.rho.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(dms_threshold(&[1, 1, 4, 4]), 2.5);
        assert_eq!(dms_threshold(&[3, 3, 3]), 3.0);
        assert_eq!(dms_threshold(&[0, 0, 0, 8]), 2.0);
    }

    #[test]
    fn filtering_probability_examples() {
        assert_eq!(filtering_probability(2, 2.0, 4), 0.0);
        assert_eq!(filtering_probability(1, 2.5, 4), 0.375);
        assert_eq!(filtering_probability(4, 2.5, 4), 0.0);
    }

    #[test]
    fn certain_and_impossible_filtering() {
        let mut rng = stream_rng(1, Stream::Participation);
        for _ in 0..1000 {
            assert_eq!(sample_participation(&[0.0, 1.0], &mut rng), vec![true, false]);
        }
    }

    #[test]
    fn filter_frequency_matches_probability() {
        let mut rng = stream_rng(2, Stream::Participation);
        let filtered = (0..100_000)
            .filter(|_| !sample_participation(&[0.375], &mut rng)[0])
            .count();
        let rate = filtered as f64 / 1e5;
        assert!((0.370..=0.380).contains(&rate), "rate {rate}");
    }

    #[test]
    fn homogeneous_dms_is_uniform() {
        let c = constants(0.003, 1.0, 4, 1.0, 0.5, 5);
        let mut rng = stream_rng(3, Stream::Participation);
        let w = dms_weights(&[2; 5], &c, &mut rng).unwrap();
        assert!(w.participating.iter().all(|&b| b));
        assert!(w.rho.iter().all(|&r| (r - 0.2).abs() < 1e-15));
    }

    fn seed_where(tau: &[u32], want: &[bool]) -> u64 {
        let max = *tau.iter().max().unwrap();
        let k = dms_threshold(tau);
        let probs: Vec<f64> = tau.iter().map(|&t| filtering_probability(t, k, max)).collect();
        (0..10_000)
            .find(|&s| sample_participation(&probs, &mut stream_rng(s, Stream::Participation)) == want)
            .expect("no seed found")
    }

    #[test]
    fn filtered_slow_clients_get_zero_weight() {
        let tau = [1, 1, 4, 4];
        let seed = seed_where(&tau, &[false, false, true, true]);
        let c = constants(0.003, 1.0, 4, 1.0, 0.5, 4);
        let w = dms_weights(&tau, &c, &mut stream_rng(seed, Stream::Participation)).unwrap();
        assert_eq!(w.rho, vec![0.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn unfiltered_dms_equals_spacing() {
        let tau = [1, 2, 3, 4];
        let seed = seed_where(&tau, &[true; 4]);
        let c = constants(0.003, 1.0, 4, 1.0, 0.5, 4);
        let dms = dms_weights(&tau, &c, &mut stream_rng(seed, Stream::Participation)).unwrap();
        let spacing = spacing_weights(&tau, &[true; 4], &c).unwrap();
        assert_eq!(dms.rho, spacing.rho);
    }

    #[test]
    fn dms_uses_interval_max_for_slope() {
        // Configured H is ignored in favour of the interval's largest τ.
        let tau = [2, 2, 2, 6];
        let seed = seed_where(&tau, &[true; 4]);
        let c = constants(0.01, 1.0, 50, 1.0, 0.5, 4);
        let dms = dms_weights(&tau, &c, &mut stream_rng(seed, Stream::Participation)).unwrap();
        let expected = spacing_weights(&tau, &[true; 4], &SystemConstants { max_local_iters: 6, ..c }).unwrap();
        assert_eq!(dms.rho, expected.rho);
    }

    #[test]
    fn ineligible_clients_never_participate() {
        let c = constants(0.003, 1.0, 4, 1.0, 0.5, 4);
        let mut rng = stream_rng(5, Stream::Participation);
        for _ in 0..100 {
            let w = dms_weights_among(&[1, 2, 3, 4], &[false, true, true, true], &c, &mut rng).unwrap();
            assert!(!w.participating[0]);
            assert_eq!(w.rho[0], 0.0);
            w.check().unwrap();
        }
    }

    proptest! {
        #[test]
        fn spacing_law_and_monotonicity(
            tau in proptest::collection::vec(0u32..10, 1..20),
            mask in proptest::collection::vec(any::<bool>(), 20),
            eta in 0.001f64..0.2,
        ) {
            let n = tau.len();
            let mut part = mask[..n].to_vec();
            part[0] = true;
            let c = constants(eta, 1.0, 10, 1.0, 0.5, n);
            let w = spacing_weights(&tau, &part, &c).unwrap();
            w.check().unwrap();
            let k = spacing_slope(&c, n);
            for i in 0..n {
                for j in 0..n {
                    if part[i] && part[j] {
                        if !w.clamped {
                            let lhs = w.rho[i] - w.rho[j] - k * (tau[i] as f64 - tau[j] as f64);
                            prop_assert!(lhs.abs() < 1e-12);
                        }
                        if tau[i] > tau[j] {
                            prop_assert!(w.rho[i] >= w.rho[j]);
                        }
                    }
                }
            }
        }

        #[test]
        fn filtering_probability_non_increasing(k in 0.0f64..10.0, h in 1u32..12, a in 0u32..12, b in 0u32..12) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(filtering_probability(hi, k, h) <= filtering_probability(lo, k, h));
        }
    }
}
