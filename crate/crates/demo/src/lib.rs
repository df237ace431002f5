//! Browser bindings. Every export returns a JSON string so the page can stay
//! plain JavaScript; errors come back as `{"error": "..."}`.

use serde::Serialize;
use serde_json::json;
use tsfl_core::aggregation::{dms_threshold, dms_weights, filtering_probability, spacing_slope};
use tsfl_core::error::Result;
use tsfl_core::experiment::ConstantOverrides;
use tsfl_core::rng::{stream_rng, Stream};
use tsfl_core::scheduler::{participation_frequency, run, sfl_round_time, DataSize, RunOptions, Scenario, Strategy};
use tsfl_core::types::SystemConstants;
use wasm_bindgen::prelude::*;

fn respond<T: Serialize>(f: impl FnOnce() -> Result<T>) -> String {
    match f() {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

#[derive(Serialize)]
struct DmsView {
    threshold: f64,
    slope: f64,
    filter_probability: Vec<f64>,
    beta: Vec<bool>,
    rho: Vec<f64>,
    clamped: bool,
}

/// One DMS aggregation for the given per-client iteration counts.
/// `slope_boost` multiplies G² so the spacing is visible at small N.
#[wasm_bindgen]
pub fn dms_explore(tau: Vec<u32>, seed: u32, slope_boost: f64) -> String {
    respond(|| {
        let n = tau.len();
        let h = tau.iter().copied().max().unwrap_or(1).max(1);
        let mut c = SystemConstants {
            num_clients: n,
            max_local_iters: h,
            ..SystemConstants::default()
        };
        c.grad_bound *= slope_boost.max(0.0).sqrt();
        let threshold = if n == 0 { 0.0 } else { dms_threshold(&tau) };
        let mut rng = stream_rng(seed as u64, Stream::Participation);
        let w = dms_weights(&tau, &c, &mut rng)?;
        Ok(DmsView {
            threshold,
            slope: spacing_slope(&c, n),
            filter_probability: tau.iter().map(|&t| filtering_probability(t, threshold, h)).collect(),
            beta: w.participating,
            rho: w.rho,
            clamped: w.clamped,
        })
    })
}

#[derive(Serialize)]
struct LatencyPoint {
    heterogeneity: f64,
    sfl: f64,
    tsfl: f64,
    ratio: f64,
}

/// Wall-clock of `rounds` synchronous rounds against `rounds` fixed intervals
/// for two-tier populations of growing heterogeneity.
#[wasm_bindgen]
pub fn latency_sweep(clients: usize, mean_rate: f64, max_delta: f64, steps: usize, required: u32, rounds: usize) -> String {
    respond(|| {
        let steps = steps.max(2);
        (0..steps)
            .map(|k| {
                let delta = max_delta * k as f64 / (steps - 1) as f64;
                let s = Scenario::two_tier(clients, mean_rate, delta)?;
                let sfl = rounds as f64 * sfl_round_time(&s, required)?;
                let tsfl = rounds as f64 * s.latency.interval_length;
                Ok(LatencyPoint { heterogeneity: delta, sfl, tsfl, ratio: tsfl / sfl })
            })
            .collect::<Result<Vec<_>>>()
    })
}

#[derive(Serialize)]
struct Curve {
    strategy: String,
    wall_clock: Vec<f64>,
    loss: Vec<f64>,
    participation: Vec<f64>,
}

/// Global loss per aggregation for a list of comma-separated strategies on a
/// preset scenario.
#[wasm_bindgen]
pub fn loss_curves(scenario: &str, clients: usize, intervals: usize, seed: u32, strategies: &str) -> String {
    respond(|| {
        let mut s = Scenario::preset(scenario, clients)?;
        for c in &mut s.clients {
            c.batch_size = 16;
            c.data_size = DataSize::Fixed { size: 256 };
        }
        let constants = ConstantOverrides {
            intervals: Some(intervals),
            ..Default::default()
        }
        .apply(clients);
        let opts = RunOptions::default();
        strategies
            .split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|name| {
                let strategy: Strategy = name.parse()?;
                let log = run(&s, strategy, &constants, seed as u64, &opts)?;
                Ok(Curve {
                    strategy: name.to_string(),
                    wall_clock: std::iter::once(0.0).chain(log.records.iter().map(|r| r.wall_clock)).collect(),
                    loss: std::iter::once(log.initial_loss).chain(log.records.iter().map(|r| r.global_loss)).collect(),
                    participation: participation_frequency(&log),
                })
            })
            .collect::<Result<Vec<_>>>()
    })
}
