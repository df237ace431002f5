//! Event-driven baselines. Each client trains from the global model it last
//! received and reports back after `required_iterations × seconds_per_iteration`;
//! the server never pushes a newer model mid-training. Records are cut at
//! interval boundaries so the logs line up with the interval-clock runs.

use serde::{Deserialize, Serialize};

use super::{RunOptions, Scenario, Setup, Strategy};
use crate::aggregation::fedasync_update;
use crate::error::{Error, Result};
use crate::types::{Arrival, IntervalRecord, ParameterVector, RunLog, SystemConstants};

/// How an asynchronous arrival is blended into the global model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AflVariant {
    /// `w ← γ w + (1 − γ) · mean of every client's latest model`.
    #[default]
    LatestMean,
    /// `w ← γ w + (1 − γ) w_i` with the arriving model only.
    PerArrival,
}

/// Next arrival: earliest completion time, ties broken by client index.
fn next_arrival(due: &[f64]) -> (usize, f64) {
    due.iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, t)| if t < best.1 { (i, t) } else { best })
}

/// Per-interval bookkeeping of which clients' models reached the global model.
struct IntervalTally {
    count: Vec<usize>,
    iterations: Vec<u32>,
}

impl IntervalTally {
    fn new(n: usize) -> Self {
        Self {
            count: vec![0; n],
            iterations: vec![0; n],
        }
    }

    fn add(&mut self, client: usize, iterations: u32) {
        self.count[client] += 1;
        self.iterations[client] += iterations;
    }

    fn close(&mut self, setup: &Setup, t: usize, model: &ParameterVector) -> IntervalRecord {
        let n = self.count.len();
        let total: usize = self.count.iter().sum();
        let wall_clock = (t + 1) as f64 * setup.interval_length;
        let tally = std::mem::replace(self, Self::new(n));
        if total == 0 {
            return setup.record(t, tally.iterations, vec![false; n], vec![0.0; n], wall_clock, false, true, model);
        }
        let beta = tally.count.iter().map(|&c| c > 0).collect();
        let rho = tally.count.iter().map(|&c| c as f64 / total as f64).collect();
        setup.record(t, tally.iterations, beta, rho, wall_clock, false, false, model)
    }
}

/// Shared event loop. `on_batch` receives every arrival sharing one timestamp,
/// already trained, updates the global model and tallies the models it used.
/// Each arriving client is then re-dispatched with the current global model.
fn event_loop<F>(
    scenario: &Scenario,
    strategy: Strategy,
    c: &SystemConstants,
    seed: u64,
    opts: &RunOptions,
    mut on_batch: F,
) -> Result<RunLog>
where
    F: FnMut(&mut ParameterVector, &[(usize, ParameterVector)], &mut IntervalTally, u32) -> Result<()>,
{
    let mut setup = Setup::new(scenario, c, seed, opts)?;
    let n = setup.num_clients();
    let iterations = opts.required_iterations_for(scenario);
    if iterations == 0 {
        return Err(Error::InvalidArgument("required_iterations must be ≥ 1".into()));
    }
    let duration: Vec<f64> = setup
        .seconds_per_iteration
        .iter()
        .map(|s| iterations as f64 * s)
        .collect();
    let interval = setup.interval_length;
    let boundary = |t: usize| (t + 1) as f64 * interval * (1.0 + 1e-12);

    let mut w = setup.task.initial_model().clone();
    let mut start: Vec<ParameterVector> = vec![w.clone(); n];
    let mut due = duration.clone();
    let mut tally = IntervalTally::new(n);
    let mut records = Vec::with_capacity(c.intervals);
    let mut arrivals = Vec::new();

    while records.len() < c.intervals {
        let (_, time) = next_arrival(&due);
        if time > boundary(records.len()) {
            records.push(tally.close(&setup, records.len(), &w));
            continue;
        }
        let mut batch = Vec::new();
        loop {
            let (i, t) = next_arrival(&due);
            if t != time {
                break;
            }
            let model = setup.train(i, &start[i], iterations, None)?;
            arrivals.push(Arrival { time, client: i });
            batch.push((i, model));
            due[i] = f64::INFINITY;
        }
        on_batch(&mut w, &batch, &mut tally, iterations)?;
        for (i, _) in &batch {
            start[*i] = w.clone();
            due[*i] = time + duration[*i];
        }
    }
    Ok(setup.finish(strategy, records, arrivals))
}

/// Asynchronous run: the server blends every arrival into the global model
/// immediately.
pub fn run_afl(scenario: &Scenario, c: &SystemConstants, seed: u64, opts: &RunOptions) -> Result<RunLog> {
    if !(0.0..=1.0).contains(&c.gamma) {
        return Err(Error::InvalidArgument(format!("gamma {} outside [0, 1]", c.gamma)));
    }
    let gamma = c.gamma;
    let variant = opts.afl_variant;
    let n = scenario.num_clients();
    let mut latest: Option<Vec<ParameterVector>> = None;
    event_loop(scenario, Strategy::FedAsync, c, seed, opts, move |w, batch, tally, iters| {
        let latest = latest.get_or_insert_with(|| vec![w.clone(); n]);
        for (i, model) in batch {
            *w = match variant {
                AflVariant::LatestMean => {
                    latest[*i] = model.clone();
                    fedasync_update(w, latest, gamma)?
                }
                AflVariant::PerArrival => fedasync_update(w, std::slice::from_ref(model), gamma)?,
            };
            tally.add(*i, iters);
        }
        Ok(())
    })
}

/// Semi-asynchronous run: arrivals are buffered and averaged uniformly into
/// the global model whenever `buffer_size` of them have accumulated.
pub fn run_semi_async(
    scenario: &Scenario,
    buffer_size: usize,
    c: &SystemConstants,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunLog> {
    if buffer_size == 0 || buffer_size > scenario.num_clients() {
        return Err(Error::InvalidArgument(format!(
            "buffer_size {buffer_size} outside [1, {}]",
            scenario.num_clients()
        )));
    }
    let mut buffer: Vec<(usize, ParameterVector)> = Vec::with_capacity(buffer_size);
    event_loop(scenario, Strategy::SemiAsync, c, seed, opts, move |w, batch, tally, iters| {
        for (i, model) in batch {
            buffer.push((*i, model.clone()));
            if buffer.len() == buffer_size {
                let scale = 1.0 / buffer_size as f64;
                let mut mean = ParameterVector::zeros(w.dim());
                for (j, m) in buffer.drain(..) {
                    mean.axpy(scale, &m);
                    tally.add(j, iters);
                }
                mean.ensure_finite("semi-asynchronous aggregation")?;
                *w = mean;
            }
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn next_arrival_breaks_ties_by_index() {
        assert_eq!(next_arrival(&[2.0, 1.0, 1.0]), (1, 1.0));
        assert_eq!(next_arrival(&[f64::INFINITY, 3.0]), (1, 3.0));
    }
}
