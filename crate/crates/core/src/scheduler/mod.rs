//! Interval clock, strategy dispatch and run-log production.
//!
//! Every run is a pure function of (scenario, strategy, constants, seed,
//! options). Randomness is split into per-purpose streams (see [`crate::rng`])
//! so that skipping a client's training never shifts anyone else's draws.

mod events;
mod scenario;

pub use events::{run_afl, run_semi_async, AflVariant};
pub use scenario::{
    apply_client_selection, ClientSpec, ComputePowerProcess, DataSize, LatencyModel, Scenario,
    DEFAULT_BATCH_SIZE, DEFAULT_CLIENTS, DEFAULT_DATA_SIZE, PRESETS,
};

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    aggregate, dms_weights_among, fedavg_weights, fedavg_weights_among,
    masked_bound_optimal_weights, spacing_weights, uniform_weights, BoundInputs, BoundOptimalForm,
    PastInterval, SolverOptions, WeightAssignment,
};
use crate::analysis::estimate_dissimilarity;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::training::{estimate_constants, local_train, ProbeRegion, Proximal, SyntheticTask};
use crate::types::{
    ClientProfile, ConstantSource, ConstantSources, IntervalRecord, ParameterVector, RunLog,
    SystemConstants,
};

/// Aggregation strategy, addressed by its configuration name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// FedAvg weights on the interval clock.
    #[serde(rename = "fedavg")]
    FedAvg,
    /// FedAvg weights with a proximal local objective.
    #[serde(rename = "fedprox")]
    FedProx,
    /// Event-driven asynchronous updates.
    #[serde(rename = "fedasync")]
    FedAsync,
    /// Buffered semi-asynchronous averaging.
    #[serde(rename = "semiasync")]
    SemiAsync,
    /// Conventional synchronous rounds with a fixed iteration count.
    #[serde(rename = "sfl")]
    Sfl,
    #[serde(rename = "tsfl-dms")]
    TsflDms,
    #[serde(rename = "tsfl-uniform")]
    TsflUniform,
    /// Iteration-spacing weights without filtering.
    #[serde(rename = "tsfl-corollary1")]
    TsflSpacing,
    /// Bound-optimal weights.
    #[serde(rename = "tsfl-theorem2")]
    TsflBoundOptimal,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::FedAvg,
        Strategy::FedProx,
        Strategy::FedAsync,
        Strategy::SemiAsync,
        Strategy::Sfl,
        Strategy::TsflDms,
        Strategy::TsflUniform,
        Strategy::TsflSpacing,
        Strategy::TsflBoundOptimal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::FedAvg => "fedavg",
            Strategy::FedProx => "fedprox",
            Strategy::FedAsync => "fedasync",
            Strategy::SemiAsync => "semiasync",
            Strategy::Sfl => "sfl",
            Strategy::TsflDms => "tsfl-dms",
            Strategy::TsflUniform => "tsfl-uniform",
            Strategy::TsflSpacing => "tsfl-corollary1",
            Strategy::TsflBoundOptimal => "tsfl-theorem2",
        }
    }

    /// Whether the strategy aggregates on the fixed interval clock.
    pub fn is_interval_rule(self) -> bool {
        !matches!(self, Strategy::FedAsync | Strategy::SemiAsync | Strategy::Sfl)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

/// Where L, G, σ, ε and V come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantPolicy {
    /// Replace L, G, σ, ε, V by estimates from probe points.
    pub estimate: bool,
    pub probes: usize,
    /// Set θ so that ηL(1+θ) = 1 with the resolved L.
    pub theta_at_equality: bool,
}

impl Default for ConstantPolicy {
    fn default() -> Self {
        Self {
            estimate: true,
            probes: 16,
            theta_at_equality: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    /// Iterations per synchronous round and per asynchronous dispatch;
    /// defaults to the fastest client's nominal per-interval count.
    pub required_iterations: Option<u32>,
    /// Models per semi-asynchronous aggregation; defaults to N/2.
    pub buffer_size: Option<usize>,
    pub afl_variant: AflVariant,
    pub bound_form: BoundOptimalForm,
    pub constants: ConstantPolicy,
}

impl RunOptions {
    pub fn required_iterations_for(&self, scenario: &Scenario) -> u32 {
        self.required_iterations.unwrap_or_else(|| {
            scenario
                .nominal_rates()
                .into_iter()
                .fold(1.0f64, f64::max)
                .ceil() as u32
        })
    }

    pub fn buffer_size_for(&self, scenario: &Scenario) -> usize {
        self.buffer_size.unwrap_or((scenario.num_clients() / 2).max(1))
    }
}

/// Everything a run needs before the first interval.
pub(crate) struct Setup {
    pub scenario: String,
    pub seed: u64,
    pub task: SyntheticTask,
    pub profiles: Vec<ClientProfile>,
    pub data_sizes: Vec<usize>,
    pub constants: SystemConstants,
    pub sources: ConstantSources,
    pub seconds_per_iteration: Vec<f64>,
    pub interval_length: f64,
    pub sampling: Vec<ChaCha8Rng>,
}

impl Setup {
    pub fn new(scenario: &Scenario, c: &SystemConstants, seed: u64, opts: &RunOptions) -> Result<Self> {
        scenario.validate()?;
        let n = scenario.num_clients();
        let data_sizes = scenario.draw_data_sizes(seed);
        let batch_sizes: Vec<usize> = scenario.clients.iter().map(|s| s.batch_size).collect();
        let task = scenario.build_task(seed)?;

        let mut k = c.clone();
        k.num_clients = n;
        k.max_local_iters = k.max_local_iters.max(scenario.typical_max_tau()).max(1);
        let mut sources = ConstantSources::default();
        let sigma = if opts.constants.estimate {
            let mut rng = stream_rng(seed, Stream::Probe);
            let region = ProbeRegion::covering(&task);
            let est = estimate_constants(&task, &batch_sizes, &region, opts.constants.probes, &mut rng)?;
            k.smoothness = est.smoothness;
            k.grad_bound = est.grad_bound;
            k.sigma = est.sigma_max();
            sources.smoothness = ConstantSource::Estimated;
            sources.grad_bound = ConstantSource::Estimated;
            sources.sigma = ConstantSource::Estimated;
            let probes: Vec<ParameterVector> =
                (0..opts.constants.probes).map(|_| region.sample(&mut rng)).collect();
            match estimate_dissimilarity(&task, &probes) {
                Ok(d) => {
                    k.epsilon = d.epsilon;
                    k.dissimilarity = d.v;
                    sources.epsilon = ConstantSource::Estimated;
                    sources.dissimilarity = ConstantSource::Estimated;
                }
                Err(Error::AllProbesSkipped) => {}
                Err(e) => return Err(e),
            }
            est.sigma
        } else {
            vec![k.sigma; n]
        };
        if opts.constants.theta_at_equality {
            k.theta = SystemConstants::equality_theta(k.eta, k.smoothness);
        }

        let noniid = task.noniid_degrees();
        let profiles = (0..n)
            .map(|i| ClientProfile {
                id: i + 1,
                data_size: data_sizes[i],
                batch_size: batch_sizes[i],
                sigma: sigma[i],
                noniid: noniid[i],
            })
            .collect();
        Ok(Self {
            scenario: scenario.name.clone(),
            seed,
            task,
            profiles,
            data_sizes,
            constants: k,
            sources,
            seconds_per_iteration: scenario.seconds_per_iteration()?,
            interval_length: scenario.latency.interval_length,
            sampling: (0..n).map(|i| stream_rng(seed, Stream::Sampling(i))).collect(),
        })
    }

    pub fn num_clients(&self) -> usize {
        self.profiles.len()
    }

    pub fn train(
        &mut self,
        client: usize,
        start: &ParameterVector,
        tau: u32,
        prox: Option<Proximal<'_>>,
    ) -> Result<ParameterVector> {
        let batch = self.profiles[client].batch_size;
        local_train(
            &self.task,
            client,
            start,
            tau,
            self.constants.eta,
            batch,
            prox,
            &mut self.sampling[client],
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &self,
        t: usize,
        tau: Vec<u32>,
        beta: Vec<bool>,
        rho: Vec<f64>,
        wall_clock: f64,
        clamped: bool,
        empty_aggregation: bool,
        model: &ParameterVector,
    ) -> IntervalRecord {
        IntervalRecord {
            t,
            tau,
            beta,
            rho,
            global_loss: self.task.global_loss(model),
            global_grad_norm_sq: self.task.global_gradient(model).norm_sq(),
            wall_clock,
            clamped,
            empty_aggregation,
            model: model.clone(),
        }
    }

    pub fn finish(self, strategy: Strategy, records: Vec<IntervalRecord>, arrivals: Vec<crate::types::Arrival>) -> RunLog {
        let initial = self.task.initial_model().clone();
        let mut constants = self.constants;
        let observed = records.iter().flat_map(|r| r.tau.iter().copied()).max().unwrap_or(0);
        constants.max_local_iters = constants.max_local_iters.max(observed);
        constants.intervals = records.len();
        let final_model = records.last().map_or_else(|| initial.clone(), |r| r.model.clone());
        RunLog {
            scenario: self.scenario,
            seed: self.seed,
            strategy: strategy.name().to_string(),
            constants,
            constant_sources: self.sources,
            clients: self.profiles,
            initial_loss: self.task.global_loss(&initial),
            initial_grad_norm_sq: self.task.global_gradient(&initial).norm_sq(),
            initial_model: initial,
            records,
            final_model,
            arrivals,
        }
    }
}

/// Runs any strategy; T is taken from `c.intervals`.
pub fn run(
    scenario: &Scenario,
    strategy: Strategy,
    c: &SystemConstants,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunLog> {
    match strategy {
        Strategy::Sfl => run_sfl(scenario, opts.required_iterations_for(scenario), c, seed, opts),
        Strategy::FedAsync => run_afl(scenario, c, seed, opts),
        Strategy::SemiAsync => run_semi_async(scenario, opts.buffer_size_for(scenario), c, seed, opts),
        _ => run_tsfl(scenario, strategy, c, seed, opts),
    }
}

/// Time-driven synchronous run: every interval each client trains for the
/// τ_i^t iterations it manages, then the server aggregates.
pub fn run_tsfl(
    scenario: &Scenario,
    strategy: Strategy,
    c: &SystemConstants,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunLog> {
    if !strategy.is_interval_rule() {
        return Err(Error::InvalidArgument(format!("{strategy} does not run on the interval clock")));
    }
    let mut setup = Setup::new(scenario, c, seed, opts)?;
    let n = setup.num_clients();
    let mut compute: Vec<ChaCha8Rng> = (0..n).map(|i| stream_rng(seed, Stream::Compute(i))).collect();
    let mut participation = stream_rng(seed, Stream::Participation);
    let w_star = setup.task.global_optimum().clone();
    let initial_distance_sq = setup.task.initial_model().distance_sq(&w_star);
    let sigma: Vec<f64> = setup.profiles.iter().map(|p| p.sigma).collect();
    let noniid: Vec<f64> = setup.profiles.iter().map(|p| p.noniid).collect();

    let mut w = setup.task.initial_model().clone();
    let mut history: Vec<PastInterval> = Vec::new();
    let mut records = Vec::with_capacity(c.intervals);
    for t in 0..c.intervals {
        let tau: Vec<u32> = scenario
            .clients
            .iter()
            .zip(compute.iter_mut())
            .map(|(spec, rng)| spec.compute.draw(t, rng))
            .collect();
        let eligible: Vec<bool> = tau.iter().map(|&x| x >= scenario.min_iterations).collect();

        let mut models = Vec::with_capacity(n);
        for i in 0..n {
            let prox = (strategy == Strategy::FedProx).then_some(Proximal {
                center: &w,
                mu: setup.constants.mu,
            });
            models.push(if eligible[i] {
                setup.train(i, &w, tau[i], prox)?
            } else {
                w.clone()
            });
        }

        let assignment = if eligible.iter().any(|&e| e) {
            let k = &setup.constants;
            let result = match strategy {
                Strategy::FedAvg | Strategy::FedProx => fedavg_weights_among(&setup.data_sizes, &eligible),
                Strategy::TsflUniform => uniform_weights(&eligible),
                Strategy::TsflSpacing => spacing_weights(&tau, &eligible, k),
                Strategy::TsflDms => dms_weights_among(&tau, &eligible, k, &mut participation),
                Strategy::TsflBoundOptimal => {
                    let inputs = BoundInputs {
                        constants: k,
                        sigma: &sigma,
                        noniid: &noniid,
                        initial_distance_sq,
                        history: &history,
                    };
                    masked_bound_optimal_weights(&tau, &eligible, &inputs, opts.bound_form, SolverOptions::default())
                        .map(|(a, _)| a)
                }
                _ => unreachable!("checked by is_interval_rule"),
            };
            match result {
                Ok(a) => Some(a),
                Err(Error::NoParticipants) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let wall_clock = (t + 1) as f64 * setup.interval_length;
        let record = match assignment {
            Some(WeightAssignment { rho, participating, clamped, .. }) => {
                w = aggregate(&models, &rho)?;
                setup.record(t, tau, participating, rho, wall_clock, clamped, false, &w)
            }
            None => setup.record(t, tau, vec![false; n], vec![0.0; n], wall_clock, false, true, &w),
        };
        history.push(PastInterval {
            tau: record.tau.clone(),
            rho: record.rho.clone(),
            beta: record.beta.clone(),
        });
        records.push(record);
    }
    Ok(setup.finish(strategy, records, Vec::new()))
}

/// Duration of one synchronous round: the slowest client's time for
/// `required_iterations` plus the upload overhead.
pub fn sfl_round_time(scenario: &Scenario, required_iterations: u32) -> Result<f64> {
    let spi = scenario.seconds_per_iteration()?;
    let slowest = spi.iter().copied().fold(0.0, f64::max);
    Ok(required_iterations as f64 * slowest + scenario.latency.overhead)
}

/// Conventional synchronous run: every client performs exactly
/// `required_iterations` steps per round and the server waits for all.
pub fn run_sfl(
    scenario: &Scenario,
    required_iterations: u32,
    c: &SystemConstants,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunLog> {
    if required_iterations == 0 {
        return Err(Error::InvalidArgument("required_iterations must be ≥ 1".into()));
    }
    let mut setup = Setup::new(scenario, c, seed, opts)?;
    let n = setup.num_clients();
    let round_time = sfl_round_time(scenario, required_iterations)?;
    let weights = fedavg_weights(&setup.data_sizes)?;
    let mut w = setup.task.initial_model().clone();
    let mut records = Vec::with_capacity(c.intervals);
    for r in 0..c.intervals {
        let models = (0..n)
            .map(|i| setup.train(i, &w, required_iterations, None))
            .collect::<Result<Vec<_>>>()?;
        w = aggregate(&models, &weights.rho)?;
        records.push(setup.record(
            r,
            vec![required_iterations; n],
            vec![true; n],
            weights.rho.clone(),
            (r + 1) as f64 * round_time,
            false,
            false,
            &w,
        ));
    }
    Ok(setup.finish(Strategy::Sfl, records, Vec::new()))
}

/// Fraction of records in which each client participated.
pub fn participation_frequency(log: &RunLog) -> Vec<f64> {
    let n = log.clients.len();
    let mut counts = vec![0usize; n];
    for rec in &log.records {
        for (c, &b) in counts.iter_mut().zip(&rec.beta) {
            *c += b as usize;
        }
    }
    let total = log.records.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}
