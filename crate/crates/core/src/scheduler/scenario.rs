//! Client populations: compute-power processes, data sizes, latency and the
//! built-in presets.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::training::{SyntheticTask, TaskSpec};

/// Generator of a client's per-interval iteration count τ_i^t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComputePowerProcess {
    Fixed { tau: u32 },
    /// `max(0, ⌊N(mean, std)⌋)` drawn independently each interval.
    GaussianFloor { mean: f64, std: f64 },
    /// A client completing `rate` iterations per interval on average:
    /// `τ^t = ⌊(t+1)·rate⌋ − ⌊t·rate⌋`.
    Rate { rate: f64 },
}

impl ComputePowerProcess {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Fixed { .. } => Ok(()),
            Self::GaussianFloor { mean, std } if mean.is_finite() && std >= 0.0 => Ok(()),
            Self::Rate { rate } if rate >= 0.0 && rate.is_finite() => Ok(()),
            _ => Err(Error::Config(format!("invalid compute process {self:?}"))),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> u32 {
        match *self {
            Self::Fixed { tau } => tau,
            Self::GaussianFloor { mean, std } => {
                let z: f64 = rng.sample(StandardNormal);
                (mean + std * z).floor().max(0.0) as u32
            }
            Self::Rate { rate } => {
                let t = t as f64;
                (((t + 1.0) * rate).floor() - (t * rate).floor()) as u32
            }
        }
    }

    /// Nominal iterations per interval, which sets the client's speed.
    pub fn nominal_rate(&self) -> f64 {
        match *self {
            Self::Fixed { tau } => tau as f64,
            Self::GaussianFloor { mean, .. } => mean,
            Self::Rate { rate } => rate,
        }
    }

    /// Largest τ the process is expected to produce, used to size H up front.
    pub fn typical_max(&self) -> u32 {
        match *self {
            Self::Fixed { tau } => tau,
            Self::GaussianFloor { mean, std } => (mean + 4.0 * std).floor().max(0.0) as u32,
            Self::Rate { rate } => rate.ceil() as u32,
        }
    }
}

/// How a client's dataset size is chosen (once per run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSize {
    Fixed { size: usize },
    /// `⌊N(mean, std)⌋`, raised to the batch size if smaller.
    GaussianFloor { mean: f64, std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSpec {
    pub compute: ComputePowerProcess,
    pub data_size: DataSize,
    pub batch_size: usize,
}

/// Wall-clock model. A client's speed is `interval_length / nominal_rate`
/// seconds per iteration unless given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    pub interval_length: f64,
    /// Upload and aggregation time added to each synchronous round.
    #[serde(default)]
    pub overhead: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds_per_iteration: Option<Vec<f64>>,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            interval_length: 1.0,
            overhead: 0.0,
            seconds_per_iteration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub clients: Vec<ClientSpec>,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default)]
    pub task: TaskSpec,
    /// Clients completing fewer iterations than this in an interval do not
    /// upload.
    #[serde(default)]
    pub min_iterations: u32,
}

pub const DEFAULT_CLIENTS: usize = 20;
pub const DEFAULT_DATA_SIZE: usize = 1024;
pub const DEFAULT_BATCH_SIZE: usize = 32;

/// Built-in scenario names.
pub const PRESETS: [&str; 5] = ["homogeneous", "case1", "case2", "case3", "two_tier"];

fn client(compute: ComputePowerProcess) -> ClientSpec {
    ClientSpec {
        compute,
        data_size: DataSize::Fixed { size: DEFAULT_DATA_SIZE },
        batch_size: DEFAULT_BATCH_SIZE,
    }
}

/// Tier index of client `i` when `n` clients are split into `parts` equal
/// consecutive groups.
fn tier(i: usize, n: usize, parts: usize) -> usize {
    (i * parts / n).min(parts - 1)
}

impl Scenario {
    fn from_processes(name: &str, processes: impl IntoIterator<Item = ComputePowerProcess>) -> Self {
        Self {
            name: name.to_string(),
            clients: processes.into_iter().map(client).collect(),
            latency: LatencyModel::default(),
            task: TaskSpec::default(),
            min_iterations: 0,
        }
    }

    /// Every client completes `tau` iterations per interval.
    pub fn homogeneous(n: usize, tau: u32) -> Self {
        Self::from_processes("homogeneous", (0..n).map(|_| ComputePowerProcess::Fixed { tau }))
    }

    /// Half the clients at τ = 1, half at τ = 4.
    pub fn case1(n: usize) -> Self {
        Self::from_processes(
            "case1",
            (0..n).map(|i| ComputePowerProcess::Fixed { tau: [1, 4][tier(i, n, 2)] }),
        )
    }

    /// Quarters at τ = 1, 2, 3, 4.
    pub fn case2(n: usize) -> Self {
        Self::from_processes(
            "case2",
            (0..n).map(|i| ComputePowerProcess::Fixed { tau: tier(i, n, 4) as u32 + 1 }),
        )
    }

    /// Quarters with τ ~ ⌊N(2,0.4)⌋ … ⌊N(5,1)⌋ and fifths with
    /// |D| ~ ⌊N(512,100)⌋ … ⌊N(1536,300)⌋.
    pub fn case3(n: usize) -> Self {
        const TAU: [(f64, f64); 4] = [(2.0, 0.4), (3.0, 0.6), (4.0, 0.8), (5.0, 1.0)];
        const DATA: [(f64, f64); 5] = [
            (512.0, 100.0),
            (768.0, 150.0),
            (1024.0, 200.0),
            (1280.0, 250.0),
            (1536.0, 300.0),
        ];
        let mut s = Self::from_processes(
            "case3",
            (0..n).map(|i| {
                let (mean, std) = TAU[tier(i, n, 4)];
                ComputePowerProcess::GaussianFloor { mean, std }
            }),
        );
        for (i, c) in s.clients.iter_mut().enumerate() {
            let (mean, std) = DATA[tier(i, n, 5)];
            c.data_size = DataSize::GaussianFloor { mean, std };
        }
        s
    }

    /// Two equal halves running at `mean ∓ √δ` iterations per interval, so the
    /// heterogeneity degree is exactly δ while the mean speed stays fixed.
    pub fn two_tier(n: usize, mean: f64, delta: f64) -> Result<Self> {
        if !n.is_multiple_of(2) || delta < 0.0 || delta.sqrt() > mean {
            return Err(Error::InvalidArgument(format!(
                "two-tier scenario needs even n and 0 ≤ √δ ≤ mean (n={n}, δ={delta})"
            )));
        }
        let spread = delta.sqrt();
        Ok(Self::from_processes(
            "two_tier",
            (0..n).map(|i| ComputePowerProcess::Rate {
                rate: if i < n / 2 { mean - spread } else { mean + spread },
            }),
        ))
    }

    /// Looks up a built-in scenario. `two_tier` uses mean 2.5 and δ = 2.25.
    pub fn preset(name: &str, n: usize) -> Result<Self> {
        match name {
            "homogeneous" => Ok(Self::homogeneous(n, 4)),
            "case1" => Ok(Self::case1(n)),
            "case2" => Ok(Self::case2(n)),
            "case3" => Ok(Self::case3(n)),
            "two_tier" => Self::two_tier(n, 2.5, 2.25),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(Error::EmptyClientSet);
        }
        for (i, c) in self.clients.iter().enumerate() {
            c.compute.validate()?;
            if c.batch_size == 0 {
                return Err(Error::Config(format!("client {i}: batch_size must be ≥ 1")));
            }
            if let DataSize::Fixed { size } = c.data_size {
                if size < c.batch_size {
                    return Err(Error::Config(format!(
                        "client {i}: batch_size {} exceeds data_size {size}",
                        c.batch_size
                    )));
                }
            }
        }
        if !(self.latency.interval_length > 0.0) || self.latency.overhead < 0.0 {
            return Err(Error::Config("latency needs interval_length > 0 and overhead ≥ 0".into()));
        }
        if let Some(spi) = &self.latency.seconds_per_iteration {
            if spi.len() != self.clients.len() || spi.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::Config(
                    "seconds_per_iteration needs one positive entry per client".into(),
                ));
            }
        }
        self.task.validate()
    }

    /// Seconds one local iteration takes on each client.
    pub fn seconds_per_iteration(&self) -> Result<Vec<f64>> {
        if let Some(spi) = &self.latency.seconds_per_iteration {
            return Ok(spi.clone());
        }
        self.clients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let rate = c.compute.nominal_rate();
                if rate > 0.0 {
                    Ok(self.latency.interval_length / rate)
                } else {
                    Err(Error::Config(format!(
                        "client {i} has zero nominal speed; give seconds_per_iteration explicitly"
                    )))
                }
            })
            .collect()
    }

    /// Dataset sizes for one run, drawn from the seed's data-size stream.
    pub fn draw_data_sizes(&self, seed: u64) -> Vec<usize> {
        let mut rng = stream_rng(seed, Stream::DataSize);
        self.clients
            .iter()
            .map(|c| match c.data_size {
                DataSize::Fixed { size } => size,
                DataSize::GaussianFloor { mean, std } => {
                    let z: f64 = rng.sample(StandardNormal);
                    ((mean + std * z).floor().max(0.0) as usize).max(c.batch_size)
                }
            })
            .collect()
    }

    /// The synthetic task a run with this seed trains on.
    pub fn build_task(&self, seed: u64) -> Result<SyntheticTask> {
        self.task.build(&self.draw_data_sizes(seed), &mut stream_rng(seed, Stream::Task))
    }

    /// Largest τ expected from any client.
    pub fn typical_max_tau(&self) -> u32 {
        self.clients.iter().map(|c| c.compute.typical_max()).max().unwrap_or(0)
    }

    /// Per-client nominal iterations per interval.
    pub fn nominal_rates(&self) -> Vec<f64> {
        self.clients.iter().map(|c| c.compute.nominal_rate()).collect()
    }
}

/// Wraps `scenario` so that clients completing fewer than `min_iterations`
/// iterations in an interval are excluded before weights are computed.
pub fn apply_client_selection(scenario: &Scenario, min_iterations: u32) -> Scenario {
    Scenario {
        min_iterations: scenario.min_iterations.max(min_iterations),
        ..scenario.clone()
    }
}
