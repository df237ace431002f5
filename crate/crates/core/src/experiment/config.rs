//! JSON run configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::run_seed;
use crate::scheduler::{DataSize, RunOptions, Scenario, Strategy, DEFAULT_CLIENTS};
use crate::training::TaskSpec;
use crate::types::SystemConstants;

/// A preset name or a fully specified scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Preset(String),
    Inline(Scenario),
}

/// Constants that override the documented defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantOverrides {
    pub eta: Option<f64>,
    pub smoothness: Option<f64>,
    pub grad_bound: Option<f64>,
    pub sigma: Option<f64>,
    pub theta: Option<f64>,
    pub max_local_iters: Option<u32>,
    pub intervals: Option<usize>,
    pub epsilon: Option<f64>,
    pub dissimilarity: Option<f64>,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
}

impl ConstantOverrides {
    pub fn apply(&self, num_clients: usize) -> SystemConstants {
        let d = SystemConstants::default();
        let eta = self.eta.unwrap_or(d.eta);
        let smoothness = self.smoothness.unwrap_or(d.smoothness);
        SystemConstants {
            eta,
            smoothness,
            grad_bound: self.grad_bound.unwrap_or(d.grad_bound),
            sigma: self.sigma.unwrap_or(d.sigma),
            theta: self
                .theta
                .unwrap_or_else(|| SystemConstants::equality_theta(eta, smoothness)),
            max_local_iters: self.max_local_iters.unwrap_or(d.max_local_iters),
            num_clients,
            intervals: self.intervals.unwrap_or(d.intervals),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            dissimilarity: self.dissimilarity.unwrap_or(d.dissimilarity),
            gamma: self.gamma.unwrap_or(d.gamma),
            mu: self.mu.unwrap_or(d.mu),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitFlags {
    pub csv: bool,
    pub json: bool,
    pub plot_data: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            csv: true,
            json: true,
            plot_data: true,
        }
    }
}

/// Settings for the latency comparison.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySweep {
    /// Heterogeneity degrees to sweep with two-tier populations; when empty
    /// the configured scenarios are compared instead.
    pub heterogeneity: Vec<f64>,
    /// Mean iterations per interval of the two-tier populations.
    pub mean_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scenario: Option<ScenarioRef>,
    #[serde(default)]
    pub scenarios: Vec<ScenarioRef>,
    #[serde(default)]
    pub strategy: Option<String>,
    #[serde(default)]
    pub strategies: Vec<String>,
    #[serde(default)]
    pub constants: ConstantOverrides,
    /// Replaces the task of preset scenarios.
    #[serde(default)]
    pub task: Option<TaskSpec>,
    /// Client count of preset scenarios.
    #[serde(default)]
    pub num_clients: Option<usize>,
    /// Fixed dataset size of preset clients.
    #[serde(default)]
    pub data_size: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Explicit seeds; otherwise `runs` seeds are derived from `master_seed`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub runs: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub emit: EmitFlags,
    #[serde(default)]
    pub options: RunOptions,
    #[serde(default)]
    pub latency: LatencySweep,
}

/// One (scenario, strategy, seed) run of an experiment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub scenario: Scenario,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Cell {
    /// File stem shared by the cell's outputs.
    pub fn id(&self) -> String {
        format!("{}__{}__{}", self.scenario.name, self.strategy, self.seed)
    }
}

/// 1-based line and column of the first occurrence of `needle` in `text`.
fn locate(text: &str, needle: &str) -> Option<(usize, usize)> {
    let offset = text.find(needle)?;
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |nl| offset - nl - 1) + 1;
    Some((line, column))
}

fn anchored(text: &str, needle: &str, message: String) -> Error {
    match locate(text, needle) {
        Some((line, column)) => Error::Config(format!("line {line}, column {column}: {message}")),
        None => Error::Config(message),
    }
}

impl RunConfig {
    /// Parses and validates a config document. Diagnostics carry the line of
    /// the offending entry where one exists.
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        config.validate(text)?;
        Ok(config)
    }

    fn validate(&self, text: &str) -> Result<()> {
        if self.strategy_names().is_empty() {
            return Err(Error::Config("line 1, column 1: no strategy given".into()));
        }
        for name in self.strategy_names() {
            if let Err(e) = name.parse::<Strategy>() {
                return Err(anchored(text, &format!("\"{name}\""), e.to_string()));
            }
        }
        if self.scenario_refs().is_empty() {
            return Err(Error::Config("line 1, column 1: no scenario given".into()));
        }
        for (r, s) in self.scenario_refs().iter().zip(self.resolve_scenarios_unchecked()) {
            let needle = match r {
                ScenarioRef::Preset(name) => format!("\"{name}\""),
                ScenarioRef::Inline(inline) => format!("\"{}\"", inline.name),
            };
            let s = s.map_err(|e| anchored(text, &needle, e.to_string()))?;
            s.validate().map_err(|e| anchored(text, &needle, e.to_string()))?;
            if s.name.contains("__") || s.name.contains(['/', '\\']) || s.name.is_empty() {
                return Err(anchored(text, &needle, format!("scenario name `{}` is not a valid file stem", s.name)));
            }
        }
        let c = self.constants(DEFAULT_CLIENTS);
        if !(c.eta > 0.0) || !(0.0..=1.0).contains(&c.gamma) || c.mu < 0.0 || c.intervals == 0 {
            return Err(anchored(
                text,
                "\"constants\"",
                "constants need η > 0, γ in [0, 1], μ ≥ 0 and at least one interval".into(),
            ));
        }
        if self.seeds.is_empty() && self.runs == Some(0) {
            return Err(anchored(text, "\"runs\"", "runs must be ≥ 1".into()));
        }
        if let Some(b) = self.options.buffer_size {
            if b == 0 {
                return Err(anchored(text, "\"buffer_size\"", "buffer_size must be ≥ 1".into()));
            }
        }
        Ok(())
    }

    pub fn strategy_names(&self) -> Vec<&str> {
        self.strategy
            .iter()
            .chain(&self.strategies)
            .map(String::as_str)
            .collect()
    }

    pub fn strategy_list(&self) -> Result<Vec<Strategy>> {
        self.strategy_names().into_iter().map(str::parse).collect()
    }

    fn scenario_refs(&self) -> Vec<&ScenarioRef> {
        self.scenario.iter().chain(&self.scenarios).collect()
    }

    fn resolve_scenarios_unchecked(&self) -> Vec<Result<Scenario>> {
        let n = self.num_clients.unwrap_or(DEFAULT_CLIENTS);
        self.scenario_refs()
            .into_iter()
            .map(|r| match r {
                ScenarioRef::Inline(s) => Ok(s.clone()),
                ScenarioRef::Preset(name) => Ok(self.customize_preset(Scenario::preset(name, n)?)),
            })
            .collect()
    }

    /// Applies the top-level task, data-size and batch-size settings to a
    /// built-in scenario.
    pub fn customize_preset(&self, mut s: Scenario) -> Scenario {
        if let Some(task) = &self.task {
            s.task = task.clone();
        }
        for c in &mut s.clients {
            if let Some(b) = self.batch_size {
                c.batch_size = b;
            }
            if let (Some(size), DataSize::Fixed { .. }) = (self.data_size, &c.data_size) {
                c.data_size = DataSize::Fixed { size };
            }
        }
        s
    }

    pub fn preset_clients(&self) -> usize {
        self.num_clients.unwrap_or(DEFAULT_CLIENTS)
    }

    pub fn scenario_list(&self) -> Result<Vec<Scenario>> {
        self.resolve_scenarios_unchecked().into_iter().collect()
    }

    /// Seeds of the matrix, explicit or derived from the master seed.
    pub fn seed_list(&self) -> Vec<u64> {
        if !self.seeds.is_empty() {
            return self.seeds.clone();
        }
        let master = self.master_seed.unwrap_or(0);
        (0..self.runs.unwrap_or(1) as u64).map(|k| run_seed(master, k)).collect()
    }

    pub fn constants(&self, num_clients: usize) -> SystemConstants {
        self.constants.apply(num_clients)
    }

    /// Run options with θ pinned to the equality point unless configured.
    pub fn run_options(&self) -> RunOptions {
        let mut opts = self.options.clone();
        if self.constants.theta.is_some() {
            opts.constants.theta_at_equality = false;
        }
        opts
    }

    /// Every (scenario × strategy × seed) cell in config order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let strategies = self.strategy_list()?;
        let seeds = self.seed_list();
        let mut cells = Vec::new();
        for scenario in self.scenario_list()? {
            for &strategy in &strategies {
                for &seed in &seeds {
                    cells.push(Cell {
                        scenario: scenario.clone(),
                        strategy,
                        seed,
                    });
                }
            }
        }
        Ok(cells)
    }

    /// Replaces the strategy list with a single strategy.
    pub fn override_strategy(&mut self, name: &str) -> Result<()> {
        name.parse::<Strategy>()?;
        self.strategy = Some(name.to_string());
        self.strategies.clear();
        Ok(())
    }

    /// Re-derives seeds from a new master seed, keeping their count.
    pub fn override_master_seed(&mut self, master: u64) {
        let count = if self.seeds.is_empty() { self.runs.unwrap_or(1) } else { self.seeds.len() };
        self.seeds.clear();
        self.master_seed = Some(master);
        self.runs = Some(count);
    }
}
