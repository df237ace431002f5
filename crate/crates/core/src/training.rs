//! Local SGD on synthetic tasks with known optima, and empirical estimation
//! of the smoothness, gradient and noise constants.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ParameterVector;

/// Declarative description of a synthetic task, as found in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    /// `F_i(w) = ½ (w − c_i)ᵀ A_i (w − c_i)` with `A_i` eigenvalues drawn in
    /// `[curvature_min, curvature_max]` and centers `c_i = base + spread · u_i`.
    Quadratic {
        dim: usize,
        curvature_min: f64,
        curvature_max: f64,
        /// Distance of each client center from the common base point.
        spread: f64,
        /// Standard deviation of per-sample center noise; 0 gives exact gradients.
        noise_std: f64,
        /// Distance of the start model from the base point.
        init_distance: f64,
    },
    /// Binary logistic regression with L2 penalty on Gaussian clusters.
    Logistic {
        dim: usize,
        /// Distance of each class mean from the origin.
        separation: f64,
        /// Norm of the client-specific cluster shift (non-IID degree).
        shift: f64,
        feature_std: f64,
        l2: f64,
    },
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec::Quadratic {
            dim: 10,
            curvature_min: 0.5,
            curvature_max: 1.5,
            spread: 0.5,
            noise_std: 1.0,
            init_distance: 3.0,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match *self {
            TaskSpec::Quadratic {
                dim,
                curvature_min,
                curvature_max,
                spread,
                noise_std,
                init_distance,
            } => {
                if dim == 0 {
                    return bad("quadratic task needs dim ≥ 1");
                }
                if !(curvature_min > 0.0 && curvature_max >= curvature_min) {
                    return bad("quadratic task needs 0 < curvature_min ≤ curvature_max");
                }
                if spread < 0.0 || noise_std < 0.0 || init_distance < 0.0 {
                    return bad("quadratic spread, noise_std, init_distance must be ≥ 0");
                }
            }
            TaskSpec::Logistic {
                dim,
                separation,
                shift,
                feature_std,
                l2,
            } => {
                if dim == 0 {
                    return bad("logistic task needs dim ≥ 1");
                }
                if !(l2 > 0.0) || feature_std < 0.0 || shift < 0.0 || separation < 0.0 {
                    return bad("logistic task needs l2 > 0 and non-negative scales");
                }
            }
        }
        Ok(())
    }

    /// Builds the task for clients with the given data sizes.
    pub fn build<R: Rng + ?Sized>(&self, data_sizes: &[usize], rng: &mut R) -> Result<SyntheticTask> {
        self.validate()?;
        if data_sizes.is_empty() {
            return Err(Error::EmptyClientSet);
        }
        match *self {
            TaskSpec::Quadratic {
                dim,
                curvature_min,
                curvature_max,
                spread,
                noise_std,
                init_distance,
            } => {
                let base = gaussian_vec(dim, rng);
                let clients = data_sizes
                    .iter()
                    .map(|&n| {
                        let curvature =
                            random_spd(dim, curvature_min, curvature_max, rng);
                        let dir = unit_vec(dim, rng);
                        let center: Vec<f64> =
                            base.iter().zip(&dir).map(|(b, u)| b + spread * u).collect();
                        let deviations = centered_noise(n, dim, noise_std, rng);
                        QuadraticClient::with_deviations(curvature, center.into(), deviations)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let dir = unit_vec(dim, rng);
                let initial: Vec<f64> = base
                    .iter()
                    .zip(&dir)
                    .map(|(b, u)| b + init_distance * u)
                    .collect();
                SyntheticTask::from_quadratics(clients, initial.into())
            }
            TaskSpec::Logistic {
                dim,
                separation,
                shift,
                feature_std,
                l2,
            } => {
                let axis = unit_vec(dim, rng);
                let clients = data_sizes
                    .iter()
                    .map(|&n| {
                        let offset = unit_vec(dim, rng);
                        let mut features = Vec::with_capacity(n * dim);
                        let mut labels = Vec::with_capacity(n);
                        for s in 0..n {
                            let y = if s % 2 == 0 { 1.0 } else { -1.0 };
                            for k in 0..dim {
                                let z = std_normal(rng);
                                features.push(
                                    y * separation * axis[k] + shift * offset[k] + feature_std * z,
                                );
                            }
                            labels.push(y);
                        }
                        LogisticClient::new(dim, features, labels, l2)
                    })
                    .collect::<Result<Vec<_>>>()?;
                SyntheticTask::from_logistic(clients, ParameterVector::zeros(dim))
            }
        }
    }
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn gaussian_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| std_normal(rng)).collect()
}

fn unit_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v = gaussian_vec(dim, rng);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `n × dim` Gaussian deviations with each coordinate's sample mean removed.
fn centered_noise<R: Rng + ?Sized>(n: usize, dim: usize, std: f64, rng: &mut R) -> Vec<f64> {
    if std == 0.0 || n == 0 {
        return vec![0.0; n * dim];
    }
    let mut z: Vec<f64> = (0..n * dim)
        .map(|_| std * std_normal(rng))
        .collect();
    for k in 0..dim {
        let mean = (0..n).map(|s| z[s * dim + k]).sum::<f64>() / n as f64;
        for s in 0..n {
            z[s * dim + k] -= mean;
        }
    }
    z
}

/// Random symmetric positive-definite matrix `Qᵀ diag(λ) Q` with λ in `[lo, hi]`.
fn random_spd<R: Rng + ?Sized>(dim: usize, lo: f64, hi: f64, rng: &mut R) -> DMatrix<f64> {
    let m = DMatrix::<f64>::from_fn(dim, dim, |_, _| std_normal(rng));
    let q = m.qr().q();
    let eig = DVector::from_fn(dim, |_, _| lo + (hi - lo) * rng.gen::<f64>());
    let a: DMatrix<f64> = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (&a + a.transpose()) * 0.5
}

fn largest_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticClient {
    curvature: DMatrix<f64>,
    center: ParameterVector,
    /// Row-major `n × d` sample deviations from the center; each column sums to 0.
    deviations: Vec<f64>,
    smoothness: f64,
}

impl QuadraticClient {
    /// Client whose samples all sit exactly on the center (noise-free gradients).
    pub fn exact(curvature: DMatrix<f64>, center: ParameterVector, data_size: usize) -> Result<Self> {
        let d = center.dim();
        Self::with_deviations(curvature, center, vec![0.0; data_size * d])
    }

    pub fn with_deviations(
        curvature: DMatrix<f64>,
        center: ParameterVector,
        deviations: Vec<f64>,
    ) -> Result<Self> {
        let d = center.dim();
        if curvature.nrows() != d || curvature.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: curvature.nrows(),
            });
        }
        if d == 0 || !deviations.len().is_multiple_of(d) || deviations.is_empty() {
            return Err(Error::InvalidArgument(
                "quadratic client needs at least one sample".into(),
            ));
        }
        if curvature.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument(
                "curvature matrix is not positive definite".into(),
            ));
        }
        let smoothness = largest_eigenvalue(&curvature);
        Ok(Self {
            curvature,
            center,
            deviations,
            smoothness,
        })
    }

    pub fn center(&self) -> &ParameterVector {
        &self.center
    }

    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.curvature
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = v.len();
        (0..d)
            .map(|r| (0..d).map(|c| self.curvature[(r, c)] * v[c]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticClient {
    dim: usize,
    /// Row-major `n × d` features.
    features: Vec<f64>,
    /// Labels in {−1, +1}.
    labels: Vec<f64>,
    l2: f64,
}

impl LogisticClient {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>, l2: f64) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim || labels.is_empty() {
            return Err(Error::InvalidArgument(
                "logistic client needs n ≥ 1 rows of dim features".into(),
            ));
        }
        Ok(Self {
            dim,
            features,
            labels,
            l2,
        })
    }

    fn row(&self, s: usize) -> &[f64] {
        &self.features[s * self.dim..(s + 1) * self.dim]
    }

    fn margin(&self, w: &[f64], s: usize) -> f64 {
        self.labels[s] * self.row(s).iter().zip(w).map(|(x, w)| x * w).sum::<f64>()
    }

    /// Upper bound on the smoothness constant, `l2 + λ_max(XᵀX)/(4n)`.
    fn smoothness_bound(&self) -> f64 {
        let n = self.labels.len();
        let x = DMatrix::from_row_slice(n, self.dim, &self.features);
        self.l2 + largest_eigenvalue(&(x.transpose() * x)) / (4.0 * n as f64)
    }

    fn hessian(&self, w: &[f64]) -> DMatrix<f64> {
        let n = self.labels.len();
        let mut h = DMatrix::identity(self.dim, self.dim) * self.l2;
        for s in 0..n {
            let p = sigmoid(self.margin(w, s));
            let weight = p * (1.0 - p) / n as f64;
            let x = self.row(s);
            for r in 0..self.dim {
                for c in 0..self.dim {
                    h[(r, c)] += weight * x[r] * x[c];
                }
            }
        }
        h
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^{−z}), stable for large |z|.
fn softplus_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// One client's local objective.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientObjective {
    Quadratic(QuadraticClient),
    Logistic(LogisticClient),
}

impl ClientObjective {
    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic(q) => q.center.dim(),
            Self::Logistic(l) => l.dim,
        }
    }

    pub fn data_size(&self) -> usize {
        match self {
            Self::Quadratic(q) => q.deviations.len() / q.center.dim(),
            Self::Logistic(l) => l.labels.len(),
        }
    }

    pub fn loss(&self, w: &ParameterVector) -> f64 {
        match self {
            Self::Quadratic(q) => {
                let diff = w.sub(&q.center);
                0.5 * diff.iter().zip(q.apply(&diff)).map(|(a, b)| a * b).sum::<f64>()
            }
            Self::Logistic(l) => {
                let n = l.labels.len();
                let data: f64 = (0..n).map(|s| softplus_neg(l.margin(w, s))).sum::<f64>() / n as f64;
                data + 0.5 * l.l2 * w.norm_sq()
            }
        }
    }

    /// Gradient over the whole local dataset.
    pub fn full_gradient(&self, w: &ParameterVector) -> ParameterVector {
        match self {
            Self::Quadratic(q) => q.apply(&w.sub(&q.center)).into(),
            Self::Logistic(l) => {
                let all: Vec<usize> = (0..l.labels.len()).collect();
                self.batch_gradient(w, &all)
            }
        }
    }

    /// Gradient of the loss restricted to the samples in `batch`.
    pub fn batch_gradient(&self, w: &ParameterVector, batch: &[usize]) -> ParameterVector {
        let d = self.dim();
        let b = batch.len() as f64;
        match self {
            Self::Quadratic(q) => {
                let mut shifted = w.sub(&q.center).into_inner();
                for &s in batch {
                    for k in 0..d {
                        shifted[k] -= q.deviations[s * d + k] / b;
                    }
                }
                q.apply(&shifted).into()
            }
            Self::Logistic(l) => {
                let mut g = vec![0.0; d];
                for &s in batch {
                    let coef = -l.labels[s] * sigmoid(-l.margin(w, s)) / b;
                    for (gk, xk) in g.iter_mut().zip(l.row(s)) {
                        *gk += coef * xk;
                    }
                }
                for (gk, wk) in g.iter_mut().zip(w.iter()) {
                    *gk += l.l2 * wk;
                }
                g.into()
            }
        }
    }

    fn exact_smoothness(&self) -> Option<f64> {
        match self {
            Self::Quadratic(q) => Some(q.smoothness),
            Self::Logistic(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Quadratic,
    Logistic,
}

/// A federated task: one local objective per client plus the cached optima.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    kind: TaskKind,
    dim: usize,
    clients: Vec<ClientObjective>,
    global_optimum: ParameterVector,
    local_optima: Vec<ParameterVector>,
    initial_model: ParameterVector,
}

impl SyntheticTask {
    pub fn from_quadratics(clients: Vec<QuadraticClient>, initial_model: ParameterVector) -> Result<Self> {
        let first = clients.first().ok_or(Error::EmptyClientSet)?;
        let dim = first.center.dim();
        initial_model.check_dim(dim)?;
        let mut sum_a = DMatrix::<f64>::zeros(dim, dim);
        let mut sum_ac = DVector::<f64>::zeros(dim);
        for q in &clients {
            q.center.check_dim(dim)?;
            sum_a += &q.curvature;
            sum_ac += &q.curvature * DVector::from_column_slice(q.center.as_slice());
        }
        let global = sum_a
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("summed curvature not positive definite".into()))?
            .solve(&sum_ac);
        let local_optima = clients.iter().map(|q| q.center.clone()).collect();
        Ok(Self {
            kind: TaskKind::Quadratic,
            dim,
            clients: clients.into_iter().map(ClientObjective::Quadratic).collect(),
            global_optimum: global.as_slice().to_vec().into(),
            local_optima,
            initial_model,
        })
    }

    pub fn from_logistic(clients: Vec<LogisticClient>, initial_model: ParameterVector) -> Result<Self> {
        let first = clients.first().ok_or(Error::EmptyClientSet)?;
        let dim = first.dim;
        initial_model.check_dim(dim)?;
        if clients.iter().any(|c| c.dim != dim) {
            return Err(Error::InvalidArgument("clients disagree on dimension".into()));
        }
        let objectives: Vec<ClientObjective> =
            clients.into_iter().map(ClientObjective::Logistic).collect();
        let global_optimum = newton_minimize(&objectives, &ParameterVector::zeros(dim))?;
        let local_optima = objectives
            .iter()
            .map(|o| newton_minimize(std::slice::from_ref(o), &global_optimum))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: TaskKind::Logistic,
            dim,
            clients: objectives,
            global_optimum,
            local_optima,
            initial_model,
        })
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn client(&self, i: usize) -> &ClientObjective {
        &self.clients[i]
    }

    pub fn clients(&self) -> &[ClientObjective] {
        &self.clients
    }

    /// Minimizer of the uniformly weighted global objective.
    pub fn global_optimum(&self) -> &ParameterVector {
        &self.global_optimum
    }

    pub fn local_optimum(&self, i: usize) -> &ParameterVector {
        &self.local_optima[i]
    }

    pub fn initial_model(&self) -> &ParameterVector {
        &self.initial_model
    }

    /// Γ_i = ‖w* − w_i*‖² for each client.
    pub fn noniid_degrees(&self) -> Vec<f64> {
        self.local_optima
            .iter()
            .map(|o| o.distance_sq(&self.global_optimum))
            .collect()
    }

    /// F(w) = (1/N) Σ F_i(w).
    pub fn global_loss(&self, w: &ParameterVector) -> f64 {
        self.clients.iter().map(|c| c.loss(w)).sum::<f64>() / self.clients.len() as f64
    }

    pub fn global_gradient(&self, w: &ParameterVector) -> ParameterVector {
        mean_gradient(&self.clients, w)
    }

    pub fn optimal_loss(&self) -> f64 {
        self.global_loss(&self.global_optimum)
    }
}

fn mean_gradient(objectives: &[ClientObjective], w: &ParameterVector) -> ParameterVector {
    let mut g = ParameterVector::zeros(w.dim());
    let scale = 1.0 / objectives.len() as f64;
    for o in objectives {
        g.axpy(scale, &o.full_gradient(w));
    }
    g
}

/// Damped Newton on the mean of strictly convex logistic objectives, to a
/// gradient norm below 1e-10.
fn newton_minimize(objectives: &[ClientObjective], start: &ParameterVector) -> Result<ParameterVector> {
    let loss = |w: &ParameterVector| objectives.iter().map(|o| o.loss(w)).sum::<f64>() / objectives.len() as f64;
    let mut w = start.clone();
    for _ in 0..200 {
        let g = mean_gradient(objectives, &w);
        if g.norm() < 1e-10 {
            return Ok(w);
        }
        let d = w.dim();
        let mut h = DMatrix::<f64>::zeros(d, d);
        for o in objectives {
            if let ClientObjective::Logistic(l) = o {
                h += l.hessian(&w);
            }
        }
        h /= objectives.len() as f64;
        let step = h
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("Hessian not positive definite".into()))?
            .solve(&DVector::from_column_slice(g.as_slice()));
        let step: ParameterVector = step.as_slice().to_vec().into();
        let f0 = loss(&w);
        let slope = g.dot(&step);
        // Near the optimum the decrease falls below rounding in f0; allow for it.
        let slack = 16.0 * f64::EPSILON * f0.abs();
        let mut t = 1.0;
        loop {
            let mut cand = w.clone();
            cand.axpy(-t, &step);
            if loss(&cand) <= f0 - 1e-4 * t * slope + slack || t < 1e-12 {
                w = cand;
                break;
            }
            t *= 0.5;
        }
    }
    let g = mean_gradient(objectives, &w);
    if g.norm() < 1e-8 {
        Ok(w)
    } else {
        Err(Error::NotConverged {
            iterations: 200,
            residual: g.norm(),
        })
    }
}

/// How a mini-batch is chosen for one stochastic gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum BatchSelector {
    /// `size` samples uniformly without replacement; the whole dataset, in
    /// order and without touching the rng, when `size ≥ |D_i|`.
    Random { size: usize },
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub stochastic: ParameterVector,
    pub full_batch: ParameterVector,
    pub batch: Vec<usize>,
}

pub fn stochastic_gradient<R: Rng + ?Sized>(
    task: &SyntheticTask,
    client: usize,
    w: &ParameterVector,
    selector: &BatchSelector,
    rng: &mut R,
) -> Result<GradientSample> {
    w.check_dim(task.dim)?;
    let objective = &task.clients[client];
    let n = objective.data_size();
    let batch = match selector {
        BatchSelector::Random { size } if *size >= n => (0..n).collect(),
        BatchSelector::Random { size } => {
            if *size == 0 {
                return Err(Error::InvalidArgument("batch size must be ≥ 1".into()));
            }
            index::sample(rng, n, *size).into_vec()
        }
        BatchSelector::Indices(ix) => {
            if ix.is_empty() || ix.iter().any(|&s| s >= n) {
                return Err(Error::InvalidArgument("batch index out of range".into()));
            }
            ix.clone()
        }
    };
    let full_batch = objective.full_gradient(w);
    let stochastic = if batch.len() == n && matches!(selector, BatchSelector::Random { .. }) {
        full_batch.clone()
    } else {
        objective.batch_gradient(w, &batch)
    };
    Ok(GradientSample {
        stochastic,
        full_batch,
        batch,
    })
}

/// Proximal term `μ/2 ‖w − center‖²` added to the local loss.
#[derive(Debug, Clone, Copy)]
pub struct Proximal<'a> {
    pub center: &'a ParameterVector,
    pub mu: f64,
}

/// Runs exactly `tau` SGD steps `w ← w − η (g + μ (w − center))` from `w_start`.
pub fn local_train<R: Rng + ?Sized>(
    task: &SyntheticTask,
    client: usize,
    w_start: &ParameterVector,
    tau: u32,
    eta: f64,
    batch_size: usize,
    prox: Option<Proximal<'_>>,
    rng: &mut R,
) -> Result<ParameterVector> {
    w_start.check_dim(task.dim)?;
    let selector = BatchSelector::Random { size: batch_size };
    let mut w = w_start.clone();
    for _ in 0..tau {
        let sample = stochastic_gradient(task, client, &w, &selector, rng)?;
        let mut step = sample.stochastic;
        if let Some(p) = prox.filter(|p| p.mu != 0.0) {
            step.axpy(p.mu, &w.sub(p.center));
        }
        w.axpy(-eta, &step);
    }
    w.ensure_finite("local SGD")?;
    Ok(w)
}

/// Ball from which probe points are drawn uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRegion {
    pub center: ParameterVector,
    pub radius: f64,
}

impl ProbeRegion {
    /// Smallest ball around the global optimum containing the start model and
    /// every local optimum.
    pub fn covering(task: &SyntheticTask) -> Self {
        let center = task.global_optimum.clone();
        let radius = task
            .local_optima
            .iter()
            .chain(std::iter::once(&task.initial_model))
            .map(|p| p.distance_sq(&center).sqrt())
            .fold(0.0, f64::max);
        Self {
            center,
            radius: radius.max(1e-6),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        let d = self.center.dim();
        let dir = unit_vec(d, rng);
        let r = self.radius * rng.gen::<f64>().powf(1.0 / d as f64);
        let mut p = self.center.clone();
        p.axpy(r, &dir.into());
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimates {
    pub smoothness: f64,
    pub grad_bound: f64,
    pub sigma: Vec<f64>,
    pub noniid: Vec<f64>,
}

impl ConstantEstimates {
    /// Common noise bound, the largest per-client σ_i.
    pub fn sigma_max(&self) -> f64 {
        self.sigma.iter().copied().fold(0.0, f64::max)
    }
}

/// Estimates L, G, σ_i and Γ_i by probing the task inside `region`.
pub fn estimate_constants<R: Rng + ?Sized>(
    task: &SyntheticTask,
    batch_sizes: &[usize],
    region: &ProbeRegion,
    probe_count: usize,
    rng: &mut R,
) -> Result<ConstantEstimates> {
    if probe_count == 0 {
        return Err(Error::InvalidArgument("probe_count must be ≥ 1".into()));
    }
    if batch_sizes.len() != task.num_clients() {
        return Err(Error::DimensionMismatch {
            expected: task.num_clients(),
            actual: batch_sizes.len(),
        });
    }
    let n = task.num_clients();
    let mut grad_bound = 0.0f64;
    let mut sigma = vec![0.0f64; n];
    let mut ratio = 0.0f64;
    for _ in 0..probe_count {
        let u = region.sample(rng);
        let v = region.sample(rng);
        for i in 0..n {
            let s = stochastic_gradient(task, i, &u, &BatchSelector::Random { size: batch_sizes[i] }, rng)?;
            grad_bound = grad_bound.max(s.stochastic.norm()).max(s.full_batch.norm());
            sigma[i] = sigma[i].max(s.stochastic.distance_sq(&s.full_batch).sqrt());
            let dist = u.distance_sq(&v).sqrt();
            if dist > 1e-12 {
                let gv = task.clients[i].full_gradient(&v);
                ratio = ratio.max(s.full_batch.distance_sq(&gv).sqrt() / dist);
            }
        }
    }
    let smoothness = match task.kind {
        TaskKind::Quadratic => task
            .clients
            .iter()
            .filter_map(ClientObjective::exact_smoothness)
            .fold(0.0, f64::max),
        TaskKind::Logistic => ratio,
    };
    Ok(ConstantEstimates {
        smoothness,
        grad_bound,
        sigma,
        noniid: task.noniid_degrees(),
    })
}

/// Analytic smoothness upper bound for logistic clients, used as step-size
/// guidance only.
pub fn logistic_smoothness_bound(task: &SyntheticTask) -> Option<f64> {
    task.clients
        .iter()
        .map(|c| match c {
            ClientObjective::Logistic(l) => Some(l.smoothness_bound()),
            ClientObjective::Quadratic(_) => None,
        })
        .try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v)))
}
