use alloc::vec::Vec;

use super::data::{generate, partition_non_iid, BatchSampler, Dataset, DatasetSpec};
use super::model::{accuracy, fedavg, nll_loss, LayerGrad, SplitModel, Stack, Trace};
use super::tensor::Matrix;
use crate::cluster::ClusterAssignment;
use crate::error::{bail, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum TrainScheme {
    Cpsl,
    Sl,
    Fl,
    Cl,
}

impl TrainScheme {
    pub const ALL: [TrainScheme; 4] = [TrainScheme::Cl, TrainScheme::Sl, TrainScheme::Cpsl, TrainScheme::Fl];

    pub fn label(&self) -> &'static str {
        match self {
            TrainScheme::Cpsl => "CPSL",
            TrainScheme::Sl => "SL",
            TrainScheme::Fl => "FL",
            TrainScheme::Cl => "CL",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainerConfig {
    /// Device-side learning rate.
    pub eta_d: f64,
    /// Server-side learning rate.
    pub eta_e: f64,
    pub batch: usize,
    pub local_epochs: usize,
    pub rounds: usize,
    /// Cut layer `v`; `v = V` leaves the server without layers.
    pub cut: usize,
    pub hidden: Vec<usize>,
    pub n_devices: usize,
    pub cluster_capacity: usize,
    /// Explicit clustering; devices in index order when absent.
    pub assignment: Option<ClusterAssignment>,
    pub seed: u64,
    pub data: DatasetSpec,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            eta_d: 0.05,
            eta_e: 0.25,
            batch: 16,
            local_epochs: 1,
            rounds: 100,
            cut: 1,
            hidden: alloc::vec![16, 16],
            n_devices: 30,
            cluster_capacity: 5,
            assignment: None,
            seed: 0,
            data: DatasetSpec::default(),
        }
    }
}

impl TrainerConfig {
    /// Layer widths from input to logits.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = alloc::vec![self.data.dims];
        w.extend_from_slice(&self.hidden);
        w.push(self.data.n_classes);
        w
    }

    pub fn n_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_d > 0.0 && self.eta_e > 0.0) {
            bail!(Validation, "learning rates must be positive");
        }
        if self.batch == 0 || self.local_epochs == 0 {
            bail!(Validation, "batch and local_epochs must be at least 1");
        }
        if self.hidden.contains(&0) {
            bail!(Validation, "hidden layers need at least one unit");
        }
        if self.cut == 0 || self.cut > self.n_layers() {
            bail!(Validation, "cut {} outside 1..={}", self.cut, self.n_layers());
        }
        if self.n_devices == 0 || self.cluster_capacity == 0 {
            bail!(Validation, "need at least one device and one device per cluster");
        }
        if self.data.samples_per_device < self.batch {
            bail!(Validation, "devices hold {} samples, fewer than a batch of {}", self.data.samples_per_device, self.batch);
        }
        self.data.validate()?;
        self.assignment().validate(self.n_devices)
    }

    pub fn assignment(&self) -> ClusterAssignment {
        self.assignment.clone().unwrap_or_else(|| ClusterAssignment::chunked(self.n_devices, self.cluster_capacity))
    }

    pub fn initial_model(&self) -> Stack {
        Stack::init(&self.widths(), &mut rng_from_seed(derive_seed(self.seed, stream::MODEL_INIT, 0)))
    }
}

/// Seeded data, device partitions and per-device batch streams.
#[derive(Debug, Clone)]
pub struct Federation {
    pub train: Dataset,
    pub test: Dataset,
    pub parts: Vec<Vec<usize>>,
    samplers: Vec<BatchSampler>,
}

impl Federation {
    pub fn new(cfg: &TrainerConfig) -> Result<Self> {
        let (train, test) = generate(&cfg.data, cfg.n_devices, cfg.seed)?;
        let parts = partition_non_iid(&train, cfg.n_devices, cfg.data.classes_per_device, cfg.data.samples_per_device, cfg.seed)?;
        Ok(Self::from_parts(train, test, parts, cfg.seed))
    }

    pub fn from_parts(train: Dataset, test: Dataset, parts: Vec<Vec<usize>>, seed: u64) -> Self {
        let samplers = parts
            .iter()
            .enumerate()
            .map(|(n, p)| BatchSampler::new(p.clone(), derive_seed(seed, stream::BATCHES, n as u64)))
            .collect();
        Self { train, test, parts, samplers }
    }

    pub fn n_devices(&self) -> usize {
        self.parts.len()
    }

    /// Next minibatch of device `n`.
    pub fn batch(&mut self, n: usize, b: usize) -> Result<(Matrix, Vec<usize>)> {
        let idx = self.samplers[n].next_batch(b)?;
        Ok((self.train.x.select_rows(&idx), idx.iter().map(|&i| self.train.y[i]).collect()))
    }

    /// Union of every device's local data.
    pub fn pooled(&self) -> Dataset {
        let all: Vec<usize> = self.parts.iter().flatten().copied().collect();
        self.train.subset(&all)
    }
}

/// Device-side forward pass; the output is the smashed data.
pub fn forward_device(device: &Stack, x: &Matrix) -> Result<Trace> {
    device.forward(x)
}

/// Server forward on the row-concatenation of the smashed data (device order).
pub fn forward_server_concat(server: &Stack, smashed: &[Matrix]) -> Result<Trace> {
    if smashed.is_empty() {
        bail!(Validation, "no smashed data");
    }
    server.forward(&Matrix::vstack(smashed)?)
}

/// Result of one split backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitGrads {
    /// Mean loss over all concatenated rows.
    pub loss: f64,
    pub server: Vec<LayerGrad>,
    /// Gradient of each device's own minibatch-mean loss w.r.t. its smashed data.
    pub smashed: Vec<Matrix>,
    pub device: Vec<Vec<LayerGrad>>,
}

/// Backward pass of one parallel step.
///
/// The server gradient is that of the mean loss over the `sum_k B_k`
/// concatenated rows. Each device gets back its own rows, rescaled so that
/// they are the gradient of its local minibatch-mean loss, and runs the
/// chain rule through its part.
pub fn backward_split(
    server: &Stack,
    server_trace: &Trace,
    devices: &[&Stack],
    device_traces: &[Trace],
    labels: &[Vec<usize>],
) -> Result<SplitGrads> {
    if devices.len() != device_traces.len() || devices.len() != labels.len() {
        bail!(Shape, "{} device parts, {} traces and {} label sets", devices.len(), device_traces.len(), labels.len());
    }
    let flat: Vec<usize> = labels.iter().flatten().copied().collect();
    let total = flat.len() as f64;
    let (loss, dlogits) = nll_loss(&server_trace.output, &flat, total)?;
    let (server_grads, d_smashed) = server.backward(server_trace, &dlogits)?;
    let mut smashed = Vec::with_capacity(devices.len());
    let mut device = Vec::with_capacity(devices.len());
    let mut start = 0;
    for ((part, trace), y) in devices.iter().zip(device_traces).zip(labels) {
        let rows = y.len();
        let mut g = d_smashed.slice_rows(start, start + rows);
        g.scale(total / rows as f64);
        let (grads, _) = part.backward(trace, &g)?;
        device.push(grads);
        smashed.push(g);
        start += rows;
    }
    Ok(SplitGrads { loss, server: server_grads, smashed, device })
}

/// One CPSL round: clusters train one after another. Inside a cluster every
/// device starts from the current device-side model, the devices run
/// `local_epochs` parallel steps against the shared server-side model, and
/// their models are merged with FedAvg before the hand-off to the next
/// cluster. The server-side model persists across clusters. Returns the mean
/// training loss of the round's steps.
pub fn run_cpsl_round(
    model: &mut SplitModel,
    assignment: &ClusterAssignment,
    fed: &mut Federation,
    cfg: &TrainerConfig,
) -> Result<f64> {
    assignment.validate(fed.n_devices())?;
    let mut loss_sum = 0.0;
    let mut steps = 0usize;
    for members in assignment.clusters() {
        let mut parts: Vec<Stack> = members.iter().map(|_| model.device.clone()).collect();
        for _ in 0..cfg.local_epochs {
            let mut traces = Vec::with_capacity(members.len());
            let mut labels = Vec::with_capacity(members.len());
            for (part, &n) in parts.iter().zip(members) {
                let (x, y) = fed.batch(n, cfg.batch)?;
                traces.push(forward_device(part, &x)?);
                labels.push(y);
            }
            let smashed: Vec<Matrix> = traces.iter().map(|t| t.output.clone()).collect();
            let server_trace = forward_server_concat(&model.server, &smashed)?;
            let refs: Vec<&Stack> = parts.iter().collect();
            let grads = backward_split(&model.server, &server_trace, &refs, &traces, &labels)?;
            model.server.apply(&grads.server, cfg.eta_e)?;
            for (part, g) in parts.iter_mut().zip(&grads.device) {
                part.apply(g, cfg.eta_d)?;
            }
            loss_sum += grads.loss;
            steps += 1;
        }
        let weights: Vec<f64> = members.iter().map(|&n| fed.parts[n].len() as f64).collect();
        model.device = fedavg(&parts, &weights)?;
    }
    Ok(loss_sum / steps.max(1) as f64)
}

/// One step of sequential split training on a single batch.
fn split_step(device: &mut Stack, server: &mut Stack, x: &Matrix, y: &[usize], cfg: &TrainerConfig) -> Result<f64> {
    let dt = device.forward(x)?;
    let st = server.forward(&dt.output)?;
    let (loss, dlogits) = nll_loss(&st.output, y, y.len() as f64)?;
    let (sg, ds) = server.backward(&st, &dlogits)?;
    server.apply(&sg, cfg.eta_e)?;
    let (dg, _) = device.backward(&dt, &ds)?;
    device.apply(&dg, cfg.eta_d)?;
    Ok(loss)
}

/// Vanilla SL round: devices visit the server one after another, each running
/// `local_epochs` steps and handing its device-side model to the next.
pub fn run_sl_round(model: &mut SplitModel, fed: &mut Federation, cfg: &TrainerConfig) -> Result<f64> {
    let mut loss = 0.0;
    let mut steps = 0usize;
    for n in 0..fed.n_devices() {
        for _ in 0..cfg.local_epochs {
            let (x, y) = fed.batch(n, cfg.batch)?;
            loss += split_step(&mut model.device, &mut model.server, &x, &y, cfg)?;
            steps += 1;
        }
    }
    Ok(loss / steps.max(1) as f64)
}

/// FL round: every device trains the whole model locally for
/// `local_epochs` steps at the device learning rate; FedAvg merges them.
pub fn run_fl_round(model: &mut Stack, fed: &mut Federation, cfg: &TrainerConfig) -> Result<f64> {
    let mut locals = Vec::with_capacity(fed.n_devices());
    let mut loss = 0.0;
    let mut steps = 0usize;
    for n in 0..fed.n_devices() {
        let mut local = model.clone();
        for _ in 0..cfg.local_epochs {
            let (x, y) = fed.batch(n, cfg.batch)?;
            let t = local.forward(&x)?;
            let (l, dlogits) = nll_loss(&t.output, &y, y.len() as f64)?;
            let (g, _) = local.backward(&t, &dlogits)?;
            local.apply(&g, cfg.eta_d)?;
            loss += l;
            steps += 1;
        }
        locals.push(local);
    }
    let weights: Vec<f64> = fed.parts.iter().map(|p| p.len() as f64).collect();
    *model = fedavg(&locals, &weights)?;
    Ok(loss / steps.max(1) as f64)
}

/// Per-round training record.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundMetrics {
    pub round: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Simulated wall-clock at the end of the round, when a per-round
    /// latency was supplied.
    pub elapsed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainMetrics {
    pub scheme: TrainScheme,
    pub rounds: Vec<RoundMetrics>,
    /// Final model, unsplit.
    pub model: Stack,
}

impl TrainMetrics {
    pub fn final_test_acc(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.test_acc)
    }

    /// Simulated time at which test accuracy first reaches `fraction` of its
    /// final value.
    pub fn time_to_fraction(&self, fraction: f64) -> Option<f64> {
        let target = fraction * self.final_test_acc();
        self.rounds.iter().find(|r| r.test_acc >= target).and_then(|r| r.elapsed)
    }
}

fn evaluate(model: &Stack, data: &Dataset) -> Result<f64> {
    Ok(accuracy(&model.predict(&data.x)?, &data.y))
}

/// `rounds` rounds of `scheme` on the seeded synthetic non-IID task.
///
/// CL trains the unsplit model on the pooled data with the same split
/// learning rates, `N * local_epochs` minibatch steps per round.
pub fn run_training(scheme: TrainScheme, cfg: &TrainerConfig, round_latency: Option<f64>) -> Result<TrainMetrics> {
    cfg.validate()?;
    let mut fed = Federation::new(cfg)?;
    let pooled = fed.pooled();
    let init = cfg.initial_model();
    let assignment = cfg.assignment();
    let mut split = init.clone().split(cfg.cut)?;
    let mut whole = init;
    let mut cl_sampler = BatchSampler::new((0..pooled.len()).collect(), derive_seed(cfg.seed, stream::BATCHES, u64::MAX));
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for t in 1..=cfg.rounds {
        let loss = match scheme {
            TrainScheme::Cpsl => run_cpsl_round(&mut split, &assignment, &mut fed, cfg)?,
            TrainScheme::Sl => run_sl_round(&mut split, &mut fed, cfg)?,
            TrainScheme::Fl => run_fl_round(&mut whole, &mut fed, cfg)?,
            TrainScheme::Cl => {
                let mut sum = 0.0;
                let steps = fed.n_devices() * cfg.local_epochs;
                for _ in 0..steps {
                    let idx = cl_sampler.next_batch(cfg.batch)?;
                    let x = pooled.x.select_rows(&idx);
                    let y: Vec<usize> = idx.iter().map(|&i| pooled.y[i]).collect();
                    sum += split_step(&mut split.device, &mut split.server, &x, &y, cfg)?;
                }
                sum / steps as f64
            }
        };
        if !loss.is_finite() {
            log::warn!("{} loss diverged in round {}", scheme.label(), t);
        }
        let current = match scheme {
            TrainScheme::Fl => whole.clone(),
            _ => split.clone().merge(),
        };
        rounds.push(RoundMetrics {
            round: t,
            loss,
            train_acc: evaluate(&current, &pooled)?,
            test_acc: evaluate(&current, &fed.test)?,
            elapsed: round_latency.map(|d| d * t as f64),
        });
    }
    let model = match scheme {
        TrainScheme::Fl => whole,
        _ => split.merge(),
    };
    Ok(TrainMetrics { scheme, rounds, model })
}
