//! The computations behind each subcommand, returning plain data so that the
//! CLI and the test suites share them. Parallel loops collect their results in
//! index order, so outputs do not depend on the worker count.

use cpsl_core::cluster::{
    cluster_exhaustive, gibbs_cluster, heuristic_clustering, random_clustering, ClusteringOutcome, GibbsOutcome,
};
use cpsl_core::cut::{evaluate_cell, summarize, CutSelection};
use cpsl_core::env::{sample_devices, DeviceState, EnvSpec};
use cpsl_core::latency::{
    cpsl_round_latency, fl_round_latency, vanilla_sl_round_latency, RoundLatency, Scheme,
};
use cpsl_core::profile::CutProfile;
use cpsl_core::rng::{derive_seed, rng_from_seed, stream};
use cpsl_core::spectrum::SpectrumAllocation;
use cpsl_core::train::{run_training, TrainMetrics, TrainScheme};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Loaded, ProfileMode};
use crate::error::SimResult;

/// Per-round latencies reported alongside the simulator's own numbers.
pub const REFERENCE_CPSL_S: f64 = 3.78;
pub const REFERENCE_SL_S: f64 = 13.90;
pub const REFERENCE_FL_S: f64 = 33.43;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub cut: usize,
    pub layer: String,
    pub xi_d_bits: f64,
    pub xi_s_bits: f64,
    pub xi_g_bits: f64,
    pub gamma_d_f: f64,
    pub gamma_d_b: f64,
    pub gamma_s_f: f64,
    pub gamma_s_b: f64,
    pub source: String,
}

pub fn profile_table(loaded: &Loaded, mode: ProfileMode) -> SimResult<Vec<ProfileRow>> {
    let overridden = loaded.model.overrides()?;
    Ok(loaded
        .profiles_in(mode)?
        .into_iter()
        .map(|p| ProfileRow {
            cut: p.cut,
            layer: loaded.model.layer_name(p.cut),
            xi_d_bits: p.xi_d,
            xi_s_bits: p.xi_s,
            xi_g_bits: p.xi_g,
            gamma_d_f: p.gamma_d_f,
            gamma_d_b: p.gamma_d_b,
            gamma_s_f: p.gamma_s_f,
            gamma_s_b: p.gamma_s_b,
            source: if mode == ProfileMode::Override && overridden.contains_key(&p.cut) { "override" } else { "computed" }
                .to_string(),
        })
        .collect())
}

/// The device population a single-realisation command evaluates: the mean
/// devices when the scenario has no randomness, else one seeded draw.
pub fn population(loaded: &Loaded, env: &EnvSpec) -> SimResult<Vec<DeviceState>> {
    if loaded.scenario.env.is_deterministic() {
        Ok(env.mean_devices())
    } else {
        Ok(sample_devices(env, derive_seed(loaded.seed(), stream::DEVICES, 1))?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpslPlan {
    pub outcome: GibbsOutcome,
    pub round: RoundLatency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub cut: usize,
    pub devices: Vec<DeviceState>,
    pub cpsl: Option<CpslPlan>,
    pub sl: Option<RoundLatency>,
    pub fl: Option<RoundLatency>,
}

impl LatencyReport {
    pub fn total(&self, scheme: Scheme) -> Option<f64> {
        match scheme {
            Scheme::Cpsl => self.cpsl.as_ref().map(|c| c.round.total),
            Scheme::VanillaSl => self.sl.as_ref().map(|r| r.total),
            Scheme::Fl => self.fl.as_ref().map(|r| r.total),
        }
    }
}

/// Gibbs-optimised CPSL round at `profile`.
pub fn plan_cpsl(loaded: &Loaded, devices: &[DeviceState], profile: &CutProfile, env: &EnvSpec) -> SimResult<CpslPlan> {
    let outcome = gibbs_cluster(devices, profile, env, &loaded.scenario.gibbs.params(loaded.gibbs_seed()))?;
    let round = cpsl_round_latency(&outcome.best.assignment, &outcome.best.allocations, devices, profile, env)?;
    Ok(CpslPlan { outcome, round })
}

pub fn evaluate_latency(loaded: &Loaded) -> SimResult<LatencyReport> {
    let env = loaded.env()?;
    let devices = population(loaded, &env)?;
    let cut = loaded.scenario.cut;
    let profile = loaded.profile(cut)?;
    let full = loaded.profile(loaded.model.layers.len())?;
    let schemes = &loaded.scenario.schemes;
    let cpsl = schemes.contains(&Scheme::Cpsl).then(|| plan_cpsl(loaded, &devices, &profile, &env)).transpose()?;
    let sl = schemes.contains(&Scheme::VanillaSl).then(|| vanilla_sl_round_latency(&devices, &profile, &env)).transpose()?;
    let fl = schemes.contains(&Scheme::Fl).then(|| fl_round_latency(&devices, &full, &env)).transpose()?;
    Ok(LatencyReport { cut, devices, cpsl, sl, fl })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub scheme: String,
    pub cluster: usize,
    pub device: usize,
    pub subcarriers: usize,
    pub tau_b: f64,
    pub tau_d: f64,
    pub tau_s: f64,
    pub tau_g: f64,
    pub tau_u: f64,
    pub tau_t: f64,
    pub tau_e: f64,
    pub d_start: f64,
    pub d_inner: f64,
    pub d_end: f64,
    pub cluster_total: f64,
}

pub fn component_rows(report: &LatencyReport) -> Vec<ComponentRow> {
    let rounds = [report.cpsl.as_ref().map(|c| &c.round), report.sl.as_ref(), report.fl.as_ref()];
    let mut rows = Vec::new();
    for round in rounds.into_iter().flatten() {
        for (m, c) in round.clusters.iter().enumerate() {
            for d in &c.devices {
                rows.push(ComponentRow {
                    scheme: round.scheme.label().to_string(),
                    cluster: m,
                    device: d.device,
                    subcarriers: d.subcarriers,
                    tau_b: d.tau_b,
                    tau_d: d.tau_d,
                    tau_s: d.tau_s,
                    tau_g: d.tau_g,
                    tau_u: d.tau_u,
                    tau_t: d.tau_t,
                    tau_e: c.tau_e,
                    d_start: c.d_start,
                    d_inner: c.d_inner,
                    d_end: c.d_end,
                    cluster_total: c.total,
                });
            }
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeLatency {
    pub scheme: String,
    pub latency_s: f64,
    pub reference_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub cut: usize,
    pub layer: String,
    pub n_devices: usize,
    pub n_clusters: usize,
    pub schemes: Vec<SchemeLatency>,
}

pub fn latency_summary(loaded: &Loaded, report: &LatencyReport) -> LatencySummary {
    let reference = |s: Scheme| match s {
        Scheme::Cpsl => REFERENCE_CPSL_S,
        Scheme::VanillaSl => REFERENCE_SL_S,
        Scheme::Fl => REFERENCE_FL_S,
    };
    let schemes = [Scheme::Cpsl, Scheme::VanillaSl, Scheme::Fl]
        .into_iter()
        .filter_map(|s| {
            report.total(s).map(|t| SchemeLatency { scheme: s.label().to_string(), latency_s: t, reference_s: reference(s) })
        })
        .collect();
    LatencySummary {
        cut: report.cut,
        layer: loaded.model.layer_name(report.cut),
        n_devices: report.devices.len(),
        n_clusters: report.cpsl.as_ref().map_or(0, |c| c.outcome.best.assignment.n_clusters()),
        schemes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutRow {
    pub cut: usize,
    pub layer: String,
    pub mean_latency_s: f64,
    pub std_s: f64,
    pub p95_s: f64,
}

/// Sample-average cut selection over the scenario's candidate cuts, with the
/// (sample, cut) grid evaluated in parallel.
pub fn sweep_cut(loaded: &Loaded) -> SimResult<(CutSelection, Vec<CutRow>)> {
    let env = loaded.env()?;
    let saa = loaded.saa();
    saa.validate()?;
    let all = loaded.profiles()?;
    let profiles: Vec<CutProfile> = match &loaded.scenario.saa.cuts {
        Some(cuts) => cuts.iter().map(|&c| all[c - 1]).collect(),
        None => all,
    };
    let populations =
        (0..saa.j_samples).into_par_iter().map(|j| saa.population(&env, j)).collect::<Result<Vec<_>, _>>()?;
    let cells: Vec<(usize, usize)> =
        (0..profiles.len()).flat_map(|v| (0..saa.j_samples).map(move |j| (v, j))).collect();
    let values = cells
        .par_iter()
        .map(|&(v, j)| evaluate_cell(&populations[j], &profiles[v], &env, &saa.chain(j)))
        .collect::<Result<Vec<_>, _>>()?;
    let grid: Vec<Vec<f64>> = values.chunks(saa.j_samples).map(<[f64]>::to_vec).collect();
    let cuts: Vec<usize> = profiles.iter().map(|p| p.cut).collect();
    let sel = summarize(&cuts, &grid)?;
    let rows = sel
        .table
        .iter()
        .map(|s| CutRow {
            cut: s.cut,
            layer: loaded.model.layer_name(s.cut),
            mean_latency_s: s.mean,
            std_s: s.std,
            p95_s: s.p95,
        })
        .collect();
    Ok((sel, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub devices: Vec<DeviceState>,
    pub gibbs: GibbsOutcome,
    pub oracle: Option<ClusteringOutcome>,
}

pub fn optimize(loaded: &Loaded, oracle: bool) -> SimResult<OptimizeReport> {
    let env = loaded.env()?;
    let devices = population(loaded, &env)?;
    let profile = loaded.profile(loaded.scenario.cut)?;
    let gibbs = gibbs_cluster(&devices, &profile, &env, &loaded.scenario.gibbs.params(loaded.gibbs_seed()))?;
    let oracle = oracle.then(|| cluster_exhaustive(&devices, &profile, &env)).transpose()?;
    Ok(OptimizeReport { devices, gibbs, oracle })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignmentDoc {
    pub cut: usize,
    pub theta_s: f64,
    pub initial_theta_s: f64,
    pub clusters: Vec<ClusterDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_theta_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterDoc {
    pub devices: Vec<usize>,
    pub subcarriers: Vec<usize>,
}

pub fn assignment_doc(loaded: &Loaded, r: &OptimizeReport) -> AssignmentDoc {
    AssignmentDoc {
        cut: loaded.scenario.cut,
        theta_s: r.gibbs.best.theta,
        initial_theta_s: r.gibbs.initial_theta,
        clusters: r.gibbs.best.allocations.iter().map(cluster_doc).collect(),
        oracle_theta_s: r.oracle.as_ref().map(|o| o.theta),
    }
}

fn cluster_doc(a: &SpectrumAllocation) -> ClusterDoc {
    ClusterDoc { devices: a.devices().to_vec(), subcarriers: a.counts().to_vec() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Random,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub seed: u64,
    pub subcarriers: usize,
    pub proposed_s: f64,
    pub random_s: f64,
    pub heuristic_s: f64,
}

/// Gibbs clustering against both benchmarks on `seeds` independent
/// populations (master seeds `seed, seed + 1, ...`).
pub fn compare_baselines(loaded: &Loaded, seeds: usize) -> SimResult<Vec<BaselineRow>> {
    let base = loaded.seed();
    (0..seeds as u64)
        .into_par_iter()
        .map(|s| {
            let seed = base.wrapping_add(s);
            let l = loaded.clone().with(|sc| sc.seed = seed)?;
            let env = l.env()?;
            let devices = sample_devices(&env, derive_seed(seed, stream::DEVICES, 1))?;
            let profile = l.profile(l.scenario.cut)?;
            let proposed = gibbs_cluster(&devices, &profile, &env, &l.scenario.gibbs.params(l.gibbs_seed()))?.best.theta;
            let mut rng = rng_from_seed(derive_seed(seed, stream::BASELINE, 0));
            let random = random_clustering(&devices, &profile, &env, l.scenario.baseline_allocation, &mut rng)?.theta;
            let heuristic = heuristic_clustering(&devices, &profile, &env, l.scenario.baseline_allocation)?.theta;
            Ok(BaselineRow { seed, subcarriers: env.subcarriers, proposed_s: proposed, random_s: random, heuristic_s: heuristic })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub subcarriers: usize,
    pub bandwidth_mhz: f64,
    pub seeds: usize,
    pub proposed_mean_s: f64,
    pub random_mean_s: f64,
    pub heuristic_mean_s: f64,
    /// `1 - proposed / random`.
    pub gain_vs_random: f64,
    pub gain_vs_heuristic: f64,
}

pub fn summarize_baselines(rows: &[BaselineRow], subcarrier_bandwidth_mhz: f64) -> BaselineSummary {
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&BaselineRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let p = mean(|r| r.proposed_s);
    let r = mean(|r| r.random_s);
    let h = mean(|r| r.heuristic_s);
    let c = rows.first().map_or(0, |r| r.subcarriers);
    BaselineSummary {
        subcarriers: c,
        bandwidth_mhz: c as f64 * subcarrier_bandwidth_mhz,
        seeds: rows.len(),
        proposed_mean_s: p,
        random_mean_s: r,
        heuristic_mean_s: h,
        gain_vs_random: 1.0 - p / r,
        gain_vs_heuristic: 1.0 - p / h,
    }
}

/// Baseline comparison repeated for each subcarrier count.
pub fn bandwidth_sweep(loaded: &Loaded, subcarriers: &[usize], seeds: usize) -> SimResult<Vec<(BaselineSummary, Vec<BaselineRow>)>> {
    subcarriers
        .iter()
        .map(|&c| {
            let l = loaded.clone().with(|s| s.env.subcarriers = c)?;
            let rows = compare_baselines(&l, seeds)?;
            Ok((summarize_baselines(&rows, l.scenario.env.subcarrier_bandwidth_mhz), rows))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub simulated_elapsed_s: Option<f64>,
}

pub fn metrics_rows(m: &TrainMetrics) -> Vec<MetricsRow> {
    m.rounds
        .iter()
        .map(|r| MetricsRow {
            round: r.round,
            loss: r.loss,
            train_acc: r.train_acc,
            test_acc: r.test_acc,
            simulated_elapsed_s: r.elapsed,
        })
        .collect()
}

/// Simulated per-round latency of a training scheme under the scenario's
/// network; centralized training has none.
pub fn scheme_round_latency(report: &LatencyReport, scheme: TrainScheme) -> Option<f64> {
    match scheme {
        TrainScheme::Cpsl => report.total(Scheme::Cpsl),
        TrainScheme::Sl => report.total(Scheme::VanillaSl),
        TrainScheme::Fl => report.total(Scheme::Fl),
        TrainScheme::Cl => None,
    }
}

/// Trains every scheme with shared seeds; elapsed time comes from the
/// latency model evaluated on the scenario.
pub fn train(loaded: &Loaded, schemes: &[TrainScheme]) -> SimResult<Vec<TrainMetrics>> {
    let latency = loaded.clone().with(|s| s.schemes = vec![Scheme::Cpsl, Scheme::VanillaSl, Scheme::Fl])?;
    let report = evaluate_latency(&latency)?;
    let cfg = loaded.trainer();
    schemes
        .par_iter()
        .map(|&s| Ok(run_training(s, &cfg, scheme_round_latency(&report, s))?))
        .collect()
}

/// Flat checkpoint: layer-major, row-major weights then biases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub scheme: TrainScheme,
    pub widths: Vec<usize>,
    pub parameters: Vec<f64>,
}

pub fn checkpoint(loaded: &Loaded, m: &TrainMetrics) -> Checkpoint {
    Checkpoint { scheme: m.scheme, widths: loaded.trainer().widths(), parameters: m.model.flatten() }
}
