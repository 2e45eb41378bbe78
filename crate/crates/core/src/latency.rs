//! Phase-structured training latency.
//!
//! A cluster's round is a starting phase (model broadcast through the first
//! server update), `L - 1` identical inner phases and an ending phase (last
//! gradient download through model upload). Each phase waits for the slowest
//! device of the cluster. Clusters run one after another, so the CPSL round is
//! the sum of the per-cluster latencies. Model aggregation is free.

use alloc::vec::Vec;

use crate::cluster::ClusterAssignment;
use crate::env::{subcarrier_rate, DeviceState, EnvSpec};
use crate::error::{bail, Result};
use crate::profile::CutProfile;
use crate::spectrum::SpectrumAllocation;

/// Per-device latency components of one cluster round, seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComponentLatencies {
    pub device: usize,
    pub subcarriers: usize,
    /// Device-side model broadcast over all subcarriers.
    pub tau_b: f64,
    /// Device-side forward pass on a minibatch.
    pub tau_d: f64,
    /// Smashed-data upload.
    pub tau_s: f64,
    /// Smashed-data gradient download.
    pub tau_g: f64,
    /// Device-side backward pass.
    pub tau_u: f64,
    /// Device-side model upload.
    pub tau_t: f64,
}

impl ComponentLatencies {
    pub fn starting(&self) -> f64 {
        self.tau_b + self.tau_d + self.tau_s
    }

    pub fn inner(&self) -> f64 {
        self.tau_g + self.tau_u + self.tau_d + self.tau_s
    }

    pub fn ending(&self) -> f64 {
        self.tau_g + self.tau_u + self.tau_t
    }
}

/// One cluster's latency, per device and per phase.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatencyBreakdown {
    pub devices: Vec<ComponentLatencies>,
    /// Server forward + backward on the concatenated smashed data.
    pub tau_e: f64,
    pub d_start: f64,
    pub d_inner: f64,
    pub d_end: f64,
    pub local_epochs: usize,
    /// `d_start + (L - 1) d_inner + d_end`.
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Scheme {
    #[cfg_attr(feature = "serde", serde(rename = "CPSL"))]
    Cpsl,
    #[cfg_attr(feature = "serde", serde(rename = "SL"))]
    VanillaSl,
    #[cfg_attr(feature = "serde", serde(rename = "FL"))]
    Fl,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Cpsl => "CPSL",
            Scheme::VanillaSl => "SL",
            Scheme::Fl => "FL",
        }
    }
}

/// One training round of a scheme.
///
/// For FL there is a single entry whose starting phase holds the whole
/// round (download, local training, upload) and whose other phases are zero.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundLatency {
    pub scheme: Scheme,
    pub clusters: Vec<LatencyBreakdown>,
    pub total: f64,
}

fn device_rate(device: &DeviceState, env: &EnvSpec) -> f64 {
    subcarrier_rate(device.snr_db, env.subcarrier_bandwidth)
}

/// Latency components of `device` holding `x` subcarriers.
pub fn component_latencies(
    device: &DeviceState,
    profile: &CutProfile,
    x: usize,
    env: &EnvSpec,
) -> Result<ComponentLatencies> {
    if x < 1 {
        bail!(Domain, "device {} needs at least one subcarrier", device.id);
    }
    let rate = device_rate(device, env);
    let b = env.batch as f64;
    let xf = x as f64;
    let compute = device.f * env.kappa;
    Ok(ComponentLatencies {
        device: device.id,
        subcarriers: x,
        tau_b: profile.xi_d / (env.subcarriers as f64 * rate),
        tau_d: b * profile.gamma_d_f / compute,
        tau_s: b * profile.xi_s / (xf * rate),
        tau_g: profile.xi_g / (xf * rate),
        tau_u: b * profile.gamma_d_b / compute,
        tau_t: profile.xi_d / (xf * rate),
    })
}

/// Server-side forward and backward on `k_m * B` concatenated samples.
pub fn server_latency(k_m: usize, profile: &CutProfile, env: &EnvSpec) -> f64 {
    (k_m * env.batch) as f64 * (profile.gamma_s_f + profile.gamma_s_b) / (env.server_f * env.kappa)
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

/// Starting, inner and ending phase latencies of one cluster.
pub fn phase_latencies(
    cluster: &[DeviceState],
    profile: &CutProfile,
    alloc: &SpectrumAllocation,
    env: &EnvSpec,
) -> Result<LatencyBreakdown> {
    if cluster.is_empty() {
        bail!(Validation, "cluster has no devices");
    }
    if alloc.len() != cluster.len() {
        bail!(Validation, "allocation covers {} devices, cluster has {}", alloc.len(), cluster.len());
    }
    if alloc.total() > env.subcarriers {
        bail!(Validation, "allocation uses {} subcarriers, only {} exist", alloc.total(), env.subcarriers);
    }
    let mut comps = Vec::with_capacity(cluster.len());
    for d in cluster {
        let Some(x) = alloc.get(d.id) else {
            bail!(Validation, "allocation has no entry for device {}", d.id);
        };
        comps.push(component_latencies(d, profile, x, env)?);
    }
    let tau_e = server_latency(cluster.len(), profile, env);
    let d_start = max_of(comps.iter().map(ComponentLatencies::starting)) + tau_e;
    let d_inner = max_of(comps.iter().map(ComponentLatencies::inner)) + tau_e;
    let d_end = max_of(comps.iter().map(ComponentLatencies::ending));
    let l = env.local_epochs;
    let total = d_start + (l.saturating_sub(1)) as f64 * d_inner + d_end;
    Ok(LatencyBreakdown { devices: comps, tau_e, d_start, d_inner, d_end, local_epochs: l, total })
}

/// Per-round latency of CPSL for a clustering and its allocations.
pub fn cpsl_round_latency(
    assignment: &ClusterAssignment,
    allocs: &[SpectrumAllocation],
    devices: &[DeviceState],
    profile: &CutProfile,
    env: &EnvSpec,
) -> Result<RoundLatency> {
    assignment.validate(devices.len())?;
    if allocs.len() != assignment.n_clusters() {
        bail!(Validation, "{} allocations for {} clusters", allocs.len(), assignment.n_clusters());
    }
    let mut clusters = Vec::with_capacity(allocs.len());
    for (members, alloc) in assignment.clusters().iter().zip(allocs) {
        let cluster: Vec<DeviceState> = members.iter().map(|&n| devices[n]).collect();
        clusters.push(phase_latencies(&cluster, profile, alloc, env)?);
    }
    let total = clusters.iter().map(|c| c.total).sum();
    Ok(RoundLatency { scheme: Scheme::Cpsl, clusters, total })
}

/// Vanilla SL: devices train one after another, each holding all subcarriers.
/// The model hand-off between consecutive devices goes through the AP: the
/// previous device's upload (`tau_t`) and the next device's broadcast
/// (`tau_b`).
pub fn vanilla_sl_round_latency(devices: &[DeviceState], profile: &CutProfile, env: &EnvSpec) -> Result<RoundLatency> {
    if devices.is_empty() {
        bail!(Validation, "no devices");
    }
    let mut clusters = Vec::with_capacity(devices.len());
    for d in devices {
        let alloc = SpectrumAllocation::new(alloc::vec![d.id], alloc::vec![env.subcarriers])?;
        clusters.push(phase_latencies(core::slice::from_ref(d), profile, &alloc, env)?);
    }
    let total = clusters.iter().map(|c| c.total).sum();
    Ok(RoundLatency { scheme: Scheme::VanillaSl, clusters, total })
}

/// FL: every device downloads the full model (broadcast over all subcarriers),
/// trains `L` minibatches locally and uploads over `floor(C / N)` subcarriers.
/// The round lasts as long as the slowest device.
pub fn fl_round_latency(devices: &[DeviceState], full_model: &CutProfile, env: &EnvSpec) -> Result<RoundLatency> {
    if devices.is_empty() {
        bail!(Validation, "no devices");
    }
    if full_model.gamma_s_f != 0.0 || full_model.gamma_s_b != 0.0 || full_model.xi_s != 0.0 {
        bail!(Domain, "FL needs the last-layer cut (empty server-side model), got cut {}", full_model.cut);
    }
    if devices.len() > env.subcarriers {
        bail!(Infeasible, "{} devices but only {} subcarriers", devices.len(), env.subcarriers);
    }
    let x = env.subcarriers / devices.len();
    let l = env.local_epochs as f64;
    let mut comps = Vec::with_capacity(devices.len());
    for d in devices {
        let mut c = component_latencies(d, full_model, x, env)?;
        c.tau_d *= l;
        c.tau_u *= l;
        c.tau_s = 0.0;
        c.tau_g = 0.0;
        comps.push(c);
    }
    let round = max_of(comps.iter().map(|c| c.tau_b + c.tau_d + c.tau_u + c.tau_t));
    let breakdown = LatencyBreakdown {
        devices: comps,
        tau_e: 0.0,
        d_start: round,
        d_inner: 0.0,
        d_end: 0.0,
        local_epochs: env.local_epochs,
        total: round,
    };
    Ok(RoundLatency { scheme: Scheme::Fl, clusters: alloc::vec![breakdown], total: round })
}

/// Precomputed per-device terms of one cluster so that `D_m` can be
/// re-evaluated for many allocations without allocating.
///
/// Every phase term of device `k` has the form `a_k + c_k / x_k`.
#[derive(Debug, Clone)]
pub struct ClusterCost {
    start: Vec<(f64, f64)>,
    inner: Vec<(f64, f64)>,
    end: Vec<(f64, f64)>,
    tau_e: f64,
    inner_reps: f64,
}

impl ClusterCost {
    pub fn new(cluster: &[DeviceState], profile: &CutProfile, env: &EnvSpec) -> Self {
        let n = cluster.len();
        let mut start = Vec::with_capacity(n);
        let mut inner = Vec::with_capacity(n);
        let mut end = Vec::with_capacity(n);
        let b = env.batch as f64;
        for d in cluster {
            let rate = device_rate(d, env);
            let compute = d.f * env.kappa;
            let tau_b = profile.xi_d / (env.subcarriers as f64 * rate);
            let tau_d = b * profile.gamma_d_f / compute;
            let tau_u = b * profile.gamma_d_b / compute;
            let up = b * profile.xi_s / rate;
            let grad = profile.xi_g / rate;
            let model = profile.xi_d / rate;
            start.push((tau_b + tau_d, up));
            inner.push((tau_u + tau_d, grad + up));
            end.push((tau_u, grad + model));
        }
        Self {
            start,
            inner,
            end,
            tau_e: server_latency(n, profile, env),
            inner_reps: env.local_epochs.saturating_sub(1) as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_empty()
    }

    fn phase(terms: &[(f64, f64)], x: &[usize]) -> f64 {
        terms.iter().zip(x).map(|(&(a, c), &xk)| a + c / xk as f64).fold(0.0, f64::max)
    }

    /// `D_m` for the allocation `x` (aligned with the cluster's device order).
    pub fn eval(&self, x: &[usize]) -> f64 {
        debug_assert_eq!(x.len(), self.len());
        let s = Self::phase(&self.start, x) + self.tau_e;
        let e = Self::phase(&self.end, x);
        if self.inner_reps > 0.0 {
            s + self.inner_reps * (Self::phase(&self.inner, x) + self.tau_e) + e
        } else {
            s + e
        }
    }
}
