//! Subcarrier allocation inside one cluster.

use alloc::vec::Vec;

use crate::env::{DeviceState, EnvSpec};
use crate::error::{bail, Error, Result};
use crate::latency::ClusterCost;
use crate::profile::CutProfile;

/// Largest number of allocations [`allocate_exhaustive`] will enumerate.
pub const EXHAUSTIVE_ALLOCATION_LIMIT: u128 = 1_000_000;

/// Subcarrier counts per device of one cluster (all >= 1).
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectrumAllocation {
    devices: Vec<usize>,
    counts: Vec<usize>,
}

impl SpectrumAllocation {
    pub fn new(devices: Vec<usize>, counts: Vec<usize>) -> Result<Self> {
        if devices.len() != counts.len() {
            bail!(Validation, "{} devices but {} subcarrier counts", devices.len(), counts.len());
        }
        if let Some(pos) = counts.iter().position(|&x| x == 0) {
            bail!(Validation, "device {} has no subcarrier", devices[pos]);
        }
        Ok(Self { devices, counts })
    }

    pub fn devices(&self) -> &[usize] {
        &self.devices
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn get(&self, device: usize) -> Option<usize> {
        self.devices.iter().position(|&d| d == device).map(|i| self.counts[i])
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.devices.iter().copied().zip(self.counts.iter().copied())
    }
}

fn check_cluster(cluster: &[DeviceState], env: &EnvSpec) -> Result<()> {
    if cluster.is_empty() {
        bail!(Validation, "cluster has no devices");
    }
    if cluster.len() > env.subcarriers {
        bail!(Infeasible, "{} devices cannot each get a subcarrier out of {}", cluster.len(), env.subcarriers);
    }
    Ok(())
}

/// Greedy allocation on a precomputed cost: start from one subcarrier each and
/// hand out the remaining `C - K` one at a time to the device whose extra
/// subcarrier lowers `D_m` the most (lowest index on ties). When no device
/// improves `D_m`, the subcarrier goes round-robin.
pub fn greedy_counts(cost: &ClusterCost, subcarriers: usize) -> Vec<usize> {
    let k = cost.len();
    let mut x = alloc::vec![1usize; k];
    let mut cursor = 0;
    for _ in 0..subcarriers.saturating_sub(k) {
        let omega = cost.eval(&x);
        let mut best = None;
        let mut best_gain = 0.0;
        for i in 0..k {
            x[i] += 1;
            let gain = omega - cost.eval(&x);
            x[i] -= 1;
            if gain > best_gain {
                best_gain = gain;
                best = Some(i);
            }
        }
        let pick = best.unwrap_or_else(|| {
            let c = cursor;
            cursor = (cursor + 1) % k;
            c
        });
        x[pick] += 1;
    }
    x
}

/// Spectrum-unaware split: `C / K` subcarriers each, the remainder to the
/// lowest indices.
pub fn even_counts(k: usize, subcarriers: usize) -> Vec<usize> {
    (0..k).map(|i| subcarriers / k + usize::from(i < subcarriers % k)).collect()
}

pub fn allocate_greedy(cluster: &[DeviceState], profile: &CutProfile, env: &EnvSpec) -> Result<SpectrumAllocation> {
    check_cluster(cluster, env)?;
    let cost = ClusterCost::new(cluster, profile, env);
    let x = greedy_counts(&cost, env.subcarriers);
    SpectrumAllocation::new(cluster.iter().map(|d| d.id).collect(), x)
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of integer vectors with `k` entries >= 1 summing to at most `c`.
pub fn allocation_count(k: usize, c: usize) -> u128 {
    binomial(c as u128, k as u128)
}

/// Global minimiser of `D_m` over every allocation with `x >= 1` and
/// `sum(x) <= C`, first in lexicographic order on ties.
pub fn exhaustive_counts(cost: &ClusterCost, subcarriers: usize) -> Result<(Vec<usize>, f64)> {
    let k = cost.len();
    let count = allocation_count(k, subcarriers);
    if count > EXHAUSTIVE_ALLOCATION_LIMIT {
        return Err(Error::GuardExceeded { count, limit: EXHAUSTIVE_ALLOCATION_LIMIT });
    }
    if k == 0 || k > subcarriers {
        bail!(Infeasible, "{} devices for {} subcarriers", k, subcarriers);
    }
    let mut x = alloc::vec![1usize; k];
    let mut best = x.clone();
    let mut best_val = cost.eval(&x);
    let mut used = k;
    // odometer over compositions, last position fastest, in lexicographic order
    loop {
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok((best, best_val));
            }
            pos -= 1;
            if used < subcarriers {
                x[pos] += 1;
                used += 1;
                break;
            }
            used -= x[pos] - 1;
            x[pos] = 1;
        }
        let val = cost.eval(&x);
        if val < best_val {
            best_val = val;
            best.copy_from_slice(&x);
        }
    }
}

pub fn allocate_exhaustive(
    cluster: &[DeviceState],
    profile: &CutProfile,
    env: &EnvSpec,
) -> Result<SpectrumAllocation> {
    check_cluster(cluster, env)?;
    let cost = ClusterCost::new(cluster, profile, env);
    let (x, _) = exhaustive_counts(&cost, env.subcarriers)?;
    SpectrumAllocation::new(cluster.iter().map(|d| d.id).collect(), x)
}
