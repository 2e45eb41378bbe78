//! Joint device clustering and spectrum allocation.
//!
//! [`gibbs_cluster`] runs a Gibbs-sampling chain over balanced clusterings.
//! Each step swaps two devices between two clusters, re-runs the greedy
//! allocation in those two clusters and accepts the proposal with probability
//! `1 / (1 + exp((new - old) / delta))`. [`cluster_exhaustive`] enumerates
//! every balanced partition and serves as the oracle on small instances.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::{DeviceState, EnvSpec};
use crate::error::{bail, Error, Result};
use crate::latency::ClusterCost;
use crate::math;
use crate::profile::CutProfile;
use crate::rng::{rng_from_seed, SimRng};
use crate::spectrum::{allocation_count, exhaustive_counts, even_counts, greedy_counts, SpectrumAllocation, EXHAUSTIVE_ALLOCATION_LIMIT};

/// Largest number of partitions [`cluster_exhaustive`] will enumerate.
pub const EXHAUSTIVE_PARTITION_LIMIT: u128 = 100_000;

/// Partition of `N` devices into clusters; equivalent to the binary `N x M`
/// association matrix. Members are positions in the device slice.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterAssignment {
    clusters: Vec<Vec<usize>>,
}

impl ClusterAssignment {
    pub fn new(clusters: Vec<Vec<usize>>) -> Self {
        Self { clusters }
    }

    /// Devices `0..n` cut into consecutive groups of `k` (the last group holds
    /// the remainder).
    pub fn chunked(n: usize, k: usize) -> Self {
        let order: Vec<usize> = (0..n).collect();
        Self::from_order(&order, k)
    }

    /// Consecutive groups of `k` taken from `order`.
    pub fn from_order(order: &[usize], k: usize) -> Self {
        Self { clusters: order.chunks(k.max(1)).map(<[usize]>::to_vec).collect() }
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_devices(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    pub fn cluster_of(&self, device: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&device))
    }

    /// Binary association matrix, row per device, column per cluster.
    pub fn matrix(&self) -> Vec<Vec<u8>> {
        let n = self.n_devices();
        let mut a = alloc::vec![alloc::vec![0u8; self.clusters.len()]; n];
        for (m, members) in self.clusters.iter().enumerate() {
            for &d in members {
                if d < n {
                    a[d][m] = 1;
                }
            }
        }
        a
    }

    /// Every device `0..n` appears in exactly one non-empty cluster.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = alloc::vec![false; n];
        for (m, members) in self.clusters.iter().enumerate() {
            if members.is_empty() {
                bail!(Validation, "cluster {} is empty", m);
            }
            for &d in members {
                if d >= n {
                    bail!(Validation, "cluster {} references device {} of {}", m, d, n);
                }
                if seen[d] {
                    bail!(Validation, "device {} belongs to more than one cluster", d);
                }
                seen[d] = true;
            }
        }
        if let Some(d) = seen.iter().position(|s| !s) {
            bail!(Validation, "device {} is not assigned", d);
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the capacity rule: every cluster holds
    /// `k` devices except at most one that holds the remainder `n mod k`.
    pub fn validate_capacity(&self, n: usize, k: usize) -> Result<()> {
        self.validate(n)?;
        let rem = n % k;
        let mut short = 0;
        for (m, members) in self.clusters.iter().enumerate() {
            if members.len() == k {
                continue;
            }
            if members.len() == rem && short == 0 {
                short += 1;
                continue;
            }
            bail!(Validation, "cluster {} holds {} devices, capacity is {}", m, members.len(), k);
        }
        Ok(())
    }

    fn swap(&mut self, s: Swap) {
        let a = self.clusters[s.m1][s.i1];
        let b = self.clusters[s.m2][s.i2];
        self.clusters[s.m1][s.i1] = b;
        self.clusters[s.m2][s.i2] = a;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum InitMode {
    /// Devices in index order, cut into consecutive clusters.
    #[default]
    Chunked,
    /// A seeded random balanced clustering.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GibbsParams {
    /// Smooth factor: larger values accept worse proposals more often.
    pub delta: f64,
    pub iterations: usize,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub init: InitMode,
}

impl Default for GibbsParams {
    fn default() -> Self {
        Self { delta: 1e-4, iterations: 1000, seed: 0, init: InitMode::Chunked }
    }
}

impl GibbsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            bail!(Validation, "delta must be positive, got {}", self.delta);
        }
        if self.iterations == 0 {
            bail!(Validation, "at least one Gibbs iteration is required");
        }
        Ok(())
    }
}

/// Probability of moving from objective `theta_old` to `theta_new`.
///
/// Exactly 0.5 on equality; saturates to 0 or 1 for huge differences and for
/// infinite objectives.
pub fn acceptance_probability(theta_old: f64, theta_new: f64, delta: f64) -> f64 {
    let z = (theta_new - theta_old) / delta;
    if z.is_nan() {
        // inf - inf: neither state is better
        return 0.5;
    }
    if z >= 0.0 {
        let e = math::exp(-z);
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + math::exp(z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Swap {
    m1: usize,
    i1: usize,
    m2: usize,
    i2: usize,
}

fn draw_swap<R: Rng + ?Sized>(a: &ClusterAssignment, rng: &mut R) -> Option<Swap> {
    let m = a.n_clusters();
    if m < 2 {
        return None;
    }
    let m1 = rng.random_range(0..m);
    let mut m2 = rng.random_range(0..m - 1);
    if m2 >= m1 {
        m2 += 1;
    }
    let i1 = rng.random_range(0..a.clusters[m1].len());
    let i2 = rng.random_range(0..a.clusters[m2].len());
    Some(Swap { m1, i1, m2, i2 })
}

/// Exchanges one uniformly drawn device of each of two distinct, uniformly
/// drawn clusters. Cluster sizes never change. With a single cluster there is
/// nothing to swap and the assignment comes back unchanged.
pub fn propose_swap<R: Rng + ?Sized>(a: &ClusterAssignment, rng: &mut R) -> ClusterAssignment {
    let mut next = a.clone();
    match draw_swap(a, rng) {
        Some(s) => next.swap(s),
        None => log::warn!("swap proposal needs at least two clusters; keeping the assignment"),
    }
    next
}

/// One Gibbs iteration as recorded in the chain trace.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceEntry {
    pub iteration: usize,
    /// Objective of the proposal.
    pub proposed: f64,
    /// Objective of the chain state after the decision.
    pub theta: f64,
    pub best: f64,
    pub accepted: bool,
}

/// A clustering with its per-cluster allocations and `D^t`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusteringOutcome {
    pub assignment: ClusterAssignment,
    pub allocations: Vec<SpectrumAllocation>,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsOutcome {
    /// Best clustering visited by the chain.
    pub best: ClusteringOutcome,
    pub initial_theta: f64,
    pub trace: Vec<TraceEntry>,
}

fn check_instance(devices: &[DeviceState], env: &EnvSpec) -> Result<()> {
    env.validate()?;
    if devices.len() != env.n_devices {
        bail!(Validation, "{} devices supplied, scenario has {}", devices.len(), env.n_devices);
    }
    if env.cluster_capacity > env.subcarriers {
        bail!(
            Infeasible,
            "clusters of {} devices cannot each get a subcarrier out of {}",
            env.cluster_capacity,
            env.subcarriers
        );
    }
    Ok(())
}

/// Greedy-allocated cost of one cluster.
/// How a cluster's subcarriers are split among its members.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum AllocationRule {
    /// Latency-aware greedy allocation.
    #[default]
    Greedy,
    /// Equal shares regardless of device state.
    Even,
}

fn allocate_cluster(
    devices: &[DeviceState],
    members: &[usize],
    profile: &CutProfile,
    env: &EnvSpec,
    rule: AllocationRule,
) -> (Vec<usize>, f64) {
    let cluster: Vec<DeviceState> = members.iter().map(|&n| devices[n]).collect();
    let cost = ClusterCost::new(&cluster, profile, env);
    let x = match rule {
        AllocationRule::Greedy => greedy_counts(&cost, env.subcarriers),
        AllocationRule::Even => even_counts(cluster.len(), env.subcarriers),
    };
    let v = cost.eval(&x);
    (x, v)
}

fn greedy_cluster(devices: &[DeviceState], members: &[usize], profile: &CutProfile, env: &EnvSpec) -> (Vec<usize>, f64) {
    allocate_cluster(devices, members, profile, env, AllocationRule::Greedy)
}

fn outcome(
    devices: &[DeviceState],
    assignment: ClusterAssignment,
    counts: Vec<Vec<usize>>,
    values: &[f64],
) -> Result<ClusteringOutcome> {
    let allocations = assignment
        .clusters()
        .iter()
        .zip(counts)
        .map(|(members, x)| SpectrumAllocation::new(members.iter().map(|&n| devices[n].id).collect(), x))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusteringOutcome { assignment, allocations, theta: values.iter().sum() })
}

/// Greedy allocation in every cluster of a fixed clustering.
pub fn evaluate_assignment(
    devices: &[DeviceState],
    profile: &CutProfile,
    env: &EnvSpec,
    assignment: ClusterAssignment,
) -> Result<ClusteringOutcome> {
    evaluate_assignment_with(devices, profile, env, assignment, AllocationRule::Greedy)
}

pub fn evaluate_assignment_with(
    devices: &[DeviceState],
    profile: &CutProfile,
    env: &EnvSpec,
    assignment: ClusterAssignment,
    rule: AllocationRule,
) -> Result<ClusteringOutcome> {
    check_instance(devices, env)?;
    assignment.validate(devices.len())?;
    let (counts, values): (Vec<_>, Vec<_>) =
        assignment.clusters().iter().map(|m| allocate_cluster(devices, m, profile, env, rule)).unzip();
    outcome(devices, assignment, counts, &values)
}

fn initial_assignment(n: usize, k: usize, params: &GibbsParams) -> ClusterAssignment {
    match params.init {
        InitMode::Chunked => ClusterAssignment::chunked(n, k),
        InitMode::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = rng_from_seed(params.seed ^ 0x5eed_1a17);
            order.shuffle(&mut rng);
            ClusterAssignment::from_order(&order, k)
        }
    }
}

/// Gibbs-sampling clustering; returns the best clustering ever visited.
pub fn gibbs_cluster(
    devices: &[DeviceState],
    profile: &CutProfile,
    env: &EnvSpec,
    params: &GibbsParams,
) -> Result<GibbsOutcome> {
    check_instance(devices, env)?;
    params.validate()?;
    let mut rng: SimRng = rng_from_seed(params.seed);
    let mut state = initial_assignment(devices.len(), env.cluster_capacity, params);
    let (mut counts, mut values): (Vec<_>, Vec<_>) =
        state.clusters().iter().map(|m| greedy_cluster(devices, m, profile, env)).unzip();
    let mut theta: f64 = values.iter().sum();
    let initial_theta = theta;
    let mut best = (state.clone(), counts.clone(), values.clone(), theta);
    let mut trace = Vec::with_capacity(params.iterations);

    for iteration in 1..=params.iterations {
        let Some(swap) = draw_swap(&state, &mut rng) else {
            log::warn!("single cluster: nothing to optimise");
            break;
        };
        let mut proposal = state.clone();
        proposal.swap(swap);
        let (x1, v1) = greedy_cluster(devices, &proposal.clusters()[swap.m1], profile, env);
        let (x2, v2) = greedy_cluster(devices, &proposal.clusters()[swap.m2], profile, env);
        let mut new_values = values.clone();
        new_values[swap.m1] = v1;
        new_values[swap.m2] = v2;
        let proposed: f64 = new_values.iter().sum();
        let eps = acceptance_probability(theta, proposed, params.delta);
        let accepted = rng.random::<f64>() < eps;
        if accepted {
            state = proposal;
            counts[swap.m1] = x1;
            counts[swap.m2] = x2;
            values = new_values;
            theta = proposed;
            if theta < best.3 {
                best = (state.clone(), counts.clone(), values.clone(), theta);
            }
        }
        trace.push(TraceEntry { iteration, proposed, theta, best: best.3, accepted });
    }

    let (assignment, counts, values, _) = best;
    Ok(GibbsOutcome { best: outcome(devices, assignment, counts, &values)?, initial_theta, trace })
}

fn checked_binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Number of partitions of `n` devices into unlabeled clusters of `k`, plus
/// one remainder cluster when `k` does not divide `n`. `None` on overflow.
pub fn partition_count(n: usize, k: usize) -> Option<u128> {
    let rem = n % k;
    let mut count = checked_binomial(n, rem)?;
    let mut left = n - rem;
    while left > 0 {
        count = count.checked_mul(checked_binomial(left - 1, k - 1)?)?;
        left -= k;
    }
    Some(count)
}

fn for_each_partition(n: usize, k: usize, mut visit: impl FnMut(&[Vec<usize>])) {
    fn combos(pool: &[usize], r: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..pool.len() {
            if pool.len() - i < r - cur.len() {
                break;
            }
            cur.push(pool[i]);
            combos(pool, r, i + 1, cur, out);
            cur.pop();
        }
    }

    fn fill(remaining: &[usize], k: usize, acc: &mut Vec<Vec<usize>>, visit: &mut dyn FnMut(&[Vec<usize>])) {
        if remaining.is_empty() {
            visit(acc);
            return;
        }
        // the smallest remaining device anchors the next cluster, so clusters are unlabeled
        let anchor = remaining[0];
        let rest = &remaining[1..];
        let mut partners = Vec::new();
        combos(rest, k - 1, 0, &mut Vec::new(), &mut partners);
        for p in partners {
            let mut cluster = Vec::with_capacity(k);
            cluster.push(anchor);
            cluster.extend_from_slice(&p);
            let left: Vec<usize> = rest.iter().copied().filter(|d| !p.contains(d)).collect();
            acc.push(cluster);
            fill(&left, k, acc, visit);
            acc.pop();
        }
    }

    let all: Vec<usize> = (0..n).collect();
    let rem = n % k;
    let mut remainders = Vec::new();
    combos(&all, rem, 0, &mut Vec::new(), &mut remainders);
    for r in remainders {
        let left: Vec<usize> = all.iter().copied().filter(|d| !r.contains(d)).collect();
        let mut acc = Vec::new();
        fill(&left, k, &mut acc, &mut |clusters: &[Vec<usize>]| {
            if r.is_empty() {
                visit(clusters);
            } else {
                let mut with_rem = clusters.to_vec();
                with_rem.push(r.clone());
                visit(&with_rem);
            }
        });
    }
}

/// Enumerates every balanced partition; per cluster the allocation is
/// exhaustive when that is within its guard and greedy otherwise.
pub fn cluster_exhaustive(devices: &[DeviceState], profile: &CutProfile, env: &EnvSpec) -> Result<ClusteringOutcome> {
    check_instance(devices, env)?;
    let n = devices.len();
    let k = env.cluster_capacity;
    let count = partition_count(n, k).unwrap_or(u128::MAX);
    if count > EXHAUSTIVE_PARTITION_LIMIT {
        return Err(Error::GuardExceeded { count, limit: EXHAUSTIVE_PARTITION_LIMIT });
    }
    let mut memo: BTreeMap<Vec<usize>, (Vec<usize>, f64)> = BTreeMap::new();
    let mut solve = |members: &[usize]| -> Result<(Vec<usize>, f64)> {
        if let Some(hit) = memo.get(members) {
            return Ok(hit.clone());
        }
        let cluster: Vec<DeviceState> = members.iter().map(|&i| devices[i]).collect();
        let cost = ClusterCost::new(&cluster, profile, env);
        let res = if allocation_count(cluster.len(), env.subcarriers) <= EXHAUSTIVE_ALLOCATION_LIMIT {
            exhaustive_counts(&cost, env.subcarriers)?
        } else {
            let x = greedy_counts(&cost, env.subcarriers);
            let v = cost.eval(&x);
            (x, v)
        };
        memo.insert(members.to_vec(), res.clone());
        Ok(res)
    };

    // (clusters, allocations, per-cluster latencies, total)
    type Candidate = (Vec<Vec<usize>>, Vec<Vec<usize>>, Vec<f64>, f64);
    let mut best: Option<Candidate> = None;
    let mut failure = None;
    for_each_partition(n, k, |clusters| {
        if failure.is_some() {
            return;
        }
        let mut xs = Vec::with_capacity(clusters.len());
        let mut vals = Vec::with_capacity(clusters.len());
        for c in clusters {
            match solve(c) {
                Ok((x, v)) => {
                    xs.push(x);
                    vals.push(v);
                }
                Err(e) => {
                    failure = Some(e);
                    return;
                }
            }
        }
        let theta: f64 = vals.iter().sum();
        if best.as_ref().map_or(true, |b| theta < b.3) {
            best = Some((clusters.to_vec(), xs, vals, theta));
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let Some((clusters, xs, vals, _)) = best else {
        bail!(Infeasible, "no partition of {} devices into clusters of {}", n, k);
    };
    outcome(devices, ClusterAssignment::new(clusters), xs, &vals)
}

/// Benchmark: a uniformly random balanced clustering with greedy allocation.
pub fn random_clustering<R: Rng + ?Sized>(
    devices: &[DeviceState],
    profile: &CutProfile,
    env: &EnvSpec,
    rule: AllocationRule,
    rng: &mut R,
) -> Result<ClusteringOutcome> {
    let mut order: Vec<usize> = (0..devices.len()).collect();
    order.shuffle(rng);
    evaluate_assignment_with(devices, profile, env, ClusterAssignment::from_order(&order, env.cluster_capacity), rule)
}

/// Benchmark: devices with similar computing capability share a cluster
/// (sorted by capability, fastest first).
pub fn heuristic_clustering(
    devices: &[DeviceState],
    profile: &CutProfile,
    env: &EnvSpec,
    rule: AllocationRule,
) -> Result<ClusteringOutcome> {
    let mut order: Vec<usize> = (0..devices.len()).collect();
    order.sort_by(|&a, &b| devices[b].f.total_cmp(&devices[a].f).then(a.cmp(&b)));
    evaluate_assignment_with(devices, profile, env, ClusterAssignment::from_order(&order, env.cluster_capacity), rule)
}
