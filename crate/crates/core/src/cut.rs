//! Cut-layer selection by sample average approximation.
//!
//! The expected per-round latency of every candidate cut is replaced by its
//! mean over `J` sampled device populations. For each (sample, cut) pair the
//! clustering and allocation are optimised with the Gibbs sampler, and the cut
//! with the smallest mean wins.

use alloc::vec::Vec;

use crate::cluster::{gibbs_cluster, GibbsParams};
use crate::env::{sample_devices, DeviceState, EnvSpec};
use crate::error::{bail, Result};
use crate::math;
use crate::profile::CutProfile;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SaaParams {
    pub j_samples: usize,
    pub seed: u64,
    /// Chain settings for every (sample, cut) pair; its seed is ignored in
    /// favour of one derived from the master seed and the sample index.
    pub gibbs: GibbsParams,
}

impl Default for SaaParams {
    fn default() -> Self {
        Self { j_samples: 30, seed: 0, gibbs: GibbsParams::default() }
    }
}

impl SaaParams {
    pub fn validate(&self) -> Result<()> {
        if self.j_samples == 0 {
            bail!(Validation, "at least one SAA sample is required");
        }
        self.gibbs.validate()
    }

    /// Device population of sample `j`.
    pub fn population(&self, env: &EnvSpec, j: usize) -> Result<Vec<DeviceState>> {
        sample_devices(env, derive_seed(self.seed, stream::POPULATION, j as u64))
    }

    /// Chain settings of sample `j`; shared by every cut.
    pub fn chain(&self, j: usize) -> GibbsParams {
        GibbsParams { seed: derive_seed(self.seed, stream::SAA, j as u64), ..self.gibbs }
    }
}

/// Sample statistics of one cut's optimised per-round latency.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CutStat {
    pub cut: usize,
    pub mean: f64,
    /// Population standard deviation over the samples.
    pub std: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutSelection {
    pub best: usize,
    /// One row per candidate, in candidate order.
    pub table: Vec<CutStat>,
}

/// Optimised per-round latency of one cut on one sampled population.
pub fn evaluate_cell(devices: &[DeviceState], profile: &CutProfile, env: &EnvSpec, chain: &GibbsParams) -> Result<f64> {
    Ok(gibbs_cluster(devices, profile, env, chain)?.best.theta)
}

/// Reduces a `samples[v][j]` grid to the statistics table and its argmin
/// (lowest cut index on ties).
pub fn summarize(cuts: &[usize], samples: &[Vec<f64>]) -> Result<CutSelection> {
    if cuts.is_empty() || cuts.len() != samples.len() {
        bail!(Validation, "{} candidate cuts but {} sample rows", cuts.len(), samples.len());
    }
    let table: Vec<CutStat> = cuts
        .iter()
        .zip(samples)
        .map(|(&cut, s)| {
            let (mean, std) = math::mean_std(s);
            CutStat { cut, mean, std, p95: math::percentile(s, 0.95) }
        })
        .collect();
    let mut best = 0;
    for (i, row) in table.iter().enumerate() {
        if row.mean < table[best].mean {
            best = i;
        }
    }
    Ok(CutSelection { best: table[best].cut, table })
}

/// Serial SAA over the candidate profiles. Populations are drawn once per
/// sample and shared by every cut.
pub fn select_cut(profiles: &[CutProfile], env: &EnvSpec, params: &SaaParams) -> Result<CutSelection> {
    params.validate()?;
    env.validate()?;
    if profiles.is_empty() {
        bail!(Validation, "no candidate cuts");
    }
    let populations = (0..params.j_samples).map(|j| params.population(env, j)).collect::<Result<Vec<_>>>()?;
    let mut grid = Vec::with_capacity(profiles.len());
    for p in profiles {
        let row = populations
            .iter()
            .enumerate()
            .map(|(j, devs)| evaluate_cell(devs, p, env, &params.chain(j)))
            .collect::<Result<Vec<_>>>()?;
        grid.push(row);
    }
    summarize(&profiles.iter().map(|p| p.cut).collect::<Vec<_>>(), &grid)
}
