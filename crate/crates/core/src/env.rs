//! Device populations and wireless rates.
//!
//! Channel quality is carried as a received SNR in dB; transmit power, channel
//! gain and noise density are folded into that one number. Uplink and downlink
//! use the same SNR.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{bail, Result};
use crate::math;
use crate::rng::{rng_from_seed, SimRng};

/// Capability draws are clamped to this fraction of the device's mean.
pub const MIN_CAPABILITY_FRACTION: f64 = 0.01;

/// One device in one network realisation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviceState {
    pub id: usize,
    /// Computing capability, cycles/s.
    pub f: f64,
    pub snr_db: f64,
}

impl DeviceState {
    pub fn new(id: usize, f: f64, snr_db: f64) -> Self {
        Self { id, f, snr_db }
    }
}

/// Network, compute and training parameters of a scenario.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvSpec {
    pub n_devices: usize,
    /// Mean computing capability per device, cycles/s.
    pub f_mean: Vec<f64>,
    pub f_std: f64,
    /// Mean received SNR per device, dB.
    pub snr_mean_db: Vec<f64>,
    pub snr_std_db: f64,
    /// Number of subcarriers `C`.
    pub subcarriers: usize,
    /// Subcarrier bandwidth `W`, Hz.
    pub subcarrier_bandwidth: f64,
    /// FLOPs per CPU cycle.
    pub kappa: f64,
    /// Edge server capability, cycles/s.
    pub server_f: f64,
    pub batch: usize,
    pub local_epochs: usize,
    /// Devices per cluster `K_m`.
    pub cluster_capacity: usize,
}

impl Default for EnvSpec {
    /// Homogeneous reference setup: 30 devices at 0.5 GHz and 17 dB, 30 x 1 MHz
    /// subcarriers, a 100 GHz edge server, B = 16, one local epoch, 5 devices
    /// per cluster.
    fn default() -> Self {
        Self::homogeneous(30, 0.5e9, 17.0)
    }
}

impl EnvSpec {
    pub fn homogeneous(n_devices: usize, f: f64, snr_db: f64) -> Self {
        Self {
            n_devices,
            f_mean: alloc::vec![f; n_devices],
            f_std: 0.0,
            snr_mean_db: alloc::vec![snr_db; n_devices],
            snr_std_db: 0.0,
            subcarriers: 30,
            subcarrier_bandwidth: 1e6,
            kappa: 1.0,
            server_f: 100e9,
            batch: 16,
            local_epochs: 1,
            cluster_capacity: 5.min(n_devices.max(1)),
        }
    }

    /// Per-device means drawn uniformly from the given ranges; the remaining
    /// fields keep their reference values.
    pub fn heterogeneous<R: Rng + ?Sized>(
        n_devices: usize,
        f_range: (f64, f64),
        snr_range_db: (f64, f64),
        f_std: f64,
        snr_std_db: f64,
        rng: &mut R,
    ) -> Self {
        let mut f_mean = Vec::with_capacity(n_devices);
        let mut snr_mean_db = Vec::with_capacity(n_devices);
        for _ in 0..n_devices {
            f_mean.push(uniform(rng, f_range));
            snr_mean_db.push(uniform(rng, snr_range_db));
        }
        Self { f_mean, f_std, snr_mean_db, snr_std_db, ..Self::homogeneous(n_devices, 0.0, 0.0) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_devices == 0 {
            bail!(Validation, "n_devices must be at least 1");
        }
        if self.f_mean.len() != self.n_devices || self.snr_mean_db.len() != self.n_devices {
            bail!(
                Validation,
                "expected {} per-device means, got {} capabilities and {} SNRs",
                self.n_devices,
                self.f_mean.len(),
                self.snr_mean_db.len()
            );
        }
        if self.f_mean.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            bail!(Validation, "device capabilities must be positive");
        }
        if self.snr_mean_db.iter().any(|s| !s.is_finite()) {
            bail!(Validation, "device SNRs must be finite");
        }
        if !(self.f_std >= 0.0 && self.snr_std_db >= 0.0) {
            bail!(Validation, "standard deviations must be non-negative");
        }
        if self.subcarriers == 0 {
            bail!(Validation, "subcarriers must be at least 1");
        }
        if !(self.subcarrier_bandwidth > 0.0) {
            bail!(Validation, "subcarrier bandwidth must be positive");
        }
        if !(self.kappa > 0.0) {
            bail!(Validation, "kappa must be positive");
        }
        if !(self.server_f > 0.0) {
            bail!(Validation, "server capability must be positive");
        }
        if self.batch == 0 || self.local_epochs == 0 {
            bail!(Validation, "batch and local_epochs must be at least 1");
        }
        if self.cluster_capacity == 0 {
            bail!(Validation, "cluster capacity must be at least 1");
        }
        if self.n_devices < self.cluster_capacity {
            bail!(
                Validation,
                "cluster capacity {} exceeds the {} devices",
                self.cluster_capacity,
                self.n_devices
            );
        }
        Ok(())
    }

    /// Number of clusters `ceil(N / K_m)`.
    pub fn n_clusters(&self) -> usize {
        self.n_devices.div_ceil(self.cluster_capacity)
    }

    /// Devices at their mean capability and SNR.
    pub fn mean_devices(&self) -> Vec<DeviceState> {
        (0..self.n_devices).map(|n| DeviceState::new(n, self.f_mean[n], self.snr_mean_db[n])).collect()
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    // std > 0 and finite after validation
    Normal::new(mean, std).map(|d| d.sample(rng)).unwrap_or(mean)
}

/// Draws one realisation of the population from a seeded stream.
pub fn sample_devices(spec: &EnvSpec, seed: u64) -> Result<Vec<DeviceState>> {
    let mut rng = rng_from_seed(seed);
    sample_devices_with(spec, &mut rng)
}

pub fn sample_devices_with(spec: &EnvSpec, rng: &mut SimRng) -> Result<Vec<DeviceState>> {
    spec.validate()?;
    Ok((0..spec.n_devices)
        .map(|n| {
            let mean = spec.f_mean[n];
            let f = gaussian(rng, mean, spec.f_std).max(MIN_CAPABILITY_FRACTION * mean);
            let snr = gaussian(rng, spec.snr_mean_db[n], spec.snr_std_db);
            DeviceState::new(n, f, snr)
        })
        .collect())
}

pub fn db_to_linear(db: f64) -> f64 {
    math::powf(10.0, db / 10.0)
}

/// Shannon rate of one subcarrier of bandwidth `w` Hz at the given SNR, bits/s.
pub fn subcarrier_rate(snr_db: f64, w: f64) -> f64 {
    w * math::log2(1.0 + db_to_linear(snr_db))
}

/// Monte-Carlo mean of [`subcarrier_rate`] over Gaussian SNR draws in dB.
pub fn expected_subcarrier_rate(snr_mean_db: f64, snr_std_db: f64, w: f64, n_mc: usize, seed: u64) -> Result<f64> {
    if n_mc == 0 {
        bail!(Domain, "n_mc must be at least 1");
    }
    if snr_std_db == 0.0 {
        return Ok(subcarrier_rate(snr_mean_db, w));
    }
    let mut rng = rng_from_seed(seed);
    let mut acc = 0.0;
    for _ in 0..n_mc {
        acc += subcarrier_rate(gaussian(&mut rng, snr_mean_db, snr_std_db), w);
    }
    Ok(acc / n_mc as f64)
}
