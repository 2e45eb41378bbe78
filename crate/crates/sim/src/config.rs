//! Scenario and model files.
//!
//! A scenario is a JSON document; every field has a default, so `{}` is the
//! homogeneous reference setup. Models are chain descriptions plus optional
//! per-cut overrides given in MB / KB / MFLOPs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cpsl_core::cluster::{AllocationRule, GibbsParams, InitMode};
use cpsl_core::cut::SaaParams;
use cpsl_core::env::EnvSpec;
use cpsl_core::latency::Scheme;
use cpsl_core::profile::{
    enumerate_cuts, kb_to_bits, mb_to_bits, resolve_profiles, CutProfile, LayerSpec, ProfileOptions, ProfileOverride,
    TensorShape, MFLOPS,
};
use cpsl_core::rng::{derive_seed, rng_from_seed, stream, SimRng};
use cpsl_core::train::{TrainScheme, TrainerConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{SimError, SimResult};

pub const BUNDLED_LENET: &str = include_str!("../data/lenet.json");
pub const DEFAULT_SCENARIO: &str = include_str!("../data/default.json");
pub const HETEROGENEOUS_SCENARIO: &str = include_str!("../data/heterogeneous.json");

/// Per-cut override in human units. `gamma_d_mflops` / `gamma_s_mflops` set
/// both the forward and the backward workload of their side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_d_mb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_s_kb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_g_kb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_d_mflops: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_s_mflops: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_d_f_mflops: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_d_b_mflops: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_s_f_mflops: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_s_b_mflops: Option<f64>,
}

impl OverrideConfig {
    pub fn to_override(&self) -> SimResult<ProfileOverride> {
        let vals = [
            self.xi_d_mb,
            self.xi_s_kb,
            self.xi_g_kb,
            self.gamma_d_mflops,
            self.gamma_s_mflops,
            self.gamma_d_f_mflops,
            self.gamma_d_b_mflops,
            self.gamma_s_f_mflops,
            self.gamma_s_b_mflops,
        ];
        if vals.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SimError::Config("override values must be finite and non-negative".into()));
        }
        let mf = |v: Option<f64>| v.map(|x| x * MFLOPS);
        Ok(ProfileOverride {
            xi_d: self.xi_d_mb.map(mb_to_bits),
            xi_s: self.xi_s_kb.map(kb_to_bits),
            xi_g: self.xi_g_kb.map(kb_to_bits),
            gamma_d_f: mf(self.gamma_d_f_mflops.or(self.gamma_d_mflops)),
            gamma_d_b: mf(self.gamma_d_b_mflops.or(self.gamma_d_mflops)),
            gamma_s_f: mf(self.gamma_s_f_mflops.or(self.gamma_s_mflops)),
            gamma_s_b: mf(self.gamma_s_b_mflops.or(self.gamma_s_mflops)),
        })
    }
}

fn four() -> usize {
    4
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// Height, width, channels.
    pub input: [usize; 3],
    #[serde(default = "four")]
    pub bytes_per_value: usize,
    #[serde(default = "one")]
    pub flops_per_mac: f64,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub overrides: BTreeMap<usize, OverrideConfig>,
}

impl ModelConfig {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_LENET).expect("bundled model is valid JSON")
    }

    pub fn load(path: &Path) -> SimResult<Self> {
        let text = read(path)?;
        serde_json::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
    }

    pub fn options(&self, batch: usize) -> ProfileOptions {
        ProfileOptions {
            batch,
            bytes_per_value: self.bytes_per_value,
            input: TensorShape::new(self.input[0], self.input[1], self.input[2]),
            flops_per_mac: self.flops_per_mac,
        }
    }

    pub fn overrides(&self) -> SimResult<BTreeMap<usize, ProfileOverride>> {
        let v = self.layers.len();
        self.overrides
            .iter()
            .map(|(&cut, o)| {
                if cut == 0 || cut > v {
                    return Err(SimError::Config(format!("override for cut {cut} outside 1..={v}")));
                }
                Ok((cut, o.to_override()?))
            })
            .collect()
    }

    pub fn layer_name(&self, cut: usize) -> String {
        self.layers.iter().find(|l| l.index == cut).map(|l| l.name.clone()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileMode {
    /// Computed profiles with the model's overrides applied.
    #[default]
    Override,
    /// Computed profiles only.
    Computed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub n_devices: usize,
    /// Common mean capability (GHz); exclusive with `f_range_ghz`.
    pub f_ghz: Option<f64>,
    /// Per-device mean capabilities drawn uniformly from this range.
    pub f_range_ghz: Option<[f64; 2]>,
    pub snr_db: Option<f64>,
    pub snr_range_db: Option<[f64; 2]>,
    pub f_std_ghz: f64,
    pub snr_std_db: f64,
    pub subcarriers: usize,
    pub subcarrier_bandwidth_mhz: f64,
    pub kappa: f64,
    pub server_f_ghz: f64,
    pub batch: usize,
    pub local_epochs: usize,
    pub cluster_capacity: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_devices: 30,
            f_ghz: None,
            f_range_ghz: None,
            snr_db: None,
            snr_range_db: None,
            f_std_ghz: 0.0,
            snr_std_db: 0.0,
            subcarriers: 30,
            subcarrier_bandwidth_mhz: 1.0,
            kappa: 1.0,
            server_f_ghz: 100.0,
            batch: 16,
            local_epochs: 1,
            cluster_capacity: 5,
        }
    }
}

impl EnvConfig {
    /// Resolves the per-device means; ranges are drawn from the seed's device stream.
    pub fn to_env(&self, seed: u64) -> SimResult<EnvSpec> {
        if self.f_ghz.is_some() && self.f_range_ghz.is_some() {
            return Err(SimError::Config("set either f_ghz or f_range_ghz, not both".into()));
        }
        if self.snr_db.is_some() && self.snr_range_db.is_some() {
            return Err(SimError::Config("set either snr_db or snr_range_db, not both".into()));
        }
        for [lo, hi] in [self.f_range_ghz, self.snr_range_db].into_iter().flatten() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(SimError::Config(format!("bad range [{lo}, {hi}]")));
            }
        }
        let mut rng = rng_from_seed(derive_seed(seed, stream::DEVICES, 0));
        let n = self.n_devices;
        let mut f_mean = Vec::with_capacity(n);
        let mut snr_mean = Vec::with_capacity(n);
        for _ in 0..n {
            f_mean.push(match self.f_range_ghz {
                Some(r) => uniform(&mut rng, r) * 1e9,
                None => self.f_ghz.unwrap_or(0.5) * 1e9,
            });
            snr_mean.push(match self.snr_range_db {
                Some(r) => uniform(&mut rng, r),
                None => self.snr_db.unwrap_or(17.0),
            });
        }
        let env = EnvSpec {
            n_devices: n,
            f_mean,
            f_std: self.f_std_ghz * 1e9,
            snr_mean_db: snr_mean,
            snr_std_db: self.snr_std_db,
            subcarriers: self.subcarriers,
            subcarrier_bandwidth: self.subcarrier_bandwidth_mhz * 1e6,
            kappa: self.kappa,
            server_f: self.server_f_ghz * 1e9,
            batch: self.batch,
            local_epochs: self.local_epochs,
            cluster_capacity: self.cluster_capacity,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn is_deterministic(&self) -> bool {
        self.f_std_ghz == 0.0 && self.snr_std_db == 0.0
    }
}

fn uniform(rng: &mut SimRng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsConfig {
    pub delta: f64,
    pub iterations: usize,
    pub init: InitMode,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        let g = GibbsParams::default();
        Self { delta: g.delta, iterations: g.iterations, init: g.init }
    }
}

impl GibbsConfig {
    pub fn params(&self, seed: u64) -> GibbsParams {
        GibbsParams { delta: self.delta, iterations: self.iterations, seed, init: self.init }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaaConfig {
    pub j_samples: usize,
    /// Candidate cuts; all layers when absent.
    pub cuts: Option<Vec<usize>>,
}

impl Default for SaaConfig {
    fn default() -> Self {
        Self { j_samples: 30, cuts: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerSection {
    #[serde(flatten)]
    pub config: TrainerConfig,
    pub schemes: Vec<TrainScheme>,
}

impl Default for TrainerSection {
    fn default() -> Self {
        Self { config: TrainerConfig::default(), schemes: TrainScheme::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub seed: u64,
    /// Model file, relative to the scenario file; the bundled LeNet when absent.
    pub model: Option<PathBuf>,
    pub profiles: ProfileMode,
    /// Cut layer for latency evaluation and clustering.
    pub cut: usize,
    pub env: EnvConfig,
    pub schemes: Vec<Scheme>,
    pub gibbs: GibbsConfig,
    pub saa: SaaConfig,
    /// Spectrum split used by the random and heuristic benchmarks.
    pub baseline_allocation: AllocationRule,
    pub trainer: TrainerSection,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 0,
            model: None,
            profiles: ProfileMode::Override,
            cut: 3,
            env: EnvConfig { f_ghz: Some(0.5), snr_db: Some(17.0), ..EnvConfig::default() },
            schemes: vec![Scheme::Cpsl, Scheme::VanillaSl, Scheme::Fl],
            gibbs: GibbsConfig::default(),
            saa: SaaConfig::default(),
            baseline_allocation: AllocationRule::Even,
            trainer: TrainerSection::default(),
        }
    }
}

/// A scenario with its model loaded and its identity fixed.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub model: ModelConfig,
    /// Hex SHA-256 prefix of the canonical scenario and model JSON.
    pub hash: String,
}

impl Loaded {
    pub fn seed(&self) -> u64 {
        self.scenario.seed
    }

    pub fn env(&self) -> SimResult<EnvSpec> {
        self.scenario.env.to_env(self.scenario.seed)
    }

    /// Profiles of every cut `1..=V` in the scenario's profile mode.
    pub fn profiles(&self) -> SimResult<Vec<CutProfile>> {
        self.profiles_in(self.scenario.profiles)
    }

    pub fn profiles_in(&self, mode: ProfileMode) -> SimResult<Vec<CutProfile>> {
        let computed = enumerate_cuts(&self.model.layers, &self.model.options(self.scenario.env.batch))?;
        Ok(match mode {
            ProfileMode::Computed => computed,
            ProfileMode::Override => resolve_profiles(&computed, &self.model.overrides()?),
        })
    }

    pub fn profile(&self, cut: usize) -> SimResult<CutProfile> {
        let all = self.profiles()?;
        all.get(cut.wrapping_sub(1))
            .copied()
            .ok_or_else(|| SimError::Core(cpsl_core::Error::Domain(format!("cut {cut} outside 1..={}", all.len()))))
    }

    pub fn saa(&self) -> SaaParams {
        SaaParams { j_samples: self.scenario.saa.j_samples, seed: self.seed(), gibbs: self.scenario.gibbs.params(0) }
    }

    pub fn trainer(&self) -> TrainerConfig {
        TrainerConfig { seed: self.seed(), ..self.scenario.trainer.config.clone() }
    }

    pub fn gibbs_seed(&self) -> u64 {
        derive_seed(self.seed(), stream::GIBBS, 0)
    }

    fn rehash(&mut self) {
        #[derive(Serialize)]
        struct Identity<'a> {
            scenario: &'a Scenario,
            model: &'a ModelConfig,
        }
        let json = serde_json::to_vec(&Identity { scenario: &self.scenario, model: &self.model }).expect("serializable");
        self.hash = hex::encode(&Sha256::digest(&json)[..8]);
    }

    /// Applies a change to the scenario and refreshes the hash.
    pub fn with(mut self, f: impl FnOnce(&mut Scenario)) -> SimResult<Self> {
        f(&mut self.scenario);
        self.validate()?;
        self.rehash();
        Ok(self)
    }

    fn validate(&self) -> SimResult<()> {
        let v = self.model.layers.len();
        if self.scenario.cut == 0 || self.scenario.cut > v {
            return Err(SimError::Config(format!("cut {} outside 1..={v}", self.scenario.cut)));
        }
        if let Some(cuts) = &self.scenario.saa.cuts {
            if cuts.is_empty() || cuts.iter().any(|&c| c == 0 || c > v) {
                return Err(SimError::Config(format!("candidate cuts must be non-empty and inside 1..={v}")));
            }
        }
        self.model.overrides()?;
        self.env()?;
        self.scenario.gibbs.params(0).validate()?;
        self.saa().validate()?;
        self.trainer().validate()?;
        Ok(())
    }
}

fn read(path: &Path) -> SimResult<String> {
    std::fs::read_to_string(path).map_err(|source| SimError::Io { path: path.to_path_buf(), source })
}

pub fn parse_scenario(text: &str) -> SimResult<Scenario> {
    serde_json::from_str(text).map_err(|e| SimError::Config(format!("scenario: {e}")))
}

/// Loads a scenario and its model; relative model paths resolve against `base`.
pub fn load_scenario(scenario: Scenario, base: Option<&Path>) -> SimResult<Loaded> {
    let model = match &scenario.model {
        None => ModelConfig::bundled(),
        Some(p) => {
            let path = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.clone(),
            };
            ModelConfig::load(&path)?
        }
    };
    let mut loaded = Loaded { scenario, model, hash: String::new() };
    loaded.validate()?;
    loaded.rehash();
    Ok(loaded)
}

pub fn load_file(path: &Path) -> SimResult<Loaded> {
    let scenario = parse_scenario(&read(path)?)?;
    load_scenario(scenario, path.parent())
}

/// Bundled scenarios by name.
pub fn preset(name: &str) -> SimResult<Loaded> {
    let text = match name {
        "default" | "homogeneous" => DEFAULT_SCENARIO,
        "heterogeneous" => HETEROGENEOUS_SCENARIO,
        other => return Err(SimError::Config(format!("unknown preset {other:?} (homogeneous, heterogeneous)"))),
    };
    load_scenario(parse_scenario(text)?, None)
}
