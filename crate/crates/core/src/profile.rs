//! Per-cut communication sizes and computation workloads of a chain network.
//!
//! FLOPs are counted as multiply-accumulates (one per kernel weight per output
//! element), pooling is free and convolutions use stride 1. Sizes are in bits;
//! `1 KB = 1e3 bytes` and `1 MB = 1e6 bytes`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{bail, Result};

pub const BITS_PER_BYTE: f64 = 8.0;
pub const KB: f64 = 1e3;
pub const MB: f64 = 1e6;
pub const MFLOPS: f64 = 1e6;

pub fn kb_to_bits(kb: f64) -> f64 {
    kb * KB * BITS_PER_BYTE
}

pub fn mb_to_bits(mb: f64) -> f64 {
    mb * MB * BITS_PER_BYTE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Padding {
    /// No padding: output shrinks by `kernel - 1`.
    #[default]
    Valid,
    /// Zero padding that keeps the spatial size.
    Same,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum LayerKind {
    Conv {
        filters: usize,
        kernel: [usize; 2],
        #[cfg_attr(feature = "serde", serde(default))]
        padding: Padding,
    },
    #[cfg_attr(feature = "serde", serde(rename = "maxpool"))]
    MaxPool { window: [usize; 2] },
    Dense { units: usize },
}

impl LayerKind {
    pub fn is_dense(&self) -> bool {
        matches!(self, LayerKind::Dense { .. })
    }
}

/// One layer of a chain-topology network.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerSpec {
    /// 1-based position in the chain.
    pub index: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub name: String,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: LayerKind,
    /// Label only; has no latency effect.
    #[cfg_attr(feature = "serde", serde(default))]
    pub activation: String,
}

impl LayerSpec {
    pub fn conv(index: usize, name: &str, filters: usize, kernel: usize, padding: Padding) -> Self {
        Self {
            index,
            name: name.to_string(),
            kind: LayerKind::Conv { filters, kernel: [kernel, kernel], padding },
            activation: "relu".to_string(),
        }
    }

    pub fn maxpool(index: usize, name: &str, window: usize) -> Self {
        Self {
            index,
            name: name.to_string(),
            kind: LayerKind::MaxPool { window: [window, window] },
            activation: "none".to_string(),
        }
    }

    pub fn dense(index: usize, name: &str, units: usize, activation: &str) -> Self {
        Self {
            index,
            name: name.to_string(),
            kind: LayerKind::Dense { units },
            activation: activation.to_string(),
        }
    }
}

/// Height x width x channels. Dense outputs are `1 x 1 x units`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorShape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl TensorShape {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub fn elements(&self) -> usize {
        self.h * self.w * self.c
    }
}

/// Cut-dependent quantities driving the latency model. Sizes in bits,
/// workloads in FLOPs per sample (except `xi_g`, which is per minibatch).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CutProfile {
    pub cut: usize,
    /// Device-side model size.
    pub xi_d: f64,
    /// Smashed data per sample.
    pub xi_s: f64,
    /// Smashed-data gradient per minibatch.
    pub xi_g: f64,
    pub gamma_d_f: f64,
    pub gamma_d_b: f64,
    pub gamma_s_f: f64,
    pub gamma_s_b: f64,
}

impl CutProfile {
    /// Total FP workload of the whole model per sample.
    pub fn total_forward(&self) -> f64 {
        self.gamma_d_f + self.gamma_s_f
    }

    pub fn total_backward(&self) -> f64 {
        self.gamma_d_b + self.gamma_s_b
    }

    /// Replaces every field the override sets.
    pub fn with_override(mut self, o: &ProfileOverride) -> Self {
        if let Some(v) = o.xi_d {
            self.xi_d = v;
        }
        if let Some(v) = o.xi_s {
            self.xi_s = v;
        }
        if let Some(v) = o.xi_g {
            self.xi_g = v;
        }
        if let Some(v) = o.gamma_d_f {
            self.gamma_d_f = v;
        }
        if let Some(v) = o.gamma_d_b {
            self.gamma_d_b = v;
        }
        if let Some(v) = o.gamma_s_f {
            self.gamma_s_f = v;
        }
        if let Some(v) = o.gamma_s_b {
            self.gamma_s_b = v;
        }
        self
    }
}

/// Explicit per-cut values (bits / FLOPs) that take precedence over computed ones.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProfileOverride {
    pub xi_d: Option<f64>,
    pub xi_s: Option<f64>,
    pub xi_g: Option<f64>,
    pub gamma_d_f: Option<f64>,
    pub gamma_d_b: Option<f64>,
    pub gamma_s_f: Option<f64>,
    pub gamma_s_b: Option<f64>,
}

impl ProfileOverride {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    pub batch: usize,
    pub bytes_per_value: usize,
    pub input: TensorShape,
    /// FLOPs charged per multiply-accumulate.
    pub flops_per_mac: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { batch: 16, bytes_per_value: 4, input: TensorShape::new(28, 28, 1), flops_per_mac: 1.0 }
    }
}

/// Checks index contiguity and the conv/pool-before-dense ordering.
pub fn validate_layers(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        bail!(Validation, "layer list is empty");
    }
    let mut indices: Vec<usize> = layers.iter().map(|l| l.index).collect();
    indices.sort_unstable();
    for (pos, &idx) in indices.iter().enumerate() {
        if idx != pos + 1 {
            bail!(Validation, "layer indices must be contiguous 1..{}, found {:?}", layers.len(), indices);
        }
    }
    let mut seen_dense = false;
    for l in sorted(layers) {
        match &l.kind {
            LayerKind::Dense { units } => {
                if *units == 0 {
                    bail!(Validation, "layer {} has zero units", l.index);
                }
                seen_dense = true;
            }
            LayerKind::Conv { filters, kernel, .. } => {
                if seen_dense {
                    bail!(Validation, "conv layer {} follows a dense layer", l.index);
                }
                if *filters == 0 || kernel[0] == 0 || kernel[1] == 0 {
                    bail!(Validation, "conv layer {} has a zero dimension", l.index);
                }
            }
            LayerKind::MaxPool { window } => {
                if seen_dense {
                    bail!(Validation, "maxpool layer {} follows a dense layer", l.index);
                }
                if window[0] == 0 || window[1] == 0 {
                    bail!(Validation, "maxpool layer {} has a zero window", l.index);
                }
            }
        }
    }
    Ok(())
}

fn sorted(layers: &[LayerSpec]) -> Vec<&LayerSpec> {
    let mut v: Vec<&LayerSpec> = layers.iter().collect();
    v.sort_by_key(|l| l.index);
    v
}

/// Output shape of `layer` applied to `input`.
pub fn output_shape(layer: &LayerSpec, input: TensorShape) -> Result<TensorShape> {
    match &layer.kind {
        LayerKind::Conv { filters, kernel, padding } => match padding {
            Padding::Same => Ok(TensorShape::new(input.h, input.w, *filters)),
            Padding::Valid => {
                if input.h < kernel[0] || input.w < kernel[1] {
                    bail!(
                        Shape,
                        "layer {} ({}): {}x{} kernel does not fit {}x{} input",
                        layer.index,
                        layer.name,
                        kernel[0],
                        kernel[1],
                        input.h,
                        input.w
                    );
                }
                Ok(TensorShape::new(input.h - kernel[0] + 1, input.w - kernel[1] + 1, *filters))
            }
        },
        LayerKind::MaxPool { window } => {
            if input.h < window[0] || input.w < window[1] {
                bail!(
                    Shape,
                    "layer {} ({}): {}x{} window does not fit {}x{} input",
                    layer.index,
                    layer.name,
                    window[0],
                    window[1],
                    input.h,
                    input.w
                );
            }
            Ok(TensorShape::new(input.h / window[0], input.w / window[1], input.c))
        }
        LayerKind::Dense { units } => Ok(TensorShape::new(1, 1, *units)),
    }
}

/// Forward multiply-accumulates of one layer for one sample.
pub fn layer_forward_flops(layer: &LayerSpec, input: TensorShape) -> Result<f64> {
    let out = output_shape(layer, input)?;
    Ok(match &layer.kind {
        LayerKind::Conv { filters, kernel, .. } => {
            (out.h * out.w) as f64 * (kernel[0] * kernel[1]) as f64 * input.c as f64 * *filters as f64
        }
        LayerKind::MaxPool { .. } => 0.0,
        LayerKind::Dense { units } => input.elements() as f64 * *units as f64,
    })
}

/// Trainable parameters (weights and biases) of one layer.
pub fn layer_params(layer: &LayerSpec, input: TensorShape) -> usize {
    match &layer.kind {
        LayerKind::Conv { filters, kernel, .. } => kernel[0] * kernel[1] * input.c * filters + filters,
        LayerKind::MaxPool { .. } => 0,
        LayerKind::Dense { units } => input.elements() * units + units,
    }
}

/// Per-layer walk result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerStats {
    pub output: TensorShape,
    pub flops: f64,
    pub params: usize,
}

/// Propagates shapes through the chain and records each layer's cost.
pub fn walk(layers: &[LayerSpec], input: TensorShape) -> Result<Vec<LayerStats>> {
    validate_layers(layers)?;
    let mut shape = input;
    let mut stats = Vec::with_capacity(layers.len());
    for layer in sorted(layers) {
        let flops = layer_forward_flops(layer, shape)?;
        let params = layer_params(layer, shape);
        shape = output_shape(layer, shape)?;
        stats.push(LayerStats { output: shape, flops, params });
    }
    Ok(stats)
}

fn cut_from_stats(stats: &[LayerStats], v: usize, opts: &ProfileOptions) -> CutProfile {
    let bits_per_value = opts.bytes_per_value as f64 * BITS_PER_BYTE;
    let total_flops: f64 = stats.iter().map(|s| s.flops).sum::<f64>() * opts.flops_per_mac;
    let device_flops: f64 = stats[..v].iter().map(|s| s.flops).sum::<f64>() * opts.flops_per_mac;
    let device_params: usize = stats[..v].iter().map(|s| s.params).sum();
    let last = v == stats.len();
    let smashed = if last { 0.0 } else { stats[v - 1].output.elements() as f64 * bits_per_value };
    // the server holds the remainder, so the split always conserves the total
    let server_flops = if last { 0.0 } else { total_flops - device_flops };
    CutProfile {
        cut: v,
        xi_d: device_params as f64 * bits_per_value,
        xi_s: smashed,
        xi_g: smashed * opts.batch as f64,
        gamma_d_f: device_flops,
        gamma_d_b: device_flops,
        gamma_s_f: server_flops,
        gamma_s_b: server_flops,
    }
}

/// Profile of cut layer `v` (1-based; `v = V` puts the whole model on the device).
pub fn profile_cut(layers: &[LayerSpec], v: usize, opts: &ProfileOptions) -> Result<CutProfile> {
    if v == 0 || v > layers.len() {
        bail!(Domain, "cut layer {} outside 1..={}", v, layers.len());
    }
    let stats = walk(layers, opts.input)?;
    Ok(cut_from_stats(&stats, v, opts))
}

/// One profile per cut `1..=V`, ascending.
pub fn enumerate_cuts(layers: &[LayerSpec], opts: &ProfileOptions) -> Result<Vec<CutProfile>> {
    let stats = walk(layers, opts.input)?;
    Ok((1..=stats.len()).map(|v| cut_from_stats(&stats, v, opts)).collect())
}

/// Applies per-cut overrides (keyed by cut index) on top of computed profiles.
pub fn resolve_profiles(
    computed: &[CutProfile],
    overrides: &BTreeMap<usize, ProfileOverride>,
) -> Vec<CutProfile> {
    computed
        .iter()
        .map(|p| match overrides.get(&p.cut) {
            Some(o) => p.with_override(o),
            None => *p,
        })
        .collect()
}

/// The 12-layer LeNet variant used throughout the simulations (6 conv, 3 pool,
/// 3 dense). CONV1/CONV2 are unpadded and CONV3..CONV6 keep their spatial
/// size, which yields a 3x3x128 tensor in front of FC1.
pub fn lenet() -> Vec<LayerSpec> {
    alloc::vec![
        LayerSpec::conv(1, "CONV1", 32, 3, Padding::Valid),
        LayerSpec::conv(2, "CONV2", 32, 3, Padding::Valid),
        LayerSpec::maxpool(3, "POOL1", 2),
        LayerSpec::conv(4, "CONV3", 64, 3, Padding::Same),
        LayerSpec::conv(5, "CONV4", 64, 3, Padding::Same),
        LayerSpec::maxpool(6, "POOL2", 2),
        LayerSpec::conv(7, "CONV5", 128, 3, Padding::Same),
        LayerSpec::conv(8, "CONV6", 128, 3, Padding::Same),
        LayerSpec::maxpool(9, "POOL3", 2),
        LayerSpec::dense(10, "FC1", 382, "relu"),
        LayerSpec::dense(11, "FC2", 192, "relu"),
        LayerSpec::dense(12, "FC3", 10, "softmax"),
    ]
}

/// Reference values for the POOL1 cut: 0.67 MB device model, 18 KB smashed
/// data per sample, 36.1 KB gradient per minibatch, 5.6 / 86.01 MFLOPs.
pub fn reference_pool1_override() -> ProfileOverride {
    ProfileOverride {
        xi_d: Some(mb_to_bits(0.67)),
        xi_s: Some(kb_to_bits(18.0)),
        xi_g: Some(kb_to_bits(36.1)),
        gamma_d_f: Some(5.6 * MFLOPS),
        gamma_d_b: Some(5.6 * MFLOPS),
        gamma_s_f: Some(86.01 * MFLOPS),
        gamma_s_b: Some(86.01 * MFLOPS),
    }
}

/// Reference values for the whole model on the device: 16.49 MB, 91.6 MFLOPs.
pub fn reference_full_model_override() -> ProfileOverride {
    ProfileOverride {
        xi_d: Some(mb_to_bits(16.49)),
        xi_s: Some(0.0),
        xi_g: Some(0.0),
        gamma_d_f: Some(91.6 * MFLOPS),
        gamma_d_b: Some(91.6 * MFLOPS),
        gamma_s_f: Some(0.0),
        gamma_s_b: Some(0.0),
    }
}

/// Overrides bundled with [`lenet`]: POOL1 (cut 3) and the full model (cut 12).
pub fn lenet_reference_overrides() -> BTreeMap<usize, ProfileOverride> {
    let mut m = BTreeMap::new();
    m.insert(3, reference_pool1_override());
    m.insert(12, reference_full_model_override());
    m
}
