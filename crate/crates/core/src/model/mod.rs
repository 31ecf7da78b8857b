//! The three reference networks and their parameter accounting.
//!
//! Only the first convolution depends on the number of stacked input maps
//! `n_c`, so widening an architecture from one map to `n_c` maps adds
//! exactly `(n_c − 1)·kH·kW·c₁` weights.

mod arch;
mod checkpoint;

pub use checkpoint::{decode as decode_checkpoint, encode as encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};

use crate::error::{Error, Result};
use crate::tensor::{BnConfig, BnMode, RunningStats, Tape, Tensor, Var};
use arch::Net;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

/// Architecture family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arch {
    Lcnn,
    Resnet18,
    Senet50,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Lcnn, Arch::Resnet18, Arch::Senet50];

    /// `(kernel size, output channels)` of the first convolution.
    pub fn first_conv(self) -> (usize, usize) {
        match self {
            Arch::Lcnn => (5, 32),
            Arch::Resnet18 | Arch::Senet50 => (7, 16),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Lcnn => "lcnn",
            Arch::Resnet18 => "resnet18",
            Arch::Senet50 => "senet50",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lcnn" => Ok(Arch::Lcnn),
            "resnet18" => Ok(Arch::Resnet18),
            "senet50" => Ok(Arch::Senet50),
            other => Err(Error::Config(format!(
                "unknown architecture '{other}' (expected lcnn, resnet18 or senet50)"
            ))),
        }
    }
}

/// Declarative description of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub arch: Arch,
    /// Stacked feature maps at the input (n_c).
    pub n_input_channels: usize,
    pub n_classes: usize,
    /// Input height: frequency bins.
    pub input_freq: usize,
    /// Input width: frames per segment.
    pub input_frames: usize,
}

impl ModelSpec {
    pub fn new(arch: Arch, n_input_channels: usize) -> Self {
        Self {
            arch,
            n_input_channels,
            n_classes: 10,
            input_freq: 257,
            input_frames: 400,
        }
    }

    /// Output channels of the first convolution (c₁).
    pub fn c1(&self) -> usize {
        self.arch.first_conv().1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_input_channels == 0 {
            return Err(Error::Config("n_input_channels must be at least 1".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Config(format!(
                "n_classes = {} but at least 2 are required",
                self.n_classes
            )));
        }
        if self.input_freq == 0 || self.input_frames == 0 {
            return Err(Error::Config("input size must be positive".into()));
        }
        Ok(())
    }
}

/// Same architecture with a different number of stacked input maps; only the
/// first convolution's input dimension changes.
pub fn set_input_channels(spec: &ModelSpec, n_c: usize) -> Result<ModelSpec> {
    if n_c == 0 {
        return Err(Error::Config(format!("input channel count must be at least 1, got {n_c}")));
    }
    Ok(ModelSpec {
        n_input_channels: n_c,
        ..spec.clone()
    })
}

/// Named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor<f32>,
}

/// Ordered registry of parameters with unique hierarchical names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    /// Register a parameter; names must be unique.
    pub fn insert(&mut self, name: String, value: Tensor<f32>) -> Result<usize> {
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Parameter { name, value });
        Ok(self.params.len() - 1)
    }

    pub(crate) fn add(&mut self, name: String, value: Tensor<f32>) -> usize {
        self.insert(name, value).expect("builder names are unique")
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn as_slice(&self) -> &[Parameter] {
        &self.params
    }

    pub fn as_mut_slice(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn total(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Running statistics of one batch-normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BnBuffer {
    pub name: String,
    pub stats: RunningStats<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A realized network: spec, parameters, running statistics and layout.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    params: ParamStore,
    buffers: Vec<BnBuffer>,
    net: Net,
    bn_cfg: BnConfig,
}

/// Segments per inference chunk; batch norm in eval mode is per-sample, so
/// chunking does not change results.
const INFER_CHUNK: usize = 8;

/// Variables bound on a tape by [`Model::forward_on_tape`].
pub struct Bound {
    pub logits: Var,
    /// One variable per parameter, in registry order.
    pub params: Vec<Var>,
}

impl Model {
    /// Build the architecture named by `spec`, initialized from `seed`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        match spec.arch {
            Arch::Lcnn => build_lcnn(spec, seed),
            Arch::Resnet18 => build_resnet18(spec, seed),
            Arch::Senet50 => build_senet50(spec, seed),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn buffers(&self) -> &[BnBuffer] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [BnBuffer] {
        &mut self.buffers
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let [_, c, h, w] = shape else {
            return Err(Error::dim(
                "forward",
                format!("expected N×n_c×F×T input, got {shape:?}"),
            ));
        };
        if *c != self.spec.n_input_channels {
            return Err(Error::dim(
                "forward",
                format!(
                    "input has {c} channels but the {} spec expects n_input_channels = {}",
                    self.spec.arch, self.spec.n_input_channels
                ),
            ));
        }
        if self.spec.arch == Arch::Lcnn
            && (*h != self.spec.input_freq || *w != self.spec.input_frames)
        {
            return Err(Error::dim(
                "forward",
                format!(
                    "lcnn built for {}×{} inputs, got {h}×{w}",
                    self.spec.input_freq, self.spec.input_frames
                ),
            ));
        }
        Ok(())
    }

    /// Record the network on `tape`, starting from the input variable.
    ///
    /// Parameters become leaves that require gradients. In train mode batch
    /// statistics are used and running statistics are updated.
    pub fn forward_on_tape(&mut self, tape: &mut Tape<f32>, input: Var, mode: Mode) -> Result<Bound> {
        self.check_input(tape.value(input).shape())?;
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), true))
            .collect();
        let logits = {
            let mut stats = match mode {
                Mode::Train => Stats::Train(&mut self.buffers),
                Mode::Eval => Stats::Eval(&self.buffers),
            };
            self.net
                .run(tape, &params, &mut stats, self.bn_cfg, input, None)?
        };
        Ok(Bound { logits, params })
    }

    /// Logits for a batch. Train mode uses batch statistics and updates the
    /// running statistics; eval mode is deterministic and side-effect free.
    pub fn forward(&mut self, batch: &Tensor<f32>, mode: Mode) -> Result<Tensor<f32>> {
        match mode {
            Mode::Eval => self.infer(batch),
            Mode::Train => {
                let mut tape = Tape::new();
                let x = tape.leaf(batch.clone(), false);
                let bound = self.forward_on_tape(&mut tape, x, Mode::Train)?;
                Ok(tape.value(bound.logits).clone())
            }
        }
    }

    /// Eval-mode logits, computed in chunks to bound memory.
    pub fn infer(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check_input(batch.shape())?;
        let n = batch.shape()[0];
        let mut logits = Vec::with_capacity(n * self.spec.n_classes);
        let mut start = 0;
        while start < n {
            let end = (start + INFER_CHUNK).min(n);
            let chunk = batch.narrow(start, end)?;
            let out = self.eval_chunk(chunk, None)?;
            logits.extend_from_slice(out.data());
            start = end;
        }
        Tensor::new(vec![n, self.spec.n_classes], logits)
    }

    fn eval_chunk(
        &self,
        chunk: Tensor<f32>,
        trace: Option<&mut Vec<(String, Vec<usize>)>>,
    ) -> Result<Tensor<f32>> {
        let mut tape = Tape::new();
        let x = tape.leaf(chunk, false);
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), false))
            .collect();
        let mut stats = Stats::Eval(&self.buffers);
        let out = self
            .net
            .run(&mut tape, &params, &mut stats, self.bn_cfg, x, trace)?;
        Ok(tape.value(out).clone())
    }

    /// Output shape after every named layer for an eval-mode pass.
    pub fn shape_trace(&self, batch: &Tensor<f32>) -> Result<Vec<(String, Vec<usize>)>> {
        self.check_input(batch.shape())?;
        let mut trace = Vec::new();
        self.eval_chunk(batch.clone(), Some(&mut trace))?;
        Ok(trace)
    }

    /// Train-mode forward, mean cross-entropy and parameter gradients.
    pub fn loss_and_grads(
        &mut self,
        batch: &Tensor<f32>,
        targets: &[usize],
    ) -> Result<(f32, Vec<Tensor<f32>>)> {
        let mut tape = Tape::new();
        let x = tape.leaf(batch.clone(), false);
        let bound = self.forward_on_tape(&mut tape, x, Mode::Train)?;
        let loss = tape.softmax_cross_entropy(bound.logits, targets)?;
        let loss_value = tape.value(loss).data()[0];
        let mut grads = tape.backward(loss)?;
        let g = bound
            .params
            .iter()
            .zip(self.params.iter())
            .map(|(&v, p)| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
            })
            .collect();
        Ok((loss_value, g))
    }
}

pub(crate) enum Stats<'a> {
    Train(&'a mut [BnBuffer]),
    Eval(&'a [BnBuffer]),
}

impl Stats<'_> {
    pub(crate) fn mode(&mut self, idx: usize) -> BnMode<'_, f32> {
        match self {
            Stats::Train(b) => BnMode::Train(&mut b[idx].stats),
            Stats::Eval(b) => BnMode::Eval(&b[idx].stats),
        }
    }
}

pub fn build_lcnn(spec: &ModelSpec, seed: u64) -> Result<Model> {
    arch::build(spec, Arch::Lcnn, seed)
}

pub fn build_resnet18(spec: &ModelSpec, seed: u64) -> Result<Model> {
    arch::build(spec, Arch::Resnet18, seed)
}

pub fn build_senet50(spec: &ModelSpec, seed: u64) -> Result<Model> {
    arch::build(spec, Arch::Senet50, seed)
}

/// Parameter accounting of a built model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamReport {
    /// Layer name (parameter name without its `.weight`/`.bias` suffix) → count.
    pub per_layer: Vec<(String, usize)>,
    pub total: usize,
    /// `total` minus the total of the same architecture with one input map.
    pub delta_vs_single_channel: usize,
}

pub fn count_parameters(model: &Model) -> Result<ParamReport> {
    let mut per_layer: Vec<(String, usize)> = Vec::new();
    for p in model.params().iter() {
        let layer = p
            .name
            .rsplit_once('.')
            .map_or(p.name.as_str(), |(head, _)| head);
        match per_layer.last_mut() {
            Some((name, count)) if name == layer => *count += p.value.len(),
            _ => per_layer.push((layer.to_string(), p.value.len())),
        }
    }
    let total = per_layer.iter().map(|(_, c)| c).sum();
    let single = if model.spec().n_input_channels == 1 {
        total
    } else {
        let spec = set_input_channels(model.spec(), 1)?;
        Model::build(&spec, 0)?.params().total()
    };
    Ok(ParamReport {
        per_layer,
        total,
        delta_vs_single_channel: total - single,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arch_names_round_trip() {
        for a in Arch::ALL {
            assert_eq!(a.to_string().parse::<Arch>().unwrap(), a);
        }
        assert!("vgg".parse::<Arch>().is_err());
    }

    #[test]
    fn set_input_channels_touches_only_the_channel_count() {
        let spec = ModelSpec::new(Arch::Lcnn, 1);
        let wide = set_input_channels(&spec, 3).unwrap();
        assert_eq!(wide.n_input_channels, 3);
        assert_eq!(ModelSpec { n_input_channels: 1, ..wide }, spec);
        assert!(set_input_channels(&spec, 0).is_err());
    }

    #[test]
    fn totals_and_widening_deltas() {
        for (arch, total, per_extra_map) in [
            (Arch::Lcnn, 73_504, 800),
            (Arch::Resnet18, 701_808, 784),
            (Arch::Senet50, 1_094_640, 784),
        ] {
            for n_c in 1..=3 {
                let m = Model::build(&ModelSpec::new(arch, n_c), 0).unwrap();
                let r = count_parameters(&m).unwrap();
                assert_eq!(r.total, total + (n_c - 1) * per_extra_map, "{arch} n_c={n_c}");
                assert_eq!(r.delta_vs_single_channel, (n_c - 1) * per_extra_map);
            }
        }
    }

    #[test]
    fn lcnn_layers_are_grouped() {
        let m = Model::build(&ModelSpec::new(Arch::Lcnn, 1), 0).unwrap();
        let r = count_parameters(&m).unwrap();
        assert_eq!(r.per_layer[0], ("conv1".to_string(), 5 * 5 * 32 + 32));
        assert_eq!(r.per_layer.last().unwrap(), &("fc7".to_string(), 640));
        assert_eq!(r.per_layer.len(), 11);
    }

    #[test]
    fn spec_validation() {
        let mut spec = ModelSpec::new(Arch::Resnet18, 1);
        spec.n_classes = 1;
        assert!(spec.validate().is_err());
        assert!(Model::build(&spec, 0).is_err());
    }
}
