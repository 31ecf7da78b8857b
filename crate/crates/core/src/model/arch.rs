//! Layer layouts and forward passes of the three networks.

use super::{Arch, BnBuffer, Model, ModelSpec, ParamStore, Stats};
use crate::error::{Error, Result};
use crate::tensor::{BnConfig, RunningStats, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
struct ConvL {
    name: String,
    w: usize,
    b: Option<usize>,
    stride: usize,
    pad: usize,
}

#[derive(Clone, Debug)]
struct BnL {
    gamma: usize,
    beta: usize,
    buf: usize,
}

#[derive(Clone, Debug)]
struct FcL {
    w: usize,
    b: Option<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct LcnnNet {
    /// Every convolution is followed by max-feature-map; `true` marks a
    /// max-pool after it.
    convs: Vec<(ConvL, bool)>,
    fc6: FcL,
    fc7: FcL,
}

#[derive(Clone, Debug)]
struct Block {
    name: String,
    convs: Vec<(ConvL, BnL)>,
    shortcut: Option<(ConvL, BnL)>,
    se: Option<(FcL, FcL)>,
}

#[derive(Clone, Debug)]
pub(crate) struct ResidualNet {
    stem: (ConvL, BnL),
    blocks: Vec<Block>,
    fc: FcL,
}

#[derive(Clone, Debug)]
pub(crate) enum Net {
    Lcnn(LcnnNet),
    Residual(ResidualNet),
}

struct Builder {
    rng: ChaCha8Rng,
    /// Weight variance is `gain / fan_in`: 2 ahead of ReLU, 1 ahead of
    /// max-feature-map, which preserves the second moment.
    gain: f64,
    store: ParamStore,
    buffers: Vec<BnBuffer>,
}

impl Builder {
    /// Normal weights scaled by fan-in, zero biases.
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, bias: bool) -> ConvL {
        let std = (self.gain / (cin * k * k) as f64).sqrt();
        let w = self.store.add(
            format!("{name}.weight"),
            Tensor::randn(&[cout, cin, k, k], std, &mut self.rng),
        );
        let b = bias.then(|| self.store.add(format!("{name}.bias"), Tensor::zeros(&[cout])));
        ConvL {
            name: name.to_string(),
            w,
            b,
            stride,
            pad: k / 2,
        }
    }

    fn bn(&mut self, name: &str, c: usize) -> BnL {
        let gamma = self.store.add(format!("{name}.weight"), Tensor::full(&[c], 1.0));
        let beta = self.store.add(format!("{name}.bias"), Tensor::zeros(&[c]));
        self.buffers.push(BnBuffer {
            name: name.to_string(),
            stats: RunningStats::new(c),
        });
        BnL {
            gamma,
            beta,
            buf: self.buffers.len() - 1,
        }
    }

    fn fc(&mut self, name: &str, din: usize, dout: usize, bias: bool) -> FcL {
        let std = (self.gain / din as f64).sqrt();
        let w = self.store.add(
            format!("{name}.weight"),
            Tensor::randn(&[dout, din], std, &mut self.rng),
        );
        let b = bias.then(|| self.store.add(format!("{name}.bias"), Tensor::zeros(&[dout])));
        FcL { w, b }
    }
}

pub(super) fn build(spec: &ModelSpec, arch: Arch, seed: u64) -> Result<Model> {
    spec.validate()?;
    let spec = ModelSpec {
        arch,
        ..spec.clone()
    };
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(seed),
        gain: if arch == Arch::Lcnn { 1.0 } else { 2.0 },
        store: ParamStore::default(),
        buffers: Vec::new(),
    };
    let net = match arch {
        Arch::Lcnn => Net::Lcnn(lcnn(&mut b, &spec)?),
        Arch::Resnet18 => Net::Residual(residual(&mut b, &spec, false)),
        Arch::Senet50 => Net::Residual(residual(&mut b, &spec, true)),
    };
    Ok(Model {
        spec,
        params: b.store,
        buffers: b.buffers,
        net,
        bn_cfg: BnConfig::default(),
    })
}

const POOL_K: (usize, usize) = (2, 2);
const POOL_S: (usize, usize) = (2, 3);

fn lcnn(b: &mut Builder, spec: &ModelSpec) -> Result<LcnnNet> {
    // (name, kernel, output channels before MFM, pool after)
    const LAYERS: [(&str, usize, usize, bool); 9] = [
        ("conv1", 5, 32, true),
        ("conv2a", 1, 32, false),
        ("conv2b", 3, 48, true),
        ("conv3a", 1, 48, false),
        ("conv3b", 3, 64, true),
        ("conv4a", 1, 64, false),
        ("conv4b", 3, 32, true),
        ("conv5a", 1, 32, false),
        ("conv5b", 3, 32, true),
    ];
    let mut cin = spec.n_input_channels;
    let (mut h, mut w) = (spec.input_freq, spec.input_frames);
    let mut convs = Vec::new();
    for (name, k, cout, pool) in LAYERS {
        convs.push((b.conv(name, cin, cout, k, 1, true), pool));
        cin = cout / 2;
        if pool {
            if h < POOL_K.0 || w < POOL_K.1 {
                return Err(Error::Config(format!(
                    "lcnn input {}×{} is too small for five pooling stages",
                    spec.input_freq, spec.input_frames
                )));
            }
            h = (h - POOL_K.0) / POOL_S.0 + 1;
            w = (w - POOL_K.1) / POOL_S.1 + 1;
        }
    }
    let fc6 = b.fc("fc6", cin * h * w, 128, true);
    let fc7 = b.fc("fc7", 64, spec.n_classes, false);
    Ok(LcnnNet { convs, fc6, fc7 })
}

fn residual(b: &mut Builder, spec: &ModelSpec, bottleneck: bool) -> ResidualNet {
    const WIDTHS: [usize; 4] = [16, 32, 64, 128];
    const SE_REDUCTION: usize = 16;
    let units: [usize; 4] = if bottleneck { [3, 4, 6, 3] } else { [2, 2, 2, 2] };
    let expansion = if bottleneck { 2 } else { 1 };

    let stem = (
        b.conv("stem.conv", spec.n_input_channels, 16, 7, 2, false),
        b.bn("stem.bn", 16),
    );
    let mut cin = 16;
    let mut blocks = Vec::new();
    for (s, (&width, &n)) in WIDTHS.iter().zip(&units).enumerate() {
        for i in 0..n {
            let name = format!("layer{}.{i}", s + 1);
            let stride = if i == 0 && s > 0 { 2 } else { 1 };
            let cout = width * expansion;
            let convs = if bottleneck {
                vec![
                    (b.conv(&format!("{name}.conv1"), cin, width, 1, 1, false), b.bn(&format!("{name}.bn1"), width)),
                    (b.conv(&format!("{name}.conv2"), width, width, 3, stride, false), b.bn(&format!("{name}.bn2"), width)),
                    (b.conv(&format!("{name}.conv3"), width, cout, 1, 1, false), b.bn(&format!("{name}.bn3"), cout)),
                ]
            } else {
                vec![
                    (b.conv(&format!("{name}.conv1"), cin, width, 3, stride, false), b.bn(&format!("{name}.bn1"), width)),
                    (b.conv(&format!("{name}.conv2"), width, width, 3, 1, false), b.bn(&format!("{name}.bn2"), width)),
                ]
            };
            let se = bottleneck.then(|| {
                let r = cout / SE_REDUCTION;
                (
                    b.fc(&format!("{name}.se.fc1"), cout, r, false),
                    b.fc(&format!("{name}.se.fc2"), r, cout, false),
                )
            });
            let shortcut = (stride != 1 || cin != cout).then(|| {
                (
                    b.conv(&format!("{name}.downsample.conv"), cin, cout, 1, stride, false),
                    b.bn(&format!("{name}.downsample.bn"), cout),
                )
            });
            blocks.push(Block {
                name,
                convs,
                shortcut,
                se,
            });
            cin = cout;
        }
    }
    let fc = b.fc("fc", cin, spec.n_classes, false);
    ResidualNet { stem, blocks, fc }
}

type Trace<'a> = Option<&'a mut Vec<(String, Vec<usize>)>>;

struct Run<'t, 'p, 's, 'b> {
    tape: &'t mut Tape<f32>,
    params: &'p [Var],
    stats: &'s mut Stats<'b>,
    cfg: BnConfig,
}

impl Run<'_, '_, '_, '_> {
    fn conv(&mut self, c: &ConvL, x: Var) -> Result<Var> {
        let (s, p) = (c.stride, c.pad);
        self.tape
            .conv2d(x, self.params[c.w], c.b.map(|b| self.params[b]), (s, s), (p, p))
    }

    fn bn(&mut self, l: &BnL, x: Var) -> Result<Var> {
        let (g, b) = (self.params[l.gamma], self.params[l.beta]);
        let mode = self.stats.mode(l.buf);
        self.tape.batchnorm2d(x, g, b, mode, self.cfg)
    }

    fn fc(&mut self, l: &FcL, x: Var) -> Result<Var> {
        self.tape.linear(x, self.params[l.w], l.b.map(|b| self.params[b]))
    }
}

fn record(trace: &mut Trace<'_>, tape: &Tape<f32>, name: &str, v: Var) {
    if let Some(t) = trace.as_deref_mut() {
        t.push((name.to_string(), tape.value(v).shape().to_vec()));
    }
}

impl Net {
    pub(crate) fn run(
        &self,
        tape: &mut Tape<f32>,
        params: &[Var],
        stats: &mut Stats<'_>,
        cfg: BnConfig,
        input: Var,
        mut trace: Trace<'_>,
    ) -> Result<Var> {
        let mut r = Run {
            tape,
            params,
            stats,
            cfg,
        };
        match self {
            Net::Lcnn(net) => {
                let mut x = input;
                let mut pools = 0;
                for (conv, pool) in &net.convs {
                    x = r.conv(conv, x)?;
                    record(&mut trace, r.tape, &conv.name, x);
                    x = r.tape.mfm(x)?;
                    record(&mut trace, r.tape, &conv.name.replace("conv", "mfm"), x);
                    if *pool {
                        pools += 1;
                        x = r.tape.maxpool2d(x, POOL_K, POOL_S)?;
                        record(&mut trace, r.tape, &format!("pool{pools}"), x);
                    }
                }
                x = r.tape.flatten(x)?;
                x = r.fc(&net.fc6, x)?;
                record(&mut trace, r.tape, "fc6", x);
                x = r.tape.mfm(x)?;
                record(&mut trace, r.tape, "mfm6", x);
                x = r.fc(&net.fc7, x)?;
                record(&mut trace, r.tape, "fc7", x);
                Ok(x)
            }
            Net::Residual(net) => {
                let mut x = r.conv(&net.stem.0, input)?;
                x = r.bn(&net.stem.1, x)?;
                x = r.tape.relu(x)?;
                record(&mut trace, r.tape, "stem", x);
                x = r.tape.maxpool2d(x, (3, 3), (2, 2))?;
                record(&mut trace, r.tape, "stem.pool", x);
                for block in &net.blocks {
                    let mut h = x;
                    let last = block.convs.len() - 1;
                    for (i, (conv, bn)) in block.convs.iter().enumerate() {
                        h = r.conv(conv, h)?;
                        h = r.bn(bn, h)?;
                        if i < last {
                            h = r.tape.relu(h)?;
                        }
                    }
                    if let Some((fc1, fc2)) = &block.se {
                        let mut s = r.tape.global_avg_pool(h)?;
                        s = r.fc(fc1, s)?;
                        s = r.tape.relu(s)?;
                        s = r.fc(fc2, s)?;
                        s = r.tape.sigmoid(s)?;
                        h = r.tape.scale_channels(h, s)?;
                    }
                    let skip = match &block.shortcut {
                        Some((conv, bn)) => {
                            let s = r.conv(conv, x)?;
                            r.bn(bn, s)?
                        }
                        None => x,
                    };
                    x = r.tape.add(h, skip)?;
                    x = r.tape.relu(x)?;
                    record(&mut trace, r.tape, &block.name, x);
                }
                x = r.tape.global_avg_pool(x)?;
                x = r.fc(&net.fc, x)?;
                record(&mut trace, r.tape, "fc", x);
                Ok(x)
            }
        }
    }
}
