//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use multires::tensor::{BnConfig, BnMode, RunningStats, Tape, Tensor, Var};
use multires::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub type OpFn = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

/// One differentiable op with a generator of random inputs.
pub struct GradCase {
    pub name: &'static str,
    pub inputs: Box<dyn Fn(u64) -> Vec<Tensor<f64>>>,
    pub op: OpFn,
}

/// Every op the autodiff tape records, at small random shapes.
pub fn grad_cases() -> Vec<GradCase> {
    fn case(
        name: &'static str,
        inputs: impl Fn(u64) -> Vec<Tensor<f64>> + 'static,
        op: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'static,
    ) -> GradCase {
        GradCase {
            name,
            inputs: Box::new(inputs),
            op: Box::new(op),
        }
    }
    vec![
        case(
            "conv2d 3x3 pad 1",
            |s| vec![randn(&[2, 2, 5, 4], s), randn(&[3, 2, 3, 3], s + 1), randn(&[3], s + 2)],
            |t, v| t.conv2d(v[0], v[1], Some(v[2]), (1, 1), (1, 1)),
        ),
        case(
            "conv2d 5x5 stride 2",
            |s| vec![randn(&[1, 2, 7, 8], s), randn(&[2, 2, 5, 5], s + 1)],
            |t, v| t.conv2d(v[0], v[1], None, (2, 2), (2, 2)),
        ),
        case(
            "conv2d 1x1",
            |s| vec![randn(&[2, 3, 3, 3], s), randn(&[4, 3, 1, 1], s + 1), randn(&[4], s + 2)],
            |t, v| t.conv2d(v[0], v[1], Some(v[2]), (1, 1), (0, 0)),
        ),
        case(
            "maxpool2d 2x2 stride (2,3)",
            |s| vec![randn(&[2, 2, 5, 8], s)],
            |t, v| t.maxpool2d(v[0], (2, 2), (2, 3)),
        ),
        case(
            "maxpool2d 3x3 stride 2",
            |s| vec![randn(&[1, 2, 7, 7], s)],
            |t, v| t.maxpool2d(v[0], (3, 3), (2, 2)),
        ),
        case("mfm 4d", |s| vec![randn(&[2, 4, 3, 3], s)], |t, v| t.mfm(v[0])),
        case("mfm 2d", |s| vec![randn(&[3, 6], s)], |t, v| t.mfm(v[0])),
        case(
            "linear",
            |s| vec![randn(&[3, 5], s), randn(&[4, 5], s + 1), randn(&[4], s + 2)],
            |t, v| t.linear(v[0], v[1], Some(v[2])),
        ),
        case(
            "batchnorm2d train",
            |s| vec![randn(&[3, 2, 3, 2], s), randn(&[2], s + 1), randn(&[2], s + 2)],
            |t, v| {
                let mut stats = RunningStats::new(2);
                t.batchnorm2d(v[0], v[1], v[2], BnMode::Train(&mut stats), BnConfig::default())
            },
        ),
        case(
            "batchnorm2d eval",
            |s| vec![randn(&[2, 3, 2, 2], s), randn(&[3], s + 1), randn(&[3], s + 2)],
            |t, v| {
                let stats = RunningStats {
                    mean: vec![0.1, -0.2, 0.3],
                    var: vec![0.5, 1.5, 2.0],
                    batches: 1,
                };
                t.batchnorm2d(v[0], v[1], v[2], BnMode::Eval(&stats), BnConfig::default())
            },
        ),
        case("relu", |s| vec![randn(&[2, 3, 2, 2], s)], |t, v| t.relu(v[0])),
        case("sigmoid", |s| vec![randn(&[4, 5], s)], |t, v| t.sigmoid(v[0])),
        case(
            "global_avg_pool",
            |s| vec![randn(&[2, 3, 3, 4], s)],
            |t, v| t.global_avg_pool(v[0]),
        ),
        case(
            "add",
            |s| vec![randn(&[2, 3, 2, 2], s), randn(&[2, 3, 2, 2], s + 1)],
            |t, v| t.add(v[0], v[1]),
        ),
        case(
            "scale_channels",
            |s| vec![randn(&[2, 3, 2, 2], s), randn(&[2, 3], s + 1)],
            |t, v| t.scale_channels(v[0], v[1]),
        ),
        case(
            "flatten",
            |s| vec![randn(&[2, 2, 2, 3], s)],
            |t, v| t.flatten(v[0]),
        ),
        case(
            "softmax_cross_entropy",
            |s| vec![randn(&[4, 10], s)],
            |t, v| t.softmax_cross_entropy(v[0], &[0, 3, 9, 3]),
        ),
        case(
            "squeeze-excitation block",
            |s| vec![randn(&[2, 4, 3, 3], s), randn(&[2, 4], s + 1), randn(&[4, 2], s + 2)],
            |t, v| {
                let s = t.global_avg_pool(v[0])?;
                let s = t.linear(s, v[1], None)?;
                let s = t.relu(s)?;
                let s = t.linear(s, v[2], None)?;
                let s = t.sigmoid(s)?;
                t.scale_channels(v[0], s)
            },
        ),
    ]
}

/// Frame-index oracle for the unified segmentation: tile cyclically to the
/// smallest multiple of `m`, then cut every `m − l` frames.
pub fn brute_force_segments(n: usize, m: usize, l: usize) -> (usize, Vec<Vec<usize>>) {
    let mut extended = m;
    while extended < n {
        extended += m;
    }
    let tiled: Vec<usize> = (0..extended).map(|i| i % n).collect();
    let mut segs = Vec::new();
    let mut off = 0;
    while off + m <= extended {
        segs.push(tiled[off..off + m].to_vec());
        off += m - l;
    }
    (extended, segs)
}

/// EER by brute force: FAR and FRR counted at thresholds below, between and
/// above all scores, then the FAR/FRR crossing interpolated.
pub fn brute_force_eer(bona: &[f64], spoof: &[f64]) -> f64 {
    let mut all: Vec<f64> = bona.iter().chain(spoof).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut thresholds = vec![all[0] - 1.0];
    for w in all.windows(2) {
        thresholds.push(0.5 * (w[0] + w[1]));
    }
    thresholds.push(all[all.len() - 1] + 1.0);
    let rates: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let far = spoof.iter().filter(|&&s| s >= t).count() as f64 / spoof.len() as f64;
            let frr = bona.iter().filter(|&&s| s < t).count() as f64 / bona.len() as f64;
            (far, frr)
        })
        .collect();
    for k in 1..rates.len() {
        let (f0, r0) = rates[k - 1];
        let (f1, r1) = rates[k];
        if f1 - r1 <= 0.0 {
            if f1 == r1 {
                return f1;
            }
            let a = (f0 - r0) / ((f0 - r0) - (f1 - r1));
            return f0 + a * (f1 - f0);
        }
    }
    unreachable!("FAR reaches 0 while FRR reaches 1")
}

/// Closed-form number of points on the simplex grid: C(K + n − 1, n − 1).
pub fn simplex_count(n: usize, k: usize) -> usize {
    let mut c = 1usize;
    for i in 1..n {
        c = c * (k + i) / i;
    }
    c
}

/// Hand count of every parameter, layer by layer, from the architecture
/// tables alone (no builder involved).
pub fn hand_count(arch: &str, n_c: usize) -> usize {
    let conv = |cin: usize, cout: usize, k: usize, bias: bool| cin * cout * k * k + if bias { cout } else { 0 };
    let bn = |c: usize| 2 * c;
    match arch {
        "lcnn" => {
            // (cin, cout-before-MFM, kernel); MFM halves channels
            let layers = [
                (n_c, 32, 5),
                (16, 32, 1),
                (16, 48, 3),
                (24, 48, 1),
                (24, 64, 3),
                (32, 64, 1),
                (32, 32, 3),
                (16, 32, 1),
                (16, 32, 3),
            ];
            let convs: usize = layers.iter().map(|&(i, o, k)| conv(i, o, k, true)).sum();
            let fc6 = 16 * 8 * 2 * 128 + 128;
            let fc7 = 64 * 10;
            convs + fc6 + fc7
        }
        "resnet18" => {
            let mut total = conv(n_c, 16, 7, false) + bn(16);
            let mut cin = 16;
            for (stage, &w) in [16, 32, 64, 128].iter().enumerate() {
                for block in 0..2 {
                    total += conv(cin, w, 3, false) + bn(w) + conv(w, w, 3, false) + bn(w);
                    if block == 0 && stage > 0 {
                        total += conv(cin, w, 1, false) + bn(w);
                    }
                    cin = w;
                }
            }
            total + 128 * 10
        }
        "senet50" => {
            let mut total = conv(n_c, 16, 7, false) + bn(16);
            let mut cin = 16;
            for (&w, &units) in [16, 32, 64, 128].iter().zip(&[3, 4, 6, 3]) {
                let out = 2 * w;
                for block in 0..units {
                    total += conv(cin, w, 1, false) + bn(w);
                    total += conv(w, w, 3, false) + bn(w);
                    total += conv(w, out, 1, false) + bn(out);
                    total += 2 * out * (out / 16);
                    if block == 0 {
                        total += conv(cin, out, 1, false) + bn(out);
                    }
                    cin = out;
                }
            }
            total + 256 * 10
        }
        other => panic!("unknown architecture {other}"),
    }
}

/// Score and label tables for bonafide scores `b*` and spoof scores `s*`.
pub fn labelled_scores(
    bona: &[f64],
    spoof: &[f64],
) -> (multires::eval::ScoreTable, multires::eval::LabelTable) {
    use multires::eval::{Label, LabelTable, ScoreTable};
    let mut s = ScoreTable::new();
    let mut l = LabelTable::new();
    for (i, &v) in bona.iter().enumerate() {
        s.insert(format!("b{i:04}"), v).unwrap();
        l.insert(format!("b{i:04}"), Label::Bonafide).unwrap();
    }
    for (i, &v) in spoof.iter().enumerate() {
        s.insert(format!("s{i:04}"), v).unwrap();
        l.insert(format!("s{i:04}"), Label::Spoof("AA".into())).unwrap();
    }
    (s, l)
}

/// Random score sets with a shift between the classes; scores are
/// quantized so ties occur.
pub fn random_score_sets(seed: u64) -> (Vec<f64>, Vec<f64>) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.gen_range(1..40);
    let ns = rng.gen_range(1..40);
    let shift = rng.gen_range(-1.0..3.0);
    let q = if seed.is_multiple_of(3) { 4.0 } else { 1e6 };
    let mut draw = |mu: f64| ((mu + rng.gen_range(-2.0..2.0)) * q).round() / q;
    let bona = (0..nb).map(|_| draw(shift)).collect();
    let spoof = (0..ns).map(|_| draw(0.0)).collect();
    (bona, spoof)
}
