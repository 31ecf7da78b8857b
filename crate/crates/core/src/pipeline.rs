//! End-to-end steps shared by the command line and the examples:
//! extraction, segmentation, training with per-epoch selection, scoring.

use crate::data::{class_index, read_wav, ManifestEntry, RunConfig};
use crate::dsp::{
    extract_multi_resolution, unify_feature_map, AudioBuffer, FeatureCache, FeatureMap,
    MultiResStack,
};
use crate::error::{Error, Result};
use crate::eval::{compute_eer, utterance_score, LabelTable, ScoreTable};
use crate::model::{save_checkpoint, Model};
use crate::tensor::Tensor;
use crate::train::{select_best, train_epoch, OptimizerState, Sample};
use rayon::prelude::*;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Multi-resolution maps of one audio buffer in `cfg.windows_ms` order.
/// Audio shorter than the longest window is repeated first.
pub fn extract_audio(audio: &AudioBuffer, cfg: &RunConfig) -> Result<Vec<FeatureMap>> {
    let mr = cfg.multires();
    let need = mr.max_win_len()?;
    if audio.len() < need {
        extract_multi_resolution(&audio.repeat_to_length(need), &mr)
    } else {
        extract_multi_resolution(audio, &mr)
    }
}

fn extract_entry(e: &ManifestEntry, cfg: &RunConfig) -> Result<Vec<FeatureMap>> {
    let audio = read_wav(&e.audio_path, Some(cfg.spectrogram.sample_rate))?;
    let audio = AudioBuffer::new(audio.samples().to_vec(), audio.sample_rate(), e.utt_id.clone())?;
    extract_audio(&audio, cfg)
}

/// Feature-cache path of an utterance.
pub fn cache_path(dir: &Path, utt_id: &str) -> PathBuf {
    dir.join(format!("{utt_id}.mrfm"))
}

/// Extract every entry in parallel and write one cache file per utterance.
/// Caches hold unnormalized maps; normalization is applied when loading.
pub fn extract_to_dir(entries: &[ManifestEntry], cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let raw = RunConfig {
        normalize: false,
        ..cfg.clone()
    };
    entries
        .par_iter()
        .map(|e| {
            let maps = extract_entry(e, &raw)?;
            let path = cache_path(out_dir, &e.utt_id);
            FeatureCache::from_maps(&maps)?.write(&path)?;
            Ok(path)
        })
        .collect()
}

/// Maps for every entry, from `feature_dir` when given, otherwise freshly
/// extracted; normalized when the configuration asks for it. Cached channels
/// are selected by window tag, so a cache built with more windows serves any
/// subset of them.
pub fn load_features(
    entries: &[ManifestEntry],
    cfg: &RunConfig,
    feature_dir: Option<&Path>,
) -> Result<Vec<Vec<FeatureMap>>> {
    entries
        .par_iter()
        .map(|e| match feature_dir {
            None => extract_entry(e, cfg),
            Some(dir) => {
                let path = cache_path(dir, &e.utt_id);
                let maps = FeatureCache::read(&path)?.to_maps(&e.utt_id)?;
                cfg.windows_ms
                    .iter()
                    .map(|&w| {
                        let m = maps.iter().find(|m| m.window_ms() == w).ok_or_else(|| {
                            Error::Data(format!(
                                "{} has no {w} ms channel (cached windows: {:?})",
                                path.display(),
                                maps.iter().map(|m| m.window_ms()).collect::<Vec<_>>()
                            ))
                        })?;
                        Ok(if cfg.normalize { m.normalized() } else { m.clone() })
                    })
                    .collect()
            }
        })
        .collect()
}

/// Unified segments of one utterance, stacked across windows.
pub fn segment_stacks(maps: &[FeatureMap], cfg: &RunConfig) -> Result<Vec<MultiResStack>> {
    let sets = maps
        .iter()
        .map(|m| unify_feature_map(m, cfg.segment_frames, cfg.segment_overlap))
        .collect::<Result<Vec<_>>>()?;
    MultiResStack::from_segment_sets(&sets)
}

/// Segments of every utterance, in entry order.
pub fn utterance_segments(
    entries: &[ManifestEntry],
    features: &[Vec<FeatureMap>],
    cfg: &RunConfig,
) -> Result<Vec<(String, Vec<MultiResStack>)>> {
    entries
        .iter()
        .zip(features)
        .map(|(e, maps)| Ok((e.utt_id.clone(), segment_stacks(maps, cfg)?)))
        .collect()
}

/// One training sample per segment; longer utterances contribute more.
pub fn training_samples(
    entries: &[ManifestEntry],
    segments: &[(String, Vec<MultiResStack>)],
) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (e, (_, stacks)) in entries.iter().zip(segments) {
        let label = class_index(&e.label)?;
        out.extend(stacks.iter().map(|s| Sample {
            input: s.channels.clone(),
            label,
        }));
    }
    Ok(out)
}

/// Eval-mode utterance scores.
pub fn score_utterances(model: &Model, segments: &[(String, Vec<MultiResStack>)]) -> Result<ScoreTable> {
    let mut table = ScoreTable::new();
    for (utt, stacks) in segments {
        let inputs: Vec<&Tensor<f32>> = stacks.iter().map(|s| &s.channels).collect();
        let logits = model.infer(&Tensor::stack(&inputs)?)?;
        table.insert(utt.clone(), utterance_score(&logits)?)?;
    }
    Ok(table)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Model of the epoch with the lowest development EER.
    pub best: Model,
    /// 1-based.
    pub best_epoch: usize,
    pub dev_eers: Vec<f64>,
    pub epoch_losses: Vec<f64>,
    pub optimizer: OptimizerState,
}

/// Train for `cfg.train.epochs` epochs, scoring the development set after
/// each one and keeping the best epoch. With `out_dir`, writes
/// `epoch_<k>.ckpt`, `best.ckpt` and `train.log` there.
pub fn train_with_selection(
    cfg: &RunConfig,
    train: &[Sample],
    dev: &[(String, Vec<MultiResStack>)],
    dev_labels: &LabelTable,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.train.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    let mut model = Model::build(&cfg.model_spec(), cfg.train.seed)?;
    let mut opt = OptimizerState::new(model.params());
    opt.eps = cfg.train.eps;
    let mut log_file = match out_dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            let p = d.join("train.log");
            Some((std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?, p))
        }
        None => None,
    };
    let mut snapshots = Vec::new();
    let mut dev_eers = Vec::new();
    let mut epoch_losses = Vec::new();
    for epoch in 0..cfg.train.epochs {
        let log: Option<&mut dyn Write> = log_file.as_mut().map(|(f, _)| f as &mut dyn Write);
        let stats = train_epoch(&mut model, train, &cfg.train, &mut opt, epoch, log)?;
        let eer = compute_eer(&score_utterances(&model, dev)?, dev_labels)?.eer;
        log::info!(
            "epoch {}: mean loss {:.4}, {} steps, dev EER {:.2}%",
            epoch + 1,
            stats.mean_loss,
            stats.steps,
            100.0 * eer
        );
        if let Some(d) = out_dir {
            save_checkpoint(&d.join(format!("epoch_{}.ckpt", epoch + 1)), &model, Some(&opt), opt.t, Some(eer))?;
        }
        epoch_losses.push(stats.mean_loss);
        dev_eers.push(eer);
        snapshots.push((model.clone(), opt.t));
    }
    if let Some((f, p)) = log_file.as_mut() {
        f.flush().map_err(|e| Error::io(p.as_path(), e))?;
    }
    let (best_idx, (best, step)) = select_best(&snapshots, &dev_eers)?;
    if let Some(d) = out_dir {
        save_checkpoint(&d.join("best.ckpt"), best, None, *step, Some(dev_eers[best_idx]))?;
    }
    Ok(TrainOutcome {
        best: best.clone(),
        best_epoch: best_idx + 1,
        dev_eers,
        epoch_losses,
        optimizer: opt,
    })
}
