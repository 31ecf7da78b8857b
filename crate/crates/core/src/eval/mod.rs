//! Utterance scoring, equal error rate and weighted score fusion.

mod tables;

pub use tables::{read_labels, read_scores, write_labels, write_operating_points, write_scores};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

/// Class index of bonafide speech in every classifier output.
pub const BONAFIDE_CLASS: usize = 0;

/// Ground truth of one utterance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Bonafide,
    /// Spoofing condition tag, e.g. `AA`.
    Spoof(String),
}

impl Label {
    pub fn is_bonafide(&self) -> bool {
        matches!(self, Label::Bonafide)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Bonafide => f.write_str("bonafide"),
            Label::Spoof(tag) => f.write_str(tag),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.contains(char::is_whitespace) {
            return Err(Error::Data(format!("invalid label '{s}'")));
        }
        Ok(if s.eq_ignore_ascii_case("bonafide") {
            Label::Bonafide
        } else {
            Label::Spoof(s.to_string())
        })
    }
}

/// Ordered utterance → score map with unique ids and finite scores.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable {
    scores: BTreeMap<String, f64>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, utt_id: impl Into<String>, score: f64) -> Result<()> {
        let utt_id = utt_id.into();
        if !score.is_finite() {
            return Err(Error::NonFinite(format!("score of {utt_id} is {score}")));
        }
        if self.scores.contains_key(&utt_id) {
            return Err(Error::Data(format!("duplicate utterance id {utt_id}")));
        }
        self.scores.insert(utt_id, score);
        Ok(())
    }

    pub fn get(&self, utt_id: &str) -> Option<f64> {
        self.scores.get(utt_id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.scores.iter().map(|(k, &v)| (k.as_str(), v))
    }

    fn ids(&self) -> BTreeSet<&str> {
        self.scores.keys().map(String::as_str).collect()
    }
}

impl FromIterator<(String, f64)> for ScoreTable {
    /// Later duplicates overwrite earlier ones; use [`ScoreTable::insert`] to reject them.
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        Self {
            scores: iter.into_iter().collect(),
        }
    }
}

/// Utterance → label map.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelTable {
    labels: BTreeMap<String, Label>,
}

impl LabelTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, utt_id: impl Into<String>, label: Label) -> Result<()> {
        let utt_id = utt_id.into();
        if self.labels.contains_key(&utt_id) {
            return Err(Error::Data(format!("duplicate label for {utt_id}")));
        }
        self.labels.insert(utt_id, label);
        Ok(())
    }

    pub fn get(&self, utt_id: &str) -> Option<&Label> {
        self.labels.get(utt_id)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Label)> {
        self.labels.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Mean over segments of the bonafide log-probability.
///
/// `segment_logits` is `segments × classes`.
pub fn utterance_score(segment_logits: &Tensor<f32>) -> Result<f64> {
    let (n, c) = segment_logits.dims2("utterance_score")?;
    if !(0..c).contains(&BONAFIDE_CLASS) {
        return Err(Error::dim("utterance_score", format!("{c} classes")));
    }
    let mut total = 0.0;
    for row in segment_logits.data().chunks_exact(c) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
        let lse = max + row.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
        total += row[BONAFIDE_CLASS] as f64 - lse;
    }
    let score = total / n as f64;
    if !score.is_finite() {
        return Err(Error::NonFinite(format!("utterance score {score}")));
    }
    Ok(score)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EerResult {
    /// Fraction, not percent.
    pub eer: f64,
    /// Score threshold at the equal-error point.
    pub threshold: f64,
    /// Bonafide trials.
    pub n_target: usize,
    /// Spoof trials.
    pub n_nontarget: usize,
}

/// `(threshold, FAR, FRR)` with acceptance iff `score ≥ threshold`, for every
/// distinct score and a final threshold above all scores.
pub fn operating_points(scores: &ScoreTable, labels: &LabelTable) -> Result<Vec<(f64, f64, f64)>> {
    let (mut target, mut nontarget) = split_trials(scores, labels)?;
    target.sort_by(f64::total_cmp);
    nontarget.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = target.iter().chain(&nontarget).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let (nt, nn) = (target.len() as f64, nontarget.len() as f64);
    // sorted scores: rejected count = number of scores strictly below t
    let (mut it, mut inn) = (0, 0);
    Ok(thresholds
        .into_iter()
        .map(|t| {
            while it < target.len() && target[it] < t {
                it += 1;
            }
            while inn < nontarget.len() && nontarget[inn] < t {
                inn += 1;
            }
            (t, (nontarget.len() - inn) as f64 / nn, it as f64 / nt)
        })
        .collect())
}

fn split_trials(scores: &ScoreTable, labels: &LabelTable) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut target = Vec::new();
    let mut nontarget = Vec::new();
    for (id, s) in scores.iter() {
        match labels.get(id) {
            Some(Label::Bonafide) => target.push(s),
            Some(Label::Spoof(_)) => nontarget.push(s),
            None => return Err(Error::Data(format!("no label for scored utterance {id}"))),
        }
    }
    if target.is_empty() || nontarget.is_empty() {
        return Err(Error::Data(format!(
            "EER needs both classes: {} bonafide, {} spoof trials",
            target.len(),
            nontarget.len()
        )));
    }
    Ok((target, nontarget))
}

/// Equal error rate, linearly interpolated where FAR − FRR changes sign
/// between adjacent operating points.
pub fn compute_eer(scores: &ScoreTable, labels: &LabelTable) -> Result<EerResult> {
    let (target, nontarget) = split_trials(scores, labels)?;
    let points = operating_points(scores, labels)?;
    let (eer, threshold) = eer_from_points(&points);
    Ok(EerResult {
        eer,
        threshold,
        n_target: target.len(),
        n_nontarget: nontarget.len(),
    })
}

/// Crossing of FAR and FRR along points ordered by increasing threshold.
/// FAR starts at 1 and FRR at 0, so a sign change always exists.
pub(crate) fn eer_from_points(points: &[(f64, f64, f64)]) -> (f64, f64) {
    let k = points
        .iter()
        .position(|&(_, far, frr)| far - frr <= 0.0)
        .unwrap_or(points.len() - 1);
    let (t1, far1, frr1) = points[k];
    if k == 0 || far1 == frr1 {
        return (far1.max(frr1), t1);
    }
    let (t0, far0, frr0) = points[k - 1];
    let (d0, d1) = (far0 - frr0, far1 - frr1);
    let a = d0 / (d0 - d1);
    let eer = far0 + a * (far1 - far0);
    let threshold = if t1.is_finite() { t0 + a * (t1 - t0) } else { t0 };
    (eer, threshold)
}

/// Per-utterance `Σᵢ wᵢ·sᵢ`.
pub fn fuse_scores(tables: &[ScoreTable], weights: &[f64]) -> Result<ScoreTable> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Data("no score tables to fuse".into()))?;
    if weights.len() != tables.len() {
        return Err(Error::Config(format!(
            "{} weights for {} systems",
            weights.len(),
            tables.len()
        )));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "fusion weights {weights:?} must be non-negative and sum to 1"
        )));
    }
    let ids = first.ids();
    for (i, t) in tables.iter().enumerate().skip(1) {
        let other = t.ids();
        if other != ids {
            let diff: Vec<&str> = ids.symmetric_difference(&other).copied().collect();
            return Err(Error::Data(format!(
                "system {} scores different utterances than system 1; symmetric difference: {}",
                i + 1,
                diff.join(", ")
            )));
        }
    }
    Ok(first
        .iter()
        .map(|(id, _)| {
            let s = tables
                .iter()
                .zip(weights)
                .fold(0.0, |acc, (t, &w)| acc + w * t.get(id).unwrap());
            (id.to_string(), s)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionSearch {
    pub weights: Vec<f64>,
    pub dev_eer: f64,
    /// Grid points evaluated.
    pub evaluated: usize,
}

/// All weight vectors `k/K` with non-negative integers summing to `K`,
/// in lexicographic order.
pub fn simplex_grid(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(n - 1, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, k, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

/// Exhaustive simplex grid search for the weights with the lowest EER on
/// `labels`. Ties keep the lexicographically first vector.
pub fn search_fusion_weights(
    tables: &[ScoreTable],
    labels: &LabelTable,
    grid_step: f64,
) -> Result<FusionSearch> {
    if tables.len() < 2 {
        return Err(Error::Config(format!(
            "fusion search needs at least 2 systems, got {}",
            tables.len()
        )));
    }
    let k = (1.0 / grid_step).round();
    if !(grid_step > 0.0) || k < 1.0 || (k * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("grid step {grid_step} does not divide 1")));
    }
    let k = k as usize;
    let grid = simplex_grid(tables.len(), k);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for point in &grid {
        let w: Vec<f64> = point.iter().map(|&c| c as f64 / k as f64).collect();
        let eer = compute_eer(&fuse_scores(tables, &w)?, labels)?.eer;
        if best.as_ref().is_none_or(|(_, b)| eer < *b) {
            best = Some((w, eer));
        }
    }
    let (weights, dev_eer) = best.expect("grid is never empty");
    Ok(FusionSearch {
        weights,
        dev_eer,
        evaluated: grid.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tables(bona: &[f64], spoof: &[f64]) -> (ScoreTable, LabelTable) {
        let mut s = ScoreTable::new();
        let mut l = LabelTable::new();
        for (i, &v) in bona.iter().enumerate() {
            s.insert(format!("b{i}"), v).unwrap();
            l.insert(format!("b{i}"), Label::Bonafide).unwrap();
        }
        for (i, &v) in spoof.iter().enumerate() {
            s.insert(format!("s{i}"), v).unwrap();
            l.insert(format!("s{i}"), Label::Spoof("AA".into())).unwrap();
        }
        (s, l)
    }

    #[test]
    fn utterance_score_examples() {
        let uniform = Tensor::new(vec![3, 10], vec![0.7; 30]).unwrap();
        assert!((utterance_score(&uniform).unwrap() + 10f64.ln()).abs() < 1e-9);
        // two classes with log-probs chosen so bonafide gets −1 and −3
        let row = |lp: f64| {
            let p0 = lp.exp();
            [lp as f32, (1.0 - p0).ln() as f32]
        };
        let data: Vec<f32> = [row(-1.0), row(-3.0)].concat();
        let t = Tensor::new(vec![2, 2], data).unwrap();
        assert!((utterance_score(&t).unwrap() + 2.0).abs() < 1e-6);
    }

    #[test]
    fn eer_examples() {
        let (s, l) = tables(&[0.9, 0.8, 0.7], &[0.1, 0.2, 0.75]);
        let r = compute_eer(&s, &l).unwrap();
        assert!((r.eer - 1.0 / 3.0).abs() < 1e-12);
        assert!(r.threshold > 0.7 && r.threshold <= 0.75);
        let (s, l) = tables(&[3.0, 4.0], &[1.0, 2.0]);
        assert_eq!(compute_eer(&s, &l).unwrap().eer, 0.0);
    }

    #[test]
    fn single_class_is_an_error() {
        let (s, l) = tables(&[1.0], &[]);
        assert!(compute_eer(&s, &l).is_err());
    }

    #[test]
    fn fusion_examples() {
        let mut a = ScoreTable::new();
        a.insert("u", -1.0).unwrap();
        let mut b = ScoreTable::new();
        b.insert("u", -3.0).unwrap();
        let f = fuse_scores(&[a.clone(), b.clone()], &[0.5, 0.5]).unwrap();
        assert_eq!(f.get("u"), Some(-2.0));
        assert_eq!(fuse_scores(&[a.clone(), b.clone()], &[1.0, 0.0]).unwrap(), a);
        b.insert("v", 0.0).unwrap();
        let err = fuse_scores(&[a, b], &[0.5, 0.5]).unwrap_err().to_string();
        assert!(err.contains('v'), "{err}");
    }

    #[test]
    fn grid_enumeration() {
        let g = simplex_grid(3, 2);
        assert_eq!(
            g,
            vec![
                vec![0, 0, 2],
                vec![0, 1, 1],
                vec![0, 2, 0],
                vec![1, 0, 1],
                vec![1, 1, 0],
                vec![2, 0, 0]
            ]
        );
        assert_eq!(simplex_grid(2, 20).len(), 21);
    }

    #[test]
    fn search_rejects_bad_steps() {
        let (s, l) = tables(&[1.0], &[0.0]);
        assert!(search_fusion_weights(&[s.clone(), s.clone()], &l, 0.3).is_err());
        assert!(search_fusion_weights(&[s], &l, 0.5).is_err());
    }

    #[test]
    fn identical_systems_tie_to_first_grid_point() {
        let (s, l) = tables(&[0.9, 0.3], &[0.5, 0.1]);
        let r = search_fusion_weights(&[s.clone(), s], &l, 0.05).unwrap();
        assert_eq!(r.weights, vec![0.0, 1.0]);
        assert_eq!(r.evaluated, 21);
    }
}
