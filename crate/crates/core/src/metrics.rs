//! Evaluation metrics: adjusted Rand index, the shared-task F1 over old
//! senses, and average precision / precision-recall curves for novel sense
//! detection.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::io::Write;

use crate::corpus::{Dataset, TargetWordRecord};
use crate::error::{Error, Result};
use crate::scm::PredictionSet;

fn comb2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index (Hubert-Arabie) between two labelings of the same
/// items. Label values are irrelevant, only the partitions matter. When both
/// partitions are trivial in the same way (the expected index equals the
/// maximum) the result is 1.
pub fn adjusted_rand_index<A, B>(gold: &[A], pred: &[B]) -> Result<f64>
where
    A: Eq + Hash,
    B: Eq + Hash,
{
    if gold.len() != pred.len() {
        return Err(Error::invalid(format!("label length mismatch: gold={}, pred={}", gold.len(), pred.len())));
    }
    if gold.is_empty() {
        return Err(Error::invalid("ARI of an empty labeling"));
    }
    let mut gold_ids: HashMap<&A, usize> = HashMap::new();
    let mut pred_ids: HashMap<&B, usize> = HashMap::new();
    let mut gold_counts: Vec<usize> = Vec::new();
    let mut pred_counts: Vec<usize> = Vec::new();
    let mut cells: HashMap<(usize, usize), usize> = HashMap::new();
    for (g, p) in gold.iter().zip(pred) {
        let gi = *gold_ids.entry(g).or_insert_with(|| {
            gold_counts.push(0);
            gold_counts.len() - 1
        });
        let pi = *pred_ids.entry(p).or_insert_with(|| {
            pred_counts.push(0);
            pred_counts.len() - 1
        });
        gold_counts[gi] += 1;
        pred_counts[pi] += 1;
        *cells.entry((gi, pi)).or_insert(0) += 1;
    }
    let index: f64 = cells.values().map(|&c| comb2(c)).sum();
    let sum_gold: f64 = gold_counts.iter().map(|&c| comb2(c)).sum();
    let sum_pred: f64 = pred_counts.iter().map(|&c| comb2(c)).sum();
    let total = comb2(gold.len());
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_gold * sum_pred / total;
    let max_index = 0.5 * (sum_gold + sum_pred);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// How a word's F1 was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F1Case {
    /// At least one new usage has a gold old sense.
    Regular,
    /// No new usage belongs to an old sense.
    DisjointSenses,
}

/// Shared-task F1 for one word.
///
/// Only new usages whose gold label is an old sense are scored. Predictions
/// outside the old inventory count as one auxiliary "novel" class with F1 0;
/// the average runs over all `k` old senses, plus that class when any scored
/// usage was predicted novel. Words without new usages of old senses score 1
/// if no usage at all is predicted as an old sense, else 0.
pub fn axolotl_f1(word: &TargetWordRecord, predictions: &BTreeMap<String, String>) -> Result<(f64, F1Case)> {
    let mut pairs: Vec<(&str, &str)> = Vec::with_capacity(word.new_usages.len());
    for u in &word.new_usages {
        let gold = u
            .gold_sense
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("usage `{}` has no gold label", u.usage_id)))?;
        let pred = predictions
            .get(&u.usage_id)
            .ok_or_else(|| Error::invalid(format!("missing prediction for usage `{}`", u.usage_id)))?;
        pairs.push((gold, pred.as_str()));
    }

    let old = word.old_sense_ids();
    let scored: Vec<(&str, &str)> = pairs.iter().copied().filter(|(g, _)| old.contains(g)).collect();
    if scored.is_empty() {
        let any_old = pairs.iter().any(|(_, p)| old.contains(p));
        return Ok((if any_old { 0.0 } else { 1.0 }, F1Case::DisjointSenses));
    }

    let mut total = 0.0;
    for sense in &old {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for &(g, p) in &scored {
            match (g == *sense, p == *sense) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            total += 2.0 * tp as f64 / denom as f64;
        }
    }
    let any_novel = scored.iter().any(|(_, p)| !old.contains(p));
    let classes = old.len() + usize::from(any_novel);
    Ok((total / classes as f64, F1Case::Regular))
}

fn check_binary(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass(format!("{positives} positives among {} items", labels.len())));
    }
    Ok(())
}

/// Cumulative (recall, precision) after each block of tied scores, walking
/// from the highest score down.
fn threshold_points(scores: &[f64], labels: &[bool]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let positives = labels.iter().filter(|&&y| y).count() as f64;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut points = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        while i < order.len() && scores[order[i]] == score {
            tp += usize::from(labels[order[i]]);
            seen += 1;
            i += 1;
        }
        points.push((tp as f64 / positives, tp as f64 / seen as f64));
    }
    points
}

/// Average precision: `sum_n (R_n - R_{n-1}) P_n` over descending score
/// thresholds, tied scores forming one threshold.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_binary(scores, labels)?;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (recall, precision) in threshold_points(scores, labels) {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Precision-recall points, one per distinct score, by increasing recall.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    check_binary(scores, labels)?;
    Ok(threshold_points(scores, labels))
}

pub fn write_pr_curve<W: Write>(points: &[(f64, f64)], mut out: W) -> Result<()> {
    writeln!(out, "recall\tprecision")?;
    for (r, p) in points {
        writeln!(out, "{r}\t{p}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordScore {
    pub ari: f64,
    pub f1: f64,
    pub f1_case: F1Case,
    pub n_usages: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_word: BTreeMap<String, WordScore>,
    pub mean_ari: f64,
    pub mean_f1: f64,
    /// Words scored by the disjoint-senses rule.
    pub disjoint_words: usize,
}

/// Score predictions for every word with new usages; aggregates are
/// unweighted means over words.
pub fn evaluate(dataset: &Dataset, predictions: &PredictionSet) -> Result<EvalReport> {
    let empty = BTreeMap::new();
    let mut per_word = BTreeMap::new();
    for word in dataset.words.iter().filter(|w| !w.new_usages.is_empty()) {
        let preds = predictions.get(&word.word).unwrap_or(&empty);
        let labels: BTreeMap<String, String> = preds.iter().map(|(id, p)| (id.clone(), p.label.clone())).collect();
        let mut gold = Vec::with_capacity(word.new_usages.len());
        let mut pred = Vec::with_capacity(word.new_usages.len());
        for u in &word.new_usages {
            gold.push(
                u.gold_sense
                    .as_deref()
                    .ok_or_else(|| Error::invalid(format!("usage `{}` has no gold label", u.usage_id)))?,
            );
            pred.push(
                labels
                    .get(&u.usage_id)
                    .ok_or_else(|| Error::invalid(format!("missing prediction for usage `{}`", u.usage_id)))?
                    .as_str(),
            );
        }
        let ari = adjusted_rand_index(&gold, &pred)?;
        let (f1, f1_case) = axolotl_f1(word, &labels)?;
        per_word.insert(word.word.clone(), WordScore { ari, f1, f1_case, n_usages: gold.len() });
    }
    for (word, preds) in predictions {
        let known = dataset.word(word).map(|w| preds.keys().all(|id| w.new_usages.iter().any(|u| &u.usage_id == id)));
        if known != Some(true) {
            return Err(Error::invalid(format!("predictions for `{word}` do not match its new usages")));
        }
    }
    let n = per_word.len().max(1) as f64;
    Ok(EvalReport {
        mean_ari: per_word.values().map(|s| s.ari).sum::<f64>() / n,
        mean_f1: per_word.values().map(|s| s.f1).sum::<f64>() / n,
        disjoint_words: per_word.values().filter(|s| s.f1_case == F1Case::DisjointSenses).count(),
        per_word,
    })
}

/// `word<TAB>ari<TAB>f1` rows, then `#aggregate` and `#disjoint_words`.
pub fn write_report<W: Write>(report: &EvalReport, mut out: W) -> Result<()> {
    writeln!(out, "word\tari\tf1")?;
    for (word, s) in &report.per_word {
        writeln!(out, "{word}\t{}\t{}", s.ari, s.f1)?;
    }
    writeln!(out, "#aggregate\t{}\t{}", report.mean_ari, report.mean_f1)?;
    writeln!(out, "#disjoint_words\t{}", report.disjoint_words)?;
    Ok(())
}
