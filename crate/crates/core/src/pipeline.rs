//! Dataset-level drivers behind the command-line subcommands. Each runs the
//! per-word work through [`crate::parallel::map`] and merges results in word
//! order, so output never depends on the worker count.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::clustering::{agglom_scm, wsi_cluster, AgglomConfig};
use crate::corpus::{find_target_position, Dataset, TargetWordRecord, WordFormList};
use crate::disambiguation::assign_senses;
use crate::error::{Error, Result};
use crate::metrics::{average_precision, pr_curve};
use crate::nsd::{
    extract_features, FeatureVector, NsdModel, NsdTrainConfig, DISTANCE_KINDS, FEATURE_NAMES, N_DISTANCE_FEATURES,
};
use crate::parallel;
use crate::scm::{
    cluster2sense, new_usage_vectors, outlier2cluster, wsd_predictions, wsi_predictions, Prediction, PredictionSet,
    Provenance, RelabelMode, Spaces,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Wsd,
    Wsi,
    Agglom,
    Cluster2Sense,
    Outlier2Cluster,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Wsd => "wsd",
            Method::Wsi => "wsi",
            Method::Agglom => "agglom",
            Method::Cluster2Sense => "cluster2sense",
            Method::Outlier2Cluster => "outlier2cluster",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Method::Wsd, Method::Wsi, Method::Agglom, Method::Cluster2Sense, Method::Outlier2Cluster]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected wsd|wsi|agglom|cluster2sense|outlier2cluster)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictOptions {
    pub method: Method,
    pub mode: RelabelMode,
    pub k_extra: usize,
    /// Worker count; 0 means all cores.
    pub jobs: usize,
}

impl PredictOptions {
    pub fn new(method: Method) -> Self {
        PredictOptions { method, mode: RelabelMode::default(), k_extra: 0, jobs: 1 }
    }
}

fn predict_word(
    word: &TargetWordRecord,
    spaces: Spaces<'_>,
    model: Option<&NsdModel>,
    opts: &PredictOptions,
) -> Result<Vec<Prediction>> {
    match opts.method {
        Method::Wsd => Ok(wsd_predictions(&assign_senses(word, spaces.fine_tuned)?)),
        Method::Wsi => Ok(wsi_predictions(&wsi_cluster(&new_usage_vectors(word, spaces.base)?)?)),
        Method::Agglom => Ok(agglom_scm(word, spaces.base, AgglomConfig { k_extra: opts.k_extra })?
            .into_iter()
            .map(|(usage_id, label)| Prediction { usage_id, label, provenance: Provenance::Agglom })
            .collect()),
        Method::Cluster2Sense => {
            let wsd = assign_senses(word, spaces.fine_tuned)?;
            let wsi = wsi_cluster(&new_usage_vectors(word, spaces.base)?)?;
            let mut out = cluster2sense(&wsi, &wsd, &word.old_sense_ids())?;
            out.sort_by(|a, b| a.usage_id.cmp(&b.usage_id));
            Ok(out)
        }
        Method::Outlier2Cluster => {
            let model = model.ok_or_else(|| Error::invalid("outlier2cluster needs an NSD model"))?;
            outlier2cluster(word, spaces, model, opts.mode)
        }
    }
}

/// Label every new usage of every word that has any.
pub fn predict(
    dataset: &Dataset,
    spaces: Spaces<'_>,
    model: Option<&NsdModel>,
    opts: &PredictOptions,
) -> Result<PredictionSet> {
    let words: Vec<&TargetWordRecord> = dataset.words.iter().filter(|w| !w.new_usages.is_empty()).collect();
    let results = parallel::map(&words, opts.jobs, |w| predict_word(w, spaces, model, opts));
    let mut out = PredictionSet::new();
    for (word, preds) in words.iter().zip(results) {
        let preds = preds.map_err(|e| Error::invalid(format!("word `{}`: {e}", word.word)))?;
        out.insert(word.word.clone(), preds.into_iter().map(|p| (p.usage_id.clone(), p)).collect());
    }
    Ok(out)
}

/// One NSD training or evaluation row.
#[derive(Debug, Clone, PartialEq)]
pub struct NsdRow {
    pub word: String,
    pub usage_id: String,
    pub features: FeatureVector,
    /// The gold sense is not an old sense, so WSD's choice must be wrong.
    pub novel: bool,
}

/// Features and labels for every new usage with a gold sense.
pub fn nsd_rows(dataset: &Dataset, spaces: Spaces<'_>, jobs: usize) -> Result<Vec<NsdRow>> {
    let words: Vec<&TargetWordRecord> =
        dataset.words.iter().filter(|w| w.new_usages.iter().any(|u| u.gold_sense.is_some())).collect();
    let per_word = parallel::map(&words, jobs, |word| -> Result<Vec<NsdRow>> {
        let counts = word.counts();
        let wsd = assign_senses(word, spaces.fine_tuned)?;
        let mut rows = Vec::new();
        for (usage, a) in word.new_usages.iter().zip(&wsd) {
            let Some(gold) = &usage.gold_sense else { continue };
            rows.push(NsdRow {
                word: word.word.clone(),
                usage_id: usage.usage_id.clone(),
                features: extract_features(
                    &word.word,
                    &usage.usage_id,
                    &a.chosen_sense_id,
                    spaces.fine_tuned,
                    spaces.base,
                    counts,
                )?,
                novel: !word.is_old_sense(gold),
            });
        }
        Ok(rows)
    });
    let mut out = Vec::new();
    for (word, rows) in words.iter().zip(per_word) {
        out.extend(rows.map_err(|e| Error::invalid(format!("word `{}`: {e}", word.word)))?);
    }
    Ok(out)
}

/// Fit the 13-feature detector on a gold-labeled dataset.
pub fn train_nsd(dataset: &Dataset, spaces: Spaces<'_>, cfg: &NsdTrainConfig, jobs: usize) -> Result<NsdModel> {
    let rows = nsd_rows(dataset, spaces, jobs)?;
    let features: Vec<FeatureVector> = rows.iter().map(|r| r.features).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r.novel).collect();
    NsdModel::fit(&features, &labels, cfg)
}

/// Outlier probabilities of `rows` under `model`, for AP on held-out data.
pub fn nsd_scores(model: &NsdModel, rows: &[NsdRow]) -> Vec<f64> {
    rows.iter().map(|r| model.probability(r.features.as_slice())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationEntry {
    /// Feature name, `a+b` for a pair, `all` or `distances`.
    pub name: String,
    pub ap: f64,
    pub curve: Vec<(f64, f64)>,
}

fn ablation_entry(name: String, scores: &[f64], labels: &[bool]) -> Result<AblationEntry> {
    Ok(AblationEntry { ap: average_precision(scores, labels)?, curve: pr_curve(scores, labels)?, name })
}

fn fitted_scores(columns: &[usize], rows: &[NsdRow], labels: &[bool], cfg: &NsdTrainConfig) -> Result<Vec<f64>> {
    let names: Vec<String> = columns.iter().map(|&c| FEATURE_NAMES[c].to_string()).collect();
    let table: Vec<Vec<f64>> = rows.iter().map(|r| columns.iter().map(|&c| r.features.0[c]).collect()).collect();
    let model = NsdModel::fit_columns(names, &table, labels, cfg)?;
    Ok(table.iter().map(|r| model.probability(r)).collect())
}

/// AP of every single distance feature (larger distance = more novel), of
/// classifiers on every pair of distances from the same space, and of the
/// full classifier with and without the count features. Classifiers are
/// scored on the rows they were fit on.
pub fn ablate(rows: &[NsdRow], cfg: &NsdTrainConfig) -> Result<Vec<AblationEntry>> {
    let labels: Vec<bool> = rows.iter().map(|r| r.novel).collect();
    let mut out = Vec::new();
    for (c, name) in FEATURE_NAMES.iter().enumerate().take(N_DISTANCE_FEATURES) {
        let scores: Vec<f64> = rows.iter().map(|r| r.features.0[c]).collect();
        out.push(ablation_entry(name.to_string(), &scores, &labels)?);
    }
    let per_space = DISTANCE_KINDS.len();
    let columns: Vec<usize> = (0..N_DISTANCE_FEATURES).collect();
    for block in columns.chunks(per_space) {
        for (x, &i) in block.iter().enumerate() {
            for &j in &block[x + 1..] {
                let scores = fitted_scores(&[i, j], rows, &labels, cfg)?;
                out.push(ablation_entry(format!("{}+{}", FEATURE_NAMES[i], FEATURE_NAMES[j]), &scores, &labels)?);
            }
        }
    }
    let scores = fitted_scores(&columns, rows, &labels, cfg)?;
    out.push(ablation_entry("distances".into(), &scores, &labels)?);
    let all: Vec<usize> = (0..FEATURE_NAMES.len()).collect();
    let scores = fitted_scores(&all, rows, &labels, cfg)?;
    out.push(ablation_entry("all".into(), &scores, &labels)?);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PositionSummary {
    pub filled: usize,
    /// Usages that already had a span; they are left untouched.
    pub kept: usize,
    pub unmatched: usize,
}

/// Fill missing target spans. Words without an entry in `forms` are matched
/// by their lemma alone.
pub fn fill_positions(dataset: &Dataset, forms: &BTreeMap<String, WordFormList>) -> (Dataset, PositionSummary) {
    let mut summary = PositionSummary::default();
    let mut out = dataset.clone();
    for word in &mut out.words {
        let fallback;
        let list = match forms.get(&word.word) {
            Some(l) => l,
            None => {
                fallback = WordFormList::new(word.word.clone(), Vec::<String>::new());
                &fallback
            }
        };
        for usage in word.old_usages.iter_mut().chain(word.new_usages.iter_mut()) {
            if usage.span.is_some() {
                summary.kept += 1;
                continue;
            }
            match find_target_position(&usage.text, list) {
                Some(span) => {
                    usage.span = Some(span);
                    summary.filled += 1;
                }
                None => summary.unmatched += 1,
            }
        }
    }
    (out, summary)
}
