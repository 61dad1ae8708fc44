//! Composite semantic change models built on WSD, WSI and NSD:
//! Cluster2Sense relabels whole WSI clusters, Outlier2Cluster relabels
//! individual usages the novel sense detector flags.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::hash::Hash;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::clustering::{novel_label, wsi_cluster, Clustering};
use crate::corpus::TargetWordRecord;
use crate::disambiguation::{assign_senses, WsdAssignment};
use crate::error::{Error, Result};
use crate::geometry::EmbeddingTable;
use crate::nsd::{extract_features, predict_outlier, NsdModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Wsd,
    Wsi,
    Agglom,
    Cluster2Sense,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Wsd => "wsd",
            Provenance::Wsi => "wsi",
            Provenance::Agglom => "agglom",
            Provenance::Cluster2Sense => "cluster2sense",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "wsd" => Ok(Provenance::Wsd),
            "wsi" => Ok(Provenance::Wsi),
            "agglom" => Ok(Provenance::Agglom),
            "cluster2sense" => Ok(Provenance::Cluster2Sense),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Prediction {
    pub usage_id: String,
    /// An old sense id or `novel:<i>`.
    pub label: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RelabelMode {
    /// Outliers keep their WSI cluster (renumbered as `novel:0..`).
    #[default]
    WithWsi,
    /// All outliers share `novel:0`.
    WithoutWsi,
}

impl FromStr for RelabelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "with-wsi" | "with_wsi" => Ok(RelabelMode::WithWsi),
            "without-wsi" | "without_wsi" => Ok(RelabelMode::WithoutWsi),
            other => Err(format!("unknown relabel mode `{other}` (expected with-wsi|without-wsi)")),
        }
    }
}

/// `|a ∩ b| / |a ∪ b|`, zero when both are empty.
pub fn jaccard<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn wsd_predictions(assignments: &[WsdAssignment]) -> Vec<Prediction> {
    let mut out: Vec<Prediction> = assignments
        .iter()
        .map(|a| Prediction {
            usage_id: a.usage_id.clone(),
            label: a.chosen_sense_id.clone(),
            provenance: Provenance::Wsd,
        })
        .collect();
    out.sort_by(|a, b| a.usage_id.cmp(&b.usage_id));
    out
}

pub fn wsi_predictions(clustering: &Clustering) -> Vec<Prediction> {
    clustering
        .labels
        .iter()
        .map(|(id, &c)| Prediction { usage_id: id.clone(), label: novel_label(c), provenance: Provenance::Wsi })
        .collect()
}

/// Cluster2Sense: a WSI cluster takes sense `s` when the cluster and the
/// group of usages WSD assigned to `s` are each other's best Jaccard match.
/// Remaining clusters get novel ids in cluster order. The partition is the
/// WSI partition unchanged.
///
/// `inventory` is the old sense order used to break ties; clusters tie toward
/// the lower index. Pairs with zero overlap never match.
pub fn cluster2sense(wsi: &Clustering, wsd: &[WsdAssignment], inventory: &[&str]) -> Result<Vec<Prediction>> {
    let wsd_ids: BTreeSet<&str> = wsd.iter().map(|a| a.usage_id.as_str()).collect();
    let wsi_ids: BTreeSet<&str> = wsi.labels.keys().map(String::as_str).collect();
    if wsd_ids != wsi_ids || wsd_ids.len() != wsd.len() {
        return Err(Error::invalid("WSI and WSD predictions cover different usages"));
    }
    let clusters: Vec<HashSet<&str>> = wsi.members().into_iter().map(|m| m.into_iter().collect()).collect();
    let mut senses: Vec<HashSet<&str>> = vec![HashSet::new(); inventory.len()];
    for a in wsd {
        let s = inventory
            .iter()
            .position(|s| *s == a.chosen_sense_id)
            .ok_or_else(|| Error::invalid(format!("WSD sense `{}` not in inventory", a.chosen_sense_id)))?;
        senses[s].insert(a.usage_id.as_str());
    }

    let sim: Vec<Vec<f64>> = clusters.iter().map(|c| senses.iter().map(|s| jaccard(c, s)).collect()).collect();
    let argmax = |values: &mut dyn Iterator<Item = f64>| {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in values.enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best
    };
    let best_sense: Vec<Option<(usize, f64)>> = sim.iter().map(|row| argmax(&mut row.iter().copied())).collect();
    let best_cluster: Vec<Option<(usize, f64)>> =
        (0..inventory.len()).map(|s| argmax(&mut sim.iter().map(|row| row[s]))).collect();

    let mut cluster_labels = Vec::with_capacity(clusters.len());
    let mut next_novel = 0;
    for (c, best) in best_sense.iter().enumerate() {
        let matched = best.and_then(|(s, j)| {
            (j > 0.0 && best_cluster[s].map(|(bc, _)| bc) == Some(c)).then(|| inventory[s].to_string())
        });
        cluster_labels.push(match matched {
            Some(sense) => (sense, Provenance::Cluster2Sense),
            None => {
                next_novel += 1;
                (novel_label(next_novel - 1), Provenance::Wsi)
            }
        });
    }
    Ok(wsi
        .labels
        .iter()
        .map(|(id, &c)| Prediction {
            usage_id: id.clone(),
            label: cluster_labels[c].0.clone(),
            provenance: cluster_labels[c].1,
        })
        .collect())
}

/// The two embedding spaces an SCM method reads from.
#[derive(Debug, Clone, Copy)]
pub struct Spaces<'a> {
    /// Fine-tuned space: WSD and the first half of the NSD features.
    pub fine_tuned: &'a EmbeddingTable,
    /// Base space: WSI and the second half of the NSD features.
    pub base: &'a EmbeddingTable,
}

pub fn new_usage_vectors<'a>(
    word: &'a TargetWordRecord,
    table: &'a EmbeddingTable,
) -> Result<Vec<(&'a str, &'a [f64])>> {
    word.new_usages.iter().map(|u| Ok((u.usage_id.as_str(), table.usage(&u.usage_id)?))).collect()
}

/// Outlier2Cluster: WSD labels every usage, the novel sense detector flags
/// outliers, and flagged usages are relabeled with novel ids.
pub fn outlier2cluster(
    word: &TargetWordRecord,
    spaces: Spaces<'_>,
    model: &NsdModel,
    mode: RelabelMode,
) -> Result<Vec<Prediction>> {
    model.validate()?;
    if word.new_usages.is_empty() {
        return Ok(Vec::new());
    }
    let wsd = assign_senses(word, spaces.fine_tuned)?;
    let wsi = wsi_cluster(&new_usage_vectors(word, spaces.base)?)?;
    let counts = word.counts();

    let mut outliers: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &wsd {
        let f = extract_features(&word.word, &a.usage_id, &a.chosen_sense_id, spaces.fine_tuned, spaces.base, counts)?;
        if predict_outlier(model, &f).1 {
            outliers.insert(a.usage_id.as_str(), wsi.labels[&a.usage_id]);
        }
    }
    let used_clusters: BTreeSet<usize> = outliers.values().copied().collect();
    let compact: BTreeMap<usize, usize> = used_clusters.into_iter().enumerate().map(|(i, c)| (c, i)).collect();

    let mut out: Vec<Prediction> = wsd
        .iter()
        .map(|a| match outliers.get(a.usage_id.as_str()) {
            Some(cluster) => Prediction {
                usage_id: a.usage_id.clone(),
                label: match mode {
                    RelabelMode::WithoutWsi => novel_label(0),
                    RelabelMode::WithWsi => novel_label(compact[cluster]),
                },
                provenance: Provenance::Wsi,
            },
            None => Prediction {
                usage_id: a.usage_id.clone(),
                label: a.chosen_sense_id.clone(),
                provenance: Provenance::Wsd,
            },
        })
        .collect();
    out.sort_by(|a, b| a.usage_id.cmp(&b.usage_id));
    Ok(out)
}

/// Predictions of one dataset, keyed by word then usage id.
pub type PredictionSet = BTreeMap<String, BTreeMap<String, Prediction>>;

/// Write `word<TAB>usage_id<TAB>label<TAB>provenance` rows sorted by word
/// then usage id.
pub fn write_predictions<W: Write>(predictions: &PredictionSet, mut out: W) -> Result<()> {
    for (word, rows) in predictions {
        for p in rows.values() {
            writeln!(out, "{word}\t{}\t{}\t{}", p.usage_id, p.label, p.provenance)?;
        }
    }
    Ok(())
}

pub fn parse_predictions<R: BufRead>(reader: R, source_name: &str) -> Result<PredictionSet> {
    let mut out = PredictionSet::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [word, usage_id, label, provenance] = fields.as_slice() else {
            return Err(Error::parse(source_name, lineno, "expected word, usage_id, label, provenance"));
        };
        if label.is_empty() {
            return Err(Error::parse(source_name, lineno, "empty label"));
        }
        let provenance = provenance.parse().map_err(|e: String| Error::parse(source_name, lineno, e))?;
        if !seen.insert(usage_id.to_string()) {
            return Err(Error::parse(source_name, lineno, format!("duplicate usage_id `{usage_id}`")));
        }
        out.entry(word.to_string()).or_default().insert(
            usage_id.to_string(),
            Prediction { usage_id: usage_id.to_string(), label: label.to_string(), provenance },
        );
    }
    Ok(out)
}
