//! Agglomerative word sense induction and the sense-seeded AggloM variant.
//!
//! Both algorithms are deterministic: whenever two candidate merges are
//! equally close, the pair whose clusters have the lexicographically smallest
//! (first member, first member) wins, where members are ordered by sorted
//! usage id. Inputs are canonicalized by sorting ids first, so results do not
//! depend on input order.

use std::collections::BTreeMap;

use crate::corpus::TargetWordRecord;
use crate::error::{Error, Result};
use crate::geometry::{cosine_from_parts, dot_unchecked, l2_norm, normalize, EmbeddingTable, Normalization};

/// Cluster counts tried by [`wsi_cluster`].
pub const WSI_MIN_CLUSTERS: usize = 2;
pub const WSI_MAX_CLUSTERS: usize = 9;

pub const NOVEL_PREFIX: &str = "novel:";

pub fn novel_label(index: usize) -> String {
    format!("{NOVEL_PREFIX}{index}")
}

pub fn is_novel_label(label: &str) -> bool {
    label.starts_with(NOVEL_PREFIX)
}

/// Dense symmetric distance matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from row-major data, validating shape, symmetry and the diagonal.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::invalid(format!("distance matrix needs {} entries, got {}", n * n, data.len())));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::invalid(format!("non-zero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if a != b {
                    return Err(Error::invalid(format!("asymmetric distance at ({i},{j})")));
                }
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::invalid(format!("invalid distance {a} at ({i},{j})")));
                }
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

fn unit_norms<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let n = l2_norm(v.as_ref());
            if n == 0.0 {
                Err(Error::Degenerate(format!("zero vector at position {i}: cosine undefined")))
            } else {
                Ok(n)
            }
        })
        .collect()
}

fn cosine_row<V: AsRef<[f64]>>(vectors: &[V], norms: &[f64], i: usize) -> Vec<f64> {
    let vi = vectors[i].as_ref();
    (0..vectors.len())
        .map(
            |j| {
                if i == j {
                    0.0
                } else {
                    cosine_from_parts(dot_unchecked(vi, vectors[j].as_ref()), norms[i], norms[j])
                }
            },
        )
        .collect()
}

/// Pairwise cosine distances, rows computed in parallel when the `parallel`
/// feature is on. Every entry is computed independently, so the result is
/// bit-identical to [`cosine_distance_matrix_sequential`].
pub fn cosine_distance_matrix<V: AsRef<[f64]> + Sync>(vectors: &[V]) -> Result<DistanceMatrix> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let norms = unit_norms(vectors)?;
        let rows: Vec<Vec<f64>> = (0..vectors.len()).into_par_iter().map(|i| cosine_row(vectors, &norms, i)).collect();
        DistanceMatrix::new(vectors.len(), rows.concat())
    }
    #[cfg(not(feature = "parallel"))]
    {
        cosine_distance_matrix_sequential(vectors)
    }
}

pub fn cosine_distance_matrix_sequential<V: AsRef<[f64]>>(vectors: &[V]) -> Result<DistanceMatrix> {
    let norms = unit_norms(vectors)?;
    let data = (0..vectors.len()).flat_map(|i| cosine_row(vectors, &norms, i)).collect();
    DistanceMatrix::new(vectors.len(), data)
}

/// Relabel clusters so indices follow the order of each cluster's first member.
fn canonical_labels(n: usize, clusters: &[Vec<usize>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by_key(|&c| clusters[c].iter().min().copied().unwrap_or(usize::MAX));
    let mut labels = vec![0; n];
    for (label, &c) in order.iter().enumerate() {
        for &m in &clusters[c] {
            labels[m] = label;
        }
    }
    labels
}

/// Run average-linkage merging down to `min(ks)` clusters and snapshot the
/// partition at every requested cluster count.
fn average_linkage_levels(dist: &DistanceMatrix, ks: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let n = dist.len();
    let target = ks.iter().copied().min().unwrap_or(n);
    // Active clusters stay sorted by first member: a merge keeps the
    // position of the earlier cluster and removes the later one.
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut sums: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dist.get(i, j)).collect()).collect();
    let mut snapshots = Vec::new();
    if ks.contains(&n) {
        snapshots.push((n, canonical_labels(n, &members)));
    }
    while members.len() > target {
        let m = members.len();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..m {
            for j in (i + 1)..m {
                let avg = sums[i][j] / (members[i].len() * members[j].len()) as f64;
                if best.is_none_or(|(_, _, b)| avg < b) {
                    best = Some((i, j, avg));
                }
            }
        }
        let (i, j, _) = best.expect("at least two clusters remain");
        let absorbed = members.remove(j);
        members[i].extend(absorbed);
        let row_j = sums.remove(j);
        for row in sums.iter_mut() {
            let v = row.remove(j);
            row[i] += v;
        }
        for (x, v) in row_j.into_iter().enumerate().filter(|&(x, _)| x != j) {
            let x = if x > j { x - 1 } else { x };
            if x != i {
                sums[i][x] += v;
            }
        }
        sums[i][i] = 0.0;
        if ks.contains(&members.len()) {
            snapshots.push((members.len(), canonical_labels(n, &members)));
        }
    }
    snapshots
}

/// Average-linkage agglomerative clustering down to `k` clusters.
///
/// Returns one label per row of `dist`; labels are `0..k` ordered by each
/// cluster's smallest member index.
pub fn average_linkage(dist: &DistanceMatrix, k: usize) -> Result<Vec<usize>> {
    let n = dist.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cluster count {k} outside 1..={n}")));
    }
    Ok(average_linkage_levels(dist, &[k]).pop().map(|(_, l)| l).expect("snapshot at k"))
}

/// Calinski-Harabasz score; `+inf` when the within-cluster dispersion is zero.
pub fn calinski_harabasz<V: AsRef<[f64]>>(vectors: &[V], labels: &[usize]) -> Result<f64> {
    let n = vectors.len();
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} vectors", labels.len())));
    }
    if n < 3 {
        return Err(Error::invalid("Calinski-Harabasz needs at least 3 points"));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.contains(&0) {
        return Err(Error::invalid("cluster labels must be contiguous from 0"));
    }
    if k < 2 || k > n - 1 {
        return Err(Error::invalid(format!("Calinski-Harabasz needs 2 <= k <= n-1, got k={k}, n={n}")));
    }
    let dim = vectors[0].as_ref().len();
    if let Some(v) = vectors.iter().find(|v| v.as_ref().len() != dim) {
        return Err(Error::DimMismatch { expected: dim, got: v.as_ref().len() });
    }

    let mut overall = vec![0.0; dim];
    let mut centroids = vec![vec![0.0; dim]; k];
    for (v, &l) in vectors.iter().zip(labels) {
        for (d, x) in v.as_ref().iter().enumerate() {
            overall[d] += x;
            centroids[l][d] += x;
        }
    }
    overall.iter_mut().for_each(|x| *x /= n as f64);
    for (c, size) in centroids.iter_mut().zip(&sizes) {
        c.iter_mut().for_each(|x| *x /= *size as f64);
    }
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let between: f64 = centroids.iter().zip(&sizes).map(|(c, &s)| s as f64 * sq(c, &overall)).sum();
    let within: f64 = vectors.iter().zip(labels).map(|(v, &l)| sq(v.as_ref(), &centroids[l])).sum();
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}

/// Partition of a set of usages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// usage_id -> cluster index in `0..k`.
    pub labels: BTreeMap<String, usize>,
    pub k: usize,
}

impl Clustering {
    pub fn members(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.k];
        for (id, &c) in &self.labels {
            out[c].push(id.as_str());
        }
        out
    }
}

/// Agglomerative WSI: cosine distance, average linkage, and the cluster
/// count in `2..=min(9, n-1)` with the highest Calinski-Harabasz score
/// (smaller count on ties). One or two usages form a single cluster.
pub fn wsi_cluster(usages: &[(&str, &[f64])]) -> Result<Clustering> {
    let mut sorted: Vec<(&str, &[f64])> = usages.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid(format!("duplicate usage id `{}`", w[0].0)));
    }
    let n = sorted.len();
    if n == 0 {
        return Err(Error::invalid("cannot cluster an empty usage set"));
    }
    if n <= 2 {
        return Ok(Clustering { labels: sorted.iter().map(|(id, _)| (id.to_string(), 0)).collect(), k: 1 });
    }
    let vectors: Vec<&[f64]> = sorted.iter().map(|(_, v)| *v).collect();
    let dist = cosine_distance_matrix(&vectors)?;
    let ks: Vec<usize> = (WSI_MIN_CLUSTERS..=WSI_MAX_CLUSTERS.min(n - 1)).collect();
    let mut levels = average_linkage_levels(&dist, &ks);
    levels.sort_by_key(|(k, _)| *k);

    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    for (k, labels) in levels {
        let score = calinski_harabasz(&vectors, &labels)?;
        if best.as_ref().is_none_or(|(_, b, _)| score > *b) {
            best = Some((k, score, labels));
        }
    }
    let (k, _, labels) = best.expect("at least one candidate cluster count");
    Ok(Clustering { labels: sorted.iter().map(|(id, _)| id.to_string()).zip(labels).collect(), k })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AgglomConfig {
    /// Number of clusters to keep beyond the old senses.
    pub k_extra: usize,
}

struct SeededCluster {
    points: Vec<usize>,
    sense: Option<usize>,
    /// Smallest usage id in the cluster.
    key: String,
}

/// AggloM: single-linkage clustering of old and new usages where old usages
/// start grouped by their annotated sense and every merge involves a cluster
/// made only of new usages. Stops at `#old senses + k_extra` clusters.
///
/// Returns the label of every new usage: the sense of the seeded cluster it
/// ends in, or `novel:<i>` for unseeded clusters (numbered by smallest id).
pub fn agglom_scm(
    word: &TargetWordRecord,
    table: &EmbeddingTable,
    cfg: AgglomConfig,
) -> Result<BTreeMap<String, String>> {
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut clusters: Vec<SeededCluster> = Vec::new();
    let unit = |id: &str| -> Result<Vec<f64>> {
        normalize(table.usage(id)?, Normalization::L2)
            .map_err(|_| Error::Degenerate(format!("zero vector for usage `{id}`")))
    };

    for (s, sense) in word.old_senses.iter().enumerate() {
        let mut ids: Vec<&str> = word
            .old_usages
            .iter()
            .filter(|u| u.gold_sense.as_deref() == Some(sense.sense_id.as_str()))
            .map(|u| u.usage_id.as_str())
            .collect();
        if ids.is_empty() {
            return Err(Error::invalid(format!(
                "old sense `{}` of `{}` has no old usages to seed a cluster",
                sense.sense_id, word.word
            )));
        }
        ids.sort_unstable();
        let mut idx = Vec::with_capacity(ids.len());
        for id in &ids {
            idx.push(points.len());
            points.push(unit(id)?);
        }
        clusters.push(SeededCluster { points: idx, sense: Some(s), key: ids[0].to_string() });
    }
    let mut new_ids: Vec<&str> = word.new_usages.iter().map(|u| u.usage_id.as_str()).collect();
    new_ids.sort_unstable();
    for id in &new_ids {
        clusters.push(SeededCluster { points: vec![points.len()], sense: None, key: id.to_string() });
        points.push(unit(id)?);
    }

    let point_dist = |a: usize, b: usize| (1.0 - dot_unchecked(&points[a], &points[b])).clamp(0.0, 2.0);
    let link = |a: &SeededCluster, b: &SeededCluster| {
        a.points
            .iter()
            .flat_map(|&p| b.points.iter().map(move |&q| (p, q)))
            .map(|(p, q)| point_dist(p, q))
            .fold(f64::INFINITY, f64::min)
    };
    let m = clusters.len();
    let mut dist: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    if i == j || (clusters[i].sense.is_some() && clusters[j].sense.is_some()) {
                        f64::INFINITY
                    } else {
                        link(&clusters[i], &clusters[j])
                    }
                })
                .collect()
        })
        .collect();

    let target = word.old_senses.len() + cfg.k_extra;
    while clusters.len() > target {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                if clusters[i].sense.is_some() && clusters[j].sense.is_some() {
                    continue;
                }
                let d = dist[i][j];
                let better = match best {
                    None => true,
                    Some((bi, bj, bd)) => {
                        d < bd || (d == bd && pair_key(&clusters, i, j) < pair_key(&clusters, bi, bj))
                    }
                };
                if better {
                    best = Some((i, j, d));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let absorbed = clusters.remove(j);
        let row_j = dist.remove(j);
        for row in dist.iter_mut() {
            row.remove(j);
        }
        let merged = &mut clusters[i];
        merged.points.extend(absorbed.points);
        merged.sense = merged.sense.or(absorbed.sense);
        if absorbed.key < merged.key {
            merged.key = absorbed.key;
        }
        for (x, v) in row_j.into_iter().enumerate().filter(|&(x, _)| x != j) {
            let x = if x > j { x - 1 } else { x };
            if x != i {
                dist[i][x] = dist[i][x].min(v);
                dist[x][i] = dist[i][x];
            }
        }
    }

    let point_to_new: BTreeMap<usize, &str> =
        new_ids.iter().enumerate().map(|(i, id)| (points.len() - new_ids.len() + i, *id)).collect();
    let mut unseeded: Vec<&SeededCluster> = clusters.iter().filter(|c| c.sense.is_none()).collect();
    unseeded.sort_by(|a, b| a.key.cmp(&b.key));
    let mut out = BTreeMap::new();
    for c in &clusters {
        let label = match c.sense {
            Some(s) => word.old_senses[s].sense_id.clone(),
            None => novel_label(unseeded.iter().position(|u| std::ptr::eq(*u, c)).expect("listed")),
        };
        for p in &c.points {
            if let Some(id) = point_to_new.get(p) {
                out.insert(id.to_string(), label.clone());
            }
        }
    }
    Ok(out)
}

fn pair_key(clusters: &[SeededCluster], i: usize, j: usize) -> (&str, &str) {
    let (a, b) = (clusters[i].key.as_str(), clusters[j].key.as_str());
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
