//! Novel sense detection: decide whether the gloss picked by WSD is wrong
//! for a usage, i.e. whether the usage belongs to a sense without a gloss.
//!
//! Each (usage, chosen gloss) pair becomes a 13-feature row: five distances
//! between usage and gloss vectors in each of two embedding spaces, then the
//! word's old-usage, old-sense and new-usage counts. Rows are standardized
//! and fed to an L2-regularized logistic regression.

use std::io::{BufRead, Write};

use crate::corpus::WordCounts;
use crate::error::{Error, Result};
use crate::geometry::{distance, normalize, DistanceFn, EmbeddingTable, Normalization};

pub const N_FEATURES: usize = 13;
pub const N_DISTANCE_FEATURES: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.65;

/// Per-space distance features: (normalization, distance function, name).
pub const DISTANCE_KINDS: [(Normalization, DistanceFn, &str); 5] = [
    (Normalization::None, DistanceFn::Cosine, "cos"),
    (Normalization::None, DistanceFn::Euclidean, "euclid"),
    (Normalization::None, DistanceFn::Manhattan, "manh"),
    (Normalization::L1, DistanceFn::Manhattan, "l1_manh"),
    (Normalization::L2, DistanceFn::Euclidean, "l2_euclid"),
];

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "a.cos",
    "a.euclid",
    "a.manh",
    "a.l1_manh",
    "a.l2_euclid",
    "b.cos",
    "b.euclid",
    "b.manh",
    "b.l1_manh",
    "b.l2_euclid",
    "n_old_usages",
    "n_old_senses",
    "n_new_usages",
];

pub fn feature_names() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Features of one new usage and the gloss WSD chose for it. `space_a` is the
/// fine-tuned space, `space_b` the base space.
pub fn extract_features(
    word: &str,
    usage_id: &str,
    chosen_sense_id: &str,
    space_a: &EmbeddingTable,
    space_b: &EmbeddingTable,
    counts: WordCounts,
) -> Result<FeatureVector> {
    let mut out = [0.0; N_FEATURES];
    for (s, table) in [space_a, space_b].into_iter().enumerate() {
        let u = table.usage(usage_id)?;
        let g = table.gloss(word, chosen_sense_id)?;
        for (k, (norm, dist, _)) in DISTANCE_KINDS.iter().enumerate() {
            let (u, g) = match norm {
                Normalization::None => (u.to_vec(), g.to_vec()),
                _ => (normalize(u, *norm)?, normalize(g, *norm)?),
            };
            out[s * DISTANCE_KINDS.len() + k] = distance(&u, &g, *dist)?;
        }
    }
    out[10] = counts.old_usages as f64;
    out[11] = counts.old_senses as f64;
    out[12] = counts.new_usages as f64;
    Ok(FeatureVector(out))
}

/// Column means and population standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalerParams {
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.std)).map(|(x, (m, s))| (x - m) / s).collect()
    }
}

/// Fit a standard scaler. Constant columns get `std = 1`.
pub fn fit_scaler<R: AsRef<[f64]>>(rows: &[R]) -> Result<ScalerParams> {
    if rows.len() < 2 {
        return Err(Error::invalid("scaler needs at least 2 rows"));
    }
    let d = rows[0].as_ref().len();
    if let Some(r) = rows.iter().find(|r| r.as_ref().len() != d) {
        return Err(Error::DimMismatch { expected: d, got: r.as_ref().len() });
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    Ok(ScalerParams { mean, std })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsdTrainConfig {
    /// Inverse regularization strength.
    pub c: f64,
    /// Stop once the gradient's max-norm drops below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NsdTrainConfig {
    fn default() -> Self {
        NsdTrainConfig { c: 1.0, tol: 1e-8, max_iters: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-m))` without overflow.
fn log1p_exp_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

fn sign(label: bool) -> f64 {
    if label {
        1.0
    } else {
        -1.0
    }
}

fn margin(weights: &[f64], bias: f64, row: &[f64]) -> f64 {
    weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + bias
}

/// Regularized logistic loss
/// `sum_i log(1 + exp(-y_i (w.x_i + b))) + |w|^2 / (2c)`, bias unpenalized.
pub fn objective<R: AsRef<[f64]>>(weights: &[f64], bias: f64, rows: &[R], labels: &[bool], c: f64) -> f64 {
    let data: f64 =
        rows.iter().zip(labels).map(|(r, &y)| log1p_exp_neg(sign(y) * margin(weights, bias, r.as_ref()))).sum();
    data + weights.iter().map(|w| w * w).sum::<f64>() / (2.0 * c)
}

/// Gradient of [`objective`]: `(d/dw, d/db)`.
pub fn gradient<R: AsRef<[f64]>>(weights: &[f64], bias: f64, rows: &[R], labels: &[bool], c: f64) -> (Vec<f64>, f64) {
    let mut gw: Vec<f64> = weights.iter().map(|w| w / c).collect();
    let mut gb = 0.0;
    for (r, &y) in rows.iter().zip(labels) {
        let r = r.as_ref();
        let y = sign(y);
        let coef = -y * sigmoid(-y * margin(weights, bias, r));
        for (g, x) in gw.iter_mut().zip(r) {
            *g += coef * x;
        }
        gb += coef;
    }
    (gw, gb)
}

#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn train_logreg<R: AsRef<[f64]>>(rows: &[R], labels: &[bool], cfg: &NsdTrainConfig) -> Result<LogisticModel> {
    train_logreg_traced(rows, labels, cfg).map(|(m, _)| m)
}

/// Full-batch gradient descent with Barzilai-Borwein trial steps and Armijo
/// backtracking, starting from zero. Every accepted step decreases the
/// objective.
pub fn train_logreg_traced<R: AsRef<[f64]>>(
    rows: &[R],
    labels: &[bool],
    cfg: &NsdTrainConfig,
) -> Result<(LogisticModel, TrainTrace)> {
    if cfg.c.is_nan() || cfg.c <= 0.0 || cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(Error::invalid("training needs c > 0 and tol > 0"));
    }
    if rows.len() != labels.len() {
        return Err(Error::invalid(format!("{} rows but {} labels", rows.len(), labels.len())));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass(format!("{positives} positive of {} training examples", labels.len())));
    }
    let d = rows[0].as_ref().len();
    if let Some(r) = rows.iter().find(|r| r.as_ref().len() != d) {
        return Err(Error::DimMismatch { expected: d, got: r.as_ref().len() });
    }

    let c = cfg.c;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut f = objective(&w, b, rows, labels, c);
    let (mut gw, mut gb) = gradient(&w, b, rows, labels, c);
    let mut trace = TrainTrace { objective: vec![f], iterations: 0, converged: false };
    let mut step = 1.0;

    for iter in 0..cfg.max_iters {
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < cfg.tol {
            trace.converged = true;
            trace.iterations = iter;
            break;
        }
        let gsq = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        let mut accepted = None;
        let mut t = step;
        for _ in 0..80 {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(x, g)| x - t * g).collect();
            let b_new = b - t * gb;
            let f_new = objective(&w_new, b_new, rows, labels, c);
            if f_new <= f - 1e-4 * t * gsq {
                accepted = Some((w_new, b_new, f_new));
                break;
            }
            t *= 0.5;
        }
        let Some((w_new, b_new, f_new)) = accepted else {
            // No decrease representable in floating point: at the optimum.
            trace.converged = true;
            trace.iterations = iter;
            break;
        };
        let (gw_new, gb_new) = gradient(&w_new, b_new, rows, labels, c);
        let mut ss = (b_new - b) * (b_new - b);
        let mut sy = (b_new - b) * (gb_new - gb);
        for i in 0..d {
            let s = w_new[i] - w[i];
            ss += s * s;
            sy += s * (gw_new[i] - gw[i]);
        }
        step = if sy > 0.0 { ss / sy } else { t * 2.0 };
        w = w_new;
        b = b_new;
        f = f_new;
        gw = gw_new;
        gb = gb_new;
        trace.objective.push(f);
        trace.iterations = iter + 1;
    }
    Ok((LogisticModel { weights: w, bias: b }, trace))
}

/// Strictly above the threshold counts as an outlier.
pub fn is_outlier(probability: f64, threshold: f64) -> bool {
    probability > threshold
}

/// Scaler + logistic regression + decision threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct NsdModel {
    pub feature_names: Vec<String>,
    pub scaler: ScalerParams,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

impl NsdModel {
    /// Fit a scaler and classifier on arbitrary feature columns.
    pub fn fit_columns<R: AsRef<[f64]>>(
        feature_names: Vec<String>,
        rows: &[R],
        labels: &[bool],
        cfg: &NsdTrainConfig,
    ) -> Result<Self> {
        let scaler = fit_scaler(rows)?;
        if scaler.mean.len() != feature_names.len() {
            return Err(Error::DimMismatch { expected: feature_names.len(), got: scaler.mean.len() });
        }
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| scaler.transform(r.as_ref())).collect();
        let lr = train_logreg(&scaled, labels, cfg)?;
        Ok(NsdModel { feature_names, scaler, weights: lr.weights, bias: lr.bias, threshold: DEFAULT_THRESHOLD })
    }

    /// Fit the canonical 13-feature detector.
    pub fn fit(rows: &[FeatureVector], labels: &[bool], cfg: &NsdTrainConfig) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.iter().map(FeatureVector::as_slice).collect();
        Self::fit_columns(feature_names(), &rows, labels, cfg)
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(margin(&self.weights, self.bias, &self.scaler.transform(row)))
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.threshold = threshold;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.feature_names.len();
        if self.scaler.mean.len() != d || self.scaler.std.len() != d || self.weights.len() != d {
            return Err(Error::invalid("model parameter lengths disagree"));
        }
        if self.scaler.std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::invalid("scaler std must be positive"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }
}

/// Outlier probability and decision for one usage.
pub fn predict_outlier(model: &NsdModel, features: &FeatureVector) -> (f64, bool) {
    let p = model.probability(features.as_slice());
    (p, is_outlier(p, model.threshold))
}

pub fn save_model<W: Write>(model: &NsdModel, mut out: W) -> Result<()> {
    for (i, name) in model.feature_names.iter().enumerate() {
        writeln!(
            out,
            "feature {name} mean {:?} std {:?} weight {:?}",
            model.scaler.mean[i], model.scaler.std[i], model.weights[i]
        )?;
    }
    writeln!(out, "bias {:?}", model.bias)?;
    writeln!(out, "threshold {:?}", model.threshold)?;
    Ok(())
}

/// Load a canonical 13-feature model file.
pub fn load_model<R: BufRead>(reader: R, source_name: &str) -> Result<NsdModel> {
    let src = source_name;
    let mut names = Vec::new();
    let mut mean = Vec::new();
    let mut std = Vec::new();
    let mut weights = Vec::new();
    let mut bias = None;
    let mut threshold = None;
    let num = |line: usize, s: &str| -> Result<f64> {
        s.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::parse(src, line, format!("malformed number `{s}`")))
    };
    let mut last_line = 0;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            [] => {}
            ["feature", name, "mean", m, "std", s, "weight", w] => {
                let expected = FEATURE_NAMES.get(names.len()).copied();
                if expected != Some(*name) {
                    return Err(Error::parse(
                        src,
                        lineno,
                        format!("feature `{name}` where `{}` was expected", expected.unwrap_or("<none>")),
                    ));
                }
                names.push(name.to_string());
                mean.push(num(lineno, m)?);
                std.push(num(lineno, s)?);
                weights.push(num(lineno, w)?);
            }
            ["bias", v] if bias.is_none() => bias = Some(num(lineno, v)?),
            ["threshold", v] if threshold.is_none() => threshold = Some(num(lineno, v)?),
            _ => return Err(Error::parse(src, lineno, format!("unexpected line `{line}`"))),
        }
    }
    if names.len() != N_FEATURES {
        return Err(Error::parse(src, last_line, format!("expected {N_FEATURES} features, found {}", names.len())));
    }
    let model = NsdModel {
        feature_names: names,
        scaler: ScalerParams { mean, std },
        weights,
        bias: bias.ok_or_else(|| Error::parse(src, last_line, "missing bias"))?,
        threshold: threshold.ok_or_else(|| Error::parse(src, last_line, "missing threshold"))?,
    };
    model.validate().map_err(|e| Error::parse(src, last_line, e.to_string()))?;
    Ok(model)
}
