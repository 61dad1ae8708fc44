//! Embedding tables and the distance kernels shared by every method.
//!
//! Table file format:
//!
//! ```text
//! #space <name> dim <d>
//! usage<TAB><usage_id><TAB><f1> <f2> ... <fd>
//! gloss<TAB><word>::<sense_id><TAB><f1> ... <fd>
//! ```

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EmbeddingKind {
    Usage,
    Gloss,
}

impl EmbeddingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingKind::Usage => "usage",
            EmbeddingKind::Gloss => "gloss",
        }
    }
}

impl FromStr for EmbeddingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "usage" => Ok(EmbeddingKind::Usage),
            "gloss" => Ok(EmbeddingKind::Gloss),
            other => Err(format!("unknown kind `{other}` (expected usage|gloss)")),
        }
    }
}

/// Table id of the gloss vector for `sense_id` of `word`.
pub fn gloss_key(word: &str, sense_id: &str) -> String {
    format!("{word}::{sense_id}")
}

/// Named embedding space holding usage and gloss vectors of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    space_name: String,
    dim: usize,
    usages: HashMap<String, Vec<f64>>,
    glosses: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(space_name: impl Into<String>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(EmbeddingTable { space_name: space_name.into(), dim, usages: HashMap::new(), glosses: HashMap::new() })
    }

    pub fn space_name(&self) -> &str {
        &self.space_name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self, kind: EmbeddingKind) -> usize {
        self.map(kind).len()
    }

    pub fn is_empty(&self) -> bool {
        self.usages.is_empty() && self.glosses.is_empty()
    }

    fn map(&self, kind: EmbeddingKind) -> &HashMap<String, Vec<f64>> {
        match kind {
            EmbeddingKind::Usage => &self.usages,
            EmbeddingKind::Gloss => &self.glosses,
        }
    }

    pub fn insert(&mut self, kind: EmbeddingKind, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: vector.len() });
        }
        if let Some(bad) = vector.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite component {bad} in `{id}`")));
        }
        let map = match kind {
            EmbeddingKind::Usage => &mut self.usages,
            EmbeddingKind::Gloss => &mut self.glosses,
        };
        if map.contains_key(&id) {
            return Err(Error::invalid(format!("duplicate {} id `{id}`", kind.as_str())));
        }
        map.insert(id, vector);
        Ok(())
    }

    pub fn get(&self, kind: EmbeddingKind, id: &str) -> Option<&[f64]> {
        self.map(kind).get(id).map(Vec::as_slice)
    }

    pub fn usage(&self, usage_id: &str) -> Result<&[f64]> {
        self.get(EmbeddingKind::Usage, usage_id)
            .ok_or_else(|| Error::MissingEmbedding { kind: "usage", id: usage_id.to_string() })
    }

    pub fn gloss(&self, word: &str, sense_id: &str) -> Result<&[f64]> {
        let key = gloss_key(word, sense_id);
        self.get(EmbeddingKind::Gloss, &key).ok_or(Error::MissingEmbedding { kind: "gloss", id: key })
    }

    /// Entries sorted by kind then id.
    pub fn sorted_entries(&self) -> Vec<(EmbeddingKind, &str, &[f64])> {
        let mut out: Vec<_> = [EmbeddingKind::Usage, EmbeddingKind::Gloss]
            .into_iter()
            .flat_map(|kind| self.map(kind).iter().map(move |(id, v)| (kind, id.as_str(), v.as_slice())))
            .collect();
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }
}

pub fn load_embeddings<R: BufRead>(reader: R, source_name: &str) -> Result<EmbeddingTable> {
    let src = source_name;
    let mut table: Option<EmbeddingTable> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let Some(table) = table.as_mut() else {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["#space", name, "dim", d] => {
                    let dim =
                        d.parse::<usize>().map_err(|_| Error::parse(src, lineno, format!("malformed dim `{d}`")))?;
                    table =
                        Some(EmbeddingTable::new(*name, dim).map_err(|e| Error::parse(src, lineno, e.to_string()))?);
                    continue;
                }
                _ => return Err(Error::parse(src, lineno, "expected header `#space <name> dim <d>`")),
            }
        };
        let mut fields = line.splitn(3, '\t');
        let (Some(kind), Some(id), Some(values)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(src, lineno, "expected `<kind>\\t<id>\\t<values>`"));
        };
        let kind: EmbeddingKind = kind.parse().map_err(|e: String| Error::parse(src, lineno, e))?;
        let vector = values
            .split_whitespace()
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::parse(src, lineno, format!("row `{id}`: malformed float `{v}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.len() != table.dim() {
            return Err(Error::parse(
                src,
                lineno,
                format!("row `{id}`: expected {} values, found {}", table.dim(), vector.len()),
            ));
        }
        table.insert(kind, id, vector).map_err(|e| Error::parse(src, lineno, format!("row `{id}`: {e}")))?;
    }
    table.ok_or_else(|| Error::parse(src, 1, "empty embedding file"))
}

/// Write a table with shortest round-trip float formatting, rows sorted.
pub fn write_embeddings<W: Write>(table: &EmbeddingTable, mut out: W) -> Result<()> {
    writeln!(out, "#space {} dim {}", table.space_name(), table.dim())?;
    for (kind, id, v) in table.sorted_entries() {
        write!(out, "{}\t{id}\t", kind.as_str())?;
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                out.write_all(b" ")?;
            }
            write!(out, "{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Normalization {
    None,
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceFn {
    Cosine,
    Euclidean,
    Manhattan,
}

impl fmt::Display for DistanceFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceFn::Cosine => "cos",
            DistanceFn::Euclidean => "euclid",
            DistanceFn::Manhattan => "manh",
        })
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch { expected: a.len(), got: b.len() });
    }
    Ok(())
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn normalize(v: &[f64], mode: Normalization) -> Result<Vec<f64>> {
    let norm = match mode {
        Normalization::None => return Ok(v.to_vec()),
        Normalization::L1 => l1_norm(v),
        Normalization::L2 => l2_norm(v),
    };
    if norm == 0.0 {
        return Err(Error::Degenerate(format!("cannot {mode:?}-normalize the zero vector")));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(dot_unchecked(a, b))
}

#[inline]
pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine distance from a dot product and both L2 norms, clamped to `[0, 2]`.
#[inline]
pub(crate) fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    (1.0 - dot / (norm_a * norm_b)).clamp(0.0, 2.0)
}

pub fn distance(a: &[f64], b: &[f64], f: DistanceFn) -> Result<f64> {
    check_dims(a, b)?;
    Ok(match f {
        DistanceFn::Cosine => {
            let (na, nb) = (l2_norm(a), l2_norm(b));
            if na == 0.0 || nb == 0.0 {
                return Err(Error::Degenerate("cosine distance of a zero vector".into()));
            }
            cosine_from_parts(dot_unchecked(a, b), na, nb)
        }
        DistanceFn::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        DistanceFn::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
    })
}
