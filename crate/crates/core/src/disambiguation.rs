//! Gloss-matching WSD: each new usage takes the old gloss whose embedding
//! has the highest dot product with the usage embedding.

use crate::corpus::TargetWordRecord;
use crate::error::{Error, Result};
use crate::geometry::{dot_unchecked, EmbeddingTable};

#[derive(Debug, Clone, PartialEq)]
pub struct WsdAssignment {
    pub usage_id: String,
    pub chosen_sense_id: String,
    pub score: f64,
    /// Dot product per old sense, in inventory order.
    pub per_sense_scores: Vec<(String, f64)>,
}

/// Assign every new usage of `word` to its best-scoring old sense.
/// Ties go to the sense listed first in the inventory.
pub fn assign_senses(word: &TargetWordRecord, table: &EmbeddingTable) -> Result<Vec<WsdAssignment>> {
    if word.old_senses.is_empty() {
        return Err(Error::invalid(format!("word `{}` has no old senses", word.word)));
    }
    let glosses = word
        .old_senses
        .iter()
        .map(|s| Ok((s.sense_id.as_str(), table.gloss(&word.word, &s.sense_id)?)))
        .collect::<Result<Vec<_>>>()?;

    word.new_usages
        .iter()
        .map(|usage| {
            let v = table.usage(&usage.usage_id)?;
            let per_sense_scores: Vec<(String, f64)> =
                glosses.iter().map(|(id, g)| (id.to_string(), dot_unchecked(v, g))).collect();
            let mut best = 0;
            for (i, (_, score)) in per_sense_scores.iter().enumerate().skip(1) {
                if *score > per_sense_scores[best].1 {
                    best = i;
                }
            }
            Ok(WsdAssignment {
                usage_id: usage.usage_id.clone(),
                chosen_sense_id: per_sense_scores[best].0.clone(),
                score: per_sense_scores[best].1,
                per_sense_scores,
            })
        })
        .collect()
}
