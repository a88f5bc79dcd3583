//! Permutation-invariant partition comparison by pair counting.

use std::collections::HashMap;

/// Pair-counting confusion between a predicted and a reference partition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PairCounts {
    /// Pairs together in both.
    pub both: u64,
    /// Pairs together in the prediction only.
    pub predicted_only: u64,
    /// Pairs together in the reference only.
    pub reference_only: u64,
    /// Pairs apart in both.
    pub neither: u64,
}

fn choose2(x: u64) -> u64 {
    x * x.saturating_sub(1) / 2
}

pub fn pair_counts<A, B>(predicted: &[A], reference: &[B]) -> PairCounts
where
    A: std::hash::Hash + Eq,
    B: std::hash::Hash + Eq,
{
    assert_eq!(
        predicted.len(),
        reference.len(),
        "partitions must cover the same points"
    );
    let mut joint: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (a, b) in predicted.iter().zip(reference) {
        *joint.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let both: u64 = joint.values().map(|&c| choose2(c)).sum();
    let pred_pairs: u64 = rows.values().map(|&c| choose2(c)).sum();
    let ref_pairs: u64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(predicted.len() as u64);
    PairCounts {
        both,
        predicted_only: pred_pairs - both,
        reference_only: ref_pairs - both,
        neither: total - pred_pairs - ref_pairs + both,
    }
}

/// F1 over co-clustered pairs. Defined as 1 when neither partition has any
/// co-clustered pair.
pub fn pair_f1<A, B>(predicted: &[A], reference: &[B]) -> f64
where
    A: std::hash::Hash + Eq,
    B: std::hash::Hash + Eq,
{
    let c = pair_counts(predicted, reference);
    let denom = 2 * c.both + c.predicted_only + c.reference_only;
    if denom == 0 {
        1.0
    } else {
        2.0 * c.both as f64 / denom as f64
    }
}

/// Hubert–Arabie adjusted Rand index.
pub fn adjusted_rand_index<A, B>(predicted: &[A], reference: &[B]) -> f64
where
    A: std::hash::Hash + Eq,
    B: std::hash::Hash + Eq,
{
    let c = pair_counts(predicted, reference);
    let total = (c.both + c.predicted_only + c.reference_only + c.neither) as f64;
    let a = (c.both + c.predicted_only) as f64;
    let b = (c.both + c.reference_only) as f64;
    if total == 0.0 {
        return 1.0;
    }
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    if max == expected {
        return 1.0;
    }
    (c.both as f64 - expected) / (max - expected)
}
