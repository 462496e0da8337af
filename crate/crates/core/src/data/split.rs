//! Seeded, per-class stratified train/val/test partitioning, disjoint by
//! source_id.

use std::collections::BTreeMap;

use crate::data::DatasetRecord;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// (train, val, test) fractions; must sum to 1.
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            fractions: (0.6, 0.2, 0.2),
            seed: 0,
        }
    }
}

pub fn split(
    records: &[DatasetRecord],
    spec: &SplitSpec,
) -> Result<(Vec<DatasetRecord>, Vec<DatasetRecord>, Vec<DatasetRecord>)> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records to split".into()));
    }
    let fractions = [spec.fractions.0, spec.fractions.1, spec.fractions.2];
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InsufficientData(format!(
            "split fractions must sum to 1, got {fractions:?}"
        )));
    }
    let nonzero = fractions.iter().filter(|&&f| f > 0.0).count();

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (ix, rec) in records.iter().enumerate() {
        by_class.entry(rec.label).or_default().push(ix);
    }

    let mut parts: [Vec<DatasetRecord>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (&label, indices) in &by_class {
        let n = indices.len();
        if n < nonzero {
            return Err(Error::InsufficientData(format!(
                "class {label} has {n} records for {nonzero} non-empty splits"
            )));
        }
        let mut shuffled = indices.clone();
        Rng::derive(spec.seed, "split", &[label as u64]).shuffle(&mut shuffled);

        // floor allocation, remainder by largest fractional part, then ensure
        // every non-empty split gets at least one record
        let mut counts = [0usize; 3];
        let mut fracs = [0.0f64; 3];
        for s in 0..3 {
            let exact = fractions[s] * n as f64;
            counts[s] = exact.floor() as usize;
            fracs[s] = exact - exact.floor();
        }
        let mut rest = n - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| fracs[b].partial_cmp(&fracs[a]).unwrap().then(a.cmp(&b)));
        let mut oi = 0;
        while rest > 0 {
            let s = order[oi % 3];
            if fractions[s] > 0.0 {
                counts[s] += 1;
                rest -= 1;
            }
            oi += 1;
        }
        for s in 0..3 {
            if fractions[s] > 0.0 && counts[s] == 0 {
                let donor = (0..3)
                    .filter(|&d| counts[d] > 1)
                    .max_by_key(|&d| counts[d])
                    .expect("n >= nonzero guarantees a donor");
                counts[donor] -= 1;
                counts[s] += 1;
            }
        }

        let mut cursor = 0;
        for s in 0..3 {
            for &ix in &shuffled[cursor..cursor + counts[s]] {
                parts[s].push(records[ix].clone());
            }
            cursor += counts[s];
        }
    }
    let [train, val, test] = parts;
    Ok((train, val, test))
}
