//! Decision table majority classifier: a best-first forward search picks the
//! attribute subset whose lookup table has the best leave-one-out accuracy.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::select::{bin_index, equal_frequency_cuts, DEFAULT_BINS};
use crate::util::{argmax, normalize};

const MISSING_CODE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTable {
    /// Selected attributes, ascending.
    pub attributes: Vec<usize>,
    /// Bin edges for selected numeric attributes.
    pub cuts: Vec<Option<Vec<f64>>>,
    /// `(key, class counts)` sorted by key.
    pub entries: Vec<(Vec<u32>, Vec<f64>)>,
    pub global: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionTableParams {
    /// Consecutive non-improving expansions before the search stops.
    pub stale_limit: usize,
}

impl Default for DecisionTableParams {
    fn default() -> Self {
        DecisionTableParams { stale_limit: 5 }
    }
}

fn code(cuts: &Option<Vec<f64>>, v: f64) -> u32 {
    if v.is_nan() {
        return MISSING_CODE;
    }
    match cuts {
        Some(c) => bin_index(c, v) as u32,
        None => v as u32,
    }
}

impl DecisionTable {
    pub fn fit(data: &Dataset, params: &DecisionTableParams) -> DecisionTable {
        let n = data.n_rows();
        let m = data.n_attrs();
        let cuts: Vec<Option<Vec<f64>>> = (0..m)
            .map(|j| {
                if data.schema.attributes[j].is_nominal() {
                    None
                } else {
                    let values: Vec<Option<f64>> = (0..n).map(|i| Some(data.value(i, j))).collect();
                    Some(equal_frequency_cuts(&values, DEFAULT_BINS).unwrap_or_default())
                }
            })
            .collect();
        let codes: Vec<u32> = (0..n * m).map(|k| code(&cuts[k % m], data.x[k])).collect();
        let global = data.class_counts();
        let eval = |subset: &[usize]| loo_accuracy(&codes, m, &data.y, &global, subset);

        let mut visited: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut best: (f64, Vec<usize>) = (eval(&[]), Vec::new());
        visited.insert(Vec::new());
        // (merit, insertion order, subset)
        let mut open: Vec<(f64, usize, Vec<usize>)> = vec![(best.0, 0, Vec::new())];
        let mut inserted = 1;
        let mut stale = 0;
        while !open.is_empty() {
            let mut pick = 0;
            for (i, o) in open.iter().enumerate() {
                if o.0 > open[pick].0 || (o.0 == open[pick].0 && o.1 < open[pick].1) {
                    pick = i;
                }
            }
            let (_, _, subset) = open.swap_remove(pick);
            let mut improved = false;
            for j in 0..m {
                if subset.contains(&j) {
                    continue;
                }
                let mut child = subset.clone();
                child.push(j);
                child.sort_unstable();
                if !visited.insert(child.clone()) {
                    continue;
                }
                let merit = eval(&child);
                if merit > best.0 + 1e-12 {
                    best = (merit, child.clone());
                    improved = true;
                }
                open.push((merit, inserted, child));
                inserted += 1;
            }
            if improved {
                stale = 0;
            } else {
                stale += 1;
                if stale >= params.stale_limit {
                    break;
                }
            }
        }

        let attributes = best.1;
        let mut table: HashMap<Vec<u32>, Vec<f64>> = HashMap::new();
        for i in 0..n {
            let key: Vec<u32> = attributes.iter().map(|&j| codes[i * m + j]).collect();
            table.entry(key).or_insert_with(|| vec![0.0; global.len()])[data.y[i]] += 1.0;
        }
        let mut entries: Vec<(Vec<u32>, Vec<f64>)> = table.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        DecisionTable {
            cuts: attributes.iter().map(|&j| cuts[j].clone()).collect(),
            attributes,
            entries,
            global,
        }
    }

    pub fn key(&self, row: &[f64]) -> Vec<u32> {
        self.attributes
            .iter()
            .zip(&self.cuts)
            .map(|(&j, c)| code(c, row[j]))
            .collect()
    }

    /// Smoothed counts of the matching entry, else the training class mix.
    pub fn distribution(&self, row: &[f64]) -> Vec<f64> {
        let key = self.key(row);
        match self.entries.binary_search_by(|e| e.0.cmp(&key)) {
            Ok(i) => {
                let counts = &self.entries[i].1;
                let total: f64 = counts.iter().sum::<f64>() + counts.len() as f64;
                counts.iter().map(|c| (c + 1.0) / total).collect()
            }
            Err(_) => {
                let mut g = self.global.clone();
                normalize(&mut g);
                g
            }
        }
    }
}

/// Leave-one-out accuracy of the lookup table on `subset`; a row whose key
/// has no other members falls back to the global majority without it.
fn loo_accuracy(codes: &[u32], m: usize, y: &[usize], global: &[f64], subset: &[usize]) -> f64 {
    let n = y.len();
    if n == 0 {
        return 0.0;
    }
    let c = global.len();
    let mut table: HashMap<Vec<u32>, Vec<f64>> = HashMap::new();
    let keys: Vec<Vec<u32>> = (0..n)
        .map(|i| subset.iter().map(|&j| codes[i * m + j]).collect())
        .collect();
    for (i, k) in keys.iter().enumerate() {
        table.entry(k.clone()).or_insert_with(|| vec![0.0; c])[y[i]] += 1.0;
    }
    let mut correct = 0usize;
    let mut scratch = vec![0.0; c];
    for (i, k) in keys.iter().enumerate() {
        let counts = &table[k];
        let others: f64 = counts.iter().sum::<f64>() - 1.0;
        let source = if others > 0.0 { counts } else { global };
        scratch.copy_from_slice(source);
        scratch[y[i]] -= 1.0;
        if argmax(&scratch) == y[i] {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}
