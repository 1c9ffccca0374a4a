//! Decision trees in the C4.5 style: multiway nominal splits, binary numeric
//! splits at midpoints, fractional instances for missing values and
//! pessimistic-error pruning. The same builder grows the unpruned randomized
//! trees used by the forest.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::dataset::Dataset;
use crate::util::{entropy, normalize};

/// Attributes whose gain falls this far below the mean still count as
/// above average.
const AVERAGE_GAIN_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Gain ratio among attributes with at least average gain.
    GainRatio,
    InfoGain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub min_leaf: f64,
    pub prune: bool,
    pub confidence: f64,
    /// Attributes drawn at random per node; `None` examines all of them.
    pub candidates: Option<usize>,
    /// Scale the numeric minimum split size with node weight as C4.5 does.
    pub scaled_min_split: bool,
    pub max_depth: usize,
}

impl TreeParams {
    pub fn c45(min_leaf: f64, confidence: f64, prune: bool) -> TreeParams {
        TreeParams {
            criterion: Criterion::GainRatio,
            min_leaf,
            prune,
            confidence,
            candidates: None,
            scaled_min_split: true,
            max_depth: 100,
        }
    }

    pub fn random(candidates: usize) -> TreeParams {
        TreeParams {
            criterion: Criterion::InfoGain,
            min_leaf: 1.0,
            prune: false,
            confidence: 0.25,
            candidates: Some(candidates),
            scaled_min_split: false,
            max_depth: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Training class weights that reached this node.
    pub dist: Vec<f64>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Split {
    Leaf,
    Nominal {
        attr: usize,
        /// Sorted level codes that had training weight.
        levels: Vec<u32>,
        weights: Vec<f64>,
        children: Vec<u32>,
    },
    Numeric {
        attr: usize,
        threshold: f64,
        weights: [f64; 2],
        children: [u32; 2],
    },
}

type Item = (u32, f64);

impl Tree {
    /// Grows a tree on `rows` (all weight 1) restricted to `allowed`
    /// attributes. `rng` is required when `params.candidates` is set.
    pub fn fit(data: &Dataset, items: Vec<Item>, allowed: &[usize], params: &TreeParams, rng: Option<&mut ChaCha8Rng>) -> Tree {
        let max_codes = data
            .schema
            .attributes
            .iter()
            .map(|a| a.code_count())
            .max()
            .unwrap_or(1);
        let mut b = Builder {
            data,
            params,
            allowed,
            rng,
            nodes: Vec::new(),
            scratch: vec![0.0; max_codes * data.n_classes()],
            touched: Vec::new(),
            seen: vec![false; max_codes],
        };
        b.grow(items, 0);
        let mut tree = Tree { nodes: b.nodes };
        if params.prune {
            tree.prune(0, params.confidence);
            tree = tree.compact();
        }
        tree
    }

    pub fn fit_all(data: &Dataset, params: &TreeParams) -> Tree {
        let items = (0..data.n_rows() as u32).map(|r| (r, 1.0)).collect();
        let allowed: Vec<usize> = (0..data.n_attrs()).collect();
        Tree::fit(data, items, &allowed, params, None)
    }

    pub fn distribution(&self, row: &[f64]) -> Vec<f64> {
        self.dist_at(0, row)
    }

    fn dist_at(&self, id: usize, row: &[f64]) -> Vec<f64> {
        let node = &self.nodes[id];
        match &node.split {
            Split::Leaf => leaf_distribution(&node.dist),
            Split::Nominal {
                attr,
                levels,
                weights,
                children,
            } => {
                let v = row[*attr];
                if v.is_nan() {
                    return self.blend(row, weights, children);
                }
                match levels.binary_search(&(v as u32)) {
                    Ok(b) => self.dist_at(children[b] as usize, row),
                    Err(_) => leaf_distribution(&node.dist),
                }
            }
            Split::Numeric {
                attr,
                threshold,
                weights,
                children,
            } => {
                let v = row[*attr];
                if v.is_nan() {
                    self.blend(row, weights, children)
                } else if v <= *threshold {
                    self.dist_at(children[0] as usize, row)
                } else {
                    self.dist_at(children[1] as usize, row)
                }
            }
        }
    }

    fn blend(&self, row: &[f64], weights: &[f64], children: &[u32]) -> Vec<f64> {
        let total: f64 = weights.iter().sum();
        let mut out: Vec<f64> = Vec::new();
        for (&w, &child) in weights.iter().zip(children) {
            let d = self.dist_at(child as usize, row);
            if out.is_empty() {
                out = vec![0.0; d.len()];
            }
            for (o, p) in out.iter_mut().zip(d) {
                *o += w / total * p;
            }
        }
        normalize(&mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.split, Split::Leaf)).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, id: usize) -> usize {
            match &t.nodes[id].split {
                Split::Leaf => 0,
                Split::Nominal { children, .. } => 1 + children.iter().map(|&c| walk(t, c as usize)).max().unwrap_or(0),
                Split::Numeric { children, .. } => 1 + children.iter().map(|&c| walk(t, c as usize)).max().unwrap_or(0),
            }
        }
        walk(self, 0)
    }

    /// Attribute tested at the root, if any.
    pub fn root_attribute(&self) -> Option<usize> {
        match &self.nodes[0].split {
            Split::Leaf => None,
            Split::Nominal { attr, .. } | Split::Numeric { attr, .. } => Some(*attr),
        }
    }

    /// Subtree replacement bottom-up; returns the estimated error count.
    fn prune(&mut self, id: usize, confidence: f64) -> f64 {
        let children: Vec<u32> = match &self.nodes[id].split {
            Split::Leaf => return leaf_errors(&self.nodes[id].dist, confidence),
            Split::Nominal { children, .. } => children.clone(),
            Split::Numeric { children, .. } => children.to_vec(),
        };
        let subtree: f64 = children.iter().map(|&c| self.prune(c as usize, confidence)).sum();
        let as_leaf = leaf_errors(&self.nodes[id].dist, confidence);
        if as_leaf <= subtree + 0.1 {
            self.nodes[id].split = Split::Leaf;
            as_leaf
        } else {
            subtree
        }
    }

    /// Drops nodes no longer reachable from the root.
    fn compact(self) -> Tree {
        let mut out = Tree { nodes: Vec::new() };
        fn copy(src: &Tree, id: usize, out: &mut Tree) -> u32 {
            let new_id = out.nodes.len();
            let node = &src.nodes[id];
            out.nodes.push(Node {
                dist: node.dist.clone(),
                split: Split::Leaf,
            });
            let split = match &node.split {
                Split::Leaf => Split::Leaf,
                Split::Nominal {
                    attr,
                    levels,
                    weights,
                    children,
                } => Split::Nominal {
                    attr: *attr,
                    levels: levels.clone(),
                    weights: weights.clone(),
                    children: children.iter().map(|&c| copy(src, c as usize, out)).collect(),
                },
                Split::Numeric {
                    attr,
                    threshold,
                    weights,
                    children,
                } => Split::Numeric {
                    attr: *attr,
                    threshold: *threshold,
                    weights: *weights,
                    children: [copy(src, children[0] as usize, out), copy(src, children[1] as usize, out)],
                },
            };
            out.nodes[new_id].split = split;
            new_id as u32
        }
        copy(&self, 0, &mut out);
        out
    }
}

fn leaf_distribution(dist: &[f64]) -> Vec<f64> {
    let mut d = dist.to_vec();
    normalize(&mut d);
    d
}

fn leaf_errors(dist: &[f64], confidence: f64) -> f64 {
    let n: f64 = dist.iter().sum();
    let e = n - dist.iter().copied().fold(0.0, f64::max);
    e + add_errors(n, e, confidence)
}

/// Extra errors expected at confidence `cf` beyond the `e` observed in `n`
/// (upper bound of the binomial interval, normal approximation above one
/// error).
pub fn add_errors(n: f64, e: f64, cf: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    if e < 1.0 {
        let base = n * (1.0 - cf.powf(1.0 / n));
        if e == 0.0 {
            return base;
        }
        return base + e * (add_errors(n, 1.0, cf) - base);
    }
    if e + 0.5 >= n {
        return (n - e).max(0.0);
    }
    let z = Normal::standard().inverse_cdf(1.0 - cf);
    let f = (e + 0.5) / n;
    let r = (f + z * z / (2.0 * n) + z * (f / n - f * f / n + z * z / (4.0 * n * n)).sqrt()) / (1.0 + z * z / n);
    r * n - e
}

struct Builder<'a, 'r> {
    data: &'a Dataset,
    params: &'a TreeParams,
    allowed: &'a [usize],
    rng: Option<&'r mut ChaCha8Rng>,
    nodes: Vec<Node>,
    scratch: Vec<f64>,
    touched: Vec<usize>,
    seen: Vec<bool>,
}

#[derive(Debug, Clone)]
struct Candidate {
    attr: usize,
    gain: f64,
    split_info: f64,
    threshold: Option<f64>,
}

impl Builder<'_, '_> {
    fn class_weights(&self, items: &[Item]) -> Vec<f64> {
        let mut d = vec![0.0; self.data.n_classes()];
        for &(r, w) in items {
            d[self.data.y[r as usize]] += w;
        }
        d
    }

    fn grow(&mut self, items: Vec<Item>, depth: usize) -> u32 {
        let dist = self.class_weights(&items);
        let id = self.nodes.len();
        self.nodes.push(Node {
            dist: dist.clone(),
            split: Split::Leaf,
        });
        let total: f64 = dist.iter().sum();
        let impure = dist.iter().filter(|w| **w > 0.0).count() > 1;
        if !impure || total < 2.0 * self.params.min_leaf || depth >= self.params.max_depth {
            return id as u32;
        }
        let Some(best) = self.choose(&items, total) else {
            return id as u32;
        };
        let attr = best.attr;
        let split = match best.threshold {
            None => {
                let (levels, weights, parts) = self.partition_nominal(&items, attr);
                let children = parts.into_iter().map(|p| self.grow(p, depth + 1)).collect();
                Split::Nominal {
                    attr,
                    levels,
                    weights,
                    children,
                }
            }
            Some(threshold) => {
                let (weights, [left, right]) = self.partition_numeric(&items, attr, threshold);
                let l = self.grow(left, depth + 1);
                let r = self.grow(right, depth + 1);
                Split::Numeric {
                    attr,
                    threshold,
                    weights,
                    children: [l, r],
                }
            }
        };
        self.nodes[id].split = split;
        id as u32
    }

    fn choose(&mut self, items: &[Item], total: f64) -> Option<Candidate> {
        let mut order: Vec<usize> = self.allowed.to_vec();
        let limit = match (self.params.candidates, self.rng.as_deref_mut()) {
            (Some(k), Some(rng)) => {
                order.shuffle(rng);
                k.max(1)
            }
            _ => order.len(),
        };
        let mut found = Vec::new();
        for (i, &a) in order.iter().enumerate() {
            // Past the random quota, keep looking only until something splits.
            if i >= limit && !found.is_empty() {
                break;
            }
            if let Some(c) = self.evaluate(items, a, total) {
                found.push(c);
            }
        }
        if found.is_empty() {
            return None;
        }
        match self.params.criterion {
            Criterion::InfoGain => {
                let mut best = 0;
                for (i, c) in found.iter().enumerate() {
                    if c.gain > found[best].gain {
                        best = i;
                    }
                }
                Some(found.swap_remove(best))
            }
            Criterion::GainRatio => {
                let mean = found.iter().map(|c| c.gain).sum::<f64>() / found.len() as f64;
                let ratio = |c: &Candidate| if c.split_info > 0.0 { c.gain / c.split_info } else { 0.0 };
                let mut best: Option<usize> = None;
                for (i, c) in found.iter().enumerate() {
                    if c.gain < mean - AVERAGE_GAIN_SLACK {
                        continue;
                    }
                    if best.is_none_or(|b| ratio(c) > ratio(&found[b])) {
                        best = Some(i);
                    }
                }
                best.map(|b| found.swap_remove(b))
            }
        }
    }

    fn evaluate(&mut self, items: &[Item], attr: usize, total: f64) -> Option<Candidate> {
        if self.data.schema.attributes[attr].is_nominal() {
            self.evaluate_nominal(items, attr, total)
        } else {
            self.evaluate_numeric(items, attr, total)
        }
    }

    fn evaluate_nominal(&mut self, items: &[Item], attr: usize, total: f64) -> Option<Candidate> {
        let c = self.data.n_classes();
        let top = self.data.schema.attributes[attr].code_count() - 1;
        let mut unknown = 0.0;
        self.touched.clear();
        for &(r, w) in items {
            let v = self.data.value(r as usize, attr);
            if v.is_nan() {
                unknown += w;
                continue;
            }
            let code = (v as usize).min(top);
            if !self.seen[code] {
                self.seen[code] = true;
                self.touched.push(code);
            }
            self.scratch[code * c + self.data.y[r as usize]] += w;
        }
        self.touched.sort_unstable();
        let mut known_dist = vec![0.0; c];
        let mut branch_weights = Vec::with_capacity(self.touched.len());
        let mut cond = 0.0;
        for &code in &self.touched {
            let row = &self.scratch[code * c..(code + 1) * c];
            let wb: f64 = row.iter().sum();
            for (k, v) in row.iter().enumerate() {
                known_dist[k] += v;
            }
            cond += wb * entropy(row);
            branch_weights.push(wb);
        }
        for &code in &self.touched {
            self.scratch[code * c..(code + 1) * c].iter_mut().for_each(|v| *v = 0.0);
            self.seen[code] = false;
        }
        let known: f64 = branch_weights.iter().sum();
        let big = branch_weights.iter().filter(|w| **w >= self.params.min_leaf).count();
        if known <= 0.0 || big < 2 {
            return None;
        }
        let gain = known / total * (entropy(&known_dist) - cond / known);
        branch_weights.push(unknown);
        Some(Candidate {
            attr,
            gain,
            split_info: entropy(&branch_weights),
            threshold: None,
        })
    }

    fn evaluate_numeric(&mut self, items: &[Item], attr: usize, total: f64) -> Option<Candidate> {
        let c = self.data.n_classes();
        let mut known: Vec<(f64, usize, f64)> = Vec::with_capacity(items.len());
        let mut unknown = 0.0;
        for &(r, w) in items {
            let v = self.data.value(r as usize, attr);
            if v.is_nan() {
                unknown += w;
            } else {
                known.push((v, self.data.y[r as usize], w));
            }
        }
        if known.len() < 2 {
            return None;
        }
        known.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut right = vec![0.0; c];
        for &(_, y, w) in &known {
            right[y] += w;
        }
        let known_w: f64 = right.iter().sum();
        let min_split = if self.params.scaled_min_split {
            let s = 0.1 * known_w / c as f64;
            if s <= self.params.min_leaf {
                self.params.min_leaf
            } else {
                s.min(25.0)
            }
        } else {
            self.params.min_leaf
        };
        let base = entropy(&right);
        let mut left = vec![0.0; c];
        let mut left_w = 0.0;
        let mut best: Option<(f64, usize, f64)> = None;
        for i in 0..known.len() - 1 {
            let (v, y, w) = known[i];
            left[y] += w;
            right[y] -= w;
            left_w += w;
            let next = known[i + 1].0;
            if next <= v {
                continue;
            }
            let right_w = known_w - left_w;
            if left_w < min_split || right_w < min_split {
                continue;
            }
            let g = base - (left_w / known_w) * entropy(&left) - (right_w / known_w) * entropy(&right);
            if best.is_none_or(|(bg, _, _)| g > bg) {
                best = Some((g, i, left_w));
            }
        }
        let (g, i, left_w) = best?;
        let (lo, hi) = (known[i].0, known[i + 1].0);
        let mid = lo + (hi - lo) / 2.0;
        let threshold = if mid < hi { mid } else { lo };
        Some(Candidate {
            attr,
            gain: known_w / total * g,
            split_info: entropy(&[left_w, known_w - left_w, unknown]),
            threshold: Some(threshold),
        })
    }

    fn partition_nominal(&self, items: &[Item], attr: usize) -> (Vec<u32>, Vec<f64>, Vec<Vec<Item>>) {
        let top = self.data.schema.attributes[attr].code_count() - 1;
        let mut by_code: std::collections::BTreeMap<u32, (f64, Vec<Item>)> = std::collections::BTreeMap::new();
        let mut missing = Vec::new();
        for &(r, w) in items {
            let v = self.data.value(r as usize, attr);
            if v.is_nan() {
                missing.push((r, w));
            } else {
                let e = by_code.entry((v as usize).min(top) as u32).or_default();
                e.0 += w;
                e.1.push((r, w));
            }
        }
        let known: f64 = by_code.values().map(|(w, _)| w).sum();
        let mut levels = Vec::with_capacity(by_code.len());
        let mut weights = Vec::with_capacity(by_code.len());
        let mut parts = Vec::with_capacity(by_code.len());
        for (code, (wb, mut part)) in by_code {
            part.extend(missing.iter().map(|&(r, w)| (r, w * wb / known)));
            levels.push(code);
            weights.push(wb);
            parts.push(part);
        }
        (levels, weights, parts)
    }

    fn partition_numeric(&self, items: &[Item], attr: usize, threshold: f64) -> ([f64; 2], [Vec<Item>; 2]) {
        let mut sides: [Vec<Item>; 2] = [Vec::new(), Vec::new()];
        let mut weights = [0.0; 2];
        let mut missing = Vec::new();
        for &(r, w) in items {
            let v = self.data.value(r as usize, attr);
            if v.is_nan() {
                missing.push((r, w));
            } else {
                let s = usize::from(v > threshold);
                weights[s] += w;
                sides[s].push((r, w));
            }
        }
        let known = weights[0] + weights[1];
        for (s, side) in sides.iter_mut().enumerate() {
            side.extend(missing.iter().map(|&(r, w)| (r, w * weights[s] / known)));
        }
        (weights, sides)
    }
}
