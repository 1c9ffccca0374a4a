//! RIPPER rule induction: per-class rule sets grown with FOIL gain, pruned
//! on a held-out third, stopped by description length, then re-optimized.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::util::stream;

/// Bits a rule set may exceed the best description length seen so far.
const MAX_DL_SURPLUS: f64 = 64.0;
const THEORY_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Test {
    Eq { attr: usize, code: u32 },
    Le { attr: usize, threshold: f64 },
    Gt { attr: usize, threshold: f64 },
}

impl Test {
    /// Missing values never satisfy a test.
    pub fn covers(&self, row: &[f64]) -> bool {
        match *self {
            Test::Eq { attr, code } => !row[attr].is_nan() && row[attr] as u32 == code,
            Test::Le { attr, threshold } => row[attr] <= threshold,
            Test::Gt { attr, threshold } => row[attr] > threshold,
        }
    }

    fn attr(&self) -> usize {
        match *self {
            Test::Eq { attr, .. } | Test::Le { attr, .. } | Test::Gt { attr, .. } => attr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub class: usize,
    pub tests: Vec<Test>,
    /// Training class counts of the rows this rule fires on first.
    pub dist: Vec<f64>,
}

impl Rule {
    pub fn covers(&self, row: &[f64]) -> bool {
        self.tests.iter().all(|t| t.covers(row))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ripper {
    pub rules: Vec<Rule>,
    pub default_class: usize,
    pub default_dist: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipperParams {
    pub optimization_runs: usize,
    /// Minimum positive weight a test must keep covered while growing.
    pub min_coverage: f64,
}

impl Default for RipperParams {
    fn default() -> Self {
        RipperParams {
            optimization_runs: 2,
            min_coverage: 2.0,
        }
    }
}

impl Ripper {
    pub fn fit(data: &Dataset, params: &RipperParams, seed: u64) -> Ripper {
        let mut rng = stream(seed, "ripper", 0);
        let counts = data.class_counts();
        let mut order: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0.0).collect();
        order.sort_by(|&a, &b| counts[a].total_cmp(&counts[b]).then(a.cmp(&b)));
        let default_class = order.last().copied().unwrap_or(0);
        let all = data.n_rows() as f64;

        let mut remaining: Vec<usize> = (0..data.n_rows()).collect();
        let mut rules: Vec<Vec<Test>> = Vec::new();
        let mut rule_class = Vec::new();
        for &c in order.iter().take(order.len().saturating_sub(1)) {
            let learner = ClassLearner {
                data,
                class: c,
                params,
                exp_fp_over_err: counts[c] / all,
                possible_tests: possible_tests(data, &remaining),
            };
            let set = learner.ruleset(&remaining, &mut rng);
            remaining.retain(|&r| !set.iter().any(|t| covers(t, data.row(r))));
            rule_class.extend(std::iter::repeat_n(c, set.len()));
            rules.extend(set);
        }

        let n_classes = data.n_classes();
        let mut dists = vec![vec![0.0; n_classes]; rules.len()];
        let mut default_dist = vec![0.0; n_classes];
        for i in 0..data.n_rows() {
            let row = data.row(i);
            match rules.iter().position(|t| covers(t, row)) {
                Some(k) => dists[k][data.y[i]] += 1.0,
                None => default_dist[data.y[i]] += 1.0,
            }
        }
        Ripper {
            rules: rules
                .into_iter()
                .zip(rule_class)
                .zip(dists)
                .map(|((tests, class), dist)| Rule { class, tests, dist })
                .collect(),
            default_class,
            default_dist,
        }
    }

    /// Laplace-smoothed counts of the first matching rule.
    pub fn distribution(&self, row: &[f64]) -> Vec<f64> {
        let counts = self
            .rules
            .iter()
            .find(|r| r.covers(row))
            .map_or(&self.default_dist, |r| &r.dist);
        let total: f64 = counts.iter().sum::<f64>() + counts.len() as f64;
        counts.iter().map(|c| (c + 1.0) / total).collect()
    }

    pub fn predict_class(&self, row: &[f64]) -> usize {
        self.rules
            .iter()
            .find(|r| r.covers(row))
            .map_or(self.default_class, |r| r.class)
    }
}

fn covers(tests: &[Test], row: &[f64]) -> bool {
    tests.iter().all(|t| t.covers(row))
}

/// Count of candidate conditions, as used in the theory cost of a rule.
fn possible_tests(data: &Dataset, rows: &[usize]) -> f64 {
    let mut total = 0.0;
    for (j, a) in data.schema.attributes.iter().enumerate() {
        let mut values: Vec<f64> = rows.iter().map(|&r| data.value(r, j)).filter(|v| !v.is_nan()).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        total += if a.is_nominal() {
            values.len() as f64
        } else {
            2.0 * values.len() as f64
        };
    }
    total.max(1.0)
}

/// Bits to identify `k` of `t` elements when each is chosen with probability `p`.
fn subset_dl(t: f64, k: f64, p: f64) -> f64 {
    let mut bits = 0.0;
    if k > 0.0 && p > 0.0 {
        bits -= k * p.log2();
    }
    if t - k > 0.0 && p < 1.0 {
        bits -= (t - k) * (1.0 - p).log2();
    }
    bits
}

fn theory_dl(k: usize, possible: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let k = k as f64;
    let mut bits = k.log2();
    if k > 1.0 {
        bits += 2.0 * bits.log2();
    }
    bits += subset_dl(possible, k, (k / possible).min(1.0));
    THEORY_WEIGHT * bits
}

fn data_dl(exp_fp_over_err: f64, cover: f64, uncover: f64, fp: f64, fn_: f64) -> f64 {
    let total_bits = (cover + uncover + 1.0).log2();
    let (cover_bits, uncover_bits);
    if cover > uncover {
        let exp_err = exp_fp_over_err * (fp + fn_);
        cover_bits = subset_dl(cover, fp, exp_err / cover);
        uncover_bits = if uncover > 0.0 {
            subset_dl(uncover, fn_, fn_ / uncover)
        } else {
            0.0
        };
    } else {
        let exp_err = (1.0 - exp_fp_over_err) * (fp + fn_);
        cover_bits = if cover > 0.0 { subset_dl(cover, fp, fp / cover) } else { 0.0 };
        uncover_bits = subset_dl(uncover, fn_, exp_err / uncover);
    }
    total_bits + cover_bits + uncover_bits
}

struct ClassLearner<'a> {
    data: &'a Dataset,
    class: usize,
    params: &'a RipperParams,
    exp_fp_over_err: f64,
    possible_tests: f64,
}

impl ClassLearner<'_> {
    fn positive(&self, r: usize) -> bool {
        self.data.y[r] == self.class
    }

    fn ruleset(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<Test>> {
        let mut rules = Vec::new();
        self.cover_positives(rows, &mut rules, rng);
        self.reduce(rows, &mut rules);
        for _ in 0..self.params.optimization_runs {
            self.optimize(rows, &mut rules, rng);
            self.cover_positives(rows, &mut rules, rng);
            self.reduce(rows, &mut rules);
        }
        rules
    }

    /// Total description length of `rules` over `rows`.
    fn dl(&self, rows: &[usize], rules: &[Vec<Test>]) -> f64 {
        let (mut cover, mut uncover, mut fp, mut fn_) = (0.0, 0.0, 0.0, 0.0);
        for &r in rows {
            let hit = rules.iter().any(|t| covers(t, self.data.row(r)));
            let pos = self.positive(r);
            if hit {
                cover += 1.0;
                if !pos {
                    fp += 1.0;
                }
            } else {
                uncover += 1.0;
                if pos {
                    fn_ += 1.0;
                }
            }
        }
        let theory: f64 = rules.iter().map(|t| theory_dl(t.len(), self.possible_tests)).sum();
        theory + data_dl(self.exp_fp_over_err, cover, uncover, fp, fn_)
    }

    /// Adds rules until positives run out, the description length blows
    /// up, or a new rule is wrong at least half the time.
    fn cover_positives(&self, rows: &[usize], rules: &mut Vec<Vec<Test>>, rng: &mut ChaCha8Rng) {
        let mut uncovered: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&r| !rules.iter().any(|t| covers(t, self.data.row(r))))
            .collect();
        let mut min_dl = self.dl(rows, rules);
        while uncovered.iter().any(|&r| self.positive(r)) {
            let (grow, prune) = self.split(&uncovered, rng);
            let grown = self.grow(&grow, Vec::new());
            let rule = self.prune(grown, &prune, 0);
            if rule.is_empty() {
                break;
            }
            let (mut p, mut n) = (0.0, 0.0);
            for &r in &uncovered {
                if covers(&rule, self.data.row(r)) {
                    if self.positive(r) {
                        p += 1.0;
                    } else {
                        n += 1.0;
                    }
                }
            }
            if p == 0.0 || n / (p + n) >= 0.5 {
                break;
            }
            rules.push(rule);
            let dl = self.dl(rows, rules);
            if dl > min_dl + MAX_DL_SURPLUS {
                rules.pop();
                break;
            }
            min_dl = min_dl.min(dl);
            let last = rules.last().expect("just pushed");
            uncovered.retain(|&r| !covers(last, self.data.row(r)));
        }
    }

    /// Deletes rules, last first, whenever that shortens the description.
    fn reduce(&self, rows: &[usize], rules: &mut Vec<Vec<Test>>) {
        let mut i = rules.len();
        while i > 0 {
            i -= 1;
            let with = self.dl(rows, rules);
            let removed = rules.remove(i);
            if self.dl(rows, rules) < with {
                continue;
            }
            rules.insert(i, removed);
        }
    }

    /// Considers a fresh replacement and a revision of each rule, keeping
    /// whichever variant gives the shortest description.
    fn optimize(&self, rows: &[usize], rules: &mut [Vec<Test>], rng: &mut ChaCha8Rng) {
        for i in 0..rules.len() {
            let reach: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&r| !rules[..i].iter().any(|t| covers(t, self.data.row(r))))
                .collect();
            if !reach.iter().any(|&r| self.positive(r)) {
                continue;
            }
            let (grow, prune) = self.split(&reach, rng);
            let replacement = self.prune(self.grow(&grow, Vec::new()), &prune, 0);
            let keep = rules[i].len();
            let revision = self.prune(self.grow(&grow, rules[i].clone()), &prune, keep);
            let original = rules[i].clone();
            let mut best = (self.dl(rows, rules), original.clone());
            for variant in [replacement, revision] {
                if variant.is_empty() || variant == original {
                    continue;
                }
                rules[i] = variant.clone();
                let dl = self.dl(rows, rules);
                if dl < best.0 {
                    best = (dl, variant);
                }
            }
            rules[i] = best.1;
        }
    }

    /// Stratified two-to-one grow/prune split.
    fn split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
        let mut pos: Vec<usize> = rows.iter().copied().filter(|&r| self.positive(r)).collect();
        let mut neg: Vec<usize> = rows.iter().copied().filter(|&r| !self.positive(r)).collect();
        pos.shuffle(rng);
        neg.shuffle(rng);
        let (mut grow, mut prune) = (Vec::new(), Vec::new());
        for part in [pos, neg] {
            for (i, r) in part.into_iter().enumerate() {
                if i % 3 == 2 {
                    prune.push(r);
                } else {
                    grow.push(r);
                }
            }
        }
        (grow, prune)
    }

    /// Adds the test with the best FOIL gain until no negatives are covered.
    fn grow(&self, rows: &[usize], mut tests: Vec<Test>) -> Vec<Test> {
        let mut covered: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&r| covers(&tests, self.data.row(r)))
            .collect();
        loop {
            let p0 = covered.iter().filter(|&&r| self.positive(r)).count() as f64;
            let t0 = covered.len() as f64;
            if p0 == t0 || p0 == 0.0 {
                break;
            }
            let base = ((p0 + 1.0) / (t0 + 1.0)).log2();
            let mut best: Option<(f64, Test)> = None;
            for (j, a) in self.data.schema.attributes.iter().enumerate() {
                let candidate = if a.is_nominal() {
                    if tests.iter().any(|t| t.attr() == j && matches!(t, Test::Eq { .. })) {
                        continue;
                    }
                    self.best_nominal(&covered, j, base)
                } else {
                    self.best_numeric(&covered, j, base)
                };
                if let Some((g, t)) = candidate {
                    if best.as_ref().is_none_or(|(bg, _)| g > *bg) {
                        best = Some((g, t));
                    }
                }
            }
            let Some((gain, test)) = best else { break };
            if gain <= 0.0 {
                break;
            }
            covered.retain(|&r| test.covers(self.data.row(r)));
            tests.push(test);
        }
        tests
    }

    fn gain(&self, p: f64, t: f64, base: f64) -> f64 {
        if p < self.params.min_coverage {
            return f64::NEG_INFINITY;
        }
        p * (((p + 1.0) / (t + 1.0)).log2() - base)
    }

    fn best_nominal(&self, covered: &[usize], attr: usize, base: f64) -> Option<(f64, Test)> {
        let mut counts: std::collections::BTreeMap<u32, (f64, f64)> = std::collections::BTreeMap::new();
        for &r in covered {
            let v = self.data.value(r, attr);
            if v.is_nan() {
                continue;
            }
            let e = counts.entry(v as u32).or_default();
            e.1 += 1.0;
            if self.positive(r) {
                e.0 += 1.0;
            }
        }
        let mut best: Option<(f64, Test)> = None;
        for (code, (p, t)) in counts {
            let g = self.gain(p, t, base);
            if g.is_finite() && best.as_ref().is_none_or(|(bg, _)| g > *bg) {
                best = Some((g, Test::Eq { attr, code }));
            }
        }
        best
    }

    fn best_numeric(&self, covered: &[usize], attr: usize, base: f64) -> Option<(f64, Test)> {
        let mut known: Vec<(f64, bool)> = covered
            .iter()
            .map(|&r| (self.data.value(r, attr), self.positive(r)))
            .filter(|(v, _)| !v.is_nan())
            .collect();
        if known.len() < 2 {
            return None;
        }
        known.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total_p = known.iter().filter(|k| k.1).count() as f64;
        let total = known.len() as f64;
        let (mut lp, mut lt) = (0.0, 0.0);
        let mut best: Option<(f64, Test)> = None;
        for i in 0..known.len() - 1 {
            lt += 1.0;
            if known[i].1 {
                lp += 1.0;
            }
            let (lo, hi) = (known[i].0, known[i + 1].0);
            if hi <= lo {
                continue;
            }
            let mid = lo + (hi - lo) / 2.0;
            let threshold = if mid < hi { mid } else { lo };
            let le = self.gain(lp, lt, base);
            let gt = self.gain(total_p - lp, total - lt, base);
            if le.is_finite() && best.as_ref().is_none_or(|(bg, _)| le > *bg) {
                best = Some((le, Test::Le { attr, threshold }));
            }
            if gt.is_finite() && best.as_ref().is_none_or(|(bg, _)| gt > *bg) {
                best = Some((gt, Test::Gt { attr, threshold }));
            }
        }
        best
    }

    /// Keeps the prefix (at least `keep` long and non-empty) with the best
    /// `(p + 1) / (p + n + 2)` on the prune rows; ties favour shorter rules.
    fn prune(&self, tests: Vec<Test>, rows: &[usize], keep: usize) -> Vec<Test> {
        if tests.is_empty() {
            return tests;
        }
        let mut best_len = tests.len();
        let mut best_worth = f64::NEG_INFINITY;
        for len in keep.max(1)..=tests.len() {
            let (mut p, mut n) = (0.0, 0.0);
            for &r in rows {
                if covers(&tests[..len], self.data.row(r)) {
                    if self.positive(r) {
                        p += 1.0;
                    } else {
                        n += 1.0;
                    }
                }
            }
            let worth = (p + 1.0) / (p + n + 2.0);
            if worth > best_worth {
                best_worth = worth;
                best_len = len;
            }
        }
        let mut tests = tests;
        tests.truncate(best_len);
        tests
    }
}
