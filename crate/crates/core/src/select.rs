//! Filter-style feature ranking: chi-squared, information gain, gain ratio,
//! OneR and symmetric uncertainty over feature x class contingency tables.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sessionizer::csv_field;
use crate::table::{ColumnValues, FeatureTable, TableError};
use crate::util::{ceil_share, entropy, Sym};

/// Label given to missing cells after discretization.
pub const MISSING_LABEL: &str = "?";
pub const DEFAULT_BINS: usize = 10;
/// Rankings a feature must be top-listed in to enter the consensus set.
pub const CONSENSUS_VOTES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("column has no non-missing values")]
    AllMissing,
    #[error("at least 2 bins are required, got {0}")]
    TooFewBins(usize),
    #[error("feature has {feature} values but class has {class}")]
    LengthMismatch { feature: usize, class: usize },
    #[error("ranking needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Chi2,
    InfoGain,
    GainRatio,
    OneR,
    SymmetricUncertainty,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Chi2,
        Method::InfoGain,
        Method::GainRatio,
        Method::OneR,
        Method::SymmetricUncertainty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Chi2 => "chi2",
            Method::InfoGain => "info_gain",
            Method::GainRatio => "gain_ratio",
            Method::OneR => "one_r",
            Method::SymmetricUncertainty => "symmetric_uncertainty",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Equal-frequency binning. Cut points are taken at the `i*n/bins` order
/// statistics of the sorted non-missing values; duplicate cuts collapse, so
/// heavily tied data yields fewer bins. Missing cells become `?`.
pub fn discretize(values: &[Option<f64>], bins: usize) -> Result<Vec<Sym>, SelectError> {
    let cuts = equal_frequency_cuts(values, bins)?;
    Ok(apply_cuts(values, &cuts))
}

/// The interior cut points used by [`discretize`]. A value `v` falls in bin
/// `#{c in cuts : c <= v}`.
pub fn equal_frequency_cuts(values: &[Option<f64>], bins: usize) -> Result<Vec<f64>, SelectError> {
    if bins < 2 {
        return Err(SelectError::TooFewBins(bins));
    }
    let mut sorted: Vec<f64> = values.iter().flatten().copied().filter(|v| !v.is_nan()).collect();
    if sorted.is_empty() {
        return Err(SelectError::AllMissing);
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(bins - 1);
    for i in 1..bins {
        let pos = (i * n).div_ceil(bins);
        if pos >= n {
            break;
        }
        let c = sorted[pos];
        if c > sorted[0] && cuts.last().is_none_or(|&last| c > last) {
            cuts.push(c);
        }
    }
    Ok(cuts)
}

pub fn bin_index(cuts: &[f64], v: f64) -> usize {
    cuts.partition_point(|&c| c <= v)
}

pub fn bin_label(i: usize) -> String {
    format!("b{i}")
}

pub fn apply_cuts(values: &[Option<f64>], cuts: &[f64]) -> Vec<Sym> {
    let labels: Vec<Sym> = (0..=cuts.len()).map(|i| Arc::from(bin_label(i))).collect();
    let missing: Sym = Arc::from(MISSING_LABEL);
    values
        .iter()
        .map(|v| match v {
            Some(x) if !x.is_nan() => labels[bin_index(cuts, *x)].clone(),
            _ => missing.clone(),
        })
        .collect()
}

/// Joint counts of a feature against the class. Rows and columns are in
/// first-seen order; scores do not depend on that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Contingency {
    pub counts: Vec<Vec<f64>>,
    pub n_classes: usize,
}

impl Contingency {
    pub fn build<F, C>(feature: &[F], class: &[C]) -> Result<Contingency, SelectError>
    where
        F: std::hash::Hash + Eq,
        C: std::hash::Hash + Eq + Ord,
    {
        if feature.len() != class.len() {
            return Err(SelectError::LengthMismatch {
                feature: feature.len(),
                class: class.len(),
            });
        }
        // Classes are indexed in sorted order so OneR ties resolve to the
        // lexicographically first class.
        let class_set: BTreeSet<&C> = class.iter().collect();
        let class_idx: HashMap<&C, usize> = class_set.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut row_idx: HashMap<&F, usize> = HashMap::new();
        let mut counts: Vec<Vec<f64>> = Vec::new();
        for (f, c) in feature.iter().zip(class) {
            let r = *row_idx.entry(f).or_insert_with(|| {
                counts.push(vec![0.0; class_set.len()]);
                counts.len() - 1
            });
            counts[r][class_idx[c]] += 1.0;
        }
        Ok(Contingency {
            counts,
            n_classes: class_set.len(),
        })
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_totals(&self) -> Vec<f64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn class_totals(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.n_classes];
        for row in &self.counts {
            for (j, v) in row.iter().enumerate() {
                t[j] += v;
            }
        }
        t
    }

    fn degenerate(&self) -> bool {
        if self.n_classes < 2 {
            log::warn!("class has a single observed value; score is 0");
            true
        } else {
            false
        }
    }

    pub fn chi_squared(&self) -> f64 {
        if self.degenerate() {
            return 0.0;
        }
        let n = self.total();
        let rows = self.row_totals();
        let cols = self.class_totals();
        let mut chi = 0.0;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &o) in row.iter().enumerate() {
                let e = rows[i] * cols[j] / n;
                if e > 0.0 {
                    chi += (o - e) * (o - e) / e;
                }
            }
        }
        chi.max(0.0)
    }

    fn class_entropy(&self) -> f64 {
        entropy(&self.class_totals())
    }

    fn feature_entropy(&self) -> f64 {
        entropy(&self.row_totals())
    }

    fn conditional_entropy(&self) -> f64 {
        let n = self.total();
        self.counts.iter().map(|row| row.iter().sum::<f64>() / n * entropy(row)).sum()
    }

    pub fn info_gain(&self) -> f64 {
        if self.degenerate() {
            return 0.0;
        }
        (self.class_entropy() - self.conditional_entropy()).max(0.0)
    }

    pub fn gain_ratio(&self) -> f64 {
        if self.degenerate() {
            return 0.0;
        }
        let split = self.feature_entropy();
        if split <= 0.0 {
            return 0.0;
        }
        (self.info_gain() / split).clamp(0.0, 1.0)
    }

    pub fn one_r(&self) -> f64 {
        if self.degenerate() {
            return 0.0;
        }
        let correct: f64 = self
            .counts
            .iter()
            .map(|row| row.iter().copied().fold(0.0, f64::max))
            .sum();
        correct / self.total()
    }

    pub fn symmetric_uncertainty(&self) -> f64 {
        if self.degenerate() {
            return 0.0;
        }
        let denom = self.feature_entropy() + self.class_entropy();
        if denom <= 0.0 {
            return 0.0;
        }
        (2.0 * self.info_gain() / denom).clamp(0.0, 1.0)
    }

    pub fn score(&self, method: Method) -> f64 {
        match method {
            Method::Chi2 => self.chi_squared(),
            Method::InfoGain => self.info_gain(),
            Method::GainRatio => self.gain_ratio(),
            Method::OneR => self.one_r(),
            Method::SymmetricUncertainty => self.symmetric_uncertainty(),
        }
    }
}

pub fn chi_squared<F: AsRef<str>, C: AsRef<str>>(feature: &[F], class: &[C]) -> Result<f64, SelectError> {
    score(Method::Chi2, feature, class)
}

pub fn info_gain<F: AsRef<str>, C: AsRef<str>>(feature: &[F], class: &[C]) -> Result<f64, SelectError> {
    score(Method::InfoGain, feature, class)
}

pub fn gain_ratio<F: AsRef<str>, C: AsRef<str>>(feature: &[F], class: &[C]) -> Result<f64, SelectError> {
    score(Method::GainRatio, feature, class)
}

pub fn one_r<F: AsRef<str>, C: AsRef<str>>(feature: &[F], class: &[C]) -> Result<f64, SelectError> {
    score(Method::OneR, feature, class)
}

pub fn symmetric_uncertainty<F: AsRef<str>, C: AsRef<str>>(feature: &[F], class: &[C]) -> Result<f64, SelectError> {
    score(Method::SymmetricUncertainty, feature, class)
}

/// Scores one nominal feature against the class.
pub fn score<F: AsRef<str>, C: AsRef<str>>(method: Method, feature: &[F], class: &[C]) -> Result<f64, SelectError> {
    let f: Vec<&str> = feature.iter().map(AsRef::as_ref).collect();
    let c: Vec<&str> = class.iter().map(AsRef::as_ref).collect();
    Ok(Contingency::build(&f, &c)?.score(method))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedFeatures {
    pub method: Method,
    /// `(feature, score)`, best first.
    pub entries: Vec<(String, f64)>,
}

impl RankedFeatures {
    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }
}

/// Nominal view of a column for contingency counting. Numeric columns are
/// discretized; a column with no numeric values becomes a single `?` level.
pub fn nominal_view(values: &ColumnValues) -> Vec<Sym> {
    let missing: Sym = Arc::from(MISSING_LABEL);
    match values {
        ColumnValues::Nominal(v) => v.iter().map(|x| x.clone().unwrap_or_else(|| missing.clone())).collect(),
        ColumnValues::Numeric(v) => match discretize(v, DEFAULT_BINS) {
            Ok(bins) => bins,
            Err(_) => vec![missing; v.len()],
        },
    }
}

/// Scores every predictor column and sorts best first, ties by name.
pub fn rank(table: &FeatureTable, method: Method) -> Result<RankedFeatures, SelectError> {
    let contingencies = contingencies(table)?;
    Ok(rank_contingencies(&contingencies, method))
}

/// Ranks under all five methods, sharing the contingency tables.
pub fn rank_all(table: &FeatureTable) -> Result<Vec<RankedFeatures>, SelectError> {
    let contingencies = contingencies(table)?;
    Ok(Method::ALL
        .iter()
        .map(|&m| rank_contingencies(&contingencies, m))
        .collect())
}

fn contingencies(table: &FeatureTable) -> Result<Vec<(String, Contingency)>, SelectError> {
    if table.row_count() < 2 {
        return Err(SelectError::TooFewRows(table.row_count()));
    }
    let class = table.require_class()?;
    table
        .columns()
        .par_iter()
        .map(|c| {
            let view = nominal_view(&c.values);
            Ok((c.name.clone(), Contingency::build(&view, &class.labels)?))
        })
        .collect()
}

fn rank_contingencies(contingencies: &[(String, Contingency)], method: Method) -> RankedFeatures {
    let mut entries: Vec<(String, f64)> = contingencies
        .iter()
        .map(|(name, ct)| (name.clone(), ct.score(method)))
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    RankedFeatures { method, entries }
}

/// Features in the top `ceil(top_fraction * M)` of at least three rankings.
/// Returned sorted by name.
pub fn consensus(rankings: &[RankedFeatures], top_fraction: f64) -> Vec<String> {
    assert!(top_fraction > 0.0 && top_fraction <= 1.0, "top_fraction must be in (0, 1]");
    let Some(first) = rankings.first() else {
        return Vec::new();
    };
    let cutoff = ceil_share(top_fraction, first.entries.len());
    let mut votes: HashMap<&str, usize> = HashMap::new();
    for r in rankings {
        for (name, _) in r.entries.iter().take(cutoff) {
            *votes.entry(name.as_str()).or_default() += 1;
        }
    }
    let mut picked: Vec<String> = votes
        .into_iter()
        .filter(|&(_, v)| v >= CONSENSUS_VOTES)
        .map(|(n, _)| n.to_string())
        .collect();
    picked.sort();
    picked
}

/// `method,rank,feature,score` with 1-based ranks.
pub fn write_rankings_csv<W: Write>(rankings: &[RankedFeatures], mut w: W) -> io::Result<()> {
    writeln!(w, "method,rank,feature,score")?;
    for r in rankings {
        for (i, (name, s)) in r.entries.iter().enumerate() {
            writeln!(w, "{},{},{},{}", r.method, i + 1, csv_field(name), s)?;
        }
    }
    Ok(())
}

pub fn consensus_json(names: &[String]) -> String {
    serde_json::to_string_pretty(names).expect("string list serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ClassColumn, Column};
    use proptest::prelude::*;

    // Reference scorers computed straight from joint counts, kept apart from
    // the contingency code above.
    fn brute(feature: &[u8], class: &[u8]) -> [f64; 5] {
        let n = feature.len() as f64;
        let fv: Vec<u8> = feature.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let cv: Vec<u8> = class.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let joint = |a: u8, b: u8| feature.iter().zip(class).filter(|(x, y)| **x == a && **y == b).count() as f64;
        let nf = |a: u8| feature.iter().filter(|x| **x == a).count() as f64;
        let nc = |b: u8| class.iter().filter(|y| **y == b).count() as f64;
        if cv.len() < 2 {
            return [0.0; 5];
        }
        let mut chi = 0.0;
        let mut mi = 0.0;
        for &a in &fv {
            for &b in &cv {
                let e = nf(a) * nc(b) / n;
                chi += (joint(a, b) - e).powi(2) / e;
                let p = joint(a, b) / n;
                if p > 0.0 {
                    mi += p * (p / (nf(a) / n * nc(b) / n)).log2();
                }
            }
        }
        let h = |counts: Vec<f64>| -> f64 {
            counts
                .iter()
                .filter(|c| **c > 0.0)
                .map(|c| -(c / n) * (c / n).log2())
                .sum()
        };
        let hf = h(fv.iter().map(|&a| nf(a)).collect());
        let hc = h(cv.iter().map(|&b| nc(b)).collect());
        let mi = mi.max(0.0);
        let gr = if hf > 0.0 { mi / hf } else { 0.0 };
        let su = if hf + hc > 0.0 { 2.0 * mi / (hf + hc) } else { 0.0 };
        let oner = fv
            .iter()
            .map(|&a| cv.iter().map(|&b| joint(a, b)).fold(0.0, f64::max))
            .sum::<f64>()
            / n;
        [chi, mi, gr.min(1.0), oner, su.min(1.0)]
    }

    fn scores(feature: &[u8], class: &[u8]) -> [f64; 5] {
        let ct = Contingency::build(feature, class).unwrap();
        Method::ALL.map(|m| ct.score(m))
    }

    fn labels(s: &str) -> Vec<String> {
        s.chars().map(|c| c.to_string()).collect()
    }

    #[test]
    fn chi_squared_hand_cases() {
        let f = labels("aaaaaaaaaabbbbbbbbbb");
        let independent = labels("xxxxxyyyyyxxxxxyyyyy");
        assert_eq!(chi_squared(&f, &independent).unwrap(), 0.0);
        let perfect = labels("xxxxxxxxxxyyyyyyyyyy");
        assert!((chi_squared(&f, &perfect).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(chi_squared(&labels("cccc"), &labels("xyxy")).unwrap(), 0.0);
    }

    #[test]
    fn entropy_family_hand_cases() {
        // (6+,2-) and (2+,6-) on a balanced 8/8 class.
        let f = labels("aaaaaaaabbbbbbbb");
        let c = labels("ppppppnnppnnnnnn");
        let ig = info_gain(&f, &c).unwrap();
        let h075 = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert!((ig - (1.0 - h075)).abs() < 1e-12);
        assert!((ig - 0.18872).abs() < 1e-5);
        assert!((one_r(&f, &c).unwrap() - 0.75).abs() < 1e-12);
        assert!((symmetric_uncertainty(&f, &c).unwrap() - ig).abs() < 1e-12);

        let key = labels("abcd");
        let cls = labels("xxyy");
        assert!((info_gain(&key, &cls).unwrap() - 1.0).abs() < 1e-12);
        assert!((gain_ratio(&key, &cls).unwrap() - 0.5).abs() < 1e-12);

        let same = labels("xxxxxxxxxxyyyyyyyyyy");
        assert!((info_gain(&same, &same).unwrap() - 1.0).abs() < 1e-12);
        assert!((gain_ratio(&same, &same).unwrap() - 1.0).abs() < 1e-12);
        assert!((symmetric_uncertainty(&same, &same).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(one_r(&same, &same).unwrap(), 1.0);
    }

    #[test]
    fn constant_feature_scores() {
        let f = labels("cccccccccc");
        let c = labels("xxxxxxyyyy");
        assert_eq!(info_gain(&f, &c).unwrap(), 0.0);
        assert_eq!(gain_ratio(&f, &c).unwrap(), 0.0);
        assert!((one_r(&f, &c).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn degenerate_class_scores_zero() {
        let f = labels("abab");
        let c = labels("xxxx");
        for m in Method::ALL {
            assert_eq!(score(m, &f, &c).unwrap(), 0.0);
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert_eq!(
            chi_squared(&labels("ab"), &labels("x")),
            Err(SelectError::LengthMismatch { feature: 2, class: 1 })
        );
    }

    #[test]
    fn discretize_uniform_values_into_equal_bins() {
        let v: Vec<Option<f64>> = (1..=100).map(|i| Some(i as f64)).collect();
        let bins = discretize(&v, 10).unwrap();
        let mut counts: HashMap<Sym, usize> = HashMap::new();
        for b in bins {
            *counts.entry(b).or_default() += 1;
        }
        assert_eq!(counts.len(), 10);
        assert!(counts.values().all(|&c| c == 10));
    }

    #[test]
    fn discretize_degenerate_and_tied_values() {
        let same = vec![Some(3.0); 50];
        let b = discretize(&same, 10).unwrap();
        assert!(b.iter().all(|x| x == &b[0]));

        // 90 ones then 2..=11: cut positions 10,20,...,90 of 100 sorted values.
        // Positions 10..80 hold 1.0 (the minimum, dropped); position 90 holds 2.
        let mut v = vec![Some(1.0); 90];
        v.extend((2..=11).map(|i| Some(i as f64)));
        assert_eq!(equal_frequency_cuts(&v, 10).unwrap(), vec![2.0]);
        let distinct: BTreeSet<Sym> = discretize(&v, 10).unwrap().into_iter().collect();
        assert_eq!(distinct.len(), 2);

        let with_missing = discretize(&[Some(1.0), None, Some(2.0)], 2).unwrap();
        assert_eq!(with_missing[1].as_ref(), MISSING_LABEL);
        assert_eq!(discretize(&[None, None], 3), Err(SelectError::AllMissing));
        assert_eq!(discretize(&[Some(1.0)], 1), Err(SelectError::TooFewBins(1)));
    }

    fn planted_table() -> FeatureTable {
        let class: Vec<&str> = (0..40).map(|i| if i % 2 == 0 { "x" } else { "y" }).collect();
        let signal: Vec<Option<&str>> = class.iter().map(|c| Some(if *c == "x" { "s" } else { "t" })).collect();
        let noise: Vec<Option<String>> = (0..40).map(|i| Some(format!("n{}", (i / 2) % 3))).collect();
        FeatureTable::new(
            vec![
                Column::nominal("noise", noise),
                Column::nominal("signal", signal),
                Column::numeric("counter", (0..40).map(|i| Some((i / 2) as f64))),
            ],
            Some(ClassColumn::new("y", class)),
        )
        .unwrap()
    }

    #[test]
    fn planted_column_ranks_first_everywhere() {
        let t = planted_table();
        for r in rank_all(&t).unwrap() {
            assert_eq!(r.entries[0].0, "signal", "{}", r.method);
        }
    }

    #[test]
    fn all_constant_columns_rank_by_name() {
        let t = FeatureTable::new(
            vec![
                Column::nominal("b", [Some("k"); 4]),
                Column::nominal("a", [Some("k"); 4]),
            ],
            Some(ClassColumn::new("y", ["x", "y", "x", "y"])),
        )
        .unwrap();
        let r = rank(&t, Method::InfoGain).unwrap();
        assert_eq!(r.entries, vec![("a".to_string(), 0.0), ("b".to_string(), 0.0)]);
    }

    #[test]
    fn consensus_needs_three_votes() {
        let mk = |order: &[&str]| RankedFeatures {
            method: Method::Chi2,
            entries: order.iter().map(|n| (n.to_string(), 1.0)).collect(),
        };
        let names = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        let mut rankings: Vec<RankedFeatures> = (0..5).map(|_| mk(&names)).collect();
        let mut once = names;
        once.swap(0, 1);
        rankings[0] = mk(&once);
        assert_eq!(consensus(&rankings, 0.1), vec!["a".to_string()]);

        let mut moved = names;
        moved.swap(0, 2);
        rankings[1] = mk(&moved);
        rankings[2] = mk(&moved);
        // "a" now tops only two rankings, "c" two, "b" one.
        assert!(consensus(&rankings, 0.1).is_empty());
    }

    #[test]
    fn rankings_csv_shape() {
        let t = planted_table();
        let mut out = Vec::new();
        write_rankings_csv(&rank_all(&t).unwrap(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 * 3);
        assert!(text.starts_with("method,rank,feature,score\nchi2,1,signal,"));
    }

    fn small_table() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        (1usize..=6).prop_flat_map(|n| (prop::collection::vec(0u8..3, n), prop::collection::vec(0u8..3, n)))
    }

    proptest! {
        #[test]
        fn scorers_match_joint_count_oracle((f, c) in small_table()) {
            let got = scores(&f, &c);
            let want = brute(&f, &c);
            for k in 0..5 {
                prop_assert!((got[k] - want[k]).abs() < 1e-12, "{:?} {} vs {}", Method::ALL[k], got[k], want[k]);
            }
        }

        #[test]
        fn scores_are_bounded((f, c) in small_table()) {
            let s = scores(&f, &c);
            let ct = Contingency::build(&f, &c).unwrap();
            prop_assert!(s.iter().all(|v| v.is_finite() && *v >= 0.0));
            prop_assert!(s[2] <= 1.0 && s[4] <= 1.0 && s[3] <= 1.0);
            let hf = entropy(&ct.row_totals());
            let hc = entropy(&ct.class_totals());
            prop_assert!(s[1] <= hf.min(hc) + 1e-12);
        }

        #[test]
        fn relabeling_categories_changes_nothing((f, c) in small_table(), shift in 1u8..3) {
            let relabeled: Vec<u8> = f.iter().map(|v| (v + shift) % 3 + 10).collect();
            let a = scores(&f, &c);
            let b = scores(&relabeled, &c);
            for k in 0..5 {
                prop_assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn duplicating_rows_doubles_only_chi2((f, c) in small_table()) {
            let f2: Vec<u8> = f.iter().chain(&f).copied().collect();
            let c2: Vec<u8> = c.iter().chain(&c).copied().collect();
            let a = scores(&f, &c);
            let b = scores(&f2, &c2);
            prop_assert!((b[0] - 2.0 * a[0]).abs() < 1e-9);
            for k in 1..5 {
                prop_assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn independence_means_zero(fa in 1usize..4, ca in 2usize..4, rep in 1usize..3) {
            // Full cross product is exactly independent in-sample.
            let mut f = Vec::new();
            let mut c = Vec::new();
            for i in 0..fa {
                for j in 0..ca {
                    for _ in 0..rep {
                        f.push(i as u8);
                        c.push(j as u8);
                    }
                }
            }
            let s = scores(&f, &c);
            prop_assert!(s[0].abs() < 1e-12 && s[1].abs() < 1e-12 && s[4].abs() < 1e-12);
        }

        #[test]
        fn nonzero_when_dependent((f, c) in small_table()) {
            let ct = Contingency::build(&f, &c).unwrap();
            let n = ct.total();
            let rows = ct.row_totals();
            let cols = ct.class_totals();
            let factorizes = ct.counts.iter().enumerate().all(|(i, r)| {
                r.iter().enumerate().all(|(j, &o)| (o - rows[i] * cols[j] / n).abs() < 1e-12)
            });
            let s = scores(&f, &c);
            if !factorizes && ct.n_classes > 1 {
                prop_assert!(s[0] > 0.0 && s[1] > 0.0 && s[4] > 0.0);
            }
        }
    }
}
