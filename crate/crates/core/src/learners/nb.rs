//! Naive Bayes over nominal codes with add-one smoothing. Numeric attributes
//! are binned with the equal-frequency cuts used for feature ranking, fitted
//! on the training rows.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::select::{bin_index, equal_frequency_cuts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    pub class_counts: Vec<f64>,
    pub attributes: Vec<NbAttribute>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbAttribute {
    /// Interior bin edges for numeric attributes; `None` for nominal ones.
    pub cuts: Option<Vec<f64>>,
    /// Number of value slots, the unseen slot included for nominals.
    pub slots: usize,
    /// `counts[slot * n_classes + class]`.
    pub counts: Vec<f64>,
    /// Non-missing rows per class.
    pub totals: Vec<f64>,
}

impl NaiveBayes {
    pub fn fit(data: &Dataset, bins: usize) -> NaiveBayes {
        let c = data.n_classes();
        let n = data.n_rows();
        let attributes = data
            .schema
            .attributes
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let cuts = if a.is_nominal() {
                    None
                } else {
                    let values: Vec<Option<f64>> = (0..n).map(|i| Some(data.value(i, j))).collect();
                    // An attribute with no observed values gets a single bin.
                    Some(equal_frequency_cuts(&values, bins).unwrap_or_default())
                };
                let slots = match &cuts {
                    Some(cuts) => cuts.len() + 1,
                    None => a.code_count(),
                };
                let mut counts = vec![0.0; slots * c];
                let mut totals = vec![0.0; c];
                for i in 0..n {
                    let v = data.value(i, j);
                    if v.is_nan() {
                        continue;
                    }
                    let slot = slot_of(&cuts, slots, v);
                    counts[slot * c + data.y[i]] += 1.0;
                    totals[data.y[i]] += 1.0;
                }
                NbAttribute {
                    cuts,
                    slots,
                    counts,
                    totals,
                }
            })
            .collect();
        NaiveBayes {
            class_counts: data.class_counts(),
            attributes,
        }
    }

    pub fn distribution(&self, row: &[f64]) -> Vec<f64> {
        let c = self.class_counts.len();
        let n: f64 = self.class_counts.iter().sum();
        let mut log_p: Vec<f64> = self
            .class_counts
            .iter()
            .map(|&k| ((k + 1.0) / (n + c as f64)).ln())
            .collect();
        for (a, &v) in self.attributes.iter().zip(row) {
            if v.is_nan() {
                continue;
            }
            let slot = slot_of(&a.cuts, a.slots, v);
            for (k, lp) in log_p.iter_mut().enumerate() {
                *lp += ((a.counts[slot * c + k] + 1.0) / (a.totals[k] + a.slots as f64)).ln();
            }
        }
        let max = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = log_p.iter().map(|lp| (lp - max).exp()).collect();
        crate::util::normalize(&mut p);
        p
    }
}

fn slot_of(cuts: &Option<Vec<f64>>, slots: usize, v: f64) -> usize {
    match cuts {
        Some(cuts) => bin_index(cuts, v),
        // Codes past the table (levels unseen by the schema) share the last slot.
        None => (v as usize).min(slots - 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ClassColumn, Column, FeatureTable};

    fn data(features: Vec<Column>, class: &[&str]) -> Dataset {
        Dataset::from_table(&FeatureTable::new(features, Some(ClassColumn::new("y", class))).unwrap()).unwrap()
    }

    #[test]
    fn perfectly_identifying_value_wins() {
        let d = data(vec![Column::nominal("f", [Some("a"), Some("b")])], &["x", "y"]);
        let nb = NaiveBayes::fit(&d, 10);
        assert!(nb.distribution(d.row(0))[0] > 0.5);
        assert!(nb.distribution(d.row(1))[1] > 0.5);
    }

    #[test]
    fn uninformative_feature_keeps_smoothed_priors() {
        let class = ["x", "x", "x", "x", "x", "x", "y", "y", "y", "y"];
        let d = data(vec![Column::nominal("f", [Some("a"); 10])], &class);
        let nb = NaiveBayes::fit(&d, 10);
        let p = nb.distribution(d.row(0));
        // Priors 7/12 and 5/12; P(a|x) = 7/8, P(a|y) = 5/6 with two slots.
        let (px, py) = (7.0 / 12.0 * 7.0 / 8.0, 5.0 / 12.0 * 5.0 / 6.0);
        assert!((p[0] - px / (px + py)).abs() < 1e-12);
        assert!((p[0] - 0.6).abs() < 0.01);
        let missing = nb.distribution(&[f64::NAN]);
        assert!((missing[0] - 7.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn unseen_category_gets_the_floor() {
        let d = data(vec![Column::nominal("f", [Some("a"), Some("b"), Some("a")])], &["x", "y", "y"]);
        let nb = NaiveBayes::fit(&d, 10);
        let p = nb.distribution(&[2.0]);
        assert!(p.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let far = nb.distribution(&[99.0]);
        assert_eq!(p, far);
    }

    #[test]
    fn numeric_values_are_binned() {
        let d = data(
            vec![Column::numeric("n", (0..20).map(|i| Some(i as f64)))],
            &(0..20).map(|i| if i < 10 { "lo" } else { "hi" }).collect::<Vec<_>>(),
        );
        let nb = NaiveBayes::fit(&d, 2);
        assert_eq!(nb.attributes[0].cuts, Some(vec![10.0]));
        let lo = d.schema.classes.iter().position(|c| c == "lo").unwrap();
        assert!(nb.distribution(&[3.0])[lo] > 0.9);
        assert!(nb.distribution(&[15.0])[lo] < 0.1);
    }
}
