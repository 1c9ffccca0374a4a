//! Structural checks for decoded models, so that a corrupt artifact is
//! rejected at load time instead of failing during prediction.

use super::dtable::DecisionTable;
use super::ensemble::{RandomForest, RandomSubspace, Stacking};
use super::nb::NaiveBayes;
use super::ripper::{Ripper, Test};
use super::tree::{Split, Tree};
use super::Model;

type Check = Result<(), String>;

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn dist(d: &[f64], c: usize, at: &str) -> Check {
    ensure(d.len() == c, || format!("{at}: {} class weights, expected {c}", d.len()))?;
    ensure(d.iter().all(|w| w.is_finite() && *w >= 0.0), || format!("{at}: invalid weight"))
}

fn weights(w: &[f64], at: &str) -> Check {
    ensure(w.iter().all(|x| x.is_finite() && *x >= 0.0), || format!("{at}: invalid branch weight"))?;
    ensure(w.iter().sum::<f64>() > 0.0, || format!("{at}: branch weights sum to zero"))
}

/// `m` attributes, `c` classes.
pub fn check_model(model: &Model, m: usize, c: usize) -> Check {
    ensure(c > 0, || "no classes".into())?;
    match model {
        Model::Majority { counts } => dist(counts, c, "majority"),
        Model::NaiveBayes(nb) => check_nb(nb, m, c),
        Model::C45(t) => check_tree(t, m, c),
        Model::Ripper(r) => check_ripper(r, m, c),
        Model::DecisionTable(t) => check_table(t, m, c),
        Model::RandomForest(f) => check_forest(f, m, c),
        Model::RandomSubspace(s) => check_subspace(s, m, c),
        Model::Stacking(s) => check_stacking(s, m, c),
    }
}

pub fn check_tree(t: &Tree, m: usize, c: usize) -> Check {
    ensure(!t.nodes.is_empty(), || "tree without nodes".into())?;
    let n = t.nodes.len();
    // Children always follow their parent, which also rules out cycles.
    let child = |id: usize, ch: u32| ensure((ch as usize) > id && (ch as usize) < n, || format!("node {id}: bad child {ch}"));
    for (id, node) in t.nodes.iter().enumerate() {
        dist(&node.dist, c, &format!("node {id}"))?;
        match &node.split {
            Split::Leaf => {}
            Split::Nominal {
                attr,
                levels,
                weights: w,
                children,
            } => {
                ensure(*attr < m, || format!("node {id}: attribute {attr} out of range"))?;
                ensure(!children.is_empty() && levels.len() == children.len() && w.len() == children.len(), || {
                    format!("node {id}: branch lists disagree")
                })?;
                ensure(levels.windows(2).all(|p| p[0] < p[1]), || format!("node {id}: unsorted levels"))?;
                weights(w, &format!("node {id}"))?;
                for &ch in children {
                    child(id, ch)?;
                }
            }
            Split::Numeric {
                attr,
                threshold,
                weights: w,
                children,
            } => {
                ensure(*attr < m, || format!("node {id}: attribute {attr} out of range"))?;
                ensure(!threshold.is_nan(), || format!("node {id}: NaN threshold"))?;
                weights(w, &format!("node {id}"))?;
                child(id, children[0])?;
                child(id, children[1])?;
            }
        }
    }
    Ok(())
}

fn check_nb(nb: &NaiveBayes, m: usize, c: usize) -> Check {
    dist(&nb.class_counts, c, "class counts")?;
    ensure(nb.attributes.len() == m, || format!("{} attribute tables, expected {m}", nb.attributes.len()))?;
    for (j, a) in nb.attributes.iter().enumerate() {
        ensure(a.slots > 0 && a.counts.len() == a.slots * c, || format!("attribute {j}: count table shape"))?;
        dist(&a.totals, c, &format!("attribute {j} totals"))?;
        ensure(a.counts.iter().all(|x| x.is_finite() && *x >= 0.0), || format!("attribute {j}: invalid count"))?;
        if let Some(cuts) = &a.cuts {
            ensure(cuts.len() < a.slots, || format!("attribute {j}: more cuts than slots"))?;
        }
    }
    Ok(())
}

fn check_ripper(r: &Ripper, m: usize, c: usize) -> Check {
    ensure(r.default_class < c, || "default class out of range".into())?;
    dist(&r.default_dist, c, "default rule")?;
    for (i, rule) in r.rules.iter().enumerate() {
        ensure(rule.class < c, || format!("rule {i}: class out of range"))?;
        dist(&rule.dist, c, &format!("rule {i}"))?;
        for t in &rule.tests {
            let attr = match *t {
                Test::Eq { attr, .. } | Test::Le { attr, .. } | Test::Gt { attr, .. } => attr,
            };
            ensure(attr < m, || format!("rule {i}: attribute {attr} out of range"))?;
        }
    }
    Ok(())
}

fn check_table(t: &DecisionTable, m: usize, c: usize) -> Check {
    ensure(t.attributes.iter().all(|&j| j < m), || "decision table attribute out of range".into())?;
    ensure(t.cuts.len() == t.attributes.len(), || "decision table cuts disagree with attributes".into())?;
    dist(&t.global, c, "decision table fallback")?;
    for (key, d) in &t.entries {
        ensure(key.len() == t.attributes.len(), || "decision table key width".into())?;
        dist(d, c, "decision table entry")?;
    }
    ensure(t.entries.windows(2).all(|p| p[0].0 < p[1].0), || "decision table entries unsorted".into())
}

fn check_forest(f: &RandomForest, m: usize, c: usize) -> Check {
    ensure(f.n_classes == c, || "forest class count".into())?;
    ensure(!f.trees.is_empty(), || "forest without trees".into())?;
    f.trees.iter().try_for_each(|t| check_tree(t, m, c))
}

fn check_subspace(s: &RandomSubspace, m: usize, c: usize) -> Check {
    ensure(s.n_classes == c, || "subspace class count".into())?;
    ensure(!s.members.is_empty(), || "subspace ensemble without members".into())?;
    for member in &s.members {
        ensure(member.attributes.iter().all(|&j| j < m), || "subspace attribute out of range".into())?;
        check_tree(&member.tree, m, c)?;
    }
    Ok(())
}

fn check_stacking(s: &Stacking, m: usize, c: usize) -> Check {
    ensure(!s.bases.is_empty(), || "stacking without base models".into())?;
    s.bases.iter().try_for_each(|b| check_subspace(b, m, c))?;
    let meta_m = s.bases.len() * c;
    ensure(s.meta_schema.attributes.len() == meta_m && s.meta_schema.classes.len() == c, || {
        "stacking meta schema shape".into()
    })?;
    check_model(&s.meta, meta_m, c)
}
