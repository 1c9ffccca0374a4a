//! Random forests, random subspace ensembles of C4.5 trees, and stacking of
//! subspace ensembles under a meta learner.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Attribute, Dataset, Schema};
use super::tree::{Tree, TreeParams};
use super::{LearnerConfig, LearnerError, Model};
use crate::table::ColumnKind;
use crate::util::{ceil_share, derive_seed, stream};

fn average(dists: impl Iterator<Item = Vec<f64>>, n_classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_classes];
    let mut k = 0usize;
    for d in dists {
        for (o, p) in out.iter_mut().zip(d) {
            *o += p;
        }
        k += 1;
    }
    if k > 0 {
        out.iter_mut().for_each(|o| *o /= k as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_classes: usize,
    pub trees: Vec<Tree>,
}

impl RandomForest {
    /// `features` random candidates per split; `None` uses `floor(sqrt(M))`.
    pub fn fit(data: &Dataset, n_trees: usize, features: Option<usize>, seed: u64) -> RandomForest {
        let m = data.n_attrs();
        let k = features.unwrap_or_else(|| ((m as f64).sqrt().floor() as usize).max(1));
        let params = TreeParams::random(k);
        let allowed: Vec<usize> = (0..m).collect();
        let n = data.n_rows();
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(seed, "forest_tree", t as u64);
                let mut weight = vec![0u32; n];
                for _ in 0..n {
                    weight[rng.random_range(0..n)] += 1;
                }
                let items = weight
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 0)
                    .map(|(r, w)| (r as u32, *w as f64))
                    .collect();
                Tree::fit(data, items, &allowed, &params, Some(&mut rng))
            })
            .collect();
        RandomForest {
            n_classes: data.n_classes(),
            trees,
        }
    }

    pub fn distribution(&self, row: &[f64]) -> Vec<f64> {
        average(self.trees.iter().map(|t| t.distribution(row)), self.n_classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceMember {
    /// Attribute indices the member may test, ascending.
    pub attributes: Vec<usize>,
    pub tree: Tree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSubspace {
    pub n_classes: usize,
    pub members: Vec<SubspaceMember>,
}

impl RandomSubspace {
    pub fn fit(data: &Dataset, n_members: usize, fraction: f64, tree: &TreeParams, seed: u64) -> RandomSubspace {
        let m = data.n_attrs();
        let size = ceil_share(fraction, m);
        let all: Vec<u32> = (0..data.n_rows() as u32).collect();
        let members = (0..n_members)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, "subspace_member", i as u64);
                let mut attributes: Vec<usize> = sample(&mut rng, m, size).into_vec();
                attributes.sort_unstable();
                let items = all.iter().map(|&r| (r, 1.0)).collect();
                let tree = Tree::fit(data, items, &attributes, tree, None);
                SubspaceMember { attributes, tree }
            })
            .collect();
        RandomSubspace {
            n_classes: data.n_classes(),
            members,
        }
    }

    pub fn distribution(&self, row: &[f64]) -> Vec<f64> {
        average(self.members.iter().map(|m| m.tree.distribution(row)), self.n_classes)
    }
}

/// One level-0 ensemble of a stacking model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    pub n_members: usize,
    pub subspace_fraction: f64,
    pub tree: TreeParams,
}

impl Default for SubspaceSpec {
    fn default() -> Self {
        SubspaceSpec {
            n_members: 10,
            subspace_fraction: 0.5,
            tree: TreeParams::c45(2.0, 0.25, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stacking {
    pub bases: Vec<RandomSubspace>,
    pub meta_schema: Schema,
    pub meta: Box<Model>,
}

impl Stacking {
    pub fn fit(
        data: &Dataset,
        bases: &[SubspaceSpec],
        meta: &LearnerConfig,
        folds: usize,
        seed: u64,
    ) -> Result<Stacking, LearnerError> {
        let n = data.n_rows();
        let c = data.n_classes();
        let width = bases.len() * c;
        let meta_schema = level_one_schema(bases.len(), &data.schema.classes);
        let k = folds.min(n).max(1);
        let assignment = if k >= 2 {
            crate::eval::assign_folds(&data.y, c, k, derive_seed(seed, "stacking_folds", 0))
        } else {
            vec![0; n]
        };

        let fold_outputs: Vec<Vec<(usize, Vec<f64>)>> = (0..k)
            .into_par_iter()
            .map(|f| {
                let (train, test): (Vec<usize>, Vec<usize>) = if k >= 2 {
                    (0..n).partition(|&r| assignment[r] != f)
                } else {
                    ((0..n).collect(), (0..n).collect())
                };
                let train_data = data.subset(&train);
                let models: Vec<RandomSubspace> = bases
                    .iter()
                    .enumerate()
                    .map(|(b, s)| {
                        let member_seed = derive_seed(seed, "stacking_fold_base", (f * bases.len() + b) as u64);
                        RandomSubspace::fit(&train_data, s.n_members, s.subspace_fraction, &s.tree, member_seed)
                    })
                    .collect();
                test.into_iter()
                    .map(|r| (r, level_one_row(&models, data.row(r), c)))
                    .collect()
            })
            .collect();

        let mut x = vec![0.0; n * width];
        for (r, row) in fold_outputs.into_iter().flatten() {
            x[r * width..(r + 1) * width].copy_from_slice(&row);
        }
        let level_one = Dataset::from_parts(meta_schema.clone(), x, data.y.clone());
        let meta_model = meta.fit(&level_one, derive_seed(seed, "stacking_meta", 0))?;
        let bases = bases
            .iter()
            .enumerate()
            .map(|(b, s)| {
                RandomSubspace::fit(
                    data,
                    s.n_members,
                    s.subspace_fraction,
                    &s.tree,
                    derive_seed(seed, "stacking_base", b as u64),
                )
            })
            .collect();
        Ok(Stacking {
            bases,
            meta_schema,
            meta: Box::new(meta_model),
        })
    }

    pub fn level_one(&self, row: &[f64]) -> Vec<f64> {
        level_one_row(&self.bases, row, self.meta_schema.n_classes())
    }

    pub fn distribution(&self, row: &[f64]) -> Vec<f64> {
        self.meta.distribution(&self.level_one(row))
    }
}

fn level_one_row(models: &[RandomSubspace], row: &[f64], n_classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(models.len() * n_classes);
    for m in models {
        out.extend(m.distribution(row));
    }
    out
}

fn level_one_schema(n_bases: usize, classes: &[String]) -> Schema {
    let mut attributes = Vec::with_capacity(n_bases * classes.len());
    for b in 0..n_bases {
        for c in classes {
            attributes.push(Attribute {
                name: format!("base{b}:{c}"),
                kind: ColumnKind::Numeric,
                levels: Vec::new(),
            });
        }
    }
    Schema {
        attributes,
        classes: classes.to_vec(),
    }
}
