//! Hierarchy-level loss against trainable centroids and the full HCE loss.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;

use super::{bidirectional_batch_loss, check_dims, score_backward, score_unchecked, softmax_nll};
use super::{ScoreConfig, TrainingBatch};
use crate::error::{HceError, Result};
use crate::hierarchy::HierarchyTree;
use crate::vector::{axpy, normalize};

/// Trainable copies of the centroids on levels `1..=M`, with the child lists
/// needed to find sibling sets.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidParameters {
    dim: usize,
    // children[t][node]: level-(t+1) children of a level-t node, t < M
    children: Vec<Vec<Vec<usize>>>,
    // vectors[t-1]: row-major centroids of level t
    vectors: Vec<Vec<f64>>,
}

impl CentroidParameters {
    pub fn from_tree(tree: &HierarchyTree, layers: usize) -> Result<Self> {
        if layers >= tree.depth() {
            return Err(HceError::Config(format!(
                "hierarchy layers M = {layers} must be below the tree depth {}",
                tree.depth()
            )));
        }
        let children = (0..layers)
            .map(|t| tree.level(t).iter().map(|n| n.children.clone()).collect())
            .collect();
        let vectors = (1..=layers)
            .map(|t| {
                tree.level(t)
                    .iter()
                    .flat_map(|n| n.centroid.iter().copied())
                    .collect()
            })
            .collect();
        Ok(CentroidParameters {
            dim: tree.dim(),
            children,
            vectors,
        })
    }

    /// Number of retained levels `M`.
    pub fn layers(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level_len(&self, t: usize) -> usize {
        self.vectors[t - 1].len() / self.dim
    }

    pub fn centroid(&self, t: usize, node: usize) -> &[f64] {
        &self.vectors[t - 1][node * self.dim..(node + 1) * self.dim]
    }

    pub fn centroid_mut(&mut self, t: usize, node: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.vectors[t - 1][node * d..(node + 1) * d]
    }

    /// Sibling node indices at level `t` for `path`, and the positive's
    /// position among them.
    fn siblings(&self, path: &[usize], t: usize) -> Result<(&[usize], usize)> {
        let invalid = |reason: String| HceError::InvalidPrefix {
            prefix: path[..t.min(path.len())].to_vec(),
            reason,
        };
        if t == 0 || t > self.layers() || t > path.len() {
            return Err(invalid(format!(
                "level {t} outside the retained levels 1..={}",
                self.layers()
            )));
        }
        let mut node = 0;
        for (s, &symbol) in path[..t - 1].iter().enumerate() {
            node = *self.children[s][node]
                .get(symbol)
                .ok_or_else(|| invalid(format!("symbol {symbol} at position {}", s + 1)))?;
        }
        let sibs = &self.children[t - 1][node];
        let symbol = path[t - 1];
        if symbol >= sibs.len() {
            return Err(invalid(format!("symbol {symbol} at position {t}")));
        }
        Ok((sibs, symbol))
    }

    pub fn max_norm_error(&self) -> f64 {
        self.vectors
            .iter()
            .flat_map(|level| level.chunks_exact(self.dim))
            .map(|c| (crate::vector::l2_norm(c) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Sparse centroid gradients keyed by node, per level.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CentroidGradients {
    dim: usize,
    levels: Vec<BTreeMap<usize, Vec<f64>>>,
}

impl CentroidGradients {
    pub fn zeros(params: &CentroidParameters) -> Self {
        CentroidGradients {
            dim: params.dim,
            levels: vec![BTreeMap::new(); params.layers()],
        }
    }

    pub fn get(&self, t: usize, node: usize) -> Option<&[f64]> {
        self.levels[t - 1].get(&node).map(Vec::as_slice)
    }

    fn row(&mut self, t: usize, node: usize) -> &mut Vec<f64> {
        let d = self.dim;
        self.levels[t - 1].entry(node).or_insert_with(|| vec![0.0; d])
    }

    pub fn add_scaled(&mut self, other: &CentroidGradients, a: f64) {
        for (t, level) in other.levels.iter().enumerate() {
            for (&node, g) in level {
                axpy(a, g, self.row(t + 1, node));
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.levels
            .iter()
            .flat_map(BTreeMap::values)
            .all(|g| g.iter().all(|x| x.is_finite()))
    }

    /// SGD step on every touched centroid, followed by projection back onto
    /// the unit sphere.
    pub fn apply_sgd(&self, params: &mut CentroidParameters, rate: f64) -> Result<()> {
        for (t, level) in self.levels.iter().enumerate() {
            for (&node, g) in level {
                let c = params.centroid_mut(t + 1, node);
                axpy(-rate, g, c);
                let unit = normalize(c)?;
                c.copy_from_slice(&unit);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelLoss {
    pub loss: f64,
    pub grad_query: Vec<f64>,
    /// `(node index at level t, gradient)` for every sibling.
    pub grad_centroids: Vec<(usize, Vec<f64>)>,
}

/// Contrastive loss of the level-`t` prefix centroid against the other
/// children of its parent.
pub fn hierarchy_level_loss(
    cfg: &ScoreConfig,
    q: &[f64],
    centroids: &CentroidParameters,
    path: &[usize],
    t: usize,
) -> Result<LevelLoss> {
    if q.len() != centroids.dim {
        return Err(HceError::DimensionMismatch {
            expected: centroids.dim,
            found: q.len(),
        });
    }
    let (sibs, positive) = centroids.siblings(path, t)?;
    let logits: Vec<f64> = sibs
        .iter()
        .map(|&n| score_unchecked(cfg, q, centroids.centroid(t, n)))
        .collect();
    let (loss, g) = softmax_nll(&logits, positive);
    let mut grad_query = vec![0.0; q.len()];
    let grad_centroids = sibs
        .iter()
        .zip(&g)
        .map(|(&n, &gn)| {
            let mut gc = vec![0.0; q.len()];
            score_backward(cfg, q, centroids.centroid(t, n), gn, &mut grad_query, &mut gc);
            (n, gc)
        })
        .collect();
    Ok(LevelLoss {
        loss,
        grad_query,
        grad_centroids,
    })
}

/// Up to `n_ns` distinct documents, uniformly without replacement, from the
/// subtree under the length-`min(t, L−1)` prefix of `d_plus`'s path,
/// excluding `d_plus`. The leaf level therefore draws from its parent's
/// leaves rather than from the leaf alone.
pub fn sample_leaf_negatives<R: Rng + ?Sized>(
    tree: &HierarchyTree,
    d_plus: usize,
    t: usize,
    n_ns: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let path = tree.path_of(d_plus)?;
    let prefix_len = t.min(tree.depth().saturating_sub(1));
    let cohort = tree.cohort(path.prefix(prefix_len))?;
    let own = cohort
        .iter()
        .position(|&d| d == d_plus)
        .expect("document lies under its own prefix");
    let pool = cohort.len() - 1;
    let amount = n_ns.min(pool);
    if amount == 0 {
        return Ok(Vec::new());
    }
    Ok(index::sample(rng, pool, amount)
        .into_iter()
        .map(|i| cohort[if i >= own { i + 1 } else { i }])
        .collect())
}

/// Encoded inputs of one HCE batch.
#[derive(Debug, Clone, Default)]
pub struct HceBatch<'a> {
    pub queries: Vec<&'a [f64]>,
    pub positives: Vec<&'a [f64]>,
    pub paths: Vec<&'a [usize]>,
    /// `leaf_negatives[l][i]`: sampled negatives of query `i` for level
    /// `M + 1 + l`. Its length is `L − M`.
    pub leaf_negatives: Vec<Vec<Vec<&'a [f64]>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HceOutput {
    pub loss: f64,
    pub hierarchy_loss: f64,
    pub contrastive_loss: f64,
    pub grad_queries: Vec<Vec<f64>>,
    pub grad_positives: Vec<Vec<f64>>,
    /// Same shape as [`HceBatch::leaf_negatives`].
    pub grad_negatives: Vec<Vec<Vec<Vec<f64>>>>,
    pub grad_centroids: CentroidGradients,
}

/// Batch HCE loss: the mean per-query hierarchy loss over levels `1..=M`
/// plus one bidirectional in-batch term per remaining level.
pub fn hce_batch_loss(
    cfg: &ScoreConfig,
    batch: &HceBatch<'_>,
    centroids: &CentroidParameters,
) -> Result<HceOutput> {
    let b = batch.queries.len();
    if b == 0 || batch.positives.len() != b || batch.paths.len() != b {
        return Err(HceError::Config(format!(
            "malformed batch: {} queries, {} positives, {} paths",
            b,
            batch.positives.len(),
            batch.paths.len()
        )));
    }
    let dim = batch.queries[0].len();
    let m = centroids.layers();
    let inv_b = 1.0 / b as f64;

    let mut grad_queries = vec![vec![0.0; dim]; b];
    let mut grad_positives = vec![vec![0.0; dim]; b];
    let mut grad_centroids = CentroidGradients::zeros(centroids);
    let mut hierarchy_loss = 0.0;
    for (i, (q, path)) in batch.queries.iter().zip(&batch.paths).enumerate() {
        for t in 1..=m {
            let level = hierarchy_level_loss(cfg, q, centroids, path, t)?;
            hierarchy_loss += level.loss;
            axpy(inv_b, &level.grad_query, &mut grad_queries[i]);
            for (node, g) in &level.grad_centroids {
                axpy(inv_b, g, grad_centroids.row(t, *node));
            }
        }
    }
    hierarchy_loss *= inv_b;

    let mut contrastive_loss = 0.0;
    let mut grad_negatives = Vec::with_capacity(batch.leaf_negatives.len());
    for negatives in &batch.leaf_negatives {
        if negatives.len() != b {
            return Err(HceError::Config("leaf negatives not aligned with queries".into()));
        }
        let out = bidirectional_batch_loss(
            cfg,
            &TrainingBatch {
                queries: batch.queries.clone(),
                positives: batch.positives.clone(),
                negatives: negatives.clone(),
            },
        )?;
        contrastive_loss += out.loss;
        for (acc, g) in grad_queries.iter_mut().zip(&out.grad_queries) {
            axpy(1.0, g, acc);
        }
        for (acc, g) in grad_positives.iter_mut().zip(&out.grad_positives) {
            axpy(1.0, g, acc);
        }
        grad_negatives.push(out.grad_negatives);
    }
    Ok(HceOutput {
        loss: hierarchy_loss + contrastive_loss,
        hierarchy_loss,
        contrastive_loss,
        grad_queries,
        grad_positives,
        grad_negatives,
        grad_centroids,
    })
}

/// HCE loss of a single `(q, d⁺)` pair. Negatives for levels `M+1..=L` are
/// sampled from the tree and encoded through `encode`; the sampled ordinals
/// are returned alongside the output.
#[allow(clippy::too_many_arguments)]
pub fn hce_loss<R, F>(
    cfg: &ScoreConfig,
    q: &[f64],
    d_plus: usize,
    tree: &HierarchyTree,
    centroids: &CentroidParameters,
    mut encode: F,
    n_ns: usize,
    rng: &mut R,
) -> Result<(HceOutput, Vec<Vec<usize>>)>
where
    R: Rng + ?Sized,
    F: FnMut(usize) -> Result<Vec<f64>>,
{
    let positive = encode(d_plus)?;
    check_dims(q, &positive)?;
    let path = tree.path_of(d_plus)?.symbols().to_vec();
    let sampled = (centroids.layers() + 1..=tree.depth())
        .map(|t| sample_leaf_negatives(tree, d_plus, t, n_ns, rng))
        .collect::<Result<Vec<_>>>()?;
    let encoded = sampled
        .iter()
        .map(|level| level.iter().map(|&d| encode(d)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let batch = HceBatch {
        queries: vec![q],
        positives: vec![&positive],
        paths: vec![&path],
        leaf_negatives: encoded
            .iter()
            .map(|level| vec![level.iter().map(Vec::as_slice).collect()])
            .collect(),
    };
    Ok((hce_batch_loss(cfg, &batch, centroids)?, sampled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::hier_agg_cluster;
    use crate::losses::contrastive_loss;
    use crate::losses::tests::{gaussian, numeric_grad, rel_err};
    use crate::vector::UnitVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn unit(v: &[f64]) -> UnitVector {
        normalize(v).unwrap()
    }

    /// Depth-3 binary tree over 8 documents with arbitrary unit centroids.
    fn binary_tree(seed: u64, dim: usize) -> HierarchyTree {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut level = |n: usize| (0..n).map(|_| unit(&gaussian(&mut rng, dim))).collect();
        let centroids = vec![level(1), level(2), level(4), level(8)];
        HierarchyTree::from_parts(
            2,
            vec![vec![0, 0], vec![0, 0, 1, 1], vec![0, 0, 1, 1, 2, 2, 3, 3]],
            centroids,
            (0..8).collect(),
        )
        .unwrap()
    }

    #[test]
    fn sampler_examples() {
        let tree = binary_tree(0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // leaf level draws from the two leaves under the parent
        assert_eq!(sample_leaf_negatives(&tree, 6, 3, 4, &mut rng).unwrap(), vec![7]);
        let mut level2 = sample_leaf_negatives(&tree, 6, 2, 4, &mut rng).unwrap();
        level2.sort();
        assert_eq!(level2, vec![7]);
        let mut level1 = sample_leaf_negatives(&tree, 6, 1, 4, &mut rng).unwrap();
        level1.sort();
        assert_eq!(level1, vec![4, 5, 7]);

        let single = HierarchyTree::from_parts(
            2,
            vec![vec![0]],
            vec![vec![unit(&[1.0, 0.0])], vec![unit(&[1.0, 0.0])]],
            vec![0],
        )
        .unwrap();
        assert!(sample_leaf_negatives(&single, 0, 1, 4, &mut rng)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn sampler_is_reproducible_and_distinct() {
        let vs: Vec<_> = (0..100)
            .map(|i| unit(&[(i as f64).cos(), (i as f64).sin()]))
            .collect();
        let tree = hier_agg_cluster(&vs, 128, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(tree.depth(), 1);
        let a = sample_leaf_negatives(&tree, 17, 1, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_leaf_negatives(&tree, 17, 1, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        let mut sorted = a.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 4);
        assert!(!a.contains(&17));

        // the index sampler's draw order for this seed, enumerated by hand
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw: Vec<usize> = index::sample(&mut rng, 99, 4).into_iter().collect();
        let cohort = tree.cohort(&[]).unwrap();
        let own = cohort.iter().position(|&d| d == 17).unwrap();
        let expected: Vec<usize> = raw
            .iter()
            .map(|&i| cohort[if i >= own { i + 1 } else { i }])
            .collect();
        assert_eq!(a, expected);
    }

    #[test]
    fn level_loss_examples() {
        let tree = binary_tree(3, 4);
        let params = CentroidParameters::from_tree(&tree, 2).unwrap();
        let q = unit(&[0.3, -0.2, 0.9, 0.1]);
        let cfg = ScoreConfig::new(0.1, false).unwrap();
        let path = tree.path_of(6).unwrap().symbols();
        let level = hierarchy_level_loss(&cfg, &q, &params, path, 1).unwrap();
        let root_children = &tree.level(0)[0].children;
        let positive = tree.level(1)[root_children[1]].centroid.as_slice();
        let negative = tree.level(1)[root_children[0]].centroid.as_slice();
        let direct = contrastive_loss(&cfg, &q, positive, &[negative]).unwrap();
        assert!((level.loss - direct.loss).abs() < 1e-12);
        assert!(hierarchy_level_loss(&cfg, &q, &params, path, 3).is_err());
        assert!(hierarchy_level_loss(&cfg, &q, &params, &[1, 5, 0], 2).is_err());
    }

    #[test]
    fn equal_siblings_give_ln2_per_level() {
        // q is orthogonal to every centroid, so each level is a symmetric
        // two-way softmax.
        let e = |i: usize| UnitVector::basis(4, i);
        let tree = HierarchyTree::from_parts(
            2,
            vec![vec![0, 0], vec![0, 0, 1, 1]],
            vec![vec![e(1)], vec![e(1), e(2)], vec![e(1), e(2), e(3), e(1)]],
            vec![0, 1, 2, 3],
        )
        .unwrap();
        let params = CentroidParameters::from_tree(&tree, 1).unwrap();
        let q = e(0);
        let cfg = ScoreConfig::default();
        let encode = |d: usize| Ok(tree.level(2)[d].centroid.to_vec());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, sampled) = hce_loss(&cfg, &q, 2, &tree, &params, encode, 1, &mut rng).unwrap();
        assert_eq!(sampled, vec![vec![3]]);
        assert!((out.loss - 2.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn single_child_level_contributes_zero() {
        let e = |i: usize| UnitVector::basis(3, i);
        let tree = HierarchyTree::from_parts(
            2,
            vec![vec![0], vec![0, 0]],
            vec![vec![e(0)], vec![e(1)], vec![e(0), e(2)]],
            vec![0, 1],
        )
        .unwrap();
        let params = CentroidParameters::from_tree(&tree, 1).unwrap();
        let q = unit(&[0.2, 0.5, -0.4]);
        let cfg = ScoreConfig::default();
        let level = hierarchy_level_loss(&cfg, &q, &params, &[0, 1], 1).unwrap();
        assert_eq!(level.loss, 0.0);
        assert!(level.grad_query.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn depth_one_tree_is_pure_sampled_contrastive() {
        let vs: Vec<_> = (0..5).map(|i| unit(&[1.0, i as f64, 0.5])).collect();
        let tree = hier_agg_cluster(&vs, 8, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let params = CentroidParameters::from_tree(&tree, 0).unwrap();
        let q = unit(&[0.1, 1.0, 0.0]);
        let cfg = ScoreConfig::new(0.5, false).unwrap();
        let encode = |d: usize| Ok(vs[d].to_vec());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (out, sampled) = hce_loss(&cfg, &q, 2, &tree, &params, encode, 4, &mut rng).unwrap();
        assert_eq!(out.hierarchy_loss, 0.0);
        let negs: Vec<&[f64]> = sampled[0].iter().map(|&d| vs[d].as_slice()).collect();
        let direct = contrastive_loss(&cfg, &q, &vs[2], &negs).unwrap();
        assert!((out.loss - direct.loss).abs() < 1e-12);
    }

    #[test]
    fn batch_gradients_match_finite_differences() {
        let dim = 3;
        let cfg = ScoreConfig::new(0.5, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..5 {
            let tree = binary_tree(40 + case, dim);
            let params = CentroidParameters::from_tree(&tree, 2).unwrap();
            let b = 2;
            let docs = [1usize, 6];
            let paths: Vec<Vec<usize>> = docs
                .iter()
                .map(|&d| tree.path_of(d).unwrap().symbols().to_vec())
                .collect();
            let neg_counts = [2usize, 1];
            let total = 2 * b + neg_counts.iter().sum::<usize>();
            let base = gaussian(&mut rng, dim * total);
            let n_centroid = params.level_len(1) + params.level_len(2);

            // x = [vectors..., centroids of levels 1 and 2...]
            let mut x0 = base.clone();
            for t in 1..=2 {
                for n in 0..params.level_len(t) {
                    x0.extend_from_slice(params.centroid(t, n));
                }
            }
            let eval = |x: &[f64]| -> HceOutput {
                let v = |i: usize| &x[i * dim..(i + 1) * dim];
                let mut p = params.clone();
                let mut off = total * dim;
                for t in 1..=2 {
                    for n in 0..p.level_len(t) {
                        p.centroid_mut(t, n).copy_from_slice(&x[off..off + dim]);
                        off += dim;
                    }
                }
                let batch = HceBatch {
                    queries: (0..b).map(v).collect(),
                    positives: (b..2 * b).map(v).collect(),
                    paths: paths.iter().map(Vec::as_slice).collect(),
                    leaf_negatives: vec![vec![vec![v(4), v(5)], vec![v(6)]]],
                };
                hce_batch_loss(&cfg, &batch, &p).unwrap()
            };
            let out = eval(&x0);
            let mut analytic: Vec<f64> = out.grad_queries.concat();
            analytic.extend(out.grad_positives.concat());
            analytic.extend(out.grad_negatives.concat().concat().concat());
            for t in 1..=2 {
                for n in 0..params.level_len(t) {
                    match out.grad_centroids.get(t, n) {
                        Some(g) => analytic.extend_from_slice(g),
                        None => analytic.extend(std::iter::repeat_n(0.0, dim)),
                    }
                }
            }
            assert_eq!(analytic.len(), (total + n_centroid) * dim);
            let numeric = numeric_grad(&x0, |x| eval(x).loss);
            assert!(rel_err(&analytic, &numeric) < 1e-5, "case {case}");
        }
    }

    #[test]
    fn centroid_step_keeps_unit_norm() {
        let tree = binary_tree(9, 4);
        let mut params = CentroidParameters::from_tree(&tree, 2).unwrap();
        let q = unit(&[0.5, 0.5, -0.5, 0.5]);
        let cfg = ScoreConfig::default();
        let level = hierarchy_level_loss(&cfg, &q, &params, &[1, 0, 1], 2).unwrap();
        let mut grads = CentroidGradients::zeros(&params);
        for (n, g) in &level.grad_centroids {
            axpy(1.0, g, grads.row(2, *n));
        }
        let before = params.clone();
        grads.apply_sgd(&mut params, 0.05).unwrap();
        assert_ne!(before, params);
        assert!(params.max_norm_error() <= 1e-9);
    }
}
