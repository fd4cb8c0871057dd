//! Document hierarchy built by agglomerative spherical k-means.
//!
//! Level 0 holds the root, level `L` holds one leaf per document. Every leaf
//! sits at the same depth, so each document has a path of exactly `L` symbols;
//! symbol `t` is the position of the level-`t` node among its parent's
//! children.

mod io;
pub mod kmeans;

use std::time::Instant;

use rand::Rng;

use crate::error::{HceError, Result};
use crate::vector::{normalize, UnitVector};

pub use io::{read_tree, write_tree, TREE_MAGIC};
pub use kmeans::{spherical_kmeans, Cluster, ClusterForest, DEFAULT_MAX_ITERS};

/// Root-to-leaf symbols of one document.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path(Vec<usize>);

impl Path {
    pub fn new(symbols: Vec<usize>) -> Self {
        Path(symbols)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prefix(&self, len: usize) -> &[usize] {
        &self.0[..len]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// Index of the parent in the level above; `usize::MAX` for the root.
    pub parent: usize,
    /// Indices into the level below, ascending. Empty for leaves.
    pub children: Vec<usize>,
    pub centroid: UnitVector,
}

/// Per-level clustering statistics gathered during construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    /// Level that the clustering produced.
    pub level: usize,
    pub clusters: usize,
    pub inputs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyTree {
    branching: usize,
    levels: Vec<Vec<TreeNode>>,
    leaf_docs: Vec<usize>,
    doc_leaf: Vec<usize>,
    doc_paths: Vec<Path>,
    // DFS leaf order and per-node [start, end) ranges into it
    dfs_docs: Vec<usize>,
    node_ranges: Vec<Vec<(usize, usize)>>,
    stats: Vec<LevelStats>,
}

/// `⌈log_b N⌉` for `N ≥ 2`, and 1 for a single document.
pub fn tree_depth(num_docs: usize, branching: usize) -> usize {
    assert!(branching >= 2, "branching factor must be at least 2");
    if num_docs <= 1 {
        return 1;
    }
    let mut depth = 0;
    let mut reach: usize = 1;
    while reach < num_docs {
        reach = reach.saturating_mul(branching);
        depth += 1;
    }
    depth
}

/// Smallest power of two `b` with `b^target_depth ≥ N`, i.e.
/// `2^⌈log₂ N^(1/target_depth)⌉`, computed in integers.
pub fn choose_branching_factor(num_docs: usize, target_depth: usize) -> usize {
    assert!(target_depth >= 1, "target depth must be positive");
    let mut exponent: u32 = 1;
    loop {
        let total = (exponent as u64).saturating_mul(target_depth as u64);
        if total >= 64 || (1u64 << total) >= num_docs as u64 {
            return 1usize << exponent;
        }
        exponent += 1;
    }
}

/// Agglomerative clustering: repeatedly clusters the current forest with
/// `K = ⌈N/b⌉, ⌈K/b⌉, …` until a single root remains.
pub fn hier_agg_cluster<R: Rng + ?Sized>(
    vectors: &[UnitVector],
    branching: usize,
    rng: &mut R,
) -> Result<HierarchyTree> {
    hier_agg_cluster_with(vectors, branching, rng, DEFAULT_MAX_ITERS)
}

pub fn hier_agg_cluster_with<R: Rng + ?Sized>(
    vectors: &[UnitVector],
    branching: usize,
    rng: &mut R,
    max_iters: usize,
) -> Result<HierarchyTree> {
    if branching < 2 {
        return Err(HceError::Config(format!(
            "branching factor must be at least 2, got {branching}"
        )));
    }
    let n = vectors.len();
    if n == 0 {
        return Err(HceError::InvalidK { k: 1, n: 0 });
    }
    let depth = tree_depth(n, branching);

    let leaves: Vec<TreeNode> = vectors
        .iter()
        .map(|v| TreeNode {
            parent: 0,
            children: Vec::new(),
            centroid: v.clone(),
        })
        .collect();

    if n == 1 {
        let root = TreeNode {
            parent: usize::MAX,
            children: vec![0],
            centroid: vectors[0].clone(),
        };
        return HierarchyTree::assemble(branching, vec![vec![root], leaves], vec![0], Vec::new());
    }

    // Built bottom-up, reversed at the end.
    let mut rev_levels = vec![leaves];
    let mut stats = Vec::with_capacity(depth);
    let mut k = n.div_ceil(branching);
    for step in 0..depth {
        let level_below = rev_levels.last_mut().expect("nonempty");
        let inputs: Vec<UnitVector> = level_below.iter().map(|node| node.centroid.clone()).collect();
        let started = Instant::now();
        let forest = spherical_kmeans(&inputs, k, rng, max_iters)?;
        stats.push(LevelStats {
            level: depth - step - 1,
            clusters: k,
            inputs: inputs.len(),
            iterations: forest.iterations,
            converged: forest.converged,
            seconds: started.elapsed().as_secs_f64(),
        });
        for (node, &a) in level_below.iter_mut().zip(&forest.assignments) {
            node.parent = a;
        }
        let parents: Vec<TreeNode> = forest
            .clusters
            .into_iter()
            .map(|c| TreeNode {
                parent: 0,
                children: c.members,
                centroid: c.centroid,
            })
            .collect();
        rev_levels.push(parents);
        k = k.div_ceil(branching);
    }
    debug_assert_eq!(rev_levels.last().map(Vec::len), Some(1));
    rev_levels.last_mut().expect("root")[0].parent = usize::MAX;
    rev_levels.reverse();
    stats.reverse();
    HierarchyTree::assemble(branching, rev_levels, (0..n).collect(), stats)
}

impl HierarchyTree {
    /// Builds a tree from explicit structure: `parents[t-1][i]` is the parent
    /// (in level `t-1`) of node `i` at level `t`, for `t = 1..=L`;
    /// `centroids[t]` holds the vectors of level `t` for `t = 0..=L`;
    /// `leaf_docs[i]` is the document at leaf `i`.
    pub fn from_parts(
        branching: usize,
        parents: Vec<Vec<usize>>,
        centroids: Vec<Vec<UnitVector>>,
        leaf_docs: Vec<usize>,
    ) -> Result<Self> {
        let depth = parents.len();
        if depth == 0 || centroids.len() != depth + 1 || centroids[0].len() != 1 {
            return Err(HceError::Format(
                "tree needs a single root and at least one level".into(),
            ));
        }
        let mut levels: Vec<Vec<TreeNode>> = Vec::with_capacity(depth + 1);
        levels.push(vec![TreeNode {
            parent: usize::MAX,
            children: Vec::new(),
            centroid: centroids[0][0].clone(),
        }]);
        for t in 1..=depth {
            if parents[t - 1].len() != centroids[t].len() {
                return Err(HceError::Format(format!(
                    "level {t}: {} parents for {} centroids",
                    parents[t - 1].len(),
                    centroids[t].len()
                )));
            }
            let mut nodes = Vec::with_capacity(parents[t - 1].len());
            for (i, (&p, c)) in parents[t - 1].iter().zip(&centroids[t]).enumerate() {
                let above = &mut levels[t - 1];
                if p >= above.len() {
                    return Err(HceError::Format(format!(
                        "level {t} node {i}: parent {p} out of range"
                    )));
                }
                above[p].children.push(i);
                nodes.push(TreeNode {
                    parent: p,
                    children: Vec::new(),
                    centroid: c.clone(),
                });
            }
            levels.push(nodes);
        }
        HierarchyTree::assemble(branching, levels, leaf_docs, Vec::new())
    }

    fn assemble(
        branching: usize,
        levels: Vec<Vec<TreeNode>>,
        leaf_docs: Vec<usize>,
        stats: Vec<LevelStats>,
    ) -> Result<Self> {
        let depth = levels.len() - 1;
        let num_docs = levels[depth].len();
        if leaf_docs.len() != num_docs {
            return Err(HceError::Format("leaf/document count mismatch".into()));
        }
        let mut doc_leaf = vec![usize::MAX; num_docs];
        for (leaf, &d) in leaf_docs.iter().enumerate() {
            if d >= num_docs || doc_leaf[d] != usize::MAX {
                return Err(HceError::Format(format!("leaf {leaf}: bad document {d}")));
            }
            doc_leaf[d] = leaf;
        }
        for (t, level) in levels.iter().enumerate() {
            if t < depth && level.iter().any(|node| node.children.is_empty()) {
                return Err(HceError::Format(format!("level {t} has a childless node")));
            }
            if level.is_empty() {
                return Err(HceError::Format(format!("level {t} is empty")));
            }
        }

        // DFS from the root assigns each node a contiguous leaf range and
        // each document its path.
        let mut node_ranges: Vec<Vec<(usize, usize)>> =
            levels.iter().map(|l| vec![(0, 0); l.len()]).collect();
        let mut dfs_docs = Vec::with_capacity(num_docs);
        let mut doc_paths = vec![Path(Vec::new()); num_docs];
        let mut path = Vec::with_capacity(depth);
        #[allow(clippy::too_many_arguments)]
        fn visit(
            levels: &[Vec<TreeNode>],
            t: usize,
            node: usize,
            leaf_docs: &[usize],
            path: &mut Vec<usize>,
            dfs_docs: &mut Vec<usize>,
            node_ranges: &mut [Vec<(usize, usize)>],
            doc_paths: &mut [Path],
        ) {
            let start = dfs_docs.len();
            if t + 1 == levels.len() {
                let d = leaf_docs[node];
                dfs_docs.push(d);
                doc_paths[d] = Path(path.clone());
            } else {
                for (symbol, &child) in levels[t][node].children.iter().enumerate() {
                    path.push(symbol);
                    visit(
                        levels,
                        t + 1,
                        child,
                        leaf_docs,
                        path,
                        dfs_docs,
                        node_ranges,
                        doc_paths,
                    );
                    path.pop();
                }
            }
            node_ranges[t][node] = (start, dfs_docs.len());
        }
        visit(
            &levels,
            0,
            0,
            &leaf_docs,
            &mut path,
            &mut dfs_docs,
            &mut node_ranges,
            &mut doc_paths,
        );
        if dfs_docs.len() != num_docs {
            return Err(HceError::Format("tree leaves are not all reachable".into()));
        }
        Ok(HierarchyTree {
            branching,
            levels,
            leaf_docs,
            doc_leaf,
            doc_paths,
            dfs_docs,
            node_ranges,
            stats,
        })
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    /// Number of levels below the root.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn num_docs(&self) -> usize {
        self.leaf_docs.len()
    }

    pub fn dim(&self) -> usize {
        self.levels[0][0].centroid.dim()
    }

    /// Nodes at level `t` (`0` is the root, `depth()` the leaves).
    pub fn level(&self, t: usize) -> &[TreeNode] {
        &self.levels[t]
    }

    pub fn leaf_docs(&self) -> &[usize] {
        &self.leaf_docs
    }

    pub fn stats(&self) -> &[LevelStats] {
        &self.stats
    }

    pub fn path_of(&self, doc: usize) -> Result<&Path> {
        self.doc_paths
            .get(doc)
            .ok_or_else(|| HceError::UnknownDocument(format!("ordinal {doc}")))
    }

    pub fn doc_paths(&self) -> &[Path] {
        &self.doc_paths
    }

    /// Resolves a prefix to `(level, node index)`.
    pub fn node_at(&self, prefix: &[usize]) -> Result<(usize, usize)> {
        if prefix.len() > self.depth() {
            return Err(HceError::InvalidPrefix {
                prefix: prefix.to_vec(),
                reason: format!("longer than tree depth {}", self.depth()),
            });
        }
        let mut node = 0;
        for (t, &symbol) in prefix.iter().enumerate() {
            let children = &self.levels[t][node].children;
            node = *children.get(symbol).ok_or_else(|| HceError::InvalidPrefix {
                prefix: prefix.to_vec(),
                reason: format!(
                    "symbol {symbol} at position {} but the node has {} children",
                    t + 1,
                    children.len()
                ),
            })?;
        }
        Ok((prefix.len(), node))
    }

    /// Children of the length-`(t−1)` prefix, tagged with their symbol; the
    /// positive child `prefix[t−1]` is included.
    pub fn sibling_centroids(&self, prefix: &[usize]) -> Result<Vec<(usize, &UnitVector)>> {
        if prefix.is_empty() {
            return Err(HceError::InvalidPrefix {
                prefix: Vec::new(),
                reason: "sibling sets need a prefix of length at least 1".into(),
            });
        }
        let t = prefix.len();
        self.node_at(prefix)?;
        let (_, parent) = self.node_at(&prefix[..t - 1])?;
        Ok(self.levels[t - 1][parent]
            .children
            .iter()
            .enumerate()
            .map(|(symbol, &child)| (symbol, &self.levels[t][child].centroid))
            .collect())
    }

    /// Document ordinals under `prefix`, ascending.
    pub fn subtree_leaf_docs(&self, prefix: &[usize]) -> Result<Vec<usize>> {
        let mut docs = self.cohort(prefix)?.to_vec();
        docs.sort_unstable();
        Ok(docs)
    }

    /// Documents under `prefix` in tree order; cheaper than
    /// [`subtree_leaf_docs`](Self::subtree_leaf_docs).
    pub fn cohort(&self, prefix: &[usize]) -> Result<&[usize]> {
        let (t, node) = self.node_at(prefix)?;
        let (start, end) = self.node_ranges[t][node];
        Ok(&self.dfs_docs[start..end])
    }

    /// Number of children of every internal node, grouped by child count.
    pub fn fan_out_histogram(&self) -> std::collections::BTreeMap<usize, usize> {
        let mut hist = std::collections::BTreeMap::new();
        for level in &self.levels[..self.depth()] {
            for node in level {
                *hist.entry(node.children.len()).or_insert(0) += 1;
            }
        }
        hist
    }

    /// Maximum `|‖c‖ − 1|` over all stored centroids.
    pub fn max_centroid_norm_error(&self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .map(|node| (crate::vector::l2_norm(&node.centroid) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Convenience for callers holding raw embeddings.
pub fn unit_rows(rows: &[Vec<f64>]) -> Result<Vec<UnitVector>> {
    rows.iter().map(|r| normalize(r)).collect()
}
