//! `HCT1` tree files: magic, then `branching`, `depth`, `dim`, `num_docs`
//! (u64 LE). For each level `1..=depth`: node count followed by the parent
//! index of every node. Then, for each level `0..=depth`, its centroids
//! row-major (f64 LE). Finally the document ordinal of every leaf.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::HierarchyTree;
use crate::binio::{Reader, Writer};
use crate::error::{HceError, Result};
use crate::vector::UnitVector;

pub const TREE_MAGIC: &[u8; 4] = b"HCT1";

impl HierarchyTree {
    pub fn write_to<W: Write>(&self, out: W) -> Result<W> {
        let mut w = Writer::new(out);
        w.magic(TREE_MAGIC)?;
        w.usize(self.branching)?;
        w.usize(self.depth())?;
        w.usize(self.dim())?;
        w.usize(self.num_docs())?;
        for level in &self.levels[1..] {
            w.usize(level.len())?;
            for node in level {
                w.usize(node.parent)?;
            }
        }
        for level in &self.levels {
            for node in level {
                w.f64s(&node.centroid)?;
            }
        }
        for &d in &self.leaf_docs {
            w.usize(d)?;
        }
        w.finish()
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = Reader::new(input);
        r.expect_magic(TREE_MAGIC)?;
        let branching = r.usize()?;
        let depth = r.count(1)?;
        let dim = r.count(8)?;
        let num_docs = r.count(8)?;
        if depth == 0 || dim == 0 {
            return Err(HceError::Format("tree with zero depth or dimension".into()));
        }
        let mut parents = Vec::with_capacity(depth);
        for _ in 0..depth {
            let count = r.count(8)?;
            parents.push((0..count).map(|_| r.usize()).collect::<Result<Vec<_>>>()?);
        }
        if parents[depth - 1].len() != num_docs {
            return Err(HceError::Format(
                "leaf level does not match document count".into(),
            ));
        }
        let mut centroids = Vec::with_capacity(depth + 1);
        for t in 0..=depth {
            let count = if t == 0 { 1 } else { parents[t - 1].len() };
            let mut level = Vec::with_capacity(count);
            for _ in 0..count {
                level.push(
                    UnitVector::new(r.f64s(dim)?).map_err(|e| {
                        HceError::Format(format!("level {t} centroid is not unit length: {e}"))
                    })?,
                );
            }
            centroids.push(level);
        }
        let leaf_docs = (0..num_docs).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        r.expect_eof()?;
        HierarchyTree::from_parts(branching, parents, centroids, leaf_docs)
    }
}

pub fn write_tree(tree: &HierarchyTree, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HceError::io(path, e))?;
    tree.write_to(BufWriter::new(file)).map(|_| ())
}

pub fn read_tree(path: &Path) -> Result<HierarchyTree> {
    let file = File::open(path).map_err(|e| HceError::io(path, e))?;
    HierarchyTree::read_from(BufReader::new(file)).map_err(|e| match e {
        HceError::Format(msg) => HceError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
