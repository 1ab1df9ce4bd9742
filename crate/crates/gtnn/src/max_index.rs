//! Element-wise-max pool index: a static interval tree whose nodes store the
//! coordinate-wise maximum of their member vectors (and the minimum too when
//! the store admits negative values).
//!
//! For a non-negative query `q`, `q . maxvec(pool)` upper-bounds the dot
//! product of `q` with every member of the pool, so a pool whose bound falls
//! below the threshold can be discarded wholesale. Unlike the prefix-sum
//! index there is no subtraction identity between siblings: both children of
//! an expanded node need fresh bound computations.
//!
//! Nodes split at `mid = si + floor(n/2) - 1`, the same rule the splitting
//! search uses, and leaves cover one or two ids (pairs are resolved directly
//! against the store during search). The tree for `N` vectors therefore has
//! at most `2N - 1` nodes, and its shape is a pure function of `N`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::container::{self, Header, FLAG_ALLOW_NEGATIVE, MAGIC_MAX, VERSION};
use crate::error::{Error, Result};
use crate::store::{FeatureVector, VectorStore};

const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Node {
    si: u32,
    ei: u32,
    left: u32,
    right: u32,
}

impl Node {
    fn len(&self) -> usize {
        (self.ei - self.si + 1) as usize
    }
}

/// Interval tree of element-wise max (and optionally min) pool vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxIndex {
    dim: usize,
    count: usize,
    has_min: bool,
    nodes: Vec<Node>, // preorder
    maxdata: Vec<f32>, // nodes.len() * dim
    mindata: Vec<f32>, // has_min ? nodes.len() * dim : empty
}

fn build_topology(count: usize) -> Vec<Node> {
    fn rec(nodes: &mut Vec<Node>, si: usize, ei: usize) -> u32 {
        let id = nodes.len() as u32;
        nodes.push(Node { si: si as u32, ei: ei as u32, left: NO_CHILD, right: NO_CHILD });
        let n = ei - si + 1;
        if n > 2 {
            let mid = si + n / 2 - 1;
            let left = rec(nodes, si, mid);
            let right = rec(nodes, mid + 1, ei);
            nodes[id as usize].left = left;
            nodes[id as usize].right = right;
        }
        id
    }
    let mut nodes = Vec::new();
    if count > 0 {
        rec(&mut nodes, 1, count);
    }
    nodes
}

impl MaxIndex {
    /// Builds the tree over the current contents of `store`.
    ///
    /// Minimum vectors are allocated only when the store allows negative
    /// values; they make bounds valid for queries with negative coordinates.
    pub fn build(store: &VectorStore) -> Result<Self> {
        let dim = store.dim();
        let count = store.len();
        let has_min = store.allow_negative();
        let nodes = build_topology(count);

        let mut maxdata = vec![0.0f32; nodes.len() * dim];
        let mut mindata = if has_min { vec![0.0f32; nodes.len() * dim] } else { Vec::new() };

        // Children follow their parent in preorder, so a reverse sweep sees
        // both children before the parent that combines them.
        let mut scratch_max = vec![0.0f32; dim];
        let mut scratch_min = vec![0.0f32; dim];
        for id in (0..nodes.len()).rev() {
            let node = nodes[id];
            if node.left == NO_CHILD {
                let first = store.row(node.si as usize)?;
                scratch_max.copy_from_slice(first);
                scratch_min.copy_from_slice(first);
                for i in node.si as usize + 1..=node.ei as usize {
                    let row = store.row(i)?;
                    for j in 0..dim {
                        scratch_max[j] = scratch_max[j].max(row[j]);
                        scratch_min[j] = scratch_min[j].min(row[j]);
                    }
                }
            } else {
                let l = node.left as usize * dim;
                let r = node.right as usize * dim;
                for j in 0..dim {
                    scratch_max[j] = maxdata[l + j].max(maxdata[r + j]);
                }
                if has_min {
                    for j in 0..dim {
                        scratch_min[j] = mindata[l + j].min(mindata[r + j]);
                    }
                }
            }
            maxdata[id * dim..(id + 1) * dim].copy_from_slice(&scratch_max);
            if has_min {
                mindata[id * dim..(id + 1) * dim].copy_from_slice(&scratch_min);
            }
        }

        Ok(MaxIndex { dim, count, has_min, nodes, maxdata, mindata })
    }

    /// Number of indexed vectors.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether minimum vectors are present (negative-query support).
    pub fn has_min(&self) -> bool {
        self.has_min
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Root node id, if the index is non-empty.
    pub fn root(&self) -> Option<usize> {
        if self.nodes.is_empty() {
            None
        } else {
            Some(0)
        }
    }

    /// The 1-based inclusive id interval covered by `node`.
    pub fn interval(&self, node: usize) -> Result<(usize, usize)> {
        let n = self.node(node)?;
        Ok((n.si as usize, n.ei as usize))
    }

    /// Child node ids of `node`, or `None` for a leaf (1 or 2 members).
    pub fn children(&self, node: usize) -> Result<Option<(usize, usize)>> {
        let n = self.node(node)?;
        if n.left == NO_CHILD {
            Ok(None)
        } else {
            Ok(Some((n.left as usize, n.right as usize)))
        }
    }

    fn node(&self, id: usize) -> Result<Node> {
        self.nodes
            .get(id)
            .copied()
            .ok_or(Error::IdOutOfRange { id, count: self.nodes.len() })
    }

    pub(crate) fn node_len(&self, id: usize) -> usize {
        self.nodes[id].len()
    }

    pub(crate) fn node_interval_raw(&self, id: usize) -> (usize, usize) {
        let n = self.nodes[id];
        (n.si as usize, n.ei as usize)
    }

    pub(crate) fn children_raw(&self, id: usize) -> Option<(usize, usize)> {
        let n = self.nodes[id];
        if n.left == NO_CHILD {
            None
        } else {
            Some((n.left as usize, n.right as usize))
        }
    }

    /// Upper bound on `q . f_i` over all members `i` of `node`'s pool.
    ///
    /// Uses the max vector where `q` is non-negative and the min vector where
    /// it is negative; queries with negative coordinates therefore require an
    /// index built with minimum vectors.
    pub fn pool_bound_dot(&self, q: &FeatureVector, node: usize) -> Result<f64> {
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: q.dim() });
        }
        self.node(node)?;
        if q.has_negative() && !self.has_min {
            return Err(Error::UnsupportedNegativeQuery);
        }
        Ok(self.bound_raw(q.values(), node))
    }

    pub(crate) fn bound_raw(&self, q: &[f32], node: usize) -> f64 {
        let maxrow = &self.maxdata[node * self.dim..(node + 1) * self.dim];
        let mut acc = 0.0f64;
        if self.has_min {
            let minrow = &self.mindata[node * self.dim..(node + 1) * self.dim];
            for j in 0..self.dim {
                let qj = q[j] as f64;
                acc += qj * if qj >= 0.0 { maxrow[j] as f64 } else { minrow[j] as f64 };
            }
        } else {
            for (x, m) in q.iter().zip(maxrow) {
                acc += *x as f64 * *m as f64;
            }
        }
        acc
    }

    /// Writes the index to `path` (magic `GTNM`).
    ///
    /// Only the pool vectors are written; the tree shape is a function of the
    /// vector count and is rebuilt on load.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = Header {
            version: VERSION,
            flags: if self.has_min { FLAG_ALLOW_NEGATIVE } else { 0 },
            dim: self.dim as u32,
            count: self.count as u64,
        };
        container::write_header(&mut w, MAGIC_MAX, &header)?;
        w.write_all(&(self.nodes.len() as u64).to_le_bytes())?;
        container::write_f32s(&mut w, &self.maxdata)?;
        if self.has_min {
            container::write_f32s(&mut w, &self.mindata)?;
        }
        Ok(())
    }

    /// Reads an index from `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let header = container::read_header(&mut r, MAGIC_MAX)?;
        let dim = header.dim as usize;
        if dim == 0 {
            return Err(Error::InvalidParameter { name: "dim", value: 0.0 });
        }
        let count = header.count as usize;
        let has_min = header.allow_negative();
        let nodes = build_topology(count);

        let mut buf = [0u8; 8];
        r.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Truncated { expected: 8 }
            } else {
                Error::Io(e)
            }
        })?;
        let stored_nodes = u64::from_le_bytes(buf);
        if stored_nodes != nodes.len() as u64 {
            return Err(Error::StoreMismatch {
                reason: format!(
                    "file claims {stored_nodes} nodes but a tree over {count} vectors has {}",
                    nodes.len()
                ),
            });
        }

        let maxdata = container::read_f32s(&mut r, nodes.len() * dim)?;
        let mindata = if has_min {
            container::read_f32s(&mut r, nodes.len() * dim)?
        } else {
            Vec::new()
        };
        Ok(MaxIndex { dim, count, has_min, nodes, maxdata, mindata })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_from_rows(rows: &[&[f64]], allow_negative: bool) -> VectorStore {
        let mut s = VectorStore::new(rows[0].len(), allow_negative).unwrap();
        for r in rows {
            s.append(r).unwrap();
        }
        s
    }

    #[test]
    fn topology_for_five_vectors() {
        // Hand-derived with the split rule mid = si + floor(n/2) - 1:
        // [1,5] -> [1,2] + [3,5]; [3,5] -> [3,3] + [4,5].
        let nodes = build_topology(5);
        let intervals: Vec<(u32, u32)> = nodes.iter().map(|n| (n.si, n.ei)).collect();
        assert_eq!(intervals, vec![(1, 5), (1, 2), (3, 5), (3, 3), (4, 5)]);
    }

    #[test]
    fn topology_structural_invariants() {
        for count in 1..=128 {
            let nodes = build_topology(count);
            assert!(nodes.len() <= 2 * count - 1, "count={count}");
            for (id, n) in nodes.iter().enumerate() {
                let len = n.len();
                if n.left == NO_CHILD {
                    assert!(len <= 2, "leaf wider than 2 at count={count}");
                    assert_eq!(n.right, NO_CHILD);
                } else {
                    let l = nodes[n.left as usize];
                    let r = nodes[n.right as usize];
                    let mid = n.si as usize + len / 2 - 1;
                    assert_eq!((l.si as usize, l.ei as usize), (n.si as usize, mid));
                    assert_eq!((r.si as usize, r.ei as usize), (mid + 1, n.ei as usize));
                    assert!(n.left as usize > id && n.right as usize > id);
                }
            }
        }
    }

    #[test]
    fn max_vectors_by_hand() {
        // Topology for 3 vectors: [1,3] -> [1,1] (node 1) + [2,3] (node 2).
        let store = store_from_rows(&[&[0.0, 1.0], &[0.6, 0.8], &[1.0, 0.0]], false);
        let idx = MaxIndex::build(&store).unwrap();
        assert_eq!(idx.node_count(), 3);
        assert_eq!(idx.interval(1).unwrap(), (1, 1));
        assert_eq!(idx.interval(2).unwrap(), (2, 3));
        let singleton = &idx.maxdata[idx.dim..2 * idx.dim];
        assert_eq!(singleton, &[0.0, 1.0]);
        let pair = &idx.maxdata[2 * idx.dim..3 * idx.dim];
        assert_eq!(pair, &[1.0, 0.8]);
        let root = &idx.maxdata[0..idx.dim];
        assert_eq!(root, &[1.0, 1.0]);
    }

    #[test]
    fn singleton_bound_is_exact_dot() {
        let store = store_from_rows(&[&[0.6, 0.8], &[1.0, 0.0], &[0.0, 1.0]], false);
        let idx = MaxIndex::build(&store).unwrap();
        let q = FeatureVector::normalize(&[0.3, 0.7], false).unwrap();
        // Node 1 is the singleton [1,1]: its max vector is the member itself,
        // so the bound is bit-identical to the direct dot product.
        assert_eq!(idx.interval(1).unwrap(), (1, 1));
        let bound = idx.pool_bound_dot(&q, 1).unwrap();
        let direct = q.dot(&store.get(1).unwrap()).unwrap();
        assert_eq!(bound.to_bits(), direct.to_bits());
    }

    #[test]
    fn bounds_dominate_member_dots() {
        let store = store_from_rows(
            &[&[0.2, 0.5, 0.1], &[0.9, 0.05, 0.05], &[0.1, 0.1, 0.8], &[0.4, 0.4, 0.2], &[0.0, 1.0, 0.0]],
            false,
        );
        let idx = MaxIndex::build(&store).unwrap();
        let q = FeatureVector::normalize(&[0.5, 0.2, 0.3], false).unwrap();
        for node in 0..idx.node_count() {
            let (si, ei) = idx.interval(node).unwrap();
            let bound = idx.pool_bound_dot(&q, node).unwrap();
            for i in si..=ei {
                let d = q.dot(&store.get(i).unwrap()).unwrap();
                assert!(bound >= d - 1e-12, "node {node} bound {bound} < member {i} dot {d}");
            }
        }
    }

    #[test]
    fn negative_values_need_min_vectors() {
        let store = store_from_rows(&[&[0.6, -0.8], &[1.0, 0.0], &[-0.3, 0.7]], true);
        let idx = MaxIndex::build(&store).unwrap();
        assert!(idx.has_min());
        let q = FeatureVector::normalize(&[0.5, -0.5], true).unwrap();
        for node in 0..idx.node_count() {
            let (si, ei) = idx.interval(node).unwrap();
            let bound = idx.pool_bound_dot(&q, node).unwrap();
            for i in si..=ei {
                let d = q.dot(&store.get(i).unwrap()).unwrap();
                assert!(bound >= d - 1e-12);
            }
        }

        // Same query against an index without min vectors must be refused.
        let nn_store = store_from_rows(&[&[0.6, 0.8], &[1.0, 0.0]], false);
        let nn_idx = MaxIndex::build(&nn_store).unwrap();
        match nn_idx.pool_bound_dot(&q, 0) {
            Err(Error::UnsupportedNegativeQuery) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = store_from_rows(
            &[&[0.2, 0.5, 0.1], &[0.9, 0.05, 0.05], &[0.1, 0.1, 0.8], &[0.4, 0.4, 0.2], &[0.0, 1.0, 0.0]],
            false,
        );
        let idx = MaxIndex::build(&store).unwrap();
        let path = dir.path().join("index.gtm");
        idx.save(&path).unwrap();
        let loaded = MaxIndex::load(&path).unwrap();
        assert_eq!(loaded, idx);

        let path2 = dir.path().join("index2.gtm");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn empty_store_has_no_nodes() {
        let store = VectorStore::new(3, false).unwrap();
        let idx = MaxIndex::build(&store).unwrap();
        assert_eq!(idx.node_count(), 0);
        assert!(idx.root().is_none());
    }
}
