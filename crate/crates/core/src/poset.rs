//! Finite dyadic trees, their products, and order ideals.
//!
//! A tree of depth `N` holds the dyadic intervals of generations `0..=N`.
//! The interval of generation `j` and offset `k` lives at dense index
//! `2^j + k - 1` (heap order shifted to start at zero), so the parent of `i`
//! is `(i - 1) / 2` and its children are `2i + 1`, `2i + 2`.
//!
//! The order is inclusion: `a <= b` when interval `a` is contained in `b`.
//! The root is the unique maximal element, leaves are minimal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported depth on a single axis.
pub const MAX_AXIS_DEPTH: u32 = 24;
/// Largest number of bi-nodes a dense topology may materialize.
pub const MAX_DENSE_NODES: usize = 1 << 24;
/// Largest poset handed to the brute-force down-set enumerator.
pub const MAX_ENUMERATION_NODES: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeTopology {
    depth: u32,
}

impl TreeTopology {
    pub fn new(depth: u32) -> Result<Self> {
        if depth > MAX_AXIS_DEPTH {
            return Err(Error::Size(format!(
                "tree depth {depth} exceeds cap {MAX_AXIS_DEPTH}"
            )));
        }
        Ok(Self { depth })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        (1usize << (self.depth + 1)) - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, generation: u32, offset: usize) -> Option<usize> {
        if generation > self.depth || offset >= (1usize << generation) {
            return None;
        }
        Some((1usize << generation) + offset - 1)
    }

    pub fn generation(&self, node: usize) -> u32 {
        usize::BITS - 1 - (node + 1).leading_zeros()
    }

    pub fn offset(&self, node: usize) -> usize {
        let g = self.generation(node);
        node + 1 - (1usize << g)
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        (node > 0).then(|| (node - 1) / 2)
    }

    pub fn children(&self, node: usize) -> Option<[usize; 2]> {
        (self.generation(node) < self.depth).then(|| [2 * node + 1, 2 * node + 2])
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.generation(node) == self.depth
    }

    /// Leaves in increasing offset order.
    pub fn leaves(&self) -> std::ops::Range<usize> {
        let first = (1usize << self.depth) - 1;
        first..self.len()
    }

    /// `node` itself followed by each strict ancestor up to the root.
    pub fn ancestors(&self, node: usize) -> Ancestors {
        Ancestors { next: Some(node) }
    }

    /// `a <= b`: interval `a` is contained in interval `b`.
    pub fn le(&self, a: usize, b: usize) -> bool {
        let (ga, gb) = (self.generation(a), self.generation(b));
        ga >= gb && ((a + 1) >> (ga - gb)) == b + 1
    }

    /// Smallest common ancestor.
    pub fn lca(&self, a: usize, b: usize) -> usize {
        let (mut ha, mut hb) = (a + 1, b + 1);
        let (ga, gb) = (self.generation(a), self.generation(b));
        if ga > gb {
            ha >>= ga - gb;
        } else {
            hb >>= gb - ga;
        }
        while ha != hb {
            ha >>= 1;
            hb >>= 1;
        }
        ha - 1
    }

    /// Ancestor of `node` at the given (coarser or equal) generation.
    pub fn ancestor_at(&self, node: usize, generation: u32) -> usize {
        let g = self.generation(node);
        debug_assert!(generation <= g);
        ((node + 1) >> (g - generation)) - 1
    }
}

pub struct Ancestors {
    next: Option<usize>,
}

impl Iterator for Ancestors {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let cur = self.next?;
        self.next = (cur > 0).then(|| (cur - 1) / 2);
        Some(cur)
    }
}

/// A node of the bi-tree: a pair of dense per-axis indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BiNode {
    pub x: usize,
    pub y: usize,
}

impl BiNode {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// Generation/offset address of a dyadic rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RectAddress {
    pub gen_x: u32,
    pub off_x: usize,
    pub gen_y: u32,
    pub off_y: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BiTreeTopology {
    pub tree_x: TreeTopology,
    pub tree_y: TreeTopology,
}

impl BiTreeTopology {
    pub fn new(depth_x: u32, depth_y: u32) -> Result<Self> {
        let tree_x = TreeTopology::new(depth_x)?;
        let tree_y = TreeTopology::new(depth_y)?;
        let n = tree_x.len().checked_mul(tree_y.len());
        match n {
            Some(n) if n <= MAX_DENSE_NODES => Ok(Self { tree_x, tree_y }),
            _ => Err(Error::Size(format!(
                "bi-tree of depths ({depth_x},{depth_y}) exceeds the dense cap of {MAX_DENSE_NODES} nodes"
            ))),
        }
    }

    pub fn depths(&self) -> (u32, u32) {
        (self.tree_x.depth(), self.tree_y.depth())
    }

    pub fn len(&self) -> usize {
        self.tree_x.len() * self.tree_y.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, node: BiNode) -> usize {
        node.x * self.tree_y.len() + node.y
    }

    pub fn node(&self, index: usize) -> BiNode {
        let ny = self.tree_y.len();
        BiNode::new(index / ny, index % ny)
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn address(&self, index: usize) -> RectAddress {
        let b = self.node(index);
        RectAddress {
            gen_x: self.tree_x.generation(b.x),
            off_x: self.tree_x.offset(b.x),
            gen_y: self.tree_y.generation(b.y),
            off_y: self.tree_y.offset(b.y),
        }
    }

    pub fn index_of(&self, addr: RectAddress) -> Option<usize> {
        let x = self.tree_x.index(addr.gen_x, addr.off_x)?;
        let y = self.tree_y.index(addr.gen_y, addr.off_y)?;
        Some(self.index(BiNode::new(x, y)))
    }

    /// Up to two parents, one per axis.
    pub fn parents(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let b = self.node(index);
        let px = self.tree_x.parent(b.x).map(|x| self.index(BiNode::new(x, b.y)));
        let py = self.tree_y.parent(b.y).map(|y| self.index(BiNode::new(b.x, y)));
        px.into_iter().chain(py)
    }

    /// Up to four children: the maximal elements strictly below `index`.
    pub fn children(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let b = self.node(index);
        let cx = self
            .tree_x
            .children(b.x)
            .into_iter()
            .flatten()
            .map(move |x| self.index(BiNode::new(x, b.y)));
        let cy = self
            .tree_y
            .children(b.y)
            .into_iter()
            .flatten()
            .map(move |y| self.index(BiNode::new(b.x, y)));
        cx.chain(cy)
    }

    pub fn le(&self, a: usize, b: usize) -> bool {
        let (a, b) = (self.node(a), self.node(b));
        self.tree_x.le(a.x, b.x) && self.tree_y.le(a.y, b.y)
    }

    /// Least common upper bound; its up-set is the set of common ancestors.
    pub fn lca(&self, a: usize, b: usize) -> usize {
        let (a, b) = (self.node(a), self.node(b));
        self.index(BiNode::new(self.tree_x.lca(a.x, b.x), self.tree_y.lca(a.y, b.y)))
    }

    pub fn is_boundary(&self, index: usize) -> bool {
        let b = self.node(index);
        self.tree_x.is_leaf(b.x) && self.tree_y.is_leaf(b.y)
    }

    pub fn boundary(&self) -> impl Iterator<Item = usize> + '_ {
        self.tree_x
            .leaves()
            .flat_map(move |x| self.tree_y.leaves().map(move |y| self.index(BiNode::new(x, y))))
    }

    pub fn boundary_len(&self) -> usize {
        (1usize << self.tree_x.depth()) * (1usize << self.tree_y.depth())
    }

    /// Ancestor grid of `index`: entry `(i, j)` is the ancestor `i` steps up
    /// in x and `j` steps up in y; row-major with `cols = gen_y + 1`.
    pub fn ancestor_grid(&self, index: usize) -> AncestorGrid {
        let b = self.node(index);
        let xs: Vec<usize> = self.tree_x.ancestors(b.x).collect();
        let ys: Vec<usize> = self.tree_y.ancestors(b.y).collect();
        let mut nodes = Vec::with_capacity(xs.len() * ys.len());
        for &x in &xs {
            for &y in &ys {
                nodes.push(self.index(BiNode::new(x, y)));
            }
        }
        AncestorGrid {
            rows: xs.len(),
            cols: ys.len(),
            nodes,
        }
    }

    pub fn ancestors(&self, index: usize) -> Vec<usize> {
        self.ancestor_grid(index).nodes
    }

    pub fn descendants(&self, index: usize) -> Vec<usize> {
        (0..self.len()).filter(|&a| self.le(a, index)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct AncestorGrid {
    pub rows: usize,
    pub cols: usize,
    pub nodes: Vec<usize>,
}

impl AncestorGrid {
    pub fn at(&self, i: usize, j: usize) -> usize {
        self.nodes[i * self.cols + j]
    }
}

/// Order ideal of a bi-tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DownSet {
    mask: Vec<bool>,
    generators: Vec<usize>,
}

impl DownSet {
    pub fn empty(topo: &BiTreeTopology) -> Self {
        Self {
            mask: vec![false; topo.len()],
            generators: Vec::new(),
        }
    }

    pub fn full(topo: &BiTreeTopology) -> Self {
        Self {
            mask: vec![true; topo.len()],
            generators: vec![topo.root()],
        }
    }

    /// Down-set generated by arbitrary nodes.
    pub fn generated_by(topo: &BiTreeTopology, nodes: &[usize]) -> Self {
        let mut mask = vec![false; topo.len()];
        for &n in nodes {
            mask[n] = true;
        }
        // parents precede children in dense order
        for i in 0..topo.len() {
            if !mask[i] && topo.parents(i).any(|p| mask[p]) {
                mask[i] = true;
            }
        }
        let generators = maximal_elements(topo, &mask);
        Self { mask, generators }
    }

    pub fn from_mask(topo: &BiTreeTopology, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != topo.len() {
            return Err(Error::Parameter("mask length mismatch".into()));
        }
        if let Some(bad) = (0..topo.len()).find(|&i| mask[i] && topo.children(i).any(|c| !mask[c])) {
            return Err(Error::Parameter(format!(
                "mask is not downward closed at node {bad}"
            )));
        }
        let generators = maximal_elements(topo, &mask);
        Ok(Self { mask, generators })
    }

    pub fn contains(&self, index: usize) -> bool {
        self.mask[index]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn is_closed(&self, topo: &BiTreeTopology) -> bool {
        (0..topo.len()).all(|i| !self.mask[i] || topo.children(i).all(|c| self.mask[c]))
    }
}

/// Order filter of a bi-tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpSet {
    mask: Vec<bool>,
    generators: Vec<usize>,
}

impl UpSet {
    pub fn from_mask(topo: &BiTreeTopology, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != topo.len() {
            return Err(Error::Parameter("mask length mismatch".into()));
        }
        if let Some(bad) = (0..topo.len()).find(|&i| mask[i] && topo.parents(i).any(|p| !mask[p])) {
            return Err(Error::Parameter(format!(
                "mask is not upward closed at node {bad}"
            )));
        }
        let generators = (0..topo.len())
            .filter(|&i| mask[i] && topo.children(i).all(|c| !mask[c]))
            .collect();
        Ok(Self { mask, generators })
    }

    pub fn contains(&self, index: usize) -> bool {
        self.mask[index]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }
}

fn maximal_elements(topo: &BiTreeTopology, mask: &[bool]) -> Vec<usize> {
    (0..topo.len())
        .filter(|&i| mask[i] && topo.parents(i).all(|p| !mask[p]))
        .collect()
}

/// Every down-set of a small bi-tree, each exactly once, starting with `∅`.
pub fn enumerate_down_sets(topo: &BiTreeTopology) -> Result<DownSetIter> {
    let n = topo.len();
    if n > MAX_ENUMERATION_NODES {
        return Err(Error::Size(format!(
            "down-set enumeration needs at most {MAX_ENUMERATION_NODES} bi-nodes, got {n}"
        )));
    }
    // decisions run from the last dense index down, so children are settled
    // before their parents
    let child_masks = (0..n)
        .map(|i| topo.children(i).fold(0u32, |m, c| m | (1 << c)))
        .collect();
    Ok(DownSetIter {
        topo: *topo,
        child_masks,
        stack: vec![(n, 0)],
    })
}

pub struct DownSetIter {
    topo: BiTreeTopology,
    child_masks: Vec<u32>,
    // (number of undecided nodes, mask so far)
    stack: Vec<(usize, u32)>,
}

impl DownSetIter {
    /// Next closed mask as a raw bit set (bit `i` = dense index `i`).
    pub fn next_bits(&mut self) -> Option<u32> {
        while let Some((remaining, bits)) = self.stack.pop() {
            if remaining == 0 {
                return Some(bits);
            }
            let node = remaining - 1;
            let children = self.child_masks[node];
            if bits & children == children {
                self.stack.push((node, bits | (1 << node)));
            }
            self.stack.push((node, bits));
        }
        None
    }
}

impl Iterator for DownSetIter {
    type Item = DownSet;

    fn next(&mut self) -> Option<DownSet> {
        let bits = self.next_bits()?;
        let mask = (0..self.topo.len()).map(|i| bits & (1 << i) != 0).collect::<Vec<bool>>();
        let generators = maximal_elements(&self.topo, &mask);
        Some(DownSet { mask, generators })
    }
}
