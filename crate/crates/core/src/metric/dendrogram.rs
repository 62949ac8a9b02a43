use crate::error::{Error, Result};

use super::{DistanceMatrix, MetricSpace};

/// One node of a [`Dendrogram`]. Leaves carry the 0-based point they stand for.
#[derive(Debug, Clone, PartialEq)]
pub struct DendrogramNode {
    pub height: f64,
    pub children: Vec<usize>,
    pub point: Option<usize>,
}

impl DendrogramNode {
    pub fn leaf(point: usize) -> Self {
        DendrogramNode {
            height: 0.0,
            children: Vec::new(),
            point: Some(point),
        }
    }

    pub fn internal(height: f64, children: Vec<usize>) -> Self {
        DendrogramNode {
            height,
            children,
            point: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.point.is_some()
    }
}

/// Rooted tree whose leaves are the points; the distance of two points is the
/// height of their lowest common ancestor.
///
/// LCA queries are answered in O(1) from a sparse table over the Euler tour.
#[derive(Debug, Clone)]
pub struct Dendrogram {
    nodes: Vec<DendrogramNode>,
    root: usize,
    leaf_node: Vec<usize>,
    lca: EulerLca,
}

impl PartialEq for Dendrogram {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.root == other.root
    }
}

impl Dendrogram {
    /// Checks the structure and builds the LCA index.
    ///
    /// Requirements: the nodes reachable from `root` form a tree covering every
    /// node; leaves name each point `0..n` exactly once; internal nodes have at
    /// least two children; heights are finite, leaves sit at 0 and every
    /// parent is strictly higher than each of its children.
    pub fn new(nodes: Vec<DendrogramNode>, root: usize) -> Result<Self> {
        if root >= nodes.len() {
            return Err(Error::format("dendrogram root index out of range"));
        }
        let n = nodes.iter().filter(|node| node.is_leaf()).count();
        if n == 0 {
            return Err(Error::format("dendrogram has no leaves"));
        }
        let mut leaf_node = vec![usize::MAX; n];
        let mut visited = vec![false; nodes.len()];
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut visited[v], true) {
                return Err(Error::format(format!("node {v} is reachable twice; not a tree")));
            }
            let node = &nodes[v];
            if !node.height.is_finite() {
                return Err(Error::format(format!("node {v} has a non-finite height")));
            }
            match node.point {
                Some(p) => {
                    if !node.children.is_empty() {
                        return Err(Error::format(format!("leaf for point {} has children", p + 1)));
                    }
                    if node.height != 0.0 {
                        return Err(Error::format(format!("leaf for point {} has non-zero height", p + 1)));
                    }
                    if p >= n {
                        return Err(Error::format(format!(
                            "leaf label p{} out of range for {n} leaves",
                            p + 1
                        )));
                    }
                    if leaf_node[p] != usize::MAX {
                        return Err(Error::format(format!("point p{} appears twice", p + 1)));
                    }
                    leaf_node[p] = v;
                }
                None => {
                    if node.children.len() < 2 {
                        return Err(Error::format(format!(
                            "internal node {v} has {} child(ren); at least 2 required",
                            node.children.len()
                        )));
                    }
                    for &c in &node.children {
                        if c >= nodes.len() {
                            return Err(Error::format(format!("child index {c} out of range")));
                        }
                        if nodes[c].height >= node.height {
                            return Err(Error::format(format!(
                                "heights must strictly increase towards the root: child {} >= parent {}",
                                nodes[c].height, node.height
                            )));
                        }
                        stack.push(c);
                    }
                }
            }
        }
        if let Some(v) = visited.iter().position(|&seen| !seen) {
            return Err(Error::format(format!("node {v} is not reachable from the root")));
        }
        let lca = EulerLca::build(&nodes, root);
        Ok(Dendrogram {
            nodes,
            root,
            leaf_node,
            lca,
        })
    }

    /// A single point.
    pub fn singleton() -> Self {
        Self::new(vec![DendrogramNode::leaf(0)], 0).expect("singleton is well formed")
    }

    pub fn nodes(&self) -> &[DendrogramNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn to_matrix(&self) -> DistanceMatrix {
        DistanceMatrix::from_fn(self.len(), |i, j| self.distance(i, j))
            .expect("dendrogram distances are finite and non-negative")
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let nodes = self
            .nodes
            .iter()
            .map(|node| DendrogramNode {
                height: node.height * factor,
                ..node.clone()
            })
            .collect();
        Self::new(nodes, self.root).expect("positive scaling preserves structure")
    }
}

impl MetricSpace for Dendrogram {
    fn len(&self) -> usize {
        self.leaf_node.len()
    }

    #[inline]
    fn distance(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let anc = self.lca.query(self.leaf_node[a], self.leaf_node[b]);
        self.nodes[anc].height
    }
}

/// Euler tour plus sparse table of minimum-depth positions.
#[derive(Debug, Clone)]
struct EulerLca {
    first: Vec<u32>,
    tour: Vec<u32>,
    depth: Vec<u32>,
    table: Vec<Vec<u32>>,
}

impl EulerLca {
    fn build(nodes: &[DendrogramNode], root: usize) -> Self {
        let mut first = vec![u32::MAX; nodes.len()];
        let mut tour = Vec::with_capacity(2 * nodes.len());
        let mut depth = Vec::with_capacity(2 * nodes.len());
        // (node, depth, next child to visit)
        let mut stack: Vec<(usize, u32, usize)> = vec![(root, 0, 0)];
        while let Some(top) = stack.last_mut() {
            let (v, d, next) = *top;
            if next == 0 {
                first[v] = tour.len() as u32;
            }
            tour.push(v as u32);
            depth.push(d);
            if next < nodes[v].children.len() {
                top.2 += 1;
                stack.push((nodes[v].children[next], d + 1, 0));
            } else {
                // the parent is re-emitted on its next iteration
                stack.pop();
            }
        }

        let len = tour.len();
        let mut table = vec![(0..len as u32).collect::<Vec<_>>()];
        let mut span = 1;
        while 2 * span <= len {
            let prev = table.last().unwrap();
            let row = (0..=len - 2 * span)
                .map(|i| {
                    let (l, r) = (prev[i], prev[i + span]);
                    if depth[r as usize] < depth[l as usize] {
                        r
                    } else {
                        l
                    }
                })
                .collect();
            table.push(row);
            span *= 2;
        }
        EulerLca {
            first,
            tour,
            depth,
            table,
        }
    }

    fn query(&self, u: usize, v: usize) -> usize {
        let (mut l, mut r) = (self.first[u] as usize, self.first[v] as usize);
        if l > r {
            std::mem::swap(&mut l, &mut r);
        }
        let level = (usize::BITS - 1 - (r - l + 1).leading_zeros()) as usize;
        let row = &self.table[level];
        let a = row[l];
        let b = row[r + 1 - (1 << level)];
        let best = if self.depth[b as usize] < self.depth[a as usize] {
            b
        } else {
            a
        };
        self.tour[best as usize] as usize
    }
}
