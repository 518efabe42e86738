use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Label-transfer protocol from voxels to query points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferProtocol {
    Nearest,
    MajorityKnn(usize),
}

/// Candidate ordered by squared distance, then index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    d2: f64,
    idx: usize,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

enum Node {
    Leaf(Vec<usize>),
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// Static 3-d tree over a point set.
pub struct KdTree<'a> {
    points: &'a [[f64; 3]],
    root: Node,
}

const LEAF_SIZE: usize = 8;

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [[f64; 3]]) -> Self {
        let idx: Vec<usize> = (0..points.len()).collect();
        Self { points, root: Self::build(points, idx) }
    }

    fn build(points: &[[f64; 3]], mut idx: Vec<usize>) -> Node {
        if idx.len() <= LEAF_SIZE {
            return Node::Leaf(idx);
        }
        let spread = |k: usize| {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(points[i][k]), hi.max(points[i][k]))
            });
            hi - lo
        };
        let axis = (0..3).max_by(|&a, &b| spread(a).total_cmp(&spread(b))).unwrap_or(0);
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
        let value = points[idx[mid]][axis];
        let right = idx.split_off(mid);
        Node::Split {
            axis,
            value,
            left: Box::new(Self::build(points, idx)),
            right: Box::new(Self::build(points, right)),
        }
    }

    /// Indices of the `k` nearest points, ordered by (distance, index).
    pub fn nearest(&self, query: [f64; 3], k: usize) -> Vec<usize> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(&self.root, query, k, &mut heap);
        heap.into_sorted_vec().into_iter().map(|c| c.idx).collect()
    }

    fn search(&self, node: &Node, q: [f64; 3], k: usize, heap: &mut BinaryHeap<Cand>) {
        match node {
            Node::Leaf(idx) => {
                for &i in idx {
                    let p = self.points[i];
                    let d2 = (0..3).map(|a| (p[a] - q[a]).powi(2)).sum();
                    let c = Cand { d2, idx: i };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("full heap") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // equal distances must still be visited for the index tie-break
                if heap.len() < k || diff * diff <= heap.peek().expect("full heap").d2 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

fn majority(labels: impl Iterator<Item = u32>) -> u32 {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map_or(0, |(l, _)| l)
}

/// Class label per query point from the voxel labels: the nearest voxel's,
/// or the most common among the `k` nearest (ties to the smaller class).
pub fn semseg_transfer(
    points: &[[f64; 3]],
    voxel_positions: &[[f64; 3]],
    voxel_labels: &[u32],
    protocol: TransferProtocol,
) -> Result<Vec<u32>, EvalError> {
    if voxel_positions.is_empty() {
        return Err(EvalError::EmptyVoxelSet);
    }
    if voxel_positions.len() != voxel_labels.len() {
        return Err(EvalError::LengthMismatch { pred: voxel_labels.len(), gt: voxel_positions.len() });
    }
    let k = match protocol {
        TransferProtocol::Nearest => 1,
        TransferProtocol::MajorityKnn(k) if k >= 1 => k,
        TransferProtocol::MajorityKnn(_) => return Err(EvalError::BadK),
    };
    let tree = KdTree::new(voxel_positions);
    Ok(points
        .iter()
        .map(|&p| majority(tree.nearest(p, k).into_iter().map(|i| voxel_labels[i])))
        .collect())
}
