//! k-nearest-neighbour graph construction over receiver coordinates, with a
//! kd-tree for the neighbour queries.
//!
//! Ties are broken by (distance, index) lexicographic order and neighbour
//! lists are stored sorted the same way; aggregation over such lists sums in
//! a permutation-stable order, which is what makes message passing exactly
//! permutation-equivariant on general-position inputs.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};
use crate::geom::Point2;

/// Undirected spatial graph from union-symmetrized k-NN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGraph {
    pub coords: Vec<Point2>,
    /// Per-node neighbour lists, sorted by (distance, index); no self loops.
    pub neighbors: Vec<Vec<u32>>,
    pub k: usize,
}

impl SpatialGraph {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Edge list (src < dst) with distances, for debug dumps.
    pub fn edges(&self) -> Vec<(u32, u32, f64)> {
        let mut edges = Vec::new();
        for (v, nbrs) in self.neighbors.iter().enumerate() {
            for &u in nbrs {
                if (v as u32) < u {
                    edges.push((v as u32, u, self.coords[v].dist(self.coords[u as usize])));
                }
            }
        }
        edges
    }
}

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        items: Vec<u32>,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

fn axis_coord(p: Point2, axis: usize) -> f64 {
    if axis == 0 {
        p.x
    } else {
        p.y
    }
}

fn build_node(coords: &[Point2], mut items: Vec<u32>, depth: usize) -> Node {
    if items.len() <= LEAF_SIZE {
        return Node::Leaf { items };
    }
    let axis = depth % 2;
    items.sort_by(|&a, &b| {
        axis_coord(coords[a as usize], axis)
            .partial_cmp(&axis_coord(coords[b as usize], axis))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mid = items.len() / 2;
    let right_items = items.split_off(mid);
    let value = axis_coord(coords[right_items[0] as usize], axis);
    Node::Split {
        axis,
        value,
        left: Box::new(build_node(coords, items, depth + 1)),
        right: Box::new(build_node(coords, right_items, depth + 1)),
    }
}

/// Fixed-capacity best list ordered by (distance², index).
struct BestList {
    k: usize,
    items: Vec<(f64, u32)>, // sorted ascending
}

impl BestList {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn worst(&self) -> Option<(f64, u32)> {
        if self.items.len() == self.k {
            self.items.last().copied()
        } else {
            None
        }
    }

    fn offer(&mut self, d2: f64, idx: u32) {
        if let Some((wd, wi)) = self.worst() {
            if (d2, idx) >= (wd, wi) {
                return;
            }
        }
        let pos = self
            .items
            .partition_point(|&(d, i)| (d, i) < (d2, idx));
        self.items.insert(pos, (d2, idx));
        if self.items.len() > self.k {
            self.items.pop();
        }
    }
}

fn query(node: &Node, coords: &[Point2], q: Point2, exclude: u32, best: &mut BestList) {
    match node {
        Node::Leaf { items } => {
            for &i in items {
                if i == exclude {
                    continue;
                }
                let d = coords[i as usize].sub(q);
                best.offer(d.dot(d), i);
            }
        }
        Node::Split {
            axis,
            value,
            left,
            right,
        } => {
            let qa = axis_coord(q, *axis);
            let (near, far) = if qa < *value {
                (left, right)
            } else {
                (right, left)
            };
            query(near, coords, q, exclude, best);
            let plane = qa - *value;
            let must_search_far = match best.worst() {
                // Equal plane distance can still hide an equal-distance,
                // smaller-index candidate, so only a strictly greater plane
                // gap prunes.
                Some((wd, _)) => plane * plane <= wd,
                None => true,
            };
            if must_search_far {
                query(far, coords, q, exclude, best);
            }
        }
    }
}

/// Build the union-symmetrized k-nearest-neighbour graph.
pub fn build_knn(coords: &[Point2], k: usize) -> Result<SpatialGraph> {
    let n = coords.len();
    if k == 0 {
        return Err(invalid_argument("k must be positive"));
    }
    if n <= k {
        return Err(invalid_argument(format!(
            "need more than k={k} points, got {n}"
        )));
    }
    {
        let mut sorted: Vec<(f64, f64)> = coords.iter().map(|p| (p.x, p.y)).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid_argument("duplicate coordinates"));
        }
    }

    let root = build_node(coords, (0..n as u32).collect(), 0);
    let outgoing: Vec<Vec<u32>> = (0..n)
        .map(|v| {
            let mut best = BestList::new(k);
            query(&root, coords, coords[v], v as u32, &mut best);
            best.items.iter().map(|&(_, i)| i).collect()
        })
        .collect();

    // Union symmetrization, then sort by (distance, index).
    let mut sets: Vec<std::collections::BTreeSet<u32>> =
        outgoing.iter().map(|l| l.iter().copied().collect()).collect();
    for (v, list) in outgoing.iter().enumerate() {
        for &u in list {
            sets[u as usize].insert(v as u32);
        }
    }
    let neighbors = sets
        .into_iter()
        .enumerate()
        .map(|(v, set)| {
            let mut list: Vec<u32> = set.into_iter().collect();
            list.sort_by(|&a, &b| {
                let da = coords[v].dist(coords[a as usize]);
                let db = coords[v].dist(coords[b as usize]);
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            });
            list
        })
        .collect();

    Ok(SpatialGraph {
        coords: coords.to_vec(),
        neighbors,
        k,
    })
}

/// Brute-force k-NN over all pairs: the oracle the kd-tree is checked
/// against in tests.
pub fn knn_brute_force(coords: &[Point2], k: usize) -> Vec<Vec<u32>> {
    let n = coords.len();
    (0..n)
        .map(|v| {
            let mut cand: Vec<(f64, u32)> = (0..n)
                .filter(|&u| u != v)
                .map(|u| {
                    let d = coords[v].sub(coords[u]);
                    (d.dot(d), u as u32)
                })
                .collect();
            cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cand.into_iter().take(k).map(|(_, u)| u).collect()
        })
        .collect()
}
