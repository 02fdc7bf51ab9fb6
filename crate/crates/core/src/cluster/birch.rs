use super::{cf_merge, Cluster, ClusterFeature};
use crate::error::{Error, Result};

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Index of the entry whose centroid is nearest to `p`; ties go to the
/// lowest index.
fn nearest<'a>(centroids: impl Iterator<Item = [f64; 3]> + 'a, p: &[f64; 3]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.enumerate() {
        let d = dist2(&c, p);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

#[derive(Debug, Clone)]
struct LeafEntry {
    cf: ClusterFeature,
    members: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<LeafEntry>),
    Inner(Vec<(ClusterFeature, usize)>),
}

/// Splits `items` around the farthest pair of centroids, assigning every
/// item to the nearer seed (ties to the first seed).
fn split_by_seeds<T>(items: Vec<T>, centroid: impl Fn(&T) -> [f64; 3]) -> (Vec<T>, Vec<T>) {
    let cs: Vec<[f64; 3]> = items.iter().map(&centroid).collect();
    let (mut sa, mut sb, mut far) = (0, 1, -1.0);
    for a in 0..cs.len() {
        for b in a + 1..cs.len() {
            let d = dist2(&cs[a], &cs[b]);
            if d > far {
                (sa, sb, far) = (a, b, d);
            }
        }
    }
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (k, item) in items.into_iter().enumerate() {
        if k == sa {
            left.push(item);
        } else if k == sb {
            right.push(item);
        } else if dist2(&cs[k], &cs[sa]) <= dist2(&cs[k], &cs[sb]) {
            left.push(item);
        } else {
            right.push(item);
        }
    }
    (left, right)
}

/// A CF-tree. Leaf entries absorb a point when the merged radius stays within
/// `threshold`; leaves and inner nodes split when they exceed `branching`
/// entries. Points are inserted in the order given and never revisited, so
/// there is no global refinement pass: leaf entries are the final clusters.
#[derive(Debug, Clone)]
pub struct CfTree {
    nodes: Vec<Node>,
    root: usize,
    threshold: f64,
    branching: usize,
    points: usize,
}

impl CfTree {
    pub fn new(threshold: f64, branching: usize) -> Result<Self> {
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(Error::Argument("BIRCH threshold must be > 0".into()));
        }
        if branching < 2 {
            return Err(Error::Argument("BIRCH branching factor must be >= 2".into()));
        }
        Ok(CfTree { nodes: vec![Node::Leaf(Vec::new())], root: 0, threshold, branching, points: 0 })
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn insert(&mut self, id: usize, p: [f64; 3]) -> Result<()> {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("point {id} has a non-finite coordinate")));
        }
        if let Some((cf, sibling)) = self.insert_at(self.root, id, p) {
            let old = self.root;
            let old_cf = self.node_cf(old);
            self.nodes.push(Node::Inner(vec![(old_cf, old), (cf, sibling)]));
            self.root = self.nodes.len() - 1;
        }
        self.points += 1;
        Ok(())
    }

    fn node_cf(&self, idx: usize) -> ClusterFeature {
        let sum = |it: &mut dyn Iterator<Item = ClusterFeature>| it.reduce(|a, b| cf_merge(&a, &b));
        match &self.nodes[idx] {
            Node::Leaf(es) => sum(&mut es.iter().map(|e| e.cf)),
            Node::Inner(cs) => sum(&mut cs.iter().map(|c| c.0)),
        }
        .expect("tree nodes are never empty after the first insert")
    }

    /// Inserts below `idx`; returns the summary of a new sibling if `idx`
    /// had to split.
    fn insert_at(&mut self, idx: usize, id: usize, p: [f64; 3]) -> Option<(ClusterFeature, usize)> {
        let threshold = self.threshold;
        let branching = self.branching;
        match &mut self.nodes[idx] {
            Node::Leaf(entries) => {
                if !entries.is_empty() {
                    let k = nearest(entries.iter().map(|e| e.cf.centroid()), &p);
                    let mut merged = entries[k].cf;
                    merged.add_point(p);
                    if merged.radius() <= threshold {
                        entries[k].cf = merged;
                        entries[k].members.push(id);
                        return None;
                    }
                }
                entries.push(LeafEntry { cf: ClusterFeature::singleton(p), members: vec![id] });
                if entries.len() <= branching {
                    return None;
                }
                let all = std::mem::take(entries);
                let (left, right) = split_by_seeds(all, |e| e.cf.centroid());
                *entries = left;
                self.nodes.push(Node::Leaf(right));
                let sib = self.nodes.len() - 1;
                Some((self.node_cf(sib), sib))
            }
            Node::Inner(children) => {
                let k = nearest(children.iter().map(|c| c.0.centroid()), &p);
                let child = children[k].1;
                let split = self.insert_at(child, id, p);
                let child_cf = self.node_cf(child);
                let Node::Inner(children) = &mut self.nodes[idx] else { unreachable!() };
                children[k].0 = child_cf;
                if let Some(s) = split {
                    children.push(s);
                }
                if children.len() <= branching {
                    return None;
                }
                let all = std::mem::take(children);
                let (left, right) = split_by_seeds(all, |c| c.0.centroid());
                *children = left;
                self.nodes.push(Node::Inner(right));
                let sib = self.nodes.len() - 1;
                Some((self.node_cf(sib), sib))
            }
        }
    }

    pub fn depth(&self) -> usize {
        let mut d = 1;
        let mut idx = self.root;
        while let Node::Inner(cs) = &self.nodes[idx] {
            idx = cs[0].1;
            d += 1;
        }
        d
    }

    /// Leaf entries as clusters, ordered by smallest member id and numbered
    /// in that order.
    pub fn into_clusters(self) -> Vec<Cluster> {
        let mut out: Vec<Cluster> = self
            .nodes
            .into_iter()
            .filter_map(|n| match n {
                Node::Leaf(es) => Some(es),
                Node::Inner(_) => None,
            })
            .flatten()
            .map(|mut e| {
                e.members.sort_unstable();
                Cluster { id: 0, centroid: e.cf.centroid(), cf: e.cf, member_ids: e.members }
            })
            .collect();
        out.sort_by_key(|c| c.member_ids[0]);
        for (k, c) in out.iter_mut().enumerate() {
            c.id = k;
        }
        out
    }
}

/// One-pass BIRCH over `points` (Euclidean distance). Point `k` gets member
/// id `k`.
pub fn birch_cluster(points: &[[f64; 3]], threshold: f64, branching: usize) -> Result<Vec<Cluster>> {
    let mut tree = CfTree::new(threshold, branching)?;
    if points.is_empty() {
        return Err(Error::Argument("cannot cluster an empty point set".into()));
    }
    for (id, p) in points.iter().enumerate() {
        tree.insert(id, *p)?;
    }
    Ok(tree.into_clusters())
}
