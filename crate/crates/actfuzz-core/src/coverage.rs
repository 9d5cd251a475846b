//! Activation-novelty coverage via nearest-neighbor search.
//!
//! The index stores every coverage vector the campaign has accepted and
//! answers one question: is a fresh vector farther than the threshold `L`
//! (Euclidean) from everything stored? "Farther" is strict — a vector at
//! distance exactly `L` is already covered.
//!
//! Two modes share this contract:
//!
//! * exact — a linear scan; the ground-truth oracle;
//! * approximate — a small forest of randomized space-partitioning trees
//!   built over a snapshot of the points, plus an insertion buffer that is
//!   always scanned exactly. The forest is rebuilt whenever the buffer
//!   outgrows its limit. Approximation errs one way only: a probe may
//!   overestimate the nearest distance (and so call a covered vector new),
//!   but any neighbor it does report is real, and neighbors still in the
//!   buffer are never missed.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::rng::Rng;
use crate::tensor::{euclidean_distance_unchecked, Vector};
use crate::Error;

/// How the index answers nearest-neighbor probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageMode {
    /// Linear scan over every stored vector; exact by construction.
    Exact,
    /// Randomized tree forest with a bounded number of distance checks.
    Approximate,
}

/// Tuning knobs for the approximate mode.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexParams {
    /// Number of randomized trees built over the point snapshot.
    pub trees: usize,
    /// Maximum points per tree leaf.
    pub leaf_size: usize,
    /// Distance computations allowed per probe (forest part only; the
    /// insertion buffer is always scanned in full).
    pub checks: usize,
    /// Forest rebuild fires when the insertion buffer exceeds this size.
    pub rebuild_buffer: usize,
    /// Split dimensions are drawn from this many top-variance dimensions.
    pub top_variance_dims: usize,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            trees: 4,
            leaf_size: 8,
            checks: 64,
            rebuild_buffer: 64,
            top_variance_dims: 5,
        }
    }
}

impl IndexParams {
    fn validate(&self) -> Result<(), Error> {
        if self.trees == 0 {
            return Err(Error::InvalidParameter { what: "index needs at least one tree" });
        }
        if self.leaf_size == 0 {
            return Err(Error::InvalidParameter { what: "leaf size must be positive" });
        }
        if self.checks == 0 {
            return Err(Error::InvalidParameter { what: "check budget must be positive" });
        }
        if self.top_variance_dims == 0 {
            return Err(Error::InvalidParameter { what: "need at least one candidate split dimension" });
        }
        Ok(())
    }
}

/// Result of probing the index with a coverage vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Novelty {
    /// True when the vector is new coverage: the index is empty or the
    /// nearest stored vector is strictly farther than the threshold.
    pub is_new: bool,
    /// Distance to the nearest stored vector found by the probe; infinite
    /// for an empty index. Approximate mode may overestimate this.
    pub nearest_distance: f64,
    /// Id of that nearest vector; ties resolve to the lowest id.
    pub nearest_id: Option<usize>,
}

#[derive(Debug, Clone)]
enum Node {
    Split { dim: u32, value: f32, left: u32, right: u32 },
    Leaf { start: u32, len: u32 },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
    ids: Vec<u32>,
}

#[derive(Debug, Clone)]
struct Forest {
    trees: Vec<Tree>,
}

/// Stored coverage vectors plus the novelty threshold.
#[derive(Debug, Clone)]
pub struct CoverageIndex {
    threshold: f64,
    mode: CoverageMode,
    params: IndexParams,
    /// Per-dimension multipliers applied to every vector on insertion;
    /// standardization expressed as a scale (means cancel in distances).
    scale: Option<Vec<f32>>,
    dim: Option<usize>,
    points: Vec<Vector>,
    /// Ids inserted since the last forest rebuild; scanned exactly.
    buffer: Vec<usize>,
    forest: Option<Forest>,
    rng: Rng,
}

impl CoverageIndex {
    /// Creates an exact-mode index.
    pub fn exact(threshold: f64) -> Result<Self, Error> {
        Self::new(threshold, CoverageMode::Exact, IndexParams::default(), 0)
    }

    /// Creates an approximate-mode index; `seed` drives tree randomization.
    pub fn approximate(threshold: f64, params: IndexParams, seed: u64) -> Result<Self, Error> {
        Self::new(threshold, CoverageMode::Approximate, params, seed)
    }

    fn new(
        threshold: f64,
        mode: CoverageMode,
        params: IndexParams,
        seed: u64,
    ) -> Result<Self, Error> {
        if !(threshold >= 0.0) || !threshold.is_finite() {
            return Err(Error::InvalidParameter { what: "coverage threshold must be finite and non-negative" });
        }
        params.validate()?;
        Ok(CoverageIndex {
            threshold,
            mode,
            params,
            scale: None,
            dim: None,
            points: Vec::new(),
            buffer: Vec::new(),
            forest: None,
            rng: Rng::new(seed),
        })
    }

    /// The novelty threshold `L`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// The probe mode.
    pub fn mode(&self) -> CoverageMode {
        self.mode
    }

    /// Number of stored vectors.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when nothing has been inserted yet.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The stored vectors, id-ordered, as kept internally (scaled when a
    /// dimension scale is active). Used for snapshot persistence.
    pub fn stored(&self) -> &[Vector] {
        &self.points
    }

    /// Installs per-dimension multipliers applied to all future insertions
    /// and probes, fixing the index dimension. Only allowed while empty.
    pub fn set_dimension_scale(&mut self, scale: Vec<f32>) -> Result<(), Error> {
        if !self.points.is_empty() {
            return Err(Error::InvalidParameter { what: "dimension scale must be set before any insertion" });
        }
        if scale.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidParameter { what: "dimension scale entries must be positive and finite" });
        }
        if let Some(d) = self.dim {
            if scale.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: scale.len() });
            }
        }
        self.dim = Some(scale.len());
        self.scale = Some(scale);
        Ok(())
    }

    fn check_dim(&self, v: &[f32]) -> Result<(), Error> {
        if let Some(d) = self.dim {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
        }
        Ok(())
    }

    fn transform(&self, v: &[f32]) -> Vector {
        match &self.scale {
            None => Vector::from_vec(v.to_vec()),
            Some(scale) => v.iter().zip(scale).map(|(&x, &s)| x * s).collect(),
        }
    }

    /// Asks whether `v` would be new coverage, without inserting it.
    ///
    /// An empty index reports every vector as new at infinite distance.
    pub fn probe(&self, v: &[f32]) -> Result<Novelty, Error> {
        self.check_dim(v)?;
        if self.points.is_empty() {
            return Ok(Novelty { is_new: true, nearest_distance: f64::INFINITY, nearest_id: None });
        }
        let q = self.transform(v);
        let best = match self.mode {
            CoverageMode::Exact => self.scan_ids(q.as_slice(), (0..self.points.len()).map(|i| i)),
            CoverageMode::Approximate => {
                let mut best = self.scan_ids(q.as_slice(), self.buffer.iter().copied());
                if let Some(forest) = &self.forest {
                    let from_forest = self.search_forest(forest, q.as_slice());
                    best = merge_best(best, from_forest);
                }
                best
            }
        };
        match best {
            None => Ok(Novelty { is_new: true, nearest_distance: f64::INFINITY, nearest_id: None }),
            Some((d, id)) => {
                Ok(Novelty { is_new: d > self.threshold, nearest_distance: d, nearest_id: Some(id) })
            }
        }
    }

    /// Stores `v` and returns its id (ids count up from zero).
    ///
    /// The first insertion fixes the index dimension. In approximate mode
    /// the vector lands in the exactly-scanned buffer; the tree forest is
    /// rebuilt over all points once the buffer exceeds its limit.
    pub fn insert(&mut self, v: &[f32]) -> Result<usize, Error> {
        self.check_dim(v)?;
        if self.dim.is_none() {
            self.dim = Some(v.len());
        }
        let id = self.points.len();
        let stored = self.transform(v);
        self.points.push(stored);
        if self.mode == CoverageMode::Approximate {
            self.buffer.push(id);
            if self.buffer.len() > self.params.rebuild_buffer {
                self.rebuild();
            }
        }
        Ok(id)
    }

    fn scan_ids<I: Iterator<Item = usize>>(&self, q: &[f32], ids: I) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for id in ids {
            let d = euclidean_distance_unchecked(q, self.points[id].as_slice());
            best = merge_best(best, Some((d, id)));
        }
        best
    }

    fn rebuild(&mut self) {
        let mut trees = Vec::with_capacity(self.params.trees);
        for _ in 0..self.params.trees {
            trees.push(self.build_tree());
        }
        self.forest = Some(Forest { trees });
        self.buffer.clear();
    }

    fn build_tree(&mut self) -> Tree {
        let mut ids: Vec<u32> = (0..self.points.len() as u32).collect();
        let mut nodes = Vec::new();
        // Split the id range in place; nodes reference sub-ranges of `ids`.
        let n = ids.len();
        self.build_node(&mut nodes, &mut ids, 0, n);
        Tree { nodes, ids }
    }

    /// Builds the subtree over `ids[lo..hi]` and returns its node index.
    fn build_node(&mut self, nodes: &mut Vec<Node>, ids: &mut Vec<u32>, lo: usize, hi: usize) -> u32 {
        let count = hi - lo;
        if count <= self.params.leaf_size {
            nodes.push(Node::Leaf { start: lo as u32, len: count as u32 });
            return (nodes.len() - 1) as u32;
        }
        let dim_count = self.dim.unwrap_or(0);
        // Mean and variance per dimension over this subset.
        let mut mean = vec![0.0f64; dim_count];
        for &id in &ids[lo..hi] {
            for (m, &x) in mean.iter_mut().zip(self.points[id as usize].as_slice()) {
                *m += x as f64;
            }
        }
        for m in &mut mean {
            *m /= count as f64;
        }
        let mut var = vec![0.0f64; dim_count];
        for &id in &ids[lo..hi] {
            for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(self.points[id as usize].as_slice()) {
                let d = x as f64 - m;
                *v += d * d;
            }
        }
        // Candidate split dimensions: the highest-variance few.
        let mut order: Vec<usize> = (0..dim_count).collect();
        order.sort_by(|&a, &b| var[b].partial_cmp(&var[a]).unwrap_or(core::cmp::Ordering::Equal));
        let candidates = order.len().min(self.params.top_variance_dims);
        let dim = order[self.rng.index(candidates)];
        let split = mean[dim] as f32;

        // Partition: strictly-below goes left, the rest right.
        let mut sorted: Vec<u32> = Vec::with_capacity(count);
        sorted.extend(ids[lo..hi].iter().copied().filter(|&id| self.points[id as usize][dim as usize] < split));
        let left_count = sorted.len();
        sorted.extend(ids[lo..hi].iter().copied().filter(|&id| self.points[id as usize][dim as usize] >= split));
        ids[lo..hi].copy_from_slice(&sorted);

        if left_count == 0 || left_count == count {
            // Degenerate data (e.g., duplicated points): stop splitting.
            nodes.push(Node::Leaf { start: lo as u32, len: count as u32 });
            return (nodes.len() - 1) as u32;
        }

        let index = nodes.len();
        nodes.push(Node::Split { dim: dim as u32, value: split, left: 0, right: 0 });
        let left = self.build_node(nodes, ids, lo, lo + left_count);
        let right = self.build_node(nodes, ids, lo + left_count, hi);
        if let Node::Split { left: l, right: r, .. } = &mut nodes[index] {
            *l = left;
            *r = right;
        }
        index as u32
    }

    /// Best-bin-first search across all trees under the check budget.
    fn search_forest(&self, forest: &Forest, q: &[f32]) -> Option<(f64, usize)> {
        let mut visited = vec![0u64; (self.points.len() + 63) / 64];
        let mut best: Option<(f64, usize)> = None;
        let mut checks = 0usize;
        // Pending far branches, nearest boundary first. Distances are
        // non-negative, so their bit patterns order correctly as integers.
        let mut heap: BinaryHeap<Reverse<(u64, u32, u32)>> = BinaryHeap::new();

        // The top-level node of every tree sits at index 0.
        for t in 0..forest.trees.len() {
            self.descend(forest, t as u32, 0, q, &mut visited, &mut best, &mut checks, &mut heap);
        }
        while checks < self.params.checks {
            let Some(Reverse((_, t, node))) = heap.pop() else { break };
            self.descend(forest, t, node, q, &mut visited, &mut best, &mut checks, &mut heap);
        }
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        forest: &Forest,
        tree_index: u32,
        mut node: u32,
        q: &[f32],
        visited: &mut [u64],
        best: &mut Option<(f64, usize)>,
        checks: &mut usize,
        heap: &mut BinaryHeap<Reverse<(u64, u32, u32)>>,
    ) {
        let tree = &forest.trees[tree_index as usize];
        loop {
            match tree.nodes[node as usize] {
                Node::Split { dim, value, left, right } => {
                    let x = q[dim as usize];
                    let (near, far) = if x < value { (left, right) } else { (right, left) };
                    let boundary = (x as f64 - value as f64).abs();
                    heap.push(Reverse((boundary.to_bits(), tree_index, far)));
                    node = near;
                }
                Node::Leaf { start, len } => {
                    for &id in &tree.ids[start as usize..(start + len) as usize] {
                        let id = id as usize;
                        let (word, bit) = (id / 64, 1u64 << (id % 64));
                        if visited[word] & bit != 0 {
                            continue;
                        }
                        visited[word] |= bit;
                        let d = euclidean_distance_unchecked(q, self.points[id].as_slice());
                        *checks += 1;
                        *best = merge_best(*best, Some((d, id)));
                        if *checks >= self.params.checks {
                            return;
                        }
                    }
                    return;
                }
            }
        }
    }
}

/// Keeps the closer candidate; equal distances resolve to the lower id.
fn merge_best(a: Option<(f64, usize)>, b: Option<(f64, usize)>) -> Option<(f64, usize)> {
    match (a, b) {
        (None, b) => b,
        (a, None) => a,
        (Some((da, ia)), Some((db, ib))) => {
            if db < da || (db == da && ib < ia) {
                Some((db, ib))
            } else {
                Some((da, ia))
            }
        }
    }
}

/// Calibrates the novelty threshold from seed coverage vectors: the 5th
/// percentile (nearest-rank) of all pairwise Euclidean distances.
///
/// Fewer than two vectors leave nothing to measure; the threshold falls back
/// to zero, meaning only exact duplicates count as covered.
pub fn threshold_from_seed_coverage(vectors: &[Vector]) -> Result<f64, Error> {
    if vectors.len() < 2 {
        return Ok(0.0);
    }
    let dim = vectors[0].len();
    let mut distances = Vec::with_capacity(vectors.len() * (vectors.len() - 1) / 2);
    for i in 0..vectors.len() {
        if vectors[i].len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: vectors[i].len() });
        }
        for j in (i + 1)..vectors.len() {
            distances.push(euclidean_distance_unchecked(vectors[i].as_slice(), vectors[j].as_slice()));
        }
    }
    distances.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    // Nearest-rank percentile: the smallest value with at least 5% of the
    // mass at or below it.
    let m = distances.len();
    let rank = (crate::math::ceil(0.05 * m as f64) as usize).max(1);
    Ok(distances[rank - 1])
}
