//! Matrix reduction for the Rips filtration, H1 only.
//!
//! Simplices are ordered by (filtration value, dimension, vertex order).
//! The reduction runs on the anti-transposed boundary matrix (the coboundary
//! of the edges, columns in reverse filtration order), which yields exactly
//! the same persistence pairs as reducing the boundary itself but with far
//! less fill-in on clique filtrations. Clearing takes its usual form here:
//! edges that kill a component (found with a union-find sweep over dimension
//! 0) can never create a loop, so their columns are skipped outright.
//! Working columns live in a lazy binary heap so that column additions cost
//! the length of the added column, not of the accumulated one; cofacets are
//! generated on demand and triangles are never enumerated up front.
//!
//! `reference::rips_persistence_h1_reference` keeps the textbook
//! boundary-side reduction as an independent cross-check.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::DMatrix;

use super::{enclosing_radius, is_prime, PersistenceDiagram, PersistencePair};
use crate::error::{Error, Result};

/// Where to truncate the filtration.
#[derive(Debug, Clone, Copy)]
pub enum RipsThreshold {
    /// The enclosing radius: the smallest scale guaranteed to kill every
    /// loop, and the cheapest complete choice.
    Enclosing,
    Value(f64),
}

#[derive(Clone, Copy)]
struct TriKey {
    value: f64,
    v: [u32; 3],
}

/// Ascending filtration order: value, then lexicographic vertices.
fn filtration_cmp(a: &TriKey, b: &TriKey) -> Ordering {
    a.value.total_cmp(&b.value).then(a.v.cmp(&b.v))
}

/// Heap entry ordered so that the heap maximum is the OLDEST cofacet, which
/// is the pivot of the anti-transposed reduction.
struct HeapEntry {
    key: TriKey,
    coeff: u64,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        filtration_cmp(&self.key, &other.key) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        filtration_cmp(&other.key, &self.key)
    }
}

/// A working column: lazily merged, possibly holding duplicate keys.
struct LazyColumn {
    heap: BinaryHeap<HeapEntry>,
}

impl LazyColumn {
    fn with_capacity(capacity: usize) -> Self {
        LazyColumn {
            heap: BinaryHeap::with_capacity(capacity),
        }
    }

    fn push(&mut self, key: TriKey, coeff: u64) {
        self.heap.push(HeapEntry { key, coeff });
    }

    /// Pop the pivot: the oldest key with a nonzero combined coefficient.
    fn pop_pivot(&mut self, field: &Field) -> Option<(TriKey, u64)> {
        while let Some(top) = self.heap.pop() {
            let key = top.key;
            let mut coeff = top.coeff;
            while let Some(next) = self.heap.peek() {
                if filtration_cmp(&next.key, &key) == Ordering::Equal {
                    coeff = field.add(coeff, self.heap.pop().expect("peeked").coeff);
                } else {
                    break;
                }
            }
            if coeff % field.p != 0 {
                return Some((key, coeff % field.p));
            }
        }
        None
    }

    /// Drain into a deduplicated column, youngest first, the pivot (oldest
    /// key) last.
    fn materialize(mut self, pivot: (TriKey, u64), field: &Field) -> Vec<(TriKey, u64)> {
        let mut entries: Vec<(TriKey, u64)> = Vec::with_capacity(self.heap.len() + 1);
        entries.push(pivot);
        for e in self.heap.drain() {
            entries.push((e.key, e.coeff));
        }
        entries.sort_unstable_by(|a, b| filtration_cmp(&b.0, &a.0));
        let mut out: Vec<(TriKey, u64)> = Vec::with_capacity(entries.len());
        for (key, coeff) in entries {
            match out.last_mut() {
                Some(last) if filtration_cmp(&last.0, &key) == Ordering::Equal => {
                    last.1 = field.add(last.1, coeff);
                }
                _ => out.push((key, coeff)),
            }
        }
        out.retain(|&(_, c)| c % field.p != 0);
        out
    }
}

/// All H1 persistence pairs of the Rips filtration on a distance matrix,
/// with coefficients in Z_p.
pub fn rips_persistence_h1(
    dist: &DMatrix<f64>,
    field_char: u64,
    threshold: RipsThreshold,
) -> Result<PersistenceDiagram> {
    validate_distances(dist)?;
    if !is_prime(field_char) || field_char > (1 << 31) {
        return Err(Error::invalid(format!(
            "field characteristic must be a prime below 2^31, got {field_char}"
        )));
    }
    let n = dist.nrows();
    let p = field_char;
    let thr = match threshold {
        RipsThreshold::Enclosing => enclosing_radius(dist),
        RipsThreshold::Value(v) => {
            if !(v >= 0.0) {
                return Err(Error::invalid("threshold must be nonnegative"));
            }
            v
        }
    };

    // Edges below the threshold, ascending filtration order.
    let mut edges: Vec<(f64, u32, u32)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let value = dist[(i, j)];
            if value <= thr {
                edges.push((value, i as u32, j as u32));
            }
        }
    }
    edges.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    // Dimension-0 sweep: edges joining two components die as H0 pairs, so
    // their dimension-1 columns are cleared. The survivors create cycles.
    let mut uf = UnionFind::new(n);
    let positive: Vec<usize> = edges
        .iter()
        .enumerate()
        .filter_map(|(idx, &(_, i, j))| (!uf.union(i as usize, j as usize)).then_some(idx))
        .collect();

    let field = Field::new(p);
    let mut pairs: Vec<PersistencePair> = Vec::new();
    // How a claimed pivot's column can be reproduced: most claims happen
    // with no additions at all, and their column is just the coboundary of
    // the claiming edge, cheap to regenerate on demand. Only columns that
    // actually underwent reduction are stored in full.
    enum Owner {
        Edge { idx: u32, pivot_coeff: u64 },
        Column(Vec<(TriKey, u64)>),
    }
    let mut owner: HashMap<[u32; 3], Owner> = HashMap::new();

    let cofacets = |edge_idx: usize, col: &mut LazyColumn| {
        let (ve, i, j) = edges[edge_idx];
        for v in 0..n as u32 {
            if v == i || v == j {
                continue;
            }
            // Canonical upper-triangle reads, in case the caller's matrix is
            // only symmetric to tolerance.
            let dvi = dist[(v.min(i) as usize, v.max(i) as usize)];
            let dvj = dist[(v.min(j) as usize, v.max(j) as usize)];
            if dvi > thr || dvj > thr {
                continue;
            }
            let value = ve.max(dvi).max(dvj);
            let mut verts = [i, j, v];
            verts.sort_unstable();
            // Boundary coefficient of (i, j) inside the sorted triangle:
            // -1 exactly when v is the middle vertex.
            let coeff = if verts[1] == v { p - 1 } else { 1 };
            col.push(TriKey { value, v: verts }, coeff);
        }
    };

    // Process cycle-creating edges youngest first.
    for &edge_idx in positive.iter().rev() {
        let ve = edges[edge_idx].0;
        let mut col = LazyColumn::with_capacity(n);
        cofacets(edge_idx, &mut col);
        let mut additions = 0usize;

        loop {
            let Some((pivot, coeff)) = col.pop_pivot(&field) else {
                // Nothing kills this cycle below the threshold.
                pairs.push(PersistencePair {
                    birth: ve,
                    death: f64::INFINITY,
                });
                break;
            };
            match owner.get(&pivot.v) {
                None => {
                    if pivot.value > ve {
                        pairs.push(PersistencePair {
                            birth: ve,
                            death: pivot.value,
                        });
                    }
                    let entry = if additions == 0 {
                        Owner::Edge {
                            idx: edge_idx as u32,
                            pivot_coeff: coeff,
                        }
                    } else {
                        Owner::Column(col.materialize((pivot, coeff), &field))
                    };
                    owner.insert(pivot.v, entry);
                    break;
                }
                Some(entry) => {
                    // col -= (coeff / pivot_coeff) * owner_col; the pivot
                    // entries cancel exactly, so neither is pushed back.
                    additions += 1;
                    match entry {
                        Owner::Edge {
                            idx,
                            pivot_coeff,
                        } => {
                            let factor = field.mul(coeff, field.inv(*pivot_coeff));
                            let neg = p - factor;
                            let mut raw = LazyColumn::with_capacity(n);
                            cofacets(*idx as usize, &mut raw);
                            for e in raw.heap.drain() {
                                if e.key.v != pivot.v {
                                    col.push(e.key, field.mul(e.coeff, neg));
                                }
                            }
                        }
                        Owner::Column(pivot_col) => {
                            let pivot_coeff =
                                pivot_col.last().expect("stored columns are nonempty").1;
                            let factor = field.mul(coeff, field.inv(pivot_coeff));
                            let neg = p - factor;
                            for &(key, c) in &pivot_col[..pivot_col.len() - 1] {
                                col.push(key, field.mul(c, neg));
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(PersistenceDiagram::from_pairs(pairs, p))
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    /// Returns false when both endpoints already share a component.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb) as u32;
        true
    }
}

pub(super) fn validate_distances(dist: &DMatrix<f64>) -> Result<()> {
    let n = dist.nrows();
    if n == 0 || dist.ncols() != n {
        return Err(Error::invalid("distance matrix must be square and nonempty"));
    }
    let scale = dist.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    for i in 0..n {
        if dist[(i, i)] != 0.0 {
            return Err(Error::invalid(format!("nonzero diagonal at {i}")));
        }
        for j in 0..n {
            let v = dist[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("invalid distance at ({i}, {j}): {v}")));
            }
            if (v - dist[(j, i)]).abs() > 1e-9 * (1.0 + scale) {
                return Err(Error::invalid(format!("asymmetric distances at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Arithmetic in Z_p for a prime p < 2^31.
pub(super) struct Field {
    p: u64,
}

impl Field {
    pub(super) fn new(p: u64) -> Self {
        Field { p }
    }

    pub(super) fn add(&self, a: u64, b: u64) -> u64 {
        (a + b) % self.p
    }

    pub(super) fn mul(&self, a: u64, b: u64) -> u64 {
        (a * b) % self.p
    }

    /// Multiplicative inverse by Fermat's little theorem.
    pub(super) fn inv(&self, a: u64) -> u64 {
        debug_assert!(a % self.p != 0);
        self.pow(a % self.p, self.p - 2)
    }

    fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % self.p;
            }
            base = base * base % self.p;
            exp >>= 1;
        }
        acc
    }
}
