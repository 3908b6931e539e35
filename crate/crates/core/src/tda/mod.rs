//! 1D Vietoris–Rips persistent homology and persistence-based scale selection.
//!
//! The filtration tracks loop classes (H1) of the sliding-window cloud: the
//! scale at which the motion cycle appears and the scale at which it fills
//! in. The most persistent class picks the graph scale `alpha * birth +
//! (1 - alpha) * death` for the Laplacian stage.
//!
//! Coefficients live in a prime field Z_p. The default characteristic is 47:
//! odd characteristics keep loops with even harmonics (a motion that repeats
//! twice per cycle is a Möbius-like double cover over Z_2) from splitting.

mod reference;
mod rips;

pub use reference::rips_persistence_h1_reference;
pub use rips::{rips_persistence_h1, RipsThreshold};

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// One H1 class: the scales at which it appears and disappears.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistencePair {
    pub birth: f64,
    /// `f64::INFINITY` marks an essential class that never dies below the
    /// filtration threshold.
    pub death: f64,
}

impl PersistencePair {
    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_essential(&self) -> bool {
        self.death.is_infinite()
    }
}

/// Multiset of H1 (birth, death) pairs, sorted by persistence descending.
#[derive(Debug, Clone)]
pub struct PersistenceDiagram {
    pub pairs: Vec<PersistencePair>,
    pub field_char: u64,
}

impl PersistenceDiagram {
    pub(crate) fn from_pairs(mut pairs: Vec<PersistencePair>, field_char: u64) -> Self {
        pairs.sort_by(|a, b| {
            b.persistence()
                .total_cmp(&a.persistence())
                .then(a.birth.total_cmp(&b.birth))
                .then(a.death.total_cmp(&b.death))
        });
        PersistenceDiagram { pairs, field_char }
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Most persistent finite pair, if any.
    pub fn dominant(&self) -> Option<PersistencePair> {
        self.pairs.iter().copied().find(|p| !p.is_essential())
    }

    /// Ratio of the largest finite persistence to the second largest
    /// (infinite when there is no second pair).
    pub fn dominance_ratio(&self) -> Option<f64> {
        let mut finite = self.pairs.iter().filter(|p| !p.is_essential());
        let first = finite.next()?.persistence();
        match finite.next() {
            Some(second) => Some(first / second.persistence()),
            None => Some(f64::INFINITY),
        }
    }
}

/// The scale chosen from a diagram.
#[derive(Debug, Clone, Copy)]
pub struct ScaleSelection {
    pub sigma: f64,
    pub alpha: f64,
    pub chosen_pair: PersistencePair,
}

/// Blend the most persistent finite pair: `sigma = alpha * b + (1 - alpha) * d`.
/// Ties on persistence go to the smaller birth.
pub fn select_scale(diagram: &PersistenceDiagram, alpha: f64) -> Result<ScaleSelection> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let chosen = diagram
        .dominant()
        .ok_or_else(|| Error::NoCycles(String::new()))?;
    Ok(ScaleSelection {
        sigma: alpha * chosen.birth + (1.0 - alpha) * chosen.death,
        alpha,
        chosen_pair: chosen,
    })
}

/// Smallest scale at which some point sees every other point; H1 is trivial
/// beyond it, so it is the default Rips truncation.
pub fn enclosing_radius(dist: &DMatrix<f64>) -> f64 {
    let n = dist.nrows();
    (0..n)
        .map(|i| (0..n).map(|j| dist[(i, j)]).fold(0.0f64, f64::max))
        .fold(f64::INFINITY, f64::min)
}

/// Greedy farthest-point subsample of `target` points, keeping original time
/// labels. The first point is drawn from `seed`; ties break on the smaller
/// index, so the result is reproducible.
pub fn subsample_maxmin(cloud: &PointCloud, target: usize, seed: u64) -> Result<PointCloud> {
    let n = cloud.len();
    if target == 0 || target > n {
        return Err(Error::invalid(format!(
            "subsample target {target} out of range [1, {n}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut chosen = Vec::with_capacity(target);
    let mut min_dist = vec![f64::INFINITY; n];
    chosen.push(first);
    while chosen.len() < target {
        let last = *chosen.last().expect("nonempty");
        for i in 0..n {
            let d = cloud.distance(last, i);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
        let mut best = usize::MAX;
        for i in 0..n {
            if chosen.contains(&i) {
                continue;
            }
            if best == usize::MAX || min_dist[i] > min_dist[best] {
                best = i;
            }
        }
        chosen.push(best);
    }
    let mut points = DMatrix::zeros(target, cloud.dim());
    let mut labels = Vec::with_capacity(target);
    for (row, &i) in chosen.iter().enumerate() {
        for k in 0..cloud.dim() {
            points[(row, k)] = cloud.points()[(i, k)];
        }
        labels.push(cloud.labels()[i]);
    }
    PointCloud::new(points, labels)
}

pub(crate) fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut i = 2;
    while i * i <= p {
        if p % i == 0 {
            return false;
        }
        i += 1;
    }
    true
}
