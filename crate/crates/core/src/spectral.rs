//! Graph-Laplacian circular coordinates.
//!
//! At the scale chosen by persistence, the sliding-window cloud looks like a
//! circle, and the graph Laplacian of its adjacency behaves like the
//! Laplacian of an ideal circulant graph: the two smallest nonzero
//! eigenvalues are a degenerate pair whose eigenvectors are a sine and a
//! cosine with the motion's period. The per-window phase is the
//! four-quadrant angle of that eigenvector pair.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff separating "numerically zero" kernel
/// directions from real ones.
const ZERO_EPS: f64 = 1e-8;

/// Zero-crossing counts of a candidate eigenvector pair may differ by at
/// most this fraction of the larger count.
const ZC_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyMode {
    Weighted,
    Unweighted,
}

/// Shape of the weighted kernel. `Gaussian` is `exp(-d^2 / 2 sigma^2)`;
/// `Raw` applies the kernel to the unsquared distance, `exp(-d / 2 sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelShape {
    Gaussian,
    Raw,
}

/// Adjacency + Laplacian at a fixed scale.
#[derive(Debug, Clone)]
pub struct LaplacianGraph {
    pub adjacency: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub mode: AdjacencyMode,
    pub sigma: Option<f64>,
}

/// Build the adjacency at scale `sigma` and its Laplacian `L = D - A`.
pub fn build_adjacency(
    dist: &DMatrix<f64>,
    sigma: f64,
    mode: AdjacencyMode,
    kernel: KernelShape,
) -> Result<LaplacianGraph> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {sigma}")));
    }
    let n = dist.nrows();
    if dist.ncols() != n || n == 0 {
        return Err(Error::invalid("distance matrix must be square and nonempty"));
    }
    let mut adjacency = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = dist[(i, j)];
            adjacency[(i, j)] = match mode {
                AdjacencyMode::Unweighted => {
                    if d <= sigma {
                        1.0
                    } else {
                        0.0
                    }
                }
                AdjacencyMode::Weighted => match kernel {
                    KernelShape::Gaussian => (-d * d / (2.0 * sigma * sigma)).exp(),
                    KernelShape::Raw => (-d / (2.0 * sigma * sigma)).exp(),
                },
            };
        }
    }
    let laplacian = laplacian_of(&adjacency);
    Ok(LaplacianGraph {
        adjacency,
        laplacian,
        mode,
        sigma: Some(sigma),
    })
}

fn laplacian_of(adjacency: &DMatrix<f64>) -> DMatrix<f64> {
    let n = adjacency.nrows();
    let mut l = -adjacency.clone();
    for i in 0..n {
        l[(i, i)] = adjacency.row(i).sum();
    }
    l
}

/// The ideal Laplacian of a video repeating every `t` frames for `k` cycles
/// (`N = k t` windows): -1 at circular offsets `{±1}` and `{l t, l t ± 1}`
/// for `l = 1 .. k-1`, degree `3k - 1` on the diagonal.
pub fn model_circulant_laplacian(t: usize, k: usize) -> Result<LaplacianGraph> {
    if t < 3 || k < 2 {
        return Err(Error::invalid(format!(
            "circulant model needs t >= 3 and k >= 2, got t={t}, k={k}"
        )));
    }
    let n = t * k;
    let mut offsets = vec![false; n];
    offsets[1] = true;
    offsets[n - 1] = true;
    for l in 1..k {
        for delta in [l * t + n - 1, l * t, l * t + 1] {
            offsets[delta % n] = true;
        }
    }
    let mut adjacency = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && offsets[(j + n - i) % n] {
                adjacency[(i, j)] = 1.0;
            }
        }
    }
    let laplacian = laplacian_of(&adjacency);
    Ok(LaplacianGraph {
        adjacency,
        laplacian,
        mode: AdjacencyMode::Unweighted,
        sigma: None,
    })
}

/// The `count` smallest numerically nonzero eigenpairs of a symmetric PSD
/// matrix, eigenvalues ascending, eigenvectors unit-norm with a
/// deterministic sign. Returns fewer (with `truncated = true`) when the
/// spectrum runs out.
pub struct SpectrumSlice {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<DVector<f64>>,
    pub truncated: bool,
}

pub fn smallest_eigenpairs(laplacian: &DMatrix<f64>, count: usize) -> SpectrumSlice {
    let n = laplacian.nrows();
    let eig = laplacian.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lambda_max = eig.eigenvalues[order[n - 1]].max(0.0);
    let cutoff = ZERO_EPS * lambda_max;

    let mut eigenvalues = Vec::with_capacity(count);
    let mut eigenvectors = Vec::with_capacity(count);
    for &idx in &order {
        if eigenvalues.len() == count {
            break;
        }
        let lambda = eig.eigenvalues[idx];
        if lambda <= cutoff {
            continue;
        }
        let mut v: DVector<f64> = eig.eigenvectors.column(idx).into();
        let norm = v.norm();
        if norm > 0.0 {
            v /= norm;
        }
        // Deterministic orientation: largest-magnitude entry positive.
        let mut lead = 0;
        for i in 1..n {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            v = -v;
        }
        eigenvalues.push(lambda);
        eigenvectors.push(v);
    }
    let truncated = eigenvalues.len() < count;
    SpectrumSlice {
        eigenvalues,
        eigenvectors,
        truncated,
    }
}

/// Sign changes along a vector; entries equal to zero carry the previous
/// sign, and leading zeros take the first nonzero sign.
pub fn zero_crossings(v: &DVector<f64>) -> usize {
    let mut count = 0;
    let mut prev = 0i8;
    for &x in v.iter() {
        let s = if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            prev
        };
        if prev != 0 && s != 0 && s != prev {
            count += 1;
        }
        if s != 0 {
            prev = s;
        }
    }
    count
}

/// Pick the adjacent eigenvector pair with the fewest zero crossings whose
/// counts agree within 20%. Falls back to the first two eigenvectors (with
/// `fallback = true`) when no pair qualifies.
pub fn select_eigenpair(crossings: &[usize]) -> Result<(usize, usize, bool)> {
    if crossings.len() < 2 {
        return Err(Error::invalid("eigenpair selection needs at least 2 eigenvectors"));
    }
    let mut best: Option<(usize, usize)> = None; // (min count, index)
    for i in 0..crossings.len() - 1 {
        let (a, b) = (crossings[i], crossings[i + 1]);
        let hi = a.max(b);
        if a.abs_diff(b) as f64 > ZC_TOLERANCE * hi as f64 {
            continue;
        }
        let lo = a.min(b);
        if best.map_or(true, |(bl, _)| lo < bl) {
            best = Some((lo, i));
        }
    }
    match best {
        Some((_, i)) => Ok((i, i + 1, false)),
        None => Ok((0, 1, true)),
    }
}

/// Four-quadrant phase of an eigenvector pair, in `[0, 2 pi)`.
pub fn circular_phase(v_a: &DVector<f64>, v_b: &DVector<f64>) -> Result<Vec<f64>> {
    if v_a.len() != v_b.len() || v_a.len() < 3 {
        return Err(Error::invalid("phase needs two vectors of equal length >= 3"));
    }
    let tau = std::f64::consts::TAU;
    v_a.iter()
        .zip(v_b.iter())
        .enumerate()
        .map(|(n, (&a, &b))| {
            if a == 0.0 && b == 0.0 {
                return Err(Error::PhaseUndefined(n));
            }
            let mut phi = a.atan2(b);
            if phi < 0.0 {
                phi += tau;
            }
            if phi >= tau {
                phi -= tau;
            }
            Ok(phi)
        })
        .collect()
}

/// Per-window phase assignment plus the diagnostics that explain it.
#[derive(Debug, Clone)]
pub struct PhaseAssignment {
    /// Wrapped phase per window, in `[0, 2 pi)`.
    pub phi: Vec<f64>,
    /// Unwrapped, orientation-normalized phase; filled by the caller after
    /// unwrapping, which lives with the template stage.
    pub phi_unwrapped: Vec<f64>,
    /// Indices (into the inspected spectrum slice) of the chosen pair.
    pub eigen_indices: (usize, usize),
    /// Zero-crossing count of each inspected eigenvector.
    pub zero_crossings: Vec<usize>,
    /// The inspected (smallest numerically nonzero) eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// +1 when phase increased with time, -1 when it was reversed.
    pub direction: i8,
    /// True when no zero-crossing-compatible pair existed.
    pub eigen_fallback: bool,
    /// True when fewer than the requested eigenpairs were available.
    pub spectrum_truncated: bool,
}

/// The whole spectral stage: inspect the low end of the spectrum, pick the
/// eigenvector pair by zero crossings, and read off the circular phase.
pub fn assign_phases(laplacian: &DMatrix<f64>, inspect: usize) -> Result<PhaseAssignment> {
    let spectrum = smallest_eigenpairs(laplacian, inspect);
    if spectrum.eigenvalues.len() < 2 {
        return Err(Error::NoCycles(
            ": Laplacian spectrum has fewer than two nonzero eigenvalues".into(),
        ));
    }
    let crossings: Vec<usize> = spectrum.eigenvectors.iter().map(zero_crossings).collect();
    let (a, b, fallback) = select_eigenpair(&crossings)?;
    let phi = circular_phase(&spectrum.eigenvectors[a], &spectrum.eigenvectors[b])?;
    Ok(PhaseAssignment {
        phi,
        phi_unwrapped: Vec::new(),
        eigen_indices: (a, b),
        zero_crossings: crossings,
        eigenvalues: spectrum.eigenvalues,
        direction: 1,
        eigen_fallback: fallback,
        spectrum_truncated: spectrum.truncated,
    })
}
