//! Distance-preserving projection and sliding-window embeddings.
//!
//! Frames live in `R^(3WH)` but only their pairwise distances matter to the
//! analysis, so they are projected through the N x N Gram matrix of the
//! centered data: with N frames the image needs at most N - 1 dimensions,
//! and the Gram route avoids ever decomposing a `(3WH) x (3WH)` covariance.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::videoio::FrameSequence;

/// Relative Gram-eigenvalue cutoff below which directions count as rank-zero.
const RANK_EPS: f64 = 1e-10;

/// N points in `R^D`, one per row, remembering their original time indices.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: DMatrix<f64>,
    labels: Vec<usize>,
}

impl PointCloud {
    pub fn new(points: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(Error::invalid("one label per point required"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("point cloud contains non-finite values"));
        }
        Ok(PointCloud { points, labels })
    }

    /// Points at consecutive time indices `0..n`.
    pub fn from_rows(points: DMatrix<f64>) -> Result<Self> {
        let labels = (0..points.nrows()).collect();
        PointCloud::new(points, labels)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.points.ncols() {
            let d = self.points[(i, k)] - self.points[(j, k)];
            acc += d * d;
        }
        acc.sqrt()
    }
}

/// Project frames to at most `N - 1` dimensions while preserving all pairwise
/// distances.
///
/// The N x N Gram matrix of the centered, flattened frames is decomposed
/// symmetrically; eigenpairs with eigenvalue above `1e-10 * lambda_max` are
/// kept and the coordinates are `sqrt(lambda) * eigenvector` rows. A fully
/// degenerate sequence (all frames identical) yields a single zero column.
pub fn project_isometric(seq: &FrameSequence) -> Result<PointCloud> {
    let n = seq.len();
    if n < 2 {
        return Err(Error::invalid("projection needs at least 2 frames"));
    }
    let p = seq.flat_dim();

    // Centered data: subtract the mean frame.
    let mut mean = vec![0.0; p];
    for t in 0..n {
        for (m, v) in mean.iter_mut().zip(seq.frame(t)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|t| seq.frame(t).iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    // Gram matrix, filled row-parallel; each entry is a single sequential dot
    // product so results do not depend on the thread count.
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if j < i {
                        0.0 // filled from symmetry below
                    } else {
                        centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum()
                    }
                })
                .collect()
        })
        .collect();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            gram[(i, j)] = rows[i][j];
            gram[(j, i)] = rows[i][j];
        }
    }

    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&k| eig.eigenvalues[k] > RANK_EPS * lambda_max && eig.eigenvalues[k] > 0.0)
        .collect();

    if kept.is_empty() {
        return PointCloud::from_rows(DMatrix::zeros(n, 1));
    }
    let mut coords = DMatrix::zeros(n, kept.len());
    for (col, &k) in kept.iter().enumerate() {
        let scale = eig.eigenvalues[k].sqrt();
        for i in 0..n {
            coords[(i, col)] = scale * eig.eigenvectors[(i, k)];
        }
    }
    PointCloud::from_rows(coords)
}

/// Sliding-window embedding: window `i` is the concatenation of points
/// `i .. i + d - 1`.
#[derive(Debug, Clone)]
pub struct SlidingWindowEmbedding {
    pub cloud: PointCloud,
    /// Frames per window.
    pub window_dim: usize,
    /// Length of the source sequence the windows were cut from.
    pub source_len: usize,
}

pub fn sliding_window(cloud: &PointCloud, d: usize) -> Result<SlidingWindowEmbedding> {
    let n = cloud.len();
    if d < 2 || d > n.saturating_sub(1) {
        return Err(Error::invalid(format!(
            "window dimension {d} out of range [2, {}]",
            n.saturating_sub(1)
        )));
    }
    let count = n - d + 1;
    let dz = cloud.dim();
    let mut rows = DMatrix::zeros(count, d * dz);
    for i in 0..count {
        for l in 0..d {
            for k in 0..dz {
                rows[(i, l * dz + k)] = cloud.points()[(i + l, k)];
            }
        }
    }
    Ok(SlidingWindowEmbedding {
        cloud: PointCloud::new(rows, (0..count).collect())?,
        window_dim: d,
        source_len: n,
    })
}

/// Window dimension for an estimated fundamental period: `round(T) + 1`,
/// covering one full cycle. Callers clamp to `floor(N / 2)`.
pub fn choose_window_dim(t_est: f64) -> Result<usize> {
    if !(t_est >= 2.0) {
        return Err(Error::invalid(format!(
            "period estimate must be >= 2, got {t_est}"
        )));
    }
    Ok(t_est.round() as usize + 1)
}

/// Full Euclidean distance matrix: zero diagonal, symmetric.
pub fn pairwise_distances(cloud: &PointCloud) -> DMatrix<f64> {
    let n = cloud.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| if j <= i { 0.0 } else { cloud.distance(i, j) }).collect())
        .collect();
    let mut dist = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            dist[(i, j)] = rows[i][j];
            dist[(j, i)] = rows[i][j];
        }
    }
    dist
}

/// Distances in the original flattened frame space, without projection.
/// Quadratic in the frame size; used to validate the projection.
pub fn raw_frame_distance(seq: &FrameSequence, i: usize, j: usize) -> f64 {
    seq.frame(i)
        .iter()
        .zip(seq.frame(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::videoio::FrameSequence;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq_from_frames(h: usize, w: usize, c: usize, frames: Vec<Vec<f64>>) -> FrameSequence {
        FrameSequence::new(h, w, c, frames, None, "test").unwrap()
    }

    #[test]
    fn two_frames_at_distance_five_project_to_a_pair_at_distance_five() {
        let a = vec![0.0; 16];
        let mut b = vec![0.0; 16];
        b[0] = 3.0;
        b[1] = 4.0;
        let seq = seq_from_frames(4, 4, 1, vec![a, b]);
        let cloud = project_isometric(&seq).unwrap();
        assert!((cloud.distance(0, 1) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn identical_frames_project_to_coincident_points() {
        let seq = seq_from_frames(2, 2, 1, vec![vec![0.3; 4]; 6]);
        let cloud = project_isometric(&seq).unwrap();
        assert_eq!(cloud.len(), 6);
        assert_eq!(cloud.dim(), 1);
        assert!(cloud.points().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_frames_project_isometrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frames: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..64).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let seq = seq_from_frames(8, 8, 1, frames);
        let cloud = project_isometric(&seq).unwrap();
        assert!(cloud.dim() <= 19);
        for i in 0..20 {
            for j in (i + 1)..20 {
                let raw = raw_frame_distance(&seq, i, j);
                let projected = cloud.distance(i, j);
                assert!(
                    (projected - raw).abs() / (raw + 1e-12) < 1e-6,
                    "pair ({i},{j}): projected {projected}, raw {raw}"
                );
            }
        }
    }

    #[test]
    fn projection_needs_two_frames() {
        let seq = seq_from_frames(2, 2, 1, vec![vec![0.0; 4]]);
        assert!(project_isometric(&seq).is_err());
    }

    #[test]
    fn sliding_window_unrolls_consecutive_points() {
        let z = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let cloud = PointCloud::from_rows(z).unwrap();
        let swe = sliding_window(&cloud, 3).unwrap();
        assert_eq!(swe.cloud.len(), 3);
        assert_eq!(swe.cloud.point(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(swe.cloud.point(1), vec![2.0, 3.0, 4.0]);
        assert_eq!(swe.cloud.point(2), vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn window_dim_of_n_minus_one_leaves_two_windows() {
        let cloud = PointCloud::from_rows(DMatrix::from_fn(6, 1, |i, _| i as f64)).unwrap();
        let swe = sliding_window(&cloud, 5).unwrap();
        assert_eq!(swe.cloud.len(), 2);
        assert!(sliding_window(&cloud, 6).is_err());
        assert!(sliding_window(&cloud, 1).is_err());
    }

    #[test]
    fn sinusoid_windows_lie_in_a_plane() {
        // Window vectors of a pure sinusoid are cos(theta) a - sin(theta) b
        // for fixed vectors a, b, so the top-2 principal plane holds them
        // exactly; the cloud is an ellipse there.
        let t_period = 20.0;
        let z = DMatrix::from_fn(200, 1, |i, _| (2.0 * std::f64::consts::PI * (i + 1) as f64 / t_period).cos());
        let cloud = PointCloud::from_rows(z).unwrap();
        let swe = sliding_window(&cloud, 21).unwrap();
        let pts = swe.cloud.points();
        // Centered PCA via the small-side Gram trick, independent of
        // project_isometric.
        let n = pts.nrows();
        let mean = pts.row_mean();
        let mut centered = pts.clone();
        for i in 0..n {
            for j in 0..pts.ncols() {
                centered[(i, j)] -= mean[j];
            }
        }
        let gram = &centered * centered.transpose();
        let eig = gram.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        // Per-point distance from the top-2 principal plane.
        let scale = eig.eigenvalues[order[0]].sqrt();
        for i in 0..n {
            let mut in_plane = 0.0;
            for &k in &order[..2] {
                let coeff: f64 = (0..n).map(|r| eig.eigenvectors[(r, k)] * gram[(r, i)]).sum();
                in_plane += coeff * eig.eigenvectors[(i, k)];
            }
            let norm2 = gram[(i, i)];
            let off2 = (norm2 - in_plane).max(0.0);
            assert!(
                off2.sqrt() < 1e-6 * scale.max(1.0),
                "point {i} off-plane by {}",
                off2.sqrt()
            );
        }
    }

    #[test]
    fn window_norms_are_constant_when_window_covers_exactly_one_period() {
        // d samples spanning exactly one period (d = T) make the embedding a
        // round circle; one extra sample (d = T + 1) would tilt it into an
        // ellipse with unequal norms.
        let t_period = 20usize;
        let z = DMatrix::from_fn(200, 1, |i, _| {
            (2.0 * std::f64::consts::PI * i as f64 / t_period as f64).cos()
        });
        let cloud = PointCloud::from_rows(z).unwrap();
        let swe = sliding_window(&cloud, t_period).unwrap();
        let norms: Vec<f64> = (0..swe.cloud.len())
            .map(|i| swe.cloud.point(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let (min, max) = norms
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        assert!(max - min < 1e-6, "norm spread {}", max - min);
    }

    #[test]
    fn consecutive_windows_share_their_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = DMatrix::from_fn(30, 2, |_, _| rng.random_range(-1.0..1.0));
        let cloud = PointCloud::from_rows(z).unwrap();
        let d = 7;
        let swe = sliding_window(&cloud, d).unwrap();
        let dz = 2;
        for i in 0..swe.cloud.len() - 1 {
            let row = swe.cloud.point(i);
            let next = swe.cloud.point(i + 1);
            assert_eq!(&row[dz..], &next[..(d - 1) * dz]);
        }
    }

    #[test]
    fn choose_window_dim_rounds_and_adds_one() {
        assert_eq!(choose_window_dim(14.0).unwrap(), 15);
        assert_eq!(choose_window_dim(11.6).unwrap(), 13);
        assert!(choose_window_dim(1.2).is_err());
        // T = 25 with N = 500: d = 26, leaving 475 windows.
        let d = choose_window_dim(25.0).unwrap();
        assert_eq!(d, 26);
        assert_eq!(500 - d + 1, 475);
    }

    #[test]
    fn pairwise_distance_examples() {
        let pts = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 4.0]);
        let cloud = PointCloud::from_rows(pts).unwrap();
        let dist = pairwise_distances(&cloud);
        assert_eq!(dist[(0, 1)], 5.0);
        assert_eq!(dist[(1, 0)], 5.0);
        assert_eq!(dist[(0, 0)], 0.0);

        let coincident = PointCloud::from_rows(DMatrix::from_element(4, 3, 0.7)).unwrap();
        assert!(pairwise_distances(&coincident).iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn pairwise_distances_match_scalar_oracle(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = DMatrix::from_fn(10, 3, |_, _| rng.random_range(-2.0..2.0));
            let cloud = PointCloud::from_rows(pts).unwrap();
            let dist = pairwise_distances(&cloud);
            for i in 0..10 {
                prop_assert!(dist[(i, i)] == 0.0);
                for j in 0..10 {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        let d = cloud.points()[(i, k)] - cloud.points()[(j, k)];
                        acc += d * d;
                    }
                    prop_assert!((dist[(i, j)] - acc.sqrt()).abs() < 1e-12);
                    prop_assert!(dist[(i, j)] == dist[(j, i)]);
                }
            }
        }

        #[test]
        fn projection_is_isometric_on_random_input(seed in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..27).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let seq = FrameSequence::new(3, 3, 3, frames, None, "prop").unwrap();
            let cloud = project_isometric(&seq).unwrap();
            for i in 0..8 {
                for j in (i + 1)..8 {
                    let raw = raw_frame_distance(&seq, i, j);
                    prop_assert!((cloud.distance(i, j) - raw).abs() / (raw + 1e-9) < 1e-6);
                }
            }
        }
    }
}
