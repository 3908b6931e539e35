//! Phase-ordered template synthesis.
//!
//! Each sliding window spans an arc of the motion circle: window `i` covers
//! phases `[Phi_i, Phi_i + 2 pi k (d-1) / N]`, one stacked frame every
//! `2 pi k / N`. For every target angle, every window whose arc contains it
//! contributes one frame, linearly interpolated between the two stacked
//! frames adjacent in phase, and the output pixel is the per-channel median
//! of the contributions. The median is what throws away occluders and
//! cycle-to-cycle outliers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::videoio::FrameSequence;

use std::f64::consts::{PI, TAU};

/// Interpolation offsets this close to a stacked frame snap to it exactly.
const SNAP_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct TemplateConfig {
    /// Number of output frames (M).
    pub frame_count: usize,
    /// Ghosting gap limit F, in frame-times: both interpolation endpoints of
    /// a contribution must lie within F frame-times of the target phase.
    pub ghost_gap: f64,
}

#[derive(Debug, Clone)]
pub struct TemplateResult {
    pub frames: FrameSequence,
    /// Voting windows per output frame; 0 marks a hole filled by copying the
    /// nearest-phase neighbor.
    pub contributors: Vec<usize>,
    /// Target angle of each output frame.
    pub phases: Vec<f64>,
    pub cycle_count: f64,
}

/// Unwrap phases (2 pi jumps removed) and orient them to increase with time.
/// Returns the unwrapped phases and the original direction (+1/-1).
pub fn unwrap_and_orient(phi: &[f64]) -> Result<(Vec<f64>, i8)> {
    if phi.len() < 3 {
        return Err(Error::invalid("unwrapping needs at least 3 phases"));
    }
    let mut unwrapped = Vec::with_capacity(phi.len());
    unwrapped.push(phi[0]);
    for w in phi.windows(2) {
        let mut delta = w[1] - w[0];
        while delta > PI {
            delta -= TAU;
        }
        while delta <= -PI {
            delta += TAU;
        }
        let last = *unwrapped.last().expect("nonempty");
        unwrapped.push(last + delta);
    }
    let mut diffs: Vec<f64> = unwrapped.windows(2).map(|w| w[1] - w[0]).collect();
    diffs.sort_by(f64::total_cmp);
    let median = diffs[(diffs.len() - 1) / 2];
    if median < 0.0 {
        for v in &mut unwrapped {
            *v = -*v;
        }
        Ok((unwrapped, -1))
    } else {
        Ok((unwrapped, 1))
    }
}

/// Number of cycles the source went through:
/// `k = N * span(Phi) / (2 pi (N - d + 1))`.
pub fn estimate_cycle_count(phi_unwrapped: &[f64], n_frames: usize, window_dim: usize) -> Result<f64> {
    if phi_unwrapped.is_empty() {
        return Err(Error::invalid("empty phase vector"));
    }
    if window_dim == 0 || window_dim > n_frames {
        return Err(Error::invalid(format!(
            "window dimension {window_dim} out of range [1, {n_frames}]"
        )));
    }
    let window_count = n_frames + 1 - window_dim;
    let max = phi_unwrapped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = phi_unwrapped.iter().copied().fold(f64::INFINITY, f64::min);
    let span = max - min;
    if !(span > 0.0) {
        return Err(Error::invalid("phase span is not positive"));
    }
    Ok(n_frames as f64 * span / (TAU * window_count as f64))
}

/// One vote: a frame interpolated inside one window.
struct Contribution {
    frame_a: usize,
    frame_b: usize,
    /// Weight of `frame_b`; 0 collapses to `frame_a` alone.
    weight: f64,
}

/// Synthesize the template by median voting over phase-reordered windows.
///
/// `seq` must be the original full-resolution frames; `phi_unwrapped` has one
/// entry per window (`N - d + 1`).
pub fn synthesize(
    seq: &FrameSequence,
    phi_unwrapped: &[f64],
    cycle_count: f64,
    window_dim: usize,
    cfg: &TemplateConfig,
) -> Result<TemplateResult> {
    let n = seq.len();
    let d = window_dim;
    if d < 1 || d > n {
        return Err(Error::invalid(format!("window dimension {d} out of range")));
    }
    if phi_unwrapped.len() != n - d + 1 {
        return Err(Error::invalid(format!(
            "expected {} window phases, got {}",
            n - d + 1,
            phi_unwrapped.len()
        )));
    }
    if cfg.frame_count < 2 {
        return Err(Error::invalid("template needs at least 2 frames"));
    }
    if !(cfg.ghost_gap > 0.0) {
        return Err(Error::invalid("ghost gap must be positive"));
    }
    if !(cycle_count > 0.0) {
        return Err(Error::invalid("cycle count must be positive"));
    }

    let gap = TAU * cycle_count / n as f64; // phase between stacked frames
    let span = gap * (d - 1) as f64;
    let m = cfg.frame_count;

    // Collect votes per target angle.
    let mut votes: Vec<Vec<Contribution>> = (0..m).map(|_| Vec::new()).collect();
    for (i, &start) in phi_unwrapped.iter().enumerate() {
        for (t, vote) in votes.iter_mut().enumerate() {
            let theta = TAU * t as f64 / m as f64;
            // Every lift theta + 2 pi l inside [start, start + span].
            let mut l = ((start - theta) / TAU).floor();
            loop {
                let x = theta + TAU * l;
                l += 1.0;
                if x < start - SNAP_EPS * gap {
                    continue;
                }
                if x > start + span + SNAP_EPS * gap {
                    break;
                }
                let u = (x - start) / gap;
                let j = u.floor().max(0.0) as usize;
                let w = u - j as f64;
                let (frame_a, frame_b, weight) = if w <= SNAP_EPS {
                    (j, j, 0.0)
                } else if w >= 1.0 - SNAP_EPS {
                    (j + 1, j + 1, 0.0)
                } else {
                    (j, j + 1, w)
                };
                if frame_b > d - 1 {
                    continue; // lift landed past the last stacked frame
                }
                // Ghost-gap filter: both endpoints within F frame-times.
                if weight > 0.0 && (weight > cfg.ghost_gap || 1.0 - weight > cfg.ghost_gap) {
                    continue;
                }
                vote.push(Contribution {
                    frame_a: i + frame_a,
                    frame_b: i + frame_b,
                    weight,
                });
            }
        }
    }

    let flat = seq.flat_dim();
    let contributors: Vec<usize> = votes.iter().map(|v| v.len()).collect();
    if contributors.iter().all(|&c| c == 0) {
        return Err(Error::EmptyCoverage);
    }

    // Per-pixel lower median over the contributions of each target.
    let frames: Vec<Vec<f64>> = votes
        .par_iter()
        .map(|vote| {
            if vote.is_empty() {
                return vec![0.0; flat];
            }
            let mut out = vec![0.0; flat];
            let mut buf = vec![0.0_f64; vote.len()];
            for (px, slot) in out.iter_mut().enumerate() {
                for (b, contrib) in buf.iter_mut().zip(vote.iter()) {
                    let a = seq.frame(contrib.frame_a)[px];
                    *b = if contrib.weight == 0.0 {
                        a
                    } else {
                        let bval = seq.frame(contrib.frame_b)[px];
                        (1.0 - contrib.weight) * a + contrib.weight * bval
                    };
                }
                let mid = (buf.len() - 1) / 2;
                let (_, median, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
                *slot = *median;
            }
            out
        })
        .collect();

    // Fill holes from the nearest covered angle (circularly).
    let mut filled = frames;
    let hole_indices: Vec<usize> = contributors
        .iter()
        .enumerate()
        .filter_map(|(t, &c)| (c == 0).then_some(t))
        .collect();
    for t in hole_indices {
        let mut best = None;
        for s in 0..m {
            if contributors[s] == 0 {
                continue;
            }
            let raw = (s as isize - t as isize).unsigned_abs() % m;
            let dist = raw.min(m - raw);
            if best.map_or(true, |(bd, _)| dist < bd) {
                best = Some((dist, s));
            }
        }
        let (_, src) = best.expect("at least one covered angle");
        filled[t] = filled[src].clone();
    }

    let phases = (0..m).map(|t| TAU * t as f64 / m as f64).collect();
    let frames = FrameSequence::new(
        seq.height(),
        seq.width(),
        seq.channels(),
        filled,
        seq.frame_rate,
        format!("{}-template", seq.name),
    )?;
    Ok(TemplateResult {
        frames,
        contributors,
        phases,
        cycle_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::videoio::FrameSequence;

    fn seq_of(frames: Vec<Vec<f64>>, h: usize, w: usize, c: usize) -> FrameSequence {
        FrameSequence::new(h, w, c, frames, None, "t").unwrap()
    }

    /// Exactly periodic scalar sequence with analytic phases, d covering one
    /// full cycle.
    fn scalar_fixture(t_period: usize, cycles: usize, f: impl Fn(usize) -> f64) -> (FrameSequence, Vec<f64>, usize) {
        let n = t_period * cycles;
        let d = t_period + 1;
        let frames: Vec<Vec<f64>> = (0..n).map(|t| vec![f(t % t_period)]).collect();
        let phi: Vec<f64> = (0..n - d + 1).map(|i| TAU * i as f64 / t_period as f64).collect();
        (seq_of(frames, 1, 1, 1), phi, d)
    }

    #[test]
    fn unwrap_inserts_a_full_turn_at_the_wrap() {
        let (phi, dir) = unwrap_and_orient(&[5.9, 6.2, 0.2, 0.5]).unwrap();
        assert_eq!(dir, 1);
        let expected = [5.9, 6.2, 0.2 + TAU, 0.5 + TAU];
        for (a, b) in phi.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decreasing_phases_flip_orientation() {
        let raw: Vec<f64> = (0..10).map(|i| (6.0 - 0.5 * i as f64).rem_euclid(TAU)).collect();
        let (phi, dir) = unwrap_and_orient(&raw).unwrap();
        assert_eq!(dir, -1);
        assert!(phi.windows(2).all(|w| w[1] > w[0]));
        assert!((phi[0] + raw[0]).abs() < 1e-12);
    }

    #[test]
    fn unwrapped_span_of_linear_phases_is_analytic() {
        // Phase steps of 2 pi / T over W windows span 2 pi (W - 1) / T;
        // this is the six-cycle, period-14 layout (N = 84, d = 15).
        let t_period = 14.0;
        let w_count = 70;
        let raw: Vec<f64> = (0..w_count).map(|i| (TAU * i as f64 / t_period) % TAU).collect();
        let (phi, dir) = unwrap_and_orient(&raw).unwrap();
        assert_eq!(dir, 1);
        let span = phi.last().unwrap() - phi.first().unwrap();
        let expected = TAU * (w_count - 1) as f64 / t_period;
        assert!((span - expected).abs() < 1e-9);

        let k = estimate_cycle_count(&phi, 84, 15).unwrap();
        assert!((5.5..=6.5).contains(&k), "k_est {k}");
    }

    #[test]
    fn cycle_count_formula() {
        // N = 100, d = 11, span 18 pi: k = 100 * 18 pi / (2 pi * 90) = 10.
        let phi: Vec<f64> = (0..90).map(|i| 18.0 * PI * i as f64 / 89.0).collect();
        // Rescale so the span is exactly 18 pi.
        let k = estimate_cycle_count(&phi, 100, 11).unwrap();
        assert!((k - 10.0).abs() < 1e-9);

        // Single cycle: a span of exactly 2 pi (N - d + 1) / N gives k = 1.
        let n = 24;
        let d = 13;
        let w_count = n - d + 1;
        let span = TAU * w_count as f64 / n as f64;
        let phi1: Vec<f64> = (0..w_count).map(|i| span * i as f64 / (w_count - 1) as f64).collect();
        let k1 = estimate_cycle_count(&phi1, n, d).unwrap();
        assert!((k1 - 1.0).abs() < 1e-9);

        assert!(estimate_cycle_count(&[1.0, 1.0, 1.0], 10, 3).is_err());
    }

    #[test]
    fn constant_input_gives_constant_template() {
        let (seq, phi, d) = scalar_fixture(8, 4, |_| 0.42);
        let cfg = TemplateConfig {
            frame_count: 5,
            ghost_gap: 2.0,
        };
        let out = synthesize(&seq, &phi, 4.0, d, &cfg).unwrap();
        assert_eq!(out.frames.len(), 5);
        for t in 0..5 {
            assert_eq!(out.frames.frame(t)[0], 0.42);
            assert!(out.contributors[t] >= 1);
        }
    }

    #[test]
    fn cosine_template_matches_the_generator() {
        let t_period = 12;
        let (seq, phi, d) = scalar_fixture(t_period, 20, |t| (TAU * t as f64 / 12.0).cos());
        let cfg = TemplateConfig {
            frame_count: 48,
            ghost_gap: 1.0,
        };
        let out = synthesize(&seq, &phi, 20.0, d, &cfg).unwrap();
        // Template phase t corresponds to source phase 2 pi t / M.
        let mut err = 0.0;
        for t in 0..48 {
            let expected = (TAU * t as f64 / 48.0).cos();
            let got = out.frames.frame(t)[0];
            err += (got - expected) * (got - expected);
        }
        let rmse = (err / 48.0).sqrt();
        assert!(rmse < 0.05, "rmse {rmse}");
    }

    #[test]
    fn occluded_cycle_is_outvoted_by_the_clean_majority() {
        // Three identical cycles; cycle 2 carries an occluder on 30% of its
        // frames. With per-cycle majorities of clean votes the template must
        // equal the clean cycle exactly.
        let t_period = 20usize;
        let h = 8;
        let w = 8;
        let clean_frame = |t: usize| -> Vec<f64> {
            (0..h * w)
                .map(|px| {
                    let (y, x) = (px / w, px % w);
                    0.1 + 0.8 * ((TAU * (t as f64 / t_period as f64 + (x + y) as f64 / 10.0)).sin() * 0.5 + 0.5)
                })
                .collect()
        };
        let mut frames: Vec<Vec<f64>> = (0..3 * t_period).map(|t| clean_frame(t % t_period)).collect();
        for t in 0..6 {
            // burn a 3x3 square into frames 20..26 (cycle 2)
            for y in 2..5 {
                for x in 2..5 {
                    frames[t_period + t][y * w + x] = 0.97;
                }
            }
        }
        let n = frames.len();
        let d = t_period / 2 + 1;
        let seq = seq_of(frames, h, w, 1);
        let phi: Vec<f64> = (0..n - d + 1).map(|i| TAU * i as f64 / t_period as f64).collect();
        let cfg = TemplateConfig {
            frame_count: t_period,
            ghost_gap: 2.0,
        };
        let out = synthesize(&seq, &phi, 3.0, d, &cfg).unwrap();
        for t in 0..t_period {
            let expected = clean_frame(t);
            for (a, b) in out.frames.frame(t).iter().zip(&expected) {
                assert_eq!(a, b, "target {t}");
            }
        }
    }

    #[test]
    fn permuting_whole_cycles_leaves_the_template_unchanged() {
        let t_period = 10usize;
        let cycles = 4;
        let base: Vec<f64> = (0..t_period).map(|t| (TAU * t as f64 / 10.0).sin()).collect();
        let make = |order: &[usize]| -> FrameSequence {
            let frames: Vec<Vec<f64>> = order
                .iter()
                .flat_map(|_| base.iter().map(|&v| vec![v]))
                .collect();
            seq_of(frames, 1, 1, 1)
        };
        let n = t_period * cycles;
        let d = t_period / 2 + 1;
        let phi: Vec<f64> = (0..n - d + 1).map(|i| TAU * i as f64 / t_period as f64).collect();
        let cfg = TemplateConfig {
            frame_count: 10,
            ghost_gap: 2.0,
        };
        let a = synthesize(&make(&[0, 1, 2, 3]), &phi, cycles as f64, d, &cfg).unwrap();
        let b = synthesize(&make(&[2, 0, 3, 1]), &phi, cycles as f64, d, &cfg).unwrap();
        for t in 0..10 {
            assert_eq!(a.frames.frame(t), b.frames.frame(t));
        }
    }

    #[test]
    fn global_phase_offset_rotates_the_output() {
        let t_period = 12usize;
        let (seq, phi, d) = scalar_fixture(t_period, 5, |t| (TAU * t as f64 / 12.0).sin());
        let cfg = TemplateConfig {
            frame_count: 12,
            ghost_gap: 2.0,
        };
        let base = synthesize(&seq, &phi, 5.0, d, &cfg).unwrap();
        // Shift all phases by 3 bins: output rotates by 3 frames.
        let shift = TAU * 3.0 / 12.0;
        let shifted_phi: Vec<f64> = phi.iter().map(|p| p + shift).collect();
        let shifted = synthesize(&seq, &shifted_phi, 5.0, d, &cfg).unwrap();
        for t in 0..12 {
            let a = base.frames.frame(t)[0];
            let b = shifted.frames.frame((t + 3) % 12)[0];
            assert!((a - b).abs() < 1e-9, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn exact_phases_reproduce_input_frames_with_unbounded_gap() {
        let t_period = 16usize;
        let (seq, phi, d) = scalar_fixture(t_period, 4, |t| (t as f64 * 0.37).sin());
        let cfg = TemplateConfig {
            frame_count: 16,
            ghost_gap: f64::MAX,
        };
        let out = synthesize(&seq, &phi, 4.0, d, &cfg).unwrap();
        for t in 0..16 {
            assert_eq!(out.frames.frame(t)[0], seq.frame(t % t_period)[0]);
        }
    }

    #[test]
    fn one_outlier_among_three_or_more_identical_votes_changes_nothing() {
        // 4 cycles, one frame of one cycle corrupted; with >= 3 clean votes
        // per target the median sticks to the clean value.
        let t_period = 8usize;
        let mut frames: Vec<Vec<f64>> = (0..4 * t_period).map(|t| vec![((t % t_period) as f64).sin()]).collect();
        frames[t_period + 3][0] = 99.0;
        let n = frames.len();
        let d = t_period / 2 + 1;
        let phi: Vec<f64> = (0..n - d + 1).map(|i| TAU * i as f64 / t_period as f64).collect();
        let seq = seq_of(frames, 1, 1, 1);
        let cfg = TemplateConfig {
            frame_count: 8,
            ghost_gap: 2.0,
        };
        let out = synthesize(&seq, &phi, 4.0, d, &cfg).unwrap();
        for t in 0..8 {
            assert_eq!(out.frames.frame(t)[0], ((t % t_period) as f64).sin());
        }
    }

    #[test]
    fn sparse_coverage_fills_holes_from_the_nearest_angle() {
        // A handful of windows covering a small arc; most targets are holes.
        let frames: Vec<Vec<f64>> = (0..8).map(|t| vec![t as f64]).collect();
        let seq = seq_of(frames, 1, 1, 1);
        let d = 3;
        // Windows cover barely a fifth of the circle.
        let phi: Vec<f64> = (0..6).map(|i| 0.2 * i as f64 / 5.0).collect();
        let cfg = TemplateConfig {
            frame_count: 12,
            ghost_gap: f64::MAX,
        };
        let out = synthesize(&seq, &phi, 0.5, d, &cfg).unwrap();
        assert!(out.contributors.iter().any(|&c| c == 0));
        assert!(out.contributors.iter().any(|&c| c > 0));
        // Hole frames are exact copies of some covered frame.
        let covered: Vec<usize> = (0..12).filter(|&t| out.contributors[t] > 0).collect();
        for t in 0..12 {
            if out.contributors[t] == 0 {
                let frame = out.frames.frame(t);
                assert!(covered.iter().any(|&s| out.frames.frame(s) == frame));
            }
        }
    }

    #[test]
    fn all_holes_is_an_error() {
        let frames: Vec<Vec<f64>> = (0..6).map(|t| vec![t as f64]).collect();
        let seq = seq_of(frames, 1, 1, 1);
        // Ghost gap so tight that every interpolated vote is rejected and
        // phases that never hit a stacked frame exactly.
        let phi: Vec<f64> = (0..4).map(|i| 0.77 + 0.13 * i as f64).collect();
        let cfg = TemplateConfig {
            frame_count: 3,
            ghost_gap: 1e-9,
        };
        match synthesize(&seq, &phi, 0.3, 3, &cfg) {
            Err(Error::EmptyCoverage) => {}
            other => panic!("expected EmptyCoverage, got {other:?}"),
        }
    }
}
