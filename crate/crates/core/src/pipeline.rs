//! End-to-end orchestration: frames in, phases and templates out.
//!
//! `analyze_sequence` runs pyramid -> projection -> period estimation ->
//! sliding window -> Rips scale selection -> Laplacian phases, and returns
//! everything downstream stages or a caller inspecting a run might need.
//! The result serializes to the versioned `analysis.json` schema, which is
//! also the contract between the `analyze` and `synthesize` commands.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, PointCloud};
use crate::period::{self, PeriodEstimate};
use crate::spectral::{self, AdjacencyMode, KernelShape};
use crate::tda::{self, RipsThreshold};
use crate::template::{self, TemplateConfig, TemplateResult};
use crate::videoio::{self, FrameSequence};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Blend between birth (1) and death (0) of the dominant pair.
    pub alpha: f64,
    /// Prime field characteristic for persistence.
    pub field_char: u64,
    pub mode: AdjacencyMode,
    pub kernel: KernelShape,
    /// Requested pyramid level; clamped to what the frame size admits.
    pub pyramid_level: u32,
    /// Output frame count M; `None` means 4x the estimated samples per period.
    pub template_frames: Option<usize>,
    /// Ghosting gap F in frame-times; `None` means `T_est / 4`.
    pub ghost_gap: Option<f64>,
    /// Point cap for the Rips stage; larger window clouds are subsampled.
    pub subsample_cap: usize,
    pub seed: u64,
    /// Periodicity self-consistency gate: the recovered cycle count times
    /// the estimated period must come within this tolerance of an integer
    /// multiple of the sequence length, or the input is declared cycle-free.
    pub cycle_drift_tolerance: f64,
    /// Force the window dimension (1 = no sliding window); `None` derives it
    /// from the period estimate.
    pub window_dim: Option<usize>,
    /// k-NN size for the ISOMAP surrogate (clamped to N - 1).
    pub n_neighbors: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: 0.5,
            field_char: 47,
            mode: AdjacencyMode::Weighted,
            kernel: KernelShape::Gaussian,
            pyramid_level: 2,
            template_frames: None,
            ghost_gap: None,
            subsample_cap: 400,
            seed: 0,
            cycle_drift_tolerance: 0.1,
            window_dim: None,
            n_neighbors: 10,
        }
    }
}

/// Subharmonic multiples of the period the consistency gate accepts: a
/// window spanning k true cycles still closes the same loop, so the period
/// estimator landing on a small multiple is fine.
const MAX_PERIOD_HARMONIC: f64 = 6.0;

/// A (birth, death) pair as serialized; `death: None` marks an essential
/// class.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiagramPairJson {
    pub birth: f64,
    pub death: Option<f64>,
}

/// Everything the analysis stages produce, one window per entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub schema: String,
    /// Fundamental period in frames; absent when a raw point cloud was
    /// analyzed instead of a sequence.
    pub t_est: Option<f64>,
    pub confidence: Option<f64>,
    pub window_dim: usize,
    pub pyramid_level: u32,
    pub frame_count: usize,
    pub diagram: Vec<DiagramPairJson>,
    pub sigma: f64,
    pub alpha: f64,
    /// The inspected smallest numerically nonzero eigenvalues.
    pub eigenvalues: Vec<f64>,
    pub zero_crossings: Vec<usize>,
    pub chosen_pair: (usize, usize),
    /// Wrapped per-window phase in `[0, 2 pi)`.
    pub phi: Vec<f64>,
    /// Unwrapped, orientation-normalized phase with `min = 0`.
    pub phi_unwrapped: Vec<f64>,
    pub direction: i8,
    pub k_est: f64,
    pub warnings: Vec<String>,
}

impl AnalysisResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("analysis serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let result: AnalysisResult = serde_json::from_str(text).map_err(|e| {
            Error::invalid(format!("analysis JSON does not parse: {e}"))
        })?;
        if result.schema != "1" {
            return Err(Error::invalid(format!(
                "unsupported analysis schema {:?}",
                result.schema
            )));
        }
        Ok(result)
    }
}

/// Period estimation half of the pipeline: pyramid, projection, ISOMAP
/// surrogate, NSDF.
pub fn estimate_period_of_sequence(
    seq: &FrameSequence,
    cfg: &PipelineConfig,
) -> Result<PeriodEstimate> {
    let (cloud, _, _) = reduced_cloud(seq, cfg)?;
    surrogate_period(&cloud, cfg).map(|(estimate, _)| estimate)
}

fn reduced_cloud(seq: &FrameSequence, cfg: &PipelineConfig) -> Result<(PointCloud, u32, Vec<String>)> {
    if seq.len() < 8 {
        return Err(Error::invalid(format!(
            "pipeline needs at least 8 frames, got {}",
            seq.len()
        )));
    }
    let mut warnings = Vec::new();
    let max_level = videoio::max_pyramid_level(seq);
    let level = cfg.pyramid_level.min(max_level);
    if level < cfg.pyramid_level {
        warnings.push(format!(
            "pyramid level clamped from {} to {level} for {}x{} frames",
            cfg.pyramid_level,
            seq.height(),
            seq.width()
        ));
    }
    let reduced = videoio::gaussian_pyramid_level(seq, level)?;
    let cloud = geometry::project_isometric(&reduced)?;
    Ok((cloud, level, warnings))
}

fn surrogate_period(
    cloud: &PointCloud,
    cfg: &PipelineConfig,
) -> Result<(PeriodEstimate, Vec<String>)> {
    let mut warnings = Vec::new();
    let k = cfg.n_neighbors.min(cloud.len() - 1).max(1);
    let isomap = period::isomap_1d(cloud, k)?;
    if isomap.degenerate {
        warnings.push("degenerate point cloud: flat ISOMAP surrogate".into());
    }
    if isomap.bridge_edges > 0 {
        warnings.push(format!(
            "ISOMAP graph was disconnected; added {} bridge edges",
            isomap.bridge_edges
        ));
    }
    let estimate = period::estimate_period(&isomap.surrogate)?;
    Ok((estimate, warnings))
}

/// Full analysis of a frame sequence (or 1D signal in a 1x1x1 sequence).
pub fn analyze_sequence(seq: &FrameSequence, cfg: &PipelineConfig) -> Result<AnalysisResult> {
    let n = seq.len();
    let (cloud, level, mut warnings) = reduced_cloud(seq, cfg)?;
    let (estimate, period_warnings) = surrogate_period(&cloud, cfg)?;
    warnings.extend(period_warnings);

    let d = match cfg.window_dim {
        Some(d) => {
            if d < 1 || d > n / 2 {
                return Err(Error::invalid(format!(
                    "window dimension {d} out of range [1, {}]",
                    n / 2
                )));
            }
            d
        }
        None => {
            // A window spanning several periods averages per-frame noise
            // without changing the loop it traces, so cover as many cycles
            // as the series affords, up to three.
            let span = geometry::choose_window_dim(estimate.period)? - 1;
            let reps = if span > 0 { ((n / 2 - 1) / span).clamp(1, 3) } else { 1 };
            (reps * span + 1).clamp(2, n / 2)
        }
    };

    let window_cloud = if d == 1 {
        cloud.clone()
    } else {
        geometry::sliding_window(&cloud, d)?.cloud
    };

    let mut result = analyze_window_cloud(&window_cloud, n, d, cfg, warnings)?;
    result.t_est = Some(estimate.period);
    result.confidence = Some(estimate.confidence);
    result.pyramid_level = level;

    // Periodicity self-consistency: phases must wrap an integer number of
    // times per estimated period across the whole series. Genuinely
    // aperiodic inputs land far from any small integer.
    let cyc = result.k_est * estimate.period / n as f64;
    let nearest = cyc.round();
    if !(1.0..=MAX_PERIOD_HARMONIC).contains(&nearest)
        || (cyc - nearest).abs() > cfg.cycle_drift_tolerance
    {
        return Err(Error::NoCycles(format!(
            ": cycle count {:.2} and period {:.2} are inconsistent with the {} input frames",
            result.k_est, estimate.period, n
        )));
    }
    Ok(result)
}

/// Analysis entry point for a bare point cloud (the `--point-cloud-csv`
/// escape hatch): the cloud is taken as the window cloud itself.
pub fn analyze_cloud(cloud: &PointCloud, cfg: &PipelineConfig) -> Result<AnalysisResult> {
    analyze_window_cloud(cloud, cloud.len(), 1, cfg, Vec::new())
}

fn analyze_window_cloud(
    window_cloud: &PointCloud,
    n_frames: usize,
    window_dim: usize,
    cfg: &PipelineConfig,
    mut warnings: Vec<String>,
) -> Result<AnalysisResult> {
    let dist = geometry::pairwise_distances(window_cloud);

    // Persistence on (at most) `subsample_cap` points.
    let diagram = if window_cloud.len() > cfg.subsample_cap {
        warnings.push(format!(
            "window cloud subsampled from {} to {} points for persistence",
            window_cloud.len(),
            cfg.subsample_cap
        ));
        let sub = tda::subsample_maxmin(window_cloud, cfg.subsample_cap, cfg.seed)?;
        let sub_dist = geometry::pairwise_distances(&sub);
        tda::rips_persistence_h1(&sub_dist, cfg.field_char, RipsThreshold::Enclosing)?
    } else {
        tda::rips_persistence_h1(&dist, cfg.field_char, RipsThreshold::Enclosing)?
    };

    if diagram.dominant().is_none() {
        return Err(Error::NoCycles(": persistence diagram is empty".into()));
    }

    let scale = tda::select_scale(&diagram, cfg.alpha)?;
    let graph = spectral::build_adjacency(&dist, scale.sigma, cfg.mode, cfg.kernel)?;
    let mut phases = spectral::assign_phases(&graph.laplacian, 10)?;
    if phases.spectrum_truncated {
        warnings.push(format!(
            "only {} nonzero eigenvalues available",
            phases.eigenvalues.len()
        ));
    }
    if phases.eigen_fallback {
        warnings.push("no eigenvector pair with compatible zero crossings; using the two smallest".into());
    }
    let (mut unwrapped, direction) = template::unwrap_and_orient(&phases.phi)?;
    let min = unwrapped.iter().copied().fold(f64::INFINITY, f64::min);
    for v in &mut unwrapped {
        *v -= min;
    }
    phases.phi_unwrapped = unwrapped;
    phases.direction = direction;
    let k_est = template::estimate_cycle_count(&phases.phi_unwrapped, n_frames, window_dim)?;

    Ok(AnalysisResult {
        schema: "1".into(),
        t_est: None,
        confidence: None,
        window_dim,
        pyramid_level: 0,
        frame_count: n_frames,
        diagram: diagram
            .pairs
            .iter()
            .map(|p| DiagramPairJson {
                birth: p.birth,
                death: (!p.is_essential()).then_some(p.death),
            })
            .collect(),
        sigma: scale.sigma,
        alpha: scale.alpha,
        eigenvalues: phases.eigenvalues,
        zero_crossings: phases.zero_crossings,
        chosen_pair: phases.eigen_indices,
        phi: phases.phi,
        phi_unwrapped: phases.phi_unwrapped,
        direction: phases.direction,
        k_est,
        warnings,
    })
}

/// Synthesize the template for an analyzed sequence, using the original
/// full-resolution frames for voting.
pub fn synthesize_template(
    seq: &FrameSequence,
    analysis: &AnalysisResult,
    cfg: &PipelineConfig,
) -> Result<TemplateResult> {
    let t_est = analysis.t_est.unwrap_or(analysis.frame_count as f64 / analysis.k_est);
    let frame_count = cfg
        .template_frames
        .unwrap_or_else(|| (4.0 * t_est.round()) as usize)
        .max(2);
    let ghost_gap = cfg.ghost_gap.unwrap_or(t_est / 4.0).max(1e-9);
    // The reported cycle count divides the phase span by the window count,
    // but the span covers window-count - 1 steps; undo that fencepost so
    // the per-frame phase gap matches the actual slope.
    let w_count = analysis.phi_unwrapped.len();
    let cycle_count = if w_count > 1 {
        analysis.k_est * w_count as f64 / (w_count - 1) as f64
    } else {
        analysis.k_est
    };
    template::synthesize(
        seq,
        &analysis.phi_unwrapped,
        cycle_count,
        analysis.window_dim,
        &TemplateConfig {
            frame_count,
            ghost_gap,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_round_trip_through_json() {
        let cfg = PipelineConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.alpha, 0.5);
        assert_eq!(back.field_char, 47);
        assert_eq!(back.subsample_cap, 400);
        assert_eq!(back.pyramid_level, 2);
        assert!(matches!(back.mode, AdjacencyMode::Weighted));
        assert!(matches!(back.kernel, KernelShape::Gaussian));
    }

    #[test]
    fn analysis_schema_version_is_checked() {
        let mut cfg_json = serde_json::json!({
            "schema": "0",
            "t_est": null,
            "confidence": null,
            "window_dim": 1,
            "pyramid_level": 0,
            "frame_count": 10,
            "diagram": [],
            "sigma": 1.0,
            "alpha": 0.5,
            "eigenvalues": [],
            "zero_crossings": [],
            "chosen_pair": [0, 1],
            "phi": [],
            "phi_unwrapped": [],
            "direction": 1,
            "k_est": 1.0,
            "warnings": []
        });
        assert!(AnalysisResult::from_json(&cfg_json.to_string()).is_err());
        cfg_json["schema"] = serde_json::json!("1");
        assert!(AnalysisResult::from_json(&cfg_json.to_string()).is_ok());
    }
}
