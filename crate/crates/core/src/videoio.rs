//! Frame-sequence and 1D-signal containers plus disk I/O.
//!
//! Frames are dense `H x W x C` tensors of `f64` in row-major `(y, x, channel)`
//! order. A `FrameSequence` with `H = W = C = 1` doubles as the container for
//! 1D signals, so the whole pipeline runs unchanged on time series.
//!
//! Interchange formats:
//! * PNG sequences `frame_%06d.png` plus a `manifest.json` (keys `N, H, W, C,
//!   frame_rate`) — lossy at 8 bits per channel.
//! * A raw container `frames.f32` (little-endian 32-bit floats, row-major)
//!   next to the same manifest — for tests that need exact values.
//! * CSV with one sample per line for 1D signals.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered sequence of same-sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    height: usize,
    width: usize,
    channels: usize,
    frames: Vec<Vec<f64>>,
    pub frame_rate: Option<f64>,
    pub name: String,
}

impl FrameSequence {
    /// Build a sequence, checking the shared-shape and finiteness invariants.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        frames: Vec<Vec<f64>>,
        frame_rate: Option<f64>,
        name: impl Into<String>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        let flat = height * width * channels;
        for (t, frame) in frames.iter().enumerate() {
            if frame.len() != flat {
                return Err(Error::DimensionMismatch {
                    context: format!("frame {t}"),
                    expected: format!("{flat} values"),
                    got: format!("{} values", frame.len()),
                });
            }
            if frame.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("frame {t} contains non-finite values")));
            }
        }
        Ok(FrameSequence {
            height,
            width,
            channels,
            frames,
            frame_rate,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of values per frame (`H * W * C`).
    pub fn flat_dim(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn pixel(&self, t: usize, y: usize, x: usize, c: usize) -> f64 {
        self.frames[t][(y * self.width + x) * self.channels + c]
    }

    /// View a `1 x 1 x 1` sequence as a 1D signal.
    pub fn as_signal(&self) -> Option<Signal1D> {
        if self.height == 1 && self.width == 1 && self.channels == 1 {
            Some(Signal1D {
                samples: self.frames.iter().map(|f| f[0]).collect(),
                name: self.name.clone(),
            })
        } else {
            None
        }
    }
}

/// A finite real-valued time series.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal1D {
    pub samples: Vec<f64>,
    pub name: String,
}

impl Signal1D {
    pub fn new(samples: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("signal must have at least 2 samples"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("signal contains non-finite values"));
        }
        Ok(Signal1D {
            samples,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Wrap the signal as a `1 x 1 x 1` frame sequence.
    pub fn into_frames(self) -> FrameSequence {
        FrameSequence {
            height: 1,
            width: 1,
            channels: 1,
            frames: self.samples.into_iter().map(|v| vec![v]).collect(),
            frame_rate: None,
            name: self.name,
        }
    }
}

/// 5-tap binomial kernel, the classic Gaussian-pyramid filter.
const KERNEL: [f64; 5] = [
    1.0 / 16.0,
    4.0 / 16.0,
    6.0 / 16.0,
    4.0 / 16.0,
    1.0 / 16.0,
];

/// Reflect an index into `[0, n)` without repeating the border sample
/// (`-1 -> 1`, `n -> n - 2`).
fn reflect101(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let m = n as isize;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= m {
            i = 2 * (m - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Blur one frame with the separable binomial kernel, then keep every other
/// row and column.
fn reduce_frame(frame: &[f64], h: usize, w: usize, c: usize) -> (Vec<f64>, usize, usize) {
    // Horizontal pass.
    let mut tmp = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, coef) in KERNEL.iter().enumerate() {
                    let xs = reflect101(x as isize + k as isize - 2, w);
                    acc += coef * frame[(y * w + xs) * c + ch];
                }
                tmp[(y * w + x) * c + ch] = acc;
            }
        }
    }
    // Vertical pass.
    let mut blurred = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, coef) in KERNEL.iter().enumerate() {
                    let ys = reflect101(y as isize + k as isize - 2, h);
                    acc += coef * tmp[(ys * w + x) * c + ch];
                }
                blurred[(y * w + x) * c + ch] = acc;
            }
        }
    }
    // Decimate by 2, keeping even indices.
    let nh = h.div_ceil(2);
    let nw = w.div_ceil(2);
    let mut out = vec![0.0; nh * nw * c];
    for y in 0..nh {
        for x in 0..nw {
            for ch in 0..c {
                out[(y * nw + x) * c + ch] = blurred[(2 * y * w + 2 * x) * c + ch];
            }
        }
    }
    (out, nh, nw)
}

/// Smooth-and-decimate every frame `level` times. Level 0 is the identity.
pub fn gaussian_pyramid_level(seq: &FrameSequence, level: u32) -> Result<FrameSequence> {
    let min_dim = seq.height.min(seq.width);
    if (1usize << level) > min_dim {
        return Err(Error::invalid(format!(
            "pyramid level {level} too large for {}x{} frames",
            seq.height, seq.width
        )));
    }
    if level == 0 {
        return Ok(seq.clone());
    }
    let c = seq.channels;
    let results: Vec<(Vec<f64>, usize, usize)> = seq
        .frames
        .par_iter()
        .map(|frame| {
            let mut data = frame.clone();
            let (mut h, mut w) = (seq.height, seq.width);
            for _ in 0..level {
                let (next, nh, nw) = reduce_frame(&data, h, w, c);
                data = next;
                h = nh;
                w = nw;
            }
            (data, h, w)
        })
        .collect();
    let (h, w) = results.first().map(|r| (r.1, r.2)).unwrap_or_else(|| {
        let mut h = seq.height;
        let mut w = seq.width;
        for _ in 0..level {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        (h, w)
    });
    Ok(FrameSequence {
        height: h,
        width: w,
        channels: c,
        frames: results.into_iter().map(|r| r.0).collect(),
        frame_rate: seq.frame_rate,
        name: seq.name.clone(),
    })
}

/// Largest pyramid level the frame size admits (`2^level <= min(H, W)`).
pub fn max_pyramid_level(seq: &FrameSequence) -> u32 {
    let min_dim = seq.height.min(seq.width);
    (usize::BITS - 1 - min_dim.leading_zeros()).min(31)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "H")]
    h: usize,
    #[serde(rename = "W")]
    w: usize,
    #[serde(rename = "C")]
    c: usize,
    frame_rate: Option<f64>,
}

/// Write `frame_%06d.png` files plus `manifest.json`.
///
/// Values are clamped to `[0, 1]` and quantized to 8 bits, so a
/// write-then-load round trip is exact only to `1/255`.
pub fn write_frames(seq: &FrameSequence, dir: &Path) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::invalid("refusing to write an empty frame sequence"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, frame) in seq.frames.iter().enumerate() {
        let path = dir.join(format!("frame_{t:06}.png"));
        let bytes: Vec<u8> = frame
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let result = match seq.channels {
            1 => image::GrayImage::from_raw(seq.width as u32, seq.height as u32, bytes)
                .expect("sized buffer")
                .save(&path),
            _ => image::RgbImage::from_raw(seq.width as u32, seq.height as u32, bytes)
                .expect("sized buffer")
                .save(&path),
        };
        result.map_err(|e| Error::Image {
            path: path.clone(),
            source: e,
        })?;
    }
    write_manifest(seq, dir)
}

fn write_manifest(seq: &FrameSequence, dir: &Path) -> Result<()> {
    let manifest = Manifest {
        n: seq.len(),
        h: seq.height,
        w: seq.width,
        c: seq.channels,
        frame_rate: seq.frame_rate,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(path, e))
}

/// Write the lossless raw container: `frames.f32` + `manifest.json`.
pub fn write_frames_raw(seq: &FrameSequence, dir: &Path) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::invalid("refusing to write an empty frame sequence"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("frames.f32");
    let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut buf = Vec::with_capacity(seq.len() * seq.flat_dim() * 4);
    for frame in &seq.frames {
        for &v in frame {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    file.write_all(&buf).map_err(|e| Error::io(&path, e))?;
    write_manifest(seq, dir)
}

/// Load a frame directory: the raw container if `frames.f32` is present,
/// otherwise the lexicographically sorted PNG files.
pub fn load_frame_dir(dir: &Path) -> Result<FrameSequence> {
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frames".to_string());
    if dir.join("frames.f32").exists() {
        return load_raw(dir, name);
    }
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|ext| ext.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Malformed {
            path: dir.to_path_buf(),
            reason: "no .png frames and no frames.f32 container".into(),
        });
    }

    let mut frames = Vec::with_capacity(paths.len());
    let mut dims: Option<(usize, usize, usize)> = None;
    for path in &paths {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.clone(),
            source: e,
        })?;
        let gray = matches!(
            img.color(),
            image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16
        );
        let (w, h, c, data): (usize, usize, usize, Vec<f64>) = if gray {
            let g = img.to_luma8();
            (
                g.width() as usize,
                g.height() as usize,
                1,
                g.into_raw().into_iter().map(|b| b as f64 / 255.0).collect(),
            )
        } else {
            let rgb = img.to_rgb8();
            (
                rgb.width() as usize,
                rgb.height() as usize,
                3,
                rgb.into_raw().into_iter().map(|b| b as f64 / 255.0).collect(),
            )
        };
        match dims {
            None => dims = Some((h, w, c)),
            Some(d) if d != (h, w, c) => {
                return Err(Error::DimensionMismatch {
                    context: path.display().to_string(),
                    expected: format!("{}x{}x{}", d.0, d.1, d.2),
                    got: format!("{h}x{w}x{c}"),
                });
            }
            _ => {}
        }
        frames.push(data);
    }
    let (h, w, c) = dims.expect("at least one frame");
    let manifest = read_manifest(dir)?;
    FrameSequence::new(h, w, c, frames, manifest.and_then(|m| m.frame_rate), name)
}

fn read_manifest(dir: &Path) -> Result<Option<Manifest>> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path,
        reason: e.to_string(),
    })?;
    Ok(Some(manifest))
}

fn load_raw(dir: &Path, name: String) -> Result<FrameSequence> {
    let manifest = read_manifest(dir)?.ok_or_else(|| Error::Malformed {
        path: dir.to_path_buf(),
        reason: "frames.f32 present but manifest.json missing".into(),
    })?;
    let path = dir.join("frames.f32");
    let mut bytes = Vec::new();
    fs::File::open(&path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(&path, e))?;
    let flat = manifest.h * manifest.w * manifest.c;
    let expected = manifest.n * flat * 4;
    if bytes.len() != expected {
        return Err(Error::Malformed {
            path,
            reason: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let frames = (0..manifest.n)
        .map(|t| {
            bytes[t * flat * 4..(t + 1) * flat * 4]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect()
        })
        .collect();
    FrameSequence::new(
        manifest.h,
        manifest.w,
        manifest.c,
        frames,
        manifest.frame_rate,
        name,
    )
}

/// Read a 1D signal: one sample per line, blank lines skipped.
pub fn load_signal_csv(path: &Path) -> Result<Signal1D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let v: f64 = trimmed.parse().map_err(|_| Error::Malformed {
            path: path.to_path_buf(),
            reason: format!("line {}: not a number: {trimmed:?}", lineno + 1),
        })?;
        samples.push(v);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "signal".to_string());
    Signal1D::new(samples, name)
}

pub fn write_signal_csv(signal: &Signal1D, path: &Path) -> Result<()> {
    let mut text = String::new();
    for v in &signal.samples {
        text.push_str(&format!("{v}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
