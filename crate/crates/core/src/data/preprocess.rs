//! Temporal cropping, uniform frame subsampling, resizing and per-channel
//! normalization of decoded clips.

use std::path::PathBuf;

use candle_core::{Device, Tensor};
use image::imageops::{self, FilterType};
use image::Rgb32FImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Frames kept per clip.
    pub frames: usize,
    /// Output height and width.
    pub size: u32,
    /// Length of the temporal crop, seconds.
    pub window_seconds: f64,
    /// Per-channel mean of pixel values in `[0, 1]`.
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for PreprocessConfig {
    /// 32 frames at 256x256 with the Kinetics normalization convention.
    fn default() -> Self {
        Self {
            frames: 32,
            size: 256,
            window_seconds: 2.0,
            mean: [0.45, 0.45, 0.45],
            std: [0.225, 0.225, 0.225],
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.size == 0 {
            return Err(Error::Config("frames and size must be positive".into()));
        }
        if !(self.window_seconds > 0.0) {
            return Err(Error::Config("window must be positive".into()));
        }
        if self.std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("channel std must be positive".into()));
        }
        Ok(())
    }
}

/// Decoded RGB frames with pixel values in `[0, 1]`. Frame `i` is shown at
/// `start_time + i / fps` seconds of the source video.
#[derive(Debug, Clone)]
pub struct VideoFrames {
    pub source: PathBuf,
    pub fps: f64,
    pub start_time: f64,
    pub frames: Vec<Rgb32FImage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CropMode {
    /// Uniformly random window start (training).
    Random,
    /// Window centred in the clip (evaluation).
    Center,
}

/// A model-ready clip laid out as `(channels, frames, height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedClip {
    pub data: Vec<f32>,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl PreprocessedClip {
    pub fn shape(&self) -> [usize; 4] {
        [3, self.frames, self.height, self.width]
    }

    pub fn to_tensor(&self, device: &Device) -> Result<Tensor> {
        Ok(Tensor::from_slice(&self.data, &self.shape(), device)?)
    }
}

/// `floor(j * (available - 1) / (count - 1))` for `j = 0..count`.
pub fn subsample_indices(available: usize, count: usize) -> Vec<usize> {
    match (available, count) {
        (0, _) | (_, 0) => Vec::new(),
        (_, 1) => vec![0],
        _ => (0..count)
            .map(|j| j * (available - 1) / (count - 1))
            .collect(),
    }
}

/// Pick the crop window inside `clip`. A clip shorter than the window is
/// used whole.
pub fn choose_window<R: Rng + ?Sized>(
    clip: (f64, f64),
    window: f64,
    mode: CropMode,
    rng: &mut R,
) -> (f64, f64) {
    let (start, end) = clip;
    let slack = (end - start - window).max(0.0);
    let offset = match mode {
        CropMode::Center => slack / 2.0,
        CropMode::Random if slack > 0.0 => rng.random_range(0.0..=slack),
        CropMode::Random => 0.0,
    };
    let ws = start + offset;
    (ws, (ws + window).min(end))
}

/// Crop, subsample, resize and normalize a clip.
pub fn preprocess_clip<R: Rng + ?Sized>(
    video: &VideoFrames,
    clip: (f64, f64),
    mode: CropMode,
    config: &PreprocessConfig,
    rng: &mut R,
) -> Result<PreprocessedClip> {
    config.validate()?;
    let (ws, we) = choose_window(clip, config.window_seconds, mode, rng);
    let to_index = |t: f64| -> usize {
        let raw = ((t - video.start_time) * video.fps - 1e-9).ceil();
        raw.clamp(0.0, video.frames.len() as f64) as usize
    };
    let (lo, hi) = (to_index(ws), to_index(we));
    if hi <= lo {
        return Err(Error::Decode {
            path: video.source.clone(),
            reason: format!("no frames in window [{ws:.3}, {we:.3})"),
        });
    }
    let available = hi - lo;
    if available < config.frames {
        log::warn!(
            "{}: only {available} frames in window, repeating frames to reach {}",
            video.source.display(),
            config.frames
        );
    }

    let size = config.size as usize;
    let plane = size * size;
    let t = config.frames;
    let mut data = vec![0f32; 3 * t * plane];
    for (j, idx) in subsample_indices(available, t).into_iter().enumerate() {
        let frame = &video.frames[lo + idx];
        let resized;
        let frame = if frame.width() == config.size && frame.height() == config.size {
            frame
        } else {
            resized = imageops::resize(frame, config.size, config.size, FilterType::Triangle);
            &resized
        };
        for (p, px) in frame.pixels().enumerate() {
            for c in 0..3 {
                data[(c * t + j) * plane + p] = (px[c] - config.mean[c]) / config.std[c];
            }
        }
    }
    Ok(PreprocessedClip {
        data,
        frames: t,
        height: size,
        width: size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_video(n: usize, fps: f64, value: [f32; 3], side: u32) -> VideoFrames {
        VideoFrames {
            source: "mem".into(),
            fps,
            start_time: 0.0,
            frames: (0..n)
                .map(|_| Rgb32FImage::from_pixel(side, side, image::Rgb(value)))
                .collect(),
        }
    }

    #[test]
    fn sixty_three_frames_take_even_indices() {
        let idx = subsample_indices(63, 32);
        let expected: Vec<usize> = (0..32).map(|j| 2 * j).collect();
        assert_eq!(idx, expected);
    }

    #[test]
    fn mean_valued_clip_normalizes_to_zero() {
        let cfg = PreprocessConfig::default();
        let video = constant_video(90, 30.0, cfg.mean, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = preprocess_clip(&video, (0.0, 3.0), CropMode::Random, &cfg, &mut rng).unwrap();
        assert_eq!(out.shape(), [3, 32, 256, 256]);
        assert!(out.data.iter().all(|&v| v.abs() < 1e-6));
    }

    #[test]
    fn too_few_frames_are_repeated() {
        let cfg = PreprocessConfig {
            size: 8,
            ..Default::default()
        };
        let video = constant_video(10, 5.0, [0.5; 3], 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = preprocess_clip(&video, (0.0, 2.0), CropMode::Center, &cfg, &mut rng).unwrap();
        assert_eq!(out.frames, 32);
    }

    #[test]
    fn no_frames_is_a_decode_error() {
        let cfg = PreprocessConfig::default();
        let video = constant_video(10, 5.0, [0.5; 3], 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = preprocess_clip(&video, (10.0, 12.0), CropMode::Center, &cfg, &mut rng);
        assert!(matches!(err, Err(Error::Decode { .. })));
    }

    #[test]
    fn centered_window_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(choose_window((1.0, 4.0), 2.0, CropMode::Center, &mut rng), (1.5, 3.5));
        let (a, b) = choose_window((1.0, 4.0), 2.0, CropMode::Random, &mut rng);
        assert!(a >= 1.0 && b <= 4.0 && (b - a - 2.0).abs() < 1e-12);
    }
}
