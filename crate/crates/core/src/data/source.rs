//! Video sources: container-level duration probing and frame decoding.
//!
//! Two on-disk forms are understood. A video *file* is probed for duration by
//! reading the `mvhd` box of an ISO-BMFF container (mp4/mov/m4v) and decoded
//! by piping raw RGB frames out of an `ffmpeg` executable on `PATH`. A *frame
//! directory* holds pre-extracted images (any format the `image` crate reads)
//! plus a `frames.json` of the form `{"fps": 30.0}`; frames sort by file name.

use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::process::Command;

use image::Rgb32FImage;
use serde::Deserialize;

use super::preprocess::VideoFrames;
use crate::error::{Error, Result};

pub const VIDEO_EXTENSIONS: &[&str] = &["mp4", "mov", "m4v", "avi", "mkv", "webm"];
pub const FRAME_DIR_META: &str = "frames.json";

pub trait FrameSource: Send + Sync {
    /// Length of the video in seconds.
    fn duration(&self, video: &Path) -> Result<f64>;

    /// Frames whose timestamps fall in `[start, end)`.
    fn decode(&self, video: &Path, start: f64, end: f64) -> Result<VideoFrames>;
}

fn decode_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Is this path something a [`FrameSource`] can open?
pub fn is_video(path: &Path) -> bool {
    if path.is_dir() {
        return path.join(FRAME_DIR_META).is_file();
    }
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| VIDEO_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Duration from the movie header of an ISO-BMFF file.
pub fn mp4_duration(path: &Path) -> Result<f64> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    let mut reader = BufReader::new(file);
    let moov = find_box(&mut reader, 0, len, b"moov")
        .map_err(|e| decode_err(path, e.to_string()))?
        .ok_or_else(|| decode_err(path, "no moov box"))?;
    let mvhd = find_box(&mut reader, moov.0, moov.1, b"mvhd")
        .map_err(|e| decode_err(path, e.to_string()))?
        .ok_or_else(|| decode_err(path, "no mvhd box"))?;
    reader.seek(SeekFrom::Start(mvhd.0))?;
    let mut version = [0u8; 4];
    reader.read_exact(&mut version)?;
    let (timescale, duration) = if version[0] == 1 {
        let mut buf = [0u8; 28];
        reader.read_exact(&mut buf)?;
        (
            u32::from_be_bytes(buf[16..20].try_into().unwrap()) as f64,
            u64::from_be_bytes(buf[20..28].try_into().unwrap()) as f64,
        )
    } else {
        let mut buf = [0u8; 16];
        reader.read_exact(&mut buf)?;
        (
            u32::from_be_bytes(buf[8..12].try_into().unwrap()) as f64,
            u32::from_be_bytes(buf[12..16].try_into().unwrap()) as f64,
        )
    };
    if timescale == 0.0 {
        return Err(decode_err(path, "mvhd timescale is zero"));
    }
    Ok(duration / timescale)
}

/// Scan sibling boxes in `[start, end)` for `kind`; returns the payload range.
fn find_box<R: Read + Seek>(
    reader: &mut R,
    start: u64,
    end: u64,
    kind: &[u8; 4],
) -> std::io::Result<Option<(u64, u64)>> {
    let mut pos = start;
    while pos + 8 <= end {
        reader.seek(SeekFrom::Start(pos))?;
        let mut header = [0u8; 8];
        reader.read_exact(&mut header)?;
        let mut size = u32::from_be_bytes(header[..4].try_into().unwrap()) as u64;
        let mut header_len = 8;
        if size == 1 {
            let mut large = [0u8; 8];
            reader.read_exact(&mut large)?;
            size = u64::from_be_bytes(large);
            header_len = 16;
        } else if size == 0 {
            size = end - pos;
        }
        if size < header_len || pos + size > end {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("malformed box at offset {pos}"),
            ));
        }
        if &header[4..8] == kind {
            return Ok(Some((pos + header_len, pos + size)));
        }
        pos += size;
    }
    Ok(None)
}

#[derive(Debug, Deserialize)]
struct FrameDirMeta {
    fps: f64,
}

fn frame_dir_listing(dir: &Path) -> Result<(f64, Vec<PathBuf>)> {
    let meta: FrameDirMeta =
        serde_json::from_str(&std::fs::read_to_string(dir.join(FRAME_DIR_META))?)?;
    if !(meta.fps > 0.0) {
        return Err(decode_err(dir, "fps must be positive"));
    }
    let mut frames: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().map(|n| n != FRAME_DIR_META).unwrap_or(false) && p.is_file())
        .collect();
    frames.sort();
    Ok((meta.fps, frames))
}

/// Opens frame directories and video files; files are decoded with `ffmpeg`.
#[derive(Debug, Clone, Default)]
pub struct AutoSource {
    pub ffmpeg: Option<PathBuf>,
}

impl AutoSource {
    fn ffmpeg(&self) -> PathBuf {
        self.ffmpeg.clone().unwrap_or_else(|| "ffmpeg".into())
    }

    fn probe_stream(&self, video: &Path) -> Result<(u32, u32, f64)> {
        let out = Command::new("ffprobe")
            .args(["-v", "error", "-select_streams", "v:0"])
            .args(["-show_entries", "stream=width,height,r_frame_rate"])
            .args(["-of", "csv=p=0"])
            .arg(video)
            .output()
            .map_err(|e| decode_err(video, format!("cannot run ffprobe: {e}")))?;
        let text = String::from_utf8_lossy(&out.stdout);
        let fields: Vec<&str> = text.trim().split(',').collect();
        if !out.status.success() || fields.len() < 3 {
            return Err(decode_err(video, format!("ffprobe failed: {text}")));
        }
        let w = fields[0].parse().map_err(|_| decode_err(video, "bad width"))?;
        let h = fields[1].parse().map_err(|_| decode_err(video, "bad height"))?;
        let fps = match fields[2].split_once('/') {
            Some((n, d)) => {
                let n: f64 = n.parse().unwrap_or(0.0);
                let d: f64 = d.parse().unwrap_or(1.0);
                n / d
            }
            None => fields[2].parse().unwrap_or(0.0),
        };
        if !(fps > 0.0) {
            return Err(decode_err(video, "stream has no frame rate"));
        }
        Ok((w, h, fps))
    }
}

impl FrameSource for AutoSource {
    fn duration(&self, video: &Path) -> Result<f64> {
        if video.is_dir() {
            let (fps, frames) = frame_dir_listing(video)?;
            return Ok(frames.len() as f64 / fps);
        }
        match mp4_duration(video) {
            Ok(d) => Ok(d),
            Err(first) => {
                let out = Command::new("ffprobe")
                    .args(["-v", "error", "-show_entries", "format=duration"])
                    .args(["-of", "default=noprint_wrappers=1:nokey=1"])
                    .arg(video)
                    .output();
                match out {
                    Ok(out) if out.status.success() => String::from_utf8_lossy(&out.stdout)
                        .trim()
                        .parse()
                        .map_err(|_| first),
                    _ => Err(first),
                }
            }
        }
    }

    fn decode(&self, video: &Path, start: f64, end: f64) -> Result<VideoFrames> {
        if video.is_dir() {
            let (fps, files) = frame_dir_listing(video)?;
            let first = ((start * fps) - 1e-9).ceil().max(0.0) as usize;
            let last = (((end * fps) - 1e-9).ceil().max(0.0) as usize).min(files.len());
            let frames = files
                .get(first..last.max(first))
                .unwrap_or_default()
                .iter()
                .map(|p| Ok(image::open(p)?.into_rgb32f()))
                .collect::<Result<Vec<_>>>()?;
            return Ok(VideoFrames {
                source: video.to_path_buf(),
                fps,
                start_time: first as f64 / fps,
                frames,
            });
        }

        let (w, h, fps) = self.probe_stream(video)?;
        let out = Command::new(self.ffmpeg())
            .args(["-v", "error", "-ss", &format!("{start:.3}")])
            .arg("-i")
            .arg(video)
            .args(["-t", &format!("{:.3}", (end - start).max(0.0))])
            .args(["-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
            .output()
            .map_err(|e| decode_err(video, format!("cannot run ffmpeg: {e}")))?;
        if !out.status.success() {
            return Err(decode_err(
                video,
                String::from_utf8_lossy(&out.stderr).trim().to_string(),
            ));
        }
        let frame_bytes = (w * h * 3) as usize;
        let frames = out
            .stdout
            .chunks_exact(frame_bytes)
            .map(|chunk| {
                let rgb = image::RgbImage::from_raw(w, h, chunk.to_vec()).expect("frame size");
                image::DynamicImage::ImageRgb8(rgb).into_rgb32f()
            })
            .collect::<Vec<Rgb32FImage>>();
        Ok(VideoFrames {
            source: video.to_path_buf(),
            fps,
            start_time: start,
            frames,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Minimal ISO-BMFF file: `ftyp` + `moov/mvhd`.
    pub(crate) fn synthetic_mp4(duration_s: f64) -> Vec<u8> {
        let timescale: u32 = 1000;
        let mut mvhd = Vec::new();
        mvhd.extend_from_slice(&[0, 0, 0, 0]); // version 0, flags
        mvhd.extend_from_slice(&0u32.to_be_bytes());
        mvhd.extend_from_slice(&0u32.to_be_bytes());
        mvhd.extend_from_slice(&timescale.to_be_bytes());
        mvhd.extend_from_slice(&((duration_s * timescale as f64).round() as u32).to_be_bytes());
        mvhd.extend_from_slice(&[0u8; 80]);
        let boxed = |kind: &[u8; 4], payload: &[u8]| {
            let mut b = ((payload.len() + 8) as u32).to_be_bytes().to_vec();
            b.extend_from_slice(kind);
            b.extend_from_slice(payload);
            b
        };
        let mut file = boxed(b"ftyp", b"isom\0\0\0\0isom");
        file.extend(boxed(b"moov", &boxed(b"mvhd", &mvhd)));
        file.extend(boxed(b"mdat", &[0u8; 16]));
        file
    }

    #[test]
    fn reads_mvhd_duration() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mp4");
        std::fs::write(&path, synthetic_mp4(7.5)).unwrap();
        assert!((mp4_duration(&path).unwrap() - 7.5).abs() < 1e-9);
        assert!(is_video(&path));
    }

    #[test]
    fn garbage_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.mp4");
        std::fs::write(&path, b"not a video at all").unwrap();
        assert!(matches!(mp4_duration(&path), Err(Error::Decode { .. })));
    }

    #[test]
    fn frame_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let video = dir.path().join("clip");
        std::fs::create_dir(&video).unwrap();
        std::fs::write(video.join(FRAME_DIR_META), r#"{"fps": 10.0}"#).unwrap();
        for i in 0..25 {
            let img = image::RgbImage::from_pixel(4, 4, image::Rgb([i as u8 * 10, 0, 0]));
            img.save(video.join(format!("{i:05}.png"))).unwrap();
        }
        let src = AutoSource::default();
        assert!(is_video(&video));
        assert!((src.duration(&video).unwrap() - 2.5).abs() < 1e-12);
        let frames = src.decode(&video, 0.5, 1.5).unwrap();
        assert_eq!(frames.frames.len(), 10);
        assert!((frames.start_time - 0.5).abs() < 1e-12);
        let first = frames.frames[0].get_pixel(0, 0)[0];
        assert!((first - 50.0 / 255.0).abs() < 1e-6);
    }
}
