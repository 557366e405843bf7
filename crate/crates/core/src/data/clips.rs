use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest clip, in seconds.
pub const MIN_CLIP_SECONDS: f64 = 2.0;
/// Clips are strictly shorter than this.
pub const MAX_CLIP_SECONDS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split `{other}`"))),
        }
    }
}

/// One labelled clip cut from a source video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub source_video: String,
    pub start_time: f64,
    pub end_time: f64,
    pub exercise_id: usize,
    pub muscle_vector: Vec<u8>,
    pub split: Option<Split>,
}

impl ClipRecord {
    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }

    /// Checks the duration bounds and that at least one muscle bit is set.
    pub fn validate(&self) -> Result<()> {
        let d = self.duration();
        // tolerate float error from tiling
        if !(MIN_CLIP_SECONDS - 1e-9..MAX_CLIP_SECONDS).contains(&d) {
            return Err(Error::InvalidInput(format!(
                "clip {} has duration {d}",
                self.clip_id
            )));
        }
        if !self.muscle_vector.iter().any(|&b| b != 0) {
            return Err(Error::InvalidInput(format!(
                "clip {} has an empty muscle vector",
                self.clip_id
            )));
        }
        Ok(())
    }
}

/// Cut a video into `floor(d / 2)` equal, contiguous clips covering `[0, d]`.
/// Videos shorter than two seconds yield no clips.
pub fn split_video_into_clips(video_duration: f64) -> Result<Vec<(f64, f64)>> {
    if !video_duration.is_finite() || video_duration < 0.0 {
        return Err(Error::InvalidInput(format!(
            "video duration must be a non-negative number, got {video_duration}"
        )));
    }
    if video_duration < MIN_CLIP_SECONDS {
        return Ok(Vec::new());
    }
    let n = (video_duration / MIN_CLIP_SECONDS).floor() as usize;
    let bound = |i: usize| {
        if i == n {
            video_duration
        } else {
            video_duration * i as f64 / n as f64
        }
    };
    Ok((0..n).map(|i| (bound(i), bound(i + 1))).collect())
}
