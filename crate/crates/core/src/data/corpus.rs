//! Corpus scanning (`<root>/<exercise folder>/<video>`) and the dataset view
//! over a split manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::clips::{split_video_into_clips, ClipRecord, Split};
use super::preprocess::{preprocess_clip, CropMode, PreprocessConfig};
use super::source::{is_video, FrameSource};
use super::splits::{build_splits, summarize, SplitRatios, SplitSummary};
use super::taxonomy::{FolderMap, MuscleMap};
use super::{ClipDataset, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub clips: Vec<ClipRecord>,
    pub summary: SplitSummary,
}

/// Scan the dataset root, cut every video into clips, label and split them.
pub fn prepare_corpus(
    root: &Path,
    folders: &FolderMap,
    muscles: &MuscleMap,
    ratios: SplitRatios,
    seed: u64,
    source: &dyn FrameSource,
) -> Result<PreparedCorpus> {
    if !root.is_dir() {
        return Err(Error::Preparation(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let taxonomy = muscles.taxonomy();
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Preparation(format!(
            "dataset root {} has no exercise folders",
            root.display()
        )));
    }

    let mut per_class: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for dir in &dirs {
        let name = dir.file_name().unwrap_or_default().to_string_lossy();
        match folders.canonical(&name) {
            Some(class) => per_class.entry(class.to_string()).or_default().push(dir.clone()),
            None => log::info!("skipping folder `{name}`: not in the taxonomy"),
        }
    }
    for class in taxonomy.classes() {
        if !per_class.contains_key(class) {
            return Err(Error::Preparation(format!(
                "no folder found for class `{class}`"
            )));
        }
    }

    let mut clips = Vec::new();
    for (class, class_dirs) in &per_class {
        let exercise_id = taxonomy.id(class)?;
        let muscle_vector = muscles.encode(class)?;
        for dir in class_dirs {
            let mut videos: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| is_video(p))
                .collect();
            videos.sort();
            for video in videos {
                let duration = match source.duration(&video) {
                    Ok(d) => d,
                    Err(e) => {
                        log::warn!("skipping {}: {e}", video.display());
                        continue;
                    }
                };
                let rel = video
                    .strip_prefix(root)
                    .unwrap_or(&video)
                    .to_string_lossy()
                    .replace('\\', "/");
                for (k, (start, end)) in split_video_into_clips(duration)?.into_iter().enumerate() {
                    clips.push(ClipRecord {
                        clip_id: format!("{rel}#{k}"),
                        source_video: rel.clone(),
                        start_time: start,
                        end_time: end,
                        exercise_id,
                        muscle_vector: muscle_vector.clone(),
                        split: None,
                    });
                }
            }
        }
    }
    clips.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));

    let mut counts = vec![0usize; taxonomy.len()];
    for c in &clips {
        counts[c.exercise_id] += 1;
    }
    for (id, &n) in counts.iter().enumerate() {
        if n < 3 {
            return Err(Error::Stratification {
                class: taxonomy.name(id).unwrap_or_default().to_string(),
                count: n,
            });
        }
    }

    let splits = build_splits(&clips, ratios, seed)?;
    for (clip, split) in clips.iter_mut().zip(splits) {
        clip.split = Some(split);
    }
    let summary = summarize(&clips, &taxonomy);
    Ok(PreparedCorpus { clips, summary })
}

/// Clips of one split, decoded on demand.
pub struct ManifestDataset {
    root: PathBuf,
    clips: Vec<ClipRecord>,
    source: Arc<dyn FrameSource>,
    preprocess: PreprocessConfig,
}

impl ManifestDataset {
    pub fn new(
        root: impl Into<PathBuf>,
        clips: &[ClipRecord],
        split: Split,
        source: Arc<dyn FrameSource>,
        preprocess: PreprocessConfig,
    ) -> Self {
        Self {
            root: root.into(),
            clips: clips
                .iter()
                .filter(|c| c.split == Some(split))
                .cloned()
                .collect(),
            source,
            preprocess,
        }
    }

    pub fn clips(&self) -> &[ClipRecord] {
        &self.clips
    }
}

impl ClipDataset for ManifestDataset {
    fn len(&self) -> usize {
        self.clips.len()
    }

    fn sample(&self, index: usize, mode: CropMode, seed: u64) -> Result<Sample> {
        let clip = &self.clips[index];
        let path = self.root.join(&clip.source_video);
        let frames = self.source.decode(&path, clip.start_time, clip.end_time)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pre = preprocess_clip(
            &frames,
            (clip.start_time, clip.end_time),
            mode,
            &self.preprocess,
            &mut rng,
        )?;
        Ok(Sample {
            clip_id: clip.clip_id.clone(),
            clip: pre,
            exercise_id: clip.exercise_id,
            muscles: clip.muscle_vector.clone(),
        })
    }
}
