//! Corpus ingestion, labelling, splitting and clip preprocessing.

pub mod clips;
pub mod corpus;
pub mod preprocess;
pub mod source;
pub mod splits;
pub mod taxonomy;
pub mod toy;

pub use clips::{split_video_into_clips, ClipRecord, Split};
pub use corpus::{prepare_corpus, ManifestDataset, PreparedCorpus};
pub use preprocess::{
    preprocess_clip, subsample_indices, CropMode, PreprocessConfig, PreprocessedClip, VideoFrames,
};
pub use source::{AutoSource, FrameSource};
pub use splits::{build_splits, read_manifest, write_manifest, SplitRatios, SplitSummary};
pub use taxonomy::{encode_muscle_labels, ExerciseTaxonomy, FolderMap, MuscleMap};
pub use toy::ToyDataset;

use crate::error::Result;

/// One preprocessed clip with both label views.
#[derive(Debug, Clone)]
pub struct Sample {
    pub clip_id: String,
    pub clip: PreprocessedClip,
    pub exercise_id: usize,
    pub muscles: Vec<u8>,
}

/// Random-access clip collection. `seed` drives any random cropping so a
/// sample is reproducible from `(index, mode, seed)`.
pub trait ClipDataset: Send + Sync {
    fn len(&self) -> usize;

    fn sample(&self, index: usize, mode: CropMode, seed: u64) -> Result<Sample>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
