//! Synthetic clips for sanity runs: a tinted square sliding across a noisy
//! background, with slide direction and tint determined by the class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::preprocess::{CropMode, PreprocessedClip};
use super::taxonomy::MuscleMap;
use super::{ClipDataset, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ToyDataset {
    classes: Vec<usize>,
    muscles: Vec<Vec<u8>>,
    len: usize,
    frames: usize,
    size: usize,
    noise: f32,
    seed: u64,
}

impl ToyDataset {
    /// `len` clips cycling through the exercise ids in `classes`.
    pub fn new(len: usize, classes: &[usize], frames: usize, size: usize, seed: u64) -> Result<Self> {
        if classes.is_empty() || frames == 0 || size < 4 {
            return Err(Error::Config("toy dataset needs classes, frames and size >= 4".into()));
        }
        let map = MuscleMap::standard();
        let tax = map.taxonomy();
        let muscles = classes
            .iter()
            .map(|&c| {
                let name = tax.name(c).ok_or_else(|| Error::Lookup {
                    kind: "exercise id",
                    name: c.to_string(),
                })?;
                map.encode(name)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            classes: classes.to_vec(),
            muscles,
            len,
            frames,
            size,
            noise: 0.3,
            seed,
        })
    }

    pub fn with_noise(mut self, noise: f32) -> Self {
        self.noise = noise;
        self
    }

    pub fn exercise_of(&self, index: usize) -> usize {
        self.classes[index % self.classes.len()]
    }

    fn render(&self, index: usize) -> PreprocessedClip {
        let slot = index % self.classes.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (t, s) = (self.frames, self.size);
        let plane = s * s;
        let noise = Normal::new(0.0f32, self.noise.max(1e-6)).unwrap();
        let mut data: Vec<f32> = (0..3 * t * plane).map(|_| noise.sample(&mut rng)).collect();

        let side = (s / 4).max(1);
        let y0 = rng.random_range(0..=s - side);
        let travel = (s - side) as f32;
        let channel = slot % 3;
        let rightward = slot % 2 == 0;
        for f in 0..t {
            let progress = if t > 1 { f as f32 / (t - 1) as f32 } else { 0.5 };
            let x0 = if rightward { progress * travel } else { (1.0 - progress) * travel } as usize;
            for y in y0..y0 + side {
                for x in x0..x0 + side {
                    data[(channel * t + f) * plane + y * s + x] += 2.0;
                }
            }
        }
        PreprocessedClip {
            data,
            frames: t,
            height: s,
            width: s,
        }
    }
}

impl ClipDataset for ToyDataset {
    fn len(&self) -> usize {
        self.len
    }

    fn sample(&self, index: usize, _mode: CropMode, _seed: u64) -> Result<Sample> {
        if index >= self.len {
            return Err(Error::InvalidInput(format!("toy index {index} out of range")));
        }
        Ok(Sample {
            clip_id: format!("toy/{index:04}"),
            clip: self.render(index),
            exercise_id: self.exercise_of(index),
            muscles: self.muscles[index % self.classes.len()].clone(),
        })
    }
}
