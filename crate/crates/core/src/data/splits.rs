//! Stratified, seeded train/val/test assignment and the split manifest CSV.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clips::{ClipRecord, Split};
use super::taxonomy::{ExerciseTaxonomy, MuscleMap};
use crate::error::{Error, Result};

/// Split proportions. Normalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    /// Proportions 1227 : 443 : 442 of the reference corpus split.
    fn default() -> Self {
        Self {
            train: 1227.0 / 2112.0,
            val: 443.0 / 2112.0,
            test: 442.0 / 2112.0,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let parts = [train, val, test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::Config(format!(
                "split ratios must be positive, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        Ok(Self {
            train: train / sum,
            val: val / sum,
            test: test / sum,
        })
    }

    fn as_array(&self) -> [f64; 3] {
        let sum = self.train + self.val + self.test;
        [self.train / sum, self.val / sum, self.test / sum]
    }
}

/// Hamilton apportionment of `total` units over `weights`; ties go to the
/// lower index.
pub(crate) fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let ideal: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    // absorb float noise so exact quotas are not pushed over by a remainder of 1e-13
    let floor = |x: f64| (x + 1e-9).floor();
    let mut counts: Vec<usize> = ideal.iter().map(|&x| floor(x) as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - floor(ideal[a]);
        let rb = ideal[b] - floor(ideal[b]);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Assign every clip to exactly one split, stratified by exercise class so
/// each class lands in every split. Totals follow the global apportionment of
/// the ratios whenever the per-class minimums allow it.
pub fn build_splits(clips: &[ClipRecord], ratios: SplitRatios, seed: u64) -> Result<Vec<Split>> {
    let ratios = ratios.as_array();
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, clip) in clips.iter().enumerate() {
        by_class.entry(clip.exercise_id).or_default().push(i);
    }
    for (&class, members) in &by_class {
        if members.len() < 3 {
            return Err(Error::Stratification {
                class: format!("exercise id {class}"),
                count: members.len(),
            });
        }
    }

    let targets = largest_remainder(clips.len(), &ratios);
    let classes: Vec<usize> = by_class.keys().copied().collect();
    let sizes: Vec<usize> = classes.iter().map(|c| by_class[c].len()).collect();

    // floor allocation with at least one clip per split
    let mut alloc: Vec<[usize; 3]> = sizes
        .iter()
        .map(|&n| {
            let mut a = [0usize; 3];
            for s in 0..3 {
                a[s] = ((n as f64 * ratios[s]).floor() as usize).max(1);
            }
            while a.iter().sum::<usize>() > n {
                let s = (0..3).filter(|&s| a[s] > 1).max_by_key(|&s| (a[s], 3 - s)).unwrap();
                a[s] -= 1;
            }
            a
        })
        .collect();

    let mut remaining: Vec<usize> = sizes
        .iter()
        .zip(&alloc)
        .map(|(n, a)| n - a.iter().sum::<usize>())
        .collect();
    let mut deficit: [i64; 3] = [0; 3];
    for s in 0..3 {
        deficit[s] = targets[s] as i64 - alloc.iter().map(|a| a[s] as i64).sum::<i64>();
    }

    while remaining.iter().any(|&r| r > 0) {
        let mut best: Option<(bool, f64, usize, usize)> = None;
        for (c, &r) in remaining.iter().enumerate() {
            if r == 0 {
                continue;
            }
            for s in 0..3 {
                let open = deficit[s] > 0;
                let frac = sizes[c] as f64 * ratios[s] - alloc[c][s] as f64;
                let better = match best {
                    None => true,
                    Some((bo, bf, _, _)) => (open, frac) > (bo, bf),
                };
                if better {
                    best = Some((open, frac, c, s));
                }
            }
        }
        let (_, _, c, s) = best.expect("some class has remaining clips");
        alloc[c][s] += 1;
        remaining[c] -= 1;
        deficit[s] -= 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![Split::Train; clips.len()];
    for (c, class) in classes.iter().enumerate() {
        let mut members = by_class[class].clone();
        members.sort_by(|&a, &b| clips[a].clip_id.cmp(&clips[b].clip_id));
        members.shuffle(&mut rng);
        let mut it = members.into_iter();
        for split in Split::ALL {
            for idx in it.by_ref().take(alloc[c][split.index()]) {
                assignment[idx] = split;
            }
        }
    }
    Ok(assignment)
}

pub fn split_counts(splits: &[Split]) -> [usize; 3] {
    let mut counts = [0; 3];
    for s in splits {
        counts[s.index()] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestRow {
    clip_id: String,
    source_video: String,
    start: String,
    end: String,
    exercise_id: usize,
    split: Split,
}

/// Write the split manifest: `clip_id,source_video,start,end,exercise_id,split`
/// with times at millisecond precision.
pub fn write_manifest<W: Write>(writer: W, clips: &[ClipRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for clip in clips {
        let split = clip.split.ok_or_else(|| {
            Error::InvalidInput(format!("clip {} has no split assigned", clip.clip_id))
        })?;
        csv.serialize(ManifestRow {
            clip_id: clip.clip_id.clone(),
            source_video: clip.source_video.clone(),
            start: format!("{:.3}", clip.start_time),
            end: format!("{:.3}", clip.end_time),
            exercise_id: clip.exercise_id,
            split,
        })?;
    }
    csv.flush()?;
    Ok(())
}

/// Read a manifest back, re-deriving muscle vectors from the exercise ids.
pub fn read_manifest<R: Read>(
    reader: R,
    taxonomy: &ExerciseTaxonomy,
    muscles: &MuscleMap,
) -> Result<Vec<ClipRecord>> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in csv.deserialize() {
        let row: ManifestRow = row?;
        let name = taxonomy.name(row.exercise_id).ok_or_else(|| Error::Lookup {
            kind: "exercise id",
            name: row.exercise_id.to_string(),
        })?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad time `{s}`: {e}")))
        };
        out.push(ClipRecord {
            clip_id: row.clip_id,
            source_video: row.source_video,
            start_time: parse(&row.start)?,
            end_time: parse(&row.end)?,
            exercise_id: row.exercise_id,
            muscle_vector: muscles.encode(name)?,
            split: Some(row.split),
        });
    }
    Ok(out)
}

/// Per-class clip counts for each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub classes: Vec<ClassCounts>,
    pub totals: SplitTotals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub exercise: String,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTotals {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub total: usize,
}

pub fn summarize(clips: &[ClipRecord], taxonomy: &ExerciseTaxonomy) -> SplitSummary {
    let mut per = vec![[0usize; 3]; taxonomy.len()];
    for clip in clips {
        if let (Some(split), Some(row)) = (clip.split, per.get_mut(clip.exercise_id)) {
            row[split.index()] += 1;
        }
    }
    let classes: Vec<ClassCounts> = per
        .iter()
        .enumerate()
        .map(|(id, c)| ClassCounts {
            exercise: taxonomy.name(id).unwrap_or_default().to_string(),
            train: c[0],
            val: c[1],
            test: c[2],
        })
        .collect();
    let sum = |s: usize| per.iter().map(|c| c[s]).sum::<usize>();
    SplitSummary {
        totals: SplitTotals {
            train: sum(0),
            val: sum(1),
            test: sum(2),
            total: sum(0) + sum(1) + sum(2),
        },
        classes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clips(class_sizes: &[usize]) -> Vec<ClipRecord> {
        let mut out = Vec::new();
        for (class, &n) in class_sizes.iter().enumerate() {
            for i in 0..n {
                out.push(ClipRecord {
                    clip_id: format!("c{class}/v{i}#0"),
                    source_video: format!("c{class}/v{i}.mp4"),
                    start_time: 0.0,
                    end_time: 2.0,
                    exercise_id: class,
                    muscle_vector: vec![1],
                    split: None,
                });
            }
        }
        out
    }

    #[test]
    fn single_class_exact_proportions() {
        let c = clips(&[10]);
        let s = build_splits(&c, SplitRatios::new(0.8, 0.1, 0.1).unwrap(), 1).unwrap();
        assert_eq!(split_counts(&s), [8, 1, 1]);
    }

    #[test]
    fn too_small_class() {
        let c = clips(&[10, 2]);
        let err = build_splits(&c, SplitRatios::default(), 0).unwrap_err();
        assert!(matches!(err, Error::Stratification { count: 2, .. }));
    }

    #[test]
    fn every_class_in_every_split() {
        let c = clips(&[3, 4, 50, 7]);
        let s = build_splits(&c, SplitRatios::default(), 9).unwrap();
        for class in 0..4 {
            let mut seen = [false; 3];
            for (clip, split) in c.iter().zip(&s) {
                if clip.exercise_id == class {
                    seen[split.index()] = true;
                }
            }
            assert_eq!(seen, [true; 3], "class {class}");
        }
    }

    #[test]
    fn largest_remainder_totals() {
        assert_eq!(largest_remainder(2112, &[1227.0, 443.0, 442.0]), vec![1227, 443, 442]);
        // the reference split sums to 2112; a 2113th clip lands in train
        assert_eq!(largest_remainder(2113, &[1227.0, 443.0, 442.0]), vec![1228, 443, 442]);
        assert_eq!(largest_remainder(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
    }

    #[test]
    fn manifest_round_trip() {
        let tax = ExerciseTaxonomy::standard();
        let muscles = MuscleMap::standard();
        let mut c = clips(&[3, 3]);
        for clip in &mut c {
            clip.muscle_vector = muscles.encode(tax.name(clip.exercise_id).unwrap()).unwrap();
            clip.end_time = 2.5;
        }
        let s = build_splits(&c, SplitRatios::default(), 3).unwrap();
        for (clip, split) in c.iter_mut().zip(s) {
            clip.split = Some(split);
        }
        let mut buf = Vec::new();
        write_manifest(&mut buf, &c).unwrap();
        let back = read_manifest(buf.as_slice(), &tax, &muscles).unwrap();
        assert_eq!(back, c);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("clip_id,source_video,start,end,exercise_id,split\n"));
    }
}
