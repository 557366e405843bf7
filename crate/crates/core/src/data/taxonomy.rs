//! Exercise classes, the exercise → muscle-group table, and the mapping from
//! raw dataset folder names onto canonical class names.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of exercise classes.
pub const NUM_EXERCISES: usize = 16;
/// Number of muscle-group labels.
pub const NUM_MUSCLES: usize = 11;

const DEFAULT_MUSCLE_MAP: &str = include_str!("../../assets/muscle_map.json");
const DEFAULT_FOLDER_MAP: &str = include_str!("../../assets/taxonomy.json");

/// Ordered exercise classes. Class ids follow byte-wise alphabetical order of
/// the canonical names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseTaxonomy {
    classes: Vec<String>,
}

impl ExerciseTaxonomy {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut classes: Vec<String> = names.into_iter().map(Into::into).collect();
        classes.sort();
        let before = classes.len();
        classes.dedup();
        if classes.len() != before {
            return Err(Error::Config("exercise names must be unique".into()));
        }
        if classes.is_empty() {
            return Err(Error::Config("taxonomy has no classes".into()));
        }
        Ok(Self { classes })
    }

    /// The 16 exercise classes of the default muscle map.
    pub fn standard() -> Self {
        MuscleMap::standard().taxonomy()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.classes
            .binary_search_by(|c| c.as_str().cmp(name))
            .map_err(|_| Error::Lookup {
                kind: "exercise",
                name: name.to_string(),
            })
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.classes.get(id).map(String::as_str)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MuscleMapFile {
    muscles: Vec<String>,
    exercises: BTreeMap<String, Vec<String>>,
}

/// Exercise → activated muscle groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MuscleMap {
    muscles: Vec<String>,
    mapping: BTreeMap<String, BTreeSet<String>>,
}

impl MuscleMap {
    /// The shipped table. Panics only if the bundled asset is malformed.
    pub fn standard() -> Self {
        Self::from_json(DEFAULT_MUSCLE_MAP).expect("bundled muscle map is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MuscleMapFile = serde_json::from_str(text)?;
        Self::new(file.muscles, file.exercises)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn new(muscles: Vec<String>, exercises: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let distinct: BTreeSet<&String> = muscles.iter().collect();
        if distinct.len() != muscles.len() {
            return Err(Error::Config("muscle names must be unique".into()));
        }
        let mut mapping = BTreeMap::new();
        let mut used = BTreeSet::new();
        for (exercise, groups) in exercises {
            if groups.is_empty() {
                return Err(Error::Config(format!(
                    "exercise `{exercise}` has no muscle groups"
                )));
            }
            let mut set = BTreeSet::new();
            for g in groups {
                if !distinct.contains(&g) {
                    return Err(Error::Lookup {
                        kind: "muscle group",
                        name: g,
                    });
                }
                used.insert(g.clone());
                set.insert(g);
            }
            mapping.insert(exercise, set);
        }
        if used.len() != muscles.len() {
            return Err(Error::Config(format!(
                "{} muscle groups declared but {} used by the exercise table",
                muscles.len(),
                used.len()
            )));
        }
        Ok(Self { muscles, mapping })
    }

    pub fn muscles(&self) -> &[String] {
        &self.muscles
    }

    pub fn groups(&self, exercise: &str) -> Result<&BTreeSet<String>> {
        self.mapping.get(exercise).ok_or_else(|| Error::Lookup {
            kind: "exercise",
            name: exercise.to_string(),
        })
    }

    pub fn taxonomy(&self) -> ExerciseTaxonomy {
        ExerciseTaxonomy::new(self.mapping.keys().cloned()).expect("muscle map has exercises")
    }

    /// Multi-hot vector over the ordered muscle list.
    pub fn encode(&self, exercise: &str) -> Result<Vec<u8>> {
        let groups = self.groups(exercise)?;
        Ok(self
            .muscles
            .iter()
            .map(|m| u8::from(groups.contains(m)))
            .collect())
    }

    pub fn decode(&self, vector: &[u8]) -> Result<BTreeSet<String>> {
        if vector.len() != self.muscles.len() {
            return Err(Error::shape("muscle vector", self.muscles.len(), vector.len()));
        }
        Ok(self
            .muscles
            .iter()
            .zip(vector)
            .filter(|(_, &bit)| bit != 0)
            .map(|(m, _)| m.clone())
            .collect())
    }
}

/// Encode an exercise with the standard table.
pub fn encode_muscle_labels(exercise: &str) -> Result<Vec<u8>> {
    MuscleMap::standard().encode(exercise)
}

/// Raw dataset folder name → canonical class name. Folder names are matched
/// case-insensitively; folders absent from the map are excluded from the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FolderMap {
    map: HashMap<String, String>,
}

impl FolderMap {
    pub fn standard() -> Self {
        Self::from_json(DEFAULT_FOLDER_MAP).expect("bundled taxonomy is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
        Ok(Self {
            map: raw
                .into_iter()
                .map(|(k, v)| (normalize_folder(&k), v))
                .collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn canonical(&self, folder: &str) -> Option<&str> {
        self.map.get(&normalize_folder(folder)).map(String::as_str)
    }

    /// Canonical classes this map can produce.
    pub fn targets(&self) -> BTreeSet<&str> {
        self.map.values().map(String::as_str).collect()
    }
}

fn normalize_folder(name: &str) -> String {
    name.trim().to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_taxonomy_is_sorted_and_complete() {
        let tax = ExerciseTaxonomy::standard();
        assert_eq!(tax.len(), NUM_EXERCISES);
        let mut sorted = tax.classes().to_vec();
        sorted.sort();
        assert_eq!(sorted, tax.classes());
        assert_eq!(tax.id("Bench Press").unwrap(), 0);
        assert_eq!(tax.id("Tricep Pushdown").unwrap(), 15);
        assert!(matches!(tax.id("Plank"), Err(Error::Lookup { .. })));
    }

    #[test]
    fn squat_and_pushdown() {
        let map = MuscleMap::standard();
        let squat = map.encode("Squat").unwrap();
        assert_eq!(map.decode(&squat).unwrap().len(), 3);
        assert_eq!(map.encode("Tricep Pushdown").unwrap().iter().sum::<u8>(), 1);
        assert!(encode_muscle_labels("Plank").is_err());
    }

    #[test]
    fn rejects_unused_muscle() {
        let mut ex = BTreeMap::new();
        ex.insert("A".to_string(), vec!["x".to_string()]);
        let err = MuscleMap::new(vec!["x".into(), "y".into()], ex).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn folder_map_groups_bench_variants() {
        let folders = FolderMap::standard();
        assert_eq!(folders.canonical("Incline Bench Press"), Some("Bench Press"));
        assert_eq!(folders.canonical("decline bench press "), Some("Bench Press"));
        assert_eq!(folders.canonical("plank"), None);
        assert_eq!(folders.targets().len(), NUM_EXERCISES);
    }
}
