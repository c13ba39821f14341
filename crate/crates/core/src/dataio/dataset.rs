use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::read_features;
use crate::anchors::TemporalSegment;
use crate::captioner::Vocabulary;
use crate::error::{Error, Result};
use crate::tensor_engine::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub t_start: f64,
    pub t_end: f64,
    pub sentence: String,
}

impl Annotation {
    pub fn segment(&self) -> TemporalSegment {
        TemporalSegment {
            t_start: self.t_start,
            t_end: self.t_end,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub id: String,
    pub duration_units: f64,
    /// Relative to the manifest's directory unless absolute.
    pub feature_file: PathBuf,
    pub attributes: Vec<f64>,
    pub annotations: Vec<Annotation>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub videos: Vec<VideoEntry>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// One loaded video.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub id: String,
    pub duration_units: f64,
    /// `[T_f×D0]`
    pub features: Tensor<f32>,
    pub attributes: Vec<f64>,
    pub annotations: Vec<Annotation>,
}

impl Video {
    pub fn num_clips(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn ground_truth(&self) -> Vec<TemporalSegment> {
        self.annotations.iter().map(Annotation::segment).collect()
    }

    /// Rows of the feature matrix for the given clips, as `f64`.
    pub fn clip_rows(&self, clips: &[usize]) -> Vec<f64> {
        let d = self.features.shape()[1];
        clips
            .iter()
            .flat_map(|&c| self.features.data()[c * d..(c + 1) * d].iter().map(|&x| x as f64))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub videos: Vec<Video>,
    pub vocab: Vocabulary,
    pub num_clips: usize,
    pub feature_dim: usize,
    pub attr_dim: usize,
}

impl Dataset {
    /// Validates videos that are already in memory and builds the vocabulary
    /// from their sentences.
    pub fn from_videos(videos: Vec<Video>) -> Result<Self> {
        let first = videos
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset has no videos".into()))?;
        let (num_clips, feature_dim) = (first.features.shape()[0], first.features.shape()[1]);
        let attr_dim = first.attributes.len();
        for v in &videos {
            validate_video(v, num_clips, feature_dim, attr_dim)?;
        }
        let vocab = Vocabulary::build(videos.iter().flat_map(|v| v.annotations.iter().map(|a| a.sentence.as_str())));
        Ok(Dataset {
            videos,
            vocab,
            num_clips,
            feature_dim,
            attr_dim,
        })
    }

    pub fn num_annotations(&self) -> usize {
        self.videos.iter().map(|v| v.annotations.len()).sum()
    }
}

fn validate_video(v: &Video, num_clips: usize, feature_dim: usize, attr_dim: usize) -> Result<()> {
    let id = &v.id;
    if v.features.shape() != [num_clips, feature_dim] {
        return Err(Error::Format(format!(
            "video `{id}`: features {:?} differ from the dataset's [{num_clips}, {feature_dim}]",
            v.features.shape()
        )));
    }
    if v.attributes.len() != attr_dim {
        return Err(Error::Format(format!(
            "video `{id}`: {} attributes, expected {attr_dim}",
            v.attributes.len()
        )));
    }
    if let Some(a) = v.attributes.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::Format(format!("video `{id}`: attribute {a} outside [0, 1]")));
    }
    if !(v.duration_units > 0.0) {
        return Err(Error::Format(format!("video `{id}`: duration must be positive")));
    }
    for a in &v.annotations {
        if !(a.t_start < a.t_end) {
            return Err(Error::Format(format!(
                "video `{id}`: annotation start {} is not before end {}",
                a.t_start, a.t_end
            )));
        }
        if a.t_start < 0.0 || a.t_end > 1.0 {
            return Err(Error::Format(format!(
                "video `{id}`: annotation [{}, {}] leaves the normalized range [0, 1]",
                a.t_start, a.t_end
            )));
        }
    }
    Ok(())
}

/// Reads a manifest and every feature file it names, checking shapes,
/// attribute widths and annotation bounds.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let videos = manifest
        .videos
        .into_par_iter()
        .map(|entry| {
            let path = base.join(&entry.feature_file);
            let features = read_features(&path).map_err(|e| match e {
                Error::Format(msg) => Error::Format(format!("video `{}`: {msg}", entry.id)),
                other => other,
            })?;
            Ok(Video {
                id: entry.id,
                duration_units: entry.duration_units,
                features,
                attributes: entry.attributes,
                annotations: entry.annotations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_videos(videos)
}
