//! Seeded synthetic corpora: every event is a block of clips carrying one
//! prototype vector plus noise, captioned by that prototype's sentence.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{Annotation, DatasetManifest, Video, VideoEntry};
use super::features::write_features;
use crate::error::{Error, Result};
use crate::tensor_engine::Tensor;

const VERBS: [&str; 16] = [
    "throws", "kicks", "paints", "washes", "rides", "carries", "opens", "folds", "cuts", "lifts", "pushes",
    "catches", "climbs", "cleans", "juggles", "plays",
];
const OBJECTS: [&str; 16] = [
    "a red ball",
    "the wooden fence",
    "a large canvas",
    "the blue car",
    "a small bicycle",
    "the heavy box",
    "a glass door",
    "the white towel",
    "some fresh bread",
    "a metal bar",
    "the shopping cart",
    "a yellow frisbee",
    "the rock wall",
    "the kitchen floor",
    "three orange balls",
    "an old guitar",
];

/// Attribute width: one indicator per possible prototype.
pub const ATTRIBUTE_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_videos: usize,
    pub num_clips: usize,
    pub feature_dim: usize,
    pub prototypes: usize,
    pub events_min: usize,
    pub events_max: usize,
    pub sigma: f64,
    pub seed: u64,
    /// Widths `4·2^j` clips starting at multiples of the width, so events
    /// line up with the anchor grid.
    pub grid_aligned: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_videos: 20,
            num_clips: 128,
            feature_dim: 32,
            prototypes: 8,
            events_min: 2,
            events_max: 4,
            sigma: 0.3,
            seed: 7,
            grid_aligned: true,
        }
    }
}

pub fn prototype_sentence(p: usize) -> String {
    format!("a person {} {}", VERBS[p], OBJECTS[p])
}

impl SynthSpec {
    fn widths(&self) -> Vec<usize> {
        let max = (self.num_clips / 4).max(4);
        if self.grid_aligned {
            (0..).map(|j| 4usize << j).take_while(|&w| w <= max).collect()
        } else {
            (4..=max).collect()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_videos == 0 || self.feature_dim == 0 {
            return Err(Error::Config("synthetic corpus needs videos and a positive feature width".into()));
        }
        if !(1..=ATTRIBUTE_DIM).contains(&self.prototypes) {
            return Err(Error::Config(format!(
                "prototype count {} outside 1..={ATTRIBUTE_DIM}",
                self.prototypes
            )));
        }
        if self.events_min == 0 || self.events_min > self.events_max {
            return Err(Error::Config(format!(
                "bad events-per-video range {}..={}",
                self.events_min, self.events_max
            )));
        }
        if self.events_max > self.prototypes {
            return Err(Error::Config(format!(
                "{} events per video need at least as many prototypes (have {})",
                self.events_max, self.prototypes
            )));
        }
        if self.num_clips < 4 || self.events_max * 4 > self.num_clips {
            return Err(Error::InvalidInput(format!(
                "cannot pack {} disjoint events of at least 4 clips into {} clips",
                self.events_max, self.num_clips
            )));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Config("noise sigma must be non-negative".into()));
        }
        Ok(())
    }
}

fn place_events<R: Rng>(spec: &SynthSpec, k: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let widths = spec.widths();
    for _ in 0..1000 {
        let mut spans: Vec<(usize, usize)> = Vec::with_capacity(k);
        for _ in 0..k {
            let w = widths[rng.random_range(0..widths.len())];
            let start = if spec.grid_aligned {
                rng.random_range(0..spec.num_clips / w) * w
            } else {
                rng.random_range(0..=spec.num_clips - w)
            };
            if spans.iter().all(|&(s, e)| start + w <= s || start >= e) {
                spans.push((start, start + w));
            }
        }
        if spans.len() == k {
            spans.sort_unstable();
            return Ok(spans);
        }
    }
    Err(Error::InvalidInput(format!(
        "could not pack {k} disjoint events into {} clips",
        spec.num_clips
    )))
}

/// Builds the corpus in memory.
pub fn generate(spec: &SynthSpec) -> Result<Vec<Video>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let prototypes: Vec<Vec<f64>> = (0..spec.prototypes)
        .map(|_| (0..spec.feature_dim).map(|_| unit.sample(&mut rng)).collect())
        .collect();
    let noise = Normal::new(0.0, spec.sigma).expect("sigma checked");
    let mut videos = Vec::with_capacity(spec.num_videos);
    for v in 0..spec.num_videos {
        let k = rng.random_range(spec.events_min..=spec.events_max);
        let spans = place_events(spec, k, &mut rng)?;
        let mut ids: Vec<usize> = (0..spec.prototypes).collect();
        ids.shuffle(&mut rng);
        let mut data = vec![0f32; spec.num_clips * spec.feature_dim];
        for (row, chunk) in data.chunks_mut(spec.feature_dim).enumerate() {
            let proto = spans.iter().position(|&(s, e)| s <= row && row < e).map(|i| &prototypes[ids[i]]);
            for (j, x) in chunk.iter_mut().enumerate() {
                let base = proto.map_or(0.0, |p| p[j]);
                let n = if spec.sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                *x = (base + n) as f32;
            }
        }
        let mut attributes = vec![0.0; ATTRIBUTE_DIM];
        let n = spec.num_clips as f64;
        let annotations = spans
            .iter()
            .zip(&ids)
            .map(|(&(s, e), &p)| {
                attributes[p] = 1.0;
                Annotation {
                    t_start: s as f64 / n,
                    t_end: e as f64 / n,
                    sentence: prototype_sentence(p),
                }
            })
            .collect();
        videos.push(Video {
            id: format!("v{v:04}"),
            duration_units: n,
            features: Tensor::new(vec![spec.num_clips, spec.feature_dim], data)?,
            attributes,
            annotations,
        });
    }
    Ok(videos)
}

/// Writes `manifest.json` and `features/<id>.dvcf` under `dir`.
pub fn write_corpus(videos: &[Video], dir: &Path) -> Result<DatasetManifest> {
    let feat_dir = dir.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let mut manifest = DatasetManifest::default();
    for v in videos {
        let rel = Path::new("features").join(format!("{}.dvcf", v.id));
        write_features(&dir.join(&rel), &v.features)?;
        manifest.videos.push(VideoEntry {
            id: v.id.clone(),
            duration_units: v.duration_units,
            feature_file: rel,
            attributes: v.attributes.clone(),
            annotations: v.annotations.clone(),
        });
    }
    manifest.write(&dir.join("manifest.json"))?;
    Ok(manifest)
}
