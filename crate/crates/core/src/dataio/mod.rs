//! Files and formats: clip features, dataset manifests, the synthetic
//! corpus generator, checkpoints, predictions and the run configuration.

mod checkpoint;
mod config;
mod dataset;
mod features;
mod predictions;
mod synth;

pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::RunConfig;
pub use dataset::{load_dataset, Annotation, Dataset, DatasetManifest, Video, VideoEntry};
pub use features::{decode_features, encode_features, read_features, write_features, FEATURE_MAGIC, FEATURE_VERSION};
pub use predictions::{
    curve_from_csv, curve_to_csv, dense_captions, predictions_to_json, ranked_segments, read_predictions,
    write_predictions, PredictionFile, PredictionRecord,
};
pub use synth::{generate, prototype_sentence, write_corpus, SynthSpec, ATTRIBUTE_DIM};
