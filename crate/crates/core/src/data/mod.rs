//! Sensor data ingestion and preparation.

pub mod cache;
mod normalize;
mod recording;
mod split;
mod synth;
mod window;

pub use cache::{load_dataset, save_dataset};
pub use normalize::{normalize_splits, Normalizer, STD_FLOOR};
pub use recording::{load_csv, read_csv, CsvSchema, SensorRecording};
pub use split::{split_indices, stratified_split};
pub use synth::{synth_generate, template, SynthConfig};
pub use window::{majority_label, sliding_windows, window_count, window_recordings, WindowedDataset};
