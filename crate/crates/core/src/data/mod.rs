//! Sensor data: CSV ingestion, normalization, noise, windowing and
//! synthetic recordings.

mod normalize;
pub mod presets;
mod recording;
mod synth;
mod windows;

pub use normalize::{add_gaussian_noise, normalize_per_channel, NormStats};
pub use recording::{CsvSchema, RawRecording};
pub use synth::{synth_generate, SynthSpec};
pub use windows::{sliding_windows, window_count, Labeling, WindowedDataset};
