//! End-to-end orchestration: training-data manufacture, mask fusion and
//! resynthesis, and the experiment recipes driven by the CLI.

mod config;
mod dataset;
mod dereverb;
mod experiment;

pub use config::{DatasetConfig, ExperimentConfig, TrainConfig};
pub use dataset::{
    dp_ild_image, generate_training_data, load_dataset, mirror_full_band, rev_ild_image,
    DatasetManifest, ManifestEntry,
};
pub use dereverb::ild_mask_from_net;
pub use dereverb::{dereverberate, product_mask, DereverbOptions};
pub use experiment::{run_experiment, write_conditions_csv, ConditionReport, ExperimentSpec};

/// Clip durations per room reverberation time: (clean seconds, reverberant
/// seconds). The reverberant clip is the clean clip plus the decay tail,
/// sized so its spectrogram width matches the network input.
pub fn clip_durations(rt60: f64) -> (f64, f64) {
    if rt60 < 0.36 {
        (1.0, 1.165)
    } else if rt60 < 0.585 {
        (1.0, 1.345)
    } else if rt60 < 0.795 {
        (0.98, 1.505)
    } else {
        (1.0, 1.645)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_durations_match_the_published_rows() {
        assert_eq!(clip_durations(0.89), (1.0, 1.645));
        assert_eq!(clip_durations(0.70), (0.98, 1.505));
        assert_eq!(clip_durations(0.47), (1.0, 1.345));
        assert_eq!(clip_durations(0.25), (1.0, 1.165));
    }

    #[test]
    fn reverberant_duration_always_exceeds_clean() {
        for rt in [0.1, 0.25, 0.47, 0.7, 0.89, 1.2] {
            let (clean, reverb) = clip_durations(rt);
            assert!(reverb > clean);
        }
    }
}
