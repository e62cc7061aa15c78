//! Training-data manufacture. For each clean clip the reverberant
//! 2x8-microphone scene is simulated, each side is beamformed, the
//! beamformed estimate is subtracted from the reference microphone to
//! leave the reverberation, and that pair of residual signals yields the
//! REV-class ILD image. The matching DP-class image comes from an
//! anechoic render of the same clip on the two-sensor binaural rig.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::beamformer::{extract_reverberation, mvdr_beamform, scenario_arrays, SteeringSpec};
use crate::error::{BenetError, Result};
use crate::net::{normalize_ild, MaskImage, CLASS_DP, CLASS_REV};
use crate::room::{scenario_rirs, ScenarioSpec};
use crate::signal::{convolve, TimeSignal};
use crate::spatial::{interaural_spectrogram, read_fmat, write_fmat};
use crate::stft::{istft, stft, StftConfig};

use super::clip_durations;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: PathBuf,
    /// 0 = direct path, 1 = reverberation.
    pub label: u8,
    pub scenario_id: String,
    pub source_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenario: ScenarioSpec,
    pub entries: Vec<ManifestEntry>,
    pub dp_count: usize,
    pub rev_count: usize,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| BenetError::Config(format!("serialize manifest: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        if !path.exists() {
            return Err(BenetError::FileNotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| BenetError::Config(format!("parse manifest {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dp_count != self.rev_count {
            return Err(BenetError::Config(format!(
                "class counts differ: {} dp vs {} rev",
                self.dp_count, self.rev_count
            )));
        }
        Ok(())
    }
}

/// Full-band image from a one-sided map: the `n` bins are extended with
/// the mirrored interior bins to `2*(n-1)` rows, matching the two-sided
/// FFT geometry the network consumes.
pub fn mirror_full_band(one_sided: &Array2<f64>) -> Array2<f64> {
    let (n_bins, n_frames) = one_sided.dim();
    assert!(n_bins >= 2, "need at least 2 bins to mirror");
    let full = 2 * (n_bins - 1);
    let mut out = Array2::zeros((full, n_frames));
    out.slice_mut(ndarray::s![..n_bins, ..]).assign(one_sided);
    for f in 1..n_bins - 1 {
        for t in 0..n_frames {
            out[[full - f, t]] = one_sided[[f, t]];
        }
    }
    out
}

fn truncated(clip: &TimeSignal, seconds: f64) -> Result<TimeSignal> {
    let n = (seconds * clip.sample_rate as f64).round() as usize;
    if clip.len() < n {
        return Err(BenetError::Config(format!(
            "clip too short: {} samples, need {n}",
            clip.len()
        )));
    }
    Ok(TimeSignal::new(clip.samples[..n].to_vec(), clip.sample_rate))
}

fn fit(signal: TimeSignal, seconds: f64) -> TimeSignal {
    let n = (seconds * signal.sample_rate as f64).round() as usize;
    signal.fit_len(n)
}

/// Precomputed per-scene filters shared by every clip: the reverberant
/// and anechoic RIR banks of both 8-mic arrays plus the binaural pair.
pub struct SceneFilters {
    sides: Vec<(Vec<crate::signal::Rir>, SteeringSpec)>,
    binaural_dry: Vec<crate::signal::Rir>,
}

impl SceneFilters {
    pub fn prepare(scenario: &ScenarioSpec, sample_rate: u32) -> Result<SceneFilters> {
        let (left_arr, right_arr) = scenario_arrays(scenario);
        let anechoic = scenario.anechoic();
        let mut sides = Vec::with_capacity(2);
        for arr in [&left_arr, &right_arr] {
            let mics = arr.mic_positions.clone();
            let rirs = scenario_rirs(&scenario.room, scenario.source_pos, &mics, sample_rate)?;
            let dry = scenario_rirs(&anechoic.room, scenario.source_pos, &mics, sample_rate)?;
            let steering = SteeringSpec::from_rirs(&dry, 0, StftConfig::BEAMFORMER)?;
            sides.push((rirs, steering));
        }
        let mics = anechoic.binaural_mics();
        let binaural_dry =
            scenario_rirs(&anechoic.room, anechoic.source_pos, &mics, sample_rate)?;
        Ok(SceneFilters { sides, binaural_dry })
    }
}

/// The REV-class ILD image of one clip: beamform both 8-mic arrays,
/// subtract from each side's reference channel, return the interaural
/// level image of the two residual signals (one-sided bins).
pub fn rev_ild_image(scenario: &ScenarioSpec, clean: &TimeSignal) -> Result<Array2<f64>> {
    let filters = SceneFilters::prepare(scenario, clean.sample_rate)?;
    rev_ild_image_with(&filters, scenario.room.rt60, clean)
}

/// [`rev_ild_image`] with prepared filters (RIRs are clip-independent).
pub fn rev_ild_image_with(
    filters: &SceneFilters,
    rt60: f64,
    clean: &TimeSignal,
) -> Result<Array2<f64>> {
    let (_, reverb_s) = clip_durations(rt60);
    let mut residuals = Vec::with_capacity(2);
    for (rirs, steering) in &filters.sides {
        let specs: Vec<_> = rirs
            .iter()
            .map(|r| {
                let wet = fit(convolve(clean, r)?, reverb_s);
                stft(&wet, StftConfig::BEAMFORMER)
            })
            .collect::<Result<_>>()?;
        let bf = mvdr_beamform(&specs, steering)?;
        let x = extract_reverberation(&specs[0], &bf)?;
        // back to time and re-analyzed under the interaural preset
        let x_time = fit(istft(&x)?, reverb_s);
        residuals.push(stft(&x_time, StftConfig::INTERAURAL)?);
    }
    let inter = interaural_spectrogram(&residuals[0], &residuals[1])?;
    Ok(inter.ild_db)
}

/// The DP-class ILD image: anechoic binaural render of the clip, padded
/// to the reverberant duration so both classes share the image width.
pub fn dp_ild_image(scenario: &ScenarioSpec, clean: &TimeSignal) -> Result<Array2<f64>> {
    let filters = SceneFilters::prepare(scenario, clean.sample_rate)?;
    dp_ild_image_with(&filters, scenario.room.rt60, clean)
}

/// [`dp_ild_image`] with prepared filters.
pub fn dp_ild_image_with(
    filters: &SceneFilters,
    rt60: f64,
    clean: &TimeSignal,
) -> Result<Array2<f64>> {
    if clean.energy() <= 0.0 {
        return Err(BenetError::DegenerateSignal("silent clip".into()));
    }
    let (_, reverb_s) = clip_durations(rt60);
    let left = fit(convolve(clean, &filters.binaural_dry[0])?, reverb_s);
    let right = fit(convolve(clean, &filters.binaural_dry[1])?, reverb_s);
    let l = stft(&left, StftConfig::INTERAURAL)?;
    let r = stft(&right, StftConfig::INTERAURAL)?;
    Ok(interaural_spectrogram(&l, &r)?.ild_db)
}

/// Builds the paired DP/REV image set for `corpus` under `scenario`,
/// writing mirrored full-band images and a JSON manifest into `out_dir`.
pub fn generate_training_data(
    scenario: &ScenarioSpec,
    corpus: &[(String, TimeSignal)],
    out_dir: &Path,
) -> Result<DatasetManifest> {
    scenario.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let (clean_s, _) = clip_durations(scenario.room.rt60);
    let sample_rate = corpus
        .first()
        .map(|(_, c)| c.sample_rate)
        .ok_or_else(|| BenetError::Config("empty corpus".into()))?;
    let filters = SceneFilters::prepare(scenario, sample_rate)?;
    let rt60 = scenario.room.rt60;
    let mut entries = Vec::new();
    for (i, (name, clip)) in corpus.iter().enumerate() {
        if clip.energy() <= 0.0 {
            return Err(BenetError::DegenerateSignal(format!("silent clip {name}")));
        }
        let clean = truncated(clip, clean_s)?;

        let rev = mirror_full_band(&rev_ild_image_with(&filters, rt60, &clean)?);
        let rev_path = out_dir.join(format!("rev_{i:05}.fmat"));
        write_fmat(&rev_path, &rev)?;
        entries.push(ManifestEntry {
            image: rev_path,
            label: CLASS_REV,
            scenario_id: format!("rt60_{:.3}", scenario.room.rt60),
            source_file: name.clone(),
        });

        let dp = mirror_full_band(&dp_ild_image_with(&filters, rt60, &clean)?);
        let dp_path = out_dir.join(format!("dp_{i:05}.fmat"));
        write_fmat(&dp_path, &dp)?;
        entries.push(ManifestEntry {
            image: dp_path,
            label: CLASS_DP,
            scenario_id: "anechoic".into(),
            source_file: name.clone(),
        });
    }
    let manifest = DatasetManifest {
        scenario: scenario.clone(),
        dp_count: entries.iter().filter(|e| e.label == CLASS_DP).count(),
        rev_count: entries.iter().filter(|e| e.label == CLASS_REV).count(),
        entries,
    };
    manifest.validate()?;
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Loads manifest images as normalized network inputs with their
/// constant-class ground-truth maps. Odd widths are trimmed by one frame
/// so training batches stay pool-compatible.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Vec<(Array2<f64>, MaskImage)>> {
    manifest.validate()?;
    manifest
        .entries
        .iter()
        .map(|e| {
            let raw = read_fmat(&e.image)?;
            let mut img = normalize_ild(&raw);
            let (h, w) = img.dim();
            if w % 2 == 1 {
                img = img.slice(ndarray::s![.., ..w - 1]).to_owned();
            }
            let (h, w) = (h, img.dim().1);
            Ok((img, MaskImage::constant(e.label, h, w)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth_utterance;

    #[test]
    fn mirror_doubles_the_interior_rows() {
        let one = Array2::from_shape_fn((5, 3), |(f, t)| (f * 10 + t) as f64);
        let full = mirror_full_band(&one);
        assert_eq!(full.dim(), (8, 3));
        for t in 0..3 {
            assert_eq!(full[[7, t]], one[[1, t]]);
            assert_eq!(full[[5, t]], one[[3, t]]);
            assert_eq!(full[[4, t]], one[[4, t]]);
        }
    }

    #[test]
    fn interaural_mirror_yields_1024_rows() {
        let one = Array2::zeros((513, 10));
        assert_eq!(mirror_full_band(&one).dim(), (1024, 10));
    }

    #[test]
    fn dp_image_of_a_silent_clip_is_rejected() {
        let scenario = ScenarioSpec::for_rt60(0.25);
        let silent = TimeSignal::new(vec![0.0; 16_000], 16_000);
        assert!(dp_ild_image(&scenario, &silent).is_err());
    }

    #[test]
    fn short_clip_is_rejected() {
        let scenario = ScenarioSpec::for_rt60(0.25);
        let short = synth_utterance(1, 0.5, 16_000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let corpus = vec![("short".to_string(), short)];
        assert!(generate_training_data(&scenario, &corpus, dir.path()).is_err());
    }

    #[test]
    fn dp_image_is_near_constant_compared_to_rev() {
        // The anechoic binaural render has a frequency-dependent but
        // frame-stationary ILD; the reverberation residual's ILD varies
        // frame to frame. Compare temporal variance on active bins.
        let scenario = ScenarioSpec::for_rt60(0.25);
        let clip = synth_utterance(2, 1.2, 16_000).unwrap();
        let clean = truncated(&clip, 1.0).unwrap();
        let dp = dp_ild_image(&scenario, &clean).unwrap();
        let rev = rev_ild_image(&scenario, &clean).unwrap();
        assert_eq!(dp.nrows(), 513);
        assert_eq!(rev.nrows(), 513);
        let temporal_var = |m: &Array2<f64>| {
            let mut acc = 0.0;
            let mut rows = 0;
            for f in 1..80 {
                let row = m.row(f);
                let mean = row.sum() / row.len() as f64;
                acc += row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
                rows += 1;
            }
            acc / rows as f64
        };
        let vd = temporal_var(&dp);
        let vr = temporal_var(&rev);
        assert!(vr > vd, "rev variance {vr} !> dp variance {vd}");
    }

    #[test]
    fn generated_dataset_has_paired_counts_and_loads() {
        let scenario = ScenarioSpec::for_rt60(0.25);
        let corpus: Vec<_> = (0..2)
            .map(|i| {
                (
                    format!("clip{i}"),
                    synth_utterance(10 + i, 1.1, 16_000).unwrap(),
                )
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_training_data(&scenario, &corpus, dir.path()).unwrap();
        assert_eq!(manifest.dp_count, 2);
        assert_eq!(manifest.rev_count, 2);
        assert_eq!(manifest.entries.len(), 4);
        let reloaded = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(reloaded.entries.len(), 4);
        let data = load_dataset(&reloaded).unwrap();
        assert_eq!(data.len(), 4);
        let (h, w) = data[0].0.dim();
        assert_eq!(h, 1024);
        assert!(w % 2 == 0 && w > 0);
        // images normalized to [0,1]; both classes present
        for (img, mask) in &data {
            assert_eq!(img.dim(), (h, w));
            assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
            let c = mask.classes[[0, 0]];
            assert!(c == CLASS_DP || c == CLASS_REV);
        }
    }
}

#[cfg(test)]
mod timing {
    use super::*;
    use crate::corpus::synth_utterance;

    #[test]
    #[ignore]
    fn profile_clip_cost() {
        let scenario = ScenarioSpec::for_rt60(0.47);
        let clip = synth_utterance(1, 1.1, 16_000).unwrap();
        let clean = truncated(&clip, 1.0).unwrap();
        let t0 = std::time::Instant::now();
        let filters = SceneFilters::prepare(&scenario, 16_000).unwrap();
        println!("prepare: {:?}", t0.elapsed());
        let t0 = std::time::Instant::now();
        let (_, reverb_s) = clip_durations(0.47);
        let (rirs, steering) = &filters.sides[0];
        let t1 = std::time::Instant::now();
        let specs: Vec<_> = rirs
            .iter()
            .map(|r| {
                let wet = fit(convolve(&clean, r).unwrap(), reverb_s);
                stft(&wet, StftConfig::BEAMFORMER).unwrap()
            })
            .collect();
        println!("convolve+stft x8: {:?}", t1.elapsed());
        let t1 = std::time::Instant::now();
        let bf = mvdr_beamform(&specs, steering).unwrap();
        println!("mvdr: {:?}", t1.elapsed());
        let t1 = std::time::Instant::now();
        let x = extract_reverberation(&specs[0], &bf).unwrap();
        let x_time = fit(istft(&x).unwrap(), reverb_s);
        let _ = stft(&x_time, StftConfig::INTERAURAL).unwrap();
        println!("extract+istft+stft: {:?}", t1.elapsed());
        println!("one side total: {:?}", t0.elapsed());
        let t0 = std::time::Instant::now();
        let _ = dp_ild_image_with(&filters, 0.47, &clean).unwrap();
        println!("dp image: {:?}", t0.elapsed());
    }
}
