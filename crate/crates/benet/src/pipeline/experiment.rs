//! Evaluation protocols: scores a trained model on simulated binaural
//! test scenes — at the trained position, at displaced source positions,
//! and in rooms with unseen reverberation times — always against the
//! anechoic left-channel direct-path render of the same clip.

use std::path::Path;

use crate::error::{BenetError, Result};
use crate::metrics::{cepstral_distance, fwseg_snr, srmr, FileScores, ScoreReport};
use crate::mle::MleSchedule;
use crate::net::TrainedModel;
use crate::par;
use crate::pipeline::{dereverberate, DereverbOptions};
use crate::room::{scenario_rirs, ScenarioSpec};
use crate::signal::{add_noise, convolve, TimeSignal};

/// One evaluation campaign: a trained model, a base scene and the test
/// conditions to sweep.
#[derive(Clone)]
pub struct ExperimentSpec {
    pub model: TrainedModel,
    pub base_scenario: ScenarioSpec,
    /// Source displacements in meters; [0,0,0] reproduces the trained
    /// position.
    pub offsets: Vec<[f64; 3]>,
    /// Reverberation times evaluated as whole new rooms (cross-room
    /// conditions).
    pub test_rt60s: Vec<f64>,
    /// Sensor noise level; None disables the noise stage.
    pub snr_db: Option<f64>,
    /// Beamform each side's 8-mic array before the binaural processing
    /// instead of using the bare two-sensor capture.
    pub beamformers_at_test: bool,
    pub corpus: Vec<(String, TimeSignal)>,
    pub seed: u64,
    pub schedule: MleSchedule,
    /// Test clip length in seconds.
    pub clip_seconds: f64,
}

/// Scores for one test condition: the model output and the unprocessed
/// reverberant left channel it must beat.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub condition: String,
    pub processed: ScoreReport,
    pub unprocessed: ScoreReport,
}

/// The noisy binaural (or beamformed pseudo-binaural) test capture of
/// one clip under one scenario.
fn render_test_pair(
    scenario: &ScenarioSpec,
    clean: &TimeSignal,
    snr_db: Option<f64>,
    beamformers: bool,
    seed: u64,
) -> Result<(TimeSignal, TimeSignal)> {
    use crate::beamformer::{mvdr_beamform, scenario_arrays, SteeringSpec};
    use crate::stft::{istft, stft, StftConfig};

    let noisy = |sig: TimeSignal, k: u64| -> Result<TimeSignal> {
        match snr_db {
            Some(snr) => add_noise(&sig, snr, seed ^ k.wrapping_mul(0x9E37_79B9)),
            None => Ok(sig),
        }
    };
    if !beamformers {
        let mics = scenario.binaural_mics();
        let rirs = scenario_rirs(&scenario.room, scenario.source_pos, &mics, clean.sample_rate)?;
        let left = noisy(convolve(clean, &rirs[0])?, 1)?;
        let right = noisy(convolve(clean, &rirs[1])?, 2)?;
        return Ok((left, right));
    }
    let (left_arr, right_arr) = scenario_arrays(scenario);
    let anechoic = scenario.anechoic();
    let mut sides = Vec::with_capacity(2);
    for (s, arr) in [(10u64, &left_arr), (20u64, &right_arr)] {
        let mics = arr.mic_positions.clone();
        let rirs = scenario_rirs(&scenario.room, scenario.source_pos, &mics, clean.sample_rate)?;
        let dry = scenario_rirs(&anechoic.room, scenario.source_pos, &mics, clean.sample_rate)?;
        let specs: Vec<_> = rirs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let ch = noisy(convolve(clean, r)?, s + i as u64)?;
                stft(&ch, StftConfig::BEAMFORMER)
            })
            .collect::<Result<_>>()?;
        let steering = SteeringSpec::from_rirs(&dry, 0, StftConfig::BEAMFORMER)?;
        let bf = mvdr_beamform(&specs, &steering)?;
        sides.push(istft(&bf)?);
    }
    let right = sides.pop().expect("two sides");
    let left = sides.pop().expect("two sides");
    Ok((left, right))
}

/// Anechoic left-channel direct-path render: the metric reference.
fn reference_render(scenario: &ScenarioSpec, clean: &TimeSignal) -> Result<TimeSignal> {
    let anechoic = scenario.anechoic();
    let mics = anechoic.binaural_mics();
    let rirs = scenario_rirs(&anechoic.room, anechoic.source_pos, &[mics[0]], clean.sample_rate)?;
    convolve(clean, &rirs[0])
}

fn score(
    name: &str,
    reference: &TimeSignal,
    signal: &TimeSignal,
) -> Result<FileScores> {
    Ok(FileScores {
        file: name.to_string(),
        cep: cepstral_distance(reference, signal)?,
        fwseg_snr: fwseg_snr(reference, signal)?,
        srmr: srmr(signal)?,
    })
}

fn evaluate_condition(
    label: &str,
    scenario: &ScenarioSpec,
    spec: &ExperimentSpec,
) -> Result<ConditionReport> {
    scenario.validate()?;
    let results: Vec<Result<(FileScores, FileScores)>> =
        par::map_slice(&spec.corpus, |(name, clip)| {
            let n = (spec.clip_seconds * clip.sample_rate as f64).round() as usize;
            if clip.len() < n {
                return Err(BenetError::Config(format!(
                    "clip {name} shorter than {} s",
                    spec.clip_seconds
                )));
            }
            let clean = TimeSignal::new(clip.samples[..n].to_vec(), clip.sample_rate);
            let (left, right) = render_test_pair(
                scenario,
                &clean,
                spec.snr_db,
                spec.beamformers_at_test,
                spec.seed,
            )?;
            let reference = reference_render(scenario, &clean)?;
            let options = DereverbOptions {
                schedule: spec.schedule,
                ..DereverbOptions::default()
            };
            let output = dereverberate(&left, &right, Some(&spec.model), &options)?;
            let processed = score(name, &reference, &output)?;
            let unprocessed = score(name, &reference, &left)?;
            Ok((processed, unprocessed))
        });
    let mut processed = ScoreReport::new(format!("{label}/processed"));
    let mut unprocessed = ScoreReport::new(format!("{label}/unprocessed"));
    for r in results {
        let (p, u) = r?;
        processed.files.push(p);
        unprocessed.files.push(u);
    }
    Ok(ConditionReport {
        condition: label.to_string(),
        processed,
        unprocessed,
    })
}

/// Runs every condition of the spec: one row set per source offset and
/// one per cross-room reverberation time.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ConditionReport>> {
    if spec.corpus.is_empty() {
        return Err(BenetError::Config("experiment corpus is empty".into()));
    }
    let mut reports = Vec::new();
    for offset in &spec.offsets {
        let scenario = spec.base_scenario.with_source_offset(*offset)?;
        let label = format!(
            "offset_{:+.2}_{:+.2}_{:+.2}",
            offset[0], offset[1], offset[2]
        );
        reports.push(evaluate_condition(&label, &scenario, spec)?);
    }
    for &rt60 in &spec.test_rt60s {
        let scenario = ScenarioSpec::for_rt60(rt60);
        let label = format!("room_rt60_{rt60:.2}");
        reports.push(evaluate_condition(&label, &scenario, spec)?);
    }
    Ok(reports)
}

/// All conditions in one CSV: per-file rows plus a mean row per report.
pub fn write_conditions_csv(path: &Path, reports: &[ConditionReport]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "condition,variant,file,cep,fwseg_snr_db,srmr_db")?;
    for c in reports {
        for (variant, rep) in [("processed", &c.processed), ("unprocessed", &c.unprocessed)] {
            for s in &rep.files {
                writeln!(
                    f,
                    "{},{},{},{:.4},{:.4},{:.4}",
                    c.condition, variant, s.file, s.cep, s.fwseg_snr, s.srmr
                )?;
            }
            let (cep, fw, sr) = rep.aggregate();
            writeln!(
                f,
                "{},{},mean,{:.4},{:.4},{:.4}",
                c.condition, variant, cep, fw, sr
            )?;
        }
    }
    Ok(())
}
