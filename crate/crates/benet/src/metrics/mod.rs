//! Objective speech-quality scores: LPC-cepstral distance (lower is
//! better), frequency-weighted segmental SNR and the reference-free
//! speech-to-reverberation modulation energy ratio (both higher is
//! better), plus CSV/JSON report plumbing.

mod cep;
mod fwseg;
mod report;
mod srmr;

pub use cep::cepstral_distance;
pub use fwseg::fwseg_snr;
pub use report::{write_report_csv, write_report_json, FileScores, ScoreReport};
pub use srmr::srmr;

/// Analysis frame length for the reference-based metrics: 25 ms.
pub(crate) const FRAME_SECONDS: f64 = 0.025;
/// Hop between frames: 10 ms.
pub(crate) const HOP_SECONDS: f64 = 0.010;
/// Reference frames more than this far below the loudest frame are
/// treated as silence and skipped.
pub(crate) const FRAME_SELECT_DB: f64 = 40.0;

use crate::error::{BenetError, Result};
use crate::signal::TimeSignal;

/// Trims or zero-pads `degraded` to the reference length and validates
/// the pair; returns (reference samples, degraded samples, frame, hop).
pub(crate) fn aligned_pair<'a>(
    reference: &'a TimeSignal,
    degraded: &TimeSignal,
) -> Result<(&'a [f64], Vec<f64>, usize, usize)> {
    if reference.sample_rate != degraded.sample_rate {
        return Err(BenetError::SampleRateMismatch(
            reference.sample_rate,
            degraded.sample_rate,
        ));
    }
    if reference.energy() <= 0.0 {
        return Err(BenetError::DegenerateSignal(
            "silent reference signal".into(),
        ));
    }
    let fs = reference.sample_rate as f64;
    let frame = (FRAME_SECONDS * fs).round() as usize;
    let hop = (HOP_SECONDS * fs).round() as usize;
    if reference.len() < frame {
        return Err(BenetError::DegenerateSignal(format!(
            "reference shorter than one {frame}-sample analysis frame"
        )));
    }
    let mut deg = degraded.samples.clone();
    deg.resize(reference.len(), 0.0);
    Ok((&reference.samples, deg, frame, hop))
}

/// Indices of frames whose reference energy is within `FRAME_SELECT_DB`
/// of the loudest frame.
pub(crate) fn active_frames(reference: &[f64], frame: usize, hop: usize) -> Vec<usize> {
    let n_frames = if reference.len() < frame {
        0
    } else {
        (reference.len() - frame) / hop + 1
    };
    let energies: Vec<f64> = (0..n_frames)
        .map(|j| {
            let s = &reference[j * hop..j * hop + frame];
            s.iter().map(|x| x * x).sum()
        })
        .collect();
    let peak = energies.iter().cloned().fold(0.0, f64::max);
    let floor = peak * 10f64.powf(-FRAME_SELECT_DB / 10.0);
    (0..n_frames).filter(|&j| energies[j] > floor).collect()
}

pub(crate) fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}
