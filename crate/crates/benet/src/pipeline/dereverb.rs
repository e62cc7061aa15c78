//! Inference: fuse the network's level-cue mask with the EM phase-cue
//! mask into a product mask, apply it to both input channels and return
//! the averaged resynthesis.

use ndarray::Array2;

use crate::error::{BenetError, Result};
use crate::mle::{run_mle, MleSchedule, TfMask};
use crate::net::TrainedModel;
use crate::signal::TimeSignal;
use crate::spatial::{interaural_spectrogram, TauGrid};
use crate::stft::{apply_mask, istft, stft, StftConfig};

use super::mirror_full_band;

/// Elementwise product of two masks over the full band.
pub fn product_mask(ild_mask: &TfMask, ipd_mask: &TfMask) -> Result<TfMask> {
    if ild_mask.values.dim() != ipd_mask.values.dim() {
        return Err(BenetError::ShapeMismatch(format!(
            "mask shapes differ: {:?} vs {:?}",
            ild_mask.values.dim(),
            ipd_mask.values.dim()
        )));
    }
    Ok(TfMask {
        values: &ild_mask.values * &ipd_mask.values,
    })
}

#[derive(Debug, Clone)]
pub struct DereverbOptions {
    /// Replaces the network's level-cue mask (testing / ablation).
    pub forced_ild_mask: Option<TfMask>,
    /// Replaces the EM phase-cue mask (testing / ablation).
    pub forced_ipd_mask: Option<TfMask>,
    /// Halve the summed channels to preserve loudness (default on).
    pub average_channels: bool,
    pub schedule: MleSchedule,
}

impl Default for DereverbOptions {
    fn default() -> Self {
        DereverbOptions {
            forced_ild_mask: None,
            forced_ipd_mask: None,
            average_channels: true,
            schedule: MleSchedule::default(),
        }
    }
}

/// Level-cue mask for a one-sided ILD map: mirror to the full band, run
/// the network, keep the one-sided rows of the direct-path probability.
pub fn ild_mask_from_net(model: &TrainedModel, ild_db: &Array2<f64>) -> Result<TfMask> {
    let (n_bins, _) = ild_db.dim();
    let full = mirror_full_band(&crate::net::normalize_ild(ild_db));
    let probs = model.net.predict(&full)?;
    Ok(TfMask {
        values: probs.slice(ndarray::s![..n_bins, ..]).to_owned(),
    })
}

/// Dereverberates a binaural pair: interaural analysis, level-cue and
/// phase-cue masks, product mask on both channels, averaged resynthesis.
/// `model` may be omitted only when a forced level mask is supplied.
pub fn dereverberate(
    left: &TimeSignal,
    right: &TimeSignal,
    model: Option<&TrainedModel>,
    options: &DereverbOptions,
) -> Result<TimeSignal> {
    if left.sample_rate != right.sample_rate {
        return Err(BenetError::SampleRateMismatch(
            left.sample_rate,
            right.sample_rate,
        ));
    }
    let l_spec = stft(left, StftConfig::INTERAURAL)?;
    let r_spec = stft(right, StftConfig::INTERAURAL)?;

    let ild_mask = match (&options.forced_ild_mask, model) {
        (Some(m), _) => m.clone(),
        (None, Some(model)) => {
            let inter = interaural_spectrogram(&l_spec, &r_spec)?;
            ild_mask_from_net(model, &inter.ild_db)?
        }
        (None, None) => {
            return Err(BenetError::Config(
                "dereverberation needs a trained model or a forced level mask".into(),
            ))
        }
    };
    let ipd_mask = match &options.forced_ipd_mask {
        Some(m) => m.clone(),
        None => {
            let (m_z, _, _, _) = run_mle(&l_spec, &r_spec, &TauGrid::standard(), options.schedule)?;
            m_z
        }
    };
    let mask = product_mask(&ild_mask, &ipd_mask)?;

    let masked_l = istft(&apply_mask(&l_spec, &mask.values)?)?;
    let masked_r = istft(&apply_mask(&r_spec, &mask.values)?)?;
    let scale = if options.average_channels { 0.5 } else { 1.0 };
    let samples = masked_l
        .samples
        .iter()
        .zip(&masked_r.samples)
        .map(|(a, b)| (a + b) * scale)
        .collect();
    Ok(TimeSignal::new(samples, left.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth_utterance;
    use ndarray::Array2;

    fn mask_of(values: Array2<f64>) -> TfMask {
        TfMask { values }
    }

    #[test]
    fn product_mask_identity_annihilator_and_bound() {
        let dim = (4, 3);
        let m = mask_of(Array2::from_shape_fn(dim, |(f, t)| {
            (f as f64 + t as f64) / 10.0
        }));
        let ones = TfMask::ones(dim);
        let zeros = mask_of(Array2::zeros(dim));
        assert_eq!(product_mask(&ones, &m).unwrap().values, m.values);
        assert_eq!(product_mask(&zeros, &m).unwrap().values, zeros.values);
        let a = mask_of(Array2::from_elem(dim, 0.6));
        let b = mask_of(Array2::from_elem(dim, 0.7));
        let p = product_mask(&a, &b).unwrap();
        for ((v, &x), &y) in p.values.iter().zip(a.values.iter()).zip(b.values.iter()) {
            assert!(*v <= x.min(y) + 1e-12);
        }
        // commutative
        let q = product_mask(&b, &a).unwrap();
        assert_eq!(p.values, q.values);
    }

    #[test]
    fn product_mask_rejects_shape_mismatch() {
        let a = TfMask::ones((4, 3));
        let b = TfMask::ones((4, 4));
        assert!(product_mask(&a, &b).is_err());
    }

    #[test]
    fn all_ones_masks_pass_the_input_through() {
        let x = synth_utterance(1, 1.0, 16_000).unwrap();
        let spec = stft(&x, StftConfig::INTERAURAL).unwrap();
        let dim = (spec.num_bins(), spec.num_frames());
        let options = DereverbOptions {
            forced_ild_mask: Some(TfMask::ones(dim)),
            forced_ipd_mask: Some(TfMask::ones(dim)),
            ..DereverbOptions::default()
        };
        let out = dereverberate(&x, &x, None, &options).unwrap();
        // identical channels averaged = the istft round trip of x
        let round = istft(&spec).unwrap();
        let n = out.len().min(round.len());
        let err: f64 = out.samples[..n]
            .iter()
            .zip(&round.samples[..n])
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let energy: f64 = round.samples[..n].iter().map(|v| v * v).sum();
        assert!(err / energy < 1e-20, "relative error {}", err / energy);
    }

    #[test]
    fn missing_model_and_mask_is_a_config_error() {
        let x = synth_utterance(2, 1.0, 16_000).unwrap();
        let options = DereverbOptions::default();
        let err = dereverberate(&x, &x, None, &options).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn output_length_matches_istft_natural_length() {
        let x = synth_utterance(3, 1.3, 16_000).unwrap();
        let spec = stft(&x, StftConfig::INTERAURAL).unwrap();
        let dim = (spec.num_bins(), spec.num_frames());
        let options = DereverbOptions {
            forced_ild_mask: Some(TfMask::ones(dim)),
            forced_ipd_mask: Some(TfMask::ones(dim)),
            ..DereverbOptions::default()
        };
        let out = dereverberate(&x, &x, None, &options).unwrap();
        assert_eq!(out.len(), istft(&spec).unwrap().len());
    }
}
