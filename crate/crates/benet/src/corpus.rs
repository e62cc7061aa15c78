//! Seeded synthetic speech-like corpus: glottal pulse trains through
//! wandering formant resonators, interleaved with unvoiced fricative
//! bursts and short pauses. Not intelligible speech, but it shares the
//! statistics the toolkit cares about — a harmonic low band, formant
//! envelopes, 2-8 Hz syllabic energy modulation and silences — and is
//! fully reproducible from a seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{BenetError, Result};
use crate::signal::TimeSignal;

/// Default corpus sample rate.
pub const CORPUS_FS: u32 = 16_000;

/// Two-pole resonator state for one formant.
struct Formant {
    freq: f64,
    bandwidth: f64,
    s1: f64,
    s2: f64,
}

impl Formant {
    fn new(freq: f64, bandwidth: f64) -> Formant {
        Formant {
            freq,
            bandwidth,
            s1: 0.0,
            s2: 0.0,
        }
    }

    fn tick(&mut self, x: f64, fs: f64) -> f64 {
        let r = (-std::f64::consts::PI * self.bandwidth / fs).exp();
        let w = 2.0 * std::f64::consts::PI * self.freq / fs;
        let y = x + 2.0 * r * w.cos() * self.s1 - r * r * self.s2;
        self.s2 = self.s1;
        self.s1 = y;
        y * (1.0 - r)
    }
}

/// One synthetic utterance of `seconds` length. Deterministic per seed.
pub fn synth_utterance(seed: u64, seconds: f64, fs: u32) -> Result<TimeSignal> {
    if seconds <= 0.0 || fs == 0 {
        return Err(BenetError::Config(format!(
            "invalid utterance request: {seconds} s at {fs} Hz"
        )));
    }
    let fsf = fs as f64;
    let n = (seconds * fsf).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0f64; n];

    let f0_base = rng.gen_range(95.0..220.0);
    let mut formants = [
        Formant::new(500.0, 80.0),
        Formant::new(1500.0, 120.0),
        Formant::new(2500.0, 180.0),
    ];

    // Segment plan: voiced / unvoiced / pause chunks of 80-250 ms.
    let mut pos = 0usize;
    let mut phase = 0.0f64;
    while pos < n {
        let seg_len = (rng.gen_range(0.08..0.25) * fsf) as usize;
        let end = (pos + seg_len).min(n);
        let kind: f64 = rng.gen();
        if kind < 0.15 {
            // pause
            pos = end;
            continue;
        }
        let voiced = kind < 0.80;
        // new articulation target per segment
        let targets = [
            rng.gen_range(300.0..900.0),
            rng.gen_range(1000.0..2200.0),
            rng.gen_range(2300.0..3400.0),
        ];
        let f0_seg = f0_base * rng.gen_range(0.85..1.2);
        let gain = rng.gen_range(0.5..1.0);
        for i in pos..end {
            // glide formants toward the segment's targets
            for (f, &t) in formants.iter_mut().zip(&targets) {
                f.freq += (t - f.freq) * 30.0 / fsf;
            }
            let t_seg = (i - pos) as f64 / (end - pos).max(1) as f64;
            // raised-cosine syllable envelope
            let env = (std::f64::consts::PI * t_seg).sin().powf(0.5);
            let excitation = if voiced {
                // impulse-ish glottal pulse train with jitter
                let f0 = f0_seg * (1.0 + 0.02 * (2.0 * std::f64::consts::PI * 5.0 * i as f64 / fsf).sin());
                phase += f0 / fsf;
                if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    // spectral tilt: weak secondary excitation
                    -0.02 * phase
                }
            } else {
                rng.gen_range(-0.3..0.3)
            };
            let mut v = 0.0;
            for f in formants.iter_mut() {
                v += f.tick(excitation, fsf);
            }
            out[i] = v * env * gain;
        }
        pos = end;
    }

    // normalize to a sane speech level
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let s = 0.3 / peak;
        for v in &mut out {
            *v *= s;
        }
    }
    Ok(TimeSignal::new(out, fs))
}

/// `count` utterances of `seconds` each; seeds derive from `seed` so any
/// subset is reproducible independently.
pub fn synth_corpus(seed: u64, count: usize, seconds: f64, fs: u32) -> Result<Vec<TimeSignal>> {
    (0..count)
        .map(|i| synth_utterance(seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seed, seconds, fs))
        .collect()
}

/// Writes a corpus to `dir` as `utt_0000.wav`..; returns the paths.
pub fn write_corpus(
    dir: &std::path::Path,
    seed: u64,
    count: usize,
    seconds: f64,
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(count);
    for (i, utt) in synth_corpus(seed, count, seconds, CORPUS_FS)?.iter().enumerate() {
        let path = dir.join(format!("utt_{i:04}.wav"));
        crate::signal::write_wav(&path, utt)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utterances_are_deterministic_per_seed() {
        let a = synth_utterance(7, 1.0, CORPUS_FS).unwrap();
        let b = synth_utterance(7, 1.0, CORPUS_FS).unwrap();
        let c = synth_utterance(8, 1.0, CORPUS_FS).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn utterance_has_speechlike_level_and_length() {
        let x = synth_utterance(1, 2.0, CORPUS_FS).unwrap();
        assert_eq!(x.len(), 32_000);
        let peak = x.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak > 0.05 && peak <= 0.3 + 1e-12, "peak {peak}");
        assert!(x.energy() > 0.0);
    }

    #[test]
    fn energy_concentrates_below_4_khz() {
        let x = synth_utterance(2, 2.0, CORPUS_FS).unwrap();
        let spec = crate::stft::stft(&x, crate::stft::StftConfig::INTERAURAL).unwrap();
        let n_bins = spec.num_bins();
        let split = n_bins / 2; // 4 kHz at 16 kHz fs
        let low: f64 = spec.bins.slice(ndarray::s![..split, ..]).iter().map(|c| c.norm_sqr()).sum();
        let high: f64 = spec.bins.slice(ndarray::s![split.., ..]).iter().map(|c| c.norm_sqr()).sum();
        assert!(low > 5.0 * high, "low {low} high {high}");
    }

    #[test]
    fn corpus_supports_ten_minutes() {
        // capability check without synthesizing 10 minutes: the request
        // path is the same for any total duration
        let c = synth_corpus(3, 4, 0.25, CORPUS_FS).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|u| u.len() == 4_000));
        assert!(synth_utterance(4, 600.0, 100).unwrap().len() == 60_000);
    }

    #[test]
    fn invalid_requests_are_rejected() {
        assert!(synth_utterance(0, 0.0, CORPUS_FS).is_err());
        assert!(synth_utterance(0, 1.0, 0).is_err());
    }

    #[test]
    fn corpus_round_trips_through_wav_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_corpus(dir.path(), 5, 2, 0.3).unwrap();
        assert_eq!(paths.len(), 2);
        for p in &paths {
            let sig = crate::signal::read_wav_mono(p).unwrap();
            assert_eq!(sig.sample_rate, CORPUS_FS);
            assert_eq!(sig.len(), 4_800);
        }
    }
}
