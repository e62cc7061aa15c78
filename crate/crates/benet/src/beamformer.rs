//! MVDR beamforming over an 8-element linear array, and the STFT-domain
//! subtraction that extracts the reverberation class from a reverberant
//! capture.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{BenetError, Result};
use crate::par;
use crate::room::{distance, ScenarioSpec};
use crate::stft::{ComplexSpectrogram, StftConfig};

/// Fraction of `trace/P` added to the covariance diagonal.
pub const DIAGONAL_LOADING: f64 = 1e-3;

/// A linear microphone array. The first microphone is the reference; the
/// axis runs from the reference toward the last element.
#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<[f64; 3]>,
    pub spacing: f64,
}

impl ArrayGeometry {
    /// 8 microphones, 5 cm spacing, laid out from `reference` along
    /// `direction` (unit vector).
    pub fn linear_8(reference: [f64; 3], direction: [f64; 3]) -> ArrayGeometry {
        let spacing = 0.05;
        let mic_positions = (0..8)
            .map(|k| {
                let d = spacing * k as f64;
                [
                    reference[0] + d * direction[0],
                    reference[1] + d * direction[1],
                    reference[2] + d * direction[2],
                ]
            })
            .collect();
        ArrayGeometry {
            mic_positions,
            spacing,
        }
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn reference(&self) -> [f64; 3] {
        self.mic_positions[0]
    }

    /// Signed distance of each mic from the reference along the array axis.
    fn axial_offsets(&self) -> Vec<f64> {
        let r = self.reference();
        let last = *self.mic_positions.last().unwrap();
        let axis = [last[0] - r[0], last[1] - r[1], last[2] - r[2]];
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        self.mic_positions
            .iter()
            .map(|m| {
                ((m[0] - r[0]) * axis[0] + (m[1] - r[1]) * axis[1] + (m[2] - r[2]) * axis[2])
                    / norm.max(1e-12)
            })
            .collect()
    }

    /// Look angle (degrees from broadside) toward a source, measured in
    /// the plane of the array axis.
    pub fn look_angle_deg(&self, source: [f64; 3]) -> f64 {
        let r = self.reference();
        let offsets = self.axial_offsets();
        let last = *self.mic_positions.last().unwrap();
        let norm = *offsets.last().unwrap();
        let axis = [
            (last[0] - r[0]) / norm,
            (last[1] - r[1]) / norm,
            (last[2] - r[2]) / norm,
        ];
        let center = self.center();
        let v = [
            source[0] - center[0],
            source[1] - center[1],
            source[2] - center[2],
        ];
        let vn = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let cos_from_axis = (v[0] * axis[0] + v[1] * axis[1] + v[2] * axis[2]) / vn;
        cos_from_axis.asin().to_degrees()
    }

    pub fn center(&self) -> [f64; 3] {
        let n = self.num_mics() as f64;
        let mut c = [0.0; 3];
        for m in &self.mic_positions {
            for i in 0..3 {
                c[i] += m[i] / n;
            }
        }
        c
    }
}

/// The left/right beamformer rigs of a scenario: the two reference
/// microphones sit at the binaural sensor positions and each array extends
/// outward along the x axis.
pub fn scenario_arrays(scenario: &ScenarioSpec) -> (ArrayGeometry, ArrayGeometry) {
    let [left_ref, right_ref] = scenario.binaural_mics();
    let left = ArrayGeometry::linear_8(left_ref, [-1.0, 0.0, 0.0]);
    let right = ArrayGeometry::linear_8(right_ref, [1.0, 0.0, 0.0]);
    (left, right)
}

/// Far-field steering vector: entry `p` is `exp(-j*2*pi*freq*delta_p)`
/// where `delta_p` is the plane-wave delay of mic `p` relative to the
/// reference for a source at `angle` degrees from broadside.
pub fn steering_vector(
    geometry: &ArrayGeometry,
    angle_deg: f64,
    freq_hz: f64,
    c: f64,
) -> Vec<Complex64> {
    let sin_a = angle_deg.to_radians().sin();
    geometry
        .axial_offsets()
        .iter()
        .map(|&a| {
            let delay = -a * sin_a / c;
            Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * freq_hz * delay)
        })
        .collect()
}

/// Per-bin steering vectors for every one-sided STFT bin.
#[derive(Debug, Clone)]
pub struct SteeringSpec {
    /// bins x P. Delay-only constructors yield unit-modulus entries;
    /// RIR-derived steering also carries relative gains.
    pub vectors: Array2<Complex64>,
}

impl SteeringSpec {
    /// Far-field steering from a look angle.
    pub fn from_angle(
        geometry: &ArrayGeometry,
        angle_deg: f64,
        config: StftConfig,
        sample_rate: u32,
        c: f64,
    ) -> SteeringSpec {
        let n_bins = config.bins();
        let mut vectors = Array2::default((n_bins, geometry.num_mics()));
        for f in 0..n_bins {
            let v = steering_vector(geometry, angle_deg, config.bin_hz(f, sample_rate), c);
            for (p, &e) in v.iter().enumerate() {
                vectors[[f, p]] = e;
            }
        }
        SteeringSpec { vectors }
    }

    /// Exact spherical-wave delays toward a known source position. The
    /// entries stay unit-modulus (pure delays relative to the reference).
    pub fn from_source(
        geometry: &ArrayGeometry,
        source: [f64; 3],
        config: StftConfig,
        sample_rate: u32,
        c: f64,
    ) -> SteeringSpec {
        let r_ref = distance(source, geometry.reference());
        let delays: Vec<f64> = geometry
            .mic_positions
            .iter()
            .map(|&m| (distance(source, m) - r_ref) / c)
            .collect();
        let n_bins = config.bins();
        let mut vectors = Array2::default((n_bins, geometry.num_mics()));
        for f in 0..n_bins {
            let hz = config.bin_hz(f, sample_rate);
            for (p, &d) in delays.iter().enumerate() {
                vectors[[f, p]] =
                    Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * hz * d);
            }
        }
        SteeringSpec { vectors }
    }

    /// Direct-path relative transfer function steering: entry `p` at bin
    /// `f` is `H_p(f) / H_ref(f)` with `H` the transfer function of mic
    /// `p`'s anechoic impulse response. Unlike the pure-delay variants
    /// this keeps the true per-mic amplitude ratios, so the distortionless
    /// constraint pins the actual direct path and the beamformer cannot
    /// partially cancel it under amplitude mismatch.
    pub fn from_rirs(rirs: &[crate::signal::Rir], reference: usize, config: StftConfig) -> Result<SteeringSpec> {
        if rirs.is_empty() || reference >= rirs.len() {
            return Err(BenetError::Config("reference index out of range".into()));
        }
        let n_bins = config.bins();
        let mut planner = rustfft::FftPlanner::new();
        let fft = planner.plan_fft_forward(config.fft_len);
        let mut spectra = Vec::with_capacity(rirs.len());
        for rir in rirs {
            // Folding the taps modulo the FFT length samples the full
            // transfer function exactly at the bin frequencies.
            let mut buf = vec![Complex64::new(0.0, 0.0); config.fft_len];
            for (n, &h) in rir.taps.iter().enumerate() {
                buf[n % config.fft_len].re += h;
            }
            fft.process(&mut buf);
            buf.truncate(n_bins);
            spectra.push(buf);
        }
        let mut vectors = Array2::default((n_bins, rirs.len()));
        for f in 0..n_bins {
            let h_ref = spectra[reference][f];
            if h_ref.norm() < 1e-12 {
                return Err(BenetError::Numerical(
                    "reference response vanishes at a bin frequency".into(),
                ));
            }
            for (p, spec) in spectra.iter().enumerate() {
                vectors[[f, p]] = spec[f] / h_ref;
            }
        }
        Ok(SteeringSpec { vectors })
    }
}

/// Solves `A x = b` for a small complex system by partial-pivot LU.
fn solve_complex(a: &mut Vec<Vec<Complex64>>, b: &mut Vec<Complex64>) -> Result<Vec<Complex64>> {
    let n = b.len();
    for col in 0..n {
        let (pivot, mag) = (col..n)
            .map(|r| (r, a[r][col].norm()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if mag < 1e-300 {
            return Err(BenetError::Numerical(
                "singular spatial covariance despite diagonal loading".into(),
            ));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            for c in col..n {
                let v = a[col][c];
                a[r][c] -= factor * v;
            }
            let v = b[col];
            b[r] -= factor * v;
        }
    }
    let mut x = vec![Complex64::default(); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Ok(x)
}

/// MVDR weights for one bin: `w = inv(Phi) d / (d^H inv(Phi) d)`.
pub fn mvdr_weights(cov: &[Vec<Complex64>], steering: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut a: Vec<Vec<Complex64>> = cov.to_vec();
    let mut b = steering.to_vec();
    let phi_inv_d = solve_complex(&mut a, &mut b)?;
    let denom: Complex64 = steering
        .iter()
        .zip(phi_inv_d.iter())
        .map(|(d, x)| d.conj() * x)
        .sum();
    if denom.norm() < 1e-300 {
        return Err(BenetError::Numerical("degenerate MVDR denominator".into()));
    }
    Ok(phi_inv_d.iter().map(|x| x / denom).collect())
}

/// Batch MVDR: per-bin sample covariance over all frames of the utterance,
/// diagonally loaded with `1e-3 * trace / P`, solved against the steering
/// vector; the output is `w^H y` per TF bin. The distortionless constraint
/// `w^H d = 1` holds to solver precision.
pub fn mvdr_beamform(
    channel_specs: &[ComplexSpectrogram],
    steering: &SteeringSpec,
) -> Result<ComplexSpectrogram> {
    let p = channel_specs.len();
    if p < 2 {
        return Err(BenetError::Config("need at least 2 channels".into()));
    }
    let first = &channel_specs[0];
    for spec in channel_specs {
        if !spec.same_shape(first) {
            return Err(BenetError::ShapeMismatch(
                "channel spectrogram shapes differ".into(),
            ));
        }
    }
    let n_bins = first.num_bins();
    let n_frames = first.num_frames();
    if steering.vectors.dim() != (n_bins, p) {
        return Err(BenetError::ShapeMismatch(format!(
            "steering {:?} vs ({n_bins}, {p})",
            steering.vectors.dim()
        )));
    }
    let rows: Vec<Result<Vec<Complex64>>> = par::map_indexed(n_bins, |f| {
        // Sample spatial covariance of this frequency bin.
        let mut cov = vec![vec![Complex64::default(); p]; p];
        for t in 0..n_frames {
            for i in 0..p {
                let yi = channel_specs[i].bins[[f, t]];
                for j in 0..p {
                    cov[i][j] += yi * channel_specs[j].bins[[f, t]].conj();
                }
            }
        }
        let scale = 1.0 / n_frames as f64;
        let mut trace = 0.0;
        for i in 0..p {
            for j in 0..p {
                cov[i][j] *= scale;
            }
            trace += cov[i][i].re;
        }
        let load = DIAGONAL_LOADING * trace / p as f64;
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] += Complex64::new(load, 0.0);
        }
        let d: Vec<Complex64> = (0..p).map(|i| steering.vectors[[f, i]]).collect();
        let w = mvdr_weights(&cov, &d)?;
        Ok((0..n_frames)
            .map(|t| {
                (0..p)
                    .map(|i| w[i].conj() * channel_specs[i].bins[[f, t]])
                    .sum()
            })
            .collect())
    });
    let mut bins = Array2::default((n_bins, n_frames));
    for (f, row) in rows.into_iter().enumerate() {
        let row = row?;
        for (t, v) in row.into_iter().enumerate() {
            bins[[f, t]] = v;
        }
    }
    Ok(ComplexSpectrogram {
        bins,
        config: first.config,
        sample_rate: first.sample_rate,
    })
}

/// `X_k = Y_k1 - BF_k`: the reverberation class of the training data.
pub fn extract_reverberation(
    ref_spec: &ComplexSpectrogram,
    beamformed: &ComplexSpectrogram,
) -> Result<ComplexSpectrogram> {
    if !ref_spec.same_shape(beamformed) {
        return Err(BenetError::ShapeMismatch(
            "reference/beamformed shapes differ".into(),
        ));
    }
    let mut out = ref_spec.clone();
    ndarray::Zip::from(&mut out.bins)
        .and(&beamformed.bins)
        .for_each(|x, &b| *x -= b);
    Ok(out)
}
