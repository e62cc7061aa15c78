//! Interaural spectrograms (ILD/IPD), PHAT delay estimation and per-delay
//! phase residuals.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{BenetError, Result};
use crate::par;
use crate::stft::ComplexSpectrogram;

const MAG_FLOOR: f64 = 1e-8;

/// Wraps an angle to [-pi, pi).
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = (x + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w >= std::f64::consts::PI {
        -std::f64::consts::PI
    } else {
        w
    }
}

/// Paired ILD (dB) and IPD (radians, wrapped to [-pi, pi)) matrices.
#[derive(Debug, Clone)]
pub struct InterauralSpectrogram {
    pub ild_db: Array2<f64>,
    pub ipd: Array2<f64>,
}

/// Ordered ITD candidates in samples.
#[derive(Debug, Clone)]
pub struct TauGrid {
    pub candidates: Vec<f64>,
}

impl TauGrid {
    /// -15 to +15 samples in 0.5 sample increments: 61 candidates.
    pub fn standard() -> Self {
        let candidates = (0..61).map(|i| -15.0 + 0.5 * i as f64).collect();
        TauGrid { candidates }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Wrapped IPD residuals, one plane per tau candidate: `residuals[tau][f][t]`.
#[derive(Debug, Clone)]
pub struct PhaseResidualTensor {
    pub residuals: Array3<f64>,
}

/// ILD in dB and wrapped IPD of a left/right spectrogram pair. A magnitude
/// floor keeps silent bins finite.
pub fn interaural_spectrogram(
    left: &ComplexSpectrogram,
    right: &ComplexSpectrogram,
) -> Result<InterauralSpectrogram> {
    if !left.same_shape(right) {
        return Err(BenetError::ShapeMismatch(
            "left/right spectrogram shapes differ".into(),
        ));
    }
    let dim = left.bins.dim();
    let mut ild_db = Array2::zeros(dim);
    let mut ipd = Array2::zeros(dim);
    ndarray::Zip::from(&mut ild_db)
        .and(&mut ipd)
        .and(&left.bins)
        .and(&right.bins)
        .for_each(|a, p, l, r| {
            let ml = l.norm().max(MAG_FLOOR);
            let mr = r.norm().max(MAG_FLOOR);
            *a = 20.0 * (ml / mr).log10();
            *p = if l.norm() <= MAG_FLOOR || r.norm() <= MAG_FLOOR {
                0.0
            } else {
                wrap_angle((l / r).arg())
            };
        });
    Ok(InterauralSpectrogram { ild_db, ipd })
}

/// Per-frame GCC-PHAT over the tau grid. The histogram accumulates the
/// per-frame peak locations; `tau_hat` is the histogram mode. Setting
/// `magnitude_weighted` weights each frame's vote by its peak correlation
/// instead of counting frames equally.
pub fn phat_itd(
    left: &ComplexSpectrogram,
    right: &ComplexSpectrogram,
    grid: &TauGrid,
    magnitude_weighted: bool,
) -> Result<(f64, Vec<f64>)> {
    if !left.same_shape(right) {
        return Err(BenetError::ShapeMismatch(
            "left/right spectrogram shapes differ".into(),
        ));
    }
    let n_bins = left.num_bins();
    let n_frames = left.num_frames();
    let fft_len = left.config.fft_len as f64;
    if left.bins.iter().all(|c| c.norm() == 0.0) {
        return Err(BenetError::DegenerateSignal("all-zero input to PHAT".into()));
    }
    // Per-frame peak pick, parallel over frames.
    let votes = par::map_indexed(n_frames, |t| {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (ti, &tau) in grid.candidates.iter().enumerate() {
            let mut corr = 0.0;
            for f in 0..n_bins {
                let g = left.bins[[f, t]] * right.bins[[f, t]].conj();
                let m = g.norm();
                if m <= MAG_FLOOR {
                    continue;
                }
                let phase = 2.0 * std::f64::consts::PI * f as f64 / fft_len * tau;
                // Re[ (G/|G|) * exp(-j*omega*tau) ]
                corr += (g.arg() - phase).cos();
            }
            if corr > best.1 {
                best = (ti, corr);
            }
        }
        best
    });
    let mut histogram = vec![0.0f64; grid.len()];
    for (ti, corr) in votes {
        histogram[ti] += if magnitude_weighted { corr.max(0.0) } else { 1.0 };
    }
    let mode = histogram
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    Ok((grid.candidates[mode], histogram))
}

/// Residual IPD after removing each candidate delay:
/// `wrap(ipd - 2*pi*f_hz*tau/fs)` for every tau in the grid.
pub fn phase_residual(
    left: &ComplexSpectrogram,
    right: &ComplexSpectrogram,
    grid: &TauGrid,
) -> Result<PhaseResidualTensor> {
    let inter = interaural_spectrogram(left, right)?;
    Ok(phase_residual_from_ipd(
        &inter.ipd,
        grid,
        left.config.fft_len,
    ))
}

/// Same as [`phase_residual`] but starting from a precomputed IPD matrix.
pub fn phase_residual_from_ipd(
    ipd: &Array2<f64>,
    grid: &TauGrid,
    fft_len: usize,
) -> PhaseResidualTensor {
    let (n_bins, n_frames) = ipd.dim();
    let planes = par::map_slice(&grid.candidates, |&tau| {
        let mut plane = Array2::zeros((n_bins, n_frames));
        for f in 0..n_bins {
            let shift = 2.0 * std::f64::consts::PI * f as f64 / fft_len as f64 * tau;
            for t in 0..n_frames {
                plane[[f, t]] = wrap_angle(ipd[[f, t]] - shift);
            }
        }
        plane
    });
    let mut residuals = Array3::zeros((grid.len(), n_bins, n_frames));
    for (ti, plane) in planes.into_iter().enumerate() {
        residuals.index_axis_mut(ndarray::Axis(0), ti).assign(&plane);
    }
    PhaseResidualTensor { residuals }
}

const FMAT_MAGIC: &[u8; 4] = b"FMT1";

/// Writes a matrix as a portable float file: magic `FMT1`, u32 rows,
/// u32 cols (little endian), then row-major f32 data.
pub fn write_fmat(path: &Path, m: &Array2<f64>) -> Result<()> {
    let io = |source: std::io::Error| BenetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    w.write_all(FMAT_MAGIC).map_err(io)?;
    w.write_all(&(m.nrows() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(m.ncols() as u32).to_le_bytes()).map_err(io)?;
    for &v in m.iter() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

pub fn read_fmat(path: &Path) -> Result<Array2<f64>> {
    let io = |source: std::io::Error| BenetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut r = std::io::BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != FMAT_MAGIC {
        return Err(BenetError::Config(format!(
            "{}: not a float-matrix file",
            path.display()
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(io)?;
    let rows = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4).map_err(io)?;
    let cols = u32::from_le_bytes(b4) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        r.read_exact(&mut b4).map_err(io)?;
        data.push(f32::from_le_bytes(b4) as f64);
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| BenetError::Config(e.to_string()))
}
