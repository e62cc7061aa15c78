//! Maximum-likelihood clustering of IPD residuals: a per-(tau, frequency)
//! Gaussian direct-path class against a uniform garbage class absorbing
//! the diffuse reverberation, iterated EM-style.

use ndarray::{Array1, Array2, Array3};

use crate::error::{BenetError, Result};
use crate::par;
use crate::spatial::{
    phase_residual_from_ipd, wrap_angle, InterauralSpectrogram, PhaseResidualTensor, TauGrid,
};
use crate::stft::ComplexSpectrogram;

/// Variance floor in rad^2, preventing collapse onto a single residual.
pub const SIGMA2_FLOOR: f64 = 1e-4;
const UNIFORM_DENSITY: f64 = 1.0 / (2.0 * std::f64::consts::PI);

/// Model parameters: per-(tau, f) Gaussian mean/variance for the direct
/// path, per-tau mixing weights, and the complementary garbage weights.
#[derive(Debug, Clone)]
pub struct MleParams {
    /// Direct-path residual mean, radians: `xi[[tau, f]]`.
    pub xi: Array2<f64>,
    /// Direct-path residual variance, radians^2.
    pub sigma2: Array2<f64>,
    /// Direct-path mixing weight per tau.
    pub psi: Array1<f64>,
    /// Garbage weight per tau, `1 - psi`.
    pub chi: Array1<f64>,
}

impl MleParams {
    /// Total direct-path mass; the garbage class carries `1 -` this.
    pub fn psi_total(&self) -> f64 {
        self.psi.sum()
    }
}

/// Responsibilities: `nu[[tau, f, t]]` for the direct path at each delay,
/// `mu[[f, t]]` for the garbage class; they sum to one at every TF point.
#[derive(Debug, Clone)]
pub struct Posteriors {
    pub nu: Array3<f64>,
    pub mu: Array2<f64>,
}

/// Soft time-frequency mask, values in [0, 1].
#[derive(Debug, Clone)]
pub struct TfMask {
    pub values: Array2<f64>,
}

impl TfMask {
    pub fn ones(dim: (usize, usize)) -> TfMask {
        TfMask {
            values: Array2::from_elem(dim, 1.0),
        }
    }
}

/// EM schedule. The default iterates to a relative log-likelihood
/// tolerance of 1e-4 or 16 iterations; `single_pass` matches a strict
/// no-iteration reading (initialization plus one E-step).
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MleSchedule {
    pub max_iters: usize,
    pub rel_tolerance: f64,
    pub single_pass: bool,
}

impl Default for MleSchedule {
    fn default() -> Self {
        MleSchedule {
            max_iters: 16,
            rel_tolerance: 1e-4,
            single_pass: false,
        }
    }
}

/// Initializes parameters from a PHAT histogram: the direct-path weight is
/// a Gaussian bump (sigma = 1 sample) over tau centered on the histogram
/// peak and normalized to a total mass of 0.5; the direct-path residual
/// starts at zero mean with the phase equivalent of a 1-sample deviation
/// per bin. The garbage class is uniform over phase, much wider than the
/// direct path by construction.
pub fn init_params(
    histogram: &[f64],
    grid: &TauGrid,
    n_bins: usize,
    fft_len: usize,
) -> Result<MleParams> {
    if histogram.len() != grid.len() || histogram.is_empty() {
        return Err(BenetError::Config("histogram does not match tau grid".into()));
    }
    let total: f64 = histogram.iter().sum();
    if total <= 0.0 {
        return Err(BenetError::DegenerateSignal("empty PHAT histogram".into()));
    }
    let peak_idx = histogram
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let flat = histogram.iter().all(|&h| (h - histogram[0]).abs() < 1e-12);
    let tau_peak = grid.candidates[peak_idx];
    let mut psi = Array1::zeros(grid.len());
    for (i, &tau) in grid.candidates.iter().enumerate() {
        psi[i] = if flat {
            1.0
        } else {
            let d = tau - tau_peak;
            (-0.5 * d * d).exp() // sigma = 1 sample
        };
    }
    let mass: f64 = psi.sum();
    psi.mapv_inplace(|v| v / mass * 0.5);
    let chi = psi.mapv(|v| 1.0 - v);
    let xi = Array2::zeros((grid.len(), n_bins));
    let mut sigma2 = Array2::zeros((grid.len(), n_bins));
    for f in 0..n_bins {
        // 1-sample deviation expressed in phase at this bin.
        let s = 2.0 * std::f64::consts::PI * f as f64 / fft_len as f64;
        sigma2.column_mut(f).fill((s * s).max(SIGMA2_FLOOR));
    }
    Ok(MleParams {
        xi,
        sigma2,
        psi,
        chi,
    })
}

fn gaussian(d: f64, sigma2: f64) -> f64 {
    (-0.5 * d * d / sigma2).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
}

/// E-step: responsibilities of every (tau, f, t) cell for the direct path
/// and of every (f, t) point for the garbage class, jointly normalized so
/// they sum to one; returns the total log-likelihood.
pub fn e_step(residuals: &PhaseResidualTensor, params: &MleParams) -> Result<(Posteriors, f64)> {
    let (n_tau, n_bins, n_frames) = residuals.residuals.dim();
    if params.xi.dim() != (n_tau, n_bins) {
        return Err(BenetError::ShapeMismatch("params vs residual tensor".into()));
    }
    let garbage_weight = (1.0 - params.psi_total()).max(0.0);
    let cols = par::map_indexed(n_frames, |t| {
        let mut nu_col = Array2::zeros((n_tau, n_bins));
        let mut mu_col = vec![0.0; n_bins];
        let mut ll = 0.0;
        for f in 0..n_bins {
            let g = garbage_weight * UNIFORM_DENSITY;
            let mut total = g;
            for tau in 0..n_tau {
                let d = wrap_angle(
                    residuals.residuals[[tau, f, t]] - params.xi[[tau, f]],
                );
                let score = params.psi[tau] * gaussian(d, params.sigma2[[tau, f]]);
                nu_col[[tau, f]] = score;
                total += score;
            }
            if total <= 0.0 {
                // All classes vanish: fall back to the garbage class.
                mu_col[f] = 1.0;
                ll += (f64::MIN_POSITIVE).ln();
                continue;
            }
            for tau in 0..n_tau {
                nu_col[[tau, f]] /= total;
            }
            mu_col[f] = g / total;
            ll += total.ln();
        }
        (nu_col, mu_col, ll)
    });
    let mut nu = Array3::zeros((n_tau, n_bins, n_frames));
    let mut mu = Array2::zeros((n_bins, n_frames));
    let mut log_likelihood = 0.0;
    for (t, (nu_col, mu_col, ll)) in cols.into_iter().enumerate() {
        for tau in 0..n_tau {
            for f in 0..n_bins {
                nu[[tau, f, t]] = nu_col[[tau, f]];
            }
        }
        for f in 0..n_bins {
            mu[[f, t]] = mu_col[f];
        }
        log_likelihood += ll;
    }
    Ok((Posteriors { nu, mu }, log_likelihood))
}

/// M-step: responsibility-weighted circular mean and variance of the
/// residuals per (tau, f) cell, and the per-tau mixing weights. Cells with
/// zero total responsibility keep their previous parameters.
pub fn m_step(
    residuals: &PhaseResidualTensor,
    posteriors: &Posteriors,
    previous: &MleParams,
) -> Result<MleParams> {
    let (n_tau, n_bins, n_frames) = residuals.residuals.dim();
    if posteriors.nu.dim() != (n_tau, n_bins, n_frames) {
        return Err(BenetError::ShapeMismatch("posteriors vs residuals".into()));
    }
    let n_points = (n_bins * n_frames) as f64;
    let per_tau = par::map_indexed(n_tau, |tau| {
        let mut xi_row = vec![0.0; n_bins];
        let mut s2_row = vec![0.0; n_bins];
        let mut weight_total = 0.0;
        for f in 0..n_bins {
            let mut w_sum = 0.0;
            let mut d_sum = 0.0;
            for t in 0..n_frames {
                let w = posteriors.nu[[tau, f, t]];
                w_sum += w;
                d_sum += w * wrap_angle(
                    residuals.residuals[[tau, f, t]] - previous.xi[[tau, f]],
                );
            }
            weight_total += w_sum;
            if w_sum <= 1e-300 {
                xi_row[f] = previous.xi[[tau, f]];
                s2_row[f] = previous.sigma2[[tau, f]];
                continue;
            }
            let xi_new = wrap_angle(previous.xi[[tau, f]] + d_sum / w_sum);
            let mut var = 0.0;
            for t in 0..n_frames {
                let w = posteriors.nu[[tau, f, t]];
                let d = wrap_angle(residuals.residuals[[tau, f, t]] - xi_new);
                var += w * d * d;
            }
            xi_row[f] = xi_new;
            s2_row[f] = (var / w_sum).max(SIGMA2_FLOOR);
        }
        (xi_row, s2_row, weight_total / n_points)
    });
    let mut xi = Array2::zeros((n_tau, n_bins));
    let mut sigma2 = Array2::zeros((n_tau, n_bins));
    let mut psi = Array1::zeros(n_tau);
    for (tau, (xi_row, s2_row, w)) in per_tau.into_iter().enumerate() {
        for f in 0..n_bins {
            xi[[tau, f]] = xi_row[f];
            sigma2[[tau, f]] = s2_row[f];
        }
        psi[tau] = w;
    }
    let chi = psi.mapv(|v| 1.0 - v);
    Ok(MleParams {
        xi,
        sigma2,
        psi,
        chi,
    })
}

/// Full MLE run over a residual tensor with explicit initialization.
/// Returns the direct-path mask `M_z = sum_tau nu`, the garbage mask
/// `M_x = mu` (so `M_z + M_x = 1` pointwise), the final parameters and the
/// per-iteration log-likelihood trace.
pub fn run_mle_on_residuals(
    residuals: &PhaseResidualTensor,
    init: MleParams,
    schedule: MleSchedule,
) -> Result<(TfMask, TfMask, MleParams, Vec<f64>)> {
    let mut params = init;
    let mut trace = Vec::new();
    let (mut post, mut ll) = e_step(residuals, &params)?;
    trace.push(ll);
    if !schedule.single_pass {
        for _ in 0..schedule.max_iters {
            params = m_step(residuals, &post, &params)?;
            let (p2, ll2) = e_step(residuals, &params)?;
            post = p2;
            let improved = ll2 - ll;
            ll = ll2;
            trace.push(ll);
            if improved.abs() < schedule.rel_tolerance * ll.abs() {
                break;
            }
        }
    }
    let (_, n_bins, n_frames) = residuals.residuals.dim();
    let mut m_z = Array2::zeros((n_bins, n_frames));
    for f in 0..n_bins {
        for t in 0..n_frames {
            let s: f64 = (0..residuals.residuals.dim().0)
                .map(|tau| post.nu[[tau, f, t]])
                .sum();
            m_z[[f, t]] = s.clamp(0.0, 1.0);
        }
    }
    let m_x = post.mu.mapv(|v| v.clamp(0.0, 1.0));
    Ok((
        TfMask { values: m_z },
        TfMask { values: m_x },
        params,
        trace,
    ))
}

/// End-to-end MLE from a left/right spectrogram pair: PHAT initialization,
/// per-tau residuals, EM iterations, product-ready masks.
pub fn run_mle(
    left: &ComplexSpectrogram,
    right: &ComplexSpectrogram,
    grid: &TauGrid,
    schedule: MleSchedule,
) -> Result<(TfMask, TfMask, MleParams, Vec<f64>)> {
    let inter: InterauralSpectrogram = crate::spatial::interaural_spectrogram(left, right)?;
    let (_, histogram) = crate::spatial::phat_itd(left, right, grid, false)?;
    let residuals = phase_residual_from_ipd(&inter.ipd, grid, left.config.fft_len);
    let init = init_params(&histogram, grid, left.num_bins(), left.config.fft_len)?;
    run_mle_on_residuals(&residuals, init, schedule)
}

/// Writes the per-iteration likelihood trace and final parameters to a
/// structured text file for debugging.
pub fn dump_trace(path: &std::path::Path, trace: &[f64], params: &MleParams) -> Result<()> {
    use std::io::Write;
    let io = |source: std::io::Error| BenetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "# mle trace").map_err(io)?;
    for (i, ll) in trace.iter().enumerate() {
        writeln!(w, "iter {i} log_likelihood {ll:.6}").map_err(io)?;
    }
    writeln!(w, "psi_total {:.6}", params.psi_total()).map_err(io)?;
    for (i, p) in params.psi.iter().enumerate() {
        writeln!(w, "psi[{i}] {p:.8}").map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_grid() -> TauGrid {
        TauGrid {
            candidates: (0..7).map(|i| i as f64 - 3.0).collect(),
        }
    }

    /// Synthetic residual tensor: a fraction `dp_fraction` of TF points
    /// draw from N(0, sigma^2) on the plane of `tau_idx` and uniform on
    /// the other planes; the rest are uniform everywhere. Returns the
    /// tensor and the ground-truth DP labels.
    fn synthetic_residuals(
        grid: &TauGrid,
        n_bins: usize,
        n_frames: usize,
        tau_idx: usize,
        dp_fraction: f64,
        sigma: f64,
        seed: u64,
    ) -> (PhaseResidualTensor, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut residuals = Array3::zeros((grid.len(), n_bins, n_frames));
        let mut labels = Vec::with_capacity(n_bins * n_frames);
        for f in 0..n_bins {
            for t in 0..n_frames {
                let is_dp = rng.gen_bool(dp_fraction);
                labels.push(is_dp);
                for tau in 0..grid.len() {
                    residuals[[tau, f, t]] = if is_dp && tau == tau_idx {
                        let g: f64 = rng.sample(rand_distr::StandardNormal);
                        wrap_angle(g * sigma)
                    } else {
                        // Off the matching plane the phase decorrelates, so
                        // every other cell is an independent uniform draw.
                        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
                    };
                }
            }
        }
        (PhaseResidualTensor { residuals }, labels)
    }

    #[test]
    fn init_peak_location_and_closure() {
        let grid = TauGrid::standard();
        let mut histogram = vec![0.0; grid.len()];
        let idx = grid.candidates.iter().position(|&t| t == 3.0).unwrap();
        histogram[idx] = 50.0;
        let params = init_params(&histogram, &grid, 513, 1024).unwrap();
        let argmax = params
            .psi
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(grid.candidates[argmax], 3.0);
        for (p, c) in params.psi.iter().zip(params.chi.iter()) {
            assert_abs_diff_eq!(p + c, 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(params.psi_total(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn init_flat_histogram_flat_psi() {
        let grid = TauGrid::standard();
        let histogram = vec![1.0; grid.len()];
        let params = init_params(&histogram, &grid, 16, 1024).unwrap();
        for &p in params.psi.iter() {
            assert_abs_diff_eq!(p, 0.5 / grid.len() as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn init_dp_tighter_than_garbage() {
        // The DP bump over tau uses sigma = 1 sample; the garbage class is
        // uniform over the whole wrapped-phase circle, i.e. much wider.
        let grid = TauGrid::standard();
        let mut histogram = vec![0.0; grid.len()];
        histogram[30] = 1.0;
        let params = init_params(&histogram, &grid, 64, 1024).unwrap();
        // Most of the mass concentrates within +-2 samples of the peak
        // (two standard deviations of the over-tau bump).
        let near: f64 = (26..=34).map(|i| params.psi[i]).sum();
        assert!(near > 0.9 * params.psi_total());
        for f in 1..64 {
            assert!(params.sigma2[[0, f]] < (2.0 * std::f64::consts::PI).powi(2) / 12.0 * 10.0);
        }
    }

    #[test]
    fn init_rejects_empty_histogram() {
        let grid = toy_grid();
        assert!(init_params(&vec![0.0; grid.len()], &grid, 8, 64).is_err());
        assert!(init_params(&[1.0; 3], &grid, 8, 64).is_err());
    }

    #[test]
    fn e_step_normalization() {
        let grid = toy_grid();
        let (res, _) = synthetic_residuals(&grid, 32, 40, 4, 0.6, 0.2, 1);
        let params = init_params(&vec![1.0; grid.len()], &grid, 32, 64).unwrap();
        let (post, _) = e_step(&res, &params).unwrap();
        for f in 0..32 {
            for t in 0..40 {
                let s: f64 = (0..grid.len()).map(|tau| post.nu[[tau, f, t]]).sum();
                assert_abs_diff_eq!(s + post.mu[[f, t]], 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn e_step_psi_zero_gives_all_garbage() {
        let grid = toy_grid();
        let (res, _) = synthetic_residuals(&grid, 8, 10, 4, 0.5, 0.2, 2);
        let mut params = init_params(&vec![1.0; grid.len()], &grid, 8, 64).unwrap();
        params.psi.fill(0.0);
        let (post, _) = e_step(&res, &params).unwrap();
        for &m in post.mu.iter() {
            assert_abs_diff_eq!(m, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn e_step_dominant_gaussian() {
        let grid = toy_grid();
        let n_tau = grid.len();
        let mut residuals = Array3::zeros((n_tau, 4, 4));
        residuals.fill(2.0); // far from xi=0 on all planes...
        residuals
            .index_axis_mut(ndarray::Axis(0), 3)
            .fill(0.0); // ...except tau index 3
        let res = PhaseResidualTensor { residuals };
        let mut params = init_params(&vec![1.0; n_tau], &grid, 4, 64).unwrap();
        params.psi.fill(1e-6);
        params.psi[3] = 0.99;
        params.sigma2.fill(1e-3);
        let (post, _) = e_step(&res, &params).unwrap();
        for f in 0..4 {
            for t in 0..4 {
                assert!(post.nu[[3, f, t]] > 0.99);
                assert!(post.mu[[f, t]] < 0.01);
            }
        }
    }

    #[test]
    fn m_step_weighted_mean_and_floor() {
        let grid = toy_grid();
        let n_tau = grid.len();
        let mut residuals = Array3::zeros((n_tau, 2, 3));
        residuals.fill(0.3);
        let res = PhaseResidualTensor { residuals };
        let prev = init_params(&vec![1.0; n_tau], &grid, 2, 64).unwrap();
        let mut nu = Array3::zeros((n_tau, 2, 3));
        nu.index_axis_mut(ndarray::Axis(0), 2).fill(1.0);
        let post = Posteriors {
            nu,
            mu: Array2::zeros((2, 3)),
        };
        let params = m_step(&res, &post, &prev).unwrap();
        for f in 0..2 {
            assert_abs_diff_eq!(params.xi[[2, f]], 0.3, epsilon = 1e-12);
            assert_abs_diff_eq!(params.sigma2[[2, f]], SIGMA2_FLOOR, epsilon = 1e-15);
        }
        // tau cells with zero responsibility hold their previous values.
        assert_abs_diff_eq!(params.xi[[0, 0]], prev.xi[[0, 0]], epsilon = 1e-15);
    }

    #[test]
    fn m_step_uniform_posteriors_uniform_psi() {
        let grid = toy_grid();
        let n_tau = grid.len();
        let (res, _) = synthetic_residuals(&grid, 8, 9, 3, 0.5, 0.3, 3);
        let prev = init_params(&vec![1.0; n_tau], &grid, 8, 64).unwrap();
        let nu = Array3::from_elem((n_tau, 8, 9), 0.1);
        let post = Posteriors {
            nu,
            mu: Array2::from_elem((8, 9), 1.0 - 0.1 * n_tau as f64),
        };
        let params = m_step(&res, &post, &prev).unwrap();
        for &p in params.psi.iter() {
            assert_abs_diff_eq!(p, 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn em_monotone_log_likelihood() {
        let grid = toy_grid();
        for trial in 0..20 {
            let (res, _) =
                synthetic_residuals(&grid, 24, 30, 4, 0.3 + 0.02 * trial as f64, 0.25, 100 + trial as u64);
            let mut params = init_params(&vec![1.0; grid.len()], &grid, 24, 64).unwrap();
            let (mut post, mut ll) = e_step(&res, &params).unwrap();
            for _ in 0..16 {
                params = m_step(&res, &post, &params).unwrap();
                let (p2, ll2) = e_step(&res, &params).unwrap();
                assert!(
                    ll2 >= ll - 1e-8,
                    "trial {trial}: log-likelihood dropped {ll} -> {ll2}"
                );
                post = p2;
                ll = ll2;
            }
        }
    }

    #[test]
    fn recovers_mixture_weight_and_separates() {
        let grid = toy_grid();
        let tau_idx = 5;
        let (res, labels) = synthetic_residuals(&grid, 48, 1000, tau_idx, 0.7, 0.1, 7);
        let mut histogram = vec![0.0; grid.len()];
        histogram[tau_idx] = 10.0;
        let init = init_params(&histogram, &grid, 48, 64).unwrap();
        let (m_z, m_x, params, trace) =
            run_mle_on_residuals(&res, init, MleSchedule::default()).unwrap();
        assert!(trace.len() >= 2);
        let psi_total = params.psi_total();
        assert!(
            (psi_total - 0.7).abs() < 0.05,
            "recovered psi_total {psi_total}"
        );
        // Mask closure.
        for (a, b) in m_z.values.iter().zip(m_x.values.iter()) {
            assert_abs_diff_eq!(a + b, 1.0, epsilon = 1e-9);
        }
        // AUC of M_z against the ground-truth labels; labels were
        // generated f-major, matching the mask's row-major layout.
        let (n_bins, n_frames) = m_z.values.dim();
        let mut scored = Vec::with_capacity(n_bins * n_frames);
        let mut li = 0;
        for f in 0..n_bins {
            for t in 0..n_frames {
                scored.push((m_z.values[[f, t]], labels[li]));
                li += 1;
            }
        }
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let n_pos = scored.iter().filter(|s| s.1).count() as f64;
        let n_neg = scored.len() as f64 - n_pos;
        let mut rank_sum = 0.0;
        for (rank, s) in scored.iter().enumerate() {
            if s.1 {
                rank_sum += (rank + 1) as f64;
            }
        }
        let auc = (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
        assert!(auc > 0.9, "AUC {auc}");
    }

    #[test]
    fn mirrored_scene_mirrors_psi() {
        let grid = toy_grid();
        let center = 3; // tau = 0 index
        let (res_a, _) = synthetic_residuals(&grid, 32, 40, center + 2, 0.6, 0.12, 9);
        let (res_b, _) = synthetic_residuals(&grid, 32, 40, center - 2, 0.6, 0.12, 9);
        let mut hist_a = vec![0.0; grid.len()];
        hist_a[center + 2] = 1.0;
        let mut hist_b = vec![0.0; grid.len()];
        hist_b[center - 2] = 1.0;
        let init_a = init_params(&hist_a, &grid, 32, 64).unwrap();
        let init_b = init_params(&hist_b, &grid, 32, 64).unwrap();
        let (_, _, pa, _) = run_mle_on_residuals(&res_a, init_a, MleSchedule::default()).unwrap();
        let (_, _, pb, _) = run_mle_on_residuals(&res_b, init_b, MleSchedule::default()).unwrap();
        let amax = pa.psi.iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap().0;
        let bmax = pb.psi.iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap().0;
        assert_eq!(
            grid.candidates[amax], -grid.candidates[bmax],
            "psi peaks at {} and {}",
            grid.candidates[amax], grid.candidates[bmax]
        );
    }

    #[test]
    fn single_pass_mode_skips_iteration() {
        let grid = toy_grid();
        let (res, _) = synthetic_residuals(&grid, 16, 20, 4, 0.6, 0.15, 11);
        let init = init_params(&vec![1.0; grid.len()], &grid, 16, 64).unwrap();
        let schedule = MleSchedule {
            single_pass: true,
            ..Default::default()
        };
        let (_, _, _, trace) = run_mle_on_residuals(&res, init, schedule).unwrap();
        assert_eq!(trace.len(), 1);
    }
}
