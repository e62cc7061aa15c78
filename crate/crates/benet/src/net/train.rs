//! Momentum-SGD training loop with per-pixel cross-entropy, L2 weight
//! decay, seeded shuffling and dropout, and an accuracy-plateau early
//! stop. Per-sample gradients inside a minibatch are computed in parallel
//! and reduced in sample order, so results are identical across thread
//! counts and the sequential build.

use ndarray::{Array1, Array2, Array4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Conv2d, Conv2dGrad, ConvTranspose2d};
use super::model::{Grads, LevelUNet, MaskImage};
use crate::error::{BenetError, Result};
use crate::par;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainHyper {
    pub momentum: f64,
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Held-out fraction used only for reporting.
    pub val_split: f64,
    /// Early stop: epochs without this much train-accuracy improvement.
    pub patience: usize,
    pub plateau_threshold: f64,
    /// Global L2-norm ceiling for the batch-mean gradient.
    pub grad_clip: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            momentum: 0.95,
            learning_rate: 0.01,
            l2: 1e-4,
            batch_size: 8,
            max_epochs: 30,
            val_split: 0.02,
            patience: 3,
            plateau_threshold: 0.001,
            grad_clip: 1.0,
        }
    }
}

impl TrainHyper {
    /// Epoch budget per room reverberation time.
    pub fn for_rt60(rt60: f64) -> TrainHyper {
        let max_epochs = if rt60 < 0.36 {
            30
        } else if rt60 < 0.585 {
            13
        } else if rt60 < 0.795 {
            10
        } else {
            5
        };
        TrainHyper {
            max_epochs,
            ..TrainHyper::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub final_accuracy: f64,
}

/// A network with its training provenance.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: LevelUNet,
    pub meta: TrainMeta,
    pub log: Vec<EpochStats>,
}

struct Velocity {
    g: Grads,
}

impl Velocity {
    fn zeros(net: &LevelUNet) -> Velocity {
        let zc = |c: &Conv2d| Conv2dGrad {
            weight: Array4::zeros(c.weight.dim()),
            bias: Array1::zeros(c.bias.dim()),
        };
        let zt = |c: &ConvTranspose2d| Conv2dGrad {
            weight: Array4::zeros(c.weight.dim()),
            bias: Array1::zeros(c.bias.dim()),
        };
        Velocity {
            g: Grads {
                enc1a: zc(&net.enc1a),
                enc1b: zc(&net.enc1b),
                enc2a: zc(&net.enc2a),
                enc2b: zc(&net.enc2b),
                up: zt(&net.up),
                dec1a: zc(&net.dec1a),
                dec1b: zc(&net.dec1b),
                head: zc(&net.head),
            },
        }
    }
}

fn add_grads(into: &mut Grads, from: &Grads) {
    for (a, b) in grad_fields_mut_pair(into, from) {
        a.weight += &b.weight;
        a.bias += &b.bias;
    }
}

fn grad_fields_mut_pair<'a>(a: &'a mut Grads, b: &'a Grads) -> Vec<(&'a mut Conv2dGrad, &'a Conv2dGrad)> {
    vec![
        (&mut a.enc1a, &b.enc1a),
        (&mut a.enc1b, &b.enc1b),
        (&mut a.enc2a, &b.enc2a),
        (&mut a.enc2b, &b.enc2b),
        (&mut a.up, &b.up),
        (&mut a.dec1a, &b.dec1a),
        (&mut a.dec1b, &b.dec1b),
        (&mut a.head, &b.head),
    ]
}

/// Momentum update with decoupled-into-gradient L2:
/// `v = momentum*v - lr*(g/batch + l2*w)`, `w += v`.
/// The batch-mean gradient is clipped to a global L2 norm of
/// `hyper.grad_clip` first; with momentum 0.95 a single outlier batch
/// otherwise compounds twentyfold and can destabilize a converged run.
fn sgd_step(
    net: &mut LevelUNet,
    vel: &mut Velocity,
    grads: &Grads,
    batch: f64,
    hyper: &TrainHyper,
) {
    let mom = hyper.momentum;
    let l2 = hyper.l2;
    let mut sq = 0.0;
    for g in [
        &grads.enc1a, &grads.enc1b, &grads.enc2a, &grads.enc2b, &grads.up, &grads.dec1a,
        &grads.dec1b, &grads.head,
    ] {
        sq += g.weight.iter().map(|x| (x / batch).powi(2)).sum::<f64>();
        sq += g.bias.iter().map(|x| (x / batch).powi(2)).sum::<f64>();
    }
    let norm = sq.sqrt();
    let scale = if norm > hyper.grad_clip {
        hyper.grad_clip / norm
    } else {
        1.0
    };
    let lr = hyper.learning_rate;
    let batch = batch / scale;
    let mut pairs: Vec<(&mut Array4<f64>, &mut Array1<f64>, &mut Conv2dGrad, &Conv2dGrad)> = vec![
        (&mut net.enc1a.weight, &mut net.enc1a.bias, &mut vel.g.enc1a, &grads.enc1a),
        (&mut net.enc1b.weight, &mut net.enc1b.bias, &mut vel.g.enc1b, &grads.enc1b),
        (&mut net.enc2a.weight, &mut net.enc2a.bias, &mut vel.g.enc2a, &grads.enc2a),
        (&mut net.enc2b.weight, &mut net.enc2b.bias, &mut vel.g.enc2b, &grads.enc2b),
        (&mut net.up.weight, &mut net.up.bias, &mut vel.g.up, &grads.up),
        (&mut net.dec1a.weight, &mut net.dec1a.bias, &mut vel.g.dec1a, &grads.dec1a),
        (&mut net.dec1b.weight, &mut net.dec1b.bias, &mut vel.g.dec1b, &grads.dec1b),
        (&mut net.head.weight, &mut net.head.bias, &mut vel.g.head, &grads.head),
    ];
    for (w, b, v, g) in pairs.iter_mut() {
        ndarray::Zip::from(&mut v.weight)
            .and(&**w)
            .and(&g.weight)
            .for_each(|v, &w, &g| *v = mom * *v - lr * (g / batch + l2 * w));
        **w += &v.weight;
        ndarray::Zip::from(&mut v.bias)
            .and(&**b)
            .and(&g.bias)
            .for_each(|v, &b, &g| *v = mom * *v - lr * (g / batch + l2 * b));
        **b += &v.bias;
    }
}

fn pixel_accuracy(probs: &ndarray::Array3<f64>, target: &Array2<u8>) -> (usize, usize) {
    let (c, h, w) = probs.dim();
    let mut correct = 0;
    for py in 0..h {
        for px in 0..w {
            let mut best = 0;
            for ch in 1..c {
                if probs[[ch, py, px]] > probs[[best, py, px]] {
                    best = ch;
                }
            }
            if best == target[[py, px]] as usize {
                correct += 1;
            }
        }
    }
    (correct, h * w)
}

/// Trains in place and returns the model with its log. Deterministic for a
/// fixed seed: shuffling and every sample's dropout mask derive from it.
pub fn train(
    mut net: LevelUNet,
    dataset: &[(Array2<f64>, MaskImage)],
    hyper: &TrainHyper,
    seed: u64,
) -> Result<TrainedModel> {
    if dataset.len() < 2 {
        return Err(BenetError::Config("dataset needs at least 2 images".into()));
    }
    let mut seen = [false; 2];
    for (_, m) in dataset {
        for &c in m.classes.iter() {
            if (c as usize) < 2 {
                seen[c as usize] = true;
            }
        }
    }
    if !(seen[0] && seen[1]) {
        return Err(BenetError::Config(
            "degenerate dataset: both classes must be present".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_val = ((dataset.len() as f64) * hyper.val_split).round() as usize;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let (val_idx, train_idx) = order.split_at(n_val.min(dataset.len() - 1));
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut vel = Velocity::zeros(&net);
    let mut log = Vec::new();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_net = net.clone();
    let mut stall = 0;
    let mut epochs_run = 0;
    for epoch in 0..hyper.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        let mut total = 0usize;
        for (step, chunk) in train_idx.chunks(hyper.batch_size).enumerate() {
            let results = par::map_slice(chunk, |&idx| {
                let (image, mask) = &dataset[idx];
                // Each sample's dropout stream is keyed by (seed, epoch,
                // step, index) so thread scheduling cannot change it.
                let mut drop_rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (epoch as u64) << 40 ^ (step as u64) << 20 ^ idx as u64,
                );
                let cache = net.forward(image, Some(&mut drop_rng))?;
                let (loss, grads) = net.backward(&cache, &mask.classes);
                let acc = pixel_accuracy(&cache.probs, &mask.classes);
                Ok::<_, BenetError>((loss, grads, acc))
            });
            let mut batch_grads: Option<Grads> = None;
            for r in results {
                let (loss, grads, (c, t)) = r?;
                if !loss.is_finite() {
                    return Err(BenetError::Numerical(format!(
                        "non-finite loss at epoch {epoch} step {step}"
                    )));
                }
                epoch_loss += loss;
                correct += c;
                total += t;
                match &mut batch_grads {
                    None => batch_grads = Some(grads),
                    Some(acc) => add_grads(acc, &grads),
                }
            }
            if let Some(grads) = batch_grads {
                sgd_step(&mut net, &mut vel, &grads, chunk.len() as f64, hyper);
            }
        }
        let train_accuracy = correct as f64 / total.max(1) as f64;
        let loss = epoch_loss / train_idx.len().max(1) as f64;
        let val_accuracy = if val_idx.is_empty() {
            f64::NAN
        } else {
            let mut vc = 0;
            let mut vt = 0;
            for &idx in &val_idx {
                let (image, mask) = &dataset[idx];
                let cache = net.forward(image, None)?;
                let (c, t) = pixel_accuracy(&cache.probs, &mask.classes);
                vc += c;
                vt += t;
            }
            vc as f64 / vt as f64
        };
        epochs_run = epoch + 1;
        log.push(EpochStats {
            epoch: epochs_run,
            loss,
            train_accuracy,
            val_accuracy,
        });
        if train_accuracy > best_acc + hyper.plateau_threshold {
            best_acc = train_accuracy;
            best_net = net.clone();
            stall = 0;
        } else {
            stall += 1;
            if stall >= hyper.patience {
                break;
            }
        }
    }
    let net = best_net;
    let final_accuracy = if best_acc.is_finite() { best_acc } else { 0.0 };
    Ok(TrainedModel {
        net,
        meta: TrainMeta {
            seed,
            epochs_run,
            final_accuracy,
        },
        log,
    })
}

/// Writes the per-epoch log as CSV (epoch, loss, train and val accuracy).
pub fn write_training_log(path: &std::path::Path, log: &[EpochStats]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epoch,loss,train_accuracy,val_accuracy")?;
    for s in log {
        writeln!(
            f,
            "{},{:.6},{:.6},{:.6}",
            s.epoch, s.loss, s.train_accuracy, s.val_accuracy
        )?;
    }
    Ok(())
}
