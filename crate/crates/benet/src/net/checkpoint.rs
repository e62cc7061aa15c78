//! Little-endian binary checkpoints: magic, version, config block,
//! training metadata, epoch log and a fixed-order tensor table. Weights
//! are stored as raw f64 bits, so a round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array4};

use super::layers::{Conv2d, ConvTranspose2d};
use super::model::{LevelUNet, NetConfig};
use super::train::{EpochStats, TrainMeta, TrainedModel};
use crate::error::{BenetError, Result};

const MAGIC: &[u8; 4] = b"BNCK";
const VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn write_tensor4(w: &mut impl Write, t: &Array4<f64>) -> Result<()> {
    let d = t.dim();
    for n in [d.0, d.1, d.2, d.3] {
        write_u64(w, n as u64)?;
    }
    for &v in t.iter() {
        write_f64(w, v)?;
    }
    Ok(())
}

fn write_tensor1(w: &mut impl Write, t: &Array1<f64>) -> Result<()> {
    write_u64(w, t.len() as u64)?;
    for &v in t.iter() {
        write_f64(w, v)?;
    }
    Ok(())
}

fn read_tensor4(r: &mut impl Read) -> Result<Array4<f64>> {
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        *d = read_u64(r)? as usize;
    }
    let n: usize = dims.iter().product();
    if n > 1 << 30 {
        return Err(BenetError::Config("checkpoint tensor too large".into()));
    }
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(read_f64(r)?);
    }
    Array4::from_shape_vec((dims[0], dims[1], dims[2], dims[3]), data)
        .map_err(|e| BenetError::Config(format!("bad checkpoint tensor: {e}")))
}

fn read_tensor1(r: &mut impl Read) -> Result<Array1<f64>> {
    let n = read_u64(r)? as usize;
    if n > 1 << 30 {
        return Err(BenetError::Config("checkpoint tensor too large".into()));
    }
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(read_f64(r)?);
    }
    Ok(Array1::from_vec(data))
}

pub fn save_checkpoint(path: &Path, model: &TrainedModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    let c = &model.net.config;
    write_u64(&mut w, c.height as u64)?;
    write_u64(&mut w, c.width_enc as u64)?;
    write_u64(&mut w, c.width_bot as u64)?;
    write_u64(&mut w, c.classes as u64)?;
    write_f64(&mut w, c.dropout)?;
    write_u64(&mut w, model.meta.seed)?;
    write_u64(&mut w, model.meta.epochs_run as u64)?;
    write_f64(&mut w, model.meta.final_accuracy)?;
    write_u64(&mut w, model.log.len() as u64)?;
    for s in &model.log {
        write_u64(&mut w, s.epoch as u64)?;
        write_f64(&mut w, s.loss)?;
        write_f64(&mut w, s.train_accuracy)?;
        write_f64(&mut w, s.val_accuracy)?;
    }
    let net = &model.net;
    for conv in [
        &net.enc1a, &net.enc1b, &net.enc2a, &net.enc2b, &net.dec1a, &net.dec1b, &net.head,
    ] {
        write_tensor4(&mut w, &conv.weight)?;
        write_tensor1(&mut w, &conv.bias)?;
    }
    write_tensor4(&mut w, &net.up.weight)?;
    write_tensor1(&mut w, &net.up.bias)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    if !path.exists() {
        return Err(BenetError::FileNotFound(path.to_path_buf()));
    }
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(BenetError::Config(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(BenetError::Config(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let config = NetConfig {
        height: read_u64(&mut r)? as usize,
        width_enc: read_u64(&mut r)? as usize,
        width_bot: read_u64(&mut r)? as usize,
        classes: read_u64(&mut r)? as usize,
        dropout: read_f64(&mut r)?,
    };
    config.validate()?;
    let meta = TrainMeta {
        seed: read_u64(&mut r)?,
        epochs_run: read_u64(&mut r)? as usize,
        final_accuracy: read_f64(&mut r)?,
    };
    let n_log = read_u64(&mut r)? as usize;
    if n_log > 1 << 24 {
        return Err(BenetError::Config("corrupt checkpoint log".into()));
    }
    let mut log = Vec::with_capacity(n_log);
    for _ in 0..n_log {
        log.push(EpochStats {
            epoch: read_u64(&mut r)? as usize,
            loss: read_f64(&mut r)?,
            train_accuracy: read_f64(&mut r)?,
            val_accuracy: read_f64(&mut r)?,
        });
    }
    let mut convs = Vec::with_capacity(7);
    for pad in [1usize, 1, 1, 1, 1, 1, 0] {
        let weight = read_tensor4(&mut r)?;
        let bias = read_tensor1(&mut r)?;
        convs.push(Conv2d { weight, bias, pad });
    }
    let up = ConvTranspose2d {
        weight: read_tensor4(&mut r)?,
        bias: read_tensor1(&mut r)?,
    };
    let mut it = convs.into_iter();
    let net = LevelUNet {
        config,
        enc1a: it.next().unwrap(),
        enc1b: it.next().unwrap(),
        enc2a: it.next().unwrap(),
        enc2b: it.next().unwrap(),
        dec1a: it.next().unwrap(),
        dec1b: it.next().unwrap(),
        head: it.next().unwrap(),
        up,
    };
    Ok(TrainedModel { net, meta, log })
}
