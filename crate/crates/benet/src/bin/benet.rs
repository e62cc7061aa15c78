//! Command-line front end. Exit codes: 0 success, 2 configuration
//! errors, 3 file/system errors, 4 numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use benet::corpus::{synth_corpus, CORPUS_FS};
use benet::error::{BenetError, Result};
use benet::metrics::{cepstral_distance, fwseg_snr, srmr, write_report_json, FileScores, ScoreReport};
use benet::net::{load_checkpoint, save_checkpoint, train, write_training_log, NetConfig, TrainHyper};
use benet::pipeline::{
    clip_durations, dereverberate, generate_training_data, load_dataset, run_experiment,
    write_conditions_csv, DatasetConfig, DatasetManifest, DereverbOptions, ExperimentConfig,
    ExperimentSpec, TrainConfig,
};
use benet::room::{image_source_rir, rt60_estimate, ScenarioSpec};
use benet::signal::{read_wav, write_wav, TimeSignal};

#[derive(Parser)]
#[command(name = "benet", about = "Pseudo-binaural speech dereverberation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a room impulse response and write it as a WAV file.
    GenRir {
        /// Target reverberation time in seconds (0 = anechoic).
        #[arg(long)]
        rt60: f64,
        /// Output WAV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
    },
    /// Generate a paired DP/REV training image set from synthetic speech.
    GenDataset {
        /// TOML settings file.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the level-cue segmentation network on a generated dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dereverberate a stereo WAV file with a trained model.
    Dereverb {
        /// Stereo (2-channel) input WAV.
        #[arg(long)]
        input: PathBuf,
        /// Trained model checkpoint.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Sum the masked channels instead of averaging them.
        #[arg(long)]
        no_average: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a degraded file against a reference file.
    Evaluate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        degraded: PathBuf,
        /// Optional JSON report path.
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Run an evaluation sweep (position offsets, cross-room conditions).
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenRir {
            rt60,
            out,
            sample_rate,
        } => gen_rir(rt60, &out, sample_rate),
        Command::GenDataset { config, seed } => gen_dataset(&config, seed),
        Command::Train { config, seed } => train_cmd(&config, seed),
        Command::Dereverb {
            input,
            model,
            output,
            no_average,
            seed,
        } => dereverb_cmd(&input, &model, &output, no_average, seed),
        Command::Evaluate {
            reference,
            degraded,
            out_json,
        } => evaluate_cmd(&reference, &degraded, out_json.as_deref()),
        Command::Experiment { config, seed } => experiment_cmd(&config, seed),
    }
}

fn gen_rir(rt60: f64, out: &std::path::Path, sample_rate: u32) -> Result<()> {
    let scenario = ScenarioSpec::for_rt60(rt60.max(0.0));
    let mic = scenario.binaural_mics()[0];
    let rir = image_source_rir(&scenario.room, scenario.source_pos, mic, sample_rate)?;
    write_wav(out, &TimeSignal::new(rir.taps.clone(), sample_rate))?;
    if rt60 > 0.0 {
        let est = rt60_estimate(&rir)?;
        println!("wrote {} ({} taps, measured RT60 {est:.3} s)", out.display(), rir.len());
    } else {
        println!("wrote {} ({} taps, anechoic)", out.display(), rir.len());
    }
    Ok(())
}

fn gen_dataset(config: &std::path::Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = DatasetConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let scenario = cfg.scenario();
    let (clean_s, _) = clip_durations(scenario.room.rt60);
    let clips = synth_corpus(cfg.seed, cfg.count, clean_s + 0.1, CORPUS_FS)?;
    let corpus: Vec<_> = clips
        .into_iter()
        .enumerate()
        .map(|(i, c)| (format!("synth_{i:05}"), c))
        .collect();
    let manifest = generate_training_data(&scenario, &corpus, &cfg.out_dir)?;
    println!(
        "wrote {} images ({} per class) to {}",
        manifest.entries.len(),
        manifest.dp_count,
        cfg.out_dir.display()
    );
    Ok(())
}

fn train_cmd(config: &std::path::Path, seed: Option<u64>) -> Result<()> {
    let cfg = TrainConfig::load(config)?;
    let seed = seed.unwrap_or(cfg.seed);
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    let dataset = load_dataset(&manifest)?;
    let (height, _) = dataset
        .first()
        .ok_or_else(|| BenetError::Config("empty dataset".into()))?
        .0
        .dim();
    let net_config = NetConfig {
        width_enc: cfg.width,
        width_bot: 2 * cfg.width,
        ..NetConfig::with_height(height)
    };
    let net = benet::net::LevelUNet::build(net_config, seed)?;
    let mut hyper = TrainHyper::for_rt60(manifest.scenario.room.rt60);
    if let Some(m) = cfg.max_epochs {
        hyper.max_epochs = m;
    }
    let model = train(net, &dataset, &hyper, seed)?;
    save_checkpoint(&cfg.out_model, &model)?;
    if let Some(log) = &cfg.log_csv {
        write_training_log(log, &model.log)?;
    }
    println!(
        "trained {} epochs, final accuracy {:.4}; model saved to {}",
        model.meta.epochs_run,
        model.meta.final_accuracy,
        cfg.out_model.display()
    );
    Ok(())
}

fn dereverb_cmd(
    input: &std::path::Path,
    model_path: &std::path::Path,
    output: &std::path::Path,
    no_average: bool,
    _seed: u64,
) -> Result<()> {
    let channels = read_wav(input)?;
    if channels.len() != 2 {
        return Err(BenetError::Config(format!(
            "{} has {} channels, need stereo",
            input.display(),
            channels.len()
        )));
    }
    let model = load_checkpoint(model_path)?;
    let options = DereverbOptions {
        average_channels: !no_average,
        ..DereverbOptions::default()
    };
    let out = dereverberate(&channels[0], &channels[1], Some(&model), &options)?;
    write_wav(output, &out)?;
    println!("wrote {} ({} samples)", output.display(), out.len());
    Ok(())
}

fn evaluate_cmd(
    reference: &std::path::Path,
    degraded: &std::path::Path,
    out_json: Option<&std::path::Path>,
) -> Result<()> {
    let reference_sig = benet::signal::read_wav_mono(reference)?;
    let degraded_sig = benet::signal::read_wav_mono(degraded)?;
    let scores = FileScores {
        file: degraded.display().to_string(),
        cep: cepstral_distance(&reference_sig, &degraded_sig)?,
        fwseg_snr: fwseg_snr(&reference_sig, &degraded_sig)?,
        srmr: srmr(&degraded_sig)?,
    };
    println!(
        "cep {:.4} (lower is better)  fwsegSNR {:.2} dB  SRMR {:.2} dB",
        scores.cep, scores.fwseg_snr, scores.srmr
    );
    if let Some(path) = out_json {
        let mut report = ScoreReport::new("evaluate");
        report.files.push(scores);
        write_report_json(path, &report)?;
    }
    Ok(())
}

fn experiment_cmd(config: &std::path::Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let model = load_checkpoint(&cfg.model)?;
    // Held-out clips: seeds offset far away from any training corpus seed.
    let clips = synth_corpus(cfg.seed ^ 0x5EED_7E57, cfg.files, cfg.clip_seconds + 0.1, CORPUS_FS)?;
    let corpus: Vec<_> = clips
        .into_iter()
        .enumerate()
        .map(|(i, c)| (format!("test_{i:03}"), c))
        .collect();
    let mut offsets = cfg.offsets.clone();
    if offsets.is_empty() && cfg.test_rt60s.is_empty() {
        offsets.push([0.0, 0.0, 0.0]);
    }
    let spec = ExperimentSpec {
        model,
        base_scenario: ScenarioSpec::for_rt60(cfg.rt60),
        offsets,
        test_rt60s: cfg.test_rt60s.clone(),
        snr_db: Some(cfg.snr_db),
        beamformers_at_test: cfg.beamformers_at_test,
        corpus,
        seed: cfg.seed,
        schedule: Default::default(),
        clip_seconds: cfg.clip_seconds,
    };
    let reports = run_experiment(&spec)?;
    write_conditions_csv(&cfg.out_csv, &reports)?;
    println!("condition                          variant      cep  fwsegSNR    SRMR");
    for c in &reports {
        for (variant, rep) in [("processed", &c.processed), ("unprocessed", &c.unprocessed)] {
            let (cep, fw, sr) = rep.aggregate();
            println!("{:<34} {:<11} {:>6.3} {:>9.2} {:>7.2}", c.condition, variant, cep, fw, sr);
        }
    }
    println!("report written to {}", cfg.out_csv.display());
    Ok(())
}
