//! Score report containers and CSV/JSON writers shared by the CLI and
//! the experiment harness.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Scores for one evaluated file. `cep` is lower-is-better; the two dB
/// scores are higher-is-better.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileScores {
    pub file: String,
    pub cep: f64,
    pub fwseg_snr: f64,
    pub srmr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReport {
    pub label: String,
    pub files: Vec<FileScores>,
}

impl ScoreReport {
    pub fn new(label: impl Into<String>) -> ScoreReport {
        ScoreReport {
            label: label.into(),
            files: Vec::new(),
        }
    }

    /// Arithmetic mean over files: (cep, fwseg_snr, srmr).
    pub fn aggregate(&self) -> (f64, f64, f64) {
        let n = self.files.len().max(1) as f64;
        let sum = self.files.iter().fold((0.0, 0.0, 0.0), |acc, f| {
            (acc.0 + f.cep, acc.1 + f.fwseg_snr, acc.2 + f.srmr)
        });
        (sum.0 / n, sum.1 / n, sum.2 / n)
    }
}

/// Per-file rows plus a final `mean` row.
pub fn write_report_csv(path: &Path, report: &ScoreReport) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "label,file,cep,fwseg_snr_db,srmr_db")?;
    for s in &report.files {
        writeln!(
            f,
            "{},{},{:.4},{:.4},{:.4}",
            report.label, s.file, s.cep, s.fwseg_snr, s.srmr
        )?;
    }
    let (cep, fw, sr) = report.aggregate();
    writeln!(f, "{},mean,{:.4},{:.4},{:.4}", report.label, cep, fw, sr)?;
    Ok(())
}

pub fn write_report_json(path: &Path, report: &ScoreReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| crate::error::BenetError::Config(format!("serialize report: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}
