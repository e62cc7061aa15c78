use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, BenetError>;

#[derive(Debug, thiserror::Error)]
pub enum BenetError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("i/o error: {0}")]
    IoGeneric(#[from] std::io::Error),
    #[error("unsupported wav encoding in {path}: {detail}")]
    UnsupportedWav { path: PathBuf, detail: String },
    #[error("empty audio payload in {0}")]
    EmptyAudio(PathBuf),
    #[error("sample-rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl BenetError {
    /// Process exit code classes used by the CLI: 2 configuration,
    /// 3 file/system i/o, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenetError::Config(_) | BenetError::Geometry(_) => 2,
            BenetError::FileNotFound(_)
            | BenetError::Io { .. }
            | BenetError::IoGeneric(_)
            | BenetError::UnsupportedWav { .. }
            | BenetError::EmptyAudio(_) => 3,
            _ => 4,
        }
    }
}
