//! Pseudo-binaural single-source dereverberation toolkit.
//!
//! The processing chain pairs an ILD segmentation network with maximum
//! likelihood clustering of IPD residuals. Training data is manufactured
//! inside simulated shoebox rooms: two 8-element MVDR beamformers extract
//! the reverberation class, an anechoic render of the same source provides
//! the direct-path class. At prediction time only the two-microphone
//! binaural rig remains; the network mask and the MLE mask are multiplied
//! and applied to both channels before resynthesis.

pub mod beamformer;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod mle;
pub mod net;
pub mod par;
pub mod pipeline;
pub mod room;
pub mod signal;
pub mod spatial;
pub mod stft;

pub use error::{BenetError, Result};
pub use signal::{Rir, TimeSignal};
pub use stft::{ComplexSpectrogram, StftConfig};
