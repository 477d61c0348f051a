//! Beam-steering codebook, geometric OFDM channel, beam selection and
//! geometric LOS/NLOS determination.

mod channel;
mod codebook;
pub mod dump;
mod paths;

pub use channel::{
    array_response, channel_vector, pulse, received_power, sample_received_signal,
    select_beam, select_beam_from_paths, ChannelPath, ChannelVector, OfdmParams,
};
pub use codebook::{steering_vector, Codebook};
pub use paths::{los_status, synthesize_paths, LinkStatus};

pub use num_complex::Complex64;
