//! Rician user-RIS channels, 1-bit frequency-coupled RIS responses, cascaded
//! gains and link SINR.

mod fading;
mod link;
mod ris;

pub use fading::{
    best_phase_exhaustive, complex_normal, draw_channels, pathloss_amplitude, BandPlan,
    ChannelRealization, UserTopology,
};
pub use link::{dbm_to_watts, noise_power, received_signal, sinr};
pub use ris::{
    array_response, phase_response, reflection_matrix, ElementState, PhaseResponseParams,
    RisConfig, RisGeometry, SPEED_OF_LIGHT,
};
