//! Photon arrivals, waveform synthesis and dead-time counting.

pub mod config;
pub mod deadtime;
pub mod waveform;

pub use config::{ChannelConfig, Sampling};
pub use deadtime::{
    dead_time_mean, dead_time_pmf, dead_time_pmf_all, dead_time_variance, max_count,
};
pub use waveform::{
    count_detected_pulses, count_rising_edges, gen_arrivals, oversampled_values, symbol_integral,
    symbol_integral_nonlinear, synth_waveform, GainSource, SymbolStream, Waveform,
};
