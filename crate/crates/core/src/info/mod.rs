//! Information rates of on-off keying over the PMT channel and the duty
//! cycles that maximize them.

pub mod duty;
pub mod multi;
pub mod single;

pub use duty::{
    optimal_duty_multi, optimal_duty_single, suboptimal_duty_multi, suboptimal_duty_single,
};
pub use multi::{mutual_info_multi, MultiSampleChannel};
pub use single::{mutual_info_single, MutualInfoBreakdown, SingleSampleChannel};
