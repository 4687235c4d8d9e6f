//! Markovian reduction: the extended chain `U_k = (u_k, ξ_k)` driven by
//! Markov noise, or by stationary noise seen through a truncated past.

mod buffer;
mod conditional;
mod extended;
mod law;
mod model;
mod simulate;
mod surjectivity;

pub use buffer::{past_metric, truncation_bound, PastBuffer, DEFAULT_IOTA, DEFAULT_MEMORY};
pub use conditional::{
    check_recurrence_to_zero, conditional_m_step, RecurrenceToZero, RecurrenceToZeroConfig, MAX_CONDITIONAL_STEPS,
};
pub use extended::{extended_kernel, ExtendedKernel};
pub use law::{law_equality_test, LawEqualityConfig, LawEqualityReport, LawRow, MAX_LAW_HORIZON};
pub use model::{
    Ar2TruncGauss, ConditionalKernel, MemoryOne, NoiseModel, NoiseState, StationaryNoiseModel, DEFAULT_BURN_IN,
    DEFAULT_SPACING,
};
pub use simulate::{extended_map, simulate_extended, ExtendedState};
pub use surjectivity::{check_vec_surjectivity, vec_derivative, VecSurjectivityReport};

pub(crate) use simulate::reduced_step;
