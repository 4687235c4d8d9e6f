//! Convergence of laws: stationary estimates, TV decay curves and their
//! exponential fits, and the recurrence and coupling certificates.

mod coupling;
mod decay;
mod recurrence;
mod stationary;

pub use coupling::{
    certify_coupling, minorizing_measure, verify_domination, CouplingCertificate, CouplingConfig, DominationConfig,
    DominationReport, MinorizingConfig, MinorizingMeasure, MinorizingSupport,
};
pub use decay::{decay_curve, fit_rate, noise_floor, DecayConfig, DecayCurve, RateFit, FLOOR_FACTOR, MIN_FIT_POINTS};
pub use recurrence::{certify_recurrence, in_extended_ball, RecurrenceConfig, RecurrenceReport};
pub use stationary::{estimate_stationary, pilot_decorrelation, PilotFit, StationaryConfig, StationaryEstimate, MAX_SEGMENT};
