//! Random dynamical systems `u_k = S(u_{k−1}, η_k)`, the kicked-ODE family
//! `S(x, η) = φ(x) + η`, and probe-based checks of dissipativity and
//! controllability.

pub mod catalog;
mod checks;
mod ode;
mod system;

pub use checks::{
    check_controllability, check_dissipativity, ControllabilityReport, DissipativityCertificate, DissipativityConfig,
    DEFAULT_MARGIN_THRESHOLD,
};
pub use ode::{
    fit_dissipation, make_kicked_system, make_kicked_system_named, DissipationFit, FieldJacobian, KickedMap, KickedOde,
    VectorField, DEFAULT_FIT_RADII, DEFAULT_RK4_STEPS,
};
pub use system::{
    AffineMap, InvariantSet, RdsMap, RdsSystem, SystemValidation, ValidationConfig, INVARIANCE_TOLERANCE,
};

pub(crate) use system::sample_box;
