//! Markov noise with Lipschitz transition densities: sampling, grid
//! propagation of `Q_k(y; ·)`, and the minorisation and strong-recurrence
//! checks.

pub mod catalog;
mod checks;
mod kernel;
mod propagate;

pub use catalog::{kernel, KernelSpec, KERNEL_NAMES};
pub use checks::{
    check_minorization, check_strong_recurrence, MinorizationCertificate, MinorizationConfig, RecurrenceCertificate,
};
pub use kernel::{
    cell_masses, default_cells, grid_quantile, rejection_sample, sampler_grid, worst_mass_defect, MarkovKernel,
    DEFAULT_CELLS_1D, DEFAULT_CELLS_2D, DEGENERATE_MASS,
};
pub use propagate::{
    ball_cell_weights, k_step_kernel, quadrature_bound, KStepDensity, TransitionOperator, MAX_QUADRATURE_BOUND,
};

pub(crate) use checks::{ball_probes, lipschitz_slack};
