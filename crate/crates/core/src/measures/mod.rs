//! Probability measures on boxes: grid densities, sample clouds, and the
//! total-variation and dual-Lipschitz metrics between them.

mod dual_lipschitz;
mod empirical;
mod grid;
mod tv;

pub use dual_lipschitz::{
    dual_lipschitz_atoms, dual_lipschitz_distance, dual_lipschitz_empirical, DualLipschitz, DualLipschitzMethod,
    MAX_LP_PAIRS,
};
pub use empirical::{bin_indices, counts_from_indices, histogram, histogram_from_counts, EmpiricalMeasure};
pub use grid::{Bounds, Grid, GridDensity, NORMALIZATION_TOLERANCE};
pub use tv::{
    quantile_sorted, tv_counts, tv_distance, tv_empirical, tv_from_masses, tv_to_reference, two_sample_tv, Band,
    BootstrapConfig, TvEstimate, DEFAULT_LEVEL, DEFAULT_RESAMPLES,
};
