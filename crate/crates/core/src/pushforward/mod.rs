//! Densities of image measures under parameter-dependent maps, and the
//! extension of local diffeomorphisms to global ones.

mod density;
mod diffeo;
mod maps;

pub use density::{
    estimate_image_lipschitz, image_map_apply, pushforward_density, ImageLipschitz, Pushforward, PushforwardConfig,
};
pub use diffeo::{cutoff, extend_local_diffeo, injectivity_quotient, DiffeoConfig, GlobalDiffeo, LocalMap};
pub use maps::{
    validate_regular_map, KernelDensity, LinearMap, ParamDensityKernel, RegularMap, SystemStep, UniformDensity,
};
