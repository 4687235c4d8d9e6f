//! Built-in systems, addressed by name from configuration files.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measures::Bounds;

use super::ode::{make_kicked_system_named, KickedOde};
use super::system::{InvariantSet, RdsMap, RdsSystem};

pub const SYSTEM_NAMES: [&str; 4] = ["kicked_linear_1d", "kicked_cubic_1d", "pure_noise", "kicked_linear_2d"];

/// `ẋ = −x` on `[−10⁴, 10⁴]`.
pub fn linear_1d_ode() -> KickedOde {
    KickedOde::new(
        1,
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = -x[0]),
        Arc::new(|_: &[f64]| Matrix::from_element(1, 1, -1.0)),
        1.0,
        0.0,
        Bounds::symmetric(1, 1e4).expect("valid box"),
    )
    .expect("valid ODE")
}

/// `ẋ = −x³` on `[−4, 4]`, where RK4 with 100 substeps is stable.
/// `−x⁴ ≤ −x² + ¼`.
pub fn cubic_1d_ode() -> KickedOde {
    KickedOde::new(
        1,
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = -x[0] * x[0] * x[0]),
        Arc::new(|x: &[f64]| Matrix::from_element(1, 1, -3.0 * x[0] * x[0])),
        1.0,
        0.25,
        Bounds::symmetric(1, 4.0).expect("valid box"),
    )
    .expect("valid ODE")
}

/// Damped rotation `ẋ = A x`, `A = [[−1, 1], [−1, −1]]`.
pub fn linear_2d_ode() -> KickedOde {
    KickedOde::new(
        2,
        Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = -x[0] + x[1];
            out[1] = -x[0] - x[1];
        }),
        Arc::new(|_: &[f64]| Matrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, -1.0])),
        1.0,
        0.0,
        Bounds::symmetric(2, 1e3).expect("valid box"),
    )
    .expect("valid ODE")
}

/// `S(u, η) = η`.
#[derive(Debug, Clone, Copy)]
pub struct PureNoise {
    pub dim: usize,
}

impl RdsMap for PureNoise {
    fn dim_state(&self) -> usize {
        self.dim
    }
    fn dim_noise(&self) -> usize {
        self.dim
    }
    fn apply(&self, _u: &[f64], eta: &[f64]) -> Vec<f64> {
        eta.to_vec()
    }
    fn d_state(&self, _u: &[f64], _eta: &[f64]) -> Matrix {
        Matrix::zeros(self.dim, self.dim)
    }
    fn d_noise(&self, _u: &[f64], _eta: &[f64]) -> Matrix {
        Matrix::identity(self.dim, self.dim)
    }
}

pub fn pure_noise(noise_support: Bounds) -> Result<RdsSystem> {
    let dim = noise_support.dim();
    RdsSystem::new("pure_noise", Arc::new(PureNoise { dim }), InvariantSet::Box(noise_support.clone()), noise_support, true)
}

/// Catalog system driven by noise supported in `noise_support`.
pub fn system(name: &str, noise_support: &Bounds) -> Result<RdsSystem> {
    let kicked = |ode: KickedOde| -> Result<RdsSystem> {
        if noise_support.dim() != ode.dim() {
            return Err(Error::invalid(format!("`{name}` needs {}-dimensional noise", ode.dim())));
        }
        Ok(make_kicked_system_named(name, ode, noise_support.clone())?.0)
    };
    match name {
        "kicked_linear_1d" => kicked(linear_1d_ode()),
        "kicked_cubic_1d" => kicked(cubic_1d_ode()),
        "kicked_linear_2d" => kicked(linear_2d_ode()),
        "pure_noise" => pure_noise(noise_support.clone()),
        other => Err(Error::UnknownCatalogEntry(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{check_controllability, check_dissipativity, DissipativityConfig, ValidationConfig};

    fn unit(dim: usize) -> Bounds {
        Bounds::symmetric(dim, 1.0).unwrap()
    }

    #[test]
    fn every_catalog_system_validates() {
        for name in SYSTEM_NAMES {
            let dim = if name.ends_with("2d") { 2 } else { 1 };
            let sys = system(name, &unit(dim)).unwrap();
            let v = sys.validate(&ValidationConfig { invariance_probes: 2000, derivative_probes: 10, ..Default::default() });
            assert!(v.passed(), "{name}: {v:?}");
        }
        assert!(matches!(system("nope", &unit(1)), Err(Error::UnknownCatalogEntry(_))));
        assert!(system("kicked_linear_2d", &unit(1)).is_err());
    }

    #[test]
    fn pure_noise_dissipates_in_one_step() {
        let sys = pure_noise(unit(1)).unwrap();
        assert_eq!(check_dissipativity(&sys, 0.1, &DissipativityConfig::default()).unwrap().n_eps, 1);
        let c = check_controllability(&sys, 1e-8);
        assert_eq!(c.sigma_min_noise, 1.0);
        assert!(!c.passed());
    }

    #[test]
    fn kicked_linear_controllability() {
        let sys = system("kicked_linear_1d", &unit(1)).unwrap();
        let c = check_controllability(&sys, 1e-8);
        assert!((c.sigma_min_noise - 1.0).abs() < 1e-12);
        assert!((c.sigma_min_state - (-1.0f64).exp()).abs() < 1e-6);
        assert!(c.passed());
    }

    #[test]
    fn spiral_is_dissipative() {
        let sys = system("kicked_linear_2d", &unit(2)).unwrap();
        let cert = check_dissipativity(&sys, 0.01, &DissipativityConfig::default()).unwrap();
        assert!(cert.n_eps > 0 && cert.worst_norm <= 0.01);
    }
}
