use crate::dynamics::{sample_box, RdsSystem};
use crate::error::{Error, Result};
use crate::linalg::{surjectivity_margin, Matrix};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct VecSurjectivityReport {
    pub min_singular: f64,
    pub probes: usize,
    /// Probe `(v, η_1, …, η_m)` attaining the minimum.
    pub worst_probe: (Vec<f64>, Vec<Vec<f64>>),
}

/// Derivative of `(η_1, …, η_m) ↦ [S_1(v; η_1), …, S_m(v; η_1, …, η_m)]`,
/// a block lower-triangular `(m·dim H) × (m·dim E)` matrix assembled by
/// `B_{i,j} = D_u S(u_{i−1}, η_i) B_{i−1,j}` for `j < i` and
/// `B_{i,i} = D_η S(u_{i−1}, η_i)`.
pub fn vec_derivative(sys: &RdsSystem, v: &[f64], etas: &[Vec<f64>]) -> Matrix {
    let (h, e, m) = (sys.dim_state(), sys.dim_noise(), etas.len());
    let map = sys.map();
    let mut out = Matrix::zeros(m * h, m * e);
    let mut u = v.to_vec();
    for (i, eta) in etas.iter().enumerate() {
        let du = map.d_state(&u, eta);
        for j in 0..i {
            let prev = out.view((h * (i - 1), e * j), (h, e)).clone_owned();
            out.view_mut((h * i, e * j), (h, e)).copy_from(&(&du * prev));
        }
        out.view_mut((h * i, e * i), (h, e)).copy_from(&map.d_noise(&u, eta));
        u = map.apply(&u, eta);
    }
    out
}

/// Smallest singular value of the derivative of the `m`-step path map over
/// random probes `v ∈ X`, `η_i ∈ 𝒦`.
pub fn check_vec_surjectivity(sys: &RdsSystem, m: usize, probes: usize, seed: u64) -> Result<VecSurjectivityReport> {
    if m == 0 || probes == 0 {
        return Err(Error::invalid("need m >= 1 and at least one probe"));
    }
    let mut rng = stream(seed, Purpose::Probe, 4);
    let mut best: Option<(f64, Vec<f64>, Vec<Vec<f64>>)> = None;
    for _ in 0..probes {
        let v = sys.invariant_set().sample(&mut rng);
        let etas: Vec<Vec<f64>> = (0..m).map(|_| sample_box(sys.noise_support(), &mut rng)).collect();
        let sigma = surjectivity_margin(&vec_derivative(sys, &v, &etas));
        if best.as_ref().is_none_or(|b| sigma < b.0) {
            best = Some((sigma, v, etas));
        }
    }
    let (min_singular, v, etas) = best.expect("at least one probe");
    Ok(VecSurjectivityReport { min_singular, probes, worst_probe: (v, etas) })
}
