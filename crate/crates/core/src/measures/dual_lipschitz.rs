//! Dual-Lipschitz distance
//!
//! ```text
//! ‖μ₁ − μ₂‖*_L = sup { ∫f dμ₁ − ∫f dμ₂ : sup|f| + Lip_{≤1}(f) ≤ 1 }
//! ```
//!
//! where `Lip_{≤1}` is the Lipschitz quotient over pairs at distance at most
//! one. Measures here live in boxes, which are convex: any segment splits
//! into pieces of length ≤ 1, so the local quotient bounds the global one and
//! the cap is inactive. For finitely supported measures the supremum is then
//! the linear program
//!
//! ```text
//! max Σ wᵢ fᵢ   s.t.  |fᵢ| ≤ a,  |fᵢ − fⱼ| ≤ L·|xᵢ − xⱼ|,  a + L ≤ 1
//! ```
//!
//! with `w = μ₁ − μ₂` on the atoms; McShane extension followed by clipping to
//! `[−a, a]` turns any feasible point into an admissible function on the box.
//! On a line only neighbouring atoms need a Lipschitz row. Grid densities
//! are reduced to atoms at the cell centers, which moves each measure by at
//! most half a cell diameter; that is the reported discretization bound.
//!
//! Problems with more than [`MAX_LP_PAIRS`] Lipschitz rows fall back to a
//! lower bound from an explicit family of admissible tent and ramp functions.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

use super::empirical::EmpiricalMeasure;
use super::grid::GridDensity;

pub const MAX_LP_PAIRS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualLipschitzMethod {
    ExactLp,
    SampledLowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualLipschitz {
    /// Certified lower bound on the distance between the represented measures.
    pub value: f64,
    /// Bound on `|value − distance between the underlying continuous measures|`.
    pub discretization_bound: f64,
    pub method: DualLipschitzMethod,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sorts atoms lexicographically and sums the weights of coincident points.
fn merge_atoms(mut atoms: Vec<(Vec<f64>, f64)>) -> Vec<(Vec<f64>, f64)> {
    atoms.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<(Vec<f64>, f64)> = Vec::with_capacity(atoms.len());
    for (p, w) in atoms {
        match out.last_mut() {
            Some(last) if last.0 == p => last.1 += w,
            _ => out.push((p, w)),
        }
    }
    out
}

/// Distance of the signed atomic measure `Σ wᵢ δ_{xᵢ}` (Σ wᵢ = 0).
fn signed_distance(atoms: Vec<(Vec<f64>, f64)>) -> Result<(f64, DualLipschitzMethod)> {
    let atoms = merge_atoms(atoms);
    let scale: f64 = atoms.iter().map(|(_, w)| w.abs()).sum();
    if scale <= 1e-15 {
        return Ok((0.0, DualLipschitzMethod::ExactLp));
    }
    let n = atoms.len();
    let dim = atoms[0].0.len();
    let pairs: Vec<(usize, usize)> = if dim == 1 {
        // lexicographic sort is coordinate order on a line
        (1..n).map(|i| (i - 1, i)).collect()
    } else {
        let count = n * (n - 1) / 2;
        if count > MAX_LP_PAIRS {
            return Ok((sampled_lower_bound(&atoms), DualLipschitzMethod::SampledLowerBound));
        }
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    };

    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let f: Vec<_> = atoms.iter().map(|(_, w)| lp.add_var(*w, (-1.0, 1.0))).collect();
    let a = lp.add_var(0.0, (0.0, 1.0));
    let l = lp.add_var(0.0, (0.0, 1.0));
    lp.add_constraint([(a, 1.0), (l, 1.0)], ComparisonOp::Le, 1.0);
    for &fi in &f {
        lp.add_constraint([(fi, 1.0), (a, -1.0)], ComparisonOp::Le, 0.0);
        lp.add_constraint([(fi, -1.0), (a, -1.0)], ComparisonOp::Le, 0.0);
    }
    for (i, j) in pairs {
        let d = euclid(&atoms[i].0, &atoms[j].0);
        lp.add_constraint([(f[i], 1.0), (f[j], -1.0), (l, -d)], ComparisonOp::Le, 0.0);
        lp.add_constraint([(f[j], 1.0), (f[i], -1.0), (l, -d)], ComparisonOp::Le, 0.0);
    }
    let solution = lp.solve().map_err(|e| Error::SolverFailure(e.to_string()))?;
    Ok((solution.objective().max(0.0), DualLipschitzMethod::ExactLp))
}

/// Best value over admissible tents `clamp(t − L|x − c|, −t, t)` and ramps
/// `clamp(L⟨x − c, e⟩, −t, t)` with `t = 1 − L`.
fn sampled_lower_bound(atoms: &[(Vec<f64>, f64)]) -> f64 {
    let dim = atoms[0].0.len();
    let stride = (atoms.len() / 64).max(1);
    let slopes: Vec<f64> = (1..20).map(|k| k as f64 * 0.05).collect();
    let mut best: f64 = 0.0;
    for c in atoms.iter().step_by(stride).map(|(p, _)| p) {
        for &slope in &slopes {
            let t = 1.0 - slope;
            let tent: f64 = atoms
                .iter()
                .map(|(x, w)| w * (t - slope * euclid(x, c)).clamp(-t, t))
                .sum();
            best = best.max(tent.abs());
            for axis in 0..dim {
                let ramp: f64 = atoms
                    .iter()
                    .map(|(x, w)| w * (slope * (x[axis] - c[axis])).clamp(-t, t))
                    .sum();
                best = best.max(ramp.abs());
            }
        }
    }
    best
}

/// Distance between two densities on the same grid, via atoms at cell centers.
pub fn dual_lipschitz_distance(a: &GridDensity, b: &GridDensity) -> Result<DualLipschitz> {
    a.grid().check_same(b.grid())?;
    let p = a.probabilities()?;
    let q = b.probabilities()?;
    let grid = a.grid();
    let atoms: Vec<(Vec<f64>, f64)> = p
        .iter()
        .zip(&q)
        .enumerate()
        .filter(|(_, (x, y))| **x > 0.0 || **y > 0.0)
        .map(|(i, (x, y))| (grid.center(i), x - y))
        .collect();
    let (value, method) = signed_distance(atoms)?;
    Ok(DualLipschitz { value, discretization_bound: grid.cell_diameter(), method })
}

/// Distance between two weighted atom sets (no discretization).
pub fn dual_lipschitz_atoms(
    a_points: &[Vec<f64>],
    a_weights: &[f64],
    b_points: &[Vec<f64>],
    b_weights: &[f64],
) -> Result<DualLipschitz> {
    let sa: f64 = a_weights.iter().sum();
    let sb: f64 = b_weights.iter().sum();
    if !(sa > 0.0 && sb > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    if a_points.len() != a_weights.len() || b_points.len() != b_weights.len() {
        return Err(Error::invalid("points and weights differ in length"));
    }
    let dim = a_points.first().map_or(0, Vec::len);
    if a_points.iter().chain(b_points).any(|p| p.len() != dim) {
        return Err(Error::MismatchedSupport("atoms have different dimensions".into()));
    }
    let atoms = a_points
        .iter()
        .zip(a_weights)
        .map(|(p, w)| (p.clone(), w / sa))
        .chain(b_points.iter().zip(b_weights).map(|(p, w)| (p.clone(), -w / sb)))
        .collect();
    let (value, method) = signed_distance(atoms)?;
    Ok(DualLipschitz { value, discretization_bound: 0.0, method })
}

pub fn dual_lipschitz_empirical(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<DualLipschitz> {
    if a.bounds() != b.bounds() {
        return Err(Error::MismatchedSupport("empirical measures declare different boxes".into()));
    }
    dual_lipschitz_atoms(a.points(), a.weights(), b.points(), b.weights())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::grid::{Bounds, Grid};

    /// Oracle for two unit point masses at distance d: by symmetry the best
    /// function is ±h on the atoms, linear in between, so h + 2h/d ≤ 1.
    fn two_point_oracle(d: f64) -> f64 {
        let mut best: f64 = 0.0;
        for k in 0..=200_000 {
            let h = k as f64 / 200_000.0;
            if h + 2.0 * h / d <= 1.0 + 1e-15 {
                best = best.max(2.0 * h);
            }
        }
        best
    }

    #[test]
    fn point_masses_at_unit_distance() {
        let oracle = two_point_oracle(1.0);
        assert!((oracle - 2.0 / 3.0).abs() < 1e-4);
        let r = dual_lipschitz_atoms(&[vec![0.0]], &[1.0], &[vec![1.0]], &[1.0]).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-9, "{r:?}");
        assert_eq!(r.method, DualLipschitzMethod::ExactLp);
    }

    #[test]
    fn point_masses_at_distance_one_tenth() {
        let oracle = two_point_oracle(0.1);
        assert!((oracle - 0.2 / 2.1).abs() < 1e-4);
        let r = dual_lipschitz_atoms(&[vec![0.0]], &[1.0], &[vec![0.1]], &[1.0]).unwrap();
        assert!((r.value - 0.2 / 2.1).abs() < 1e-9);
    }

    #[test]
    fn grid_point_masses() {
        // 21 cells of width 0.05 centered on 0, 0.05, …, 1
        let g = Grid::uniform(Bounds::cube(1, -0.025, 1.025).unwrap(), 21).unwrap();
        let vol = g.cell_volume();
        let mut a = vec![0.0; 21];
        let mut b = vec![0.0; 21];
        a[0] = 1.0 / vol;
        b[20] = 1.0 / vol;
        let da = GridDensity::new(g.clone(), a).unwrap();
        let db = GridDensity::new(g.clone(), b).unwrap();
        let r = dual_lipschitz_distance(&da, &db).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-3);
        assert!((r.discretization_bound - 0.05).abs() < 1e-12);
        assert_eq!(dual_lipschitz_distance(&da, &da).unwrap().value, 0.0);
    }

    #[test]
    fn far_apart_atoms() {
        // value 2d/(d + 2) for two unit atoms at distance d
        let r = dual_lipschitz_atoms(&[vec![0.0]], &[1.0], &[vec![10.0]], &[1.0]).unwrap();
        assert!((r.value - two_point_oracle(10.0)).abs() < 1e-4);
        assert!((r.value - 20.0 / 12.0).abs() < 1e-9);
    }

    #[test]
    fn planar_atoms_use_euclidean_distance() {
        let r = dual_lipschitz_atoms(&[vec![0.0, 0.0]], &[1.0], &[vec![0.6, 0.8]], &[1.0]).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn sampled_bound_is_below_lp() {
        let atoms = vec![(vec![0.0, 0.0], 0.5), (vec![0.3, 0.1], -0.25), (vec![1.0, 0.5], -0.25)];
        let (exact, _) = signed_distance(atoms.clone()).unwrap();
        let lower = sampled_lower_bound(&merge_atoms(atoms));
        assert!(lower <= exact + 1e-12);
        assert!(lower > 0.0);
    }
}
