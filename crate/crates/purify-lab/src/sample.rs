//! Seeded random instances for verifiers, sweeps, and the CLI.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::tensor::{DensityState, LabeledOperator};

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// GUE-style random Hermitian operator with O(1) entries.
pub fn random_hermitian(dims: &[usize], rng: &mut impl Rng) -> LabeledOperator {
    let side: usize = dims.iter().product();
    let g = ginibre(side, side, rng);
    LabeledOperator {
        mat: (&g + g.adjoint()).scale(0.5),
        dims: dims.to_vec(),
    }
}

/// Hilbert-Schmidt-ensemble random state: G G† normalized. Full rank almost surely.
pub fn random_density(dims: &[usize], rng: &mut impl Rng) -> DensityState {
    let side: usize = dims.iter().product();
    let g = ginibre(side, side, rng);
    let p = &g * g.adjoint();
    let tr = p.trace().re;
    DensityState::new(LabeledOperator {
        mat: p.scale(1.0 / tr),
        dims: dims.to_vec(),
    })
    .expect("normalized Gram matrix is a state")
}

/// Random state mixed toward maximally mixed: (1−t)·ρ + t·𝟙/D.
///
/// The floor t/D on eigenvalues keeps log-ratios bounded, which the α→1
/// continuity checks need.
pub fn random_smoothed_density(dims: &[usize], t: f64, rng: &mut impl Rng) -> DensityState {
    let side: usize = dims.iter().product();
    let rho = random_density(dims, rng);
    let mat = rho.mat().scale(1.0 - t) + DMatrix::identity(side, side).scale(t / side as f64);
    DensityState::new(LabeledOperator {
        mat,
        dims: dims.to_vec(),
    })
    .expect("convex mix of states is a state")
}

/// Haar-random pure state.
pub fn random_pure(dims: &[usize], rng: &mut impl Rng) -> DensityState {
    let side: usize = dims.iter().product();
    let v = ginibre(side, 1, rng);
    let v = DVector::from_column_slice(v.as_slice());
    let v = v.scale(1.0 / v.norm());
    DensityState::pure(&v, dims).expect("normalized ket")
}

/// Random probability vector from normalized exponentials (flat Dirichlet).
pub fn random_prob_vec(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len).map(|_| -f64::ln(rng.gen_range(1e-12..1.0))).collect();
    let s: f64 = w.iter().sum();
    for x in &mut w {
        *x /= s;
    }
    w
}
