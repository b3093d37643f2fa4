//! Weak quasi-concavity verifiers, Carathéodory reduction, and dimension
//! accounting for the permutation-symmetric operator space.
//!
//! Every slack constant here is the sharpest one a proof actually delivers,
//! not an existential polynomial: mixing N states against a fixed reference
//! costs at most the weight entropy (relative entropy), log₂N (Rényi below
//! order 1 and at ∞), or (α/(α−1))·log₂N (Rényi above order 1), and measured
//! lower edges additionally pay the pinching constant times the log of the
//! spectrum cardinality of σ.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::divergence::{
    eta_alpha, measured_bracket, sandwiched, spectrum_card, umegaki, DEGENERACY_TOL,
};
use crate::error::{Error, Result};
use crate::haar::{symmetry_defect, Permutation};
use crate::tensor::{DensityState, LabeledOperator};

/// Margins at or above this (negative) floor count as passing.
pub const MARGIN_TOL: f64 = -1e-8;
/// Relative singular-value cutoff for numerical rank decisions.
pub const RANK_CUTOFF_REL: f64 = 1e-8;
/// Relative cutoff for detecting affine dependences.
const NULL_CUTOFF_REL: f64 = 1e-10;
/// Largest copy count for which S_n is enumerated.
const MAX_ORBIT_N: usize = 6;

/// Divergence families the quasi-concavity verifier knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivKind {
    Umegaki,
    Sandwiched,
    /// Mixture scored by the certified measured lower edge, members by the
    /// sandwiched upper edge; the conservative form of the measured claim.
    MeasuredLower,
}

/// A finite ensemble of same-shaped states with convex weights.
pub struct Ensemble {
    members: Vec<(f64, DensityState)>,
}

impl Ensemble {
    pub fn new(members: Vec<(f64, DensityState)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::usage("ensemble needs at least one member"));
        }
        let dims = members[0].1.dims().to_vec();
        let mut total = 0.0;
        for (w, state) in &members {
            if !(*w > 0.0 && *w <= 1.0) {
                return Err(Error::usage(format!("weight {w} outside (0, 1]")));
            }
            if state.dims() != dims.as_slice() {
                return Err(Error::usage("ensemble members must share dims"));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::usage(format!("weights sum to {total}, expected 1")));
        }
        Ok(Ensemble { members })
    }

    pub fn uniform(states: Vec<DensityState>) -> Result<Self> {
        let w = 1.0 / states.len().max(1) as f64;
        Ensemble::new(states.into_iter().map(|s| (w, s)).collect())
    }

    pub fn members(&self) -> &[(f64, DensityState)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mixture(&self) -> Result<DensityState> {
        let side = self.members[0].1.dim();
        let mut acc = DMatrix::<C64>::zeros(side, side);
        for (w, state) in &self.members {
            acc += state.mat().scale(*w);
        }
        DensityState::new(LabeledOperator::new(
            acc,
            self.members[0].1.dims().to_vec(),
        )?)
    }

    /// Weight entropy −Σ w log₂ w.
    pub fn weight_entropy(&self) -> f64 {
        -self
            .members
            .iter()
            .map(|(w, _)| if *w > 0.0 { w * w.log2() } else { 0.0 })
            .sum::<f64>()
    }
}

/// Outcome of one weak quasi-concavity check:
/// margin = mixture_value − (min_member_value − slack_bound) must clear
/// MARGIN_TOL.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SlackReport {
    pub mixture_value: f64,
    pub min_member_value: f64,
    pub slack_bound: f64,
    pub margin: f64,
    pub n_members: usize,
}

impl SlackReport {
    pub fn pass(&self) -> bool {
        self.margin >= MARGIN_TOL
    }
}

/// Mixing constant of the sandwiched family: 1 up to order 1 (and at ∞),
/// α/(α−1) above order 1.
pub fn sandwiched_qc_constant(alpha: f64) -> f64 {
    if alpha.is_infinite() || alpha <= 1.0 {
        1.0
    } else {
        alpha / (alpha - 1.0)
    }
}

fn assemble_report(
    mixture_value: f64,
    min_member_value: f64,
    slack_bound: f64,
    n_members: usize,
) -> SlackReport {
    let margin = if mixture_value.is_infinite() {
        f64::INFINITY
    } else if min_member_value.is_infinite() {
        f64::NEG_INFINITY
    } else {
        mixture_value - (min_member_value - slack_bound)
    };
    SlackReport {
        mixture_value,
        min_member_value,
        slack_bound,
        margin,
        n_members,
    }
}

/// Checks mixture_value ≥ min over members − slack for the chosen divergence,
/// with the family-specific provable slack. For MeasuredLower the mixture is
/// scored by the certified lower bracket edge while members are scored by the
/// sandwiched upper edge, so a passing margin is meaningful despite the
/// measured value itself being unknown.
pub fn quasiconc_check(
    kind: DivKind,
    alpha: f64,
    ens: &Ensemble,
    sigma: &DensityState,
) -> Result<SlackReport> {
    let mixture = ens.mixture()?;
    let n = ens.len();
    let log_n = (n as f64).log2();
    match kind {
        DivKind::Umegaki => {
            let mixture_value = umegaki(&mixture, sigma)?.value;
            let mut min_member = f64::INFINITY;
            for (_, state) in ens.members() {
                min_member = min_member.min(umegaki(state, sigma)?.value);
            }
            Ok(assemble_report(
                mixture_value,
                min_member,
                ens.weight_entropy(),
                n,
            ))
        }
        DivKind::Sandwiched => {
            let mixture_value = sandwiched(&mixture, sigma, alpha)?.value;
            let mut min_member = f64::INFINITY;
            for (_, state) in ens.members() {
                min_member = min_member.min(sandwiched(state, sigma, alpha)?.value);
            }
            let slack = if alpha == 1.0 {
                ens.weight_entropy()
            } else {
                sandwiched_qc_constant(alpha) * log_n
            };
            Ok(assemble_report(mixture_value, min_member, slack, n))
        }
        DivKind::MeasuredLower => {
            let mixture_value = measured_bracket(&mixture, sigma, alpha)?.lower;
            let mut min_member = f64::INFINITY;
            for (_, state) in ens.members() {
                min_member = min_member.min(sandwiched(state, sigma, alpha)?.value);
            }
            let s_sigma = spectrum_card(sigma.op(), DEGENERACY_TOL)?;
            let slack = sandwiched_qc_constant(alpha) * log_n
                + eta_alpha(alpha) * (s_sigma as f64).log2();
            Ok(assemble_report(mixture_value, min_member, slack, n))
        }
    }
}

/// Real coordinates of a Hermitian operator: diagonal entries, then √2-scaled
/// real and imaginary parts of the upper triangle, so the Hilbert-Schmidt
/// inner product becomes the Euclidean one.
pub fn herm_coords(x: &LabeledOperator) -> DVector<f64> {
    let side = x.dim();
    let mut v = DVector::zeros(side * side);
    let mut k = 0;
    for i in 0..side {
        v[k] = x.mat[(i, i)].re;
        k += 1;
    }
    let s = std::f64::consts::SQRT_2;
    for r in 0..side {
        for c in (r + 1)..side {
            v[k] = s * x.mat[(r, c)].re;
            k += 1;
            v[k] = s * x.mat[(r, c)].im;
            k += 1;
        }
    }
    v
}

/// Rewrites a convex mixture of points in ℝ^D using at most D+1 of them by
/// repeatedly cancelling an affine dependence; the mixture vector is
/// preserved. Returns surviving original indices with their new weights.
/// Deterministic: the null vector's sign is fixed by its largest entry and
/// the first weight to vanish (lowest index on ties) is removed.
pub fn caratheodory_reduce(
    points: &[DVector<f64>],
    weights: &[f64],
) -> Result<(Vec<usize>, Vec<f64>)> {
    if points.len() != weights.len() {
        return Err(Error::usage("points and weights must have equal length"));
    }
    if points.is_empty() {
        return Err(Error::usage("nothing to reduce"));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::usage("points must share a dimension"));
    }
    if weights.iter().any(|&w| w < -1e-12) {
        return Err(Error::usage("weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::usage(format!("weights sum to {total}, expected 1")));
    }

    let mut idx: Vec<usize> = (0..points.len()).collect();
    let mut w: Vec<f64> = weights.to_vec();
    // drop exact zeros up front
    let keep: Vec<usize> = (0..idx.len()).filter(|&i| w[i] > 0.0).collect();
    idx = keep.iter().map(|&i| idx[i]).collect();
    w = keep.iter().map(|&i| w[i]).collect();

    while idx.len() > dim + 1 {
        let k = idx.len();
        // columns [x_i; 1]; any null vector is an affine dependence
        let mut a = DMatrix::<f64>::zeros(dim + 1, k);
        for (col, &i) in idx.iter().enumerate() {
            for row in 0..dim {
                a[(row, col)] = points[i][row];
            }
            a[(dim, col)] = 1.0;
        }
        // null vector via the k×k Gram spectrum; a thin SVD of the wide
        // matrix would hide every null direction beyond its row rank. The
        // Gram eigenvalue floor is eps-squared so the candidate is judged by
        // its true residual, not by the eigenvalue.
        let gram = a.transpose() * &a;
        let eig = gram.symmetric_eigen();
        let (mut min_l, mut min_j, mut max_l) = (f64::INFINITY, 0usize, 0.0f64);
        for (j, &l) in eig.eigenvalues.iter().enumerate() {
            if l < min_l {
                min_l = l;
                min_j = j;
            }
            max_l = max_l.max(l);
        }
        let s_max = max_l.max(0.0).sqrt();
        let mut gamma: Vec<f64> = (0..k).map(|j| eig.eigenvectors[(j, min_j)]).collect();
        // pin Σγ to exactly zero so the weight sum survives many eliminations
        let mean = gamma.iter().sum::<f64>() / k as f64;
        for g in &mut gamma {
            *g -= mean;
        }
        let gnorm = gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-8 {
            break;
        }
        for g in &mut gamma {
            *g /= gnorm;
        }
        let residual = (&a * DVector::from_column_slice(&gamma)).norm();
        if residual > NULL_CUTOFF_REL * s_max {
            break;
        }
        let lead = (0..k)
            .max_by(|&a, &b| gamma[a].abs().total_cmp(&gamma[b].abs()))
            .expect("nonempty");
        if gamma[lead] < 0.0 {
            for g in &mut gamma {
                *g = -*g;
            }
        }
        // shift w − t·γ until the first weight (lowest index on ties) vanishes
        let mut t = f64::INFINITY;
        let mut drop = usize::MAX;
        for j in 0..k {
            if gamma[j] > 1e-14 {
                let tj = w[j] / gamma[j];
                if tj < t {
                    t = tj;
                    drop = j;
                }
            }
        }
        if drop == usize::MAX {
            break;
        }
        for j in 0..k {
            w[j] -= t * gamma[j];
        }
        w[drop] = 0.0;
        let keep: Vec<usize> = (0..k).filter(|&j| j != drop && w[j] > 1e-15).collect();
        idx = keep.iter().map(|&j| idx[j]).collect();
        w = keep.iter().map(|&j| w[j]).collect();
    }
    let sum: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= sum;
    }
    Ok((idx, w))
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Dimension of the symmetric subspace of (ℂ^d)^{⊗n}, C(n+d−1, n), together
/// with the polynomial bound (n+1)^{(d−1)(d+2)/2} on the dimension that the
/// symmetric-space arguments actually consume.
pub fn sym_space_dim(d: usize, n: usize) -> Result<(usize, u64)> {
    if d < 1 || n < 1 {
        return Err(Error::usage("sym_space_dim needs d, n >= 1"));
    }
    let dim = binomial(n + d - 1, n);
    let exponent = (d - 1) * (d + 2) / 2;
    let bound = (n as u64 + 1).pow(exponent as u32);
    Ok((dim, bound))
}

fn check_orbit_budget(d: usize, n: usize) -> Result<()> {
    if d < 2 || n < 1 {
        return Err(Error::usage("need d >= 2, n >= 1"));
    }
    if n > MAX_ORBIT_N {
        return Err(Error::Budget(format!(
            "S_{n} enumeration exceeds the n! cap ({MAX_ORBIT_N}!)"
        )));
    }
    Ok(())
}

/// Rank of the operator-space symmetrization projector
/// X ↦ (1/n!) Σ_π P_π X P_π†, by counting its fixed basis directions:
/// Tr = (1/n!) Σ_π |Tr P_π|² = (1/n!) Σ_π d^{2·cycles(π)}.
pub fn sym_projector_rank(d: usize, n: usize) -> Result<usize> {
    check_orbit_budget(d, n)?;
    let perms = Permutation::all(n);
    let total: u128 = perms
        .iter()
        .map(|p| (d as u128).pow(2 * p.cycle_count() as u32))
        .sum();
    let fact = perms.len() as u128;
    if total % fact != 0 {
        return Err(Error::domain(
            "fixed-point count is not divisible by n!, which contradicts Burnside counting",
        ));
    }
    Ok((total / fact) as usize)
}

/// The same rank measured directly: the matrix-unit permutation action is
/// averaged into a dense projector and its numerical rank is returned. Small
/// sizes only; this is the independent check on sym_projector_rank.
pub fn sym_projector_rank_dense(d: usize, n: usize) -> Result<usize> {
    check_orbit_budget(d, n)?;
    let side = d.pow(n as u32);
    let pairs = side * side;
    if pairs > 700 {
        return Err(Error::Budget(format!(
            "dense projector on {pairs}² entries is past desk scale"
        )));
    }
    let perms = Permutation::all(n);
    let mut proj = DMatrix::<f64>::zeros(pairs, pairs);
    let frac = 1.0 / perms.len() as f64;
    for p in &perms {
        let map = p.basis_map(d);
        for r in 0..side {
            for c in 0..side {
                proj[(map[r] * side + map[c], r * side + c)] += frac;
            }
        }
    }
    // projector sanity before trusting its rank
    let idem = (&proj * &proj - &proj).amax();
    let symm = (&proj - proj.transpose()).amax();
    if idem > 1e-10 || symm > 1e-10 {
        return Err(Error::domain(format!(
            "averaged operator is not a projector (idempotence {idem:.2e}, symmetry {symm:.2e})"
        )));
    }
    let sv = proj.svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |a, &s| a.max(s));
    Ok(sv.iter().filter(|&&s| s > RANK_CUTOFF_REL * max).count())
}

/// Orthonormal Hermitian basis of the permutation-invariant operators on
/// (ℂ^d)^{⊗n}, built from S_n orbits of matrix-unit index pairs. Basis length
/// equals sym_projector_rank(d, n).
pub fn sym_herm_basis(d: usize, n: usize) -> Result<Vec<LabeledOperator>> {
    check_orbit_budget(d, n)?;
    let side = d.pow(n as u32);
    let maps: Vec<Vec<usize>> = Permutation::all(n)
        .iter()
        .map(|p| p.basis_map(d))
        .collect();
    let mut orbit_of = vec![usize::MAX; side * side];
    let mut orbits: Vec<Vec<(usize, usize)>> = Vec::new();
    for r in 0..side {
        for c in 0..side {
            if orbit_of[r * side + c] != usize::MAX {
                continue;
            }
            let id = orbits.len();
            let mut members = Vec::new();
            for map in &maps {
                let key = map[r] * side + map[c];
                if orbit_of[key] == usize::MAX {
                    orbit_of[key] = id;
                    members.push((map[r], map[c]));
                }
            }
            orbits.push(members);
        }
    }
    let rep = |orbit: &[(usize, usize)]| -> usize {
        orbit.iter().map(|&(r, c)| r * side + c).min().expect("nonempty")
    };
    let dims = vec![d; n];
    let mut basis = Vec::new();
    for orbit in &orbits {
        let (r0, c0) = orbit[0];
        let adj_id = orbit_of[c0 * side + r0];
        let this_rep = rep(orbit);
        let adj_rep = rep(&orbits[adj_id]);
        let size = orbit.len() as f64;
        if adj_rep == this_rep {
            let mut m = DMatrix::<C64>::zeros(side, side);
            for &(r, c) in orbit {
                m[(r, c)] += C64::new(1.0 / size.sqrt(), 0.0);
            }
            basis.push(LabeledOperator::new(m, dims.clone())?);
        } else if this_rep < adj_rep {
            let norm = (2.0 * size).sqrt();
            let mut re = DMatrix::<C64>::zeros(side, side);
            let mut im = DMatrix::<C64>::zeros(side, side);
            for &(r, c) in orbit {
                re[(r, c)] += C64::new(1.0 / norm, 0.0);
                re[(c, r)] += C64::new(1.0 / norm, 0.0);
                im[(r, c)] += C64::new(0.0, 1.0 / norm);
                im[(c, r)] += C64::new(0.0, -1.0 / norm);
            }
            basis.push(LabeledOperator::new(re, dims.clone())?);
            basis.push(LabeledOperator::new(im, dims.clone())?);
        }
    }
    Ok(basis)
}

/// Numerical dimension of span{vec(ρ_i^{⊗n})} over random full-rank states,
/// which must match sym_projector_rank(d, n): iid powers span the whole
/// permutation-invariant Hermitian space.
pub fn iid_span_dim(d: usize, n: usize, samples: usize, rng: &mut impl Rng) -> Result<usize> {
    let expected = sym_projector_rank(d, n)?;
    if samples < 2 * expected {
        return Err(Error::usage(format!(
            "need at least {} samples to trust the rank, got {samples}",
            2 * expected
        )));
    }
    let side = d.pow(n as u32);
    let mut rows = DMatrix::<f64>::zeros(samples, side * side);
    for s in 0..samples {
        let rho = crate::sample::random_density(&[d], rng);
        let power = crate::tensor::tensor_power(rho.op(), n)?;
        let coords = herm_coords(&power);
        for j in 0..side * side {
            rows[(s, j)] = coords[j];
        }
    }
    let sv = rows.svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |a, &s| a.max(s));
    Ok(sv.iter().filter(|&&s| s > RANK_CUTOFF_REL * max).count())
}

/// Carathéodory-then-quasi-concavity for de Finetti-type ensembles: members
/// (meant to be iid powers, at minimum permutation symmetric) are reduced in
/// the invariant-operator coordinate space, preserving the mixture, and the
/// reduced ensemble is handed to quasiconc_check against the symmetric
/// reference.
pub fn definetti_check(
    ens: &Ensemble,
    sigma_sym: &DensityState,
    kind: DivKind,
    alpha: f64,
) -> Result<SlackReport> {
    let dims = ens.members()[0].1.dims().to_vec();
    let n = dims.len();
    let d = dims[0];
    if dims.iter().any(|&di| di != d) {
        return Err(Error::usage("definetti_check needs uniform subsystem dims"));
    }
    if sigma_sym.dims() != dims.as_slice() {
        return Err(Error::usage("reference must share the ensemble's dims"));
    }
    let sdef = symmetry_defect(sigma_sym.op())?;
    if sdef > 1e-8 {
        return Err(Error::usage(format!(
            "reference is not permutation symmetric: defect {sdef:.3e}"
        )));
    }
    for (_, state) in ens.members() {
        let mdef = symmetry_defect(state.op())?;
        if mdef > 1e-8 {
            return Err(Error::usage(format!(
                "ensemble member is not permutation symmetric: defect {mdef:.3e}"
            )));
        }
    }
    let basis = sym_herm_basis(d, n)?;
    let embed = |state: &DensityState| -> DVector<f64> {
        DVector::from_iterator(
            basis.len(),
            basis
                .iter()
                .map(|b| (b.mat.adjoint() * state.mat()).trace().re),
        )
    };
    let points: Vec<DVector<f64>> = ens.members().iter().map(|(_, s)| embed(s)).collect();
    let weights: Vec<f64> = ens.members().iter().map(|(w, _)| *w).collect();
    let (survivors, new_weights) = caratheodory_reduce(&points, &weights)?;

    let reduced = Ensemble::new(
        survivors
            .iter()
            .zip(&new_weights)
            .map(|(&i, &w)| (w, ens.members()[i].1.clone()))
            .collect(),
    )?;
    let drift = reduced
        .mixture()?
        .op()
        .with_same_dims(reduced.mixture()?.mat() - ens.mixture()?.mat())
        .norms()
        .hs;
    if drift > 1e-9 {
        return Err(Error::domain(format!(
            "reduction moved the mixture by {drift:.3e}"
        )));
    }
    quasiconc_check(kind, alpha, &reduced, sigma_sym)
}
