//! The random purification channel and its defining identities.
//!
//! The channel at copy count n is X ↦ √R_n (X ⊗ 𝟙_{B^n}) √R_n. On symmetric
//! inputs it agrees with the exactly twirled standard purification, and the two
//! sides are computed through genuinely different code paths here, so their
//! trace-norm gap is a real check rather than a tautology.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::haar::{
    build_rn_with_limit, symmetry_defect, twirl_on_subsystems, TwirlBasis, DEFAULT_MAX_DIM,
};
use crate::tensor::{tensor_power, tensor_product, DensityState, LabeledOperator};

/// Largest tolerated symmetry defect for inputs that claim permutation
/// symmetry; symmetrized numerical states sit well below this.
pub const SYMMETRY_GATE: f64 = 1e-8;

/// X ↦ √R_n (X ⊗ 𝟙_{B^n}) √R_n with interleaved (A₁B₁…AₙBₙ) output.
pub struct PurificationChannel {
    pub d: usize,
    pub n: usize,
    rn: LabeledOperator,
    sqrt_rn: LabeledOperator,
    cptp: OnceLock<CptpReport>,
}

/// Complete-positivity and trace-preservation diagnostics of a channel,
/// measured on its Choi operator.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CptpReport {
    /// Smallest eigenvalue of the Choi operator; ≥ −tol certifies CP.
    pub cp_min_eig: f64,
    /// ‖Tr_out(Choi) − 𝟙_in‖_∞; ≤ tol certifies TP.
    pub tp_residual: f64,
}

/// One verification run: both defining gaps plus the CP/TP diagnostics.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct VerifyReport {
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    /// ‖Λ(ρ^{⊗n}) − twirled iid purification‖₁ for a seeded random ρ.
    pub gap_iid: f64,
    /// Same gap for a seeded random permutation-symmetric input.
    pub gap_symmetric: f64,
    pub cp_min_eig: f64,
    pub tp_residual: f64,
    pub pass: bool,
}

impl PurificationChannel {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        Self::with_limit(d, n, DEFAULT_MAX_DIM)
    }

    pub fn with_limit(d: usize, n: usize, max_dim: usize) -> Result<Self> {
        let rn = build_rn_with_limit(d, n, max_dim)?;
        // R_n is PSD up to numerics; clamp tiny negatives before the root
        let sqrt_rn = rn.mat_func(|lam| lam.max(0.0).sqrt(), true)?;
        Ok(PurificationChannel {
            d,
            n,
            rn,
            sqrt_rn,
            cptp: OnceLock::new(),
        })
    }

    pub fn rn(&self) -> &LabeledOperator {
        &self.rn
    }

    pub fn sqrt_rn(&self) -> &LabeledOperator {
        &self.sqrt_rn
    }

    fn in_dim(&self) -> usize {
        self.d.pow(self.n as u32)
    }

    /// Interleaving permutation: output slot 2i is A_{i+1}, slot 2i+1 is B_{i+1},
    /// reading from a grouped (A₁…Aₙ B₁…Bₙ) operator.
    fn interleave_perm(&self) -> Vec<usize> {
        let mut perm = Vec::with_capacity(2 * self.n);
        for i in 0..self.n {
            perm.push(i);
            perm.push(self.n + i);
        }
        perm
    }

    /// Embeds X_{A^n} as X ⊗ 𝟙_{B^n} in interleaved ordering.
    fn embed(&self, x: &LabeledOperator) -> Result<LabeledOperator> {
        if x.dim() != self.in_dim() {
            return Err(Error::usage(format!(
                "channel input has dimension {}, expected {}^{} = {}",
                x.dim(),
                self.d,
                self.n,
                self.in_dim()
            )));
        }
        let x_n = LabeledOperator::new(x.mat.clone(), vec![self.d; self.n])?;
        let id_b = LabeledOperator::identity(&vec![self.d; self.n]);
        let grouped = tensor_product(&[&x_n, &id_b])?;
        grouped.reorder_subsystems(&self.interleave_perm())
    }

    pub fn apply(&self, x: &LabeledOperator) -> Result<LabeledOperator> {
        let embedded = self.embed(x)?;
        let out = &self.sqrt_rn.mat * &embedded.mat * &self.sqrt_rn.mat;
        Ok(self.rn.with_same_dims(out))
    }

    /// CP/TP diagnostics from the Choi operator, computed once and cached.
    pub fn cptp(&self) -> Result<CptpReport> {
        if let Some(r) = self.cptp.get() {
            return Ok(*r);
        }
        let choi = self.choi_matrix()?;
        let report = cptp_of_choi(&choi, self.n)?;
        Ok(*self.cptp.get_or_init(|| report))
    }

    /// Choi operator Σ_{ij} |i⟩⟨j|_in ⊗ Λ(|i⟩⟨j|), input slots first.
    /// Tr_out gives 𝟙_in iff the channel is trace preserving.
    pub fn choi_matrix(&self) -> Result<LabeledOperator> {
        let in_dims = vec![self.d; self.n];
        choi_of(&in_dims, |e| self.apply(e))
    }

    /// Runs both defining-identity gaps on seeded random inputs and folds in
    /// the cached CP/TP diagnostics.
    pub fn verify(&self, seed: u64, tol: f64) -> Result<VerifyReport> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

        let rho = crate::sample::random_density(&[self.d], &mut rng);
        let iid = tensor_power(rho.op(), self.n)?;
        let lhs = self.apply(&iid)?;
        let rhs = rhs_random_purification(&rho, self.n)?;
        let gap_iid = lhs.with_same_dims(&lhs.mat - &rhs.mat).norms().trace;

        let raw = crate::sample::random_density(&vec![self.d; self.n], &mut rng);
        let sym = DensityState::new(crate::haar::symmetrize(raw.op())?)?;
        let lhs_s = self.apply(sym.op())?;
        let rhs_s = rhs_symmetric(&sym)?;
        let gap_symmetric = lhs_s.with_same_dims(&lhs_s.mat - &rhs_s.mat).norms().trace;

        let cptp = self.cptp()?;
        let pass = gap_iid <= tol
            && gap_symmetric <= tol
            && cptp.cp_min_eig >= -tol
            && cptp.tp_residual <= tol;
        Ok(VerifyReport {
            d: self.d,
            n: self.n,
            seed,
            gap_iid,
            gap_symmetric,
            cp_min_eig: cptp.cp_min_eig,
            tp_residual: cptp.tp_residual,
            pass,
        })
    }
}

/// Builds the channel for (d, n) and runs one seeded verification.
pub fn verify_identity(d: usize, n: usize, seed: u64, tol: f64) -> Result<VerifyReport> {
    PurificationChannel::new(d, n)?.verify(seed, tol)
}

/// The pure state (√ρ ⊗ 𝟙) Γ (√ρ ⊗ 𝟙) whose first marginal is ρ, in grouped
/// ordering (ρ systems first, mirror systems after).
pub fn standard_purification(rho: &DensityState) -> Result<LabeledOperator> {
    let sq = rho.op().mat_func(|lam| lam.max(0.0).sqrt(), true)?;
    let side = rho.dim();
    // (M ⊗ 𝟙)|Γ⟩ has coordinates v[j·D + i] = M[j, i]
    let mut v = DVector::<C64>::zeros(side * side);
    for j in 0..side {
        for i in 0..side {
            v[j * side + i] = sq.mat[(j, i)];
        }
    }
    let mut dims = rho.dims().to_vec();
    dims.extend_from_slice(rho.dims());
    crate::tensor::projector_onto(&v, &dims)
}

/// Exact E_U[((𝟙⊗U) ψ (𝟙⊗U)†)^{⊗n}] for a two-system purification ψ,
/// interleaved output ordering. The twirl is the Gram projection, no sampling.
pub fn twirled_copies(psi: &LabeledOperator, n: usize) -> Result<LabeledOperator> {
    twirled_copies_with_limit(psi, n, DEFAULT_MAX_DIM)
}

pub fn twirled_copies_with_limit(
    psi: &LabeledOperator,
    n: usize,
    max_dim: usize,
) -> Result<LabeledOperator> {
    if psi.dims.len() != 2 || psi.dims[0] != psi.dims[1] {
        return Err(Error::usage(
            "twirled_copies expects a state on two systems of equal dimension",
        ));
    }
    let d = psi.dims[0];
    if (d * d).checked_pow(n as u32).filter(|&t| t <= max_dim).is_none() {
        return Err(Error::Budget(format!(
            "(d²)^n = {}^{n} exceeds the cap {max_dim}",
            d * d
        )));
    }
    let copies = tensor_power(psi, n)?;
    let b_slots: Vec<usize> = (0..n).map(|i| 2 * i + 1).collect();
    let basis = TwirlBasis::with_limit(d, n, max_dim)?;
    twirl_on_subsystems(&copies, &b_slots, &basis)
}

/// n twirled copies of the standard purification of a single-system ρ.
pub fn rhs_random_purification(rho: &DensityState, n: usize) -> Result<LabeledOperator> {
    if rho.dims().len() != 1 {
        return Err(Error::usage(
            "rhs_random_purification expects a single-system state",
        ));
    }
    let psi = standard_purification(rho)?;
    twirled_copies(&psi, n)
}

/// E_U[(𝟙 ⊗ U^{⊗n}) ψ^std (𝟙 ⊗ U^{⊗n})†] for a permutation-symmetric state on
/// n systems, interleaved output ordering.
pub fn rhs_symmetric(rho_sym: &DensityState) -> Result<LabeledOperator> {
    let dims = rho_sym.dims();
    let n = dims.len();
    let d = dims[0];
    if dims.iter().any(|&di| di != d) {
        return Err(Error::usage("rhs_symmetric needs uniform subsystem dims"));
    }
    let defect = symmetry_defect(rho_sym.op())?;
    if defect > SYMMETRY_GATE {
        return Err(Error::usage(format!(
            "input is not permutation symmetric: defect {defect:.3e} exceeds {SYMMETRY_GATE:.0e}"
        )));
    }
    let psi = standard_purification(rho_sym)?; // grouped (A₁…Aₙ B₁…Bₙ)
    let b_slots: Vec<usize> = (n..2 * n).collect();
    let basis = TwirlBasis::new(d, n)?;
    let twirled = twirl_on_subsystems(&psi, &b_slots, &basis)?;
    let mut perm = Vec::with_capacity(2 * n);
    for i in 0..n {
        perm.push(i);
        perm.push(n + i);
    }
    twirled.reorder_subsystems(&perm)
}

/// Choi operator Σ_{ij} |i⟩⟨j| ⊗ map(|i⟩⟨j|) of an arbitrary linear map given
/// by its action on matrix units; input subsystems first, map output after.
pub fn choi_of(
    in_dims: &[usize],
    map: impl Fn(&LabeledOperator) -> Result<LabeledOperator>,
) -> Result<LabeledOperator> {
    let din: usize = in_dims.iter().product();
    let mut out_dims: Option<Vec<usize>> = None;
    let mut choi: Option<DMatrix<C64>> = None;
    for i in 0..din {
        for j in 0..din {
            let mut e = DMatrix::<C64>::zeros(din, din);
            e[(i, j)] = C64::new(1.0, 0.0);
            let mapped = map(&LabeledOperator::new(e, in_dims.to_vec())?)?;
            let dout = mapped.dim();
            let c = choi.get_or_insert_with(|| DMatrix::zeros(din * dout, din * dout));
            out_dims.get_or_insert_with(|| mapped.dims.clone());
            for r in 0..dout {
                for s in 0..dout {
                    c[(i * dout + r, j * dout + s)] = mapped.mat[(r, s)];
                }
            }
        }
    }
    let mut dims = in_dims.to_vec();
    dims.extend_from_slice(&out_dims.expect("din >= 1"));
    LabeledOperator::new(choi.expect("din >= 1"), dims)
}

/// CP/TP diagnostics of a Choi operator whose first `in_slots` subsystems are
/// the input copy.
pub fn cptp_of_choi(choi: &LabeledOperator, in_slots: usize) -> Result<CptpReport> {
    let eig = choi.herm_eig()?;
    let cp_min_eig = eig.eigenvalues.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..in_slots).collect();
    let traced = choi.partial_trace(&keep)?;
    let tp_residual = traced
        .with_same_dims(&traced.mat - DMatrix::<C64>::identity(traced.dim(), traced.dim()))
        .norms()
        .operator;
    Ok(CptpReport {
        cp_min_eig,
        tp_residual,
    })
}
