//! Dense complex operators on labeled tensor-product spaces.
//!
//! Every operator carries the ordered list of subsystem dimensions it acts on.
//! Basis convention: the leftmost subsystem is the most significant factor, so a
//! basis index decomposes row-major into per-subsystem digits. This single
//! convention makes the maximally entangled operator, permutation operators, and
//! all reorderings reproducible bit-for-bit.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Relative eigenvalue clip: eigenvalues with |λ| ≤ clip × max|λ| count as kernel.
pub const SUPPORT_CLIP_REL: f64 = 1e-12;
/// Max-entry Hermiticity deviation accepted by spectral routines.
pub const HERM_TOL: f64 = 1e-10;
/// Max-entry Hermiticity deviation accepted when validating a state.
pub const STATE_HERM_TOL: f64 = 1e-12;
/// Eigenvalue floor accepted when validating a state.
pub const STATE_EIG_FLOOR: f64 = -1e-10;
/// Trace deviation from 1 accepted when validating a state.
pub const STATE_TRACE_TOL: f64 = 1e-10;

pub(crate) fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// A complex square matrix together with the ordered subsystem dimensions whose
/// product is its side length.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledOperator {
    pub mat: DMatrix<C64>,
    pub dims: Vec<usize>,
}

/// Eigensystem of a Hermitian operator, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors, ordered to match `eigenvalues`.
    pub eigenvectors: DMatrix<C64>,
}

/// Schatten norms computed from singular values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub trace: f64,
    pub operator: f64,
    pub hs: f64,
}

fn check_dims(dims: &[usize], side: usize) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::usage("dims list must be non-empty"));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::usage("subsystem dimensions must be positive"));
    }
    let prod: usize = dims.iter().product();
    if prod != side {
        return Err(Error::usage(format!(
            "dims product {prod} does not match matrix side {side}"
        )));
    }
    Ok(())
}

/// Decomposes a flat basis index into per-subsystem digits (most significant first).
pub(crate) fn digits_of(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
    out
}

pub(crate) fn flat_of(digits: &[usize], dims: &[usize]) -> usize {
    let mut idx = 0usize;
    for (k, &d) in dims.iter().enumerate() {
        idx = idx * d + digits[k];
    }
    idx
}

impl LabeledOperator {
    pub fn new(mat: DMatrix<C64>, dims: Vec<usize>) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::usage("operator matrix must be square"));
        }
        check_dims(&dims, mat.nrows())?;
        Ok(LabeledOperator { mat, dims })
    }

    pub fn identity(dims: &[usize]) -> Self {
        let side: usize = dims.iter().product();
        LabeledOperator {
            mat: DMatrix::identity(side, side),
            dims: dims.to_vec(),
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let side: usize = dims.iter().product();
        LabeledOperator {
            mat: DMatrix::zeros(side, side),
            dims: dims.to_vec(),
        }
    }

    /// Total (matrix side) dimension.
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn adjoint(&self) -> Self {
        LabeledOperator {
            mat: self.mat.adjoint(),
            dims: self.dims.clone(),
        }
    }

    /// Same labels, different entries. The caller guarantees the shape matches.
    pub fn with_same_dims(&self, mat: DMatrix<C64>) -> Self {
        debug_assert_eq!(mat.nrows(), self.dim());
        LabeledOperator {
            mat,
            dims: self.dims.clone(),
        }
    }

    /// Max-entry deviation from the adjoint.
    pub fn herm_dev(&self) -> f64 {
        (&self.mat - self.mat.adjoint()).map(|z| z.norm()).max()
    }

    pub fn herm_eig(&self) -> Result<SpectralDecomposition> {
        let dev = self.herm_dev();
        if dev > HERM_TOL {
            return Err(Error::usage(format!(
                "herm_eig needs a Hermitian input; max deviation {dev:.3e}"
            )));
        }
        // Symmetrize so the factorization sees an exactly Hermitian matrix.
        let h = (&self.mat + self.mat.adjoint()).scale(0.5);
        let eig = h.symmetric_eigen();
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vecs = DMatrix::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            vecs.set_column(col, &eig.eigenvectors.column(i));
        }
        Ok(SpectralDecomposition {
            eigenvalues,
            eigenvectors: vecs,
        })
    }

    /// Applies a scalar function to the eigenvalues.
    ///
    /// With `support_only`, eigenvalues inside the relative clip band count as
    /// exact zeros and stay zero (so log and negative powers act on the support
    /// alone, with the f(0) := 0 convention). Without it, f is applied to every
    /// eigenvalue and a non-finite result is a domain error.
    pub fn mat_func(&self, f: impl Fn(f64) -> f64, support_only: bool) -> Result<Self> {
        let eig = self.herm_eig()?;
        let lam_max = eig
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, &x| acc.max(x.abs()));
        let clip = SUPPORT_CLIP_REL * lam_max;
        let mut fvals = Vec::with_capacity(eig.eigenvalues.len());
        for &lam in &eig.eigenvalues {
            let y = if support_only && lam.abs() <= clip {
                0.0
            } else {
                f(lam)
            };
            if !y.is_finite() {
                return Err(Error::domain(format!(
                    "matrix function is singular at eigenvalue {lam:.6e}"
                )));
            }
            fvals.push(y);
        }
        Ok(self.with_same_dims(eig.reconstruct_with(&fvals)))
    }

    /// Projector onto the numerical support (eigenvalues above the relative clip).
    pub fn support_projector(&self) -> Result<Self> {
        self.mat_func(|_| 1.0, true)
    }

    /// Schatten 1-, ∞-, and 2-norms via singular values.
    pub fn norms(&self) -> Norms {
        let sv = self.mat.clone().svd(false, false).singular_values;
        let trace = sv.iter().sum();
        let operator = sv.iter().fold(0.0f64, |a, &s| a.max(s));
        let hs = sv.iter().map(|s| s * s).sum::<f64>().sqrt();
        Norms {
            trace,
            operator,
            hs,
        }
    }

    /// Reduces to the subsystems in `keep` (ascending original order), tracing
    /// out the rest.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<LabeledOperator> {
        let k = self.dims.len();
        let mut seen = vec![false; k];
        for &i in keep {
            if i >= k {
                return Err(Error::usage(format!(
                    "keep index {i} out of range for {k} subsystems"
                )));
            }
            if seen[i] {
                return Err(Error::usage(format!("keep index {i} repeated")));
            }
            seen[i] = true;
        }
        let kept: Vec<usize> = (0..k).filter(|&i| seen[i]).collect();
        let traced: Vec<usize> = (0..k).filter(|&i| !seen[i]).collect();
        if traced.is_empty() {
            return Ok(self.clone());
        }
        if kept.is_empty() {
            return Err(Error::usage("partial_trace must keep at least one subsystem"));
        }

        let kept_dims: Vec<usize> = kept.iter().map(|&i| self.dims[i]).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&i| self.dims[i]).collect();
        let out_dim: usize = kept_dims.iter().product();
        let traced_dim: usize = traced_dims.iter().product();

        // Strides of each subsystem in the flat input index.
        let mut strides = vec![1usize; k];
        for i in (0..k.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.dims[i + 1];
        }

        let base_of = |digs: &[usize], subs: &[usize]| -> usize {
            digs.iter()
                .zip(subs)
                .map(|(&dg, &s)| dg * strides[s])
                .sum()
        };

        let kept_bases: Vec<usize> = (0..out_dim)
            .map(|f| base_of(&digits_of(f, &kept_dims), &kept))
            .collect();
        let traced_bases: Vec<usize> = (0..traced_dim)
            .map(|f| base_of(&digits_of(f, &traced_dims), &traced))
            .collect();

        let mut out = DMatrix::zeros(out_dim, out_dim);
        for (r, &rb) in kept_bases.iter().enumerate() {
            for (c, &cb) in kept_bases.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &tb in &traced_bases {
                    acc += self.mat[(rb + tb, cb + tb)];
                }
                out[(r, c)] = acc;
            }
        }
        LabeledOperator::new(out, kept_dims)
    }

    /// Conjugates by the relabeling unitary so that output slot j carries what
    /// input slot `perm[j]` carried.
    pub fn reorder_subsystems(&self, perm: &[usize]) -> Result<LabeledOperator> {
        let k = self.dims.len();
        if perm.len() != k {
            return Err(Error::usage("perm length must match subsystem count"));
        }
        let mut seen = vec![false; k];
        for &p in perm {
            if p >= k || seen[p] {
                return Err(Error::usage("perm must be a bijection on subsystem indices"));
            }
            seen[p] = true;
        }
        let out_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let side = self.dim();
        // map[o] = input flat index carrying the digits of output flat index o
        let mut map = vec![0usize; side];
        for (o, m) in map.iter_mut().enumerate() {
            let out_digs = digits_of(o, &out_dims);
            let mut in_digs = vec![0usize; k];
            for (j, &p) in perm.iter().enumerate() {
                in_digs[p] = out_digs[j];
            }
            *m = flat_of(&in_digs, &self.dims);
        }
        let mut out = DMatrix::zeros(side, side);
        for r in 0..side {
            for c in 0..side {
                out[(r, c)] = self.mat[(map[r], map[c])];
            }
        }
        LabeledOperator::new(out, out_dims)
    }
}

impl SpectralDecomposition {
    /// Rebuilds Σ f_i |v_i⟩⟨v_i| from replacement eigenvalues.
    pub fn reconstruct_with(&self, vals: &[f64]) -> DMatrix<C64> {
        let mut scaled = self.eigenvectors.clone();
        for (c, &v) in vals.iter().enumerate() {
            scaled.column_mut(c).scale_mut(v);
        }
        scaled * self.eigenvectors.adjoint()
    }

    pub fn reconstruct(&self) -> DMatrix<C64> {
        self.reconstruct_with(&self.eigenvalues)
    }
}

/// Kronecker product in list order; dims concatenate.
pub fn tensor_product(ops: &[&LabeledOperator]) -> Result<LabeledOperator> {
    let Some((first, rest)) = ops.split_first() else {
        return Err(Error::usage("tensor_product of an empty list"));
    };
    let mut mat = first.mat.clone();
    let mut dims = first.dims.clone();
    for op in rest {
        mat = mat.kronecker(&op.mat);
        dims.extend_from_slice(&op.dims);
    }
    LabeledOperator::new(mat, dims)
}

/// n-fold Kronecker power.
pub fn tensor_power(op: &LabeledOperator, n: usize) -> Result<LabeledOperator> {
    if n == 0 {
        return Err(Error::usage("tensor_power needs n >= 1"));
    }
    let refs: Vec<&LabeledOperator> = std::iter::repeat(op).take(n).collect();
    tensor_product(&refs)
}

/// The unnormalized maximally entangled vector |Γ⟩ = Σ_i |ii⟩ on ℂ^d ⊗ ℂ^d.
pub fn max_entangled_vec(d: usize) -> DVector<C64> {
    let mut v = DVector::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = cr(1.0);
    }
    v
}

/// The rank-one operator Γ = |Γ⟩⟨Γ| with dims [d, d]; Tr_B Γ = 𝟙_A and Tr Γ = d.
pub fn max_entangled_projector(d: usize) -> LabeledOperator {
    let v = max_entangled_vec(d);
    LabeledOperator {
        mat: &v * v.adjoint(),
        dims: vec![d, d],
    }
}

/// Rank-one operator |v⟩⟨v| on the given dims.
pub fn projector_onto(v: &DVector<C64>, dims: &[usize]) -> Result<LabeledOperator> {
    LabeledOperator::new(v * v.adjoint(), dims.to_vec())
}

/// A Hermitian-PSD unit-trace operator; the constructor enforces all three.
#[derive(Debug, Clone)]
pub struct DensityState {
    op: LabeledOperator,
}

impl DensityState {
    pub fn new(op: LabeledOperator) -> Result<Self> {
        let dev = op.herm_dev();
        if dev > STATE_HERM_TOL {
            return Err(Error::usage(format!(
                "state is not Hermitian: max deviation {dev:.3e}"
            )));
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > STATE_TRACE_TOL || tr.im.abs() > STATE_TRACE_TOL {
            return Err(Error::usage(format!("state trace {tr} is not 1")));
        }
        let eig = op.herm_eig()?;
        let min = eig.eigenvalues.last().copied().unwrap_or(0.0);
        if min < STATE_EIG_FLOOR {
            return Err(Error::usage(format!(
                "state has negative eigenvalue {min:.3e}"
            )));
        }
        Ok(DensityState { op })
    }

    pub fn op(&self) -> &LabeledOperator {
        &self.op
    }

    pub fn mat(&self) -> &DMatrix<C64> {
        &self.op.mat
    }

    pub fn dims(&self) -> &[usize] {
        &self.op.dims
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn into_op(self) -> LabeledOperator {
        self.op
    }

    /// Maximally mixed state on the given dims.
    pub fn maximally_mixed(dims: &[usize]) -> Self {
        let side: usize = dims.iter().product();
        let op = LabeledOperator {
            mat: DMatrix::identity(side, side).scale(1.0 / side as f64),
            dims: dims.to_vec(),
        };
        DensityState { op }
    }

    /// Pure state |v⟩⟨v| from a normalized vector.
    pub fn pure(v: &DVector<C64>, dims: &[usize]) -> Result<Self> {
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::usage(format!("ket norm {norm} is not 1")));
        }
        DensityState::new(projector_onto(v, dims)?)
    }
}
