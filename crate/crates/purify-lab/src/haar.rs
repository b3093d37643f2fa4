//! Symmetric-group operators and exact Haar twirling.
//!
//! The n-fold twirl E_U[U^{⊗n} · (U†)^{⊗n}] equals the Hilbert-Schmidt
//! orthogonal projection onto the commutant of {U^{⊗n}: U unitary}, and that
//! commutant is spanned by the subsystem-permutation operators P_π. Projecting
//! means solving the Gram system of the P_π, so the twirl is computed exactly,
//! with no sampling. A Monte-Carlo estimator over Haar samples is kept as an
//! independent oracle.

use itertools::Itertools;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sample::ginibre;
use crate::tensor::{cr, digits_of, flat_of, tensor_power, LabeledOperator};

/// Default cap on the total dimension of any dense operator we agree to build.
pub const DEFAULT_MAX_DIM: usize = 4096;
/// Relative singular-value cutoff for the Gram pseudo-inverse.
pub const GRAM_PINV_CUTOFF_REL: f64 = 1e-10;
/// Largest copy count for which the n! permutation table is built.
const MAX_BASIS_N: usize = 6;

/// A bijection on {0..n−1}, stored by images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &i in &images {
            if i >= n || seen[i] {
                return Err(Error::usage("images must form a bijection"));
            }
            seen[i] = true;
        }
        Ok(Permutation { images })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            images: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn apply(&self, x: usize) -> usize {
        self.images[x]
    }

    /// (self ∘ other)(x) = self(other(x)).
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation {
            images: other.images.iter().map(|&x| self.images[x]).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0usize; self.n()];
        for (x, &y) in self.images.iter().enumerate() {
            inv[y] = x;
        }
        Permutation { images: inv }
    }

    /// Number of cycles, fixed points included.
    pub fn cycle_count(&self) -> usize {
        let mut seen = vec![false; self.n()];
        let mut cycles = 0;
        for start in 0..self.n() {
            if seen[start] {
                continue;
            }
            cycles += 1;
            let mut x = start;
            while !seen[x] {
                seen[x] = true;
                x = self.images[x];
            }
        }
        cycles
    }

    /// All n! permutations in lexicographic image order.
    pub fn all(n: usize) -> Vec<Permutation> {
        (0..n)
            .permutations(n)
            .map(|images| Permutation { images })
            .collect()
    }

    /// Action on flat basis indices of (ℂ^d)^{⊗n}: the digit at slot k moves to
    /// slot π(k). Entry `map[i]` is the image index of basis vector i.
    pub fn basis_map(&self, d: usize) -> Vec<usize> {
        let n = self.n();
        let dims = vec![d; n];
        let mut map = vec![0usize; d.pow(n as u32)];
        for (i, m) in map.iter_mut().enumerate() {
            let digs = digits_of(i, &dims);
            let mut out = vec![0usize; n];
            for (k, &dg) in digs.iter().enumerate() {
                out[self.images[k]] = dg;
            }
            *m = flat_of(&out, &dims);
        }
        map
    }
}

/// The unitary P_π with P_π|i_1…i_n⟩ = |i_{π⁻¹(1)}…i_{π⁻¹(n)}⟩; P_π P_σ = P_{π∘σ}.
pub fn perm_operator(p: &Permutation, d: usize) -> LabeledOperator {
    let map = p.basis_map(d);
    let side = map.len();
    let mut mat = DMatrix::zeros(side, side);
    for (i, &j) in map.iter().enumerate() {
        mat[(j, i)] = cr(1.0);
    }
    LabeledOperator {
        mat,
        dims: vec![d; p.n()],
    }
}

/// The n! permutation operators on (ℂ^d)^{⊗n} with their Gram data; immutable
/// once built, shared by every exact twirl at this (d, n).
pub struct TwirlBasis {
    pub d: usize,
    pub n: usize,
    pub perms: Vec<Permutation>,
    pub operators: Vec<LabeledOperator>,
    /// gram[a][b] = Tr[P_a† P_b] = d^{cycles(a⁻¹∘b)}.
    pub gram: DMatrix<f64>,
    /// Pseudo-inverse of the Gram matrix; the P_π are linearly dependent when
    /// d < n, so a least-squares inverse with a relative cutoff is required.
    gram_pinv: DMatrix<f64>,
    /// basis_map of each permutation, for index-walk products and traces.
    maps: Vec<Vec<usize>>,
}

fn sym_pinv(m: &DMatrix<f64>, cutoff_rel: f64) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let lam_max = eig.eigenvalues.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let cut = cutoff_rel * lam_max;
    let k = eig.eigenvalues.len();
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        let lam = eig.eigenvalues[i];
        if lam.abs() > cut {
            let v = eig.eigenvectors.column(i);
            out += (&v * v.transpose()).scale(1.0 / lam);
        }
    }
    out
}

impl TwirlBasis {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        Self::with_limit(d, n, DEFAULT_MAX_DIM)
    }

    pub fn with_limit(d: usize, n: usize, max_dim: usize) -> Result<Self> {
        if d < 2 || n < 1 {
            return Err(Error::usage("twirl basis needs d >= 2, n >= 1"));
        }
        if n > MAX_BASIS_N {
            return Err(Error::Budget(format!(
                "permutation table for n = {n} exceeds the n! cap ({MAX_BASIS_N}! operators)"
            )));
        }
        let side = d.checked_pow(n as u32).filter(|&s| s <= max_dim);
        let Some(_side) = side else {
            return Err(Error::Budget(format!(
                "twirl space dimension {d}^{n} exceeds the cap {max_dim}"
            )));
        };
        let perms = Permutation::all(n);
        let operators: Vec<LabeledOperator> = perms.iter().map(|p| perm_operator(p, d)).collect();
        let maps: Vec<Vec<usize>> = perms.iter().map(|p| p.basis_map(d)).collect();
        let count = perms.len();
        let mut gram = DMatrix::zeros(count, count);
        for a in 0..count {
            let a_inv = perms[a].inverse();
            for b in 0..count {
                let cycles = a_inv.compose(&perms[b]).cycle_count();
                gram[(a, b)] = (d as f64).powi(cycles as i32);
            }
        }
        let gram_pinv = sym_pinv(&gram, GRAM_PINV_CUTOFF_REL);
        Ok(TwirlBasis {
            d,
            n,
            perms,
            operators,
            gram,
            gram_pinv,
            maps,
        })
    }

    pub fn side(&self) -> usize {
        self.d.pow(self.n as u32)
    }

    /// Hilbert-Schmidt pairings t_a = Tr[P_a† y] = Σ_i y[map_a(i), i].
    fn pairings(&self, y: &DMatrix<C64>) -> Vec<C64> {
        self.maps
            .iter()
            .map(|m| {
                (0..y.ncols())
                    .map(|i| y[(m[i], i)])
                    .sum()
            })
            .collect()
    }

    /// Coefficients of the projection onto span{P_π}: solves gram·c = t.
    fn project_coeffs(&self, t: &[C64]) -> Vec<C64> {
        let count = t.len();
        (0..count)
            .map(|a| (0..count).map(|b| self.gram_pinv[(a, b)] * t[b]).sum())
            .collect()
    }
}

/// E_U[U^{⊗n} y (U†)^{⊗n}], computed exactly as the orthogonal projection of y
/// onto span{P_π}.
pub fn twirl_exact(y: &LabeledOperator, basis: &TwirlBasis) -> Result<LabeledOperator> {
    let expect = vec![basis.d; basis.n];
    if y.dims != expect {
        return Err(Error::usage(format!(
            "twirl_exact input dims {:?} must be {:?}",
            y.dims, expect
        )));
    }
    let t = basis.pairings(&y.mat);
    let c = basis.project_coeffs(&t);
    let side = basis.side();
    let mut out = DMatrix::zeros(side, side);
    for (a, &ca) in c.iter().enumerate() {
        for i in 0..side {
            out[(basis.maps[a][i], i)] += ca;
        }
    }
    Ok(y.with_same_dims(out))
}

/// Monte-Carlo twirl estimate with entrywise standard errors.
pub struct McTwirl {
    pub mean: LabeledOperator,
    /// Entrywise standard error of the complex mean.
    pub stderr: DMatrix<f64>,
    pub stderr_max: f64,
    pub samples: usize,
}

impl McTwirl {
    /// Largest entrywise deviation from `other`, in units of standard error.
    /// Entries with vanishing sample variance get an absolute floor so exact
    /// fixed points compare at machine precision.
    pub fn max_deviation_in_se(&self, other: &LabeledOperator) -> f64 {
        let floor = 1e-12;
        let mut worst = 0.0f64;
        for r in 0..self.mean.dim() {
            for c in 0..self.mean.dim() {
                let dev = (self.mean.mat[(r, c)] - other.mat[(r, c)]).norm();
                worst = worst.max(dev / (self.stderr[(r, c)] + floor));
            }
        }
        worst
    }
}

/// Empirical mean of U^{⊗n} y (U†)^{⊗n} over Haar samples. Deterministic for a
/// fixed seeded rng.
pub fn twirl_mc(
    y: &LabeledOperator,
    d: usize,
    n: usize,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<McTwirl> {
    if samples < 1 {
        return Err(Error::usage("twirl_mc needs samples >= 1"));
    }
    let expect = vec![d; n];
    if y.dims != expect {
        return Err(Error::usage(format!(
            "twirl_mc input dims {:?} must be {:?}",
            y.dims, expect
        )));
    }
    let side = y.dim();
    // Welford update per entry; the naive Σ|z|² − n|mean|² form cancels
    // catastrophically when the variance is near machine precision.
    let mut mean = DMatrix::<C64>::zeros(side, side);
    let mut m2 = DMatrix::<f64>::zeros(side, side);
    for k in 0..samples {
        let u = sample_haar(d, rng);
        let w = tensor_power(&u, n)?;
        let term = &w.mat * &y.mat * w.mat.adjoint();
        let kf = (k + 1) as f64;
        for r in 0..side {
            for c in 0..side {
                let z = term[(r, c)];
                let delta = z - mean[(r, c)];
                mean[(r, c)] += delta / cr(kf);
                m2[(r, c)] += (delta.conj() * (z - mean[(r, c)])).re;
            }
        }
    }
    let nf = samples as f64;
    let mut stderr = DMatrix::zeros(side, side);
    if samples > 1 {
        for r in 0..side {
            for c in 0..side {
                let var = (m2[(r, c)] / (nf - 1.0)).max(0.0);
                stderr[(r, c)] = (var / nf).sqrt();
            }
        }
    }
    let stderr_max = stderr.max();
    Ok(McTwirl {
        mean: y.with_same_dims(mean),
        stderr,
        stderr_max,
        samples,
    })
}

/// Applies identity ⊗ exact-twirl, the twirl acting on the listed subsystems.
///
/// The input is regrouped to (rest, twirled), contracted against each P_σ† on
/// the twirled block, recombined through the Gram pseudo-inverse, and reordered
/// back: result = Σ_{π,σ} (gram⁺)_{πσ} Tr_twirled[(𝟙 ⊗ P_σ†) x] ⊗ P_π.
pub fn twirl_on_subsystems(
    x: &LabeledOperator,
    twirled: &[usize],
    basis: &TwirlBasis,
) -> Result<LabeledOperator> {
    let k = x.dims.len();
    let mut seen = vec![false; k];
    for &i in twirled {
        if i >= k {
            return Err(Error::usage(format!("twirled index {i} out of range")));
        }
        if seen[i] {
            return Err(Error::usage(format!("twirled index {i} repeated")));
        }
        if x.dims[i] != basis.d {
            return Err(Error::usage(format!(
                "twirled subsystem {i} has dim {}, basis needs {}",
                x.dims[i], basis.d
            )));
        }
        seen[i] = true;
    }
    if twirled.len() != basis.n {
        return Err(Error::usage(format!(
            "twirl basis covers {} copies, got {} twirled subsystems",
            basis.n,
            twirled.len()
        )));
    }

    let rest: Vec<usize> = (0..k).filter(|&i| !seen[i]).collect();
    if rest.is_empty() {
        let y = LabeledOperator::new(x.mat.clone(), vec![basis.d; basis.n])?;
        let t = twirl_exact(&y, basis)?;
        return LabeledOperator::new(t.mat, x.dims.clone());
    }

    // group to (rest..., twirled ascending...)
    let mut grouped_order: Vec<usize> = rest.clone();
    let mut twirled_sorted = twirled.to_vec();
    twirled_sorted.sort_unstable();
    grouped_order.extend_from_slice(&twirled_sorted);
    let grouped = x.reorder_subsystems(&grouped_order)?;

    let t_dim = basis.side();
    let r_dim: usize = rest.iter().map(|&i| x.dims[i]).product();
    let count = basis.perms.len();

    // m_blocks[b][r1, r2] = Σ_t grouped[r1·T + map_b(t), r2·T + t]
    let mut m_blocks: Vec<DMatrix<C64>> = Vec::with_capacity(count);
    for map_b in &basis.maps {
        let mut m = DMatrix::zeros(r_dim, r_dim);
        for r1 in 0..r_dim {
            for r2 in 0..r_dim {
                let mut acc = C64::new(0.0, 0.0);
                for (t, &mt) in map_b.iter().enumerate() {
                    acc += grouped.mat[(r1 * t_dim + mt, r2 * t_dim + t)];
                }
                m[(r1, r2)] = acc;
            }
        }
        m_blocks.push(m);
    }

    let side = r_dim * t_dim;
    let mut out = DMatrix::<C64>::zeros(side, side);
    for a in 0..count {
        let mut n_a = DMatrix::<C64>::zeros(r_dim, r_dim);
        for (b, m_b) in m_blocks.iter().enumerate() {
            let w = basis.gram_pinv[(a, b)];
            if w != 0.0 {
                n_a += m_b.scale(w);
            }
        }
        let map_a = &basis.maps[a];
        for r1 in 0..r_dim {
            for r2 in 0..r_dim {
                let v = n_a[(r1, r2)];
                if v != C64::new(0.0, 0.0) {
                    for (t, &mt) in map_a.iter().enumerate() {
                        out[(r1 * t_dim + mt, r2 * t_dim + t)] += v;
                    }
                }
            }
        }
    }

    let grouped_dims: Vec<usize> = grouped_order.iter().map(|&i| x.dims[i]).collect();
    let out_grouped = LabeledOperator::new(out, grouped_dims)?;
    // grouped slot j carries original slot grouped_order[j]; invert that
    let mut back = vec![0usize; k];
    for (j, &orig) in grouped_order.iter().enumerate() {
        back[orig] = j;
    }
    out_grouped.reorder_subsystems(&back)
}

/// Why Tr_twirled[(𝟙 ⊗ P†) x] is the right contraction: on a product input
/// r ⊗ y it reduces to r · Tr[P† y], which is exactly the pairing vector the
/// Gram solve needs, and general inputs follow by linearity.
/// A Haar-random d×d unitary: complex Ginibre, QR, then the R-diagonal phase
/// fix. QR alone is not Haar; normalizing the triangular factor's diagonal to
/// positive reals makes the decomposition unique and the Q factor uniform.
pub fn sample_haar(d: usize, rng: &mut impl Rng) -> LabeledOperator {
    let g = ginibre(d, d, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for i in 0..d {
        let rii = r[(i, i)];
        let phase = if rii.norm() > 0.0 {
            rii / cr(rii.norm())
        } else {
            cr(1.0)
        };
        let col = q.column(i) * phase;
        q.set_column(i, &col);
    }
    LabeledOperator {
        mat: q,
        dims: vec![d],
    }
}

/// Average of P_π x P_π† over all π; projects onto the permutation-invariant
/// operators while preserving positivity and trace. Requires uniform dims.
pub fn symmetrize(x: &LabeledOperator) -> Result<LabeledOperator> {
    let n = x.dims.len();
    let d = x.dims[0];
    if x.dims.iter().any(|&di| di != d) {
        return Err(Error::usage("symmetrize needs uniform subsystem dims"));
    }
    if n > MAX_BASIS_N {
        return Err(Error::Budget(format!("symmetrize over S_{n} exceeds the cap")));
    }
    let side = x.dim();
    let mut out = DMatrix::<C64>::zeros(side, side);
    let perms = Permutation::all(n);
    for p in &perms {
        let map = p.basis_map(d);
        for r in 0..side {
            for c in 0..side {
                out[(map[r], map[c])] += x.mat[(r, c)];
            }
        }
    }
    Ok(x.with_same_dims(out.scale(1.0 / perms.len() as f64)))
}

/// Largest ∞-norm deviation of x from its P_π-conjugates; 0 means symmetric.
pub fn symmetry_defect(x: &LabeledOperator) -> Result<f64> {
    let n = x.dims.len();
    let d = x.dims[0];
    if x.dims.iter().any(|&di| di != d) {
        return Err(Error::usage("symmetry_defect needs uniform subsystem dims"));
    }
    let mut worst = 0.0f64;
    for p in Permutation::all(n) {
        let map = p.basis_map(d);
        let side = x.dim();
        let mut conj = DMatrix::<C64>::zeros(side, side);
        for r in 0..side {
            for c in 0..side {
                conj[(map[r], map[c])] = x.mat[(r, c)];
            }
        }
        worst = worst.max(x.with_same_dims(conj.clone() - &x.mat).norms().operator);
    }
    Ok(worst)
}

/// R_n = E_U[(𝟙_{A^n} ⊗ U^{⊗n}_{B^n}) Γ_AB^{⊗n} (𝟙_{A^n} ⊗ (U†)^{⊗n}_{B^n})] on
/// interleaved (A₁B₁…AₙBₙ) ordering: Hermitian, PSD, Tr_{B^n} R_n = 𝟙_{A^n},
/// Tr R_n = dⁿ.
pub fn build_rn(d: usize, n: usize) -> Result<LabeledOperator> {
    build_rn_with_limit(d, n, DEFAULT_MAX_DIM)
}

pub fn build_rn_with_limit(d: usize, n: usize, max_dim: usize) -> Result<LabeledOperator> {
    if d < 2 || n < 1 {
        return Err(Error::usage("build_rn needs d >= 2, n >= 1"));
    }
    let total = (d * d).checked_pow(n as u32).filter(|&t| t <= max_dim);
    if total.is_none() {
        return Err(Error::Budget(format!(
            "(d²)^n = {}^{n} exceeds the cap {max_dim}",
            d * d
        )));
    }
    let gamma = crate::tensor::max_entangled_projector(d);
    let gamma_n = tensor_power(&gamma, n)?;
    let b_slots: Vec<usize> = (0..n).map(|i| 2 * i + 1).collect();
    let basis = TwirlBasis::with_limit(d, n, max_dim)?;
    twirl_on_subsystems(&gamma_n, &b_slots, &basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{random_density, random_hermitian};
    use crate::tensor::{max_entangled_vec, tensor_product};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).map(|z| z.norm()).max()
    }

    #[test]
    fn cycle_counts() {
        assert_eq!(Permutation::identity(3).cycle_count(), 3);
        assert_eq!(Permutation::new(vec![1, 0, 2]).unwrap().cycle_count(), 2);
        assert_eq!(Permutation::new(vec![1, 2, 0]).unwrap().cycle_count(), 1);
    }

    #[test]
    fn perm_rejects_non_bijection() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
    }

    #[test]
    fn perm_operator_identity_and_swap() {
        let id = perm_operator(&Permutation::identity(2), 3);
        assert_eq!(max_abs_diff(&id.mat, &DMatrix::identity(9, 9)), 0.0);

        let swap = perm_operator(&Permutation::new(vec![1, 0]).unwrap(), 2);
        let mut expected = DMatrix::zeros(4, 4);
        expected[(0, 0)] = cr(1.0);
        expected[(1, 2)] = cr(1.0);
        expected[(2, 1)] = cr(1.0);
        expected[(3, 3)] = cr(1.0);
        assert_eq!(max_abs_diff(&swap.mat, &expected), 0.0);
    }

    #[test]
    fn perm_operator_trace_is_cycle_power() {
        for d in [2usize, 3] {
            for p in Permutation::all(3) {
                let op = perm_operator(&p, d);
                let want = (d as f64).powi(p.cycle_count() as i32);
                assert!((op.trace().re - want).abs() < 1e-12);
                assert!(op.trace().im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perm_operator_composes() {
        let d = 2;
        for a in Permutation::all(3) {
            for b in Permutation::all(3) {
                let pa = perm_operator(&a, d);
                let pb = perm_operator(&b, d);
                let pab = perm_operator(&a.compose(&b), d);
                assert_eq!(max_abs_diff(&(&pa.mat * &pb.mat), &pab.mat), 0.0);
            }
        }
    }

    #[test]
    fn haar_unitarity_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for d in [2usize, 3, 5] {
            let u = sample_haar(d, &mut rng);
            let dev = max_abs_diff(&(&u.mat * u.mat.adjoint()), &DMatrix::identity(d, d));
            assert!(dev < 1e-12, "unitarity deviation {dev:.3e}");
        }
        let a = sample_haar(3, &mut ChaCha8Rng::seed_from_u64(7));
        let b = sample_haar(3, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a.mat, b.mat);
    }

    #[test]
    fn haar_moments() {
        // E|U_00|² = 1/d and E U_00 = 0; 10⁴ samples keep this test quick, the
        // acceptance suite repeats it at 10⁵.
        let samples = 10_000usize;
        let d = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut sum_sq = 0.0f64;
        let mut sum_sq2 = 0.0f64;
        let mut sum = C64::new(0.0, 0.0);
        let mut sum_norm2 = 0.0f64;
        for _ in 0..samples {
            let u = sample_haar(d, &mut rng);
            let z = u.mat[(0, 0)];
            let s = z.norm_sqr();
            sum_sq += s;
            sum_sq2 += s * s;
            sum += z;
            sum_norm2 += s;
        }
        let nf = samples as f64;
        let mean_sq = sum_sq / nf;
        let var_sq = (sum_sq2 - nf * mean_sq * mean_sq) / (nf - 1.0);
        let se_sq = (var_sq / nf).sqrt();
        assert!(
            (mean_sq - 1.0 / d as f64).abs() < 5.0 * se_sq,
            "E|U00|² = {mean_sq}, se {se_sq}"
        );
        let mean = sum / cr(nf);
        let var = (sum_norm2 - nf * mean.norm_sqr()) / (nf - 1.0);
        let se = (var / nf).sqrt();
        assert!(mean.norm() < 5.0 * se, "E U00 = {mean}, se {se}");
    }

    #[test]
    fn gram_matches_explicit_traces() {
        for d in [2usize, 3] {
            let basis = TwirlBasis::new(d, 3).unwrap();
            for a in 0..basis.perms.len() {
                for b in 0..basis.perms.len() {
                    let explicit =
                        (basis.operators[a].mat.adjoint() * &basis.operators[b].mat).trace();
                    assert!((explicit.re - basis.gram[(a, b)]).abs() < 1e-12);
                    assert!(explicit.im.abs() < 1e-12);
                }
            }
            // diagonal is d^n
            assert!((basis.gram[(0, 0)] - (d as f64).powi(3)).abs() < 1e-12);
        }
    }

    #[test]
    fn twirl_exact_fixes_commutant() {
        let basis = TwirlBasis::new(2, 3).unwrap();
        let id = LabeledOperator::identity(&[2, 2, 2]);
        let t = twirl_exact(&id, &basis).unwrap();
        assert!(max_abs_diff(&t.mat, &id.mat) < 1e-12);
        for op in &basis.operators {
            let t = twirl_exact(op, &basis).unwrap();
            assert!(max_abs_diff(&t.mat, &op.mat) < 1e-10);
        }
    }

    #[test]
    fn twirl_exact_single_copy_is_depolarizing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [2usize, 3] {
            let basis = TwirlBasis::new(d, 1).unwrap();
            let x = LabeledOperator::new(crate::sample::ginibre(d, d, &mut rng), vec![d]).unwrap();
            let t = twirl_exact(&x, &basis).unwrap();
            let want = DMatrix::identity(d, d) * (x.trace() / cr(d as f64));
            assert!(max_abs_diff(&t.mat, &want) < 1e-12);
        }
    }

    #[test]
    fn twirl_exact_idempotent_trace_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let basis = TwirlBasis::new(2, 3).unwrap();
        for _ in 0..5 {
            let rho = random_density(&[2, 2, 2], &mut rng);
            let t1 = twirl_exact(rho.op(), &basis).unwrap();
            let t2 = twirl_exact(&t1, &basis).unwrap();
            assert!(max_abs_diff(&t1.mat, &t2.mat) < 1e-10);
            assert!((t1.trace().re - 1.0).abs() < 1e-10);
            let min = t1.herm_eig().unwrap().eigenvalues.last().copied().unwrap();
            assert!(min > -1e-10, "twirl broke positivity: {min:.3e}");
        }
    }

    #[test]
    fn twirl_mc_identity_and_determinism() {
        let id = LabeledOperator::identity(&[2, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mc = twirl_mc(&id, 2, 2, 50, &mut rng).unwrap();
        assert!(max_abs_diff(&mc.mean.mat, &id.mat) < 1e-12);
        assert!(mc.stderr_max < 1e-12);

        let mut rng_a = ChaCha8Rng::seed_from_u64(33);
        let mut rng_b = ChaCha8Rng::seed_from_u64(33);
        let y = random_hermitian(&[2, 2], &mut ChaCha8Rng::seed_from_u64(1));
        let a = twirl_mc(&y, 2, 2, 64, &mut rng_a).unwrap();
        let b = twirl_mc(&y, 2, 2, 64, &mut rng_b).unwrap();
        assert_eq!(a.mean.mat, b.mean.mat);
    }

    #[test]
    fn twirl_mc_matches_exact_within_5_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y = random_hermitian(&[2, 2], &mut rng);
        let basis = TwirlBasis::new(2, 2).unwrap();
        let exact = twirl_exact(&y, &basis).unwrap();
        let mc = twirl_mc(&y, 2, 2, 20_000, &mut rng).unwrap();
        let worst = mc.max_deviation_in_se(&exact);
        assert!(worst < 5.0, "worst deviation {worst:.2} standard errors");
    }

    #[test]
    fn twirl_mc_error_scales_as_inverse_sqrt() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let y = random_hermitian(&[2, 2], &mut rng);
        let basis = TwirlBasis::new(2, 2).unwrap();
        let exact = twirl_exact(&y, &basis).unwrap();
        let mut errs = Vec::new();
        for samples in [100usize, 1000, 10_000] {
            let mc = twirl_mc(&y, 2, 2, samples, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
            errs.push(
                mc.mean
                    .with_same_dims(&mc.mean.mat - &exact.mat)
                    .norms()
                    .hs,
            );
        }
        let slope = (errs[2] / errs[0]).log10() / 2.0;
        assert!(
            (slope + 0.5).abs() < 0.2,
            "error scaling slope {slope:.3}, errs {errs:?}"
        );
    }

    #[test]
    fn twirl_on_subsystems_factorized() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_hermitian(&[3], &mut rng);
        let y = random_hermitian(&[2, 2], &mut rng);
        let basis = TwirlBasis::new(2, 2).unwrap();
        let joint = tensor_product(&[&a, &y]).unwrap();
        let out = twirl_on_subsystems(&joint, &[1, 2], &basis).unwrap();
        let want = tensor_product(&[&a, &twirl_exact(&y, &basis).unwrap()]).unwrap();
        assert!(max_abs_diff(&out.mat, &want.mat) < 1e-10);
    }

    #[test]
    fn twirl_on_subsystems_matches_naive_contraction() {
        // oracle: explicit matrix products (𝟙⊗P_σ†)x and kron reassembly
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let x = random_hermitian(&[3, 2, 2], &mut rng);
        let basis = TwirlBasis::new(2, 2).unwrap();
        let out = twirl_on_subsystems(&x, &[1, 2], &basis).unwrap();

        let count = basis.perms.len();
        let i3 = LabeledOperator::identity(&[3]);
        let mut want = DMatrix::<C64>::zeros(12, 12);
        for a in 0..count {
            let mut n_a = DMatrix::<C64>::zeros(3, 3);
            for b in 0..count {
                let w_b = tensor_product(&[&i3, &basis.operators[b]]).unwrap();
                let prod = LabeledOperator::new(
                    w_b.mat.adjoint() * &x.mat,
                    vec![3, 2, 2],
                )
                .unwrap();
                let m_b = prod.partial_trace(&[0]).unwrap();
                n_a += m_b.mat.scale(basis.gram_pinv[(a, b)]);
            }
            let n_a_op = LabeledOperator::new(n_a, vec![3]).unwrap();
            want += tensor_product(&[&n_a_op, &basis.operators[a]]).unwrap().mat;
        }
        assert!(max_abs_diff(&out.mat, &want) < 1e-10);
    }

    #[test]
    fn twirl_on_subsystems_gamma_single_copy() {
        let g = crate::tensor::max_entangled_projector(2);
        let basis = TwirlBasis::new(2, 1).unwrap();
        let out = twirl_on_subsystems(&g, &[1], &basis).unwrap();
        let want = DMatrix::identity(4, 4).scale(0.5);
        assert!(max_abs_diff(&out.mat, &want) < 1e-12);
    }

    #[test]
    fn twirl_on_subsystems_preserves_rest_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = random_density(&[3, 2, 2], &mut rng);
        let basis = TwirlBasis::new(2, 2).unwrap();
        let out = twirl_on_subsystems(x.op(), &[1, 2], &basis).unwrap();
        let before = x.op().partial_trace(&[0]).unwrap();
        let after = out.partial_trace(&[0]).unwrap();
        assert!(max_abs_diff(&before.mat, &after.mat) < 1e-10);
    }

    #[test]
    fn transpose_trick() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for d in [2usize, 3] {
            let u = sample_haar(d, &mut rng);
            let gamma = max_entangled_vec(d);
            let id = DMatrix::<C64>::identity(d, d);
            let lhs = u.mat.kronecker(&id) * &gamma;
            let rhs = id.kronecker(&u.mat.transpose()) * &gamma;
            let dev = (&lhs - &rhs).map(|z| z.norm()).max();
            assert!(dev < 1e-12, "transpose trick deviation {dev:.3e}");
        }
    }

    #[test]
    fn rn_single_copy_closed_form() {
        for d in [2usize, 3] {
            let r1 = build_rn(d, 1).unwrap();
            let want = DMatrix::identity(d * d, d * d).scale(1.0 / d as f64);
            assert!(max_abs_diff(&r1.mat, &want) < 1e-12);
        }
    }

    #[test]
    fn rn_marginal_trace_and_positivity() {
        for (d, n) in [(2usize, 2usize), (2, 3), (3, 2)] {
            let rn = build_rn(d, n).unwrap();
            assert!((rn.trace().re - (d as f64).powi(n as i32)).abs() < 1e-9);
            let a_slots: Vec<usize> = (0..n).map(|i| 2 * i).collect();
            let marg = rn.partial_trace(&a_slots).unwrap();
            let dn = d.pow(n as u32);
            assert!(
                max_abs_diff(&marg.mat, &DMatrix::identity(dn, dn)) < 1e-10,
                "tracing out the B slots of R_n must leave the identity (d={d}, n={n})"
            );
            let min = rn.herm_eig().unwrap().eigenvalues.last().copied().unwrap();
            assert!(min > -1e-10, "R_n has negative eigenvalue {min:.3e}");
        }
    }

    #[test]
    fn rn_matches_mc_twirl() {
        // independent oracle: R_2 for d=2 via Monte-Carlo twirl of Γ^{⊗2}
        let d = 2;
        let gamma2 = tensor_power(&crate::tensor::max_entangled_projector(d), 2).unwrap();
        let grouped = gamma2.reorder_subsystems(&[0, 2, 1, 3]).unwrap();
        // grouped is (A1, A2, B1, B2); twirl B's by sampling
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let samples = 20_000usize;
        let mut sum = DMatrix::<C64>::zeros(16, 16);
        let id4 = DMatrix::<C64>::identity(4, 4);
        for _ in 0..samples {
            let u = sample_haar(d, &mut rng);
            let w = id4.kronecker(&u.mat.kronecker(&u.mat));
            sum += &w * &grouped.mat * w.adjoint();
        }
        let mc = LabeledOperator::new(sum.scale(1.0 / samples as f64), vec![2, 2, 2, 2])
            .unwrap()
            .reorder_subsystems(&[0, 2, 1, 3])
            .unwrap();
        let exact = build_rn(2, 2).unwrap();
        let dev = max_abs_diff(&mc.mat, &exact.mat);
        assert!(dev < 0.05, "MC R_2 deviates {dev:.3e}");
    }

    #[test]
    fn rn_commutes_with_iid_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let d = 2;
        let n = 3;
        let rn = build_rn(d, n).unwrap();
        let u = sample_haar(d, &mut rng);
        let v = sample_haar(d, &mut rng);
        // interleaved (AB)^n: kron power of (U ⊗ V)
        let uv = u.mat.kronecker(&v.mat);
        let mut w = uv.clone();
        for _ in 1..n {
            w = w.kronecker(&uv);
        }
        let comm = &w * &rn.mat - &rn.mat * &w;
        let dev = LabeledOperator::new(comm, rn.dims.clone()).unwrap().norms().operator;
        assert!(dev < 1e-9, "commutator with U^{{⊗n}}⊗V^{{⊗n}}: {dev:.3e}");
    }

    #[test]
    fn rn_commutes_with_symmetric_factor_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let d = 2;
        let n = 3;
        let rn = build_rn(d, n).unwrap();
        let x = symmetrize(&random_hermitian(&[d, d, d], &mut rng)).unwrap();
        let y = symmetrize(&random_hermitian(&[d, d, d], &mut rng)).unwrap();
        // grouped X_{A^n} ⊗ Y_{B^n}, reordered to the interleaved slots of R_n
        let grouped = tensor_product(&[&x, &y]).unwrap();
        let perm: Vec<usize> = (0..n).flat_map(|i| [i, n + i]).collect();
        let xy = grouped.reorder_subsystems(&perm).unwrap();
        let comm = &xy.mat * &rn.mat - &rn.mat * &xy.mat;
        let dev = rn.with_same_dims(comm).norms().operator;
        assert!(dev < 1e-9, "commutator norm {dev:.3e}");
    }

    #[test]
    fn rn_invariant_under_simultaneous_permutation() {
        let d = 2;
        let n = 3;
        let rn = build_rn(d, n).unwrap();
        for p in Permutation::all(n) {
            // permute the AB pairs simultaneously: local dim d² per pair
            let pop = perm_operator(&p, d * d);
            let conj = &pop.mat * &rn.mat * pop.mat.adjoint();
            assert!(max_abs_diff(&conj, &rn.mat) < 1e-10);
        }
    }

    #[test]
    fn symmetrize_makes_symmetric_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let rho = random_density(&[2, 2, 2], &mut rng);
        let sym = symmetrize(rho.op()).unwrap();
        assert!(symmetry_defect(&sym).unwrap() < 1e-12);
        assert!((sym.trace().re - 1.0).abs() < 1e-12);
        let min = sym.herm_eig().unwrap().eigenvalues.last().copied().unwrap();
        assert!(min > -1e-12);
    }

    #[test]
    fn budget_refusals() {
        assert!(matches!(build_rn(2, 7), Err(Error::Budget(_))));
        assert!(matches!(
            build_rn_with_limit(3, 4, 4096),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn basis_rejects_mismatched_input() {
        let basis = TwirlBasis::new(2, 2).unwrap();
        let wrong = LabeledOperator::identity(&[4]);
        assert!(twirl_exact(&wrong, &basis).is_err());
        let x = LabeledOperator::identity(&[3, 2]);
        assert!(twirl_on_subsystems(&x, &[0], &TwirlBasis::new(2, 1).unwrap()).is_err());
    }

    #[test]
    fn dvector_gamma_norm() {
        let g = max_entangled_vec(3);
        assert!((DVector::norm(&g) - 3f64.sqrt()).abs() < 1e-14);
    }
}
