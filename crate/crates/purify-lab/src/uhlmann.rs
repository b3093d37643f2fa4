//! Finite-n scans behind the extension-universality statement: any extension
//! of ρ_A is reachable from a purification by a channel on the purifying
//! system alone, and pushing the purification channel's output through that
//! channel yields reference states σ̃_n whose per-copy divergence against
//! ρ_AB^{⊗n} is floored by the single-system value 𝔻(ρ_A‖σ_A).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::convexity::DivKind;
use crate::divergence::{measured_bracket, sandwiched, umegaki, DivergenceValue};
use crate::error::{Error, Result};
use crate::purifier::{choi_of, cptp_of_choi, standard_purification, CptpReport, PurificationChannel};
use crate::tensor::{tensor_power, DensityState, LabeledOperator, SUPPORT_CLIP_REL};

/// Marginal agreement required between a purification and an extension.
pub const MARGINAL_TOL: f64 = 1e-8;
/// CP/TP certification tolerance for constructed channels.
pub const CHANNEL_TOL: f64 = 1e-9;
/// Gap floor: per-copy values may undershoot the baseline by at most this.
pub const GAP_TOL: f64 = 1e-8;
/// Dense-matrix budget for the scan states.
const SCAN_MAX_DIM: usize = 4096;

/// A channel ℰ: B → B′ acting on the purifying system only, held as Kraus
/// operators with its Choi operator (input slot first) alongside.
pub struct ExtensionChannel {
    choi: LabeledOperator,
    kraus: Vec<DMatrix<C64>>,
    d_in: usize,
    d_out: usize,
}

impl ExtensionChannel {
    fn from_kraus(kraus: Vec<DMatrix<C64>>, d_in: usize, d_out: usize) -> Result<Self> {
        if kraus.is_empty() || kraus.iter().any(|k| k.nrows() != d_out || k.ncols() != d_in) {
            return Err(Error::usage("Kraus operators must be d_out × d_in"));
        }
        let choi = choi_of(&[d_in], |x| {
            let mut acc = DMatrix::<C64>::zeros(d_out, d_out);
            for k in &kraus {
                acc += k * &x.mat * k.adjoint();
            }
            LabeledOperator::new(acc, vec![d_out])
        })?;
        let report = cptp_of_choi(&choi, 1)?;
        if report.cp_min_eig < -CHANNEL_TOL || report.tp_residual > CHANNEL_TOL {
            return Err(Error::Domain(format!(
                "constructed map is not a channel: min eig {:.3e}, TP residual {:.3e}",
                report.cp_min_eig, report.tp_residual
            )));
        }
        Ok(ExtensionChannel {
            choi,
            kraus,
            d_in,
            d_out,
        })
    }

    /// The channel that leaves the purifying system untouched.
    pub fn identity(d: usize) -> Result<Self> {
        Self::from_kraus(vec![DMatrix::identity(d, d)], d, d)
    }

    pub fn choi(&self) -> &LabeledOperator {
        &self.choi
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn cptp(&self) -> Result<CptpReport> {
        cptp_of_choi(&self.choi, 1)
    }

    /// Applies the channel to a single-system operator on B.
    pub fn apply(&self, x: &LabeledOperator) -> Result<LabeledOperator> {
        if x.dim() != self.d_in {
            return Err(Error::usage(format!(
                "channel input has dimension {}, expected {}",
                x.dim(),
                self.d_in
            )));
        }
        let mut acc = DMatrix::<C64>::zeros(self.d_out, self.d_out);
        for k in &self.kraus {
            acc += k * &x.mat * k.adjoint();
        }
        LabeledOperator::new(acc, vec![self.d_out])
    }

    /// Applies the channel to one subsystem of a multi-system operator.
    pub fn apply_to_slot(&self, x: &LabeledOperator, slot: usize) -> Result<LabeledOperator> {
        let dims = x.dims.clone();
        if slot >= dims.len() {
            return Err(Error::usage("slot index out of range"));
        }
        if dims[slot] != self.d_in {
            return Err(Error::usage(format!(
                "slot {slot} has dimension {}, channel expects {}",
                dims[slot], self.d_in
            )));
        }
        let pre: usize = dims[..slot].iter().product();
        let post: usize = dims[slot + 1..].iter().product();
        let id_pre = DMatrix::<C64>::identity(pre, pre);
        let id_post = DMatrix::<C64>::identity(post, post);
        let out_side = pre * self.d_out * post;
        let mut acc = DMatrix::<C64>::zeros(out_side, out_side);
        for k in &self.kraus {
            let full = id_pre.kronecker(k).kronecker(&id_post);
            acc += &full * &x.mat * full.adjoint();
        }
        let mut out_dims = dims;
        out_dims[slot] = self.d_out;
        LabeledOperator::new(acc, out_dims)
    }
}

/// One row of a per-copy divergence scan.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct GapRecord {
    pub n: usize,
    pub per_copy_value: f64,
    /// Single-system value 𝔻(ρ_A‖σ_A).
    pub baseline: f64,
    pub gap: f64,
    pub support_ok: bool,
}

/// Finite-n report for the measured-divergence chain.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ChainReport {
    pub alpha: f64,
    /// Certified lower edge of the measured bracket for (ρ_A, σ_A).
    pub base_lower: f64,
    /// Refined-pinching floor of the same bracket.
    pub base_pinching: f64,
    /// Sandwiched upper edge for (ρ_A, σ_A).
    pub base_upper: f64,
    /// Sandwiched upper edge for (ρ_AB, σ̃_1).
    pub lifted_upper: f64,
    /// (1/n)·D̃_α(ρ_AB^{⊗n}‖σ̃_n) for n = 1..n_max.
    pub per_copy: Vec<f64>,
    pub chain_ok: bool,
}

fn top_vector(projector: &LabeledOperator) -> Result<DVector<C64>> {
    let eig = projector.herm_eig()?;
    let top = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if (top - 1.0).abs() > 1e-8 {
        return Err(Error::usage(format!(
            "operator is not a unit rank-one projector: top eigenvalue {top}"
        )));
    }
    Ok(eig.eigenvectors.column(0).into_owned())
}

/// Sequential Gram-Schmidt: keeps the given vectors (re-orthonormalized in
/// order) and completes with the lowest-index standard basis vectors.
fn complete_frame(seed: Vec<DVector<C64>>, dim: usize) -> Result<Vec<DVector<C64>>> {
    let mut out: Vec<DVector<C64>> = Vec::with_capacity(dim);
    let absorb = |cand: DVector<C64>, out: &mut Vec<DVector<C64>>| -> bool {
        let mut w = cand;
        for u in out.iter() {
            let ip = u.dotc(&w);
            w -= u * ip;
        }
        let nrm = w.norm();
        if nrm > 1e-6 {
            out.push(w.map(|z| z / nrm));
            true
        } else {
            false
        }
    };
    for v in seed {
        if !absorb(v, &mut out) {
            return Err(Error::Domain(
                "purification frame vectors are numerically dependent".into(),
            ));
        }
    }
    let mut k = 0;
    while out.len() < dim && k < dim {
        let mut e = DVector::<C64>::zeros(dim);
        e[k] = C64::new(1.0, 0.0);
        absorb(e, &mut out);
        k += 1;
    }
    if out.len() != dim {
        return Err(Error::Domain("frame completion fell short".into()));
    }
    Ok(out)
}

/// Builds the channel on the purifying side that maps the given purification
/// ψ of ρ_A onto the given extension: (id_A ⊗ ℰ)(ψ) = ρ_AB. The two states
/// are matched through their A-side spectral decompositions; inside
/// degenerate blocks the construction is basis-independent, and off the
/// marginal's support the isometry is completed deterministically with the
/// lowest-index standard vectors.
pub fn find_extension_channel(
    psi: &DensityState,
    rho_ab: &DensityState,
) -> Result<ExtensionChannel> {
    if psi.dims().len() != 2 {
        return Err(Error::usage("purification must live on two systems (A, B)"));
    }
    if rho_ab.dims().len() != 2 {
        return Err(Error::usage("extension must live on two systems (A, B')"));
    }
    let (da, db) = (psi.dims()[0], psi.dims()[1]);
    let dbp = rho_ab.dims()[1];
    if rho_ab.dims()[0] != da {
        return Err(Error::usage("A dimensions disagree"));
    }
    let purity = (psi.mat() * psi.mat()).trace().re;
    if (purity - 1.0).abs() > 1e-8 {
        return Err(Error::usage(format!(
            "first argument must be pure, got purity {purity}"
        )));
    }
    let rho_a = psi.op().partial_trace(&[0])?;
    let other = rho_ab.op().partial_trace(&[0])?;
    let mismatch = rho_a.with_same_dims(&rho_a.mat - &other.mat).norms().trace;
    if mismatch > MARGINAL_TOL {
        return Err(Error::usage(format!(
            "A marginals differ by {mismatch:.3e} in trace norm"
        )));
    }

    let eig = rho_a.herm_eig()?;
    let pmax = eig.eigenvalues.first().copied().unwrap_or(0.0);
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&p| p > SUPPORT_CLIP_REL * pmax)
        .count();

    let psi_vec = top_vector(psi.op())?;
    let phi = standard_purification(rho_ab)?; // dims (A, B', A~, B'~)
    let phi_vec = top_vector(&phi)?;
    let denv = da * dbp;

    let mut b_side = Vec::with_capacity(rank);
    let mut c_side = Vec::with_capacity(rank);
    for i in 0..rank {
        let p = eig.eigenvalues[i];
        let a = eig.eigenvectors.column(i);
        let mut b = DVector::<C64>::zeros(db);
        for alpha in 0..da {
            let w = a[alpha].conj();
            for beta in 0..db {
                b[beta] += w * psi_vec[alpha * db + beta];
            }
        }
        let mut c = DVector::<C64>::zeros(dbp * denv);
        for alpha in 0..da {
            let w = a[alpha].conj();
            for gamma in 0..dbp * denv {
                c[gamma] += w * phi_vec[alpha * dbp * denv + gamma];
            }
        }
        let scale = 1.0 / p.sqrt();
        b_side.push(b.map(|z| z * scale));
        c_side.push(c.map(|z| z * scale));
    }

    let b_frame = complete_frame(b_side, db)?;
    let c_frame = complete_frame(c_side, dbp * denv)?;
    let mut v = DMatrix::<C64>::zeros(dbp * denv, db);
    for i in 0..db {
        v += &c_frame[i] * b_frame[i].adjoint();
    }
    // ℰ(X) = Tr_env(V X V†); slicing the environment index gives the Kraus set
    let kraus: Vec<DMatrix<C64>> = (0..denv)
        .map(|m| DMatrix::from_fn(dbp, db, |o, i| v[(o * denv + m, i)]))
        .collect();
    let ext = ExtensionChannel::from_kraus(kraus, db, dbp)?;

    let lifted = ext.apply_to_slot(psi.op(), 1)?;
    let residual = lifted
        .with_same_dims(&lifted.mat - rho_ab.mat())
        .norms()
        .trace;
    if residual > MARGINAL_TOL {
        return Err(Error::Domain(format!(
            "extension reconstruction missed by {residual:.3e} in trace norm"
        )));
    }
    Ok(ext)
}

/// σ̃_n: the purification channel's output on σ^{⊗n} with the extension
/// channel applied to every purifying slot; interleaved (A₁B′₁…AₙB′ₙ) order.
/// The construction never sees a divergence, so one state serves every scan.
pub fn optimizer_state(
    sigma: &DensityState,
    n: usize,
    ext: &ExtensionChannel,
) -> Result<DensityState> {
    if sigma.dims().len() != 1 {
        return Err(Error::usage("reference must be a single-system state"));
    }
    let d = sigma.dim();
    if ext.d_in() != d {
        return Err(Error::usage(format!(
            "extension channel expects input dimension {}, reference has {d}",
            ext.d_in()
        )));
    }
    let out_side = (d * ext.d_out()).checked_pow(n as u32);
    if out_side.filter(|&s| s <= SCAN_MAX_DIM).is_none() {
        return Err(Error::Budget(format!(
            "({}·{})^{n} exceeds the scan cap {SCAN_MAX_DIM}",
            d,
            ext.d_out()
        )));
    }
    let chan = PurificationChannel::with_limit(d, n, SCAN_MAX_DIM)?;
    let power = tensor_power(sigma.op(), n)?;
    let mut out = chan.apply(&power)?;
    for i in 0..n {
        out = ext.apply_to_slot(&out, 2 * i + 1)?;
    }
    DensityState::new(out)
}

fn score(kind: DivKind, alpha: f64, rho: &DensityState, sigma: &DensityState) -> Result<DivergenceValue> {
    match kind {
        DivKind::Umegaki => umegaki(rho, sigma),
        DivKind::Sandwiched => sandwiched(rho, sigma, alpha),
        DivKind::MeasuredLower => Err(Error::usage(
            "scans need a single divergence value; use measured_chain_check for the bracket",
        )),
    }
}

/// Per-copy divergence scan: (1/n)·𝔻(ρ_AB^{⊗n}‖σ̃_n) against the baseline
/// 𝔻(ρ_A‖σ_A) for n = 1..n_max, ascending. Infinite divergences are recorded
/// as infinite gaps with their support flag, not as errors.
pub fn gap_scan(
    rho_ab: &DensityState,
    sigma_a: &DensityState,
    n_max: usize,
    kind: DivKind,
    alpha: f64,
) -> Result<Vec<GapRecord>> {
    if n_max < 1 {
        return Err(Error::usage("scan needs n_max >= 1"));
    }
    let rho_a = DensityState::new(rho_ab.op().partial_trace(&[0])?)?;
    let psi = DensityState::new(standard_purification(&rho_a)?)?;
    let ext = find_extension_channel(&psi, rho_ab)?;
    let baseline = score(kind, alpha, &rho_a, sigma_a)?.value;
    let mut records = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let tilde = optimizer_state(sigma_a, n, &ext)?;
        let power = DensityState::new(tensor_power(rho_ab.op(), n)?)?;
        let val = score(kind, alpha, &power, &tilde)?;
        let per_copy_value = val.value / n as f64;
        let gap = if per_copy_value.is_infinite() {
            f64::INFINITY
        } else if baseline.is_infinite() {
            f64::NEG_INFINITY
        } else {
            per_copy_value - baseline
        };
        records.push(GapRecord {
            n,
            per_copy_value,
            baseline,
            gap,
            support_ok: val.support_ok,
        });
    }
    Ok(records)
}

/// Finite-n form of the measured-divergence sandwich: the certified lower
/// edge at the single-system pair must sit below the upper edge of the lifted
/// pair, and every per-copy sandwiched value must clear the lower edge.
pub fn measured_chain_check(
    rho_ab: &DensityState,
    sigma_a: &DensityState,
    alpha: f64,
    n_max: usize,
) -> Result<ChainReport> {
    if n_max < 1 {
        return Err(Error::usage("check needs n_max >= 1"));
    }
    let rho_a = DensityState::new(rho_ab.op().partial_trace(&[0])?)?;
    let psi = DensityState::new(standard_purification(&rho_a)?)?;
    let ext = find_extension_channel(&psi, rho_ab)?;
    let base = measured_bracket(&rho_a, sigma_a, alpha)?;

    let tilde1 = optimizer_state(sigma_a, 1, &ext)?;
    let lifted_upper = sandwiched(rho_ab, &tilde1, alpha)?.value;

    let mut per_copy = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let tilde = optimizer_state(sigma_a, n, &ext)?;
        let power = DensityState::new(tensor_power(rho_ab.op(), n)?)?;
        per_copy.push(sandwiched(&power, &tilde, alpha)?.value / n as f64);
    }
    let chain_ok = base.lower <= lifted_upper + GAP_TOL
        && per_copy.iter().all(|&v| v >= base.lower - GAP_TOL);
    Ok(ChainReport {
        alpha,
        base_lower: base.lower,
        base_pinching: base.pinching_value,
        base_upper: base.upper,
        lifted_upper,
        per_copy,
        chain_ok,
    })
}

/// Random extension of ρ_A on A⊗B′: a Haar-flavored bipartite state is bent
/// onto the prescribed marginal by the conjugation ρ_A^{1/2} τ_A^{-1/2} ⊗ 𝟙.
/// Draws whose A marginal is nearly singular are rejected and resampled.
pub fn random_extension(
    rho_a: &DensityState,
    d_out: usize,
    rng: &mut impl Rng,
) -> Result<DensityState> {
    if rho_a.dims().len() != 1 {
        return Err(Error::usage("marginal must be a single-system state"));
    }
    let d = rho_a.dim();
    let sqrt_rho = rho_a.op().mat_func(|lam| lam.max(0.0).sqrt(), true)?;
    for _ in 0..64 {
        let tau = crate::sample::random_density(&[d, d_out], rng);
        let tau_a = tau.op().partial_trace(&[0])?;
        let eig = tau_a.herm_eig()?;
        if eig.eigenvalues.last().copied().unwrap_or(0.0) < 1e-6 {
            continue;
        }
        let inv_sqrt = tau_a.mat_func(|lam| 1.0 / lam.sqrt(), false)?;
        let corr = (&sqrt_rho.mat * &inv_sqrt.mat).kronecker(&DMatrix::identity(d_out, d_out));
        let bent = &corr * tau.mat() * corr.adjoint();
        return DensityState::new(LabeledOperator::new(bent, vec![d, d_out])?);
    }
    Err(Error::Domain(
        "could not draw a full-rank extension marginal in 64 attempts".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::{sample_haar, symmetry_defect};
    use crate::purifier::twirled_copies;
    use crate::sample::{random_density, random_smoothed_density};
    use crate::tensor::tensor_product;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trace_gap(a: &LabeledOperator, b: &LabeledOperator) -> f64 {
        a.with_same_dims(&a.mat - &b.mat).norms().trace
    }

    #[test]
    fn self_extension_gives_identity_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rho = random_density(&[2], &mut rng);
        let psi = DensityState::new(standard_purification(&rho).unwrap()).unwrap();
        let ext = find_extension_channel(&psi, &psi).unwrap();
        let gamma = choi_of(&[2], |x| Ok(x.clone())).unwrap();
        assert!(trace_gap(ext.choi(), &gamma) < 1e-10);
        let rep = ext.cptp().unwrap();
        assert!(rep.cp_min_eig > -1e-11 && rep.tp_residual < 1e-11);
    }

    #[test]
    fn product_extension_gives_trace_and_replace() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let rho = random_density(&[2], &mut rng);
        let tau = random_density(&[3], &mut rng);
        let psi = DensityState::new(standard_purification(&rho).unwrap()).unwrap();
        let prod =
            DensityState::new(tensor_product(&[rho.op(), tau.op()]).unwrap()).unwrap();
        let ext = find_extension_channel(&psi, &prod).unwrap();
        let lifted = ext.apply_to_slot(psi.op(), 1).unwrap();
        assert!(trace_gap(&lifted, prod.op()) < 1e-9);
        let expect = tensor_product(&[&LabeledOperator::identity(&[2]), tau.op()]).unwrap();
        assert!(trace_gap(ext.choi(), &expect) < 1e-9);
    }

    #[test]
    fn random_extensions_are_reached() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for d_out in [2usize, 3] {
            for _ in 0..5 {
                let rho = random_density(&[2], &mut rng);
                let psi = DensityState::new(standard_purification(&rho).unwrap()).unwrap();
                let ext_state = random_extension(&rho, d_out, &mut rng).unwrap();
                let marg = ext_state.op().partial_trace(&[0]).unwrap();
                assert!(trace_gap(&marg, rho.op()) < 1e-12);
                let ext = find_extension_channel(&psi, &ext_state).unwrap();
                let lifted = ext.apply_to_slot(psi.op(), 1).unwrap();
                assert!(trace_gap(&lifted, ext_state.op()) < 1e-8);
                let rep = ext.cptp().unwrap();
                assert!(rep.cp_min_eig > -1e-9 && rep.tp_residual < 1e-9);
            }
        }
    }

    #[test]
    fn mismatched_marginals_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let rho = random_density(&[2], &mut rng);
        let other = random_density(&[2], &mut rng);
        let psi = DensityState::new(standard_purification(&rho).unwrap()).unwrap();
        let ext_state = random_extension(&other, 2, &mut rng).unwrap();
        assert!(matches!(
            find_extension_channel(&psi, &ext_state),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn optimizer_state_identity_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let sigma = random_density(&[2], &mut rng);
        let ext = ExtensionChannel::identity(2).unwrap();
        let tilde = optimizer_state(&sigma, 1, &ext).unwrap();
        let half = LabeledOperator::identity(&[2]).mat * C64::new(0.5, 0.0);
        let expect = tensor_product(&[
            sigma.op(),
            &LabeledOperator::new(half, vec![2]).unwrap(),
        ])
        .unwrap();
        assert!(trace_gap(tilde.op(), &expect) < 1e-12);
    }

    #[test]
    fn optimizer_state_membership_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let sigma = random_smoothed_density(&[2], 0.2, &mut rng);
        for (d_out, n_top) in [(2usize, 3usize), (3, 2)] {
            let rho = random_density(&[2], &mut rng);
            let ext_state = random_extension(&rho, d_out, &mut rng).unwrap();
            let psi = DensityState::new(standard_purification(&rho).unwrap()).unwrap();
            let ext = find_extension_channel(&psi, &ext_state).unwrap();
            for n in 1..=n_top {
                let tilde = optimizer_state(&sigma, n, &ext).unwrap();
                let a_slots: Vec<usize> = (0..n).map(|i| 2 * i).collect();
                let marg = tilde.op().partial_trace(&a_slots).unwrap();
                let expect = tensor_power(sigma.op(), n).unwrap();
                assert!(trace_gap(&marg, &expect) < 1e-9, "membership at n={n}");
                let paired =
                    LabeledOperator::new(tilde.mat().clone(), vec![2 * d_out; n]).unwrap();
                assert!(
                    symmetry_defect(&paired).unwrap() < 1e-9,
                    "symmetry at n={n}"
                );
            }
        }
    }

    #[test]
    fn optimizer_state_is_purification_choice_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let sigma = random_smoothed_density(&[2], 0.2, &mut rng);
        let rho = random_density(&[2], &mut rng);
        let ext_state = random_extension(&rho, 2, &mut rng).unwrap();
        let psi_rho = DensityState::new(standard_purification(&rho).unwrap()).unwrap();
        let ext = find_extension_channel(&psi_rho, &ext_state).unwrap();
        for n in [1usize, 2] {
            let direct = optimizer_state(&sigma, n, &ext).unwrap();
            // alternative route: twirl a rotated purification of σ, then push
            // every purifying slot through the channel
            let w = sample_haar(2, &mut rng);
            let psi_sigma = standard_purification(&sigma).unwrap();
            let rot = tensor_product(&[&LabeledOperator::identity(&[2]), &w]).unwrap();
            let rotated = psi_sigma.with_same_dims(&rot.mat * &psi_sigma.mat * rot.mat.adjoint());
            let mut alt = twirled_copies(&rotated, n).unwrap();
            for i in 0..n {
                alt = ext.apply_to_slot(&alt, 2 * i + 1).unwrap();
            }
            assert!(trace_gap(direct.op(), &alt) < 1e-9, "n={n}");
        }
    }

    #[test]
    fn optimizer_state_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let sigma = random_density(&[2], &mut rng);
        let rho = random_density(&[2], &mut rng);
        let ext_state = random_extension(&rho, 2, &mut rng).unwrap();
        let psi = DensityState::new(standard_purification(&rho).unwrap()).unwrap();
        let ext = find_extension_channel(&psi, &ext_state).unwrap();
        let a = optimizer_state(&sigma, 2, &ext).unwrap();
        let b = optimizer_state(&sigma, 2, &ext).unwrap();
        assert_eq!(a.mat(), b.mat());
    }

    #[test]
    fn pure_equal_pair_gap_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let sigma = random_smoothed_density(&[2], 0.3, &mut rng);
        let psi = DensityState::new(standard_purification(&sigma).unwrap()).unwrap();
        let records = gap_scan(&psi, &sigma, 3, DivKind::Umegaki, 1.0).unwrap();
        assert_eq!(records.len(), 3);
        assert!(records[0].baseline.abs() < 1e-10, "equal pair baseline");
        for r in &records {
            assert!(r.gap >= -GAP_TOL, "gap {} at n={}", r.gap, r.n);
            assert!(r.support_ok);
        }
        assert!(
            records[2].gap < records[0].gap,
            "per-copy gap should shrink: {} vs {}",
            records[2].gap,
            records[0].gap
        );
    }

    #[test]
    fn gap_floor_across_divergences() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let settings: Vec<(DivKind, f64)> = vec![
            (DivKind::Umegaki, 1.0),
            (DivKind::Sandwiched, 0.5),
            (DivKind::Sandwiched, 2.0),
            (DivKind::Sandwiched, f64::INFINITY),
        ];
        for _ in 0..6 {
            let rho_a = random_density(&[2], &mut rng);
            let rho_ab = random_extension(&rho_a, 2, &mut rng).unwrap();
            let sigma = random_smoothed_density(&[2], 0.15, &mut rng);
            for &(kind, alpha) in &settings {
                let records = gap_scan(&rho_ab, &sigma, 2, kind, alpha).unwrap();
                for r in &records {
                    assert!(
                        r.gap >= -GAP_TOL,
                        "gap {} at n={} kind {kind:?} alpha {alpha}",
                        r.gap,
                        r.n
                    );
                }
            }
        }
    }

    #[test]
    fn gap_scan_rejects_bracket_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let rho_a = random_density(&[2], &mut rng);
        let rho_ab = random_extension(&rho_a, 2, &mut rng).unwrap();
        let sigma = random_density(&[2], &mut rng);
        assert!(matches!(
            gap_scan(&rho_ab, &sigma, 1, DivKind::MeasuredLower, 2.0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn chain_trivial_instance_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let sigma = random_smoothed_density(&[2], 0.3, &mut rng);
        let psi = DensityState::new(standard_purification(&sigma).unwrap()).unwrap();
        let rep = measured_chain_check(&psi, &sigma, 2.0, 2).unwrap();
        assert!(rep.chain_ok);
        assert!(rep.base_lower.abs() < 1e-9);
        assert!(rep.base_upper.abs() < 1e-9);
    }

    #[test]
    fn chain_classical_extension_matches_oracle() {
        use crate::divergence::classical_renyi;
        let p = [0.62, 0.38];
        let q = [0.27, 0.73];
        let mut rho_mat = DMatrix::<C64>::zeros(4, 4);
        for (i, &pi) in p.iter().enumerate() {
            rho_mat[(i * 2 + i, i * 2 + i)] = C64::new(pi, 0.0);
        }
        let rho_ab =
            DensityState::new(LabeledOperator::new(rho_mat, vec![2, 2]).unwrap()).unwrap();
        let sigma = DensityState::new(
            LabeledOperator::new(
                DMatrix::from_diagonal(&DVector::from_vec(vec![
                    C64::new(q[0], 0.0),
                    C64::new(q[1], 0.0),
                ])),
                vec![2],
            )
            .unwrap(),
        )
        .unwrap();
        for alpha in [0.5, 2.0, 3.0] {
            let rep = measured_chain_check(&rho_ab, &sigma, alpha, 2).unwrap();
            let classical = classical_renyi(&p, &q, alpha).unwrap().value;
            assert!(rep.chain_ok, "alpha {alpha}");
            assert!((rep.base_lower - classical).abs() < 1e-9, "alpha {alpha}");
            assert!((rep.base_upper - classical).abs() < 1e-9, "alpha {alpha}");
        }
    }

    #[test]
    fn chain_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..5 {
            let rho_a = random_density(&[2], &mut rng);
            let rho_ab = random_extension(&rho_a, 2, &mut rng).unwrap();
            let sigma = random_smoothed_density(&[2], 0.15, &mut rng);
            let rep = measured_chain_check(&rho_ab, &sigma, 2.0, 2).unwrap();
            assert!(rep.chain_ok, "lower {} upper {}", rep.base_lower, rep.lifted_upper);
            assert!(rep.base_lower <= rep.base_upper + 1e-10);
        }
    }

    #[test]
    fn scan_budget_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let sigma = random_density(&[2], &mut rng);
        let ext = ExtensionChannel::identity(2).unwrap();
        assert!(matches!(
            optimizer_state(&sigma, 7, &ext),
            Err(Error::Budget(_))
        ));
    }
}
