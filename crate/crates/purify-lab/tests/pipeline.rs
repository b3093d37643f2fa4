//! End-to-end flows through the public API only: states travel through the
//! on-disk format, the channel, the divergence suite, and the scans.

use purify_lab::convexity::{definetti_check, DivKind, Ensemble};
use purify_lab::divergence::measured_bracket;
use purify_lab::matfile::{read_state, write_operator};
use purify_lab::purifier::verify_identity;
use purify_lab::sample::{random_density, random_smoothed_density};
use purify_lab::tensor::{tensor_power, DensityState};
use purify_lab::uhlmann::{gap_scan, measured_chain_check, random_extension};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn temp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("purify-lab-pipeline-{tag}"));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn defining_identity_holds_at_small_sizes() {
    for (d, n) in [(2usize, 1usize), (2, 2), (3, 1)] {
        let report = verify_identity(d, n, 11, 1e-9).unwrap();
        assert!(report.pass, "d={d} n={n}: {report:?}");
    }
}

#[test]
fn states_survive_disk_and_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let dir = temp_dir("scan");
    let rho_a = random_density(&[2], &mut rng);
    let rho_ab = random_extension(&rho_a, 2, &mut rng).unwrap();
    let sigma = random_smoothed_density(&[2], 0.2, &mut rng);

    let rho_path = dir.join("rho_ab.mat");
    let sigma_path = dir.join("sigma.mat");
    write_operator(&rho_path, rho_ab.op()).unwrap();
    write_operator(&sigma_path, sigma.op()).unwrap();
    let rho_back = read_state(&rho_path).unwrap();
    let sigma_back = read_state(&sigma_path).unwrap();
    assert_eq!(rho_back.mat(), rho_ab.mat());

    let records = gap_scan(&rho_back, &sigma_back, 2, DivKind::Umegaki, 1.0).unwrap();
    assert_eq!(records.len(), 2);
    for r in &records {
        assert!(r.gap >= -1e-8, "gap {} at n={}", r.gap, r.n);
    }

    let chain = measured_chain_check(&rho_back, &sigma_back, 2.0, 2).unwrap();
    assert!(chain.chain_ok);

    std::fs::remove_file(&rho_path).ok();
    std::fs::remove_file(&sigma_path).ok();
}

#[test]
fn bracket_and_definetti_agree_on_shared_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let sigma = random_smoothed_density(&[2], 0.25, &mut rng);
    let sigma2 = DensityState::new(tensor_power(sigma.op(), 2).unwrap()).unwrap();

    let members: Vec<(f64, DensityState)> = (0..12)
        .map(|_| {
            let rho = random_density(&[2], &mut rng);
            (
                1.0 / 12.0,
                DensityState::new(tensor_power(rho.op(), 2).unwrap()).unwrap(),
            )
        })
        .collect();
    let ens = Ensemble::new(members).unwrap();
    let report = definetti_check(&ens, &sigma2, DivKind::Sandwiched, 2.0).unwrap();
    assert!(report.pass(), "margin {}", report.margin);
    assert!(report.n_members <= 11);

    let mix = ens.mixture().unwrap();
    let bracket = measured_bracket(&mix, &sigma2, 2.0).unwrap();
    assert!(bracket.lower <= bracket.upper + 1e-9);
}
