//! Phaseless AFQMC: trial evaluation against dense expansions, propagation
//! limits, population control and run-level statistics.

mod common;

use common::*;
use detforge_core::afqmc::{
    local_energy, overlap, population_control, prepare_trial, propagate_step, run_afqmc, AFQMCConfig, Propagator,
    Trial, Walker, WalkerEnsemble,
};
use detforge_core::determinant::enumerate_space;
use detforge_core::hamiltonian::cholesky_decompose;
use detforge_core::sci::{diagonalize, truncate_by_weight};
use detforge_core::{CIWavefunction, Complex64, Determinant, Integrals};
use detforge_oracle as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trial_for(psi: &CIWavefunction, ints: &Integrals) -> Trial {
    let chol = cholesky_decompose(ints, 1e-12).unwrap();
    prepare_trial(psi, ints, &chol).unwrap()
}

fn fci_state(ints: &Integrals) -> (f64, CIWavefunction) {
    let dets = enumerate_space(ints.norb, ints.nelec_alpha, ints.nelec_beta).unwrap();
    let d = diagonalize(&dets, ints, 1, 1e-10).unwrap();
    (d.ground_energy(), d.ground_state().clone())
}

fn rhf_state(ints: &Integrals) -> CIWavefunction {
    CIWavefunction::single(ints.norb, Determinant::aufbau(ints.nelec_alpha, ints.nelec_beta))
}

fn random_walker(norb: usize, na: usize, nb: usize, rng: &mut ChaCha8Rng) -> Walker {
    let mut block = |n: usize| -> Vec<Complex64> {
        (0..norb * n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    };
    let (a, b) = (block(na), block(nb));
    Walker::from_orbitals(a, b)
}

fn quick(n_walkers: usize, n_blocks: usize, seed: u64) -> AFQMCConfig {
    AFQMCConfig { n_walkers, n_blocks, seed, ..Default::default() }
}

#[test]
fn overlap_equals_minor_expansion() {
    let ints = fixture(H4);
    let (_, fci) = fci_state(&ints);
    let trial = trial_for(&fci, &ints);
    let basis = oracle::basis(4, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let w = random_walker(4, 2, 2, &mut rng);
        let expansion = oracle::expand_walker(&w.phi[0], &w.phi[1], 4, &basis);
        let want: Complex64 = basis.iter().zip(&expansion).map(|(d, x)| x * fci.coefficient(d)).sum();
        let got = overlap(&trial, &w);
        assert!((got - want).norm() < 1e-12 * (1.0 + want.norm()), "{got} vs {want}");
    }
}

#[test]
fn trivial_overlaps() {
    let ints = fixture(H4);
    let trial = trial_for(&rhf_state(&ints), &ints);
    let rhf = Walker::from_determinant(&Determinant::aufbau(2, 2), 4);
    assert!((overlap(&trial, &rhf) - 1.0).norm() < 1e-14);
    let other = Walker::from_determinant(&Determinant::new(0b1100, 0b1100), 4);
    assert_eq!(overlap(&trial, &other).norm(), 0.0);
    assert!(local_energy(&trial, &other).is_err());
}

#[test]
fn local_energy_matches_dense_expansion() {
    for (name, ndet) in [(H4, 2), (H4, 12), (H2O, 40)] {
        let ints = fixture(name);
        let (_, fci) = fci_state(&ints);
        let mut psi = fci.clone();
        psi.sort_by_weight();
        let mut psi = CIWavefunction::new(psi.norb, psi.dets[..ndet].to_vec(), psi.coeffs[..ndet].to_vec());
        psi.normalize();
        let trial = trial_for(&psi, &ints);
        let (basis, h) = oracle::dense_hamiltonian(&ints);
        let mut rng = ChaCha8Rng::seed_from_u64(ndet as u64);
        for _ in 0..4 {
            let w = random_walker(ints.norb, ints.nelec_alpha, ints.nelec_beta, &mut rng);
            let x = oracle::expand_walker(&w.phi[0], &w.phi[1], ints.norb, &basis);
            let want = oracle::dense_local_energy(&h, &basis, &psi.dets, &psi.coeffs, &x);
            let got = local_energy(&trial, &w).unwrap();
            assert!((got - want).norm() < 1e-8, "{name}/{ndet}: {got} vs {want}");
        }
    }
}

#[test]
fn zero_variance_and_hf_limits_of_local_energy() {
    let ints = fixture(H2);
    let (e_fci, fci) = fci_state(&ints);
    let trial = trial_for(&fci, &ints);
    assert!((trial.energy - e_fci).abs() < 1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let w = random_walker(2, 1, 1, &mut rng);
        let e = local_energy(&trial, &w).unwrap();
        assert!((e - e_fci).norm() < 1e-8);
    }
    for name in [H2, H4, H2O, N2] {
        let ints = fixture(name);
        let trial = trial_for(&rhf_state(&ints), &ints);
        let w = Walker::from_determinant(&Determinant::aufbau(ints.nelec_alpha, ints.nelec_beta), ints.norb);
        let e = local_energy(&trial, &w).unwrap();
        assert!((e.re - ints.hartree_fock_energy()).abs() < 1e-10 && e.im.abs() < 1e-12, "{name}");
        assert!((trial.energy - ints.hartree_fock_energy()).abs() < 1e-10);
    }
}

fn ensemble(weights: &[f64]) -> WalkerEnsemble {
    let walkers = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let mut x = Walker::from_determinant(&Determinant::aufbau(1, 1), 2);
            x.overlap = Complex64::new(i as f64, 0.0);
            x.weight = w;
            x
        })
        .collect();
    WalkerEnsemble { walkers }
}

fn tags(e: &WalkerEnsemble) -> Vec<usize> {
    e.walkers.iter().map(|w| w.overlap.re as usize).collect()
}

#[test]
fn population_control_comb() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut e = ensemble(&[0.7; 6]);
    let out = population_control(&mut e, 6, &mut rng).unwrap();
    let mut t = tags(&e);
    t.sort();
    assert_eq!(t, vec![0, 1, 2, 3, 4, 5]);
    assert!((out.factor - 0.7).abs() < 1e-15);

    let mut e = ensemble(&[2.0, 0.0, 0.0, 0.0]);
    population_control(&mut e, 4, &mut rng).unwrap();
    assert_eq!(tags(&e), vec![0; 4]);
    assert!(e.walkers.iter().all(|w| (w.weight - 0.5).abs() < 1e-15));

    assert!(population_control(&mut ensemble(&[0.0, 0.0]), 2, &mut rng).is_err());
}

#[test]
fn population_control_is_unbiased() {
    let weights = [0.1, 1.7, 0.4, 2.2, 0.05, 0.9, 1.3];
    let total: f64 = weights.iter().sum();
    let n = 5;
    let trials = 10_000;
    let mut copies = [0usize; 7];
    let mut weight_after = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..trials {
        let mut e = ensemble(&weights);
        population_control(&mut e, n, &mut rng).unwrap();
        assert_eq!(e.walkers.len(), n);
        weight_after += e.total_weight();
        for t in tags(&e) {
            copies[t] += 1;
        }
    }
    assert!((weight_after / trials as f64 - total).abs() < 0.01 * total);
    for (i, &c) in copies.iter().enumerate() {
        let expect = weights[i] / total * n as f64;
        let got = c as f64 / trials as f64;
        assert!((got - expect).abs() < 0.01 * n as f64, "walker {i}: {got} vs {expect}");
    }
}

#[test]
fn one_body_limit_is_power_iteration() {
    let src = fixture(H4);
    let mut ints = Integrals::zeros(4, 2, 2);
    ints.e_core = src.e_core;
    for p in 0..4 {
        for q in 0..4 {
            ints.set_h(p, q, src.h(p, q));
        }
    }
    let chol = cholesky_decompose(&ints, 1e-12).unwrap();
    assert!(chol.is_empty());
    let trial = prepare_trial(&rhf_state(&ints), &ints, &chol).unwrap();
    let h = nalgebra::DMatrix::from_fn(4, 4, |p, q| ints.h(p, q));
    let mut eig: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let exact = ints.e_core + 2.0 * (eig[0] + eig[1]);
    let cfg = AFQMCConfig { n_walkers: 3, n_blocks: 60, dtau: 0.05, ..Default::default() };
    let a = run_afqmc(&trial, &cfg).unwrap();
    let b = run_afqmc(&trial, &AFQMCConfig { seed: 99, ..cfg }).unwrap();
    // no fields to sample: the seed must not matter
    assert_eq!(a.energies(), b.energies());
    let last = a.blocks.last().unwrap().energy;
    assert!((last.re - exact).abs() < 1e-8 && last.im.abs() < 1e-10, "{last} vs {exact}");
}

#[test]
fn exact_trial_is_zero_variance_at_every_step() {
    let ints = fixture(H2);
    let (e_fci, fci) = fci_state(&ints);
    let trial = trial_for(&fci, &ints);
    let prop = Propagator::new(&trial, 0.005);
    let mut w = Walker::from_determinant(&Determinant::aufbau(1, 1), 2);
    w.overlap = overlap(&trial, &w);
    let mut ens = WalkerEnsemble { walkers: vec![w; 64] };
    for step in 1..=200u64 {
        let stats = propagate_step(&mut ens, &trial, &prop, e_fci, 5, step);
        assert_eq!(stats.truncated, 0);
        assert_eq!(stats.killed, 0);
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for w in &ens.walkers {
            assert!(w.weight > 0.0);
            num += local_energy(&trial, w).unwrap() * w.weight;
            den += w.weight;
        }
        assert!((num / den - e_fci).norm() < 1e-8, "step {step}");
    }
    let run = run_afqmc(&trial, &quick(128, 20, 1)).unwrap();
    assert!(run.blocks.iter().all(|b| (b.energy - e_fci).norm() < 1e-8));
    assert_eq!(run.stats.truncated + run.stats.killed, 0);
}

#[test]
fn reorthonormalization_leaves_mixed_estimator_unchanged() {
    let ints = fixture(H2O);
    let (_, fci) = fci_state(&ints);
    let psi = truncate_by_weight(&fci, 0.9);
    let trial = trial_for(&psi, &ints);
    let prop = Propagator::new(&trial, 0.005);
    let mut w = Walker::from_determinant(&Determinant::aufbau(5, 5), 7);
    w.overlap = overlap(&trial, &w);
    let mut ens = WalkerEnsemble { walkers: vec![w; 16] };
    for step in 1..=30 {
        propagate_step(&mut ens, &trial, &prop, trial.energy, 2, step);
    }
    let mixed = |e: &WalkerEnsemble| -> Complex64 {
        let (mut n, mut d) = (Complex64::new(0.0, 0.0), 0.0);
        for w in e.walkers.iter().filter(|w| w.weight > 0.0) {
            n += local_energy(&trial, w).unwrap() * w.weight;
            d += w.weight;
        }
        n / d
    };
    let before = mixed(&ens);
    for w in ens.walkers.iter_mut() {
        let r = w.orthonormalize(7);
        w.overlap /= r;
        assert!((w.overlap - overlap(&trial, w)).norm() < 1e-10 * w.overlap.norm());
    }
    assert!((mixed(&ens) - before).norm() < 1e-10);
}

#[test]
fn identical_seeds_give_identical_series() {
    let ints = fixture(H4);
    let trial = trial_for(&rhf_state(&ints), &ints);
    let a = run_afqmc(&trial, &quick(64, 6, 11)).unwrap();
    let b = run_afqmc(&trial, &quick(64, 6, 11)).unwrap();
    let bits = |s: &detforge_core::afqmc::EstimatorSeries| -> Vec<(u64, u64, u64)> {
        s.blocks.iter().map(|b| (b.energy.re.to_bits(), b.energy.im.to_bits(), b.total_weight.to_bits())).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    let c = run_afqmc(&trial, &quick(64, 6, 12)).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

fn timestep_pair(n_walkers: usize, n_blocks: usize) -> (f64, f64, f64) {
    let ints = fixture(H4);
    let trial = trial_for(&rhf_state(&ints), &ints);
    // equal imaginary time per block at both step sizes
    let run = |dtau: f64, steps: usize| {
        let cfg = AFQMCConfig { dtau, steps_per_block: steps, measure_interval: 2, ..quick(n_walkers, n_blocks, 3) };
        run_afqmc(&trial, &cfg).unwrap().analyze(0.25).unwrap()
    };
    let a = run(0.005, 20);
    let b = run(0.0025, 40);
    (a.mean, b.mean, a.stderr.hypot(b.stderr))
}

#[test]
fn timestep_halving_changes_energy_below_one_millihartree() {
    let (a, b, sigma) = timestep_pair(256, 120);
    assert!((a - b).abs() < 1e-3 + 2.0 * sigma, "{a} vs {b} ± {sigma}");
}

/// Resolves the difference below 0.3 mHa; about fifteen minutes on one core.
#[test]
#[ignore]
fn timestep_halving_resolved() {
    let (a, b, sigma) = timestep_pair(1024, 1600);
    assert!(sigma < 3e-4, "statistical error {sigma}");
    assert!((a - b).abs() < 1e-3, "{a} vs {b}");
}

#[test]
fn walker_counts_are_statistically_compatible() {
    let ints = fixture(H2);
    let (e_fci, _) = fci_state(&ints);
    let trial = trial_for(&rhf_state(&ints), &ints);
    let small = run_afqmc(&trial, &quick(2048, 300, 1)).unwrap().analyze(0.1).unwrap();
    let large = run_afqmc(&trial, &quick(20480, 60, 2)).unwrap().analyze(0.5).unwrap();
    let sigma = small.stderr.hypot(large.stderr);
    assert!((small.mean - large.mean).abs() <= 2.0 * sigma, "{} ± {} vs {} ± {}", small.mean, small.stderr, large.mean, large.stderr);
    assert!((large.mean - e_fci).abs() < 1e-3 + 2.0 * large.stderr);
}

#[test]
fn truncated_fci_trial_on_stretched_n2() {
    let ints = fixture(N2_STRETCHED);
    let (e_fci, fci) = fci_state(&ints);
    let psi = truncate_by_weight(&fci, 0.995);
    let trial = trial_for(&psi, &ints);
    let a = run_afqmc(&trial, &quick(512, 60, 7)).unwrap().analyze(0.1).unwrap();
    assert!((a.mean - e_fci).abs() < 2e-3, "{} vs {e_fci} ± {}", a.mean, a.stderr);
}

#[test]
fn better_trials_do_not_give_worse_energies() {
    let ints = fixture(N2);
    let (e_fci, fci) = fci_state(&ints);
    let mut last: Option<(f64, f64)> = None;
    for w in [0.5, 0.7, 0.9, 0.995] {
        let trial = trial_for(&truncate_by_weight(&fci, w), &ints);
        let mut runs: Vec<(f64, f64)> = (0..5)
            .map(|seed| {
                let a = run_afqmc(&trial, &AFQMCConfig { measure_interval: 2, ..quick(128, 50, seed) }).unwrap().analyze(0.4).unwrap();
                ((a.mean - e_fci).abs(), a.stderr)
            })
            .collect();
        runs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let (err, sd) = runs[2];
        if let Some((prev, prev_sd)) = last {
            assert!(err <= prev + 2.0 * sd.hypot(prev_sd), "weight {w}: {err} after {prev}");
        }
        last = Some((err, sd));
    }
}
