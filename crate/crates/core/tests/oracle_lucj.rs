//! LUCJ construction, sampling, recovery and SQD against dense references.

mod common;

use common::*;
use detforge_core::determinant::{binomial, enumerate_space};
use detforge_core::lucj::{
    apply_jastrow, build_lucj_state, kl_divergence, lucj_dense, optimize_params, random_params,
    recover_configurations, sample_configurations, sqd_pipeline, subspace_from_configurations, LUCJParams,
    Objective, OptimizeOptions, SampleBatch, SqdOptions,
};
use detforge_core::sci::diagonalize;
use detforge_core::{CIWavefunction, Complex64, Determinant};
use detforge_oracle as oracle;

fn scaled(mut p: LUCJParams, s: f64) -> LUCJParams {
    for v in p.k1.iter_mut().chain(p.k2.iter_mut()).chain(p.j.iter_mut()) {
        *v *= s;
    }
    p
}

#[test]
fn lucj_matches_dense_exponentials() {
    let reference = Determinant::aufbau(2, 2);
    for seed in 0..4 {
        let p = scaled(random_params(4, seed), 0.1);
        let (basis, want) = oracle::dense_lucj(&p.k1, &p.k2, &p.j, 4, &reference);
        let state = lucj_dense(&p, &reference).unwrap();
        let got: Vec<(Determinant, Complex64)> = state.entries().collect();
        assert_eq!(got.len(), basis.len());
        for (d, z) in got {
            let i = basis.iter().position(|b| *b == d).unwrap();
            assert!((z - want[i]).norm() < 1e-9, "seed {seed}, {d:?}: {z} vs {}", want[i]);
        }
        assert!((state.norm_sqr() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn full_strength_parameters_stay_normalized() {
    let reference = Determinant::aufbau(5, 5);
    let p = random_params(8, 3);
    let s = build_lucj_state(&p, &reference, 8).unwrap();
    assert!((s.wavefunction.norm_sqr() - 1.0).abs() < 1e-10);
    let amps = s.amplitudes();
    let n: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    assert!((n - 1.0).abs() < 1e-10);
}

#[test]
fn jastrow_layer_changes_phases_only() {
    let reference = Determinant::aufbau(2, 2);
    let p = scaled(random_params(4, 9), 0.3);
    let mut state = lucj_dense(&p, &reference).unwrap();
    let before: Vec<f64> = state.c.iter().map(|z| z.norm()).collect();
    apply_jastrow(&mut state, &p.j);
    for (a, z) in before.iter().zip(&state.c) {
        assert!((a - z.norm()).abs() < 1e-14);
    }
}

fn four_determinant_state() -> CIWavefunction {
    let dets = vec![
        Determinant::new(0b0011, 0b0011),
        Determinant::new(0b0101, 0b0011),
        Determinant::new(0b0011, 0b1001),
        Determinant::new(0b1100, 0b1100),
    ];
    let w = [0.4f64, 0.3, 0.2, 0.1];
    let coeffs = w.iter().enumerate().map(|(i, x)| if i % 2 == 0 { x.sqrt() } else { -x.sqrt() }).collect();
    CIWavefunction::new(4, dets, coeffs)
}

#[test]
fn sampling_frequencies_follow_squared_amplitudes() {
    let psi = four_determinant_state();
    let n = 1_000_000;
    let batch = sample_configurations(&psi, n, 0.0, 17).unwrap();
    assert_eq!(batch.raw.len(), n);
    assert_eq!(batch.valid.len(), n);
    let counts = SampleBatch::counts(&batch.raw);
    assert_eq!(counts.len(), 4);
    let mut tv = 0.0;
    for (d, c) in counts {
        let p = psi.coefficient(&d).powi(2);
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((c as f64 - n as f64 * p).abs() < 4.0 * sigma, "{d:?}: {c}");
        tv += 0.5 * (c as f64 / n as f64 - p).abs();
    }
    assert!(tv < 0.005);
}

#[test]
fn bit_flip_validity_rate_matches_binomial_model() {
    let norb = 6;
    let psi = CIWavefunction::single(norb, Determinant::aufbau(3, 2));
    let p: f64 = 0.05;
    // per spin: equal numbers of 1→0 and 0→1 flips keep the count
    let keep = |k: usize| -> f64 {
        (0..=k.min(norb - k))
            .map(|j| {
                (binomial(k, j) * binomial(norb - k, j)) as f64
                    * p.powi(2 * j as i32)
                    * (1.0 - p).powi((norb - 2 * j) as i32)
            })
            .sum()
    };
    let expect = keep(3) * keep(2);
    let n = 200_000;
    let batch = sample_configurations(&psi, n, p, 5).unwrap();
    let got = batch.valid.len() as f64 / n as f64;
    let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
    assert!((got - expect).abs() < 4.0 * sigma, "{got} vs {expect}");
    let flipped: usize = batch
        .raw
        .iter()
        .map(|d| ((d.alpha ^ 0b111).count_ones() + (d.beta ^ 0b11).count_ones()) as usize)
        .sum();
    let rate = flipped as f64 / (n * 2 * norb) as f64;
    assert!((rate - p).abs() < 4.0 * (p * (1.0 - p) / (n * 2 * norb) as f64).sqrt());
}

#[test]
fn recovery_never_raises_the_subspace_energy() {
    let ints = fixture(N2);
    for seed in 0..5 {
        let params = scaled(random_params(8, 100 + seed), 0.2);
        let base = SqdOptions { n_samples: 300, flip_prob: 0.05, seed, ..Default::default() };
        let with = sqd_pipeline(&params, &ints, &SqdOptions { recover: true, ..base }).unwrap();
        let without = sqd_pipeline(&params, &ints, &SqdOptions { recover: false, ..base }).unwrap();
        assert!(with.energy <= without.energy + 1e-10, "seed {seed}: {} > {}", with.energy, without.energy);
    }
}

#[test]
fn recovered_strings_are_symmetry_valid() {
    let psi = four_determinant_state();
    let batch = sample_configurations(&psi, 5000, 0.1, 2).unwrap();
    let rec = recover_configurations(&batch, 2, 2, 0, 3).unwrap();
    assert_eq!(rec.recovered.len(), batch.raw.len());
    assert!(rec.recovered.iter().all(|d| d.n_alpha() == 2 && d.n_beta() == 2));
    for (r, d) in rec.recovered.iter().zip(&batch.raw) {
        if d.n_alpha() == 2 && d.n_beta() == 2 {
            assert_eq!(r, d);
        }
    }
}

#[test]
fn subspace_closure_is_string_product() {
    let configs = [Determinant::new(0b0011, 0b0101), Determinant::new(0b0110, 0b0011)];
    let space = subspace_from_configurations(&configs, 2, 2);
    assert_eq!(space.len(), 9);
    assert!(space.len() <= (2 * configs.len()).pow(2));
}

#[test]
fn sqd_limits() {
    let ints = fixture(H4);
    let (e_fci, _, _) = oracle::fci(&ints);
    let p = random_params(4, 1);
    let r = sqd_pipeline(&p, &ints, &SqdOptions { n_samples: 20_000, ..Default::default() }).unwrap();
    assert_eq!(r.dimension, 36);
    assert!((r.energy - e_fci).abs() < 1e-8);
    assert!(r.variance.variance.abs() < 1e-10);

    let hf = sqd_pipeline(&LUCJParams::zeros(4), &ints, &SqdOptions::default()).unwrap();
    assert_eq!(hf.dimension, 1);
    assert!((hf.energy - ints.hartree_fock_energy()).abs() < 1e-10);

    for seed in 0..5 {
        let p = scaled(random_params(4, seed), 0.05);
        let r = sqd_pipeline(&p, &ints, &SqdOptions { n_samples: 20, seed, ..Default::default() }).unwrap();
        assert!(r.energy >= e_fci - 1e-9);
        assert!(r.dimension <= 1600);
    }
}

#[test]
fn optimizer_contracts() {
    let ints = fixture(H4);
    let start = LUCJParams::zeros(4);
    let options = SqdOptions { n_samples: 50, ..Default::default() };
    let objective = Objective::SqdEnergy { ints: &ints, options };
    let none = optimize_params(&start, &objective, OptimizeOptions { budget: 0, ..Default::default() }).unwrap();
    assert_eq!(none.params, start);
    assert_eq!(none.evaluations, 0);

    let run = optimize_params(&start, &objective, OptimizeOptions { budget: 60, ..Default::default() }).unwrap();
    assert!(run.evaluations <= 60);
    assert!(run.value <= ints.hartree_fock_energy() + 1e-12);
    assert!(run.value <= run.initial_value);
    assert!(run.history.windows(2).all(|w| w[1] <= w[0]));

    let dets = enumerate_space(4, 2, 2).unwrap();
    let fci = diagonalize(&dets, &ints, 1, 1e-10).unwrap().ground_state().clone();
    let objective = Objective::KlToReference { reference: &fci, n_alpha: 2, n_beta: 2 };
    let kl0 = kl_divergence(&fci, &start, 2, 2).unwrap();
    let run = optimize_params(&start, &objective, OptimizeOptions { budget: 200, ..Default::default() }).unwrap();
    assert!((run.initial_value - kl0).abs() < 1e-12);
    assert!(run.value < kl0, "{} !< {kl0}", run.value);
}

#[test]
fn more_samples_do_not_hurt_on_median() {
    let ints = fixture(N2);
    let p = scaled(random_params(8, 77), 0.15);
    let median = |n: usize| {
        let mut e: Vec<f64> = (0..5)
            .map(|seed| sqd_pipeline(&p, &ints, &SqdOptions { n_samples: n, seed, ..Default::default() }).unwrap().energy)
            .collect();
        e.sort_by(f64::total_cmp);
        e[2]
    };
    let (a, b) = (median(10), median(200));
    assert!(b <= a + 1e-10, "{b} vs {a}");
}

#[test]
fn kl_optimizer_moves_toward_its_own_target() {
    let target = scaled(random_params(4, 21), 0.1);
    let reference = build_lucj_state(&target, &Determinant::aufbau(2, 2), 4).unwrap().wavefunction;
    assert!(kl_divergence(&reference, &target, 2, 2).unwrap().abs() < 1e-10);
    let mut start = target.clone();
    for v in start.k1.iter_mut() {
        *v *= 1.3;
    }
    let objective = Objective::KlToReference { reference: &reference, n_alpha: 2, n_beta: 2 };
    let run = optimize_params(&start, &objective, OptimizeOptions { budget: 150, initial_radius: 0.05, ..Default::default() }).unwrap();
    assert!(run.value < run.initial_value);
}
