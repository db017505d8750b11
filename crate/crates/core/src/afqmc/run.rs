use alloc::vec::Vec;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::population::population_control;
use super::propagate::{propagate_step, Propagator, StepStats};
use super::reblock::{reblock, ReblockReport};
use super::trial::{energy_numerator, overlap, Trial};
use super::walker::{Walker, WalkerEnsemble};
use super::{mix_seed, AFQMCConfig};
use crate::determinant::Determinant;
use crate::error::{Error, Result};
use crate::math;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Weighted mixed-estimator energy of one block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockRecord {
    pub block: usize,
    pub energy: Complex64,
    /// Total walker weight at the block's last measurement.
    pub total_weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSeries {
    pub config: AFQMCConfig,
    pub blocks: Vec<BlockRecord>,
    pub trial_energy: f64,
    /// Mixed energy of the initial ensemble.
    pub initial_energy: f64,
    /// `W / N` recorded at every population control.
    pub population_factors: Vec<f64>,
    pub stats: StepStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesAnalysis {
    pub mean: f64,
    pub stderr: f64,
    pub n_discarded: usize,
    pub report: ReblockReport,
}

impl EstimatorSeries {
    pub fn energies(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.energy.re).collect()
    }

    /// Drops the leading `fraction` of blocks and reblocks the rest.
    pub fn analyze(&self, fraction: f64) -> Result<SeriesAnalysis> {
        let n_discarded = (fraction.clamp(0.0, 1.0) * self.blocks.len() as f64) as usize;
        let report = reblock(&self.energies()[n_discarded..])?;
        Ok(SeriesAnalysis { mean: report.mean, stderr: report.stderr, n_discarded, report })
    }
}

fn validate(config: &AFQMCConfig) -> Result<()> {
    let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
    if !(config.dtau > 0.0) || !config.dtau.is_finite() {
        return bad("dtau must be positive");
    }
    if config.n_walkers == 0 || config.steps_per_block == 0 || config.reortho_interval == 0 || config.measure_interval == 0 {
        return bad("walker count and step intervals must be positive");
    }
    if config.steps_per_block % config.measure_interval != 0 {
        return bad("steps_per_block must be a multiple of measure_interval");
    }
    if !(0.0..1.0).contains(&config.equilibration) {
        return bad("equilibration fraction must lie in [0, 1)");
    }
    Ok(())
}

/// Weighted mixed estimate `Σ w E_L / Σ w`; walkers whose overlap collapsed
/// are dropped.
fn measure(ensemble: &mut WalkerEnsemble, trial: &Trial) -> (Complex64, f64, u64) {
    let eval = |w: &Walker| -> Option<Complex64> {
        if w.weight <= 0.0 {
            return Some(ZERO);
        }
        let (ov, num) = energy_numerator(trial, w);
        let e = num / ov;
        if ov.norm() >= 1e-14 && math::is_finite_c(e) {
            Some(e)
        } else {
            None
        }
    };
    #[cfg(feature = "parallel")]
    let energies: Vec<Option<Complex64>> = {
        use rayon::prelude::*;
        ensemble.walkers.par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let energies: Vec<Option<Complex64>> = ensemble.walkers.iter().map(eval).collect();
    let mut num = ZERO;
    let mut den = 0.0;
    let mut killed = 0;
    for (w, e) in ensemble.walkers.iter_mut().zip(energies) {
        match e {
            Some(e) => {
                num += e * w.weight;
                den += w.weight;
            }
            None => {
                w.weight = 0.0;
                killed += 1;
            }
        }
    }
    (num, den, killed)
}

pub fn run_afqmc(trial: &Trial, config: &AFQMCConfig) -> Result<EstimatorSeries> {
    run_afqmc_with(trial, config, |_| {})
}

/// Runs the full protocol from an ensemble of RHF walkers (or walkers at
/// the trial's leading determinant when the trial is orthogonal to RHF). `on_block` sees
/// every block as soon as it completes, so callers can stream results
/// before a possible abort.
pub fn run_afqmc_with(
    trial: &Trial,
    config: &AFQMCConfig,
    mut on_block: impl FnMut(&BlockRecord),
) -> Result<EstimatorSeries> {
    validate(config)?;
    let prop = Propagator::new(trial, config.dtau);
    let rhf = Determinant::aufbau(trial.n_alpha, trial.n_beta);
    let mut start = Walker::from_determinant(&rhf, trial.norb);
    start.overlap = overlap(trial, &start);
    // Trials without an RHF component start from their leading determinant.
    if !(start.overlap.norm() >= 1e-10) {
        start = Walker::from_determinant(&trial.leading, trial.norb);
        start.overlap = overlap(trial, &start);
    }
    if !(start.overlap.norm() >= 1e-10) {
        return Err(Error::InvalidArgument("trial has no overlap with its starting determinant".into()));
    }
    let mut ensemble = WalkerEnsemble { walkers: alloc::vec![start; config.n_walkers] };
    let (num0, den0, _) = {
        let mut probe = WalkerEnsemble { walkers: alloc::vec![ensemble.walkers[0].clone()] };
        measure(&mut probe, trial)
    };
    let initial_energy = (num0 / den0).re;
    let mut e_shift = initial_energy;

    let mut series = EstimatorSeries {
        config: *config,
        blocks: Vec::with_capacity(config.n_blocks),
        trial_energy: trial.energy,
        initial_energy,
        population_factors: Vec::new(),
        stats: StepStats::default(),
    };
    let mut step: u64 = 0;
    for block in 0..config.n_blocks {
        let mut block_num = ZERO;
        let mut block_den = 0.0;
        let mut last_weight = 0.0;
        for _ in 0..config.steps_per_block {
            step += 1;
            let stats = propagate_step(&mut ensemble, trial, &prop, e_shift, config.seed, step);
            series.stats.merge(stats);
            if step % config.reortho_interval as u64 == 0 {
                for w in ensemble.walkers.iter_mut().filter(|w| w.weight > 0.0) {
                    let r = w.orthonormalize(trial.norb);
                    w.overlap /= r;
                }
            }
            if step % config.measure_interval as u64 == 0 {
                let (num, den, killed) = measure(&mut ensemble, trial);
                series.stats.killed += killed;
                if !(den >= 1e-300) {
                    return Err(Error::RunAbort(alloc::format!(
                        "total walker weight {den:e} at step {step} (block {block})"
                    )));
                }
                block_num += num;
                block_den += den;
                last_weight = den;
                e_shift = (num / den).re;
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, u64::MAX, step));
                let outcome = population_control(&mut ensemble, config.n_walkers, &mut rng)?;
                series.population_factors.push(outcome.factor);
            }
        }
        let record = BlockRecord { block, energy: block_num / block_den, total_weight: last_weight };
        on_block(&record);
        series.blocks.push(record);
    }
    Ok(series)
}
