//! Phaseless auxiliary-field QMC with multi-determinant CI trials.
//!
//! The two-body operator is factorized with Cholesky vectors `L^γ`,
//! `½ Σ_γ L̂_γ²`, and each factor is sampled with a Hubbard–Stratonovich
//! field `v̂_γ = i L̂_γ`. Walkers are complex non-orthogonal Slater
//! determinants; weights follow the hybrid update with the phaseless
//! projection `max(0, cos Δθ)`.

mod population;
mod propagate;
mod reblock;
mod run;
mod trial;
mod walker;

pub use population::{population_control, ControlOutcome};
pub use propagate::{propagate_step, Propagator, StepStats};
pub use reblock::{reblock, ReblockLevel, ReblockReport};
pub use run::{run_afqmc, run_afqmc_with, BlockRecord, EstimatorSeries, SeriesAnalysis};
pub use trial::{local_energy, overlap, prepare_trial, Trial};
pub use walker::{Walker, WalkerEnsemble};

/// Run parameters. Defaults follow the production settings: Δτ = 0.005 Ha⁻¹,
/// 20-step blocks, re-orthonormalization every 2 steps and measurement plus
/// population control every 20 steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AFQMCConfig {
    pub dtau: f64,
    pub n_walkers: usize,
    pub n_blocks: usize,
    pub steps_per_block: usize,
    pub reortho_interval: usize,
    pub measure_interval: usize,
    pub chol_cutoff: f64,
    pub seed: u64,
    /// Fraction of leading blocks dropped before analysis.
    pub equilibration: f64,
}

impl Default for AFQMCConfig {
    fn default() -> Self {
        Self {
            dtau: 0.005,
            n_walkers: 2048,
            n_blocks: 1000,
            steps_per_block: 20,
            reortho_interval: 2,
            measure_interval: 20,
            chol_cutoff: 1e-12,
            seed: 0,
            equilibration: 0.1,
        }
    }
}

/// Deterministic 64-bit mixer for per-walker seed streams.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed;
    for v in [a, b] {
        z ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(z << 6).wrapping_add(z >> 2);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}
