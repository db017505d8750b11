use alloc::vec::Vec;

use rand::Rng;

use super::walker::WalkerEnsemble;
use crate::error::{Error, Result};

/// Result of one reconfiguration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlOutcome {
    pub total_weight: f64,
    /// Weight carried by each surviving walker, `W / target_n`.
    pub factor: f64,
}

/// Stochastic comb: `target_n` evenly spaced teeth with a single random
/// offset select walkers in proportion to their weights. Survivors carry
/// weight `W / target_n`, so the total weight is preserved.
pub fn population_control<R: Rng + ?Sized>(ensemble: &mut WalkerEnsemble, target_n: usize, rng: &mut R) -> Result<ControlOutcome> {
    let total = ensemble.total_weight();
    if !(total >= 1e-300) || !total.is_finite() {
        return Err(Error::RunAbort(alloc::format!(
            "total walker weight {total:e} across {} walkers",
            ensemble.len()
        )));
    }
    if target_n == 0 {
        return Err(Error::InvalidArgument("population target must be positive".into()));
    }
    let spacing = total / target_n as f64;
    let offset: f64 = rng.random::<f64>();
    let mut next = Vec::with_capacity(target_n);
    let mut cum = 0.0;
    let mut tooth = 0usize;
    for w in &ensemble.walkers {
        cum += w.weight;
        while tooth < target_n && (tooth as f64 + offset) * spacing < cum {
            let mut copy = w.clone();
            copy.weight = spacing;
            next.push(copy);
            tooth += 1;
        }
    }
    // Round-off can leave the last teeth past the final cumulative sum.
    while next.len() < target_n {
        let last = ensemble.walkers.iter().rev().find(|w| w.weight > 0.0).unwrap();
        let mut copy = last.clone();
        copy.weight = spacing;
        next.push(copy);
    }
    ensemble.walkers = next;
    Ok(ControlOutcome { total_weight: total, factor: spacing })
}
