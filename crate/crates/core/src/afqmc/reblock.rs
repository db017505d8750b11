use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Minimum series length accepted by [`reblock`].
pub const MIN_BLOCKS: usize = 16;

/// Statistics at one pair-averaging level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReblockLevel {
    pub block_size: usize,
    pub n_blocks: usize,
    pub mean: f64,
    pub stderr: f64,
    /// Uncertainty of `stderr` itself.
    pub stderr_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReblockReport {
    pub levels: Vec<ReblockLevel>,
    /// Plateau level: smallest `B` with `B³ > 2N (σ_B/σ_1)⁴`.
    pub optimal: usize,
    /// Whether some level met the plateau criterion.
    pub converged: bool,
    /// Among levels meeting the criterion (all levels when none does), the
    /// one whose truncated mean is lowest.
    pub lowest_energy: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Flyvbjerg–Petersen reblocking by successive pair averaging.
pub fn reblock(series: &[f64]) -> Result<ReblockReport> {
    if series.len() < MIN_BLOCKS {
        return Err(Error::InsufficientData { needed: MIN_BLOCKS, got: series.len() });
    }
    let n0 = series.len() as f64;
    let mut data = series.to_vec();
    let mut levels = Vec::new();
    let mut size = 1;
    while data.len() >= 2 {
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let stderr = math::sqrt(var / n);
        levels.push(ReblockLevel {
            block_size: size,
            n_blocks: data.len(),
            mean,
            stderr,
            stderr_error: stderr / math::sqrt(2.0 * (n - 1.0)),
        });
        data = data.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        size *= 2;
    }
    let se0 = levels[0].stderr;
    let qualifies = |l: &ReblockLevel| {
        if se0 == 0.0 {
            return true;
        }
        let b = l.block_size as f64;
        let ratio = l.stderr / se0;
        b * b * b > 2.0 * n0 * ratio * ratio * ratio * ratio
    };
    let first = levels.iter().position(qualifies);
    let converged = first.is_some();
    let optimal = first.unwrap_or(levels.len() - 1);
    let candidates: Vec<usize> = if converged {
        (0..levels.len()).filter(|&i| qualifies(&levels[i])).collect()
    } else {
        (0..levels.len()).collect()
    };
    let lowest_energy = candidates
        .into_iter()
        .min_by(|&a, &b| levels[a].mean.total_cmp(&levels[b].mean).then(a.cmp(&b)))
        .unwrap();
    let mean = series.iter().sum::<f64>() / n0;
    let stderr = levels[optimal].stderr;
    Ok(ReblockReport { levels, optimal, converged, lowest_energy, mean, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series() {
        let r = reblock(&[2.5; 64]).unwrap();
        assert!(r.levels.iter().all(|l| l.stderr == 0.0));
        assert_eq!(r.mean, 2.5);
    }

    #[test]
    fn too_short() {
        assert!(matches!(reblock(&[1.0; 15]), Err(Error::InsufficientData { needed: 16, got: 15 })));
    }
}
