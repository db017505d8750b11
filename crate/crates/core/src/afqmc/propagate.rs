use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::trial::{mixed_green, overlap, real_times_block, Trial};
use super::walker::{Walker, WalkerEnsemble};
use super::mix_seed;
use crate::linalg::expm;
use crate::math;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Order of the Taylor expansion of `exp(V_HS)`.
const TAYLOR_ORDER: usize = 6;

/// Step-independent propagation data: the mean-field shifted one-body
/// operator `h₁ = h − ½ Σ_γ L^γ L^γ + Σ_γ l_γ L^γ`, its half-step
/// exponential and the scalar constant `−½ Σ_γ l_γ²`.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub dtau: f64,
    pub mean_field: Vec<f64>,
    pub mf_constant: f64,
    pub h1: Vec<f64>,
    half_step: Vec<f64>,
}

impl Propagator {
    pub fn new(trial: &Trial, dtau: f64) -> Self {
        let n = trial.norb;
        let occ: Vec<usize> = trial.leading.occupied_alpha().into_iter().chain(trial.leading.occupied_beta()).collect();
        let mean_field: Vec<f64> = trial.chol.iter().map(|l| occ.iter().map(|&p| l[p * n + p]).sum()).collect();
        let mut h1 = trial.h.clone();
        for (l, &lg) in trial.chol.iter().zip(&mean_field) {
            for p in 0..n {
                for q in 0..n {
                    let ll: f64 = (0..n).map(|r| l[p * n + r] * l[r * n + q]).sum();
                    h1[p * n + q] += lg * l[p * n + q] - 0.5 * ll;
                }
            }
        }
        let mf_constant = -0.5 * mean_field.iter().map(|x| x * x).sum::<f64>();
        let scaled: Vec<f64> = h1.iter().map(|x| -0.5 * dtau * x).collect();
        let half_step = expm(&scaled, n);
        Self { dtau, mean_field, mf_constant, h1, half_step }
    }
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    /// Walkers whose weight became non-finite or whose overlap collapsed.
    pub killed: u64,
    /// Walkers zeroed by the phaseless projection (`cos Δθ ≤ 0`).
    pub truncated: u64,
    pub max_abs_dtheta: f64,
}

impl StepStats {
    pub(crate) fn merge(&mut self, other: StepStats) {
        self.killed += other.killed;
        self.truncated += other.truncated;
        self.max_abs_dtheta = self.max_abs_dtheta.max(other.max_abs_dtheta);
    }
}

fn apply_real(a: &[f64], phi: &mut Vec<Complex64>, norb: usize, n: usize) {
    *phi = real_times_block(a, phi, norb, n);
}

fn apply_taylor(v: &[Complex64], phi: &mut [Complex64], norb: usize, n: usize) {
    let mut term = phi.to_vec();
    let mut next = vec![ZERO; norb * n];
    for k in 1..=TAYLOR_ORDER {
        let inv_k = 1.0 / k as f64;
        for x in next.iter_mut() {
            *x = ZERO;
        }
        for p in 0..norb {
            for q in 0..norb {
                let vpq = v[p * norb + q];
                if vpq == ZERO {
                    continue;
                }
                for j in 0..n {
                    next[p * n + j] += vpq * term[q * n + j];
                }
            }
        }
        for (t, (x, o)) in term.iter_mut().zip(next.iter().zip(phi.iter_mut())) {
            *t = x * inv_k;
            *o += *t;
        }
    }
}

fn kill(walker: &mut Walker) -> StepStats {
    walker.weight = 0.0;
    StepStats { killed: 1, ..StepStats::default() }
}

/// One importance-sampled step of a single walker.
pub(crate) fn step_walker(
    walker: &mut Walker,
    trial: &Trial,
    prop: &Propagator,
    e_shift: f64,
    rng_seed: u64,
) -> StepStats {
    if walker.weight <= 0.0 {
        return StepStats::default();
    }
    let norb = trial.norb;
    let dt = prop.dtau;
    let sdt = math::sqrt(dt);
    let (ov, greens) = mixed_green(trial, walker);
    if !(ov.norm() >= 1e-14) || !math::is_finite_c(ov) {
        return kill(walker);
    }
    let cap = 1.0 / sdt;
    let nchol = trial.chol.len();
    let gsum: Vec<Complex64> = greens[0].iter().zip(&greens[1]).map(|(a, b)| a + b).collect();
    let mut xbar = Vec::with_capacity(nchol);
    for (l, &lg) in trial.chol.iter().zip(&prop.mean_field) {
        let mut lmix = ZERO;
        for (x, y) in l.iter().zip(&gsum) {
            lmix += y * *x;
        }
        let mut fb = Complex64::new(0.0, -sdt) * (lmix - lg);
        let mag = fb.norm();
        if mag > cap {
            fb *= cap / mag;
        }
        xbar.push(fb);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let x: Vec<f64> = (0..nchol).map(|_| StandardNormal.sample(&mut rng)).collect();

    let mut vhs = vec![ZERO; norb * norb];
    let mut cfb = ZERO;
    let mut cmf = ZERO;
    for g in 0..nchol {
        let shift = Complex64::new(x[g], 0.0) - xbar[g];
        let coeff = Complex64::new(0.0, sdt) * shift;
        for (v, &l) in vhs.iter_mut().zip(&trial.chol[g]) {
            *v += coeff * l;
        }
        cfb += xbar[g] * x[g] - xbar[g] * xbar[g] * 0.5;
        cmf += Complex64::new(0.0, -sdt) * shift * prop.mean_field[g];
    }
    for spin in 0..2 {
        let n = trial.n_electrons(spin);
        if n == 0 {
            continue;
        }
        let phi = &mut walker.phi[spin];
        apply_real(&prop.half_step, phi, norb, n);
        apply_taylor(&vhs, phi, norb, n);
        apply_real(&prop.half_step, phi, norb, n);
    }
    let new_ov = overlap(trial, walker);
    if !(new_ov.norm() >= 1e-300) || !math::is_finite_c(new_ov) {
        return kill(walker);
    }
    let ratio = new_ov / ov;
    let dtheta = math::carg(ratio) + (cfb + cmf).im;
    let ln_mag = math::ln(ratio.norm()) + (cfb + cmf).re;
    let e_bound = 2.0 / sdt;
    let e_hybrid = (trial.e_core + prop.mf_constant - ln_mag / dt).clamp(e_shift - e_bound, e_shift + e_bound);
    let cosine = math::cos(dtheta);
    let factor = math::exp(dt * (e_shift - e_hybrid)) * cosine.max(0.0);
    let mut stats = StepStats { max_abs_dtheta: math::abs(wrap_angle(dtheta)), ..StepStats::default() };
    walker.weight *= factor;
    walker.overlap = new_ov;
    if !walker.weight.is_finite() {
        return kill(walker);
    }
    if cosine <= 0.0 {
        stats.truncated = 1;
    }
    stats
}

fn wrap_angle(t: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut t = t % two_pi;
    if t > core::f64::consts::PI {
        t -= two_pi;
    } else if t < -core::f64::consts::PI {
        t += two_pi;
    }
    t
}

/// Advances every walker by one time step. Walker `i` at step `step` draws
/// its fields from a stream seeded by `(seed, i, step)`.
pub fn propagate_step(
    ensemble: &mut WalkerEnsemble,
    trial: &Trial,
    prop: &Propagator,
    e_shift: f64,
    seed: u64,
    step: u64,
) -> StepStats {
    let run = |(i, w): (usize, &mut Walker)| step_walker(w, trial, prop, e_shift, mix_seed(seed, i as u64, step));
    #[cfg(feature = "parallel")]
    let per_walker: Vec<StepStats> = {
        use rayon::prelude::*;
        ensemble.walkers.par_iter_mut().enumerate().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_walker: Vec<StepStats> = ensemble.walkers.iter_mut().enumerate().map(run).collect();
    let mut total = StepStats::default();
    for s in per_walker {
        total.merge(s);
    }
    total
}
