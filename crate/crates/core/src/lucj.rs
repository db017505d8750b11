//! Single-layer LUCJ states `e^{−K̂₂} e^{K̂₁} e^{iĴ} e^{−K̂₁} |RHF⟩` built
//! exactly in determinant space, configuration sampling with a bit-flip
//! noise channel, occupancy-guided configuration recovery, the sample-based
//! subspace diagonalization loop and a derivative-free parameter optimizer.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::distr::{Bernoulli, Distribution};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::determinant::{binomial, bits, strings, Determinant, DEFAULT_SPACE_CAP};
use crate::error::{Error, Result};
use crate::fcidump::Integrals;
use crate::linalg::{det_in_place, expm, matmul};
use crate::math;
use crate::sci::{davidson, energy_variance, CIWavefunction, DavidsonOptions, VarianceReport};
use crate::hamiltonian::{build_subspace_hamiltonian_with, AssemblyOptions};
use crate::FxMap;

/// Parameters of one LUCJ layer. `k1` and `k2` are real antisymmetric
/// `norb×norb` generators shared by both spins; `j` is the symmetric
/// `2norb×2norb` density-density coupling indexed by `σ·norb + p` (α = 0).
#[derive(Clone, Debug, PartialEq)]
pub struct LUCJParams {
    pub norb: usize,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub j: Vec<f64>,
    pub mask: Vec<bool>,
}

impl LUCJParams {
    pub fn zeros(norb: usize) -> Self {
        let m = 2 * norb;
        Self {
            norb,
            k1: vec![0.0; norb * norb],
            k2: vec![0.0; norb * norb],
            j: vec![0.0; m * m],
            mask: default_mask(norb),
        }
    }

    /// Checks shapes, antisymmetry of the generators, symmetry of `j` and
    /// that `j` vanishes outside the mask.
    pub fn validate(&self) -> Result<()> {
        let n = self.norb;
        let m = 2 * n;
        if self.k1.len() != n * n || self.k2.len() != n * n || self.j.len() != m * m || self.mask.len() != m * m {
            return Err(Error::InvalidArgument("LUCJ parameter shapes do not match norb".into()));
        }
        for k in [&self.k1, &self.k2] {
            for p in 0..n {
                for q in 0..n {
                    if math::abs(k[p * n + q] + k[q * n + p]) > 1e-12 {
                        return Err(Error::InvalidArgument(alloc::format!(
                            "one-body generator is not antisymmetric at ({p}, {q})"
                        )));
                    }
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                let v = self.j[a * m + b];
                if v != self.j[b * m + a] {
                    return Err(Error::InvalidArgument(alloc::format!("j is not symmetric at ({a}, {b})")));
                }
                if self.mask[a * m + b] != self.mask[b * m + a] {
                    return Err(Error::InvalidArgument("mask is not symmetric".into()));
                }
                if !self.mask[a * m + b] && v != 0.0 {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "j is nonzero outside the connectivity mask at ({a}, {b})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Zeroes `j` outside the mask.
    pub fn apply_mask(&mut self) {
        for (v, &keep) in self.j.iter_mut().zip(&self.mask) {
            if !keep {
                *v = 0.0;
            }
        }
    }

    /// Free coordinates: upper triangles of `k1` and `k2`, then the masked
    /// upper triangle (with diagonal) of `j`.
    fn coordinates(&self, with_jastrow: bool) -> Vec<Coord> {
        let n = self.norb;
        let m = 2 * n;
        let mut out = Vec::new();
        for which in 0..2 {
            for p in 0..n {
                for q in p + 1..n {
                    out.push(Coord { which, a: p, b: q });
                }
            }
        }
        if with_jastrow {
            for a in 0..m {
                for b in a..m {
                    if self.mask[a * m + b] {
                        out.push(Coord { which: 2, a, b });
                    }
                }
            }
        }
        out
    }

    fn get(&self, c: Coord) -> f64 {
        match c.which {
            0 => self.k1[c.a * self.norb + c.b],
            1 => self.k2[c.a * self.norb + c.b],
            _ => self.j[c.a * 2 * self.norb + c.b],
        }
    }

    fn set(&mut self, c: Coord, v: f64) {
        let n = self.norb;
        match c.which {
            0 => {
                self.k1[c.a * n + c.b] = v;
                self.k1[c.b * n + c.a] = -v;
            }
            1 => {
                self.k2[c.a * n + c.b] = v;
                self.k2[c.b * n + c.a] = -v;
            }
            _ => {
                let m = 2 * n;
                self.j[c.a * m + c.b] = v;
                self.j[c.b * m + c.a] = v;
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Coord {
    which: u8,
    a: usize,
    b: usize,
}

/// All-to-all within each spin, same orbital only across spins.
pub fn default_mask(norb: usize) -> Vec<bool> {
    let m = 2 * norb;
    let mut mask = vec![false; m * m];
    for a in 0..m {
        for b in 0..m {
            let same_spin = (a < norb) == (b < norb);
            mask[a * m + b] = same_spin || a % norb == b % norb;
        }
    }
    mask
}

/// Entries drawn uniformly from (−10, 10), then antisymmetrized or
/// symmetrized and masked with the default mask.
pub fn random_params(norb: usize, seed: u64) -> LUCJParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = norb;
    let m = 2 * n;
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|_| loop {
                let x: f64 = rng.random_range(-10.0..10.0);
                if x != -10.0 {
                    break x;
                }
            })
            .collect()
    };
    let r1 = draw(n * n);
    let r2 = draw(n * n);
    let rj = draw(m * m);
    let mut p = LUCJParams::zeros(norb);
    for a in 0..n {
        for b in 0..n {
            p.k1[a * n + b] = 0.5 * (r1[a * n + b] - r1[b * n + a]);
            p.k2[a * n + b] = 0.5 * (r2[a * n + b] - r2[b * n + a]);
        }
    }
    for a in 0..m {
        for b in 0..m {
            p.j[a * m + b] = 0.5 * (rj[a * m + b] + rj[b * m + a]);
        }
    }
    p.apply_mask();
    p
}

/// Complex CI vector over the full `(na, nb)` space, stored as a dense
/// `alpha_strings × beta_strings` matrix.
#[derive(Clone, Debug)]
pub struct DenseCI {
    pub norb: usize,
    pub alpha_strings: Vec<u64>,
    pub beta_strings: Vec<u64>,
    pub c: Vec<Complex64>,
}

impl DenseCI {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Determinants in canonical order, paired with their amplitudes.
    pub fn entries(&self) -> impl Iterator<Item = (Determinant, Complex64)> + '_ {
        let nb = self.beta_strings.len();
        self.c.iter().enumerate().map(move |(k, &z)| {
            (Determinant::new(self.alpha_strings[k / nb], self.beta_strings[k % nb]), z)
        })
    }
}

/// `det(u[rows, cols])` for `u` of size `norb×norb`.
fn minor(u: &[f64], norb: usize, rows: u64, cols: &[usize], scratch: &mut Vec<f64>) -> f64 {
    let n = cols.len();
    scratch.clear();
    for r in bits(rows) {
        for &c in cols {
            scratch.push(u[r * norb + c]);
        }
    }
    det_in_place(scratch, n)
}

/// Matrix of all minors `M[y, x] = det(u[rows y, cols x])` between strings.
fn minor_matrix(u: &[f64], norb: usize, strs: &[u64]) -> Vec<f64> {
    let d = strs.len();
    let mut out = vec![0.0; d * d];
    let mut scratch = Vec::new();
    let cols: Vec<Vec<usize>> = strs.iter().map(|&s| bits(s).collect()).collect();
    for (y, &sy) in strs.iter().enumerate() {
        for (x, cx) in cols.iter().enumerate() {
            out[y * d + x] = minor(u, norb, sy, cx, &mut scratch);
        }
    }
    out
}

fn check_space(norb: usize, na: usize, nb: usize) -> Result<()> {
    if na > norb || nb > norb {
        return Err(Error::Symmetry(alloc::format!("cannot place ({na}, {nb}) electrons in {norb} orbitals")));
    }
    let dim = binomial(norb, na).saturating_mul(binomial(norb, nb));
    if dim > DEFAULT_SPACE_CAP as u128 {
        return Err(Error::Capacity { what: "configuration space", needed: dim, cap: DEFAULT_SPACE_CAP as u128 });
    }
    Ok(())
}

/// `e^{K̂}|ref⟩` expanded by minors, where `u = e^{K}`.
pub fn rotate_reference(u: &[f64], reference: &Determinant, norb: usize) -> Result<DenseCI> {
    let (na, nb) = (reference.n_alpha(), reference.n_beta());
    check_space(norb, na, nb)?;
    let sa = strings(norb, na);
    let sb = strings(norb, nb);
    let occ_a = reference.occupied_alpha();
    let occ_b = reference.occupied_beta();
    let mut scratch = Vec::new();
    let amp_a: Vec<f64> = sa.iter().map(|&s| minor(u, norb, s, &occ_a, &mut scratch)).collect();
    let amp_b: Vec<f64> = sb.iter().map(|&s| minor(u, norb, s, &occ_b, &mut scratch)).collect();
    let mut c = Vec::with_capacity(sa.len() * sb.len());
    for &a in &amp_a {
        for &b in &amp_b {
            c.push(Complex64::new(a * b, 0.0));
        }
    }
    Ok(DenseCI { norb, alpha_strings: sa, beta_strings: sb, c })
}

/// Multiplies every amplitude by `exp(i Σ_{ab} J_ab n_a n_b)`.
pub fn apply_jastrow(state: &mut DenseCI, j: &[f64]) {
    let norb = state.norb;
    let m = 2 * norb;
    let nb = state.beta_strings.len();
    let occs_a: Vec<Vec<usize>> = state.alpha_strings.iter().map(|&s| bits(s).collect()).collect();
    let occs_b: Vec<Vec<usize>> = state.beta_strings.iter().map(|&s| bits(s).collect()).collect();
    for (ia, oa) in occs_a.iter().enumerate() {
        for (ib, ob) in occs_b.iter().enumerate() {
            let occ: Vec<usize> = oa.iter().copied().chain(ob.iter().map(|&p| p + norb)).collect();
            let mut phase = 0.0;
            for &x in &occ {
                for &y in &occ {
                    phase += j[x * m + y];
                }
            }
            let z = &mut state.c[ia * nb + ib];
            *z *= Complex64::new(math::cos(phase), math::sin(phase));
        }
    }
}

/// Applies the one-body operator whose orbital matrix is `u` to both spin
/// sectors: `C' = M_α C M_βᵀ`.
pub fn apply_orbital_rotation(state: &mut DenseCI, u: &[f64]) {
    let norb = state.norb;
    let ma = minor_matrix(u, norb, &state.alpha_strings);
    let mb = minor_matrix(u, norb, &state.beta_strings);
    let (da, db) = (state.alpha_strings.len(), state.beta_strings.len());
    let zero = Complex64::new(0.0, 0.0);
    // T = C M_βᵀ
    let mut t = vec![zero; da * db];
    for x in 0..da {
        for y in 0..db {
            let mut s = zero;
            for k in 0..db {
                let m = mb[y * db + k];
                if m != 0.0 {
                    s += state.c[x * db + k] * m;
                }
            }
            t[x * db + y] = s;
        }
    }
    for v in state.c.iter_mut() {
        *v = zero;
    }
    for y in 0..da {
        for x in 0..da {
            let m = ma[y * da + x];
            if m == 0.0 {
                continue;
            }
            for k in 0..db {
                state.c[y * db + k] += t[x * db + k] * m;
            }
        }
    }
}

fn neg(a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| -x).collect()
}

/// Exact LUCJ state as a dense complex vector over the full space.
pub fn lucj_dense(params: &LUCJParams, reference: &Determinant) -> Result<DenseCI> {
    params.validate()?;
    let n = params.norb;
    let u1 = expm(&neg(&params.k1), n);
    let mut state = rotate_reference(&u1, reference, n)?;
    apply_jastrow(&mut state, &params.j);
    let back = matmul(&expm(&neg(&params.k2), n), &expm(&params.k1, n), n, n, n);
    apply_orbital_rotation(&mut state, &back);
    let norm = math::sqrt(state.norm_sqr());
    for z in state.c.iter_mut() {
        *z /= norm;
    }
    Ok(state)
}

/// LUCJ state split into magnitudes (as a CI wavefunction over its support,
/// canonically ordered) and phases.
#[derive(Clone, Debug)]
pub struct LucjState {
    pub wavefunction: CIWavefunction,
    pub phases: Vec<f64>,
}

impl LucjState {
    pub fn amplitudes(&self) -> Vec<Complex64> {
        self.wavefunction
            .coeffs
            .iter()
            .zip(&self.phases)
            .map(|(&r, &t)| Complex64::new(r * math::cos(t), r * math::sin(t)))
            .collect()
    }
}

pub fn build_lucj_state(params: &LUCJParams, reference: &Determinant, norb: usize) -> Result<LucjState> {
    if params.norb != norb {
        return Err(Error::InvalidArgument("parameter norb differs from the orbital count".into()));
    }
    let dense = lucj_dense(params, reference)?;
    let mut dets = Vec::new();
    let mut mags = Vec::new();
    let mut phases = Vec::new();
    for (d, z) in dense.entries() {
        let r = math::cabs(z);
        if r > 0.0 {
            dets.push(d);
            mags.push(r);
            phases.push(math::carg(z));
        }
    }
    let mut wavefunction = CIWavefunction::new(norb, dets, mags);
    let norm = math::sqrt(wavefunction.norm_sqr());
    for c in wavefunction.coeffs.iter_mut() {
        *c /= norm;
    }
    Ok(LucjState { wavefunction, phases })
}

/// Sampled configurations. `raw` holds every draw in order; `valid` those
/// with the right electron counts; `recovered` is filled by
/// [`recover_configurations`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleBatch {
    pub norb: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub raw: Vec<Determinant>,
    pub valid: Vec<Determinant>,
    pub recovered: Vec<Determinant>,
}

impl SampleBatch {
    pub fn n_samples(&self) -> usize {
        self.raw.len()
    }

    pub fn is_valid(&self, d: &Determinant) -> bool {
        d.n_alpha() == self.n_alpha && d.n_beta() == self.n_beta
    }

    /// `(configuration, count)` pairs in canonical order.
    pub fn counts(configs: &[Determinant]) -> Vec<(Determinant, usize)> {
        let mut map: FxMap<Determinant, usize> = FxMap::default();
        for d in configs {
            *map.entry(*d).or_insert(0) += 1;
        }
        let mut out: Vec<_> = map.into_iter().collect();
        out.sort_unstable();
        out
    }
}

/// Draws `n_samples` configurations with probability `c_i²`, then flips each
/// of the `2·norb` bits independently with probability `flip_prob`.
pub fn sample_configurations(psi: &CIWavefunction, n_samples: usize, flip_prob: f64, seed: u64) -> Result<SampleBatch> {
    if psi.is_empty() {
        return Err(Error::InvalidArgument("cannot sample an empty wavefunction".into()));
    }
    if !(0.0..0.5).contains(&flip_prob) {
        return Err(Error::InvalidArgument(alloc::format!("flip probability {flip_prob} outside [0, 0.5)")));
    }
    let weights: Vec<f64> = psi.weights().collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(alloc::format!("{e}")))?;
    let flip = Bernoulli::new(flip_prob).map_err(|e| Error::InvalidArgument(alloc::format!("{e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norb = psi.norb;
    let mut raw = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut d = psi.dets[dist.sample(&mut rng)];
        if flip_prob > 0.0 {
            for p in 0..norb {
                if flip.sample(&mut rng) {
                    d.alpha ^= 1 << p;
                }
            }
            for p in 0..norb {
                if flip.sample(&mut rng) {
                    d.beta ^= 1 << p;
                }
            }
        }
        raw.push(d);
    }
    let reference = psi.dets[0];
    let mut batch = SampleBatch { norb, n_alpha: reference.n_alpha(), n_beta: reference.n_beta(), raw, ..Default::default() };
    batch.valid = batch.raw.iter().copied().filter(|d| batch.is_valid(d)).collect();
    Ok(batch)
}

fn occupancies(configs: &[Determinant], norb: usize) -> Vec<f64> {
    let mut occ = vec![0.0; 2 * norb];
    for d in configs {
        for p in bits(d.alpha) {
            occ[p] += 1.0;
        }
        for p in bits(d.beta) {
            occ[norb + p] += 1.0;
        }
    }
    let n = configs.len().max(1) as f64;
    occ.iter_mut().for_each(|x| *x /= n);
    occ
}

/// Adds or removes bits of `s` until it holds `target` electrons. A bit at
/// `p` is chosen with probability proportional to `|x_p − n̄_p|`.
fn repair_string(mut s: u64, target: usize, norb: usize, nbar: &[f64], rng: &mut ChaCha8Rng) -> u64 {
    while (s.count_ones() as usize) != target {
        let remove = (s.count_ones() as usize) > target;
        let candidates: Vec<usize> = (0..norb).filter(|&p| ((s >> p) & 1 == 1) == remove).collect();
        let weights: Vec<f64> = candidates
            .iter()
            .map(|&p| {
                let x = if remove { 1.0 } else { 0.0 };
                math::abs(x - nbar[p])
            })
            .collect();
        let pick = match WeightedIndex::new(&weights) {
            Ok(w) => candidates[w.sample(rng)],
            Err(_) => candidates[rng.random_range(0..candidates.len())],
        };
        s ^= 1 << pick;
    }
    s
}

/// Occupancy-weighted iterative repair of symmetry-violating samples.
pub fn recover_configurations(
    batch: &SampleBatch,
    n_alpha: usize,
    n_beta: usize,
    max_rounds: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if batch.raw.is_empty() {
        return Err(Error::InvalidArgument("cannot recover an empty batch".into()));
    }
    let norb = batch.norb;
    if n_alpha > norb || n_beta > norb {
        return Err(Error::Symmetry(alloc::format!("cannot place ({n_alpha}, {n_beta}) electrons in {norb} orbitals")));
    }
    let mut out = batch.clone();
    out.n_alpha = n_alpha;
    out.n_beta = n_beta;
    out.valid = batch.raw.iter().copied().filter(|d| out.is_valid(d)).collect();
    let mut nbar = if out.valid.is_empty() {
        occupancies(&[Determinant::aufbau(n_alpha, n_beta)], norb)
    } else {
        occupancies(&out.valid, norb)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut recovered = batch.raw.clone();
    for _ in 0..max_rounds.max(1) {
        for (slot, d) in recovered.iter_mut().zip(&batch.raw) {
            if out.is_valid(d) {
                continue;
            }
            let alpha = repair_string(d.alpha, n_alpha, norb, &nbar[..norb], &mut rng);
            let beta = repair_string(d.beta, n_beta, norb, &nbar[norb..], &mut rng);
            *slot = Determinant::new(alpha, beta);
        }
        nbar = occupancies(&recovered, norb);
    }
    out.recovered = recovered;
    Ok(out)
}

/// Cartesian-product subspace spanned by the α and β strings of `configs`.
/// With equal electron counts the two string sets are merged first.
pub fn subspace_from_configurations(configs: &[Determinant], n_alpha: usize, n_beta: usize) -> Vec<Determinant> {
    let mut sa: Vec<u64> = configs.iter().map(|d| d.alpha).collect();
    let mut sb: Vec<u64> = configs.iter().map(|d| d.beta).collect();
    if n_alpha == n_beta {
        sa.extend_from_slice(&sb);
        sb = sa.clone();
    }
    for s in [&mut sa, &mut sb] {
        s.sort_unstable();
        s.dedup();
    }
    let mut out = Vec::with_capacity(sa.len() * sb.len());
    for &a in &sa {
        for &b in &sb {
            out.push(Determinant::new(a, b));
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct SqdOptions {
    pub n_samples: usize,
    pub flip_prob: f64,
    pub n_batches: usize,
    pub recovery_rounds: usize,
    /// Repair invalid samples; otherwise only symmetry-valid samples are used.
    pub recover: bool,
    pub seed: u64,
    pub davidson: DavidsonOptions,
}

impl Default for SqdOptions {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            flip_prob: 0.0,
            n_batches: 1,
            recovery_rounds: 3,
            recover: true,
            seed: 0,
            davidson: DavidsonOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SqdResult {
    pub energy: f64,
    pub wavefunction: CIWavefunction,
    pub variance: VarianceReport,
    pub dimension: usize,
    pub batch_energies: Vec<f64>,
    pub n_samples: usize,
    pub converged: bool,
}

fn seed_stream(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Lowest subspace energy over `n_batches` slices of `configs`.
fn diagonalize_batches(
    configs: &[Determinant],
    ints: &Integrals,
    options: &SqdOptions,
) -> Result<(f64, CIWavefunction, Vec<f64>, bool)> {
    let n_batches = options.n_batches.clamp(1, configs.len().max(1));
    let chunk = configs.len().div_ceil(n_batches);
    let mut best: Option<(f64, CIWavefunction, bool)> = None;
    let mut energies = Vec::new();
    for part in configs.chunks(chunk.max(1)) {
        let dets = subspace_from_configurations(part, ints.nelec_alpha, ints.nelec_beta);
        let h = build_subspace_hamiltonian_with(&dets, ints, AssemblyOptions::default())?;
        let diag = davidson(&h, ints.norb, 1, options.davidson);
        let e = diag.energies[0];
        energies.push(e);
        if best.as_ref().is_none_or(|b| e < b.0) {
            best = Some((e, diag.states.into_iter().next().unwrap(), diag.converged));
        }
    }
    let (e, psi, conv) = best.ok_or_else(|| Error::InvalidArgument("no usable configurations".into()))?;
    Ok((e, psi, energies, conv))
}

/// Samples the LUCJ state, repairs, diagonalizes in the product subspace and
/// returns the ground state with its energy variance.
pub fn sqd_pipeline(params: &LUCJParams, ints: &Integrals, options: &SqdOptions) -> Result<SqdResult> {
    let result = sqd_energy_only(params, ints, options)?;
    let variance = energy_variance(&result.wavefunction, ints)?;
    Ok(SqdResult { variance, ..result })
}

fn sqd_energy_only(params: &LUCJParams, ints: &Integrals, options: &SqdOptions) -> Result<SqdResult> {
    let reference = Determinant::aufbau(ints.nelec_alpha, ints.nelec_beta);
    let state = build_lucj_state(params, &reference, ints.norb)?;
    let batch = sample_configurations(&state.wavefunction, options.n_samples, options.flip_prob, seed_stream(options.seed, 1))?;
    let configs = if options.recover {
        recover_configurations(&batch, ints.nelec_alpha, ints.nelec_beta, options.recovery_rounds, seed_stream(options.seed, 2))?
            .recovered
    } else {
        batch.valid.clone()
    };
    if configs.is_empty() {
        return Err(Error::InvalidArgument("no symmetry-valid samples to diagonalize".into()));
    }
    let (energy, wavefunction, batch_energies, converged) = diagonalize_batches(&configs, ints, options)?;
    let dimension = wavefunction.len();
    let placeholder = VarianceReport { energy, raw_h2: f64::NAN, variance: f64::NAN };
    Ok(SqdResult {
        energy,
        wavefunction,
        variance: placeholder,
        dimension,
        batch_energies,
        n_samples: options.n_samples,
        converged,
    })
}

/// Objective minimized by [`optimize_params`].
#[derive(Clone, Debug)]
pub enum Objective<'a> {
    /// Subspace energy with a fixed sampling seed.
    SqdEnergy { ints: &'a Integrals, options: SqdOptions },
    /// `KL(ref ‖ lucj)` between exact configuration distributions.
    KlToReference { reference: &'a CIWavefunction, n_alpha: usize, n_beta: usize },
}

/// Probability floor used inside the KL divergence.
pub const KL_FLOOR: f64 = 1e-30;

pub fn kl_divergence(reference: &CIWavefunction, params: &LUCJParams, n_alpha: usize, n_beta: usize) -> Result<f64> {
    let state = lucj_dense(params, &Determinant::aufbau(n_alpha, n_beta))?;
    let nb = state.beta_strings.len();
    let total = reference.norm_sqr();
    let mut kl = 0.0;
    for (d, &c) in reference.dets.iter().zip(&reference.coeffs) {
        let p = c * c / total;
        if p <= 0.0 {
            continue;
        }
        let q = match (state.alpha_strings.binary_search(&d.alpha), state.beta_strings.binary_search(&d.beta)) {
            (Ok(ia), Ok(ib)) => state.c[ia * nb + ib].norm_sqr(),
            _ => 0.0,
        };
        kl += p * math::ln(p / q.max(KL_FLOOR));
    }
    Ok(kl)
}

impl Objective<'_> {
    pub fn evaluate(&self, params: &LUCJParams) -> Result<f64> {
        match self {
            Objective::SqdEnergy { ints, options } => Ok(sqd_energy_only(params, ints, options)?.energy),
            Objective::KlToReference { reference, n_alpha, n_beta } => kl_divergence(reference, params, *n_alpha, *n_beta),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OptimizeOptions {
    /// Maximum number of objective evaluations.
    pub budget: usize,
    pub initial_radius: f64,
    pub min_radius: f64,
    pub freeze_jastrow: bool,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { budget: 1000, initial_radius: 0.5, min_radius: 1e-6, freeze_jastrow: false, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub params: LUCJParams,
    pub value: f64,
    pub initial_value: f64,
    pub evaluations: usize,
    /// Best objective value after each accepted move.
    pub history: Vec<f64>,
}

/// Coordinate trust-region search: each sweep tries `±r` along every free
/// coordinate in a seeded random order and keeps strict improvements; `r`
/// halves after a sweep without progress.
pub fn optimize_params(initial: &LUCJParams, objective: &Objective<'_>, options: OptimizeOptions) -> Result<OptimizeResult> {
    initial.validate()?;
    if options.budget == 0 {
        return Ok(OptimizeResult {
            params: initial.clone(),
            value: f64::NAN,
            initial_value: f64::NAN,
            evaluations: 0,
            history: Vec::new(),
        });
    }
    let mut best = initial.clone();
    let mut best_value = objective.evaluate(&best)?;
    let initial_value = best_value;
    let mut evaluations = 1;
    let mut history = vec![best_value];
    let mut coords = best.coordinates(!options.freeze_jastrow);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut radius = options.initial_radius;
    'outer: while evaluations < options.budget && radius >= options.min_radius && !coords.is_empty() {
        // Fisher–Yates with the optimizer's own stream
        for i in (1..coords.len()).rev() {
            let k = rng.random_range(0..=i);
            coords.swap(i, k);
        }
        let mut improved = false;
        for &c in &coords {
            for step in [radius, -radius] {
                if evaluations >= options.budget {
                    break 'outer;
                }
                let mut trial = best.clone();
                trial.set(c, best.get(c) + step);
                let v = objective.evaluate(&trial)?;
                evaluations += 1;
                if v < best_value {
                    best = trial;
                    best_value = v;
                    history.push(v);
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            radius *= 0.5;
        }
    }
    Ok(OptimizeResult { params: best, value: best_value, initial_value, evaluations, history })
}
