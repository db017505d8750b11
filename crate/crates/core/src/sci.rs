//! Subspace diagonalization, heat-bath selection, CI-weight truncation and
//! the normalized energy variance of CI wavefunctions.

use alloc::vec;
use alloc::vec::Vec;

use crate::determinant::Determinant;
use crate::error::{Error, Result};
use crate::fcidump::Integrals;
use crate::hamiltonian::{
    build_subspace_hamiltonian_with, diagonal_element, for_each_excitation, matrix_element,
    AssemblyOptions, SubspaceHamiltonian,
};
use crate::linalg::symmetric_eigen;
use crate::math;
use crate::FxMap;

/// A real CI expansion `Σ_i c_i |x_i⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct CIWavefunction {
    pub norb: usize,
    pub dets: Vec<Determinant>,
    pub coeffs: Vec<f64>,
    /// When set, `coeffs[i]^2` is non-increasing in `i`.
    pub sorted_by_weight: bool,
}

impl CIWavefunction {
    pub fn new(norb: usize, dets: Vec<Determinant>, coeffs: Vec<f64>) -> Self {
        assert_eq!(dets.len(), coeffs.len());
        Self {
            norb,
            dets,
            coeffs,
            sorted_by_weight: false,
        }
    }

    pub fn single(norb: usize, det: Determinant) -> Self {
        Self::new(norb, vec![det], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.dets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dets.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn normalize(&mut self) {
        let n = math::sqrt(self.norm_sqr());
        if n > 0.0 {
            for c in &mut self.coeffs {
                *c /= n;
            }
        }
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.coeffs.iter().map(|c| c * c)
    }

    /// Reorders by descending weight; ties keep canonical determinant order.
    pub fn sort_by_weight(&mut self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| {
            let wi = self.coeffs[i] * self.coeffs[i];
            let wj = self.coeffs[j] * self.coeffs[j];
            wj.total_cmp(&wi).then(self.dets[i].cmp(&self.dets[j]))
        });
        self.dets = order.iter().map(|&i| self.dets[i]).collect();
        self.coeffs = order.iter().map(|&i| self.coeffs[i]).collect();
        self.sorted_by_weight = true;
    }

    /// Reorders into canonical determinant order.
    pub fn sort_canonical(&mut self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| self.dets[i].cmp(&self.dets[j]));
        self.dets = order.iter().map(|&i| self.dets[i]).collect();
        self.coeffs = order.iter().map(|&i| self.coeffs[i]).collect();
        self.sorted_by_weight = false;
    }

    /// Coefficient of `det`, zero when absent.
    pub fn coefficient(&self, det: &Determinant) -> f64 {
        self.dets
            .iter()
            .position(|d| d == det)
            .map(|i| self.coeffs[i])
            .unwrap_or(0.0)
    }
}

/// `⟨Ĥ⟩`, `⟨Ĥ²⟩` and the normalized variance `(⟨Ĥ²⟩ − ⟨Ĥ⟩²)/⟨Ĥ⟩²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceReport {
    pub energy: f64,
    pub raw_h2: f64,
    pub variance: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct DavidsonOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub max_subspace: usize,
}

impl Default for DavidsonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 200,
            max_subspace: 48,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Diagonalization {
    pub energies: Vec<f64>,
    pub states: Vec<CIWavefunction>,
    pub residual_norms: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Diagonalization {
    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn ground_state(&self) -> &CIWavefunction {
        &self.states[0]
    }
}

/// Diagonalizes `Ĥ` in the span of `dets` (sorted, unique, one electron-count
/// sector) with default Davidson settings and the given residual tolerance.
pub fn diagonalize(
    dets: &[Determinant],
    ints: &Integrals,
    n_roots: usize,
    tol: f64,
) -> Result<Diagonalization> {
    let options = DavidsonOptions {
        tol,
        ..DavidsonOptions::default()
    };
    let h = build_subspace_hamiltonian_with(dets, ints, AssemblyOptions::default())?;
    Ok(davidson(&h, ints.norb, n_roots, options))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthonormalize_against(basis: &[Vec<f64>], v: &mut [f64]) -> f64 {
    for _ in 0..2 {
        for b in basis {
            let d = dot(b, v);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
    }
    let n = math::sqrt(dot(v, v));
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Block Davidson for the lowest `n_roots` eigenpairs with a diagonal
/// preconditioner, starting from the lowest-diagonal unit vectors.
pub fn davidson(
    h: &SubspaceHamiltonian,
    norb: usize,
    n_roots: usize,
    options: DavidsonOptions,
) -> Diagonalization {
    let dim = h.dim();
    let n_roots = n_roots.clamp(1, dim.max(1));
    let diag = h.diagonal();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]).then(i.cmp(&j)));

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    for &i in order.iter().take(n_roots) {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        basis.push(v);
    }
    let max_subspace = options.max_subspace.max(2 * n_roots + 2).min(dim.max(1));

    let mut energies = vec![0.0; n_roots];
    let mut ritz: Vec<Vec<f64>> = vec![vec![0.0; dim]; n_roots];
    let mut res_norms = vec![f64::INFINITY; n_roots];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iters {
        iterations += 1;
        while images.len() < basis.len() {
            let mut w = vec![0.0; dim];
            h.matvec(&basis[images.len()], &mut w);
            images.push(w);
        }
        let m = basis.len();
        let mut small = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let v = dot(&basis[i], &images[j]);
                small[i * m + j] = v;
                small[j * m + i] = v;
            }
        }
        let (vals, vecs) = symmetric_eigen(&small, m);
        let mut residuals = Vec::with_capacity(n_roots);
        for k in 0..n_roots.min(m) {
            energies[k] = vals[k];
            let x = &mut ritz[k];
            let mut r = vec![0.0; dim];
            x.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..m {
                let y = vecs[j * m + k];
                for i in 0..dim {
                    x[i] += y * basis[j][i];
                    r[i] += y * images[j][i];
                }
            }
            for i in 0..dim {
                r[i] -= vals[k] * x[i];
            }
            res_norms[k] = math::sqrt(dot(&r, &r));
            residuals.push(r);
        }
        if res_norms.iter().all(|&r| r <= options.tol) {
            converged = true;
            break;
        }
        if m + n_roots > max_subspace {
            // restart from the current Ritz vectors
            basis = ritz.clone();
            images.clear();
            let mut kept: Vec<Vec<f64>> = Vec::new();
            for mut v in basis.drain(..) {
                if orthonormalize_against(&kept, &mut v) > 1e-12 {
                    kept.push(v);
                }
            }
            basis = kept;
        }
        let mut added = 0;
        for (k, r) in residuals.iter().enumerate() {
            if res_norms[k] <= options.tol {
                continue;
            }
            let mut t: Vec<f64> = r
                .iter()
                .zip(&diag)
                .map(|(&ri, &d)| {
                    let denom = energies[k] - d;
                    let denom = if math::abs(denom) < 1e-10 {
                        if denom < 0.0 { -1e-10 } else { 1e-10 }
                    } else {
                        denom
                    };
                    ri / denom
                })
                .collect();
            if orthonormalize_against(&basis, &mut t) > 1e-10 {
                basis.push(t);
                added += 1;
            } else {
                let mut t = r.clone();
                if orthonormalize_against(&basis, &mut t) > 1e-10 {
                    basis.push(t);
                    added += 1;
                }
            }
        }
        if added == 0 && images.len() == basis.len() {
            // the basis spans an invariant subspace to working precision
            converged = res_norms.iter().all(|&r| r <= options.tol.max(1e-9));
            break;
        }
    }
    let states = ritz
        .into_iter()
        .map(|mut x| {
            let imax = x
                .iter()
                .enumerate()
                .max_by(|a, b| math::abs(*a.1).total_cmp(&math::abs(*b.1)).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if x.get(imax).copied().unwrap_or(0.0) < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            let mut psi = CIWavefunction::new(norb, h.dets.clone(), x);
            psi.normalize();
            psi
        })
        .collect();
    Diagonalization {
        energies,
        states,
        residual_norms: res_norms,
        iterations,
        converged,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HciOptions {
    pub epsilon1: f64,
    pub max_iters: usize,
    pub max_dets: usize,
    pub davidson: DavidsonOptions,
}

impl Default for HciOptions {
    fn default() -> Self {
        Self {
            epsilon1: 5e-5,
            max_iters: 50,
            max_dets: 5_000_000,
            davidson: DavidsonOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HciRun {
    pub dets: Vec<Determinant>,
    pub energy: f64,
    pub wavefunction: CIWavefunction,
    /// `(dimension, energy)` after each diagonalization.
    pub history: Vec<(usize, f64)>,
    pub iterations: usize,
}

/// Heat-bath selection: admits every `x_i` connected to a member `x_j` with
/// `|c_j ⟨x_j|Ĥ|x_i⟩| > ε₁`, re-diagonalizes, and repeats until the set is
/// stable or `max_iters` selection rounds have run.
pub fn hci(seed: &CIWavefunction, ints: &Integrals, options: HciOptions) -> Result<HciRun> {
    if !(options.epsilon1 > 0.0) {
        return Err(Error::InvalidArgument("epsilon1 must be positive".into()));
    }
    let mut psi = seed.clone();
    psi.sort_canonical();
    psi.normalize();
    let mut dets = psi.dets.clone();
    let mut energy = f64::NAN;
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < options.max_iters {
        iterations += 1;
        let mut fresh: Vec<Determinant> = Vec::new();
        {
            let members: FxMap<Determinant, ()> = dets.iter().map(|d| (*d, ())).collect();
            let mut added: FxMap<Determinant, ()> = FxMap::default();
            for (dj, &cj) in psi.dets.iter().zip(&psi.coeffs) {
                if math::abs(cj) * 1e3 < options.epsilon1 * 1e-12 {
                    continue;
                }
                for_each_excitation(dj, ints.norb, |di| {
                    if members.contains_key(&di) || added.contains_key(&di) {
                        return;
                    }
                    if math::abs(cj * matrix_element(dj, &di, ints)) > options.epsilon1 {
                        added.insert(di, ());
                        fresh.push(di);
                    }
                });
            }
        }
        if fresh.is_empty() && !history.is_empty() {
            break;
        }
        if dets.len() + fresh.len() > options.max_dets {
            return Err(Error::Capacity {
                what: "selected determinants",
                needed: (dets.len() + fresh.len()) as u128,
                cap: options.max_dets as u128,
            });
        }
        let grew = !fresh.is_empty();
        dets.extend(fresh);
        dets.sort_unstable();
        let h = build_subspace_hamiltonian_with(&dets, ints, AssemblyOptions::default())?;
        let diag = davidson(&h, ints.norb, 1, options.davidson);
        energy = diag.energies[0];
        psi = diag.states.into_iter().next().unwrap();
        history.push((dets.len(), energy));
        if !grew {
            break;
        }
    }
    Ok(HciRun {
        dets,
        energy,
        wavefunction: psi,
        history,
        iterations,
    })
}

/// Determinant set selected by [`hci`].
pub fn hci_select(
    seed: &CIWavefunction,
    ints: &Integrals,
    epsilon1: f64,
    max_iters: usize,
) -> Result<Vec<Determinant>> {
    let options = HciOptions {
        epsilon1,
        max_iters,
        ..HciOptions::default()
    };
    Ok(hci(seed, ints, options)?.dets)
}

/// Shortest weight-ordered prefix whose cumulative weight reaches `w`,
/// renormalized. `w ≥ 1` keeps every determinant.
pub fn truncate_by_weight(psi: &CIWavefunction, w: f64) -> CIWavefunction {
    let mut sorted = psi.clone();
    sorted.sort_by_weight();
    let total = sorted.norm_sqr();
    let keep = if w >= 1.0 {
        sorted.len()
    } else {
        let target = w * total;
        let mut cum = 0.0;
        let mut n = sorted.len();
        for (i, c) in sorted.coeffs.iter().enumerate() {
            cum += c * c;
            if cum >= target - 1e-14 * total {
                n = i + 1;
                break;
            }
        }
        n
    };
    sorted.dets.truncate(keep);
    sorted.coeffs.truncate(keep);
    sorted.normalize();
    sorted
}

/// `Ĥ|Ψ⟩` over every determinant within a double excitation of the support
/// of `psi`, in canonical determinant order.
pub fn apply_hamiltonian(
    psi: &CIWavefunction,
    ints: &Integrals,
    cap: usize,
) -> Result<Vec<(Determinant, f64)>> {
    let mut sigma: FxMap<Determinant, f64> = FxMap::default();
    for (d, &c) in psi.dets.iter().zip(&psi.coeffs) {
        if c == 0.0 {
            continue;
        }
        *sigma.entry(*d).or_insert(0.0) += c * diagonal_element(d, ints);
        let mut overflow = false;
        for_each_excitation(d, ints.norb, |t| {
            let v = matrix_element(d, &t, ints);
            if v != 0.0 {
                *sigma.entry(t).or_insert(0.0) += c * v;
            }
        });
        if sigma.len() > cap {
            overflow = true;
        }
        if overflow {
            return Err(Error::Capacity {
                what: "connected space",
                needed: sigma.len() as u128,
                cap: cap as u128,
            });
        }
    }
    let mut out: Vec<(Determinant, f64)> = sigma.into_iter().collect();
    out.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Default bound on the connected space explored by [`energy_variance`].
pub const DEFAULT_CONNECTED_CAP: usize = 50_000_000;

pub fn energy_variance(psi: &CIWavefunction, ints: &Integrals) -> Result<VarianceReport> {
    energy_variance_capped(psi, ints, DEFAULT_CONNECTED_CAP)
}

/// Energy and normalized variance, with `⟨Ĥ²⟩ = ‖Ĥ|Ψ⟩‖²` evaluated over
/// the full connected space.
pub fn energy_variance_capped(
    psi: &CIWavefunction,
    ints: &Integrals,
    cap: usize,
) -> Result<VarianceReport> {
    let norm2 = psi.norm_sqr();
    if !(norm2 > 0.0) {
        return Err(Error::InvalidArgument("wavefunction has zero norm".into()));
    }
    let sigma = apply_hamiltonian(psi, ints, cap)?;
    let mut coeff: FxMap<Determinant, f64> = FxMap::default();
    for (d, &c) in psi.dets.iter().zip(&psi.coeffs) {
        *coeff.entry(*d).or_insert(0.0) += c;
    }
    let mut energy = 0.0;
    let mut h2 = 0.0;
    for (d, s) in &sigma {
        if let Some(&c) = coeff.get(d) {
            energy += c * s;
        }
        h2 += s * s;
    }
    energy /= norm2;
    h2 /= norm2;
    Ok(VarianceReport {
        energy,
        raw_h2: h2,
        variance: (h2 - energy * energy) / (energy * energy),
    })
}
