use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::walker::Walker;
use crate::determinant::{bits, Determinant};
use crate::error::{Error, Result};
use crate::fcidump::Integrals;
use crate::hamiltonian::CholeskyFactors;
use crate::linalg::{det_c, det_inverse_c, expm};
use crate::math;
use crate::sci::{apply_hamiltonian, CIWavefunction};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative overlap (against the Hadamard bound) below which a trial
/// string's contributions are evaluated from determinant polynomials instead
/// of the inverse overlap matrix.
const REGULAR_THRESHOLD: f64 = 1e-5;

/// Bound on the connected space used by the trial self-check.
const SELF_CHECK_CAP: usize = 20_000_000;

/// Multi-determinant trial factorized over its unique α and β strings.
#[derive(Clone, Debug)]
pub struct Trial {
    pub psi: CIWavefunction,
    pub norb: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    /// `⟨Ψ_T|Ĥ|Ψ_T⟩` with the exact integrals.
    pub energy: f64,
    /// Largest deviation between the Cholesky-based local energy and the
    /// exact-integral value on the probe walkers.
    pub self_check_error: f64,
    /// Determinant with the largest weight; anchors the mean-field shift.
    pub leading: Determinant,
    pub(crate) strings: [Vec<u64>; 2],
    pub(crate) occs: [Vec<Vec<usize>>; 2],
    pub(crate) entries: Vec<(u32, u32, f64)>,
    pub(crate) e_core: f64,
    pub(crate) h: Vec<f64>,
    pub(crate) chol: Vec<Vec<f64>>,
    /// Per-spin excitations relative to the leading determinant's strings.
    pub(crate) refs: [SpinReference; 2],
    /// Row-major `n_α-strings × n_β-strings` coefficient matrix, kept when
    /// the trial fills at least a quarter of it.
    pub(crate) dense: Option<Vec<f64>>,
}

impl Trial {
    pub fn n_dets(&self) -> usize {
        self.entries.len()
    }

    pub fn n_chol(&self) -> usize {
        self.chol.len()
    }

    pub fn n_electrons(&self, spin: usize) -> usize {
        if spin == 0 {
            self.n_alpha
        } else {
            self.n_beta
        }
    }
}

/// Builds the string factorization, checks the Cholesky contraction path
/// against exact-integral local energies and records the trial energy.
pub fn prepare_trial(psi: &CIWavefunction, ints: &Integrals, chol: &CholeskyFactors) -> Result<Trial> {
    if psi.is_empty() {
        return Err(Error::InvalidArgument("trial wavefunction is empty".into()));
    }
    if chol.norb != ints.norb || psi.norb != ints.norb {
        return Err(Error::InvalidArgument("trial, integrals and Cholesky factors disagree on norb".into()));
    }
    let (na, nb) = (psi.dets[0].n_alpha(), psi.dets[0].n_beta());
    if psi.dets.iter().any(|d| d.n_alpha() != na || d.n_beta() != nb) {
        return Err(Error::Symmetry("trial determinants differ in electron counts".into()));
    }
    let mut psi = psi.clone();
    psi.sort_canonical();
    if psi.dets.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("trial contains duplicate determinants".into()));
    }
    psi.normalize();
    let leading = psi
        .dets
        .iter()
        .zip(&psi.coeffs)
        .max_by(|a, b| math::abs(*a.1).total_cmp(&math::abs(*b.1)).then(b.0.cmp(a.0)))
        .map(|(d, _)| *d)
        .unwrap();
    let mut sa: Vec<u64> = psi.dets.iter().map(|d| d.alpha).collect();
    let mut sb: Vec<u64> = psi.dets.iter().map(|d| d.beta).collect();
    for s in [&mut sa, &mut sb] {
        s.sort_unstable();
        s.dedup();
    }
    let entries = psi
        .dets
        .iter()
        .zip(&psi.coeffs)
        .map(|(d, &c)| {
            let ia = sa.binary_search(&d.alpha).unwrap() as u32;
            let ib = sb.binary_search(&d.beta).unwrap() as u32;
            (ia, ib, c)
        })
        .collect();
    let occs: [Vec<Vec<usize>>; 2] = [
        sa.iter().map(|&s| bits(s).collect()).collect(),
        sb.iter().map(|&s| bits(s).collect()).collect(),
    ];
    let refs = [spin_reference(leading.alpha, &occs[0]), spin_reference(leading.beta, &occs[1])];
    let mut trial = Trial {
        norb: ints.norb,
        n_alpha: na,
        n_beta: nb,
        energy: 0.0,
        self_check_error: 0.0,
        leading,
        strings: [sa, sb],
        occs,
        entries,
        e_core: ints.e_core,
        h: ints.one_body().to_vec(),
        chol: chol.factors.clone(),
        refs,
        dense: None,
        psi,
    };

    let (na_s, nb_s) = (trial.strings[0].len(), trial.strings[1].len());
    if 4 * trial.entries.len() >= na_s * nb_s {
        let mut c = vec![0.0; na_s * nb_s];
        for &(ia, ib, v) in &trial.entries {
            c[ia as usize * nb_s + ib as usize] = v;
        }
        trial.dense = Some(c);
    }

    let sigma = apply_hamiltonian(&trial.psi, ints, SELF_CHECK_CAP)?;
    trial.energy = sigma
        .iter()
        .filter_map(|(d, s)| trial.psi.dets.binary_search(d).ok().map(|i| trial.psi.coeffs[i] * s))
        .sum::<f64>();

    let mut worst: f64 = 0.0;
    for probe in probe_walkers(&trial) {
        let ov = overlap(&trial, &probe);
        if ov.norm() < 1e-8 {
            continue;
        }
        let exact = sigma
            .iter()
            .map(|(d, s)| *s * determinant_overlap(&probe, d, trial.norb))
            .fold(ZERO, |a, b| a + b)
            / ov;
        for use_reference in [true, false] {
            let (ov, num) = energy_numerator_impl(&trial, &probe, use_reference);
            worst = worst.max((num / ov - exact).norm());
        }
    }
    trial.self_check_error = worst;
    if worst > 1e-6 {
        return Err(Error::Internal(alloc::format!(
            "trial local-energy self-check failed: deviation {worst:e} Ha"
        )));
    }
    Ok(trial)
}

/// The leading determinant itself and a generic rotation of it.
fn probe_walkers(trial: &Trial) -> Vec<Walker> {
    let n = trial.norb;
    let mut kappa = vec![0.0; n * n];
    for p in 0..n {
        for q in p + 1..n {
            let v = 0.15 * math::sin(1.0 + p as f64 + 2.3 * q as f64);
            kappa[p * n + q] = v;
            kappa[q * n + p] = -v;
        }
    }
    let u = expm(&kappa, n);
    let mut rotated = Walker::from_determinant(&trial.leading, n);
    for (spin, occ) in [trial.leading.occupied_alpha(), trial.leading.occupied_beta()].into_iter().enumerate() {
        let k = occ.len();
        for p in 0..n {
            for (j, &o) in occ.iter().enumerate() {
                rotated.phi[spin][p * k + j] = Complex64::new(u[p * n + o], 0.0);
            }
        }
    }
    vec![Walker::from_determinant(&trial.leading, n), rotated]
}

/// `⟨x|φ⟩ = det(φ_α[occ_α, :]) · det(φ_β[occ_β, :])`.
pub(crate) fn determinant_overlap(walker: &Walker, det: &Determinant, norb: usize) -> Complex64 {
    let mut out = Complex64::new(1.0, 0.0);
    for (spin, mask) in [det.alpha, det.beta].into_iter().enumerate() {
        let n = walker.n_electrons(spin, norb);
        let mut m: Vec<Complex64> = Vec::with_capacity(n * n);
        for p in bits(mask) {
            m.extend_from_slice(&walker.phi[spin][p * n..(p + 1) * n]);
        }
        out *= det_c(&mut m, n);
    }
    out
}

fn select_rows(phi: &[Complex64], n: usize, occ: &[usize], out: &mut Vec<Complex64>) {
    out.clear();
    for &p in occ {
        out.extend_from_slice(&phi[p * n..(p + 1) * n]);
    }
}

fn hadamard_bound(m: &[Complex64], n: usize) -> f64 {
    (0..n)
        .map(|j| math::sqrt((0..n).map(|i| m[i * n + j].norm_sqr()).sum::<f64>()))
        .product()
}

// ---------------------------------------------------------------------------
// Reference-string route.
//
// With `Θ = φ M_r⁻¹` for a reference string `r`, a string `s` that swaps the
// reference rows at positions `H` for orbitals `P` has
// `det M_s = σ_s det M_r det Θ[P, H]`. Everything below is built from small
// `k × k` blocks of `Θ` and of its first and second order responses.
// ---------------------------------------------------------------------------

/// How one trial string differs from the reference string of its spin.
#[derive(Clone, Debug)]
pub(crate) struct Excitation {
    /// Positions within the reference occupation list that are vacated.
    holes: Vec<usize>,
    /// Orbitals filled instead, ascending.
    particles: Vec<usize>,
    /// Parity of sorting the in-place row list.
    sign: f64,
    /// Row orbital at each position once holes are replaced in place.
    inplace: Vec<usize>,
    /// Flat `P_i · n + H_j` offsets into an `rows × n` block.
    pairs: Vec<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct SpinReference {
    occ: Vec<usize>,
    exc: Vec<Excitation>,
}

pub(crate) fn spin_reference(reference: u64, occs: &[Vec<usize>]) -> SpinReference {
    let occ: Vec<usize> = bits(reference).collect();
    let exc = occs
        .iter()
        .map(|s| {
            let holes: Vec<usize> = (0..occ.len()).filter(|&m| !s.contains(&occ[m])).collect();
            let particles: Vec<usize> = s.iter().copied().filter(|p| !occ.contains(p)).collect();
            let mut inplace = occ.clone();
            for (&h, &p) in holes.iter().zip(&particles) {
                inplace[h] = p;
            }
            let mut inversions = 0usize;
            for i in 0..inplace.len() {
                for j in i + 1..inplace.len() {
                    if inplace[i] > inplace[j] {
                        inversions += 1;
                    }
                }
            }
            let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
            let n = occ.len();
            let pairs = particles.iter().flat_map(|&p| holes.iter().map(move |&h| p * n + h)).collect();
            Excitation { holes, particles, sign, inplace, pairs }
        })
        .collect();
    SpinReference { occ, exc }
}

/// Reference overlap below this fraction of its Hadamard bound sends the
/// spin to the direct route.
const REFERENCE_THRESHOLD: f64 = 1e-4;

struct RefData {
    ov: Complex64,
    /// `φ M_r⁻¹`, `norb × n`.
    theta: Vec<Complex64>,
}

fn reference_data(phi: &[Complex64], n: usize, norb: usize, occ: &[usize]) -> Option<RefData> {
    if n == 0 {
        return Some(RefData { ov: Complex64::new(1.0, 0.0), theta: Vec::new() });
    }
    let mut m = Vec::with_capacity(n * n);
    select_rows(phi, n, occ, &mut m);
    let bound = hadamard_bound(&m, n);
    let mut inv = vec![ZERO; n * n];
    let ov = det_inverse_c(&mut m, n, &mut inv);
    if !(ov.norm() > REFERENCE_THRESHOLD * bound) || !math::is_finite_c(ov) {
        return None;
    }
    let mut theta = vec![ZERO; norb * n];
    for p in 0..norb {
        let row = &mut theta[p * n..(p + 1) * n];
        for j in 0..n {
            let x = phi[p * n + j];
            for (o, y) in row.iter_mut().zip(&inv[j * n..(j + 1) * n]) {
                *o += x * y;
            }
        }
    }
    Some(RefData { ov, theta })
}

/// `a[P_i, H_j]` for an `rows × n` block.
fn gather(a: &[Complex64], _n: usize, e: &Excitation, out: &mut Vec<Complex64>) {
    out.clear();
    out.extend(e.pairs.iter().map(|&i| a[i]));
}

fn det_small(m: &[Complex64], k: usize) -> Complex64 {
    match k {
        0 => Complex64::new(1.0, 0.0),
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => det_c(&mut m[..k * k].to_vec(), k),
    }
}

fn adjugate_small(m: &[Complex64], k: usize, out: &mut Vec<Complex64>) {
    out.clear();
    out.resize(k * k, ZERO);
    match k {
        0 => {}
        1 => out[0] = Complex64::new(1.0, 0.0),
        2 => {
            out[0] = m[3];
            out[1] = -m[1];
            out[2] = -m[2];
            out[3] = m[0];
        }
        3 => {
            out[0] = m[4] * m[8] - m[5] * m[7];
            out[1] = m[2] * m[7] - m[1] * m[8];
            out[2] = m[1] * m[5] - m[2] * m[4];
            out[3] = m[5] * m[6] - m[3] * m[8];
            out[4] = m[0] * m[8] - m[2] * m[6];
            out[5] = m[2] * m[3] - m[0] * m[5];
            out[6] = m[3] * m[7] - m[4] * m[6];
            out[7] = m[1] * m[6] - m[0] * m[7];
            out[8] = m[0] * m[4] - m[1] * m[3];
        }
        _ => out.copy_from_slice(&cofactor_adjugate(m, k)),
    }
}

/// `c0, c1, c2` of `det(D0 + t D1 + t² D2)`, by column replacement so that
/// singular `D0` needs no special handling.
fn det_poly_cols(
    d0: &[Complex64],
    d1: &[Complex64],
    d2: Option<&[Complex64]>,
    k: usize,
    work: &mut Vec<Complex64>,
) -> (Complex64, Complex64, Complex64) {
    if k <= 3 {
        return det_poly_closed(d0, d1, d2, k);
    }
    let c0 = det_small(d0, k);
    let mut c1 = ZERO;
    let mut c2 = ZERO;
    let replace = |work: &mut Vec<Complex64>, cols: &[(usize, &[Complex64])]| {
        work.clear();
        work.extend_from_slice(&d0[..k * k]);
        for &(j, src) in cols {
            for i in 0..k {
                work[i * k + j] = src[i * k + j];
            }
        }
    };
    for j in 0..k {
        replace(work, &[(j, d1)]);
        c1 += det_small(work, k);
        if let Some(d2) = d2 {
            replace(work, &[(j, d2)]);
            c2 += det_small(work, k);
            for l in j + 1..k {
                replace(work, &[(j, d1), (l, d1)]);
                c2 += det_small(work, k);
            }
        }
    }
    (c0, c1, c2)
}

type Poly = [Complex64; 3];

fn pmul(a: Poly, b: Poly) -> Poly {
    [a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[0] * b[2] + a[1] * b[1] + a[2] * b[0]]
}

fn psub(a: Poly, b: Poly) -> Poly {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Cofactor expansion on entries truncated at `t²`.
fn det_poly_closed(
    d0: &[Complex64],
    d1: &[Complex64],
    d2: Option<&[Complex64]>,
    k: usize,
) -> (Complex64, Complex64, Complex64) {
    let e = |i: usize| -> Poly { [d0[i], d1[i], d2.map_or(ZERO, |d| d[i])] };
    let p = match k {
        0 => [Complex64::new(1.0, 0.0), ZERO, ZERO],
        1 => e(0),
        2 => psub(pmul(e(0), e(3)), pmul(e(1), e(2))),
        _ => {
            let m: [Poly; 9] = core::array::from_fn(e);
            let a = pmul(m[0], psub(pmul(m[4], m[8]), pmul(m[5], m[7])));
            let b = pmul(m[1], psub(pmul(m[3], m[8]), pmul(m[5], m[6])));
            let c = pmul(m[2], psub(pmul(m[3], m[7]), pmul(m[4], m[6])));
            [a[0] - b[0] + c[0], a[1] - b[1] + c[1], a[2] - b[2] + c[2]]
        }
    };
    (p[0], p[1], p[2])
}

/// Overlaps of every trial string of one spin, through the reference when
/// it is well conditioned.
fn spin_overlaps(trial: &Trial, spin: usize, phi: &[Complex64]) -> (Vec<Complex64>, Option<RefData>) {
    let n = trial.n_electrons(spin);
    let sref = &trial.refs[spin];
    match reference_data(phi, n, trial.norb, &sref.occ) {
        Some(rd) => {
            let mut d = Vec::new();
            let ov = sref
                .exc
                .iter()
                .map(|e| {
                    gather(&rd.theta, n, e, &mut d);
                    rd.ov * e.sign * det_small(&d, e.holes.len())
                })
                .collect();
            (ov, Some(rd))
        }
        None => (string_overlaps(phi, n, &trial.occs[spin]), None),
    }
}

/// `NG[p, q] = Σ_s w_s ⟨s|a†_p a_q|φ⟩` through the reference.
fn green_numerator_ref(trial: &Trial, spin: usize, rd: &RefData, w: &[Complex64]) -> Vec<Complex64> {
    let norb = trial.norb;
    let n = trial.n_electrons(spin);
    let theta = &rd.theta;
    let mut z = vec![ZERO; n * norb];
    let mut d = Vec::new();
    let mut adj = Vec::new();
    let mut r = Vec::new();
    for (e, &ws) in trial.refs[spin].exc.iter().zip(w) {
        if ws == ZERO {
            continue;
        }
        let k = e.holes.len();
        gather(theta, n, e, &mut d);
        let pre = ws * rd.ov * e.sign;
        let a = pre * det_small(&d, k);
        for (m, &p) in e.inplace.iter().enumerate() {
            z[m * norb + p] += a;
        }
        if k == 0 {
            continue;
        }
        // R = adj(D) (Θ[P, :] − E_Hᵀ)
        adjugate_small(&d, k, &mut adj);
        r.clear();
        r.resize(k * n, ZERO);
        for i in 0..k {
            for l in 0..k {
                let c = adj[i * k + l];
                let row = &theta[e.particles[l] * n..(e.particles[l] + 1) * n];
                for (o, x) in r[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += c * x;
                }
                r[i * n + e.holes[l]] -= c;
            }
        }
        for (i, &h) in e.holes.iter().enumerate() {
            for (m, &p) in e.inplace.iter().enumerate() {
                z[h * norb + p] -= pre * r[i * n + m];
            }
        }
    }
    // NG[p, q] = (Θ Z)[q, p]
    let mut ng = vec![ZERO; norb * norb];
    for q in 0..norb {
        for j in 0..n {
            let t = theta[q * n + j];
            if t == ZERO {
                continue;
            }
            for p in 0..norb {
                ng[p * norb + q] += t * z[j * norb + p];
            }
        }
    }
    ng
}

/// Per-string energy pieces through the reference. For each one-body
/// operator `A` the response of `Θ` to `φ → φ + tAφ` is
/// `Θ + t Q − t² Q X` with `T = AΘ`, `X = T[occ_r]` and `Q = T − ΘX`.
fn energy_pieces_ref(trial: &Trial, spin: usize, rd: &RefData) -> EnergyPieces {
    let norb = trial.norb;
    let n = trial.n_electrons(spin);
    let sref = &trial.refs[spin];
    let ns = sref.exc.len();
    let nchol = trial.chol.len();
    let theta = &rd.theta;
    let d0: Vec<Vec<Complex64>> = sref
        .exc
        .iter()
        .map(|e| {
            let mut d = Vec::new();
            gather(theta, n, e, &mut d);
            d
        })
        .collect();
    let pre: Vec<Complex64> = sref.exc.iter().map(|e| rd.ov * e.sign).collect();
    let mut out = EnergyPieces {
        ov: d0.iter().zip(&sref.exc).zip(&pre).map(|((d, e), &c)| c * det_small(d, e.holes.len())).collect(),
        ov_e: vec![ZERO; ns],
        ov_f: vec![ZERO; ns * nchol],
        nchol,
    };
    if n == 0 {
        return out;
    }
    let virt: Vec<usize> = (0..norb).filter(|p| !sref.occ.contains(p)).collect();
    let mut x = vec![ZERO; n * n];
    let mut q = vec![ZERO; norb * n];
    let mut qx = vec![ZERO; norb * n];
    let (mut d1, mut d2, mut work) = (Vec::new(), Vec::new(), Vec::new());
    for op in 0..=nchol {
        let a = if op == 0 { &trial.h } else { &trial.chol[op - 1] };
        let second = op > 0;
        // T = AΘ
        let mut tt = vec![ZERO; norb * n];
        for p in 0..norb {
            let row = &mut tt[p * n..(p + 1) * n];
            for r in 0..norb {
                let v = a[p * norb + r];
                if v == 0.0 {
                    continue;
                }
                for (o, y) in row.iter_mut().zip(&theta[r * n..(r + 1) * n]) {
                    *o += y * v;
                }
            }
        }
        for (i, &o) in sref.occ.iter().enumerate() {
            x[i * n..(i + 1) * n].copy_from_slice(&tt[o * n..(o + 1) * n]);
        }
        let fr: Complex64 = (0..n).map(|i| x[i * n + i]).sum();
        let mut e2r = ZERO;
        if second {
            let mut tr2 = ZERO;
            for i in 0..n {
                for j in 0..n {
                    tr2 += x[i * n + j] * x[j * n + i];
                }
            }
            e2r = (fr * fr - tr2) * 0.5;
        }
        // Q vanishes on reference rows.
        for &p in &virt {
            for j in 0..n {
                let mut acc = tt[p * n + j];
                for l in 0..n {
                    acc -= theta[p * n + l] * x[l * n + j];
                }
                q[p * n + j] = acc;
            }
            if second {
                for j in 0..n {
                    let mut acc = ZERO;
                    for l in 0..n {
                        acc += q[p * n + l] * x[l * n + j];
                    }
                    qx[p * n + j] = -acc;
                }
            }
        }
        for (s, e) in sref.exc.iter().enumerate() {
            let k = e.holes.len();
            let (c0, c1, c2) = if k == 0 {
                (Complex64::new(1.0, 0.0), ZERO, ZERO)
            } else {
                gather(&q, n, e, &mut d1);
                if second {
                    gather(&qx, n, e, &mut d2);
                }
                det_poly_cols(&d0[s], &d1, second.then_some(&d2[..]), k, &mut work)
            };
            let lin = pre[s] * (c1 + fr * c0);
            if second {
                out.ov_f[s * nchol + op - 1] = lin;
                out.ov_e[s] += pre[s] * (c2 + fr * c1 + e2r * c0);
            } else {
                out.ov_e[s] += lin;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Direct route: one inverse (or adjugate) per string.
// ---------------------------------------------------------------------------

/// Overlaps of every trial string of one spin with the walker block.
fn string_overlaps(phi: &[Complex64], n: usize, occs: &[Vec<usize>]) -> Vec<Complex64> {
    let mut m = Vec::with_capacity(n * n);
    occs.iter()
        .map(|occ| {
            select_rows(phi, n, occ, &mut m);
            det_c(&mut m, n)
        })
        .collect()
}

/// Per-string data for one spin: `ov = det M` and `adj = ov · M⁻¹`, where
/// `M = φ[occ, :]`. `minv` is kept for well-conditioned strings.
struct StringData {
    ov: Vec<Complex64>,
    adj: Vec<Vec<Complex64>>,
    minv: Vec<Option<Vec<Complex64>>>,
}

fn cofactor_adjugate(m: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut adj = vec![ZERO; n * n];
    if n == 1 {
        adj[0] = Complex64::new(1.0, 0.0);
        return adj;
    }
    let mut sub = Vec::with_capacity((n - 1) * (n - 1));
    for i in 0..n {
        for j in 0..n {
            sub.clear();
            for r in (0..n).filter(|&r| r != i) {
                for c in (0..n).filter(|&c| c != j) {
                    sub.push(m[r * n + c]);
                }
            }
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            // adj = transpose of the cofactor matrix
            adj[j * n + i] = det_c(&mut sub, n - 1) * sign;
        }
    }
    adj
}

fn string_data(phi: &[Complex64], n: usize, occs: &[Vec<usize>]) -> StringData {
    let mut out = StringData { ov: Vec::with_capacity(occs.len()), adj: Vec::new(), minv: Vec::new() };
    let mut m = Vec::with_capacity(n * n);
    let mut work = Vec::with_capacity(n * n);
    for occ in occs {
        if n == 0 {
            out.ov.push(Complex64::new(1.0, 0.0));
            out.adj.push(Vec::new());
            out.minv.push(Some(Vec::new()));
            continue;
        }
        select_rows(phi, n, occ, &mut m);
        let bound = hadamard_bound(&m, n);
        work.clear();
        work.extend_from_slice(&m);
        let mut inv = vec![ZERO; n * n];
        let ov = det_inverse_c(&mut work, n, &mut inv);
        if ov.norm() > REGULAR_THRESHOLD * bound {
            out.adj.push(inv.iter().map(|x| x * ov).collect());
            out.minv.push(Some(inv));
        } else {
            out.adj.push(cofactor_adjugate(&m, n));
            out.minv.push(None);
        }
        out.ov.push(ov);
    }
    out
}

fn green_numerator_direct(trial: &Trial, spin: usize, phi: &[Complex64], w: &[Complex64]) -> Vec<Complex64> {
    let norb = trial.norb;
    let n = trial.n_electrons(spin);
    let data = string_data(phi, n, &trial.occs[spin]);
    // Y[j, p] = Σ_s w_s adj_s[j, k_s(p)]
    let mut y = vec![ZERO; n * norb];
    for (s, occ) in trial.occs[spin].iter().enumerate() {
        let ws = w[s];
        if ws == ZERO {
            continue;
        }
        let adj = &data.adj[s];
        for (k, &p) in occ.iter().enumerate() {
            for j in 0..n {
                y[j * norb + p] += ws * adj[j * n + k];
            }
        }
    }
    // NG[p, q] = (φ Y)[q, p]
    let mut ng = vec![ZERO; norb * norb];
    for q in 0..norb {
        for j in 0..n {
            let f = phi[q * n + j];
            if f == ZERO {
                continue;
            }
            for p in 0..norb {
                ng[p * norb + q] += f * y[j * norb + p];
            }
        }
    }
    ng
}

/// Coefficients `c1, c2` of `det(M + tB) = Σ_k c_k t^k`, by exact
/// interpolation on `n + 1` scaled roots of unity.
fn det_poly12(m: &[Complex64], b: &[Complex64], n: usize) -> (Complex64, Complex64) {
    if n == 0 {
        return (ZERO, ZERO);
    }
    let nm = math::sqrt(m.iter().map(|x| x.norm_sqr()).sum::<f64>());
    let nb = math::sqrt(b.iter().map(|x| x.norm_sqr()).sum::<f64>());
    if nb == 0.0 {
        return (ZERO, ZERO);
    }
    let s = if nm > 0.0 { nm / nb } else { 1.0 };
    let points = n + 1;
    let mut c1 = ZERO;
    let mut c2 = ZERO;
    let mut work = vec![ZERO; n * n];
    for j in 0..points {
        let theta = 2.0 * core::f64::consts::PI * j as f64 / points as f64;
        let w = Complex64::new(math::cos(theta), math::sin(theta));
        let z = w * s;
        for ((o, &x), &y) in work.iter_mut().zip(m).zip(b) {
            *o = x + z * y;
        }
        let p = det_c(&mut work, n);
        let wc = w.conj();
        c1 += p * wc;
        c2 += p * wc * wc;
    }
    let np = points as f64;
    (c1 / (np * s), c2 / (np * s * s))
}

/// Per-string energy pieces for one spin: `ov`, `ov·E_s` with
/// `E_s = tr(hG) + ½ Σ_γ (f_γ² − ex_γ)`, and `ov·f_γ` (string-major).
struct EnergyPieces {
    ov: Vec<Complex64>,
    ov_e: Vec<Complex64>,
    ov_f: Vec<Complex64>,
    nchol: usize,
}

fn energy_pieces_direct(trial: &Trial, phi: &[Complex64], spin: usize) -> EnergyPieces {
    let norb = trial.norb;
    let n = trial.n_electrons(spin);
    let occs = &trial.occs[spin];
    let nchol = trial.chol.len();
    let data = string_data(phi, n, occs);
    let hphi = real_times_block(&trial.h, phi, norb, n);
    let lphi: Vec<Vec<Complex64>> = trial.chol.iter().map(|l| real_times_block(l, phi, norb, n)).collect();
    let mut out = EnergyPieces {
        ov: data.ov.clone(),
        ov_e: Vec::with_capacity(occs.len()),
        ov_f: Vec::with_capacity(occs.len() * nchol),
        nchol,
    };
    let mut bsel = Vec::with_capacity(n * n);
    let mut msel = Vec::with_capacity(n * n);
    let mut a = vec![ZERO; n * n];
    for (s, occ) in occs.iter().enumerate() {
        let ov = data.ov[s];
        match &data.minv[s] {
            Some(minv) => {
                select_rows(&hphi, n, occ, &mut bsel);
                let mut e = ZERO;
                for k in 0..n {
                    for j in 0..n {
                        e += bsel[k * n + j] * minv[j * n + k];
                    }
                }
                for lp in &lphi {
                    select_rows(lp, n, occ, &mut bsel);
                    for r in 0..n {
                        for c in 0..n {
                            let mut acc = ZERO;
                            for j in 0..n {
                                acc += bsel[r * n + j] * minv[j * n + c];
                            }
                            a[r * n + c] = acc;
                        }
                    }
                    let mut f = ZERO;
                    let mut ex = ZERO;
                    for r in 0..n {
                        f += a[r * n + r];
                        for c in 0..n {
                            ex += a[r * n + c] * a[c * n + r];
                        }
                    }
                    e += (f * f - ex) * 0.5;
                    out.ov_f.push(f * ov);
                }
                out.ov_e.push(e * ov);
            }
            None => {
                select_rows(phi, n, occ, &mut msel);
                select_rows(&hphi, n, occ, &mut bsel);
                let (mut e, _) = det_poly12(&msel, &bsel, n);
                for lp in &lphi {
                    select_rows(lp, n, occ, &mut bsel);
                    let (f, c2) = det_poly12(&msel, &bsel, n);
                    e += c2;
                    out.ov_f.push(f);
                }
                out.ov_e.push(e);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Public evaluation entry points.
// ---------------------------------------------------------------------------

/// `(A φ)` for a real `norb × norb` matrix `A` and a `norb × n` block.
pub(crate) fn real_times_block(a: &[f64], phi: &[Complex64], norb: usize, n: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; norb * n];
    for p in 0..norb {
        let row = &mut out[p * n..(p + 1) * n];
        for q in 0..norb {
            let v = a[p * norb + q];
            if v == 0.0 {
                continue;
            }
            for (o, x) in row.iter_mut().zip(&phi[q * n..(q + 1) * n]) {
                *o += x * v;
            }
        }
    }
    out
}

/// `⟨Ψ_T|φ⟩ = Σ_i c_i det(φ_α[occ_α(i)]) det(φ_β[occ_β(i)])`.
pub fn overlap(trial: &Trial, walker: &Walker) -> Complex64 {
    let (ova, _) = spin_overlaps(trial, 0, &walker.phi[0]);
    let (ovb, _) = spin_overlaps(trial, 1, &walker.phi[1]);
    combine_overlaps(trial, &ova, &ovb)
}

fn combine_overlaps(trial: &Trial, ova: &[Complex64], ovb: &[Complex64]) -> Complex64 {
    match &trial.dense {
        Some(c) => ova
            .iter()
            .zip(c.chunks_exact(ovb.len()))
            .map(|(a, row)| a * dot_real(row, ovb))
            .fold(ZERO, |x, y| x + y),
        None => trial
            .entries
            .iter()
            .map(|&(ia, ib, c)| ova[ia as usize] * ovb[ib as usize] * c)
            .fold(ZERO, |a, b| a + b),
    }
}

fn dot_real(c: &[f64], v: &[Complex64]) -> Complex64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (&x, y) in c.iter().zip(v) {
        re += x * y.re;
        im += x * y.im;
    }
    Complex64::new(re, im)
}

/// `w_α = C ov_β`, `w_β = Cᵀ ov_α` and the total overlap.
fn string_weights(trial: &Trial, ova: &[Complex64], ovb: &[Complex64]) -> (Complex64, Vec<Complex64>, Vec<Complex64>) {
    let mut wa = vec![ZERO; ova.len()];
    let mut wb = vec![ZERO; ovb.len()];
    match &trial.dense {
        Some(c) => {
            for ((w, row), &a) in wa.iter_mut().zip(c.chunks_exact(ovb.len())).zip(ova) {
                *w = dot_real(row, ovb);
                for (o, &x) in wb.iter_mut().zip(row) {
                    *o += a * x;
                }
            }
        }
        None => {
            for &(ia, ib, c) in &trial.entries {
                let (a, b) = (ia as usize, ib as usize);
                wa[a] += ovb[b] * c;
                wb[b] += ova[a] * c;
            }
        }
    }
    let ov = ova.iter().zip(&wa).map(|(a, w)| a * w).fold(ZERO, |x, y| x + y);
    (ov, wa, wb)
}

/// Overlap and mixed one-body Green's functions `G_σ[p,q] = ⟨Ψ_T|a†_p a_q|φ⟩/⟨Ψ_T|φ⟩`
/// (row-major `norb × norb`, one per spin).
pub(crate) fn mixed_green(trial: &Trial, walker: &Walker) -> (Complex64, [Vec<Complex64>; 2]) {
    mixed_green_impl(trial, walker, true)
}

fn mixed_green_impl(trial: &Trial, walker: &Walker, use_reference: bool) -> (Complex64, [Vec<Complex64>; 2]) {
    let norb = trial.norb;
    let spins: [(Vec<Complex64>, Option<RefData>); 2] = core::array::from_fn(|spin| {
        if use_reference {
            spin_overlaps(trial, spin, &walker.phi[spin])
        } else {
            (string_overlaps(&walker.phi[spin], trial.n_electrons(spin), &trial.occs[spin]), None)
        }
    });
    let (ov, wa, wb) = string_weights(trial, &spins[0].0, &spins[1].0);
    let mut greens = [vec![ZERO; norb * norb], vec![ZERO; norb * norb]];
    if ov == ZERO {
        return (ov, greens);
    }
    let inv_ov = ov.inv();
    for (spin, w) in [wa, wb].iter().enumerate() {
        if trial.n_electrons(spin) == 0 {
            continue;
        }
        let ng = match &spins[spin].1 {
            Some(rd) => green_numerator_ref(trial, spin, rd, w),
            None => green_numerator_direct(trial, spin, &walker.phi[spin], w),
        };
        for (g, x) in greens[spin].iter_mut().zip(ng) {
            *g = x * inv_ov;
        }
    }
    (ov, greens)
}

fn energy_pieces(trial: &Trial, walker: &Walker, spin: usize, use_reference: bool) -> EnergyPieces {
    let phi = &walker.phi[spin];
    if use_reference {
        let n = trial.n_electrons(spin);
        if let Some(rd) = reference_data(phi, n, trial.norb, &trial.refs[spin].occ) {
            return energy_pieces_ref(trial, spin, &rd);
        }
    }
    energy_pieces_direct(trial, phi, spin)
}

/// Overlap and `⟨Ψ_T|Ĥ|φ⟩` with the Cholesky two-body operator.
pub(crate) fn energy_numerator(trial: &Trial, walker: &Walker) -> (Complex64, Complex64) {
    energy_numerator_impl(trial, walker, true)
}

fn energy_numerator_impl(trial: &Trial, walker: &Walker, use_reference: bool) -> (Complex64, Complex64) {
    let pa = energy_pieces(trial, walker, 0, use_reference);
    let pb = energy_pieces(trial, walker, 1, use_reference);
    let nchol = pa.nchol;
    if let Some(c) = &trial.dense {
        let nb = pb.ov.len();
        let (mut ov, mut num) = (ZERO, ZERO);
        let mut cf = vec![ZERO; nchol];
        for (a, row) in c.chunks_exact(nb).enumerate() {
            let w_ov = dot_real(row, &pb.ov);
            let w_e = dot_real(row, &pb.ov_e);
            for x in cf.iter_mut() {
                *x = ZERO;
            }
            for (b, &v) in row.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                for (o, f) in cf.iter_mut().zip(&pb.ov_f[b * nchol..(b + 1) * nchol]) {
                    *o += f * v;
                }
            }
            let cross = pa.ov_f[a * nchol..(a + 1) * nchol].iter().zip(&cf).map(|(x, y)| x * y).fold(ZERO, |x, y| x + y);
            ov += pa.ov[a] * w_ov;
            num += pa.ov[a] * w_ov * trial.e_core + pa.ov_e[a] * w_ov + pa.ov[a] * w_e + cross;
        }
        return (ov, num);
    }
    let mut ov = ZERO;
    let mut num = ZERO;
    for &(ia, ib, c) in &trial.entries {
        let (a, b) = (ia as usize, ib as usize);
        let oo = pa.ov[a] * pb.ov[b];
        ov += oo * c;
        let mut cross = ZERO;
        for (x, y) in pa.ov_f[a * nchol..(a + 1) * nchol].iter().zip(&pb.ov_f[b * nchol..(b + 1) * nchol]) {
            cross += x * y;
        }
        num += (oo * trial.e_core + pa.ov_e[a] * pb.ov[b] + pa.ov[a] * pb.ov_e[b] + cross) * c;
    }
    (ov, num)
}

/// Mixed local energy `⟨Ψ_T|Ĥ|φ⟩ / ⟨Ψ_T|φ⟩`.
pub fn local_energy(trial: &Trial, walker: &Walker) -> Result<Complex64> {
    let (ov, num) = energy_numerator(trial, walker);
    if !(ov.norm() >= 1e-14) {
        return Err(Error::DivergenceGuard(ov.norm()));
    }
    Ok(num / ov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::determinant::enumerate_space;
    use crate::fcidump::parse_fcidump;
    use crate::hamiltonian::cholesky_decompose;
    use crate::sci::diagonalize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn h2o_trial() -> Trial {
        let ints = parse_fcidump(include_str!("../../../../fixtures/h2o_sto3g.fcidump")).unwrap();
        let dets = enumerate_space(ints.norb, ints.nelec_alpha, ints.nelec_beta).unwrap();
        let d = diagonalize(&dets, &ints, 1, 1e-10).unwrap();
        let mut psi = d.ground_state().clone();
        // drop the tail so the trial is not an eigenstate
        psi.sort_by_weight();
        psi.dets.truncate(60);
        psi.coeffs.truncate(60);
        let chol = cholesky_decompose(&ints, 1e-12).unwrap();
        prepare_trial(&psi, &ints, &chol).unwrap()
    }

    fn random_walker(norb: usize, na: usize, nb: usize, rng: &mut ChaCha8Rng) -> Walker {
        let mut block = |n: usize| -> Vec<Complex64> {
            (0..norb * n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
        };
        Walker::from_orbitals(block(na), block(nb))
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn reference_route_matches_direct_route() {
        let trial = h2o_trial();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let w = random_walker(trial.norb, trial.n_alpha, trial.n_beta, &mut rng);
            let (ov_r, g_r) = mixed_green_impl(&trial, &w, true);
            let (ov_d, g_d) = mixed_green_impl(&trial, &w, false);
            assert!(close(ov_r, ov_d, 1e-10));
            for spin in 0..2 {
                for (x, y) in g_r[spin].iter().zip(&g_d[spin]) {
                    assert!(close(*x, *y, 1e-8), "{x} vs {y}");
                }
            }
            let (o1, n1) = energy_numerator_impl(&trial, &w, true);
            let (o2, n2) = energy_numerator_impl(&trial, &w, false);
            assert!(close(o1, o2, 1e-10));
            assert!(close(n1 / o1, n2 / o2, 1e-8));
        }
    }

    #[test]
    fn singular_excitations_at_the_reference() {
        // At the leading determinant every excited string has zero overlap
        // but still contributes to G and E through its adjugate.
        let trial = h2o_trial();
        let w = Walker::from_determinant(&trial.leading, trial.norb);
        let (ov_r, g_r) = mixed_green_impl(&trial, &w, true);
        let (ov_d, g_d) = mixed_green_impl(&trial, &w, false);
        assert!(close(ov_r, ov_d, 1e-12));
        for spin in 0..2 {
            for (x, y) in g_r[spin].iter().zip(&g_d[spin]) {
                assert!(close(*x, *y, 1e-10));
            }
        }
        let (o1, n1) = energy_numerator_impl(&trial, &w, true);
        let (o2, n2) = energy_numerator_impl(&trial, &w, false);
        assert!(close(n1 / o1, n2 / o2, 1e-10));
    }

    #[test]
    fn fallback_when_reference_vanishes() {
        let trial = h2o_trial();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut w = random_walker(trial.norb, trial.n_alpha, trial.n_beta, &mut rng);
        // zero one reference row of the α block
        let n = trial.n_alpha;
        let p = trial.refs[0].occ[0];
        for j in 0..n {
            w.phi[0][p * n + j] = ZERO;
        }
        assert!(reference_data(&w.phi[0], n, trial.norb, &trial.refs[0].occ).is_none());
        let (o1, n1) = energy_numerator_impl(&trial, &w, true);
        let (o2, n2) = energy_numerator_impl(&trial, &w, false);
        assert!(close(o1, o2, 1e-12));
        assert!(close(n1 / o1, n2 / o2, 1e-10));
    }

    #[test]
    fn small_determinant_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 1..=4 {
            let mut r = || -> Vec<Complex64> { (0..k * k).map(|_| Complex64::new(rng.random(), rng.random())).collect() };
            let (d0, d1, d2) = (r(), r(), r());
            let mut adj = Vec::new();
            adjugate_small(&d0, k, &mut adj);
            let reference = cofactor_adjugate(&d0, k);
            for (a, b) in adj.iter().zip(&reference) {
                assert!(close(*a, *b, 1e-12));
            }
            // coefficients against interpolation of det(D0 + tD1 + t²D2)
            let (c0, c1, c2) = det_poly_cols(&d0, &d1, Some(&d2), k, &mut Vec::new());
            let eval = |t: f64| {
                let m: Vec<Complex64> = (0..k * k).map(|i| d0[i] + d1[i] * t + d2[i] * t * t).collect();
                det_small(&m, k)
            };
            let h = 1e-3;
            let (fp, f0, fm) = (eval(h), eval(0.0), eval(-h));
            assert!(close(c0, f0, 1e-12));
            assert!(close(c1, (fp - fm) / (2.0 * h), 1e-5));
            assert!(close(c2, (fp + fm - f0 * 2.0) / (2.0 * h * h), 1e-4));
        }
    }
}
