//! Reference implementations for tests. Everything here works directly on
//! spin-orbital occupation vectors with explicit creation and annihilation
//! operators, sharing no matrix-element code with `detforge-core`.
//!
//! Spin-orbital `p` (α) is bit `p`, spin-orbital `p` (β) is bit `norb + p`,
//! and a basis state is `Π a†` applied in ascending bit order to the vacuum.

use std::collections::HashMap;

use detforge_core::{Determinant, Integrals};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

/// Occupation vector over `2·norb` spin orbitals.
pub type Occ = u128;

pub fn to_occ(d: &Determinant, norb: usize) -> Occ {
    (d.alpha as u128) | ((d.beta as u128) << norb)
}

pub fn from_occ(o: Occ, norb: usize) -> Determinant {
    let mask = (1u128 << norb) - 1;
    Determinant::new((o & mask) as u64, ((o >> norb) & mask) as u64)
}

/// `a_i |o⟩` as `(state, sign)`, or `None` when `i` is empty.
pub fn annihilate(o: Occ, i: usize) -> Option<(Occ, f64)> {
    if o >> i & 1 == 0 {
        return None;
    }
    let below = (o & ((1u128 << i) - 1)).count_ones();
    Some((o & !(1u128 << i), if below % 2 == 0 { 1.0 } else { -1.0 }))
}

/// `a†_i |o⟩` as `(state, sign)`, or `None` when `i` is occupied.
pub fn create(o: Occ, i: usize) -> Option<(Occ, f64)> {
    if o >> i & 1 == 1 {
        return None;
    }
    let below = (o & ((1u128 << i) - 1)).count_ones();
    Some((o | (1u128 << i), if below % 2 == 0 { 1.0 } else { -1.0 }))
}

/// Applies a string of operators, rightmost first. `(index, true)` is a
/// creation operator.
pub fn apply_ops(o: Occ, ops: &[(usize, bool)]) -> Option<(Occ, f64)> {
    let mut state = o;
    let mut sign = 1.0;
    for &(i, dagger) in ops.iter().rev() {
        let (s, f) = if dagger { create(state, i)? } else { annihilate(state, i)? };
        state = s;
        sign *= f;
    }
    Some((state, sign))
}

/// Canonically ordered determinant basis of the `(na, nb)` sector.
pub fn basis(norb: usize, na: usize, nb: usize) -> Vec<Determinant> {
    let mut out = Vec::new();
    for a in 0u64..(1u64 << norb) {
        if a.count_ones() as usize != na {
            continue;
        }
        for b in 0u64..(1u64 << norb) {
            if b.count_ones() as usize == nb {
                out.push(Determinant::new(a, b));
            }
        }
    }
    out
}

/// Sign `P` with `|d2⟩ = P · Π a†_p a_h |d1⟩`, found by applying the
/// operators one pair at a time.
pub fn excitation_sign(d1: &Determinant, d2: &Determinant, norb: usize) -> f64 {
    let o1 = to_occ(d1, norb);
    let o2 = to_occ(d2, norb);
    let holes: Vec<usize> = (0..2 * norb).filter(|&i| o1 >> i & 1 == 1 && o2 >> i & 1 == 0).collect();
    let parts: Vec<usize> = (0..2 * norb).filter(|&i| o2 >> i & 1 == 1 && o1 >> i & 1 == 0).collect();
    let mut state = o1;
    let mut sign = 1.0;
    for (&h, &p) in holes.iter().zip(&parts) {
        let (s, f) = apply_ops(state, &[(p, true), (h, false)]).unwrap();
        state = s;
        sign *= f;
    }
    assert_eq!(state, o2);
    sign
}

/// `Ĥ = E_core + Σ h_pq a†_pσ a_qσ + ½ Σ (pq|rs) a†_pσ a†_rτ a_sτ a_qσ` as a
/// dense matrix over `basis(norb, na, nb)`.
pub fn dense_hamiltonian(ints: &Integrals) -> (Vec<Determinant>, DMatrix<f64>) {
    let norb = ints.norb;
    let dets = basis(norb, ints.nelec_alpha, ints.nelec_beta);
    let index: HashMap<Occ, usize> = dets.iter().enumerate().map(|(i, d)| (to_occ(d, norb), i)).collect();
    let dim = dets.len();
    let mut h = DMatrix::zeros(dim, dim);
    for (col, d) in dets.iter().enumerate() {
        let o = to_occ(d, norb);
        h[(col, col)] += ints.e_core;
        for s in 0..2 {
            for p in 0..norb {
                for q in 0..norb {
                    let v = ints.h(p, q);
                    if v == 0.0 {
                        continue;
                    }
                    if let Some((t, f)) = apply_ops(o, &[(s * norb + p, true), (s * norb + q, false)]) {
                        h[(index[&t], col)] += f * v;
                    }
                }
            }
        }
        for s in 0..2 {
            for t in 0..2 {
                for p in 0..norb {
                    for q in 0..norb {
                        for r in 0..norb {
                            for u in 0..norb {
                                let v = ints.v(p, q, r, u);
                                if v == 0.0 {
                                    continue;
                                }
                                let ops = [
                                    (s * norb + p, true),
                                    (t * norb + r, true),
                                    (t * norb + u, false),
                                    (s * norb + q, false),
                                ];
                                if let Some((st, f)) = apply_ops(o, &ops) {
                                    h[(index[&st], col)] += 0.5 * f * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dets, h)
}

/// Lowest eigenpair of a real symmetric matrix. Small matrices use a dense
/// eigensolver; larger ones Lanczos with full reorthogonalization.
pub fn lowest_eigenpair(h: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let n = h.nrows();
    if n <= 600 {
        let eig = SymmetricEigen::new(h.clone());
        let (i, &e) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        return (e, fix_sign(eig.eigenvectors.column(i).into_owned()));
    }
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
    v /= v.norm();
    let mut last = f64::INFINITY;
    for k in 0..n.min(800) {
        basis.push(v.clone());
        let mut w = h * &v;
        let a = v.dot(&w);
        alphas.push(a);
        for b in &basis {
            let c = b.dot(&w);
            w -= b * c;
        }
        for b in &basis {
            let c = b.dot(&w);
            w -= b * c;
        }
        let beta = w.norm();
        let m = alphas.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (imin, &e) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let y = eig.eigenvectors.column(imin);
        let converged = (beta * y[m - 1]).abs() < 1e-12 || (k > 20 && (e - last).abs() < 1e-14);
        if converged || beta < 1e-14 || k + 1 == n.min(800) {
            let mut x = DVector::zeros(n);
            for (j, b) in basis.iter().enumerate() {
                x += b * y[j];
            }
            x /= x.norm();
            return (e, fix_sign(x));
        }
        last = e;
        betas.push(beta);
        v = w / beta;
    }
    unreachable!()
}

fn fix_sign(mut x: DVector<f64>) -> DVector<f64> {
    let imax = x.iamax();
    if x[imax] < 0.0 {
        x = -x;
    }
    x
}

/// FCI ground energy and vector in canonical determinant order.
pub fn fci(ints: &Integrals) -> (f64, Vec<Determinant>, Vec<f64>) {
    let (dets, h) = dense_hamiltonian(ints);
    let (e, v) = lowest_eigenpair(&h);
    (e, dets, v.iter().copied().collect())
}

/// `⟨Ψ|Ĥ|Ψ⟩`, `⟨Ψ|Ĥ²|Ψ⟩` and `(⟨Ĥ²⟩ − ⟨Ĥ⟩²)/⟨Ĥ⟩²` for a vector over
/// `basis`, computed with the dense matrix.
pub fn dense_variance(h: &DMatrix<f64>, basis: &[Determinant], dets: &[Determinant], coeffs: &[f64]) -> (f64, f64, f64) {
    let index: HashMap<Determinant, usize> = basis.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut v = DVector::zeros(basis.len());
    for (d, c) in dets.iter().zip(coeffs) {
        v[index[d]] = *c;
    }
    let n2 = v.dot(&v);
    let hv = h * &v;
    let e = v.dot(&hv) / n2;
    let h2 = hv.dot(&hv) / n2;
    (e, h2, (h2 - e * e) / (e * e))
}

/// Expansion coefficients `⟨x|φ⟩` of a walker (`norb × n_σ` row-major
/// blocks) over `basis`, by minors.
pub fn expand_walker(
    alpha: &[Complex64],
    beta: &[Complex64],
    norb: usize,
    basis: &[Determinant],
) -> Vec<Complex64> {
    let minor = |block: &[Complex64], mask: u64| -> Complex64 {
        let n = mask.count_ones() as usize;
        if n == 0 {
            return Complex64::new(1.0, 0.0);
        }
        let rows: Vec<usize> = (0..norb).filter(|&p| mask >> p & 1 == 1).collect();
        let m = DMatrix::from_fn(n, n, |i, j| block[rows[i] * n + j]);
        m.determinant()
    };
    basis.iter().map(|d| minor(alpha, d.alpha) * minor(beta, d.beta)).collect()
}

/// `⟨Ψ_T|Ĥ|φ⟩ / ⟨Ψ_T|φ⟩` with the dense Hamiltonian.
pub fn dense_local_energy(
    h: &DMatrix<f64>,
    basis: &[Determinant],
    trial_dets: &[Determinant],
    trial_coeffs: &[f64],
    walker: &[Complex64],
) -> Complex64 {
    let index: HashMap<Determinant, usize> = basis.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = Complex64::new(0.0, 0.0);
    for (d, &c) in trial_dets.iter().zip(trial_coeffs) {
        let i = index[d];
        den += walker[i] * c;
        for (j, w) in walker.iter().enumerate() {
            num += *w * (c * h[(i, j)]);
        }
    }
    num / den
}

/// Many-body matrix of `Σ_σ Σ_pq K_pq a†_pσ a_qσ` over `basis`.
pub fn one_body_operator(k: &[f64], norb: usize, basis: &[Determinant]) -> DMatrix<f64> {
    let index: HashMap<Occ, usize> = basis.iter().enumerate().map(|(i, d)| (to_occ(d, norb), i)).collect();
    let mut m = DMatrix::zeros(basis.len(), basis.len());
    for (col, d) in basis.iter().enumerate() {
        let o = to_occ(d, norb);
        for s in 0..2 {
            for p in 0..norb {
                for q in 0..norb {
                    let v = k[p * norb + q];
                    if v == 0.0 {
                        continue;
                    }
                    if let Some((t, f)) = apply_ops(o, &[(s * norb + p, true), (s * norb + q, false)]) {
                        m[(index[&t], col)] += f * v;
                    }
                }
            }
        }
    }
    m
}

/// `e^{−K̂₂} e^{K̂₁} e^{iĴ} e^{−K̂₁} |ref⟩` with dense operator exponentials.
pub fn dense_lucj(
    k1: &[f64],
    k2: &[f64],
    j: &[f64],
    norb: usize,
    reference: &Determinant,
) -> (Vec<Determinant>, Vec<Complex64>) {
    let basis = basis(norb, reference.n_alpha(), reference.n_beta());
    let to_c = |m: DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
    let e_k1 = to_c(one_body_operator(k1, norb, &basis)).exp();
    let e_mk1 = to_c(-one_body_operator(k1, norb, &basis)).exp();
    let e_mk2 = to_c(-one_body_operator(k2, norb, &basis)).exp();
    let m = 2 * norb;
    let jastrow = DMatrix::from_fn(basis.len(), basis.len(), |a, b| {
        if a != b {
            return Complex64::new(0.0, 0.0);
        }
        let o = to_occ(&basis[a], norb);
        let mut phase = 0.0;
        for x in 0..m {
            for y in 0..m {
                if o >> x & 1 == 1 && o >> y & 1 == 1 {
                    phase += j[x * m + y];
                }
            }
        }
        Complex64::new(phase.cos(), phase.sin())
    });
    let mut v = DVector::zeros(basis.len());
    v[basis.iter().position(|d| d == reference).unwrap()] = Complex64::new(1.0, 0.0);
    let out = e_mk2 * e_k1 * jastrow * e_mk1 * v;
    (basis, out.iter().copied().collect())
}
