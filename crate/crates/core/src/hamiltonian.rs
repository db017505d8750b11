//! Hamiltonian matrix elements between determinants, Cholesky factorization
//! of the two-electron tensor, and sparse subspace Hamiltonians.

use alloc::vec;
use alloc::vec::Vec;

use crate::determinant::{bits, check_same_counts, single_phase, Determinant};
use crate::error::{Error, Result};
use crate::fcidump::{pair_index, Integrals};
use crate::math;
use crate::FxMap;

/// `⟨d|Ĥ|d⟩`, including the core energy.
pub fn diagonal_element(d: &Determinant, ints: &Integrals) -> f64 {
    let mut e = ints.e_core;
    let occ_a: Vec<usize> = bits(d.alpha).collect();
    let occ_b: Vec<usize> = bits(d.beta).collect();
    for &p in occ_a.iter().chain(&occ_b) {
        e += ints.h(p, p);
    }
    for occ in [&occ_a, &occ_b] {
        for (i, &p) in occ.iter().enumerate() {
            for &q in &occ[..i] {
                e += ints.v(p, p, q, q) - ints.v(p, q, q, p);
            }
        }
    }
    for &p in &occ_a {
        for &q in &occ_b {
            e += ints.v(p, p, q, q);
        }
    }
    e
}

fn single_element(same: u64, other: u64, h: usize, p: usize, ints: &Integrals) -> f64 {
    let mut e = ints.h(p, h);
    for q in bits(same) {
        e += ints.v(p, h, q, q) - ints.v(p, q, q, h);
    }
    for q in bits(other) {
        e += ints.v(p, h, q, q);
    }
    single_phase(same, h, p) * e
}

/// Slater–Condon element without electron-count validation.
pub fn matrix_element(d1: &Determinant, d2: &Determinant, ints: &Integrals) -> f64 {
    let xa = d1.alpha ^ d2.alpha;
    let xb = d1.beta ^ d2.beta;
    let na = xa.count_ones();
    let nb = xb.count_ones();
    match (na, nb) {
        (0, 0) => diagonal_element(d1, ints),
        (2, 0) => {
            let h = (d1.alpha & xa).trailing_zeros() as usize;
            let p = (d2.alpha & xa).trailing_zeros() as usize;
            single_element(d1.alpha, d1.beta, h, p, ints)
        }
        (0, 2) => {
            let h = (d1.beta & xb).trailing_zeros() as usize;
            let p = (d2.beta & xb).trailing_zeros() as usize;
            single_element(d1.beta, d1.alpha, h, p, ints)
        }
        (4, 0) => same_spin_double(d1.alpha, d2.alpha, ints),
        (0, 4) => same_spin_double(d1.beta, d2.beta, ints),
        (2, 2) => {
            let ha = (d1.alpha & xa).trailing_zeros() as usize;
            let pa = (d2.alpha & xa).trailing_zeros() as usize;
            let hb = (d1.beta & xb).trailing_zeros() as usize;
            let pb = (d2.beta & xb).trailing_zeros() as usize;
            single_phase(d1.alpha, ha, pa) * single_phase(d1.beta, hb, pb) * ints.v(pa, ha, pb, hb)
        }
        _ => 0.0,
    }
}

fn same_spin_double(s1: u64, s2: u64, ints: &Integrals) -> f64 {
    let x = s1 ^ s2;
    let mut holes = bits(s1 & x);
    let mut parts = bits(s2 & x);
    let (h1, h2) = (holes.next().unwrap(), holes.next().unwrap());
    let (p1, p2) = (parts.next().unwrap(), parts.next().unwrap());
    let phase2 = single_phase(s1, h2, p2);
    let mid = (s1 & !(1 << h2)) | (1 << p2);
    let phase = phase2 * single_phase(mid, h1, p1);
    phase * (ints.v(p1, h1, p2, h2) - ints.v(p1, h2, p2, h1))
}

/// `⟨d1|Ĥ|d2⟩` by the Slater–Condon rules.
pub fn slater_condon(d1: &Determinant, d2: &Determinant, ints: &Integrals) -> Result<f64> {
    check_same_counts(d1, d2)?;
    Ok(matrix_element(d1, d2, ints))
}

/// Calls `f` for every determinant reachable from `d` by a single or double
/// excitation within `norb` orbitals (each target exactly once).
pub fn for_each_excitation(d: &Determinant, norb: usize, mut f: impl FnMut(Determinant)) {
    let full = crate::determinant::low_bits(norb);
    let occ_a: Vec<usize> = bits(d.alpha).collect();
    let occ_b: Vec<usize> = bits(d.beta).collect();
    let vir_a: Vec<usize> = bits(full & !d.alpha).collect();
    let vir_b: Vec<usize> = bits(full & !d.beta).collect();
    let singles = |s: u64, occ: &[usize], vir: &[usize]| -> Vec<u64> {
        let mut out = Vec::with_capacity(occ.len() * vir.len());
        for &h in occ {
            for &p in vir {
                out.push(s ^ (1 << h) ^ (1 << p));
            }
        }
        out
    };
    let sa = singles(d.alpha, &occ_a, &vir_a);
    let sb = singles(d.beta, &occ_b, &vir_b);
    for &a in &sa {
        f(Determinant::new(a, d.beta));
    }
    for &b in &sb {
        f(Determinant::new(d.alpha, b));
    }
    for &a in &sa {
        for &b in &sb {
            f(Determinant::new(a, b));
        }
    }
    let doubles = |s: u64, occ: &[usize], vir: &[usize], f: &mut dyn FnMut(u64)| {
        for (i, &h1) in occ.iter().enumerate() {
            for &h2 in &occ[i + 1..] {
                for (j, &p1) in vir.iter().enumerate() {
                    for &p2 in &vir[j + 1..] {
                        f(s ^ (1 << h1) ^ (1 << h2) ^ (1 << p1) ^ (1 << p2));
                    }
                }
            }
        }
    };
    doubles(d.alpha, &occ_a, &vir_a, &mut |a| f(Determinant::new(a, d.beta)));
    doubles(d.beta, &occ_b, &vir_b, &mut |b| f(Determinant::new(d.alpha, b)));
}

/// Cholesky vectors `L^γ` with `(pq|rs) ≈ Σ_γ L^γ[p,q] L^γ[r,s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactors {
    pub norb: usize,
    pub cutoff: f64,
    /// Each factor is a symmetric row-major `norb × norb` matrix.
    pub factors: Vec<Vec<f64>>,
}

impl CholeskyFactors {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn reconstruct(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        let n = self.norb;
        self.factors.iter().map(|l| l[p * n + q] * l[r * n + s]).sum()
    }

    /// Largest reconstruction error over canonical `(pq|rs)`.
    pub fn max_error(&self, ints: &Integrals) -> f64 {
        ints.canonical_two_body()
            .map(|(p, q, r, s, v)| math::abs(v - self.reconstruct(p, q, r, s)))
            .fold(0.0, f64::max)
    }
}

/// Pivoted incomplete Cholesky decomposition of the `(pq),(rs)` matrix.
///
/// Stops when the largest remaining diagonal residual is `≤ cutoff`.
pub fn cholesky_decompose(ints: &Integrals, cutoff: f64) -> Result<CholeskyFactors> {
    let n = ints.norb;
    let npair = ints.npair();
    let mut diag: Vec<f64> = (0..npair).map(|pq| ints.v_pairs(pq, pq)).collect();
    let mut vecs: Vec<Vec<f64>> = Vec::new();
    let mut used = vec![false; npair];
    loop {
        let (piv, &dmax) = match diag
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .max_by(|a, b| a.1.total_cmp(b.1))
        {
            Some(x) => x,
            None => break,
        };
        if let Some(&dmin) = diag.iter().min_by(|a, b| a.total_cmp(b)) {
            if dmin < -10.0 * cutoff {
                return Err(Error::NotPsd { residual: dmin });
            }
        }
        if dmax <= cutoff {
            break;
        }
        let scale = 1.0 / math::sqrt(dmax);
        let mut col: Vec<f64> = (0..npair).map(|kl| ints.v_pairs(kl, piv)).collect();
        for prev in &vecs {
            let lp = prev[piv];
            if lp != 0.0 {
                for (c, &l) in col.iter_mut().zip(prev) {
                    *c -= l * lp;
                }
            }
        }
        for (kl, c) in col.iter_mut().enumerate() {
            if used[kl] {
                *c = 0.0;
            } else {
                *c *= scale;
            }
        }
        col[piv] = math::sqrt(dmax);
        for (d, &c) in diag.iter_mut().zip(&col) {
            *d -= c * c;
        }
        diag[piv] = 0.0;
        used[piv] = true;
        vecs.push(col);
    }
    let factors = vecs
        .into_iter()
        .map(|v| {
            let mut m = vec![0.0; n * n];
            for p in 0..n {
                for q in 0..n {
                    m[p * n + q] = v[pair_index(p, q)];
                }
            }
            m
        })
        .collect();
    Ok(CholeskyFactors {
        norb: n,
        cutoff,
        factors,
    })
}

/// Sparse symmetric Hamiltonian over a determinant list (CSR, both triangles).
#[derive(Clone, Debug)]
pub struct SubspaceHamiltonian {
    pub dets: Vec<Determinant>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SubspaceHamiltonian {
    pub fn dim(&self) -> usize {
        self.dets.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .zip(&self.vals[range])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&(j as u32)) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `y = H x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            let mut acc = 0.0;
            for (&c, &v) in self.cols[range.clone()].iter().zip(&self.vals[range]) {
                acc += v * x[c as usize];
            }
            *yi = acc;
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for (j, v) in self.row(i) {
                worst = worst.max(math::abs(v - self.get(j, i)));
            }
        }
        worst
    }

    /// Coordinate triples `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim()).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }
}

/// Limits applied while assembling a subspace Hamiltonian.
#[derive(Clone, Copy, Debug)]
pub struct AssemblyOptions {
    pub max_nonzeros: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            max_nonzeros: 400_000_000,
        }
    }
}

/// For each string, the indices of strings that differ by exactly one and
/// exactly two electrons, found through single- and double-removal keys.
struct StringConnectivity {
    singles: Vec<Vec<u32>>,
    doubles: Vec<Vec<u32>>,
}

fn string_connectivity(strings: &[u64]) -> StringConnectivity {
    let m = strings.len();
    let mut singles = vec![Vec::new(); m];
    let mut doubles = vec![Vec::new(); m];
    let mut buckets: FxMap<u64, Vec<u32>> = FxMap::default();
    for (i, &s) in strings.iter().enumerate() {
        for b in bits(s) {
            buckets.entry(s & !(1 << b)).or_default().push(i as u32);
        }
    }
    for members in buckets.values() {
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                singles[i as usize].push(j);
                singles[j as usize].push(i);
            }
        }
    }
    buckets.clear();
    for (i, &s) in strings.iter().enumerate() {
        let occ: Vec<usize> = bits(s).collect();
        for (x, &b1) in occ.iter().enumerate() {
            for &b2 in &occ[x + 1..] {
                buckets
                    .entry(s & !(1 << b1) & !(1 << b2))
                    .or_default()
                    .push(i as u32);
            }
        }
    }
    for members in buckets.values() {
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                if (strings[i as usize] ^ strings[j as usize]).count_ones() == 4 {
                    doubles[i as usize].push(j);
                    doubles[j as usize].push(i);
                }
            }
        }
    }
    StringConnectivity { singles, doubles }
}

fn unique_sorted(values: impl Iterator<Item = u64>) -> Vec<u64> {
    let mut v: Vec<u64> = values.collect();
    v.sort_unstable();
    v.dedup();
    v
}

pub fn build_subspace_hamiltonian(dets: &[Determinant], ints: &Integrals) -> Result<SubspaceHamiltonian> {
    build_subspace_hamiltonian_with(dets, ints, AssemblyOptions::default())
}

/// Assembles the subspace Hamiltonian. `dets` must be sorted, free of
/// duplicates and share one `(nα, nβ)`.
pub fn build_subspace_hamiltonian_with(
    dets: &[Determinant],
    ints: &Integrals,
    options: AssemblyOptions,
) -> Result<SubspaceHamiltonian> {
    if let Some(first) = dets.first() {
        for d in dets {
            check_same_counts(first, d)?;
        }
    }
    if !dets.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument(
            "determinants must be sorted and unique".into(),
        ));
    }
    if dets.len() > u32::MAX as usize {
        return Err(Error::Capacity {
            what: "subspace dimension",
            needed: dets.len() as u128,
            cap: u32::MAX as u128,
        });
    }
    let alphas = unique_sorted(dets.iter().map(|d| d.alpha));
    let betas = unique_sorted(dets.iter().map(|d| d.beta));
    let conn_a = string_connectivity(&alphas);
    let conn_b = string_connectivity(&betas);
    let mut index: FxMap<(u32, u32), u32> = FxMap::default();
    index.reserve(dets.len());
    let mut coords = Vec::with_capacity(dets.len());
    for (i, d) in dets.iter().enumerate() {
        let ia = alphas.binary_search(&d.alpha).unwrap() as u32;
        let ib = betas.binary_search(&d.beta).unwrap() as u32;
        index.insert((ia, ib), i as u32);
        coords.push((ia, ib));
    }

    let mut row_ptr = Vec::with_capacity(dets.len() + 1);
    row_ptr.push(0usize);
    let mut cols: Vec<u32> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    let mut row: Vec<(u32, f64)> = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        let (ia, ib) = coords[i];
        row.clear();
        let mut push = |j: u32| {
            let v = matrix_element(d, &dets[j as usize], ints);
            row.push((j, v));
        };
        push(i as u32);
        for &jb in conn_b.singles[ib as usize].iter().chain(&conn_b.doubles[ib as usize]) {
            if let Some(&j) = index.get(&(ia, jb)) {
                push(j);
            }
        }
        for &ja in conn_a.singles[ia as usize].iter().chain(&conn_a.doubles[ia as usize]) {
            if let Some(&j) = index.get(&(ja, ib)) {
                push(j);
            }
        }
        for &ja in &conn_a.singles[ia as usize] {
            for &jb in &conn_b.singles[ib as usize] {
                if let Some(&j) = index.get(&(ja, jb)) {
                    push(j);
                }
            }
        }
        row.sort_unstable_by_key(|&(j, _)| j);
        if vals.len() + row.len() > options.max_nonzeros {
            return Err(Error::Capacity {
                what: "subspace Hamiltonian nonzeros",
                needed: (vals.len() + row.len()) as u128,
                cap: options.max_nonzeros as u128,
            });
        }
        for &(j, v) in &row {
            cols.push(j);
            vals.push(v);
        }
        row_ptr.push(vals.len());
    }
    Ok(SubspaceHamiltonian {
        dets: dets.to_vec(),
        row_ptr,
        cols,
        vals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::determinant::excitation_degree;

    fn toy_integrals() -> Integrals {
        let n = 4;
        let mut ints = Integrals::zeros(n, 2, 2);
        ints.e_core = 0.5;
        for p in 0..n {
            for q in 0..=p {
                ints.set_h(p, q, math::sin((p * 5 + q * 3) as f64) * 0.3 - if p == q { p as f64 } else { 0.0 });
            }
        }
        // a positive-definite pair matrix: (pq|rs) = Σ_k f_k(pq) f_k(rs)
        let npair = ints.npair();
        let f: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..npair).map(|x| math::cos((x * (k + 2) + k) as f64) * 0.4).collect())
            .collect();
        for (p, q, r, s, _) in ints.clone().canonical_two_body() {
            let pq = pair_index(p, q);
            let rs = pair_index(r, s);
            let val: f64 = f.iter().map(|fk| fk[pq] * fk[rs]).sum();
            ints.set_v(p, q, r, s, val);
        }
        ints
    }

    #[test]
    fn triple_excitations_vanish() {
        let ints = toy_integrals();
        let d1 = Determinant::new(0b0011, 0b0011);
        let d2 = Determinant::new(0b1100, 0b0101);
        assert_eq!(excitation_degree(&d1, &d2), 3);
        assert_eq!(slater_condon(&d1, &d2, &ints).unwrap(), 0.0);
    }

    #[test]
    fn cholesky_zero_and_diagonal() {
        let ints = Integrals::zeros(3, 1, 1);
        assert!(cholesky_decompose(&ints, 1e-12).unwrap().is_empty());
        let mut diag = Integrals::zeros(3, 1, 1);
        for p in 0..3 {
            diag.set_v(p, p, p, p, 1.0);
        }
        let chol = cholesky_decompose(&diag, 1e-12).unwrap();
        assert_eq!(chol.len(), 3);
        for l in &chol.factors {
            let nonzero: Vec<f64> = l.iter().copied().filter(|&x| x != 0.0).collect();
            assert_eq!(nonzero, [1.0]);
        }
    }

    #[test]
    fn cholesky_reconstructs_toy() {
        let ints = toy_integrals();
        let chol = cholesky_decompose(&ints, 1e-12).unwrap();
        assert!(chol.len() <= 3 + 1);
        assert!(chol.max_error(&ints) <= 1e-12);
    }

    #[test]
    fn not_psd_detected() {
        let mut ints = Integrals::zeros(2, 1, 1);
        ints.set_v(0, 0, 0, 0, 1.0);
        ints.set_v(1, 1, 1, 1, 1.0);
        ints.set_v(0, 0, 1, 1, 2.0);
        assert!(matches!(cholesky_decompose(&ints, 1e-12), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn single_determinant_subspace() {
        let ints = toy_integrals();
        let d = Determinant::aufbau(2, 2);
        let h = build_subspace_hamiltonian(&[d], &ints).unwrap();
        assert_eq!(h.dim(), 1);
        assert_eq!(h.get(0, 0), slater_condon(&d, &d, &ints).unwrap());
    }

    #[test]
    fn subspace_matches_pairwise_elements() {
        let ints = toy_integrals();
        let mut dets = crate::determinant::enumerate_space(4, 2, 2).unwrap();
        dets.retain(|d| (d.alpha ^ d.beta).count_ones() != 2);
        let h = build_subspace_hamiltonian(&dets, &ints).unwrap();
        assert!(h.max_asymmetry() <= 1e-12);
        let mut within_two = 0;
        for i in 0..dets.len() {
            for j in 0..dets.len() {
                let want = matrix_element(&dets[i], &dets[j], &ints);
                assert!((h.get(i, j) - want).abs() < 1e-14);
                if excitation_degree(&dets[i], &dets[j]) <= 2 {
                    within_two += 1;
                }
            }
        }
        assert!(h.nnz() <= within_two);
    }

    #[test]
    fn excitation_enumeration_counts() {
        let d = Determinant::aufbau(2, 2);
        let mut seen = alloc::collections::BTreeSet::new();
        for_each_excitation(&d, 4, |t| {
            assert!(seen.insert(t));
            assert!((1..=2).contains(&excitation_degree(&d, &t)));
        });
        // singles 2*4, doubles: aa 1, bb 1, ab 16
        assert_eq!(seen.len(), 8 + 1 + 1 + 16);
    }
}
