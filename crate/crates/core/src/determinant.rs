//! Slater determinants as pairs of occupation bitmasks.
//!
//! Orbital `p` of a spin channel is bit `p` of the mask. The second-quantized
//! ordering convention used for fermionic signs is: creation operators in
//! ascending orbital order, the whole α string before the β string.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};

/// Largest number of spatial orbitals a determinant can hold.
pub const MAX_ORBITALS: usize = 64;

/// Default cap on the size of an enumerated configuration space.
pub const DEFAULT_SPACE_CAP: usize = 50_000_000;

/// One Slater configuration: α and β occupation bitmasks.
///
/// Ordering is lexicographic on `(alpha, beta)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Determinant {
    pub alpha: u64,
    pub beta: u64,
}

impl Determinant {
    pub const fn new(alpha: u64, beta: u64) -> Self {
        Self { alpha, beta }
    }

    /// Aufbau determinant with the lowest `na`/`nb` orbitals occupied.
    pub fn aufbau(na: usize, nb: usize) -> Self {
        Self::new(low_bits(na), low_bits(nb))
    }

    pub fn n_alpha(&self) -> usize {
        self.alpha.count_ones() as usize
    }

    pub fn n_beta(&self) -> usize {
        self.beta.count_ones() as usize
    }

    pub fn occupied_alpha(&self) -> Vec<usize> {
        bits(self.alpha).collect()
    }

    pub fn occupied_beta(&self) -> Vec<usize> {
        bits(self.beta).collect()
    }

    /// Bitstring `β…β|α…α` with orbital 0 of each spin rightmost.
    pub fn to_bitstring(&self, norb: usize) -> String {
        let mut s = String::with_capacity(2 * norb + 1);
        for (half, mask) in [self.beta, self.alpha].into_iter().enumerate() {
            if half == 1 {
                s.push('|');
            }
            for p in (0..norb).rev() {
                s.push(if mask >> p & 1 == 1 { '1' } else { '0' });
            }
        }
        s
    }

    /// Inverse of [`Determinant::to_bitstring`]. A `|` between the β and α
    /// halves is accepted. Returns the determinant and the orbital count.
    pub fn from_bitstring(text: &str) -> Result<(Self, usize)> {
        let digits: String = text.trim().chars().filter(|&c| c != '|').collect();
        if digits.is_empty() || digits.len() % 2 != 0 || digits.len() > 2 * MAX_ORBITALS {
            return Err(Error::InvalidArgument(alloc::format!(
                "bitstring {text:?} must hold an even number of bits, at most {}",
                2 * MAX_ORBITALS
            )));
        }
        let norb = digits.len() / 2;
        let mut masks = [0u64; 2];
        for (half, chunk) in digits.as_bytes().chunks(norb).enumerate() {
            for (i, &c) in chunk.iter().enumerate() {
                let bit = match c {
                    b'0' => 0,
                    b'1' => 1,
                    _ => {
                        return Err(Error::InvalidArgument(alloc::format!(
                            "bitstring {text:?} contains a non-binary character"
                        )))
                    }
                };
                masks[half] |= bit << (norb - 1 - i);
            }
        }
        Ok((Self::new(masks[1], masks[0]), norb))
    }
}

/// Mask with the lowest `n` bits set.
pub fn low_bits(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Iterates set bit positions in ascending order.
pub fn bits(mut mask: u64) -> impl Iterator<Item = usize> {
    core::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let p = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(p)
        }
    })
}

/// Mask of the bits strictly between `a` and `b`.
#[inline]
fn between(a: usize, b: usize) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi - lo <= 1 {
        0
    } else {
        low_bits(hi) & !low_bits(lo + 1)
    }
}

/// Phase of `a†_p a_h` acting on a string where `h` is occupied and `p` is
/// not: `(-1)` to the number of occupied orbitals strictly between them.
#[inline]
pub fn single_phase(string: u64, h: usize, p: usize) -> f64 {
    if (string & between(h, p)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Holes and particles of one spin channel, both ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpinExcitation {
    pub holes: Vec<usize>,
    pub particles: Vec<usize>,
}

impl SpinExcitation {
    pub fn degree(&self) -> usize {
        self.holes.len()
    }
}

/// Excitation relating two determinants.
///
/// `sign` is the phase `P` in `|d2⟩ = P · Π_k a†_{p_k} a_{h_k} |d1⟩`, with
/// holes and particles of each spin paired in ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExcitationInfo {
    pub alpha: SpinExcitation,
    pub beta: SpinExcitation,
    pub sign: i8,
}

impl ExcitationInfo {
    pub fn degree(&self) -> usize {
        self.alpha.degree() + self.beta.degree()
    }
}

fn spin_excitation(s1: u64, s2: u64) -> (SpinExcitation, f64) {
    let holes: Vec<usize> = bits(s1 & !s2).collect();
    let particles: Vec<usize> = bits(s2 & !s1).collect();
    let mut phase = 1.0;
    let mut cur = s1;
    for (&h, &p) in holes.iter().zip(&particles).rev() {
        phase *= single_phase(cur, h, p);
        cur = (cur & !(1 << h)) | (1 << p);
    }
    (SpinExcitation { holes, particles }, phase)
}

/// Excitation holes, particles and fermionic sign taking `d1` to `d2`.
pub fn excitation_info(d1: &Determinant, d2: &Determinant) -> Result<ExcitationInfo> {
    check_same_counts(d1, d2)?;
    let (alpha, pa) = spin_excitation(d1.alpha, d2.alpha);
    let (beta, pb) = spin_excitation(d1.beta, d2.beta);
    Ok(ExcitationInfo {
        alpha,
        beta,
        sign: if pa * pb > 0.0 { 1 } else { -1 },
    })
}

/// Total excitation degree (cheap; no sign).
#[inline]
pub fn excitation_degree(d1: &Determinant, d2: &Determinant) -> usize {
    (((d1.alpha ^ d2.alpha).count_ones() + (d1.beta ^ d2.beta).count_ones()) / 2) as usize
}

pub(crate) fn check_same_counts(d1: &Determinant, d2: &Determinant) -> Result<()> {
    if d1.n_alpha() != d2.n_alpha() || d1.n_beta() != d2.n_beta() {
        let mut msg = String::new();
        let _ = write!(
            msg,
            "electron counts ({}, {}) vs ({}, {})",
            d1.n_alpha(),
            d1.n_beta(),
            d2.n_alpha(),
            d2.n_beta()
        );
        return Err(Error::Symmetry(msg));
    }
    Ok(())
}

/// Binomial coefficient in `u128` (saturating).
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// All `norb`-orbital strings with `n` electrons, ascending.
pub fn strings(norb: usize, n: usize) -> Vec<u64> {
    assert!(norb <= MAX_ORBITALS && n <= norb);
    let count = binomial(norb, n) as usize;
    let mut out = Vec::with_capacity(count);
    if n == 0 {
        out.push(0);
        return out;
    }
    let limit: u128 = 1u128 << norb;
    let mut x: u128 = (1u128 << n) - 1;
    while x < limit {
        out.push(x as u64);
        // Gosper's hack
        let c = x & x.wrapping_neg();
        let r = x + c;
        x = (((r ^ x) >> 2) / c) | r;
    }
    out
}

/// Full determinant space for `(norb, na, nb)`, canonically sorted.
pub fn enumerate_space(norb: usize, na: usize, nb: usize) -> Result<Vec<Determinant>> {
    enumerate_space_capped(norb, na, nb, DEFAULT_SPACE_CAP)
}

pub fn enumerate_space_capped(
    norb: usize,
    na: usize,
    nb: usize,
    cap: usize,
) -> Result<Vec<Determinant>> {
    if norb > MAX_ORBITALS {
        return Err(Error::Capacity {
            what: "orbitals per spin",
            needed: norb as u128,
            cap: MAX_ORBITALS as u128,
        });
    }
    if na > norb || nb > norb {
        return Err(Error::Symmetry(alloc::format!(
            "cannot place ({na}, {nb}) electrons in {norb} orbitals"
        )));
    }
    let dim = binomial(norb, na).saturating_mul(binomial(norb, nb));
    if dim > cap as u128 {
        return Err(Error::Capacity {
            what: "configuration space",
            needed: dim,
            cap: cap as u128,
        });
    }
    let sa = strings(norb, na);
    let sb = strings(norb, nb);
    let mut out = Vec::with_capacity(dim as usize);
    for &a in &sa {
        for &b in &sb {
            out.push(Determinant::new(a, b));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_excitation() {
        let d = Determinant::aufbau(2, 2);
        let e = excitation_info(&d, &d).unwrap();
        assert_eq!(e.degree(), 0);
        assert_eq!(e.sign, 1);
    }

    #[test]
    fn adjacent_single() {
        let d1 = Determinant::new(0b011, 0b001);
        let d2 = Determinant::new(0b101, 0b001);
        let e = excitation_info(&d1, &d2).unwrap();
        assert_eq!(e.degree(), 1);
        assert_eq!(e.alpha.holes, [1]);
        assert_eq!(e.alpha.particles, [2]);
        assert_eq!(e.sign, 1);
    }

    #[test]
    fn mismatched_counts() {
        let d1 = Determinant::new(0b011, 0b001);
        let d2 = Determinant::new(0b001, 0b001);
        assert!(matches!(excitation_info(&d1, &d2), Err(Error::Symmetry(_))));
    }

    #[test]
    fn space_sizes() {
        assert_eq!(enumerate_space(2, 1, 1).unwrap().len(), 4);
        assert_eq!(enumerate_space(8, 5, 5).unwrap().len(), 3136);
        let s = enumerate_space(6, 3, 2).unwrap();
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(
            enumerate_space_capped(14, 5, 5, 1000),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn large_space() {
        let s = enumerate_space(14, 5, 5).unwrap();
        assert_eq!(s.len(), 4_008_004);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn strings_at_full_width() {
        let s = strings(64, 63);
        assert_eq!(s.len(), 64);
        assert_eq!(*s.last().unwrap(), u64::MAX << 1);
    }

    #[test]
    fn bitstring_round_trip() {
        let d = Determinant::new(0b0011, 0b0101);
        let s = d.to_bitstring(4);
        assert_eq!(s, "0101|0011");
        assert_eq!(Determinant::from_bitstring(&s).unwrap(), (d, 4));
        assert_eq!(Determinant::from_bitstring("01010011").unwrap(), (d, 4));
        assert!(Determinant::from_bitstring("012").is_err());
    }
}
