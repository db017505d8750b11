use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::determinant::Determinant;
use crate::linalg::orthonormalize_columns;

/// Non-orthogonal Slater determinant `φ = φ_α ⊗ φ_β`; each spin block is a
/// row-major `norb × n_σ` complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Walker {
    pub phi: [Vec<Complex64>; 2],
    pub weight: f64,
    /// `⟨Ψ_T|φ⟩`, refreshed after every step.
    pub overlap: Complex64,
}

impl Walker {
    /// Walker whose columns are the unit vectors of `det`'s occupied orbitals.
    pub fn from_determinant(det: &Determinant, norb: usize) -> Self {
        let mut phi = [Vec::new(), Vec::new()];
        for (spin, occ) in [det.occupied_alpha(), det.occupied_beta()].into_iter().enumerate() {
            let n = occ.len();
            let mut m = vec![Complex64::new(0.0, 0.0); norb * n];
            for (j, &p) in occ.iter().enumerate() {
                m[p * n + j] = Complex64::new(1.0, 0.0);
            }
            phi[spin] = m;
        }
        Self { phi, weight: 1.0, overlap: Complex64::new(0.0, 0.0) }
    }

    /// Walker from explicit orbital matrices.
    pub fn from_orbitals(alpha: Vec<Complex64>, beta: Vec<Complex64>) -> Self {
        Self { phi: [alpha, beta], weight: 1.0, overlap: Complex64::new(0.0, 0.0) }
    }

    pub fn n_electrons(&self, spin: usize, norb: usize) -> usize {
        if norb == 0 {
            0
        } else {
            self.phi[spin].len() / norb
        }
    }

    /// Modified Gram–Schmidt on both spin blocks. Returns `det R_α · det R_β`,
    /// the factor by which the represented state shrank.
    pub fn orthonormalize(&mut self, norb: usize) -> Complex64 {
        let mut factor = Complex64::new(1.0, 0.0);
        for spin in 0..2 {
            let n = self.n_electrons(spin, norb);
            if n > 0 {
                factor *= orthonormalize_columns(&mut self.phi[spin], norb, n);
            }
        }
        factor
    }
}

/// Walker population.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WalkerEnsemble {
    pub walkers: Vec<Walker>,
}

impl WalkerEnsemble {
    pub fn total_weight(&self) -> f64 {
        self.walkers.iter().map(|w| w.weight).sum()
    }

    pub fn len(&self) -> usize {
        self.walkers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walkers.is_empty()
    }
}
