//! Small dense linear algebra on row-major slices.
//!
//! Everything here targets the matrix sizes that appear in desk-scale runs
//! (orbital counts up to 64, Davidson subspaces of a few dozen vectors), so
//! the routines are straightforward O(n^3) kernels without blocking.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::math;

/// `a (n×k) · b (k×m)`.
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for l in 0..k {
            let s = a[i * k + l];
            if s == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[l * m..(l + 1) * m]) {
                *o += s * bv;
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = 1.0;
    }
    out
}

fn one_norm(a: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| math::abs(a[i * n + j])).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: &[f64], n: usize) -> Vec<f64> {
    let norm = one_norm(a, n);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();
    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..=30 {
        term = matmul(&term, &scaled, n, n, n);
        let inv_k = 1.0 / k as f64;
        let mut biggest = 0.0f64;
        for (r, t) in result.iter_mut().zip(term.iter_mut()) {
            *t *= inv_k;
            *r += *t;
            biggest = biggest.max(math::abs(*t));
        }
        if biggest < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result, n, n, n);
    }
    result
}

/// Determinant of a small real matrix by LU with partial pivoting.
/// The input is overwritten.
pub fn det_in_place(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        let mut best = math::abs(a[col * n + col]);
        for r in col + 1..n {
            let v = math::abs(a[r * n + col]);
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            det = -det;
        }
        let d = a[col * n + col];
        det *= d;
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for c in col + 1..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
            }
        }
    }
    det
}

/// Determinant and inverse of a small complex matrix (Gauss–Jordan with
/// partial pivoting). `a` is overwritten; `inv` receives the inverse when the
/// matrix is nonsingular. Returns the determinant (exactly zero on a zero
/// pivot, in which case `inv` is unspecified).
pub fn det_inverse_c(a: &mut [Complex64], n: usize, inv: &mut [Complex64]) -> Complex64 {
    debug_assert!(a.len() >= n * n && inv.len() >= n * n);
    for v in inv[..n * n].iter_mut() {
        *v = Complex64::new(0.0, 0.0);
    }
    for i in 0..n {
        inv[i * n + i] = Complex64::new(1.0, 0.0);
    }
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].norm_sqr();
        for r in col + 1..n {
            let v = a[r * n + col].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
                inv.swap(col * n + c, piv * n + c);
            }
            det = -det;
        }
        let d = a[col * n + col];
        det *= d;
        let dinv = d.inv();
        for c in 0..n {
            a[col * n + c] *= dinv;
            inv[col * n + c] *= dinv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col];
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            for c in 0..n {
                let ac = a[col * n + c];
                let ic = inv[col * n + c];
                a[r * n + c] -= f * ac;
                inv[r * n + c] -= f * ic;
            }
        }
    }
    det
}

/// Determinant of a small complex matrix. The input is overwritten.
pub fn det_c(a: &mut [Complex64], n: usize) -> Complex64 {
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].norm_sqr();
        for r in col + 1..n {
            let v = a[r * n + col].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            det = -det;
        }
        let d = a[col * n + col];
        det *= d;
        let dinv = d.inv();
        for r in col + 1..n {
            let f = a[r * n + col] * dinv;
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            for c in col + 1..n {
                let v = a[col * n + c];
                a[r * n + c] -= f * v;
            }
        }
    }
    det
}

/// Orthonormalizes the columns of a `rows × cols` complex matrix in place by
/// modified Gram–Schmidt and returns `det(R)` of the implied `QR` factorization.
pub fn orthonormalize_columns(m: &mut [Complex64], rows: usize, cols: usize) -> Complex64 {
    let mut det = Complex64::new(1.0, 0.0);
    for j in 0..cols {
        for k in 0..j {
            let mut dot = Complex64::new(0.0, 0.0);
            for i in 0..rows {
                dot += m[i * cols + k].conj() * m[i * cols + j];
            }
            for i in 0..rows {
                let q = m[i * cols + k];
                m[i * cols + j] -= dot * q;
            }
        }
        let norm = math::sqrt((0..rows).map(|i| m[i * cols + j].norm_sqr()).sum::<f64>());
        det *= norm;
        if norm > 0.0 {
            let inv = 1.0 / norm;
            for i in 0..rows {
                m[i * cols + j] *= inv;
            }
        }
    }
    det
}

/// Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// the columns of a row-major `n × n` matrix.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = identity(n);
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off <= 1e-32 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + new] = v[k * n + old];
        }
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_rotation_generator() {
        let t = 0.7;
        let a = [0.0, -t, t, 0.0];
        let e = expm(&a, 2);
        assert!((e[0] - math::cos(t)).abs() < 1e-14);
        assert!((e[1] + math::sin(t)).abs() < 1e-14);
        assert!((e[2] - math::sin(t)).abs() < 1e-14);
    }

    #[test]
    fn expm_large_antisymmetric_is_orthogonal() {
        let n = 6;
        let mut a = vec![0.0; n * n];
        for p in 0..n {
            for q in p + 1..n {
                let x = 9.0 * math::sin((3 * p + 7 * q) as f64);
                a[p * n + q] = x;
                a[q * n + p] = -x;
            }
        }
        let u = expm(&a, n);
        let utu = matmul(&transpose(&u, n, n), &u, n, n, n);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((utu[i * n + j] - want).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn determinant_and_inverse() {
        let a = [2.0, 1.0, 0.5, 1.0, 3.0, 0.0, 0.5, 0.0, 1.0];
        let d = det_in_place(&mut a.clone(), 3);
        assert!((d - 4.25).abs() < 1e-13);
        let mut ac: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let orig = ac.clone();
        let mut inv = vec![Complex64::new(0.0, 0.0); 9];
        let dc = det_inverse_c(&mut ac, 3, &mut inv);
        assert!((dc.re - 4.25).abs() < 1e-13);
        for i in 0..3 {
            for j in 0..3 {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..3 {
                    s += orig[i * 3 + k] * inv[k * 3 + j];
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s.re - want).abs() < 1e-13 && s.im.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn jacobi_eigen_reconstructs() {
        let n = 4;
        let a = [
            4.0, 1.0, 0.2, 0.0, 1.0, 3.0, 0.4, 0.1, 0.2, 0.4, 2.0, 0.3, 0.0, 0.1, 0.3, 1.0,
        ];
        let (vals, vecs) = symmetric_eigen(&a, n);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        for k in 0..n {
            for i in 0..n {
                let av: f64 = (0..n).map(|j| a[i * n + j] * vecs[j * n + k]).sum();
                assert!((av - vals[k] * vecs[i * n + k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_schmidt_determinant() {
        let mut m = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 1.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.5, 0.0),
        ];
        let d = orthonormalize_columns(&mut m, 3, 2);
        // R is upper triangular with diag (1, |(1+i,2,.5) - (1+i)e1|) = (1, sqrt(4.25))
        assert!((d.re - math::sqrt(4.25)).abs() < 1e-13);
        let dot: Complex64 = (0..3).map(|i| m[i * 2].conj() * m[i * 2 + 1]).sum();
        assert!(dot.norm() < 1e-14);
    }
}
