//! Dense Hermitian linear algebra on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{CMatrix, C64};

/// Eigenvalues below this magnitude are treated as zero in matrix functions.
pub const EIG_FLOOR: f64 = 1e-12;

/// Hermitian eigendecomposition, eigenvalues sorted in decreasing order.
/// Columns of the returned matrix are the matching eigenvectors.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix in decreasing order.
pub fn eigvalsh(m: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(hermitian_part(m)).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Real symmetric eigendecomposition, decreasing order.
pub fn eigh_real(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `(M + M^†) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entry of `|M - M^†|`.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..m.nrows() {
        for c in r..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Sum of singular values. Hermitian input goes through the eigensolver,
/// anything else through an SVD.
pub fn trace_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    if m.is_square() && hermiticity_error(m) <= 1e-12 * scale {
        eigvalsh(m).iter().map(|v| v.abs()).sum()
    } else {
        m.clone().svd(false, false).singular_values.iter().sum()
    }
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn herm_fn(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = eigh(m);
    let mut scaled = vecs.clone();
    for (c, &v) in vals.iter().enumerate() {
        let fv = f(v);
        for r in 0..scaled.nrows() {
            scaled[(r, c)] *= fv;
        }
    }
    &scaled * vecs.adjoint()
}

/// Square root of a positive semidefinite matrix; negative rounding noise is clipped.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    herm_fn(m, |v| if v > EIG_FLOOR { v.sqrt() } else { 0.0 })
}

/// Closed-form eigendecomposition of a 2x2 Hermitian matrix
/// `[[a, b], [conj(b), d]]`, largest eigenvalue first.
pub fn eigh2(a: f64, b: C64, d: f64) -> ([f64; 2], [[C64; 2]; 2]) {
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let r = (half * half + b.norm_sqr()).sqrt();
    let vals = [mean + r, mean - r];
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    if b.norm() <= 1e-300 {
        return if a >= d { (vals, [[one, zero], [zero, one]]) } else { (vals, [[zero, one], [one, zero]]) };
    }
    // (H - v) x = 0 with x = (b, v - a) or (v - d, conj b); pick the better conditioned one.
    let vec_for = |v: f64| -> [C64; 2] {
        let x1 = [b, C64::new(v - a, 0.0)];
        let x2 = [C64::new(v - d, 0.0), b.conj()];
        let n1 = (x1[0].norm_sqr() + x1[1].norm_sqr()).sqrt();
        let n2 = (x2[0].norm_sqr() + x2[1].norm_sqr()).sqrt();
        if n1 >= n2 {
            [x1[0] / n1, x1[1] / n1]
        } else {
            [x2[0] / n2, x2[1] / n2]
        }
    };
    (vals, [vec_for(vals[0]), vec_for(vals[1])])
}

/// Multiplies a vector by `e^{-i arg}` of its first entry above `1e-12`,
/// making that entry real and positive.
pub fn fix_phase(v: &mut [C64]) {
    if let Some(first) = v.iter().find(|z| z.norm() > 1e-12).copied() {
        let phase = first.conj() / first.norm();
        v.iter_mut().for_each(|z| *z *= phase);
    }
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Shannon entropy in bits of a probability list; entries below `1e-15` contribute zero.
pub fn entropy_bits(probs: impl IntoIterator<Item = f64>) -> f64 {
    probs
        .into_iter()
        .filter(|&p| p > 1e-15)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}
