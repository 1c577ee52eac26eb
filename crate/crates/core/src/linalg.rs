//! Small dense linear-algebra helpers shared by the identification stages.

pub use nalgebra::Complex;
use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

pub fn to_complex_vec(v: &[f64]) -> CVector {
    CVector::from_iterator(v.len(), v.iter().map(|&x| C64::new(x, 0.0)))
}

/// Indices that sort `values` in decreasing order; ties keep their original order.
pub fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

pub fn permute_columns(m: &CMatrix, order: &[usize]) -> CMatrix {
    CMatrix::from_fn(m.nrows(), order.len(), |i, j| m[(i, order[j])])
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues in decreasing order.
///
/// The input is symmetrized first so round-off asymmetry cannot leak into the
/// solver.
pub fn hermitian_eigen_desc(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = descending_order(&vals);
    let sorted: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    (sorted, permute_columns(&eig.eigenvectors, &order))
}

/// Moore-Penrose pseudoinverse with a relative singular value cut-off.
pub fn pinv(m: &CMatrix) -> CMatrix {
    let svd = SVD::new(m.clone(), true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = smax * f64::EPSILON * (m.nrows().max(m.ncols()) as f64);
    svd.pseudo_inverse(eps).expect("SVD computed with both singular vector sets")
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    SVD::new(m.clone(), false, false).singular_values.iter().copied().collect()
}

/// Ratio of the largest to the smallest singular value (infinite when singular).
pub fn condition_number(m: &CMatrix) -> f64 {
    let s = singular_values(m);
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `max |(U^H U - I)_ij|`.
pub fn unitary_deviation(u: &CMatrix) -> f64 {
    let g = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Orthonormalizes the columns of a square matrix by QR, keeping each column's
/// phase (the triangular factor gets a positive real diagonal).
pub fn orthonormalize(m: &CMatrix) -> CMatrix {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        let norm = d.norm();
        if norm > 0.0 {
            let phase = d / norm;
            let mut col = q.column_mut(j);
            col *= phase;
        }
    }
    q
}

/// Unit vector spanning the (numerical) null space of a square matrix: the
/// right singular vector of its smallest singular value.
pub fn null_vector(m: &CMatrix) -> (CVector, f64) {
    let svd = SVD::new(m.clone(), false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (imin, smin) = svd.singular_values.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let v = v_t.row(imin).adjoint();
    (v, smin)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_finite(v: &CVector) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn matrix_is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Builds a dense complex matrix from rows of `(re, im)` pairs.
pub fn cmatrix_from_rows(rows: &[&[(f64, f64)]]) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(n, m, |i, j| C64::new(rows[i][j].0, rows[i][j].1))
}

pub fn dmatrix_from_rows(rows: &[&[f64]]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descending_order_is_stable() {
        assert_eq!(descending_order(&[1.0, 3.0, 3.0, 2.0]), vec![1, 2, 3, 0]);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let m = cmatrix_from_rows(&[&[(2.0, 0.0), (0.5, 0.5)], &[(0.5, -0.5), (1.0, 0.0)]]);
        let (vals, vecs) = hermitian_eigen_desc(&m);
        assert!(vals[0] >= vals[1]);
        let d = CMatrix::from_diagonal(&CVector::from_iterator(2, vals.iter().map(|&v| C64::new(v, 0.0))));
        let back = &vecs * d * vecs.adjoint();
        assert!(max_abs(&(back - m)) < 1e-12);
    }

    #[test]
    fn orthonormalize_keeps_unitary_input() {
        let m = cmatrix_from_rows(&[&[(0.0, 1.0), (0.0, 0.0)], &[(0.0, 0.0), (1.0, 0.0)]]);
        let q = orthonormalize(&m);
        assert!(max_abs(&(q - &m)) < 1e-14);
    }

    #[test]
    fn null_vector_of_singular_matrix() {
        let m = to_complex(&dmatrix_from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]));
        let (v, s) = null_vector(&m);
        assert!(s < 1e-12);
        assert!((&m * v).norm() < 1e-12);
    }
}
