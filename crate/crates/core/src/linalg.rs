//! Small dense helpers on slices; the hot paths avoid allocating `DVector`s.

use nalgebra::DMatrix;

use crate::scalar::Scalar;

/// `out = m · x`.
#[inline]
pub fn mat_vec<T: Scalar>(m: &DMatrix<T>, x: &[T], out: &mut [T]) {
    let (r, c) = m.shape();
    debug_assert_eq!(x.len(), c);
    debug_assert_eq!(out.len(), r);
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = T::zero();
        for (j, &xj) in x.iter().enumerate() {
            s += m[(i, j)] * xj;
        }
        *o = s;
    }
}

/// `out += m · x`.
#[inline]
pub fn mat_vec_add<T: Scalar>(m: &DMatrix<T>, x: &[T], out: &mut [T]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = T::zero();
        for (j, &xj) in x.iter().enumerate() {
            s += m[(i, j)] * xj;
        }
        *o += s;
    }
}

#[inline]
pub fn norm2<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt()
}

#[inline]
pub fn norm_max<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |a, &v| a.max(v.abs()))
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Spectral norm (largest singular value).
pub fn op_norm2<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Smallest singular value (co-norm) of a square matrix.
pub fn co_norm2<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone().svd(false, false).singular_values.min()
}

/// Operator norm induced by the max-norm (largest absolute row sum).
pub fn op_norm_max<T: Scalar>(m: &DMatrix<T>) -> T {
    (0..m.nrows())
        .map(|i| m.row(i).iter().fold(T::zero(), |a, &v| a + v.abs()))
        .fold(T::zero(), |a, b| a.max(b))
}

/// Row-major nested vectors, the interchange format of every JSON report.
pub fn to_rows<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].f64()).collect()).collect()
}

pub fn from_rows<T: Scalar>(rows: &[Vec<f64>]) -> Option<DMatrix<T>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(DMatrix::from_fn(r, c, |i, j| T::lit(rows[i][j])))
}

pub fn cast_matrix<S: Scalar, T: Scalar>(m: &DMatrix<S>) -> DMatrix<T> {
    m.map(|x| T::lit(x.f64()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms() {
        let m = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.25]);
        assert_eq!(op_norm_max(&m), 3.0);
        let mut out = [0.0f64; 2];
        mat_vec(&m, &[1.0, 1.0], &mut out);
        assert_eq!(out, [-1.0, 0.75]);
        let d = DMatrix::<f64>::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -0.5]);
        assert!((op_norm2(&d) - 3.0).abs() < 1e-14);
        assert!((co_norm2(&d) - 0.5).abs() < 1e-14);
    }
}
