//! Exact integer matrix arithmetic: determinants, powers, inverses and a
//! diagonal (Smith-type) reduction used to enumerate periodic points.

use nalgebra::DMatrix;
use num_rational::Ratio;

use crate::error::{Error, Result};

pub type IntMatrix = DMatrix<i64>;
pub(crate) type WideMatrix = DMatrix<i128>;

fn overflow() -> Error {
    Error::BadGeometry("integer overflow in exact matrix arithmetic".into())
}

pub(crate) fn widen(m: &IntMatrix) -> WideMatrix {
    m.map(i128::from)
}

/// Determinant by fraction-free (Bareiss) elimination.
pub fn determinant(m: &IntMatrix) -> Result<i128> {
    det_wide(&widen(m))
}

pub(crate) fn det_wide(m: &WideMatrix) -> Result<i128> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "square matrix required");
    if n == 0 {
        return Ok(1);
    }
    let mut a = m.clone();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[(k, k)] == 0 {
            match (k + 1..n).find(|&i| a[(i, k)] != 0) {
                Some(i) => {
                    a.swap_rows(k, i);
                    sign = -sign;
                }
                None => return Ok(0),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = a[(i, j)]
                    .checked_mul(a[(k, k)])
                    .and_then(|x| x.checked_sub(a[(i, k)].checked_mul(a[(k, j)])?))
                    .ok_or_else(overflow)?;
                a[(i, j)] = v / prev;
            }
        }
        prev = a[(k, k)];
    }
    Ok(sign * a[(n - 1, n - 1)])
}

pub(crate) fn mul_wide(a: &WideMatrix, b: &WideMatrix) -> Result<WideMatrix> {
    let (n, m, p) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = WideMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let mut s = 0i128;
            for k in 0..m {
                s = a[(i, k)]
                    .checked_mul(b[(k, j)])
                    .and_then(|x| s.checked_add(x))
                    .ok_or_else(overflow)?;
            }
            out[(i, j)] = s;
        }
    }
    Ok(out)
}

/// `mᵖ` computed exactly.
pub(crate) fn power_wide(m: &IntMatrix, p: u32) -> Result<WideMatrix> {
    let n = m.nrows();
    let base = widen(m);
    let mut acc = WideMatrix::identity(n, n);
    for _ in 0..p {
        acc = mul_wide(&acc, &base)?;
    }
    Ok(acc)
}

/// Exact inverse of a unimodular matrix.
pub fn unimodular_inverse(m: &IntMatrix) -> Result<IntMatrix> {
    let n = m.nrows();
    let mut a: DMatrix<Ratio<i128>> = m.map(|x| Ratio::from_integer(i128::from(x)));
    let mut inv: DMatrix<Ratio<i128>> = DMatrix::from_fn(n, n, |i, j| {
        Ratio::from_integer(if i == j { 1 } else { 0 })
    });
    let zero = Ratio::from_integer(0);
    for c in 0..n {
        let p = (c..n).find(|&r| a[(r, c)] != zero).ok_or(Error::NotUnimodular { det: 0 })?;
        a.swap_rows(c, p);
        inv.swap_rows(c, p);
        let piv = a[(c, c)];
        for j in 0..n {
            a[(c, j)] /= piv;
            inv[(c, j)] /= piv;
        }
        for r in 0..n {
            if r != c && a[(r, c)] != zero {
                let f = a[(r, c)];
                for j in 0..n {
                    let (ac, ic) = (a[(c, j)], inv[(c, j)]);
                    a[(r, j)] -= f * ac;
                    inv[(r, j)] -= f * ic;
                }
            }
        }
    }
    let mut out = IntMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = inv[(i, j)];
            if !v.is_integer() {
                return Err(Error::NotUnimodular { det: determinant(m)? });
            }
            out[(i, j)] = i64::try_from(v.to_integer()).map_err(|_| overflow())?;
        }
    }
    Ok(out)
}

/// Diagonal reduction `U·B·W = S` with `U`, `W` unimodular. Only `W` and the
/// diagonal of `S` are returned; the divisibility chain of the true Smith form
/// is not enforced because enumeration of `B x ∈ ℤⁿ` does not need it.
pub(crate) fn diagonalize(b: &WideMatrix) -> Result<(Vec<i128>, WideMatrix)> {
    let n = b.nrows();
    let mut a = b.clone();
    let mut w = WideMatrix::identity(n, n);
    for t in 0..n {
        loop {
            // smallest nonzero pivot in the trailing block
            let mut best: Option<(usize, usize)> = None;
            for i in t..n {
                for j in t..n {
                    if a[(i, j)] != 0
                        && best.is_none_or(|(bi, bj)| a[(i, j)].abs() < a[(bi, bj)].abs())
                    {
                        best = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = best else { return Ok((diag(&a), w)) };
            a.swap_rows(t, pi);
            a.swap_columns(t, pj);
            w.swap_columns(t, pj);
            let piv = a[(t, t)];
            let mut clean = true;
            for i in t + 1..n {
                let q = a[(i, t)] / piv;
                if q != 0 {
                    for j in t..n {
                        a[(i, j)] = a[(i, j)].checked_sub(q.checked_mul(a[(t, j)]).ok_or_else(overflow)?).ok_or_else(overflow)?;
                    }
                }
                clean &= a[(i, t)] == 0;
            }
            for j in t + 1..n {
                let q = a[(t, j)] / piv;
                if q != 0 {
                    for i in t..n {
                        a[(i, j)] = a[(i, j)].checked_sub(q.checked_mul(a[(i, t)]).ok_or_else(overflow)?).ok_or_else(overflow)?;
                    }
                    for i in 0..n {
                        w[(i, j)] = w[(i, j)].checked_sub(q.checked_mul(w[(i, t)]).ok_or_else(overflow)?).ok_or_else(overflow)?;
                    }
                }
                clean &= a[(t, j)] == 0;
            }
            if clean {
                break;
            }
        }
    }
    Ok((diag(&a), w))
}

fn diag(a: &WideMatrix) -> Vec<i128> {
    (0..a.nrows()).map(|i| a[(i, i)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn determinant_small() {
        let m = IntMatrix::from_row_slice(2, 2, &[4, 3, 3, 1]);
        assert_eq!(determinant(&m).unwrap(), -5);
        let m = IntMatrix::from_row_slice(3, 3, &[0, 1, 0, 0, 0, 1, 1, 0, 0]);
        assert_eq!(determinant(&m).unwrap(), 1);
    }

    #[test]
    fn inverse_of_cat_map() {
        let m = IntMatrix::from_row_slice(2, 2, &[2, 1, 1, 1]);
        let inv = unimodular_inverse(&m).unwrap();
        assert_eq!(inv, IntMatrix::from_row_slice(2, 2, &[1, -1, -1, 2]));
    }

    proptest! {
        #[test]
        fn diagonal_reduction_preserves_det(entries in prop::collection::vec(-6i64..7, 9)) {
            let m = IntMatrix::from_row_slice(3, 3, &entries);
            let d = determinant(&m).unwrap();
            let (s, w) = diagonalize(&widen(&m)).unwrap();
            prop_assert_eq!(det_wide(&w).unwrap().abs(), 1);
            prop_assert_eq!(s.iter().product::<i128>().abs(), d.abs());
        }
    }
}
