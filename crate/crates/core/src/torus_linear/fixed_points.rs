//! Exact enumeration of periodic points of a toral automorphism.

use num_rational::Ratio;
use num_traits::ToPrimitive;

use super::geometry::TorusPoint;
use super::integer::{det_wide, diagonalize, power_wide, IntMatrix, WideMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Points above this count are refused to keep enumeration desk-sized.
pub const MAX_ENUMERATED: u128 = 1 << 24;

/// An exact rational point of 𝕋ⁿ, coordinates in `[0, 1)`.
pub type RationalPoint = Vec<Ratio<i128>>;

fn shifted_power(m: &IntMatrix, period: u32) -> Result<WideMatrix> {
    if period == 0 {
        return Err(Error::BadGeometry("period must be positive".into()));
    }
    let mut b = power_wide(m, period)?;
    for i in 0..b.nrows() {
        b[(i, i)] -= 1;
    }
    Ok(b)
}

/// `|det(Mᵐ − I)|`, the number of points of period dividing `m`.
pub fn fixed_point_count(m: &IntMatrix, period: u32) -> Result<u128> {
    let d = det_wide(&shifted_power(m, period)?)?;
    if d == 0 {
        return Err(Error::DegeneratePeriod { period });
    }
    Ok(d.unsigned_abs())
}

/// All solutions of `(Mᵐ − I)x ∈ ℤⁿ` on the torus, exactly, in lexicographic order.
pub fn fixed_points_exact(m: &IntMatrix, period: u32) -> Result<Vec<RationalPoint>> {
    let b = shifted_power(m, period)?;
    let count = fixed_point_count(m, period)?;
    if count > MAX_ENUMERATED {
        return Err(Error::Precondition(format!("{count} periodic points exceed the enumeration cap")));
    }
    let n = b.nrows();
    let (s, w) = diagonalize(&b)?;
    let moduli: Vec<i128> = s.iter().map(|x| x.abs()).collect();
    let mut out = Vec::with_capacity(count as usize);
    let mut k = vec![0i128; n];
    loop {
        // x = W y with y_i = k_i / s_i, reduced mod 1
        let x: RationalPoint = (0..n)
            .map(|r| {
                let v = (0..n).fold(Ratio::from_integer(0), |acc, c| {
                    acc + Ratio::new(w[(r, c)] * k[c], moduli[c])
                });
                v - v.floor()
            })
            .collect();
        out.push(x);
        // odometer over Π [0, |s_i|)
        let mut i = 0;
        loop {
            if i == n {
                out.sort();
                return Ok(out);
            }
            k[i] += 1;
            if k[i] < moduli[i] {
                break;
            }
            k[i] = 0;
            i += 1;
        }
    }
}

/// Periodic points of period dividing `m` as floating torus points.
pub fn fixed_points<T: Scalar>(m: &IntMatrix, period: u32) -> Result<Vec<TorusPoint<T>>> {
    Ok(fixed_points_exact(m, period)?
        .into_iter()
        .map(|p| TorusPoint::new(p.iter().map(|r| T::lit(r.to_f64().unwrap_or(0.0))).collect()))
        .collect())
}
