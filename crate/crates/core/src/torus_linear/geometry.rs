//! Points on the torus ℝⁿ/ℤⁿ and their lifts.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Reduces `t` into `[0, 1)`.
#[inline]
pub fn wrap01<T: Scalar>(t: T) -> T {
    let r = t - t.floor();
    // t slightly below an integer can round up to exactly 1
    if r >= T::one() {
        T::zero()
    } else {
        r
    }
}

/// Componentwise difference `b - a` reduced into `[-1/2, 1/2]`.
#[inline]
pub fn wrapped_delta<T: Scalar>(a: T, b: T) -> T {
    let d = b - a;
    d - d.round()
}

/// Squared torus distance between raw coordinate slices.
#[inline]
pub fn torus_dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| {
            let d = wrapped_delta(x, y);
            acc + d * d
        })
}

/// A point of 𝕋ⁿ with coordinates in `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint<T> {
    coords: Vec<T>,
}

impl<T: Scalar> TorusPoint<T> {
    /// Builds a torus point, reducing every coordinate mod 1.
    pub fn new(coords: Vec<T>) -> Self {
        TorusPoint { coords: coords.into_iter().map(wrap01).collect() }
    }

    pub fn origin(n: usize) -> Self {
        TorusPoint { coords: vec![T::zero(); n] }
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// The canonical lift in `[0,1)ⁿ`.
    pub fn to_lift(&self) -> LiftPoint<T> {
        LiftPoint::new(self.coords.clone())
    }

    pub fn cast<S: Scalar>(&self) -> TorusPoint<S> {
        TorusPoint::new(self.coords.iter().map(|c| S::lit(c.f64())).collect())
    }
}

/// A point of ℝⁿ viewed as a lift of a torus point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftPoint<T> {
    pub coords: Vec<T>,
}

impl<T: Scalar> LiftPoint<T> {
    pub fn new(coords: Vec<T>) -> Self {
        LiftPoint { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn cast<S: Scalar>(&self) -> LiftPoint<S> {
        LiftPoint::new(self.coords.iter().map(|c| S::lit(c.f64())).collect())
    }
}

/// Reduces a lift mod ℤⁿ.
pub fn project<T: Scalar>(x: &LiftPoint<T>) -> TorusPoint<T> {
    TorusPoint::new(x.coords.clone())
}

/// The integer translate of `x` closest to `anchor`.
pub fn lift_near<T: Scalar>(x: &TorusPoint<T>, anchor: &LiftPoint<T>) -> LiftPoint<T> {
    assert_eq!(x.dim(), anchor.dim(), "dimension mismatch");
    let coords = x
        .coords
        .iter()
        .zip(&anchor.coords)
        .map(|(&p, &a)| p + (a - p).round())
        .collect();
    LiftPoint::new(coords)
}

/// Euclidean distance minimized over integer translates.
pub fn torus_distance<T: Scalar>(a: &TorusPoint<T>, b: &TorusPoint<T>) -> T {
    assert_eq!(a.dim(), b.dim(), "dimension mismatch");
    torus_dist2(&a.coords, &b.coords).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn project_reduces_mod_one() {
        let p = project(&LiftPoint::new(vec![1.25, -0.5]));
        assert_eq!(p.coords(), &[0.25, 0.5]);
    }

    #[test]
    fn lift_near_picks_closest_translate() {
        let l = lift_near(&TorusPoint::new(vec![0.9]), &LiftPoint::new(vec![2.05f64]));
        assert!((l.coords[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let d: f64 = torus_distance(&TorusPoint::new(vec![0.9, 0.0]), &TorusPoint::new(vec![0.1, 0.0]));
        assert!((d - 0.2).abs() < 1e-15);
        let p = TorusPoint::new(vec![0.3, 0.7]);
        assert_eq!(torus_distance(&p, &p), 0.0);
        let d: f64 = torus_distance(&TorusPoint::origin(2), &TorusPoint::new(vec![0.5, 0.5]));
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn wrap_never_returns_one() {
        assert_eq!(wrap01(-1e-20f64), 0.0);
        assert_eq!(wrap01(-1e-30f32), 0.0);
    }

    proptest! {
        #[test]
        fn project_lift_round_trip(p in prop::collection::vec(0.0f64..1.0, 3),
                                   a in prop::collection::vec(-50.0f64..50.0, 3)) {
            let p = TorusPoint::new(p);
            let back = project(&lift_near(&p, &LiftPoint::new(a)));
            prop_assert!(torus_distance(&p, &back) < 1e-12);
        }

        #[test]
        fn distance_is_a_metric(a in prop::collection::vec(0.0f64..1.0, 2),
                                b in prop::collection::vec(0.0f64..1.0, 2),
                                c in prop::collection::vec(0.0f64..1.0, 2)) {
            let (a, b, c) = (TorusPoint::new(a), TorusPoint::new(b), TorusPoint::new(c));
            prop_assert!((torus_distance(&a, &b) - torus_distance(&b, &a)).abs() < 1e-15);
            prop_assert!(torus_distance(&a, &c) <= torus_distance(&a, &b) + torus_distance(&b, &c) + 1e-14);
            prop_assert!(torus_distance(&a, &b) <= 0.5f64.sqrt() + 1e-15);
        }
    }
}
