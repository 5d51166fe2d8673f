//! Quadratic-form cones `{v : ‖v_E‖ ≤ θ‖v_F‖}` and constant cone fields.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::torus_linear::{Bundle, LiftPoint, LinearPart, Side};

/// A cone of size θ around `F` with complement `E`, at a base point.
///
/// `E` and `F` are orthonormal frames. Directions in an optional third frame
/// `G` (typically the strong bundles, for center cones) are ignored: cone
/// coordinates are read off the decomposition `v = E a + F b + G g`.
#[derive(Clone, Debug)]
pub struct ConeSpec<T: Scalar> {
    pub base: LiftPoint<T>,
    e_frame: DMatrix<T>,
    f_frame: DMatrix<T>,
    g_frame: DMatrix<T>,
    theta: T,
    /// Rows of `[E F G]⁻¹` for the `a` and `b` coordinates.
    coords: DMatrix<T>,
}

/// Outcome of a membership test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub inside: bool,
    /// `B(v)/‖v‖²`; nonpositive inside.
    pub margin: f64,
}

fn orthonormal<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    if m.ncols() == 0 {
        return m.clone();
    }
    m.clone().qr().q()
}

fn columns<T: Scalar>(v: &DMatrix<T>, ranges: &[std::ops::Range<usize>]) -> DMatrix<T> {
    let idx: Vec<usize> = ranges.iter().flat_map(|r| r.clone()).collect();
    v.select_columns(&idx)
}

impl<T: Scalar> ConeSpec<T> {
    /// Cone in the full ambient space; `E ⊕ F` must be the whole space.
    pub fn new(base: LiftPoint<T>, e_frame: DMatrix<T>, f_frame: DMatrix<T>, theta: T) -> Result<Self> {
        let n = e_frame.nrows();
        Self::with_ignored(base, e_frame, f_frame, DMatrix::zeros(n, 0), theta)
    }

    /// Cone inside `E ⊕ F`, ignoring components along `G`.
    pub fn with_ignored(
        base: LiftPoint<T>,
        e_frame: DMatrix<T>,
        f_frame: DMatrix<T>,
        g_frame: DMatrix<T>,
        theta: T,
    ) -> Result<Self> {
        let n = base.dim();
        if [e_frame.nrows(), f_frame.nrows(), g_frame.nrows()].iter().any(|&r| r != n) {
            return Err(Error::BadGeometry("cone frames must live in the base point's space".into()));
        }
        if e_frame.ncols() + f_frame.ncols() + g_frame.ncols() != n || f_frame.ncols() == 0 {
            return Err(Error::BadGeometry(format!(
                "cone frames of sizes {}, {}, {} do not split dimension {n} with d ≥ 1",
                e_frame.ncols(),
                f_frame.ncols(),
                g_frame.ncols()
            )));
        }
        if !(theta > T::zero()) {
            return Err(Error::BadGeometry("cone size θ must be positive".into()));
        }
        let (e_frame, f_frame) = (orthonormal(&e_frame), orthonormal(&f_frame));
        let mut all = DMatrix::zeros(n, n);
        all.columns_mut(0, e_frame.ncols()).copy_from(&e_frame);
        all.columns_mut(e_frame.ncols(), f_frame.ncols()).copy_from(&f_frame);
        all.columns_mut(n - g_frame.ncols(), g_frame.ncols()).copy_from(&g_frame);
        let inv = all
            .try_inverse()
            .ok_or_else(|| Error::BadGeometry("cone frames are not complementary".into()))?;
        let k = e_frame.ncols() + f_frame.ncols();
        let coords = inv.rows(0, k).into_owned();
        Ok(ConeSpec { base, e_frame, f_frame, g_frame, theta, coords })
    }

    pub fn theta(&self) -> T {
        self.theta
    }
    /// Cone dimension `d = dim F`.
    pub fn dim(&self) -> usize {
        self.f_frame.ncols()
    }
    pub fn e_frame(&self) -> &DMatrix<T> {
        &self.e_frame
    }
    pub fn f_frame(&self) -> &DMatrix<T> {
        &self.f_frame
    }
    pub fn ignored_frame(&self) -> &DMatrix<T> {
        &self.g_frame
    }

    /// `(‖v_E‖², ‖v_F‖²)`.
    pub fn split(&self, v: &[T]) -> (T, T) {
        let ne = self.e_frame.ncols();
        let mut e2 = T::zero();
        let mut f2 = T::zero();
        for (i, row) in self.coords.row_iter().enumerate() {
            let c = row.iter().zip(v).fold(T::zero(), |a, (&r, &x)| a + r * x);
            if i < ne {
                e2 += c * c;
            } else {
                f2 += c * c;
            }
        }
        (e2, f2)
    }

    /// `B(v) = ‖v_E‖² − θ²‖v_F‖²`.
    pub fn quadratic_form(&self, v: &[T]) -> T {
        let (e2, f2) = self.split(v);
        e2 - self.theta * self.theta * f2
    }

    /// The max-norm `max(‖v_E‖, ‖v_F‖)` in cone coordinates.
    pub fn max_norm(&self, v: &[T]) -> T {
        let (e2, f2) = self.split(v);
        e2.max(f2).sqrt()
    }

    /// `−B(v)/(‖v_E‖² + ‖v_F‖²)`: nonnegative inside, invariant under scaling.
    pub fn inner_margin(&self, v: &[T]) -> T {
        let (e2, f2) = self.split(v);
        let s = e2 + f2;
        if s == T::zero() {
            return T::zero();
        }
        (self.theta * self.theta * f2 - e2) / s
    }

    /// Drops the ignored components: `E a + F b`.
    pub fn project(&self, v: &[T]) -> Vec<T> {
        let ne = self.e_frame.ncols();
        let c: Vec<T> = self.coords.row_iter().map(|row| row.iter().zip(v).fold(T::zero(), |a, (&r, &x)| a + r * x)).collect();
        self.vector(&c[..ne], &c[ne..])
    }

    /// A vector with cone coordinates `(a, b)`.
    pub fn vector(&self, a: &[T], b: &[T]) -> Vec<T> {
        let n = self.base.dim();
        (0..n)
            .map(|i| {
                let e = a.iter().enumerate().fold(T::zero(), |s, (j, &x)| s + self.e_frame[(i, j)] * x);
                b.iter().enumerate().fold(e, |s, (j, &x)| s + self.f_frame[(i, j)] * x)
            })
            .collect()
    }

    /// Draws a cone vector with `‖v_F‖ = 1`: on the boundary shell
    /// `‖v_E‖ = θ` when `boundary`, else uniformly deeper inside.
    pub fn sample<R: Rng>(&self, rng: &mut R, boundary: bool) -> Vec<T> {
        let b = unit_sphere::<T, R>(rng, self.f_frame.ncols());
        let ne = self.e_frame.ncols();
        if ne == 0 {
            return self.vector(&[], &b);
        }
        let depth = if boundary { T::one() } else { T::lit(rng.random::<f64>()) };
        let a: Vec<T> = unit_sphere::<T, R>(rng, ne).into_iter().map(|x| x * self.theta * depth).collect();
        self.vector(&a, &b)
    }
}

fn unit_sphere<T: Scalar, R: Rng>(rng: &mut R, d: usize) -> Vec<T> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return g.into_iter().map(|x| T::lit(x / norm)).collect();
        }
    }
}

/// Membership of `v` in the cone, with margin `B(v)/‖v‖²`.
pub fn cone_contains<T: Scalar>(c: &ConeSpec<T>, v: &[T]) -> Result<Membership> {
    let n2 = v.iter().fold(T::zero(), |a, &x| a + x * x);
    if n2 == T::zero() {
        return Err(Error::ZeroVector);
    }
    let q = c.quadratic_form(v);
    Ok(Membership { inside: q <= T::zero(), margin: (q / n2).f64() })
}

/// The same cone frames at every point.
#[derive(Clone, Debug)]
pub struct ConeField<T: Scalar> {
    proto: ConeSpec<T>,
}

impl<T: Scalar> ConeField<T> {
    pub fn constant(e: DMatrix<T>, f: DMatrix<T>, g: DMatrix<T>, theta: T) -> Result<Self> {
        let n = e.nrows();
        Ok(ConeField { proto: ConeSpec::with_ignored(LiftPoint::new(vec![T::zero(); n]), e, f, g, theta)? })
    }

    /// Cone of size θ around the listed bundles of a linear part, with the
    /// remaining bundles as `E` (full ambient cone).
    pub fn around_bundles(lin: &LinearPart<T>, f_bundles: &[Bundle], theta: T) -> Result<Self> {
        let v = lin.eigenbasis();
        let f: Vec<_> = f_bundles.iter().map(|&b| lin.range(b)).collect();
        let e: Vec<_> = Bundle::ALL.iter().filter(|b| !f_bundles.contains(b)).map(|&b| lin.range(b)).collect();
        Self::constant(columns(v, &e), columns(v, &f), DMatrix::zeros(lin.n(), 0), theta)
    }

    /// d-center cone: around `E^wu` (forward, `Side::Uu`) or `E^ws` (backward,
    /// `Side::Ss`) inside the center, ignoring the strong bundles. When a strong
    /// bundle is missing (2-torus) the weak bundle of the opposite side is `E`.
    pub fn center(lin: &LinearPart<T>, side: Side, theta: T) -> Result<Self> {
        let v = lin.eigenbasis();
        let (f, e) = match side {
            Side::Uu => (Bundle::Wu, Bundle::Ws),
            Side::Ss => (Bundle::Ws, Bundle::Wu),
        };
        Self::constant(
            columns(v, &[lin.range(e)]),
            columns(v, &[lin.range(f)]),
            columns(v, &[lin.range(Bundle::Ss), lin.range(Bundle::Uu)]),
            theta,
        )
    }

    /// Cone around a side's strong direction (strong bundle, or the weak
    /// bundle of that side when the strong one is trivial).
    pub fn strong(lin: &LinearPart<T>, side: Side, theta: T) -> Result<Self> {
        Self::around_bundles(lin, &[lin.strong_bundle(side)], theta)
    }

    pub fn theta(&self) -> T {
        self.proto.theta
    }

    pub fn dim(&self) -> usize {
        self.proto.dim()
    }

    pub fn at(&self, base: LiftPoint<T>) -> ConeSpec<T> {
        ConeSpec { base, ..self.proto.clone() }
    }

    /// Same frames, different size.
    pub fn with_theta(&self, theta: T) -> Result<Self> {
        if !(theta > T::zero()) {
            return Err(Error::BadGeometry("cone size θ must be positive".into()));
        }
        Ok(ConeField { proto: ConeSpec { theta, ..self.proto.clone() } })
    }
}

/// The two quadratic guards of the planar cone argument,
/// `5x² + y² − 4|xy|` and `x² + 5y² − 4|xy|`.
pub fn planar_cone_guards(x: f64, y: f64) -> (f64, f64) {
    let c = 4.0 * (x * y).abs();
    (5.0 * x * x + y * y - c, x * x + 5.0 * y * y - c)
}
