use nalgebra::{ComplexField, DMatrix, RealField};
use num_complex::Complex;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the numerics are generic over (`f32` or `f64`).
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + FloatConst + Send + Sync + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal out of range")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("non-finite scalar")
    }

    /// Machine epsilon.
    fn eps() -> Self {
        Self::default_epsilon()
    }

    /// `max(tol, 100 eps)`: tolerances below the working precision are lifted.
    fn tol(tol: f64) -> Self {
        let t = Self::lit(tol);
        let floor = Self::eps() * Self::lit(100.0);
        if t > floor {
            t
        } else {
            floor
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type C<T> = Complex<T>;
pub type CMat<T> = DMatrix<Complex<T>>;

#[inline]
pub fn cr<T: Scalar>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

#[inline]
pub fn ci<T: Scalar>(im: T) -> C<T> {
    Complex::new(T::zero(), im)
}

/// `e^{i phi}`.
#[inline]
pub fn cis<T: Scalar>(phi: T) -> C<T> {
    Complex::new(phi.cos(), phi.sin())
}

pub fn max_abs<T: Scalar>(m: &CMat<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| {
        let a = z.modulus();
        if a > acc {
            a
        } else {
            acc
        }
    })
}

/// `‖A − B‖_max`.
pub fn max_abs_diff<T: Scalar>(a: &CMat<T>, b: &CMat<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (x, y)| {
        let v = (*x - *y).modulus();
        if v > acc {
            v
        } else {
            acc
        }
    })
}

/// `tr(A B)` without forming the product.
pub fn trace_prod<T: Scalar>(a: &CMat<T>, b: &CMat<T>) -> C<T> {
    let n = a.nrows();
    let mut acc = C::new(T::zero(), T::zero());
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}
