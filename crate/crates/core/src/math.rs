//! Scalar functions (via `libm`, so the crate stays `no_std`) and small
//! matrix helpers.

pub use nalgebra::{
    Complex, DMatrix, DVector, Matrix2, Matrix3, Matrix3x2, Matrix4, Matrix4x2, Vector2, Vector3,
    Vector4,
};

pub type C64 = Complex<f64>;
pub type CMat2 = Matrix2<C64>;

pub const PI: f64 = core::f64::consts::PI;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub fn cosh(x: f64) -> f64 {
    libm::cosh(x)
}
#[inline]
pub fn sinh(x: f64) -> f64 {
    libm::sinh(x)
}
#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}
#[inline]
pub fn asinh(x: f64) -> f64 {
    libm::asinh(x)
}
#[inline]
pub fn acosh(x: f64) -> f64 {
    libm::acosh(x.max(1.0))
}
#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}
#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}
#[inline]
pub fn tan(x: f64) -> f64 {
    libm::tan(x)
}
#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}
#[inline]
pub fn acos(x: f64) -> f64 {
    libm::acos(x.clamp(-1.0, 1.0))
}
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}
/// |z|.
#[inline]
pub fn cabs(z: C64) -> f64 {
    libm::hypot(z.re, z.im)
}
/// Principal square root.
#[inline]
pub fn csqrt(z: C64) -> C64 {
    let r = cabs(z);
    let re = sqrt(0.5 * (r + z.re).max(0.0));
    let im = sqrt(0.5 * (r - z.re).max(0.0));
    C64::new(re, if z.im < 0.0 { -im } else { im })
}
#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

/// x / sinh x, accurate near 0.
pub fn x_over_sinh(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x / sinh(x)
    }
}

/// sinh x / x, accurate near 0.
pub fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 + x * x / 6.0
    } else {
        sinh(x) / x
    }
}

/// Counter-clockwise quarter turn of the plane.
pub fn j2() -> Matrix2<f64> {
    Matrix2::new(0.0, -1.0, 1.0, 0.0)
}

pub fn rot2(theta: f64) -> Matrix2<f64> {
    let (s, c) = (sin(theta), cos(theta));
    Matrix2::new(c, -s, s, c)
}

/// Square root of a symmetric positive semidefinite 2×2 matrix:
/// (M + √det M·𝟙)/√(tr M + 2√det M).
pub fn sqrt_psd2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let s = sqrt(m.determinant().max(0.0));
    let t2 = m.trace() + 2.0 * s;
    if t2 <= 0.0 {
        return Matrix2::zeros();
    }
    (m + Matrix2::identity() * s) / sqrt(t2)
}

/// Eigenvalues (ascending) of a symmetric 2×2 matrix.
pub fn sym2_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let h = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let d = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let o = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let r = sqrt(d * d + o * o);
    (h - r, h + r)
}

pub fn sym2(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

pub fn complexify(m: &Matrix2<f64>) -> CMat2 {
    m.map(|x| C64::new(x, 0.0))
}

pub fn cmat2(re: &Matrix2<f64>, im: &Matrix2<f64>) -> CMat2 {
    CMat2::from_fn(|i, j| C64::new(re[(i, j)], im[(i, j)]))
}

pub fn re2(m: &CMat2) -> Matrix2<f64> {
    m.map(|z| z.re)
}

pub fn im2(m: &CMat2) -> Matrix2<f64> {
    m.map(|z| z.im)
}

pub fn det2c(m: &CMat2) -> C64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

pub fn tr2c(m: &CMat2) -> C64 {
    m[(0, 0)] + m[(1, 1)]
}

/// Conjugate a frame-dependent operator by a frame rotation: components in a
/// frame rotated by −θ relative to the old one, i.e. R φ Rᵀ.
pub fn rotate_op(m: &CMat2, theta: f64) -> CMat2 {
    let r = complexify(&rot2(theta));
    r * m * r.transpose()
}

pub fn rotate_op_real(m: &Matrix2<f64>, theta: f64) -> Matrix2<f64> {
    let r = rot2(theta);
    r * m * r.transpose()
}

/// Wrap an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Matrix exponential by scaling and squaring of a Taylor polynomial.
/// (nalgebra only provides one with `std`.)
pub fn expm4(a: &Matrix4<f64>) -> Matrix4<f64> {
    let norm = a.norm();
    let mut s = 0;
    while norm / powi(2.0, s) > 0.25 {
        s += 1;
    }
    let x = a / powi(2.0, s);
    let mut term = Matrix4::identity();
    let mut sum = Matrix4::identity();
    for k in 1..14 {
        term = term * x / k as f64;
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_boost_generator() {
        let mut k = Matrix4::zeros();
        k[(0, 1)] = 1.7;
        k[(1, 0)] = 1.7;
        let e = expm4(&k);
        assert!((e[(0, 0)] - cosh(1.7)).abs() < 1e-13 * cosh(1.7));
        assert!((e[(0, 1)] - sinh(1.7)).abs() < 1e-13 * cosh(1.7));
        assert!((e[(2, 2)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let m = Matrix2::new(5.0, 2.0, 2.0, 3.0);
        let s = sqrt_psd2(&m);
        assert!((s * s - m).norm() < 1e-12);
        assert!(sqrt_psd2(&Matrix2::zeros()).norm() == 0.0);
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let (a, b) = sym2_eigenvalues(&Matrix2::new(4.0, 0.0, 0.0, -1.0));
        assert_eq!((a, b), (-1.0, 4.0));
    }

    #[test]
    fn rotating_a_vector_field_and_operator_agree() {
        let m = Matrix2::new(1.0, 2.0, 2.0, -3.0);
        let v = Vector2::new(0.3, -0.7);
        let t = 0.4;
        let lhs = rotate_op_real(&m, t) * (rot2(t) * v);
        assert!((lhs - rot2(t) * (m * v)).norm() < 1e-14);
    }
}
