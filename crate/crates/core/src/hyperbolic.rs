//! Hyperboloid model of H³ ⊂ ℝ^{1,3} with ⟨x,y⟩ = −x₀y₀ + x₁y₁ + x₂y₂ + x₃y₃.
//! H² is the totally geodesic slice {x₃ = 0}.

use crate::error::{invalid, Result};
use crate::math::{self, sqrt, CMat2, Complex, Matrix4, Vector4, C64};

pub fn minkowski(a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
    -a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

pub fn eta() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(-1.0, 1.0, 1.0, 1.0))
}

/// Tangential part a + ⟨a,x⟩x of an ambient vector at x.
pub fn project_tangent(x: &HPoint, a: &Vector4<f64>) -> Vector4<f64> {
    a + x.x * minkowski(a, &x.x)
}

/// Norm of a spacelike vector.
pub fn space_norm(v: &Vector4<f64>) -> f64 {
    sqrt(minkowski(v, v).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HPoint {
    pub x: Vector4<f64>,
}

impl HPoint {
    /// Rescale onto the upper sheet. The input must be timelike.
    pub fn normalize(x: Vector4<f64>) -> Self {
        let s = if x[0] < 0.0 { -1.0 } else { 1.0 };
        let n2 = -minkowski(&x, &x);
        if n2 > 1e-8 * x[0] * x[0] {
            return Self { x: x * (s / sqrt(n2)) };
        }
        // Far from the origin the Minkowski norm cancels; lift the spatial part.
        let mut y = x * s;
        y[0] = sqrt(1.0 + y[1] * y[1] + y[2] * y[2] + y[3] * y[3]);
        Self { x: y }
    }

    pub fn origin() -> Self {
        Self { x: Vector4::new(1.0, 0.0, 0.0, 0.0) }
    }

    /// Point of H² at polar coordinates (r, θ).
    pub fn h2_polar(r: f64, theta: f64) -> Self {
        let s = math::sinh(r);
        Self { x: Vector4::new(math::cosh(r), s * math::cos(theta), s * math::sin(theta), 0.0) }
    }

    pub fn midpoint(&self, other: &HPoint) -> HPoint {
        HPoint::normalize(self.x + other.x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVec {
    pub base: HPoint,
    pub v: Vector4<f64>,
}

impl TangentVec {
    pub fn new(base: HPoint, v: Vector4<f64>) -> Self {
        Self { base, v }
    }

    pub fn norm(&self) -> f64 {
        space_norm(&self.v)
    }
}

pub fn dist(x: &HPoint, y: &HPoint) -> f64 {
    // The chord formula is accurate for nearby points, arccosh for far ones.
    let c = -minkowski(&x.x, &y.x);
    if c > 2.0 {
        return math::acosh(c);
    }
    let d = y.x - x.x;
    2.0 * math::asinh(0.5 * space_norm(&d))
}

pub fn exp_point(t: &TangentVec) -> HPoint {
    let n = t.norm();
    let x = t.base.x * math::cosh(n) + t.v * math::sinhc(n);
    HPoint::normalize(x)
}

pub fn log_point(x: &HPoint, y: &HPoint) -> TangentVec {
    let d = dist(x, y);
    let u = y.x + x.x * minkowski(&x.x, &y.x);
    let v = u * math::x_over_sinh(d);
    // Remove drift off the tangent space.
    TangentVec::new(*x, project_tangent(x, &v))
}

/// Parallel transport along the geodesic from t.base to y.
pub fn parallel_transport(t: &TangentVec, y: &HPoint) -> TangentVec {
    let x = &t.base;
    let c = minkowski(&y.x, &t.v) / (1.0 - minkowski(&x.x, &y.x));
    TangentVec::new(*y, t.v + (x.x + y.x) * c)
}

/// Ambient-vector form of [`parallel_transport`].
pub fn transport_vec(x: &HPoint, y: &HPoint, v: &Vector4<f64>) -> Vector4<f64> {
    let c = minkowski(&y.x, v) / (1.0 - minkowski(&x.x, &y.x));
    v + (x.x + y.x) * c
}

/// Oriented cross product in T_xH³: ⟨u×v, w⟩ = det[x, u, v, w].
pub fn cross_vec(x: &Vector4<f64>, u: &Vector4<f64>, v: &Vector4<f64>) -> Vector4<f64> {
    let mut c = Vector4::zeros();
    for i in 0..4 {
        let mut m = Matrix4::zeros();
        m.set_column(0, x);
        m.set_column(1, u);
        m.set_column(2, v);
        m[(i, 3)] = 1.0;
        c[i] = m.determinant();
    }
    // ⟨ηc, w⟩ = cᵀw.
    Vector4::new(-c[0], c[1], c[2], c[3])
}

pub fn cross_product(x: &HPoint, u: &TangentVec, v: &TangentVec) -> Result<TangentVec> {
    if (u.base.x - x.x).norm() > 1e-9 || (v.base.x - x.x).norm() > 1e-9 {
        return Err(invalid("cross product of vectors at different base points"));
    }
    Ok(TangentVec::new(*x, cross_vec(&x.x, &u.v, &v.v)))
}

/// Nearest point of H² = {x₃ = 0}.
pub fn retract_to_h2(x: &HPoint) -> HPoint {
    HPoint::normalize(Vector4::new(x.x[0], x.x[1], x.x[2], 0.0))
}

/// Orientation-preserving isometry, a matrix in SO⁺(1,3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsomH3 {
    pub m: Matrix4<f64>,
}

impl IsomH3 {
    pub fn identity() -> Self {
        Self { m: Matrix4::identity() }
    }

    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        let g = Self { m };
        if g.lorentz_defect() > 1e-8 * (1.0 + m.norm_squared()) || m[(0, 0)] <= 0.0 || m.determinant() <= 0.0 {
            return Err(invalid("matrix is not in SO+(1,3)"));
        }
        Ok(g)
    }

    /// ‖mᵀηm − η‖.
    pub fn lorentz_defect(&self) -> f64 {
        (self.m.transpose() * eta() * self.m - eta()).norm()
    }

    pub fn compose(&self, other: &IsomH3) -> IsomH3 {
        IsomH3 { m: self.m * other.m }
    }

    pub fn inverse(&self) -> IsomH3 {
        IsomH3 { m: eta() * self.m.transpose() * eta() }
    }

    pub fn apply(&self, p: &HPoint) -> HPoint {
        HPoint::normalize(self.m * p.x)
    }

    pub fn apply_vec(&self, v: &Vector4<f64>) -> Vector4<f64> {
        self.m * v
    }

    pub fn apply_tangent(&self, t: &TangentVec) -> TangentVec {
        TangentVec::new(self.apply(&t.base), self.m * t.v)
    }

    /// Nearest Lorentz matrix by the polar iteration M ← ½(M + ηM⁻ᵀη).
    pub fn project(m: &Matrix4<f64>) -> Result<IsomH3> {
        let mut x = *m;
        for _ in 0..60 {
            let inv_t = x.try_inverse().ok_or_else(|| invalid("singular matrix"))?.transpose();
            let next = (x + eta() * inv_t * eta()) * 0.5;
            let delta = (next - x).norm();
            x = next;
            if delta < 1e-15 * (1.0 + x.norm()) {
                break;
            }
        }
        IsomH3::new(x)
    }

    /// Re-orthonormalize columns (time column first) to remove drift.
    pub fn renormalize(&self) -> IsomH3 {
        let mut cols = [Vector4::zeros(); 4];
        for j in 0..4 {
            let mut c = self.m.column(j).into_owned();
            for (k, ck) in cols.iter().enumerate().take(j) {
                let s = if k == 0 { -1.0 } else { 1.0 };
                c -= ck * (s * minkowski(ck, &c));
            }
            let n = sqrt(minkowski(&c, &c).abs());
            cols[j] = c / n;
        }
        IsomH3 { m: Matrix4::from_columns(&cols) }
    }

    pub fn rotation(i: usize, j: usize, theta: f64) -> IsomH3 {
        let mut m = Matrix4::identity();
        let (s, c) = (math::sin(theta), math::cos(theta));
        m[(i, i)] = c;
        m[(j, j)] = c;
        m[(i, j)] = -s;
        m[(j, i)] = s;
        IsomH3 { m }
    }

    /// Translation by distance d along the x_axis direction through the origin.
    pub fn boost(axis: usize, d: f64) -> IsomH3 {
        let mut m = Matrix4::identity();
        m[(0, 0)] = math::cosh(d);
        m[(axis, axis)] = math::cosh(d);
        m[(0, axis)] = math::sinh(d);
        m[(axis, 0)] = math::sinh(d);
        IsomH3 { m }
    }

    /// True when the plane {x₃ = 0} is preserved.
    pub fn preserves_h2(&self, tol: f64) -> bool {
        (0..3).all(|k| self.m[(3, k)].abs() <= tol && self.m[(k, 3)].abs() <= tol)
            && (self.m[(3, 3)] - 1.0).abs() <= tol
    }
}

/// Pauli basis. With σ₂ = [[0, −i], [i, 0]] the boundary coordinate
/// z = (x₁ − ix₂)/(x₀ − x₃) orients ∂H³ compatibly with the cross product, so
/// SL₂(ℂ) acts holomorphically for the orientation used throughout.
fn pauli(k: usize) -> CMat2 {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match k {
        0 => CMat2::new(o, z, z, o),
        1 => CMat2::new(z, o, o, z),
        2 => CMat2::new(z, -i, i, z),
        _ => CMat2::new(o, z, z, -o),
    }
}

/// Hermitian matrix of a Minkowski vector; det equals −⟨x,x⟩.
pub fn hermitian_of(x: &Vector4<f64>) -> CMat2 {
    (0..4).fold(CMat2::zeros(), |acc, k| acc + pauli(k) * C64::new(x[k], 0.0))
}

pub fn vector_of_hermitian(h: &CMat2) -> Vector4<f64> {
    Vector4::new(
        0.5 * (h[(0, 0)].re + h[(1, 1)].re),
        h[(0, 1)].re,
        -h[(0, 1)].im,
        0.5 * (h[(0, 0)].re - h[(1, 1)].re),
    )
}

/// SL₂(ℂ) → SO⁺(1,3) via X ↦ A X Aᴴ.
pub fn isom_from_psl2(a: &CMat2) -> IsomH3 {
    let mut m = Matrix4::zeros();
    for k in 0..4 {
        let y = a * pauli(k) * a.adjoint();
        m.set_column(k, &vector_of_hermitian(&y));
    }
    IsomH3 { m }
}

/// SO⁺(1,3) → SL₂(ℂ), determined up to sign. Uses
/// Σ_ν (A σ_ν Aᴴ) K σ_ν = 2 tr(AᴴK)·A.
pub fn psl2_convert(g: &IsomH3) -> Result<CMat2> {
    if g.m[(0, 0)] <= 0.0 || g.lorentz_defect() > 1e-6 * (1.0 + g.m.norm_squared()) {
        return Err(invalid("not an orthochronous Lorentz matrix"));
    }
    let ys: [CMat2; 4] = core::array::from_fn(|k| hermitian_of(&g.m.column(k).into_owned()));
    let mut best = CMat2::zeros();
    let mut best_norm = -1.0;
    for mu in 0..4 {
        let kmat = pauli(mu);
        let mm = (0..4).fold(CMat2::zeros(), |acc, nu| acc + ys[nu] * kmat * pauli(nu));
        let n = mm.norm();
        if n > best_norm {
            best_norm = n;
            best = mm;
        }
    }
    let det = math::det2c(&best);
    let a = best / math::csqrt(det);
    Ok(canonical_sign(a))
}

/// Fix the sign ambiguity: first nonzero entry (row-major) has positive real
/// part, or positive imaginary part when its real part vanishes.
pub fn canonical_sign(a: CMat2) -> CMat2 {
    for k in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let z = a[k];
        if math::cabs(z) > 1e-12 {
            let neg = z.re < -1e-12 || (z.re.abs() <= 1e-12 && z.im < 0.0);
            return if neg { -a } else { a };
        }
    }
    a
}

/// Square of the trace, the sign-free conjugation invariant.
pub fn trace_squared(a: &CMat2) -> Complex<f64> {
    let t = math::tr2c(a);
    t * t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_geodesic() {
        let t = 0.7;
        let p = exp_point(&TangentVec::new(HPoint::origin(), Vector4::new(0.0, t, 0.0, 0.0)));
        assert!((p.x - Vector4::new(math::cosh(t), math::sinh(t), 0.0, 0.0)).norm() < 1e-14);
        let o = exp_point(&TangentVec::new(HPoint::origin(), Vector4::zeros()));
        assert_eq!(o, HPoint::origin());
        let y = HPoint { x: Vector4::new(math::cosh(1.0), math::sinh(1.0), 0.0, 0.0) };
        let l = log_point(&HPoint::origin(), &y);
        assert!((l.v - Vector4::new(0.0, 1.0, 0.0, 0.0)).norm() < 1e-13);
        assert!(log_point(&y, &y).v.norm() < 1e-15);
    }

    #[test]
    fn transport_along_own_geodesic() {
        let x = HPoint::h2_polar(0.3, 0.2);
        let y = HPoint::h2_polar(1.1, 2.0);
        let l = log_point(&x, &y);
        let moved = parallel_transport(&l, &y);
        let back = log_point(&y, &x);
        assert!((moved.v + back.v).norm() < 1e-12);
    }

    #[test]
    fn cross_of_standard_frame() {
        let o = HPoint::origin();
        let e1 = TangentVec::new(o, Vector4::new(0.0, 1.0, 0.0, 0.0));
        let e2 = TangentVec::new(o, Vector4::new(0.0, 0.0, 1.0, 0.0));
        let n = cross_product(&o, &e1, &e2).unwrap();
        assert!((n.v - Vector4::new(0.0, 0.0, 0.0, 1.0)).norm() < 1e-15);
        assert!(cross_product(&o, &e1, &e1).unwrap().v.norm() < 1e-15);
        let elsewhere = TangentVec::new(HPoint::h2_polar(1.0, 0.0), e2.v);
        assert!(cross_product(&o, &e1, &elsewhere).is_err());
    }

    #[test]
    fn retraction_examples() {
        let p = HPoint::h2_polar(0.8, 1.0);
        assert!((retract_to_h2(&p).x - p.x).norm() < 1e-15);
        let s = 0.9;
        let q = HPoint { x: Vector4::new(math::cosh(s), 0.0, 0.0, math::sinh(s)) };
        assert!((retract_to_h2(&q).x - HPoint::origin().x).norm() < 1e-15);
    }

    #[test]
    fn psl2_identity_and_half_turn() {
        let a = psl2_convert(&IsomH3::identity()).unwrap();
        assert!((a - CMat2::identity()).norm() < 1e-14);
        let r = IsomH3::rotation(1, 2, math::PI);
        let a = psl2_convert(&r).unwrap();
        let i = C64::new(0.0, 1.0);
        let expect = CMat2::new(i, C64::new(0.0, 0.0), C64::new(0.0, 0.0), -i);
        assert!((a - expect).norm() < 1e-12 || (a + expect).norm() < 1e-12);
    }

    #[test]
    fn rejects_time_reversal() {
        let m = Matrix4::from_diagonal(&Vector4::new(-1.0, -1.0, 1.0, 1.0));
        assert!(psl2_convert(&IsomH3 { m }).is_err());
        assert!(IsomH3::new(m).is_err());
    }

    #[test]
    fn projection_recovers_perturbed_isometry() {
        let g = IsomH3::boost(1, 0.7).compose(&IsomH3::rotation(2, 3, 0.4));
        let noisy = g.m + Matrix4::from_fn(|i, j| 1e-6 * ((i * 4 + j) as f64).sin());
        let p = IsomH3::project(&noisy).unwrap();
        assert!(p.lorentz_defect() < 1e-12);
        assert!((p.m - g.m).norm() < 1e-5);
    }
}
