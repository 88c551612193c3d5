//! 1-Schatten norm of linear maps from a Euclidean plane into Euclidean
//! 3-space, its ε-regularisation q_ε, and the derivative and convexity tools
//! built on them.
//!
//! A map L is stored as a 3×2 matrix (columns = images of an orthonormal
//! source basis). Its polar decomposition is L = σ∘b with b = √(LᵀL).

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math::{self, sqrt, Matrix2, Matrix3, Matrix3x2, Vector3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinMap32 {
    pub m: Matrix3x2<f64>,
}

impl LinMap32 {
    pub fn new(m: Matrix3x2<f64>) -> Self {
        Self { m }
    }

    pub fn zero() -> Self {
        Self { m: Matrix3x2::zeros() }
    }

    /// The inclusion of the plane as the first two coordinates.
    pub fn inclusion() -> Self {
        Self { m: Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0) }
    }

    /// Gram matrix LᵀL.
    pub fn gram(&self) -> Matrix2<f64> {
        self.m.transpose() * self.m
    }

    /// Singular values, ascending.
    pub fn singular_values(&self) -> (f64, f64) {
        let (a, b) = math::sym2_eigenvalues(&self.gram());
        (sqrt(a.max(0.0)), sqrt(b.max(0.0)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarParts {
    pub b: Matrix2<f64>,
    /// Isometric factor, present when L has rank 2.
    pub sigma: Option<Matrix3x2<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ASParts {
    pub a_part: Matrix2<f64>,
    pub v: Vector3<f64>,
}

pub fn polar_decompose(l: &LinMap32) -> PolarParts {
    let b = math::sqrt_psd2(&l.gram());
    let tol = 1e-12 * (1.0 + l.m.norm_squared());
    let sigma = if b.determinant() > tol {
        b.try_inverse().map(|bi| l.m * bi)
    } else {
        None
    };
    PolarParts { b, sigma }
}

pub fn schatten1(l: &LinMap32) -> f64 {
    q_eps(l, 0.0)
}

/// √(tr(ε²𝟙+LᵀL) + 2√det(ε²𝟙+LᵀL)), the trace of √(ε²𝟙+LᵀL).
pub fn q_eps(l: &LinMap32, eps: f64) -> f64 {
    q_eps_gram(&l.gram(), eps)
}

/// q_ε written in terms of the Gram matrix G = LᵀL.
pub fn q_eps_gram(g: &Matrix2<f64>, eps: f64) -> f64 {
    let e2 = eps * eps;
    let ge = g + Matrix2::identity() * e2;
    sqrt((ge.trace() + 2.0 * sqrt(ge.determinant().max(0.0))).max(0.0))
}

/// Derivative of q_ε with respect to the Gram matrix, as the symmetric matrix
/// D with dq = tr(D·dG).
pub fn q_eps_gram_gradient(g: &Matrix2<f64>, eps: f64) -> Option<Matrix2<f64>> {
    let e2 = eps * eps;
    let ge = g + Matrix2::identity() * e2;
    let det = ge.determinant();
    if det <= 0.0 {
        return None;
    }
    let q = q_eps_gram(g, eps);
    let inv = ge.try_inverse()?;
    Some((Matrix2::identity() + inv * sqrt(det)) / (2.0 * q))
}

/// d/dt q_ε((𝟙 + tA)L) at t = 0, via
/// (tr Â + √det(ε²𝟙+LᵀL)·tr((ε²𝟙+LᵀL)⁻¹Â)) / (2q_ε) with Â = 2LᵀAL.
pub fn q_eps_directional_derivative(l: &LinMap32, a: &Matrix3<f64>, eps: f64) -> Result<f64> {
    if eps < 0.0 {
        return Err(invalid("eps must be nonnegative"));
    }
    if (a - a.transpose()).norm() > 1e-12 * (1.0 + a.norm()) {
        return Err(invalid("A must be symmetric"));
    }
    if a.symmetric_eigenvalues().min() < -1e-12 * (1.0 + a.norm()) {
        return Err(invalid("A must be nonnegative"));
    }
    let g = l.gram();
    let ahat = l.m.transpose() * a * l.m * 2.0;
    let d = q_eps_gram_gradient(&g, eps)
        .ok_or_else(|| invalid("derivative undefined for rank-deficient L at eps = 0"))?;
    Ok((d * ahat).trace())
}

/// n_ε(t₁,t₂) = √(ε²+t₁²) + √(ε²+t₂²).
pub fn n_eps(t1: f64, t2: f64, eps: f64) -> f64 {
    sqrt(eps * eps + t1 * t1) + sqrt(eps * eps + t2 * t2)
}

/// Orthonormal basis (e₁, e₂) of N⊥ with (N, e₁, e₂) right-handed, i.e.
/// e₁ × e₂ = N.
pub fn plane_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let k = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vector3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = (k - n * n.dot(&k)).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Split L: W → ℝ³ (W = N⊥, source basis identified with [`plane_basis`])
/// as L = A + v×• with A self-adjoint on W.
pub fn as_decompose(l: &LinMap32, n: &Vector3<f64>) -> Result<ASParts> {
    if (n.norm() - 1.0).abs() > 1e-9 {
        return Err(invalid("N must be a unit vector"));
    }
    let (e1, e2) = plane_basis(n);
    Ok(as_decompose_in(l, n, &e1, &e2))
}

/// Same as [`as_decompose`] with an explicit right-handed basis of W.
pub fn as_decompose_in(
    l: &LinMap32,
    n: &Vector3<f64>,
    e1: &Vector3<f64>,
    e2: &Vector3<f64>,
) -> ASParts {
    let c1 = l.m.column(0).into_owned();
    let c2 = l.m.column(1).into_owned();
    let w = Matrix2::new(e1.dot(&c1), e1.dot(&c2), e2.dot(&c1), e2.dot(&c2));
    // v×e₁ = v_N e₂ − v₂ N and v×e₂ = −v_N e₁ + v₁ N.
    let vn = 0.5 * (w[(1, 0)] - w[(0, 1)]);
    let v1 = n.dot(&c2);
    let v2 = -n.dot(&c1);
    ASParts { a_part: math::sym2(&w), v: n * vn + e1 * v1 + e2 * v2 }
}

/// Reassemble A + v×• as a 3×2 matrix in the basis (e₁, e₂).
pub fn as_reassemble(p: &ASParts, e1: &Vector3<f64>, e2: &Vector3<f64>) -> LinMap32 {
    let img = |k: usize, e: &Vector3<f64>| e1 * p.a_part[(0, k)] + e2 * p.a_part[(1, k)] + p.v.cross(e);
    let c1 = img(0, e1);
    let c2 = img(1, e2);
    LinMap32::new(Matrix3x2::from_columns(&[c1, c2]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobiProbe {
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    /// Second divided differences (u₊ − u)/h₊ − (u − u₋)/h₋ at interior samples.
    pub second_differences: Vec<f64>,
}

const JACOBI_STEP: f64 = 1e-3;

fn check_admissible(a: &Matrix3<f64>) -> Result<()> {
    let scale = 1.0 + a.norm();
    if (a - a.transpose()).norm() > 1e-10 * scale {
        return Err(invalid("A(s) is not symmetric"));
    }
    if a.symmetric_eigenvalues().min() < -1e-10 * scale {
        return Err(invalid("A(s) is not nonnegative"));
    }
    Ok(())
}

/// Integrate T̈ = A(s)T from (T0, Ṫ0) with classical RK4 and report
/// u(s) = ‖T(s)‖₁ on the grid.
pub fn jacobi_convexity_probe(
    t0: &LinMap32,
    tdot0: &LinMap32,
    a: &dyn Fn(f64) -> Matrix3<f64>,
    grid: &[f64],
) -> Result<JacobiProbe> {
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid.first().is_some_and(|&s| s < 0.0) {
        return Err(invalid("grid must be increasing and start at s >= 0"));
    }
    let mut t = t0.m;
    let mut td = tdot0.m;
    let mut s = 0.0;
    let mut u = Vec::with_capacity(grid.len());
    for &target in grid {
        let span = target - s;
        let steps = libm::ceil(span / JACOBI_STEP).max(0.0) as usize;
        if steps > 0 {
            let h = span / steps as f64;
            for _ in 0..steps {
                let a0 = a(s);
                let am = a(s + 0.5 * h);
                let a1 = a(s + h);
                check_admissible(&a0)?;
                check_admissible(&am)?;
                check_admissible(&a1)?;
                let k1x = td;
                let k1v = a0 * t;
                let k2x = td + k1v * (0.5 * h);
                let k2v = am * (t + k1x * (0.5 * h));
                let k3x = td + k2v * (0.5 * h);
                let k3v = am * (t + k2x * (0.5 * h));
                let k4x = td + k3v * h;
                let k4v = a1 * (t + k3x * h);
                t += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
                td += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
                s += h;
            }
        }
        s = target;
        u.push(schatten1(&LinMap32::new(t)));
    }
    let second_differences = (1..grid.len().saturating_sub(1))
        .map(|i| {
            let hp = grid[i + 1] - grid[i];
            let hm = grid[i] - grid[i - 1];
            (u[i + 1] - u[i]) / hp - (u[i] - u[i - 1]) / hm
        })
        .collect();
    Ok(JacobiProbe { s: grid.to_vec(), u, second_differences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SVD;

    fn svd_oracle(l: &LinMap32) -> f64 {
        SVD::new(l.m, false, false).singular_values.sum()
    }

    #[test]
    fn already_polar_map() {
        let l = LinMap32::new(Matrix3x2::new(3.0, 0.0, 0.0, 4.0, 0.0, 0.0));
        let p = polar_decompose(&l);
        assert!((p.b - Matrix2::new(3.0, 0.0, 0.0, 4.0)).norm() < 1e-14);
        assert!((p.sigma.unwrap() - LinMap32::inclusion().m).norm() < 1e-14);
        assert!((schatten1(&l) - 7.0).abs() < 1e-14);
    }

    #[test]
    fn zero_map() {
        let p = polar_decompose(&LinMap32::zero());
        assert_eq!(p.b, Matrix2::zeros());
        assert!(p.sigma.is_none());
        assert_eq!(schatten1(&LinMap32::zero()), 0.0);
        assert!((q_eps(&LinMap32::zero(), 1.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn q_eps_known_value() {
        let l = LinMap32::new(Matrix3x2::new(3.0, 0.0, 0.0, 4.0, 0.0, 0.0));
        let expect = sqrt(10.0) + sqrt(17.0);
        assert!((q_eps(&l, 1.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn rotated_isometry_has_norm_two() {
        let (e1, e2) = plane_basis(&Vector3::new(1.0, 2.0, 2.0).normalize());
        let l = LinMap32::new(Matrix3x2::from_columns(&[e1, e2]));
        assert!((schatten1(&l) - 2.0).abs() < 1e-13);
        assert!((svd_oracle(&l) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn derivative_closed_cases() {
        let l = LinMap32::inclusion();
        let d = q_eps_directional_derivative(&l, &Matrix3::identity(), 0.0).unwrap();
        assert!((d - 2.0).abs() < 1e-13);
        let d0 = q_eps_directional_derivative(&l, &Matrix3::zeros(), 0.3).unwrap();
        assert_eq!(d0, 0.0);
        assert!(q_eps_directional_derivative(&LinMap32::zero(), &Matrix3::identity(), 0.0).is_err());
    }

    #[test]
    fn as_identity_and_cross_cases() {
        let n = Vector3::new(0.0, 0.0, 1.0);
        let (e1, e2) = plane_basis(&n);
        let incl = LinMap32::new(Matrix3x2::from_columns(&[e1, e2]));
        let p = as_decompose(&incl, &n).unwrap();
        assert!((p.a_part - Matrix2::identity()).norm() < 1e-14);
        assert!(p.v.norm() < 1e-14);

        let cross = LinMap32::new(Matrix3x2::from_columns(&[n.cross(&e1), n.cross(&e2)]));
        let p = as_decompose(&cross, &n).unwrap();
        assert!(p.a_part.norm() < 1e-14);
        assert!((p.v - n).norm() < 1e-14);

        let lift = LinMap32::new(Matrix3x2::from_columns(&[n, Vector3::zeros()]));
        let p = as_decompose(&lift, &n).unwrap();
        assert!(p.a_part.norm() < 1e-14);
        assert!((p.v + e2).norm() < 1e-14);
        assert!(as_decompose(&lift, &(n * 2.0)).is_err());
    }

    #[test]
    fn jacobi_cosh_solution() {
        let t0 = LinMap32::new(Matrix3x2::new(1.0, 0.2, 0.0, 2.0, 0.5, 0.0));
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let probe = jacobi_convexity_probe(&t0, &LinMap32::zero(), &|_| Matrix3::identity(), &grid).unwrap();
        let u0 = probe.u[0];
        for (s, u) in probe.s.iter().zip(&probe.u) {
            assert!((u - math::cosh(*s) * u0).abs() < 1e-6);
        }
    }

    #[test]
    fn jacobi_rejects_indefinite() {
        let grid = [0.0, 0.5, 1.0];
        let a = |_: f64| Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 0.0));
        assert!(jacobi_convexity_probe(&LinMap32::inclusion(), &LinMap32::zero(), &a, &grid).is_err());
    }
}
