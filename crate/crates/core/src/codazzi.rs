//! Codazzi operators on the discrete surface: cod(u) = u𝟙 − Hess u, the
//! numerical space of holomorphic quadratic differentials, the splitting
//! φ = cod(u) + b_q + i b_q′, and the Newton solver for det φ = 1.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{inconsistent, invalid, numerical, Result};
use crate::math::{self, CMat2, DMatrix, DVector, Matrix2, C64};
use crate::surface::{OperatorField, RealOperatorField, ScalarField, SurfaceMesh};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn jc() -> CMat2 {
    math::complexify(&math::j2())
}

pub fn cod(mesh: &SurfaceMesh, u: &[C64]) -> OperatorField {
    mesh.hess(u).iter().zip(u).map(|(h, &x)| CMat2::identity() * x - h).collect()
}

/// Per-vertex tr((Jφ)²).
pub fn pi1(phi: &[CMat2]) -> ScalarField {
    let j = jc();
    phi.iter().map(|p| math::tr2c(&(j * p * j * p))).collect()
}

/// Matrix of the linear map u ↦ 2 tr(JφJ·cod u), per vertex.
pub fn lphi_matrix(mesh: &SurfaceMesh, phi: &[CMat2]) -> DMatrix<C64> {
    let n = mesh.num_vertices();
    let j = jc();
    let mut l = DMatrix::from_element(n, n, ZERO);
    for v in 0..n {
        let k = j * phi[v] * j * c(2.0);
        l[(v, v)] += math::tr2c(&k);
        for (w, h) in mesh.hess_stencil(v) {
            l[(v, w)] -= math::tr2c(&(k * math::complexify(&h)));
        }
    }
    l
}

pub fn lphi_apply(mesh: &SurfaceMesh, phi: &[CMat2], udot: &[C64]) -> ScalarField {
    let j = jc();
    cod(mesh, udot).iter().zip(phi).map(|(cu, p)| math::tr2c(&(j * p * j * cu)) * 2.0).collect()
}

/// Re⟨−L_φ u̇, u̇⟩ in the lumped L² pairing.
pub fn coercivity_form(mesh: &SurfaceMesh, phi: &[CMat2], udot: &[C64]) -> f64 {
    let lu = lphi_apply(mesh, phi, udot);
    -mesh.scalar_inner(udot, &lu).re
}

/// Smallest eigenvalue of Re φ over the vertices.
pub fn positivity_margin(phi: &[CMat2]) -> f64 {
    phi.iter()
        .map(|p| math::sym2_eigenvalues(&math::sym2(&math::re2(p))).0)
        .fold(f64::INFINITY, f64::min)
}

/// Traceless symmetric operator fields approximately in the kernel of d^∇.
#[derive(Clone, Debug, PartialEq)]
pub struct QDBasis {
    pub basis: Vec<RealOperatorField>,
    pub gram: DMatrix<f64>,
    /// Singular values of the mass-weighted d^∇ on traceless fields,
    /// ascending (the first few).
    pub singular_values: Vec<f64>,
    /// σ_{k+1}/σ_k with k = 6g − 6.
    pub spectral_gap: f64,
    /// Largest L² Codazzi residual among basis elements.
    pub max_residual: f64,
}

impl QDBasis {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// b_q = Σ q_k B_k.
    pub fn field(&self, q: &[f64]) -> RealOperatorField {
        let n = self.basis.first().map_or(0, |b| b.len());
        let mut out = vec![Matrix2::zeros(); n];
        for (qk, bk) in q.iter().zip(&self.basis) {
            for (o, b) in out.iter_mut().zip(bk) {
                *o += b * *qk;
            }
        }
        out
    }

    /// b_q + i b_q′.
    pub fn complex_field(&self, q: &[f64], qp: &[f64]) -> OperatorField {
        self.field(q).iter().zip(self.field(qp)).map(|(a, b)| math::cmat2(a, &b)).collect()
    }
}

fn traceless(p: f64, r: f64) -> Matrix2<f64> {
    Matrix2::new(p, r, r, -p)
}

/// Dense matrix of d^∇ restricted to traceless symmetric vertex fields,
/// rows weighted by √area, columns by 1/√(2·mass) so that singular vectors
/// are L²-orthonormal fields. Built column by column from unit fields.
fn weighted_dnabla_matrix(mesh: &SurfaceMesh) -> DMatrix<f64> {
    let nv = mesh.num_vertices();
    let nt = mesh.num_triangles();
    let mut a = DMatrix::zeros(2 * nt, 2 * nv);
    let mut field = vec![CMat2::zeros(); nv];
    for v in 0..nv {
        for comp in 0..2 {
            let unit = if comp == 0 { traceless(1.0, 0.0) } else { traceless(0.0, 1.0) };
            field[v] = math::complexify(&unit);
            let r = mesh.dnabla(&field);
            let scale = 1.0 / math::sqrt(2.0 * mesh.mass[v]);
            for t in 0..nt {
                let w = math::sqrt(mesh.areas[t]) * scale;
                a[(2 * t, 2 * v + comp)] = w * r[t].x.re;
                a[(2 * t + 1, 2 * v + comp)] = w * r[t].y.re;
            }
            field[v] = CMat2::zeros();
        }
    }
    a
}

pub fn qd_basis(mesh: &SurfaceMesh) -> Result<QDBasis> {
    let g = mesh.genus();
    let dim = 6 * g - 6;
    let nv = mesh.num_vertices();
    if 2 * nv <= dim + 1 {
        return Err(invalid("mesh too coarse for the quadratic-differential basis"));
    }
    let a = weighted_dnabla_matrix(mesh);
    let ata = a.transpose() * &a;
    let eig = ata.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let singular_values: Vec<f64> =
        order.iter().take(dim + 4).map(|&i| math::sqrt(eig.eigenvalues[i].max(0.0))).collect();
    let spectral_gap = singular_values[dim] / singular_values[dim - 1].max(1e-300);
    let basis: Vec<RealOperatorField> = order[..dim]
        .iter()
        .map(|&i| {
            let y = eig.eigenvectors.column(i);
            (0..nv)
                .map(|v| {
                    let s = 1.0 / math::sqrt(2.0 * mesh.mass[v]);
                    traceless(y[2 * v] * s, y[2 * v + 1] * s)
                })
                .collect()
        })
        .collect();
    let cbasis: Vec<OperatorField> = basis.iter().map(|b| crate::surface::real_ops(b)).collect();
    let gram = DMatrix::from_fn(dim, dim, |i, j| mesh.op_inner(&cbasis[i], &cbasis[j]));
    let max_residual = cbasis.iter().map(|b| mesh.dnabla_norm(b)).fold(0.0, f64::max);
    Ok(QDBasis { basis, gram, singular_values, spectral_gap, max_residual })
}

/// Output of [`decompose`].
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionTriple {
    pub u: ScalarField,
    pub q: Vec<f64>,
    pub qprime: Vec<f64>,
    /// ‖φ − cod u − proj‖ / ‖φ − cod u‖ (0 when the remainder vanishes).
    pub projection_residual: f64,
    /// ‖φ − reassembled‖ / ‖φ‖.
    pub reassembly_error: f64,
}

/// Dense matrix of u ↦ tr cod(u) = 2u − tr Hess u.
pub fn trace_cod_matrix(mesh: &SurfaceMesh) -> DMatrix<f64> {
    let n = mesh.num_vertices();
    let mut m = DMatrix::zeros(n, n);
    for v in 0..n {
        m[(v, v)] += 2.0;
        for (w, h) in mesh.hess_stencil(v) {
            m[(v, w)] -= h.trace();
        }
    }
    m
}

pub fn assemble(mesh: &SurfaceMesh, basis: &QDBasis, u: &[C64], q: &[f64], qp: &[f64]) -> OperatorField {
    let bq = basis.complex_field(q, qp);
    cod(mesh, u).iter().zip(bq).map(|(a, b)| a + b).collect()
}

/// Split a Codazzi field as cod(u) + b_q + i b_q′. The potential solves
/// tr cod(u) = tr φ with the same discrete Hessian that defines cod, so the
/// splitting inverts [`assemble`] exactly.
pub fn decompose(mesh: &SurfaceMesh, basis: &QDBasis, phi: &[CMat2]) -> Result<DecompositionTriple> {
    let d = decompose_unchecked(mesh, basis, phi)?;
    if d.projection_residual > 0.05 {
        return Err(inconsistent(format!(
            "remainder is {:.1}% away from the quadratic-differential span",
            100.0 * d.projection_residual
        )));
    }
    Ok(d)
}

/// [`decompose`] without the Codazzi check on the remainder, for fields that
/// carry discretization noise (e.g. data extracted from a discrete map).
pub fn decompose_unchecked(mesh: &SurfaceMesh, basis: &QDBasis, phi: &[CMat2]) -> Result<DecompositionTriple> {
    let n = mesh.num_vertices();
    if phi.len() != n {
        return Err(invalid("field length does not match the mesh"));
    }
    let lu = trace_cod_matrix(mesh).map(c).lu();
    let rhs = DVector::from_iterator(n, phi.iter().map(math::tr2c));
    let u: ScalarField = lu.solve(&rhs).ok_or_else(|| numerical("singular trace system"))?.iter().copied().collect();
    let codu = cod(mesh, &u);
    let rem: OperatorField = phi.iter().zip(&codu).map(|(p, cu)| p - cu).collect();
    let re: OperatorField = rem.iter().map(|m| math::complexify(&math::re2(m))).collect();
    let im: OperatorField = rem.iter().map(|m| math::complexify(&math::im2(m))).collect();
    let cbasis: Vec<OperatorField> = basis.basis.iter().map(|b| crate::surface::real_ops(b)).collect();
    let ginv = basis.gram.clone().try_inverse().ok_or_else(|| numerical("singular Gram matrix"))?;
    let project = |f: &OperatorField| -> Vec<f64> {
        let rhs = DVector::from_iterator(cbasis.len(), cbasis.iter().map(|b| mesh.op_inner(b, f)));
        (&ginv * rhs).iter().copied().collect()
    };
    let q = project(&re);
    let qprime = project(&im);
    let recon = assemble(mesh, basis, &u, &q, &qprime);
    let diff: OperatorField = phi.iter().zip(&recon).map(|(a, b)| a - b).collect();
    let rem_norm = mesh.op_norm(&rem);
    let projection_residual = if rem_norm > 1e-14 * (1.0 + mesh.op_norm(phi)) {
        mesh.op_norm(&diff) / rem_norm
    } else {
        0.0
    };
    let reassembly_error = mesh.op_norm(&diff) / mesh.op_norm(phi).max(1e-300);
    Ok(DecompositionTriple { u, q, qprime, projection_residual, reassembly_error })
}

/// A solution of det φ = 1 with φ = cod(u) + b_q + i b_q′.
#[derive(Clone, Debug, PartialEq)]
pub struct MinimizingDatum {
    pub phi: OperatorField,
    pub u: ScalarField,
    /// max_v |det φ_v − 1|.
    pub det_residual: f64,
    /// L² norm of d^∇φ.
    pub codazzi_residual: f64,
    pub positivity_margin: f64,
    /// max |Π₁ + 2| before each Newton step, then the final value.
    pub history: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-9, max_iter: 50 }
    }
}

fn det_residual(phi: &[CMat2]) -> f64 {
    phi.iter().map(|p| math::cabs(math::det2c(p) - 1.0)).fold(0.0, f64::max)
}

/// Newton's method for Π₁(cod(u) + b_q + i b_q′) = −2, i.e. det φ = 1 at every
/// vertex, with halving when the step would lose positivity of Re φ or fail
/// to reduce the residual.
pub fn newton_det(
    mesh: &SurfaceMesh,
    basis: &QDBasis,
    q: &[f64],
    qp: &[f64],
    u_init: &[C64],
    opts: NewtonOptions,
) -> Result<MinimizingDatum> {
    let n = mesh.num_vertices();
    let bq = basis.complex_field(q, qp);
    let phi_of = |u: &[C64]| -> OperatorField { cod(mesh, u).iter().zip(&bq).map(|(a, b)| a + b).collect() };
    let mut u = u_init.to_vec();
    let mut phi = phi_of(&u);
    let mut history = Vec::new();
    for it in 0..=opts.max_iter {
        let res = det_residual(&phi);
        history.push(res);
        let margin = positivity_margin(&phi);
        if margin <= 0.0 {
            return Err(numerical(format!("Re φ lost positivity (margin {margin:.3e}) at iteration {it}")));
        }
        if res <= opts.tol {
            return Ok(MinimizingDatum {
                codazzi_residual: mesh.dnabla_norm(&phi),
                positivity_margin: margin,
                det_residual: res,
                phi,
                u,
                history,
                iterations: it,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let r = DVector::from_iterator(n, pi1(&phi).iter().map(|p| -(p + 2.0)));
        let du = lphi_matrix(mesh, &phi).lu().solve(&r).ok_or_else(|| numerical("singular Newton matrix"))?;
        let mut step = 1.0;
        loop {
            let trial: ScalarField = u.iter().zip(du.iter()).map(|(a, d)| a + d * step).collect();
            let tphi = phi_of(&trial);
            if positivity_margin(&tphi) > 0.0 && det_residual(&tphi) < res {
                u = trial;
                phi = tphi;
                break;
            }
            step *= 0.5;
            if step < 1e-6 {
                return Err(numerical(format!("Newton line search failed at residual {res:.3e}")));
            }
        }
    }
    Err(numerical(format!("Newton did not converge in {} steps (residual {:.3e})", opts.max_iter, history.last().unwrap())))
}

/// Newton with continuation: solve along s·(q, q′) for s = 1/k, …, 1,
/// doubling k when a stage fails.
pub fn newton_det_continuation(
    mesh: &SurfaceMesh,
    basis: &QDBasis,
    q: &[f64],
    qp: &[f64],
    opts: NewtonOptions,
) -> Result<MinimizingDatum> {
    let one = vec![c(1.0); mesh.num_vertices()];
    if let Ok(d) = newton_det(mesh, basis, q, qp, &one, opts) {
        return Ok(d);
    }
    let mut stages = 2;
    while stages <= 64 {
        let mut u = one.clone();
        let mut last = None;
        for k in 1..=stages {
            let s = k as f64 / stages as f64;
            let qs: Vec<f64> = q.iter().map(|x| x * s).collect();
            let qps: Vec<f64> = qp.iter().map(|x| x * s).collect();
            match newton_det(mesh, basis, &qs, &qps, &u, opts) {
                Ok(d) => {
                    u = d.u.clone();
                    last = Some(d);
                }
                Err(_) => {
                    last = None;
                    break;
                }
            }
        }
        if let Some(d) = last {
            return Ok(d);
        }
        stages *= 2;
    }
    Err(numerical("continuation failed"))
}

/// φ = b − iJba.
pub fn phi_from_ba(b: &[Matrix2<f64>], a: &[Matrix2<f64>]) -> OperatorField {
    let j = math::j2();
    b.iter().zip(a).map(|(b, a)| math::cmat2(b, &(-(j * b * a)))).collect()
}

/// Inverse of [`phi_from_ba`]: b = Re φ and, from Im φ = −Jba,
/// a = b⁻¹J·Im φ.
pub fn ba_from_phi(phi: &[CMat2]) -> Result<(RealOperatorField, RealOperatorField)> {
    let j = math::j2();
    let mut b = Vec::with_capacity(phi.len());
    let mut a = Vec::with_capacity(phi.len());
    for p in phi {
        let bv = math::re2(p);
        let inv = bv.try_inverse().ok_or_else(|| invalid("Re φ is singular"))?;
        a.push(inv * j * math::im2(p));
        b.push(bv);
    }
    Ok((b, a))
}

/// Norms of the critical-immersion system for (b, a).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElResiduals {
    pub dnabla_b: f64,
    pub dnabla_ba: f64,
    pub tr_jb: f64,
    pub tr_ba: f64,
    pub tr_jb2a: f64,
    pub gauss: f64,
    pub min_eig_b: f64,
}

impl ElResiduals {
    pub fn as_array(&self) -> [f64; 6] {
        [self.dnabla_b, self.dnabla_ba, self.tr_jb, self.tr_ba, self.tr_jb2a, self.gauss]
    }

    pub fn max(&self) -> f64 {
        self.as_array().iter().copied().fold(0.0, f64::max)
    }
}

pub fn el_residuals(mesh: &SurfaceMesh, b: &[Matrix2<f64>], a: &[Matrix2<f64>]) -> ElResiduals {
    let j = math::j2();
    let l2 = |f: &dyn Fn(usize) -> f64| -> f64 {
        math::sqrt((0..b.len()).map(|v| mesh.mass[v] * f(v) * f(v)).sum::<f64>())
    };
    let bc = crate::surface::real_ops(b);
    let ba: Vec<Matrix2<f64>> = b.iter().zip(a).map(|(b, a)| b * a).collect();
    let bac = crate::surface::real_ops(&ba);
    ElResiduals {
        dnabla_b: mesh.dnabla_norm(&bc),
        dnabla_ba: mesh.dnabla_norm(&bac),
        tr_jb: l2(&|v| (j * b[v]).trace()),
        tr_ba: l2(&|v| ba[v].trace()),
        tr_jb2a: l2(&|v| (j * b[v] * b[v] * a[v]).trace()),
        gauss: l2(&|v| b[v].determinant() - ba[v].determinant() - 1.0),
        min_eig_b: b.iter().map(|m| math::sym2_eigenvalues(&math::sym2(m)).0).fold(f64::INFINITY, f64::min),
    }
}

/// Both sides of ∫ u̇ tr(JφJ Hess u̇′) = ∫ det φ ⟨φ⁻¹ grad u̇, grad u̇′⟩ for a
/// real self-adjoint Codazzi φ. The left side is a vertex sum, the right a
/// triangle sum of P1 gradients.
pub fn divergence_identity_check(mesh: &SurfaceMesh, phi: &[Matrix2<f64>], udot: &[f64], udot2: &[f64]) -> (f64, f64) {
    let j = math::j2();
    let h = mesh.hess(&crate::surface::real_field(udot2));
    let lhs: f64 = (0..mesh.num_vertices())
        .map(|v| mesh.mass[v] * udot[v] * (j * phi[v] * j * math::re2(&h[v])).trace())
        .sum();
    let g1 = mesh.grad(&crate::surface::real_field(udot));
    let g2 = mesh.grad(&crate::surface::real_field(udot2));
    let cphi = crate::surface::real_ops(phi);
    let rhs: f64 = (0..mesh.num_triangles())
        .map(|t| {
            let p = math::re2(&mesh.op_at_triangle(&cphi, t));
            // det(φ)φ⁻¹ = adj φ.
            let adj = Matrix2::new(p[(1, 1)], -p[(0, 1)], -p[(1, 0)], p[(0, 0)]);
            let a = g1[t].map(|z| z.re);
            let b = g2[t].map(|z| z.re);
            mesh.areas[t] * (adj * a).dot(&b)
        })
        .sum();
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{build_domain, real_field, refine};

    fn mesh(level: usize) -> SurfaceMesh {
        refine(&build_domain(2).unwrap(), level)
    }

    #[test]
    fn cod_of_constants() {
        let m = mesh(2);
        let u = vec![c(3.0); m.num_vertices()];
        for p in cod(&m, &u) {
            assert!((p - CMat2::identity() * c(3.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn pi1_closed_forms() {
        let id = vec![CMat2::identity()];
        assert!((pi1(&id)[0] - c(-2.0)).norm() < 1e-15);
        let (p, r) = (0.3, -0.7);
        let b = vec![math::complexify(&traceless(p, r))];
        assert!((pi1(&b)[0] - c(2.0 * (p * p + r * r))).norm() < 1e-14);
        let s = math::cmat2(&Matrix2::new(1.0, 0.2, 0.2, 3.0), &Matrix2::new(-0.5, 0.1, 0.1, 0.4));
        let lhs = pi1(&[s])[0];
        assert!((lhs + math::det2c(&s) * 2.0).norm() < 1e-12);
    }

    #[test]
    fn lphi_at_identity_on_constants() {
        let m = mesh(1);
        let phi = vec![CMat2::identity(); m.num_vertices()];
        let one = vec![c(1.0); m.num_vertices()];
        for x in lphi_apply(&m, &phi, &one) {
            assert!((x - c(-4.0)).norm() < 1e-9);
        }
        let zero = vec![ZERO; m.num_vertices()];
        assert!(lphi_apply(&m, &phi, &zero).iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn lphi_matrix_matches_apply() {
        let m = mesh(1);
        let n = m.num_vertices();
        let phi: OperatorField = (0..n)
            .map(|v| math::cmat2(&Matrix2::new(1.0 + 0.1 * v as f64, 0.2, 0.2, 0.9), &Matrix2::new(0.1, 0.05, 0.05, -0.2)))
            .collect();
        let u: ScalarField = (0..n).map(|v| C64::new(math::sin(v as f64), math::cos(3.0 * v as f64))).collect();
        let dense = lphi_matrix(&m, &phi) * DVector::from_column_slice(&u);
        for (a, b) in dense.iter().zip(lphi_apply(&m, &phi, &u)) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn phi_ba_conversions_invert() {
        let b = vec![Matrix2::new(1.3, 0.2, 0.2, 0.8)];
        let a = vec![Matrix2::new(0.1, -0.3, 0.4, 0.2)];
        let phi = phi_from_ba(&b, &a);
        let (b2, a2) = ba_from_phi(&phi).unwrap();
        assert!((b2[0] - b[0]).norm() < 1e-14);
        assert!((a2[0] - a[0]).norm() < 1e-14);
        // det φ = det b − det(ba) − i tr(Jb²a) with J e₁ = e₂.
        let j = math::j2();
        let d = math::det2c(&phi[0]);
        let expect = C64::new(b[0].determinant() - (b[0] * a[0]).determinant(), -(j * b[0] * b[0] * a[0]).trace());
        assert!((d - expect).norm() < 1e-13);
    }

    #[test]
    fn identity_datum_has_zero_residuals() {
        let m = mesh(1);
        let n = m.num_vertices();
        let r = el_residuals(&m, &vec![Matrix2::identity(); n], &vec![Matrix2::zeros(); n]);
        assert!(r.max() < 1e-9);
        assert!((r.min_eig_b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equidistant_datum_is_not_critical() {
        let m = mesh(1);
        let n = m.num_vertices();
        let t: f64 = 0.4;
        let b = vec![Matrix2::identity() * math::cosh(t); n];
        let a = vec![Matrix2::identity() * math::tanh(t); n];
        let r = el_residuals(&m, &b, &a);
        assert!(r.gauss < 1e-12);
        let expect = 2.0 * math::sinh(t) * math::sqrt(m.total_area());
        assert!((r.tr_ba - expect).abs() < 1e-9);
    }

    #[test]
    fn fuchsian_newton_is_trivial() {
        let m = mesh(2);
        let basis = qd_basis(&m).unwrap();
        let one = vec![c(1.0); m.num_vertices()];
        let d = newton_det(&m, &basis, &[0.0; 6], &[0.0; 6], &one, NewtonOptions::default()).unwrap();
        assert_eq!(d.iterations, 0);
        assert!(d.det_residual < 1e-12);
    }

    #[test]
    fn decompose_identity() {
        let m = mesh(2);
        let basis = qd_basis(&m).unwrap();
        let phi = vec![CMat2::identity(); m.num_vertices()];
        let d = decompose(&m, &basis, &phi).unwrap();
        assert!(d.u.iter().all(|u| (u - c(1.0)).norm() < 1e-9));
        assert!(d.q.iter().chain(&d.qprime).all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn divergence_identity_at_identity_is_green() {
        let m = mesh(2);
        let n = m.num_vertices();
        let u: Vec<f64> = (0..n).map(|v| math::sin(0.7 * v as f64)).collect();
        let phi = vec![Matrix2::identity(); n];
        let (_, rhs) = divergence_identity_check(&m, &phi, &u, &u);
        let ku = m.stiffness.mul(&u);
        let green: f64 = u.iter().zip(&ku).map(|(a, b)| a * b).sum();
        // Chart triangles against flat triangles with the same edge lengths.
        assert!((rhs - green).abs() < 0.05 * green.abs());
        let one = vec![1.0; n];
        let (_, r0) = divergence_identity_check(&m, &phi, &u, &one);
        assert!(r0.abs() < 1e-12);
    }

    #[test]
    fn real_cod_field_is_codazzi_under_refinement() {
        let d = build_domain(2).unwrap();
        let mut prev = f64::INFINITY;
        for level in 1..5 {
            let m = refine(&d, level);
            let orbit = m.bump_orbit(2.0, 0.5);
            let centre = crate::hyperbolic::HPoint::h2_polar(0.5, 0.3);
            let u = real_field(&m.bump_field(&centre, 2.0, &orbit));
            let c = cod(&m, &u);
            let r = m.dnabla_norm(&c) / m.op_norm(&c);
            assert!(r < 0.8 * prev, "level {level}: {r} vs {prev}");
            prev = r;
        }
    }
}
