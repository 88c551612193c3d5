//! Randomized invariants of the pointwise kernels.

use hyperimm::codazzi::pi1;
use hyperimm::hyperbolic::{self as hyp, HPoint, IsomH3, TangentVec};
use hyperimm::math::{self, CMat2, Matrix3, Matrix3x2, Matrix4, Vector3, Vector4, C64};
use hyperimm::schatten::{self, LinMap32};
use proptest::prelude::*;

fn linmap() -> impl Strategy<Value = LinMap32> {
    prop::array::uniform6(-3.0f64..3.0).prop_map(|a| LinMap32::new(Matrix3x2::from_row_slice(&a)))
}

fn unit3() -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-1.0f64..1.0)
        .prop_filter("nonzero", |a| a.iter().map(|x| x * x).sum::<f64>() > 1e-2)
        .prop_map(|a| Vector3::from_row_slice(&a).normalize())
}

/// Points of H³ within distance 3 of the origin.
fn point() -> impl Strategy<Value = HPoint> {
    prop::array::uniform3(-1.7f64..1.7).prop_map(|a| {
        hyp::exp_point(&TangentVec::new(HPoint::origin(), Vector4::new(0.0, a[0], a[1], a[2])))
    })
}

fn isometry() -> impl Strategy<Value = IsomH3> {
    (prop::array::uniform3(-3.0f64..3.0), prop::array::uniform3(-1.5f64..1.5)).prop_map(|(r, b)| {
        IsomH3::rotation(1, 2, r[0])
            .compose(&IsomH3::boost(1, b[0]))
            .compose(&IsomH3::rotation(2, 3, r[1]))
            .compose(&IsomH3::boost(3, b[1]))
            .compose(&IsomH3::rotation(1, 3, r[2]))
            .compose(&IsomH3::boost(2, b[2]))
    })
}

fn complex_sym() -> impl Strategy<Value = CMat2> {
    prop::array::uniform6(-2.0f64..2.0).prop_map(|a| {
        let off = C64::new(a[4], a[5]);
        CMat2::new(C64::new(a[0], a[1]), off, off, C64::new(a[2], a[3]))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn schatten_norm_is_sum_of_singular_values(l in linmap()) {
        let (s1, s2) = l.singular_values();
        prop_assert!((schatten::schatten1(&l) - (s1 + s2)).abs() <= 1e-9 * (1.0 + s1 + s2));
        let fro = l.m.norm();
        prop_assert!(schatten::schatten1(&l) >= fro - 1e-12);
        prop_assert!(schatten::schatten1(&l) <= 2f64.sqrt() * fro + 1e-12);
    }

    #[test]
    fn schatten_norm_axioms(l in linmap(), k in linmap(), c in -4.0f64..4.0) {
        let n = schatten::schatten1;
        prop_assert!(n(&l) >= 0.0);
        prop_assert!((n(&LinMap32::new(l.m * c)) - c.abs() * n(&l)).abs() <= 1e-12 * (1.0 + n(&l)) * (1.0 + c.abs()));
        prop_assert!(n(&LinMap32::new(l.m + k.m)) <= n(&l) + n(&k) + 1e-12);
    }

    #[test]
    fn q_eps_is_midpoint_convex_and_close_to_the_norm(l in linmap(), k in linmap(), e in 0usize..3) {
        let eps = [0.0, 0.1, 1.0][e];
        let mid = LinMap32::new((l.m + k.m) * 0.5);
        prop_assert!(2.0 * schatten::q_eps(&mid, eps) <= schatten::q_eps(&l, eps) + schatten::q_eps(&k, eps) + 1e-12);
        let (q, n) = (schatten::q_eps(&l, eps), schatten::schatten1(&l));
        prop_assert!(q >= n - 1e-12 && q <= n + 2.0 * eps + 1e-12);
    }

    #[test]
    fn n_eps_is_symmetric(t1 in 0.0f64..5.0, t2 in 0.0f64..5.0, eps in 0.0f64..2.0) {
        prop_assert_eq!(schatten::n_eps(t1, t2, eps), schatten::n_eps(t2, t1, eps));
    }

    #[test]
    fn polar_parts_reassemble(l in linmap()) {
        let p = schatten::polar_decompose(&l);
        prop_assert!((p.b - p.b.transpose()).norm() <= 1e-12 * (1.0 + p.b.norm()));
        prop_assert!((p.b * p.b - l.gram()).norm() <= 1e-9 * (1.0 + l.gram().norm()));
        if let Some(s) = p.sigma {
            if p.b.determinant() > 1e-3 {
                prop_assert!((s.transpose() * s - math::Matrix2::identity()).norm() <= 1e-8);
                prop_assert!((s * p.b - l.m).norm() <= 1e-9 * (1.0 + l.m.norm()));
            }
        }
    }

    #[test]
    fn as_parts_reassemble(l in linmap(), n in unit3()) {
        let parts = schatten::as_decompose(&l, &n).unwrap();
        let (e1, e2) = schatten::plane_basis(&n);
        prop_assert!((e1.cross(&e2) - n).norm() <= 1e-12);
        let back = schatten::as_reassemble(&parts, &e1, &e2);
        // The source basis of l is identified with (e₁, e₂).
        prop_assert!((back.m - l.m).norm() <= 1e-12 * (1.0 + l.m.norm()));
    }

    #[test]
    fn directional_derivative_is_nonnegative_for_psd(l in linmap(), a in prop::array::uniform9(-1.0f64..1.0)) {
        let b = Matrix3::from_row_slice(&a);
        let psd = b * b.transpose();
        if let Ok(d) = schatten::q_eps_directional_derivative(&l, &psd, 0.1) {
            prop_assert!(d >= -1e-12);
        }
    }

    #[test]
    fn exp_inverts_log(x in point(), y in point()) {
        let v = hyp::log_point(&x, &y);
        prop_assert!((v.norm() - hyp::dist(&x, &y)).abs() <= 1e-9 * (1.0 + v.norm()));
        let z = hyp::exp_point(&v);
        prop_assert!(hyp::dist(&z, &y) <= 1e-8);
    }

    #[test]
    fn distance_is_a_metric(x in point(), y in point(), z in point()) {
        let d = hyp::dist;
        prop_assert!((d(&x, &y) - d(&y, &x)).abs() <= 1e-12 * (1.0 + d(&x, &y)));
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-9);
        prop_assert!(d(&x, &x) <= 1e-7);
    }

    #[test]
    fn isometries_preserve_distance(g in isometry(), x in point(), y in point()) {
        prop_assert!(g.lorentz_defect() <= 1e-9 * g.m.norm_squared());
        let (a, b) = (hyp::dist(&x, &y), hyp::dist(&g.apply(&x), &g.apply(&y)));
        prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a));
    }

    #[test]
    fn psl2_identification_is_a_homomorphism(g in isometry(), h in isometry()) {
        let (a, b) = (hyp::psl2_convert(&g).unwrap(), hyp::psl2_convert(&h).unwrap());
        prop_assert!((math::det2c(&a) - C64::new(1.0, 0.0)).norm() <= 1e-8);
        let back = hyp::isom_from_psl2(&a);
        prop_assert!((back.m - g.m).norm() <= 1e-8 * g.m.norm());
        let ab = hyp::isom_from_psl2(&(a * b));
        prop_assert!((ab.m - g.compose(&h).m).norm() <= 1e-7 * (g.m.norm() * h.m.norm()));
    }

    #[test]
    fn cross_product_is_oriented_and_orthogonal(x in point(), a in prop::array::uniform6(-1.0f64..1.0)) {
        let u = hyp::project_tangent(&x, &Vector4::new(a[0], a[1], a[2], 0.3));
        let v = hyp::project_tangent(&x, &Vector4::new(a[3], a[4], a[5], -0.2));
        let w = hyp::cross_vec(&x.x, &u, &v);
        let ip = hyp::minkowski;
        prop_assert!(ip(&w, &u).abs() <= 1e-9 * (1.0 + w.norm() * u.norm()));
        prop_assert!(ip(&w, &v).abs() <= 1e-9 * (1.0 + w.norm() * v.norm()));
        prop_assert!(ip(&w, &x.x).abs() <= 1e-9 * (1.0 + w.norm() * x.x.norm()));
        let area2 = ip(&u, &u) * ip(&v, &v) - ip(&u, &v).powi(2);
        prop_assert!((ip(&w, &w) - area2).abs() <= 1e-8 * (1.0 + area2));
        let m = Matrix4::from_columns(&[x.x, u, v, w]);
        prop_assert!(m.determinant() >= -1e-9);
    }

    #[test]
    fn projection_restores_lorentz_matrices(g in isometry(), noise in prop::array::uniform16(-1e-6f64..1e-6)) {
        let p = IsomH3::project(&(g.m + Matrix4::from_row_slice(&noise))).unwrap();
        prop_assert!(p.lorentz_defect() <= 1e-9 * p.m.norm_squared());
        prop_assert!((p.m - g.m).norm() <= 1e-4 * (1.0 + g.m.norm()));
    }

    #[test]
    fn pi1_is_minus_twice_det_on_symmetric_fields(p in complex_sym()) {
        let v = pi1(&[p])[0];
        prop_assert!((v + math::det2c(&p) * 2.0).norm() <= 1e-12 * (1.0 + p.norm_squared()));
    }
}
