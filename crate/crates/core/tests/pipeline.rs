//! End-to-end oracles on small meshes.

use hyperimm::codazzi::{self, NewtonOptions};
use hyperimm::energy::{self, EquivariantMap, MinimizeOptions, Representation};
use hyperimm::math::{CMat2, PI};
use hyperimm::reconstruct;
use hyperimm::surface::{build_domain, refine};
use hyperimm::Error;

#[test]
fn genus_below_two_is_rejected() {
    assert!(matches!(build_domain(0), Err(Error::InvalidInput(_))));
    assert!(matches!(build_domain(1), Err(Error::InvalidInput(_))));
}

#[test]
fn meshes_have_gauss_bonnet_area() {
    for genus in [2, 3] {
        let domain = build_domain(genus).unwrap();
        // Absolute residual; generator entries grow quickly with the genus.
        assert!(domain.relation_residual < 1e-7, "genus {genus}: {}", domain.relation_residual);
        for level in 0..3 {
            let m = refine(&domain, level);
            let target = 4.0 * PI * (genus as f64 - 1.0);
            assert!((m.total_area() - target).abs() <= 1e-9 * target, "genus {genus} level {level}");
            assert_eq!(m.genus(), genus);
        }
    }
}

#[test]
fn identity_energy_is_twice_the_area() {
    let m = refine(&build_domain(3).unwrap(), 1);
    let f = EquivariantMap::fuchsian_identity(&m);
    let e = energy::energy(&m, &f, 0.0).value;
    assert!((e - 2.0 * m.total_area()).abs() <= 1e-9 * e);
}

#[test]
fn equidistant_energy_scales_by_cosh() {
    let m = refine(&build_domain(2).unwrap(), 2);
    let e0 = energy::energy(&m, &EquivariantMap::fuchsian_identity(&m), 0.0).value;
    for t in [0.25, 0.5] {
        let e = energy::energy(&m, &EquivariantMap::equidistant(&m, t), 0.0).value;
        assert!((e / e0 / t.cosh() - 1.0).abs() < 1e-2, "t = {t}");
    }
}

#[test]
fn identity_datum_reconstructs_the_fuchsian_group() {
    let m = refine(&build_domain(2).unwrap(), 2);
    let r = reconstruct::reconstruct(&m, &vec![CMat2::identity(); m.num_vertices()]).unwrap();
    assert!(r.monodromy.rep.preserves_h2(1e-6));
    let got = r.monodromy.rep.trace_invariants().unwrap();
    let want = Representation::fuchsian(&m.domain).trace_invariants().unwrap();
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).norm() <= 1e-6 * (1.0 + b.norm()));
    }
}

#[test]
fn newton_then_reconstruct_is_consistent() {
    let m = refine(&build_domain(2).unwrap(), 2);
    let basis = codazzi::qd_basis(&m).unwrap();
    let mut q = vec![0.0; basis.dim()];
    let mut qp = vec![0.0; basis.dim()];
    q[0] = 0.04;
    qp[1] = -0.03;
    let d = codazzi::newton_det_continuation(&m, &basis, &q, &qp, NewtonOptions::default()).unwrap();
    assert!(d.det_residual <= 1e-9);
    let r = reconstruct::reconstruct(&m, &d.phi).unwrap();
    assert!(r.monodromy.side_residual < reconstruct::SIDE_TOLERANCE);
    assert!(r.monodromy.rep.relation_residual < 1e-8);
    assert!(r.map.equivariance_residual(&m) < 1e-8);
}

#[test]
fn minimizing_from_a_displaced_start_returns_to_the_same_map() {
    let m = refine(&build_domain(2).unwrap(), 1);
    let f0 = EquivariantMap::fuchsian_identity(&m);
    let opts = MinimizeOptions::default();
    let a = energy::minimize(&m, &f0, &opts).unwrap();
    let b = energy::minimize(&m, &EquivariantMap::equidistant(&m, 0.4), &opts).unwrap();
    assert!(a.converged && b.converged);
    assert!(a.map.sup_distance(&b.map) < 1e-8);
    assert!(a.energy <= energy::energy(&m, &f0, 0.0).value + 1e-12);
}

#[test]
fn monodromy_invariants_are_holomorphic_at_the_identity() {
    let m = refine(&build_domain(2).unwrap(), 1);
    let basis = codazzi::qd_basis(&m).unwrap();
    let z = vec![0.0; basis.dim()];
    let mut dq = z.clone();
    let mut dqp = z.clone();
    dq[0] = 0.6;
    dqp[2] = 0.8;
    let r = reconstruct::clinearity_probe(&m, &basis, &z, &z, &dq, &dqp, 0.01, NewtonOptions::default()).unwrap();
    assert!(r.delta_norm > 1.0);
    assert!(r.defect < 0.1, "defect {}", r.defect);
}
