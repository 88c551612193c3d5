//! Development of immersion data (b, a) into an equivariant immersion,
//! monodromy extraction, and the complexified functional F_ℂ.
//!
//! Frames F = [f, E₁, E₂, N] (columns) live at domain vertices, with
//! E_k = σ(e_k) for the source vertex frame e and df = σ∘b. Along a source
//! geodesic edge with h-parallel frame, dF = F·Ω with
//!
//! ```text
//!       ⎡ 0    βᵀ   0 ⎤
//!   Ω = ⎢ β    0    α ⎥     β = b·s,  α = ba·s,
//!       ⎣ 0   −αᵀ   0 ⎦
//! ```
//!
//! s the edge vector. The tangential rotation term vanishes because the
//! connection σ⁻¹∇σ = b∇^I b⁻¹ equals ∇^h for Codazzi b.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::codazzi::{self, NewtonOptions, QDBasis};
use crate::energy::{self, vertex_data, EquivariantMap, ImmersionData, MinimizeOptions, MinimizeReport, Representation};
use crate::error::{inconsistent, invalid, Result};
use crate::hyperbolic::{self as hyp, minkowski, HPoint, IsomH3};
use crate::math::{self, CMat2, DMatrix, DVector, Matrix2, Matrix4, Vector4, C64};
use crate::surface::SurfaceMesh;

/// Lorentz frames [f, E₁, E₂, N] at the domain vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameField {
    pub frames: Vec<Matrix4<f64>>,
}

impl FrameField {
    pub fn position(&self, d: usize) -> HPoint {
        HPoint::normalize(self.frames[d].column(0).into_owned())
    }

    /// max ‖FᵀηF − η‖.
    pub fn lorentz_defect(&self) -> f64 {
        let eta = hyp::eta();
        self.frames.iter().map(|f| (f.transpose() * eta * f - eta).norm()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Development {
    pub frames: FrameField,
    pub root: usize,
    /// ‖M₀₁M₁₂M₂₀ − 𝟙‖ around each triangle.
    pub loop_defects: Vec<f64>,
    pub max_loop_defect: f64,
    /// max over triangles of loop defect / area, a curvature mismatch.
    pub max_defect_density: f64,
}

/// Frame increment M with F_q = F_p·M along the edge p → q (domain vertices).
fn increment(mesh: &SurfaceMesh, b: &[Matrix2<f64>], ba: &[Matrix2<f64>], p: usize, q: usize) -> Matrix4<f64> {
    let (xp, xq) = (mesh.dverts[p].pos, mesh.dverts[q].pos);
    let (fp, fq) = (mesh.dvert_frame(p), mesh.dvert_frame(q));
    let l = hyp::log_point(&xp, &xq).v;
    let s = math::Vector2::new(minkowski(&l, &fp[0]), minkowski(&l, &fp[1]));
    let t = hyp::transport_vec(&xp, &xq, &fp[0]);
    let theta = math::atan2(minkowski(&t, &fq[1]), minkowski(&t, &fq[0]));
    let (cp, cq) = (mesh.dverts[p].class, mesh.dverts[q].class);
    // q-frame components to p-frame components: R(−θ).
    let bm = (b[cp] + math::rotate_op_real(&b[cq], -theta)) * 0.5;
    let am = (ba[cp] + math::rotate_op_real(&ba[cq], -theta)) * 0.5;
    let beta = bm * s;
    let alpha = am * s;
    let mut om = Matrix4::zeros();
    for i in 0..2 {
        om[(i + 1, 0)] = beta[i];
        om[(0, i + 1)] = beta[i];
        om[(i + 1, 3)] = alpha[i];
        om[(3, i + 1)] = -alpha[i];
    }
    let r = math::rot2(theta);
    let mut fix = Matrix4::identity();
    for i in 0..2 {
        for j in 0..2 {
            fix[(1 + i, 1 + j)] = r[(j, i)];
        }
    }
    math::expm4(&om) * fix
}

/// The frame of the mesh itself at a domain vertex: [x, e₁, e₂, ∂₃].
pub fn mesh_frame(mesh: &SurfaceMesh, d: usize) -> Matrix4<f64> {
    let f = mesh.dvert_frame(d);
    let mut m = Matrix4::zeros();
    m.set_column(0, &mesh.dverts[d].pos.x);
    m.set_column(1, &f[0]);
    m.set_column(2, &f[1]);
    m.set_column(3, &Vector4::new(0.0, 0.0, 0.0, 1.0));
    m
}

/// Develops (b, a) from the canonical lift of vertex 0, with the root frame
/// of the mesh itself.
pub fn integrate_immersion(mesh: &SurfaceMesh, b: &[Matrix2<f64>], a: &[Matrix2<f64>]) -> Result<Development> {
    let root = mesh.canon[0];
    integrate_immersion_rooted(mesh, b, a, root, &mesh_frame(mesh, root))
}

/// Breadth-first development along the edge graph of the domain.
pub fn integrate_immersion_rooted(
    mesh: &SurfaceMesh,
    b: &[Matrix2<f64>],
    a: &[Matrix2<f64>],
    root: usize,
    root_frame: &Matrix4<f64>,
) -> Result<Development> {
    if b.len() != mesh.num_vertices() || a.len() != mesh.num_vertices() {
        return Err(invalid("one operator per vertex expected"));
    }
    for (v, m) in b.iter().enumerate() {
        let (lo, _) = math::sym2_eigenvalues(&math::sym2(m));
        if !(lo > 0.0) || (m - m.transpose()).norm() > 1e-8 * (1.0 + m.norm()) {
            return Err(invalid(format!("b is not positive definite at vertex {v}")));
        }
    }
    let ba: Vec<Matrix2<f64>> = b.iter().zip(a).map(|(b, a)| b * a).collect();
    let nd = mesh.dverts.len();
    let mut adj = vec![Vec::new(); nd];
    for t in &mesh.triangles {
        for k in 0..3 {
            let (p, q) = (t[k], t[(k + 1) % 3]);
            if !adj[p].contains(&q) {
                adj[p].push(q);
                adj[q].push(p);
            }
        }
    }
    let mut frames: Vec<Option<Matrix4<f64>>> = vec![None; nd];
    frames[root] = Some(*root_frame);
    let mut queue = VecDeque::from([root]);
    while let Some(p) = queue.pop_front() {
        let fp = frames[p].unwrap();
        for &q in &adj[p] {
            if frames[q].is_none() {
                frames[q] = Some(fp * increment(mesh, b, &ba, p, q));
                queue.push_back(q);
            }
        }
    }
    let frames: Vec<Matrix4<f64>> =
        frames.into_iter().map(|f| f.ok_or_else(|| invalid("domain is not connected"))).collect::<Result<_>>()?;
    let loop_defects: Vec<f64> = mesh
        .triangles
        .iter()
        .map(|t| {
            let m = increment(mesh, b, &ba, t[0], t[1]) * increment(mesh, b, &ba, t[1], t[2]) * increment(mesh, b, &ba, t[2], t[0]);
            (m - Matrix4::identity()).norm()
        })
        .collect();
    let max_loop_defect = loop_defects.iter().copied().fold(0.0, f64::max);
    let max_defect_density = loop_defects.iter().zip(&mesh.areas).map(|(d, a)| d / a).fold(0.0, f64::max);
    Ok(Development { frames: FrameField { frames }, root, loop_defects, max_loop_defect, max_defect_density })
}

impl Development {
    pub fn check_consistent(&self) -> Result<()> {
        if self.max_defect_density > DEFECT_DENSITY_TOLERANCE {
            return Err(inconsistent(format!(
                "loop defect density {:.3e} violates Gauss–Codazzi",
                self.max_defect_density
            )));
        }
        Ok(())
    }
}

/// Monodromy with fit diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Monodromy {
    /// Generators after projection onto the surface-group relation.
    pub rep: Representation,
    /// The least-squares generators before that projection.
    pub fitted: Representation,
    /// max over glued boundary vertices of ‖ρ(γ)F_from − F_to‖ / ‖F_to‖.
    pub side_residual: f64,
}

/// Side-matching tolerance of [`monodromy`]. Data in 𝒟 gives 2.7e-3 at
/// level 2 and 6.2e-4 at level 3.
pub const SIDE_TOLERANCE: f64 = 1e-2;

/// Largest accepted loop defect per unit area. For data in 𝒟 the density is
/// O(h) (0.036 at level 2, 0.017 at level 3); scaling b by 1.1 gives 0.33.
pub const DEFECT_DENSITY_TOLERANCE: f64 = 0.25;

/// For each generator, the isometry carrying developed frames on one side
/// onto their partners (least squares, then projected to SO⁺(1,3)), and the
/// nearest representation satisfying ∏[Aᵢ,Bᵢ] = 𝟙.
pub fn monodromy(mesh: &SurfaceMesh, dev: &Development) -> Result<Monodromy> {
    let ng = 2 * mesh.genus();
    let mut num = vec![Matrix4::zeros(); ng];
    let mut den = vec![Matrix4::zeros(); ng];
    let f = &dev.frames.frames;
    for bp in &mesh.boundary_pairs {
        let k = (bp.letter.unsigned_abs() - 1) as usize;
        let (x, y) = if bp.letter > 0 { (f[bp.from], f[bp.to]) } else { (f[bp.to], f[bp.from]) };
        num[k] += y * x.transpose();
        den[k] += x * x.transpose();
    }
    let gens: Vec<IsomH3> = (0..ng)
        .map(|k| {
            let inv = den[k].try_inverse().ok_or_else(|| invalid("generator has no paired boundary vertices"))?;
            IsomH3::project(&(num[k] * inv))
        })
        .collect::<Result<_>>()?;
    let fitted = Representation::new(gens);
    let side_residual = mesh
        .boundary_pairs
        .iter()
        .map(|bp| {
            let g = fitted.letter(bp.letter);
            (g.m * f[bp.from] - f[bp.to]).norm() / f[bp.to].norm()
        })
        .fold(0.0, f64::max);
    if side_residual > SIDE_TOLERANCE {
        return Err(inconsistent(format!("side matching residual {side_residual:.3e}")));
    }
    let rep = project_relation(&fitted)?;
    Ok(Monodromy { rep, fitted, side_residual })
}

fn lorentz_algebra_basis() -> [Matrix4<f64>; 6] {
    let mut out = [Matrix4::zeros(); 6];
    for k in 0..3 {
        out[k][(0, k + 1)] = 1.0;
        out[k][(k + 1, 0)] = 1.0;
    }
    for (n, (i, j)) in [(1, 2), (1, 3), (2, 3)].into_iter().enumerate() {
        out[3 + n][(i, j)] = -1.0;
        out[3 + n][(j, i)] = 1.0;
    }
    out
}

fn relation_matrix(gens: &[IsomH3]) -> Matrix4<f64> {
    let mut p = IsomH3::identity();
    for pair in gens.chunks(2) {
        let (a, b) = (pair[0], pair[1]);
        p = p.compose(&a).compose(&b).compose(&a.inverse()).compose(&b.inverse());
    }
    p.m
}

/// Gauss–Newton for the smallest right perturbations ρ_k exp(ξ_k) with
/// ∏[Aᵢ,Bᵢ] = 𝟙 (minimum-norm steps).
pub fn project_relation(rep: &Representation) -> Result<Representation> {
    let basis = lorentz_algebra_basis();
    let ng = rep.generators.len();
    let np = 6 * ng;
    let perturbed = |gens: &[IsomH3], xi: &DVector<f64>| -> Vec<IsomH3> {
        gens.iter()
            .enumerate()
            .map(|(k, g)| {
                let mut x = Matrix4::zeros();
                for i in 0..6 {
                    x += basis[i] * xi[6 * k + i];
                }
                IsomH3 { m: g.m * math::expm4(&x) }
            })
            .collect()
    };
    let residual = |gens: &[IsomH3]| -> DVector<f64> {
        DVector::from_iterator(16, (relation_matrix(gens) - Matrix4::identity()).iter().copied())
    };
    let mut gens = rep.generators.clone();
    for _ in 0..30 {
        let r = residual(&gens);
        if r.norm() < 1e-13 {
            break;
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(16, np);
        for p in 0..np {
            let mut xi = DVector::zeros(np);
            xi[p] = h;
            let rp = residual(&perturbed(&gens, &xi));
            xi[p] = -h;
            let rm = residual(&perturbed(&gens, &xi));
            jac.set_column(p, &((rp - rm) / (2.0 * h)));
        }
        // The residual has 16 entries but only 6 first-order ones; the other
        // singular values are curvature and difference noise.
        let svd = jac.svd(true, true);
        let cut = 1e-3 * svd.singular_values.max();
        let step = svd.solve(&(-r), cut).map_err(invalid)?;
        gens = perturbed(&gens, &step);
        gens = gens.iter().map(|g| IsomH3::project(&g.m)).collect::<Result<_>>()?;
    }
    Ok(Representation::new(gens))
}

/// The equivariant map of a development: canonical lifts with monodromy ρ.
pub fn developed_map(mesh: &SurfaceMesh, dev: &Development, rep: &Representation) -> EquivariantMap {
    EquivariantMap {
        positions: (0..mesh.num_vertices()).map(|v| dev.frames.position(mesh.canon[v])).collect(),
        rep: rep.clone(),
    }
}

/// (b, a, N, df) of an immersion, per vertex.
pub fn extract_data(mesh: &SurfaceMesh, f: &EquivariantMap) -> Result<ImmersionData> {
    vertex_data(mesh, f)
}

/// F_ℂ(φ) = ∫ tr φ ω_h.
pub fn fc_value(mesh: &SurfaceMesh, phi: &[CMat2]) -> C64 {
    phi.iter().zip(&mesh.mass).map(|(p, m)| math::tr2c(p) * *m).sum()
}

/// Everything produced from a datum φ ∈ 𝒟.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub b: Vec<Matrix2<f64>>,
    pub a: Vec<Matrix2<f64>>,
    pub development: Development,
    pub monodromy: Monodromy,
    pub map: EquivariantMap,
}

pub fn reconstruct(mesh: &SurfaceMesh, phi: &[CMat2]) -> Result<Reconstruction> {
    let (b, a) = codazzi::ba_from_phi(phi)?;
    // Re φ is self-adjoint; drop rounding asymmetry.
    let b: Vec<Matrix2<f64>> = b.iter().map(math::sym2).collect();
    let development = integrate_immersion(mesh, &b, &a)?;
    development.check_consistent()?;
    let monodromy = monodromy(mesh, &development)?;
    let map = developed_map(mesh, &development, &monodromy.rep);
    Ok(Reconstruction { b, a, development, monodromy, map })
}

/// A failure of [`round_trip`], tagged with the stage that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct StageError {
    pub stage: &'static str,
    pub error: crate::Error,
}

impl core::fmt::Display for StageError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.error)
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> core::result::Result<T, StageError> {
    r.map_err(|error| StageError { stage: name, error })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrip {
    pub datum: codazzi::MinimizingDatum,
    pub reconstruction: Reconstruction,
    pub minimized: MinimizeReport,
    /// Data of the minimizer, φ′ = b′ − iJb′a′.
    pub phi_extracted: Vec<CMat2>,
    /// ‖φ′ − φ‖ / ‖φ‖.
    pub phi_error: f64,
    pub fc: C64,
    /// |Re F_ℂ(φ) − F(minimizer)| / F(minimizer).
    pub energy_gap: f64,
    /// Splitting of φ′; noisy at desk scale, so reported rather than checked.
    pub decomposition: codazzi::DecompositionTriple,
}

/// φ from (q, q′) by Newton on det φ = 1, then development, monodromy,
/// minimization over ρ_φ-equivariant maps started at the developed map,
/// extraction of the minimizer's data, and its decomposition.
pub fn round_trip(
    mesh: &SurfaceMesh,
    basis: &QDBasis,
    q: &[f64],
    qp: &[f64],
    newton: NewtonOptions,
    min: &MinimizeOptions,
) -> core::result::Result<RoundTrip, StageError> {
    let datum = stage("newton", codazzi::newton_det_continuation(mesh, basis, q, qp, newton))?;
    round_trip_from(mesh, basis, datum, min)
}

/// The round trip after the Newton stage, from a given datum. Nothing here
/// assumes `datum.phi` solves det φ = 1; data outside 𝒟 is caught by the
/// consistency checks of the integrate and monodromy stages.
pub fn round_trip_from(
    mesh: &SurfaceMesh,
    basis: &QDBasis,
    datum: codazzi::MinimizingDatum,
    min: &MinimizeOptions,
) -> core::result::Result<RoundTrip, StageError> {
    let (b, a) = stage("integrate", codazzi::ba_from_phi(&datum.phi))?;
    let b: Vec<Matrix2<f64>> = b.iter().map(math::sym2).collect();
    let development = stage("integrate", integrate_immersion(mesh, &b, &a))?;
    stage("integrate", development.check_consistent())?;
    let mono = stage("monodromy", monodromy(mesh, &development))?;
    let map = developed_map(mesh, &development, &mono.rep);
    let reconstruction = Reconstruction { b, a, development, monodromy: mono, map };
    let minimized = stage("minimize", energy::minimize(mesh, &reconstruction.map, min))?;
    let data = stage("extract", extract_data(mesh, &minimized.map))?;
    let phi_extracted = codazzi::phi_from_ba(&data.b, &data.a);
    let diff: Vec<CMat2> = phi_extracted.iter().zip(&datum.phi).map(|(x, y)| x - y).collect();
    let phi_error = mesh.op_norm(&diff) / mesh.op_norm(&datum.phi);
    let fc = fc_value(mesh, &datum.phi);
    let energy_gap = (fc.re - minimized.energy).abs() / minimized.energy;
    let decomposition = stage("decompose", codazzi::decompose_unchecked(mesh, basis, &phi_extracted))?;
    Ok(RoundTrip { datum, reconstruction, minimized, phi_extracted, phi_error, fc, energy_gap, decomposition })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClinearityReport {
    /// ‖Δ_{iδ} − iΔ_δ‖ / ‖Δ_δ‖ (0 when Δ_δ = 0).
    pub defect: f64,
    pub delta_norm: f64,
    pub idelta_norm: f64,
    pub step: f64,
}

fn invariants_at(mesh: &SurfaceMesh, basis: &QDBasis, q: &[f64], qp: &[f64], opts: NewtonOptions) -> Result<Vec<C64>> {
    let d = codazzi::newton_det_continuation(mesh, basis, q, qp, opts)?;
    reconstruct(mesh, &d.phi)?.monodromy.rep.trace_invariants()
}

/// Central differences of the trace invariants of the monodromy along the
/// real direction δ = (δq, δq′) and along iδ = (−δq′, δq), which agree up to
/// the factor i when the monodromy is holomorphic in q + iq′.
#[allow(clippy::too_many_arguments)]
pub fn clinearity_probe(
    mesh: &SurfaceMesh,
    basis: &QDBasis,
    q: &[f64],
    qp: &[f64],
    dq: &[f64],
    dqp: &[f64],
    step: f64,
    opts: NewtonOptions,
) -> Result<ClinearityReport> {
    let shift = |s: f64, a: &[f64], da: &[f64]| -> Vec<f64> { a.iter().zip(da).map(|(x, d)| x + s * d).collect() };
    let neg: Vec<f64> = dqp.iter().map(|x| -x).collect();
    let diff = |u: &[f64], v: &[f64]| -> Result<Vec<C64>> {
        let p = invariants_at(mesh, basis, &shift(step, q, u), &shift(step, qp, v), opts)?;
        let m = invariants_at(mesh, basis, &shift(-step, q, u), &shift(-step, qp, v), opts)?;
        Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * step)).collect())
    };
    let d1 = diff(dq, dqp)?;
    let d2 = diff(&neg, dq)?;
    let i = C64::new(0.0, 1.0);
    let n1 = math::sqrt(d1.iter().map(|z| z.norm_sqr()).sum());
    let n2 = math::sqrt(d2.iter().map(|z| z.norm_sqr()).sum());
    let gap = math::sqrt(d2.iter().zip(&d1).map(|(a, b)| (a - i * b).norm_sqr()).sum());
    let defect = if n1 > 0.0 { gap / n1 } else { 0.0 };
    Ok(ClinearityReport { defect, delta_norm: n1, idelta_norm: n2, step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{build_domain, refine};

    fn mesh(level: usize) -> SurfaceMesh {
        refine(&build_domain(2).unwrap(), level)
    }

    #[test]
    fn fuchsian_datum_develops_the_mesh() {
        let m = mesh(2);
        let n = m.num_vertices();
        let dev = integrate_immersion(&m, &vec![Matrix2::identity(); n], &vec![Matrix2::zeros(); n]).unwrap();
        assert!(dev.max_loop_defect < 1e-9);
        for d in 0..m.dverts.len() {
            assert!((dev.frames.position(d).x - m.dverts[d].pos.x).norm() < 1e-8);
        }
        let mono = monodromy(&m, &dev).unwrap();
        assert!(mono.side_residual < 1e-9);
        for (g, h) in mono.fitted.generators.iter().zip(&m.domain.generators) {
            assert!((g.m - h.m).norm() < 1e-7);
        }
    }

    #[test]
    fn equidistant_datum_develops_an_equidistant_surface() {
        let t = 0.6;
        let m = mesh(2);
        let n = m.num_vertices();
        let b = vec![Matrix2::identity() * math::cosh(t); n];
        let a = vec![Matrix2::identity() * math::tanh(t); n];
        let root = m.canon[0];
        let mut frame = mesh_frame(&m, root);
        let (x, n) = (frame.column(0).into_owned(), frame.column(3).into_owned());
        frame.set_column(0, &(x * math::cosh(t) + n * math::sinh(t)));
        frame.set_column(3, &(x * math::sinh(t) + n * math::cosh(t)));
        let dev = integrate_immersion_rooted(&m, &b, &a, root, &frame).unwrap();
        assert!(dev.max_loop_defect < 1e-9);
        assert!(dev.frames.lorentz_defect() < 1e-9);
        // Distance to the plane {x₃ = 0} is asinh(x₃).
        for d in 0..m.dverts.len() {
            let x = dev.frames.position(d).x;
            assert!((math::asinh(x[3]) - t).abs() < 1e-6);
        }
    }

    #[test]
    fn gauss_violation_shows_up_in_loop_defects() {
        let m = mesh(2);
        let n = m.num_vertices();
        let mut prev = 0.0;
        for k in 1..4 {
            let b = vec![Matrix2::identity() * (1.0 + 0.05 * k as f64); n];
            let dev = integrate_immersion(&m, &b, &vec![Matrix2::zeros(); n]).unwrap();
            assert!(dev.max_loop_defect > prev);
            prev = dev.max_loop_defect;
        }
    }

    fn fuchsian_like_data(m: &SurfaceMesh, t: f64) -> (Vec<Matrix2<f64>>, Vec<Matrix2<f64>>) {
        let n = m.num_vertices();
        (vec![Matrix2::identity() * math::cosh(t); n], vec![Matrix2::identity() * math::tanh(t); n])
    }

    #[test]
    fn fuchsian_monodromy_preserves_the_plane() {
        let m = mesh(2);
        let (b, a) = fuchsian_like_data(&m, 0.0);
        let mono = monodromy(&m, &integrate_immersion(&m, &b, &a).unwrap()).unwrap();
        for g in &mono.rep.generators {
            for i in 0..3 {
                assert!(g.m[(i, 3)].abs() < 1e-7 && g.m[(3, i)].abs() < 1e-7);
            }
        }
        for z in mono.rep.trace_invariants().unwrap() {
            assert!(z.im.abs() < 1e-6);
        }
    }

    #[test]
    fn equidistant_monodromy_is_fuchsian() {
        let m = mesh(2);
        let (b, a) = fuchsian_like_data(&m, 0.4);
        let mono = monodromy(&m, &integrate_immersion(&m, &b, &a).unwrap()).unwrap();
        let fuchsian = Representation::fuchsian(&m.domain).trace_invariants().unwrap();
        for (z, w) in mono.rep.trace_invariants().unwrap().iter().zip(&fuchsian) {
            assert!((z - w).norm() < 1e-7 * (1.0 + w.norm()));
        }
    }

    #[test]
    fn conjugating_the_root_frame_conjugates_the_monodromy() {
        let m = mesh(2);
        let (b, a) = fuchsian_like_data(&m, 0.3);
        let root = m.canon[0];
        let g = IsomH3::boost(1, 0.3).compose(&IsomH3::boost(3, -0.2));
        let d1 = integrate_immersion_rooted(&m, &b, &a, root, &mesh_frame(&m, root)).unwrap();
        let d2 = integrate_immersion_rooted(&m, &b, &a, root, &(g.m * mesh_frame(&m, root))).unwrap();
        let (m1, m2) = (monodromy(&m, &d1).unwrap(), monodromy(&m, &d2).unwrap());
        for (x, y) in m1.rep.generators.iter().zip(&m2.rep.generators) {
            let c = g.m * x.m * g.inverse().m;
            assert!((c - y.m).norm() < 1e-9 * (1.0 + y.m.norm()));
        }
        let (t1, t2) = (m1.rep.trace_invariants().unwrap(), m2.rep.trace_invariants().unwrap());
        for (z, w) in t1.iter().zip(&t2) {
            assert!((z - w).norm() < 1e-8 * (1.0 + w.norm()));
        }
    }

    #[test]
    fn rerooting_flat_data_keeps_traces() {
        let m = mesh(2);
        let (b, a) = fuchsian_like_data(&m, 0.3);
        let traces = |root: usize| {
            let d = integrate_immersion_rooted(&m, &b, &a, root, &mesh_frame(&m, root)).unwrap();
            monodromy(&m, &d).unwrap().rep.trace_invariants().unwrap()
        };
        let (t1, t2) = (traces(m.canon[0]), traces(m.dverts.len() - 1));
        for (z, w) in t1.iter().zip(&t2) {
            assert!((z - w).norm() < 1e-8 * (1.0 + w.norm()));
        }
    }

    #[test]
    fn corrupted_gauss_data_is_flagged() {
        let m = mesh(2);
        let (b, a) = fuchsian_like_data(&m, 0.0);
        let phi = codazzi::phi_from_ba(&b.iter().map(|b| b * 1.2).collect::<Vec<_>>(), &a);
        assert!(matches!(reconstruct(&m, &phi), Err(crate::error::Error::Inconsistent(_))));
        assert!(reconstruct(&m, &codazzi::phi_from_ba(&b, &a)).is_ok());
    }

    #[test]
    fn fc_is_linear() {
        let m = mesh(1);
        let n = m.num_vertices();
        let p: Vec<CMat2> = (0..n).map(|v| math::cmat2(&Matrix2::identity(), &Matrix2::new(0.1 * v as f64, 0.0, 0.0, 0.2))).collect();
        let q: Vec<CMat2> = (0..n).map(|v| math::cmat2(&Matrix2::new(0.0, 1.0, 1.0, v as f64), &Matrix2::zeros())).collect();
        let s = C64::new(0.3, -1.2);
        let lin: Vec<CMat2> = p.iter().zip(&q).map(|(a, b)| a + b * s).collect();
        let z = fc_value(&m, &lin) - fc_value(&m, &p) - fc_value(&m, &q) * s;
        assert!(z.norm() < 1e-12);
    }

    #[test]
    fn round_trip_of_the_fuchsian_datum() {
        let m = mesh(2);
        let basis = codazzi::qd_basis(&m).unwrap();
        let z = [0.0; 6];
        let r = round_trip(&m, &basis, &z, &z, NewtonOptions::default(), &MinimizeOptions::default()).unwrap();
        assert!(r.datum.det_residual < 1e-12);
        assert!(r.reconstruction.monodromy.rep.relation_residual < 1e-9);
        assert!(r.energy_gap < 1e-3);
        assert!(r.phi_error < 0.06);
    }

    #[test]
    fn round_trip_reports_the_failing_stage() {
        let m = mesh(1);
        let basis = codazzi::qd_basis(&m).unwrap();
        let q = [50.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let e = round_trip(&m, &basis, &q, &[0.0; 6], NewtonOptions { tol: 1e-9, max_iter: 3 }, &MinimizeOptions::default())
            .unwrap_err();
        assert_eq!(e.stage, "newton");
    }

    #[test]
    fn rejects_indefinite_b() {
        let m = mesh(1);
        let n = m.num_vertices();
        let b = vec![Matrix2::new(1.0, 0.0, 0.0, -1.0); n];
        assert!(integrate_immersion(&m, &b, &vec![Matrix2::zeros(); n]).is_err());
    }

    #[test]
    fn fc_of_identity_is_twice_the_area() {
        let m = mesh(2);
        let z = fc_value(&m, &vec![CMat2::identity(); m.num_vertices()]);
        assert!((z.re - 8.0 * math::PI).abs() < 1e-9);
        assert_eq!(z.im, 0.0);
    }

    #[test]
    fn relation_projection_of_a_perturbed_representation() {
        let d = build_domain(2).unwrap();
        let mut gens = d.generators.clone();
        gens[1] = gens[1].compose(&IsomH3::boost(3, 1e-4));
        let rep = Representation::new(gens);
        assert!(rep.relation_residual > 1e-6);
        let p = project_relation(&rep).unwrap();
        assert!(p.relation_residual < 1e-9);
        let moved: f64 = p.generators.iter().zip(&rep.generators).map(|(a, b)| (a.inverse().m * b.m - Matrix4::identity()).norm()).sum();
        assert!(moved < 1e-3);
    }
}


