//! The 1-Schatten energy of discrete equivariant maps S̃ → H³.
//!
//! A map is stored by the images of the canonical vertex lifts together with
//! a representation ρ; the image of any other lift is ρ(deck)·position, so
//! equivariance holds by construction. Per triangle, df is the affine map
//! between the source triangle laid flat with its hyperbolic edge lengths and
//! the flat triangle with the image's hyperbolic edge lengths, so the
//! pullback Gram matrix only depends on distances.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{inconsistent, invalid, numerical, Result};
use crate::hyperbolic::{self as hyp, minkowski, HPoint, IsomH3, TangentVec};
use crate::math::{self, C64, CMat2, DMatrix, DVector, Matrix2, Matrix4x2, Vector2, Vector4};
use crate::schatten;
use crate::surface::{self, FuchsianDomain, RealOperatorField, SurfaceMesh};

/// Generator images of a representation π₁(S) → SO⁺(1,3).
#[derive(Clone, Debug, PartialEq)]
pub struct Representation {
    pub generators: Vec<IsomH3>,
    /// ‖∏[Aᵢ,Bᵢ] − 𝟙‖.
    pub relation_residual: f64,
}

impl Representation {
    pub fn new(generators: Vec<IsomH3>) -> Self {
        let relation_residual = surface::relation_residual(&generators);
        Self { generators, relation_residual }
    }

    /// The holonomy of the hyperbolic metric of the domain, acting on H² ⊂ H³.
    pub fn fuchsian(domain: &FuchsianDomain) -> Self {
        Self::new(domain.generators.clone())
    }

    pub fn trivial(genus: usize) -> Self {
        Self::new(vec![IsomH3::identity(); 2 * genus])
    }

    pub fn genus(&self) -> usize {
        self.generators.len() / 2
    }

    pub fn letter(&self, l: i32) -> IsomH3 {
        surface::letter_of(&self.generators, l)
    }

    pub fn eval_word(&self, w: &[i32]) -> IsomH3 {
        surface::eval_word(&self.generators, w)
    }

    /// g ρ g⁻¹.
    pub fn conjugate(&self, g: &IsomH3) -> Self {
        let gi = g.inverse();
        Self::new(self.generators.iter().map(|a| g.compose(a).compose(&gi)).collect())
    }

    pub fn preserves_h2(&self, tol: f64) -> bool {
        self.generators.iter().all(|g| g.preserves_h2(tol))
    }

    /// Conjugation invariants: tr² of the PSL₂(ℂ) images of the generators
    /// and of all products of two distinct generators.
    pub fn trace_invariants(&self) -> Result<Vec<C64>> {
        let mats: Vec<CMat2> = self.generators.iter().map(hyp::psl2_convert).collect::<Result<_>>()?;
        let mut out: Vec<C64> = mats.iter().map(hyp::trace_squared).collect();
        for i in 0..mats.len() {
            for j in i + 1..mats.len() {
                out.push(hyp::trace_squared(&(mats[i] * mats[j])));
            }
        }
        Ok(out)
    }
}

/// A ρ-equivariant map given by the images of the canonical vertex lifts.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivariantMap {
    pub positions: Vec<HPoint>,
    pub rep: Representation,
}

impl EquivariantMap {
    pub fn new(mesh: &SurfaceMesh, positions: Vec<HPoint>, rep: Representation) -> Result<Self> {
        if positions.len() != mesh.num_vertices() {
            return Err(invalid("one position per mesh vertex expected"));
        }
        if rep.generators.len() != 2 * mesh.genus() {
            return Err(invalid("representation has the wrong number of generators"));
        }
        Ok(Self { positions, rep })
    }

    /// The mesh itself, f = id: S̃ → H² ⊂ H³, with the Fuchsian holonomy.
    pub fn fuchsian_identity(mesh: &SurfaceMesh) -> Self {
        Self {
            positions: (0..mesh.num_vertices()).map(|v| mesh.vertex_pos(v)).collect(),
            rep: Representation::fuchsian(&mesh.domain),
        }
    }

    /// The equidistant surface at signed distance t from H², which is still
    /// equivariant for the Fuchsian holonomy.
    pub fn equidistant(mesh: &SurfaceMesh, t: f64) -> Self {
        let n = Vector4::new(0.0, 0.0, 0.0, 1.0);
        let mut f = Self::fuchsian_identity(mesh);
        for p in f.positions.iter_mut() {
            *p = HPoint::normalize(p.x * math::cosh(t) + n * math::sinh(t));
        }
        f
    }

    /// ρ(word) for every domain vertex.
    pub fn decks(&self, mesh: &SurfaceMesh) -> Vec<IsomH3> {
        mesh.dverts.iter().map(|d| self.rep.eval_word(&d.word)).collect()
    }

    pub fn domain_position(&self, mesh: &SurfaceMesh, d: usize) -> HPoint {
        let dv = &mesh.dverts[d];
        self.rep.eval_word(&dv.word).apply(&self.positions[dv.class])
    }

    pub fn domain_positions(&self, mesh: &SurfaceMesh) -> Vec<HPoint> {
        (0..mesh.dverts.len()).map(|d| self.domain_position(mesh, d)).collect()
    }

    /// max over glued boundary vertices of ‖f(to) − ρ(letter)·f(from)‖.
    pub fn equivariance_residual(&self, mesh: &SurfaceMesh) -> f64 {
        mesh.boundary_pairs
            .iter()
            .map(|bp| {
                let a = self.domain_position(mesh, bp.to);
                let b = self.rep.letter(bp.letter).apply(&self.domain_position(mesh, bp.from));
                (a.x - b.x).norm() / (1.0 + a.x.norm())
            })
            .fold(0.0, f64::max)
    }

    /// max |⟨x,x⟩ + 1| over positions.
    pub fn hyperboloid_defect(&self) -> f64 {
        self.positions.iter().map(|p| (minkowski(&p.x, &p.x) + 1.0).abs()).fold(0.0, f64::max)
    }

    /// g∘f, equivariant for gρg⁻¹.
    pub fn compose(&self, g: &IsomH3) -> Self {
        Self { positions: self.positions.iter().map(|p| g.apply(p)).collect(), rep: self.rep.conjugate(g) }
    }

    /// Vertex-wise geodesic displacement p ↦ exp_p(t·X_p).
    pub fn displace(&self, x: &VariationField, t: f64) -> Self {
        let positions = self
            .positions
            .iter()
            .zip(&x.vectors)
            .map(|(p, v)| hyp::exp_point(&TangentVec::new(*p, hyp::project_tangent(p, &(v * t)))))
            .collect();
        Self { positions, rep: self.rep.clone() }
    }

    /// The nearest-point retraction onto H², vertex-wise.
    pub fn retract(&self) -> Self {
        Self { positions: self.positions.iter().map(hyp::retract_to_h2).collect(), rep: self.rep.clone() }
    }

    /// Largest hyperbolic distance between corresponding vertices.
    pub fn sup_distance(&self, other: &EquivariantMap) -> f64 {
        self.positions.iter().zip(&other.positions).map(|(a, b)| hyp::dist(a, b)).fold(0.0, f64::max)
    }
}

/// Orthonormal basis of T_xH³.
pub fn tangent_basis(x: &HPoint) -> [Vector4<f64>; 3] {
    let mut out = [Vector4::zeros(); 3];
    for k in 0..3 {
        let mut e = Vector4::zeros();
        e[k + 1] = 1.0;
        let mut v = hyp::project_tangent(x, &e);
        for u in out.iter().take(k) {
            v -= u * minkowski(&v, u);
        }
        out[k] = v / math::sqrt(minkowski(&v, &v));
    }
    out
}

/// A variation of an equivariant map: one tangent vector at each image of a
/// canonical lift (the other lifts carry the ρ-images, so X is ρ-invariant).
#[derive(Clone, Debug, PartialEq)]
pub struct VariationField {
    pub vectors: Vec<Vector4<f64>>,
}

/// X = df(X^T) + νN per vertex, X^T in the vertex frame.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationDecomposition {
    pub tangential: Vec<Vector2<f64>>,
    pub nu: Vec<f64>,
    pub normal: Vec<Vector4<f64>>,
    /// max ‖df(X^T) + νN − X‖.
    pub reassembly_error: f64,
}

impl VariationField {
    pub fn zero(n: usize) -> Self {
        Self { vectors: vec![Vector4::zeros(); n] }
    }

    /// Vectors from coordinates in [`tangent_basis`].
    pub fn from_coords(f: &EquivariantMap, coords: &[[f64; 3]]) -> Self {
        let vectors = f
            .positions
            .iter()
            .zip(coords)
            .map(|(p, c)| {
                let b = tangent_basis(p);
                b[0] * c[0] + b[1] * c[1] + b[2] * c[2]
            })
            .collect();
        Self { vectors }
    }

    /// ν times the unit normal of the immersion.
    pub fn normal(mesh: &SurfaceMesh, f: &EquivariantMap, nu: &[f64]) -> Result<Self> {
        let data = vertex_data(mesh, f)?;
        Ok(Self { vectors: data.normal.iter().zip(nu).map(|(n, s)| n * *s).collect() })
    }

    pub fn decompose(&self, mesh: &SurfaceMesh, f: &EquivariantMap) -> Result<VariationDecomposition> {
        let data = vertex_data(mesh, f)?;
        Ok(decompose_with(&data, self))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { vectors: self.vectors.iter().map(|v| v * s).collect() }
    }
}

fn decompose_with(data: &ImmersionData, x: &VariationField) -> VariationDecomposition {
    let eta = hyp::eta();
    let mut tangential = Vec::with_capacity(x.vectors.len());
    let mut nu = Vec::with_capacity(x.vectors.len());
    let mut err = 0.0f64;
    for (v, xv) in x.vectors.iter().enumerate() {
        let d = &data.df[v];
        let n = data.normal[v];
        let s = minkowski(xv, &n);
        let gram = d.transpose() * eta * d;
        let xt = gram.try_inverse().unwrap_or_else(Matrix2::zeros) * (d.transpose() * eta * (xv - n * s));
        err = err.max((d * xt + n * s - xv).norm());
        tangential.push(xt);
        nu.push(s);
    }
    VariationDecomposition { tangential, nu, normal: data.normal.clone(), reassembly_error: err }
}

// ---- per-triangle energy kernel ------------------------------------------

/// E⁻¹ for the source triangle laid flat with its hyperbolic edge lengths,
/// rotated so the first edge points along the chart edge. Columns of E are
/// the edges from corner 0 to corners 1 and 2.
fn source_layout(mesh: &SurfaceMesh, t: usize) -> Matrix2<f64> {
    let l = mesh.lengths[t];
    let (l01, l02, l12) = (l[2], l[1], l[0]);
    let ca = ((l01 * l01 + l02 * l02 - l12 * l12) / (2.0 * l01 * l02)).clamp(-1.0, 1.0);
    let sa = math::sqrt(1.0 - ca * ca);
    let c = mesh.chart[t];
    let e = c[1] - c[0];
    let r = math::rot2(math::atan2(e.y, e.x));
    let flat = Matrix2::new(l01, l02 * ca, 0.0, l02 * sa);
    (r * flat).try_inverse().expect("nondegenerate source triangle")
}

/// Pullback Gram matrix dfᵀdf in the triangle frame.
fn image_gram(einv: &Matrix2<f64>, y: &[HPoint; 3]) -> Matrix2<f64> {
    let l01 = hyp::dist(&y[0], &y[1]);
    let l02 = hyp::dist(&y[0], &y[2]);
    let l12 = hyp::dist(&y[1], &y[2]);
    let (a, b, c) = (l01 * l01, l02 * l02, l12 * l12);
    let m = Matrix2::new(a, 0.5 * (a + b - c), 0.5 * (a + b - c), b);
    einv.transpose() * m * einv
}

/// q_ε of one triangle and the ambient gradients (Minkowski duals) at its
/// three image corners, or None where q_ε is not differentiable.
fn triangle_gradient(einv: &Matrix2<f64>, y: &[HPoint; 3], eps: f64) -> (f64, Option<[Vector4<f64>; 3]>) {
    let g = image_gram(einv, y);
    let q = schatten::q_eps_gram(&g, eps);
    let Some(d) = schatten::q_eps_gram_gradient(&g, eps) else {
        return (q, None);
    };
    let p = einv * d * einv.transpose();
    // dq = (P₀₀+P₀₁) dℓ₀₁² + (P₁₁+P₀₁) dℓ₀₂² − P₀₁ dℓ₁₂², and the gradient
    // of ℓ² = d(y_j, y_k)² in y_j is −2 log_{y_j} y_k.
    let (c01, c02, c12) = (p[(0, 0)] + p[(0, 1)], p[(1, 1)] + p[(0, 1)], -p[(0, 1)]);
    let lg = |j: usize, k: usize| hyp::log_point(&y[j], &y[k]).v * -2.0;
    (q, Some([lg(0, 1) * c01 + lg(0, 2) * c02, lg(1, 0) * c01 + lg(1, 2) * c12, lg(2, 0) * c02 + lg(2, 1) * c12]))
}

/// Per-mesh data reused across energy evaluations.
struct Workspace {
    einv: Vec<Matrix2<f64>>,
    decks: Vec<IsomH3>,
    deck_inv: Vec<IsomH3>,
    /// Triangles with a corner of each class.
    incident: Vec<Vec<usize>>,
}

impl Workspace {
    fn new(mesh: &SurfaceMesh, f: &EquivariantMap) -> Self {
        let decks = f.decks(mesh);
        let deck_inv = decks.iter().map(|g| g.inverse()).collect();
        let mut incident = vec![Vec::new(); mesh.num_vertices()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for &d in tri {
                let c = mesh.dverts[d].class;
                if !incident[c].contains(&t) {
                    incident[c].push(t);
                }
            }
        }
        Self { einv: (0..mesh.num_triangles()).map(|t| source_layout(mesh, t)).collect(), decks, deck_inv, incident }
    }

    fn corners(&self, mesh: &SurfaceMesh, pos: &[HPoint], t: usize) -> [HPoint; 3] {
        core::array::from_fn(|k| {
            let d = mesh.triangles[t][k];
            self.decks[d].apply(&pos[mesh.dverts[d].class])
        })
    }

    fn energy(&self, mesh: &SurfaceMesh, pos: &[HPoint], eps: f64) -> f64 {
        (0..mesh.num_triangles())
            .map(|t| mesh.areas[t] * schatten::q_eps_gram(&image_gram(&self.einv[t], &self.corners(mesh, pos, t)), eps))
            .sum()
    }

    /// Adds area-weighted gradients of the given triangles, pulled back to
    /// the canonical lifts, into `out`.
    fn accumulate(&self, mesh: &SurfaceMesh, pos: &[HPoint], tris: &[usize], eps: f64, out: &mut [Vector4<f64>]) -> usize {
        let mut singular = 0;
        for &t in tris {
            let y = self.corners(mesh, pos, t);
            match triangle_gradient(&self.einv[t], &y, eps).1 {
                Some(g) => {
                    for k in 0..3 {
                        let d = mesh.triangles[t][k];
                        out[mesh.dverts[d].class] += self.deck_inv[d].apply_vec(&g[k]) * mesh.areas[t];
                    }
                }
                None => singular += 1,
            }
        }
        singular
    }
}

/// Value and per-triangle densities of the ε-energy.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub value: f64,
    /// q_ε(df_T) per triangle.
    pub densities: Vec<f64>,
    pub eps: f64,
    /// Triangles whose image is degenerate (df of rank < 2).
    pub rank_deficient: usize,
}

/// Σ_T q_ε(df_T)·area_T; ε = 0 gives F.
pub fn energy(mesh: &SurfaceMesh, f: &EquivariantMap, eps: f64) -> EnergyReport {
    let ws = Workspace::new(mesh, f);
    let mut densities = Vec::with_capacity(mesh.num_triangles());
    let mut rank_deficient = 0;
    for t in 0..mesh.num_triangles() {
        let g = image_gram(&ws.einv[t], &ws.corners(mesh, &f.positions, t));
        if g.determinant() <= 1e-14 * (1.0 + g.norm_squared()) {
            rank_deficient += 1;
        }
        densities.push(schatten::q_eps_gram(&g, eps));
    }
    let value = densities.iter().zip(&mesh.areas).map(|(q, a)| q * a).sum();
    EnergyReport { value, densities, eps, rank_deficient }
}

/// Per-triangle polar part b = √(dfᵀdf) in triangle frames, with the
/// indices of rank-deficient triangles.
pub fn pullback_b(mesh: &SurfaceMesh, f: &EquivariantMap) -> (RealOperatorField, Vec<usize>) {
    let ws = Workspace::new(mesh, f);
    let mut out = Vec::with_capacity(mesh.num_triangles());
    let mut bad = Vec::new();
    for t in 0..mesh.num_triangles() {
        let g = image_gram(&ws.einv[t], &ws.corners(mesh, &f.positions, t));
        if g.determinant() <= 1e-14 * (1.0 + g.norm_squared()) {
            bad.push(t);
        }
        out.push(math::sqrt_psd2(&g));
    }
    (out, bad)
}

/// Energy and its gradient: dE = Σ_v ⟨grad_v, δf_v⟩ over canonical lifts.
/// Triangles where q_ε is not differentiable contribute nothing.
pub fn energy_gradient(mesh: &SurfaceMesh, f: &EquivariantMap, eps: f64) -> (f64, Vec<Vector4<f64>>) {
    let ws = Workspace::new(mesh, f);
    let mut g = vec![Vector4::zeros(); mesh.num_vertices()];
    let all: Vec<usize> = (0..mesh.num_triangles()).collect();
    ws.accumulate(mesh, &f.positions, &all, eps, &mut g);
    (ws.energy(mesh, &f.positions, eps), g)
}

/// Exact derivative of the discrete ε-energy along X.
pub fn energy_derivative(mesh: &SurfaceMesh, f: &EquivariantMap, x: &VariationField, eps: f64) -> f64 {
    let (_, g) = energy_gradient(mesh, f, eps);
    g.iter().zip(&x.vectors).map(|(a, b)| minkowski(a, b)).sum()
}

// ---- smooth immersion data -------------------------------------------------

/// Per-vertex differential, polar part, normal and shape operator of a map,
/// from one-ring least-squares fits in the vertex charts.
#[derive(Clone, Debug, PartialEq)]
pub struct ImmersionData {
    /// df at each canonical lift: images of the vertex frame vectors.
    pub df: Vec<Matrix4x2<f64>>,
    pub b: RealOperatorField,
    pub a: RealOperatorField,
    pub normal: Vec<Vector4<f64>>,
    /// Largest relative antisymmetric part of b²a before symmetrization.
    pub symmetrization_defect: f64,
}

pub fn vertex_data(mesh: &SurfaceMesh, f: &EquivariantMap) -> Result<ImmersionData> {
    let eta = hyp::eta();
    let n = mesh.num_vertices();
    let mut df = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut normal = Vec::with_capacity(n);
    let mut nbr_decks = Vec::with_capacity(n);
    for v in 0..n {
        let x = f.positions[v];
        let r = &mesh.rings[v];
        let decks: Vec<IsomH3> = r.deck.iter().map(|w| f.rep.eval_word(w)).collect();
        let mut d = Matrix4x2::zeros();
        for (j, &w) in r.neighbors.iter().enumerate() {
            let l = hyp::log_point(&x, &decks[j].apply(&f.positions[w])).v;
            for k in 0..2 {
                let col = d.column(k) + l * r.coeffs[j][k];
                d.set_column(k, &col);
            }
        }
        let gram = d.transpose() * eta * d;
        if gram.determinant() <= 1e-12 * (1.0 + gram.norm_squared()) {
            return Err(invalid("map is not an immersion at a vertex"));
        }
        let nv = hyp::cross_vec(&x.x, &d.column(0).into_owned(), &d.column(1).into_owned());
        normal.push(nv / math::sqrt(minkowski(&nv, &nv)));
        b.push(math::sqrt_psd2(&gram));
        df.push(d);
        nbr_decks.push(decks);
    }
    let mut a = Vec::with_capacity(n);
    let mut defect = 0.0f64;
    for v in 0..n {
        let x = f.positions[v];
        let r = &mesh.rings[v];
        let mut dn = Matrix4x2::zeros();
        for (j, &w) in r.neighbors.iter().enumerate() {
            let g = &nbr_decks[v][j];
            let y = g.apply(&f.positions[w]);
            let diff = hyp::transport_vec(&y, &x, &g.apply_vec(&normal[w])) - normal[v];
            for k in 0..2 {
                let col = dn.column(k) + diff * r.coeffs[j][k];
                dn.set_column(k, &col);
            }
        }
        // ∇N = df∘a, and I(a·,·) = h(b²a·,·) is symmetric.
        let d = &df[v];
        let c = d.transpose() * eta * dn;
        let cs = math::sym2(&c);
        defect = defect.max((c - cs).norm() / (1e-12 + c.norm()));
        let gram = d.transpose() * eta * d;
        a.push(gram.try_inverse().unwrap_or_else(Matrix2::zeros) * cs);
    }
    Ok(ImmersionData { df, b, a, normal, symmetrization_defect: defect })
}

/// The closed first-variation formula ∫ ν tr(ba) + I(bW, J^I X^T) with
/// W = det(b)⁻¹ b⁻¹ ∗d^∇b, evaluated per triangle from vertex data.
pub fn first_variation(mesh: &SurfaceMesh, f: &EquivariantMap, x: &VariationField) -> Result<f64> {
    let data = vertex_data(mesh, f)?;
    Ok(first_variation_with(mesh, &data, x))
}

fn first_variation_with(mesh: &SurfaceMesh, data: &ImmersionData, x: &VariationField) -> f64 {
    let dec = decompose_with(data, x);
    let j = math::j2();
    let bc = surface::real_ops(&data.b);
    let ba: Vec<Matrix2<f64>> = data.b.iter().zip(&data.a).map(|(b, a)| b * a).collect();
    let bac = surface::real_ops(&ba);
    let db = mesh.dnabla(&bc);
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let bt = math::re2(&mesh.op_at_triangle(&bc, t));
        let trba = math::re2(&mesh.op_at_triangle(&bac, t)).trace();
        let mut nu = 0.0;
        let mut xt = Vector2::zeros();
        for k in 0..3 {
            let c = mesh.corner_class(t, k);
            nu += dec.nu[c] / 3.0;
            xt += math::rot2(mesh.corner_rot[t][k]) * dec.tangential[c] / 3.0;
        }
        let star = db[t].map(|z| z.re);
        let w = bt.try_inverse().unwrap_or_else(Matrix2::zeros) * star / bt.determinant();
        // I(bW, J^I X^T) = h(b²W, J b X^T) since J^I = b⁻¹Jb.
        let tangential = (bt * bt * w).dot(&(j * bt * xt));
        total += mesh.areas[t] * (nu * trba + tangential);
    }
    total
}

// ---- minimization ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct MinimizeOptions {
    /// Decreasing regularization parameters, ending at 0.
    pub schedule: Vec<f64>,
    /// Newton iterations per stage.
    pub max_iters: usize,
    /// Stop a stage when the largest gradient coordinate is below this.
    pub tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { schedule: vec![1.0, 0.3, 0.1, 0.03, 0.0], max_iters: 100, tol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub eps: f64,
    pub iterations: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub converged: bool,
    /// Energy at the start and after every accepted step.
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinimizeReport {
    pub map: EquivariantMap,
    /// F (ε = 0) of the final map.
    pub energy: f64,
    pub stages: Vec<StageReport>,
    pub converged: bool,
}

fn coord_gradient(g: &[Vector4<f64>], basis: &[[Vector4<f64>; 3]]) -> DVector<f64> {
    DVector::from_iterator(
        3 * g.len(),
        g.iter().zip(basis).flat_map(|(v, b)| [minkowski(v, &b[0]), minkowski(v, &b[1]), minkowski(v, &b[2])]),
    )
}

fn step_positions(pos: &[HPoint], basis: &[[Vector4<f64>; 3]], delta: &DVector<f64>) -> Vec<HPoint> {
    pos.iter()
        .enumerate()
        .map(|(v, p)| {
            let b = &basis[v];
            let t = b[0] * delta[3 * v] + b[1] * delta[3 * v + 1] + b[2] * delta[3 * v + 2];
            hyp::exp_point(&TangentVec::new(*p, t))
        })
        .collect()
}

/// Hessian in exponential coordinates by central differences of the exact
/// gradient; each column only touches the triangles around one vertex.
fn fd_hessian(mesh: &SurfaceMesh, ws: &Workspace, pos: &[HPoint], basis: &[[Vector4<f64>; 3]], eps: f64) -> DMatrix<f64> {
    let n = pos.len();
    let h = 1e-5;
    let mut hm = DMatrix::zeros(3 * n, 3 * n);
    let mut work = pos.to_vec();
    let mut gp = vec![Vector4::zeros(); n];
    let mut gm = vec![Vector4::zeros(); n];
    for c in 0..n {
        let tris = &ws.incident[c];
        let mut classes: Vec<usize> =
            tris.iter().flat_map(|&t| mesh.triangles[t].iter().map(|&d| mesh.dverts[d].class)).collect();
        classes.sort_unstable();
        classes.dedup();
        for i in 0..3 {
            for (sgn, out) in [(1.0, &mut gp), (-1.0, &mut gm)] {
                let p = hyp::exp_point(&TangentVec::new(pos[c], basis[c][i] * (sgn * h)));
                work[c] = p;
                for &k in &classes {
                    out[k] = Vector4::zeros();
                }
                ws.accumulate(mesh, &work, tris, eps, out);
            }
            work[c] = pos[c];
            for &k in &classes {
                // The moved vertex reads its gradient in the transported basis.
                let (bp, bm) = if k == c {
                    let pp = hyp::exp_point(&TangentVec::new(pos[c], basis[c][i] * h));
                    let pm = hyp::exp_point(&TangentVec::new(pos[c], basis[c][i] * -h));
                    (
                        basis[c].map(|e| hyp::transport_vec(&pos[c], &pp, &e)),
                        basis[c].map(|e| hyp::transport_vec(&pos[c], &pm, &e)),
                    )
                } else {
                    (basis[k], basis[k])
                };
                for r in 0..3 {
                    hm[(3 * k + r, 3 * c + i)] += (minkowski(&gp[k], &bp[r]) - minkowski(&gm[k], &bm[r])) / (2.0 * h);
                }
            }
        }
    }
    (&hm + hm.transpose()) * 0.5
}

fn minimize_stage(mesh: &SurfaceMesh, f: &mut EquivariantMap, eps: f64, opts: &MinimizeOptions) -> StageReport {
    let ws = Workspace::new(mesh, f);
    let all: Vec<usize> = (0..mesh.num_triangles()).collect();
    let n = f.positions.len();
    let mut lambda = 1e-8;
    let mut e = ws.energy(mesh, &f.positions, eps);
    let mut gnorm = f64::INFINITY;
    let mut trace = vec![e];
    for it in 0..opts.max_iters {
        let basis: Vec<[Vector4<f64>; 3]> = f.positions.iter().map(tangent_basis).collect();
        let mut g4 = vec![Vector4::zeros(); n];
        ws.accumulate(mesh, &f.positions, &all, eps, &mut g4);
        let g = coord_gradient(&g4, &basis);
        gnorm = g.amax();
        if gnorm <= opts.tol {
            return StageReport { eps, iterations: it, energy: e, grad_norm: gnorm, converged: true, trace };
        }
        let h = fd_hessian(mesh, &ws, &f.positions, &basis, eps);
        let scale = (0..3 * n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut accepted = false;
        for _ in 0..40 {
            let mut m = h.clone();
            for i in 0..3 * n {
                m[(i, i)] += lambda * scale;
            }
            let Some(ch) = m.cholesky() else {
                lambda = (lambda * 10.0).max(1e-8);
                continue;
            };
            let delta = -ch.solve(&g);
            let trial = step_positions(&f.positions, &basis, &delta);
            let et = ws.energy(mesh, &trial, eps);
            if et < e || (et <= e + 1e-13 * e.abs() && delta.amax() < 1e-8) {
                f.positions = trial;
                let stalled = e - et <= 1e-15 * e.abs() && delta.amax() < 1e-12;
                e = et;
                trace.push(e);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if stalled {
                    return StageReport { eps, iterations: it + 1, energy: e, grad_norm: gnorm, converged: true, trace };
                }
                break;
            }
            lambda = (lambda * 4.0).max(1e-8);
        }
        if !accepted {
            // No decrease is possible at this precision.
            let converged = gnorm <= 1e3 * opts.tol;
            return StageReport { eps, iterations: it, energy: e, grad_norm: gnorm, converged, trace };
        }
    }
    StageReport { eps, iterations: opts.max_iters, energy: e, grad_norm: gnorm, converged: false, trace }
}

/// Annealed minimization of the ε-energies over ρ-equivariant maps, with
/// damped Newton steps in exponential coordinates at every vertex.
pub fn minimize(mesh: &SurfaceMesh, f_init: &EquivariantMap, opts: &MinimizeOptions) -> Result<MinimizeReport> {
    if opts.schedule.is_empty() || opts.schedule.iter().any(|e| !(*e >= 0.0)) {
        return Err(invalid("eps schedule must be a nonempty list of nonnegative numbers"));
    }
    if f_init.positions.len() != mesh.num_vertices() {
        return Err(invalid("map does not match the mesh"));
    }
    let mut f = f_init.clone();
    let mut stages = Vec::new();
    for &eps in &opts.schedule {
        stages.push(minimize_stage(mesh, &mut f, eps, opts));
    }
    let converged = stages.last().map(|s| s.converged).unwrap_or(false);
    let value = energy(mesh, &f, 0.0).value;
    Ok(MinimizeReport { map: f, energy: value, stages, converged })
}

/// Like [`minimize`] but failing when the last stage does not converge.
pub fn minimize_strict(mesh: &SurfaceMesh, f_init: &EquivariantMap, opts: &MinimizeOptions) -> Result<MinimizeReport> {
    let r = minimize(mesh, f_init, opts)?;
    if !r.converged {
        return Err(numerical("energy minimization did not converge"));
    }
    Ok(r)
}

// ---- probes ------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexityProbe {
    pub ts: Vec<f64>,
    pub energies: Vec<f64>,
    /// F(t₋) − 2F(t) + F(t₊) at interior grid points.
    pub second_differences: Vec<f64>,
}

impl ConvexityProbe {
    /// Smallest second difference relative to max F.
    pub fn min_relative_second_difference(&self) -> f64 {
        let m = self.energies.iter().copied().fold(0.0, f64::max).max(1e-300);
        self.second_differences.iter().copied().fold(f64::INFINITY, f64::min) / m
    }
}

/// F(exp_f(tX)) on a uniform or non-uniform grid of t.
pub fn convexity_probe(mesh: &SurfaceMesh, f: &EquivariantMap, x: &VariationField, ts: &[f64]) -> ConvexityProbe {
    let energies: Vec<f64> = ts.iter().map(|&t| energy(mesh, &f.displace(x, t), 0.0).value).collect();
    let second_differences = (1..ts.len().saturating_sub(1))
        .map(|i| {
            // Divided-difference form, scaled to a unit-spaced grid.
            let (h0, h1) = (ts[i] - ts[i - 1], ts[i + 1] - ts[i]);
            let hm = 0.5 * (h0 + h1);
            hm * hm * 2.0 / (h0 + h1) * ((energies[i + 1] - energies[i]) / h1 - (energies[i] - energies[i - 1]) / h0)
        })
        .collect();
    ConvexityProbe { ts: ts.to_vec(), energies, second_differences }
}

/// F before and after the vertex-wise retraction onto H².
pub fn retraction_test(mesh: &SurfaceMesh, f: &EquivariantMap) -> Result<(f64, f64)> {
    if !f.rep.preserves_h2(1e-9) {
        return Err(invalid("representation does not preserve H²"));
    }
    let before = energy(mesh, f, 0.0).value;
    let after = energy(mesh, &f.retract(), 0.0).value;
    if after > before * (1.0 + 1e-9) {
        return Err(inconsistent("retraction increased the energy"));
    }
    Ok((before, after))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{build_domain, refine};

    fn mesh(level: usize) -> SurfaceMesh {
        refine(&build_domain(2).unwrap(), level)
    }

    fn area(m: &SurfaceMesh) -> f64 {
        m.areas.iter().sum()
    }

    #[test]
    fn identity_energy_is_twice_the_area() {
        let m = mesh(2);
        let f = EquivariantMap::fuchsian_identity(&m);
        assert!(f.equivariance_residual(&m) < 1e-9);
        let e = energy(&m, &f, 0.0);
        assert!((e.value - 2.0 * area(&m)).abs() < 1e-9 * e.value);
        assert!((area(&m) - 4.0 * math::PI).abs() < 1e-9);
        let (b, bad) = pullback_b(&m, &f);
        assert!(bad.is_empty());
        assert!(b.iter().all(|b| (b - Matrix2::identity()).norm() < 1e-9));
    }

    #[test]
    fn constant_map() {
        let m = mesh(1);
        let f = EquivariantMap {
            positions: vec![HPoint::origin(); m.num_vertices()],
            rep: Representation::trivial(2),
        };
        assert_eq!(energy(&m, &f, 0.0).value, 0.0);
        assert!((energy(&m, &f, 1.0).value - 2.0 * area(&m)).abs() < 1e-9);
        assert_eq!(energy(&m, &f, 0.0).rank_deficient, m.num_triangles());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = mesh(1);
        let f = EquivariantMap::equidistant(&m, 0.3);
        let coords: Vec<[f64; 3]> = (0..m.num_vertices())
            .map(|v| {
                let s = v as f64;
                [math::sin(1.3 * s), math::cos(0.7 * s + 0.2), math::sin(2.1 * s + 1.0)]
            })
            .collect();
        let x = VariationField::from_coords(&f, &coords);
        for eps in [0.0, 0.5] {
            let d = energy_derivative(&m, &f, &x, eps);
            let h = 1e-5;
            let fd = (energy(&m, &f.displace(&x, h), eps).value - energy(&m, &f.displace(&x, -h), eps).value) / (2.0 * h);
            assert!((d - fd).abs() < 1e-6 * (1.0 + d.abs()), "{d} vs {fd}");
        }
    }

    #[test]
    fn energy_is_isometry_invariant() {
        let m = mesh(1);
        let f = EquivariantMap::equidistant(&m, 0.2);
        let g = IsomH3::boost(3, 0.4).compose(&IsomH3::rotation(1, 2, 0.3)).compose(&IsomH3::boost(1, -0.2));
        let a = energy(&m, &f, 0.0).value;
        let b = energy(&m, &f.compose(&g), 0.0).value;
        assert!((a - b).abs() < 1e-10 * a);
        assert!(f.compose(&g).equivariance_residual(&m) < 1e-9);
    }

    #[test]
    fn identity_immersion_data() {
        let m = mesh(2);
        let d = vertex_data(&m, &EquivariantMap::fuchsian_identity(&m)).unwrap();
        for v in 0..m.num_vertices() {
            assert!((d.b[v] - Matrix2::identity()).norm() < 1e-9);
            assert!(d.a[v].norm() < 1e-9);
            assert!((d.normal[v] - Vector4::new(0.0, 0.0, 0.0, 1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn equidistant_immersion_data() {
        let t = 0.4;
        let m = mesh(3);
        let d = vertex_data(&m, &EquivariantMap::equidistant(&m, t)).unwrap();
        for v in 0..m.num_vertices() {
            assert!((d.b[v] - Matrix2::identity() * math::cosh(t)).norm() < 1e-2);
            assert!((d.a[v] - Matrix2::identity() * math::tanh(t)).norm() < 1e-2);
        }
    }

    #[test]
    fn normal_variation_of_equidistant_surface() {
        let t = 0.5;
        let m = mesh(3);
        let f = EquivariantMap::equidistant(&m, t);
        let x = VariationField::normal(&m, &f, &vec![1.0; m.num_vertices()]).unwrap();
        let expect = 2.0 * math::sinh(t) * area(&m);
        let fv = first_variation(&m, &f, &x).unwrap();
        assert!((fv - expect).abs() < 2e-2 * expect, "{fv} vs {expect}");
        let d = energy_derivative(&m, &f, &x, 0.0);
        assert!((d - expect).abs() < 2e-2 * expect, "{d} vs {expect}");
    }

    #[test]
    fn identity_is_critical_up_to_discretization() {
        let mut prev = f64::INFINITY;
        for level in 2..4 {
            let m = mesh(level);
            let f = EquivariantMap::fuchsian_identity(&m);
            let coords: Vec<[f64; 3]> = (0..m.num_vertices())
                .map(|v| {
                    let p = m.vertex_pos(v).x;
                    [math::sin(2.0 * p[1]), math::cos(3.0 * p[2]), 0.5]
                })
                .collect();
            let x = VariationField::from_coords(&f, &coords);
            // b = 𝟙 and a = 0 exactly, so the closed formula vanishes.
            assert!(first_variation(&m, &f, &x).unwrap().abs() < 1e-9);
            let d = energy_derivative(&m, &f, &x, 0.0).abs();
            assert!(d < prev / 3.0, "level {level}: {d}");
            prev = d;
        }
    }

    #[test]
    fn tangential_first_variation_matches_discrete_derivative() {
        let m = mesh(3);
        let orbit = m.bump_orbit(2.0, 0.5);
        let bump = |c: HPoint| surface::real_field(&m.bump_field(&c, 2.0, &orbit));
        let g1 = m.vertex_grad(&bump(HPoint::h2_polar(0.4, 0.3)));
        let push = VariationField {
            vectors: (0..m.num_vertices())
                .map(|v| m.vframes[v][0] * g1[v].x.re + m.vframes[v][1] * g1[v].y.re)
                .collect(),
        };
        // A non-isometric map into H², so b is not Codazzi.
        let f = EquivariantMap::fuchsian_identity(&m).displace(&push, 0.3);
        let data = vertex_data(&m, &f).unwrap();
        let g2 = m.vertex_grad(&bump(HPoint::h2_polar(0.2, 2.0)));
        let x = VariationField {
            vectors: (0..m.num_vertices()).map(|v| data.df[v] * Vector2::new(g2[v].x.re, g2[v].y.re)).collect(),
        };
        let a = first_variation(&m, &f, &x).unwrap();
        let b = energy_derivative(&m, &f, &x, 0.0);
        assert!((a - b).abs() < 0.1 * b.abs(), "{a} vs {b}");
    }

    #[test]
    fn retraction_of_equidistant_surface() {
        let m = mesh(2);
        let (before, after) = retraction_test(&m, &EquivariantMap::equidistant(&m, 1.0)).unwrap();
        assert!((after - 2.0 * area(&m)).abs() < 1e-9 * after);
        assert!(after < before);
    }
}
