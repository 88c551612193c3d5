//! Discrete model of a closed hyperbolic surface of genus g: the regular
//! 4g-gon with its side pairings, a geodesic triangulation of the polygon,
//! per-vertex and per-triangle frames, and the differential operators used
//! by the rest of the crate.
//!
//! Fields live on the quotient: scalars and operator fields are stored per
//! quotient vertex (operator fields in the vertex frame), vector fields per
//! triangle (in the triangle frame). Every corner of a domain triangle knows
//! the deck transformation carrying the canonical lift of its vertex to the
//! corner, so equivariant objects can be evaluated anywhere in the domain.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, numerical, Result};
use crate::hyperbolic::{self as hyp, minkowski, HPoint, IsomH3};
use crate::math::{self, CMat2, DMatrix, Matrix2, Vector2, Vector4, C64, PI};
use crate::sparse::{cg_shifted, Csr};

/// A word in the generators: letter `k+1` is generator k, `-(k+1)` its inverse.
/// The word [l₁,…,l_m] denotes the product g_{l₁}⋯g_{l_m}.
pub type Word = Vec<i32>;

pub type ScalarField = Vec<C64>;
/// Per-vertex complex 2×2 operators in the vertex frames.
pub type OperatorField = Vec<CMat2>;
/// Per-vertex real 2×2 operators in the vertex frames.
pub type RealOperatorField = Vec<Matrix2<f64>>;
/// Per-triangle tangent vectors in the triangle frames.
pub type VectorField = Vec<Vector2<C64>>;

#[derive(Clone, Debug, PartialEq)]
pub struct FuchsianDomain {
    pub genus: usize,
    pub circumradius: f64,
    pub inradius: f64,
    pub side_length: f64,
    /// Polygon vertices, counter-clockwise, vertex k at angle 2πk/4g.
    pub polygon: Vec<HPoint>,
    /// A₁, B₁, A₂, B₂, … with ∏[A_i, B_i] = 𝟙.
    pub generators: Vec<IsomH3>,
    pub relation_residual: f64,
}

/// ‖∏[A_i, B_i] − 𝟙‖ (Frobenius) for generators ordered A₁, B₁, A₂, …
pub fn relation_residual(generators: &[IsomH3]) -> f64 {
    let mut p = IsomH3::identity();
    for pair in generators.chunks(2) {
        let (a, b) = (pair[0], pair[1]);
        p = p.compose(&a).compose(&b).compose(&a.inverse()).compose(&b.inverse());
    }
    (p.m - IsomH3::identity().m).norm()
}

impl FuchsianDomain {
    pub fn sides(&self) -> usize {
        4 * self.genus
    }

    /// The side glued to side `s`.
    pub fn partner(&self, s: usize) -> usize {
        let b = s % 4;
        s - b + [2, 3, 0, 1][b]
    }

    /// Letter of the isometry carrying the polygon across side `s`
    /// (it maps the partner side onto side `s`).
    pub fn side_letter(&self, s: usize) -> i32 {
        let m = (s / 4) as i32;
        match s % 4 {
            0 => 2 * m + 1,
            2 => -(2 * m + 1),
            3 => 2 * m + 2,
            _ => -(2 * m + 2),
        }
    }

    pub fn letter(&self, l: i32) -> IsomH3 {
        letter_of(&self.generators, l)
    }

    pub fn eval_word(&self, w: &[i32]) -> IsomH3 {
        eval_word(&self.generators, w)
    }

    pub fn area(&self) -> f64 {
        4.0 * PI * (self.genus as f64 - 1.0)
    }

    /// Sum of the interior angles of the polygon.
    pub fn angle_sum(&self) -> f64 {
        let n = self.polygon.len();
        (0..n)
            .map(|k| {
                let p = &self.polygon[k];
                let a = hyp::log_point(p, &self.polygon[(k + 1) % n]).v;
                let b = hyp::log_point(p, &self.polygon[(k + n - 1) % n]).v;
                math::acos(minkowski(&a, &b) / (hyp::space_norm(&a) * hyp::space_norm(&b)))
            })
            .sum()
    }

    /// Half the systole. Every conjugacy class has a representative whose
    /// axis meets the polygon, so a class of translation length ℓ has an
    /// element moving the centre by at most ℓ + 2R.
    pub fn injectivity_radius(&self) -> f64 {
        let ell = |g: &IsomH3| {
            // Hyperbolic elements of SO(1,2) ⊂ SO(1,3): tr = 2 + 2cosh ℓ.
            let tr = g.m.trace();
            if tr > 4.0 + 1e-9 {
                math::acosh((tr - 2.0) / 2.0)
            } else {
                f64::INFINITY
            }
        };
        let l0 = self.generators.iter().map(ell).fold(f64::INFINITY, f64::min);
        let els = self.orbit_within(l0 + 2.0 * self.circumradius + 1e-6);
        0.5 * els.iter().map(ell).fold(l0, f64::min)
    }

    /// All group elements g with dist(o, g·o) ≤ radius (o the polygon centre).
    pub fn orbit_within(&self, radius: f64) -> Vec<IsomH3> {
        let o = HPoint::origin();
        let prune = radius + 2.0 * self.circumradius;
        // Distinct orbit points of the centre have spatial parts at least
        // 2 sinh(inradius) > 1 apart, so a unit grid with neighbour cells dedupes.
        let cell = |p: &Vector4<f64>| {
            (
                libm::floor(p[1]) as i64,
                libm::floor(p[2]) as i64,
                libm::floor(p[3]) as i64,
            )
        };
        let mut grid: BTreeMap<(i64, i64, i64), Vec<Vector4<f64>>> = BTreeMap::new();
        let mut insert = |p: Vector4<f64>| -> bool {
            let (a, b, c) = cell(&p);
            for da in -1..=1 {
                for db in -1..=1 {
                    for dc in -1..=1 {
                        if let Some(v) = grid.get(&(a + da, b + db, c + dc)) {
                            if v.iter().any(|q| {
                                let d = q - p;
                                d[1] * d[1] + d[2] * d[2] + d[3] * d[3] < 0.25
                            }) {
                                return false;
                            }
                        }
                    }
                }
            }
            grid.entry((a, b, c)).or_default().push(p);
            true
        };
        insert(o.x);
        let mut frontier = alloc::collections::VecDeque::from([IsomH3::identity()]);
        let mut out = vec![IsomH3::identity()];
        let letters: Vec<IsomH3> = (0..self.generators.len() as i32)
            .flat_map(|k| [self.letter(k + 1), self.letter(-(k + 1))])
            .collect();
        while let Some(g) = frontier.pop_front() {
            for l in &letters {
                let h = g.compose(l);
                // cosh d(o, h·o) is the time coordinate of h·o.
                let d = math::acosh(h.m[(0, 0)]);
                if !(d <= prune) {
                    continue;
                }
                if !insert(h.m.column(0).into_owned()) {
                    continue;
                }
                frontier.push_back(h);
                if d <= radius {
                    out.push(h);
                }
            }
        }
        out
    }
}

pub fn letter_of(gens: &[IsomH3], l: i32) -> IsomH3 {
    let g = gens[(l.unsigned_abs() - 1) as usize];
    if l > 0 {
        g
    } else {
        g.inverse()
    }
}

pub fn eval_word(gens: &[IsomH3], w: &[i32]) -> IsomH3 {
    w.iter().fold(IsomH3::identity(), |acc, &l| acc.compose(&letter_of(gens, l)))
}

/// Interior angle of the regular n-gon with circumradius R.
fn regular_angle(n: usize, r: f64) -> f64 {
    2.0 * libm::atan(1.0 / (math::cosh(r) * math::tan(PI / n as f64)))
}

pub fn build_domain(genus: usize) -> Result<FuchsianDomain> {
    if genus < 2 {
        return Err(invalid("genus must be at least 2"));
    }
    let n = 4 * genus;
    let target = 2.0 * PI / n as f64;
    let (mut lo, mut hi) = (0.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if regular_angle(n, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let circumradius = 0.5 * (lo + hi);
    let polygon: Vec<HPoint> =
        (0..n).map(|k| HPoint::h2_polar(circumradius, 2.0 * PI * k as f64 / n as f64)).collect();
    let side_length = hyp::dist(&polygon[0], &polygon[1]);
    let inradius = hyp::dist(&HPoint::origin(), &polygon[0].midpoint(&polygon[1]));
    // Isometry mapping side i onto side j with the polygon going across j.
    let theta = |i: usize| (2 * i + 1) as f64 * PI / n as f64;
    let across = |i: usize, j: usize| {
        IsomH3::rotation(1, 2, theta(j))
            .compose(&IsomH3::boost(1, 2.0 * inradius))
            .compose(&IsomH3::rotation(1, 2, PI - theta(i)))
    };
    let mut dom = FuchsianDomain {
        genus,
        circumradius,
        inradius,
        side_length,
        polygon,
        generators: Vec::new(),
        relation_residual: 0.0,
    };
    let mut gens = Vec::with_capacity(2 * genus);
    for m in 0..genus {
        gens.push(across(dom.partner(4 * m), 4 * m));
        gens.push(across(dom.partner(4 * m + 3), 4 * m + 3));
    }
    dom.relation_residual = relation_residual(&gens);
    dom.generators = gens;
    Ok(dom)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainVertex {
    pub pos: HPoint,
    /// Quotient vertex index.
    pub class: usize,
    /// Deck transformation (as a word) carrying the canonical lift here.
    pub word: Word,
    pub deck: IsomH3,
    /// Bit s set when the vertex lies on polygon side s.
    pub sides: u64,
}

/// A gluing of boundary domain vertices: pos(to) = letter · pos(from).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPair {
    pub from: usize,
    pub to: usize,
    pub letter: i32,
}

/// Weighted least-squares quadratic fit over the one-ring of a vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct Ring {
    pub neighbors: Vec<usize>,
    /// Neighbour coordinates in the normal chart of the canonical lift.
    pub offsets: Vec<Vector2<f64>>,
    /// Rows (g₁, g₂, H₁₁, H₁₂, H₂₂) per neighbour, applied to u_nbr − u_v.
    pub coeffs: Vec<[f64; 5]>,
    /// Angle taking the neighbour's frame, transported to the centre, to
    /// the centre frame (vectors map by R(θ)).
    pub rot: Vec<f64>,
    /// Deck element carrying the neighbour's canonical lift to its position
    /// in the chart around the canonical lift of the centre.
    pub deck: Vec<Word>,
    /// Two-ring vertices of the cubic fit used for the Hessian.
    pub hess_nbrs: Vec<usize>,
    /// Rows (H₁₁, H₁₂, H₂₂) per two-ring vertex, applied to u_nbr − u_v.
    pub hess_coeffs: Vec<[f64; 3]>,
}

/// Word of g⁻¹ for the word of g.
pub fn inverse_word(w: &[i32]) -> Word {
    w.iter().rev().map(|l| -l).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceMesh {
    pub domain: FuchsianDomain,
    pub level: usize,
    pub dverts: Vec<DomainVertex>,
    /// Counter-clockwise triples of domain-vertex indices.
    pub triangles: Vec<[usize; 3]>,
    /// Domain vertex of the canonical lift of each quotient vertex.
    pub canon: Vec<usize>,
    /// Orthonormal frame (e₁, e₂) at each canonical lift.
    pub vframes: Vec<[Vector4<f64>; 2]>,
    pub centroids: Vec<HPoint>,
    pub tframes: Vec<[Vector4<f64>; 2]>,
    /// Corner coordinates in the normal chart at the centroid.
    pub chart: Vec<[Vector2<f64>; 3]>,
    /// E⁻ᵀ for E = [s₁−s₀, s₂−s₀]; maps corner differences to gradients.
    pub grad_op: Vec<Matrix2<f64>>,
    /// Hyperbolic length of the edge opposite each corner.
    pub lengths: Vec<[f64; 3]>,
    /// Hyperbolic interior angles.
    pub angles: Vec<[f64; 3]>,
    pub areas: Vec<f64>,
    /// Rotation taking vertex-frame components at a corner to triangle-frame
    /// components after transport to the centroid.
    pub corner_rot: Vec<[f64; 3]>,
    /// Lumped (barycentric) mass per quotient vertex.
    pub mass: Vec<f64>,
    /// Cotangent stiffness matrix from intrinsic edge lengths.
    pub stiffness: Csr,
    pub rings: Vec<Ring>,
    pub boundary_pairs: Vec<BoundaryPair>,
}

/// Frame rule: e₁ is the normalised tangential part of ∂/∂x₁, e₂ = N×e₁
/// with N = ∂/∂x₃ the unit normal of H² ⊂ H³.
pub fn standard_frame(p: &HPoint) -> [Vector4<f64>; 2] {
    let e1 = hyp::project_tangent(p, &Vector4::new(0.0, 1.0, 0.0, 0.0));
    let e1 = e1 / hyp::space_norm(&e1);
    let e2 = hyp::cross_vec(&p.x, &Vector4::new(0.0, 0.0, 0.0, 1.0), &e1);
    [e1, e2]
}

fn chart_coords(frame: &[Vector4<f64>; 2], v: &Vector4<f64>) -> Vector2<f64> {
    Vector2::new(minkowski(v, &frame[0]), minkowski(v, &frame[1]))
}

/// Angle θ with transported e₁ = cos θ f₁ + sin θ f₂.
fn transition_angle(from: &HPoint, e1: &Vector4<f64>, to: &HPoint, frame: &[Vector4<f64>; 2]) -> f64 {
    let t = hyp::transport_vec(from, to, e1);
    math::atan2(minkowski(&t, &frame[1]), minkowski(&t, &frame[0]))
}

pub fn refine(domain: &FuchsianDomain, level: usize) -> SurfaceMesh {
    let n = domain.sides();
    let mut pos: Vec<HPoint> = vec![HPoint::origin()];
    let mut sides: Vec<u64> = vec![0];
    for k in 0..n {
        pos.push(domain.polygon[k]);
        sides.push((1u64 << k) | (1u64 << ((k + n - 1) % n)));
    }
    let mut tris: Vec<[usize; 3]> = (0..n).map(|k| [0, k + 1, (k + 1) % n + 1]).collect();
    for _ in 0..level {
        let mut mids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut mid = |a: usize, b: usize, pos: &mut Vec<HPoint>, sides: &mut Vec<u64>| -> usize {
            let key = (a.min(b), a.max(b));
            if let Some(&m) = mids.get(&key) {
                return m;
            }
            pos.push(pos[a].midpoint(&pos[b]));
            sides.push(sides[a] & sides[b]);
            mids.insert(key, pos.len() - 1);
            pos.len() - 1
        };
        let mut next = Vec::with_capacity(4 * tris.len());
        for &[a, b, c] in &tris {
            let ab = mid(a, b, &mut pos, &mut sides);
            let bc = mid(b, c, &mut pos, &mut sides);
            let ca = mid(c, a, &mut pos, &mut sides);
            next.push([a, ab, ca]);
            next.push([ab, b, bc]);
            next.push([ca, bc, c]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }

    // Boundary gluings.
    let nd = pos.len();
    let mut pairs = Vec::new();
    for s in 0..n {
        let p = domain.partner(s);
        let letter = domain.side_letter(s);
        let g = domain.letter(letter);
        let on_s: Vec<usize> = (0..nd).filter(|&i| sides[i] >> s & 1 == 1).collect();
        for i in (0..nd).filter(|&i| sides[i] >> p & 1 == 1) {
            let img = g.apply(&pos[i]);
            let j = *on_s
                .iter()
                .min_by(|&&a, &&b| {
                    (pos[a].x - img.x).norm().partial_cmp(&(pos[b].x - img.x).norm()).unwrap()
                })
                .expect("partner side has vertices");
            debug_assert!((pos[j].x - img.x).norm() < 1e-8);
            pairs.push(BoundaryPair { from: i, to: j, letter });
        }
    }
    let mut adj: Vec<Vec<(usize, i32)>> = vec![Vec::new(); nd];
    for bp in &pairs {
        adj[bp.from].push((bp.to, bp.letter));
        adj[bp.to].push((bp.from, -bp.letter));
    }
    let mut class = vec![usize::MAX; nd];
    let mut words: Vec<Word> = vec![Vec::new(); nd];
    let mut canon = Vec::new();
    for root in 0..nd {
        if class[root] != usize::MAX {
            continue;
        }
        let c = canon.len();
        canon.push(root);
        class[root] = c;
        let mut queue = alloc::collections::VecDeque::from([root]);
        while let Some(x) = queue.pop_front() {
            for &(y, l) in &adj[x] {
                if class[y] == usize::MAX {
                    class[y] = c;
                    let mut w = vec![l];
                    w.extend_from_slice(&words[x]);
                    words[y] = w;
                    queue.push_back(y);
                }
            }
        }
    }
    let dverts: Vec<DomainVertex> = (0..nd)
        .map(|i| DomainVertex {
            pos: pos[i],
            class: class[i],
            deck: domain.eval_word(&words[i]),
            word: words[i].clone(),
            sides: sides[i],
        })
        .collect();
    SurfaceMesh::assemble(domain.clone(), level, dverts, tris, canon, pairs)
}

impl SurfaceMesh {
    fn assemble(
        domain: FuchsianDomain,
        level: usize,
        dverts: Vec<DomainVertex>,
        triangles: Vec<[usize; 3]>,
        canon: Vec<usize>,
        boundary_pairs: Vec<BoundaryPair>,
    ) -> SurfaceMesh {
        let nv = canon.len();
        let nt = triangles.len();
        let vframes: Vec<[Vector4<f64>; 2]> = canon.iter().map(|&d| standard_frame(&dverts[d].pos)).collect();
        let mut centroids = Vec::with_capacity(nt);
        let mut tframes = Vec::with_capacity(nt);
        let mut chart = Vec::with_capacity(nt);
        let mut grad_op = Vec::with_capacity(nt);
        let mut lengths = Vec::with_capacity(nt);
        let mut angles = Vec::with_capacity(nt);
        let mut areas = Vec::with_capacity(nt);
        let mut corner_rot = Vec::with_capacity(nt);
        let mut mass = vec![0.0; nv];
        let mut trip = Vec::with_capacity(9 * nt);
        for t in &triangles {
            let p: [HPoint; 3] = core::array::from_fn(|k| dverts[t[k]].pos);
            let c = HPoint::normalize(p[0].x + p[1].x + p[2].x);
            let f = standard_frame(&c);
            let s: [Vector2<f64>; 3] = core::array::from_fn(|k| chart_coords(&f, &hyp::log_point(&c, &p[k]).v));
            let e = Matrix2::from_columns(&[s[1] - s[0], s[2] - s[0]]);
            grad_op.push(e.try_inverse().expect("nondegenerate triangle").transpose());
            let len: [f64; 3] = core::array::from_fn(|k| hyp::dist(&p[(k + 1) % 3], &p[(k + 2) % 3]));
            let ang: [f64; 3] = core::array::from_fn(|k| {
                let a = hyp::log_point(&p[k], &p[(k + 1) % 3]).v;
                let b = hyp::log_point(&p[k], &p[(k + 2) % 3]).v;
                math::acos(minkowski(&a, &b) / (hyp::space_norm(&a) * hyp::space_norm(&b)))
            });
            let area = PI - ang[0] - ang[1] - ang[2];
            let rot: [f64; 3] = core::array::from_fn(|k| {
                let dv = &dverts[t[k]];
                let e1 = dv.deck.apply_vec(&vframes[dv.class][0]);
                transition_angle(&p[k], &e1, &c, &f)
            });
            // Cotangent weights of the flat triangle with the same edge lengths.
            let (a, b, cc) = (len[0], len[1], len[2]);
            let sp = 0.5 * (a + b + cc);
            let flat_area = math::sqrt((sp * (sp - a) * (sp - b) * (sp - cc)).max(1e-300));
            for k in 0..3 {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                let cot = (len[i] * len[i] + len[j] * len[j] - len[k] * len[k]) / (4.0 * flat_area);
                let (vi, vj) = (dverts[t[i]].class, dverts[t[j]].class);
                trip.push((vi, vj, -0.5 * cot));
                trip.push((vj, vi, -0.5 * cot));
                trip.push((vi, vi, 0.5 * cot));
                trip.push((vj, vj, 0.5 * cot));
                mass[dverts[t[k]].class] += area / 3.0;
            }
            centroids.push(c);
            tframes.push(f);
            chart.push(s);
            lengths.push(len);
            angles.push(ang);
            areas.push(area);
            corner_rot.push(rot);
        }
        let stiffness = Csr::from_triplets(nv, trip);
        let mut mesh = SurfaceMesh {
            domain,
            level,
            dverts,
            triangles,
            canon,
            vframes,
            centroids,
            tframes,
            chart,
            grad_op,
            lengths,
            angles,
            areas,
            corner_rot,
            mass,
            stiffness,
            rings: Vec::new(),
            boundary_pairs,
        };
        mesh.rings = (0..nv).map(|v| mesh.build_ring(v)).collect();
        for v in 0..nv {
            let (n, c) = mesh.hessian_fit(v);
            mesh.rings[v].hess_nbrs = n;
            mesh.rings[v].hess_coeffs = c;
        }
        mesh
    }

    fn build_ring(&self, v: usize) -> Ring {
        let base = self.dverts[self.canon[v]].pos;
        let frame = self.vframes[v];
        let mut neighbors = Vec::new();
        let mut points: Vec<HPoint> = Vec::new();
        let mut rot = Vec::new();
        let mut deck = Vec::new();
        for t in &self.triangles {
            for k in 0..3 {
                let dv = &self.dverts[t[k]];
                if dv.class != v {
                    continue;
                }
                let back = dv.deck.inverse();
                for o in [(k + 1) % 3, (k + 2) % 3] {
                    let q = back.apply(&self.dverts[t[o]].pos);
                    if points.iter().all(|p| (p.x - q.x).norm() > 1e-8) {
                        let e1 = back.apply_vec(&self.dvert_frame(t[o])[0]);
                        rot.push(transition_angle(&q, &e1, &base, &frame));
                        let mut w = inverse_word(&dv.word);
                        w.extend_from_slice(&self.dverts[t[o]].word);
                        deck.push(w);
                        points.push(q);
                        neighbors.push(self.dverts[t[o]].class);
                    }
                }
            }
        }
        let offsets: Vec<Vector2<f64>> =
            points.iter().map(|q| chart_coords(&frame, &hyp::log_point(&base, q).v)).collect();
        let m = offsets.len();
        let mut a = DMatrix::zeros(m, 5);
        for (i, s) in offsets.iter().enumerate() {
            let w = 1.0 / s.norm_squared();
            let row = [s.x, s.y, 0.5 * s.x * s.x, s.x * s.y, 0.5 * s.y * s.y];
            for j in 0..5 {
                a[(i, j)] = w * row[j];
            }
        }
        let pinv = a.clone().pseudo_inverse(1e-13).expect("ring fit");
        let coeffs = (0..m)
            .map(|i| {
                let w = 1.0 / offsets[i].norm_squared();
                core::array::from_fn(|j| pinv[(j, i)] * w)
            })
            .collect();
        Ring { neighbors, offsets, coeffs, rot, deck, hess_nbrs: Vec::new(), hess_coeffs: Vec::new() }
    }

    /// Cubic least-squares fit over the two-ring. Its Hessian is second
    /// order accurate, so the Hessian of a smooth function has a first
    /// order accurate derivative.
    fn hessian_fit(&self, v: usize) -> (Vec<usize>, Vec<[f64; 3]>) {
        let base = self.dverts[self.canon[v]].pos;
        let frame = self.vframes[v];
        let gens = &self.domain.generators;
        let mut nbrs = Vec::new();
        let mut points: Vec<HPoint> = Vec::new();
        let mut push = |q: HPoint, c: usize, nbrs: &mut Vec<usize>| {
            if (q.x - base.x).norm() > 1e-8 && points.iter().all(|p| (p.x - q.x).norm() > 1e-8) {
                points.push(q);
                nbrs.push(c);
            }
        };
        let r = &self.rings[v];
        for (j, &w) in r.neighbors.iter().enumerate() {
            let g = eval_word(gens, &r.deck[j]);
            push(g.apply(&self.dverts[self.canon[w]].pos), w, &mut nbrs);
            let rw = &self.rings[w];
            for (k, &x) in rw.neighbors.iter().enumerate() {
                let h = g.compose(&eval_word(gens, &rw.deck[k]));
                push(h.apply(&self.dverts[self.canon[x]].pos), x, &mut nbrs);
            }
        }
        let offsets: Vec<Vector2<f64>> =
            points.iter().map(|q| chart_coords(&frame, &hyp::log_point(&base, q).v)).collect();
        let m = offsets.len();
        // Columns are scaled by powers of the typical offset for conditioning.
        let h = offsets.iter().map(|s| s.norm()).sum::<f64>() / m as f64;
        let mut a = DMatrix::zeros(m, 9);
        for (i, s) in offsets.iter().enumerate() {
            let w = 1.0 / s.norm_squared();
            let (x, y) = (s.x / h, s.y / h);
            let row = [
                x,
                y,
                0.5 * x * x,
                x * y,
                0.5 * y * y,
                x * x * x / 6.0,
                0.5 * x * x * y,
                0.5 * x * y * y,
                y * y * y / 6.0,
            ];
            for j in 0..9 {
                a[(i, j)] = w * row[j];
            }
        }
        let pinv = a.pseudo_inverse(1e-12).expect("hessian fit");
        let coeffs = (0..m)
            .map(|i| {
                let w = 1.0 / offsets[i].norm_squared();
                core::array::from_fn(|j| pinv[(2 + j, i)] * w / (h * h))
            })
            .collect();
        (nbrs, coeffs)
    }

    pub fn num_vertices(&self) -> usize {
        self.canon.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn genus(&self) -> usize {
        self.domain.genus
    }

    /// Quotient vertex of corner k of triangle t.
    pub fn corner_class(&self, t: usize, k: usize) -> usize {
        self.dverts[self.triangles[t][k]].class
    }

    /// Position of the canonical lift of quotient vertex v.
    pub fn vertex_pos(&self, v: usize) -> HPoint {
        self.dverts[self.canon[v]].pos
    }

    /// Frame at any domain vertex (deck image of the canonical frame).
    pub fn dvert_frame(&self, d: usize) -> [Vector4<f64>; 2] {
        let dv = &self.dverts[d];
        let f = &self.vframes[dv.class];
        [dv.deck.apply_vec(&f[0]), dv.deck.apply_vec(&f[1])]
    }

    /// Longest edge, the mesh size h.
    pub fn max_edge(&self) -> f64 {
        self.lengths.iter().flat_map(|l| l.iter().copied()).fold(0.0, f64::max)
    }

    /// A tolerance proportional to the mesh size, used for residual checks
    /// that converge at first order.
    pub fn mesh_tolerance(&self) -> f64 {
        self.max_edge()
    }

    /// Flat-angle defect 2π − Σ(angles of the flat triangles with the same
    /// edge lengths) per quotient vertex; sums to 2πχ.
    pub fn angle_defects(&self) -> Vec<f64> {
        let mut d = vec![2.0 * PI; self.num_vertices()];
        for (t, len) in self.lengths.iter().enumerate() {
            for k in 0..3 {
                let (a, b, c) = (len[k], len[(k + 1) % 3], len[(k + 2) % 3]);
                let ang = math::acos((b * b + c * c - a * a) / (2.0 * b * c));
                d[self.corner_class(t, k)] -= ang;
            }
        }
        d
    }

    /// Per quotient vertex, 2π minus the sum of hyperbolic corner angles.
    pub fn hyperbolic_angle_defects(&self) -> Vec<f64> {
        let mut d = vec![2.0 * PI; self.num_vertices()];
        for (t, ang) in self.angles.iter().enumerate() {
            for k in 0..3 {
                d[self.corner_class(t, k)] -= ang[k];
            }
        }
        d
    }

    // ---- scalar operators -------------------------------------------------

    /// Apply −Δ in weak form: returns K u (not divided by the mass).
    pub fn stiffness_apply(&self, u: &[f64]) -> Vec<f64> {
        self.stiffness.mul(u)
    }

    /// Pointwise FE Laplacian −M⁻¹Ku.
    pub fn fe_laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.stiffness.mul(u).iter().zip(&self.mass).map(|(k, m)| -k / m).collect()
    }

    /// Apply (−Δ + shift) in the lumped weak form and divide by the mass,
    /// i.e. the pointwise operator whose inverse is [`laplacian_solve`].
    pub fn shifted_apply(&self, u: &[C64], shift: f64) -> ScalarField {
        let re: Vec<f64> = u.iter().map(|z| z.re).collect();
        let im: Vec<f64> = u.iter().map(|z| z.im).collect();
        let kr = self.stiffness.mul(&re);
        let ki = self.stiffness.mul(&im);
        (0..u.len())
            .map(|i| C64::new(kr[i] / self.mass[i], ki[i] / self.mass[i]) + u[i] * shift)
            .collect()
    }

    /// Solve (−Δ + shift)u = rhs with K + shift·M on the left and M·rhs on
    /// the right (lumped mass), by conjugate gradients.
    pub fn laplacian_solve(&self, rhs: &[C64], shift: f64) -> Result<ScalarField> {
        if shift <= 0.0 {
            return Err(invalid("shift must be positive"));
        }
        let mut out = vec![C64::new(0.0, 0.0); rhs.len()];
        for part in 0..2 {
            let b: Vec<f64> =
                rhs.iter().zip(&self.mass).map(|(z, m)| m * if part == 0 { z.re } else { z.im }).collect();
            let sol = cg_shifted(&self.stiffness, shift, &self.mass, &b, 1e-13, 20 * rhs.len() + 100);
            if !sol.converged && sol.relative_residual > 1e-10 {
                return Err(numerical(alloc::format!(
                    "laplacian solve stalled at relative residual {:.3e}",
                    sol.relative_residual
                )));
            }
            for (o, x) in out.iter_mut().zip(sol.x) {
                if part == 0 {
                    o.re = x;
                } else {
                    o.im = x;
                }
            }
        }
        Ok(out)
    }

    /// Per-triangle gradient of the linear interpolant, in triangle frames.
    pub fn grad(&self, u: &[C64]) -> VectorField {
        (0..self.num_triangles())
            .map(|t| {
                let [a, b, c] = [0, 1, 2].map(|k| u[self.corner_class(t, k)]);
                let g = &self.grad_op[t];
                let d = [b - a, c - a];
                Vector2::new(d[0] * g[(0, 0)] + d[1] * g[(0, 1)], d[0] * g[(1, 0)] + d[1] * g[(1, 1)])
            })
            .collect()
    }

    /// Per-vertex gradient from the one-ring quadratic fit, in vertex frames.
    pub fn vertex_grad(&self, u: &[C64]) -> Vec<Vector2<C64>> {
        (0..self.num_vertices())
            .map(|v| {
                let r = &self.rings[v];
                let mut g = Vector2::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0));
                for (j, &w) in r.neighbors.iter().enumerate() {
                    let du = u[w] - u[v];
                    g.x += du * r.coeffs[j][0];
                    g.y += du * r.coeffs[j][1];
                }
                g
            })
            .collect()
    }

    /// Per-vertex symmetric Hessian from the two-ring cubic fit, in vertex frames.
    pub fn hess(&self, u: &[C64]) -> OperatorField {
        (0..self.num_vertices())
            .map(|v| {
                let r = &self.rings[v];
                let mut h = [C64::new(0.0, 0.0); 3];
                for (j, &w) in r.hess_nbrs.iter().enumerate() {
                    let du = u[w] - u[v];
                    for k in 0..3 {
                        h[k] += du * r.hess_coeffs[j][k];
                    }
                }
                CMat2::new(h[0], h[1], h[1], h[2])
            })
            .collect()
    }

    /// The Hessian as a list of per-vertex stencils: Hess(u)_v = Σ_w H_{vw} u_w.
    pub fn hess_stencil(&self, v: usize) -> Vec<(usize, Matrix2<f64>)> {
        let r = &self.rings[v];
        let mut out = Vec::with_capacity(r.hess_nbrs.len() + 1);
        let mut selfw = Matrix2::zeros();
        for (j, &w) in r.hess_nbrs.iter().enumerate() {
            let c = &r.hess_coeffs[j];
            let m = Matrix2::new(c[0], c[1], c[1], c[2]);
            selfw -= m;
            out.push((w, m));
        }
        out.push((v, selfw));
        out
    }

    // ---- operator fields -------------------------------------------------

    /// Corner values of an operator field transported into the frame of
    /// triangle t.
    pub fn corner_ops(&self, phi: &[CMat2], t: usize) -> [CMat2; 3] {
        core::array::from_fn(|k| math::rotate_op(&phi[self.corner_class(t, k)], self.corner_rot[t][k]))
    }

    /// Triangle value (average of transported corner values).
    pub fn op_at_triangle(&self, phi: &[CMat2], t: usize) -> CMat2 {
        let c = self.corner_ops(phi, t);
        (c[0] + c[1] + c[2]) / C64::new(3.0, 0.0)
    }

    /// Per-vertex covariant derivatives (∇_{e₁}φ, ∇_{e₂}φ) from the one-ring
    /// quadratic fit of neighbour values transported radially to the centre.
    pub fn covariant_derivative(&self, phi: &[CMat2]) -> Vec<[CMat2; 2]> {
        (0..self.num_vertices())
            .map(|v| {
                let r = &self.rings[v];
                let mut d = [CMat2::zeros(), CMat2::zeros()];
                for (j, &w) in r.neighbors.iter().enumerate() {
                    let diff = math::rotate_op(&phi[w], r.rot[j]) - phi[v];
                    d[0] += diff * C64::new(r.coeffs[j][0], 0.0);
                    d[1] += diff * C64::new(r.coeffs[j][1], 0.0);
                }
                d
            })
            .collect()
    }

    /// Discrete exterior covariant derivative per triangle, (d^∇φ)(f₁, f₂)
    /// in the triangle frame: the loop integral ∮φ(dx) around the triangle
    /// in the centroid chart divided by its area. Edges use the trapezoid
    /// rule with the end-derivative (Euler–Maclaurin) correction, with
    /// derivatives from [`covariant_derivative`].
    pub fn dnabla(&self, phi: &[CMat2]) -> Vec<Vector2<C64>> {
        let cd = self.covariant_derivative(phi);
        self.dnabla_with(phi, &cd)
    }

    fn dnabla_with(&self, phi: &[CMat2], cd: &[[CMat2; 2]]) -> Vec<Vector2<C64>> {
        let p1 = self.dnabla_p1(phi);
        (0..self.num_triangles())
            .map(|t| {
                let s = &self.chart[t];
                let signed_area = 0.5 * (s[1] - s[0]).perp(&(s[2] - s[0]));
                // ∇_e φ at corner k for a triangle-frame vector e.
                let deriv = |k: usize, e: &Vector2<f64>| -> CMat2 {
                    let th = self.corner_rot[t][k];
                    let ev = math::rot2(th).transpose() * e;
                    let d = &cd[self.corner_class(t, k)];
                    math::rotate_op(&(d[0] * C64::new(ev.x, 0.0) + d[1] * C64::new(ev.y, 0.0)), th)
                };
                let mut corr = Vector2::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0));
                for k in 0..3 {
                    let b = (k + 1) % 3;
                    let e = s[b] - s[k];
                    let ec = Vector2::new(C64::new(e.x, 0.0), C64::new(e.y, 0.0));
                    corr += (deriv(k, &e) - deriv(b, &e)) * ec / C64::new(12.0, 0.0);
                }
                p1[t] + corr / C64::new(signed_area, 0.0)
            })
            .collect()
    }

    /// First-order variant of [`dnabla`]: the same loop integral with the
    /// plain trapezoid rule, i.e. d^∇ of the transported P1 interpolant.
    pub fn dnabla_p1(&self, phi: &[CMat2]) -> Vec<Vector2<C64>> {
        (0..self.num_triangles())
            .map(|t| {
                let c = self.corner_ops(phi, t);
                let g = &self.grad_op[t];
                let d1 = c[1] - c[0];
                let d2 = c[2] - c[0];
                let dx = d1 * C64::new(g[(0, 0)], 0.0) + d2 * C64::new(g[(0, 1)], 0.0);
                let dy = d1 * C64::new(g[(1, 0)], 0.0) + d2 * C64::new(g[(1, 1)], 0.0);
                Vector2::new(dx[(0, 1)] - dy[(0, 0)], dx[(1, 1)] - dy[(1, 0)])
            })
            .collect()
    }

    /// L² norm of a per-triangle vector field.
    pub fn l2_triangle_vectors(&self, r: &[Vector2<C64>]) -> f64 {
        math::sqrt(
            r.iter().zip(&self.areas).map(|(v, a)| a * (v.x.norm_sqr() + v.y.norm_sqr())).sum::<f64>(),
        )
    }

    /// L² norm of the Codazzi residual.
    pub fn dnabla_norm(&self, phi: &[CMat2]) -> f64 {
        self.l2_triangle_vectors(&self.dnabla(phi))
    }

    /// Σ_triangles (vertex average of f)·area.
    pub fn integrate(&self, f: &[C64]) -> C64 {
        (0..self.num_triangles())
            .map(|t| {
                let s = f[self.corner_class(t, 0)] + f[self.corner_class(t, 1)] + f[self.corner_class(t, 2)];
                s * (self.areas[t] / 3.0)
            })
            .sum()
    }

    pub fn integrate_real(&self, f: &[f64]) -> f64 {
        let c: Vec<C64> = f.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.integrate(&c).re
    }

    /// Lumped L² inner product of scalar fields, Σ M_v conj(a_v) b_v.
    pub fn scalar_inner(&self, a: &[C64], b: &[C64]) -> C64 {
        a.iter().zip(b).zip(&self.mass).map(|((x, y), m)| x.conj() * y * *m).sum()
    }

    pub fn scalar_norm(&self, a: &[C64]) -> f64 {
        math::sqrt(self.scalar_inner(a, a).re)
    }

    /// Lumped L² inner product of operator fields, Σ M_v Re tr(A_vᴴ B_v).
    pub fn op_inner(&self, a: &[CMat2], b: &[CMat2]) -> f64 {
        a.iter().zip(b).zip(&self.mass).map(|((x, y), m)| m * (x.adjoint() * y).trace().re).sum()
    }

    pub fn op_norm(&self, a: &[CMat2]) -> f64 {
        math::sqrt(self.op_inner(a, a))
    }

    /// Evaluate a function of the canonical-lift position at every vertex.
    pub fn sample(&self, f: impl Fn(&HPoint) -> f64) -> Vec<f64> {
        self.canon.iter().map(|&d| f(&self.dverts[d].pos)).collect()
    }

    /// A deck-invariant C³ function Σ_γ k(dist(x, γ·centre)) with the bump
    /// k(d) = (1 − d²/radius²)⁴ supported in the given radius.
    pub fn bump_field(&self, centre: &HPoint, radius: f64, orbit: &[IsomH3]) -> Vec<f64> {
        let images: Vec<HPoint> = orbit.iter().map(|g| g.apply(centre)).collect();
        self.sample(|x| {
            images
                .iter()
                .map(|y| {
                    let r = hyp::dist(x, y) / radius;
                    if r < 1.0 {
                        let q = 1.0 - r * r;
                        q * q * q * q
                    } else {
                        0.0
                    }
                })
                .sum()
        })
    }

    /// Group elements needed by [`bump_field`] for bumps of the given radius
    /// centred within `centre_radius` of the origin.
    pub fn bump_orbit(&self, radius: f64, centre_radius: f64) -> Vec<IsomH3> {
        self.domain.orbit_within(self.domain.circumradius + radius + centre_radius + 1e-6)
    }
}

pub fn real_field(u: &[f64]) -> ScalarField {
    u.iter().map(|&x| C64::new(x, 0.0)).collect()
}

pub fn real_ops(a: &[Matrix2<f64>]) -> OperatorField {
    a.iter().map(math::complexify).collect()
}
