//! Line-oriented text formats (`HSURF 1`, `HFIELD 1`, `HMAP 1`) and the JSON
//! representation document.
//!
//! Numbers are written with `{:.17e}` so that a write/read cycle is exact and
//! repeated runs are byte-identical.

use std::fmt::Write as _;

use hyperimm::energy::{EquivariantMap, Representation};
use hyperimm::hyperbolic::{self as hyp, HPoint, IsomH3};
use hyperimm::math::{Matrix4, Vector4, C64, CMat2};
use hyperimm::surface::{build_domain, refine, SurfaceMesh};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Mismatch(String),
}

fn num(x: f64) -> String {
    format!("{x:.17e}")
}

pub fn read_file(path: &std::path::Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

pub fn write_file(path: &std::path::Path, text: &str) -> Result<(), FormatError> {
    std::fs::write(path, text).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

/// Tokenizer over non-empty, non-comment lines.
struct Lines<'a> {
    it: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        Lines { it: it.peekable(), last: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> FormatError {
        FormatError::Parse { line: self.last, msg: msg.into() }
    }

    fn next(&mut self) -> Result<Vec<&'a str>, FormatError> {
        let (n, l) = self.it.next().ok_or_else(|| self.err("unexpected end of file"))?;
        self.last = n;
        Ok(l.split_whitespace().collect())
    }

    /// A line `KEY value`.
    fn keyed(&mut self, key: &str) -> Result<&'a str, FormatError> {
        let t = self.next()?;
        match t.as_slice() {
            [k, v] if *k == key => Ok(v),
            _ => Err(self.err(format!("expected `{key} <value>`"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<usize, FormatError> {
        let v = self.keyed(key)?;
        v.parse().map_err(|_| self.err(format!("bad count `{v}`")))
    }

    fn floats(&mut self, tokens: &[&str]) -> Result<Vec<f64>, FormatError> {
        tokens.iter().map(|t| t.parse::<f64>().map_err(|_| self.err(format!("bad number `{t}`")))).collect()
    }

    /// A record `index v₁ … v_k` whose index must equal `expect`.
    fn record(&mut self, expect: usize, k: usize) -> Result<Vec<f64>, FormatError> {
        let t = self.next()?;
        if t.len() != k + 1 {
            return Err(self.err(format!("expected index and {k} values")));
        }
        if t[0].parse::<usize>().ok() != Some(expect) {
            return Err(self.err(format!("expected record {expect}")));
        }
        self.floats(&t[1..])
    }

    fn header(&mut self, magic: &str) -> Result<(), FormatError> {
        let t = self.next()?;
        if t.as_slice() != [magic, "1"] {
            return Err(self.err(format!("expected header `{magic} 1`")));
        }
        Ok(())
    }
}

fn write_matrix(out: &mut String, m: &Matrix4<f64>) {
    for i in 0..4 {
        let row: Vec<String> = (0..4).map(|j| num(m[(i, j)])).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
}

fn read_matrix(lines: &mut Lines) -> Result<Matrix4<f64>, FormatError> {
    let mut m = Matrix4::zeros();
    for i in 0..4 {
        let t = lines.next()?;
        let v = lines.floats(&t)?;
        if v.len() != 4 {
            return Err(lines.err("expected a row of 4 numbers"));
        }
        for j in 0..4 {
            m[(i, j)] = v[j];
        }
    }
    Ok(m)
}

fn generator_name(k: usize) -> String {
    format!("{}{}", if k.is_multiple_of(2) { 'A' } else { 'B' }, k / 2 + 1)
}

// ---- HSURF ------------------------------------------------------------------

/// The mesh as text. `VERTICES` are the domain vertices (lifts inside the
/// fundamental polygon) and `CLASSES` maps them to quotient vertices.
pub fn write_hsurf(mesh: &SurfaceMesh, level: usize) -> String {
    let mut s = String::new();
    writeln!(s, "HSURF 1").unwrap();
    writeln!(s, "GENUS {}", mesh.genus()).unwrap();
    writeln!(s, "LEVEL {level}").unwrap();
    writeln!(s, "VERTICES {}", mesh.dverts.len()).unwrap();
    for (i, d) in mesh.dverts.iter().enumerate() {
        let x = d.pos.x;
        writeln!(s, "{i} {} {} {} {}", num(x[0]), num(x[1]), num(x[2]), num(x[3])).unwrap();
    }
    writeln!(s, "TRIANGLES {}", mesh.triangles.len()).unwrap();
    for (i, t) in mesh.triangles.iter().enumerate() {
        writeln!(s, "{i} {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "CLASSES {}", mesh.dverts.len()).unwrap();
    for (i, d) in mesh.dverts.iter().enumerate() {
        writeln!(s, "{i} {}", d.class).unwrap();
    }
    writeln!(s, "PAIRINGS {}", mesh.domain.generators.len()).unwrap();
    for (k, g) in mesh.domain.generators.iter().enumerate() {
        writeln!(s, "{} {}", generator_name(k), k + 1).unwrap();
        write_matrix(&mut s, &g.m);
    }
    writeln!(s, "FRAMES {}", mesh.num_vertices()).unwrap();
    for (v, f) in mesh.vframes.iter().enumerate() {
        let c: Vec<String> = f.iter().flat_map(|e| e.iter().map(|x| num(*x)).collect::<Vec<_>>()).collect();
        writeln!(s, "{v} {}", c.join(" ")).unwrap();
    }
    s
}

/// Parse an `HSURF 1` file. Meshes are deterministic in (genus, level), so
/// the mesh is rebuilt and checked against the file's vertices and pairings.
pub fn read_hsurf(text: &str) -> Result<(SurfaceMesh, usize), FormatError> {
    let mut l = Lines::new(text);
    l.header("HSURF")?;
    let genus = l.count("GENUS")?;
    let level = l.count("LEVEL")?;
    if genus < 2 || level > 6 {
        return Err(l.err("genus must be at least 2 and level at most 6"));
    }
    let domain = build_domain(genus).map_err(|e| l.err(e.to_string()))?;
    let mesh = refine(&domain, level);
    let nv = l.count("VERTICES")?;
    if nv != mesh.dverts.len() {
        return Err(FormatError::Mismatch(format!("{nv} vertices, expected {}", mesh.dverts.len())));
    }
    for i in 0..nv {
        let x = l.record(i, 4)?;
        let y = mesh.dverts[i].pos.x;
        if (0..4).any(|k| (x[k] - y[k]).abs() > 1e-9 * (1.0 + y[k].abs())) {
            return Err(FormatError::Mismatch(format!("vertex {i} differs from the genus {genus} level {level} mesh")));
        }
    }
    let nt = l.count("TRIANGLES")?;
    if nt != mesh.triangles.len() {
        return Err(FormatError::Mismatch(format!("{nt} triangles, expected {}", mesh.triangles.len())));
    }
    for i in 0..nt {
        let t = l.record(i, 3)?;
        if (0..3).any(|k| t[k] as usize != mesh.triangles[i][k]) {
            return Err(FormatError::Mismatch(format!("triangle {i} differs")));
        }
    }
    let nc = l.count("CLASSES")?;
    for i in 0..nc {
        l.record(i, 1)?;
    }
    let np = l.count("PAIRINGS")?;
    if np != 2 * genus {
        return Err(FormatError::Mismatch(format!("{np} pairings, expected {}", 2 * genus)));
    }
    for k in 0..np {
        l.next()?;
        let m = read_matrix(&mut l)?;
        if (m - mesh.domain.generators[k].m).norm() > 1e-9 * (1.0 + m.norm()) {
            return Err(FormatError::Mismatch(format!("pairing {} differs", generator_name(k))));
        }
    }
    Ok((mesh, level))
}

// ---- HFIELD -----------------------------------------------------------------

/// Operator field keyed by vertex, entries row-major in the vertex frame.
pub fn write_hfield(phi: &[CMat2]) -> String {
    let mut s = String::new();
    writeln!(s, "HFIELD 1").unwrap();
    writeln!(s, "LOCATION vertex").unwrap();
    writeln!(s, "COUNT {}", phi.len()).unwrap();
    for (i, p) in phi.iter().enumerate() {
        let e: Vec<String> = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .flat_map(|&k| [num(p[k].re), num(p[k].im)])
            .collect();
        writeln!(s, "{i} {}", e.join(" ")).unwrap();
    }
    s
}

pub fn read_hfield(text: &str) -> Result<Vec<CMat2>, FormatError> {
    let mut l = Lines::new(text);
    l.header("HFIELD")?;
    let loc = l.keyed("LOCATION")?;
    if loc != "vertex" {
        return Err(l.err(format!("unsupported location `{loc}`")));
    }
    let n = l.count("COUNT")?;
    (0..n)
        .map(|i| {
            let v = l.record(i, 8)?;
            Ok(CMat2::new(C64::new(v[0], v[1]), C64::new(v[2], v[3]), C64::new(v[4], v[5]), C64::new(v[6], v[7])))
        })
        .collect()
}

// ---- HMAP -------------------------------------------------------------------

/// Canonical-lift images followed by the representation.
pub fn write_hmap(f: &EquivariantMap) -> String {
    let mut s = String::new();
    writeln!(s, "HMAP 1").unwrap();
    writeln!(s, "VERTICES {}", f.positions.len()).unwrap();
    for (i, p) in f.positions.iter().enumerate() {
        writeln!(s, "{i} {} {} {} {}", num(p.x[0]), num(p.x[1]), num(p.x[2]), num(p.x[3])).unwrap();
    }
    writeln!(s, "REPRESENTATION {}", f.rep.generators.len()).unwrap();
    for (k, g) in f.rep.generators.iter().enumerate() {
        writeln!(s, "{} {}", generator_name(k), k + 1).unwrap();
        write_matrix(&mut s, &g.m);
    }
    s
}

pub fn read_hmap(text: &str) -> Result<EquivariantMap, FormatError> {
    let mut l = Lines::new(text);
    l.header("HMAP")?;
    let n = l.count("VERTICES")?;
    let positions = (0..n)
        .map(|i| {
            let v = l.record(i, 4)?;
            Ok(HPoint::normalize(Vector4::new(v[0], v[1], v[2], v[3])))
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    let ng = l.count("REPRESENTATION")?;
    let mut gens = Vec::with_capacity(ng);
    for _ in 0..ng {
        l.next()?;
        let m = read_matrix(&mut l)?;
        gens.push(IsomH3::new(m).map_err(|e| l.err(e.to_string()))?);
    }
    Ok(EquivariantMap { positions, rep: Representation::new(gens) })
}

// ---- representation document ------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RepresentationDoc {
    pub format: String,
    pub version: u32,
    pub genus: usize,
    /// Generator matrices, row-major, in the order A₁, B₁, A₂, B₂, …
    pub generators: Vec<[[f64; 4]; 4]>,
    /// SL₂(ℂ) lifts as [[re, im]; 2]; 2] with the canonical sign.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psl2: Option<Vec<[[[f64; 2]; 2]; 2]>>,
    pub relation_residual: f64,
    /// tr² of generators and of pairwise products, as [re, im].
    pub trace_invariants: Vec<[f64; 2]>,
}

impl RepresentationDoc {
    pub fn from_rep(rep: &Representation) -> Self {
        let psl2: Option<Vec<_>> = rep
            .generators
            .iter()
            .map(|g| {
                hyp::psl2_convert(g)
                    .ok()
                    .map(|a| std::array::from_fn(|i| std::array::from_fn(|j| [a[(i, j)].re, a[(i, j)].im])))
            })
            .collect();
        let trace_invariants = rep.trace_invariants().map(|t| t.iter().map(|z| [z.re, z.im]).collect()).unwrap_or_default();
        RepresentationDoc {
            format: "hyperimm-representation".into(),
            version: 1,
            genus: rep.genus(),
            generators: rep.generators.iter().map(|g| std::array::from_fn(|i| std::array::from_fn(|j| g.m[(i, j)]))).collect(),
            psl2,
            relation_residual: rep.relation_residual,
            trace_invariants,
        }
    }

    pub fn to_rep(&self) -> Result<Representation, FormatError> {
        if self.format != "hyperimm-representation" || self.version != 1 {
            return Err(FormatError::Mismatch("not a version 1 representation document".into()));
        }
        let gens = self
            .generators
            .iter()
            .map(|m| IsomH3::new(Matrix4::from_fn(|i, j| m[i][j])).map_err(|e| FormatError::Mismatch(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if gens.len() != 2 * self.genus {
            return Err(FormatError::Mismatch(format!("{} generators for genus {}", gens.len(), self.genus)));
        }
        Ok(Representation::new(gens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsurf_round_trip() {
        let m = refine(&build_domain(2).unwrap(), 1);
        let text = write_hsurf(&m, 1);
        let (back, level) = read_hsurf(&text).unwrap();
        assert_eq!(level, 1);
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(write_hsurf(&back, 1), text);
    }

    #[test]
    fn hsurf_rejects_edited_vertex() {
        let m = refine(&build_domain(2).unwrap(), 0);
        let text = write_hsurf(&m, 0);
        let edited = text.replacen("\n0 1.", "\n0 2.", 1);
        assert!(matches!(read_hsurf(&edited), Err(FormatError::Mismatch(_))));
    }

    #[test]
    fn hfield_round_trip_is_exact() {
        let phi = vec![
            CMat2::new(C64::new(1.0, 0.1), C64::new(1.0 / 3.0, -2e-17), C64::new(0.0, 0.0), C64::new(-1e300, 5.0)),
            CMat2::identity(),
        ];
        assert_eq!(read_hfield(&write_hfield(&phi)).unwrap(), phi);
    }

    #[test]
    fn hfield_reports_line_of_bad_record() {
        let text = "HFIELD 1\nLOCATION vertex\nCOUNT 1\n0 1 2 3\n";
        match read_hfield(text) {
            Err(FormatError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hmap_round_trip() {
        let m = refine(&build_domain(2).unwrap(), 0);
        let f = EquivariantMap::equidistant(&m, 0.3);
        let back = read_hmap(&write_hmap(&f)).unwrap();
        assert!(back.sup_distance(&f) < 1e-14);
        assert_eq!(back.rep.generators, f.rep.generators);
    }

    #[test]
    fn representation_doc_round_trip() {
        let d = build_domain(2).unwrap();
        let rep = Representation::fuchsian(&d);
        let doc = RepresentationDoc::from_rep(&rep);
        let json = serde_json::to_string(&doc).unwrap();
        let back: RepresentationDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_rep().unwrap().generators, rep.generators);
        assert_eq!(doc.trace_invariants.len(), 4 + 6);
        assert!(doc.trace_invariants.iter().all(|z| z[1].abs() < 1e-9));
    }
}
