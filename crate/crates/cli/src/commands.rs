//! Subcommands. Each one resolves a [`RunConfig`], does its work, writes its
//! results and a `manifest.json` into the output directory, and returns an
//! exit code: 0 success, 2 usage, 3 numerical failure, 4 inconsistent input.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hyperimm::codazzi::{self, NewtonOptions, QDBasis};
use hyperimm::energy::{self, EquivariantMap, MinimizeOptions, MinimizeReport, Representation};
use hyperimm::math::{CMat2, C64};
use hyperimm::reconstruct;
use hyperimm::surface::{build_domain, refine, SurfaceMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigFile, RunConfig};
use crate::formats::{self, FormatError, RepresentationDoc};
use crate::suites::{self, SuiteConfig};

#[derive(Parser, Debug)]
#[command(name = "hyperimm", version, about = "Minimizing equivariant immersions of hyperbolic surfaces into H³")]
pub struct Cli {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Print the structured report on stdout instead of a text summary.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct MeshArgs {
    #[arg(long)]
    pub genus: Option<usize>,
    #[arg(long)]
    pub refine: Option<usize>,
    /// Read the mesh from an `HSURF 1` file instead of building it.
    #[arg(long, conflicts_with_all = ["genus", "refine"])]
    pub mesh: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct MinimizeArgs {
    #[arg(long, value_delimiter = ',')]
    pub eps_schedule: Option<Vec<f64>>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct DatumArgs {
    /// Real coefficients q in the quadratic-differential basis.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q_coeffs: Option<Vec<f64>>,
    /// Imaginary coefficients q′.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub qprime_coeffs: Option<Vec<f64>>,
    #[arg(long)]
    pub newton_tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the refined mesh of the regular Fuchsian domain.
    Surface {
        #[command(flatten)]
        mesh: MeshArgs,
    },
    /// Minimize the energy over maps equivariant for a representation.
    Minimize {
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        min: MinimizeArgs,
        /// Representation document (JSON). Defaults to the Fuchsian one.
        #[arg(long)]
        rep: Option<PathBuf>,
        /// Initial map (`HMAP 1`). Its positions are used with the target
        /// representation.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Split a field φ into cod u + b_q + i b_q′.
    Decompose {
        #[command(flatten)]
        mesh: MeshArgs,
        #[arg(long)]
        field: PathBuf,
    },
    /// Integrate φ to an equivariant immersion and extract its monodromy.
    Reconstruct {
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        datum: DatumArgs,
        /// `HFIELD 1` input; otherwise φ is solved from the coefficients.
        #[arg(long, conflicts_with_all = ["q_coeffs", "qprime_coeffs"])]
        field: Option<PathBuf>,
        #[arg(long)]
        out_rep: Option<PathBuf>,
        /// Also run the C-linearity probe along a seeded random direction.
        #[arg(long)]
        probe_clinearity: bool,
        #[arg(long, default_value_t = 0.01)]
        probe_step: f64,
    },
    /// Coefficients → φ → immersion → minimizer → φ′, with errors.
    Roundtrip {
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        datum: DatumArgs,
        #[command(flatten)]
        min: MinimizeArgs,
        /// Scale Re φ by this factor after the Newton solve, breaking the
        /// Gauss equation (for testing the consistency checks).
        #[arg(long, default_value_t = 1.0)]
        corrupt_gauss: f64,
    },
    /// Run the verification suites.
    Verify {
        /// Suite name; repeat to run several. Default: all.
        #[arg(long = "suite")]
        suites: Vec<String>,
        /// Refinement level for the surface suites.
        #[arg(long)]
        level: Option<usize>,
    },
}

/// A failed command, carrying its exit code category.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Inconsistent(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Inconsistent(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Numerical(_) => "numerical",
            Failure::Inconsistent(_) => "inconsistent",
        }
    }
}

impl From<hyperimm::Error> for Failure {
    fn from(e: hyperimm::Error) -> Self {
        match e {
            hyperimm::Error::Numerical(_) => Failure::Numerical(e.to_string()),
            hyperimm::Error::InvalidInput(_) | hyperimm::Error::Inconsistent(_) => Failure::Inconsistent(e.to_string()),
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Inconsistent(e.to_string()),
        }
    }
}

type Outcome = Result<Value, (Failure, Value)>;

fn fail(f: Failure) -> (Failure, Value) {
    let v = json!({ "error": { "kind": f.kind(), "message": f.to_string() } });
    (f, v)
}

fn bare<T>(r: Result<T, impl Into<Failure>>) -> Result<T, (Failure, Value)> {
    r.map_err(|e| fail(e.into()))
}

/// Parse arguments, run the command, print the result. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let json_out = cli.json;
    let (code, report) = match execute(cli) {
        Ok(v) => (if v.get("passed") == Some(&Value::Bool(false)) { 3 } else { 0 }, v),
        Err((f, v)) => {
            eprintln!("hyperimm: {f}");
            (f.code(), v)
        }
    };
    // A closed stdout (e.g. piped into `head`) is not an error of the command.
    let mut out = std::io::stdout().lock();
    if json_out {
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else if let Some(text) = report.get("summary").and_then(Value::as_array) {
        for line in text.iter().filter_map(Value::as_str) {
            let _ = writeln!(out, "{line}");
        }
    } else if code != 0 {
        // Diagnostics go to stdout even without --json.
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    }
    code
}

fn resolve(cli: &Cli, mesh: Option<&MeshArgs>, min: Option<&MinimizeArgs>, datum: Option<&DatumArgs>) -> Result<RunConfig, Failure> {
    let file = match &cli.config {
        Some(p) => {
            let text = formats::read_file(p)?;
            serde_json::from_str::<ConfigFile>(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => ConfigFile::default(),
    };
    let mut flags = ConfigFile { seed: cli.seed, out_dir: cli.out_dir.clone(), ..Default::default() };
    if let Some(m) = mesh {
        flags.genus = m.genus;
        flags.refine = m.refine;
    }
    if let Some(m) = min {
        flags.eps_schedule = m.eps_schedule.clone();
        flags.max_iters = m.max_iters;
        flags.tol = m.tol;
    }
    if let Some(d) = datum {
        flags.newton_tol = d.newton_tol;
    }
    let cfg = RunConfig::layered(&[&file, &flags]);
    cfg.validate().map_err(Failure::Usage)?;
    Ok(cfg)
}

fn load_mesh(args: &MeshArgs, cfg: &RunConfig) -> Result<(SurfaceMesh, usize), Failure> {
    match &args.mesh {
        Some(p) => Ok(formats::read_hsurf(&formats::read_file(p)?)?),
        None => {
            let domain = build_domain(cfg.genus).map_err(|e| Failure::Usage(e.to_string()))?;
            Ok((refine(&domain, cfg.refine), cfg.refine))
        }
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
        }
    }
    Ok(formats::write_file(path, text)?)
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(v).expect("report serializes");
    text.push('\n');
    write(path, &text)
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'static str,
    command: &'a str,
    versions: Value,
    config: &'a RunConfig,
    tolerances: Value,
    outputs: Vec<String>,
}

fn write_manifest(cfg: &RunConfig, command: &str, outputs: &[PathBuf]) -> Result<(), Failure> {
    let m = Manifest {
        format: "hyperimm-manifest",
        command,
        versions: json!({ "hyperimm": env!("CARGO_PKG_VERSION"), "format": { "HSURF": 1, "HFIELD": 1, "HMAP": 1, "representation": 1 } }),
        config: cfg,
        tolerances: json!({
            "minimize_tol": cfg.tol,
            "newton_tol": cfg.newton_tol,
            "side_residual": reconstruct::SIDE_TOLERANCE,
            "loop_defect_density": reconstruct::DEFECT_DENSITY_TOLERANCE,
        }),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_json(&out_path(cfg, "manifest.json"), &m)
}

fn execute(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Surface { mesh } => surface(&cli, mesh),
        Command::Minimize { mesh, min, rep, init } => minimize(&cli, mesh, min, rep.as_deref(), init.as_deref()),
        Command::Decompose { mesh, field } => decompose(&cli, mesh, field),
        Command::Reconstruct { mesh, datum, field, out_rep, probe_clinearity, probe_step } => {
            reconstruct_cmd(&cli, mesh, datum, field.as_deref(), out_rep.as_deref(), *probe_clinearity, *probe_step)
        }
        Command::Roundtrip { mesh, datum, min, corrupt_gauss } => roundtrip(&cli, mesh, datum, min, *corrupt_gauss),
        Command::Verify { suites, level } => verify(&cli, suites, *level),
    }
}

// ---- surface -----------------------------------------------------------------

fn surface(cli: &Cli, args: &MeshArgs) -> Outcome {
    let cfg = bare(resolve(cli, Some(args), None, None))?;
    let (mesh, level) = bare(load_mesh(args, &cfg))?;
    let genus = mesh.genus();
    let area = mesh.total_area();
    let expected = 4.0 * std::f64::consts::PI * (genus as f64 - 1.0);
    let relation = mesh.domain.relation_residual;
    let path = out_path(&cfg, &format!("genus{genus}_level{level}.hsurf"));
    bare(write(&path, &formats::write_hsurf(&mesh, level)))?;
    bare(write_manifest(&cfg, "surface", std::slice::from_ref(&path)))?;
    Ok(json!({
        "command": "surface",
        "genus": genus,
        "level": level,
        "vertices": mesh.num_vertices(),
        "triangles": mesh.num_triangles(),
        "area": area,
        "area_relative_error": (area - expected).abs() / expected,
        "relation_residual": relation,
        "max_edge": mesh.max_edge(),
        "output": path.display().to_string(),
        "summary": [
            format!("genus {genus}, level {level}: {} vertices, {} triangles", mesh.num_vertices(), mesh.num_triangles()),
            format!("area {area:.10} (4π(g−1) = {expected:.10})"),
            format!("relation residual {relation:.3e}"),
            format!("wrote {}", path.display()),
        ],
    }))
}

// ---- minimize ----------------------------------------------------------------

fn stage_json(r: &MinimizeReport) -> Value {
    Value::Array(
        r.stages
            .iter()
            .map(|s| {
                json!({
                    "eps": s.eps,
                    "iterations": s.iterations,
                    "energy": s.energy,
                    "grad_norm": s.grad_norm,
                    "converged": s.converged,
                    "trace": s.trace,
                })
            })
            .collect(),
    )
}

fn trace_csv(r: &MinimizeReport) -> String {
    let mut s = String::from("stage,eps,step,energy\n");
    for (k, st) in r.stages.iter().enumerate() {
        for (i, e) in st.trace.iter().enumerate() {
            s.push_str(&format!("{k},{:.17e},{i},{:.17e}\n", st.eps, e));
        }
    }
    s
}

fn el_json(mesh: &SurfaceMesh, f: &EquivariantMap) -> Value {
    match energy::vertex_data(mesh, f) {
        Ok(d) => {
            let r = codazzi::el_residuals(mesh, &d.b, &d.a);
            json!({
                "dnabla_b": r.dnabla_b,
                "dnabla_ba": r.dnabla_ba,
                "tr_jb": r.tr_jb,
                "tr_ba": r.tr_ba,
                "tr_jb2a": r.tr_jb2a,
                "gauss": r.gauss,
                "min_eig_b": r.min_eig_b,
                "mesh_tolerance": mesh.mesh_tolerance(),
            })
        }
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn minimize(cli: &Cli, margs: &MeshArgs, args: &MinimizeArgs, rep: Option<&Path>, init: Option<&Path>) -> Outcome {
    let cfg = bare(resolve(cli, Some(margs), Some(args), None))?;
    let (mesh, _) = bare(load_mesh(margs, &cfg))?;
    let rep = match rep {
        Some(p) => {
            let text = bare(formats::read_file(p))?;
            let doc: RepresentationDoc =
                serde_json::from_str(&text).map_err(|e| fail(Failure::Inconsistent(format!("{}: {e}", p.display()))))?;
            bare(doc.to_rep())?
        }
        None => Representation::fuchsian(&mesh.domain),
    };
    if rep.genus() != mesh.genus() {
        return Err(fail(Failure::Inconsistent(format!("representation of genus {} for a genus {} mesh", rep.genus(), mesh.genus()))));
    }
    let positions = match init {
        Some(p) => bare(formats::read_hmap(&bare(formats::read_file(p))?))?.positions,
        None => EquivariantMap::fuchsian_identity(&mesh).positions,
    };
    let f0 = bare(EquivariantMap::new(&mesh, positions, rep))?;
    let opts = MinimizeOptions { schedule: cfg.eps_schedule.clone(), max_iters: cfg.max_iters, tol: cfg.tol };
    let report = bare(energy::minimize(&mesh, &f0, &opts))?;
    let map_path = out_path(&cfg, "minimizer.hmap");
    let csv_path = out_path(&cfg, "energy_trace.csv");
    let rep_path = out_path(&cfg, "minimize.json");
    let body = json!({
        "command": "minimize",
        "converged": report.converged,
        "energy": report.energy,
        "exact_energy": cfg.exact_energy(),
        "initial_energy": energy::energy(&mesh, &f0, 0.0).value,
        "stages": stage_json(&report),
        "el_residuals": el_json(&mesh, &report.map),
        "equivariance_residual": report.map.equivariance_residual(&mesh),
        "outputs": { "map": map_path.display().to_string(), "trace": csv_path.display().to_string() },
    });
    bare(write(&map_path, &formats::write_hmap(&report.map)))?;
    bare(write(&csv_path, &trace_csv(&report)))?;
    bare(write_json(&rep_path, &body))?;
    bare(write_manifest(&cfg, "minimize", &[map_path.clone(), csv_path, rep_path]))?;
    if !report.converged {
        let last = report.stages.last().map(|s| s.grad_norm).unwrap_or(f64::NAN);
        let f = Failure::Numerical(format!("minimization did not converge (final gradient {last:.3e})"));
        let mut v = body;
        v["error"] = json!({ "kind": f.kind(), "message": f.to_string() });
        return Err((f, v));
    }
    let mut v = body;
    v["summary"] = json!([
        format!("energy {:.12} after {} stages", report.energy, report.stages.len()),
        format!("EL residuals: {}", v["el_residuals"]),
        format!("wrote {}", map_path.display()),
    ]);
    Ok(v)
}

// ---- decompose ---------------------------------------------------------------

fn complex_list(z: &[C64]) -> Vec<[f64; 2]> {
    z.iter().map(|z| [z.re, z.im]).collect()
}

fn basis_for(mesh: &SurfaceMesh) -> Result<QDBasis, (Failure, Value)> {
    bare(codazzi::qd_basis(mesh))
}

fn decompose(cli: &Cli, margs: &MeshArgs, field: &Path) -> Outcome {
    let cfg = bare(resolve(cli, Some(margs), None, None))?;
    let (mesh, _) = bare(load_mesh(margs, &cfg))?;
    let phi = bare(formats::read_hfield(&bare(formats::read_file(field))?))?;
    if phi.len() != mesh.num_vertices() {
        return Err(fail(Failure::Inconsistent(format!("field has {} records, mesh has {} vertices", phi.len(), mesh.num_vertices()))));
    }
    let basis = basis_for(&mesh)?;
    let d = bare(codazzi::decompose(&mesh, &basis, &phi))?;
    let path = out_path(&cfg, "decomposition.json");
    let body = json!({
        "command": "decompose",
        "q": d.q,
        "qprime": d.qprime,
        "projection_residual": d.projection_residual,
        "reassembly_error": d.reassembly_error,
        "u": complex_list(&d.u),
    });
    bare(write_json(&path, &body))?;
    bare(write_manifest(&cfg, "decompose", std::slice::from_ref(&path)))?;
    let mut v = body;
    v["summary"] = json!([
        format!("q = {:?}", d.q),
        format!("q′ = {:?}", d.qprime),
        format!("projection residual {:.3e}, reassembly error {:.3e}", d.projection_residual, d.reassembly_error),
        format!("wrote {}", path.display()),
    ]);
    Ok(v)
}

// ---- reconstruct -------------------------------------------------------------

fn coefficients(d: &DatumArgs, dim: usize) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let take = |v: &Option<Vec<f64>>, name: &str| -> Result<Vec<f64>, Failure> {
        match v {
            None => Ok(vec![0.0; dim]),
            Some(v) if v.len() == dim => Ok(v.clone()),
            Some(v) => Err(Failure::Usage(format!("--{name} has {} entries, the basis has dimension {dim}", v.len()))),
        }
    };
    Ok((take(&d.q_coeffs, "q-coeffs")?, take(&d.qprime_coeffs, "qprime-coeffs")?))
}

fn newton_opts(cfg: &RunConfig) -> NewtonOptions {
    NewtonOptions { tol: cfg.newton_tol, max_iter: cfg.newton_max_iter }
}

fn rep_json(rep: &Representation) -> Value {
    serde_json::to_value(RepresentationDoc::from_rep(rep)).expect("document serializes")
}

fn reconstruct_cmd(
    cli: &Cli,
    margs: &MeshArgs,
    datum: &DatumArgs,
    field: Option<&Path>,
    out_rep: Option<&Path>,
    probe: bool,
    probe_step: f64,
) -> Outcome {
    let cfg = bare(resolve(cli, Some(margs), None, Some(datum)))?;
    if !(probe_step > 0.0) {
        return Err(fail(Failure::Usage("--probe-step must be positive".into())));
    }
    let (mesh, _) = bare(load_mesh(margs, &cfg))?;
    let mut outputs = Vec::new();
    let mut basis = None;
    let mut coeffs = None;
    let mut newton = Value::Null;
    let phi: Vec<CMat2> = match field {
        Some(p) => {
            let phi = bare(formats::read_hfield(&bare(formats::read_file(p))?))?;
            if phi.len() != mesh.num_vertices() {
                return Err(fail(Failure::Inconsistent(format!("field has {} records, mesh has {} vertices", phi.len(), mesh.num_vertices()))));
            }
            phi
        }
        None => {
            let b = basis_for(&mesh)?;
            let (q, qp) = bare(coefficients(datum, b.dim()))?;
            let d = bare(codazzi::newton_det_continuation(&mesh, &b, &q, &qp, newton_opts(&cfg)))?;
            newton = json!({
                "iterations": d.iterations,
                "det_residual": d.det_residual,
                "codazzi_residual": d.codazzi_residual,
                "positivity_margin": d.positivity_margin,
                "history": d.history,
            });
            let path = out_path(&cfg, "phi.hfield");
            bare(write(&path, &formats::write_hfield(&d.phi)))?;
            outputs.push(path);
            basis = Some(b);
            coeffs = Some((q, qp));
            d.phi
        }
    };
    let r = bare(reconstruct::reconstruct(&mesh, &phi))?;
    let rep_path = out_rep.map(Path::to_path_buf).unwrap_or_else(|| out_path(&cfg, "representation.json"));
    bare(write_json(&rep_path, &RepresentationDoc::from_rep(&r.monodromy.rep)))?;
    let map_path = out_path(&cfg, "developed.hmap");
    bare(write(&map_path, &formats::write_hmap(&r.map)))?;
    outputs.push(rep_path.clone());
    outputs.push(map_path.clone());
    let fc = reconstruct::fc_value(&mesh, &phi);
    let mut body = json!({
        "command": "reconstruct",
        "newton": newton,
        "fc": [fc.re, fc.im],
        "max_loop_defect": r.development.max_loop_defect,
        "max_defect_density": r.development.max_defect_density,
        "frame_lorentz_defect": r.development.frames.lorentz_defect(),
        "side_residual": r.monodromy.side_residual,
        "relation_residual_fitted": r.monodromy.fitted.relation_residual,
        "relation_residual": r.monodromy.rep.relation_residual,
        "preserves_h2": r.monodromy.rep.preserves_h2(1e-6),
        "representation": rep_json(&r.monodromy.rep),
    });
    if probe {
        let b = match basis {
            Some(b) => b,
            None => basis_for(&mesh)?,
        };
        // The probe needs a point of 𝒟 given by coefficients; with --field
        // it is taken from the decomposition of φ.
        let (q, qp) = match coeffs {
            Some(c) => c,
            None => {
                let d = bare(codazzi::decompose(&mesh, &b, &phi))?;
                (d.q, d.qprime)
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut dq: Vec<f64> = (0..b.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut dqp: Vec<f64> = (0..b.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = dq.iter().chain(&dqp).map(|x| x * x).sum::<f64>().sqrt();
        dq.iter_mut().chain(dqp.iter_mut()).for_each(|x| *x /= n);
        let mut probes = Vec::new();
        for step in [probe_step, probe_step / 2.0] {
            let p = bare(reconstruct::clinearity_probe(&mesh, &b, &q, &qp, &dq, &dqp, step, newton_opts(&cfg)))?;
            probes.push(json!({ "step": p.step, "defect": p.defect, "delta_norm": p.delta_norm, "idelta_norm": p.idelta_norm }));
        }
        body["clinearity"] = json!({ "direction": { "q": dq, "qprime": dqp }, "probes": probes });
    }
    let report_path = out_path(&cfg, "reconstruct.json");
    bare(write_json(&report_path, &body))?;
    outputs.push(report_path);
    bare(write_manifest(&cfg, "reconstruct", &outputs))?;
    let mut summary = vec![
        format!("side residual {:.3e}, loop defect density {:.3e}", r.monodromy.side_residual, r.development.max_defect_density),
        format!("relation residual {:.3e} (fitted {:.3e})", r.monodromy.rep.relation_residual, r.monodromy.fitted.relation_residual),
        format!("F_C(φ) = {:.10} {:+.3e} i", fc.re, fc.im),
    ];
    if let Some(p) = body.get("clinearity") {
        for probe in p["probes"].as_array().into_iter().flatten() {
            summary.push(format!("C-linearity defect {:.3e} at step {}", probe["defect"].as_f64().unwrap_or(f64::NAN), probe["step"]));
        }
    }
    summary.push(format!("wrote {}", rep_path.display()));
    body["summary"] = json!(summary);
    Ok(body)
}

// ---- roundtrip ---------------------------------------------------------------

fn roundtrip(cli: &Cli, margs: &MeshArgs, datum: &DatumArgs, min: &MinimizeArgs, corrupt: f64) -> Outcome {
    let cfg = bare(resolve(cli, Some(margs), Some(min), Some(datum)))?;
    if !cfg.exact_energy() {
        return Err(fail(Failure::Usage("the round trip minimizes the exact energy: the eps schedule must end at 0".into())));
    }
    if !(corrupt > 0.0) {
        return Err(fail(Failure::Usage("--corrupt-gauss must be positive".into())));
    }
    let (mesh, _) = bare(load_mesh(margs, &cfg))?;
    let basis = basis_for(&mesh)?;
    let (q, qp) = bare(coefficients(datum, basis.dim()))?;
    let opts = MinimizeOptions { schedule: cfg.eps_schedule.clone(), max_iters: cfg.max_iters, tol: cfg.tol };
    let result = if corrupt == 1.0 {
        reconstruct::round_trip(&mesh, &basis, &q, &qp, newton_opts(&cfg), &opts)
    } else {
        corrupted_round_trip(&mesh, &basis, &q, &qp, newton_opts(&cfg), &opts, corrupt)
    };
    let report_path = out_path(&cfg, "roundtrip.json");
    match result {
        Ok(rt) => {
            let map_path = out_path(&cfg, "minimizer.hmap");
            let rep_path = out_path(&cfg, "representation.json");
            let body = json!({
                "command": "roundtrip",
                "q": q,
                "qprime": qp,
                "phi_error": rt.phi_error,
                "energy_gap": rt.energy_gap,
                "fc": [rt.fc.re, rt.fc.im],
                "minimized_energy": rt.minimized.energy,
                "minimize_converged": rt.minimized.converged,
                "newton_iterations": rt.datum.iterations,
                "det_residual": rt.datum.det_residual,
                "side_residual": rt.reconstruction.monodromy.side_residual,
                "max_defect_density": rt.reconstruction.development.max_defect_density,
                "relation_residual": rt.reconstruction.monodromy.rep.relation_residual,
                "decomposition": {
                    "q": rt.decomposition.q,
                    "qprime": rt.decomposition.qprime,
                    "projection_residual": rt.decomposition.projection_residual,
                },
                "stages": stage_json(&rt.minimized),
            });
            bare(write(&map_path, &formats::write_hmap(&rt.minimized.map)))?;
            bare(write_json(&rep_path, &RepresentationDoc::from_rep(&rt.reconstruction.monodromy.rep)))?;
            bare(write_json(&report_path, &body))?;
            bare(write_manifest(&cfg, "roundtrip", &[report_path.clone(), map_path, rep_path]))?;
            let mut v = body;
            v["summary"] = json!([
                format!("‖φ′ − φ‖/‖φ‖ = {:.4e}", rt.phi_error),
                format!("Re F_C(φ) = {:.10}, minimized F = {:.10}, relative gap {:.3e}", rt.fc.re, rt.minimized.energy, rt.energy_gap),
                format!("wrote {}", report_path.display()),
            ]);
            Ok(v)
        }
        Err(e) => {
            let f = Failure::from(e.error.clone());
            let body = json!({
                "command": "roundtrip",
                "error": { "stage": e.stage, "kind": f.kind(), "message": e.error.to_string() },
            });
            bare(write_json(&report_path, &body))?;
            bare(write_manifest(&cfg, "roundtrip", &[report_path]))?;
            Err((Failure::from(e.error), body))
        }
    }
}

/// The round trip with Re φ scaled after the Newton solve, so that the
/// development sees data violating the Gauss equation.
fn corrupted_round_trip(
    mesh: &SurfaceMesh,
    basis: &QDBasis,
    q: &[f64],
    qp: &[f64],
    newton: NewtonOptions,
    min: &MinimizeOptions,
    scale: f64,
) -> Result<reconstruct::RoundTrip, reconstruct::StageError> {
    let mut d = codazzi::newton_det_continuation(mesh, basis, q, qp, newton)
        .map_err(|error| reconstruct::StageError { stage: "newton", error })?;
    for p in d.phi.iter_mut() {
        p.iter_mut().for_each(|z| z.re *= scale);
    }
    reconstruct::round_trip_from(mesh, basis, d, min)
}

// ---- verify ------------------------------------------------------------------

fn verify(cli: &Cli, names: &[String], level: Option<usize>) -> Outcome {
    let cfg = bare(resolve(cli, None, None, None))?;
    let sc = SuiteConfig { seed: cfg.seed, level: level.unwrap_or(SuiteConfig::default().level) };
    if sc.level == 0 || sc.level > 5 {
        return Err(fail(Failure::Usage(format!("suite level {} out of range 1..=5", sc.level))));
    }
    let selected: Vec<&str> = if names.is_empty() {
        suites::SUITES.to_vec()
    } else {
        let mut v = Vec::new();
        for n in names {
            match suites::SUITES.iter().find(|s| **s == n.as_str()) {
                Some(s) => v.push(*s),
                None => {
                    return Err(fail(Failure::Usage(format!("unknown suite {n:?}; known: {}", suites::SUITES.join(", ")))));
                }
            }
        }
        v
    };
    let reports: Vec<_> = selected.iter().filter_map(|s| suites::run_suite(s, &sc)).collect();
    let passed = reports.iter().all(|r| r.passed || !r.gating);
    let summary: Vec<String> = reports.iter().map(|r| r.summary_line()).collect();
    let body = json!({
        "format": "hyperimm-verify-report",
        "version": 1,
        "seed": sc.seed,
        "level": sc.level,
        "passed": passed,
        "suites": reports,
    });
    let path = out_path(&cfg, "verify.json");
    bare(write_json(&path, &body))?;
    bare(write_manifest(&cfg, "verify", &[path]))?;
    let mut v = body;
    v["summary"] = json!(summary);
    Ok(v)
}
