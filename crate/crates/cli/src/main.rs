//! `hofem` batch front end.

mod manifest;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hofem::demo_solver::{compare_coarsening, diagnostics_csv, CaseConfig, KernelChoice};
use hofem::eigenanalysis::{optimize_kernel, spatial_esa, temporal_esa, EigenSpectrum, KernelFile, ModeLabel, OptimizeConfig};
use hofem::geometry::read_geometry;
use hofem::mesh::{read_mesh, write_mesh};
use hofem::projection_curving::{exclusion_report_json, project_mesh, CurvingConfig, PatchSet};
use hofem::svv::{power_law_kernel, SvvKernel};
use hofem::variational_curving::{optimize, EnergyFunctional, EnergyKind, OptimizerConfig};
use serde_json::json;

use manifest::{file_digest, Outputs};

/// Reflection ratio above which the coarsening demo is flagged.
const REFLECTION_THRESHOLD: f64 = 0.1;

#[derive(Debug, Parser)]
#[command(name = "hofem", version, about = "High-order mesh curving and SVV analysis tools")]
struct Cli {
    /// Directory receiving every output file.
    #[arg(long, global = true, env = "HOFEM_OUT_DIR", default_value = "hofem-out")]
    out_dir: PathBuf,
    /// Overrides the seed of randomised steps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    #[command(subcommand)]
    Mesh(MeshCommand),
    /// Dispersion and diffusion eigenanalysis of CG with SVV.
    Esa(EsaArgs),
    #[command(subcommand)]
    Demo(DemoCommand),
    #[command(subcommand)]
    Svv(SvvCommand),
}

#[derive(Debug, Subcommand)]
enum MeshCommand {
    /// Project a linear mesh onto its geometry, then untangle the interior.
    Curve(CurveArgs),
    /// Report element validity and the scaled Jacobian distribution.
    Check(CheckArgs),
}

#[derive(Debug, Subcommand)]
enum DemoCommand {
    /// Paired SVV / no-SVV runs of the mesh-coarsening reflection case.
    Coarsening {
        /// Case configuration (JSON).
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum SvvCommand {
    /// Fit an SVV kernel to the upwind DG diffusion curve.
    Kernel(KernelArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Functional {
    LinearElasticity,
    Hyperelastic,
    Winslow,
    Distortion,
}

impl From<Functional> for EnergyKind {
    fn from(f: Functional) -> Self {
        match f {
            Functional::LinearElasticity => EnergyKind::LinearElasticity,
            Functional::Hyperelastic => EnergyKind::Hyperelastic,
            Functional::Winslow => EnergyKind::Winslow,
            Functional::Distortion => EnergyKind::Distortion,
        }
    }
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[arg(long)]
    geometry: PathBuf,
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, short = 'p')]
    order: usize,
    #[arg(long, value_enum, default_value = "winslow")]
    functional: Functional,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
    /// Largest snap displacement relative to the mean incident edge length.
    #[arg(long, default_value_t = 0.1)]
    max_rel_disp: f64,
    /// Auxiliary triangulation chord tolerance relative to the patch diagonal.
    #[arg(long, default_value_t = 1e-3)]
    chord_tol: f64,
}

#[derive(Debug, Args)]
struct CheckArgs {
    mesh: PathBuf,
    /// Histogram buckets over [0, 1]; negative values get their own bucket.
    #[arg(long, default_value_t = 10)]
    buckets: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq)]
enum EsaMode {
    Temporal,
    Spatial,
}

#[derive(Debug, Args)]
struct EsaArgs {
    #[arg(long, value_enum)]
    mode: EsaMode,
    #[arg(long, short = 'p')]
    order: usize,
    /// `none`, `unit`, `dg`, `power:<exponent>` or a kernel JSON file.
    #[arg(long, default_value = "none")]
    kernel: String,
    #[arg(long, default_value_t = 1.0)]
    pe_star: f64,
    /// Number of sweep samples.
    #[arg(long, default_value_t = 201)]
    samples: usize,
    /// Sweep start (kappa h or omega h / a).
    #[arg(long, default_value_t = 0.0)]
    from: f64,
    /// Sweep end; defaults to `pi P`.
    #[arg(long)]
    to: Option<f64>,
}

#[derive(Debug, Args)]
struct KernelArgs {
    #[arg(long, short = 'p')]
    order: usize,
    /// Required reflected-mode damping; negative disables the constraint.
    #[arg(long)]
    c_min: Option<f64>,
    #[arg(long)]
    max_evaluations: Option<usize>,
}

/// Error carrying the process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }

    fn quality(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            kind: "quality",
            message: message.into(),
        }
    }
}

impl From<hofem::Error> for Failure {
    fn from(e: hofem::Error) -> Self {
        use hofem::Error as E;
        let (code, kind) = match &e {
            E::Parse { .. } => (2, "parse"),
            E::InvalidArgument(_) => (2, "invalid_argument"),
            E::Io(_) => (2, "io"),
            E::UnassignedNodes { .. } => (1, "unassigned_nodes"),
            E::Infeasible { .. } => (1, "infeasible"),
            E::Divergence { .. } => (1, "divergence"),
            _ => (1, "numerical"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let report = json!({"error": f.kind, "message": f.message, "exit_code": f.code});
            eprintln!("{report}");
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let started = Instant::now();
    match &cli.command {
        Command::Mesh(MeshCommand::Curve(a)) => mesh_curve(cli, a, started),
        Command::Mesh(MeshCommand::Check(a)) => mesh_check(cli, a, started),
        Command::Esa(a) => esa(cli, a, started),
        Command::Demo(DemoCommand::Coarsening { config }) => demo_coarsening(cli, config, started),
        Command::Svv(SvvCommand::Kernel(a)) => svv_kernel(cli, a, started),
    }
}

fn input_digest(path: &Path) -> Result<String, Failure> {
    file_digest(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn mesh_curve(cli: &Cli, a: &CurveArgs, started: Instant) -> Result<u8, Failure> {
    if a.order < 1 {
        return Err(Failure::usage("order must be at least 1"));
    }
    let patches = read_geometry(&a.geometry)?;
    let linear = read_mesh(&a.mesh)?;
    let config = json!({
        "geometry": input_digest(&a.geometry)?,
        "mesh": input_digest(&a.mesh)?,
        "order": a.order,
        "functional": format!("{:?}", a.functional),
        "eps": a.eps,
        "max_sweeps": a.max_sweeps,
        "max_rel_disp": a.max_rel_disp,
        "chord_tol": a.chord_tol,
    });
    let mut out = Outputs::new(&cli.out_dir, "mesh curve", &config, &[&a.geometry, &a.mesh])?;

    if a.order == 1 && linear.order() == Some(1) {
        // Nothing to curve: the linear mesh is the answer.
        out.write_with("curved.mesh.json", |p| write_mesh(p, &linear))?;
        let invalid = linear.invalid_element_count()?;
        let summary = json!({"converged": true, "invalid_count": invalid, "sweeps": 0, "excluded": 0});
        out.write_text("summary.json", &format!("{summary:#}\n"))?;
        out.finish(started)?;
        println!("{summary}");
        return Ok(u8::from(invalid > 0));
    }

    let set = PatchSet::new(patches, a.chord_tol)?;
    let cfg = CurvingConfig {
        max_rel_disp: a.max_rel_disp,
        chord_tol_rel: a.chord_tol,
        ..CurvingConfig::default()
    };
    let projected = project_mesh(&linear, &set, a.order, &cfg)?;
    out.write_text("exclusions.json", &(exclusion_report_json(&projected.exclusions) + "\n"))?;
    let mut mesh = projected.mesh;
    let report = optimize(
        &mut mesh,
        EnergyFunctional::new(a.functional.into()),
        &OptimizerConfig {
            eps: a.eps,
            max_sweeps: a.max_sweeps,
            ..OptimizerConfig::default()
        },
    )?;
    out.write_text("convergence.csv", &report.to_csv())?;
    out.write_with("curved.mesh.json", |p| write_mesh(p, &mesh))?;
    let invalid = mesh.invalid_element_count()?;
    let summary = json!({
        "converged": report.converged,
        "invalid_count": invalid,
        "initial_invalid": report.initial_invalid,
        "sweeps": report.sweeps.len(),
        "excluded": projected.exclusions.len(),
        "curved_edges": projected.curve.curved,
        "demoted_edges": projected.curve.demoted.len(),
    });
    out.write_text("summary.json", &format!("{summary:#}\n"))?;
    out.finish(started)?;
    println!("{summary}");
    if !report.converged {
        return Err(Failure::quality(format!("optimiser did not converge in {} sweeps", a.max_sweeps)));
    }
    Ok(u8::from(invalid > 0))
}

fn mesh_check(cli: &Cli, a: &CheckArgs, started: Instant) -> Result<u8, Failure> {
    if a.buckets == 0 {
        return Err(Failure::usage("--buckets must be positive"));
    }
    let mesh = read_mesh(&a.mesh)?;
    let validity = mesh.element_validity()?;
    let mut counts = vec![0usize; a.buckets];
    let mut negative = 0usize;
    let mut invalid = Vec::new();
    for (e, v) in validity.iter().enumerate() {
        if !v.is_valid {
            invalid.push(e);
        }
        let s = v.scaled_jacobian;
        if s < 0.0 {
            negative += 1;
        } else {
            let k = ((s * a.buckets as f64) as usize).min(a.buckets - 1);
            counts[k] += 1;
        }
    }
    let min = validity.iter().map(|v| v.scaled_jacobian).fold(f64::INFINITY, f64::min);
    let mut buckets = vec![json!({"lo": null, "hi": 0.0, "count": negative})];
    for (k, c) in counts.iter().enumerate() {
        buckets.push(json!({
            "lo": k as f64 / a.buckets as f64,
            "hi": (k + 1) as f64 / a.buckets as f64,
            "count": c,
        }));
    }
    let summary = json!({
        "elements": validity.len(),
        "invalid": invalid,
        "min_scaled_jacobian": if min.is_finite() { json!(min) } else { json!(null) },
        "histogram": buckets,
    });
    let config = json!({"mesh": input_digest(&a.mesh)?, "buckets": a.buckets});
    let mut out = Outputs::new(&cli.out_dir, "mesh check", &config, &[&a.mesh])?;
    out.write_text("check.json", &format!("{summary:#}\n"))?;
    out.finish(started)?;
    println!("{summary:#}");
    Ok(u8::from(!invalid.is_empty()))
}

fn parse_kernel(spec: &str, order: usize) -> Result<(Option<SvvKernel>, serde_json::Value), Failure> {
    let kernel = match spec {
        "none" => return Ok((None, json!("none"))),
        "unit" => SvvKernel::unit(order)?,
        "dg" => hofem::svv::dg_kernel(order)?,
        s if s.starts_with("power:") => {
            let e: f64 = s["power:".len()..]
                .parse()
                .map_err(|_| Failure::usage(format!("bad power-law exponent in '{s}'")))?;
            power_law_kernel(order, e)?
        }
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Failure::usage(format!(
                    "kernel '{path}' is neither none, unit, dg, power:<e> nor an existing file"
                )));
            }
            let k = KernelFile::read(p)?.kernel()?;
            if k.order != order {
                return Err(Failure::usage(format!("kernel file has order {}, expected {order}", k.order)));
            }
            return Ok((Some(k), json!({"file": input_digest(p)?})));
        }
    };
    Ok((Some(kernel), json!(spec)))
}

fn esa(cli: &Cli, a: &EsaArgs, started: Instant) -> Result<u8, Failure> {
    if a.order < 1 || a.samples == 0 {
        return Err(Failure::usage("order and sample count must be positive"));
    }
    let (kernel, kernel_cfg) = parse_kernel(&a.kernel, a.order)?;
    let to = a.to.unwrap_or(PI * a.order as f64);
    let xs: Vec<f64> = (0..a.samples)
        .map(|i| {
            if a.samples == 1 {
                a.from
            } else {
                a.from + (to - a.from) * i as f64 / (a.samples - 1) as f64
            }
        })
        .collect();
    let spectrum: EigenSpectrum = match a.mode {
        EsaMode::Temporal => temporal_esa(a.order, kernel.as_ref(), a.pe_star, &xs)?,
        EsaMode::Spatial => spatial_esa(a.order, kernel.as_ref(), a.pe_star, &xs)?,
    };
    let mode = format!("{:?}", a.mode).to_lowercase();
    let config = json!({
        "mode": mode,
        "order": a.order,
        "kernel": kernel_cfg,
        "pe_star": a.pe_star,
        "samples": a.samples,
        "from": a.from,
        "to": to,
    });
    let inputs: Vec<&Path> = if Path::new(&a.kernel).exists() { vec![Path::new(&a.kernel)] } else { vec![] };
    let mut out = Outputs::new(&cli.out_dir, "esa", &config, &inputs)?;
    let mut files = Vec::new();
    for label in [ModeLabel::Physical, ModeLabel::Unphysical, ModeLabel::SpuriousSecondary] {
        if spectrum.family(label).is_empty() {
            continue;
        }
        let name = format!("{mode}_{}.csv", label.as_str());
        out.write_text(&name, &spectrum.to_csv(label))?;
        files.push(name);
    }
    let flagged = spectrum.samples.iter().filter(|s| s.flagged).count();
    let summary = json!({
        "mode": mode,
        "order": a.order,
        "samples": a.samples,
        "modes_per_sample": spectrum.samples.first().map_or(0, |s| s.values.len()),
        "flagged_samples": flagged,
        "files": files,
    });
    out.write_text("summary.json", &format!("{summary:#}\n"))?;
    out.finish(started)?;
    println!("{summary}");
    Ok(0)
}

fn demo_coarsening(cli: &Cli, config_path: &Path, started: Instant) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", config_path.display())))?;
    let mut cfg: CaseConfig = serde_json::from_str(&text).map_err(|e| {
        Failure::from(hofem::Error::Parse {
            context: format!("{}:{}:{}", config_path.display(), e.line(), e.column()),
            message: e.to_string(),
        })
    })?;
    if let Some(seed) = cli.seed {
        cfg.inflow.seed = seed;
    }
    if cfg.kernel == KernelChoice::None {
        return Err(Failure::usage("the demo needs an SVV kernel in the configuration"));
    }
    let digest_cfg = serde_json::to_value(&cfg).expect("config serialises");
    let mut out = Outputs::new(&cli.out_dir, "demo coarsening", &digest_cfg, &[config_path])?;
    let cmp = compare_coarsening(&cfg)?;
    out.write_text("diagnostics_svv.csv", &diagnostics_csv(&cmp.svv.state.diagnostics))?;
    out.write_text("diagnostics_no_svv.csv", &diagnostics_csv(&cmp.baseline.state.diagnostics))?;
    let with = hofem::demo_solver::build_case(&cfg)?;
    let without = hofem::demo_solver::build_case(&CaseConfig {
        kernel: KernelChoice::None,
        ..cfg.clone()
    })?;
    let snap = |case: &hofem::demo_solver::DiscreteCase, state| {
        serde_json::to_string(&case.snapshot(state)).expect("snapshot serialises") + "\n"
    };
    out.write_text("snapshot_svv.json", &snap(&with, &cmp.svv.state))?;
    out.write_text("snapshot_no_svv.json", &snap(&without, &cmp.baseline.state))?;
    let summary = json!({
        "interface": cmp.interface,
        "no_interface": cmp.interface.is_none(),
        "window": [cmp.window.0, cmp.window.1],
        "reflection_svv": cmp.svv_mean,
        "reflection_no_svv": cmp.baseline_mean,
        "reflection_ratio": if cmp.ratio.is_finite() { json!(cmp.ratio) } else { json!(null) },
        "threshold": REFLECTION_THRESHOLD,
        "within_threshold": cmp.interface.map(|_| cmp.ratio <= REFLECTION_THRESHOLD),
        "svv_diverged_at": cmp.svv.diverged_at,
        "no_svv_diverged_at": cmp.baseline.diverged_at,
        "warnings": with.warnings,
    });
    out.write_text("summary.json", &format!("{summary:#}\n"))?;
    out.finish(started)?;
    println!("{summary}");
    if let Some(t) = cmp.svv.diverged_at {
        return Err(Failure {
            code: 1,
            kind: "divergence",
            message: format!("SVV run diverged at t = {t}"),
        });
    }
    Ok(0)
}

fn svv_kernel(cli: &Cli, a: &KernelArgs, started: Instant) -> Result<u8, Failure> {
    let mut cfg = OptimizeConfig::new(a.order);
    if let Some(c) = a.c_min {
        cfg.c_min = (c >= 0.0).then_some(c);
    }
    if let Some(n) = a.max_evaluations {
        cfg.max_evaluations = n;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let digest_cfg = serde_json::to_value(&cfg).expect("config serialises");
    let r = optimize_kernel(&cfg)?;
    let mut out = Outputs::new(&cli.out_dir, "svv kernel", &digest_cfg, &[])?;
    let file = KernelFile {
        order: a.order,
        entries: r.kernel.entries.clone(),
        provenance: r.kernel.provenance,
        generator_config: Some(hofem::eigenanalysis::GeneratorRecord {
            config: cfg,
            mismatch: r.mismatch,
            margin: r.margin,
            evaluations: r.evaluations,
        }),
    };
    out.write_with(&format!("dg_P{}.json", a.order), |p| file.write(p))?;
    let history: String = std::iter::once("evaluation,objective\n".to_string())
        .chain(r.history.iter().enumerate().map(|(i, v)| format!("{i},{v:.17e}\n")))
        .collect();
    out.write_text("history.csv", &history)?;
    let summary = json!({
        "order": a.order,
        "entries": r.kernel.entries,
        "objective": r.objective,
        "mismatch": r.mismatch,
        "margin": r.margin,
        "evaluations": r.evaluations,
    });
    out.finish(started)?;
    println!("{summary}");
    Ok(0)
}
