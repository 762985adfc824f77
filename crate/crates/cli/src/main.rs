//! Command-line front end.
//!
//! ```text
//! isotherm solve       --config run.toml [--out DIR] [--levels N]
//! isotherm optimize    --config run.toml [--out DIR] [--levels N]
//! isotherm gradcheck   --config run.toml [--epsilon X] [--levels N]
//! isotherm convergence --config run.toml [--out DIR] [--levels N]
//! isotherm reconstruct --config run.toml [--density CSV] [--voxel A] [--out DIR]
//! ```
//!
//! Exit status: 0 ok, 1 runtime failure, 2 configuration error, 3 gradient
//! check above tolerance.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isotherm::config::RunConfig;
use isotherm::io;
use isotherm::optimizer::gradient_audit;
use isotherm::problem::DesignProblem;
use isotherm::reconstruct::{marching_squares, reconstruct_and_trim, Reconstruction};
use isotherm::study;
use isotherm::Error;

const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "isotherm", version, about = "Isogeometric topology optimization of thermal meta-structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solution refinement level; for `convergence`, the finest level.
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve at the initial design and export fields.
    Solve(Common),
    /// Optimize the design.
    Optimize(Common),
    /// Compare adjoint gradients with central differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
    },
    /// Optimize at increasing refinement and report density errors.
    Convergence(Common),
    /// Rebuild a gyroid lattice from a density CSV.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Density CSV; overrides `reconstruct.density`.
        #[arg(long)]
        density: Option<PathBuf>,
        /// Voxel side in mm; overrides `reconstruct.voxel`.
        #[arg(long)]
        voxel: Option<f64>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    Gradient(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load(c: &Common) -> std::result::Result<(RunConfig, PathBuf), Failure> {
    let text = fs::read_to_string(&c.config)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", c.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(l) = c.levels {
        if l > 8 {
            return Err(Failure::Config(format!("--levels {l} exceeds the supported 8")));
        }
        cfg.mesh.level = l;
        cfg.mesh.max_level = l;
        if cfg.mesh.min_level >= l {
            cfg.mesh.min_level = l.saturating_sub(1);
        }
    }
    let out = c.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn write(dir: &Path, name: &str, contents: &str) -> std::result::Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display())))
}

fn print_terms(terms: &[(String, f64)]) {
    for (n, v) in terms {
        println!("{n} = {v}");
    }
}

/// Field export and density CSV of one design.
fn export(cfg: &RunConfig, p: &DesignProblem, coeffs: &[f64], t: &[f64], out: &Path) -> Outcome {
    let density = io::density_csv(&p.field, coeffs)?;
    let vtk = if cfg.output.vtk {
        let s = io::sample_fields(&p.model, &p.field, &p.materials, coeffs, t, &p.scenarios[0].refs.t_bar)?;
        Some(io::vtk_string(&s))
    } else {
        None
    };
    write(out, "density.csv", &density)?;
    if let Some(v) = vtk {
        write(out, "fields.vtk", &v)?;
    }
    Ok(())
}

fn solve(c: &Common) -> Outcome {
    let (cfg, out) = load(c)?;
    let p = cfg.build_problem()?;
    let x = cfg.initial_point(&p)?;
    println!("level {}: {} dofs, {} design variables", cfg.mesh.level, p.disc.n_dofs, p.n_vars());
    let st = p.solve(&x)?;
    match p.evaluate_with(&x, false) {
        Ok((ev, _)) => print_terms(&ev.terms),
        Err(Error::Objective(m)) => println!("{} undefined: {m}", p.objective.kind.name()),
        Err(e) => return Err(e.into()),
    }
    export(&cfg, &p, &st.coeffs, &st.states[0].t, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn optimize(c: &Common) -> Outcome {
    let (cfg, out) = load(c)?;
    let p = cfg.build_problem()?;
    println!("level {}: {} dofs, {} design variables", cfg.mesh.level, p.disc.n_dofs, p.n_vars());
    let r = study::optimize(&cfg, &p)?;
    let st = p.solve(&r.x)?;
    println!("stop: {}", r.stop.as_str());
    println!("iterations: {}", r.record.iterations.last().map_or(0, |i| i.iteration));
    println!("primal solves: {}", r.record.total_solves());
    println!("J = {}", r.evaluation.value);
    print_terms(&r.evaluation.terms);
    write(&out, "run.csv", &io::run_csv(&r.record))?;
    export(&cfg, &p, &st.coeffs, &st.states[0].t, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn gradcheck(c: &Common, eps: f64) -> Outcome {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Failure::Config(format!("--epsilon must be positive, got {eps}")));
    }
    let (cfg, _) = load(c)?;
    let p = cfg.build_problem()?;
    let x = cfg.initial_point(&p)?;
    let r = gradient_audit(&p, &x, eps)?;
    println!("{}: {:e}", p.objective.kind.name(), r.objective);
    for (n, d) in &r.constraints {
        println!("{n}: {d:e}");
    }
    let worst = r.max_discrepancy();
    println!("max discrepancy: {worst:e}");
    if worst > GRADCHECK_TOL {
        return Err(Failure::Gradient(format!("discrepancy {worst:e} exceeds {GRADCHECK_TOL:e}")));
    }
    Ok(())
}

fn convergence(c: &Common) -> Outcome {
    let (cfg, out) = load(c)?;
    let s = study::convergence(&cfg, cfg.mesh.min_level..=cfg.mesh.max_level)?;
    let table = s.table();
    print!("{table}");
    println!("monotone: {}", if s.is_monotone() { "yes" } else { "no" });
    println!("2% threshold: {}", study::ACCEPTABLE_ERROR);
    write(&out, "convergence.tsv", &table)?;
    Ok(())
}

fn reconstruct(c: &Common, density: Option<PathBuf>, voxel: Option<f64>) -> Outcome {
    let (cfg, out) = load(c)?;
    let path = density
        .or_else(|| cfg.reconstruct.density.clone())
        .ok_or_else(|| Failure::Config("no density CSV given (--density or reconstruct.density)".into()))?;
    let a = voxel.unwrap_or(cfg.reconstruct.voxel);
    let table = io::read_density_csv(&path)?;
    let base = cfg.base_model()?;
    let field = cfg.density_field(&base)?;
    io::check_basis(&field, &table)?;
    let field = field.with_values(&table.values)?;
    let rec = reconstruct_and_trim(&field, a, cfg.reconstruct.resolution)?;
    let contours = marching_squares(&rec, &rec.trimmed);
    let stages = [("mask.pgm", &rec.mask), ("tessellation.pgm", &rec.tessellation), ("trimmed.pgm", &rec.trimmed)];
    let mut files = Vec::new();
    for (name, r) in stages {
        files.push((name, io::pgm_string(&Reconstruction::to_gray(r))?));
    }
    files.push(("contours.csv", io::contours_csv(&contours)));
    let mut voxels = String::from("i,j,x,y,density,t\n");
    for j in 0..rec.voxels {
        for i in 0..rec.voxels {
            let k = j * rec.voxels + i;
            if rec.occupied[k] {
                let x = rec.origin[0] + (i as f64 + 0.5) * a;
                let y = rec.origin[1] + (j as f64 + 0.5) * a;
                voxels.push_str(&format!("{i},{j},{x:?},{y:?},{:?},{:?}\n", rec.density[k], rec.wall[k]));
            }
        }
    }
    files.push(("voxels.csv", voxels));
    for (name, body) in &files {
        write(&out, name, body)?;
    }
    println!(
        "{}x{} voxels of {a} mm, {} contours, material fraction {:.4}",
        rec.voxels,
        rec.voxels,
        contours.len(),
        rec.fill_fraction()
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(c) => solve(c),
        Command::Optimize(c) => optimize(c),
        Command::Gradcheck { common, epsilon } => gradcheck(common, *epsilon),
        Command::Convergence(c) => convergence(c),
        Command::Reconstruct { common, density, voxel } => reconstruct(common, density.clone(), *voxel),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Gradient(m)) => {
            eprintln!("gradient check failed: {m}");
            ExitCode::from(3)
        }
    }
}
