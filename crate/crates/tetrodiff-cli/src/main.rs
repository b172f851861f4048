//! Command-line driver: mesh generation/optimization and the three PDE
//! solvers, with CSV/VTK outputs for external plotting.

mod config;

use std::f64::consts::PI;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tetrodiff::builder::build_initial_mesh;
use tetrodiff::delaunay::{improve_pass, ImproveConfig};
use tetrodiff::domain::{DomainSpec, Shape};
use tetrodiff::geometry::{Mesh, Point3};
use tetrodiff::io;
use tetrodiff::metropolis::{global_anneal, total_energy, MetropolisConfig};
use tetrodiff::oracle;
use tetrodiff::pde;
use tetrodiff::refine::{refine_to_element_count, target_volume_for_edge, RefineConfig};

use config::ConfigFile;

#[derive(Parser)]
#[command(name = "tetrodiff", about = "Metropolis-optimized tetrahedral meshes and FEM solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, refine and optionally optimize a mesh
    Mesh(MeshArgs),
    /// Solve a PDE on an existing mesh
    Solve(SolveArgs),
}

#[derive(Args)]
struct MeshArgs {
    /// Optional key=value config file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// cube | cylinder | sphere | cone
    #[arg(long)]
    shape: Option<String>,
    /// Cube side / cylinder / cone height; accepts "pi" or a number
    #[arg(long)]
    extent: Option<String>,
    /// Radius for cylinder, sphere, cone base
    #[arg(long)]
    radius: Option<f64>,
    /// Target edge length h0
    #[arg(long)]
    h0: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    ring_nodes: Option<usize>,
    /// Run the Metropolis annealing stage
    #[arg(long)]
    optimize: bool,
    /// Run Delaunay flip improvement after optimization
    #[arg(long)]
    delaunay: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Independent annealing starts; the best result is kept
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    anneal_steps: Option<usize>,
    #[arg(long)]
    cooling: Option<f64>,
    /// Starting temperature; omit to estimate it from a trial sweep.
    /// Tiny values (1e-10) give pure greedy descent, often the best choice
    #[arg(long)]
    t_max: Option<f64>,
    /// Output mesh path (TETMESH v1)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional VTK export path
    #[arg(long)]
    vtk: Option<PathBuf>,
    /// Prefix for the L/h0 and V/V0 histogram CSVs
    #[arg(long)]
    hist_prefix: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    /// laplace | diffusion | pnp
    problem: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Dirichlet plane spec like "x=pi:1", repeatable
    #[arg(long = "bc-plane")]
    bc_plane: Vec<String>,
    /// Value for all boundary nodes not covered by a plane spec
    #[arg(long = "bc-rest")]
    bc_rest: Option<f64>,
    /// Oracle comparison: cube-series | point-charge | cube-poly
    #[arg(long)]
    oracle: Option<String>,
    /// Charge location for the point-charge oracle, e.g. "0,0,2pi"
    #[arg(long)]
    charge: Option<String>,
    #[arg(long)]
    phi0: Option<f64>,
    /// Diffusion/PNP coefficient D (both species for pnp)
    #[arg(long)]
    d: Option<f64>,
    /// Drift multiplier k (both species)
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Final time; rounded to a whole number of steps
    #[arg(long)]
    tend: Option<f64>,
    /// Initial condition for diffusion: poly | const:<g> | mode | cylinder-abs
    #[arg(long)]
    ic: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output prefix for CSV files
    #[arg(long)]
    out: Option<String>,
    /// Use the source derivation's Jacobian instead of the chain-rule form
    #[arg(long)]
    block_diagonal_jacobian: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Mesh(args) => cmd_mesh(args),
        Command::Solve(args) => cmd_solve(args),
    }
}

fn parse_extent(s: &str) -> Result<f64> {
    let t = s.trim();
    if t == "pi" {
        return Ok(PI);
    }
    if let Some(mult) = t.strip_suffix("pi") {
        return Ok(mult.parse::<f64>().with_context(|| format!("bad extent {s:?}"))? * PI);
    }
    t.parse().with_context(|| format!("bad extent {s:?}"))
}

fn thread_cap() -> usize {
    std::env::var("TETRODIFF_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

fn cmd_mesh(args: MeshArgs) -> Result<()> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    // flag typos in the file should be reported as such, not surface as a
    // "missing required flag" complaint
    cfg.reject_unknown(&[
        "shape", "extent", "radius", "h0", "seed", "starts", "optimize", "delaunay", "out",
        "layers", "ring_nodes", "sweeps", "anneal_steps", "cooling", "t_max", "vtk",
        "hist_prefix",
    ])?;
    let shape_name = args
        .shape
        .clone()
        .or_else(|| cfg.get_str("shape"))
        .unwrap_or_else(|| "cube".to_string());
    let extent = parse_extent(
        &args.extent.clone().or_else(|| cfg.get_str("extent")).unwrap_or_else(|| "pi".to_string()),
    )?;
    let radius = args.radius.or(cfg.get_f64("radius")?).unwrap_or(1.0);
    let h0 = args
        .h0
        .or(cfg.get_f64("h0")?)
        .ok_or_else(|| anyhow!("--h0 is required"))?;
    let seed = args.seed.or(cfg.get_u64("seed")?).unwrap_or(0);
    let starts = args.starts.or(cfg.get_usize("starts")?).unwrap_or(1).max(1);
    let optimize = args.optimize || cfg.get_bool("optimize")?;
    let delaunay = args.delaunay || cfg.get_bool("delaunay")?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.get_str("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("mesh.tm"));

    let shape = match shape_name.as_str() {
        "cube" => Shape::Cube { x: (0.0, extent), y: (0.0, extent), z: (0.0, extent) },
        "cylinder" => Shape::Cylinder { radius, z: (0.0, extent) },
        "sphere" => Shape::Sphere { radius, center: Point3::new(0.0, 0.0, 0.0) },
        "cone" => Shape::Cone { base_radius: radius, z: (0.0, extent) },
        other => bail!("unknown shape {other:?}"),
    };
    let layers = args
        .layers
        .or(cfg.get_usize("layers")?)
        .unwrap_or_else(|| ((extent / (2.0 * h0)).round() as usize).clamp(2, 6));
    let ring_nodes = args
        .ring_nodes
        .or(cfg.get_usize("ring_nodes")?)
        .unwrap_or_else(|| ((2.0 * PI * radius / (2.0 * h0)).round() as usize).clamp(3, 12));
    let spec = DomainSpec::new(shape, layers, ring_nodes);

    let v0 = target_volume_for_edge(h0);
    println!("h0 = {h0}, V0 = {v0:.5}");

    let mut mesh = build_initial_mesh(&spec)?;
    let refine_cfg = RefineConfig::from_edge_length(h0, 10_000_000);
    // stop at the element count matching V0 so the mean volume is on target;
    // bisection halves volumes, so running to saturation would leave the mean
    // near V0/2 and no node shuffle could pull the energy down afterwards
    let target_elems = (spec.exact_volume() / v0).round() as usize;
    let report = refine_to_element_count(&mut mesh, &refine_cfg, &spec, target_elems)?;
    println!(
        "refined: {} divisions, {} nodes, {} elements",
        report.divisions,
        mesh.node_count(),
        mesh.element_count()
    );

    if optimize {
        let energy_before = total_energy(&mesh, v0);
        let base = MetropolisConfig {
            target_edge: h0,
            target_volume: v0,
            local_sweeps: args.sweeps.or(cfg.get_usize("sweeps")?).unwrap_or(3),
            global_steps: args.anneal_steps.or(cfg.get_usize("anneal_steps")?).unwrap_or(60),
            cooling: args.cooling.or(cfg.get_f64("cooling")?).unwrap_or(0.8),
            t_max: args.t_max.or(cfg.get_f64("t_max")?),
            rng_seed: seed,
            ..MetropolisConfig::default()
        };
        let (best_mesh, best_report, best_start) =
            anneal_multi_start(&mesh, &spec, &base, starts)?;
        mesh = best_mesh;
        println!(
            "annealed: E {energy_before:.5} -> {:.5} (start {best_start}, {} accepted)",
            best_report.final_energy, best_report.accepted
        );
        if let Some(prefix) = hist_prefix(&args, &cfg) {
            let path = PathBuf::from(format!("{prefix}_energy_trace.csv"));
            io::write_energy_trace_csv(&best_report.trace, seed, &path)?;
        }
    }

    if delaunay {
        let flip_cfg = ImproveConfig { min_volume: refine_cfg.critical_volume / 8.0, ..Default::default() };
        let rep = improve_pass(&mut mesh, &flip_cfg);
        println!(
            "delaunay: {} 3->2 flips, {} 4->4 flips, {} slivers removed",
            rep.flips_3to2, rep.flips_4to4, rep.slivers_removed
        );
    }

    io::write_mesh(&mesh, &out)?;
    println!("wrote {}", out.display());
    let vtk = args.vtk.clone().or_else(|| cfg.get_str("vtk").map(PathBuf::from));
    if let Some(vtk) = vtk {
        io::write_vtk(&mesh, "tetrodiff mesh", &[], &vtk)?;
        println!("wrote {}", vtk.display());
    }
    if let Some(prefix) = hist_prefix(&args, &cfg) {
        let lh = io::histogram(&io::edge_length_samples(&mesh, h0), 0.0, 3.0, 50);
        let vh = io::histogram(&io::volume_samples(&mesh, v0), 0.0, 3.0, 50);
        let lp = PathBuf::from(format!("{prefix}_edge_hist.csv"));
        let vp = PathBuf::from(format!("{prefix}_volume_hist.csv"));
        io::write_histogram_csv(&lh, "L/h0", seed, &lp)?;
        io::write_histogram_csv(&vh, "V/V0", seed, &vp)?;
        println!("wrote {} and {}", lp.display(), vp.display());
    }
    Ok(())
}

fn hist_prefix(args: &MeshArgs, cfg: &ConfigFile) -> Option<String> {
    args.hist_prefix.clone().or_else(|| cfg.get_str("hist_prefix"))
}

/// Run `starts` independent annealing runs (sub-seeded from the base seed)
/// and keep the lowest final energy; ties break on the start index so the
/// outcome does not depend on thread scheduling. TETRODIFF_THREADS caps the
/// number of worker threads.
fn anneal_multi_start(
    mesh: &Mesh,
    spec: &DomainSpec,
    base: &MetropolisConfig,
    starts: usize,
) -> Result<(Mesh, tetrodiff::metropolis::EnergyReport, usize)> {
    let cap = thread_cap();
    let mut results: Vec<Option<(Mesh, tetrodiff::metropolis::EnergyReport)>> =
        (0..starts).map(|_| None).collect();
    let indices: Vec<usize> = (0..starts).collect();
    for chunk in indices.chunks(cap.max(1)) {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for &i in chunk {
                let mut cfg = base.clone();
                cfg.rng_seed = base.rng_seed.wrapping_add(i as u64);
                let mut m = mesh.clone();
                let spec = &*spec;
                handles.push((i, scope.spawn(move || {
                    let report = global_anneal(&mut m, spec, &cfg);
                    (m, report)
                })));
            }
            for (i, h) in handles {
                results[i] = Some(h.join().expect("annealing worker panicked"));
            }
        });
    }
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let (m, rep) = r.expect("missing annealing result");
            (m, rep, i)
        })
        .min_by(|a, b| {
            a.1.final_energy
                .partial_cmp(&b.1.final_energy)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.2.cmp(&b.2))
        })
        .ok_or_else(|| anyhow!("no annealing starts requested"))
}

/// Parse "x=pi:1" into (axis, plane coordinate, boundary value).
fn parse_bc_plane(s: &str) -> Result<(usize, f64, f64)> {
    let (lhs, value) = s
        .rsplit_once(':')
        .ok_or_else(|| anyhow!("bad bc spec {s:?}, expected axis=coord:value"))?;
    let (axis, coord) = lhs
        .split_once('=')
        .ok_or_else(|| anyhow!("bad bc spec {s:?}, expected axis=coord:value"))?;
    let axis = match axis.trim() {
        "x" => 0,
        "y" => 1,
        "z" => 2,
        other => bail!("bad axis {other:?} in bc spec {s:?}"),
    };
    Ok((axis, parse_extent(coord)?, value.trim().parse()?))
}

/// Boundary values from plane specs plus an optional rest value. Errors if
/// any boundary node stays uncovered.
fn resolve_bc(
    mesh: &Mesh,
    planes: &[String],
    rest: Option<f64>,
) -> Result<Vec<(usize, f64)>> {
    let parsed: Vec<(usize, f64, f64)> =
        planes.iter().map(|s| parse_bc_plane(s)).collect::<Result<_>>()?;
    let tol = 1e-9 * mesh.bounding_box_diagonal().max(1.0);
    let mut bc = Vec::new();
    let mut uncovered = Vec::new();
    for (i, node) in mesh.nodes.iter().enumerate() {
        if !node.class.is_outer() {
            continue;
        }
        let p = node.position;
        let hit = parsed
            .iter()
            .find(|(axis, coord, _)| (p.coords[*axis] - coord).abs() <= tol);
        match (hit, rest) {
            (Some((_, _, v)), _) => bc.push((i, *v)),
            (None, Some(v)) => bc.push((i, v)),
            (None, None) => uncovered.push(i),
        }
    }
    if !uncovered.is_empty() {
        bail!(
            "boundary nodes without a value (give --bc-rest or more planes): {:?}{}",
            &uncovered[..uncovered.len().min(10)],
            if uncovered.len() > 10 { " ..." } else { "" }
        );
    }
    Ok(bc)
}

fn parse_point(s: &str) -> Result<Point3> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        bail!("bad point {s:?}, expected x,y,z");
    }
    Ok(Point3::new(
        parse_extent(parts[0])?,
        parse_extent(parts[1])?,
        parse_extent(parts[2])?,
    ))
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    cfg.reject_unknown(&[
        "mesh", "bc_rest", "oracle", "charge", "phi0", "d", "k", "dt", "beta", "steps", "tend",
        "ic", "seed", "out",
    ])?;
    let mesh_path = args
        .mesh
        .clone()
        .or_else(|| cfg.get_str("mesh").map(PathBuf::from))
        .ok_or_else(|| anyhow!("--mesh is required"))?;
    let mesh = io::read_mesh(&mesh_path)?;
    let seed = args.seed.or(cfg.get_u64("seed")?).unwrap_or(0);
    let out = args
        .out
        .clone()
        .or_else(|| cfg.get_str("out"))
        .unwrap_or_else(|| "solve".to_string());

    match args.problem.as_str() {
        "laplace" => cmd_solve_laplace(&args, &cfg, &mesh, seed, &out),
        "diffusion" => cmd_solve_diffusion(&args, &cfg, &mesh, seed, &out),
        "pnp" => cmd_solve_pnp(&args, &cfg, &mesh, seed, &out),
        other => bail!("unknown problem {other:?}, expected laplace | diffusion | pnp"),
    }
}

fn cmd_solve_laplace(
    args: &SolveArgs,
    cfg: &ConfigFile,
    mesh: &Mesh,
    seed: u64,
    out: &str,
) -> Result<()> {
    let bc_rest = args.bc_rest.or(cfg.get_f64("bc_rest")?);
    let oracle_kind = args.oracle.clone().or_else(|| cfg.get_str("oracle"));
    let charge = match args.charge.clone().or_else(|| cfg.get_str("charge")) {
        Some(s) => Some(parse_point(&s)?),
        None => None,
    };

    // point-charge runs take their boundary data from the oracle itself
    let bc: Vec<(usize, f64)> = if oracle_kind.as_deref() == Some("point-charge") {
        let charge = charge.ok_or_else(|| anyhow!("--charge required for point-charge"))?;
        mesh.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.class.is_outer())
            .map(|(i, n)| Ok((i, oracle::point_charge_oracle(n.position, charge)?)))
            .collect::<Result<_>>()?
    } else {
        resolve_bc(mesh, &args.bc_plane, bc_rest)?
    };

    let phi = pde::solve_laplace(mesh, &bc)?;
    let field_path = PathBuf::from(format!("{out}_phi.csv"));
    io::write_field_csv(mesh, None, None, Some(&phi.values), seed, &field_path)?;
    println!("wrote {}", field_path.display());

    if let Some(kind) = oracle_kind {
        let phi0 = args.phi0.or(cfg.get_f64("phi0")?).unwrap_or(1.0);
        let interior: Vec<usize> = (0..mesh.nodes.len())
            .filter(|&i| !mesh.nodes[i].class.is_outer())
            .collect();
        let anal: Vec<f64> = match kind.as_str() {
            "cube-series" => interior
                .iter()
                .map(|&i| {
                    oracle::laplace_cube_oracle(
                        mesh.nodes[i].position,
                        phi0,
                        &oracle::SeriesConfig::default(),
                    )
                })
                .collect(),
            "point-charge" => {
                let charge = charge.ok_or_else(|| anyhow!("--charge required"))?;
                interior
                    .iter()
                    .map(|&i| oracle::point_charge_oracle(mesh.nodes[i].position, charge))
                    .collect::<tetrodiff::Result<_>>()?
            }
            other => bail!("unknown oracle {other:?} for laplace"),
        };
        let num: Vec<f64> = interior.iter().map(|&i| phi.values[i]).collect();
        let rep = oracle::relative_difference(&num, &anal)?;
        write_difference_csv(&interior, &rep, seed, &PathBuf::from(format!("{out}_diff.csv")))?;
        println!(
            "oracle {kind}: mean = {:.4}, std = {:.4} over {} interior nodes",
            rep.mean,
            rep.std,
            interior.len()
        );
    }
    Ok(())
}

fn write_difference_csv(
    nodes: &[usize],
    rep: &oracle::DifferenceReport,
    seed: u64,
    path: &PathBuf,
) -> Result<()> {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "# seed = {seed}");
    let _ = writeln!(s, "# mean = {}, std = {}", rep.mean, rep.std);
    let _ = writeln!(s, "node,relative_difference");
    for (n, d) in nodes.iter().zip(&rep.per_node) {
        let _ = writeln!(s, "{n},{d}");
    }
    std::fs::write(path, s)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_solve_diffusion(
    args: &SolveArgs,
    cfg: &ConfigFile,
    mesh: &Mesh,
    seed: u64,
    out: &str,
) -> Result<()> {
    let d = args.d.or(cfg.get_f64("d")?).unwrap_or(1.0);
    let dt = args.dt.or(cfg.get_f64("dt")?).unwrap_or(0.01);
    let beta = args.beta.or(cfg.get_f64("beta")?).unwrap_or(1.0);
    let n_steps = resolve_steps(args, cfg, dt)?;
    let scheme = pde::TimeScheme { dt, beta, n_steps };
    let bc = resolve_bc(mesh, &args.bc_plane, args.bc_rest.or(cfg.get_f64("bc_rest")?).or(Some(0.0)))?;

    let ic_name = args.ic.clone().or_else(|| cfg.get_str("ic")).unwrap_or_else(|| "poly".into());
    let g: Vec<f64> = match ic_name.as_str() {
        "poly" => mesh
            .nodes
            .iter()
            .map(|n| {
                let p = n.position;
                p.x * (PI - p.x) * p.y * (PI - p.y) * p.z * (PI - p.z)
            })
            .collect(),
        "mode" => mesh
            .nodes
            .iter()
            .map(|n| n.position.x.sin() * n.position.y.sin() * n.position.z.sin())
            .collect(),
        "cylinder-abs" => {
            let r0 = mesh
                .nodes
                .iter()
                .map(|n| n.position.x.hypot(n.position.y))
                .fold(0.0f64, f64::max);
            mesh.nodes
                .iter()
                .map(|n| {
                    let r = n.position.x.hypot(n.position.y);
                    ((r - r0) * n.position.z * (n.position.z - PI)).abs()
                })
                .collect()
        }
        other => {
            let g0: f64 = other
                .strip_prefix("const:")
                .ok_or_else(|| anyhow!("unknown ic {other:?}"))?
                .parse()?;
            vec![g0; mesh.nodes.len()]
        }
    };

    let traj = pde::solve_diffusion(&g, mesh, d, &scheme, &bc)?;
    let last = traj.last().unwrap();
    let path = PathBuf::from(format!("{out}_u_final.csv"));
    io::write_field_csv(mesh, Some(&last.values), None, None, seed, &path)?;
    println!("t = {}: wrote {}", last.time, path.display());

    if let Some(kind) = args.oracle.clone().or_else(|| cfg.get_str("oracle")) {
        if kind != "cube-poly" {
            bail!("unknown oracle {kind:?} for diffusion");
        }
        let interior: Vec<usize> = (0..mesh.nodes.len())
            .filter(|&i| !mesh.nodes[i].class.is_outer())
            .collect();
        let series_cfg = oracle::SeriesConfig { max_index: 41, tail_tol: 1e-12 };
        let anal: Vec<f64> = interior
            .iter()
            .map(|&i| {
                oracle::diffusion_cube_poly_oracle(mesh.nodes[i].position, last.time, d, &series_cfg)
            })
            .collect();
        let num: Vec<f64> = interior.iter().map(|&i| last.values[i]).collect();
        let rep = oracle::relative_difference(&num, &anal)?;
        write_difference_csv(&interior, &rep, seed, &PathBuf::from(format!("{out}_diff.csv")))?;
        println!("oracle {kind}: mean = {:.4}, std = {:.4}", rep.mean, rep.std);
    }
    Ok(())
}

fn resolve_steps(args: &SolveArgs, cfg: &ConfigFile, dt: f64) -> Result<usize> {
    if let Some(steps) = args.steps.or(cfg.get_usize("steps")?) {
        return Ok(steps);
    }
    if let Some(tend) = args.tend.or(cfg.get_f64("tend")?) {
        return Ok((tend / dt).round() as usize);
    }
    Ok(1)
}

fn cmd_solve_pnp(
    args: &SolveArgs,
    cfg: &ConfigFile,
    mesh: &Mesh,
    seed: u64,
    out: &str,
) -> Result<()> {
    let d = args.d.or(cfg.get_f64("d")?).unwrap_or(0.05);
    let k = args.k.or(cfg.get_f64("k")?).unwrap_or(0.05);
    let dt = args.dt.or(cfg.get_f64("dt")?).unwrap_or(0.01);
    let n_steps = resolve_steps(args, cfg, dt)?;
    let scheme = pde::TimeScheme { dt, beta: 1.0, n_steps };
    let params = pde::PhysicalParams::symmetric(d, k);
    let shared = resolve_bc(mesh, &args.bc_plane, args.bc_rest.or(cfg.get_f64("bc_rest")?))?;
    let bc = pde::PnpBc { n_plus: shared.clone(), n_minus: shared.clone(), phi: shared };
    let opts = pde::NewtonOptions {
        block_diagonal_jacobian: args.block_diagonal_jacobian,
        ..Default::default()
    };

    // interior starts from zero, boundary from its forced values
    let mut initial = pde::FieldState::uniform(mesh.nodes.len(), 0.0);
    for &(node, value) in &bc.n_plus {
        initial.n_plus[node] = value;
        initial.n_minus[node] = value;
    }
    let traj = pde::solve_electrodiffusion(&initial, mesh, &params, &scheme, &bc, &opts)?;
    let last = traj.last().unwrap();
    let path = PathBuf::from(format!("{out}_fields.csv"));
    io::write_field_csv(mesh, Some(&last.n_plus), Some(&last.n_minus), Some(&last.phi), seed, &path)?;
    println!("t = {}: wrote {}", last.time, path.display());

    let flux = pde::compute_flux(last, mesh, &params, pde::Species::Plus)?;
    let flux_path = PathBuf::from(format!("{out}_flux.csv"));
    io::write_flux_csv(mesh, &flux, seed, &flux_path)?;
    println!("wrote {}", flux_path.display());

    let max_excess = last
        .n_plus
        .iter()
        .zip(&last.n_minus)
        .fold(0.0f64, |a, (p, m)| a.max((p - m).abs()));
    println!("max |n+ - n-| = {max_excess:.3e}");
    let mut prev_delta = f64::INFINITY;
    for w in traj.windows(2) {
        let delta = w[0]
            .n_plus
            .iter()
            .zip(&w[1].n_plus)
            .fold(0.0f64, |a, (x, y)| a.max((y - x).abs()));
        println!("step {}: max |n+_i+1 - n+_i| = {delta:.4}", w[1].step_index);
        prev_delta = delta;
    }
    let _ = prev_delta;
    Ok(())
}
