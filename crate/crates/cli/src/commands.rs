//! Subcommand implementations: build the problem from the configuration and
//! export CSV/VTK artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rpbfem::adapt::{afem_loop, MarkingConfig, StopCriteria};
use rpbfem::assembly::{assemble_load, assemble_stiffness, check_a1, p1_gradients};
use rpbfem::estimator::estimate;
use rpbfem::geometry::{
    ChargeSystem, DielectricModel, DomainBox, InterfaceGeometry, Point, check_sigma,
};
use rpbfem::mesh::{
    build_cube_5tet_grid, build_cube_6tet_grid, build_square_grid, uniform_refine, Mesh,
};
use rpbfem::solver::{
    solve_rpbe, solve_semilinear, zero_dirichlet_map, NewtonStep, SolutionBundle, SolveConfig,
};
use rpbfem::vtk::{write_vtk, VtkData};
use rpbfem::{Error, QuadratureRule, Result};

use crate::config::RunConfig;

pub struct Options {
    pub verbose: bool,
    pub fast: bool,
}

pub struct Problem {
    pub mesh: Mesh,
    pub dm: DielectricModel,
    pub cs: ChargeSystem,
    pub interface: InterfaceGeometry,
    pub kappa: f64,
}

fn build_grid(grid: &str, n: usize, bx: &DomainBox) -> Result<Mesh> {
    match grid {
        "square" => build_square_grid(n, bx),
        "cube5" => build_cube_5tet_grid(n, bx),
        "cube6" => build_cube_6tet_grid(n, bx),
        other => Err(Error::Config(format!("unknown grid kind {other:?}"))),
    }
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let bx = cfg.domain()?;
    let mut mesh = build_grid(&cfg.grid, cfg.mesh_n, &bx)?;
    let interface = cfg.interface_geometry()?.ok_or_else(|| {
        Error::Config("this command needs an interface (circle/sphere or file)".into())
    })?;
    let span = (0..cfg.dimension)
        .map(|k| cfg.domain_upper[k] - cfg.domain_lower[k])
        .fold(0.0f64, f64::max);
    let h = span / cfg.mesh_n as f64;
    mesh.snap_to_interface(&interface, 0.3 * h);
    mesh.assign_regions(&interface);
    let cs = cfg.charges()?;
    check_sigma(&cs, &interface)?;
    let dm = DielectricModel::new(cfg.eps_m, cfg.eps_s, cfg.kappa)?;
    Ok(Problem {
        mesh,
        dm,
        cs,
        interface,
        kappa: cfg.kappa,
    })
}

pub fn solve_config(cfg: &RunConfig, opts: &Options) -> SolveConfig {
    let mut sc = SolveConfig {
        residual_tol: cfg.residual_tol,
        max_newton: cfg.max_newton,
        linear_tol: cfg.linear_tol,
        ..SolveConfig::default()
    };
    if opts.fast {
        // trade accuracy for speed: coarser quadrature, looser linear solves
        sc.quad_degree = 2;
        sc.linear_tol = sc.linear_tol.max(1e-8);
    }
    sc
}

fn out_dir(cfg: &RunConfig, opts_out: &Option<std::path::PathBuf>) -> Result<std::path::PathBuf> {
    let dir = opts_out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_trace(path: &Path, trace: &[NewtonStep]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iteration,residual,step,energy")?;
    for s in trace {
        writeln!(w, "{},{:.17e},{:.17e},{:.17e}", s.iter, s.residual, s.step_norm, s.energy)?;
    }
    Ok(())
}

fn write_solution_vtk(path: &Path, mesh: &Mesh, u: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let data = VtkData {
        u: Some(u),
        ..VtkData::default()
    };
    write_vtk(&mut w, mesh, &data)
}

fn print_trace(bundle: &SolutionBundle) {
    for s in &bundle.trace {
        println!(
            "  newton {:>3}  residual {:.6e}  step {:.6e}  damping {:.3}  energy {:.12e}",
            s.iter, s.residual, s.step_norm, s.damping, s.energy
        );
    }
}

pub fn cmd_verify_grid(
    cfg: &RunConfig,
    grid_flag: Option<&str>,
    n_flag: Option<usize>,
) -> Result<bool> {
    let grid = grid_flag.unwrap_or(&cfg.grid);
    let n = n_flag.unwrap_or(cfg.mesh_n);
    let dim = if grid == "square" { 2 } else { 3 };
    let bx = if cfg.dimension == dim {
        cfg.domain()?
    } else {
        DomainBox::unit(dim)
    };
    let mesh = build_grid(grid, n, &bx)?;
    let dm = DielectricModel::new(cfg.eps_m, cfg.eps_s.max(cfg.eps_m), cfg.kappa)?;
    let a = assemble_stiffness(&mesh, &dm)?;
    let rep = check_a1(&a, &mesh, 0.0);
    let pass = rep.passes(dim);
    println!(
        "grid {grid} n={n}: {} (sign condition {}, rho_min {:.6e}, max positive off-diagonal {:.3e}, {} zero pairs)",
        if pass { "pass" } else { "fail" },
        if rep.m_matrix_pass { "ok" } else { "violated" },
        rep.rho_min,
        rep.max_positive_offdiag,
        rep.zero_pairs.len()
    );
    Ok(pass)
}

pub fn cmd_solve(
    cfg: &RunConfig,
    opts: &Options,
    out: &Option<std::path::PathBuf>,
) -> Result<()> {
    let p = build_problem(cfg)?;
    let sc = solve_config(cfg, opts);
    let bundle = solve_rpbe(&p.mesh, &p.dm, &p.cs, p.kappa, &sc)?;
    let dir = out_dir(cfg, out)?;
    write_solution_vtk(&dir.join("solution.vtk"), &p.mesh, &bundle.u)?;
    write_trace(&dir.join("newton_trace.csv"), &bundle.trace)?;
    if opts.verbose {
        print_trace(&bundle);
    }
    println!(
        "solve: {} vertices, {} Newton iterations, residual {:.3e}, energy {:.12e}",
        p.mesh.n_vertices(),
        bundle.trace.len(),
        bundle.residual,
        bundle.energy
    );
    Ok(())
}

pub fn cmd_adapt(cfg: &RunConfig, opts: &Options, out: &Option<std::path::PathBuf>) -> Result<()> {
    let p = build_problem(cfg)?;
    let sc = solve_config(cfg, opts);
    let mc = MarkingConfig {
        theta1: cfg.theta1,
        theta2: cfg.theta2,
        switch_constant: cfg.switch_constant,
        depth: cfg.depth,
    };
    mc.validate()?;
    let stop = StopCriteria {
        max_iterations: cfg.max_iterations,
        max_dofs: cfg.max_dofs,
        eta_tol: cfg.eta_tol,
    };
    let res = afem_loop(p.mesh, &p.dm, &p.cs, &p.interface, p.kappa, &sc, &mc, &stop)?;
    let dir = out_dir(cfg, out)?;
    let mut w = BufWriter::new(File::create(dir.join("history.csv"))?);
    res.history.write_csv(&mut w)?;
    drop(w);
    let quad = sc.quadrature(cfg.dimension)?;
    for (k, s) in res.snapshots.iter().enumerate() {
        let est = estimate(&s.mesh, &p.dm, &p.cs, &s.u, &quad)?;
        let mut f = BufWriter::new(File::create(dir.join(format!("iter_{k:03}.vtk")))?);
        let data = VtkData {
            u: Some(&s.u),
            eta_sq: Some(&est.eta_sq),
            osc_sq: Some(&est.osc_sq),
        };
        write_vtk(&mut f, &s.mesh, &data)?;
    }
    let last = res.history.records.last().expect("history is never empty");
    if opts.verbose {
        for r in &res.history.records {
            println!(
                "  k {:>2}  dofs {:>7}  eta^2 {:.6e}  osc^2 {:.6e}  energy {:.12e}",
                r.k, r.dofs, r.eta_sq, r.osc_sq, r.energy
            );
        }
    }
    println!(
        "adapt: {} iterations, final dofs {}, eta^2 {:.6e}, energy {:.12e}",
        res.history.records.len(),
        last.dofs,
        last.eta_sq,
        last.energy
    );
    Ok(())
}

pub fn cmd_convergence_study(
    cfg: &RunConfig,
    opts: &Options,
    out: &Option<std::path::PathBuf>,
) -> Result<()> {
    let dim = cfg.dimension;
    let pi = std::f64::consts::PI;
    let exact = move |x: Point| -> f64 {
        let mut v = (pi * x[0]).sin() * (pi * x[1]).sin();
        if dim == 3 {
            v *= (pi * x[2]).sin();
        }
        v
    };
    let rhs = move |x: Point| dim as f64 * pi * pi * exact(x) + exact(x).sinh();
    let sc = solve_config(cfg, opts);
    let cs = ChargeSystem::empty(1.0);
    let dm = DielectricModel {
        eps_m: 1.0,
        eps_s: 1.0,
        kappa_bar_sq_s: 1.0,
    };
    let bx = DomainBox::unit(dim);
    let dir = out_dir(cfg, out)?;
    let mut w = BufWriter::new(File::create(dir.join("convergence.csv"))?);
    writeln!(w, "h,dofs,h1_error,order")?;
    println!("{:>12} {:>9} {:>14} {:>8}", "h", "dofs", "H1 error", "order");
    let mut prev: Option<(f64, f64)> = None;
    for level in 0..cfg.levels {
        let n = cfg.mesh_n << level;
        let mesh = build_grid(&cfg.grid, n, &bx)?;
        let quad = sc.quadrature(dim)?;
        let load = assemble_load(&mesh, &rhs, &quad)?;
        let lin: Vec<f64> = load.iter().map(|v| -v).collect();
        let dofs_map = zero_dirichlet_map(&mesh)?;
        let bundle = solve_semilinear(&mesh, &dm, &cs, &dofs_map, None, &lin, &quad, &sc)?;
        let err = h1_error(&mesh, &bundle.u, dim, &exact)?;
        let h = 1.0 / n as f64;
        let dofs = mesh.boundary_vertex.iter().filter(|&&b| !b).count();
        let order = prev
            .map(|(hp, ep)| (ep / err).ln() / (hp / h).ln())
            .unwrap_or(f64::NAN);
        writeln!(w, "{h:.17e},{dofs},{err:.17e},{order:.6}")?;
        println!("{h:>12.6} {dofs:>9} {err:>14.6e} {order:>8.3}");
        prev = Some((h, err));
    }
    Ok(())
}

fn h1_error(mesh: &Mesh, u: &[f64], dim: usize, exact: &dyn Fn(Point) -> f64) -> Result<f64> {
    let pi = std::f64::consts::PI;
    let quad = QuadratureRule::simplex(dim, if dim == 2 { 5 } else { 3 })?;
    let ref_vol = quad.reference_volume();
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        let (grads, vol) = p1_gradients(mesh, e)?;
        let verts = mesh.element_vertices(e);
        let mut gu = [0.0; 3];
        for (i, &v) in verts.iter().enumerate() {
            for k in 0..3 {
                gu[k] += u[v] * grads[i][k];
            }
        }
        for (lambda, &w) in quad.points.iter().zip(&quad.weights) {
            let mut x = [0.0; 3];
            let mut uv = 0.0;
            for (&v, &l) in verts.iter().zip(lambda) {
                for k in 0..3 {
                    x[k] += l * mesh.vertices[v][k];
                }
                uv += l * u[v];
            }
            let scale = w * vol / ref_vol;
            let mut grad_sq = 0.0;
            for k in 0..dim {
                let mut ge = pi * (pi * x[k]).cos();
                for j in 0..dim {
                    if j != k {
                        ge *= (pi * x[j]).sin();
                    }
                }
                grad_sq += (gu[k] - ge) * (gu[k] - ge);
            }
            total += scale * (grad_sq + (uv - exact(x)) * (uv - exact(x)));
        }
    }
    Ok(total.sqrt())
}

pub fn cmd_reference_solve(
    cfg: &RunConfig,
    opts: &Options,
    out: &Option<std::path::PathBuf>,
) -> Result<()> {
    let p = build_problem(cfg)?;
    let mut mesh = p.mesh;
    for _ in 0..cfg.refinements {
        mesh = uniform_refine(&mesh)?;
    }
    let sc = solve_config(cfg, opts);
    let bundle = solve_rpbe(&mesh, &p.dm, &p.cs, p.kappa, &sc)?;
    let dir = out_dir(cfg, out)?;
    write_solution_vtk(&dir.join("reference.vtk"), &mesh, &bundle.u)?;
    let mut w = BufWriter::new(File::create(dir.join("reference.csv"))?);
    writeln!(w, "dofs,residual,energy")?;
    let dofs = mesh.boundary_vertex.iter().filter(|&&b| !b).count();
    writeln!(w, "{dofs},{:.17e},{:.17e}", bundle.residual, bundle.energy)?;
    if opts.verbose {
        print_trace(&bundle);
    }
    println!(
        "reference-solve: {} uniform refinements, {} dofs, energy {:.12e}",
        cfg.refinements, dofs, bundle.energy
    );
    Ok(())
}
