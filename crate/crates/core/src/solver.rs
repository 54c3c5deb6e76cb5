//! Linear solves, the damped Newton iteration minimizing the discrete
//! energy, the linear/nonlinear splitting, and the L-infinity bounds that
//! feed the discrete maximum principle check.

use crate::assembly::{
    assemble_b, assemble_b_jacobian, assemble_f_g, assemble_stiffness, cosh_energy,
    interpolate_dirichlet, quadratic_energy, DofMap,
};
use crate::error::{Error, Result};
use crate::geometry::{eval_boundary_g, eval_g, ChargeSystem, DielectricModel, Region};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;
use crate::sparse::{pcg, SparseOperator};

#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    /// Absolute tolerance on the 2-norm of the free-dof residual.
    pub residual_tol: f64,
    pub max_newton: usize,
    /// Maximum number of step halvings in the backtracking line search.
    pub max_backtracks: usize,
    /// Relative tolerance of the inner linear solver.
    pub linear_tol: f64,
    /// Quadrature degree; capped at the highest available rule per dimension.
    pub quad_degree: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-10,
            max_newton: 50,
            max_backtracks: 30,
            linear_tol: 1e-12,
            quad_degree: 4,
        }
    }
}

impl SolveConfig {
    pub fn quadrature(&self, dim: usize) -> Result<QuadratureRule> {
        let degree = if dim == 3 {
            self.quad_degree.min(3)
        } else {
            self.quad_degree.min(5)
        };
        QuadratureRule::simplex(dim, degree)
    }

    fn linear_max_iter(&self, n: usize) -> usize {
        10_000 + 10 * n
    }
}

/// One accepted Newton step.
#[derive(Debug, Clone, Copy)]
pub struct NewtonStep {
    pub iter: usize,
    /// Residual norm before the step.
    pub residual: f64,
    /// Norm of the damped update actually taken.
    pub step_norm: f64,
    /// Accepted damping factor (1 = full Newton step).
    pub damping: f64,
    /// Energy after the step.
    pub energy: f64,
}

/// A converged solve with its iteration history and, when the splitting is
/// computed, the linear and nonlinear parts.
#[derive(Debug, Clone)]
pub struct SolutionBundle {
    /// Full vertex vector of the regular solution component.
    pub u: Vec<f64>,
    pub u_l: Option<Vec<f64>>,
    pub u_n: Option<Vec<f64>>,
    pub trace: Vec<NewtonStep>,
    /// Final residual norm on the free dofs.
    pub residual: f64,
    /// Discrete energy of `u`.
    pub energy: f64,
    /// `max |u - (u_l + u_n)|` when the split is computed; reported, not
    /// asserted, since the discrete split need not recombine exactly.
    pub split_discrepancy: Option<f64>,
}

/// Bounds on the nonlinear part from the sign structure of sinh.
#[derive(Debug, Clone, Copy)]
pub struct LInftyBounds {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_prime: f64,
    pub beta_prime: f64,
    /// sup / inf of `u_l + G` over the solvent sample points.
    pub sup_solvent: f64,
    pub inf_solvent: f64,
    /// sup / inf of `g - G` over the boundary vertices.
    pub sup_boundary: f64,
    pub inf_boundary: f64,
}

/// PCG wrapper with the configured tolerance.
pub fn solve_linear(op: &SparseOperator, rhs: &[f64], cfg: &SolveConfig) -> Result<Vec<f64>> {
    pcg(op, rhs, cfg.linear_tol, cfg.linear_max_iter(op.n()))
}

/// Damped Newton on `F(u) = A u + B(u + shift) + lin = 0` over the free dofs
/// of `dofs`, with `lin` a full-vertex linear term. This is the engine behind
/// the public solve entry points; manufactured-solution studies call it with
/// their own `lin`.
#[allow(clippy::too_many_arguments)]
pub fn solve_semilinear(
    mesh: &Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    dofs: &DofMap,
    shift: Option<&[f64]>,
    lin: &[f64],
    quad: &QuadratureRule,
    cfg: &SolveConfig,
) -> Result<SolutionBundle> {
    let nv = mesh.n_vertices();
    assert_eq!(lin.len(), nv);
    let stiffness = assemble_stiffness(mesh, dm)?;
    let add_shift = |u: &[f64]| -> Vec<f64> {
        match shift {
            Some(s) => u.iter().zip(s).map(|(a, b)| a + b).collect(),
            None => u.to_vec(),
        }
    };
    let energy_of = |u: &[f64]| -> Result<f64> {
        let mut e = quadratic_energy(mesh, dm, u)? + cosh_energy(mesh, dm, cs, &add_shift(u), quad)?;
        for (ui, li) in u.iter().zip(lin) {
            e += ui * li;
        }
        Ok(e)
    };

    let mut u_free = vec![0.0; dofs.n_free()];
    let mut u_full = dofs.expand(&u_free);
    let mut energy = energy_of(&u_full)?;
    let mut trace = Vec::new();

    for iter in 0..cfg.max_newton {
        let w = add_shift(&u_full);
        let b = assemble_b(mesh, dm, cs, &w, quad)?;
        let au = stiffness.matvec(&u_full);
        let f_free: Vec<f64> = dofs
            .free
            .iter()
            .map(|&v| au[v] + b[v] + lin[v])
            .collect();
        let residual = f_free.iter().map(|r| r * r).sum::<f64>().sqrt();
        if residual <= cfg.residual_tol {
            return Ok(SolutionBundle {
                u: u_full,
                u_l: None,
                u_n: None,
                trace,
                residual,
                energy,
                split_discrepancy: None,
            });
        }

        let jac = stiffness
            .add(&assemble_b_jacobian(mesh, dm, cs, &w, quad)?)
            .restrict(&dofs.free);
        let neg_f: Vec<f64> = f_free.iter().map(|r| -r).collect();
        let d = solve_linear(&jac, &neg_f, cfg)?;
        // descent slope F . d = -d^T J d < 0
        let slope: f64 = f_free.iter().zip(&d).map(|(f, di)| f * di).sum();
        let d_norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_backtracks {
            let trial_free: Vec<f64> =
                u_free.iter().zip(&d).map(|(u, di)| u + t * di).collect();
            let trial_full = dofs.expand(&trial_free);
            match energy_of(&trial_full) {
                Ok(e_trial) => {
                    // Armijo on the energy while the predicted decrease is
                    // resolvable; once it sinks below roundoff in E, the
                    // energy cannot discriminate and acceptance switches to
                    // residual reduction (Newton is in its quadratic phase
                    // there). The two energies agree to roundoff in that
                    // regime, so the reported trace keeps the running
                    // minimum and stays nonincreasing.
                    let noise = 8.0 * f64::EPSILON * (1.0 + energy.abs());
                    let predicted = 1e-4 * t * slope;
                    let take = if predicted.abs() > noise {
                        e_trial <= energy + predicted
                    } else {
                        let tw = add_shift(&trial_full);
                        let tb = assemble_b(mesh, dm, cs, &tw, quad)?;
                        let tau = stiffness.matvec(&trial_full);
                        let tres = dofs
                            .free
                            .iter()
                            .map(|&v| {
                                let r = tau[v] + tb[v] + lin[v];
                                r * r
                            })
                            .sum::<f64>()
                            .sqrt();
                        tres <= 0.5 * residual
                    };
                    if take {
                        u_free = trial_free;
                        u_full = trial_full;
                        energy = energy.min(e_trial);
                        trace.push(NewtonStep {
                            iter,
                            residual,
                            step_norm: t * d_norm,
                            damping: t,
                            energy,
                        });
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                // overflow means the trial iterate left the representable
                // range; shorten the step
                Err(Error::Overflow { .. }) => t *= 0.5,
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            return Err(Error::LineSearchStall { iter, residual });
        }
    }

    // out of iterations; report the final residual
    let w = add_shift(&u_full);
    let b = assemble_b(mesh, dm, cs, &w, quad)?;
    let au = stiffness.matvec(&u_full);
    let residual = dofs
        .free
        .iter()
        .map(|&v| {
            let r = au[v] + b[v] + lin[v];
            r * r
        })
        .sum::<f64>()
        .sqrt();
    if residual <= cfg.residual_tol {
        Ok(SolutionBundle {
            u: u_full,
            u_l: None,
            u_n: None,
            trace,
            residual,
            energy,
            split_discrepancy: None,
        })
    } else {
        Err(Error::NewtonMaxIter {
            iters: cfg.max_newton,
            residual,
        })
    }
}

/// Solve the full discrete problem `A u + B(u) + f_G = 0` with Dirichlet
/// data `g - G`.
pub fn solve_rpbe(
    mesh: &Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    kappa: f64,
    cfg: &SolveConfig,
) -> Result<SolutionBundle> {
    let quad = cfg.quadrature(mesh.dim())?;
    let dofs = interpolate_dirichlet(mesh, cs, dm, kappa)?;
    let f_g = assemble_f_g(mesh, dm, cs, &quad)?;
    solve_semilinear(mesh, dm, cs, &dofs, None, &f_g, &quad, cfg)
}

/// Free/Dirichlet partition with homogeneous boundary data.
pub fn zero_dirichlet_map(mesh: &Mesh) -> Result<DofMap> {
    let nv = mesh.n_vertices();
    let mut free = Vec::new();
    let mut dof_of_vertex = vec![None; nv];
    let mut dirichlet = vec![None; nv];
    for v in 0..nv {
        if mesh.boundary_vertex[v] {
            dirichlet[v] = Some(0.0);
        } else {
            dof_of_vertex[v] = Some(free.len());
            free.push(v);
        }
    }
    if free.len() == nv {
        return Err(Error::Structural(
            "mesh has no boundary vertices; Dirichlet data cannot be imposed".into(),
        ));
    }
    Ok(DofMap {
        free,
        dof_of_vertex,
        dirichlet,
    })
}

/// Linear part: `A u_l + f_G = 0` with zero Dirichlet data. Identically zero
/// when `eps_s = eps_m` or the mesh is all molecular.
pub fn solve_linear_part(
    mesh: &Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    cfg: &SolveConfig,
) -> Result<Vec<f64>> {
    let quad = cfg.quadrature(mesh.dim())?;
    let dofs = zero_dirichlet_map(mesh)?;
    let f_g = assemble_f_g(mesh, dm, cs, &quad)?;
    if f_g.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; mesh.n_vertices()]);
    }
    let a = assemble_stiffness(mesh, dm)?.restrict(&dofs.free);
    let rhs: Vec<f64> = dofs.free.iter().map(|&v| -f_g[v]).collect();
    let u_free = solve_linear(&a, &rhs, cfg)?;
    Ok(dofs.expand(&u_free))
}

/// Nonlinear part: `A u_n + B(u_n + u_l) = 0` with Dirichlet data `g - G`.
pub fn solve_nonlinear_part(
    mesh: &Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    kappa: f64,
    u_l: &[f64],
    cfg: &SolveConfig,
) -> Result<SolutionBundle> {
    let quad = cfg.quadrature(mesh.dim())?;
    let dofs = interpolate_dirichlet(mesh, cs, dm, kappa)?;
    let zeros = vec![0.0; mesh.n_vertices()];
    solve_semilinear(mesh, dm, cs, &dofs, Some(u_l), &zeros, &quad, cfg)
}

/// Full solve plus the splitting, with the recombination discrepancy
/// `max |u - (u_l + u_n)|` reported.
pub fn solve_split(
    mesh: &Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    kappa: f64,
    cfg: &SolveConfig,
) -> Result<SolutionBundle> {
    let mut bundle = solve_rpbe(mesh, dm, cs, kappa, cfg)?;
    let u_l = solve_linear_part(mesh, dm, cs, cfg)?;
    let part = solve_nonlinear_part(mesh, dm, cs, kappa, &u_l, cfg)?;
    let discrepancy = bundle
        .u
        .iter()
        .zip(u_l.iter().zip(&part.u))
        .map(|(u, (l, n))| (u - (l + n)).abs())
        .fold(0.0, f64::max);
    bundle.u_l = Some(u_l);
    bundle.u_n = Some(part.u);
    bundle.split_discrepancy = Some(discrepancy);
    Ok(bundle)
}

/// Bounds `alpha <= u_n <= beta` on the nonlinear part:
/// `alpha = min(alpha', inf_boundary(g - G))`, `alpha' = -sup_solvent(u_l + G)`,
/// and symmetrically for `beta`. The solvent sup/inf is sampled at the
/// vertices and quadrature points of solvent elements.
pub fn compute_linfty_bounds(
    mesh: &Mesh,
    cs: &ChargeSystem,
    dm: &DielectricModel,
    kappa: f64,
    u_l: &[f64],
    cfg: &SolveConfig,
) -> Result<LInftyBounds> {
    let quad = cfg.quadrature(mesh.dim())?;
    let mut sup_solvent = f64::NEG_INFINITY;
    let mut inf_solvent = f64::INFINITY;
    for e in 0..mesh.n_elements() {
        if mesh.element_region[e] != Region::Solvent {
            continue;
        }
        let verts = mesh.element_vertices(e);
        for &v in verts {
            let w = u_l[v] + eval_g(cs, mesh.vertices[v], mesh.dim())?;
            sup_solvent = sup_solvent.max(w);
            inf_solvent = inf_solvent.min(w);
        }
        for lambda in &quad.points {
            let mut x = [0.0; 3];
            let mut ul_val = 0.0;
            for (&v, &l) in verts.iter().zip(lambda) {
                for k in 0..3 {
                    x[k] += l * mesh.vertices[v][k];
                }
                ul_val += l * u_l[v];
            }
            let w = ul_val + eval_g(cs, x, mesh.dim())?;
            sup_solvent = sup_solvent.max(w);
            inf_solvent = inf_solvent.min(w);
        }
    }
    let mut sup_boundary = f64::NEG_INFINITY;
    let mut inf_boundary = f64::INFINITY;
    for v in 0..mesh.n_vertices() {
        if !mesh.boundary_vertex[v] {
            continue;
        }
        let x = mesh.vertices[v];
        let bd = eval_boundary_g(cs, dm, kappa, x, mesh.dim())? - eval_g(cs, x, mesh.dim())?;
        sup_boundary = sup_boundary.max(bd);
        inf_boundary = inf_boundary.min(bd);
    }
    let alpha_prime = -sup_solvent;
    let beta_prime = -inf_solvent;
    Ok(LInftyBounds {
        alpha: alpha_prime.min(inf_boundary),
        beta: beta_prime.max(sup_boundary),
        alpha_prime,
        beta_prime,
        sup_solvent,
        inf_solvent,
        sup_boundary,
        inf_boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_load, check_a1, p1_gradients};
    use crate::fixtures::{born_fixture, BornFixture};
    use crate::geometry::{Charge, DomainBox, Point};
    use crate::mesh::{build_square_grid, uniform_refine};
    use crate::sparse::dense_solve;

    #[test]
    fn linear_solve_matches_dense_on_two_triangle_poisson() {
        let mesh = build_square_grid(4, &DomainBox::unit(2)).unwrap();
        let dm = DielectricModel::new(1.0, 1.0, 0.0).unwrap();
        let a = assemble_stiffness(&mesh, &dm).unwrap();
        let dofs = zero_dirichlet_map(&mesh).unwrap();
        let a_free = a.restrict(&dofs.free);
        let rhs: Vec<f64> = (0..dofs.n_free()).map(|i| (i as f64 * 0.37).sin()).collect();
        let cfg = SolveConfig::default();
        let x = solve_linear(&a_free, &rhs, &cfg).unwrap();
        let xd = dense_solve(&a_free.to_dense(), &rhs).unwrap();
        for (a, b) in x.iter().zip(&xd) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn pure_laplace_converges_in_one_newton_iteration() {
        // kappa_bar = 0 and eps_s = eps_m: B == 0 and f_G == 0, so the first
        // Newton step solves the problem. The boundary data uses kappa = 1
        // so it is nonzero.
        let fx = born_fixture(4);
        let dm = DielectricModel::new(2.0, 2.0, 0.0).unwrap();
        let bundle = solve_rpbe(&fx.mesh, &dm, &fx.cs, 1.0, &SolveConfig::default()).unwrap();
        assert_eq!(bundle.trace.len(), 1);
        assert_eq!(bundle.trace[0].damping, 1.0);
        assert!(bundle.residual <= 1e-10);
    }

    #[test]
    fn born_fixture_newton_budget_and_energy_trace() {
        let fx = born_fixture(8);
        let bundle = solve_rpbe(&fx.mesh, &fx.dm, &fx.cs, fx.kappa, &SolveConfig::default())
            .unwrap();
        assert!(bundle.trace.len() <= 20, "{} iterations", bundle.trace.len());
        assert!(bundle.residual <= 1e-10);
        for w in bundle.trace.windows(2) {
            assert!(w[1].energy <= w[0].energy, "energy trace increased");
        }
    }

    #[test]
    fn linear_part_zero_cases() {
        let fx = born_fixture(4);
        let cfg = SolveConfig::default();
        // eps_s = eps_m
        let dm_eq = DielectricModel::new(2.0, 2.0, fx.kappa).unwrap();
        let u = solve_linear_part(&fx.mesh, &dm_eq, &fx.cs, &cfg).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
        // all molecular
        let mut mesh = fx.mesh.clone();
        for r in mesh.element_region.iter_mut() {
            *r = Region::Molecular;
        }
        let u = solve_linear_part(&mesh, &fx.dm, &fx.cs, &cfg).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_part_residual_contract() {
        let fx = born_fixture(6);
        let cfg = SolveConfig::default();
        let u_l = solve_linear_part(&fx.mesh, &fx.dm, &fx.cs, &cfg).unwrap();
        let quad = cfg.quadrature(2).unwrap();
        let a = assemble_stiffness(&fx.mesh, &fx.dm).unwrap();
        let f_g = assemble_f_g(&fx.mesh, &fx.dm, &fx.cs, &quad).unwrap();
        let au = a.matvec(&u_l);
        let res: f64 = (0..fx.mesh.n_vertices())
            .filter(|&v| !fx.mesh.boundary_vertex[v])
            .map(|v| (au[v] + f_g[v]).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = f_g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res <= 1e-10 * scale.max(1.0), "residual {res}");
        // boundary values are zero
        for v in 0..fx.mesh.n_vertices() {
            if fx.mesh.boundary_vertex[v] {
                assert_eq!(u_l[v], 0.0);
            }
        }
    }

    #[test]
    fn nonlinear_part_equals_full_solve_when_split_is_trivial() {
        // u_l = 0 and eps_s = eps_m: (6.3) and (6.5) are the same system,
        // so the iterations coincide bitwise
        let fx = born_fixture(4);
        let dm_eq = DielectricModel::new(2.0, 2.0, fx.kappa).unwrap();
        let cfg = SolveConfig::default();
        let full = solve_rpbe(&fx.mesh, &dm_eq, &fx.cs, fx.kappa, &cfg).unwrap();
        let zeros = vec![0.0; fx.mesh.n_vertices()];
        let part = solve_nonlinear_part(&fx.mesh, &dm_eq, &fx.cs, fx.kappa, &zeros, &cfg).unwrap();
        assert_eq!(full.u, part.u);
    }

    #[test]
    fn nonlinear_part_reduces_to_harmonic_extension_at_zero_kappa() {
        let fx = born_fixture(4);
        let dm0 = DielectricModel::new(2.0, 80.0, 0.0).unwrap();
        let cfg = SolveConfig::default();
        let zeros = vec![0.0; fx.mesh.n_vertices()];
        let part = solve_nonlinear_part(&fx.mesh, &dm0, &fx.cs, 0.0, &zeros, &cfg).unwrap();
        // oracle: direct linear solve of A u = -A u_D on the free dofs
        let dofs = interpolate_dirichlet(&fx.mesh, &fx.cs, &dm0, 0.0).unwrap();
        let a = assemble_stiffness(&fx.mesh, &dm0).unwrap();
        let u_d = dofs.dirichlet_vector();
        let au_d = a.matvec(&u_d);
        let rhs: Vec<f64> = dofs.free.iter().map(|&v| -au_d[v]).collect();
        let x = solve_linear(&a.restrict(&dofs.free), &rhs, &cfg).unwrap();
        let oracle = {
            let mut full = dofs.expand(&x);
            for v in 0..full.len() {
                if let Some(d) = dofs.dirichlet[v] {
                    full[v] = d;
                }
            }
            full
        };
        for (a, b) in part.u.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn split_discrepancy_is_small_on_born_fixture() {
        let fx = born_fixture(6);
        let bundle = solve_split(&fx.mesh, &fx.dm, &fx.cs, fx.kappa, &SolveConfig::default())
            .unwrap();
        let d = bundle.split_discrepancy.unwrap();
        // reported, not asserted tight; it should at least be far below the
        // solution scale
        let scale = bundle.u.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(d.is_finite());
        assert!(d <= 0.5 * scale.max(1.0), "discrepancy {d} vs scale {scale}");
    }

    #[test]
    fn linfty_bounds_trivial_case() {
        // no charges, kappa irrelevant: G = 0, g = 0, u_l = 0
        let fx = born_fixture(4);
        let cs = ChargeSystem::empty(2.0);
        let zeros = vec![0.0; fx.mesh.n_vertices()];
        let b =
            compute_linfty_bounds(&fx.mesh, &cs, &fx.dm, 0.0, &zeros, &SolveConfig::default())
                .unwrap();
        assert_eq!(b.alpha_prime, 0.0);
        assert_eq!(b.beta_prime, 0.0);
        assert_eq!(b.alpha, 0.0);
        assert_eq!(b.beta, 0.0);
    }

    #[test]
    fn linfty_bounds_formulas() {
        let fx = born_fixture(6);
        let cfg = SolveConfig::default();
        let u_l = solve_linear_part(&fx.mesh, &fx.dm, &fx.cs, &cfg).unwrap();
        let b = compute_linfty_bounds(&fx.mesh, &fx.cs, &fx.dm, fx.kappa, &u_l, &cfg).unwrap();
        assert!(b.alpha <= b.beta);
        assert_eq!(b.alpha_prime, -b.sup_solvent);
        assert_eq!(b.beta_prime, -b.inf_solvent);
        assert_eq!(b.alpha, b.alpha_prime.min(b.inf_boundary));
        assert_eq!(b.beta, b.beta_prime.max(b.sup_boundary));
        // independent vertex-only scan cannot exceed the sampled sup
        let mut sup = f64::NEG_INFINITY;
        for e in 0..fx.mesh.n_elements() {
            if fx.mesh.element_region[e] != Region::Solvent {
                continue;
            }
            for &v in fx.mesh.element_vertices(e) {
                sup = sup.max(u_l[v] + eval_g(&fx.cs, fx.mesh.vertices[v], 2).unwrap());
            }
        }
        assert!(sup <= b.sup_solvent);
    }

    #[test]
    fn discrete_maximum_principle_on_m_matrix_grid() {
        let fx = born_fixture(8);
        let cfg = SolveConfig::default();
        let a = assemble_stiffness(&fx.mesh, &fx.dm).unwrap();
        let rep = check_a1(&a, &fx.mesh, 0.0);
        assert!(rep.m_matrix_pass, "fixture grid must satisfy the sign condition");
        let u_l = solve_linear_part(&fx.mesh, &fx.dm, &fx.cs, &cfg).unwrap();
        let part = solve_nonlinear_part(&fx.mesh, &fx.dm, &fx.cs, fx.kappa, &u_l, &cfg).unwrap();
        let b = compute_linfty_bounds(&fx.mesh, &fx.cs, &fx.dm, fx.kappa, &u_l, &cfg).unwrap();
        for (v, &un) in part.u.iter().enumerate() {
            assert!(
                un >= b.alpha - 1e-8 && un <= b.beta + 1e-8,
                "vertex {v}: u_n = {un} outside [{}, {}]",
                b.alpha,
                b.beta
            );
        }
    }

    #[test]
    fn nested_space_energy_monotonicity() {
        let fx = born_fixture(4);
        let cfg = SolveConfig::default();
        let quad = cfg.quadrature(2).unwrap();
        let coarse = solve_rpbe(&fx.mesh, &fx.dm, &fx.cs, fx.kappa, &cfg).unwrap();
        let mut fine_mesh = uniform_refine(&fx.mesh).unwrap();
        fine_mesh.assign_regions(&fx.interface);
        let fine = solve_rpbe(&fine_mesh, &fx.dm, &fx.cs, fx.kappa, &cfg).unwrap();
        // both energies evaluated with the fine mesh's quadrature: the
        // interpolated coarse solution is feasible there, so the fine
        // minimizer can only do better
        let interp = fine_mesh.interpolate_from_ancestor(&coarse.u).unwrap();
        let f_g = assemble_f_g(&fine_mesh, &fx.dm, &fx.cs, &quad).unwrap();
        let e_interp =
            crate::assembly::discrete_energy(&fine_mesh, &fx.dm, &fx.cs, &interp, &quad, &f_g)
                .unwrap();
        assert!(fine.energy <= e_interp + 1e-10);
    }

    /// H1 seminorm error of a P1 field against an exact gradient, by
    /// quadrature.
    fn h1_seminorm_error(
        mesh: &Mesh,
        u: &[f64],
        grad_exact: &dyn Fn(Point) -> [f64; 2],
        quad: &QuadratureRule,
    ) -> f64 {
        let mut total = 0.0;
        let ref_vol = quad.reference_volume();
        for e in 0..mesh.n_elements() {
            let (grads, vol) = p1_gradients(mesh, e).unwrap();
            let verts = mesh.element_vertices(e);
            let mut gu = [0.0; 2];
            for (i, &v) in verts.iter().enumerate() {
                gu[0] += u[v] * grads[i][0];
                gu[1] += u[v] * grads[i][1];
            }
            for (lambda, &w) in quad.points.iter().zip(&quad.weights) {
                let mut x = [0.0; 3];
                for (&v, &l) in verts.iter().zip(lambda) {
                    for k in 0..3 {
                        x[k] += l * mesh.vertices[v][k];
                    }
                }
                let ge = grad_exact(x);
                total += w * vol / ref_vol
                    * ((gu[0] - ge[0]).powi(2) + (gu[1] - ge[1]).powi(2));
            }
        }
        total.sqrt()
    }

    fn manufactured_semilinear_solve(n: usize) -> (Mesh, Vec<f64>, SolutionBundle) {
        // -Laplace(u) + sinh(u) = f with u* = sin(pi x) sin(pi y), zero BC
        let pi = std::f64::consts::PI;
        let mesh = build_square_grid(n, &DomainBox::unit(2)).unwrap();
        let cs = ChargeSystem::empty(1.0);
        let dm = DielectricModel {
            eps_m: 1.0,
            eps_s: 1.0,
            kappa_bar_sq_s: 1.0,
        };
        let cfg = SolveConfig::default();
        let quad = cfg.quadrature(2).unwrap();
        let exact = move |x: Point| (pi * x[0]).sin() * (pi * x[1]).sin();
        let f = move |x: Point| {
            let u = exact(x);
            2.0 * pi * pi * u + u.sinh()
        };
        let load = assemble_load(&mesh, &f, &quad).unwrap();
        let lin: Vec<f64> = load.iter().map(|v| -v).collect();
        let dofs = zero_dirichlet_map(&mesh).unwrap();
        let bundle = solve_semilinear(&mesh, &dm, &cs, &dofs, None, &lin, &quad, &cfg).unwrap();
        let exact_v: Vec<f64> = mesh.vertices.iter().map(|&x| exact(x)).collect();
        (mesh, exact_v, bundle)
    }

    #[test]
    fn manufactured_semilinear_h1_order_one() {
        let pi = std::f64::consts::PI;
        let grad = move |x: Point| {
            [
                pi * (pi * x[0]).cos() * (pi * x[1]).sin(),
                pi * (pi * x[0]).sin() * (pi * x[1]).cos(),
            ]
        };
        let quad = QuadratureRule::simplex(2, 5).unwrap();
        let mut errs = Vec::new();
        for n in [8, 16, 32] {
            let (mesh, _, bundle) = manufactured_semilinear_solve(n);
            errs.push(h1_seminorm_error(&mesh, &bundle.u, &grad, &quad));
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((0.9..=1.1).contains(&order), "H1 order {order}");
        }
    }

    #[test]
    fn manufactured_newton_quadratic_convergence() {
        for n in [16, 32] {
            let (_, _, bundle) = manufactured_semilinear_solve(n);
            let res: Vec<f64> = bundle.trace.iter().map(|s| s.residual).collect();
            assert!(res.len() >= 3, "need at least 3 iterations, got {}", res.len());
            // all steps undamped and the tail contracts quadratically
            assert!(bundle.trace.iter().all(|s| s.damping == 1.0));
            for w in res.windows(2).rev().take(2) {
                let c = w[1] / (w[0] * w[0]);
                assert!(c < 10.0, "quadratic constant {c} too large");
            }
        }
    }

    #[test]
    fn overflow_guard_reported_through_solver() {
        // an absurd charge magnitude drives u + G past the guard
        let bx = DomainBox::new([-1.0, -1.0, 0.0], [1.0, 1.0, 0.0]).unwrap();
        let mut mesh = build_square_grid(4, &bx).unwrap();
        let ig = crate::geometry::InterfaceGeometry::Sphere {
            center: [0.0; 3],
            radius: 0.5,
        };
        mesh.assign_regions(&ig);
        let cs = ChargeSystem::new(
            vec![Charge {
                position: [0.0; 3],
                magnitude: 1e6,
            }],
            2.0,
            0.1,
        )
        .unwrap();
        let dm = DielectricModel::new(2.0, 80.0, 1.0).unwrap();
        let err = solve_rpbe(&mesh, &dm, &cs, 1.0, &SolveConfig::default());
        assert!(err.is_err());
    }

    #[test]
    fn fixture_smoke() {
        let BornFixture { mesh, .. } = born_fixture(4);
        assert_eq!(mesh.dim(), 2);
        assert!(mesh
            .element_region
            .iter()
            .any(|&r| r == Region::Molecular));
    }
}
