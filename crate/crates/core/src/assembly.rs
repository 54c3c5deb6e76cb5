//! P1 finite element assembly of the regularized Poisson-Boltzmann weak
//! form: stiffness `A`, singular load `f_G`, nonlinear term `B` and its
//! Jacobian, the discrete energy, Dirichlet interpolation, and the
//! stiffness sign audit for the grid assumptions.
//!
//! Vectors and operators are indexed by mesh vertex; the Dirichlet
//! reduction to free dofs happens in the solver via [`DofMap`].

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{
    eval_boundary_g, eval_g, eval_grad_g, ChargeSystem, DielectricModel, Point, Region,
};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;
use crate::sparse::{SparseOperator, TripletBuilder};

/// Arguments to sinh/cosh beyond this indicate a diverging iterate, not a
/// number that should be evaluated.
pub const OVERFLOW_GUARD: f64 = 300.0;

/// Free/Dirichlet partition of the vertices with interpolated boundary data.
#[derive(Debug, Clone)]
pub struct DofMap {
    /// Free vertex ids, ascending; dof `k` lives at vertex `free[k]`.
    pub free: Vec<usize>,
    /// Inverse map, `None` on Dirichlet vertices.
    pub dof_of_vertex: Vec<Option<usize>>,
    /// Boundary value per vertex, `None` on free vertices.
    pub dirichlet: Vec<Option<f64>>,
}

impl DofMap {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Full vertex vector from free values plus the stored boundary data.
    pub fn expand(&self, free_values: &[f64]) -> Vec<f64> {
        assert_eq!(free_values.len(), self.free.len());
        let mut full = vec![0.0; self.dof_of_vertex.len()];
        for (v, slot) in full.iter_mut().enumerate() {
            *slot = match self.dof_of_vertex[v] {
                Some(k) => free_values[k],
                None => self.dirichlet[v].unwrap_or(0.0),
            };
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| full[v]).collect()
    }

    /// Full vector holding the Dirichlet data and zeros on free vertices.
    pub fn dirichlet_vector(&self) -> Vec<f64> {
        self.dirichlet
            .iter()
            .map(|d| d.unwrap_or(0.0))
            .collect()
    }

    /// A map with the same partition but homogeneous boundary data.
    pub fn homogeneous(&self) -> DofMap {
        DofMap {
            free: self.free.clone(),
            dof_of_vertex: self.dof_of_vertex.clone(),
            dirichlet: self.dirichlet.iter().map(|d| d.map(|_| 0.0)).collect(),
        }
    }
}

/// Constant P1 gradients of the barycentric basis on an element, plus its
/// volume.
pub fn p1_gradients(mesh: &Mesh, e: usize) -> Result<(Vec<Point>, f64)> {
    let dim = mesh.dim();
    let verts = mesh.element_vertices(e);
    let p: Vec<Point> = verts.iter().map(|&v| mesh.vertices[v]).collect();
    let vol = mesh.signed_volume(e);
    if vol <= 0.0 {
        return Err(Error::DegenerateElement {
            element: e,
            volume: vol,
        });
    }
    let mut grads = vec![[0.0; 3]; dim + 1];
    match dim {
        2 => {
            let det = 2.0 * vol;
            // gradient of lambda_i is the rotated opposite edge / (2A)
            for i in 0..3 {
                let a = p[(i + 1) % 3];
                let b = p[(i + 2) % 3];
                grads[i] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det, 0.0];
            }
        }
        3 => {
            let det = 6.0 * vol;
            for i in 0..4 {
                // face opposite vertex i, oriented so the normal points away
                // from vertex i
                let f = [(i + 1) % 4, (i + 2) % 4, (i + 3) % 4];
                let a = crate::geometry::sub(p[f[1]], p[f[0]]);
                let b = crate::geometry::sub(p[f[2]], p[f[0]]);
                let mut n = [
                    a[1] * b[2] - a[2] * b[1],
                    a[2] * b[0] - a[0] * b[2],
                    a[0] * b[1] - a[1] * b[0],
                ];
                let to_i = crate::geometry::sub(p[i], p[f[0]]);
                if crate::geometry::dot(n, to_i) > 0.0 {
                    for c in n.iter_mut() {
                        *c = -*c;
                    }
                }
                // |n| = 2 * area of the face; grad lambda_i = n_unit / height,
                // height = 3 V / area => grad = n / (6 V) with inward n
                grads[i] = [-n[0] / det, -n[1] / det, -n[2] / det];
            }
        }
        _ => unreachable!(),
    }
    Ok((grads, vol))
}

/// Physical coordinates of a barycentric quadrature point on an element.
fn map_point(mesh: &Mesh, e: usize, lambda: &[f64]) -> Point {
    let verts = mesh.element_vertices(e);
    let mut x = [0.0; 3];
    for (&v, &l) in verts.iter().zip(lambda) {
        for k in 0..3 {
            x[k] += l * mesh.vertices[v][k];
        }
    }
    x
}

/// Stiffness matrix `a_ij = (eps grad phi_j, grad phi_i)` over all vertices.
/// Exact for P1 since the gradients are element-constant.
pub fn assemble_stiffness(mesh: &Mesh, dm: &DielectricModel) -> Result<SparseOperator> {
    let mut b = TripletBuilder::new(mesh.n_vertices());
    for e in 0..mesh.n_elements() {
        let (grads, vol) = p1_gradients(mesh, e)?;
        let eps = dm.eps(mesh.element_region[e]);
        let verts = mesh.element_vertices(e);
        for (i, &vi) in verts.iter().enumerate() {
            for (j, &vj) in verts.iter().enumerate() {
                b.add(vi, vj, eps * vol * crate::geometry::dot(grads[i], grads[j]));
            }
        }
    }
    Ok(b.build())
}

/// Singular load `<f_G, phi_i> = int (eps - eps_m) grad G . grad phi_i`,
/// supported on the solvent region where the coefficient is nonzero.
pub fn assemble_f_g(
    mesh: &Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    quad: &QuadratureRule,
) -> Result<Vec<f64>> {
    let mut f = vec![0.0; mesh.n_vertices()];
    let coeff = dm.eps_s - dm.eps_m;
    if coeff == 0.0 {
        return Ok(f);
    }
    let ref_vol = quad.reference_volume();
    for e in 0..mesh.n_elements() {
        if mesh.element_region[e] != Region::Solvent {
            continue;
        }
        let (grads, vol) = p1_gradients(mesh, e)?;
        let scale = vol / ref_vol;
        let verts = mesh.element_vertices(e);
        for (lambda, &w) in quad.points.iter().zip(&quad.weights) {
            let x = map_point(mesh, e, lambda);
            let g = eval_grad_g(cs, x, mesh.dim())?;
            for (i, &vi) in verts.iter().enumerate() {
                f[vi] += coeff * w * scale * crate::geometry::dot(g, grads[i]);
            }
        }
    }
    Ok(f)
}

fn guarded_sinh(arg: f64, element: usize) -> Result<f64> {
    if arg.abs() > OVERFLOW_GUARD {
        Err(Error::Overflow { element, arg })
    } else {
        Ok(arg.sinh())
    }
}

fn guarded_cosh(arg: f64, element: usize) -> Result<f64> {
    if arg.abs() > OVERFLOW_GUARD {
        Err(Error::Overflow { element, arg })
    } else {
        Ok(arg.cosh())
    }
}

/// P1 value of the full vertex vector at a barycentric point.
fn p1_value(mesh: &Mesh, e: usize, lambda: &[f64], u: &[f64]) -> f64 {
    mesh.element_vertices(e)
        .iter()
        .zip(lambda)
        .map(|(&v, &l)| u[v] * l)
        .sum()
}

/// Nonlinear term `(B(u), phi_i) = (kappa_bar^2 sinh(u + G), phi_i)`,
/// supported on the solvent region.
pub fn assemble_b(
    mesh: &Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    u: &[f64],
    quad: &QuadratureRule,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mesh.n_vertices()];
    let ref_vol = quad.reference_volume();
    for e in 0..mesh.n_elements() {
        let kbar_sq = dm.kappa_bar_sq(mesh.element_region[e]);
        if kbar_sq == 0.0 {
            continue;
        }
        let vol = mesh.volume(e);
        let scale = vol / ref_vol;
        let verts = mesh.element_vertices(e);
        for (lambda, &w) in quad.points.iter().zip(&quad.weights) {
            let x = map_point(mesh, e, lambda);
            let arg = p1_value(mesh, e, lambda, u) + eval_g(cs, x, mesh.dim())?;
            let s = guarded_sinh(arg, e)?;
            for (i, &vi) in verts.iter().enumerate() {
                out[vi] += kbar_sq * w * scale * s * lambda[i];
            }
        }
    }
    Ok(out)
}

/// Gateaux derivative of `B`: the `kappa_bar^2 cosh(u + G)`-weighted mass
/// matrix on the solvent region. Symmetric positive semidefinite.
pub fn assemble_b_jacobian(
    mesh: &Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    u: &[f64],
    quad: &QuadratureRule,
) -> Result<SparseOperator> {
    let mut b = TripletBuilder::new(mesh.n_vertices());
    let ref_vol = quad.reference_volume();
    for e in 0..mesh.n_elements() {
        let kbar_sq = dm.kappa_bar_sq(mesh.element_region[e]);
        if kbar_sq == 0.0 {
            continue;
        }
        let vol = mesh.volume(e);
        let scale = vol / ref_vol;
        let verts = mesh.element_vertices(e);
        for (lambda, &w) in quad.points.iter().zip(&quad.weights) {
            let x = map_point(mesh, e, lambda);
            let arg = p1_value(mesh, e, lambda, u) + eval_g(cs, x, mesh.dim())?;
            let c = guarded_cosh(arg, e)?;
            for (i, &vi) in verts.iter().enumerate() {
                for (j, &vj) in verts.iter().enumerate() {
                    b.add(vi, vj, kbar_sq * w * scale * c * lambda[i] * lambda[j]);
                }
            }
        }
    }
    Ok(b.build())
}

/// Load vector `(f, phi_i)` for a given smooth forcing; used by
/// manufactured-solution studies.
pub fn assemble_load(
    mesh: &Mesh,
    f: &dyn Fn(Point) -> f64,
    quad: &QuadratureRule,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mesh.n_vertices()];
    let ref_vol = quad.reference_volume();
    for e in 0..mesh.n_elements() {
        let vol = mesh.volume(e);
        let scale = vol / ref_vol;
        let verts = mesh.element_vertices(e);
        for (lambda, &w) in quad.points.iter().zip(&quad.weights) {
            let x = map_point(mesh, e, lambda);
            let fv = f(x);
            for (i, &vi) in verts.iter().enumerate() {
                out[vi] += w * scale * fv * lambda[i];
            }
        }
    }
    Ok(out)
}

/// Dirichlet part of the energy, `1/2 (eps grad u, grad u)`.
pub fn quadratic_energy(mesh: &Mesh, dm: &DielectricModel, u: &[f64]) -> Result<f64> {
    let mut e_total = 0.0;
    for e in 0..mesh.n_elements() {
        let (grads, vol) = p1_gradients(mesh, e)?;
        let eps = dm.eps(mesh.element_region[e]);
        let verts = mesh.element_vertices(e);
        let mut grad_u = [0.0; 3];
        for (i, &vi) in verts.iter().enumerate() {
            for k in 0..3 {
                grad_u[k] += u[vi] * grads[i][k];
            }
        }
        e_total += 0.5 * eps * vol * crate::geometry::dot(grad_u, grad_u);
    }
    Ok(e_total)
}

/// Exponential part of the energy, `int kappa_bar^2 cosh(w + G)` over the
/// solvent region; `w` is the P1 field the nonlinearity sees.
pub fn cosh_energy(
    mesh: &Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    w: &[f64],
    quad: &QuadratureRule,
) -> Result<f64> {
    let mut e_total = 0.0;
    let ref_vol = quad.reference_volume();
    for e in 0..mesh.n_elements() {
        let kbar_sq = dm.kappa_bar_sq(mesh.element_region[e]);
        if kbar_sq == 0.0 {
            continue;
        }
        let scale = mesh.volume(e) / ref_vol;
        for (lambda, &w_q) in quad.points.iter().zip(&quad.weights) {
            let x = map_point(mesh, e, lambda);
            let arg = p1_value(mesh, e, lambda, w) + eval_g(cs, x, mesh.dim())?;
            e_total += kbar_sq * w_q * scale * guarded_cosh(arg, e)?;
        }
    }
    Ok(e_total)
}

/// Discrete energy with an explicit linear term (normally the assembled
/// `f_G`, possibly plus an extra forcing):
/// `E(u) = 1/2 (eps grad u, grad u) + int kappa_bar^2 cosh(u + G) + lin . u`.
pub fn discrete_energy(
    mesh: &Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    u: &[f64],
    quad: &QuadratureRule,
    linear_term: &[f64],
) -> Result<f64> {
    let mut e_total = quadratic_energy(mesh, dm, u)? + cosh_energy(mesh, dm, cs, u, quad)?;
    for (ui, li) in u.iter().zip(linear_term) {
        e_total += ui * li;
    }
    Ok(e_total)
}

/// Discrete energy of the RPBE itself (assembles `f_G` internally).
pub fn energy(
    mesh: &Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    u: &[f64],
    quad: &QuadratureRule,
) -> Result<f64> {
    let f_g = assemble_f_g(mesh, dm, cs, quad)?;
    discrete_energy(mesh, dm, cs, u, quad, &f_g)
}

/// Boundary data `g - G` interpolated at boundary vertices; free dofs
/// enumerated in ascending vertex order.
pub fn interpolate_dirichlet(
    mesh: &Mesh,
    cs: &ChargeSystem,
    dm: &DielectricModel,
    kappa: f64,
) -> Result<DofMap> {
    let nv = mesh.n_vertices();
    let mut free = Vec::new();
    let mut dof_of_vertex = vec![None; nv];
    let mut dirichlet = vec![None; nv];
    let mut n_boundary = 0;
    for v in 0..nv {
        if mesh.boundary_vertex[v] {
            let x = mesh.vertices[v];
            let val = eval_boundary_g(cs, dm, kappa, x, mesh.dim())? - eval_g(cs, x, mesh.dim())?;
            dirichlet[v] = Some(val);
            n_boundary += 1;
        } else {
            dof_of_vertex[v] = Some(free.len());
            free.push(v);
        }
    }
    if n_boundary == 0 {
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

/// Outcome of the stiffness sign audit for the grid assumptions.
#[derive(Debug, Clone)]
pub struct A1Report {
    /// All off-diagonal entries nonpositive (M-matrix pattern, 2D form).
    pub m_matrix_pass: bool,
    /// Quantitative 3D form: minimal admissible margin over adjacent pairs
    /// strictly above the floor.
    pub quantitative_pass: bool,
    /// The measured margin `min_ij( -a_ij h^2 / sum_{T supset e_ij} |T| )`.
    pub rho_min: f64,
    /// Largest positive off-diagonal entry found (0 if none).
    pub max_positive_offdiag: f64,
    /// Adjacent vertex pairs whose entry vanishes (within 1e-12 slack).
    pub zero_pairs: Vec<(usize, usize)>,
    pub rho_floor: f64,
}

impl A1Report {
    pub fn passes(&self, dim: usize) -> bool {
        if dim == 2 {
            self.m_matrix_pass
        } else {
            self.quantitative_pass
        }
    }
}

/// Audit the off-diagonal stiffness signs: the M-matrix condition and the
/// quantitative margin `a_ij <= -(rho/h^2) sum_{T supset e_ij} |T|`.
/// Adjacency means a mesh edge connects the two vertices.
pub fn check_a1(stiffness: &SparseOperator, mesh: &Mesh, rho_floor: f64) -> A1Report {
    // accumulate the element volumes around every edge
    let mut edge_vol: HashMap<(usize, usize), f64> = HashMap::new();
    for e in 0..mesh.n_elements() {
        let verts = mesh.element_vertices(e);
        let vol = mesh.volume(e);
        for i in 0..verts.len() {
            for j in i + 1..verts.len() {
                let key = (verts[i].min(verts[j]), verts[i].max(verts[j]));
                *edge_vol.entry(key).or_insert(0.0) += vol;
            }
        }
    }
    let h_max: f64 = (0..mesh.n_elements())
        .map(|e| mesh.diameter(e))
        .fold(0.0, f64::max);
    let scale: f64 = stiffness
        .entries()
        .map(|(_, _, v)| v.abs())
        .fold(0.0, f64::max);
    let slack = 1e-12 * scale.max(1.0);

    let mut rho_min = f64::INFINITY;
    let mut max_positive: f64 = 0.0;
    let mut zero_pairs = Vec::new();
    let mut m_matrix_pass = true;
    for (&(i, j), &vol) in &edge_vol {
        let a_ij = stiffness.get(i, j);
        if a_ij > slack {
            m_matrix_pass = false;
            max_positive = max_positive.max(a_ij);
        }
        if a_ij.abs() <= slack {
            zero_pairs.push((i, j));
        }
        let rho = -a_ij * h_max * h_max / vol;
        rho_min = rho_min.min(rho);
    }
    zero_pairs.sort_unstable();
    A1Report {
        m_matrix_pass,
        quantitative_pass: rho_min > rho_floor,
        rho_min,
        max_positive_offdiag: max_positive,
        zero_pairs,
        rho_floor,
    }
}
