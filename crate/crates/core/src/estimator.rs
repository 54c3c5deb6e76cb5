//! Residual a posteriori error indicator and data oscillation:
//!
//! `eta_tau^2 = h_tau^2 ||B(u_h)||_{0,tau}^2
//!            + 1/2 sum_{S} h_S ||[n . (eps grad u_h + (eps - eps_m) grad G)]||_{0,S}^2`
//!
//! `osc_tau^2 = h_tau^4 (||grad u_h||_{0,tau}^2 + ||grad G||_{0,tau}^2)`,
//! summed over solvent elements only.

use crate::assembly::{p1_gradients, OVERFLOW_GUARD};
use crate::error::{Error, Result};
use crate::geometry::{eval_g, eval_grad_g, ChargeSystem, DielectricModel, Point, Region};
use crate::mesh::{FaceClass, FaceInfo, Mesh};
use crate::quadrature::QuadratureRule;

/// Per-element indicator and oscillation with their exact totals.
#[derive(Debug, Clone)]
pub struct ErrorEstimate {
    pub eta_sq: Vec<f64>,
    /// Nonzero only on solvent elements.
    pub osc_sq: Vec<f64>,
    pub eta_global_sq: f64,
    pub osc_global_sq: f64,
}

/// Face quadrature of the degree used for the jump terms: `grad G` is smooth
/// but not polynomial on interface faces.
fn face_rule(dim: usize) -> Result<QuadratureRule> {
    match dim {
        2 => QuadratureRule::interval(4),
        3 => QuadratureRule::simplex(2, 4),
        _ => Err(Error::Model(format!("unsupported dimension {dim}"))),
    }
}

fn face_measure(mesh: &Mesh, face: &FaceInfo) -> f64 {
    let v: Vec<Point> = face.vertices.iter().map(|&i| mesh.vertices[i]).collect();
    match v.len() {
        2 => crate::geometry::dist(v[0], v[1]),
        3 => {
            let a = crate::geometry::sub(v[1], v[0]);
            let b = crate::geometry::sub(v[2], v[0]);
            let cx = [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ];
            0.5 * crate::geometry::dot(cx, cx).sqrt()
        }
        _ => unreachable!(),
    }
}

/// Squared L2 norm over an interior face of the normal-flux jump
/// `[n . (eps grad u_h + (eps - eps_m) grad G)]`. Boundary faces contribute
/// zero; the squared norm does not depend on the normal's orientation.
pub fn face_jump(
    mesh: &Mesh,
    face: &FaceInfo,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    u_h: &[f64],
    quad: &QuadratureRule,
) -> Result<f64> {
    let e1 = match face.elements[1] {
        Some(e1) => e1,
        None => return Ok(0.0),
    };
    let e0 = face.elements[0].expect("interior face has a first element");
    let n = face.normal;
    let mut flux_const = [0.0; 2];
    let mut g_coeff = [0.0; 2];
    for (side, &e) in [e0, e1].iter().enumerate() {
        let (grads, _) = p1_gradients(mesh, e)?;
        let verts = mesh.element_vertices(e);
        let mut grad_u = [0.0; 3];
        for (i, &v) in verts.iter().enumerate() {
            for k in 0..3 {
                grad_u[k] += u_h[v] * grads[i][k];
            }
        }
        let eps = dm.eps(mesh.element_region[e]);
        flux_const[side] = eps * crate::geometry::dot(grad_u, n);
        g_coeff[side] = eps - dm.eps_m;
    }
    let const_jump = flux_const[0] - flux_const[1];
    let coeff_jump = g_coeff[0] - g_coeff[1];
    let measure = face_measure(mesh, face);
    // when the (eps - eps_m) coefficients agree, the grad G contributions
    // cancel identically and the jump is constant on the face
    if coeff_jump == 0.0 || cs.charges.is_empty() {
        return Ok(const_jump * const_jump * measure);
    }
    let scale = measure / quad.reference_volume();
    let mut total = 0.0;
    for (lambda, &w) in quad.points.iter().zip(&quad.weights) {
        let mut x = [0.0; 3];
        for (&v, &l) in face.vertices.iter().zip(lambda) {
            for k in 0..3 {
                x[k] += l * mesh.vertices[v][k];
            }
        }
        let gn = crate::geometry::dot(eval_grad_g(cs, x, mesh.dim())?, n);
        let jump = const_jump + coeff_jump * gn;
        total += w * scale * jump * jump;
    }
    Ok(total)
}

/// Compute the indicator and oscillation for a converged solution. `quad` is
/// the volume rule; the face rule is fixed internally.
pub fn estimate(
    mesh: &Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    u_h: &[f64],
    quad: &QuadratureRule,
) -> Result<ErrorEstimate> {
    let ne = mesh.n_elements();
    let mut eta_sq = vec![0.0; ne];
    let mut osc_sq = vec![0.0; ne];
    let ref_vol = quad.reference_volume();

    for e in 0..ne {
        let region = mesh.element_region[e];
        let h = mesh.diameter(e);
        let vol = mesh.volume(e);
        let kbar_sq = dm.kappa_bar_sq(region);
        let (grads, _) = p1_gradients(mesh, e)?;
        let verts = mesh.element_vertices(e);
        let mut grad_u = [0.0; 3];
        for (i, &v) in verts.iter().enumerate() {
            for k in 0..3 {
                grad_u[k] += u_h[v] * grads[i][k];
            }
        }

        // bulk residual: the interior residual of P1 is B(u_h) since
        // div(eps grad u_h) vanishes elementwise
        if kbar_sq != 0.0 {
            let scale = vol / ref_vol;
            let mut bulk = 0.0;
            for (lambda, &w) in quad.points.iter().zip(&quad.weights) {
                let mut x = [0.0; 3];
                let mut uv = 0.0;
                for (&v, &l) in verts.iter().zip(lambda) {
                    for k in 0..3 {
                        x[k] += l * mesh.vertices[v][k];
                    }
                    uv += l * u_h[v];
                }
                let arg = uv + eval_g(cs, x, mesh.dim())?;
                if arg.abs() > OVERFLOW_GUARD {
                    return Err(Error::Overflow { element: e, arg });
                }
                let b = kbar_sq * arg.sinh();
                bulk += w * scale * b * b;
            }
            eta_sq[e] += h * h * bulk;
        }

        // oscillation, solvent elements only
        if region == Region::Solvent {
            let mut grad_norms = crate::geometry::dot(grad_u, grad_u) * vol;
            if !cs.charges.is_empty() {
                let scale = vol / ref_vol;
                for (lambda, &w) in quad.points.iter().zip(&quad.weights) {
                    let mut x = [0.0; 3];
                    for (&v, &l) in verts.iter().zip(lambda) {
                        for k in 0..3 {
                            x[k] += l * mesh.vertices[v][k];
                        }
                    }
                    let gg = eval_grad_g(cs, x, mesh.dim())?;
                    grad_norms += w * scale * crate::geometry::dot(gg, gg);
                }
            }
            osc_sq[e] = h.powi(4) * grad_norms;
        }
    }

    let frule = face_rule(mesh.dim())?;
    for face in mesh.faces()? {
        if face.class == FaceClass::Boundary {
            continue;
        }
        let jump_sq = face_jump(mesh, &face, dm, cs, u_h, &frule)?;
        let contrib = 0.5 * face.diameter * jump_sq;
        for e in face.elements.into_iter().flatten() {
            eta_sq[e] += contrib;
        }
    }

    let eta_global_sq = eta_sq.iter().sum();
    let osc_global_sq = osc_sq.iter().sum();
    Ok(ErrorEstimate {
        eta_sq,
        osc_sq,
        eta_global_sq,
        osc_global_sq,
    })
}
