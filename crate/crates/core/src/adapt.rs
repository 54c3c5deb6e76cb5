//! The SOLVE -> ESTIMATE -> MARK -> REFINE loop: bulk marking on the
//! indicator with an oscillation switch, refinement dispatch, and the
//! energy-contraction monitor.

use std::collections::BTreeSet;

use crate::assembly::{assemble_stiffness, check_a1};
use crate::error::{Error, Result};
use crate::estimator::{estimate, ErrorEstimate};
use crate::geometry::{ChargeSystem, DielectricModel, InterfaceGeometry};
use crate::mesh::{MarkSet, Mesh};
use crate::solver::{solve_rpbe, SolveConfig};

#[derive(Debug, Clone, Copy)]
pub struct MarkingConfig {
    /// Bulk fraction for the indicator marking.
    pub theta1: f64,
    /// Bulk fraction for the oscillation extension.
    pub theta2: f64,
    /// Weight of the patch-oscillation test deciding the switch.
    pub switch_constant: f64,
    /// Bisection depth per marked element; 3 gives every marked element and
    /// each of its edges an interior node.
    pub depth: u32,
}

impl Default for MarkingConfig {
    fn default() -> Self {
        Self {
            theta1: 0.5,
            theta2: 0.8,
            switch_constant: 1.0,
            depth: 3,
        }
    }
}

impl MarkingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("theta1", self.theta1), ("theta2", self.theta2)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {t}")));
            }
        }
        if !(self.switch_constant >= 0.0) {
            return Err(Error::Config(format!(
                "switch_constant must be nonnegative, got {}",
                self.switch_constant
            )));
        }
        if self.depth == 0 {
            return Err(Error::Config("refinement depth must be positive".into()));
        }
        Ok(())
    }
}

/// Stop criteria for the loop; whichever fires first.
#[derive(Debug, Clone, Copy)]
pub struct StopCriteria {
    pub max_iterations: usize,
    pub max_dofs: usize,
    /// Absolute tolerance on the global indicator (not squared).
    pub eta_tol: f64,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            max_iterations: 25,
            max_dofs: 200_000,
            eta_tol: 1e-4,
        }
    }
}

/// One row of the adaptive history.
#[derive(Debug, Clone)]
pub struct AfemRecord {
    pub k: usize,
    /// Free dofs of the iteration's mesh.
    pub dofs: usize,
    pub eta_sq: f64,
    pub osc_sq: f64,
    pub energy: f64,
    /// Filled by the caller when a reference solution is available.
    pub ref_error: Option<f64>,
    pub marked1: usize,
    pub marked2: usize,
    pub switch_fired: bool,
    /// Result of the stiffness sign audit on the mesh refined from this
    /// iteration; a failure is a theory caveat, not an abort.
    pub a1_pass_after_refine: Option<bool>,
}

#[derive(Debug, Clone, Default)]
pub struct AfemHistory {
    pub records: Vec<AfemRecord>,
}

impl AfemHistory {
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "k,dofs,eta_sq,osc_sq,energy,ref_error,marked1,marked2,switch")?;
        for r in &self.records {
            let ref_err = r
                .ref_error
                .map_or(String::new(), |e| format!("{e:.12e}"));
            writeln!(
                w,
                "{},{},{:.12e},{:.12e},{:.12e},{},{},{},{}",
                r.k,
                r.dofs,
                r.eta_sq,
                r.osc_sq,
                r.energy,
                ref_err,
                r.marked1,
                r.marked2,
                r.switch_fired as u8
            )?;
        }
        Ok(())
    }
}

/// Mesh and solution of one loop iteration, kept for verification and
/// post-processing.
#[derive(Debug, Clone)]
pub struct AfemSnapshot {
    pub mesh: Mesh,
    pub u: Vec<f64>,
    /// Elements refined going out of this iteration (the second marked set).
    pub marked: Vec<usize>,
}

#[derive(Debug)]
pub struct AfemResult {
    pub history: AfemHistory,
    pub snapshots: Vec<AfemSnapshot>,
}

/// Greedy bulk prefix: sort values descending (index ascending on ties) and
/// accumulate until the fraction `theta` of the total is reached.
fn greedy_prefix(values: &[f64], theta: f64) -> Vec<usize> {
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut acc = 0.0;
    let mut out = Vec::new();
    for i in order {
        if acc >= theta * total {
            break;
        }
        acc += values[i];
        out.push(i);
    }
    out
}

/// The oscillation switch: fires when `osc >= eta` globally, or when the
/// patch oscillation around the marked set carries at least half of the
/// marked indicator mass (weighted by the switch constant).
pub fn oscillation_switch(
    est: &ErrorEstimate,
    m1: &MarkSet,
    cfg: &MarkingConfig,
    mesh: &Mesh,
) -> bool {
    if est.osc_global_sq >= est.eta_global_sq {
        return true;
    }
    let vadj = mesh.vertex_element_adjacency();
    let mut patch_union = BTreeSet::new();
    for e in m1.iter() {
        for &v in mesh.element_vertices(e) {
            patch_union.extend(vadj[v].iter().copied());
        }
    }
    let patch_osc: f64 = patch_union.iter().map(|&e| est.osc_sq[e]).sum();
    let marked_eta: f64 = m1.iter().map(|e| est.eta_sq[e]).sum();
    cfg.switch_constant * patch_osc >= 0.5 * marked_eta
}

/// Bulk marking: the first set covers `theta1` of the indicator; when the
/// oscillation switch fires the second set extends it to cover `theta2` of
/// the oscillation.
pub fn mark(est: &ErrorEstimate, cfg: &MarkingConfig, mesh: &Mesh) -> (MarkSet, MarkSet, bool) {
    let m1 = MarkSet::from_indices(greedy_prefix(&est.eta_sq, cfg.theta1));
    let fired = oscillation_switch(est, &m1, cfg, mesh);
    let m2 = if fired {
        let mut m2 = m1.clone();
        for e in greedy_prefix(&est.osc_sq, cfg.theta2) {
            m2.insert(e);
        }
        m2
    } else {
        m1.clone()
    };
    (m1, m2, fired)
}

/// Run the adaptive loop from `mesh0`.
///
/// Children inherit their parent's region label, so the coefficient field
/// is the one resolved by the initial mesh and stays fixed across the loop;
/// relabeling refined elements against the geometric interface would change
/// the minimized functional between iterations and destroy the nested-space
/// energy monotonicity. Vertices are never snapped, so the spaces stay
/// exactly nested. The interface is used up front to confirm the charge
/// separation.
#[allow(clippy::too_many_arguments)]
pub fn afem_loop(
    mesh0: Mesh,
    dm: &DielectricModel,
    cs: &ChargeSystem,
    interface: &InterfaceGeometry,
    kappa: f64,
    solve_cfg: &SolveConfig,
    mark_cfg: &MarkingConfig,
    stop: &StopCriteria,
) -> Result<AfemResult> {
    mark_cfg.validate()?;
    crate::geometry::check_sigma(cs, interface)?;
    let mut mesh = mesh0;
    let mut history = AfemHistory::default();
    let mut snapshots = Vec::new();
    let quad = solve_cfg.quadrature(mesh.dim())?;

    for k in 0..stop.max_iterations {
        let wrap = |e: Error| Error::Afem {
            iter: k,
            source: Box::new(e),
        };
        let bundle = solve_rpbe(&mesh, dm, cs, kappa, solve_cfg).map_err(wrap)?;
        let est = estimate(&mesh, dm, cs, &bundle.u, &quad).map_err(wrap)?;
        let dofs = mesh.boundary_vertex.iter().filter(|&&b| !b).count();

        let eta = est.eta_global_sq.sqrt();
        let done = eta <= stop.eta_tol || dofs >= stop.max_dofs || k + 1 == stop.max_iterations;

        let (m1, m2, fired) = mark(&est, mark_cfg, &mesh);
        history.records.push(AfemRecord {
            k,
            dofs,
            eta_sq: est.eta_global_sq,
            osc_sq: est.osc_global_sq,
            energy: bundle.energy,
            ref_error: None,
            marked1: m1.len(),
            marked2: m2.len(),
            switch_fired: fired,
            a1_pass_after_refine: None,
        });
        let marked: Vec<usize> = m2.iter().collect();
        snapshots.push(AfemSnapshot {
            mesh: mesh.clone(),
            u: bundle.u,
            marked: marked.clone(),
        });
        if done || m2.is_empty() {
            break;
        }

        mesh = mesh.bisect(&m2, mark_cfg.depth).map_err(wrap)?;
        let a = assemble_stiffness(&mesh, dm).map_err(wrap)?;
        let rep = check_a1(&a, &mesh, 0.0);
        let pass = rep.passes(mesh.dim());
        if !pass {
            eprintln!(
                "warning: iteration {k}: refined mesh fails the stiffness sign condition \
                 (rho_min = {:.3e}); discrete maximum principle no longer guaranteed",
                rep.rho_min
            );
        }
        history.records.last_mut().unwrap().a1_pass_after_refine = Some(pass);
    }
    Ok(AfemResult { history, snapshots })
}

/// Empirical contraction factors of `delta_k + gamma * osc_k^2` against a
/// fine-mesh reference energy.
#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub deltas: Vec<f64>,
    /// `q_k = delta_k + gamma * osc_k^2`.
    pub quantities: Vec<f64>,
    /// Ratios `q_{k+1} / q_k`, skipping steps where `q_k` is below the
    /// degeneracy floor 1e-12.
    pub factors: Vec<f64>,
    pub nonincreasing: bool,
}

pub fn contraction_monitor(
    history: &AfemHistory,
    gamma: f64,
    e_ref: f64,
) -> Result<ContractionReport> {
    let mut deltas = Vec::new();
    let mut quantities = Vec::new();
    for r in &history.records {
        let slack = 1e-12 * (1.0 + r.energy.abs());
        if e_ref > r.energy + slack {
            return Err(Error::InvalidReference {
                k: r.k,
                e_ref,
                e_k: r.energy,
            });
        }
        let delta = (r.energy - e_ref).max(0.0);
        deltas.push(delta);
        quantities.push(delta + gamma * r.osc_sq);
    }
    let mut factors = Vec::new();
    let mut nonincreasing = true;
    for w in quantities.windows(2) {
        if w[1] > w[0] + 1e-12 * (1.0 + w[0]) {
            nonincreasing = false;
        }
        if w[0] > 1e-12 {
            factors.push(w[1] / w[0]);
        }
    }
    Ok(ContractionReport {
        deltas,
        quantities,
        factors,
        nonincreasing,
    })
}
