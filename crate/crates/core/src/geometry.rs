//! Physical model: point charges, dielectric regions, the molecular/solvent
//! interface, the analytic singular field G and the outer boundary data g.
//!
//! All quantities are dimensionless; charge magnitudes are assumed to carry
//! the full physical prefactor so that G and g use the same `q_i`.

use crate::error::{Error, Result};

/// Coordinates are stored as `[x, y, z]`; in 2D the last entry is zero.
pub type Point = [f64; 3];

/// Guard radius around charges; quadrature points never get this close
/// because the coefficients of the singular terms vanish on the molecular
/// region, so tripping it indicates a programming error.
pub const SINGULARITY_GUARD: f64 = 1e-12;

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

/// A single point charge `q_i` at `x_i`, scaled so that no further physical
/// prefactor is needed.
#[derive(Debug, Clone, Copy)]
pub struct Charge {
    pub position: Point,
    pub magnitude: f64,
}

/// The collection of charges together with the molecular dielectric and the
/// minimum charge-to-solvent separation `sigma`.
#[derive(Debug, Clone)]
pub struct ChargeSystem {
    pub charges: Vec<Charge>,
    pub eps_m: f64,
    pub sigma: f64,
}

impl ChargeSystem {
    pub fn new(charges: Vec<Charge>, eps_m: f64, sigma: f64) -> Result<Self> {
        if !(eps_m > 0.0) {
            return Err(Error::Model(format!("eps_m must be positive, got {eps_m}")));
        }
        if !(sigma > 0.0) {
            return Err(Error::Model(format!("sigma must be positive, got {sigma}")));
        }
        for (i, c) in charges.iter().enumerate() {
            if !c.magnitude.is_finite() || c.magnitude == 0.0 {
                return Err(Error::Model(format!(
                    "charge {i} has invalid magnitude {}",
                    c.magnitude
                )));
            }
            for (j, d) in charges.iter().enumerate().skip(i + 1) {
                if dist(c.position, d.position) == 0.0 {
                    return Err(Error::Model(format!("charges {i} and {j} coincide")));
                }
            }
        }
        Ok(Self {
            charges,
            eps_m,
            sigma,
        })
    }

    /// A system with no charges; G and g are identically zero.
    pub fn empty(eps_m: f64) -> Self {
        Self {
            charges: Vec::new(),
            eps_m,
            sigma: 1.0,
        }
    }
}

/// Dielectric constants of the two regions and the value of `kappa_bar^2`
/// in the solvent (`kappa_bar^2 = 0` in the molecular region by definition).
#[derive(Debug, Clone, Copy)]
pub struct DielectricModel {
    pub eps_m: f64,
    pub eps_s: f64,
    pub kappa_bar_sq_s: f64,
}

impl DielectricModel {
    pub fn new(eps_m: f64, eps_s: f64, kappa: f64) -> Result<Self> {
        if !(eps_m > 0.0) || !(eps_s > 0.0) {
            return Err(Error::Model(format!(
                "dielectric constants must be positive (eps_m={eps_m}, eps_s={eps_s})"
            )));
        }
        if kappa < 0.0 {
            return Err(Error::Model(format!("kappa must be nonnegative, got {kappa}")));
        }
        if eps_s < eps_m {
            // Physical regime has eps_s >= eps_m; allowed, but unusual.
            eprintln!("warning: eps_s = {eps_s} < eps_m = {eps_m} is outside the physical regime");
        }
        Ok(Self {
            eps_m,
            eps_s,
            kappa_bar_sq_s: eps_s * kappa * kappa,
        })
    }

    pub fn eps(&self, region: Region) -> f64 {
        match region {
            Region::Molecular => self.eps_m,
            Region::Solvent => self.eps_s,
        }
    }

    pub fn kappa_bar_sq(&self, region: Region) -> f64 {
        match region {
            Region::Molecular => 0.0,
            Region::Solvent => self.kappa_bar_sq_s,
        }
    }
}

/// Region labels for points and elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Molecular,
    Solvent,
}

/// The interface separating the molecular region from the solvent, with
/// outward normal pointing from molecular into solvent.
#[derive(Debug, Clone)]
pub enum InterfaceGeometry {
    /// Circle (2D) or sphere (3D).
    Sphere { center: Point, radius: f64 },
    /// Closed polyline, counterclockwise, 2D only.
    Polyline { vertices: Vec<Point> },
}

/// Tolerance for classifying points exactly on the interface; such points
/// count as molecular so the cutoff coefficients vanish there.
const INTERFACE_TOL: f64 = 1e-12;

impl InterfaceGeometry {
    /// Signed distance to the interface, negative inside the molecular region.
    pub fn signed_distance(&self, x: Point) -> f64 {
        match self {
            InterfaceGeometry::Sphere { center, radius } => dist(x, *center) - radius,
            InterfaceGeometry::Polyline { vertices } => {
                let n = vertices.len();
                let mut d = f64::INFINITY;
                let mut winding = 0i32;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    d = d.min(point_segment_distance(x, a, b));
                    // crossing-number winding test in the xy-plane
                    if (a[1] <= x[1]) != (b[1] <= x[1]) {
                        let t = (x[1] - a[1]) / (b[1] - a[1]);
                        let cx = a[0] + t * (b[0] - a[0]);
                        if cx > x[0] {
                            winding += if b[1] > a[1] { 1 } else { -1 };
                        }
                    }
                }
                if winding != 0 {
                    -d
                } else {
                    d
                }
            }
        }
    }

    pub fn project(&self, x: Point) -> Point {
        match self {
            InterfaceGeometry::Sphere { center, radius } => {
                let r = dist(x, *center);
                if r == 0.0 {
                    return [center[0] + radius, center[1], center[2]];
                }
                let s = radius / r;
                [
                    center[0] + s * (x[0] - center[0]),
                    center[1] + s * (x[1] - center[1]),
                    center[2] + s * (x[2] - center[2]),
                ]
            }
            InterfaceGeometry::Polyline { vertices } => {
                let n = vertices.len();
                let mut best = vertices[0];
                let mut bd = f64::INFINITY;
                for i in 0..n {
                    let p = closest_on_segment(x, vertices[i], vertices[(i + 1) % n]);
                    let d = dist(x, p);
                    if d < bd {
                        bd = d;
                        best = p;
                    }
                }
                best
            }
        }
    }
}

fn closest_on_segment(x: Point, a: Point, b: Point) -> Point {
    let ab = sub(b, a);
    let len_sq = dot(ab, ab);
    if len_sq == 0.0 {
        return a;
    }
    let t = (dot(sub(x, a), ab) / len_sq).clamp(0.0, 1.0);
    [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]]
}

fn point_segment_distance(x: Point, a: Point, b: Point) -> f64 {
    dist(x, closest_on_segment(x, a, b))
}

/// Axis-aligned computational box.
#[derive(Debug, Clone, Copy)]
pub struct DomainBox {
    pub lower: Point,
    pub upper: Point,
}

impl DomainBox {
    pub fn new(lower: Point, upper: Point) -> Result<Self> {
        if lower[0] >= upper[0] || lower[1] >= upper[1] {
            return Err(Error::Model(format!("empty box {lower:?}..{upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        let z = if dim == 3 { 1.0 } else { 0.0 };
        Self {
            lower: [0.0, 0.0, 0.0],
            upper: [1.0, 1.0, z],
        }
    }

    pub fn contains(&self, x: Point, dim: usize) -> bool {
        (0..dim).all(|k| x[k] >= self.lower[k] && x[k] <= self.upper[k])
    }
}

fn check_guard(cs: &ChargeSystem, x: Point) -> Result<()> {
    for (i, c) in cs.charges.iter().enumerate() {
        let d = dist(x, c.position);
        if d < SINGULARITY_GUARD {
            return Err(Error::Singularity { charge: i, dist: d });
        }
    }
    Ok(())
}

/// The singular field `G(x) = sum_i G_i(x)` of the charge system.
///
/// 3D: `G_i = q_i / (eps_m |x - x_i|)`. 2D: `G_i = -q_i/(2 pi eps_m) ln|x - x_i|`.
pub fn eval_g(cs: &ChargeSystem, x: Point, dim: usize) -> Result<f64> {
    check_guard(cs, x)?;
    let mut g = 0.0;
    for c in &cs.charges {
        let r = dist(x, c.position);
        g += match dim {
            3 => c.magnitude / (cs.eps_m * r),
            2 => -c.magnitude / (2.0 * std::f64::consts::PI * cs.eps_m) * r.ln(),
            _ => return Err(Error::Model(format!("unsupported dimension {dim}"))),
        };
    }
    Ok(g)
}

/// Gradient of [`eval_g`].
pub fn eval_grad_g(cs: &ChargeSystem, x: Point, dim: usize) -> Result<Point> {
    check_guard(cs, x)?;
    let mut grad = [0.0; 3];
    for c in &cs.charges {
        let d = sub(x, c.position);
        let r = norm(d);
        let scale = match dim {
            3 => -c.magnitude / (cs.eps_m * r * r * r),
            2 => -c.magnitude / (2.0 * std::f64::consts::PI * cs.eps_m * r * r),
            _ => return Err(Error::Model(format!("unsupported dimension {dim}"))),
        };
        for k in 0..dim {
            grad[k] += scale * d[k];
        }
    }
    Ok(grad)
}

/// Screened-Coulomb boundary data `g` on the outer boundary.
///
/// 3D: `g = sum_i q_i e^{-kappa r_i} / (eps_s r_i)`; reduces to
/// `(eps_m/eps_s) G` at `kappa = 0`. The 2D form mirrors the same pattern on
/// the logarithmic fundamental solution.
pub fn eval_boundary_g(
    cs: &ChargeSystem,
    dm: &DielectricModel,
    kappa: f64,
    x: Point,
    dim: usize,
) -> Result<f64> {
    check_guard(cs, x)?;
    let mut g = 0.0;
    for c in &cs.charges {
        let r = dist(x, c.position);
        g += match dim {
            3 => c.magnitude * (-kappa * r).exp() / (dm.eps_s * r),
            2 => {
                -c.magnitude / (2.0 * std::f64::consts::PI * dm.eps_s) * (-kappa * r).exp() * r.ln()
            }
            _ => return Err(Error::Model(format!("unsupported dimension {dim}"))),
        };
    }
    Ok(g)
}

/// Classify a point as molecular or solvent; points on the interface (within
/// 1e-12) classify as molecular.
pub fn region_of(ig: &InterfaceGeometry, x: Point) -> Region {
    if ig.signed_distance(x) <= INTERFACE_TOL {
        Region::Molecular
    } else {
        Region::Solvent
    }
}

/// Minimum distance from the charges to the interface; errors if any charge
/// is outside the molecular region or closer than `cs.sigma`.
pub fn check_sigma(cs: &ChargeSystem, ig: &InterfaceGeometry) -> Result<f64> {
    let mut min_dist = f64::INFINITY;
    for (i, c) in cs.charges.iter().enumerate() {
        let sd = ig.signed_distance(c.position);
        if sd >= 0.0 {
            return Err(Error::Model(format!(
                "charge {i} lies outside the molecular region (signed distance {sd:.3e})"
            )));
        }
        let d = -sd;
        if d < cs.sigma {
            return Err(Error::SigmaViolation {
                charge: i,
                dist: d,
                sigma: cs.sigma,
            });
        }
        min_dist = min_dist.min(d);
    }
    Ok(min_dist)
}

/// Parse a charge file: one `x y [z] q` line per charge, `#` comments.
pub fn parse_charge_file(text: &str, dim: usize, eps_m: f64, sigma: f64) -> Result<ChargeSystem> {
    let mut charges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::Config(format!("charge file line {}: bad number '{t}'", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if fields.len() != dim + 1 {
            return Err(Error::Config(format!(
                "charge file line {}: expected {} fields, got {}",
                lineno + 1,
                dim + 1,
                fields.len()
            )));
        }
        let position = if dim == 2 {
            [fields[0], fields[1], 0.0]
        } else {
            [fields[0], fields[1], fields[2]]
        };
        charges.push(Charge {
            position,
            magnitude: fields[dim],
        });
    }
    ChargeSystem::new(charges, eps_m, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_charge(q: f64, at: Point, eps_m: f64) -> ChargeSystem {
        ChargeSystem::new(
            vec![Charge {
                position: at,
                magnitude: q,
            }],
            eps_m,
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn g_single_charge_3d() {
        let cs = one_charge(1.0, [0.0; 3], 1.0);
        assert_eq!(eval_g(&cs, [2.0, 0.0, 0.0], 3).unwrap(), 0.5);
        let cs = one_charge(1.0, [0.0; 3], 2.0);
        assert_eq!(eval_g(&cs, [1.0, 0.0, 0.0], 3).unwrap(), 0.5);
    }

    #[test]
    fn g_two_charges_symmetry() {
        let cs = ChargeSystem::new(
            vec![
                Charge {
                    position: [1.0, 0.0, 0.0],
                    magnitude: 1.0,
                },
                Charge {
                    position: [-1.0, 0.0, 0.0],
                    magnitude: 1.0,
                },
            ],
            1.0,
            0.1,
        )
        .unwrap();
        assert_eq!(eval_g(&cs, [0.0; 3], 3).unwrap(), 2.0);
        let grad = eval_grad_g(&cs, [0.0; 3], 3).unwrap();
        assert_eq!(grad, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn grad_g_analytic() {
        let cs = one_charge(1.0, [0.0; 3], 1.0);
        let g = eval_grad_g(&cs, [1.0, 0.0, 0.0], 3).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-15 && g[1] == 0.0 && g[2] == 0.0);
    }

    #[test]
    fn grad_g_matches_finite_differences() {
        let cs = ChargeSystem::new(
            vec![
                Charge {
                    position: [0.2, -0.1, 0.3],
                    magnitude: 1.5,
                },
                Charge {
                    position: [-0.4, 0.5, -0.2],
                    magnitude: -0.7,
                },
            ],
            2.0,
            0.1,
        )
        .unwrap();
        let h = 1e-5;
        for &x in &[[1.3, 0.7, -0.9], [2.0, 1.0, 1.0], [-1.5, -1.2, 0.4]] {
            let grad = eval_grad_g(&cs, x, 3).unwrap();
            for k in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let fd = (eval_g(&cs, xp, 3).unwrap() - eval_g(&cs, xm, 3).unwrap()) / (2.0 * h);
                assert!(
                    (grad[k] - fd).abs() <= 1e-6 * grad[k].abs().max(1.0),
                    "component {k}: {} vs {}",
                    grad[k],
                    fd
                );
            }
        }
    }

    #[test]
    fn grad_g_matches_finite_differences_2d() {
        let cs = one_charge(2.0, [0.1, 0.2, 0.0], 1.0);
        let h = 1e-5;
        let x = [1.1, -0.4, 0.0];
        let grad = eval_grad_g(&cs, x, 2).unwrap();
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (eval_g(&cs, xp, 2).unwrap() - eval_g(&cs, xm, 2).unwrap()) / (2.0 * h);
            assert!((grad[k] - fd).abs() < 1e-6 * grad[k].abs().max(1.0));
        }
    }

    #[test]
    fn boundary_g_values() {
        let cs = one_charge(1.0, [0.0; 3], 1.0);
        let dm = DielectricModel::new(1.0, 1.0, 0.0).unwrap();
        let v = eval_boundary_g(&cs, &dm, 0.0, [2.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(v, 0.5);

        let v = eval_boundary_g(&cs, &dm, 1.0, [1.0, 0.0, 0.0], 3).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);

        let dm80 = DielectricModel::new(2.0, 80.0, 1.0).unwrap();
        let v = eval_boundary_g(&cs, &dm80, 1.0, [0.0, 1.0, 0.0], 3).unwrap();
        assert!((v - (-1.0f64).exp() / 80.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_g_reduces_to_scaled_g_at_zero_kappa() {
        let cs = one_charge(1.3, [0.1, 0.0, 0.2], 2.0);
        let dm = DielectricModel::new(2.0, 80.0, 0.0).unwrap();
        let x = [1.5, -0.3, 0.8];
        let g = eval_g(&cs, x, 3).unwrap();
        let bg = eval_boundary_g(&cs, &dm, 0.0, x, 3).unwrap();
        assert!((bg - dm.eps_m / dm.eps_s * g).abs() < 1e-14);
    }

    #[test]
    fn singularity_guard_trips() {
        let cs = one_charge(1.0, [0.0; 3], 1.0);
        assert!(matches!(
            eval_g(&cs, [1e-13, 0.0, 0.0], 3),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn g_linear_in_charges() {
        let a = Charge {
            position: [0.3, 0.1, 0.0],
            magnitude: 2.0,
        };
        let b = Charge {
            position: [-0.2, 0.4, 0.0],
            magnitude: -1.0,
        };
        let both = ChargeSystem::new(vec![a, b], 1.0, 0.1).unwrap();
        let ca = ChargeSystem::new(vec![a], 1.0, 0.1).unwrap();
        let cb = ChargeSystem::new(vec![b], 1.0, 0.1).unwrap();
        let x = [2.0, -1.0, 0.0];
        for dim in [2usize, 3] {
            let sum = eval_g(&ca, x, dim).unwrap() + eval_g(&cb, x, dim).unwrap();
            assert_eq!(eval_g(&both, x, dim).unwrap(), sum);
        }
    }

    #[test]
    fn g_harmonic_away_from_charges() {
        // 7-point discrete Laplacian on a fixed stencil, 3D.
        let cs = one_charge(1.0, [0.0; 3], 1.0);
        let h = 1e-3;
        for &x in &[[1.0, 0.5, 0.2], [-0.7, 1.3, 0.9], [2.0, -1.5, 0.3]] {
            let mut lap = -6.0 * eval_g(&cs, x, 3).unwrap();
            for k in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                lap += eval_g(&cs, xp, 3).unwrap() + eval_g(&cs, xm, 3).unwrap();
            }
            lap /= h * h;
            let scale = eval_g(&cs, x, 3).unwrap().abs();
            assert!(lap.abs() < 1e-4 * scale / (h * h) * h * h + 1e-6, "lap = {lap}");
        }
    }

    #[test]
    fn region_classification() {
        let ig = InterfaceGeometry::Sphere {
            center: [0.0; 3],
            radius: 1.0,
        };
        assert_eq!(region_of(&ig, [0.0; 3]), Region::Molecular);
        assert_eq!(region_of(&ig, [2.0, 0.0, 0.0]), Region::Solvent);
        // tie-break: points on the interface are molecular
        assert_eq!(region_of(&ig, [1.0, 0.0, 0.0]), Region::Molecular);
    }

    #[test]
    fn region_flips_at_radius() {
        let ig = InterfaceGeometry::Sphere {
            center: [0.2, -0.1, 0.0],
            radius: 0.7,
        };
        for i in 0..50 {
            let theta = i as f64 * 0.13;
            let dir = [theta.cos(), theta.sin(), 0.0];
            let inside = [0.2 + 0.699 * dir[0], -0.1 + 0.699 * dir[1], 0.0];
            let outside = [0.2 + 0.701 * dir[0], -0.1 + 0.701 * dir[1], 0.0];
            assert_eq!(region_of(&ig, inside), Region::Molecular);
            assert_eq!(region_of(&ig, outside), Region::Solvent);
        }
    }

    #[test]
    fn sigma_check() {
        let ig = InterfaceGeometry::Sphere {
            center: [0.0; 3],
            radius: 1.0,
        };
        let cs = ChargeSystem::new(
            vec![Charge {
                position: [0.0; 3],
                magnitude: 1.0,
            }],
            1.0,
            0.5,
        )
        .unwrap();
        assert_eq!(check_sigma(&cs, &ig).unwrap(), 1.0);

        let close = ChargeSystem::new(
            vec![Charge {
                position: [0.8, 0.0, 0.0],
                magnitude: 1.0,
            }],
            1.0,
            0.5,
        )
        .unwrap();
        match check_sigma(&close, &ig) {
            Err(Error::SigmaViolation { dist, .. }) => assert!((dist - 0.2).abs() < 1e-12),
            other => panic!("expected sigma violation, got {other:?}"),
        }

        let pair = ChargeSystem::new(
            vec![
                Charge {
                    position: [0.3, 0.0, 0.0],
                    magnitude: 1.0,
                },
                Charge {
                    position: [-0.3, 0.0, 0.0],
                    magnitude: 1.0,
                },
            ],
            1.0,
            0.5,
        )
        .unwrap();
        assert!((check_sigma(&pair, &ig).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn polyline_region() {
        // unit square polyline
        let ig = InterfaceGeometry::Polyline {
            vertices: vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
        };
        assert_eq!(region_of(&ig, [0.5, 0.5, 0.0]), Region::Molecular);
        assert_eq!(region_of(&ig, [1.5, 0.5, 0.0]), Region::Solvent);
    }

    #[test]
    fn charge_file_parsing() {
        let cs = parse_charge_file("# comment\n0.0 0.0 1.0\n0.2 0.1 -0.5 # trailing\n", 2, 2.0, 0.3)
            .unwrap();
        assert_eq!(cs.charges.len(), 2);
        assert_eq!(cs.charges[1].magnitude, -0.5);
        assert!(parse_charge_file("0.0 0.0\n", 2, 2.0, 0.3).is_err());
    }
}
