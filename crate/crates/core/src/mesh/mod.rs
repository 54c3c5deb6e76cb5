//! Conforming simplicial meshes: structured 2D/3D generators, newest-vertex
//! bisection (2D), region labeling against an interface, and face queries.

mod bisect;

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::geometry::{dist, dot, region_of, sub, DomainBox, InterfaceGeometry, Point, Region};

pub use bisect::MarkSet;

const NO_VERTEX: usize = usize::MAX;

/// A conforming simplicial mesh in 2D (triangles) or 3D (tetrahedra).
///
/// Element vertex slots beyond `dim + 1` hold `usize::MAX`. In 2D the vertex
/// ordering encodes the newest-vertex bookkeeping: vertex 0 is the peak and
/// the refinement edge is the edge opposite it, `(v1, v2)`.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub(crate) dim: usize,
    pub vertices: Vec<Point>,
    pub elements: Vec<[usize; 4]>,
    pub element_region: Vec<Region>,
    pub generation: Vec<u32>,
    pub boundary_vertex: Vec<bool>,
    /// Midpoint parents for vertices created by bisection; `None` for
    /// original or snapped vertices. Indices refer to earlier vertices of
    /// this same mesh, so values given on any ancestor prefix propagate.
    pub lineage: Vec<Option<(usize, usize)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceClass {
    Interior,
    Boundary,
    /// Interior face whose two adjacent elements carry different region labels.
    Interface,
}

/// One face (edge in 2D, triangle in 3D) with adjacency and a fixed normal.
#[derive(Debug, Clone)]
pub struct FaceInfo {
    pub vertices: Vec<usize>,
    /// Adjacent elements; `elements[1]` is `None` on the boundary. The unit
    /// normal points out of `elements[0]`.
    pub elements: [Option<usize>; 2],
    pub normal: Point,
    pub diameter: f64,
    pub class: FaceClass,
}

/// Shape-regularity summary: minimum interior angle in degrees (2D) or the
/// minimum of `dim * inradius / diameter` (3D), plus the deepest bisection
/// generation.
#[derive(Debug, Clone, Copy)]
pub struct ShapeRegularityReport {
    pub min_quality: f64,
    pub max_generation: u32,
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_vertices(&self, e: usize) -> &[usize] {
        &self.elements[e][..self.dim + 1]
    }

    pub fn barycenter(&self, e: usize) -> Point {
        let mut c = [0.0; 3];
        let verts = self.element_vertices(e);
        for &v in verts {
            for k in 0..3 {
                c[k] += self.vertices[v][k];
            }
        }
        let n = verts.len() as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }

    /// Signed volume (area in 2D) of an element.
    pub fn signed_volume(&self, e: usize) -> f64 {
        let v = self.element_vertices(e);
        let p: Vec<Point> = v.iter().map(|&i| self.vertices[i]).collect();
        match self.dim {
            2 => {
                let a = sub(p[1], p[0]);
                let b = sub(p[2], p[0]);
                0.5 * (a[0] * b[1] - a[1] * b[0])
            }
            3 => {
                let a = sub(p[1], p[0]);
                let b = sub(p[2], p[0]);
                let c = sub(p[3], p[0]);
                let cx = [
                    a[1] * b[2] - a[2] * b[1],
                    a[2] * b[0] - a[0] * b[2],
                    a[0] * b[1] - a[1] * b[0],
                ];
                dot(cx, c) / 6.0
            }
            _ => unreachable!(),
        }
    }

    pub fn volume(&self, e: usize) -> f64 {
        self.signed_volume(e).abs()
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.volume(e)).sum()
    }

    /// Element diameter `h_tau` (longest edge).
    pub fn diameter(&self, e: usize) -> f64 {
        let v = self.element_vertices(e);
        let mut h: f64 = 0.0;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                h = h.max(dist(self.vertices[v[i]], self.vertices[v[j]]));
            }
        }
        h
    }

    /// Barycentric coordinates of `x` with respect to element `e`.
    pub fn barycentric(&self, e: usize, x: Point) -> [f64; 4] {
        let vol = self.signed_volume(e);
        let v = self.element_vertices(e);
        let mut lambda = [0.0; 4];
        for (i, l) in lambda.iter_mut().enumerate().take(self.dim + 1) {
            // replace vertex i by x and take the volume ratio
            let mut p: Vec<Point> = v.iter().map(|&j| self.vertices[j]).collect();
            p[i] = x;
            let sv = match self.dim {
                2 => {
                    let a = sub(p[1], p[0]);
                    let b = sub(p[2], p[0]);
                    0.5 * (a[0] * b[1] - a[1] * b[0])
                }
                3 => {
                    let a = sub(p[1], p[0]);
                    let b = sub(p[2], p[0]);
                    let c = sub(p[3], p[0]);
                    let cx = [
                        a[1] * b[2] - a[2] * b[1],
                        a[2] * b[0] - a[0] * b[2],
                        a[0] * b[1] - a[1] * b[0],
                    ];
                    dot(cx, c) / 6.0
                }
                _ => unreachable!(),
            };
            *l = sv / vol;
        }
        lambda
    }

    /// Brute-force point location; test and diagnostics helper.
    pub fn find_containing(&self, x: Point, tol: f64) -> Option<(usize, [f64; 4])> {
        for e in 0..self.n_elements() {
            let lambda = self.barycentric(e, x);
            if lambda[..self.dim + 1].iter().all(|&l| l >= -tol) {
                return Some((e, lambda));
            }
        }
        None
    }

    /// Propagate values given on an ancestor mesh's vertices (a prefix of
    /// this mesh's vertices) to all vertices via midpoint lineage.
    pub fn interpolate_from_ancestor(&self, coarse: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_vertices());
        out.extend_from_slice(coarse);
        for i in coarse.len()..self.n_vertices() {
            match self.lineage[i] {
                Some((a, b)) if a < i && b < i => out.push(0.5 * (out[a] + out[b])),
                _ => {
                    return Err(Error::Structural(format!(
                        "vertex {i} has no midpoint lineage; interpolation requires \
                         an unsnapped bisection chain"
                    )))
                }
            }
        }
        Ok(out)
    }

    /// All faces, interior faces listed once with both neighbors.
    pub fn faces(&self) -> Result<Vec<FaceInfo>> {
        let mut map: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
        for e in 0..self.n_elements() {
            let verts = self.element_vertices(e);
            for skip in 0..verts.len() {
                let mut key: Vec<usize> = verts
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect();
                key.sort_unstable();
                map.entry(key).or_default().push(e);
            }
        }
        let mut keys: Vec<Vec<usize>> = map.keys().cloned().collect();
        keys.sort_unstable();
        let mut faces = Vec::with_capacity(keys.len());
        for key in keys {
            let elems = &map[&key];
            if elems.len() > 2 {
                return Err(Error::NonConforming(format!(
                    "face {key:?} shared by {} elements",
                    elems.len()
                )));
            }
            let e0 = elems[0];
            let e1 = elems.get(1).copied();
            let class = match e1 {
                None => FaceClass::Boundary,
                Some(e1) if self.element_region[e0] != self.element_region[e1] => {
                    FaceClass::Interface
                }
                Some(_) => FaceClass::Interior,
            };
            let normal = self.face_normal(&key, e0);
            let mut diameter: f64 = 0.0;
            for i in 0..key.len() {
                for j in i + 1..key.len() {
                    diameter = diameter.max(dist(self.vertices[key[i]], self.vertices[key[j]]));
                }
            }
            faces.push(FaceInfo {
                vertices: key,
                elements: [Some(e0), e1],
                normal,
                diameter,
                class,
            });
        }
        Ok(faces)
    }

    /// Unit normal of the face, oriented out of element `e0`.
    fn face_normal(&self, face: &[usize], e0: usize) -> Point {
        let mut n = match self.dim {
            2 => {
                let t = sub(self.vertices[face[1]], self.vertices[face[0]]);
                [t[1], -t[0], 0.0]
            }
            3 => {
                let a = sub(self.vertices[face[1]], self.vertices[face[0]]);
                let b = sub(self.vertices[face[2]], self.vertices[face[0]]);
                [
                    a[1] * b[2] - a[2] * b[1],
                    a[2] * b[0] - a[0] * b[2],
                    a[0] * b[1] - a[1] * b[0],
                ]
            }
            _ => unreachable!(),
        };
        let len = (dot(n, n)).sqrt();
        for k in 0..3 {
            n[k] /= len;
        }
        // orient out of e0
        let mut fc = [0.0; 3];
        for &v in face {
            for k in 0..3 {
                fc[k] += self.vertices[v][k];
            }
        }
        for k in 0..3 {
            fc[k] /= face.len() as f64;
        }
        let out = sub(fc, self.barycenter(e0));
        if dot(n, out) < 0.0 {
            for k in 0..3 {
                n[k] = -n[k];
            }
        }
        n
    }

    /// Check conformity: every face shared by exactly 2 elements or on the
    /// boundary, all volumes positive.
    pub fn check_conformity(&self) -> Result<()> {
        for e in 0..self.n_elements() {
            let v = self.signed_volume(e);
            if v <= 0.0 {
                return Err(Error::DegenerateElement { element: e, volume: v });
            }
        }
        self.faces()?;
        Ok(())
    }

    /// Label every element from the interface classification of its
    /// barycenter.
    pub fn assign_regions(&mut self, ig: &InterfaceGeometry) {
        for e in 0..self.n_elements() {
            self.element_region[e] = region_of(ig, self.barycenter(e));
        }
    }

    /// Project non-boundary vertices within `tol` of the interface onto it,
    /// giving a second-order fitted discrete interface on the initial mesh.
    /// Snapped vertices lose their midpoint lineage, so this is meant for
    /// initial meshes, not inside a refinement chain.
    pub fn snap_to_interface(&mut self, ig: &InterfaceGeometry, tol: f64) {
        for i in 0..self.n_vertices() {
            if self.boundary_vertex[i] {
                continue;
            }
            if ig.signed_distance(self.vertices[i]).abs() <= tol {
                self.vertices[i] = ig.project(self.vertices[i]);
                self.lineage[i] = None;
            }
        }
    }

    /// Elements adjacent to each vertex.
    pub fn vertex_element_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_vertices()];
        for e in 0..self.n_elements() {
            for &v in self.element_vertices(e) {
                adj[v].push(e);
            }
        }
        adj
    }

    /// The patch `omega_tau` of every element: all elements sharing at
    /// least one vertex with it.
    pub fn element_patches(&self) -> Vec<Vec<usize>> {
        let vadj = self.vertex_element_adjacency();
        let mut patches = Vec::with_capacity(self.n_elements());
        for e in 0..self.n_elements() {
            let mut set = BTreeSet::new();
            for &v in self.element_vertices(e) {
                set.extend(vadj[v].iter().copied());
            }
            patches.push(set.into_iter().collect());
        }
        patches
    }

    pub fn shape_regularity_report(&self) -> ShapeRegularityReport {
        let mut min_quality = f64::INFINITY;
        for e in 0..self.n_elements() {
            let q = match self.dim {
                2 => self.min_angle_deg(e),
                _ => {
                    // dim * inradius / diameter; inradius = dim V / (sum of facet areas)
                    let v = self.volume(e);
                    let verts = self.element_vertices(e);
                    let mut area_sum = 0.0;
                    for skip in 0..4 {
                        let f: Vec<Point> = verts
                            .iter()
                            .enumerate()
                            .filter(|&(i, _)| i != skip)
                            .map(|(_, &j)| self.vertices[j])
                            .collect();
                        let a = sub(f[1], f[0]);
                        let b = sub(f[2], f[0]);
                        let cx = [
                            a[1] * b[2] - a[2] * b[1],
                            a[2] * b[0] - a[0] * b[2],
                            a[0] * b[1] - a[1] * b[0],
                        ];
                        area_sum += 0.5 * dot(cx, cx).sqrt();
                    }
                    let inradius = 3.0 * v / area_sum;
                    3.0 * inradius / self.diameter(e)
                }
            };
            min_quality = min_quality.min(q);
        }
        ShapeRegularityReport {
            min_quality,
            max_generation: self.generation.iter().copied().max().unwrap_or(0),
        }
    }

    fn min_angle_deg(&self, e: usize) -> f64 {
        let v = self.element_vertices(e);
        let p: Vec<Point> = v.iter().map(|&i| self.vertices[i]).collect();
        let mut min = f64::INFINITY;
        for i in 0..3 {
            let a = sub(p[(i + 1) % 3], p[i]);
            let b = sub(p[(i + 2) % 3], p[i]);
            let cosang = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
            min = min.min(cosang.clamp(-1.0, 1.0).acos());
        }
        min.to_degrees()
    }

    pub(crate) fn finalize_boundary_flags(&mut self) {
        let mut flags = vec![false; self.n_vertices()];
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        for e in 0..self.n_elements() {
            let verts = self.element_vertices(e);
            for skip in 0..verts.len() {
                let mut key: Vec<usize> = verts
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect();
                key.sort_unstable();
                *count.entry(key).or_insert(0) += 1;
            }
        }
        for (key, c) in count {
            if c == 1 {
                for v in key {
                    flags[v] = true;
                }
            }
        }
        self.boundary_vertex = flags;
    }
}

fn element4(v: &[usize]) -> [usize; 4] {
    let mut e = [NO_VERTEX; 4];
    e[..v.len()].copy_from_slice(v);
    e
}

/// Uniform 2D grid of `2 n^2` isosceles right triangles on the box, peaks at
/// the right-angle corners so every refinement edge is a hypotenuse.
pub fn build_square_grid(n: usize, bx: &DomainBox) -> Result<Mesh> {
    if n < 1 {
        return Err(Error::Model("grid resolution must be >= 1".into()));
    }
    let (hx, hy) = (
        (bx.upper[0] - bx.lower[0]) / n as f64,
        (bx.upper[1] - bx.lower[1]) / n as f64,
    );
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([bx.lower[0] + i as f64 * hx, bx.lower[1] + j as f64 * hy, 0.0]);
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = idx(i, j);
            let b = idx(i + 1, j);
            let c = idx(i + 1, j + 1);
            let d = idx(i, j + 1);
            // diagonal a-c; peaks at the right angles b and d
            elements.push(element4(&[b, c, a]));
            elements.push(element4(&[d, a, c]));
        }
    }
    let ne = elements.len();
    let nv = vertices.len();
    let mut mesh = Mesh {
        dim: 2,
        vertices,
        elements,
        element_region: vec![Region::Solvent; ne],
        generation: vec![0; ne],
        boundary_vertex: vec![false; nv],
        lineage: vec![None; nv],
    };
    mesh.finalize_boundary_flags();
    Ok(mesh)
}

/// Uniform 3D grid of `5 n^3` tetrahedra: each cube split into 4 corner
/// tetrahedra plus a central one, with the split reflected on neighboring
/// cubes so the mesh is conforming.
pub fn build_cube_5tet_grid(n: usize, bx: &DomainBox) -> Result<Mesh> {
    build_cube_grid(n, bx, CubeSplit::Five)
}

/// Uniform 3D grid of `6 n^3` tetrahedra (Kuhn triangulation). Conforming,
/// but its stiffness pattern has zero entries along cube diagonals, so it is
/// the negative control for the grid audit.
pub fn build_cube_6tet_grid(n: usize, bx: &DomainBox) -> Result<Mesh> {
    build_cube_grid(n, bx, CubeSplit::Six)
}

enum CubeSplit {
    Five,
    Six,
}

fn build_cube_grid(n: usize, bx: &DomainBox, split: CubeSplit) -> Result<Mesh> {
    if n < 1 {
        return Err(Error::Model("grid resolution must be >= 1".into()));
    }
    let h = [
        (bx.upper[0] - bx.lower[0]) / n as f64,
        (bx.upper[1] - bx.lower[1]) / n as f64,
        (bx.upper[2] - bx.lower[2]) / n as f64,
    ];
    let m = n + 1;
    let mut vertices = Vec::with_capacity(m * m * m);
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                vertices.push([
                    bx.lower[0] + i as f64 * h[0],
                    bx.lower[1] + j as f64 * h[1],
                    bx.lower[2] + k as f64 * h[2],
                ]);
            }
        }
    }
    let idx = |i: usize, j: usize, k: usize| (k * m + j) * m + i;
    let mut elements = Vec::new();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let v = |dx: usize, dy: usize, dz: usize| idx(i + dx, j + dy, k + dz);
                match split {
                    CubeSplit::Five => {
                        // corner tets at an alternating set of 4 corners plus
                        // the central tet; parity flips the reflection
                        let even = (i + j + k) % 2 == 0;
                        let tets: [[usize; 4]; 5] = if even {
                            [
                                [v(0, 0, 0), v(1, 0, 0), v(0, 1, 0), v(0, 0, 1)],
                                [v(1, 1, 0), v(0, 1, 0), v(1, 0, 0), v(1, 1, 1)],
                                [v(1, 0, 1), v(0, 0, 1), v(1, 1, 1), v(1, 0, 0)],
                                [v(0, 1, 1), v(1, 1, 1), v(0, 0, 1), v(0, 1, 0)],
                                [v(1, 0, 0), v(0, 1, 0), v(0, 0, 1), v(1, 1, 1)],
                            ]
                        } else {
                            [
                                [v(1, 0, 0), v(0, 0, 0), v(1, 1, 0), v(1, 0, 1)],
                                [v(0, 1, 0), v(1, 1, 0), v(0, 0, 0), v(0, 1, 1)],
                                [v(0, 0, 1), v(1, 0, 1), v(0, 1, 1), v(0, 0, 0)],
                                [v(1, 1, 1), v(0, 1, 1), v(1, 0, 1), v(1, 1, 0)],
                                [v(0, 0, 0), v(1, 1, 0), v(1, 0, 1), v(0, 1, 1)],
                            ]
                        };
                        elements.extend(tets.iter().map(|t| element4(t)));
                    }
                    CubeSplit::Six => {
                        // Kuhn: six tets around the main diagonal 000 -> 111
                        const PERMS: [[usize; 3]; 6] = [
                            [0, 1, 2],
                            [0, 2, 1],
                            [1, 0, 2],
                            [1, 2, 0],
                            [2, 0, 1],
                            [2, 1, 0],
                        ];
                        for perm in PERMS {
                            let mut d = [0usize; 3];
                            let mut tet = [v(0, 0, 0), 0, 0, 0];
                            for (s, &axis) in perm.iter().enumerate() {
                                d[axis] = 1;
                                tet[s + 1] = v(d[0], d[1], d[2]);
                            }
                            elements.push(element4(&tet));
                        }
                    }
                }
            }
        }
    }
    // fix orientation
    let ne = elements.len();
    let nv = vertices.len();
    let mut mesh = Mesh {
        dim: 3,
        vertices,
        elements,
        element_region: vec![Region::Solvent; ne],
        generation: vec![0; ne],
        boundary_vertex: vec![false; nv],
        lineage: vec![None; nv],
    };
    for e in 0..ne {
        if mesh.signed_volume(e) < 0.0 {
            mesh.elements[e].swap(0, 1);
        }
    }
    mesh.finalize_boundary_flags();
    Ok(mesh)
}

/// Two passes of mark-all bisection: quadrisects every triangle of a 2D mesh.
pub fn uniform_refine(mesh: &Mesh) -> Result<Mesh> {
    let all = MarkSet::all(mesh);
    let m1 = mesh.bisect(&all, 1)?;
    let all = MarkSet::all(&m1);
    m1.bisect(&all, 1)
}
