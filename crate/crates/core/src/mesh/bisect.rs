//! Newest-vertex bisection with recursive conforming closure (2D).
//!
//! Elements store the peak (newest) vertex first; the refinement edge is the
//! edge opposite it. Bisecting `(p, v1, v2)` at the midpoint `m` of
//! `(v1, v2)` yields `(m, p, v1)` and `(m, v2, p)`, so the children's
//! refinement edges are the parent's legs and the similarity classes stay
//! finite.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::geometry::{InterfaceGeometry, Point};

use super::Mesh;

/// A set of element indices selected for refinement.
#[derive(Debug, Clone, Default)]
pub struct MarkSet {
    indices: BTreeSet<usize>,
}

impl MarkSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        Self {
            indices: indices.into_iter().collect(),
        }
    }

    pub fn all(mesh: &Mesh) -> Self {
        Self::from_indices(0..mesh.n_elements())
    }

    pub fn insert(&mut self, e: usize) {
        self.indices.insert(e);
    }

    pub fn contains(&self, e: usize) -> bool {
        self.indices.contains(&e)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if let Some(&max) = self.indices.iter().next_back() {
            if max >= mesh.n_elements() {
                return Err(Error::Structural(format!(
                    "marked element {max} out of range ({} elements)",
                    mesh.n_elements()
                )));
            }
        }
        Ok(())
    }
}

type EdgeKey = (usize, usize);

fn edge_key(a: usize, b: usize) -> EdgeKey {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

struct Tri {
    v: [usize; 3],
    region: crate::geometry::Region,
    gen: u32,
    target: Option<u32>,
}

impl Tri {
    fn ref_edge(&self) -> EdgeKey {
        edge_key(self.v[1], self.v[2])
    }
}

struct Refiner<'a> {
    vertices: Vec<Point>,
    lineage: Vec<Option<(usize, usize)>>,
    tris: Vec<Tri>,
    edges: HashMap<EdgeKey, [Option<usize>; 2]>,
    snap: Option<&'a InterfaceGeometry>,
    splits: usize,
}

impl<'a> Refiner<'a> {
    fn new(mesh: &Mesh, snap: Option<&'a InterfaceGeometry>) -> Result<Self> {
        let tris: Vec<Tri> = (0..mesh.n_elements())
            .map(|e| Tri {
                v: [mesh.elements[e][0], mesh.elements[e][1], mesh.elements[e][2]],
                region: mesh.element_region[e],
                gen: mesh.generation[e],
                target: None,
            })
            .collect();
        let mut edges: HashMap<EdgeKey, [Option<usize>; 2]> = HashMap::new();
        for (t, tri) in tris.iter().enumerate() {
            for i in 0..3 {
                let key = edge_key(tri.v[i], tri.v[(i + 1) % 3]);
                let slot = edges.entry(key).or_insert([None, None]);
                if slot[0].is_none() {
                    slot[0] = Some(t);
                } else if slot[1].is_none() {
                    slot[1] = Some(t);
                } else {
                    return Err(Error::NonConforming(format!(
                        "edge {key:?} shared by more than 2 triangles"
                    )));
                }
            }
        }
        Ok(Self {
            vertices: mesh.vertices.clone(),
            lineage: mesh.lineage.clone(),
            tris,
            edges,
            snap,
            splits: 0,
        })
    }

    fn neighbor_across(&self, t: usize, e: EdgeKey) -> Option<usize> {
        let slot = self.edges.get(&e)?;
        match *slot {
            [Some(a), Some(b)] => {
                if a == t {
                    Some(b)
                } else if b == t {
                    Some(a)
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    fn remove_edge_ref(&mut self, key: EdgeKey, t: usize) {
        if let Some(slot) = self.edges.get_mut(&key) {
            if slot[0] == Some(t) {
                slot[0] = slot[1];
            } else if slot[1] != Some(t) {
                return;
            }
            slot[1] = None;
            if slot[0].is_none() {
                self.edges.remove(&key);
            }
        }
    }

    fn add_edge_ref(&mut self, key: EdgeKey, t: usize) {
        let slot = self.edges.entry(key).or_insert([None, None]);
        if slot[0].is_none() {
            slot[0] = Some(t);
        } else {
            debug_assert!(slot[1].is_none());
            slot[1] = Some(t);
        }
    }

    /// Split `t` (and its compatible neighbor, if any) across `t`'s
    /// refinement edge.
    fn split_pair(&mut self, t: usize, nb: Option<usize>, e: EdgeKey) {
        let (a, b) = e;
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        let mut mid = [
            0.5 * (pa[0] + pb[0]),
            0.5 * (pa[1] + pb[1]),
            0.0,
        ];
        let mut lineage = Some((a, b));
        if let Some(ig) = self.snap {
            let da = ig.signed_distance(pa);
            let db = ig.signed_distance(pb);
            if da * db < 0.0 {
                mid = ig.project(mid);
                lineage = None;
            }
        }
        let m = self.vertices.len();
        self.vertices.push(mid);
        self.lineage.push(lineage);

        for elem in [Some(t), nb].into_iter().flatten() {
            self.split_one(elem, m);
        }
        self.splits += 1;
    }

    fn split_one(&mut self, t: usize, m: usize) {
        let [p, v1, v2] = self.tris[t].v;
        let gen = self.tris[t].gen + 1;
        let region = self.tris[t].region;
        let target = self.tris[t].target;
        // drop the parent's edges
        for key in [edge_key(p, v1), edge_key(p, v2), edge_key(v1, v2)] {
            self.remove_edge_ref(key, t);
        }
        // child 1 replaces the parent slot, child 2 is appended
        let c2 = self.tris.len();
        self.tris[t] = Tri {
            v: [m, p, v1],
            region,
            gen,
            target,
        };
        self.tris.push(Tri {
            v: [m, v2, p],
            region,
            gen,
            target,
        });
        for key in [edge_key(m, p), edge_key(m, v1), edge_key(p, v1)] {
            self.add_edge_ref(key, t);
        }
        for key in [edge_key(m, v2), edge_key(m, p), edge_key(v2, p)] {
            self.add_edge_ref(key, c2);
        }
    }

    /// Bisect element `t` once, recursively splitting incompatible
    /// neighbors first.
    fn refine_element(&mut self, t: usize) -> Result<()> {
        let mut stack = vec![t];
        while let Some(&top) = stack.last() {
            if stack.len() > 2 * self.tris.len() + 8 {
                return Err(Error::Structural(
                    "conforming closure did not terminate".into(),
                ));
            }
            let e = self.tris[top].ref_edge();
            match self.neighbor_across(top, e) {
                Some(n) if self.tris[n].ref_edge() != e => stack.push(n),
                nb => {
                    self.split_pair(top, nb, e);
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    fn run(&mut self, marked: &MarkSet, depth: u32) -> Result<()> {
        for t in marked.iter() {
            self.tris[t].target = Some(self.tris[t].gen + depth);
        }
        // worklist scan; children inherit the parent's target so each marked
        // element is driven `depth` generations down. A closure split can
        // drop a target-carrying child into a slot the scan already passed,
        // so rescan until a full pass makes no progress.
        loop {
            let mut progressed = false;
            let mut cursor = 0;
            while cursor < self.tris.len() {
                let needs =
                    matches!(self.tris[cursor].target, Some(tg) if self.tris[cursor].gen < tg);
                if needs {
                    self.refine_element(cursor)?;
                    progressed = true;
                    // re-check the same slot: child 1 may still be short
                } else {
                    cursor += 1;
                }
            }
            if !progressed {
                return Ok(());
            }
        }
    }

    fn into_mesh(self) -> Mesh {
        let ne = self.tris.len();
        let nv = self.vertices.len();
        let mut mesh = Mesh {
            dim: 2,
            vertices: self.vertices,
            elements: self
                .tris
                .iter()
                .map(|t| [t.v[0], t.v[1], t.v[2], usize::MAX])
                .collect(),
            element_region: self.tris.iter().map(|t| t.region).collect(),
            generation: self.tris.iter().map(|t| t.gen).collect(),
            boundary_vertex: vec![false; nv],
            lineage: self.lineage,
        };
        debug_assert_eq!(mesh.elements.len(), ne);
        mesh.finalize_boundary_flags();
        mesh
    }
}

impl Mesh {
    /// Bisect every marked element `depth` generations (newest-vertex, with
    /// conforming closure). With `depth = 3` every marked triangle and each
    /// of its edges receives a node in its interior. 2D only.
    pub fn bisect(&self, marked: &MarkSet, depth: u32) -> Result<Mesh> {
        self.bisect_impl(marked, depth, None)
    }

    /// As [`Mesh::bisect`], projecting midpoints of interface-crossing edges
    /// onto the interface. Snapped vertices lose midpoint lineage, which
    /// breaks exact nestedness; use only when interface fitting matters more.
    pub fn bisect_snapped(
        &self,
        marked: &MarkSet,
        depth: u32,
        ig: &InterfaceGeometry,
    ) -> Result<Mesh> {
        self.bisect_impl(marked, depth, Some(ig))
    }

    fn bisect_impl(
        &self,
        marked: &MarkSet,
        depth: u32,
        snap: Option<&InterfaceGeometry>,
    ) -> Result<Mesh> {
        if self.dim() != 2 {
            return Err(Error::Structural(
                "bisection is supported in 2D only; 3D is limited to uniform grids".into(),
            ));
        }
        if depth == 0 {
            return Err(Error::Structural("bisection depth must be >= 1".into()));
        }
        marked.validate(self)?;
        let mut refiner = Refiner::new(self, snap)?;
        refiner.run(marked, depth)?;
        Ok(refiner.into_mesh())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DomainBox, Region};
    use crate::mesh::{build_square_grid, uniform_refine};

    fn single_triangle() -> Mesh {
        let mut mesh = Mesh {
            dim: 2,
            vertices: vec![[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            elements: vec![[0, 1, 2, usize::MAX]],
            element_region: vec![Region::Solvent],
            generation: vec![0],
            boundary_vertex: vec![true; 3],
            lineage: vec![None; 3],
        };
        mesh.finalize_boundary_flags();
        mesh
    }

    #[test]
    fn single_bisection() {
        let mesh = single_triangle();
        let fine = mesh.bisect(&MarkSet::from_indices([0]), 1).unwrap();
        assert_eq!(fine.n_elements(), 2);
        assert_eq!(fine.n_vertices(), 4);
        // the new vertex is the midpoint of the refinement edge (v1, v2)
        assert_eq!(fine.vertices[3], [0.5, 0.0, 0.0]);
        assert_eq!(fine.lineage[3], Some((1, 2)));
        fine.check_conformity().unwrap();
        assert!((fine.total_volume() - mesh.total_volume()).abs() < 1e-15);
    }

    #[test]
    fn depth_three_gives_interior_nodes() {
        let bx = DomainBox::unit(2);
        let mesh = build_square_grid(2, &bx).unwrap();
        let marked = MarkSet::from_indices([0]);
        let fine = mesh.bisect(&marked, 3).unwrap();
        fine.check_conformity().unwrap();
        // the marked element is replaced by 8 children
        let children = (0..fine.n_elements())
            .filter(|&e| {
                let c = fine.barycenter(e);
                mesh.barycentric(0, c)[..3].iter().all(|&l| l > -1e-12)
            })
            .count();
        assert_eq!(children, 8);
        // some new vertex lies strictly inside the original triangle
        let strictly_inside = (mesh.n_vertices()..fine.n_vertices()).any(|v| {
            let lambda = mesh.barycentric(0, fine.vertices[v]);
            lambda[..3].iter().all(|&l| l > 1e-10)
        });
        assert!(strictly_inside);
        // and each original edge contains a new vertex in its interior
        let verts = mesh.element_vertices(0);
        for i in 0..3 {
            let (a, b) = (mesh.vertices[verts[i]], mesh.vertices[verts[(i + 1) % 3]]);
            let found = (mesh.n_vertices()..fine.n_vertices()).any(|v| {
                let p = fine.vertices[v];
                let d = crate::geometry::dist(a, p) + crate::geometry::dist(p, b)
                    - crate::geometry::dist(a, b);
                d.abs() < 1e-12
                    && crate::geometry::dist(a, p) > 1e-12
                    && crate::geometry::dist(b, p) > 1e-12
            });
            assert!(found, "edge {i} of the marked triangle has no interior node");
        }
    }

    #[test]
    fn mark_all_twice_is_uniform_refinement() {
        let n = 3;
        let mesh = build_square_grid(n, &DomainBox::unit(2)).unwrap();
        let fine = uniform_refine(&mesh).unwrap();
        assert_eq!(fine.n_elements(), 4 * mesh.n_elements());
        assert_eq!(fine.n_vertices(), (2 * n + 1) * (2 * n + 1));
        fine.check_conformity().unwrap();
        let rep = fine.shape_regularity_report();
        assert!((rep.min_quality - 45.0).abs() < 1e-10);
    }

    #[test]
    fn repeated_bisection_keeps_min_angle() {
        let mut mesh = build_square_grid(2, &DomainBox::unit(2)).unwrap();
        // arbitrary marking, 10 rounds
        for round in 0..10 {
            let pick = (0..mesh.n_elements()).filter(|e| (e + round) % 3 == 0);
            mesh = mesh.bisect(&MarkSet::from_indices(pick), 1).unwrap();
            mesh.check_conformity().unwrap();
        }
        let rep = mesh.shape_regularity_report();
        assert!(rep.min_quality >= 22.5 - 1e-9, "min angle {}", rep.min_quality);
        assert!((mesh.total_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nestedness_of_children() {
        let mesh = build_square_grid(2, &DomainBox::unit(2)).unwrap();
        let fine = mesh
            .bisect(&MarkSet::from_indices([0, 3, 5]), 2)
            .unwrap();
        // every new vertex is the exact midpoint of its parents
        for v in mesh.n_vertices()..fine.n_vertices() {
            let (a, b) = fine.lineage[v].unwrap();
            for k in 0..2 {
                assert_eq!(
                    fine.vertices[v][k],
                    0.5 * (fine.vertices[a][k] + fine.vertices[b][k])
                );
            }
        }
        // interpolation of a linear function is exact
        let lin = |p: Point| 2.0 * p[0] - 0.7 * p[1] + 0.3;
        let coarse: Vec<f64> = mesh.vertices.iter().map(|&p| lin(p)).collect();
        let interp = fine.interpolate_from_ancestor(&coarse).unwrap();
        for (v, &val) in interp.iter().enumerate() {
            assert!((val - lin(fine.vertices[v])).abs() < 1e-13);
        }
    }

    #[test]
    fn bisect_rejects_3d() {
        let mesh = crate::mesh::build_cube_5tet_grid(1, &DomainBox::unit(3)).unwrap();
        assert!(mesh.bisect(&MarkSet::from_indices([0]), 1).is_err());
    }
}
