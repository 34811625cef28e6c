//! Interval meshes with a nested uniform-refinement hierarchy.
//!
//! A mesh carries its elements (1D cells), its facets (all mesh points,
//! including the two boundary points) and, per facet, the indices of the
//! adjacent elements. Fields are stored as nodal coefficient vectors; the
//! models decide which nodes carry degrees of freedom.

use crate::error::CoreError;
use crate::Result;
use nalgebra::DVector;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    /// Node coordinates, strictly increasing, spanning [0, 1].
    pub nodes: Vec<f64>,
    /// Element k connects nodes (k, k+1).
    pub elements: Vec<(usize, usize)>,
    /// Facets are the mesh points; facet j sits at node j.
    pub facets: Vec<usize>,
    /// Per-facet list of adjacent element indices.
    pub facet_neighborhood: Vec<Vec<usize>>,
    /// Refinement level within its hierarchy (0 = coarsest).
    pub level: usize,
}

impl Mesh {
    /// Uniform mesh of `n_elements` cells on [0, 1].
    pub fn uniform(n_elements: usize, level: usize) -> Result<Self> {
        if n_elements < 2 {
            return Err(CoreError::invalid("mesh needs at least 2 elements"));
        }
        let nodes: Vec<f64> = (0..=n_elements)
            .map(|i| i as f64 / n_elements as f64)
            .collect();
        Ok(Self::from_nodes(nodes, level))
    }

    /// Rebuild a mesh from stored node coordinates (strictly increasing).
    pub fn from_sorted_nodes(nodes: Vec<f64>, level: usize) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(CoreError::invalid("mesh needs at least 2 elements"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::invalid("mesh nodes must be strictly increasing"));
        }
        Ok(Self::from_nodes(nodes, level))
    }

    fn from_nodes(nodes: Vec<f64>, level: usize) -> Self {
        let n = nodes.len() - 1;
        let elements = (0..n).map(|k| (k, k + 1)).collect();
        let facets = (0..=n).collect();
        let facet_neighborhood = (0..=n)
            .map(|j| {
                if j == 0 {
                    vec![0]
                } else if j == n {
                    vec![n - 1]
                } else {
                    vec![j - 1, j]
                }
            })
            .collect();
        Self {
            nodes,
            elements,
            facets,
            facet_neighborhood,
            level,
        }
    }

    /// Uniform bisection; the child's node set contains the parent's.
    pub fn refine(&self) -> Mesh {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(*self.nodes.last().expect("nonempty mesh"));
        Mesh::from_nodes(nodes, self.level + 1)
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn elem_length(&self, k: usize) -> f64 {
        let (a, b) = self.elements[k];
        self.nodes[b] - self.nodes[a]
    }

    pub fn domain_length(&self) -> f64 {
        self.nodes[self.nodes.len() - 1] - self.nodes[0]
    }

    pub fn is_boundary_facet(&self, j: usize) -> bool {
        self.facet_neighborhood[j].len() == 1
    }

    /// Two-point Gauss points and weights on element `k`.
    pub fn gauss_points(&self, k: usize) -> [(f64, f64); 2] {
        let (a, b) = self.elements[k];
        let (xa, xb) = (self.nodes[a], self.nodes[b]);
        let h = xb - xa;
        let mid = 0.5 * (xa + xb);
        let off = 0.5 * h / 3.0f64.sqrt();
        [(mid - off, 0.5 * h), (mid + off, 0.5 * h)]
    }
}

/// Nested hierarchy of uniformly refined meshes; level i has
/// `n_coarse_elements * 2^i` elements.
pub fn build_mesh_hierarchy(n_coarse_elements: usize, n_levels: usize) -> Result<Vec<Mesh>> {
    if n_coarse_elements < 2 {
        return Err(CoreError::invalid("hierarchy needs >= 2 coarse elements"));
    }
    if n_levels < 1 {
        return Err(CoreError::invalid("hierarchy needs >= 1 level"));
    }
    let mut out = Vec::with_capacity(n_levels);
    out.push(Mesh::uniform(n_coarse_elements, 0)?);
    for _ in 1..n_levels {
        let next = out.last().expect("nonempty hierarchy").refine();
        out.push(next);
    }
    Ok(out)
}

/// Nodal interpolation of a full nodal vector from an ancestor mesh onto a
/// descendant mesh; exact for piecewise-linear functions on the coarse mesh.
pub fn prolongate_nodal(values: &DVector<f64>, from: &Mesh, to: &Mesh) -> Result<DVector<f64>> {
    if values.len() != from.n_nodes() {
        return Err(CoreError::dims(format!(
            "field has {} values, mesh has {} nodes",
            values.len(),
            from.n_nodes()
        )));
    }
    if to.level < from.level || (to.n_elements() % from.n_elements()) != 0 {
        return Err(CoreError::invalid("target mesh is not a descendant of the source mesh"));
    }
    let ratio = to.n_elements() / from.n_elements();
    if ratio != 1 << (to.level - from.level) {
        return Err(CoreError::invalid("meshes do not belong to one bisection hierarchy"));
    }
    let mut out = DVector::zeros(to.n_nodes());
    for (i, &x) in to.nodes.iter().enumerate() {
        // Locate the coarse element containing x (uniform spacing).
        let h = 1.0 / from.n_elements() as f64;
        let k = ((x / h).floor() as usize).min(from.n_elements() - 1);
        let (a, b) = from.elements[k];
        let (xa, xb) = (from.nodes[a], from.nodes[b]);
        let t = (x - xa) / (xb - xa);
        out[i] = (1.0 - t) * values[a] + t * values[b];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_elements_five_facets() {
        let meshes = build_mesh_hierarchy(4, 1).unwrap();
        assert_eq!(meshes.len(), 1);
        let m = &meshes[0];
        assert_eq!(m.n_elements(), 4);
        assert_eq!(m.n_facets(), 5);
        let interior = m.facets.iter().filter(|&&j| !m.is_boundary_facet(j)).count();
        assert_eq!(interior, 3);
        for j in 0..m.n_facets() {
            let expect = if m.is_boundary_facet(j) { 1 } else { 2 };
            assert_eq!(m.facet_neighborhood[j].len(), expect);
        }
    }

    #[test]
    fn hierarchy_is_nested() {
        let meshes = build_mesh_hierarchy(4, 3).unwrap();
        assert_eq!(
            meshes.iter().map(Mesh::n_elements).collect::<Vec<_>>(),
            vec![4, 8, 16]
        );
        for w in meshes.windows(2) {
            for &x in &w[0].nodes {
                assert!(w[1].nodes.iter().any(|&y| (x - y).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn elements_partition_domain() {
        let m = Mesh::uniform(7, 0).unwrap();
        let total: f64 = (0..m.n_elements()).map(|k| m.elem_length(k)).sum();
        assert!((total - m.domain_length()).abs() < 1e-14);
        assert!((0..m.n_elements()).all(|k| m.elem_length(k) > 0.0));
    }

    #[test]
    fn prolongation_exact_for_linear_function() {
        let meshes = build_mesh_hierarchy(200, 2).unwrap();
        let coarse = &meshes[0];
        let fine = &meshes[1];
        assert_eq!((coarse.n_elements(), fine.n_elements()), (200, 400));
        let v = DVector::from_iterator(coarse.n_nodes(), coarse.nodes.iter().cloned());
        let p = prolongate_nodal(&v, coarse, fine).unwrap();
        for (i, &x) in fine.nodes.iter().enumerate() {
            assert!((p[i] - x).abs() < 1e-14);
        }
    }

    #[test]
    fn prolongate_then_sample_back_is_identity() {
        let meshes = build_mesh_hierarchy(8, 2).unwrap();
        let (coarse, fine) = (&meshes[0], &meshes[1]);
        let v = DVector::from_fn(coarse.n_nodes(), |i, _| (i as f64).sin());
        let p = prolongate_nodal(&v, coarse, fine).unwrap();
        for i in 0..coarse.n_nodes() {
            assert!((p[2 * i] - v[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_sizes_and_non_nested() {
        assert!(build_mesh_hierarchy(1, 1).is_err());
        assert!(build_mesh_hierarchy(4, 0).is_err());
        let a = Mesh::uniform(4, 0).unwrap();
        let b = Mesh::uniform(6, 1).unwrap();
        let v = DVector::zeros(a.n_nodes());
        assert!(prolongate_nodal(&v, &a, &b).is_err());
    }
}
