//! Ordered 1D meshes with fixed endpoints.
//!
//! Nodes are indexed `0..=N`; cell `i` (1-based, matching `h_i = x_i - x_{i-1}`)
//! sits between nodes `i - 1` and `i`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    nodes: Vec<f64>,
}

impl Mesh {
    /// Builds a mesh from node positions, rejecting anything that is not
    /// strictly increasing or has fewer than two nodes.
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 nodes, got {}",
                nodes.len()
            )));
        }
        if let Some(bad) = nodes.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidMesh(format!("node {bad} is not finite")));
        }
        if let Some((cell, width)) = first_bad_cell(&nodes) {
            return Err(Error::MeshTangled { cell, width });
        }
        Ok(Mesh { nodes })
    }

    pub fn uniform(x_l: f64, x_r: f64, cells: usize) -> Result<Self> {
        if cells == 0 || !(x_l < x_r) {
            return Err(Error::InvalidMesh(format!(
                "uniform mesh needs x_l < x_r and N >= 1 (got [{x_l}, {x_r}], N = {cells})"
            )));
        }
        let h = (x_r - x_l) / cells as f64;
        let mut nodes: Vec<f64> = (0..=cells).map(|i| x_l + i as f64 * h).collect();
        nodes[cells] = x_r;
        Mesh::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn into_nodes(self) -> Vec<f64> {
        self.nodes
    }

    /// Number of cells `N`.
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn x_l(&self) -> f64 {
        self.nodes[0]
    }

    pub fn x_r(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn width(&self) -> f64 {
        self.x_r() - self.x_l()
    }

    /// Cell widths `h_1..h_N`, returned 0-based: `widths[k] = x_{k+1} - x_k`.
    pub fn cell_widths(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Largest absolute node displacement between two meshes of the same size.
    pub fn max_displacement(&self, other: &Mesh) -> f64 {
        debug_assert_eq!(self.node_count(), other.node_count());
        self.nodes
            .iter()
            .zip(&other.nodes)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Index of the cell (0-based, between nodes `k` and `k+1`) containing `x`.
    /// Points outside the domain are clamped to the first or last cell.
    pub fn locate(&self, x: f64) -> usize {
        let n = self.cells();
        match self.nodes.partition_point(|&node| node <= x) {
            0 => 0,
            k if k > n => n - 1,
            k => k - 1,
        }
    }
}

fn first_bad_cell(nodes: &[f64]) -> Option<(usize, f64)> {
    nodes
        .windows(2)
        .enumerate()
        .find(|(_, w)| !(w[1] - w[0] > 0.0))
        .map(|(k, w)| (k + 1, w[1] - w[0]))
}

/// Free-function form of [`Mesh::cell_widths`].
pub fn cell_widths(mesh: &Mesh) -> Vec<f64> {
    mesh.cell_widths()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_widths() {
        let mesh = Mesh::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(cell_widths(&mesh), vec![0.25; 4]);

        let mesh = Mesh::uniform(-30.0, 70.0, 100).unwrap();
        for h in cell_widths(&mesh) {
            assert!((h - 1.0).abs() < 1e-12);
        }
        assert_eq!(mesh.x_l(), -30.0);
        assert_eq!(mesh.x_r(), 70.0);
    }

    #[test]
    fn explicit_widths() {
        let mesh = Mesh::new(vec![0.0, 0.1, 0.5, 1.0]).unwrap();
        let h = mesh.cell_widths();
        assert!((h[0] - 0.1).abs() < 1e-15);
        assert!((h[1] - 0.4).abs() < 1e-15);
        assert!((h[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_unsorted_and_duplicates() {
        assert!(matches!(
            Mesh::new(vec![0.0, 0.5, 0.4, 1.0]),
            Err(Error::MeshTangled { cell: 2, .. })
        ));
        assert!(matches!(
            Mesh::new(vec![0.0, 0.5, 0.5, 1.0]),
            Err(Error::MeshTangled { cell: 2, .. })
        ));
        assert!(Mesh::new(vec![0.0]).is_err());
        assert!(Mesh::new(vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(Mesh::uniform(1.0, 0.0, 4).is_err());
    }

    #[test]
    fn locate_cells() {
        let mesh = Mesh::new(vec![0.0, 0.1, 0.5, 1.0]).unwrap();
        assert_eq!(mesh.locate(-1.0), 0);
        assert_eq!(mesh.locate(0.0), 0);
        assert_eq!(mesh.locate(0.05), 0);
        assert_eq!(mesh.locate(0.1), 1);
        assert_eq!(mesh.locate(0.7), 2);
        assert_eq!(mesh.locate(1.0), 2);
        assert_eq!(mesh.locate(3.0), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn widths_sum_to_domain(mut gaps in proptest::collection::vec(1e-3f64..10.0, 1..200), x_l in -100.0f64..100.0) {
                let mut nodes = vec![x_l];
                for g in gaps.drain(..) {
                    let last = *nodes.last().unwrap();
                    nodes.push(last + g);
                }
                let mesh = Mesh::new(nodes).unwrap();
                let total: f64 = mesh.cell_widths().iter().sum();
                let width = mesh.width();
                prop_assert!(((total - width) / width).abs() < 1e-12);
                prop_assert!(mesh.cell_widths().iter().all(|&h| h > 0.0));
            }
        }
    }
}
