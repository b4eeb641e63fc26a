use std::ops::RangeInclusive;

use crate::mesh::GridHierarchy;

/// `S_ℓ(K)`: coarse cell `K` together with `ℓ` layers of neighbours,
/// clipped at the domain boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub element: usize,
    pub layers: usize,
    /// Coarse cells covered by the patch.
    pub elements: RangeInclusive<usize>,
    /// Fine nodes spanned by the patch, boundary nodes included. Unknowns of
    /// the local problem live strictly inside.
    pub fine_nodes: RangeInclusive<usize>,
    /// Interior coarse nodes whose hat function meets the patch.
    pub coarse_nodes: Vec<usize>,
}

impl Patch {
    /// Number of fine unknowns strictly inside the patch.
    pub fn n_fine_interior(&self) -> usize {
        self.fine_nodes.end() - self.fine_nodes.start() - 1
    }

    /// Fine node of local unknown `m`.
    pub fn fine_node(&self, m: usize) -> usize {
        self.fine_nodes.start() + 1 + m
    }

    /// Extent of the patch to the left and right of its centre cell.
    pub fn extents(&self) -> (usize, usize) {
        (
            self.element - self.elements.start(),
            self.elements.end() - self.element,
        )
    }
}

pub fn build_patch(grid: &GridHierarchy, element: usize, layers: usize) -> Patch {
    assert!(
        element < grid.n_coarse(),
        "coarse element {element} out of range"
    );
    let lo = element.saturating_sub(layers);
    let hi = (element + layers).min(grid.n_coarse() - 1);
    let coarse_nodes = (lo.max(1)..=(hi + 1).min(grid.n_coarse() - 1)).collect();
    Patch {
        element,
        layers,
        elements: lo..=hi,
        fine_nodes: grid.coarse_to_fine_node(lo)..=grid.coarse_to_fine_node(hi + 1),
        coarse_nodes,
    }
}
