use serde::{Deserialize, Serialize};

use crate::field::Grid3;

use super::ForwardError;

/// Real dielectric constant `c(x) >= 1` on the nodes of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumField {
    pub grid: Grid3,
    pub c: Vec<f64>,
}

impl MediumField {
    pub fn new(grid: Grid3, c: Vec<f64>) -> Result<Self, ForwardError> {
        if c.len() != grid.len() {
            return Err(ForwardError::InvalidMedium(format!("{} values for {} nodes", c.len(), grid.len())));
        }
        if let Some((idx, v)) = c.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 1.0)) {
            return Err(ForwardError::InvalidMedium(format!("c = {v} at node {:?}; need finite c >= 1", grid.node(idx))));
        }
        Ok(Self { grid, c })
    }

    /// Homogeneous background `c = 1`.
    pub fn air(grid: &Grid3) -> Self {
        Self { grid: grid.clone(), c: vec![1.0; grid.len()] }
    }

    /// Samples `f` at every node coordinate.
    pub fn from_fn(grid: &Grid3, f: impl Fn([f64; 3]) -> f64) -> Result<Self, ForwardError> {
        Self::new(grid.clone(), (0..grid.len()).map(|idx| f(grid.coord_of(idx))).collect())
    }

    /// Evaluates `f` at every node index triple.
    pub fn from_nodes(grid: &Grid3, f: impl Fn([usize; 3]) -> f64) -> Result<Self, ForwardError> {
        Self::new(grid.clone(), (0..grid.len()).map(|idx| f(grid.node(idx))).collect())
    }

    pub fn max(&self) -> f64 {
        self.c.iter().copied().fold(1.0, f64::max)
    }

    pub fn is_air(&self) -> bool {
        self.c.iter().all(|&v| v == 1.0)
    }

    /// Inclusive node bounds of the region where `c != 1`.
    pub fn support_box(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (idx, &v) in self.c.iter().enumerate() {
            if v != 1.0 {
                any = true;
                let n = self.grid.node(idx);
                for a in 0..3 {
                    lo[a] = lo[a].min(n[a]);
                    hi[a] = hi[a].max(n[a]);
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// Rejects contrast on the outermost layer of nodes.
    pub fn validate_margin(&self) -> Result<(), ForwardError> {
        for (idx, &v) in self.c.iter().enumerate() {
            if v != 1.0 {
                let [i, j, k] = self.grid.node(idx);
                if self.grid.is_boundary(i, j, k) {
                    return Err(ForwardError::ContrastAtBoundary([i, j, k]));
                }
            }
        }
        Ok(())
    }
}
