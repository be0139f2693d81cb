//! Regular cell-centered grids in `R^n`.

use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::{Error, Result};

/// Cell-centered grid: cell `(i_1, ..., i_n)` has center
/// `origin + (i_d + 1/2) h` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Point,
    pub h: f64,
    pub extents: Vec<usize>,
}

impl Grid {
    pub fn new(origin: Point, h: f64, extents: Vec<usize>) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {h}")));
        }
        if origin.len() != extents.len() || origin.is_empty() {
            return Err(Error::InvalidParameter("grid origin/extents dimension mismatch".into()));
        }
        if extents.iter().any(|&e| e < 4) {
            return Err(Error::InvalidParameter("grid needs at least 4 cells per axis".into()));
        }
        Ok(Self { origin, h, extents })
    }

    /// Uniform grid covering the box `[min, max]^n` (per-axis bounds).
    pub fn covering(min: &[f64], max: &[f64], h: f64) -> Result<Self> {
        let extents: Vec<usize> = min
            .iter()
            .zip(max)
            .map(|(a, b)| (((b - a) / h).round() as usize).max(4))
            .collect();
        Grid::new(min.to_vec(), h, extents)
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn n_cells(&self) -> usize {
        self.extents.iter().product()
    }

    /// Row-major strides (last axis fastest).
    pub fn strides(&self) -> Vec<usize> {
        let n = self.dim();
        let mut s = vec![1usize; n];
        for d in (0..n.saturating_sub(1)).rev() {
            s[d] = s[d + 1] * self.extents[d + 1];
        }
        s
    }

    pub fn center(&self, multi: &[usize]) -> Point {
        multi
            .iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + (i as f64 + 0.5) * self.h)
            .collect()
    }

    /// Decodes a flat index into a multi-index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let strides = self.strides();
        strides
            .iter()
            .map(|&s| {
                let i = flat / s;
                flat %= s;
                i
            })
            .collect()
    }

    /// Center of the cell with flat index `flat`, written into `out`.
    pub fn center_into(&self, flat: usize, strides: &[usize], out: &mut [f64]) {
        let mut rem = flat;
        for d in 0..self.dim() {
            let i = rem / strides[d];
            rem %= strides[d];
            out[d] = self.origin[d] + (i as f64 + 0.5) * self.h;
        }
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    /// Grid with the same physical footprint at twice the spacing
    /// (extents halved, rounded up).
    pub fn coarsened(&self) -> Result<Grid> {
        let extents: Vec<usize> = self.extents.iter().map(|&e| e.div_ceil(2).max(4)).collect();
        Grid::new(self.origin.clone(), self.h * 2.0, extents)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip_and_centers() {
        let g = Grid::new(vec![-1.0, -1.0, -1.0], 0.25, vec![8, 8, 8]).unwrap();
        assert_eq!(g.n_cells(), 512);
        let strides = g.strides();
        assert_eq!(strides, vec![64, 8, 1]);
        let mi = g.multi_index(100);
        assert_eq!(mi, vec![1, 4, 4]);
        let c = g.center(&mi);
        assert!((c[0] - (-1.0 + 1.5 * 0.25)).abs() < 1e-15);
        let mut buf = vec![0.0; 3];
        g.center_into(100, &strides, &mut buf);
        assert_eq!(buf, c);
    }

    #[test]
    fn rejects_tiny_extents() {
        assert!(Grid::new(vec![0.0], 0.1, vec![3]).is_err());
    }
}
