//! Uniform Cartesian grids over ball-shaped domains.
//!
//! A [`GridDomain`] is a cell-centered box of spacing `h` with a boolean mask
//! selecting the cells inside the physical domain.  The box always keeps at
//! least one layer of outside cells on every side, so zero-extending a field
//! across the boundary is exact: every masked cell has all of its neighbours
//! inside the box.

use crate::error::{Result, TvError};
use std::sync::Arc;

/// A uniform grid with an embedded domain mask.
///
/// Cells are cubes of side `spacing`.  Along axis `a` the box has
/// `extent[a]` cells and the center of cell `i` sits at
/// `(i + 0.5 - extent[a] as f64 / 2.0) * spacing`, so the box is symmetric
/// about the origin.  `mask[idx]` is `true` for cells whose center lies in
/// the domain.  Linear indices are row-major with x fastest:
/// `idx = (z * ny + y) * nx + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    /// Spatial dimension, 1, 2, or 3.
    pub dim: usize,
    /// Grid spacing `h` (cube cells).
    pub spacing: f64,
    /// Cells per axis; axes beyond `dim` have extent 1.
    pub extent: [usize; 3],
    /// `true` for cells inside the domain.
    pub mask: Vec<bool>,
    /// Radius of the smallest origin-centered ball containing every point of
    /// every masked cell (not just the centers).
    pub enclosing_radius: f64,
}

impl GridDomain {
    /// Total number of cells in the bounding box.
    pub fn num_cells(&self) -> usize {
        self.extent[0] * self.extent[1] * self.extent[2]
    }

    /// Number of cells inside the domain.
    pub fn num_interior(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Linear index of the cell `(x, y, z)`.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.extent[1] + y) * self.extent[0] + x
    }

    /// Center coordinate of cell `i` along `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        (i as f64 + 0.5 - self.extent[axis] as f64 / 2.0) * self.spacing
    }

    /// Center of the cell with linear index `idx`, padded with zeros beyond
    /// `dim`.
    pub fn cell_center(&self, idx: usize) -> [f64; 3] {
        let (nx, ny) = (self.extent[0], self.extent[1]);
        let x = idx % nx;
        let y = (idx / nx) % ny;
        let z = idx / (nx * ny);
        let mut c = [0.0; 3];
        c[0] = self.coord(0, x);
        if self.dim >= 2 {
            c[1] = self.coord(1, y);
        }
        if self.dim >= 3 {
            c[2] = self.coord(2, z);
        }
        c
    }

    /// Euclidean distance from the origin to the center of cell `idx`.
    pub fn center_distance(&self, idx: usize) -> f64 {
        let c = self.cell_center(idx);
        (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    }

    /// Volume of one cell, `spacing^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }
}

/// Build a grid for the open ball of radius `radius` centered at the origin.
///
/// The bounding box is sized so that at least one full layer of outside
/// cells surrounds the ball on every side.  Errors unless `dim` is 1, 2, or
/// 3, `radius > 0`, `spacing > 0`, and the resolution satisfies
/// `radius / spacing >= 8`.
pub fn make_ball_domain(dim: usize, radius: f64, spacing: f64) -> Result<Arc<GridDomain>> {
    if !(1..=3).contains(&dim) {
        return Err(TvError::Domain(format!(
            "dimension must be 1, 2, or 3, got {dim}"
        )));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(TvError::Domain(format!(
            "radius must be positive and finite, got {radius}"
        )));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(TvError::Domain(format!(
            "spacing must be positive and finite, got {spacing}"
        )));
    }
    if radius / spacing < 8.0 {
        return Err(TvError::Domain(format!(
            "need at least 8 cells per radius: radius/spacing = {:.3}",
            radius / spacing
        )));
    }

    // Half-extent in cells: enough to cover the ball plus one guaranteed
    // outside layer.  With centers at (i + 0.5 - m) * h for m = half-extent,
    // the outermost center sits at (m - 0.5) * h >= radius + h/2, so the
    // outer ring of cells lies entirely outside the ball.
    let half = (radius / spacing).ceil() as usize + 1;
    let per_axis = 2 * half;

    let mut extent = [1usize; 3];
    for e in extent.iter_mut().take(dim) {
        *e = per_axis;
    }

    let total = extent[0] * extent[1] * extent[2];
    let mut mask = vec![false; total];
    let mut max_center_dist: f64 = 0.0;
    let r2 = radius * radius;

    for z in 0..extent[2] {
        for y in 0..extent[1] {
            for x in 0..extent[0] {
                let mut d2 = 0.0;
                let coords = [x, y, z];
                for a in 0..dim {
                    let c = (coords[a] as f64 + 0.5 - extent[a] as f64 / 2.0) * spacing;
                    d2 += c * c;
                }
                if d2 < r2 {
                    let idx = (z * extent[1] + y) * extent[0] + x;
                    mask[idx] = true;
                    max_center_dist = max_center_dist.max(d2.sqrt());
                }
            }
        }
    }

    if !mask.iter().any(|&m| m) {
        return Err(TvError::Domain(
            "mask is empty: no cell center falls inside the ball".to_string(),
        ));
    }

    // Farthest corner of any masked cell: center distance plus half the cell
    // diagonal.
    let half_diag = 0.5 * spacing * (dim as f64).sqrt();
    let enclosing_radius = max_center_dist + half_diag;

    Ok(Arc::new(GridDomain {
        dim,
        spacing,
        extent,
        mask,
        enclosing_radius,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_domain_matches_hand_count() {
        // N = 1, radius 1, h = 0.1: centers at +/-0.05, +/-0.15, ..., +/-1.05;
        // the 20 centers with |x| < 1 are interior and the outermost pair is
        // the zero halo.
        let d = make_ball_domain(1, 1.0, 0.1).unwrap();
        assert_eq!(d.extent, [22, 1, 1]);
        assert_eq!(d.num_interior(), 20);
        // Farthest interior center is 0.95, plus half a cell: exactly 1.
        assert!((d.enclosing_radius - 1.0).abs() < 1e-12);
        assert!((2.0 * d.enclosing_radius - 2.0).abs() < 1e-12);
        // First and last cells are outside.
        assert!(!d.mask[0]);
        assert!(!d.mask[21]);
    }

    #[test]
    fn disk_cell_count_approximates_area() {
        let h = 1.0 / 64.0;
        let d = make_ball_domain(2, 1.0, h).unwrap();
        assert_eq!(d.num_interior(), 12892);
        let area = d.num_interior() as f64 * h * h;
        assert!((area - std::f64::consts::PI).abs() / std::f64::consts::PI < 0.02);
        // Enclosing radius is within one spacing of the ball radius.
        assert!(d.enclosing_radius >= 1.0 - h && d.enclosing_radius <= 1.0 + h);
    }

    #[test]
    fn ball_cell_count_approximates_volume() {
        let h = 1.0 / 16.0;
        let d = make_ball_domain(3, 1.0, h).unwrap();
        let vol = d.num_interior() as f64 * h * h * h;
        let exact = 4.0 * std::f64::consts::PI / 3.0;
        assert!((vol - exact).abs() / exact < 0.05);
    }

    #[test]
    fn mask_never_touches_box_edge() {
        for (dim, h) in [(1, 0.05), (2, 1.0 / 32.0), (3, 1.0 / 8.0)] {
            let d = make_ball_domain(dim, 1.0, h).unwrap();
            let (nx, ny, nz) = (d.extent[0], d.extent[1], d.extent[2]);
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        let on_edge = x == 0
                            || x == nx - 1
                            || (d.dim >= 2 && (y == 0 || y == ny - 1))
                            || (d.dim >= 3 && (z == 0 || z == nz - 1));
                        if on_edge {
                            assert!(!d.mask[d.index(x, y, z)]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_ball_domain(0, 1.0, 0.1).is_err());
        assert!(make_ball_domain(4, 1.0, 0.1).is_err());
        assert!(make_ball_domain(2, -1.0, 0.1).is_err());
        assert!(make_ball_domain(2, 1.0, 0.0).is_err());
        // Under-resolved: fewer than 8 cells per radius.
        assert!(make_ball_domain(2, 1.0, 0.5).is_err());
        assert!(make_ball_domain(1, 1.0, 0.126).is_err());
    }

    #[test]
    fn index_and_center_are_consistent() {
        let d = make_ball_domain(2, 1.0, 1.0 / 16.0).unwrap();
        let idx = d.index(3, 5, 0);
        let c = d.cell_center(idx);
        assert!((c[0] - d.coord(0, 3)).abs() < 1e-15);
        assert!((c[1] - d.coord(1, 5)).abs() < 1e-15);
        assert_eq!(c[2], 0.0);
    }
}
