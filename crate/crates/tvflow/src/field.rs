//! Scalar fields on a [`GridDomain`] and their norms.

use crate::error::{Result, TvError};
use crate::grid::GridDomain;
use std::sync::Arc;

/// A scalar field stored over the full bounding box of a grid, with the
/// invariant that values outside the domain mask are exactly zero.  That
/// makes the zero extension across the boundary implicit in the storage:
/// finite differences can read neighbours unconditionally.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl ScalarField {
    /// The all-zero field.
    pub fn zeros(domain: Arc<GridDomain>) -> Self {
        let n = domain.num_cells();
        ScalarField {
            domain,
            values: vec![0.0; n],
        }
    }

    /// Build a field from a closure of the cell-center position; evaluated
    /// only on masked cells, zero elsewhere.
    pub fn from_fn(domain: Arc<GridDomain>, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut field = ScalarField::zeros(domain);
        for idx in 0..field.values.len() {
            if field.domain.mask[idx] {
                field.values[idx] = f(field.domain.cell_center(idx));
            }
        }
        field
    }

    /// Wrap an existing value vector.  Errors if the length does not match
    /// the grid or any unmasked cell is nonzero.
    pub fn from_values(domain: Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.num_cells() {
            return Err(TvError::Argument(format!(
                "value vector has length {}, grid has {} cells",
                values.len(),
                domain.num_cells()
            )));
        }
        for (idx, &v) in values.iter().enumerate() {
            if !domain.mask[idx] && v != 0.0 {
                return Err(TvError::Argument(format!(
                    "cell {idx} is outside the domain but holds {v}; outside values must be exactly zero"
                )));
            }
        }
        Ok(ScalarField { domain, values })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the raw values.  Callers must preserve the
    /// outside-is-zero invariant; [`ScalarField::enforce_mask`] restores it.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Zero every unmasked cell.
    pub fn enforce_mask(&mut self) {
        for (idx, v) in self.values.iter_mut().enumerate() {
            if !self.domain.mask[idx] {
                *v = 0.0;
            }
        }
    }

    /// Multiply every value by `s`.
    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }
}

/// The indicator `k * chi_{B_r}` of the ball of radius `r`, height `k`.
///
/// Errors if `r` is not strictly between zero and the domain's enclosing
/// radius, so the indicator's support stays inside the domain.
pub fn indicator_field(domain: &Arc<GridDomain>, r: f64, k: f64) -> Result<ScalarField> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(TvError::Argument(format!(
            "indicator radius must be positive, got {r}"
        )));
    }
    if r >= domain.enclosing_radius {
        return Err(TvError::Argument(format!(
            "indicator radius {r} must be smaller than the enclosing radius {}",
            domain.enclosing_radius
        )));
    }
    if !k.is_finite() {
        return Err(TvError::Argument(format!(
            "indicator height must be finite, got {k}"
        )));
    }
    let r2 = r * r;
    Ok(ScalarField::from_fn(domain.clone(), |c| {
        if c[0] * c[0] + c[1] * c[1] + c[2] * c[2] < r2 {
            k
        } else {
            0.0
        }
    }))
}

/// Sup, L^N, and L^2 norms of a field: `(linf, lN, l2)`.
///
/// The integral norms use the cell-volume quadrature
/// `(h^N * sum |u|^q)^(1/q)` with `q = N` for `lN` and `q = 2` for `l2`;
/// in two dimensions the two coincide.
pub fn field_norms(u: &ScalarField) -> (f64, f64, f64) {
    let dim = u.domain().dim;
    let vol = u.domain().cell_volume();
    let mut linf: f64 = 0.0;
    let mut sum_n = 0.0;
    let mut sum_2 = 0.0;
    for &v in u.values() {
        let a = v.abs();
        linf = linf.max(a);
        sum_n += a.powi(dim as i32);
        sum_2 += a * a;
    }
    let ln = (vol * sum_n).powf(1.0 / dim as f64);
    let l2 = (vol * sum_2).sqrt();
    (linf, ln, l2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_ball_domain;

    #[test]
    fn outside_cells_stay_zero() {
        let d = make_ball_domain(2, 1.0, 1.0 / 16.0).unwrap();
        let u = ScalarField::from_fn(d, |_| 1.0);
        for (idx, &v) in u.values().iter().enumerate() {
            if !u.domain().mask[idx] {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn from_values_rejects_nonzero_outside() {
        let d = make_ball_domain(1, 1.0, 0.1).unwrap();
        let mut vals = vec![0.0; d.num_cells()];
        vals[0] = 1.0; // first cell is outside the interval
        assert!(ScalarField::from_values(d.clone(), vals).is_err());
        let ok = vec![0.0; d.num_cells()];
        assert!(ScalarField::from_values(d, ok).is_ok());
    }

    #[test]
    fn indicator_norms_match_ball_measure() {
        // N = 2, disk radius 0.5, height 2: ||u||_inf = 2,
        // ||u||_2^2 = 4 * pi * 0.25, so l2 = lN = sqrt(pi).
        let h = 1.0 / 64.0;
        let d = make_ball_domain(2, 1.0, h).unwrap();
        let u = indicator_field(&d, 0.5, 2.0).unwrap();
        let (linf, ln, l2) = field_norms(&u);
        assert_eq!(linf, 2.0);
        let exact = std::f64::consts::PI.sqrt();
        assert!((l2 - exact).abs() / exact < 0.02);
        assert!((ln - l2).abs() < 1e-12, "lN and l2 coincide in 2-D");
    }

    #[test]
    fn one_dimensional_norms() {
        // N = 1: lN is the L^1 norm.  k * chi_{(-r, r)} has L^1 norm 2 r k.
        let d = make_ball_domain(1, 1.0, 1.0 / 64.0).unwrap();
        let u = indicator_field(&d, 0.5, 3.0).unwrap();
        let (linf, l1, l2) = field_norms(&u);
        assert_eq!(linf, 3.0);
        assert!((l1 - 3.0).abs() < 0.1); // 2 * 0.5 * 3
        assert!((l2 - 3.0).abs() < 0.1); // sqrt(1 * 9)
    }

    #[test]
    fn indicator_rejects_radius_outside_domain() {
        let d = make_ball_domain(2, 1.0, 1.0 / 16.0).unwrap();
        assert!(indicator_field(&d, 1.5, 1.0).is_err());
        assert!(indicator_field(&d, 0.0, 1.0).is_err());
        assert!(indicator_field(&d, -0.5, 1.0).is_err());
    }

    #[test]
    fn norm_scaling_is_homogeneous() {
        let d = make_ball_domain(2, 1.0, 1.0 / 16.0).unwrap();
        let u = ScalarField::from_fn(d.clone(), |c| (1.0 - c[0] * c[0] - c[1] * c[1]).max(0.0));
        let mut w = u.clone();
        w.scale(-2.5);
        let (a0, b0, c0) = field_norms(&u);
        let (a1, b1, c1) = field_norms(&w);
        assert!((a1 - 2.5 * a0).abs() < 1e-12);
        assert!((b1 - 2.5 * b0).abs() < 1e-12);
        assert!((c1 - 2.5 * c0).abs() < 1e-12);
    }
}
