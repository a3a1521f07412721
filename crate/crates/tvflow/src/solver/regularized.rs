//! Lagged-diffusivity stepping on the ε-smoothed energy.
//!
//! One semi-implicit step solves the linear system
//! `(I + dt·m(σⁿ)·∇ᵀ Cⁿ ∇ / h²) u^{n+1} = uⁿ` on masked cells, where the
//! per-cell diffusivity `cⁿ_i = 1/sqrt(|∇uⁿ_i|² + ε²)` (physical gradient
//! units) is frozen at the previous state.  The matrix is symmetric
//! positive definite; a Jacobi-preconditioned conjugate-gradient iteration
//! solves it to relative residual 1e−8.

use crate::coefficient::KirchhoffCoefficient;
use crate::error::{Result, TvError};
use crate::field::ScalarField;
use crate::grid::GridDomain;
use crate::solver::{discrete_tv, SolverConfig};

/// Relative residual target of the inner linear solve.
const CG_RELATIVE_RESIDUAL: f64 = 1e-8;

struct Stencil<'a> {
    domain: &'a GridDomain,
    /// Per-cell diffusivity of the gradient group rooted at each cell.
    c: Vec<f64>,
    /// `dt·m(σⁿ)/h²`.
    kappa: f64,
}

impl<'a> Stencil<'a> {
    fn new(u: &'a ScalarField, coef: &KirchhoffCoefficient, cfg: &SolverConfig) -> Self {
        let domain = u.domain();
        let (nx, ny, nz) = (domain.extent[0], domain.extent[1], domain.extent[2]);
        let (sy, sz) = (nx, nx * ny);
        let dim = domain.dim;
        let h = domain.spacing;
        let v = u.values();
        let inv_h2 = 1.0 / (h * h);
        let eps2 = cfg.epsilon * cfg.epsilon;
        let mut c = vec![0.0; domain.num_cells()];
        let mut i = 0;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let gx = if x + 1 < nx { v[i + 1] - v[i] } else { -v[i] };
                    let mut g2 = gx * gx;
                    if dim > 1 {
                        let gy = if y + 1 < ny { v[i + sy] - v[i] } else { -v[i] };
                        g2 += gy * gy;
                    }
                    if dim > 2 {
                        let gz = if z + 1 < nz { v[i + sz] - v[i] } else { -v[i] };
                        g2 += gz * gz;
                    }
                    c[i] = 1.0 / (g2 * inv_h2 + eps2).sqrt();
                    i += 1;
                }
            }
        }
        let sigma = discrete_tv(u);
        let kappa = cfg.dt * coef.eval(sigma) * inv_h2;
        Stencil {
            domain: u.domain(),
            c,
            kappa,
        }
    }

    /// `out = x + kappa·(∇ᵀ C ∇ x)` restricted to masked cells.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let d = self.domain;
        let (nx, ny, nz) = (d.extent[0], d.extent[1], d.extent[2]);
        let (sy, sz) = (nx, nx * ny);
        let dim = d.dim;
        let c = &self.c;
        let mut i = 0;
        for z in 0..nz {
            for y in 0..ny {
                for x_ in 0..nx {
                    if d.mask[i] {
                        let mut a = 0.0;
                        // Forward group rooted here and backward groups per
                        // axis; out-of-box neighbours read as zero.
                        let xr = if x_ + 1 < nx { x[i + 1] } else { 0.0 };
                        a -= c[i] * (xr - x[i]);
                        if x_ > 0 {
                            a += c[i - 1] * (x[i] - x[i - 1]);
                        }
                        if dim > 1 {
                            let yr = if y + 1 < ny { x[i + sy] } else { 0.0 };
                            a -= c[i] * (yr - x[i]);
                            if y > 0 {
                                a += c[i - sy] * (x[i] - x[i - sy]);
                            }
                        }
                        if dim > 2 {
                            let zr = if z + 1 < nz { x[i + sz] } else { 0.0 };
                            a -= c[i] * (zr - x[i]);
                            if z > 0 {
                                a += c[i - sz] * (x[i] - x[i - sz]);
                            }
                        }
                        out[i] = x[i] + self.kappa * a;
                    } else {
                        out[i] = 0.0;
                    }
                    i += 1;
                }
            }
        }
    }

    /// Diagonal of the system matrix, for Jacobi preconditioning.
    fn diagonal(&self) -> Vec<f64> {
        let d = self.domain;
        let (nx, ny, nz) = (d.extent[0], d.extent[1], d.extent[2]);
        let (sy, sz) = (nx, nx * ny);
        let dim = d.dim;
        let c = &self.c;
        let mut diag = vec![1.0; d.num_cells()];
        let mut i = 0;
        for z in 0..nz {
            for y in 0..ny {
                for x_ in 0..nx {
                    if d.mask[i] {
                        let mut a = c[i] * dim as f64;
                        if x_ > 0 {
                            a += c[i - 1];
                        }
                        if dim > 1 && y > 0 {
                            a += c[i - sy];
                        }
                        if dim > 2 && z > 0 {
                            a += c[i - sz];
                        }
                        diag[i] = 1.0 + self.kappa * a;
                    }
                    i += 1;
                }
            }
        }
        diag
    }
}

/// One lagged-diffusivity step.  Errors if the inner conjugate-gradient
/// solve fails to reach its residual target within `cfg.max_inner_iters`.
pub fn step_regularized(
    u: &ScalarField,
    coef: &KirchhoffCoefficient,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    if !(cfg.epsilon > 0.0) {
        return Err(TvError::Argument(format!(
            "regularized step needs epsilon > 0, got {}",
            cfg.epsilon
        )));
    }
    let domain = u.domain().clone();
    let n = domain.num_cells();
    let stencil = Stencil::new(u, coef, cfg);
    let inv_diag: Vec<f64> = stencil.diagonal().iter().map(|d| 1.0 / d).collect();
    let b = u.values();

    // Preconditioned conjugate gradients with x₀ = uⁿ, masked throughout.
    let mut x = b.to_vec();
    let mut ax = vec![0.0; n];
    stencil.apply(&x, &mut ax);
    let mut r: Vec<f64> = (0..n)
        .map(|i| if domain.mask[i] { b[i] - ax[i] } else { 0.0 })
        .collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Ok(ScalarField::zeros(domain));
    }
    let target = CG_RELATIVE_RESIDUAL * b_norm;

    let mut z: Vec<f64> = (0..n).map(|i| inv_diag[i] * r[i]).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut res_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut iters = 0;
    while res_norm > target {
        if iters >= cfg.max_inner_iters {
            return Err(TvError::Solver(format!(
                "conjugate gradients stalled: relative residual {:.3e} after {iters} iterations (target {CG_RELATIVE_RESIDUAL:.1e})",
                res_norm / b_norm
            )));
        }
        stencil.apply(&p, &mut ax);
        let pap: f64 = p.iter().zip(&ax).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(TvError::Solver(format!(
                "conjugate gradients lost positive definiteness (pᵀAp = {pap})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        iters += 1;
    }

    let mut out = ScalarField::zeros(domain);
    out.values_mut().copy_from_slice(&x);
    out.enforce_mask();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::indicator_field;
    use crate::grid::make_ball_domain;
    use crate::solver::{step_direct, SolverMode};

    fn reg_cfg(h: f64, dt: f64, epsilon: f64) -> SolverConfig {
        SolverConfig {
            mode: SolverMode::DirectRegularized,
            dt,
            epsilon,
            ..SolverConfig::default_for(h, 1.0)
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        let d = make_ball_domain(2, 1.0, 1.0 / 16.0).unwrap();
        let u = ScalarField::zeros(d);
        let coef = KirchhoffCoefficient::affine();
        let cfg = reg_cfg(1.0 / 16.0, 1e-3, 1e-3);
        let next = step_regularized(&u, &coef, &cfg).unwrap();
        assert!(next.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn agrees_with_prox_step_on_radial_data() {
        let h = 1.0 / 64.0;
        let d = make_ball_domain(2, 1.0, h).unwrap();
        let u0 = indicator_field(&d, 0.5, 1.0).unwrap();
        let coef = KirchhoffCoefficient::affine();
        let cfg = reg_cfg(h, 1e-3, 1e-3);
        let reg = step_regularized(&u0, &coef, &cfg).unwrap();
        let (prox, _) = step_direct(&u0, &coef, &cfg).unwrap();
        let center = d.index(d.extent[0] / 2, d.extent[1] / 2, 0);
        let (a, b) = (reg.values()[center], prox.values()[center]);
        // O(epsilon + dt + h) agreement on the plateau value.
        assert!((a - b).abs() < 0.05, "regularized {a} vs prox {b}");
    }

    #[test]
    fn smoothing_bias_shrinks_with_epsilon() {
        // One step from the radial indicator: the plateau drop should
        // approach the exact dt·m(σ₀)·N/r as ε decreases, until the bias
        // saturates at the fixed-h, fixed-dt discretization error.
        let h = 1.0 / 64.0;
        let d = make_ball_domain(2, 1.0, h).unwrap();
        let u0 = indicator_field(&d, 0.5, 1.0).unwrap();
        let coef = KirchhoffCoefficient::constant(1.0).unwrap();
        let dt = 1e-3;
        let exact = 1.0 - dt * 1.0 * 2.0 / 0.5;
        let center = d.index(d.extent[0] / 2, d.extent[1] / 2, 0);
        let mut gaps = Vec::new();
        for epsilon in [1e-1, 1e-2, 1e-4] {
            let cfg = reg_cfg(h, dt, epsilon);
            let next = step_regularized(&u0, &coef, &cfg).unwrap();
            gaps.push((next.values()[center] - exact).abs());
        }
        // Large ε visibly biases the step; small ε lands on the
        // discretization floor (sub-1e-3 here) and stays there.
        assert!(
            gaps[1] < gaps[0],
            "bias must drop from eps=1e-1 to 1e-2: {gaps:?}"
        );
        assert!(
            gaps[2] < 1e-3 && gaps[1] < 1e-3,
            "small-eps bias must sit on the discretization floor: {gaps:?}"
        );
    }

    #[test]
    fn iteration_cap_is_an_error() {
        let h = 1.0 / 32.0;
        let d = make_ball_domain(2, 1.0, h).unwrap();
        let u0 = indicator_field(&d, 0.5, 1.0).unwrap();
        let coef = KirchhoffCoefficient::affine();
        let cfg = SolverConfig {
            max_inner_iters: 2,
            ..reg_cfg(h, 1e-3, 1e-3)
        };
        let err = step_regularized(&u0, &coef, &cfg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("residual"), "error carries the residual: {msg}");
    }
}
