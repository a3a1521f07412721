//! Closed-form reference solutions and bound formulas for radial data.
//!
//! For initial data `k·χ_{B_r}` with the ball compactly inside the domain,
//! the flow keeps the indicator shape and only the height moves: balls are
//! calibrable, the singular diffusion acts as a constant sink `−N/r` inside
//! the ball, and the height `a(t)` obeys the scalar equation
//! `a′ = −(N/r)·m(γ_N r^{N−1}·a)`.  This module carries the resulting
//! explicit amplitudes, extinction times, the candidate flux field that
//! certifies the solution, and the extinction/derivative bound formulas
//! against which trajectories are checked.

use crate::coefficient::{CoefficientFamily, KirchhoffCoefficient};
use crate::error::{Result, TvError};
use crate::field::{field_norms, indicator_field, ScalarField};
use crate::grid::GridDomain;
use crate::report::{SampleRecord, VerificationReport};
use crate::solver::discrete_tv;
use crate::trajectory::{FlowTrajectory, StepDiagnostics};
use std::f64::consts::PI;
use std::sync::Arc;

/// Parameters of an explicit radial solution: `u(x, t) = a(t)·χ_{B_r}(x)`
/// in dimension `dim`, initial height `height`, with the given analytic
/// coefficient family driving the height equation.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSolutionSpec {
    pub dim: usize,
    pub ball_radius: f64,
    pub height: f64,
    pub coefficient: KirchhoffCoefficient,
}

impl RadialSolutionSpec {
    /// Validates dimension, radius, height, and that the coefficient family
    /// is analytic (closed forms exist for constant, affine, and power).
    pub fn new(
        dim: usize,
        ball_radius: f64,
        height: f64,
        coefficient: KirchhoffCoefficient,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(TvError::Argument("dimension must be at least 1".into()));
        }
        if !(ball_radius > 0.0) || !ball_radius.is_finite() {
            return Err(TvError::Argument(format!(
                "ball radius must be positive, got {ball_radius}"
            )));
        }
        if !(height >= 0.0) || !height.is_finite() {
            return Err(TvError::Argument(format!(
                "height must be nonnegative, got {height}"
            )));
        }
        if matches!(coefficient.family(), CoefficientFamily::Tabulated(_)) {
            return Err(TvError::Argument(
                "radial closed forms exist only for the analytic coefficient families".into(),
            ));
        }
        Ok(RadialSolutionSpec {
            dim,
            ball_radius,
            height,
            coefficient,
        })
    }

    /// Surface measure of the ball boundary, `γ_N·r^{N−1}` — also the total
    /// variation per unit height of the indicator.
    pub fn perimeter(&self) -> f64 {
        gamma_n(self.dim).expect("dim validated at construction") * self.ball_radius.powi(self.dim as i32 - 1)
    }
}

/// Surface measure of the unit sphere in dimension `n`:
/// `γ_n = n·π^{n/2}/Γ(n/2 + 1)`, evaluated through the half-integer Γ
/// recursion from `Γ(1) = 1` and `Γ(1/2) = √π`.  Equals `n` times the unit
/// ball volume.
pub fn gamma_n(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(TvError::Argument(
            "dimension must be a positive integer".into(),
        ));
    }
    let target = n as f64 / 2.0 + 1.0;
    let (mut g, mut x) = if n % 2 == 0 {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    while x + 0.25 < target {
        g *= x;
        x += 1.0;
    }
    Ok(n as f64 * PI.powf(n as f64 / 2.0) / g)
}

/// Volume of the ball of radius `r` in dimension `n`: `γ_n·r^n/n`.
pub fn ball_volume(n: usize, r: f64) -> Result<f64> {
    Ok(gamma_n(n)? * r.powi(n as i32) / n as f64)
}

fn require_nonnegative_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(TvError::Argument(format!(
            "time must be nonnegative, got {t}"
        )));
    }
    Ok(())
}

/// Height of the explicit solution for the power family
/// `m(σ) = (σ+1)^p`, `p > 1`:
/// `a(t) = ([N(p−1)γ_N r^{N−2}·t + (γ_N k r^{N−1}+1)^{1−p}]^{1/(1−p)} − 1)⁺ / (γ_N r^{N−1})`.
pub fn amplitude_power(spec: &RadialSolutionSpec, t: f64) -> Result<f64> {
    require_nonnegative_time(t)?;
    let p = match spec.coefficient.family() {
        CoefficientFamily::Power(p) => *p,
        _ => {
            return Err(TvError::Argument(format!(
                "power amplitude needs the power family, got {}",
                spec.coefficient.family_name()
            )))
        }
    };
    let n = spec.dim as f64;
    let r = spec.ball_radius;
    let gr = spec.perimeter();
    let bracket = n * (p - 1.0) * gamma_n(spec.dim)? * r.powi(spec.dim as i32 - 2) * t
        + (gr * spec.height + 1.0).powf(1.0 - p);
    Ok(((bracket.powf(1.0 / (1.0 - p)) - 1.0).max(0.0)) / gr)
}

/// Height of the explicit solution for the affine family `m(σ) = 1 + σ`:
/// `a(t) = (e^{−Nγ_N r^{N−2}·t}·(γ_N r^{N−1} k + 1) − 1)⁺ / (γ_N r^{N−1})`.
pub fn amplitude_affine(spec: &RadialSolutionSpec, t: f64) -> Result<f64> {
    require_nonnegative_time(t)?;
    if !matches!(spec.coefficient.family(), CoefficientFamily::Affine) {
        return Err(TvError::Argument(format!(
            "affine amplitude needs the affine family, got {}",
            spec.coefficient.family_name()
        )));
    }
    let n = spec.dim as f64;
    let r = spec.ball_radius;
    let gr = spec.perimeter();
    let decay = (-n * gamma_n(spec.dim)? * r.powi(spec.dim as i32 - 2) * t).exp();
    Ok((decay * (gr * spec.height + 1.0) - 1.0).max(0.0) / gr)
}

/// The amplitude of the plain (unit-coefficient) flow: `(k − N·t/r)⁺`,
/// extinct at `t = k·r/N`.
pub fn base_radial_amplitude(n: usize, r: f64, k: f64, t: f64) -> f64 {
    (k - n as f64 * t / r).max(0.0)
}

/// Height of the explicit radial solution, any analytic family.
pub fn amplitude(spec: &RadialSolutionSpec, t: f64) -> Result<f64> {
    match spec.coefficient.family() {
        CoefficientFamily::Constant(c) => {
            require_nonnegative_time(t)?;
            Ok((spec.height - c * spec.dim as f64 * t / spec.ball_radius).max(0.0))
        }
        CoefficientFamily::Affine => amplitude_affine(spec, t),
        CoefficientFamily::Power(_) => amplitude_power(spec, t),
        CoefficientFamily::Tabulated(_) => Err(TvError::Argument(
            "no closed-form amplitude for tabulated coefficients".into(),
        )),
    }
}

/// The sup-norm lower bound along the flow started from data dominating
/// `k·χ_{B_r}`.  By construction this is the same function as
/// [`amplitude`]: the bound is attained by the explicit solution, so a
/// single implementation serves both roles.
pub fn linf_lower_bound(spec: &RadialSolutionSpec, t: f64) -> Result<f64> {
    amplitude(spec, t)
}

/// Time derivative of the explicit radial height, expressed through the
/// height equation `a′ = −(N/r)·m(γ_N r^{N−1}·a)` (zero past extinction).
pub fn amplitude_derivative(spec: &RadialSolutionSpec, t: f64) -> Result<f64> {
    let a = amplitude(spec, t)?;
    if a == 0.0 {
        return Ok(0.0);
    }
    let sigma = a * spec.perimeter();
    Ok(-(spec.dim as f64 / spec.ball_radius) * spec.coefficient.eval(sigma))
}

/// Closed-form extinction time of the explicit radial solution:
/// power → `[1 − (γ_N k r^{N−1}+1)^{1−p}] / [N(p−1)γ_N r^{N−2}]`,
/// affine → `log(γ_N r^{N−1} k + 1) / (N γ_N r^{N−2})`,
/// constant `c` → `k·r/(N·c)`.
pub fn extinction_time_closed_form(spec: &RadialSolutionSpec) -> Result<f64> {
    let n = spec.dim as f64;
    let r = spec.ball_radius;
    let gr = spec.perimeter();
    let rate = gamma_n(spec.dim)? * r.powi(spec.dim as i32 - 2);
    match spec.coefficient.family() {
        CoefficientFamily::Constant(c) => Ok(spec.height * r / (n * c)),
        CoefficientFamily::Affine => Ok((gr * spec.height + 1.0).ln() / (n * rate)),
        CoefficientFamily::Power(p) => {
            Ok((1.0 - (gr * spec.height + 1.0).powf(1.0 - p)) / (n * (p - 1.0) * rate))
        }
        CoefficientFamily::Tabulated(_) => Err(TvError::Argument(
            "no closed-form extinction time for tabulated coefficients".into(),
        )),
    }
}

/// The flux field certifying the radial solution: `−x/r` inside the ball,
/// `−r^{N−1}·x/|x|^N` outside.  Continuous across `|x| = r`, magnitude at
/// most 1 everywhere, divergence `−N/r` inside and 0 outside.
pub fn candidate_vector_field(x: &[f64], r: f64) -> Vec<f64> {
    let norm2: f64 = x.iter().map(|c| c * c).sum();
    let norm = norm2.sqrt();
    if norm < r {
        x.iter().map(|c| -c / r).collect()
    } else {
        let n = x.len() as i32;
        let scale = -r.powi(n - 1) / norm.powi(n);
        x.iter().map(|c| scale * c).collect()
    }
}

/// Exact concavity constant of `M(σ) ≥ μ·m(σ)·σ` for the analytic
/// families: constant → 1, affine → 1/2, power `p` → `1/(p+1)`.  Tabulated
/// coefficients have no closed form; the caller must supply `μ` there.
pub fn mu_constant(coef: &KirchhoffCoefficient) -> Result<f64> {
    match coef.family() {
        CoefficientFamily::Constant(_) => Ok(1.0),
        CoefficientFamily::Affine => Ok(0.5),
        CoefficientFamily::Power(p) => Ok(1.0 / (p + 1.0)),
        CoefficientFamily::Tabulated(_) => Err(TvError::Argument(
            "no closed-form concavity constant for tabulated coefficients; supply one".into(),
        )),
    }
}

/// Extinction-time upper bound `d(Ω)·‖u₀‖∞ / (N·m(0))`, with `d(Ω)` the
/// radius of the smallest origin-centered ball enclosing the domain.  The
/// bound is attained by the indicator of the full enclosing ball under a
/// constant coefficient, so there is no spare factor to hide behind.
pub fn extinction_upper_bound(
    domain: &Arc<GridDomain>,
    u0: &ScalarField,
    coef: &KirchhoffCoefficient,
) -> f64 {
    let (linf, _, _) = field_norms(u0);
    domain.enclosing_radius * linf / (domain.dim as f64 * coef.at_zero())
}

/// Time-derivative bound along the flow:
/// `‖u′(t)‖∞ ≤ u0_scale · m(M(tv0)/(μ·m(0))) / t`, where `tv0` is the
/// relaxed energy of the initial state and `μ` its concavity constant.
/// Errors at `t ≤ 0` (the bound diverges) and for `μ` outside `(0, 1]`.
pub fn derivative_bound(
    coef: &KirchhoffCoefficient,
    u0_scale: f64,
    tv0: f64,
    t: f64,
    mu: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(TvError::Argument(format!(
            "derivative bound requires t > 0, got {t}"
        )));
    }
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(TvError::Argument(format!("mu must lie in (0, 1], got {mu}")));
    }
    if !(tv0 >= 0.0) || !(u0_scale >= 0.0) {
        return Err(TvError::Argument(format!(
            "initial scale and total variation must be nonnegative, got {u0_scale} and {tv0}"
        )));
    }
    let inner = coef.antiderivative(tv0) / (mu * coef.at_zero());
    Ok(u0_scale * coef.eval(inner) / t)
}

/// Relative slack allowed between the discrete total variation of a sampled
/// indicator and the continuum value `a·γ_N r^{N−1}`.  Binary interfaces on
/// a grid carry a staircase excess (≈ 16–17% for a disk with the isotropic
/// forward-difference energy) that does not vanish with `h`, so this is a
/// fixed modeling band, not a convergence tolerance.
const INDICATOR_TV_BAND: f64 = 0.25;

/// Check the defining conditions of the explicit radial solution at one
/// time, discretely on the given grid:
/// (a) the height equation against the central-difference divergence of
///     the candidate flux field, in integrated absolute value, compared to
///     `tol` times the first-order truncation scale of the interface kink;
/// (b) the flux/gradient pairing equality `∫(z, Du) = ∫|Du|` — exact
///     analytically (both sides are `a·γ_N r^{N−1}`), and the discrete
///     total variation of the sampled state against the same value within
///     the staircase band;
/// (c) vanishing of the state near the domain boundary (support compactly
///     inside, with a two-cell margin).
///
/// Margins are normalized per condition; the report passes when all are
/// nonnegative.  Errors for `t` at or beyond the extinction time (the
/// solution is no longer a strong solution there) — except for zero
/// height, which is trivially a solution for all time.
pub fn verify_strong_solution_conditions(
    spec: &RadialSolutionSpec,
    t: f64,
    domain: &Arc<GridDomain>,
    tol: f64,
) -> Result<VerificationReport> {
    require_nonnegative_time(t)?;
    if !(tol > 0.0) {
        return Err(TvError::Argument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if spec.dim != domain.dim {
        return Err(TvError::Argument(format!(
            "solution dimension {} does not match the grid dimension {}",
            spec.dim, domain.dim
        )));
    }

    if spec.height == 0.0 {
        // The zero solution: every condition holds with zero residual.
        let details = vec![SampleRecord {
            time: t,
            quantity: "zero_solution_residual",
            measured: 0.0,
            bound: 0.0,
            margin: 0.0,
        }];
        return Ok(VerificationReport::conclusive(
            "strong_solution_conditions",
            0.0,
            tol,
            details,
        ));
    }

    let t_ext = extinction_time_closed_form(spec)?;
    if t >= t_ext {
        return Err(TvError::Argument(format!(
            "t = {t} is at or beyond the extinction time {t_ext}; the explicit solution is zero there"
        )));
    }

    let n = spec.dim;
    let r = spec.ball_radius;
    let h = domain.spacing;
    let a = amplitude(spec, t)?;
    let sigma = a * spec.perimeter();
    let m_val = spec.coefficient.eval(sigma);
    let du_dt = amplitude_derivative(spec, t)?;

    // (a) Height equation vs. discrete divergence of the candidate flux.
    let mut residual_l1 = 0.0;
    for idx in 0..domain.num_cells() {
        if !domain.mask[idx] {
            continue;
        }
        let center = domain.cell_center(idx);
        let x = &center[..n];
        let mut div = 0.0;
        for axis in 0..n {
            let mut fwd = [0.0; 3];
            let mut bwd = [0.0; 3];
            fwd[..n].copy_from_slice(x);
            bwd[..n].copy_from_slice(x);
            fwd[axis] += h;
            bwd[axis] -= h;
            let zf = candidate_vector_field(&fwd[..n], r);
            let zb = candidate_vector_field(&bwd[..n], r);
            div += (zf[axis] - zb[axis]) / (2.0 * h);
        }
        let inside = center.iter().map(|c| c * c).sum::<f64>().sqrt() < r;
        let time_term = if inside { du_dt } else { 0.0 };
        residual_l1 += (time_term - m_val * div).abs();
    }
    residual_l1 *= domain.cell_volume();
    // First-order truncation scale: the flux kink at |x| = r smears the
    // divergence over an O(h) shell of area γ_N r^{N−1}, with magnitude
    // m·N/r.
    let trunc_scale = m_val * n as f64 * gamma_n(n)? * r.powi(n as i32 - 2) * h;
    let margin_a = 1.0 - residual_l1 / (tol * trunc_scale);

    // (b) Pairing equality.  Analytically both sides equal a·γ_N r^{N−1}.
    let pairing_lhs = sigma;
    let pairing_rhs = sigma;
    let analytic_gap = (pairing_lhs - pairing_rhs).abs();
    let margin_b_exact = 1.0 - analytic_gap / (1e-12 * sigma.max(1.0));
    let state = indicator_field(domain, r, a)?;
    let tv_disc = discrete_tv(&state);
    let rel_gap = (tv_disc - sigma).abs() / sigma;
    let margin_b_disc = 1.0 - rel_gap / INDICATOR_TV_BAND;

    // (c) Support compactly inside the domain.
    let margin_c = (domain.enclosing_radius - r - 2.0 * h) / domain.enclosing_radius;

    let details = vec![
        SampleRecord {
            time: t,
            quantity: "height_equation_l1_residual",
            measured: residual_l1,
            bound: tol * trunc_scale,
            margin: margin_a,
        },
        SampleRecord {
            time: t,
            quantity: "pairing_equality_analytic",
            measured: analytic_gap,
            bound: 1e-12 * sigma.max(1.0),
            margin: margin_b_exact,
        },
        SampleRecord {
            time: t,
            quantity: "pairing_vs_discrete_tv",
            measured: rel_gap,
            bound: INDICATOR_TV_BAND,
            margin: margin_b_disc,
        },
        SampleRecord {
            time: t,
            quantity: "support_margin",
            measured: r + 2.0 * h,
            bound: domain.enclosing_radius,
            margin: margin_c,
        },
    ];
    let worst = margin_a
        .min(margin_b_exact)
        .min(margin_b_disc)
        .min(margin_c);
    Ok(VerificationReport::conclusive(
        "strong_solution_conditions",
        worst,
        0.0,
        details,
    ))
}

/// Build a trajectory by sampling the explicit radial solution at the given
/// times (strictly increasing, starting at 0).  Diagnostics carry the exact
/// continuum values — `tv = a·γ_N r^{N−1}`, norms scaled by the ball
/// measure — and a full field is stored at every sample.
pub fn sample_analytic_trajectory(
    spec: &RadialSolutionSpec,
    domain: &Arc<GridDomain>,
    times: &[f64],
) -> Result<FlowTrajectory> {
    if times.is_empty() {
        return Err(TvError::Argument("no sample times given".into()));
    }
    let vol = ball_volume(spec.dim, spec.ball_radius)?;
    let perim = spec.perimeter();
    let t_ext = extinction_time_closed_form(spec)?;

    let mut diagnostics = Vec::with_capacity(times.len());
    let mut fields = Vec::with_capacity(times.len());
    for &t in times {
        let a = amplitude(spec, t)?;
        let tv = a * perim;
        diagnostics.push(StepDiagnostics {
            tv,
            linf: a,
            ln: a * vol.powf(1.0 / spec.dim as f64),
            l2: a * vol.sqrt(),
            energy: spec.coefficient.antiderivative(tv),
        });
        fields.push(if a > 0.0 {
            indicator_field(domain, spec.ball_radius, a)?
        } else {
            ScalarField::zeros(domain.clone())
        });
    }
    let extinction = if *times.last().unwrap() >= t_ext {
        Some(t_ext)
    } else {
        None
    };
    let indices: Vec<usize> = (0..times.len()).collect();
    FlowTrajectory::new(times.to_vec(), diagnostics, indices, fields, extinction)
}
