//! Inequality checks against computed or closed-form trajectories.
//!
//! Each check compares one structural property of the flow — sup-norm
//! monotonicity, energy decay, the extinction-time bound, domination by a
//! spatially constant comparator, support containment, the closed-form
//! sup-norm lower bound, linear decay of the `N`-norm near extinction, and
//! the a-priori time-derivative bound — and reports a worst margin with
//! per-sample records.  Checks never repair their inputs: a violated
//! precondition is an error, a violated inequality is a failed report.

use std::sync::Arc;

use rayon::prelude::*;

use crate::analytic::{
    amplitude, derivative_bound, extinction_time_closed_form, extinction_upper_bound,
    mu_constant, RadialSolutionSpec,
};
use crate::coefficient::KirchhoffCoefficient;
use crate::error::{Result, TvError};
use crate::grid::GridDomain;
use crate::report::{CheckStatus, SampleRecord, VerificationReport};
use crate::trajectory::FlowTrajectory;

/// Sup-norm slack for the maximum principle; the proximal step is
/// clamped to the initial range, so only round-off can violate it.
pub const MAX_PRINCIPLE_TOL: f64 = 1e-12;
/// Cells with |u| above this count as support.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;
/// Minimum coefficient of determination for the near-extinction fit.
pub const DECAY_FIT_R2: f64 = 0.98;

/// The sup norm never exceeds its initial value.
pub fn check_max_principle(traj: &FlowTrajectory) -> Result<VerificationReport> {
    let linf0 = traj.diagnostics[0].linf;
    let details: Vec<SampleRecord> = traj
        .times
        .iter()
        .zip(&traj.diagnostics)
        .map(|(&t, d)| SampleRecord {
            time: t,
            quantity: "sup_norm",
            measured: d.linf,
            bound: linf0,
            margin: linf0 - d.linf,
        })
        .collect();
    let worst = details.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(VerificationReport::conclusive(
        "max_principle",
        worst,
        MAX_PRINCIPLE_TOL,
        details,
    ))
}

/// Energy decay: `M(tv(t)) ≤ M(tv(0)) + tol`, plus the stronger per-step
/// monotonicity of the total variation itself, which the implicit scheme
/// satisfies up to its inner tolerance.
pub fn check_energy(
    traj: &FlowTrajectory,
    coef: &KirchhoffCoefficient,
    tol: f64,
) -> Result<VerificationReport> {
    if !(tol > 0.0) {
        return Err(TvError::Argument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let m0 = coef.antiderivative(traj.diagnostics[0].tv);
    let mut details = Vec::with_capacity(2 * traj.times.len());
    for (&t, d) in traj.times.iter().zip(&traj.diagnostics) {
        details.push(SampleRecord {
            time: t,
            quantity: "energy_vs_initial",
            measured: coef.antiderivative(d.tv),
            bound: m0,
            margin: m0 - coef.antiderivative(d.tv),
        });
    }
    for i in 1..traj.times.len() {
        let (prev, cur) = (traj.diagnostics[i - 1].tv, traj.diagnostics[i].tv);
        details.push(SampleRecord {
            time: traj.times[i],
            quantity: "tv_step",
            measured: cur,
            bound: prev,
            margin: prev - cur,
        });
    }
    let worst = details.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(VerificationReport::conclusive("energy_decay", worst, tol, details))
}

/// The extinction time obeys `T* ≤ d(Ω)·‖u₀‖∞ / (N·m(0))`, with one time
/// step of slack for locating the crossing.  A trajectory that never goes
/// extinct within its horizon yields an inconclusive report.
pub fn check_extinction_bound(
    traj: &FlowTrajectory,
    domain: &Arc<GridDomain>,
    coef: &KirchhoffCoefficient,
) -> Result<VerificationReport> {
    let bound = extinction_upper_bound(domain, &traj.fields[0], coef);
    let Some(t_ext) = traj.extinction_time else {
        return Ok(VerificationReport::inconclusive(
            "extinction_bound",
            vec![SampleRecord {
                time: traj.last_time(),
                quantity: "extinction_time",
                measured: f64::NAN,
                bound,
                margin: f64::NAN,
            }],
        ));
    };
    let dt = if traj.times.len() >= 2 {
        traj.times[1] - traj.times[0]
    } else {
        0.0
    };
    let details = vec![SampleRecord {
        time: t_ext,
        quantity: "extinction_time",
        measured: t_ext,
        bound: bound + dt,
        margin: bound + dt - t_ext,
    }];
    Ok(VerificationReport::conclusive(
        "extinction_bound",
        details[0].margin,
        0.0,
        details,
    ))
}

/// Domination by the spatially constant comparator
/// `α(t) = (alpha0 − |slope|·t)⁺`: requires `|slope| ≤ N·m(0)/d(Ω)` and
/// `‖u₀‖∞ ≤ alpha0`, and then checks `‖u(t)‖∞ ≤ α(t) + tol` at every
/// recorded time (which bounds `±u` simultaneously).
pub fn check_comparison(
    traj: &FlowTrajectory,
    alpha0: f64,
    slope: f64,
    domain: &GridDomain,
    coef: &KirchhoffCoefficient,
    tol: f64,
) -> Result<VerificationReport> {
    let max_slope = domain.dim as f64 * coef.at_zero() / domain.enclosing_radius;
    if slope.abs() > max_slope * (1.0 + 1e-12) {
        return Err(TvError::Argument(format!(
            "comparator slope {} exceeds N·m(0)/d(Ω) = {max_slope}",
            slope.abs()
        )));
    }
    let linf0 = traj.diagnostics[0].linf;
    if alpha0 < linf0 {
        return Err(TvError::Argument(format!(
            "comparator must start above the data: alpha0 = {alpha0} < ‖u₀‖∞ = {linf0}"
        )));
    }
    let details: Vec<SampleRecord> = traj
        .times
        .iter()
        .zip(&traj.diagnostics)
        .map(|(&t, d)| {
            let comparator = (alpha0 - slope.abs() * t).max(0.0);
            SampleRecord {
                time: t,
                quantity: "sup_norm_vs_comparator",
                measured: d.linf,
                bound: comparator,
                margin: comparator - d.linf,
            }
        })
        .collect();
    let worst = details.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(VerificationReport::conclusive(
        "comparison_principle",
        worst,
        tol,
        details,
    ))
}

/// No propagation of support: every cell carrying more than the support
/// threshold stays within distance `r + halo_cells·h` of the origin, at
/// every stored snapshot.
pub fn check_support(
    traj: &FlowTrajectory,
    r: f64,
    halo_cells: usize,
) -> Result<VerificationReport> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(TvError::Argument(format!(
            "support radius must be positive, got {r}"
        )));
    }
    let domain = traj.domain();
    let allowed = r + halo_cells as f64 * domain.spacing;
    let mut details = Vec::with_capacity(traj.fields.len());
    for (j, field) in traj.fields.iter().enumerate() {
        let mut farthest = 0.0f64;
        for (idx, &v) in field.values().iter().enumerate() {
            if v.abs() > SUPPORT_THRESHOLD {
                farthest = farthest.max(domain.center_distance(idx));
            }
        }
        details.push(SampleRecord {
            time: traj.snapshot_time(j),
            quantity: "support_radius",
            measured: farthest,
            bound: allowed,
            margin: allowed - farthest,
        });
    }
    let worst = details.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(VerificationReport::conclusive(
        "support_containment",
        worst,
        1e-12,
        details,
    ))
}

/// The sup norm dominates the closed-form radial amplitude up to `tol`
/// while that amplitude is positive.  Meaningful when the initial data
/// dominates `k·χ_{B_r}` for the spec's `k`, `r`.
pub fn check_linf_lower_bounds(
    traj: &FlowTrajectory,
    spec: &RadialSolutionSpec,
    tol: f64,
) -> Result<VerificationReport> {
    let t_ext = extinction_time_closed_form(spec)?;
    let mut details = Vec::new();
    for (&t, d) in traj.times.iter().zip(&traj.diagnostics) {
        if t > t_ext {
            break;
        }
        let amp = amplitude(spec, t)?;
        details.push(SampleRecord {
            time: t,
            quantity: "sup_norm_vs_amplitude",
            measured: d.linf,
            bound: amp,
            margin: d.linf - amp,
        });
    }
    let worst = details.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(VerificationReport::conclusive(
        "linf_lower_bound",
        worst,
        tol,
        details,
    ))
}

/// Near-extinction decay of the `N`-norm: on the final third of the
/// lifespan, `‖u(t)‖_N` against `T* − t` must fit a line with positive
/// slope and `R² ≥ 0.98`, and the ratio `‖u(t)‖_N/(T*−t)` must stay
/// bounded below by a positive constant (reported, not compared against
/// the embedding constant, which has no concrete value).
pub fn check_ln_decay(traj: &FlowTrajectory) -> Result<VerificationReport> {
    let Some(t_ext) = traj.extinction_time else {
        return Ok(VerificationReport::inconclusive("ln_decay_rate", Vec::new()));
    };
    let window_start = t_ext * (2.0 / 3.0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut details = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for (&t, d) in traj.times.iter().zip(&traj.diagnostics) {
        if t < window_start || t > t_ext {
            continue;
        }
        let x = t_ext - t;
        xs.push(x);
        ys.push(d.ln);
        if x > 0.0 {
            min_ratio = min_ratio.min(d.ln / x);
        }
        details.push(SampleRecord {
            time: t,
            quantity: "ln_norm",
            measured: d.ln,
            bound: 0.0,
            margin: d.ln,
        });
    }
    if xs.len() < 3 {
        return Ok(VerificationReport::inconclusive("ln_decay_rate", details));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let syy: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Ok(VerificationReport::inconclusive("ln_decay_rate", details));
    }
    let slope = sxy / sxx;
    let r2 = (sxy * sxy) / (sxx * syy);
    if !min_ratio.is_finite() {
        min_ratio = 0.0;
    }
    details.push(SampleRecord {
        time: t_ext,
        quantity: "fit_r_squared",
        measured: r2,
        bound: DECAY_FIT_R2,
        margin: r2 - DECAY_FIT_R2,
    });
    details.push(SampleRecord {
        time: t_ext,
        quantity: "fit_slope",
        measured: slope,
        bound: 0.0,
        margin: slope,
    });
    details.push(SampleRecord {
        time: t_ext,
        quantity: "min_ratio_ln_over_remaining",
        measured: min_ratio,
        bound: 0.0,
        margin: min_ratio,
    });
    let worst = (r2 - DECAY_FIT_R2).min(slope).min(min_ratio);
    Ok(VerificationReport::conclusive(
        "ln_decay_rate",
        worst,
        0.0,
        details,
    ))
}

/// A-priori bound on the time derivative: per-cell difference quotients
/// between consecutive snapshots must not exceed
/// `‖u₀‖∞ · m(M(tv₀)/(μ·m(0))) / t`, evaluated at the left endpoint,
/// within a relative tolerance.  Pairs starting before `min_time` are
/// skipped (the bound diverges at `t = 0`).
pub fn check_derivative_bound(
    traj: &FlowTrajectory,
    coef: &KirchhoffCoefficient,
    mu: f64,
    tol: f64,
    min_time: f64,
) -> Result<VerificationReport> {
    if traj.fields.len() < 3 {
        return Err(TvError::Argument(format!(
            "need at least 3 stored snapshots for difference quotients, got {}",
            traj.fields.len()
        )));
    }
    let u0_scale = traj.diagnostics[0].linf;
    let tv0 = traj.diagnostics[0].tv;
    let mut details = Vec::new();
    for j in 1..traj.fields.len() {
        let t_left = traj.snapshot_time(j - 1);
        if t_left < min_time {
            continue;
        }
        let dt = traj.snapshot_time(j) - t_left;
        let quotient = traj.fields[j]
            .values()
            .iter()
            .zip(traj.fields[j - 1].values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
            / dt;
        let bound = derivative_bound(coef, u0_scale, tv0, t_left, mu)?;
        let limit = bound * (1.0 + tol);
        details.push(SampleRecord {
            time: t_left,
            quantity: "difference_quotient",
            measured: quotient,
            bound: limit,
            // Normalized so margins are comparable across the 1/t range.
            margin: (limit - quotient) / limit,
        });
    }
    if details.is_empty() {
        return Err(TvError::Argument(format!(
            "no snapshot pairs at or beyond min_time = {min_time}"
        )));
    }
    let worst = details.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(VerificationReport::conclusive(
        "derivative_bound",
        worst,
        0.0,
        details,
    ))
}

/// Which checks a suite run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    MaxPrinciple,
    Energy,
    ExtinctionBound,
    Comparison,
    Support,
    LinfLower,
    LnDecay,
    DerivativeBound,
}

impl CheckKind {
    pub const ALL: [CheckKind; 8] = [
        CheckKind::MaxPrinciple,
        CheckKind::Energy,
        CheckKind::ExtinctionBound,
        CheckKind::Comparison,
        CheckKind::Support,
        CheckKind::LinfLower,
        CheckKind::LnDecay,
        CheckKind::DerivativeBound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckKind::MaxPrinciple => "max_principle",
            CheckKind::Energy => "energy_decay",
            CheckKind::ExtinctionBound => "extinction_bound",
            CheckKind::Comparison => "comparison_principle",
            CheckKind::Support => "support_containment",
            CheckKind::LinfLower => "linf_lower_bound",
            CheckKind::LnDecay => "ln_decay_rate",
            CheckKind::DerivativeBound => "derivative_bound",
        }
    }

    /// Inverse of [`as_str`](Self::as_str).
    pub fn parse(s: &str) -> Result<Self> {
        CheckKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                TvError::Argument(format!(
                    "unknown check '{s}' (expected one of: {})",
                    CheckKind::ALL.map(|k| k.as_str()).join(", ")
                ))
            })
    }
}

/// Tolerances and selection for a full suite run.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSuiteConfig {
    /// Checks to execute, in reporting order.
    pub checks: Vec<CheckKind>,
    /// Slack for energy decay and total variation monotonicity
    /// (absolute, on the scale of the inner solver tolerance).
    pub energy_tol: f64,
    /// Slack for the constant-comparator domination (absolute).
    pub comparison_tol: f64,
    /// Slack for the sup-norm lower bound (absolute; discretization
    /// error scale for computed trajectories).
    pub linf_lower_tol: f64,
    /// Relative slack for the time-derivative bound.
    pub derivative_tol: f64,
    /// Skip difference quotients starting before this time; `None`
    /// means ten leading time steps.
    pub derivative_min_time: Option<f64>,
    /// Halo width (in cells) allowed beyond the support radius.
    pub support_halo_cells: usize,
    /// Structure constant of the coefficient; `None` uses the family's
    /// exact value.
    pub mu: Option<f64>,
}

impl Default for CheckSuiteConfig {
    fn default() -> Self {
        CheckSuiteConfig {
            checks: CheckKind::ALL.to_vec(),
            energy_tol: 1e-4,
            comparison_tol: 1e-9,
            linf_lower_tol: 5e-2,
            derivative_tol: 5e-2,
            derivative_min_time: None,
            support_halo_cells: 2,
            mu: None,
        }
    }
}

/// Run the configured checks concurrently against one trajectory.
/// `radial` supplies the comparison geometry for the support and
/// sup-norm lower-bound checks; without it those checks are skipped.
pub fn run_suite(
    traj: &FlowTrajectory,
    radial: Option<&RadialSolutionSpec>,
    coef: &KirchhoffCoefficient,
    cfg: &CheckSuiteConfig,
) -> Result<Vec<VerificationReport>> {
    let domain = traj.domain();
    let min_time = cfg.derivative_min_time.unwrap_or_else(|| {
        if traj.times.len() >= 2 {
            10.0 * (traj.times[1] - traj.times[0])
        } else {
            0.0
        }
    });
    let mu = match cfg.mu {
        Some(value) => value,
        None => match coef.mu() {
            Some(value) => value,
            None => mu_constant(coef)?,
        },
    };

    type Job<'a> = Box<dyn Fn() -> Result<Option<VerificationReport>> + Send + Sync + 'a>;
    let mut jobs: Vec<Job> = Vec::new();
    for &kind in &cfg.checks {
        let job: Job = match kind {
            CheckKind::MaxPrinciple => Box::new(move || check_max_principle(traj).map(Some)),
            CheckKind::Energy => {
                let tol = cfg.energy_tol;
                Box::new(move || check_energy(traj, coef, tol).map(Some))
            }
            CheckKind::ExtinctionBound => {
                Box::new(move || check_extinction_bound(traj, &domain, coef).map(Some))
            }
            CheckKind::Comparison => {
                let tol = cfg.comparison_tol;
                Box::new(move || {
                    let alpha0 = traj.diagnostics[0].linf;
                    let slope = domain.dim as f64 * coef.at_zero() / domain.enclosing_radius;
                    check_comparison(traj, alpha0, slope, &domain, coef, tol).map(Some)
                })
            }
            CheckKind::Support => {
                let halo = cfg.support_halo_cells;
                Box::new(move || match radial {
                    Some(spec) => check_support(traj, spec.ball_radius, halo).map(Some),
                    None => Ok(None),
                })
            }
            CheckKind::LinfLower => {
                let tol = cfg.linf_lower_tol;
                Box::new(move || match radial {
                    Some(spec) => check_linf_lower_bounds(traj, spec, tol).map(Some),
                    None => Ok(None),
                })
            }
            CheckKind::LnDecay => Box::new(move || check_ln_decay(traj).map(Some)),
            CheckKind::DerivativeBound => {
                let tol = cfg.derivative_tol;
                Box::new(move || check_derivative_bound(traj, coef, mu, tol, min_time).map(Some))
            }
        };
        jobs.push(job);
    }

    let reports: Result<Vec<Option<VerificationReport>>> =
        jobs.par_iter().map(|job| job()).collect();
    Ok(reports?.into_iter().flatten().collect())
}

/// True when every conclusive report passed (inconclusive reports do not
/// fail a suite, but they are not counted as evidence either).
pub fn suite_passed(reports: &[VerificationReport]) -> bool {
    reports
        .iter()
        .all(|r| r.status == CheckStatus::Inconclusive || r.passed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::sample_analytic_trajectory;
    use crate::field::{indicator_field, ScalarField};
    use crate::grid::make_ball_domain;
    use crate::trajectory::StepDiagnostics;

    fn affine_spec(r: f64, k: f64) -> RadialSolutionSpec {
        RadialSolutionSpec::new(2, r, k, KirchhoffCoefficient::affine()).unwrap()
    }

    fn analytic_run(spec: &RadialSolutionSpec, samples: usize) -> FlowTrajectory {
        let d = make_ball_domain(2, 1.0, 1.0 / 32.0).unwrap();
        let t_ext = extinction_time_closed_form(spec).unwrap();
        let times: Vec<f64> = (0..=samples)
            .map(|i| 1.02 * t_ext * i as f64 / samples as f64)
            .collect();
        sample_analytic_trajectory(spec, &d, &times).unwrap()
    }

    /// Hand-built trajectory with prescribed sup-norm and tv diagnostics;
    /// fields are zero (only diagnostics-based checks should read it).
    fn synthetic(linf: &[f64], tv: &[f64], ext: Option<f64>) -> FlowTrajectory {
        let d = make_ball_domain(2, 1.0, 1.0 / 16.0).unwrap();
        let n = linf.len();
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let diags: Vec<StepDiagnostics> = linf
            .iter()
            .zip(tv)
            .map(|(&l, &s)| StepDiagnostics {
                tv: s,
                linf: l,
                ln: l,
                l2: l,
                energy: 0.0,
            })
            .collect();
        let indices: Vec<usize> = if n == 1 { vec![0] } else { vec![0, n - 1] };
        let fields = indices.iter().map(|_| ScalarField::zeros(d.clone())).collect();
        FlowTrajectory::new(times, diags, indices, fields, ext).unwrap()
    }

    #[test]
    fn analytic_affine_passes_every_check() {
        let spec = affine_spec(0.5, 1.0);
        let coef = spec.coefficient.clone();
        let traj = analytic_run(&spec, 400);
        let cfg = CheckSuiteConfig {
            energy_tol: 1e-9,
            comparison_tol: 1e-9,
            linf_lower_tol: 1e-9,
            derivative_tol: 1e-2,
            ..CheckSuiteConfig::default()
        };
        let reports = run_suite(&traj, Some(&spec), &coef, &cfg).unwrap();
        assert_eq!(reports.len(), 8);
        for r in &reports {
            assert!(
                r.passed,
                "{} failed with margin {}",
                r.check_name, r.worst_margin
            );
        }
        assert!(suite_passed(&reports));
    }

    #[test]
    fn analytic_power_families_pass_every_check() {
        for p in [2.0, 3.0] {
            let spec = RadialSolutionSpec::new(
                2,
                0.5,
                1.0,
                KirchhoffCoefficient::power(p).unwrap(),
            )
            .unwrap();
            let coef = spec.coefficient.clone();
            let traj = analytic_run(&spec, 400);
            let cfg = CheckSuiteConfig {
                energy_tol: 1e-9,
                linf_lower_tol: 1e-9,
                derivative_tol: 1e-2,
                ..CheckSuiteConfig::default()
            };
            let reports = run_suite(&traj, Some(&spec), &coef, &cfg).unwrap();
            for r in &reports {
                assert!(r.passed, "p = {p}: {} failed ({})", r.check_name, r.worst_margin);
            }
        }
    }

    #[test]
    fn max_principle_margin_zero_at_start_and_negative_control() {
        let spec = affine_spec(0.5, 1.0);
        let traj = analytic_run(&spec, 100);
        let report = check_max_principle(&traj).unwrap();
        assert!(report.passed);
        assert!(report.details[0].margin == 0.0);

        let bad = synthetic(&[1.0, 2.0], &[4.0, 4.0], None);
        let report = check_max_principle(&bad).unwrap();
        assert!(!report.passed);
        assert!((report.worst_margin - (-1.0)).abs() < 1e-15);
    }

    #[test]
    fn energy_negative_control_increasing_tv_fails() {
        let bad = synthetic(&[1.0, 1.0, 1.0], &[2.0, 2.5, 3.0], None);
        let coef = KirchhoffCoefficient::affine();
        let report = check_energy(&bad, &coef, 1e-6).unwrap();
        assert!(!report.passed);
        let zero = synthetic(&[0.0, 0.0], &[0.0, 0.0], Some(0.0));
        let report = check_energy(&zero, &coef, 1e-12).unwrap();
        assert!(report.passed);
        assert_eq!(report.worst_margin, 0.0);
    }

    #[test]
    fn extinction_bound_negative_control_and_inconclusive() {
        let coef = KirchhoffCoefficient::affine();
        // Fabricated extinction far beyond the bound d·‖u₀‖/(N·m(0)) ≈ 1.
        let bad = synthetic(&[1.0, 0.5, 0.0], &[3.0, 1.0, 0.0], Some(25.0));
        let d = bad.domain();
        let report = check_extinction_bound(&bad, &d, &coef).unwrap();
        assert!(!report.passed);
        assert!(report.worst_margin < -20.0);

        let open = synthetic(&[1.0, 0.9], &[3.0, 2.9], None);
        let report = check_extinction_bound(&open, &open.domain(), &coef).unwrap();
        assert_eq!(report.status, CheckStatus::Inconclusive);
        assert!(report.passed);
        assert!(suite_passed(&[report]));
    }

    #[test]
    fn comparison_detects_violations_and_bad_preconditions() {
        let coef = KirchhoffCoefficient::constant(1.0).unwrap();
        // Sup norm grows: the decaying comparator must lose eventually.
        let bad = synthetic(&[1.0, 1.2, 1.4], &[3.0, 3.0, 3.0], None);
        let d = bad.domain();
        let slope = 2.0 * 1.0 / d.enclosing_radius;
        let report = check_comparison(&bad, 1.0, slope, &d, &coef, 1e-9).unwrap();
        assert!(!report.passed);

        // Slope beyond N·m(0)/d(Ω) is a precondition violation.
        assert!(check_comparison(&bad, 2.0, 10.0 * slope, &d, &coef, 1e-9).is_err());
        // Comparator starting below the data is one as well.
        assert!(check_comparison(&bad, 0.5, slope, &d, &coef, 1e-9).is_err());
    }

    #[test]
    fn support_exact_for_analytic_and_fails_for_larger_ball() {
        let spec = affine_spec(0.5, 1.0);
        let traj = analytic_run(&spec, 50);
        let report = check_support(&traj, 0.5, 0).unwrap();
        assert!(report.passed, "analytic support is exact, halo 0 suffices");

        // Indicator of a larger ball pretending to have small support.
        let d = make_ball_domain(2, 1.0, 1.0 / 32.0).unwrap();
        let wide = indicator_field(&d, 0.45, 1.0).unwrap();
        let diag = StepDiagnostics {
            tv: 1.0,
            linf: 1.0,
            ln: 1.0,
            l2: 1.0,
            energy: 0.0,
        };
        let traj = FlowTrajectory::new(
            vec![0.0, 0.1],
            vec![diag.clone(), diag],
            vec![0, 1],
            vec![wide.clone(), wide],
            None,
        )
        .unwrap();
        let report = check_support(&traj, 0.25, 2).unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn linf_lower_bound_negative_control_half_height() {
        let spec = affine_spec(0.5, 1.0);
        let d = make_ball_domain(2, 1.0, 1.0 / 32.0).unwrap();
        let half = RadialSolutionSpec::new(2, 0.5, 0.5, KirchhoffCoefficient::affine()).unwrap();
        let t_ext = extinction_time_closed_form(&spec).unwrap();
        let times: Vec<f64> = (0..=100).map(|i| t_ext * i as f64 / 100.0).collect();
        let short = sample_analytic_trajectory(&half, &d, &times).unwrap();
        let report = check_linf_lower_bounds(&short, &spec, 1e-9).unwrap();
        assert!(!report.passed, "half-height run must undershoot the amplitude");

        // The genuine trajectory satisfies the bound with equality.
        let genuine = sample_analytic_trajectory(&spec, &d, &times).unwrap();
        let report = check_linf_lower_bounds(&genuine, &spec, 1e-12).unwrap();
        assert!(report.passed);
    }

    #[test]
    fn ln_decay_inconclusive_without_extinction() {
        let open = synthetic(&[1.0, 0.9, 0.8], &[3.0, 2.8, 2.6], None);
        let report = check_ln_decay(&open).unwrap();
        assert_eq!(report.status, CheckStatus::Inconclusive);

        let zero = synthetic(&[0.0], &[0.0], Some(0.0));
        let report = check_ln_decay(&zero).unwrap();
        assert_eq!(report.status, CheckStatus::Inconclusive);
    }

    #[test]
    fn derivative_bound_needs_enough_samples() {
        let spec = affine_spec(0.5, 1.0);
        let coef = spec.coefficient.clone();
        let two = synthetic(&[1.0, 0.9], &[3.0, 2.8], None);
        assert!(check_derivative_bound(&two, &coef, 0.5, 0.05, 0.0).is_err());

        let traj = analytic_run(&spec, 200);
        let t10 = traj.times[1] * 10.0;
        let report = check_derivative_bound(&traj, &coef, 0.5, 0.05, t10).unwrap();
        assert!(report.passed, "worst margin {}", report.worst_margin);
        // All pairs before min_time are excluded.
        assert!(report.details.iter().all(|r| r.time >= t10));
    }

    #[test]
    fn suite_skips_geometry_checks_without_radial_spec() {
        let spec = affine_spec(0.5, 1.0);
        let traj = analytic_run(&spec, 100);
        let cfg = CheckSuiteConfig {
            energy_tol: 1e-9,
            derivative_tol: 1e-2,
            ..CheckSuiteConfig::default()
        };
        let reports = run_suite(&traj, None, &spec.coefficient, &cfg).unwrap();
        assert_eq!(reports.len(), 6);
        assert!(reports.iter().all(|r| r.check_name != "support_containment"));
        assert!(reports.iter().all(|r| r.check_name != "linf_lower_bound"));
    }

    #[test]
    fn suite_respects_check_selection() {
        let spec = affine_spec(0.5, 1.0);
        let traj = analytic_run(&spec, 50);
        let cfg = CheckSuiteConfig {
            checks: vec![CheckKind::MaxPrinciple, CheckKind::LnDecay],
            ..CheckSuiteConfig::default()
        };
        let reports = run_suite(&traj, Some(&spec), &spec.coefficient, &cfg).unwrap();
        let names: Vec<&str> = reports.iter().map(|r| r.check_name.as_str()).collect();
        assert_eq!(names, vec!["max_principle", "ln_decay_rate"]);
    }
}
