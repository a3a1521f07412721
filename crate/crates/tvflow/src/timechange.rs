//! Reduction of the nonlocal flow to the unit-coefficient flow by
//! rescaling time.
//!
//! If `v` solves the plain total variation flow, then `u(t) = v(α(t))`
//! solves the nonlocal problem, where the inner clock `α` obeys
//! `α′(t) = φ(α(t))` with speed `φ(s) = m(tv(v(s)))`, equivalently
//! `α = ψ⁻¹` for `ψ(ρ) = ∫₀^ρ ds/φ(s)`.  This module builds `φ` from
//! either the closed-form radial base flow or a computed trajectory,
//! solves for `α` along two independent routes that must agree, and
//! composes trajectories through the resulting map.

use crate::analytic::{base_radial_amplitude, RadialSolutionSpec};
use crate::coefficient::KirchhoffCoefficient;
use crate::error::{Result, TvError};
use crate::field::field_norms;
use crate::solver::discrete_tv;
use crate::trajectory::{FlowTrajectory, StepDiagnostics};

/// The instantaneous clock speed `s ↦ φ(s) = m(tv at base time s)`.
/// Bounded below by `m(0) > 0` because the coefficient is nondecreasing.
pub struct ClockSpeed {
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Where this speed came from (closed-form radial or trajectory).
    pub source: String,
}

impl ClockSpeed {
    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }
}

/// Clock speed of the radial base flow: the unit-coefficient flow from
/// `k·χ_{B_r}` has total variation `(k − Ns/r)⁺·γ_N r^{N−1}`, so
/// `φ(s) = m` of that — constant `m(0)` once the base flow is extinct.
/// Only the geometry of `spec` enters; its own coefficient field plays no
/// role (the base flow runs at unit speed by definition).
pub fn build_phi_analytic(spec: &RadialSolutionSpec, coef: &KirchhoffCoefficient) -> ClockSpeed {
    let (n, r, k) = (spec.dim, spec.ball_radius, spec.height);
    let perimeter = spec.perimeter();
    let m = coef.clone();
    ClockSpeed {
        f: Box::new(move |s| m.eval(base_radial_amplitude(n, r, k, s) * perimeter)),
        source: format!(
            "radial closed form: dim {n}, ball radius {r}, height {k}, coefficient {}",
            coef.family_name()
        ),
    }
}

/// Clock speed read off a computed base trajectory: linear interpolation of
/// the recorded total variation, constant beyond the last sample, fed
/// through the coefficient.  The trajectory must be a unit-coefficient
/// flow for the composition identity to hold.
pub fn build_phi_from_trajectory(
    traj: &FlowTrajectory,
    coef: &KirchhoffCoefficient,
) -> Result<ClockSpeed> {
    if traj.times.is_empty() {
        return Err(TvError::TimeMap("empty trajectory".into()));
    }
    let times = traj.times.clone();
    let tvs: Vec<f64> = traj.diagnostics.iter().map(|d| d.tv).collect();
    let m = coef.clone();
    let source = format!(
        "trajectory with {} samples, coefficient {}",
        times.len(),
        coef.family_name()
    );
    Ok(ClockSpeed {
        f: Box::new(move |s| {
            let tv = if s <= times[0] {
                tvs[0]
            } else if s >= *times.last().unwrap() {
                *tvs.last().unwrap()
            } else {
                let j = times.partition_point(|&t| t <= s);
                let w = (s - times[j - 1]) / (times[j] - times[j - 1]);
                tvs[j - 1] * (1.0 - w) + tvs[j] * w
            };
            m.eval(tv)
        }),
        source,
    })
}

/// The solved inner clock `α` on `[0, end_time]`, stored as samples with a
/// monotone cubic interpolation rule (shape-preserving Hermite slopes), so
/// the map stays strictly increasing between samples and can be inverted.
#[derive(Debug, Clone)]
pub struct TimeMap {
    /// Sample times, uniform over the solve range, starting at 0.
    pub times: Vec<f64>,
    /// Clock values `α(times[i])`, strictly increasing from 0.
    pub values: Vec<f64>,
    /// Hermite slopes of the monotone cubic rule.
    pub slopes: Vec<f64>,
    /// Description of the clock speed this map was solved from.
    pub source: String,
}

impl TimeMap {
    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Evaluate `α(t)`.  Errors outside `[0, end_time]` (with a hair of
    /// slack for round-off at the right end).
    pub fn eval(&self, t: f64) -> Result<f64> {
        let end = self.end_time();
        if !(t >= 0.0) || t > end * (1.0 + 1e-12) + 1e-300 {
            return Err(TvError::TimeMap(format!(
                "query time {t} is outside the solved range [0, {end}]"
            )));
        }
        let t = t.min(end);
        let j = match self.times.partition_point(|&x| x <= t) {
            0 => 0,
            j if j >= self.times.len() => self.times.len() - 2,
            j => j - 1,
        };
        let (t0, t1) = (self.times[j], self.times[j + 1]);
        let dt = t1 - t0;
        let s = (t - t0) / dt;
        let (v0, v1) = (self.values[j], self.values[j + 1]);
        let (d0, d1) = (self.slopes[j], self.slopes[j + 1]);
        // Cubic Hermite basis.
        let s2 = s * s;
        let s3 = s2 * s;
        Ok(v0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + dt * d0 * (s3 - 2.0 * s2 + s)
            + v1 * (-2.0 * s3 + 3.0 * s2)
            + dt * d1 * (s3 - s2))
    }

    /// Invert the map: the `t` with `α(t) = target`, or `None` when the
    /// target lies outside the attained range.
    pub fn invert(&self, target: f64) -> Option<f64> {
        if target < self.values[0] || target > *self.values.last().unwrap() {
            return None;
        }
        let (mut lo, mut hi) = (0.0, self.end_time());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = self.eval(mid).expect("mid lies inside the solved range");
            if v < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * self.end_time().max(1.0) {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

/// Shape-preserving Hermite slopes for strictly increasing data
/// (Fritsch–Carlson): harmonic-mean weighting of neighbouring secants,
/// zero at local flats, clamped three-point estimates at the ends.
fn monotone_slopes(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut d = vec![0.0; n];
    if n == 1 {
        return d;
    }
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = values
        .windows(2)
        .zip(&h)
        .map(|(w, hh)| (w[1] - w[0]) / hh)
        .collect();
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end_slope = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// Number of uniform output samples of the solved clock.
const ALPHA_SAMPLES: usize = 1024;
/// Resolution of the quadrature grid for `ψ(ρ) = ∫ ds/φ(s)`.
const PSI_CELLS: usize = 16384;

/// Solve `α′ = φ(α)`, `α(0) = 0`, on `[0, t_end]`.
///
/// Two independent routes are computed: adaptive fourth-order
/// Runge–Kutta integration of the ODE, and Simpson quadrature of
/// `ψ(ρ) = ∫₀^ρ ds/φ` followed by monotone inversion.  The routes must
/// agree within `tol` at every output sample or the solve fails; the
/// returned map carries the quadrature-route values.  Errors if `φ` is
/// non-positive anywhere it is evaluated.
pub fn solve_alpha(phi: &ClockSpeed, t_end: f64, tol: f64) -> Result<TimeMap> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(TvError::TimeMap(format!(
            "end time must be positive, got {t_end}"
        )));
    }
    if !(tol > 0.0) {
        return Err(TvError::TimeMap(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let eval = |s: f64| -> Result<f64> {
        let v = phi.eval(s);
        if !(v > 0.0) || !v.is_finite() {
            return Err(TvError::TimeMap(format!(
                "clock speed must be positive, got {v} at s = {s}"
            )));
        }
        Ok(v)
    };

    // Route 1: ODE integration with per-interval step-doubling control.
    let k = ALPHA_SAMPLES;
    let dt_out = t_end / k as f64;
    let mut alpha_ode = Vec::with_capacity(k + 1);
    alpha_ode.push(0.0);
    let mut a = 0.0f64;
    let local_budget = 0.1 * tol / k as f64;
    for _ in 0..k {
        let mut substeps = 1usize;
        loop {
            let full = rk4_advance(&eval, a, dt_out, substeps)?;
            let half = rk4_advance(&eval, a, dt_out, substeps * 2)?;
            if (full - half).abs() <= local_budget || substeps >= (1 << 16) {
                a = half;
                break;
            }
            substeps *= 2;
        }
        alpha_ode.push(a);
    }

    // Route 2: quadrature of psi on a fine grid covering the attained
    // range, then inversion.  The range comes from route 1 with margin;
    // if psi disagrees about the range the grid is extended, so an
    // erroneous route 1 cannot hide the disagreement.
    let cell_budget = 0.1 * tol / PSI_CELLS as f64;
    let mut rho_max = (a * 1.05).max(t_end * eval(0.0)? * 0.01) + 1e-12;
    let (mut psi_grid, mut rho_step) = build_psi_grid(&eval, rho_max, PSI_CELLS, cell_budget)?;
    let mut guard = 0;
    while *psi_grid.last().unwrap() < t_end {
        rho_max *= 2.0;
        let rebuilt = build_psi_grid(&eval, rho_max, PSI_CELLS, cell_budget)?;
        psi_grid = rebuilt.0;
        rho_step = rebuilt.1;
        guard += 1;
        if guard > 60 {
            return Err(TvError::TimeMap(
                "clock integral never reaches the requested end time".into(),
            ));
        }
    }

    let mut alpha_psi = Vec::with_capacity(k + 1);
    for i in 0..=k {
        let t = i as f64 * dt_out;
        alpha_psi.push(invert_psi(&eval, &psi_grid, rho_step, t)?);
    }

    let (argmax, worst) = alpha_ode
        .iter()
        .zip(&alpha_psi)
        .enumerate()
        .map(|(i, (x, y))| (i, (x - y).abs()))
        .fold((0usize, 0.0f64), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    if worst > tol {
        return Err(TvError::TimeMap(format!(
            "clock solve routes disagree: max |ODE − quadrature| = {worst:.3e} exceeds {tol:.3e} at i={argmax} t={} ode={} psi={}",
            argmax as f64 * dt_out, alpha_ode[argmax], alpha_psi[argmax]
        )));
    }

    let times: Vec<f64> = (0..=k).map(|i| i as f64 * dt_out).collect();
    let slopes = monotone_slopes(&times, &alpha_psi);
    Ok(TimeMap {
        times,
        values: alpha_psi,
        slopes,
        source: phi.source.clone(),
    })
}

/// `substeps` classic Runge–Kutta steps of `α′ = φ(α)` across `dt`.
fn rk4_advance(
    eval: &impl Fn(f64) -> Result<f64>,
    mut a: f64,
    dt: f64,
    substeps: usize,
) -> Result<f64> {
    let h = dt / substeps as f64;
    for _ in 0..substeps {
        let k1 = eval(a)?;
        let k2 = eval(a + 0.5 * h * k1)?;
        let k3 = eval(a + 0.5 * h * k2)?;
        let k4 = eval(a + h * k3)?;
        a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok(a)
}

/// Cumulative values of `ψ(ρ) = ∫₀^ρ ds/φ(s)` on a uniform grid of
/// `cells` cells over `[0, rho_max]`, each cell integrated by adaptive
/// Simpson to `cell_budget`.  Plain per-cell Simpson is not enough: the
/// clock speed has a slope kink where the underlying flow goes extinct,
/// and Simpson across a kink is only second-order accurate in the cell
/// width, which would leave a constant offset in every later cumulative
/// value.  Returns `(values, cell width)`.
fn build_psi_grid(
    eval: &impl Fn(f64) -> Result<f64>,
    rho_max: f64,
    cells: usize,
    cell_budget: f64,
) -> Result<(Vec<f64>, f64)> {
    let step = rho_max / cells as f64;
    let mut psi = Vec::with_capacity(cells + 1);
    psi.push(0.0);
    let mut acc = 0.0;
    let mut g_left = 1.0 / eval(0.0)?;
    for j in 0..cells {
        let s0 = j as f64 * step;
        let g_right = 1.0 / eval(s0 + step)?;
        acc += adaptive_cell(eval, s0, step, g_left, g_right, cell_budget, 0)?;
        psi.push(acc);
        g_left = g_right;
    }
    Ok((psi, step))
}

/// Adaptive Simpson for `∫ ds/φ(s)` over `[s0, s0 + width]` with the
/// endpoint integrand values already known.  Splits until the Richardson
/// error estimate drops below `budget`; in practice only a cell holding a
/// slope kink of the clock speed recurses at all.
fn adaptive_cell(
    eval: &impl Fn(f64) -> Result<f64>,
    s0: f64,
    width: f64,
    g_left: f64,
    g_right: f64,
    budget: f64,
    depth: u32,
) -> Result<f64> {
    let g_mid = 1.0 / eval(s0 + 0.5 * width)?;
    let coarse = width / 6.0 * (g_left + 4.0 * g_mid + g_right);
    let g_lq = 1.0 / eval(s0 + 0.25 * width)?;
    let g_rq = 1.0 / eval(s0 + 0.75 * width)?;
    let fine = width / 12.0 * (g_left + 4.0 * g_lq + 2.0 * g_mid + 4.0 * g_rq + g_right);
    let err = (fine - coarse) / 15.0;
    if err.abs() <= budget || depth >= 40 {
        return Ok(fine + err);
    }
    let half = 0.5 * width;
    Ok(
        adaptive_cell(eval, s0, half, g_left, g_mid, 0.5 * budget, depth + 1)?
            + adaptive_cell(eval, s0 + half, half, g_mid, g_right, 0.5 * budget, depth + 1)?,
    )
}

/// Solve `ψ(ρ) = t` on the cumulative grid: locate the coarse cell, run a
/// fine cumulative Simpson march inside it to bracket the crossing (the
/// clock speed can have a slope kink inside a cell, where a single cubic
/// model is not accurate enough), then Newton on the Hermite model of the
/// bracketing subcell, whose edge slopes `1/φ` are known exactly.
fn invert_psi(
    eval: &impl Fn(f64) -> Result<f64>,
    psi: &[f64],
    step: f64,
    t: f64,
) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let j = psi
        .partition_point(|&v| v < t)
        .clamp(1, psi.len() - 1)
        - 1;
    const SUB: usize = 64;
    let s0 = j as f64 * step;
    let sub = step / SUB as f64;
    let mut acc = psi[j];
    let mut g_left = 1.0 / eval(s0)?;
    for q in 0..SUB {
        let a = s0 + q as f64 * sub;
        let g_mid = 1.0 / eval(a + 0.5 * sub)?;
        let g_right = 1.0 / eval(a + sub)?;
        let next = acc + sub / 6.0 * (g_left + 4.0 * g_mid + g_right);
        if next >= t || q == SUB - 1 {
            return Ok(hermite_invert(a, sub, acc, next.max(t), g_left, g_right, t));
        }
        acc = next;
        g_left = g_right;
    }
    unreachable!("the marching loop always returns from its last subcell");
}

/// Newton solve of `H(ρ) = t` for the cubic Hermite `H` on `[a, a + width]`
/// with endpoint values `p0 ≤ t ≤ p1` and endpoint slopes `d0`, `d1 > 0`.
fn hermite_invert(a: f64, width: f64, p0: f64, p1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let mut x = if p1 > p0 { (t - p0) / (p1 - p0) } else { 0.5 };
    for _ in 0..40 {
        let x2 = x * x;
        let x3 = x2 * x;
        let val = p0 * (2.0 * x3 - 3.0 * x2 + 1.0)
            + width * d0 * (x3 - 2.0 * x2 + x)
            + p1 * (-2.0 * x3 + 3.0 * x2)
            + width * d1 * (x3 - x2);
        let deriv = p0 * (6.0 * x2 - 6.0 * x)
            + width * d0 * (3.0 * x2 - 4.0 * x + 1.0)
            + p1 * (-6.0 * x2 + 6.0 * x)
            + width * d1 * (3.0 * x2 - 2.0 * x);
        let delta = (val - t) / deriv.max(1e-300);
        x -= delta;
        x = x.clamp(0.0, 1.0);
        if delta.abs() < 1e-16 {
            break;
        }
    }
    a + x * width
}

/// Compose a base trajectory through a solved clock: the state at query
/// time `t` is the base state at `α(t)`, with diagnostics recomputed on
/// the composed fields under the given coefficient.  Queries beyond the
/// clock's solved range are errors.  A leading zero time is inserted when
/// the query list does not start at 0.
pub fn compose(
    base: &FlowTrajectory,
    alpha: &TimeMap,
    query_times: &[f64],
    coef: &KirchhoffCoefficient,
) -> Result<FlowTrajectory> {
    if query_times.is_empty() {
        return Err(TvError::Argument("no query times given".into()));
    }
    let mut times: Vec<f64> = Vec::with_capacity(query_times.len() + 1);
    if query_times[0] != 0.0 {
        times.push(0.0);
    }
    times.extend_from_slice(query_times);
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(TvError::Argument(
            "query times must be strictly increasing".into(),
        ));
    }

    let mut diagnostics = Vec::with_capacity(times.len());
    let mut fields = Vec::with_capacity(times.len());
    for &t in &times {
        let s = alpha.eval(t)?;
        let state = base.field_at_time(s)?;
        let tv = discrete_tv(&state);
        let (linf, ln, l2) = field_norms(&state);
        diagnostics.push(StepDiagnostics {
            tv,
            linf,
            ln,
            l2,
            energy: coef.antiderivative(tv),
        });
        fields.push(state);
    }

    // The composed flow is extinct where the base flow is: map the base
    // extinction instant back through the clock when it is in range.
    let extinction = base
        .extinction_time
        .and_then(|s_ext| alpha.invert(s_ext))
        .filter(|t_ext| *t_ext <= *times.last().unwrap());

    let indices: Vec<usize> = (0..times.len()).collect();
    FlowTrajectory::new(times, diagnostics, indices, fields, extinction)
}
