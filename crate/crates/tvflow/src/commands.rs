//! Implementations behind the command-line subcommands.
//!
//! Each command takes a parsed [`RunConfig`] and an output directory and
//! writes its artifacts there as plain CSV/text files:
//!
//! - `solve`: `config.txt` (the resolved configuration), `diagnostics.csv`
//!   (one row of norms and energy per time step), `snapshots/t_<step>.csv`
//!   (selected fields, row-major), `summary.csv` (extinction data).
//! - `analytic`: `amplitude.csv` (closed-form radial amplitude samples) and
//!   `summary.csv` (closed-form extinction time and a-priori bounds).
//! - `verify`: the `solve` artifacts plus `report.csv` with one row per
//!   check; returns whether the suite as a whole passed.
//! - `sweep`: `sweep.csv` with one row per value of the swept key, runs
//!   executed in parallel (`TVFLOW_THREADS` caps the worker count).
//!
//! Floats are written as `{:.16e}` so a run's outputs are byte-stable
//! across repeats; the only exception is the `wall_seconds` row of
//! `summary.csv`.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::analytic::{
    amplitude, extinction_time_closed_form, extinction_upper_bound, mu_constant,
};
use crate::config::RunConfig;
use crate::error::{Result, TvError};
use crate::field::ScalarField;
use crate::grid::GridDomain;
use crate::report::CheckStatus;
use crate::solver::solve_flow;
use crate::trajectory::FlowTrajectory;
use crate::verify::{run_suite, suite_passed};

/// Fixed-width float rendering used across all CSV artifacts.
fn csv_f(x: f64) -> String {
    format!("{x:.16e}")
}

/// `extinction_time` cell: the refined time, or a marker when the horizon
/// was reached first.
fn extinction_cell(traj: &FlowTrajectory) -> String {
    match traj.extinction_time {
        Some(t) => csv_f(t),
        None => "not_reached".into(),
    }
}

/// Build the grid, the indicator initial data, and run the configured solver.
fn run_flow(cfg: &RunConfig) -> Result<(Arc<GridDomain>, ScalarField, FlowTrajectory)> {
    let domain = cfg.domain()?;
    let u0 = cfg.initial_field(&domain)?;
    let traj = solve_flow(&u0, &cfg.coefficient, &cfg.solver)?;
    Ok((domain, u0, traj))
}

/// The fastest admissible sup-norm decay slope, `N·m(0)/d(Ω)`: trajectories
/// whose sup norm drops faster than this line violate the comparison bound.
fn slope_limit(domain: &GridDomain, cfg: &RunConfig) -> f64 {
    domain.dim as f64 * cfg.coefficient.at_zero() / domain.enclosing_radius
}

/// Write the full artifact set for one completed run.
fn write_run_artifacts(
    cfg: &RunConfig,
    out_dir: &Path,
    domain: &GridDomain,
    u0: &ScalarField,
    traj: &FlowTrajectory,
    wall_seconds: f64,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.txt"), cfg.render())?;

    let mut diag = String::from("t,tv,linf,lN,l2,energy\n");
    for (t, d) in traj.times.iter().zip(&traj.diagnostics) {
        diag.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_f(*t),
            csv_f(d.tv),
            csv_f(d.linf),
            csv_f(d.ln),
            csv_f(d.l2),
            csv_f(d.energy),
        ));
    }
    fs::write(out_dir.join("diagnostics.csv"), diag)?;

    let snap_dir = out_dir.join("snapshots");
    fs::create_dir_all(&snap_dir)?;
    for (j, &step) in traj.snapshot_indices.iter().enumerate() {
        let field = &traj.fields[j];
        let dom = field.domain();
        let dims: Vec<String> = dom.extent[..dom.dim].iter().map(|e| e.to_string()).collect();
        let mut s = format!("dims,{}\nspacing,{}\n", dims.join(","), csv_f(dom.spacing));
        for row in field.values().chunks(dom.extent[0]) {
            let cells: Vec<String> = row.iter().map(|&v| csv_f(v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        fs::write(snap_dir.join(format!("t_{step}.csv")), s)?;
    }

    let u0_bound = extinction_upper_bound(traj.domain(), u0, &cfg.coefficient);
    let summary = format!(
        "key,value\n\
         extinction_time,{}\n\
         extinction_upper_bound,{}\n\
         comparison_slope_limit,{}\n\
         final_time,{}\n\
         steps,{}\n\
         wall_seconds,{}\n",
        extinction_cell(traj),
        csv_f(u0_bound),
        csv_f(slope_limit(domain, cfg)),
        csv_f(traj.last_time()),
        traj.len(),
        csv_f(wall_seconds),
    );
    fs::write(out_dir.join("summary.csv"), summary)?;
    Ok(())
}

/// Run the configured flow and write its artifacts to `out_dir`.
pub fn cmd_solve(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let started = Instant::now();
    let (domain, u0, traj) = run_flow(cfg)?;
    write_run_artifacts(
        cfg,
        out_dir,
        &domain,
        &u0,
        &traj,
        started.elapsed().as_secs_f64(),
    )
}

/// Sample the closed-form radial solution matching the configured initial
/// data and write `amplitude.csv` plus a summary of the derived constants.
pub fn cmd_analytic(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let spec = cfg.radial_spec()?;
    let t_end = extinction_time_closed_form(&spec)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.txt"), cfg.render())?;

    let n = cfg.samples.max(2);
    let mut amp = String::from("t,amplitude\n");
    for i in 0..n {
        let t = t_end * i as f64 / (n - 1) as f64;
        amp.push_str(&format!("{},{}\n", csv_f(t), csv_f(amplitude(&spec, t)?)));
    }
    fs::write(out_dir.join("amplitude.csv"), amp)?;

    let domain = cfg.domain()?;
    let u0 = cfg.initial_field(&domain)?;
    let mu = match cfg.coefficient.mu() {
        Some(m) => m,
        None => mu_constant(&cfg.coefficient)?,
    };
    let summary = format!(
        "key,value\n\
         closed_form_extinction,{}\n\
         extinction_upper_bound,{}\n\
         comparison_slope_limit,{}\n\
         mu,{}\n",
        csv_f(t_end),
        csv_f(extinction_upper_bound(&domain, &u0, &cfg.coefficient)),
        csv_f(slope_limit(&domain, cfg)),
        csv_f(mu),
    );
    fs::write(out_dir.join("summary.csv"), summary)?;
    Ok(())
}

/// Run the flow, check it against the closed forms and structural bounds,
/// and write `report.csv` (one row per check) next to the run artifacts.
/// Returns `true` when every check passed or was inconclusive; inconclusive
/// checks are additionally reported on stderr.
pub fn cmd_verify(cfg: &RunConfig, out_dir: &Path) -> Result<bool> {
    let started = Instant::now();
    let (domain, u0, traj) = run_flow(cfg)?;
    write_run_artifacts(
        cfg,
        out_dir,
        &domain,
        &u0,
        &traj,
        started.elapsed().as_secs_f64(),
    )?;

    let radial = cfg.radial_spec().ok();
    let reports = run_suite(&traj, radial.as_ref(), &cfg.coefficient, &cfg.suite)?;

    let mut out = String::from("check,passed,margin\n");
    for r in &reports {
        out.push_str(&format!(
            "{},{},{}\n",
            r.check_name,
            r.status.as_str(),
            csv_f(r.worst_margin)
        ));
        if r.status == CheckStatus::Inconclusive {
            eprintln!(
                "warning: check '{}' is inconclusive (not enough usable samples)",
                r.check_name
            );
        }
    }
    fs::write(out_dir.join("report.csv"), out)?;
    Ok(suite_passed(&reports))
}

/// Error text as a single CSV cell: no commas, no line breaks.
fn sanitize_cell(s: &str) -> String {
    s.replace(',', ";").replace(['\n', '\r'], " ")
}

/// One sweep run: solve with the key overridden, compare the sup norm
/// against the closed-form radial amplitude, and format the result row.
fn sweep_row(cfg: &RunConfig, key: &str, value: &str) -> String {
    let outcome = (|| -> Result<(String, f64, f64)> {
        let run_cfg = cfg.with_value(key, value)?;
        let (_, _, traj) = run_flow(&run_cfg)?;
        let spec = run_cfg.radial_spec()?;
        let closed = extinction_time_closed_form(&spec)?;
        let mut worst: f64 = 0.0;
        for (t, d) in traj.times.iter().zip(&traj.diagnostics) {
            let a = amplitude(&spec, *t)?;
            worst = worst.max((d.linf - a).abs() / run_cfg.k);
        }
        Ok((extinction_cell(&traj), closed, worst))
    })();
    match outcome {
        Ok((ext, closed, err)) => {
            format!("{value},ok,{ext},{},{}", csv_f(closed), csv_f(err))
        }
        Err(e) => format!("{value},{},,,", sanitize_cell(&e.to_string())),
    }
}

/// Run the flow once per value of the swept key and write `sweep.csv`.
/// Individual failures are recorded in the row's status column; the sweep
/// itself keeps going.
pub fn cmd_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let sweep = cfg.sweep.clone().ok_or_else(|| {
        TvError::Argument("sweep command needs 'sweep' and 'sweep_values' in the config".into())
    })?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.txt"), cfg.render())?;

    let run_all = || -> Vec<String> {
        sweep
            .values
            .par_iter()
            .map(|v| sweep_row(cfg, &sweep.key, v))
            .collect()
    };
    let rows = match requested_threads() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| TvError::Argument(format!("worker pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };

    let mut out = String::from("value,status,extinction_time,closed_form_extinction,max_linf_error\n");
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    fs::write(out_dir.join("sweep.csv"), out)?;
    Ok(())
}

/// Worker-count cap from the `TVFLOW_THREADS` environment variable, if set
/// to a positive integer.
fn requested_threads() -> Option<usize> {
    std::env::var("TVFLOW_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
}
