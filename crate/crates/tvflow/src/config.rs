//! Textual run configuration: one `key = value` per line, `#` comments.
//!
//! [`parse_config`] validates everything up front — unknown keys, duplicate
//! keys, malformed values, and missing required keys are all errors carrying
//! the offending line number — and resolves every default, so a parsed
//! [`RunConfig`] is complete and [`render`](RunConfig::render)ing it yields a
//! file that parses back to an equal config.  Defaults that depend on other
//! keys (`dt` on `h`, `horizon` on the domain and coefficient) are resolved
//! at parse time, which makes every resolved value visible in the rendered
//! reference file a command writes next to its outputs.

use crate::analytic::RadialSolutionSpec;
use crate::coefficient::{CoefficientFamily, KirchhoffCoefficient};
use crate::error::{Result, TvError};
use crate::field::{indicator_field, ScalarField};
use crate::grid::{make_ball_domain, GridDomain};
use crate::solver::{SolverConfig, SolverMode};
use crate::verify::{CheckKind, CheckSuiteConfig};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

/// One swept key and the raw values substituted for it, one run each.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub key: String,
    pub values: Vec<String>,
}

/// A fully resolved run description: geometry, initial data, coefficient,
/// solver settings, verification settings, and output plumbing.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Spatial dimension (1, 2, or 3).
    pub dim: usize,
    /// Radius of the ball-shaped domain.
    pub radius: f64,
    /// Grid spacing.
    pub h: f64,
    /// Radius of the initial indicator's ball.
    pub r0: f64,
    /// Height of the initial indicator.
    pub k: f64,
    pub coefficient: KirchhoffCoefficient,
    pub solver: SolverConfig,
    pub suite: CheckSuiteConfig,
    /// Number of rows written by the analytic command (samples over
    /// `[0, T]` inclusive).
    pub samples: usize,
    /// Output directory; the `--out` command-line flag overrides it.
    pub out: String,
    pub sweep: Option<SweepSpec>,
}

/// Reference text listing every key, its meaning, and its default; shown by
/// `--help` and matched by the `config.txt` file commands write.
pub const CONFIG_REFERENCE: &str = "\
Run configuration file: one `key = value` per line, `#` starts a comment.

Required keys:
  dim                   spatial dimension: 1, 2, or 3
  radius                radius of the ball-shaped domain
  h                     grid spacing
  m                     coefficient family: constant | affine | power
  p                     exponent, required iff m = power (must exceed 1)

Optional keys (default):
  c                     constant family value (1), only with m = constant
  r0                    initial indicator ball radius (radius / 2)
  k                     initial indicator height (1)
  mode                  direct_prox | direct_regularized | reparametrized
                        (direct_prox)
  dt                    time step (h / 8)
  epsilon               gradient smoothing, regularized mode (1e-3)
  prox_tol              fixed-point residual for the TV prox (1e-5)
  max_inner_iters       inner iteration cap (20000)
  extinction_threshold  relative to the initial sup norm (1e-6)
  horizon               stop time if no extinction
                        (1.2 x enclosing-radius bound)
  snapshot_stride       keep a full field every this many steps (8)
  checks                comma-separated check names (all eight)
  energy_tol            energy / total-variation decay slack (1e-4)
  comparison_tol        comparison-principle slack (1e-9)
  linf_lower_tol        sup-norm lower-bound slack (5e-2)
  derivative_tol        relative derivative-bound slack (5e-2)
  derivative_min_time   skip quotients before this time (auto = 10 steps)
  support_halo_cells    allowed halo beyond the support radius (2)
  mu                    structure constant override (auto = exact value)
  samples               rows in analytic output (201)
  out                   output directory (out)
  sweep                 key swept by the sweep command (none)
  sweep_values          comma-separated values for the swept key
";

const KNOWN_KEYS: &[&str] = &[
    "dim",
    "radius",
    "h",
    "m",
    "c",
    "p",
    "r0",
    "k",
    "mode",
    "dt",
    "epsilon",
    "prox_tol",
    "max_inner_iters",
    "extinction_threshold",
    "horizon",
    "snapshot_stride",
    "checks",
    "energy_tol",
    "comparison_tol",
    "linf_lower_tol",
    "derivative_tol",
    "derivative_min_time",
    "support_halo_cells",
    "mu",
    "samples",
    "out",
    "sweep",
    "sweep_values",
];

/// Raw `key -> (value, line)` map with typed, line-attributed accessors.
struct KeyMap(HashMap<String, (String, usize)>);

impl KeyMap {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|(v, _)| v.as_str())
    }

    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |(_, l)| *l)
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.parse_with(key, |v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.parse_with(key, |v| v.parse::<usize>().ok())
    }

    fn parse_with<T>(&self, key: &str, f: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some((v, line)) => f(v).map(Some).ok_or_else(|| {
                TvError::config(*line, format!("malformed value for '{key}': '{v}'"))
            }),
        }
    }

    /// `auto` (or absence) means `None`; anything else must parse as f64.
    fn f64_or_auto(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None | Some("auto") => Ok(None),
            Some(_) => self.f64(key),
        }
    }
}

/// Parse and fully validate a configuration file.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(TvError::config(
                line_no,
                format!("expected 'key = value', got '{line}'"),
            ));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(TvError::config(
                line_no,
                format!("expected 'key = value', got '{line}'"),
            ));
        }
        if !KNOWN_KEYS.contains(&key) {
            return Err(TvError::config(line_no, format!("unknown key '{key}'")));
        }
        if map
            .insert(key.to_string(), (value.to_string(), line_no))
            .is_some()
        {
            return Err(TvError::config(line_no, format!("duplicate key '{key}'")));
        }
    }
    let map = KeyMap(map);

    // The coefficient is validated before the missing-key roll-up so that a
    // config whose only problem is an invalid family reports that directly.
    let coefficient = match map.get("m") {
        Some("constant") => {
            if map.get("p").is_some() {
                return Err(TvError::config(
                    map.line("p"),
                    "key 'p' only applies to m = power",
                ));
            }
            let c = map.f64("c")?.unwrap_or(1.0);
            KirchhoffCoefficient::constant(c)
                .map_err(|e| TvError::config(map.line("c").max(map.line("m")), e.to_string()))?
        }
        Some("affine") => {
            for extra in ["c", "p"] {
                if map.get(extra).is_some() {
                    return Err(TvError::config(
                        map.line(extra),
                        format!("key '{extra}' does not apply to m = affine"),
                    ));
                }
            }
            KirchhoffCoefficient::affine()
        }
        Some("power") => {
            if map.get("c").is_some() {
                return Err(TvError::config(
                    map.line("c"),
                    "key 'c' only applies to m = constant",
                ));
            }
            let p = map.f64("p")?.ok_or_else(|| {
                TvError::config(map.line("m"), "m = power requires key 'p'")
            })?;
            KirchhoffCoefficient::power(p).map_err(|e| {
                TvError::config(map.line("p"), format!("power family requires p > 1: {e}"))
            })?
        }
        Some(other) => {
            return Err(TvError::config(
                map.line("m"),
                format!("unknown coefficient family '{other}' (expected constant, affine, or power)"),
            ));
        }
        None => {
            let missing: Vec<&str> = ["dim", "radius", "h", "m"]
                .into_iter()
                .filter(|k| map.get(k).is_none())
                .collect();
            return Err(TvError::config(
                0,
                format!("missing required keys: {}", missing.join(", ")),
            ));
        }
    };
    if let Some(mu) = map.f64_or_auto("mu")? {
        // Re-attach the override so coefficient consumers see it.
        return finish(&map, coefficient.with_mu(mu).map_err(|e| {
            TvError::config(map.line("mu"), e.to_string())
        })?);
    }
    finish(&map, coefficient)
}

fn finish(map: &KeyMap, coefficient: KirchhoffCoefficient) -> Result<RunConfig> {
    let missing: Vec<&str> = ["dim", "radius", "h"]
        .into_iter()
        .filter(|k| map.get(k).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(TvError::config(
            0,
            format!("missing required keys: {}", missing.join(", ")),
        ));
    }

    let dim = map.usize("dim")?.unwrap();
    let radius = map.f64("radius")?.unwrap();
    let h = map.f64("h")?.unwrap();
    let r0 = map.f64("r0")?.unwrap_or(radius / 2.0);
    let k = map.f64("k")?.unwrap_or(1.0);

    // Build the domain now: it validates geometry and provides the
    // enclosing radius for the default horizon.
    let domain = make_ball_domain(dim, radius, h)
        .map_err(|e| TvError::config(0, e.to_string()))?;
    if !(r0 > 0.0) || r0 > radius {
        return Err(TvError::config(
            map.line("r0"),
            format!("initial ball radius must lie in (0, radius], got {r0}"),
        ));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(TvError::config(
            map.line("k"),
            format!("initial height must be positive, got {k}"),
        ));
    }

    let mode = match map.get("mode") {
        None => SolverMode::DirectProx,
        Some(s) => {
            SolverMode::parse(s).map_err(|e| TvError::config(map.line("mode"), e.to_string()))?
        }
    };
    let dt = map.f64("dt")?.unwrap_or(h / 8.0);
    let horizon = match map.f64("horizon")? {
        Some(v) => v,
        None => {
            let bound =
                domain.enclosing_radius * k / (dim as f64 * coefficient.at_zero());
            1.2 * bound
        }
    };
    let solver = SolverConfig {
        mode,
        dt,
        epsilon: map.f64("epsilon")?.unwrap_or(1e-3),
        prox_tol: map.f64("prox_tol")?.unwrap_or(1e-5),
        max_inner_iters: map.usize("max_inner_iters")?.unwrap_or(20_000),
        extinction_threshold: map.f64("extinction_threshold")?.unwrap_or(1e-6),
        horizon,
        snapshot_stride: map.usize("snapshot_stride")?.unwrap_or(8).max(1),
    };
    solver
        .validate()
        .map_err(|e| TvError::config(0, e.to_string()))?;

    let checks = match map.get("checks") {
        None => CheckKind::ALL.to_vec(),
        Some(list) => {
            let mut parsed = Vec::new();
            for name in list.split(',') {
                let kind = CheckKind::parse(name.trim())
                    .map_err(|e| TvError::config(map.line("checks"), e.to_string()))?;
                if parsed.contains(&kind) {
                    return Err(TvError::config(
                        map.line("checks"),
                        format!("check '{}' listed twice", kind.as_str()),
                    ));
                }
                parsed.push(kind);
            }
            if parsed.is_empty() {
                return Err(TvError::config(map.line("checks"), "empty check list"));
            }
            parsed
        }
    };
    let defaults = CheckSuiteConfig::default();
    let suite = CheckSuiteConfig {
        checks,
        energy_tol: map.f64("energy_tol")?.unwrap_or(defaults.energy_tol),
        comparison_tol: map.f64("comparison_tol")?.unwrap_or(defaults.comparison_tol),
        linf_lower_tol: map.f64("linf_lower_tol")?.unwrap_or(defaults.linf_lower_tol),
        derivative_tol: map.f64("derivative_tol")?.unwrap_or(defaults.derivative_tol),
        derivative_min_time: map.f64_or_auto("derivative_min_time")?,
        support_halo_cells: map
            .usize("support_halo_cells")?
            .unwrap_or(defaults.support_halo_cells),
        mu: coefficient.mu(),
    };

    let sweep = match (map.get("sweep"), map.get("sweep_values")) {
        (None, None) => None,
        (Some(_), None) => {
            return Err(TvError::config(
                map.line("sweep"),
                "sweep requires sweep_values",
            ));
        }
        (None, Some(_)) => {
            return Err(TvError::config(
                map.line("sweep_values"),
                "sweep_values requires sweep",
            ));
        }
        (Some(key), Some(values)) => {
            if !KNOWN_KEYS.contains(&key) || key == "sweep" || key == "sweep_values" {
                return Err(TvError::config(
                    map.line("sweep"),
                    format!("cannot sweep key '{key}'"),
                ));
            }
            let values: Vec<String> = values
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            if values.is_empty() {
                return Err(TvError::config(
                    map.line("sweep_values"),
                    "empty sweep value list",
                ));
            }
            Some(SweepSpec {
                key: key.to_string(),
                values,
            })
        }
    };

    let samples = map.usize("samples")?.unwrap_or(201);
    if samples < 2 {
        return Err(TvError::config(
            map.line("samples"),
            format!("need at least 2 samples, got {samples}"),
        ));
    }

    Ok(RunConfig {
        dim,
        radius,
        h,
        r0,
        k,
        coefficient,
        solver,
        suite,
        samples,
        out: map.get("out").unwrap_or("out").to_string(),
        sweep,
    })
}

impl RunConfig {
    /// Build the domain this config describes.
    pub fn domain(&self) -> Result<Arc<GridDomain>> {
        make_ball_domain(self.dim, self.radius, self.h)
    }

    /// The initial state `k·χ_{B_{r0}}` on the given domain.
    pub fn initial_field(&self, domain: &Arc<GridDomain>) -> Result<ScalarField> {
        indicator_field(domain, self.r0, self.k)
    }

    /// The radial closed-form solution matching the initial data.
    pub fn radial_spec(&self) -> Result<RadialSolutionSpec> {
        RadialSolutionSpec::new(self.dim, self.r0, self.k, self.coefficient.clone())
    }

    /// Canonical text form; parsing it back yields an equal config.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |key: &str, value: String| {
            writeln!(s, "{key} = {value}").unwrap();
        };
        kv("dim", self.dim.to_string());
        kv("radius", self.radius.to_string());
        kv("h", self.h.to_string());
        match self.coefficient.family() {
            CoefficientFamily::Constant(c) => {
                kv("m", "constant".into());
                kv("c", c.to_string());
            }
            CoefficientFamily::Affine => kv("m", "affine".into()),
            CoefficientFamily::Power(p) => {
                kv("m", "power".into());
                kv("p", p.to_string());
            }
            CoefficientFamily::Tabulated(_) => {
                unreachable!("config files cannot express tabulated coefficients")
            }
        }
        kv("r0", self.r0.to_string());
        kv("k", self.k.to_string());
        kv("mode", self.solver.mode.as_str().into());
        kv("dt", self.solver.dt.to_string());
        kv("epsilon", self.solver.epsilon.to_string());
        kv("prox_tol", self.solver.prox_tol.to_string());
        kv("max_inner_iters", self.solver.max_inner_iters.to_string());
        kv(
            "extinction_threshold",
            self.solver.extinction_threshold.to_string(),
        );
        kv("horizon", self.solver.horizon.to_string());
        kv("snapshot_stride", self.solver.snapshot_stride.to_string());
        kv(
            "checks",
            self.suite
                .checks
                .iter()
                .map(|c| c.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("energy_tol", self.suite.energy_tol.to_string());
        kv("comparison_tol", self.suite.comparison_tol.to_string());
        kv("linf_lower_tol", self.suite.linf_lower_tol.to_string());
        kv("derivative_tol", self.suite.derivative_tol.to_string());
        kv(
            "derivative_min_time",
            self.suite
                .derivative_min_time
                .map_or("auto".into(), |v| v.to_string()),
        );
        kv(
            "support_halo_cells",
            self.suite.support_halo_cells.to_string(),
        );
        kv(
            "mu",
            self.coefficient.mu().map_or("auto".into(), |v| v.to_string()),
        );
        kv("samples", self.samples.to_string());
        kv("out", self.out.clone());
        if let Some(sweep) = &self.sweep {
            kv("sweep", sweep.key.clone());
            kv("sweep_values", sweep.values.join(","));
        }
        s
    }

    /// A copy with one key replaced by a raw value, revalidated from
    /// scratch.  Every other key keeps its already resolved value, so a
    /// sweep varies exactly the named quantity.
    pub fn with_value(&self, key: &str, value: &str) -> Result<RunConfig> {
        let mut out = String::new();
        let mut replaced = false;
        for line in self.render().lines() {
            match line.split_once(" = ") {
                Some((k, _)) if k == key => {
                    writeln!(out, "{key} = {value}").unwrap();
                    replaced = true;
                }
                _ => {
                    writeln!(out, "{line}").unwrap();
                }
            }
        }
        if !replaced {
            return Err(TvError::Argument(format!(
                "key '{key}' is not present in this configuration"
            )));
        }
        let mut cfg = parse_config(&out)?;
        cfg.sweep = None;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "dim = 2\nradius = 1.0\nh = 0.0078125\nm = affine\nmode = direct_prox";

    #[test]
    fn minimal_config_resolves_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.dim, 2);
        assert_eq!(cfg.r0, 0.5);
        assert_eq!(cfg.k, 1.0);
        assert_eq!(cfg.solver.dt, 0.0078125 / 8.0);
        assert_eq!(cfg.solver.mode, SolverMode::DirectProx);
        assert_eq!(cfg.suite.checks.len(), 8);
        assert_eq!(cfg.samples, 201);
        assert_eq!(cfg.out, "out");
        // Default horizon: 1.2 x the enclosing-radius extinction bound.
        let d = cfg.domain().unwrap();
        let expected = 1.2 * d.enclosing_radius * 1.0 / 2.0;
        assert!((cfg.solver.horizon - expected).abs() < 1e-12);
    }

    #[test]
    fn power_family_requires_p_above_one() {
        let err = parse_config("m = power\np = 0.5").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("p > 1"), "message: {msg}");
        assert!(msg.contains("line 2"), "message: {msg}");

        let err = parse_config("dim = 2\nradius = 1\nh = 0.05\nm = power").unwrap_err();
        assert!(err.to_string().contains("requires key 'p'"));
    }

    #[test]
    fn empty_file_lists_missing_keys() {
        let msg = parse_config("").unwrap_err().to_string();
        for key in ["dim", "radius", "h", "m"] {
            assert!(msg.contains(key), "missing '{key}' in: {msg}");
        }
    }

    #[test]
    fn unknown_duplicate_and_malformed_keys_carry_line_numbers() {
        let msg = parse_config("dim = 2\nbogus = 3").unwrap_err().to_string();
        assert!(msg.contains("line 2") && msg.contains("bogus"), "{msg}");

        let msg = parse_config("dim = 2\n\ndim = 3").unwrap_err().to_string();
        assert!(msg.contains("line 3") && msg.contains("duplicate"), "{msg}");

        let msg = parse_config("dim = two\nradius = 1\nh = 0.1\nm = affine")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("line 1") && msg.contains("malformed"), "{msg}");

        let msg = parse_config("just words").unwrap_err().to_string();
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = format!("# leading comment\n\n{MINIMAL} # trailing comment\n");
        assert!(parse_config(&text).is_ok());
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.sweep = Some(SweepSpec {
            key: "h".into(),
            values: vec!["0.03125".into(), "0.015625".into()],
        });
        let again = parse_config(&cfg.render()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn round_trip_preserves_every_family() {
        for text in [
            "dim = 1\nradius = 1\nh = 0.1\nm = constant\nc = 2.5",
            "dim = 2\nradius = 1\nh = 0.1\nm = power\np = 3",
        ] {
            let cfg = parse_config(text).unwrap();
            assert_eq!(cfg, parse_config(&cfg.render()).unwrap());
        }
    }

    #[test]
    fn with_value_changes_exactly_one_key() {
        let cfg = parse_config(MINIMAL).unwrap();
        let swept = cfg.with_value("h", "0.03125").unwrap();
        assert_eq!(swept.h, 0.03125);
        // dt was resolved from the base h and must not silently re-derive.
        assert_eq!(swept.solver.dt, cfg.solver.dt);
        assert!(cfg.with_value("sweep", "h").is_err());
    }

    #[test]
    fn geometry_cross_checks() {
        let msg = parse_config("dim = 2\nradius = 1\nh = 0.1\nm = affine\nr0 = 1.5")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("initial ball radius"), "{msg}");

        assert!(parse_config("dim = 4\nradius = 1\nh = 0.1\nm = affine").is_err());
    }

    #[test]
    fn check_list_subsets_parse() {
        let text = format!("{MINIMAL}\nchecks = max_principle, energy_decay");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(
            cfg.suite.checks,
            vec![CheckKind::MaxPrinciple, CheckKind::Energy]
        );

        let text = format!("{MINIMAL}\nchecks = max_principle, max_principle");
        assert!(parse_config(&text).is_err());

        let text = format!("{MINIMAL}\nchecks = not_a_check");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn sweep_requires_both_keys_and_nonempty_values() {
        assert!(parse_config(&format!("{MINIMAL}\nsweep = h")).is_err());
        assert!(parse_config(&format!("{MINIMAL}\nsweep_values = 0.1")).is_err());
        assert!(parse_config(&format!("{MINIMAL}\nsweep = h\nsweep_values = ,")).is_err());
        let cfg =
            parse_config(&format!("{MINIMAL}\nsweep = h\nsweep_values = 0.05, 0.025")).unwrap();
        assert_eq!(cfg.sweep.as_ref().unwrap().values.len(), 2);
    }

    #[test]
    fn family_key_mismatches_are_rejected() {
        assert!(parse_config("dim = 2\nradius = 1\nh = 0.1\nm = affine\np = 2").is_err());
        assert!(parse_config("dim = 2\nradius = 1\nh = 0.1\nm = power\np = 2\nc = 1").is_err());
        assert!(parse_config("dim = 2\nradius = 1\nh = 0.1\nm = gaussian").is_err());
    }

    #[test]
    fn mu_override_is_carried_and_rendered() {
        let text = "dim = 2\nradius = 1\nh = 0.1\nm = affine\nmu = 0.4";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.coefficient.mu(), Some(0.4));
        assert_eq!(cfg.suite.mu, Some(0.4));
        assert_eq!(cfg, parse_config(&cfg.render()).unwrap());
    }
}
