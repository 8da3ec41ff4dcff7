//! End-to-end pipeline: map, inducing scheme, density, measures, operator,
//! observables and correlations, with each check reported separately.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::config::{ExperimentConfig, Observable};
use crate::density::{extend_measure, ulam_induced, CellMeasures, DensityEstimate};
use crate::error::{Error, Result};
use crate::inducing::{build_scheme, InducingScheme};
use crate::maps::make_family;
use crate::report::{CheckResult, Table, VerificationReport};
use crate::transfer::{build_operator, evolve, Correlation, KrickebergProfile, OperatorGrid, OperatorOptions};
use crate::verify::jacobian::check_eq_j;
use crate::verify::observable::{make_global_pwc, make_pw_meanzero, GlobalObservable, PwcOptions};
use crate::verify::tails::check_eq_y;

/// Pipeline stage, used to tag errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Map,
    Scheme,
    Density,
    Measure,
    Operator,
    Observable,
    Check,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Map => "map",
            Stage::Scheme => "scheme",
            Stage::Density => "density",
            Stage::Measure => "measure",
            Stage::Operator => "operator",
            Stage::Observable => "observable",
            Stage::Check => "check",
        };
        f.write_str(s)
    }
}

/// A library error together with the stage that raised it.
#[derive(Debug, Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait Tag<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> Tag<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Largest trap depth chosen automatically.
pub const MAX_AUTO_DEPTH: usize = 2_000_000;

/// Built stages of one configuration.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub scheme: InducingScheme,
    pub density: DensityEstimate,
    /// Cell measures up to `max(depths.tail, operator depth)`.
    pub measures: CellMeasures,
    pub operator: Option<OperatorGrid>,
}

impl Pipeline {
    /// Builds the map, scheme, density and tail measures; the operator is
    /// built as well when `with_operator` is set.
    pub fn build(cfg: &ExperimentConfig, with_operator: bool) -> std::result::Result<Self, StageError> {
        let family = cfg
            .map
            .to_family()
            .map_err(|e| StageError { stage: Stage::Map, source: Error::param("map", e.to_string()) })?;
        let map = make_family(family).at(Stage::Map)?;
        let d = &cfg.depths;
        let mut scheme = build_scheme(map).at(Stage::Scheme)?;
        scheme.ensure_depth((d.tail + 1).max(d.tau_cap)).at(Stage::Scheme)?;
        let density = ulam_induced(&scheme, d.ulam_cells, d.tau_cap).at(Stage::Density)?;
        let measures = extend_measure(&scheme, &density, d.tail).at(Stage::Measure)?;
        let mut p = Pipeline { scheme, density, measures, operator: None };
        if with_operator {
            p.build_operator(cfg)?;
        }
        Ok(p)
    }

    /// Trap depth: configured, or the smallest depth whose truncated mass is
    /// below 90% of the leak tolerance (extrapolating the tail power law),
    /// and never below `n_max`.
    pub fn operator_depth(&self, cfg: &ExperimentConfig) -> std::result::Result<usize, StageError> {
        if let Some(n) = cfg.depths.operator {
            return Ok(n);
        }
        let target = 0.9 * cfg.tolerances.leak * self.measures.mu_y;
        let m = &self.measures;
        let total = |n: usize| m.arm_x.iter().map(|v| v[n]).sum::<f64>();
        let t = m.depth;
        let found = if total(t) <= target {
            (1..=t).find(|&n| total(n + 1) <= target).unwrap_or(t)
        } else {
            let alpha = self.scheme.alpha().ok_or_else(|| StageError {
                stage: Stage::Operator,
                source: Error::param("depths.operator", "tails are not polynomial; set the depth explicitly"),
            })?;
            let n = (t as f64 * (total(t) / target).powf(1.0 / alpha)).ceil();
            if n > MAX_AUTO_DEPTH as f64 {
                return Err(StageError {
                    stage: Stage::Operator,
                    source: Error::param(
                        "depths.operator",
                        format!("the leak tolerance needs depth {n:e}; set depths.operator and tolerances.leak"),
                    ),
                });
            }
            n as usize
        };
        Ok(found.max(cfg.depths.n_max).max(2))
    }

    pub fn build_operator(&mut self, cfg: &ExperimentConfig) -> std::result::Result<&OperatorGrid, StageError> {
        let n = self.operator_depth(cfg)?;
        self.scheme.ensure_depth(n + 1).at(Stage::Operator)?;
        if n > self.measures.depth {
            self.measures = extend_measure(&self.scheme, &self.density, n).at(Stage::Measure)?;
        }
        let opts = OperatorOptions {
            depth: n,
            subcells: cfg.depths.subcells,
            entry_depth: cfg.depths.entry_depth,
            max_leak: cfg.tolerances.leak,
        };
        let op = build_operator(&self.scheme, &self.density, opts).at(Stage::Operator)?;
        Ok(self.operator.insert(op))
    }

    /// Observables of the configuration on the operator depth.
    pub fn observables(&self, cfg: &ExperimentConfig) -> std::result::Result<Vec<GlobalObservable>, StageError> {
        let op = self.operator.as_ref().expect("operator built");
        let mut out = Vec::new();
        for (i, spec) in cfg.observables.iter().enumerate() {
            let obs = spec.resolve(i).map_err(|e| StageError { stage: Stage::Observable, source: Error::param("observables", e.to_string()) })?;
            let g = match obs {
                Observable::Pwc { rule, centred } => make_global_pwc(
                    &self.scheme,
                    &self.measures,
                    &rule,
                    PwcOptions { require_centred: centred, tolerance: cfg.tolerances.centring },
                )
                .at(Stage::Observable)?,
                Observable::Meanzero { profile } => make_pw_meanzero(&op.subcells, &profile).at(Stage::Observable)?,
                Observable::IndicatorY => GlobalObservable::indicator_y(&self.scheme, op.options.depth),
            };
            out.push(if spec.scale() == 1.0 { g } else { g.scaled(spec.scale()) });
        }
        Ok(out)
    }
}

/// Settings of the Krickeberg check.
#[derive(Clone, Copy, Debug)]
pub struct KrickebergOptions {
    pub spread: f64,
    pub cauchy: f64,
}

/// Judges a Krickeberg profile recorded up to `n_max`: spread below
/// tolerance and decreasing, and `K̂_{n_max}/K̂_{n_max/2}` close to one.
/// For `α = 1` only the decreasing spread is required.
pub fn check_eq_k(op: &OperatorGrid, prof: &KrickebergProfile, opts: KrickebergOptions) -> CheckResult {
    let mut res = CheckResult::new("eqK");
    let n = prof.k_hat.len() - 1;
    let mut t = Table::new("profile", &["n", "k_hat", "spread", "retained"]);
    for k in 0..=n {
        t.push(vec![k as f64, prof.k_hat[k], prof.spread[k], prof.retained[k]]);
    }
    res.tables.push(t);
    if let Some((_, snap)) = prof.snapshots.last() {
        let mut s = Table::new("snapshot", &["x", "value"]);
        for (c, v) in op.cells[..op.n_y].iter().zip(snap) {
            if !c.truncated {
                s.push(vec![c.interval.mid(), *v]);
            }
        }
        res.tables.push(s);
    }
    let cauchy = (prof.k_hat[n] / prof.k_hat[n / 2] - 1.0).abs();
    let early = prof.spread[(n / 10).max(1)];
    res.metric("n_max", n as f64);
    res.metric("k_hat", prof.k_hat[n]);
    res.metric("spread", prof.spread[n]);
    res.metric("spread_early", early);
    res.metric("cauchy", cauchy);
    res.metric("leak", op.leak);
    res.metric("cells", op.len() as f64);
    res.metric("depth", op.options.depth as f64);
    res.require(prof.k_hat[1..].iter().all(|&k| k > 0.0), "K_hat positive");
    res.require(prof.spread[n] < early, format!("spread decreases from n = {} to n = {n}", (n / 10).max(1)));
    if op.alpha.is_some_and(|a| a >= 1.0) {
        res.note("alpha = 1: log-speed convergence, trend checks only");
    } else {
        res.require(prof.spread[n] < opts.spread, format!("spread {:.3e} at n = {n}", prof.spread[n]));
        res.require(cauchy < opts.cauchy, format!("|K_hat(n)/K_hat(n/2) - 1| = {cauchy:.3e}"));
    }
    res
}

/// Judges the correlation sequence of one observable. Infinite measure:
/// `c_n → ḡ·μ(Y)`, and for centred observables `|c_n|` must also drop
/// between `n_max/10` and `n_max` (`α = 1`: `|c_n − ḡμ(Y)|` non-increasing on
/// dyadic `n ≥ 16`, no tolerance). Finite measure: `c_n → μ(Y)·∫g dμ/μ(X)`
/// within relative tolerance.
pub fn check_correlation(op: &OperatorGrid, g: &GlobalObservable, grid_values: &[f64], corr: &Correlation, tol: f64) -> CheckResult {
    let mut res = CheckResult::new(format!("glocal_{}", g.name));
    let n = corr.c.len() - 1;
    let mut t = Table::new("correlation", &["n", "c", "scaled"]);
    for k in 0..=n {
        t.push(vec![k as f64, corr.c[k], corr.scaled[k]]);
    }
    res.tables.push(t);
    res.metric("mean", g.mean);
    res.metric("bound", g.bound);
    res.metric("centring", g.centring);
    res.metric("cell_mean_defect", g.cell_mean_defect);
    res.metric("c_n_max", corr.c[n]);
    res.metric("absorbed", corr.absorbed[n]);
    match op.alpha {
        None => {
            let masses = op.masses();
            let total: f64 = masses.iter().sum();
            let integral: f64 = grid_values.iter().zip(&masses).map(|(a, b)| a * b).sum();
            let limit = op.mu_y * integral / total;
            let err = if limit.abs() > 1e-12 { (corr.c[n] / limit - 1.0).abs() } else { corr.c[n].abs() };
            res.metric("limit", limit);
            res.metric("error", err);
            res.require(err < tol, format!("classical mixing: c_{n} = {:.6e} vs {limit:.6e}", corr.c[n]));
        }
        Some(a) => {
            // A centred observable has ḡ = 0; the finite-depth mean is only
            // a partial-sum estimate of it.
            let limit = if g.centred { 0.0 } else { g.mean * op.mu_y };
            res.metric("limit", limit);
            let dev = |k: usize| (corr.c[k] - limit).abs();
            if a >= 1.0 {
                let mut k = 16;
                let mut prev = f64::INFINITY;
                let mut ok = true;
                let mut d = Table::new("dyadic", &["n", "deviation"]);
                while k <= n {
                    ok &= dev(k) <= prev;
                    prev = dev(k);
                    d.push(vec![k as f64, dev(k)]);
                    k *= 2;
                }
                res.tables.push(d);
                res.note("alpha = 1: log-speed convergence, trend check only");
                res.require(ok, "deviation from the limit is non-increasing on dyadic n");
            } else {
                let early = (n / 10).max(1);
                res.metric("c_early", corr.c[early]);
                res.require(dev(n) < tol, format!("|c_{n} - limit| = {:.3e}", dev(n)));
                if g.centred {
                    res.require(corr.c[n].abs() < corr.c[early].abs(), format!("|c_{n}| < |c_{early}|"));
                }
            }
        }
    }
    res
}

/// Runs the enabled checks of a configuration.
pub fn run_checks(cfg: &ExperimentConfig, checks: &[String]) -> std::result::Result<VerificationReport, StageError> {
    let on = |name: &str| checks.iter().any(|c| c == name);
    let dynamic = on("eqK") || (on("glocal") && !cfg.observables.is_empty());
    let pipe = Pipeline::build(cfg, dynamic)?;
    let mut report = VerificationReport::new(cfg.map.family.clone());
    let meta = &mut report.metadata;
    meta.insert("family".into(), cfg.map.family.clone());
    meta.insert("alpha".into(), pipe.scheme.alpha().map_or("none".into(), |a| a.to_string()));
    meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    meta.insert("ulam_residual".into(), format!("{:e}", pipe.density.residual));
    meta.insert("n0".into(), pipe.scheme.n0.to_string());
    if let Some(op) = &pipe.operator {
        meta.insert("operator_depth".into(), op.options.depth.to_string());
        meta.insert("operator_cells".into(), op.len().to_string());
        meta.insert("operator_leak".into(), format!("{:e}", op.leak));
    }

    if on("eqY") {
        report.checks.push(check_eq_y(&pipe.scheme, &pipe.measures, cfg.depths.tail, &cfg.tail_options()));
    }
    if on("eqJ") {
        report.metadata.insert("jacobian_sup".into(), "three points per cell: both endpoints and the midpoint pullback".into());
        report.checks.push(check_eq_j(&pipe.scheme, &pipe.density, &cfg.jacobian_options()).at(Stage::Check)?);
    }
    if dynamic {
        let observables = if on("glocal") { pipe.observables(cfg)? } else { Vec::new() };
        let op = pipe.operator.as_ref().expect("operator built");
        let grids: Vec<Vec<f64>> = observables.iter().map(|g| g.on_grid(op)).collect::<Result<_>>().at(Stage::Observable)?;
        let n_max = cfg.depths.n_max;
        let mut prof = KrickebergProfile::default();
        let mut corrs = vec![Correlation::default(); grids.len()];
        evolve(op, n_max, |n, mass| {
            if on("eqK") {
                prof.record(op, n, mass, n == n_max);
            }
            for (c, g) in corrs.iter_mut().zip(&grids) {
                c.record(op, n, g, mass);
            }
        });
        if on("eqK") {
            let opts = KrickebergOptions { spread: cfg.tolerances.spread, cauchy: cfg.tolerances.cauchy };
            report.checks.push(check_eq_k(op, &prof, opts));
        }
        if on("glocal") {
            let mut all = CheckResult::new("glocal");
            for ((g, grid), corr) in observables.iter().zip(&grids).zip(&corrs) {
                let sub = check_correlation(op, g, grid, corr, cfg.tolerances.glocal);
                all.require(sub.passed, format!("observable {}", g.name));
                for (k, v) in &sub.metrics {
                    all.metric(format!("{}.{k}", g.name), *v);
                }
                all.notes.extend(sub.notes.into_iter().map(|s| format!("{}: {s}", g.name)));
                for mut t in sub.tables {
                    t.name = format!("{}_{}", g.name, t.name);
                    all.tables.push(t);
                }
            }
            report.checks.push(all);
        }
    } else if on("glocal") {
        let mut all = CheckResult::new("glocal");
        all.note("no observables configured");
        report.checks.push(all);
    }
    Ok(report)
}

/// The mixing experiment alone: correlations of the given observables.
pub fn glocal_experiment(cfg: &ExperimentConfig) -> std::result::Result<VerificationReport, StageError> {
    run_checks(cfg, &["glocal".to_string()])
}
