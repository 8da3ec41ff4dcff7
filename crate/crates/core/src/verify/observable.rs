//! Global observables: piecewise constant on the cells `X_{n,p}`, piecewise
//! mean zero on them, or arbitrary per-cell tables.

use serde::{Deserialize, Serialize};

use crate::density::{CellMeasures, SubcellMeasures};
use crate::error::{Error, Result};
use crate::inducing::InducingScheme;
use crate::transfer::{CellKind, OperatorGrid};
use crate::verify::tails::plateau;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    PiecewiseConstant,
    PiecewiseMeanzero,
    General,
}

/// Values `ḡ_{n,p}` of a piecewise constant observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PwcRule {
    Zero,
    /// `(−1)^n`.
    Alternating,
    /// `+1` on blocks of `length` consecutive depths, alternating with `−1`.
    Block { length: usize },
    /// The constant `value`, also on `Y`.
    Constant { value: f64 },
    /// `values[(n−1) mod len]`.
    Custom { values: Vec<f64> },
}

impl PwcRule {
    fn value(&self, n: usize) -> f64 {
        match self {
            PwcRule::Zero => 0.0,
            PwcRule::Alternating => {
                if n.is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                }
            }
            PwcRule::Block { length } => {
                if ((n - 1) / length).is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                }
            }
            PwcRule::Constant { value } => *value,
            PwcRule::Custom { values } => values[(n - 1) % values.len()],
        }
    }
}

/// Raw profile on the sub-cells of each `X_{n,s}` before centring.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile {
    /// `+1` on the lower half of the sub-cells, `−μ_lower/μ_upper` on the upper half.
    #[default]
    LeftRight,
    Constant { value: f64 },
    /// One value per sub-cell, in increasing position.
    Table { values: Vec<f64> },
}

/// Bounded observable on the cells of `Y` and of the traps.
#[derive(Clone, Debug, Serialize)]
pub struct GlobalObservable {
    pub name: String,
    pub kind: ObservableKind,
    /// Global mean `ḡ` (limit of cell averages over `⋃_{i≤n} X_i`).
    pub mean: f64,
    pub bound: f64,
    pub centred: bool,
    pub y_value: f64,
    /// Sub-cells per trap cell (1 when the value is constant on `X_{n,s}`).
    pub k_sub: usize,
    pub depth: usize,
    /// `|Σ_{i=n₀}^N i^{−α} ḡ_i| / (Σ_p γ̂_p Σ_{i=n₀}^N i^{−α})`, the normalized
    /// partial-sum statistic of the centring condition.
    pub centring: f64,
    /// Largest `|∫_{X_{n,s}} g dμ| / μ(X_{n,s})`.
    pub cell_mean_defect: f64,
    /// Per arm: value at flat index `(n−1)·k_sub + i`.
    #[serde(skip)]
    values: Vec<Vec<f64>>,
}

impl GlobalObservable {
    /// An arbitrary table; `values[arm][(n−1)·k_sub + i]`.
    pub fn general(name: impl Into<String>, y_value: f64, k_sub: usize, values: Vec<Vec<f64>>, mean: f64) -> Result<Self> {
        if k_sub == 0 || values.iter().any(|v| v.len() % k_sub != 0) {
            return Err(Error::param("observable", "tables must hold k_sub values per depth"));
        }
        let depth = values.iter().map(|v| v.len() / k_sub).min().unwrap_or(0);
        let bound = values.iter().flatten().fold(y_value.abs(), |m, v| m.max(v.abs()));
        Ok(GlobalObservable {
            name: name.into(),
            kind: ObservableKind::General,
            mean,
            bound,
            centred: mean == 0.0,
            y_value,
            k_sub,
            depth,
            centring: f64::NAN,
            cell_mean_defect: f64::NAN,
            values,
        })
    }

    /// `1_Y`: zero on every trap.
    pub fn indicator_y(scheme: &InducingScheme, depth: usize) -> Self {
        let values = vec![vec![0.0; depth]; scheme.arms.len()];
        GlobalObservable::general("indicator_y", 1.0, 1, values, 0.0).expect("valid table")
    }

    pub fn value(&self, arm: usize, n: usize, sub: usize) -> f64 {
        let i = if self.k_sub == 1 { 0 } else { sub };
        self.values[arm][(n - 1) * self.k_sub + i]
    }

    /// The observable multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.name = format!("{}*{c}", self.name);
        out.mean *= c;
        out.bound *= c.abs();
        out.y_value *= c;
        for v in &mut out.values {
            for x in v {
                *x *= c;
            }
        }
        out
    }

    /// Values on the cells of an operator grid.
    pub fn on_grid(&self, op: &OperatorGrid) -> Result<Vec<f64>> {
        if self.k_sub != 1 && self.k_sub != op.options.subcells {
            return Err(Error::param(
                "depths.subcells",
                format!("observable {} needs {} sub-cells per trap cell, the operator has {}", self.name, self.k_sub, op.options.subcells),
            ));
        }
        if self.depth < op.options.depth {
            return Err(Error::DepthExceeded { requested: op.options.depth, available: self.depth });
        }
        Ok(op
            .cells
            .iter()
            .map(|c| match c.kind {
                CellKind::Y => self.y_value,
                CellKind::Trap { arm, n, sub } => self.value(arm, n, sub),
            })
            .collect())
    }
}

/// Largest ratio of the centring statistic at `N` to its value at `√N` that
/// counts as decay when `α = 1`.
const CENTRING_DECAY: f64 = 0.75;

/// Options of [`make_global_pwc`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PwcOptions {
    /// Fail unless the centring statistic is below `tolerance` (or, at
    /// `α = 1`, decays from `√N` to `N`).
    pub require_centred: bool,
    pub tolerance: f64,
}

impl Default for PwcOptions {
    fn default() -> Self {
        PwcOptions { require_centred: false, tolerance: 0.05 }
    }
}

/// Piecewise constant observable `g|_{X_{n,p}} ≡ ḡ_{n,p}` up to the depth of
/// `measures`. Tail weights `γ̂_p` are fitted on `[N/2, N]`.
pub fn make_global_pwc(
    scheme: &InducingScheme,
    measures: &CellMeasures,
    rule: &PwcRule,
    opts: PwcOptions,
) -> Result<GlobalObservable> {
    let depth = measures.depth;
    match rule {
        PwcRule::Block { length: 0 } => return Err(Error::param("observable.length", "must be at least 1")),
        PwcRule::Custom { values } if values.is_empty() => {
            return Err(Error::param("observable.values", "must not be empty"))
        }
        _ => {}
    }
    let values: Vec<Vec<f64>> = scheme.arms.iter().map(|_| (1..=depth).map(|n| rule.value(n)).collect()).collect();
    let y_value = if let PwcRule::Constant { value } = rule { *value } else { 0.0 };

    // Global mean from the definition: averages over ⋃_{i≤N} X_i.
    let (mut num, mut den) = (0.0, 0.0);
    for n in 1..=depth {
        for s in 0..scheme.arms.len() {
            num += measures.arm_x[s][n] * values[s][n - 1];
            den += measures.arm_x[s][n];
        }
    }
    let mean = if den > 0.0 { num / den } else { 0.0 };

    let (centring, centred) = match scheme.alpha() {
        Some(alpha) => {
            let lo = (depth / 2).max(2);
            let gamma: f64 = (0..scheme.points.len())
                .map(|p| plateau(alpha, lo, depth, |k| measures.point_x(scheme, p, k - 1)).gamma)
                .sum();
            let start = scheme.n0.max(1);
            let early = ((depth as f64).sqrt() as usize).max(start);
            let (mut partial, mut scale, mut at_early) = (0.0, 0.0, f64::NAN);
            for i in start..=depth {
                let w = (i as f64).powf(-alpha);
                partial += w * gamma * rule.value(i);
                scale += w * gamma;
                if i == early {
                    at_early = (partial / scale).abs();
                }
            }
            // The factor a_N^{-1} of both sums cancels.
            let stat = if scale > 0.0 { (partial / scale).abs() } else { f64::INFINITY };
            // At α = 1 the statistic decays like 1/log N: bounded partial sums
            // halve it from √N to N, a nonzero mean leaves it flat.
            let decaying = alpha >= 1.0 && stat < CENTRING_DECAY * at_early;
            (stat, stat < opts.tolerance || decaying)
        }
        None => (mean.abs(), mean.abs() < opts.tolerance),
    };
    if opts.require_centred && !centred {
        return Err(Error::NotCentred { ratio: centring, tolerance: opts.tolerance });
    }
    let bound = values.iter().flatten().fold(y_value.abs(), |m, v| m.max(v.abs()));
    Ok(GlobalObservable {
        name: format!("pwc_{}", rule_name(rule)),
        kind: ObservableKind::PiecewiseConstant,
        mean,
        bound,
        centred,
        y_value,
        k_sub: 1,
        depth,
        centring,
        cell_mean_defect: f64::NAN,
        values,
    })
}

fn rule_name(rule: &PwcRule) -> String {
    match rule {
        PwcRule::Zero => "zero".into(),
        PwcRule::Alternating => "alternating".into(),
        PwcRule::Block { length } => format!("block{length}"),
        PwcRule::Constant { value } => format!("constant{value}"),
        PwcRule::Custom { .. } => "custom".into(),
    }
}

/// Observable with `∫_{X_{n,s}} g dμ = 0` on every cell, obtained from a
/// profile on the sub-cells by subtracting its `μ`-mean.
pub fn make_pw_meanzero(sub: &SubcellMeasures, profile: &Profile) -> Result<GlobalObservable> {
    let k = sub.k_sub;
    let raw: Vec<f64> = match profile {
        Profile::LeftRight if k < 2 => {
            return Err(Error::param("depths.subcells", "the left/right profile needs at least 2 sub-cells"))
        }
        Profile::LeftRight => (0..k).map(|i| if i < k / 2 { 1.0 } else { 0.0 }).collect(),
        Profile::Constant { value } => vec![*value; k],
        Profile::Table { values } if values.len() != k => {
            return Err(Error::param("observable.values", format!("needs one value per sub-cell ({k})")))
        }
        Profile::Table { values } => values.clone(),
    };
    let arms = sub.mu.len();
    let mut values = vec![vec![0.0; sub.depth * k]; arms];
    let mut defect: f64 = 0.0;
    for (s, vals) in values.iter_mut().enumerate() {
        for n in 1..=sub.depth {
            let mu: Vec<f64> = (0..k).map(|i| sub.measure(s, n, i)).collect();
            let total: f64 = mu.iter().sum();
            let cell = &mut vals[(n - 1) * k..n * k];
            if total <= 0.0 {
                continue;
            }
            if let Profile::LeftRight = profile {
                let lower: f64 = mu[..k / 2].iter().sum();
                let upper: f64 = mu[k / 2..].iter().sum();
                let c = if upper > 0.0 { lower / upper } else { 0.0 };
                for (i, v) in cell.iter_mut().enumerate() {
                    *v = if i < k / 2 { 1.0 } else { -c };
                }
            } else {
                let m = raw.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() / total;
                for (v, r) in cell.iter_mut().zip(&raw) {
                    *v = r - m;
                }
            }
            let integral: f64 = cell.iter().zip(&mu).map(|(a, b)| a * b).sum();
            defect = defect.max(integral.abs() / total);
        }
    }
    let bound = values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(GlobalObservable {
        name: "pw_meanzero".into(),
        kind: ObservableKind::PiecewiseMeanzero,
        mean: 0.0,
        bound,
        centred: true,
        y_value: 0.0,
        k_sub: k,
        depth: sub.depth,
        centring: 0.0,
        cell_mean_defect: defect,
        values,
    })
}
