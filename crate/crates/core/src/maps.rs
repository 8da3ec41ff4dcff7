//! Intermittent interval maps: branch formulas, derivatives and safe inverses.
//!
//! Every branch is one of three closed-form families (affine, Möbius, or a
//! power law `x + b|x−ξ|^p + c|x−ξ|^q` around a fixed point), so first and
//! second derivatives are exact. Inverse branches are computed by a
//! bracketed Newton iteration that falls back to bisection and never leaves
//! its bracket.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed real interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// Interval spanned by two points in either order.
    pub fn new(a: f64, b: f64) -> Self {
        if a <= b {
            Interval { lo: a, hi: b }
        } else {
            Interval { lo: b, hi: a }
        }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Intersection with positive length, if any.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (hi > lo).then_some(Interval { lo, hi })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Preserving,
    Reversing,
}

/// Closed-form expression of a branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Formula {
    /// `slope·x + intercept`
    Affine { slope: f64, intercept: f64 },
    /// `(a·x + b)/(c·x + d)`
    Mobius { a: f64, b: f64, c: f64, d: f64 },
    /// `x − shift + s·(b·|x−ξ|^p + c·|x−ξ|^q)` with `s = sgn(x−ξ)`.
    Power { xi: f64, b: f64, p: f64, c: f64, q: f64, shift: f64 },
}

fn pow(a: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() <= 32.0 {
        a.powi(e as i32)
    } else {
        a.powf(e)
    }
}

impl Formula {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Formula::Affine { slope, intercept } => slope * x + intercept,
            Formula::Mobius { a, b, c, d } => (a * x + b) / (c * x + d),
            Formula::Power { xi, b, p, c, q, shift } => {
                let u = x - xi;
                let a = u.abs();
                let mut t = b * pow(a, p);
                if c != 0.0 {
                    t += c * pow(a, q);
                }
                (x - shift) + t.copysign(u)
            }
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            Formula::Affine { slope, .. } => slope,
            Formula::Mobius { a, b, c, d } => {
                let den = c * x + d;
                (a * d - b * c) / (den * den)
            }
            Formula::Power { xi, b, p, c, q, .. } => {
                let a = (x - xi).abs();
                let mut t = 1.0 + b * p * pow(a, p - 1.0);
                if c != 0.0 {
                    t += c * q * pow(a, q - 1.0);
                }
                t
            }
        }
    }

    pub fn deriv2(&self, x: f64) -> f64 {
        match *self {
            Formula::Affine { .. } => 0.0,
            Formula::Mobius { a, b, c, d } => {
                let den = c * x + d;
                -2.0 * c * (a * d - b * c) / (den * den * den)
            }
            Formula::Power { xi, b, p, c, q, .. } => {
                let u = x - xi;
                let a = u.abs();
                let mut t = b * p * (p - 1.0) * pow(a, p - 2.0);
                if c != 0.0 {
                    t += c * q * (q - 1.0) * pow(a, q - 2.0);
                }
                t.copysign(u)
            }
        }
    }
}

/// Qualitative type of a branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchKind {
    /// Contains a neutral fixed point `ξ` with `f(x) − x ≈ b|x−ξ|^{1+1/α}`.
    Neutral { xi: f64, alpha: f64, b: f64, kappa: Option<f64> },
    /// `|f'| ≥ rho` on the whole domain.
    Uniform { rho: f64 },
}

/// One monotone branch of an interval map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub domain: Interval,
    pub formula: Formula,
    pub kind: BranchKind,
}

impl Branch {
    pub fn eval(&self, x: f64) -> f64 {
        self.formula.eval(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.formula.deriv(x)
    }

    pub fn deriv2(&self, x: f64) -> f64 {
        self.formula.deriv2(x)
    }

    pub fn orientation(&self) -> Orientation {
        if self.eval(self.domain.hi) >= self.eval(self.domain.lo) {
            Orientation::Preserving
        } else {
            Orientation::Reversing
        }
    }

    /// Image of the domain.
    pub fn range(&self) -> Interval {
        Interval::new(self.eval(self.domain.lo), self.eval(self.domain.hi))
    }

    pub fn neutral_point(&self) -> Option<f64> {
        match self.kind {
            BranchKind::Neutral { xi, .. } => Some(xi),
            BranchKind::Uniform { .. } => None,
        }
    }

    /// Preimage of `y` inside the domain; see [`inverse_branch`].
    pub fn inverse(&self, y: f64) -> Result<f64> {
        inverse_branch(self, y)
    }
}

/// Solves `branch.eval(x) = y` for `x` in the branch domain.
///
/// Uses Newton steps safeguarded by a shrinking bracket. Near a neutral
/// fixed point `ξ` the bracket is narrowed to the segment between `ξ` and
/// `y`, where the root must lie since `f(x) − x` has the sign of `x − ξ`.
pub fn inverse_branch(branch: &Branch, y: f64) -> Result<f64> {
    let range = branch.range();
    let slack = 1e-13 * y.abs().max(1.0);
    if !(y >= range.lo - slack && y <= range.hi + slack) {
        return Err(Error::OutOfRange { y, lo: range.lo, hi: range.hi });
    }
    let increasing = branch.orientation() == Orientation::Preserving;
    let Interval { lo: dlo, hi: dhi } = branch.domain;
    if y <= range.lo {
        return Ok(if increasing { dlo } else { dhi });
    }
    if y >= range.hi {
        return Ok(if increasing { dhi } else { dlo });
    }

    let (mut lo, mut hi) = (dlo, dhi);
    let start = match branch.kind {
        BranchKind::Neutral { xi, .. } => {
            lo = lo.max(xi.min(y));
            hi = hi.min(xi.max(y));
            y.clamp(lo, hi)
        }
        BranchKind::Uniform { .. } => {
            let (flo, fhi) = (branch.eval(dlo), branch.eval(dhi));
            let t = ((y - flo) / (fhi - flo)).clamp(0.0, 1.0);
            dlo + t * (dhi - dlo)
        }
    };
    bracketed_root(
        |x| (branch.eval(x) - y, branch.deriv(x)),
        lo,
        hi,
        increasing,
        start,
    )
}

/// Root of a monotone function on `[lo, hi]` by safeguarded Newton.
///
/// `f` returns the residual and its derivative. Terminates once the step or
/// the bracket shrinks to a few ulps of the iterate.
pub(crate) fn bracketed_root<F>(f: F, mut lo: f64, mut hi: f64, increasing: bool, start: f64) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    const EPS: f64 = 4.0 * f64::EPSILON;
    let sgn = if increasing { 1.0 } else { -1.0 };
    let mut x = start.clamp(lo, hi);
    for iter in 0..600 {
        let (r, d) = f(x);
        let (r, d) = (sgn * r, sgn * d);
        if r == 0.0 {
            return Ok(x);
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = r / d;
        if d > 0.0 && step.abs() <= EPS * x.abs().max(f64::MIN_POSITIVE) {
            return Ok((x - step).clamp(lo, hi));
        }
        let newton = x - step;
        let next = if iter < 60 && d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let scale = next.abs().max(f64::MIN_POSITIVE);
        if (next - x).abs() <= EPS * scale || hi - lo <= EPS * lo.abs().max(hi.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::RootFinding(format!("no convergence in [{lo:e}, {hi:e}]")))
}

/// Built-in parametric families and user-supplied branch tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Liverani–Saussol–Vaienti map `x(1 + 2^{1/α} x^{1/α})`, `2x − 1`.
    Lsv { alpha: f64 },
    /// Neutral branch `x + b x^{1+1/α} (+ c x^{1+κ})` on `[0, η₁]` with
    /// `f₀(η₁) = η`, then the linear branch `(x − η₁)/(1 − η₁)`.
    Lsv2 { alpha: f64, b: f64, eta: f64, correction: Option<Correction> },
    /// Neutral branch followed by `q` linear branches. `cuts` lists the
    /// interior cut points `η₂ < … < η_q` (equal spacing when `None`).
    Qbranch { alpha: f64, b: f64, eta: f64, q: usize, cuts: Option<Vec<f64>> },
    /// All-linear full-branch map with cut points `η₁ < … < η_q`; the first
    /// branch `x/η₁` has a repelling fixed point. Lebesgue is invariant.
    QbranchLinear { cuts: Vec<f64> },
    /// `x + b x^{1+1/α} mod 1`.
    PmMod1 { alpha: f64, b: f64 },
    /// `x/(1−x)` on `[0, ½]`, `(1−x)/x` on `[½, 1]`.
    Farey,
    /// Two neutral fixed points at 0 and 1; `b` is the coefficient at 0.
    TwoSided { alpha: f64, b: f64 },
    /// `d = cuts.len() + 1` full branches, each with a neutral fixed point.
    ThalerD { alpha: f64, cuts: Vec<f64> },
    /// User-supplied branch table over `X = [0, η]`.
    Custom { eta: f64, branches: Vec<Branch> },
}

/// Higher-order term `c·x^{1+κ}` of a neutral branch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub c: f64,
    pub kappa: f64,
}

impl Family {
    /// Short tag used in configs and reports.
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Lsv { .. } => "lsv",
            Family::Lsv2 { .. } => "lsv2",
            Family::Qbranch { .. } => "qbranch",
            Family::QbranchLinear { .. } => "qbranch_linear",
            Family::PmMod1 { .. } => "pm_mod1",
            Family::Farey => "farey",
            Family::TwoSided { .. } => "two_sided",
            Family::ThalerD { .. } => "thaler_d",
            Family::Custom { .. } => "custom",
        }
    }
}

/// A piecewise monotone map of `X = [0, η]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapModel {
    pub family: Family,
    pub branches: Vec<Branch>,
    /// Right end of the invariant interval `X = [0, η]`; the last branch may
    /// extend past it.
    pub eta: f64,
}

impl MapModel {
    /// Index of the branch whose half-open domain `[lo, hi)` holds `x`.
    pub fn branch_index(&self, x: f64) -> usize {
        let i = self.branches.partition_point(|b| b.domain.lo <= x);
        i.saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.branches[self.branch_index(x)].eval(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.branches[self.branch_index(x)].deriv(x)
    }

    /// The common exponent `α` of all neutral branches, if any.
    pub fn alpha(&self) -> Option<f64> {
        self.branches.iter().find_map(|b| match b.kind {
            BranchKind::Neutral { alpha, .. } => Some(alpha),
            BranchKind::Uniform { .. } => None,
        })
    }

    /// The invariant interval `X = [0, η]`.
    pub fn domain(&self) -> Interval {
        Interval { lo: 0.0, hi: self.eta }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("{alpha} is outside (0, 1]")))
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(field, format!("{v} must be positive")))
    }
}

fn check_cuts(cuts: &[f64], lo: f64, hi: f64) -> Result<()> {
    let mut prev = lo;
    for &c in cuts {
        if !(c > prev && c < hi) {
            return Err(Error::param(
                "cuts",
                format!("cut points must increase strictly inside ({lo}, {hi}); got {cuts:?}"),
            ));
        }
        prev = c;
    }
    Ok(())
}

/// Solves `x + b·x^p = k` on `[0, hi]`.
fn power_level(b: f64, p: f64, k: f64, hi: f64) -> Result<f64> {
    bracketed_root(|x| (x + b * pow(x, p) - k, 1.0 + b * p * pow(x, p - 1.0)), 0.0, hi, true, hi)
}

fn neutral_left(domain: Interval, alpha: f64, b: f64, corr: Option<Correction>) -> Branch {
    let p = 1.0 + 1.0 / alpha;
    let (c, q) = corr.map_or((0.0, p), |k| (k.c, 1.0 + k.kappa));
    Branch {
        domain,
        formula: Formula::Power { xi: 0.0, b, p, c, q, shift: 0.0 },
        kind: BranchKind::Neutral { xi: 0.0, alpha, b, kappa: corr.map(|k| k.kappa) },
    }
}

fn affine(lo: f64, hi: f64, ylo: f64, yhi: f64) -> Branch {
    let slope = (yhi - ylo) / (hi - lo);
    Branch {
        domain: Interval { lo, hi },
        formula: Formula::Affine { slope, intercept: ylo - slope * lo },
        kind: BranchKind::Uniform { rho: slope.abs() },
    }
}

/// Builds a map of the given family and validates it.
pub fn make_family(family: Family) -> Result<MapModel> {
    let model = match &family {
        Family::Lsv { alpha } => {
            check_alpha(*alpha)?;
            let b = 2f64.powf(1.0 / alpha);
            lsv2(family.clone(), *alpha, b, 1.0, None, &[])?
        }
        Family::Lsv2 { alpha, b, eta, correction } => {
            check_alpha(*alpha)?;
            lsv2(family.clone(), *alpha, *b, *eta, *correction, &[])?
        }
        Family::Qbranch { alpha, b, eta, q, cuts } => {
            check_alpha(*alpha)?;
            if *q == 0 {
                return Err(Error::param("q", "need at least one linear branch"));
            }
            match cuts {
                Some(c) if c.len() + 1 != *q => {
                    return Err(Error::param("cuts", format!("expected {} interior cuts for q = {q}", q - 1)))
                }
                _ => {}
            }
            lsv2(family.clone(), *alpha, *b, *eta, None, cuts.as_deref().unwrap_or(&[]))
                .and_then(|m| if cuts.is_none() { equal_qbranch(m, *q) } else { Ok(m) })?
        }
        Family::QbranchLinear { cuts } => {
            if cuts.is_empty() {
                return Err(Error::param("cuts", "need at least one cut point"));
            }
            check_cuts(cuts, 0.0, 1.0)?;
            let mut pts = vec![0.0];
            pts.extend_from_slice(cuts);
            pts.push(1.0);
            let branches = pts.windows(2).map(|w| affine(w[0], w[1], 0.0, 1.0)).collect();
            MapModel { family: family.clone(), branches, eta: 1.0 }
        }
        Family::PmMod1 { alpha, b } => {
            check_alpha(*alpha)?;
            check_positive("b", *b)?;
            let p = 1.0 + 1.0 / alpha;
            let count = b.ceil() as usize;
            let mut cuts = Vec::with_capacity(count);
            for k in 1..=count {
                cuts.push(power_level(*b, p, k as f64, 1.0)?);
            }
            let mut branches = vec![neutral_left(Interval { lo: 0.0, hi: cuts[0] }, *alpha, *b, None)];
            for k in 1..=count {
                let hi = if k < count { cuts[k] } else { 1.0 };
                let lo = cuts[k - 1];
                let formula = Formula::Power { xi: 0.0, b: *b, p, c: 0.0, q: p, shift: k as f64 };
                let rho = formula.deriv(lo);
                branches.push(Branch { domain: Interval { lo, hi }, formula, kind: BranchKind::Uniform { rho } });
            }
            MapModel { family: family.clone(), branches, eta: 1.0 }
        }
        Family::Farey => MapModel {
            family: family.clone(),
            branches: vec![
                Branch {
                    domain: Interval { lo: 0.0, hi: 0.5 },
                    formula: Formula::Mobius { a: 1.0, b: 0.0, c: -1.0, d: 1.0 },
                    kind: BranchKind::Neutral { xi: 0.0, alpha: 1.0, b: 1.0, kappa: Some(2.0) },
                },
                Branch {
                    domain: Interval { lo: 0.5, hi: 1.0 },
                    formula: Formula::Mobius { a: -1.0, b: 1.0, c: 1.0, d: 0.0 },
                    kind: BranchKind::Uniform { rho: 1.0 },
                },
            ],
            eta: 1.0,
        },
        Family::TwoSided { alpha, b } => {
            check_alpha(*alpha)?;
            check_positive("b", *b)?;
            let c = power_level(*b, 1.0 + 1.0 / alpha, 1.0, 1.0)?;
            thaler(family.clone(), *alpha, &[c])?
        }
        Family::ThalerD { alpha, cuts } => {
            check_alpha(*alpha)?;
            if cuts.is_empty() {
                return Err(Error::param("cuts", "need at least one cut point (d ≥ 2)"));
            }
            check_cuts(cuts, 0.0, 1.0)?;
            thaler(family.clone(), *alpha, cuts)?
        }
        Family::Custom { eta, branches } => {
            if branches.is_empty() {
                return Err(Error::param("branches", "empty branch table"));
            }
            for b in branches {
                if let BranchKind::Neutral { alpha, .. } = b.kind {
                    check_alpha(alpha)?;
                }
            }
            MapModel { family: family.clone(), branches: branches.clone(), eta: *eta }
        }
    };
    validate(&model)?;
    Ok(model)
}

fn lsv2(
    family: Family,
    alpha: f64,
    b: f64,
    eta: f64,
    corr: Option<Correction>,
    cuts: &[f64],
) -> Result<MapModel> {
    check_positive("b", b)?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::param("eta", format!("{eta} is outside (0, 1]")));
    }
    if let Some(k) = corr {
        if k.kappa <= 1.0 / alpha {
            return Err(Error::param("kappa", format!("{} must exceed 1/alpha = {}", k.kappa, 1.0 / alpha)));
        }
    }
    let f0 = neutral_left(Interval { lo: 0.0, hi: 1.0 }, alpha, b, corr);
    let eta1 = bracketed_root(
        |x| (f0.eval(x) - eta, f0.deriv(x)),
        0.0,
        eta,
        true,
        eta,
    )?;
    check_cuts(cuts, eta1, 1.0)?;
    let mut branches = vec![Branch { domain: Interval { lo: 0.0, hi: eta1 }, ..f0 }];
    let mut pts = vec![eta1];
    pts.extend_from_slice(cuts);
    pts.push(1.0);
    let last = pts.len() - 2;
    for (r, w) in pts.windows(2).enumerate() {
        // Earlier branches map onto X = [0, η]; the last one onto [0, 1].
        let top = if r == last { 1.0 } else { eta };
        branches.push(affine(w[0], w[1], 0.0, top));
    }
    Ok(MapModel { family, branches, eta })
}

/// Re-cuts the linear part of a one-branch `lsv2` model into `q` equal pieces.
fn equal_qbranch(model: MapModel, q: usize) -> Result<MapModel> {
    let eta1 = model.branches[0].domain.hi;
    let cuts: Vec<f64> = (1..q).map(|r| eta1 + (1.0 - eta1) * r as f64 / q as f64).collect();
    let (alpha, b, eta) = match model.family {
        Family::Qbranch { alpha, b, eta, .. } => (alpha, b, eta),
        _ => unreachable!("equal_qbranch is only used for qbranch"),
    };
    lsv2(model.family, alpha, b, eta, None, &cuts)
}

/// Thaler-type map with one neutral fixed point per full branch.
fn thaler(family: Family, alpha: f64, cuts: &[f64]) -> Result<MapModel> {
    let p = 1.0 + 1.0 / alpha;
    let d = cuts.len() + 1;
    let mut pts = vec![0.0];
    pts.extend_from_slice(cuts);
    pts.push(1.0);
    let mut branches = Vec::with_capacity(d);
    for k in 0..d {
        let (lo, hi) = (pts[k], pts[k + 1]);
        let (xi, b) = if k == 0 {
            (0.0, (1.0 - hi) / pow(hi, p))
        } else if k == d - 1 {
            (1.0, lo / pow(1.0 - lo, p))
        } else {
            // f(lo) = 0 and f(hi) = 1 fix both ξ and b.
            let xi = bracketed_root(
                |t| {
                    let v = lo * pow(hi - t, p) - (1.0 - hi) * pow(t - lo, p);
                    let dv = -p * (lo * pow(hi - t, p - 1.0) + (1.0 - hi) * pow(t - lo, p - 1.0));
                    (v, dv)
                },
                lo,
                hi,
                false,
                0.5 * (lo + hi),
            )?;
            (xi, lo / pow(xi - lo, p))
        };
        branches.push(Branch {
            domain: Interval { lo, hi },
            formula: Formula::Power { xi, b, p, c: 0.0, q: p, shift: 0.0 },
            kind: BranchKind::Neutral { xi, alpha, b, kappa: None },
        });
    }
    Ok(MapModel { family, branches, eta: 1.0 })
}

/// Sampled checks of the structural invariants of a map.
fn validate(model: &MapModel) -> Result<()> {
    let bad = |msg: String| Err(Error::param("branches", msg));
    let first = &model.branches[0];
    if first.domain.lo != 0.0 || model.branches.last().unwrap().domain.hi != 1.0 {
        return bad("branch domains must cover [0, 1]".into());
    }
    for w in model.branches.windows(2) {
        if (w[0].domain.hi - w[1].domain.lo).abs() > 1e-14 {
            return bad(format!("gap or overlap at {}", w[0].domain.hi));
        }
    }
    if !(model.eta > 0.0 && model.eta <= 1.0) {
        return Err(Error::param("eta", format!("{} is outside (0, 1]", model.eta)));
    }
    const SAMPLES: usize = 512;
    for (i, br) in model.branches.iter().enumerate() {
        let Interval { lo, hi } = br.domain;
        if !(hi > lo) {
            return bad(format!("branch {i} has an empty domain"));
        }
        let sign = if br.orientation() == Orientation::Preserving { 1.0 } else { -1.0 };
        let mut prev = br.eval(lo);
        for s in 1..=SAMPLES {
            let x = lo + (hi - lo) * s as f64 / SAMPLES as f64;
            let v = br.eval(x);
            if !(sign * (v - prev) > 0.0) {
                return bad(format!("branch {i} is not strictly monotone near {x}"));
            }
            prev = v;
            if x <= model.eta && !(v >= -1e-12 && v <= model.eta + 1e-12) {
                return bad(format!("branch {i} maps {x} to {v}, outside X"));
            }
            if let BranchKind::Uniform { rho } = br.kind {
                if br.deriv(x).abs() < rho.min(1.0) * (1.0 - 1e-9) {
                    return bad(format!("branch {i} is not expanding at {x}"));
                }
            }
        }
        if let BranchKind::Neutral { xi, alpha, b, .. } = br.kind {
            if (br.eval(xi) - xi).abs() > 1e-12 || !br.domain.contains(xi) {
                return bad(format!("branch {i}: {xi} is not a fixed point in its domain"));
            }
            let p = 1.0 + 1.0 / alpha;
            // Smallest offset at which b·u^p is resolved against x.
            let u = (1e-8 / b).powf(1.0 / (p - 1.0)).clamp(1e-5, 1e-2);
            for side in [-1.0, 1.0] {
                let x = xi + side * u;
                if !br.domain.contains(x) {
                    continue;
                }
                let ratio = (br.eval(x) - x) / (side * b * pow(u, p));
                let dratio = (br.deriv(x) - 1.0) / (b * p * pow(u, p - 1.0));
                if (ratio - 1.0).abs() > 0.05 || (dratio - 1.0).abs() > 0.05 {
                    return bad(format!("branch {i} does not match the neutral asymptotics at {xi}"));
                }
            }
        }
    }
    Ok(())
}

/// Estimates the distortion constant `sup |f''|/(f')²` on a dense sample.
///
/// A `delta`-neighbourhood of a branch endpoint is skipped only when the
/// ratio is not finite at that endpoint.
pub fn adler_constant(model: &MapModel, delta: f64) -> f64 {
    const SAMPLES: usize = 4096;
    let mut best = 0.0f64;
    for br in &model.branches {
        let ratio = |x: f64| br.deriv2(x).abs() / br.deriv(x).powi(2);
        let Interval { mut lo, mut hi } = br.domain;
        if !ratio(lo).is_finite() {
            lo += delta;
        }
        if !ratio(hi).is_finite() {
            hi -= delta;
        }
        if hi <= lo {
            continue;
        }
        for s in 0..=SAMPLES {
            let x = lo + (hi - lo) * s as f64 / SAMPLES as f64;
            let r = ratio(x);
            if r.is_finite() {
                best = best.max(r);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lsv(alpha: f64) -> MapModel {
        make_family(Family::Lsv { alpha }).unwrap()
    }

    #[test]
    fn lsv_formulas() {
        let m = lsv(1.0);
        assert_eq!(m.branches.len(), 2);
        assert!((m.eval(0.25) - 0.25 * 1.5).abs() < 1e-15);
        assert!((m.eval(0.8) - 0.6).abs() < 1e-15);
        let m = lsv(0.5);
        assert!((m.branches[0].eval(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_examples() {
        let m = lsv(1.0);
        let f0 = &m.branches[0];
        assert!((f0.inverse(1.0).unwrap() - 0.5).abs() < 1e-15);
        let oracle = (-1.0 + 5f64.sqrt()) / 4.0;
        assert!((f0.inverse(0.5).unwrap() - oracle).abs() < 1e-15);
        assert!((lsv(0.5).branches[0].inverse(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(f0.inverse(1.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn two_sided_endpoints() {
        let m = make_family(Family::TwoSided { alpha: 0.5, b: 4.0 }).unwrap();
        assert_eq!(m.branches[0].domain.hi, 0.5);
        assert_eq!(m.branches[0].eval(0.5), 1.0);
        assert_eq!(m.branches[1].eval(0.5), 0.0);
        assert!((m.branches[1].eval(0.75) - (0.75 - 4.0 * 0.25f64.powi(3))).abs() < 1e-15);
    }

    #[test]
    fn adler_examples() {
        assert!((adler_constant(&lsv(1.0), 1e-9) - 4.0).abs() < 1e-12);
        let farey = make_family(Family::Farey).unwrap();
        assert!((adler_constant(&farey, 1e-9) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pm_mod1_counts_expanding_branches() {
        let m = make_family(Family::PmMod1 { alpha: 0.5, b: 2.5 }).unwrap();
        assert_eq!(m.branches.len(), 4);
        let m = make_family(Family::PmMod1 { alpha: 0.5, b: 2.0 }).unwrap();
        assert_eq!(m.branches.len(), 3);
        assert!((m.branches[2].eval(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thaler_interior_branch_is_full() {
        let m = make_family(Family::ThalerD { alpha: 0.5, cuts: vec![0.3, 0.65] }).unwrap();
        let mid = &m.branches[1];
        assert!(mid.eval(0.3).abs() < 1e-12);
        assert!((mid.eval(0.65) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        let err = make_family(Family::Lsv { alpha: 1.5 }).unwrap_err();
        assert!(err.to_string().contains("alpha"));
        let err = make_family(Family::ThalerD { alpha: 0.5, cuts: vec![0.6, 0.4] }).unwrap_err();
        assert!(err.to_string().contains("cuts"));
    }
}
