//! First-hit structure of a map relative to an inducing set `Y`.
//!
//! Near each neutral fixed point `ξ` the complement of `Y` is organised in
//! *arms*: one-sided neighbourhoods `(ξ, β]` that the trapping branch `g`
//! maps onto themselves plus the entry interval `E` between `β` and `g(β)`.
//! The tail sequence `x₀ = g(β)`, `x₁ = β`, `x_{n+1} = g⁻¹(x_n)` cuts an arm
//! into the cells `X_n` with first-hit time `n`. A *feeder* is a branch that
//! maps part of `Y` onto a whole arm; its preimages of `X_{n−1}` are the
//! cells `Y_n` accumulating at `ζ = f_k⁻¹(ξ)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{bracketed_root, BranchKind, Family, Interval, MapModel};

/// Side of a reference point on which a set of cells lies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn of(x: f64, reference: f64) -> Side {
        if x < reference {
            Side::Left
        } else {
            Side::Right
        }
    }
}

/// A fixed point that cells accumulate at.
#[derive(Clone, Debug, Serialize)]
pub struct FixedPoint {
    pub xi: f64,
    /// Tail exponent; `None` for a uniformly expanding fixed point.
    pub alpha: Option<f64>,
    pub b: Option<f64>,
}

/// One-sided trap at a fixed point.
#[derive(Clone, Debug, Serialize)]
pub struct Arm {
    pub point: usize,
    /// Index of the trapping branch `g`.
    pub branch: usize,
    pub xi: f64,
    pub side: Side,
    /// `x₀, x₁, …` with `x₁ = β` the boundary of the trap.
    #[serde(skip)]
    tail: Vec<f64>,
}

impl Arm {
    pub fn x0(&self) -> f64 {
        self.tail[0]
    }

    pub fn beta(&self) -> f64 {
        self.tail[1]
    }

    /// Entry interval `E = g(X₁)`.
    pub fn entry(&self) -> Interval {
        Interval::new(self.tail[0], self.tail[1])
    }

    /// Trap `⋃_{n≥1} X_n` (closed for convenience).
    pub fn trap(&self) -> Interval {
        Interval::new(self.xi, self.tail[1])
    }

    /// Tail coordinates `x₀ … x_depth`.
    pub fn tail(&self) -> &[f64] {
        &self.tail
    }

    /// Cell `X_n` between `x_{n+1}` and `x_n`.
    pub fn cell(&self, n: usize) -> Interval {
        Interval::new(self.tail[n + 1], self.tail[n])
    }

    /// Distance from `ξ` of the tail point `x_n`.
    pub fn dist(&self, n: usize) -> f64 {
        (self.tail[n] - self.xi).abs()
    }

    /// Depth `n ≥ 1` with `x ∈ X_n`, when `x` lies in the enumerated part
    /// of the trap.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let d = (x - self.xi).abs();
        if Side::of(x, self.xi) != self.side || d > self.dist(1) || d == 0.0 {
            return None;
        }
        // First index whose distance drops below d.
        let k = self.tail[1..].partition_point(|&t| (t - self.xi).abs() >= d) + 1;
        (k < self.tail.len()).then_some(k - 1)
    }
}

/// Branch mapping part of `Y` onto an arm.
#[derive(Clone, Debug, Serialize)]
pub struct Feeder {
    pub branch: usize,
    pub arm: usize,
    /// Accumulation point `ζ = f_k⁻¹(ξ)`.
    pub zeta: f64,
    /// Side of `ζ` on which the cells `Y_n` lie.
    pub side: Side,
    /// `|f_k'(ζ)|`.
    pub slope: f64,
}

/// Part of `Y` mapped into `Y` in one step by a single branch.
#[derive(Clone, Debug, Serialize)]
pub struct DirectPiece {
    pub branch: usize,
    pub domain: Interval,
}

/// Identifier of a first-hit cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellId {
    /// `X_{n,s}` for one arm.
    Arm { arm: usize, n: usize },
    /// `X_{n,p}`: union of the arms of a fixed point.
    Point { point: usize, n: usize },
    /// `Y_{n,r}`, `n ≥ 2`.
    Feeder { feeder: usize, n: usize },
}

/// Tail coordinates of one arm with the fitted asymptotic constants.
#[derive(Clone, Debug, Serialize)]
pub struct TailTable {
    pub arm: usize,
    pub point: usize,
    pub entries: Vec<f64>,
    /// `|x_N − ξ|·N^α`.
    pub b_prime: f64,
    /// `|x_{N−1} − x_N|·N^{α+1}`.
    pub b_second: f64,
}

/// Row of the cell export.
#[derive(Clone, Debug, Serialize)]
pub struct CellRow {
    pub kind: &'static str,
    pub n: usize,
    pub index: usize,
    pub left: f64,
    pub right: f64,
    pub leb: f64,
}

/// Inducing set, fixed points, arms and feeders of a map.
#[derive(Clone, Debug, Serialize)]
pub struct InducingScheme {
    pub map: MapModel,
    pub y: Vec<Interval>,
    pub points: Vec<FixedPoint>,
    pub arms: Vec<Arm>,
    pub feeders: Vec<Feeder>,
    pub direct: Vec<DirectPiece>,
    /// First depth from which every `Y_{n+1,r}` maps onto `X_{n,ψ(r)}`.
    pub n0: usize,
}

const INITIAL_DEPTH: usize = 64;

/// Builds the inducing scheme with the family's rule for choosing `Y`.
pub fn build_scheme(map: MapModel) -> Result<InducingScheme> {
    let specs = arm_specs(&map)?;
    let mut points: Vec<FixedPoint> = Vec::new();
    let mut arms = Vec::new();
    for spec in specs {
        let point = match points.iter().position(|p| p.xi == spec.xi) {
            Some(i) => i,
            None => {
                let (alpha, b) = match map.branches[spec.branch].kind {
                    BranchKind::Neutral { alpha, b, .. } => (Some(alpha), Some(b)),
                    BranchKind::Uniform { .. } => (None, None),
                };
                points.push(FixedPoint { xi: spec.xi, alpha, b });
                points.len() - 1
            }
        };
        let x0 = map.branches[spec.branch].eval(spec.beta);
        arms.push(Arm {
            point,
            branch: spec.branch,
            xi: spec.xi,
            side: Side::of(spec.beta, spec.xi),
            tail: vec![x0, spec.beta],
        });
    }
    let y = complement(&map, &arms)?;
    let mut scheme = InducingScheme { map, y, points, arms, feeders: Vec::new(), direct: Vec::new(), n0: 1 };
    scheme.ensure_depth(INITIAL_DEPTH)?;
    scheme.feeders = find_feeders(&scheme)?;
    scheme.direct = direct_pieces(&scheme)?;
    scheme.n0 = detect_n0(&scheme)?;
    Ok(scheme)
}

struct ArmSpec {
    branch: usize,
    xi: f64,
    beta: f64,
}

fn arm_specs(map: &MapModel) -> Result<Vec<ArmSpec>> {
    let b0 = &map.branches[0];
    let whole_first = || vec![ArmSpec { branch: 0, xi: 0.0, beta: b0.domain.hi }];
    match &map.family {
        Family::Lsv { .. }
        | Family::Lsv2 { .. }
        | Family::Qbranch { .. }
        | Family::QbranchLinear { .. }
        | Family::PmMod1 { .. }
        | Family::Farey => Ok(whole_first()),
        Family::TwoSided { .. } => period_two(map),
        Family::ThalerD { cuts, .. } if cuts.len() == 1 => period_two(map),
        Family::ThalerD { .. } | Family::Custom { .. } => thaler_arms(map),
    }
}

/// `Y = [x*, f(x*)]` for the period-two orbit of a two-branch map.
fn period_two(map: &MapModel) -> Result<Vec<ArmSpec>> {
    let (f0, f1) = (&map.branches[0], &map.branches[1]);
    let c = f0.domain.hi;
    let lo = f0.inverse(c)?;
    let phi = |x: f64| f1.eval(f0.eval(x)) - x;
    if !(phi(lo) < 0.0 && phi(c) > 0.0) {
        return Err(Error::Construction(format!(
            "no sign change of f1(f0(x)) - x on [{lo}, {c}]: cannot locate the period-two orbit"
        )));
    }
    let x = bracketed_root(
        |x| {
            let y = f0.eval(x);
            (f1.eval(y) - x, f1.deriv(y) * f0.deriv(x) - 1.0)
        },
        lo,
        c,
        true,
        0.5 * (lo + c),
    )?;
    let fx = f0.eval(x);
    Ok(vec![ArmSpec { branch: 0, xi: 0.0, beta: x }, ArmSpec { branch: 1, xi: 1.0, beta: fx }])
}

/// Traps `I_k ∩ f⁻¹(I_k)` around every neutral fixed point.
fn thaler_arms(map: &MapModel) -> Result<Vec<ArmSpec>> {
    let mut specs = Vec::new();
    for (k, br) in map.branches.iter().enumerate() {
        let Some(xi) = br.neutral_point() else { continue };
        let Interval { lo, hi } = br.domain;
        if xi > lo {
            specs.push(ArmSpec { branch: k, xi, beta: br.inverse(lo.max(br.range().lo))? });
        }
        if xi < hi {
            specs.push(ArmSpec { branch: k, xi, beta: br.inverse(hi.min(br.range().hi))? });
        }
    }
    if specs.is_empty() {
        return Err(Error::Construction("map has no neutral fixed point".into()));
    }
    Ok(specs)
}

fn complement(map: &MapModel, arms: &[Arm]) -> Result<Vec<Interval>> {
    let mut traps: Vec<Interval> = arms.iter().map(Arm::trap).collect();
    traps.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut y = Vec::new();
    let mut cursor = 0.0;
    for t in &traps {
        if t.lo > cursor {
            y.push(Interval { lo: cursor, hi: t.lo });
        }
        cursor = cursor.max(t.hi);
    }
    if map.eta > cursor {
        y.push(Interval { lo: cursor, hi: map.eta });
    }
    y.retain(|c| c.len() > 1e-14);
    if y.is_empty() {
        return Err(Error::Construction("inducing set Y is empty".into()));
    }
    Ok(y)
}

fn find_feeders(scheme: &InducingScheme) -> Result<Vec<Feeder>> {
    let mut feeders = Vec::new();
    for (s, arm) in scheme.arms.iter().enumerate() {
        for (k, br) in scheme.map.branches.iter().enumerate() {
            let range = br.range();
            let Some(part) = arm.trap().intersect(&range) else { continue };
            if arm.xi < range.lo - 1e-14 || arm.xi > range.hi + 1e-14 {
                continue;
            }
            let pre = Interval::new(br.inverse(part.lo)?, br.inverse(part.hi)?);
            if pre.is_empty() || !scheme.in_y(pre.mid()) {
                continue;
            }
            let zeta = br.inverse(arm.xi.clamp(range.lo, range.hi))?;
            feeders.push(Feeder {
                branch: k,
                arm: s,
                zeta,
                side: Side::of(pre.mid(), zeta),
                slope: br.deriv(zeta).abs(),
            });
        }
    }
    if feeders.is_empty() {
        return Err(Error::Construction("no branch maps Y onto a trap".into()));
    }
    Ok(feeders)
}

fn direct_pieces(scheme: &InducingScheme) -> Result<Vec<DirectPiece>> {
    let mut out = Vec::new();
    for (k, br) in scheme.map.branches.iter().enumerate() {
        let range = br.range();
        for c in &scheme.y {
            let Some(part) = c.intersect(&range) else { continue };
            let pre = Interval::new(br.inverse(part.lo)?, br.inverse(part.hi)?);
            for c2 in &scheme.y {
                if let Some(d) = pre.intersect(c2).and_then(|d| d.intersect(&br.domain)) {
                    if d.len() > 1e-15 {
                        out.push(DirectPiece { branch: k, domain: d });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn detect_n0(scheme: &InducingScheme) -> Result<usize> {
    let depth = scheme.depth();
    'depth: for n in 1..depth {
        for f in &scheme.feeders {
            let range = scheme.map.branches[f.branch].range();
            let cell = scheme.arms[f.arm].cell(n);
            if cell.lo < range.lo - 1e-9 || cell.hi > range.hi + 1e-9 {
                continue 'depth;
            }
        }
        return Ok(n);
    }
    Err(Error::Construction(format!("feeders never cover the trap cells up to depth {depth}")))
}

impl InducingScheme {
    /// Number of enumerated trap cells per arm.
    pub fn depth(&self) -> usize {
        self.arms.iter().map(|a| a.tail.len() - 2).min().unwrap_or(0)
    }

    /// Extends every tail sequence so that cells up to `n` are available.
    pub fn ensure_depth(&mut self, n: usize) -> Result<()> {
        let map = &self.map;
        for arm in &mut self.arms {
            let g = &map.branches[arm.branch];
            while arm.tail.len() < n + 2 {
                let next = g.inverse(*arm.tail.last().unwrap())?;
                arm.tail.push(next);
            }
        }
        Ok(())
    }

    fn require(&self, n: usize) -> Result<()> {
        if n > self.depth() {
            return Err(Error::DepthExceeded { requested: n, available: self.depth() });
        }
        Ok(())
    }

    pub fn in_y(&self, x: f64) -> bool {
        self.y.iter().any(|c| c.contains(x))
    }

    pub fn leb_y(&self) -> f64 {
        self.y.iter().map(Interval::len).sum()
    }

    /// Fixed-point index `ψ(r)` of a feeder.
    pub fn psi(&self, feeder: usize) -> usize {
        self.arms[self.feeders[feeder].arm].point
    }

    /// Tail exponent shared by all fixed points (`None` when uniformly expanding).
    pub fn alpha(&self) -> Option<f64> {
        self.points.iter().find_map(|p| p.alpha)
    }

    /// `Y_{n,r} = f_k⁻¹(X_{n−1,s})` for `n ≥ 2`; `None` when empty.
    pub fn feeder_cell(&self, feeder: usize, n: usize) -> Result<Option<Interval>> {
        if n < 2 {
            return Err(Error::UnknownCell(format!("Y_{{{n},{feeder}}}: depth starts at 2")));
        }
        self.require(n - 1)?;
        let f = &self.feeders[feeder];
        let br = &self.map.branches[f.branch];
        let Some(part) = self.arms[f.arm].cell(n - 1).intersect(&br.range()) else {
            return Ok(None);
        };
        Ok(Some(Interval::new(br.inverse(part.lo)?, br.inverse(part.hi)?)))
    }

    /// `⋃_{j>n} Y_{j,r} = f_k⁻¹((ξ, x_n])`, the part of `Y` near `ζ` whose
    /// orbit enters the arm at depth `n` or deeper.
    pub fn feeder_beyond(&self, feeder: usize, n: usize) -> Result<Interval> {
        self.require(n)?;
        let f = &self.feeders[feeder];
        let br = &self.map.branches[f.branch];
        let range = br.range();
        let x = self.arms[f.arm].tail[n].clamp(range.lo, range.hi);
        Ok(Interval::new(f.zeta, br.inverse(x)?))
    }

    /// Tail sequence of one arm up to depth `n` (at least 10).
    pub fn tail_sequence(&self, arm: usize, n: usize) -> Result<TailTable> {
        if n < 10 {
            return Err(Error::param("depth", "tail tables need at least 10 entries"));
        }
        self.require(n)?;
        let a = self.arms.get(arm).ok_or_else(|| Error::UnknownCell(format!("arm {arm}")))?;
        let alpha = self.points[a.point].alpha.unwrap_or(1.0);
        let nf = n as f64;
        Ok(TailTable {
            arm,
            point: a.point,
            entries: a.tail[..=n].to_vec(),
            b_prime: a.dist(n) * nf.powf(alpha),
            b_second: (a.dist(n - 1) - a.dist(n)) * nf.powf(alpha + 1.0),
        })
    }

    /// First `n ≤ cap` with `fⁿ(x) ∈ Y`.
    pub fn first_hit(&self, x: f64, cap: usize) -> Result<usize> {
        let mut z = x;
        for n in 1..=cap {
            z = self.map.eval(z);
            if self.in_y(z) {
                return Ok(n);
            }
        }
        Err(Error::NotFound { cap })
    }

    /// Induced map `F(y) = f^τ(y)` together with `τ(y)`.
    pub fn induced_map(&self, y: f64, cap: usize) -> Result<(f64, usize)> {
        let mut z = y;
        for n in 1..=cap {
            z = self.map.eval(z);
            if self.in_y(z) {
                return Ok((z, n));
            }
        }
        Err(Error::NotFound { cap })
    }

    /// Lebesgue measure of a cell.
    pub fn cell_measure_leb(&self, id: CellId) -> Result<f64> {
        match id {
            CellId::Arm { arm, n } => {
                let a = self.arms.get(arm).ok_or_else(|| Error::UnknownCell(format!("arm {arm}")))?;
                if n == 0 {
                    return Err(Error::UnknownCell("X_0".into()));
                }
                self.require(n)?;
                Ok(a.cell(n).len())
            }
            CellId::Point { point, n } => {
                if point >= self.points.len() {
                    return Err(Error::UnknownCell(format!("fixed point {point}")));
                }
                let mut total = 0.0;
                for (s, a) in self.arms.iter().enumerate() {
                    if a.point == point {
                        total += self.cell_measure_leb(CellId::Arm { arm: s, n })?;
                    }
                }
                Ok(total)
            }
            CellId::Feeder { feeder, n } => {
                if feeder >= self.feeders.len() {
                    return Err(Error::UnknownCell(format!("feeder {feeder}")));
                }
                Ok(self.feeder_cell(feeder, n)?.map_or(0.0, |c| c.len()))
            }
        }
    }

    /// All cells up to depth `n` for export.
    pub fn cell_rows(&self, n: usize) -> Result<Vec<CellRow>> {
        self.require(n)?;
        let mut rows = Vec::new();
        for (s, a) in self.arms.iter().enumerate() {
            for k in 1..=n {
                let c = a.cell(k);
                rows.push(CellRow { kind: "X", n: k, index: s, left: c.lo, right: c.hi, leb: c.len() });
            }
        }
        for r in 0..self.feeders.len() {
            for k in 2..=n {
                if let Some(c) = self.feeder_cell(r, k)? {
                    rows.push(CellRow { kind: "Y", n: k, index: r, left: c.lo, right: c.hi, leb: c.len() });
                }
            }
        }
        Ok(rows)
    }
}
