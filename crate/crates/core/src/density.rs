//! Invariant density on `Y` and its extension to the first-hit cells.
//!
//! The density of the induced map `F = f^τ` is estimated with Ulam's
//! method on a uniform grid of `Y`. Inverse branches of `F` are obtained by
//! pulling grid points of each entry interval back along the trapping
//! branch and then through the feeding branch, so no forward iteration
//! through the neutral region is needed. The measure `μ` (normalised by
//! `μ(Y) = 1`) is then pushed into the traps: `μ(X_{n,s})` equals the mass of
//! the points of `Y` that enter the arm at depth `n` or deeper.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inducing::{InducingScheme, Side};
use crate::maps::Interval;
use crate::sparse::Csr;

#[derive(Clone, Debug, Serialize)]
struct Component {
    lo: f64,
    hi: f64,
    width: f64,
    start: usize,
    count: usize,
}

/// Uniform grid on each component of `Y`.
#[derive(Clone, Debug, Serialize)]
pub struct YGrid {
    comps: Vec<Component>,
    len: usize,
}

impl YGrid {
    /// About `m` cells split over the components in proportion to length.
    pub fn new(y: &[Interval], m: usize) -> Self {
        let total: f64 = y.iter().map(Interval::len).sum();
        let mut comps = Vec::with_capacity(y.len());
        let mut start = 0;
        for c in y {
            let count = ((m as f64 * c.len() / total).round() as usize).max(1);
            comps.push(Component { lo: c.lo, hi: c.hi, width: c.len() / count as f64, start, count });
            start += count;
        }
        YGrid { comps, len: start }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn comp_of(&self, i: usize) -> &Component {
        let k = self.comps.partition_point(|c| c.start + c.count <= i);
        &self.comps[k]
    }

    pub fn cell(&self, i: usize) -> Interval {
        let c = self.comp_of(i);
        let k = i - c.start;
        let hi = if k + 1 == c.count { c.hi } else { c.lo + (k + 1) as f64 * c.width };
        Interval { lo: c.lo + k as f64 * c.width, hi }
    }

    pub fn width(&self, i: usize) -> f64 {
        self.cell(i).len()
    }

    fn local_index(c: &Component, x: f64) -> usize {
        (((x - c.lo) / c.width).floor().max(0.0) as usize).min(c.count - 1)
    }

    /// Cell holding `x` (grid points belong to the cell on their right).
    pub fn locate(&self, x: f64) -> Option<usize> {
        self.comps
            .iter()
            .find(|c| x >= c.lo && x <= c.hi)
            .map(|c| c.start + Self::local_index(c, x))
    }

    /// Grid points strictly inside `iv`.
    pub fn points_inside(&self, iv: Interval) -> Vec<f64> {
        let mut out = Vec::new();
        for c in &self.comps {
            for edge in [c.lo, c.hi] {
                if edge > iv.lo && edge < iv.hi {
                    out.push(edge);
                }
            }
            let Some(part) = iv.intersect(&Interval { lo: c.lo, hi: c.hi }) else { continue };
            let a = ((part.lo - c.lo) / c.width).floor() as usize + 1;
            for k in a..c.count {
                let x = c.lo + k as f64 * c.width;
                if x >= part.hi {
                    break;
                }
                if x > iv.lo {
                    out.push(x);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Calls `visit(cell, overlap)` for every cell meeting `iv`.
    fn overlaps(&self, iv: Interval, mut visit: impl FnMut(usize, f64)) {
        for c in &self.comps {
            let Some(part) = iv.intersect(&Interval { lo: c.lo, hi: c.hi }) else { continue };
            let (a, b) = (Self::local_index(c, part.lo), Self::local_index(c, part.hi));
            for k in a..=b {
                let lo = c.lo + k as f64 * c.width;
                let hi = if k + 1 == c.count { c.hi } else { lo + c.width };
                let o = part.hi.min(hi) - part.lo.max(lo);
                if o > 0.0 {
                    visit(c.start + k, o);
                }
            }
        }
    }
}

/// Extrapolated one-sided limit of the density at an accumulation point.
#[derive(Clone, Debug, Serialize)]
pub struct OneSidedLimit {
    pub zeta: f64,
    pub side: Side,
    pub value: f64,
}

/// Piecewise-constant invariant density of the induced map.
#[derive(Clone, Debug, Serialize)]
pub struct DensityEstimate {
    pub grid: YGrid,
    pub h: Vec<f64>,
    #[serde(skip)]
    prefix: Vec<f64>,
    /// `‖P_F ĥ − ĥ‖₁` at termination.
    pub residual: f64,
    pub iterations: usize,
    pub tau_cap: usize,
    /// Largest deviation of an Ulam column sum from one.
    pub column_defect: f64,
    pub limits: Vec<OneSidedLimit>,
}

/// Cells used for one-sided linear extrapolation.
pub const LIMIT_CELLS: usize = 8;

impl DensityEstimate {
    fn from_masses(grid: YGrid, masses: &[f64]) -> Self {
        let h: Vec<f64> = masses.iter().enumerate().map(|(i, m)| m / grid.width(i)).collect();
        let mut prefix = Vec::with_capacity(masses.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for m in masses {
            acc += m;
            prefix.push(acc);
        }
        DensityEstimate {
            grid,
            h,
            prefix,
            residual: 0.0,
            iterations: 0,
            tau_cap: 0,
            column_defect: 0.0,
            limits: Vec::new(),
        }
    }

    /// `μ(iv ∩ Y) = ∫ ĥ dLeb`.
    pub fn integrate(&self, iv: Interval) -> f64 {
        let mut total = 0.0;
        for c in &self.grid.comps {
            let Some(part) = iv.intersect(&Interval { lo: c.lo, hi: c.hi }) else { continue };
            let (a, b) = (YGrid::local_index(c, part.lo), YGrid::local_index(c, part.hi));
            let (ia, ib) = (c.start + a, c.start + b);
            if a == b {
                total += self.h[ia] * part.len();
            } else {
                let a_hi = c.lo + (a + 1) as f64 * c.width;
                let b_lo = c.lo + b as f64 * c.width;
                total += self.h[ia] * (a_hi - part.lo)
                    + (self.prefix[ib] - self.prefix[ia + 1])
                    + self.h[ib] * (part.hi - b_lo);
            }
        }
        total
    }

    /// Mass of grid cell `i`.
    pub fn cell_mass(&self, i: usize) -> f64 {
        self.prefix[i + 1] - self.prefix[i]
    }

    /// Least-squares line through the `k` cells adjacent to `zeta` on `side`.
    fn side_fit(&self, zeta: f64, side: Side, k: usize) -> Result<(f64, f64, usize)> {
        let comp = self
            .grid
            .comps
            .iter()
            .find(|c| zeta >= c.lo - 1e-12 && zeta <= c.hi + 1e-12)
            .ok_or(Error::NotAdjacent(zeta))?;
        let pos = (zeta - comp.lo) / comp.width;
        let idx: Vec<usize> = match side {
            Side::Right => {
                let first = (pos - 1e-9).ceil().max(0.0) as usize;
                (first..(first + k).min(comp.count)).collect()
            }
            Side::Left => {
                let end = ((pos + 1e-9).floor().max(0.0) as usize).min(comp.count);
                (end.saturating_sub(k)..end).rev().collect()
            }
        };
        if idx.is_empty() {
            return Err(Error::NotAdjacent(zeta));
        }
        let pts: Vec<(f64, f64)> = idx.iter().map(|&i| (self.grid.cell(comp.start + i).mid(), self.h[comp.start + i])).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        Ok((my - slope * mx, slope, comp.start + idx[0]))
    }

    /// Limit of `ĥ` at `zeta` from `side`, by linear extrapolation over `k` cells.
    pub fn one_sided_limit(&self, zeta: f64, side: Side, k: usize) -> Result<f64> {
        let (a, b, _) = self.side_fit(zeta, side, k.max(1))?;
        Ok(a + b * zeta)
    }

    /// Point value of `ĥ`: linear interpolation between cell centres.
    pub fn eval(&self, x: f64) -> f64 {
        let Some(i) = self.grid.locate(x) else { return 0.0 };
        let c = self.grid.comp_of(i);
        let t = (x - c.lo) / c.width - 0.5;
        let k = t.floor();
        if k < 0.0 || k as usize + 1 >= c.count {
            return self.h[i];
        }
        let k = k as usize;
        let w = t - k as f64;
        (1.0 - w) * self.h[c.start + k] + w * self.h[c.start + k + 1]
    }

    /// Point value near an accumulation point, using only cells on `side`
    /// and the extrapolated limit between `zeta` and the first centre.
    pub fn eval_near(&self, x: f64, zeta: f64, side: Side) -> f64 {
        match self.side_fit(zeta, side, LIMIT_CELLS) {
            Ok((a, b, first)) => {
                let centre = self.grid.cell(first).mid();
                let inside = match side {
                    Side::Right => x <= centre,
                    Side::Left => x >= centre,
                };
                if inside {
                    a + b * x
                } else {
                    self.eval(x)
                }
            }
            Err(_) => self.eval(x),
        }
    }
}

/// Accumulates Lebesgue-fraction Ulam columns.
struct UlamColumns<'a> {
    grid: &'a YGrid,
    cols: Vec<HashMap<usize, f64>>,
}

impl UlamColumns<'_> {
    /// Sends the source interval `src` to target cell `target`.
    fn add(&mut self, src: Interval, target: usize) {
        self.add_weighted(src, target, 1.0);
    }

    fn add_weighted(&mut self, src: Interval, target: usize, weight: f64) {
        let grid = self.grid;
        let cols = &mut self.cols;
        grid.overlaps(src, |j, o| {
            *cols[j].entry(target).or_insert(0.0) += weight * o / grid.width(j);
        });
    }
}

/// Target pieces of an interval of `Y`: consecutive grid points with the
/// cell each piece belongs to.
fn target_pieces(grid: &YGrid, iv: Interval) -> (Vec<f64>, Vec<usize>) {
    let mut pts = vec![iv.lo];
    pts.extend(grid.points_inside(iv));
    pts.push(iv.hi);
    let targets = pts.windows(2).map(|w| grid.locate(0.5 * (w[0] + w[1])).unwrap_or(0)).collect();
    (pts, targets)
}

/// Applies the inverse of one branch to points clipped into its range.
fn pull_through(scheme: &InducingScheme, branch: usize, pts: &[f64]) -> Result<Vec<f64>> {
    let br = &scheme.map.branches[branch];
    let range = br.range();
    pts.par_iter().map(|&w| br.inverse(w.clamp(range.lo, range.hi))).collect()
}

/// Ulam estimate of the invariant density of the induced map on `m` cells.
///
/// Branches of `F` with return time above `tau_cap` are lumped: their
/// domain is sent to `Y` with the image profile of the deepest explicit
/// branch.
pub fn ulam_induced(scheme: &InducingScheme, m: usize, tau_cap: usize) -> Result<DensityEstimate> {
    if m < 100 {
        return Err(Error::param("ulam_cells", format!("{m} is below the minimum of 100")));
    }
    if tau_cap < 2 {
        return Err(Error::param("tau_cap", "must be at least 2"));
    }
    if scheme.depth() < tau_cap {
        return Err(Error::DepthExceeded { requested: tau_cap, available: scheme.depth() });
    }
    let grid = YGrid::new(&scheme.y, m);
    let mut acc = UlamColumns { grid: &grid, cols: vec![HashMap::new(); grid.len()] };

    for piece in &scheme.direct {
        let br = &scheme.map.branches[piece.branch];
        let image = Interval::new(br.eval(piece.domain.lo), br.eval(piece.domain.hi));
        let (pts, targets) = target_pieces(&grid, image);
        let pre = pull_through(scheme, piece.branch, &pts)?;
        for (i, &t) in targets.iter().enumerate() {
            if let Some(src) = Interval::new(pre[i], pre[i + 1]).intersect(&piece.domain) {
                acc.add(src, t);
            }
        }
    }

    for (s, arm) in scheme.arms.iter().enumerate() {
        let g = &scheme.map.branches[arm.branch];
        let feeders: Vec<usize> = (0..scheme.feeders.len()).filter(|&r| scheme.feeders[r].arm == s).collect();
        let (mut orbit, targets) = target_pieces(&grid, arm.entry());
        let mut shapes = vec![vec![0.0; targets.len()]; feeders.len()];
        // orbit holds g^{-t}(z) for the entry grid points z; depth n = t + 1.
        for t in 1..tau_cap {
            orbit = orbit.par_iter().map(|&w| g.inverse(w)).collect::<Result<_>>()?;
            for (fi, &r) in feeders.iter().enumerate() {
                let pre = pull_through(scheme, scheme.feeders[r].branch, &orbit)?;
                for (i, &target) in targets.iter().enumerate() {
                    let src = Interval::new(pre[i], pre[i + 1]);
                    if src.len() > 0.0 {
                        acc.add(src, target);
                    }
                    if t + 1 == tau_cap {
                        shapes[fi][i] = src.len();
                    }
                }
            }
        }
        for (fi, &r) in feeders.iter().enumerate() {
            let lumped = scheme.feeder_beyond(r, tau_cap)?;
            let total: f64 = shapes[fi].iter().sum();
            if lumped.len() <= 0.0 || total <= 0.0 {
                continue;
            }
            for (i, &target) in targets.iter().enumerate() {
                if shapes[fi][i] > 0.0 {
                    acc.add_weighted(lumped, target, shapes[fi][i] / total);
                }
            }
        }
    }

    let n = grid.len();
    let matrix = Csr::from_columns(n, &acc.cols);
    let column_defect = matrix.col_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    if column_defect > 1e-6 {
        return Err(Error::Structural(format!(
            "induced branches do not tile Y: Ulam column sums deviate from 1 by {column_defect:e}"
        )));
    }
    let (masses, residual, iterations) = stationary(&matrix, &grid)?;
    let mut dens = DensityEstimate::from_masses(grid, &masses);
    dens.residual = residual;
    dens.iterations = iterations;
    dens.tau_cap = tau_cap;
    dens.column_defect = column_defect;
    for f in &scheme.feeders {
        let value = dens.one_sided_limit(f.zeta, f.side, LIMIT_CELLS)?;
        dens.limits.push(OneSidedLimit { zeta: f.zeta, side: f.side, value });
    }
    Ok(dens)
}

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 100_000;

/// Fixed point of a column-stochastic matrix by power iteration.
fn stationary(matrix: &Csr, grid: &YGrid) -> Result<(Vec<f64>, f64, usize)> {
    let n = grid.len();
    let total: f64 = (0..n).map(|i| grid.width(i)).sum();
    let mut p: Vec<f64> = (0..n).map(|i| grid.width(i) / total).collect();
    let mut q = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_MAX_ITER {
        matrix.matvec(&p, &mut q);
        let s: f64 = q.iter().sum();
        residual = p.iter().zip(&q).map(|(a, b)| (a - b / s).abs()).sum();
        for (a, b) in p.iter_mut().zip(&q) {
            *a = b / s;
        }
        if residual < POWER_TOL {
            return Ok((p, residual, it));
        }
    }
    Err(Error::NoConvergence { iterations: POWER_MAX_ITER, residual })
}

/// Measures of the first-hit cells up to a depth.
#[derive(Clone, Debug, Serialize)]
pub struct CellMeasures {
    pub depth: usize,
    /// `μ(X_{n,s})` per arm, indexed by `n` (entry 0 unused).
    pub arm_x: Vec<Vec<f64>>,
    /// `μ(Y_{n,r})` per feeder for `n ≤ depth + 1` (entries 0 and 1 unused).
    pub feeder_y: Vec<Vec<f64>>,
    /// `μ(⋃_{j > depth+1} Y_{j,r})` per feeder.
    pub remainder: Vec<f64>,
    /// `μ(Y_1)`: the part of `Y` returning in one step.
    pub mu_y1: f64,
    /// `μ(Y)` (one up to rounding).
    pub mu_y: f64,
}

impl CellMeasures {
    /// `μ(X_{n,p})` summed over the arms of a fixed point.
    pub fn point_x(&self, scheme: &InducingScheme, point: usize, n: usize) -> f64 {
        scheme.arms.iter().enumerate().filter(|(_, a)| a.point == point).map(|(s, _)| self.arm_x[s][n]).sum()
    }

    /// `μ(X_1)` over all arms.
    pub fn mu_x1(&self) -> f64 {
        self.arm_x.iter().map(|v| v[1]).sum()
    }
}

/// Pushes `μ` from `Y` into the traps up to depth `n` (scheme depth ≥ n + 1).
pub fn extend_measure(scheme: &InducingScheme, dens: &DensityEstimate, n: usize) -> Result<CellMeasures> {
    if scheme.depth() < n + 1 {
        return Err(Error::DepthExceeded { requested: n + 1, available: scheme.depth() });
    }
    let nf = scheme.feeders.len();
    let beyond: Vec<Vec<f64>> = (0..nf)
        .into_par_iter()
        .map(|r| (0..=n + 1).map(|k| if k == 0 { Ok(0.0) } else { scheme.feeder_beyond(r, k).map(|iv| dens.integrate(iv)) }).collect())
        .collect::<Result<_>>()?;
    let feeder_y: Vec<Vec<f64>> = (0..nf)
        .into_par_iter()
        .map(|r| {
            let mut v = vec![0.0; n + 2];
            for (k, slot) in v.iter_mut().enumerate().skip(2) {
                *slot = scheme.feeder_cell(r, k)?.map_or(0.0, |c| dens.integrate(c));
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let mut arm_x = vec![vec![0.0; n + 1]; scheme.arms.len()];
    for (r, f) in scheme.feeders.iter().enumerate() {
        for k in 1..=n {
            arm_x[f.arm][k] += beyond[r][k];
        }
    }
    let remainder = beyond.iter().map(|b| b[n + 1]).collect();
    let mu_y1 = scheme.direct.iter().map(|d| dens.integrate(d.domain)).sum();
    let mu_y = scheme.y.iter().map(|c| dens.integrate(*c)).sum();
    Ok(CellMeasures { depth: n, arm_x, feeder_y, remainder, mu_y1, mu_y })
}

/// Measures of the sub-cells `g^{-n}(C_i)` obtained by splitting each
/// entry interval into `k_sub` equal parts `C_i`.
#[derive(Clone, Debug)]
pub struct SubcellMeasures {
    pub k_sub: usize,
    pub depth: usize,
    /// Per arm: boundaries `g^{-n}(c_i)`, flat index `n·(k_sub+1) + i`, `n ≤ depth`.
    pub bounds: Vec<Vec<f64>>,
    /// Per arm: `μ(X_{n,s,i})`, flat index `(n−1)·k_sub + i`.
    pub mu: Vec<Vec<f64>>,
}

impl SubcellMeasures {
    pub fn cell(&self, arm: usize, n: usize, i: usize) -> Interval {
        let b = &self.bounds[arm];
        let w = self.k_sub + 1;
        Interval::new(b[n * w + i], b[n * w + i + 1])
    }

    pub fn measure(&self, arm: usize, n: usize, i: usize) -> f64 {
        self.mu[arm][(n - 1) * self.k_sub + i]
    }
}

/// Sums `Σ_r μ(f_r⁻¹(between a and b))` over the feeders of an arm.
fn feeder_mass(scheme: &InducingScheme, dens: &DensityEstimate, feeders: &[usize], a: f64, b: f64) -> Result<f64> {
    let mut total = 0.0;
    for &r in feeders {
        let br = &scheme.map.branches[scheme.feeders[r].branch];
        let range = br.range();
        let (ca, cb) = (a.clamp(range.lo, range.hi), b.clamp(range.lo, range.hi));
        if ca != cb {
            total += dens.integrate(Interval::new(br.inverse(ca)?, br.inverse(cb)?));
        }
    }
    Ok(total)
}

pub(crate) fn arm_feeders(scheme: &InducingScheme, arm: usize) -> Vec<usize> {
    (0..scheme.feeders.len()).filter(|&r| scheme.feeders[r].arm == arm).collect()
}

/// Sub-cell measures up to depth `n`, with the mass beyond `n` assigned by
/// the sub-cell profile at depth `n` so that every `μ(X_{n,s})` is exact.
pub fn trap_subcells(scheme: &InducingScheme, dens: &DensityEstimate, n: usize, k_sub: usize) -> Result<SubcellMeasures> {
    if k_sub == 0 {
        return Err(Error::param("subcells", "must be at least 1"));
    }
    if scheme.depth() < n + 1 {
        return Err(Error::DepthExceeded { requested: n + 1, available: scheme.depth() });
    }
    let w = k_sub + 1;
    let results: Vec<(Vec<f64>, Vec<f64>)> = (0..scheme.arms.len())
        .into_par_iter()
        .map(|s| {
            let arm = &scheme.arms[s];
            let g = &scheme.map.branches[arm.branch];
            let feeders = arm_feeders(scheme, s);
            let e = arm.entry();
            let mut bounds = Vec::with_capacity((n + 1) * w);
            bounds.extend((0..w).map(|i| if i == k_sub { e.hi } else { e.lo + e.len() * i as f64 / k_sub as f64 }));
            // Orientation: sub-cell i of E is [c_i, c_{i+1}] with c increasing.
            for k in 1..=n {
                for i in 0..w {
                    let prev = bounds[(k - 1) * w + i];
                    bounds.push(g.inverse(prev)?);
                }
            }
            let mut layer = vec![0.0; n * k_sub];
            for k in 1..=n {
                for i in 0..k_sub {
                    layer[(k - 1) * k_sub + i] =
                        feeder_mass(scheme, dens, &feeders, bounds[k * w + i], bounds[k * w + i + 1])?;
                }
            }
            let mut remainder = 0.0;
            for &r in &feeders {
                remainder += dens.integrate(scheme.feeder_beyond(r, n + 1)?);
            }
            let last: Vec<f64> = layer[(n - 1) * k_sub..].to_vec();
            let last_total: f64 = last.iter().sum();
            let mut mu = vec![0.0; n * k_sub];
            let mut acc: Vec<f64> = last
                .iter()
                .map(|v| if last_total > 0.0 { remainder * v / last_total } else { remainder / k_sub as f64 })
                .collect();
            for k in (1..=n).rev() {
                for i in 0..k_sub {
                    acc[i] += layer[(k - 1) * k_sub + i];
                    mu[(k - 1) * k_sub + i] = acc[i];
                }
            }
            Ok((bounds, mu))
        })
        .collect::<Result<_>>()?;
    let (bounds, mu) = results.into_iter().unzip();
    Ok(SubcellMeasures { k_sub, depth: n, bounds, mu })
}

/// For consecutive points `z_0 < … < z_L` of an arm's entry interval,
/// returns per piece `[z_l, z_{l+1}]` the truncated sum
/// `Σ_{k=1}^{depth} Σ_r μ(f_r⁻¹ g^{-k}[z_l, z_{l+1}])` and the last term
/// (used to distribute the remainder).
pub fn entry_preimage_mass(
    scheme: &InducingScheme,
    dens: &DensityEstimate,
    arm: usize,
    points: &[f64],
    depth: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = &scheme.map.branches[scheme.arms[arm].branch];
    let feeders = arm_feeders(scheme, arm);
    let pieces = points.len().saturating_sub(1);
    let mut sums = vec![0.0; pieces];
    let mut last = vec![0.0; pieces];
    let mut orbit = points.to_vec();
    for k in 1..=depth {
        orbit = orbit.par_iter().map(|&w| g.inverse(w)).collect::<Result<_>>()?;
        let mut layer = vec![0.0; pieces];
        for &r in &feeders {
            let pre = pull_through(scheme, scheme.feeders[r].branch, &orbit)?;
            for l in 0..pieces {
                layer[l] += dens.integrate(Interval::new(pre[l], pre[l + 1]));
            }
        }
        for l in 0..pieces {
            sums[l] += layer[l];
        }
        if k == depth {
            last = layer;
        }
    }
    Ok((sums, last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inducing::build_scheme;
    use crate::maps::{make_family, Family};

    fn scheme(f: Family, depth: usize) -> InducingScheme {
        let mut s = build_scheme(make_family(f).unwrap()).unwrap();
        s.ensure_depth(depth).unwrap();
        s
    }

    #[test]
    fn grid_points_and_locate() {
        let g = YGrid::new(&[Interval { lo: 0.5, hi: 1.0 }], 100);
        assert_eq!(g.len(), 100);
        assert_eq!(g.locate(0.5), Some(0));
        assert_eq!(g.locate(1.0), Some(99));
        let pts = g.points_inside(Interval { lo: 0.5, hi: 0.53 });
        assert_eq!(pts.len(), 5);
    }

    #[test]
    fn linear_family_has_constant_density() {
        let s = scheme(Family::QbranchLinear { cuts: vec![0.5, 0.75] }, 200);
        let d = ulam_induced(&s, 256, 60).unwrap();
        for &h in &d.h {
            assert!((h - 2.0).abs() < 1e-9, "h = {h}");
        }
        assert!((d.one_sided_limit(0.75, Side::Right, 8).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn integrate_is_additive() {
        let s = scheme(Family::Lsv { alpha: 0.5 }, 300);
        let d = ulam_induced(&s, 512, 200).unwrap();
        let a = d.integrate(Interval { lo: 0.51, hi: 0.7 });
        let b = d.integrate(Interval { lo: 0.7, hi: 0.93 });
        let c = d.integrate(Interval { lo: 0.51, hi: 0.93 });
        assert!((a + b - c).abs() < 1e-14);
        assert!((d.integrate(Interval { lo: 0.0, hi: 1.0 }) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subcells_sum_to_cell_measures() {
        let s = scheme(Family::Lsv { alpha: 0.5 }, 300);
        let d = ulam_induced(&s, 512, 200).unwrap();
        let cm = extend_measure(&s, &d, 100).unwrap();
        let sc = trap_subcells(&s, &d, 100, 3).unwrap();
        for n in [1, 10, 100] {
            let tot: f64 = (0..3).map(|i| sc.measure(0, n, i)).sum();
            assert!((tot / cm.arm_x[0][n] - 1.0).abs() < 1e-9);
        }
    }
}
