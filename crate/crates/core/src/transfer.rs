//! Discretized transfer operator of the full map with respect to `μ`.
//!
//! The grid consists of the Ulam cells of `Y` (split where needed) and, in
//! each arm, the sub-cells `X_{n,s,i} = g^{-n}(C_i)` for `n ≤ N`. Since `g`
//! maps `X_{n,s,i}` onto `X_{n−1,s,i}`, trap columns are exact shifts; only
//! the columns of `Y` cells and of `X_1` need quadrature against `ĥ`.
//! Points of `Y` entering an arm deeper than `N` land in *truncated* cells,
//! whose columns are empty: that mass is absorbed and reported as leakage.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::density::{entry_preimage_mass, trap_subcells, DensityEstimate, SubcellMeasures};
use crate::error::{Error, Result};
use crate::inducing::InducingScheme;
use crate::maps::Interval;
use crate::sparse::Csr;

/// Position of a grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "region", rename_all = "snake_case")]
pub enum CellKind {
    Y,
    Trap { arm: usize, n: usize, sub: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct OpCell {
    pub kind: CellKind,
    pub interval: Interval,
    pub mu: f64,
    /// Absorbing cell of `Y` whose image lies beyond the trap depth.
    pub truncated: bool,
}

/// Settings of the operator discretization.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OperatorOptions {
    /// Trap depth `N`.
    pub depth: usize,
    /// Pullback sub-cells per trap cell.
    pub subcells: usize,
    /// Depth of the explicit preimage series for the `X_1 → Y` columns.
    pub entry_depth: usize,
    /// Largest tolerated fraction of `μ(Y)` absorbed per step.
    pub max_leak: f64,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        OperatorOptions { depth: 10_000, subcells: 1, entry_depth: 1000, max_leak: 1e-3 }
    }
}

/// Cells, `μ`-masses and the sparse matrix of mass fractions
/// `P[i][j] = μ(cell_j ∩ f⁻¹ cell_i)/μ(cell_j)`.
#[derive(Clone, Debug)]
pub struct OperatorGrid {
    pub cells: Vec<OpCell>,
    pub matrix: Csr,
    /// Cells `0..n_y` refine `Y` in increasing order.
    pub n_y: usize,
    pub options: OperatorOptions,
    trap_base: Vec<usize>,
    pub alpha: Option<f64>,
    /// Fraction of `μ(Y)` sitting in truncated cells.
    pub leak: f64,
    pub mu_y: f64,
    /// Largest deviation of a non-truncated column sum from one.
    pub column_defect: f64,
    pub subcells: SubcellMeasures,
}

impl OperatorGrid {
    pub fn trap_index(&self, arm: usize, n: usize, sub: usize) -> usize {
        self.trap_base[arm] + (n - 1) * self.options.subcells + sub
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Masses `μ_i` of all cells.
    pub fn masses(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.mu).collect()
    }

    /// Mass vector of `1_Y·μ`.
    pub fn indicator_y(&self) -> Vec<f64> {
        self.cells.iter().map(|c| if c.kind == CellKind::Y { c.mu } else { 0.0 }).collect()
    }

    fn y_cell_of(&self, x: f64) -> usize {
        let k = self.cells[..self.n_y].partition_point(|c| c.interval.lo <= x);
        k.saturating_sub(1)
    }
}

/// Normalizing sequence: `n^{1−α}` for `α < 1`, `log n` for `α = 1`, and 1
/// where that is undefined or for uniformly expanding maps.
pub fn normalizer(alpha: Option<f64>, n: usize) -> f64 {
    match alpha {
        Some(a) if a < 1.0 && n >= 1 => (n as f64).powf(1.0 - a),
        Some(_) if n >= 2 => (n as f64).ln(),
        _ => 1.0,
    }
}

/// Builds the operator grid and matrix.
pub fn build_operator(scheme: &InducingScheme, dens: &DensityEstimate, opts: OperatorOptions) -> Result<OperatorGrid> {
    let n = opts.depth;
    if n < 2 {
        return Err(Error::param("depth", "trap depth must be at least 2"));
    }
    if opts.subcells == 0 {
        return Err(Error::param("subcells", "must be at least 1"));
    }
    let sub = trap_subcells(scheme, dens, n, opts.subcells)?;

    // Cells of Y: the density grid split at the truncation boundaries.
    let truncation: Vec<Interval> =
        (0..scheme.feeders.len()).map(|r| scheme.feeder_beyond(r, n + 1)).collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for i in 0..dens.grid.len() {
        let c = dens.grid.cell(i);
        let mut cuts: Vec<f64> = truncation
            .iter()
            .flat_map(|t| [t.lo, t.hi])
            .filter(|&x| x > c.lo && x < c.hi)
            .collect();
        cuts.sort_by(f64::total_cmp);
        let mut lo = c.lo;
        for x in cuts.into_iter().chain(std::iter::once(c.hi)) {
            let iv = Interval { lo, hi: x };
            let truncated = truncation.iter().any(|t| t.contains(iv.mid()));
            cells.push(OpCell { kind: CellKind::Y, interval: iv, mu: dens.integrate(iv), truncated });
            lo = x;
        }
    }
    let n_y = cells.len();
    let mut trap_base = Vec::with_capacity(scheme.arms.len());
    for s in 0..scheme.arms.len() {
        trap_base.push(cells.len());
        for k in 1..=n {
            for i in 0..opts.subcells {
                cells.push(OpCell {
                    kind: CellKind::Trap { arm: s, n: k, sub: i },
                    interval: sub.cell(s, k, i),
                    mu: sub.measure(s, k, i),
                    truncated: false,
                });
            }
        }
    }
    let mu_y: f64 = cells[..n_y].iter().map(|c| c.mu).sum();
    let leak = cells[..n_y].iter().filter(|c| c.truncated).fold(0.0, |a, c| a + c.mu) / mu_y;
    if leak > opts.max_leak {
        return Err(Error::Leakage { leak, tolerance: opts.max_leak });
    }

    let mut grid = OperatorGrid {
        cells,
        matrix: Csr::default(),
        n_y,
        options: opts,
        trap_base,
        alpha: scheme.alpha(),
        leak,
        mu_y,
        column_defect: 0.0,
        subcells: sub,
    };

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    // Trap shifts X_{n,s,i} -> X_{n-1,s,i}.
    for s in 0..scheme.arms.len() {
        for k in 2..=n {
            for i in 0..opts.subcells {
                let j = grid.trap_index(s, k, i);
                if grid.cells[j].mu > 0.0 {
                    triplets.push((grid.trap_index(s, k - 1, i), j, 1.0));
                }
            }
        }
    }
    // X_1 -> Y.
    for s in 0..scheme.arms.len() {
        triplets.extend(entry_columns(scheme, dens, &grid, s)?);
    }
    // Y -> Y and Y -> traps.
    let y_cols: Vec<Vec<(usize, usize, f64)>> =
        (0..n_y).into_par_iter().map(|j| y_column(scheme, dens, &grid, j)).collect::<Result<_>>()?;
    for col in y_cols {
        triplets.extend(col);
    }

    let total = grid.cells.len();
    grid.matrix = Csr::from_triplets(total, total, triplets);
    let sums = grid.matrix.col_sums();
    grid.column_defect = grid
        .cells
        .iter()
        .zip(&sums)
        .filter(|(c, _)| !c.truncated && c.mu > 0.0)
        .map(|(_, s)| (s - 1.0).abs())
        .fold(0.0, f64::max);
    if grid.column_defect > 1e-6 {
        return Err(Error::Structural(format!(
            "operator columns are not stochastic: defect {:e}",
            grid.column_defect
        )));
    }
    Ok(grid)
}

/// Columns of the cells `X_{1,s,i}`, which `g` maps onto `C_i ⊂ Y`.
fn entry_columns(
    scheme: &InducingScheme,
    dens: &DensityEstimate,
    grid: &OperatorGrid,
    s: usize,
) -> Result<Vec<(usize, usize, f64)>> {
    let k_sub = grid.options.subcells;
    let sub = &grid.subcells;
    let mut pts: Vec<f64> = (0..=k_sub).map(|i| sub.bounds[s][i]).collect();
    let e = Interval::new(pts[0], pts[k_sub]);
    for c in &grid.cells[..grid.n_y] {
        for x in [c.interval.lo, c.interval.hi] {
            if x > e.lo && x < e.hi {
                pts.push(x);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let (sums, last) = entry_preimage_mass(scheme, dens, s, &pts, grid.options.entry_depth)?;

    let mut out = Vec::new();
    let mut l = 0;
    for i in 0..k_sub {
        let hi = sub.bounds[s][i + 1];
        let start = l;
        while l < sums.len() && pts[l + 1] <= hi {
            l += 1;
        }
        let total = sub.measure(s, 1, i);
        if total <= 0.0 {
            continue;
        }
        let explicit: f64 = sums[start..l].iter().sum();
        let shape: f64 = last[start..l].iter().sum();
        let j = grid.trap_index(s, 1, i);
        for q in start..l {
            let tail = if shape > 0.0 { (total - explicit) * last[q] / shape } else { 0.0 };
            let mass = sums[q] + tail;
            if mass > 0.0 {
                let target = grid.y_cell_of(0.5 * (pts[q] + pts[q + 1]));
                out.push((target, j, mass / total));
            }
        }
    }
    Ok(out)
}

/// Column of one cell of `Y`.
fn y_column(scheme: &InducingScheme, dens: &DensityEstimate, grid: &OperatorGrid, j: usize) -> Result<Vec<(usize, usize, f64)>> {
    let cell = &grid.cells[j];
    if cell.truncated || cell.mu <= 0.0 {
        return Ok(Vec::new());
    }
    let mut acc: HashMap<usize, f64> = HashMap::new();
    let k_sub = grid.options.subcells;
    for (k, br) in scheme.map.branches.iter().enumerate() {
        let Some(piece) = cell.interval.intersect(&br.domain) else { continue };
        let image = Interval::new(br.eval(piece.lo), br.eval(piece.hi));
        let mass_of = |a: f64, b: f64| -> Result<f64> {
            let pre = Interval::new(br.inverse(a)?, br.inverse(b)?);
            Ok(pre.intersect(&piece).map_or(0.0, |p| dens.integrate(p)))
        };
        for comp in &scheme.y {
            let Some(part) = image.intersect(comp) else { continue };
            let mut l = grid.y_cell_of(part.lo);
            while l < grid.n_y && grid.cells[l].interval.lo < part.hi {
                if let Some(o) = part.intersect(&grid.cells[l].interval) {
                    let m = mass_of(o.lo, o.hi)?;
                    if m > 0.0 {
                        *acc.entry(l).or_insert(0.0) += m;
                    }
                }
                l += 1;
            }
        }
        for f in scheme.feeders.iter().filter(|f| f.branch == k) {
            let arm = &scheme.arms[f.arm];
            let Some(part) = image.intersect(&arm.trap()) else { continue };
            let depth = grid.options.depth;
            // Cells meeting `part`, from shallow to deep.
            let near = if (part.lo - arm.xi).abs() < (part.hi - arm.xi).abs() { part.lo } else { part.hi };
            let far = if near == part.lo { part.hi } else { part.lo };
            let n_first = arm.locate(far).unwrap_or(1).max(1);
            let n_last = arm.locate(near).map_or(depth, |v| v.min(depth));
            for n in n_first..=n_last {
                for i in 0..k_sub {
                    let t = grid.trap_index(f.arm, n, i);
                    if let Some(o) = part.intersect(&grid.cells[t].interval) {
                        let m = mass_of(o.lo, o.hi)?;
                        if m > 0.0 {
                            *acc.entry(t).or_insert(0.0) += m;
                        }
                    }
                }
            }
        }
    }
    let mut col: Vec<(usize, usize, f64)> = acc.into_iter().map(|(i, m)| (i, j, m / cell.mu)).collect();
    col.sort_by_key(|t| t.0);
    Ok(col)
}

/// Iterates `v_{n+1} = P̂ v_n` from `v_0 = 1_Y·μ` and calls `visit(n, v_n)`
/// for `n = 0..=n_max`.
pub fn evolve(op: &OperatorGrid, n_max: usize, mut visit: impl FnMut(usize, &[f64])) {
    let mut mass = op.indicator_y();
    let mut next = vec![0.0; mass.len()];
    for n in 0..=n_max {
        if n > 0 {
            op.matrix.matvec(&mass, &mut next);
            std::mem::swap(&mut mass, &mut next);
        }
        visit(n, &mass);
    }
}

/// Krickeberg profile `a_n·L^n 1_Y` on `Y`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct KrickebergProfile {
    pub alpha: Option<f64>,
    pub a: Vec<f64>,
    /// `μ`-average of `a_n·L^n 1_Y` over `Y`.
    pub k_hat: Vec<f64>,
    /// `(max − min)/K̂_n` over the non-truncated cells of `Y`.
    pub spread: Vec<f64>,
    /// Total mass still in the grid.
    pub retained: Vec<f64>,
    /// `(n, a_n·v_n on Y cells)` at the requested steps.
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

impl KrickebergProfile {
    /// Appends the statistics of `v_n`.
    pub fn record(&mut self, op: &OperatorGrid, n: usize, mass: &[f64], snapshot: bool) {
        let a = normalizer(op.alpha, n);
        let y_mass: f64 = mass[..op.n_y].iter().sum();
        let k_hat = a * y_mass / op.mu_y;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (c, m) in op.cells[..op.n_y].iter().zip(mass) {
            if !c.truncated && c.mu > 0.0 {
                let v = a * m / c.mu;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        self.alpha = op.alpha;
        self.a.push(a);
        self.k_hat.push(k_hat);
        self.spread.push(if k_hat > 0.0 { (hi - lo) / k_hat } else { f64::INFINITY });
        self.retained.push(mass.iter().sum());
        if snapshot {
            let snap = op.cells[..op.n_y].iter().zip(mass).map(|(c, m)| if c.mu > 0.0 { a * m / c.mu } else { 0.0 }).collect();
            self.snapshots.push((n, snap));
        }
    }
}

/// Profile of `v_n` for `n ≤ n_max`, with snapshots at the steps in `record`.
pub fn krickeberg_profile(op: &OperatorGrid, n_max: usize, record: &[usize]) -> KrickebergProfile {
    let mut prof = KrickebergProfile::default();
    evolve(op, n_max, |n, mass| prof.record(op, n, mass, record.contains(&n)));
    prof
}

/// Correlation sequence `c_n = ∫_Y g∘fⁿ dμ` with `a_n·c_n`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Correlation {
    pub c: Vec<f64>,
    pub scaled: Vec<f64>,
    /// Mass absorbed by truncation up to step `n`.
    pub absorbed: Vec<f64>,
}

impl Correlation {
    /// Appends `c_n = Σ_i g_i·(v_n)_i`.
    pub fn record(&mut self, op: &OperatorGrid, n: usize, g: &[f64], mass: &[f64]) {
        let c: f64 = g.iter().zip(mass).map(|(a, b)| a * b).sum();
        self.c.push(c);
        self.scaled.push(normalizer(op.alpha, n) * c);
        self.absorbed.push(op.mu_y - mass.iter().sum::<f64>());
    }
}

/// `c_n` for several observables given per grid cell, in one pass.
pub fn correlations(op: &OperatorGrid, gs: &[Vec<f64>], n_max: usize) -> Result<Vec<Correlation>> {
    if let Some(g) = gs.iter().find(|g| g.len() != op.len()) {
        return Err(Error::param("observable", format!("has {} values for {} cells", g.len(), op.len())));
    }
    let mut out = vec![Correlation::default(); gs.len()];
    evolve(op, n_max, |n, mass| {
        for (c, g) in out.iter_mut().zip(gs) {
            c.record(op, n, g, mass);
        }
    });
    Ok(out)
}

/// `c_n = Σ_i g_i·(L^n 1_Y)_i` for one observable given per grid cell.
pub fn correlation(op: &OperatorGrid, g: &[f64], n_max: usize) -> Result<Correlation> {
    Ok(correlations(op, std::slice::from_ref(&g.to_vec()), n_max)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizer_conventions() {
        assert_eq!(normalizer(Some(0.5), 0), 1.0);
        assert_eq!(normalizer(Some(0.5), 4), 2.0);
        assert_eq!(normalizer(Some(1.0), 1), 1.0);
        assert!((normalizer(Some(1.0), 100) - 100f64.ln()).abs() < 1e-15);
        assert_eq!(normalizer(None, 7), 1.0);
    }
}
