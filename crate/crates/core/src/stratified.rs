//! The limiting problem on the flat stratification {0} ∪ M₁ ∪ M₂ and the
//! unstratified baseline `αu + H̄(x, Du) = 0`.
//!
//! Cases 1 and 3 use a semi-Lagrangian scheme: background controls at every
//! node, tangential moves along M₁ drawn from the Legendre transform of the
//! tabulated H̄₁,T, and a stay-put move at the origin costing −E per unit
//! time. Case 2 has no control form for H̄ and uses a monotone
//! Lax–Friedrichs iteration on the torus table instead.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::EffectiveTables;
use crate::control::{hamiltonian, local_controls};
use crate::error::{Error, Result};
use crate::scenario::{validate_assumptions, Branch, CaseTag, Scenario, StepRule};
use crate::sl::{
    apply_bellman, solve_discounted, Candidate, DiscountedProblem, GridSpec, SolveOptions, Stencil, Transitions, ValueField,
};

/// Tags of scheme-specific candidates; background controls keep their index.
pub const TAG_TANGENTIAL: u32 = 1 << 20;
pub const TAG_ORIGIN: u32 = 1 << 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    SemiLagrangian,
    LaxFriedrichs,
}

/// Stratum of a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeClass {
    Plane,
    Line(Branch),
    Origin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectiveOptions {
    pub step: StepRule,
    pub m_f: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl EffectiveOptions {
    pub fn from_scenario(scn: &Scenario) -> Self {
        let s = &scn.schedules;
        EffectiveOptions { step: s.sl_step, m_f: validate_assumptions(scn, 256).m_f, tol: s.tol_solve, max_iter: s.max_iter }
    }
}

/// Box grid of the effective problem from the scenario schedules.
pub fn effective_grid(scn: &Scenario) -> Result<GridSpec> {
    GridSpec::square(scn.schedules.box_half_width, scn.schedules.grid_h)
}

/// Tangential dynamics `(v, L(v))` whose Hamiltonian `max_v(−p v − L)` is
/// the convex piecewise-linear interpolant of `(p_k, H_k)`, plus `v = 0`.
pub fn legendre_candidates(p: &[f64], h: &[f64]) -> Vec<(f64, f64)> {
    let mut hull: Vec<usize> = Vec::new();
    for k in 0..p.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (p[b] - p[a]) * (h[k] - h[a]) - (h[b] - h[a]) * (p[k] - p[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    let mut out: Vec<(f64, f64)> = hull
        .windows(2)
        .map(|w| {
            let s = (h[w[1]] - h[w[0]]) / (p[w[1]] - p[w[0]]);
            let v = -s;
            (v, -v * p[w[0]] - h[w[0]])
        })
        .collect();
    let min = h.iter().cloned().fold(f64::INFINITY, f64::min);
    out.push((0.0, -min));
    out
}

/// Discretization of the effective (or baseline) problem on a box grid.
#[derive(Debug, Clone)]
pub struct StratifiedScheme {
    pub grid: GridSpec,
    pub kind: SchemeKind,
    pub stratified: bool,
    pub alpha: f64,
    /// SL time step, or LF pseudo-time step.
    pub delta: f64,
    pub classes: Vec<NodeClass>,
    pub origin: usize,
    /// E, when the origin rule is active.
    pub e: Option<f64>,
    trans: Option<Arc<Transitions>>,
    lf: Option<LfData>,
}

#[derive(Debug, Clone)]
struct LfData {
    sigma: f64,
    tables: EffectiveTables,
}

/// Candidate values at one node, grouped as in the junction rule. Groups
/// that do not apply are `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JunctionUpdate {
    pub tangential: f64,
    /// Background moves into the upper half plane (the H↓ side).
    pub upper: f64,
    /// Background moves into the lower half plane (the H↑ side).
    pub lower: f64,
    pub origin: f64,
    pub value: f64,
}

fn classify_nodes(scn: &Scenario, grid: &GridSpec) -> Result<(Vec<NodeClass>, usize)> {
    let origin = grid
        .node_at([0.0, 0.0])
        .ok_or_else(|| Error::Grid("the origin must be a grid node".into()))?;
    let (_, j0) = grid.ij(origin);
    let classes = (0..grid.len())
        .map(|n| {
            let j = grid.ij(n).1;
            let x1 = grid.coords(n)[0];
            if n == origin {
                NodeClass::Origin
            } else if j != j0 || !grid.active(n) {
                NodeClass::Plane
            } else {
                match (scn.case, x1 < 0.0) {
                    (CaseTag::Case1 | CaseTag::Case2, true) => NodeClass::Line(Branch::Single),
                    (CaseTag::Case3, true) => NodeClass::Line(Branch::Minus),
                    (CaseTag::Case3, false) => NodeClass::Line(Branch::Plus),
                    _ => NodeClass::Plane,
                }
            }
        })
        .collect();
    Ok((classes, origin))
}

fn check_grid(grid: &GridSpec) -> Result<()> {
    match grid.kind {
        crate::sl::DomainKind::Box { .. } => Ok(()),
        _ => Err(Error::Grid("the effective problem lives on a box grid".into())),
    }
}

fn background_candidates(
    scn: &Scenario,
    grid: &GridSpec,
    delta: f64,
    n: usize,
    out: &mut Vec<Candidate>,
    disp: &mut Vec<[f64; 2]>,
) -> Result<()> {
    let x = grid.coords(n);
    let mut local = Vec::with_capacity(scn.n_controls());
    local_controls(scn, &scn.background, x, [0.0, 0.0], &mut local)?;
    for (k, &(f, l)) in local.iter().enumerate() {
        let d = [delta * f[0], delta * f[1]];
        if let Some(stencil) = grid.stencil([x[0] + d[0], x[1] + d[1]]) {
            out.push(Candidate { cost: delta * l, stencil, dt: delta, tag: k as u32 });
            disp.push(d);
        }
    }
    Ok(())
}

/// Tangential moves of branch `b` from the line point `x1`. Moves crossing
/// the origin stop there after the exact crossing time.
#[allow(clippy::too_many_arguments)]
fn tangential_candidates(
    tables: &EffectiveTables,
    grid: &GridSpec,
    delta: f64,
    b: Branch,
    x1: f64,
    origin: usize,
    outward_only: bool,
    out: &mut Vec<Candidate>,
    disp: &mut Vec<[f64; 2]>,
) -> Result<()> {
    let row: Vec<f64> = tables.p1_grid.iter().map(|&p| tables.tangential(b, x1, p)).collect::<Result<_>>()?;
    let side = if b == Branch::Plus { 1.0 } else { -1.0 };
    for (k, (v, l)) in legendre_candidates(&tables.p1_grid, &row).into_iter().enumerate() {
        if outward_only && v * side <= 0.0 {
            continue;
        }
        let mut dt = delta;
        let mut foot = x1 + dt * v;
        let stencil = if foot * side <= 0.0 && v != 0.0 {
            dt = (x1 / v).abs();
            foot = 0.0;
            Some(Stencil::single(origin))
        } else {
            grid.stencil([foot, 0.0])
        };
        if let Some(stencil) = stencil {
            out.push(Candidate { cost: dt * l, stencil, dt, tag: TAG_TANGENTIAL + k as u32 });
            disp.push([foot - x1, 0.0]);
        }
    }
    Ok(())
}

impl StratifiedScheme {
    /// Semi-Lagrangian scheme (cases 1 and 3). Without tables it is the
    /// unstratified baseline.
    pub fn semi_lagrangian(scn: &Scenario, tables: Option<&EffectiveTables>, grid: &GridSpec, opts: &EffectiveOptions) -> Result<Self> {
        check_grid(grid)?;
        if scn.case == CaseTag::Case2 {
            return Err(Error::Regime("case2 has no control form for the effective Hamiltonian".into()));
        }
        let (classes, origin) = classify_nodes(scn, grid)?;
        let delta = opts.step.delta(grid.h, opts.m_f);
        let trans = Transitions::from_fn(grid, |n, out, disp| {
            background_candidates(scn, grid, delta, n, out, disp)?;
            if let Some(t) = tables {
                let x1 = grid.coords(n)[0];
                match classes[n] {
                    NodeClass::Plane => {}
                    NodeClass::Line(b) => tangential_candidates(t, grid, delta, b, x1, origin, false, out, disp)?,
                    NodeClass::Origin => {
                        for b in scn.branches() {
                            tangential_candidates(t, grid, delta, b, 0.0, origin, true, out, disp)?;
                        }
                        out.push(Candidate { cost: -t.e * delta, stencil: Stencil::single(origin), dt: delta, tag: TAG_ORIGIN });
                        disp.push([0.0, 0.0]);
                    }
                }
            }
            if out.is_empty() {
                let x = grid.coords(n);
                return Err(Error::NoAdmissibleControl { node: n, x: x[0], y: x[1], delta });
            }
            Ok(())
        })?;
        Ok(StratifiedScheme {
            grid: grid.clone(),
            kind: SchemeKind::SemiLagrangian,
            stratified: tables.is_some(),
            alpha: scn.alpha,
            delta,
            classes,
            origin,
            e: tables.map(|t| t.e),
            trans: Some(Arc::new(trans)),
            lf: None,
        })
    }

    /// Lax–Friedrichs scheme on the tabulated torus H̄ (case 2).
    pub fn lax_friedrichs(scn: &Scenario, tables: &EffectiveTables, grid: &GridSpec, opts: &EffectiveOptions, stratified: bool) -> Result<Self> {
        check_grid(grid)?;
        if tables.torus.is_none() {
            return Err(Error::Scenario("Lax–Friedrichs scheme needs the torus table".into()));
        }
        let (classes, origin) = classify_nodes(scn, grid)?;
        let sigma = opts.m_f;
        let delta = 1.0 / (scn.alpha + 2.0 * sigma / grid.h);
        Ok(StratifiedScheme {
            grid: grid.clone(),
            kind: SchemeKind::LaxFriedrichs,
            stratified,
            alpha: scn.alpha,
            delta,
            classes,
            origin,
            e: stratified.then_some(tables.e),
            trans: None,
            lf: Some(LfData { sigma, tables: tables.clone() }),
        })
    }

    /// The scheme matching the scenario's case.
    pub fn new(scn: &Scenario, tables: &EffectiveTables, grid: &GridSpec, opts: &EffectiveOptions, stratified: bool) -> Result<Self> {
        match scn.case {
            CaseTag::Case2 => Self::lax_friedrichs(scn, tables, grid, opts, stratified),
            _ => Self::semi_lagrangian(scn, stratified.then_some(tables), grid, opts),
        }
    }

    pub fn transitions(&self) -> Option<&Transitions> {
        self.trans.as_deref()
    }

    fn sl_problem(&self) -> Result<DiscountedProblem> {
        let trans = self.trans.clone().expect("semi-Lagrangian scheme");
        DiscountedProblem::new(self.grid.clone(), self.delta, self.alpha, trans)
    }

    fn line_nodes(&self) -> impl Iterator<Item = (usize, Branch)> + '_ {
        self.classes.iter().enumerate().filter_map(|(n, c)| match c {
            NodeClass::Line(b) => Some((n, *b)),
            _ => None,
        })
    }
}

/// Neighbour values `[west, east, south, north]`; a missing neighbour on the
/// box boundary copies the centre value, which keeps the LF update monotone.
#[inline]
fn neighbours(grid: &GridSpec, u: &[f64], n: usize) -> [f64; 4] {
    let (i, j) = grid.ij(n);
    let c = u[n];
    let get = |ii: usize, jj: usize| u[grid.index(ii, jj)];
    [
        if i > 0 { get(i - 1, j) } else { c },
        if i + 1 < grid.nx { get(i + 1, j) } else { c },
        if j > 0 { get(i, j - 1) } else { c },
        if j + 1 < grid.ny { get(i, j + 1) } else { c },
    ]
}

/// Torus envelopes `(H↓, H↑)` at `(p1, q)` from the bilinear table.
fn table_envelopes(lf: &LfData, p1: f64, q: f64) -> Result<(f64, f64)> {
    let tt = lf.tables.torus.as_ref().expect("torus table");
    let mut qstar = tt.p_grid[0];
    let mut min = f64::INFINITY;
    for &pj in &tt.p_grid {
        let v = tt.eval([p1, pj])?;
        if v < min {
            min = v;
            qstar = pj;
        }
    }
    let h = tt.eval([p1, q])?;
    Ok(if q <= qstar { (h, min) } else { (min, h) })
}

/// Numerical Hamiltonians of the LF scheme at a node: `(plane, tangential,
/// upper, lower)`; only the plane entry is finite away from M₁ ∪ {0}.
fn lf_pieces(s: &StratifiedScheme, lf: &LfData, u: &[f64], n: usize) -> Result<[f64; 4]> {
    let h = s.grid.h;
    let c = u[n];
    let [w, e, so, no] = neighbours(&s.grid, u, n);
    let (d1m, d1p, d2m, d2p) = ((c - w) / h, (e - c) / h, (c - so) / h, (no - c) / h);
    let a1 = 0.5 * (d1m + d1p);
    let diss1 = 0.5 * lf.sigma * (d1p - d1m);
    let tt = lf.tables.torus.as_ref().expect("torus table");
    let junction = s.stratified && s.classes[n] != NodeClass::Plane;
    if !junction {
        let a2 = 0.5 * (d2m + d2p);
        let diss2 = 0.5 * lf.sigma * (d2p - d2m);
        return Ok([tt.eval([a1, a2])? - diss1 - diss2, f64::INFINITY, f64::INFINITY, f64::INFINITY]);
    }
    let x1 = s.grid.coords(n)[0];
    let tangential = lf.tables.tangential(Branch::Single, x1, a1)? - diss1;
    let upper = table_envelopes(lf, a1, d2p)?.0 - diss1;
    let lower = table_envelopes(lf, a1, d2m)?.1 - diss1;
    Ok([f64::INFINITY, tangential, upper, lower])
}

fn lf_update(s: &StratifiedScheme, lf: &LfData, u: &[f64], n: usize) -> Result<JunctionUpdate> {
    let c = u[n];
    let step = |hn: f64| if hn.is_finite() { c - s.delta * (s.alpha * c + hn) } else { f64::INFINITY };
    let [plane, t, up, lo] = lf_pieces(s, lf, u, n)?;
    let origin = match (s.classes[n], s.e) {
        (NodeClass::Origin, Some(e)) if s.stratified => -e / s.alpha,
        _ => f64::INFINITY,
    };
    if plane.is_finite() {
        let v = step(plane);
        return Ok(JunctionUpdate { tangential: f64::INFINITY, upper: v, lower: v, origin, value: v.min(origin) });
    }
    let (t, up, lo) = (step(t), step(up), step(lo));
    Ok(JunctionUpdate { tangential: t, upper: up, lower: lo, origin, value: t.min(up).min(lo).min(origin) })
}

/// Candidate values of the scheme at `node`, grouped by stratum.
pub fn junction_update(scheme: &StratifiedScheme, node: usize, u: &[f64]) -> Result<JunctionUpdate> {
    if let Some(lf) = &scheme.lf {
        return lf_update(scheme, lf, u, node);
    }
    let trans = scheme.trans.as_ref().expect("semi-Lagrangian scheme");
    let mut g = JunctionUpdate {
        tangential: f64::INFINITY,
        upper: f64::INFINITY,
        lower: f64::INFINITY,
        origin: f64::INFINITY,
        value: f64::INFINITY,
    };
    for (c, d) in trans.node(node).iter().zip(trans.node_disp(node)) {
        let v = c.cost + (1.0 - scheme.alpha * c.dt) * c.stencil.eval(u);
        if c.tag >= TAG_ORIGIN {
            g.origin = g.origin.min(v);
        } else if c.tag >= TAG_TANGENTIAL {
            g.tangential = g.tangential.min(v);
        } else {
            if d[1] >= 0.0 {
                g.upper = g.upper.min(v);
            }
            if d[1] <= 0.0 {
                g.lower = g.lower.min(v);
            }
        }
        g.value = g.value.min(v);
    }
    Ok(g)
}

/// Residual diagnostics of a solved scheme.
#[derive(Debug, Clone, Serialize)]
pub struct SchemeReport {
    /// `α u(0) + E`, when the origin rule is active.
    pub origin_clamp: Option<f64>,
    /// Max over M₁ of `α u + H̄₁,T(D₁u)` with the Godunov 1D gradient.
    pub line_subsolution: Option<f64>,
    /// Largest |D₁u| on M₁ (checked against the p₁ window).
    pub line_gradient: f64,
    /// Fixed-point residual `max |S(u) − u| / step` per node class.
    pub class_residual: Vec<(String, f64)>,
    /// `α ‖u‖∞`.
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct EffectiveSolution {
    pub field: ValueField,
    pub kind: SchemeKind,
    pub stratified: bool,
    pub delta: f64,
    pub iterations: usize,
    /// Sup-norm error bound at termination.
    pub residual: f64,
    pub report: SchemeReport,
}

impl EffectiveSolution {
    pub fn at_origin(&self) -> f64 {
        let g = &self.field.grid;
        self.field.values[g.nearest([0.0, 0.0])]
    }
}

fn solve_lf(s: &StratifiedScheme, opts: &EffectiveOptions, init: Option<&ValueField>) -> Result<(ValueField, usize, f64)> {
    let lf = s.lf.as_ref().expect("LF scheme");
    let mut u = match init {
        Some(f) if f.grid.same_lattice(&s.grid) => f.values.clone(),
        _ => vec![0.0; s.grid.len()],
    };
    let rate = s.delta * s.alpha;
    for it in 1..=opts.max_iter {
        let next = (0..u.len()).into_par_iter().map(|n| Ok(lf_update(s, lf, &u, n)?.value)).collect::<Result<Vec<_>>>()?;
        let diff = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        u = next;
        // Monotone with contraction 1 − τα: the distance to the fixed point is at most diff / (τα).
        let bound = diff * (1.0 - rate) / rate;
        if bound <= opts.tol {
            return Ok((ValueField::new(s.grid.clone(), u)?, it, bound));
        }
    }
    Err(Error::NotConverged(format!("Lax–Friedrichs iteration after {} sweeps", opts.max_iter)))
}

/// Godunov flux of a convex 1D Hamiltonian with minimum at `pmin`.
fn godunov(h: impl Fn(f64) -> Result<f64>, pmin: f64, dm: f64, dp: f64) -> Result<f64> {
    Ok(h(dm.max(pmin))?.max(h(dp.min(pmin))?))
}

fn report(s: &StratifiedScheme, tables: Option<&EffectiveTables>, u: &ValueField) -> Result<SchemeReport> {
    let g = &s.grid;
    let v = &u.values;
    let d1 = |n: usize| {
        let [w, e, _, _] = neighbours(g, v, n);
        ((v[n] - w) / g.h, (e - v[n]) / g.h)
    };
    let line_gradient = s.line_nodes().map(|(n, _)| d1(n)).fold(0.0f64, |m, (a, b)| m.max(a.abs()).max(b.abs()));
    let mut line_sub: Option<f64> = None;
    if let (Some(t), true) = (tables, s.stratified) {
        if line_gradient > t.p1_window() {
            return Err(Error::TableRange(format!(
                "|D₁u| = {line_gradient:.4} on M₁ exceeds the tabulated window ±{}",
                t.p1_window()
            )));
        }
        for (n, b) in s.line_nodes() {
            let x1 = g.coords(n)[0];
            let (dm, dp) = d1(n);
            let row: Vec<f64> = t.p1_grid.iter().map(|&p| t.tangential(b, x1, p)).collect::<Result<_>>()?;
            let kmin = (0..row.len()).min_by(|&a, &c| row[a].total_cmp(&row[c])).unwrap_or(0);
            let r = s.alpha * v[n] + godunov(|p| t.tangential(b, x1, p), t.p1_grid[kmin], dm, dp)?;
            line_sub = Some(line_sub.map_or(r, |m: f64| m.max(r)));
        }
    }
    let next: Vec<f64> = match s.kind {
        SchemeKind::SemiLagrangian => apply_bellman(&s.sl_problem()?, u)?.values,
        SchemeKind::LaxFriedrichs => (0..g.len()).map(|n| junction_update(s, n, v).map(|j| j.value)).collect::<Result<_>>()?,
    };
    let mut per = [0.0f64; 3];
    for n in 0..g.len() {
        if !g.active(n) {
            continue;
        }
        let k = match s.classes[n] {
            NodeClass::Plane => 0,
            NodeClass::Line(_) => 1,
            NodeClass::Origin => 2,
        };
        per[k] = per[k].max((next[n] - v[n]).abs() / s.delta);
    }
    Ok(SchemeReport {
        origin_clamp: s.e.filter(|_| s.stratified).map(|e| s.alpha * v[s.origin] + e),
        line_subsolution: line_sub,
        line_gradient,
        class_residual: vec![("plane".into(), per[0]), ("line".into(), per[1]), ("origin".into(), per[2])],
        bound: s.alpha * u.sup_norm(),
    })
}

/// Solves a prepared scheme from `init` (or zero).
pub fn solve_scheme(
    scheme: &StratifiedScheme,
    tables: Option<&EffectiveTables>,
    opts: &EffectiveOptions,
    init: Option<&ValueField>,
) -> Result<EffectiveSolution> {
    let (field, iterations, residual) = match scheme.kind {
        SchemeKind::SemiLagrangian => {
            let sol = solve_discounted(&scheme.sl_problem()?, &SolveOptions::new(opts.tol, opts.max_iter), init)?;
            if !sol.converged {
                return Err(Error::NotConverged(format!("value iteration after {} sweeps", sol.iterations)));
            }
            (sol.field, sol.iterations, sol.residual)
        }
        SchemeKind::LaxFriedrichs => solve_lf(scheme, opts, init)?,
    };
    let report = report(scheme, tables, &field)?;
    Ok(EffectiveSolution { field, kind: scheme.kind, stratified: scheme.stratified, delta: scheme.delta, iterations, residual, report })
}

/// Baseline `αu + H̄(x, Du) = 0` on the whole box. Case 2 needs the torus
/// table; cases 1 and 3 use the control form and ignore the tables.
pub fn solve_unstratified(scn: &Scenario, tables: Option<&EffectiveTables>, grid: &GridSpec, opts: &EffectiveOptions) -> Result<EffectiveSolution> {
    let scheme = match (scn.case, tables) {
        (CaseTag::Case2, Some(t)) => StratifiedScheme::lax_friedrichs(scn, t, grid, opts, false)?,
        (CaseTag::Case2, None) => return Err(Error::Scenario("case2 baseline needs the torus table".into())),
        _ => StratifiedScheme::semi_lagrangian(scn, None, grid, opts)?,
    };
    solve_scheme(&scheme, tables, opts, None)
}

/// The stratified effective problem with the junction rule on M₁ and the
/// origin clamp `αu(0) + E ≤ 0`.
pub fn solve_effective(scn: &Scenario, tables: &EffectiveTables, grid: &GridSpec, opts: &EffectiveOptions) -> Result<EffectiveSolution> {
    if tables.case != scn.case {
        return Err(Error::Regime(format!("tables were built for {:?}, scenario is {:?}", tables.case, scn.case)));
    }
    let scheme = StratifiedScheme::new(scn, tables, grid, opts, true)?;
    solve_scheme(&scheme, Some(tables), opts, None)
}

/// Control-form H̄ at a point, for residual checks of baseline solutions.
pub fn background_h(scn: &Scenario, x: [f64; 2], p: [f64; 2]) -> Result<f64> {
    let mut buf = Vec::with_capacity(scn.n_controls());
    local_controls(scn, &scn.background, x, [0.0, 0.0], &mut buf)?;
    Ok(hamiltonian(&buf, p).value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_reproduces_interpolant() {
        let p: Vec<f64> = (0..9).map(|k| -2.0 + 0.5 * k as f64).collect();
        let h: Vec<f64> = p.iter().map(|&x: &f64| (x * x - 1.0).max(x.abs() - 0.75)).collect();
        let c = legendre_candidates(&p, &h);
        for (k, &pk) in p.iter().enumerate() {
            let v = c.iter().map(|&(v, l)| -pk * v - l).fold(f64::NEG_INFINITY, f64::max);
            assert!((v - h[k]).abs() < 1e-12, "{pk}: {v} vs {}", h[k]);
        }
    }

    #[test]
    fn legendre_drops_nonconvex_points() {
        let p = [-1.0, 0.0, 1.0];
        let h = [1.0, 2.0, 1.0];
        let c = legendre_candidates(&p, &h);
        // Single hull segment plus v = 0.
        assert_eq!(c.len(), 2);
        assert!(c[0].0.abs() < 1e-15 && (c[0].1 + 1.0).abs() < 1e-15);
    }
}
