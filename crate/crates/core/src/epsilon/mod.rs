//! The ε-problem on the physical grid, ε-sweeps against the effective
//! solution, and CSV/SVG export.

mod render;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

pub use render::{render_field_svg, render_report_svg, render_tables_svg};

use crate::cell::{lipschitz, EffectiveTables};
use crate::control::local_controls;
use crate::error::{Error, Result};
use crate::scenario::{CaseTag, Scenario};
use crate::sl::{solve_discounted, DiscountedProblem, DomainKind, GridSpec, SolveOptions, Transitions, ValueField};
use crate::stratified::{solve_effective, EffectiveOptions, EffectiveSolution};

#[derive(Debug, Clone)]
pub struct EpsilonSolution {
    pub epsilon: f64,
    pub field: ValueField,
    pub delta: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Discrete Lipschitz constant of the solution.
    pub lipschitz: f64,
}

/// Grid spacing needed to resolve ε.
pub fn resolves(h: f64, eps: f64) -> bool {
    h <= eps / 8.0 * (1.0 + 1e-12)
}

/// Box grid of half-width `half` whose spacing resolves every ε in the list
/// and divides the half-width.
pub fn sweep_grid(half: f64, eps_list: &[f64]) -> Result<GridSpec> {
    let eps_min = eps_list.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(eps_min > 0.0) {
        return Err(Error::Scenario("ε values must be positive".into()));
    }
    let cells = (8.0 * half / eps_min - 1e-9).ceil().max(1.0);
    GridSpec::square(half, half / cells)
}

/// SL solve of `αu + H(x, x/ε, Du) = 0` on a state-constrained box.
pub fn solve_epsilon(scn: &Scenario, eps: f64, grid: &GridSpec, opts: &EffectiveOptions) -> Result<EpsilonSolution> {
    if !(eps > 0.0) {
        return Err(Error::Scenario(format!("ε must be positive, got {eps}")));
    }
    if !matches!(grid.kind, DomainKind::Box { .. }) {
        return Err(Error::Grid("the ε-problem lives on a box grid".into()));
    }
    if !resolves(grid.h, eps) {
        return Err(Error::Grid(format!("h = {} does not resolve ε = {eps} (need h ≤ ε/8)", grid.h)));
    }
    let delta = opts.step.delta(grid.h, opts.m_f);
    let controls = |x: [f64; 2], out: &mut Vec<([f64; 2], f64)>| {
        let y = [x[0] / eps, x[1] / eps];
        local_controls(scn, scn.fields_at(y), x, y, out)
    };
    let trans = Transitions::build(grid, delta, &controls)?;
    let prob = DiscountedProblem::new(grid.clone(), delta, scn.alpha, std::sync::Arc::new(trans))?;
    let sol = solve_discounted(&prob, &SolveOptions::new(opts.tol, opts.max_iter), None)?;
    if !sol.converged {
        return Err(Error::NotConverged(format!("ε = {eps}: value iteration after {} sweeps", sol.iterations)));
    }
    let lip = lipschitz(&sol.field);
    Ok(EpsilonSolution { epsilon: eps, field: sol.field, delta, iterations: sol.iterations, residual: sol.residual, lipschitz: lip })
}

/// Largest change on the window K when the box is doubled at fixed h.
pub fn boundary_sensitivity(scn: &Scenario, eps: f64, grid: &GridSpec, opts: &EffectiveOptions) -> Result<f64> {
    let DomainKind::Box { half } = grid.kind else {
        return Err(Error::Grid("the ε-problem lives on a box grid".into()));
    };
    let big = GridSpec::box_grid([2.0 * half[0], 2.0 * half[1]], grid.h)?;
    let a = solve_epsilon(scn, eps, grid, opts)?;
    let b = solve_epsilon(scn, eps, &big, opts)?;
    let mut worst: f64 = 0.0;
    for n in window_nodes(grid) {
        let x = grid.coords(n);
        let m = big.node_at(x).ok_or_else(|| Error::GridMismatch("doubled box misses a node".into()))?;
        worst = worst.max((a.field.values[n] - b.field.values[m]).abs());
    }
    Ok(worst)
}

/// Fraction of the box kept by the error window K.
pub const WINDOW: f64 = 0.8;

/// Nodes of the window K (the box scaled by [`WINDOW`]).
pub fn window_nodes(grid: &GridSpec) -> Vec<usize> {
    let half = match grid.kind {
        DomainKind::Box { half } => half,
        _ => [f64::INFINITY; 2],
    };
    (0..grid.len())
        .filter(|&n| {
            let x = grid.coords(n);
            x[0].abs() <= WINDOW * half[0] + 1e-12 && x[1].abs() <= WINDOW * half[1] + 1e-12
        })
        .collect()
}

/// Distinguished comparison points: origin, a point on M₁, a generic point.
pub fn probe_points(grid: &GridSpec) -> [[f64; 2]; 3] {
    let half = match grid.kind {
        DomainKind::Box { half } => half[0].min(half[1]),
        _ => 1.0,
    };
    // Snap to nodes so the comparison needs no interpolation.
    let snap = |x: [f64; 2]| grid.coords(grid.nearest(x));
    [snap([0.0, 0.0]), snap([-0.5 * half, 0.0]), snap([0.3 * half, 0.4 * half])]
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub sup_err_k: f64,
    pub err_origin: f64,
    pub err_m1: f64,
    pub err_generic: f64,
    pub h: f64,
    pub delta: f64,
    pub iterations: usize,
    pub lipschitz: f64,
    /// `α ‖u_ε‖∞`.
    pub bound: f64,
    pub u_origin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub scenario: String,
    pub case: CaseTag,
    pub rows: Vec<ConvergenceRow>,
    /// `(ε, message)` of solves that failed.
    pub failures: Vec<(f64, String)>,
    pub window: f64,
    pub probes: [[f64; 2]; 3],
    pub effective_origin: f64,
    pub effective_delta: f64,
}

impl ConvergenceReport {
    /// Last row's sup error is no larger than the first's.
    pub fn decreasing_trend(&self) -> bool {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.sup_err_k <= a.sup_err_k,
            _ => false,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["epsilon", "sup_err_K", "err_origin", "err_M1", "err_generic", "h", "delta"])?;
        for r in &self.rows {
            wr.write_record(
                [r.epsilon, r.sup_err_k, r.err_origin, r.err_m1, r.err_generic, r.h, r.delta].map(|v| format!("{v}")),
            )?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Compares ε-solutions on a shared grid with the effective solution.
pub fn compare(scn: &Scenario, effective: &ValueField, sol: &EpsilonSolution) -> Result<ConvergenceRow> {
    let grid = &effective.grid;
    if !grid.same_lattice(&sol.field.grid) {
        return Err(Error::GridMismatch("ε-solution and effective solution use different grids".into()));
    }
    let diff = |n: usize| (sol.field.values[n] - effective.values[n]).abs();
    let sup = window_nodes(grid).into_iter().map(diff).fold(0.0, f64::max);
    let [o, m, g] = probe_points(grid).map(|x| diff(grid.nearest(x)));
    Ok(ConvergenceRow {
        epsilon: sol.epsilon,
        sup_err_k: sup,
        err_origin: o,
        err_m1: m,
        err_generic: g,
        h: grid.h,
        delta: sol.delta,
        iterations: sol.iterations,
        lipschitz: sol.lipschitz,
        bound: scn.alpha * sol.field.sup_norm(),
        u_origin: sol.field.values[grid.nearest([0.0, 0.0])],
    })
}

/// ε-sweep: the effective solution and every ε-solution on one grid.
pub fn convergence_sweep(
    scn: &Scenario,
    eps_list: &[f64],
    grid: &GridSpec,
    tables: &EffectiveTables,
    opts: &EffectiveOptions,
) -> Result<(ConvergenceReport, EffectiveSolution)> {
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Scenario("ε list must be strictly decreasing".into()));
    }
    let eff = solve_effective(scn, tables, grid, opts)?;
    let outcomes: Vec<(f64, Result<EpsilonSolution>)> =
        eps_list.par_iter().map(|&e| (e, solve_epsilon(scn, e, grid, opts))).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (eps, out) in outcomes {
        match out.and_then(|s| compare(scn, &eff.field, &s)) {
            Ok(r) => rows.push(r),
            Err(e) => failures.push((eps, e.to_string())),
        }
    }
    let report = ConvergenceReport {
        scenario: scn.name.clone(),
        case: scn.case,
        rows,
        failures,
        window: WINDOW,
        probes: probe_points(grid),
        effective_origin: eff.at_origin(),
        effective_delta: eff.delta,
    };
    Ok((report, eff))
}

/// Objects with a CSV or SVG form.
#[derive(Clone, Copy)]
pub enum Artifact<'a> {
    Field(&'a ValueField, Option<CaseTag>),
    Tables(&'a EffectiveTables),
    Report(&'a ConvergenceReport),
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn export_csv(object: Artifact<'_>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    match object {
        Artifact::Field(f, _) => f.write_csv(&mut w)?,
        Artifact::Tables(t) => t.write_csv(&mut w)?,
        Artifact::Report(r) => r.write_csv(&mut w)?,
    }
    w.flush()?;
    Ok(())
}

pub fn render_svg(object: Artifact<'_>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    match object {
        Artifact::Field(f, case) => render_field_svg(f, case, &mut w)?,
        Artifact::Tables(t) => render_tables_svg(t, &mut w)?,
        Artifact::Report(r) => render_report_svg(r, &mut w)?,
    }
    w.flush()?;
    Ok(())
}
