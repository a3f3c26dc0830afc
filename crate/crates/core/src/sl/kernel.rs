//! Bellman operator, discounted fixed points, relative value iteration and
//! small-discount continuation.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{GridSpec, Stencil, ValueField};
use crate::error::{Error, Result};

/// One candidate transition of a node: running cost over the step, foot
/// stencil, duration of the step and a label (control index, or a
/// scheme-specific code).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub cost: f64,
    pub stencil: Stencil,
    pub dt: f64,
    pub tag: u32,
}

/// Candidate lists of all nodes in compressed row form. `disp` holds the
/// displacement Δ·f of every candidate so costs can be tilted by a covector.
#[derive(Debug, Clone)]
pub struct Transitions {
    offsets: Vec<usize>,
    cands: Vec<Candidate>,
    disp: Vec<[f64; 2]>,
}

/// Dynamics and costs sampled at a node.
pub trait LocalControls: Sync {
    fn controls_at(&self, y: [f64; 2], out: &mut Vec<([f64; 2], f64)>) -> Result<()>;
}

impl<F> LocalControls for F
where
    F: Fn([f64; 2], &mut Vec<([f64; 2], f64)>) -> Result<()> + Sync,
{
    fn controls_at(&self, y: [f64; 2], out: &mut Vec<([f64; 2], f64)>) -> Result<()> {
        self(y, out)
    }
}

impl Transitions {
    /// Standard SL transitions: foot point `y + Δ f`, controls leaving the
    /// closed domain discarded. Inactive nodes get no candidates.
    pub fn build(grid: &GridSpec, delta: f64, src: &dyn LocalControls) -> Result<Self> {
        Self::from_fn(grid, |n, out, disp| {
            let y = grid.coords(n);
            let mut local = Vec::new();
            src.controls_at(y, &mut local)?;
            for (k, &(f, l)) in local.iter().enumerate() {
                let d = [delta * f[0], delta * f[1]];
                if let Some(stencil) = grid.stencil([y[0] + d[0], y[1] + d[1]]) {
                    out.push(Candidate { cost: delta * l, stencil, dt: delta, tag: k as u32 });
                    disp.push(d);
                }
            }
            if out.is_empty() {
                return Err(Error::NoAdmissibleControl { node: n, x: y[0], y: y[1], delta });
            }
            Ok(())
        })
    }

    /// Generic builder; `fill(node, cands, disps)` is called for active nodes
    /// only and must push the same number of candidates and displacements.
    pub fn from_fn<F>(grid: &GridSpec, fill: F) -> Result<Self>
    where
        F: Fn(usize, &mut Vec<Candidate>, &mut Vec<[f64; 2]>) -> Result<()> + Sync,
    {
        let per_node: Vec<(Vec<Candidate>, Vec<[f64; 2]>)> = (0..grid.len())
            .into_par_iter()
            .map(|n| {
                let mut c = Vec::new();
                let mut d = Vec::new();
                if grid.active(n) {
                    fill(n, &mut c, &mut d)?;
                    debug_assert_eq!(c.len(), d.len());
                }
                Ok((c, d))
            })
            .collect::<Result<_>>()?;
        let mut offsets = Vec::with_capacity(grid.len() + 1);
        offsets.push(0);
        let total: usize = per_node.iter().map(|p| p.0.len()).sum();
        let mut cands = Vec::with_capacity(total);
        let mut disp = Vec::with_capacity(total);
        for (c, d) in per_node {
            cands.extend(c);
            disp.extend(d);
            offsets.push(cands.len());
        }
        Ok(Transitions { offsets, cands, disp })
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn candidates(&self) -> usize {
        self.cands.len()
    }

    /// `(min, max)` of the candidate step durations.
    pub fn dt_range(&self) -> (f64, f64) {
        self.cands.iter().fold((f64::INFINITY, 0.0f64), |(a, b), c| (a.min(c.dt), b.max(c.dt)))
    }

    fn uniform_dt(&self) -> bool {
        let (a, b) = self.dt_range();
        b - a <= 1e-14 * b
    }

    #[inline]
    pub fn node(&self, n: usize) -> &[Candidate] {
        &self.cands[self.offsets[n]..self.offsets[n + 1]]
    }

    pub fn node_disp(&self, n: usize) -> &[[f64; 2]] {
        &self.disp[self.offsets[n]..self.offsets[n + 1]]
    }

    /// Costs `Δ(ℓ + p·f)`: the cost shift that turns `H(y, p + Dv)` into
    /// `H'(y, Dv)`.
    pub fn tilted(&self, p: [f64; 2]) -> Self {
        let mut out = self.clone();
        for (c, d) in out.cands.iter_mut().zip(&self.disp) {
            c.cost += p[0] * d[0] + p[1] * d[1];
        }
        out
    }

    /// Adds `shift` to every candidate cost.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.cands {
            c.cost += shift;
        }
        out
    }
}

/// Discounted dynamic programming problem `u = min{Δℓ + (1 − λΔ) u(foot)}`.
#[derive(Debug, Clone)]
pub struct DiscountedProblem {
    pub grid: GridSpec,
    pub delta: f64,
    pub discount: f64,
    pub trans: Arc<Transitions>,
    min_dt: f64,
}

impl DiscountedProblem {
    pub fn new(grid: GridSpec, delta: f64, discount: f64, trans: Arc<Transitions>) -> Result<Self> {
        if !(discount >= 0.0 && discount * delta < 1.0) {
            return Err(Error::Grid(format!("need 0 <= discount·Δ < 1, got {discount}·{delta}")));
        }
        if trans.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} transition rows for {} nodes", trans.len(), grid.len())));
        }
        let (min_dt, max_dt) = trans.dt_range();
        if max_dt > delta * (1.0 + 1e-12) {
            return Err(Error::Grid(format!("candidate step {max_dt} exceeds Δ = {delta}")));
        }
        let min_dt = if min_dt.is_finite() { min_dt } else { delta };
        Ok(DiscountedProblem { grid, delta, discount, trans, min_dt })
    }

    pub fn from_controls(grid: GridSpec, delta: f64, discount: f64, src: &dyn LocalControls) -> Result<Self> {
        let trans = Arc::new(Transitions::build(&grid, delta, src)?);
        Self::new(grid, delta, discount, trans)
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.delta, discount, self.trans.clone())
    }

    /// Worst contraction factor `1 − λ·min dt`.
    #[inline]
    pub fn gamma(&self) -> f64 {
        1.0 - self.discount * self.min_dt
    }
}

#[inline(always)]
fn node_min(cands: &[Candidate], u: &[f64], discount: f64) -> (f64, u32) {
    let mut best = f64::INFINITY;
    let mut tag = u32::MAX;
    for c in cands {
        let v = c.cost + (1.0 - discount * c.dt) * c.stencil.eval(u);
        if v < best {
            best = v;
            tag = c.tag;
        }
    }
    (best, tag)
}

const CHUNK: usize = 512;

fn apply_into(p: &DiscountedProblem, u: &[f64], out: &mut [f64]) {
    let gamma = p.discount;
    let t = &*p.trans;
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        for (k, o) in chunk.iter_mut().enumerate() {
            let cands = t.node(base + k);
            *o = if cands.is_empty() { 0.0 } else { node_min(cands, u, gamma).0 };
        }
    });
}

/// One application of the discrete dynamic programming operator.
pub fn apply_bellman(prob: &DiscountedProblem, u: &ValueField) -> Result<ValueField> {
    if !prob.grid.same_lattice(&u.grid) {
        return Err(Error::GridMismatch("field and problem grids differ".into()));
    }
    let mut out = vec![0.0; u.values.len()];
    apply_into(prob, &u.values, &mut out);
    ValueField::new(prob.grid.clone(), out)
}

/// Minimizing candidate tag at every node (`u32::MAX` on inactive nodes).
pub fn policy(prob: &DiscountedProblem, u: &[f64]) -> Vec<u32> {
    let gamma = prob.discount;
    (0..prob.grid.len()).into_par_iter().map(|n| node_min(prob.trans.node(n), u, gamma).1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    Jacobi,
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight τ in `u ← (1 − τ)u + τT[u]`.
    pub relaxation: f64,
    pub sweep: Sweep,
}

impl SolveOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        SolveOptions { tol, max_iter, relaxation: 1.0, sweep: Sweep::Jacobi }
    }

    pub fn relaxed(mut self, tau: f64) -> Self {
        self.relaxation = tau;
        self
    }
}

#[derive(Debug, Clone)]
pub struct DiscountedSolution {
    pub field: ValueField,
    pub iterations: usize,
    /// `‖T[u] − u‖∞` of the returned field.
    pub residual: f64,
    pub converged: bool,
}

fn span_minmax(grid: &GridSpec, a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for n in 0..a.len() {
        if grid.active(n) {
            let d = a[n] - b[n];
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    (lo, hi)
}

fn residual(prob: &DiscountedProblem, u: &[f64]) -> f64 {
    let mut tu = vec![0.0; u.len()];
    apply_into(prob, u, &mut tu);
    let (lo, hi) = span_minmax(&prob.grid, &tu, u);
    lo.abs().max(hi.abs())
}

/// Fixed point of [`apply_bellman`] for a positive discount. Jacobi sweeps
/// stop on the McQueen error bound (on the plain contraction bound when
/// step durations differ), Gauss–Seidel sweeps on the update size.
pub fn solve_discounted(prob: &DiscountedProblem, opts: &SolveOptions, init: Option<&ValueField>) -> Result<DiscountedSolution> {
    if !(prob.discount > 0.0) {
        return Err(Error::Grid("solve_discounted needs a positive discount".into()));
    }
    let grid = &prob.grid;
    let mut u = match init {
        Some(f) if f.grid.same_lattice(grid) => f.values.clone(),
        Some(_) => return Err(Error::GridMismatch("initial field on a different grid".into())),
        None => vec![0.0; grid.len()],
    };
    let tau = opts.relaxation;
    let gamma_r = 1.0 - tau * (1.0 - prob.gamma());
    let factor = gamma_r / (1.0 - gamma_r);
    // The residual of the returned field is at most (1 + γ) times its error.
    let target = opts.tol / 2.5;
    let mcqueen = prob.trans.uniform_dt();
    let mut tu = vec![0.0; u.len()];
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        match opts.sweep {
            Sweep::Jacobi => {
                apply_into(prob, &u, &mut tu);
                let (lo, hi) = span_minmax(grid, &tu, &u);
                let (lo, hi) = (tau * lo, tau * hi);
                for n in 0..u.len() {
                    u[n] += tau * (tu[n] - u[n]);
                }
                if !mcqueen {
                    if factor * lo.abs().max(hi.abs()) <= target {
                        converged = true;
                        break;
                    }
                    continue;
                }
                if factor * (hi - lo) <= 2.0 * target {
                    let mid = factor * 0.5 * (lo + hi);
                    for n in 0..u.len() {
                        if grid.active(n) {
                            u[n] += mid;
                        }
                    }
                    converged = true;
                    break;
                }
            }
            Sweep::GaussSeidel => {
                let gamma = prob.discount;
                let mut change: f64 = 0.0;
                for n in 0..u.len() {
                    let c = prob.trans.node(n);
                    if c.is_empty() {
                        continue;
                    }
                    let v = node_min(c, &u, gamma).0;
                    let nv = u[n] + tau * (v - u[n]);
                    change = change.max((nv - u[n]).abs());
                    u[n] = nv;
                }
                if change * factor <= target {
                    converged = true;
                    break;
                }
            }
        }
    }
    let res = residual(prob, &u);
    let field = ValueField::new(grid.clone(), u)?;
    Ok(DiscountedSolution { field, iterations: it, residual: res, converged })
}

#[derive(Debug, Clone)]
pub struct RelativeSolution {
    /// Average cost per unit time of the undiscounted scheme.
    pub constant: f64,
    /// Relative values, zero at the anchor.
    pub field: ValueField,
    pub iterations: usize,
    /// `span(T₀u − u)/Δ` at exit.
    pub span: f64,
    /// Span after every 64 iterations.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Relative value iteration with the undiscounted operator. `opts.tol` is
/// the accuracy of the returned constant per unit time; at exit
/// `‖T₀[u] − u − cΔ‖∞ ≤ tol·Δ`. The discount of `prob` is ignored.
pub fn solve_ergodic_relative(prob: &DiscountedProblem, opts: &SolveOptions, init: Option<&ValueField>) -> Result<RelativeSolution> {
    if !prob.trans.uniform_dt() {
        return Err(Error::Grid("ergodic solves need a uniform time step".into()));
    }
    let p0 = prob.with_discount(0.0)?;
    let grid = &p0.grid;
    let anchor = grid.anchor;
    let mut u = match init {
        Some(f) if f.grid.same_lattice(grid) => f.values.clone(),
        Some(_) => return Err(Error::GridMismatch("initial field on a different grid".into())),
        None => vec![0.0; grid.len()],
    };
    let tau = opts.relaxation;
    let delta = p0.delta;
    let mut tu = vec![0.0; u.len()];
    let mut history = Vec::new();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        apply_into(&p0, &u, &mut tu);
        (lo, hi) = span_minmax(grid, &tu, &u);
        let shift = u[anchor] + tau * (tu[anchor] - u[anchor]);
        for n in 0..u.len() {
            if grid.active(n) {
                u[n] += tau * (tu[n] - u[n]) - shift;
            }
        }
        let span = (hi - lo) / delta;
        if it % 64 == 0 {
            history.push(span);
        }
        if span <= opts.tol {
            converged = true;
            break;
        }
        if !span.is_finite() {
            break;
        }
    }
    let constant = 0.5 * (lo + hi) / delta;
    Ok(RelativeSolution {
        constant,
        field: ValueField::new(grid.clone(), u)?,
        iterations: it,
        span: (hi - lo) / delta,
        history,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub lambda0: f64,
    pub factor: f64,
    pub max_steps: usize,
    /// Stop once three successive extrapolated constants lie within tol/4 of
    /// each other (a single close pair can be a transient plateau).
    pub tol: f64,
    pub max_iter: usize,
    pub relaxation: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    /// `(λ_k, λ_k·w^λ(anchor))`.
    pub schedule: Vec<(f64, f64)>,
    /// Linear Richardson extrapolants of the schedule (from the second entry).
    pub extrapolated: Vec<f64>,
    /// Average cost per unit time.
    pub constant: f64,
    /// `w^λ − w^λ(anchor)` at the smallest λ.
    pub field: ValueField,
    pub converged: bool,
    pub iterations: usize,
}

/// Small-discount continuation `λ_k = λ0·factor^k`, warm started, with
/// linear extrapolation of `λ w^λ(anchor)` to λ = 0.
pub fn solve_ergodic_continuation(prob: &DiscountedProblem, opts: &ContinuationOptions, init: Option<&ValueField>) -> Result<ContinuationResult> {
    let grid = &prob.grid;
    let mut schedule: Vec<(f64, f64)> = Vec::new();
    let mut extrapolated = Vec::new();
    let mut warm: Option<ValueField> = None;
    let mut rel = init.cloned();
    let mut converged = false;
    let mut iterations = 0;
    let mut lambda = opts.lambda0;
    for _ in 0..opts.max_steps {
        let p = prob.with_discount(lambda)?;
        let start = match (&warm, &rel) {
            (Some(w), _) => Some(w.clone()),
            (None, Some(r)) => Some(r.clone()),
            (None, None) => None,
        };
        let so = SolveOptions::new(0.02 * opts.tol / lambda, opts.max_iter).relaxed(opts.relaxation);
        let sol = solve_discounted(&p, &so, start.as_ref())?;
        iterations += sol.iterations;
        let x = lambda * sol.field.at_anchor();
        if let Some(&(lp, xp)) = schedule.last() {
            extrapolated.push(x - lambda * (xp - x) / (lp - lambda));
        }
        schedule.push((lambda, x));
        let w0 = sol.field.at_anchor();
        let shape: Vec<f64> = (0..grid.len()).map(|n| if grid.active(n) { sol.field.values[n] - w0 } else { 0.0 }).collect();
        rel = Some(ValueField::new(grid.clone(), shape)?);
        let n = extrapolated.len();
        let close = |k: usize| (extrapolated[k] - extrapolated[k - 1]).abs() < opts.tol / 4.0;
        if n >= 3 && close(n - 1) && close(n - 2) {
            converged = true;
            break;
        }
        let next = lambda * opts.factor;
        // Warm start: same shape, level rescaled to the next discount.
        let level = x / next;
        let w: Vec<f64> = rel.as_ref().unwrap().values.iter().enumerate().map(|(n, v)| if grid.active(n) { v + level } else { 0.0 }).collect();
        warm = Some(ValueField::new(grid.clone(), w)?);
        lambda = next;
    }
    let constant = extrapolated.last().copied().unwrap_or_else(|| schedule.last().map_or(f64::NAN, |s| s.1));
    Ok(ContinuationResult {
        schedule,
        extrapolated,
        constant,
        field: rel.expect("at least one continuation step"),
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant_controls(c: f64) -> impl Fn([f64; 2], &mut Vec<([f64; 2], f64)>) -> Result<()> + Sync {
        move |_y, out| {
            out.clear();
            out.push(([0.0, 0.0], c));
            for k in 0..8 {
                let t = std::f64::consts::FRAC_PI_4 * k as f64;
                out.push(([t.cos(), t.sin()], c));
            }
            Ok(())
        }
    }

    fn eikonal_with_trap(beta: f64) -> impl Fn([f64; 2], &mut Vec<([f64; 2], f64)>) -> Result<()> + Sync {
        move |y, out| {
            out.clear();
            let trap = y[0].abs() < 1e-9 && y[1].abs() < 1e-9;
            out.push(([0.0, 0.0], if trap { 1.0 - beta } else { 1.0 }));
            for k in 0..16 {
                let t = std::f64::consts::PI * k as f64 / 8.0;
                out.push(([t.cos(), t.sin()], 1.0));
            }
            Ok(())
        }
    }

    #[test]
    fn bellman_on_constant() {
        let g = GridSpec::square(1.0, 0.1).unwrap();
        let src = |_y: [f64; 2], out: &mut Vec<([f64; 2], f64)>| {
            out.clear();
            out.push(([0.0, 0.0], 0.7));
            Ok(())
        };
        let p = DiscountedProblem::from_controls(g.clone(), 0.3, 1.0, &src).unwrap();
        let u = ValueField::constant(g, 2.0);
        let tu = apply_bellman(&p, &u).unwrap();
        for v in tu.values {
            assert!((v - (0.3 * 0.7 + 0.7 * 2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_cost_discounted() {
        let g = GridSpec::square(1.0, 0.05).unwrap();
        let src = constant_controls(1.5);
        let p = DiscountedProblem::from_controls(g, 0.2236, 2.0, &src).unwrap();
        let s = solve_discounted(&p, &SolveOptions::new(1e-10, 10_000), None).unwrap();
        assert!(s.converged && s.residual <= 1e-10);
        for v in &s.field.values {
            assert!((v - 0.75).abs() < 1e-10);
        }
    }

    /// 1D oracle: with a zero-cost trap at 0 and unit cost elsewhere the
    /// discounted value is (1 − e^(−α|y|))/α.
    #[test]
    fn discounted_distance_profile() {
        let h = 0.0125;
        let g = GridSpec::square(1.0, h).unwrap();
        let src = |y: [f64; 2], out: &mut Vec<([f64; 2], f64)>| {
            out.clear();
            let c = if y[0].abs() < 1e-9 && y[1].abs() < 1e-9 { 0.0 } else { 1.0 };
            out.push(([0.0, 0.0], c));
            for f in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] {
                out.push((f, c));
            }
            Ok(())
        };
        // Δ a multiple of h keeps axis characteristics on nodes.
        let delta = 4.0 * h;
        let p = DiscountedProblem::from_controls(g.clone(), delta, 1.0, &src).unwrap();
        let s = solve_discounted(&p, &SolveOptions::new(1e-10, 100_000), None).unwrap();
        let mut err: f64 = 0.0;
        for j in [-0.5f64, -0.25, 0.3, 0.6] {
            let v = s.field.interpolate([j, 0.0]).unwrap();
            err = err.max((v - (1.0 - (-j.abs()).exp())).abs());
        }
        assert!(err < 3.0 * delta, "err {err}");
    }

    #[test]
    fn relative_vi_trap() {
        let g = GridSpec::square(1.0, 0.05).unwrap();
        let src = eikonal_with_trap(0.5);
        let p = DiscountedProblem::from_controls(g, 0.05f64.sqrt(), 0.0, &src).unwrap();
        let opts = SolveOptions::new(1e-9, 200_000).relaxed(0.9);
        let r = solve_ergodic_relative(&p, &opts, None).unwrap();
        assert!(r.converged);
        assert!((r.constant - 0.5).abs() < 1e-8, "{}", r.constant);
        assert_eq!(r.field.at_anchor(), 0.0);
        let c = solve_ergodic_continuation(
            &p,
            &ContinuationOptions { lambda0: 0.2, factor: 0.5, max_steps: 16, tol: 1e-4, max_iter: 200_000, relaxation: 0.9 },
            None,
        )
        .unwrap();
        assert!(c.converged);
        assert!((c.constant - r.constant).abs() < 2e-4, "{} vs {}", c.constant, r.constant);
    }

    #[test]
    fn torus_shift_invariance() {
        let g = GridSpec::torus([1.0, 1.0], 0.05).unwrap();
        let src = |y: [f64; 2], out: &mut Vec<([f64; 2], f64)>| {
            out.clear();
            let c = 1.0 + 0.5 * (std::f64::consts::TAU * y[0]).sin() * (std::f64::consts::TAU * y[1]).cos();
            out.push(([0.0, 0.0], c + 0.3));
            for k in 0..8 {
                let t = std::f64::consts::FRAC_PI_4 * k as f64;
                out.push(([t.cos(), t.sin()], c));
            }
            Ok(())
        };
        let delta = 0.05f64.sqrt();
        let p = DiscountedProblem::from_controls(g, delta, 0.0, &src).unwrap();
        let opts = SolveOptions::new(1e-10, 200_000).relaxed(0.9);
        let a = solve_ergodic_relative(&p, &opts, None).unwrap();
        let shifted = DiscountedProblem::new(p.grid.clone(), delta, 0.0, Arc::new(p.trans.shifted(0.25 * delta))).unwrap();
        let b = solve_ergodic_relative(&shifted, &opts, None).unwrap();
        assert!((b.constant - a.constant - 0.25).abs() < 1e-9);
        assert!(a.field.max_abs_diff(&b.field).unwrap() < 1e-7);
    }

    #[test]
    fn gauss_seidel_same_fixed_point() {
        let g = GridSpec::square(1.0, 0.05).unwrap();
        let src = eikonal_with_trap(0.8);
        let p = DiscountedProblem::from_controls(g, 0.05f64.sqrt(), 1.0, &src).unwrap();
        let j = solve_discounted(&p, &SolveOptions::new(1e-10, 100_000), None).unwrap();
        let mut o = SolveOptions::new(1e-10, 100_000);
        o.sweep = Sweep::GaussSeidel;
        let s = solve_discounted(&p, &o, None).unwrap();
        assert!(j.field.max_abs_diff(&s.field).unwrap() < 1e-9);
    }

    fn problem() -> DiscountedProblem {
        let g = GridSpec::square(0.5, 0.05).unwrap();
        let src = |y: [f64; 2], out: &mut Vec<([f64; 2], f64)>| {
            out.clear();
            out.push(([0.0, 0.0], 1.0 + y[0] * y[1]));
            for k in 0..6 {
                let t = std::f64::consts::TAU * k as f64 / 6.0 + 0.1;
                out.push(([t.cos(), t.sin()], 1.0 - 0.3 * y[0]));
            }
            Ok(())
        };
        DiscountedProblem::from_controls(g, 0.2, 1.0, &src).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bellman_monotone_and_contractive(seed in proptest::collection::vec(-3.0f64..3.0, 441), bump in proptest::collection::vec(0.0f64..2.0, 441)) {
            let p = problem();
            let u = ValueField::new(p.grid.clone(), seed.clone()).unwrap();
            let v = ValueField::new(p.grid.clone(), seed.iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
            let tu = apply_bellman(&p, &u).unwrap();
            let tv = apply_bellman(&p, &v).unwrap();
            for n in 0..tu.values.len() {
                prop_assert!(tu.values[n] <= tv.values[n] + 1e-14);
            }
            let d = u.max_abs_diff(&v).unwrap();
            prop_assert!(tu.max_abs_diff(&tv).unwrap() <= p.gamma() * d + 1e-13);
        }

        #[test]
        fn ordered_initial_data_give_ordered_fixed_points(lo in -5.0f64..0.0, hi in 0.0f64..5.0) {
            let p = problem();
            let o = SolveOptions::new(1e-11, 100_000);
            let a = solve_discounted(&p, &o, Some(&ValueField::constant(p.grid.clone(), lo))).unwrap();
            let b = solve_discounted(&p, &o, Some(&ValueField::constant(p.grid.clone(), hi))).unwrap();
            for n in 0..a.field.values.len() {
                prop_assert!(a.field.values[n] <= b.field.values[n] + 1e-10);
            }
        }
    }
}
