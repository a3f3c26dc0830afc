use std::sync::Arc;

use serde::Serialize;

use super::ball::settled;
use super::{cell_delta, ergodic, CellOptions, ErgodicEstimate};
use crate::control::local_controls;
use crate::error::{Error, Result};
use crate::scenario::{Branch, Scenario};
use crate::sl::{GridSpec, Transitions, ValueField};

/// Truncated strip `Y_ρ = (R/TZ) × [−ρ, ρ]` carrying the periodic strip
/// field of one branch, frozen at `x₀`.
pub struct StripCell {
    pub branch: Branch,
    pub x0: [f64; 2],
    pub rho: f64,
    pub grid: GridSpec,
    pub delta: f64,
    base: Transitions,
}

impl StripCell {
    pub fn new(scn: &Scenario, branch: Branch, x0: [f64; 2], rho: f64, opts: &CellOptions) -> Result<Self> {
        if rho <= scn.r0 {
            return Err(Error::Grid(format!("strip half-height {rho} must exceed R0 = {}", scn.r0)));
        }
        let strip = scn.strip(branch)?;
        let grid = GridSpec::strip(strip.period, rho, opts.h)?;
        let delta = cell_delta(opts, opts.m_f);
        let fields = &strip.fields;
        let src = |y: [f64; 2], out: &mut Vec<([f64; 2], f64)>| local_controls(scn, fields, x0, y, out);
        let base = Transitions::build(&grid, delta, &src)?;
        Ok(StripCell { branch, x0, rho, grid, delta, base })
    }

    /// λ_ρ(x₀, p₁) through the shifted cost `ℓ + p₁ f₁`.
    pub fn solve(&self, p1: f64, opts: &CellOptions, cross: bool, init: Option<&ValueField>) -> Result<ErgodicEstimate> {
        let t = Arc::new(self.base.tilted([p1, 0.0]));
        ergodic(&self.grid, self.delta, t, self.rho, opts, cross, init)
    }
}

pub fn strip_ergodic(
    scn: &Scenario,
    branch: Branch,
    x0: [f64; 2],
    p1: f64,
    rho: f64,
    opts: &CellOptions,
    cross: bool,
) -> Result<ErgodicEstimate> {
    StripCell::new(scn, branch, x0, rho, opts)?.solve(p1, opts, cross, None)
}

#[derive(Debug, Clone, Serialize)]
pub struct TangentialEstimate {
    pub value: f64,
    /// `(ρ, λ_ρ)` along the schedule.
    pub history: Vec<(f64, f64)>,
    /// Successive constants met the tolerance before the schedule ran out.
    pub converged: bool,
    #[serde(skip)]
    pub last: Option<ErgodicEstimate>,
}

impl TangentialEstimate {
    /// Largest decrease along the schedule (zero when monotone).
    pub fn monotonicity_defect(&self) -> f64 {
        self.history.windows(2).map(|w| (w[0].1 - w[1].1).max(0.0)).fold(0.0, f64::max)
    }
}

/// `H̄₁,T(x₀, p₁)` as the limit of λ_ρ along `rho_list`; converged when the
/// last two truncations agree within `tol_ergodic`.
pub fn tangential_hamiltonian(
    scn: &Scenario,
    branch: Branch,
    x0: [f64; 2],
    p1: f64,
    rho_list: &[f64],
    opts: &CellOptions,
) -> Result<TangentialEstimate> {
    let mut history = Vec::new();
    let mut last = None;
    for (k, &rho) in rho_list.iter().enumerate() {
        let est = strip_ergodic(scn, branch, x0, p1, rho, opts, opts.cross_at(k + 1 == rho_list.len()))?;
        if !est.converged {
            return Err(Error::NotConverged(format!("strip cell problem at ρ = {rho}, p₁ = {p1}")));
        }
        history.push((rho, est.constant));
        last = Some(est);
    }
    let converged = settled(&history, opts.tol_ergodic);
    let value = history.last().map(|h| h.1).ok_or_else(|| Error::Scenario("empty rho_list".into()))?;
    Ok(TangentialEstimate { value, history, converged, last })
}
