use std::sync::Arc;

use super::{cell_delta, ergodic, CellOptions, ErgodicEstimate};
use crate::control::{local_controls, ControlHamiltonian};
use crate::error::{Error, Result};
use crate::scenario::{CaseTag, Scenario};
use crate::sl::{GridSpec, Transitions, ValueField};

/// Torus cell problem `H_per(x₀, y, p + Dχ) = H̄(x₀, p)` of a periodic
/// background. The untilted transitions are built once and tilted per `p`.
pub struct TorusCell {
    pub x0: [f64; 2],
    pub grid: GridSpec,
    pub delta: f64,
    base: Transitions,
}

impl TorusCell {
    pub fn new(scn: &Scenario, x0: [f64; 2], opts: &CellOptions) -> Result<Self> {
        if scn.case != CaseTag::Case2 {
            return Err(Error::Scenario("torus cell problems need a case2 scenario".into()));
        }
        let per = scn
            .background_periods
            .ok_or_else(|| Error::Scenario("case2 background needs `periods`".into()))?;
        let grid = GridSpec::torus(per, opts.h)?;
        let m_f = ControlHamiltonian::background(scn, x0)?.m_f().max(1e-12);
        let delta = cell_delta(opts, m_f);
        let src = |y: [f64; 2], out: &mut Vec<([f64; 2], f64)>| local_controls(scn, &scn.background, x0, y, out);
        let base = Transitions::build(&grid, delta, &src)?;
        Ok(TorusCell { x0, grid, delta, base })
    }

    pub fn solve(&self, p: [f64; 2], opts: &CellOptions, cross: bool, init: Option<&ValueField>) -> Result<ErgodicEstimate> {
        let t = Arc::new(self.base.tilted(p));
        ergodic(&self.grid, self.delta, t, self.grid.h * self.grid.nx as f64, opts, cross, init)
    }
}

/// `H̄(x₀, p)` of a case2 scenario.
pub fn torus_effective(scn: &Scenario, x0: [f64; 2], p: [f64; 2], opts: &CellOptions) -> Result<ErgodicEstimate> {
    let cell = TorusCell::new(scn, x0, opts)?;
    let est = cell.solve(p, opts, opts.cross_at(true), None)?;
    if !est.converged {
        return Err(Error::NotConverged(format!("torus cell problem at p = ({}, {})", p[0], p[1])));
    }
    Ok(est)
}
