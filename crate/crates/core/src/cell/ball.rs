use std::sync::Arc;

use serde::Serialize;

use super::{cell_delta, ergodic, CellOptions, ErgodicEstimate};
use crate::control::local_controls;
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::sl::{GridSpec, Transitions, ValueField};

/// State-constrained ball `B_R(0)` with the full composite field at `x = 0`.
pub struct BallCell {
    pub radius: f64,
    pub grid: GridSpec,
    pub delta: f64,
    trans: Arc<Transitions>,
}

impl BallCell {
    pub fn new(scn: &Scenario, radius: f64, opts: &CellOptions) -> Result<Self> {
        if radius <= scn.r1 {
            return Err(Error::Grid(format!("ball radius {radius} must exceed R1 = {}", scn.r1)));
        }
        let grid = GridSpec::ball(radius, opts.h)?;
        let delta = cell_delta(opts, opts.m_f);
        let src = |y: [f64; 2], out: &mut Vec<([f64; 2], f64)>| local_controls(scn, scn.fields_at(y), [0.0, 0.0], y, out);
        let trans = Arc::new(Transitions::build(&grid, delta, &src)?);
        Ok(BallCell { radius, grid, delta, trans })
    }

    /// `E^R` with corrector `w^R`.
    pub fn solve(&self, opts: &CellOptions, cross: bool, init: Option<&ValueField>) -> Result<ErgodicEstimate> {
        ergodic(&self.grid, self.delta, self.trans.clone(), self.radius, opts, cross, init)
    }
}

pub fn ball_ergodic(scn: &Scenario, radius: f64, opts: &CellOptions, cross: bool) -> Result<ErgodicEstimate> {
    BallCell::new(scn, radius, opts)?.solve(opts, cross, None)
}

#[derive(Debug, Clone, Serialize)]
pub struct DirichletDatum {
    pub e: f64,
    /// `(R, E^R)` along the schedule.
    pub history: Vec<(f64, f64)>,
    pub converged: bool,
    /// Largest |continuation − relative iteration| over the solves that ran both.
    pub method_gap: Option<f64>,
    #[serde(skip)]
    pub w: Option<ValueField>,
}

impl DirichletDatum {
    pub fn monotonicity_defect(&self) -> f64 {
        self.history.windows(2).map(|w| (w[0].1 - w[1].1).max(0.0)).fold(0.0, f64::max)
    }
}

/// `E = lim E^R` along `r_list` (every radius is solved so the monotonicity
/// diagnostic sees the whole schedule); `w` comes from the largest ball solved.
pub fn dirichlet_datum(scn: &Scenario, r_list: &[f64], opts: &CellOptions) -> Result<DirichletDatum> {
    let mut history = Vec::new();
    let mut w = None;
    let mut gap: Option<f64> = None;
    for (k, &r) in r_list.iter().enumerate() {
        let est = ball_ergodic(scn, r, opts, opts.cross_at(k + 1 == r_list.len()))?;
        if !est.converged {
            return Err(Error::NotConverged(format!("ball cell problem at R = {r}")));
        }
        if let Some(g) = est.method_gap() {
            gap = Some(gap.map_or(g, |x| x.max(g)));
        }
        history.push((r, est.constant));
        w = Some(est.corrector);
    }
    let converged = settled(&history, opts.tol_ergodic);
    let e = history.last().map(|h| h.1).ok_or_else(|| Error::Scenario("empty R_list".into()))?;
    Ok(DirichletDatum { e, history, converged, method_gap: gap, w })
}

/// Last two entries of a truncation history differ by less than `tol`.
pub(crate) fn settled(history: &[(f64, f64)], tol: f64) -> bool {
    let n = history.len();
    n >= 2 && (history[n - 1].1 - history[n - 2].1).abs() < tol
}
