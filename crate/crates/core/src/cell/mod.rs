//! Cell problems: strip, ball and torus ergodic constants, their correctors,
//! slopes of the background envelopes and the batch tabulation.

mod ball;
mod effective_h;
mod slopes;
mod strip;
mod tables;
mod torus;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use ball::{ball_ergodic, dirichlet_datum, BallCell, DirichletDatum};
pub use effective_h::{background_hamiltonian, BackgroundHamiltonian, TorusHamiltonian};
pub use slopes::{slope_window, slopes, verify_corrector_slopes, SlopeReport};
pub use strip::{strip_ergodic, tangential_hamiltonian, StripCell, TangentialEstimate};
pub use tables::{symmetric_grid, tabulate_effective, BranchTable, EffectiveTables, TorusTable};
pub use torus::{torus_effective, TorusCell};

use crate::error::Result;
use crate::scenario::{validate_assumptions, CrossCheck, Scenario, SolverSchedules, StepRule};
use crate::sl::{
    solve_ergodic_continuation, solve_ergodic_relative, ContinuationOptions, DiscountedProblem, GridSpec, SolveOptions,
    Transitions, ValueField,
};

/// Numerical settings shared by all cell problems.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellOptions {
    pub h: f64,
    /// Drift bound, used by the Courant step rule.
    pub m_f: f64,
    pub step: StepRule,
    pub tol_iter: f64,
    pub tol_ergodic: f64,
    pub max_iter: usize,
    pub relaxation: f64,
    pub lambda0: f64,
    pub lambda_factor: f64,
    pub max_lambda_steps: usize,
    pub cross_check: CrossCheck,
}

impl CellOptions {
    pub fn from_scenario(scn: &Scenario) -> Self {
        let m_f = validate_assumptions(scn, 256).m_f;
        Self::from_schedules(&scn.schedules, m_f)
    }

    pub fn from_schedules(s: &SolverSchedules, m_f: f64) -> Self {
        CellOptions {
            h: s.cell_h,
            m_f,
            step: s.cell_step,
            tol_iter: s.tol_iter,
            tol_ergodic: s.tol_ergodic,
            max_iter: s.max_iter,
            relaxation: s.relaxation,
            lambda0: s.lambda0,
            lambda_factor: s.lambda_factor,
            max_lambda_steps: s.max_lambda_steps,
            cross_check: s.cross_check,
        }
    }

    /// Whether a solve at position `last` of a truncation schedule also runs
    /// the continuation method.
    pub fn cross_at(&self, last: bool) -> bool {
        match self.cross_check {
            CrossCheck::All => true,
            CrossCheck::Final => last,
            CrossCheck::None => false,
        }
    }

    fn relative(&self) -> SolveOptions {
        SolveOptions::new(self.tol_iter, self.max_iter).relaxed(self.relaxation)
    }

    fn continuation(&self) -> ContinuationOptions {
        ContinuationOptions {
            lambda0: self.lambda0,
            factor: self.lambda_factor,
            max_steps: self.max_lambda_steps,
            tol: self.tol_ergodic,
            max_iter: self.max_iter,
            relaxation: self.relaxation,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationSummary {
    /// `(λ_k, −λ_k w^λ(anchor))`, in the sign of the ergodic constant.
    pub schedule: Vec<(f64, f64)>,
    pub extrapolated: Vec<f64>,
    pub constant: f64,
    pub converged: bool,
}

/// Ergodic constant of a cell problem `H(y, p + Dv) = constant` with its
/// corrector, normalized to vanish at the anchor.
#[derive(Debug, Clone)]
pub struct ErgodicEstimate {
    /// ρ, R, or the torus period.
    pub truncation: f64,
    pub constant: f64,
    pub corrector: ValueField,
    pub converged: bool,
    pub iterations: usize,
    /// Span of `T₀u − u` per unit time, sampled during relative iteration.
    pub residual_history: Vec<f64>,
    pub delta: f64,
    pub continuation: Option<ContinuationSummary>,
}

impl ErgodicEstimate {
    /// |relative iteration − continuation|, when both ran.
    pub fn method_gap(&self) -> Option<f64> {
        self.continuation.as_ref().map(|c| (c.constant - self.constant).abs())
    }
}

/// Runs relative value iteration (and optionally continuation) on prepared
/// transitions. Costs are average costs c; the ergodic constant is −c.
pub(crate) fn ergodic(
    grid: &GridSpec,
    delta: f64,
    trans: Arc<Transitions>,
    truncation: f64,
    opts: &CellOptions,
    cross: bool,
    init: Option<&ValueField>,
) -> Result<ErgodicEstimate> {
    let prob = DiscountedProblem::new(grid.clone(), delta, 0.0, trans)?;
    let rel = solve_ergodic_relative(&prob, &opts.relative(), init)?;
    let continuation = if cross {
        let c = solve_ergodic_continuation(&prob, &opts.continuation(), Some(&rel.field))?;
        Some(ContinuationSummary {
            schedule: c.schedule.iter().map(|&(l, x)| (l, -x)).collect(),
            extrapolated: c.extrapolated.iter().map(|x| -x).collect(),
            constant: -c.constant,
            converged: c.converged,
        })
    } else {
        None
    };
    Ok(ErgodicEstimate {
        truncation,
        constant: -rel.constant,
        corrector: rel.field,
        converged: rel.converged,
        iterations: rel.iterations,
        residual_history: rel.history,
        delta,
        continuation,
    })
}

/// Discrete Lipschitz constant of a field (max over axis neighbours).
pub fn lipschitz(field: &ValueField) -> f64 {
    let g = &field.grid;
    let per = g.periodic();
    let mut lip: f64 = 0.0;
    for n in 0..g.len() {
        if !g.active(n) {
            continue;
        }
        let (i, j) = g.ij(n);
        let right = if i + 1 < g.nx { Some(g.index(i + 1, j)) } else { per[0].map(|_| g.index(0, j)) };
        let up = if j + 1 < g.ny { Some(g.index(i, j + 1)) } else { per[1].map(|_| g.index(i, 0)) };
        for m in [right, up].into_iter().flatten() {
            if g.active(m) {
                lip = lip.max((field.values[m] - field.values[n]).abs() / g.h);
            }
        }
    }
    lip
}

/// Time step of a cell grid.
pub(crate) fn cell_delta(opts: &CellOptions, m_f: f64) -> f64 {
    opts.step.delta(opts.h, m_f)
}
