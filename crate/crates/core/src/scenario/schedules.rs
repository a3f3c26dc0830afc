use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Scenario;
use crate::error::{Error, Result};

/// How the semi-Lagrangian time step follows from the grid spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum StepRule {
    /// Δ = factor·√h
    Sqrt { factor: f64 },
    /// Δ = factor·h / M_f
    Courant { factor: f64 },
}

impl StepRule {
    pub fn delta(&self, h: f64, m_f: f64) -> f64 {
        match *self {
            StepRule::Sqrt { factor } => factor * h.sqrt(),
            StepRule::Courant { factor } => factor * h / m_f.max(1e-300),
        }
    }
}

/// Which cell problems are also solved by small-discount continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossCheck {
    All,
    Final,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSchedules {
    pub lambda0: f64,
    pub lambda_factor: f64,
    pub max_lambda_steps: usize,
    pub tol_ergodic: f64,
    /// Per-solve accuracy of ergodic constants (per unit time).
    pub tol_iter: f64,
    /// Sup-norm accuracy of discounted solves.
    pub tol_solve: f64,
    pub rho_list: Vec<f64>,
    pub r_list: Vec<f64>,
    pub cell_h: f64,
    pub grid_h: f64,
    pub box_half_width: f64,
    pub sl_step: StepRule,
    pub cell_step: StepRule,
    pub p1_points: usize,
    pub p1_half_width: f64,
    pub p_points: usize,
    pub p_half_width: f64,
    pub x1_samples: Vec<f64>,
    pub eta: f64,
    pub max_iter: usize,
    pub cross_check: CrossCheck,
    /// Relaxation weight of value iteration, which removes periodicity.
    pub relaxation: f64,
    pub eps_list: Vec<f64>,
}

fn is_multiple(a: f64, h: f64) -> bool {
    let k = (a / h).round();
    k >= 1.0 && (a - k * h).abs() <= 1e-9 * h
}

impl SolverSchedules {
    pub(super) fn placeholder() -> Self {
        SolverSchedules {
            lambda0: 0.2,
            lambda_factor: 0.5,
            max_lambda_steps: 16,
            tol_ergodic: 1e-4,
            tol_iter: 1e-9,
            tol_solve: 1e-8,
            rho_list: vec![],
            r_list: vec![],
            cell_h: 0.05,
            grid_h: 0.025,
            box_half_width: 1.0,
            sl_step: StepRule::Courant { factor: 1.0 },
            cell_step: StepRule::Sqrt { factor: 1.0 },
            p1_points: 21,
            p1_half_width: 2.5,
            p_points: 11,
            p_half_width: 2.5,
            x1_samples: vec![0.0],
            eta: 0.05,
            max_iter: 400_000,
            cross_check: CrossCheck::Final,
            relaxation: 0.9,
            eps_list: vec![0.2, 0.1, 0.05],
        }
    }

    /// Fills defaults from the scenario and checks the invariants.
    pub(super) fn resolve(raw: Option<&Value>, scn: &Scenario, m_l: f64) -> Result<Self> {
        let mut s = Self::placeholder();
        let m_l = if m_l > 0.0 { m_l } else { 1.0 };
        s.tol_ergodic = 1e-4 * m_l;
        s.tol_iter = 1e-9 * m_l;
        s.tol_solve = 1e-8 * m_l / scn.alpha.min(1.0);
        s.eta = 0.05 * m_l;
        s.cell_h = scn.r0 / 10.0;
        s.rho_list = vec![2.0 * scn.r0, 4.0 * scn.r0, 8.0 * scn.r0];
        s.r_list = vec![2.0 * scn.r1, 4.0 * scn.r1, 8.0 * scn.r1];
        let p = (2.2 * m_l / scn.control_inradius * 4.0).ceil() / 4.0;
        s.p1_half_width = p;
        s.p_half_width = p;
        let x_dependent = scn.strips.iter().any(|st| st.fields.uses_x());
        if let Some(raw) = raw {
            let obj = raw.as_object().ok_or_else(|| Error::Scenario("`schedules` must be an object".into()))?;
            let mut merged = serde_json::to_value(&s)?;
            for (k, v) in obj {
                let slot = merged
                    .get_mut(k.as_str())
                    .ok_or_else(|| Error::Scenario(format!("unknown schedule field `{k}`")))?;
                *slot = v.clone();
            }
            s = serde_json::from_value(merged).map_err(|e| Error::Scenario(format!("schedules: {e}")))?;
            if !obj.contains_key("x1_samples") && x_dependent {
                s.x1_samples = default_x1_samples(s.box_half_width, s.grid_h);
            }
        } else if x_dependent {
            s.x1_samples = default_x1_samples(s.box_half_width, s.grid_h);
        }
        s.check(scn)?;
        Ok(s)
    }

    pub fn check(&self, scn: &Scenario) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        let inc = |v: &[f64]| !v.is_empty() && v.windows(2).all(|w| w[1] > w[0]);
        if !inc(&self.rho_list) {
            return bad("rho_list must be non-empty and strictly increasing".into());
        }
        if !inc(&self.r_list) {
            return bad("R_list must be non-empty and strictly increasing".into());
        }
        for (name, v) in [
            ("tol_ergodic", self.tol_ergodic),
            ("tol_iter", self.tol_iter),
            ("tol_solve", self.tol_solve),
            ("lambda0", self.lambda0),
            ("cell_h", self.cell_h),
            ("grid_h", self.grid_h),
            ("box_half_width", self.box_half_width),
            ("eta", self.eta),
            ("p1_half_width", self.p1_half_width),
            ("p_half_width", self.p_half_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} > 0 required"));
            }
        }
        if !(self.lambda_factor > 0.0 && self.lambda_factor < 1.0) {
            return bad("lambda_factor must lie in (0, 1)".into());
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return bad("relaxation must lie in (0, 1]".into());
        }
        if self.p1_points < 3 || self.p_points < 3 {
            return bad("p-grids need at least 3 points".into());
        }
        if *self.rho_list.first().unwrap() <= scn.r0 {
            return bad("rho_list entries must exceed R0".into());
        }
        if *self.r_list.first().unwrap() <= scn.r1 {
            return bad("R_list entries must exceed R1".into());
        }
        if !is_multiple(scn.r0, self.cell_h) {
            return bad(format!("cell_h = {} must divide R0 = {}", self.cell_h, scn.r0));
        }
        for st in &scn.strips {
            if !is_multiple(st.period, self.cell_h) {
                return bad(format!("cell_h = {} must divide the strip period {}", self.cell_h, st.period));
            }
        }
        if let Some(per) = scn.background_periods {
            for t in per {
                if !is_multiple(t, self.cell_h) {
                    return bad(format!("cell_h = {} must divide the background period {}", self.cell_h, t));
                }
            }
        }
        for &r in self.rho_list.iter().chain(&self.r_list) {
            if !is_multiple(r, self.cell_h) {
                return bad(format!("cell_h = {} must divide truncation radius {}", self.cell_h, r));
            }
        }
        if !is_multiple(self.box_half_width, self.grid_h) {
            return bad(format!("grid_h = {} must divide the box half-width {}", self.grid_h, self.box_half_width));
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0)) {
            return bad("eps_list entries must be positive".into());
        }
        Ok(())
    }
}

fn default_x1_samples(box_half_width: f64, h: f64) -> Vec<f64> {
    let n = 5;
    (0..n)
        .map(|k| {
            let x = -box_half_width * (n - 1 - k) as f64 / (n - 1) as f64;
            (x / h).round() * h
        })
        .collect()
}
