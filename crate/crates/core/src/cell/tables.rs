use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ball::dirichlet_datum;
use super::effective_h::{background_hamiltonian, BackgroundHamiltonian};
use super::slopes::slopes;
use super::strip::StripCell;
use super::CellOptions;
use crate::error::{Error, Result};
use crate::scenario::{Branch, CaseTag, Scenario, SolverSchedules};

/// Tangential Hamiltonian of one branch, indexed `[x-sample][p₁]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchTable {
    pub branch: Branch,
    pub values: Vec<Vec<f64>>,
    /// λ_ρ along the ρ schedule, `[x][p₁][ρ]`.
    pub rho_history: Vec<Vec<Vec<f64>>>,
    /// `(Π̲, Π̄)` at level H̄₁,T; NaN where not computed.
    pub slopes: Vec<Vec<(f64, f64)>>,
    pub converged: Vec<Vec<bool>>,
}

/// `H̄(0, (p_i, p_j))` of a case2 background, indexed `[i][j]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TorusTable {
    pub p_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl TorusTable {
    /// Bilinear interpolation in p; errors outside the tabulated window.
    pub fn eval(&self, p: [f64; 2]) -> Result<f64> {
        let g = &self.p_grid;
        let (i, fx) = locate(g, p[0]).ok_or_else(|| Error::TableRange(format!("p1 = {} outside [{}, {}]", p[0], g[0], g[g.len() - 1])))?;
        let (j, fy) = locate(g, p[1]).ok_or_else(|| Error::TableRange(format!("p2 = {} outside [{}, {}]", p[1], g[0], g[g.len() - 1])))?;
        let v = &self.values;
        let lo = v[i][j] + fx * (v[i + 1][j] - v[i][j]);
        let hi = v[i][j + 1] + fx * (v[i + 1][j + 1] - v[i][j + 1]);
        Ok(lo + fy * (hi - lo))
    }
}

/// Cell index and fraction of `v` on an increasing grid (fraction in [0, 1]).
pub(crate) fn locate(grid: &[f64], v: f64) -> Option<(usize, f64)> {
    let n = grid.len();
    let slack = 1e-12 * (grid[n - 1] - grid[0]);
    if v < grid[0] - slack || v > grid[n - 1] + slack {
        return None;
    }
    let v = v.clamp(grid[0], grid[n - 1]);
    let i = match grid.iter().position(|&g| g > v) {
        Some(0) => 0,
        Some(k) => k - 1,
        None => n - 2,
    };
    let i = i.min(n - 2);
    Some((i, (v - grid[i]) / (grid[i + 1] - grid[i])))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectiveTables {
    pub scenario: String,
    pub case: CaseTag,
    pub x1_samples: Vec<f64>,
    pub p1_grid: Vec<f64>,
    pub rho_list: Vec<f64>,
    pub r_list: Vec<f64>,
    /// `min_q H̄(x, p₁e₁ + qe₂)`, `[x][p₁]`.
    pub min_q: Vec<Vec<f64>>,
    /// `min_p H̄(0, p)`.
    pub min_h: f64,
    pub branches: Vec<BranchTable>,
    pub e: f64,
    pub e_history: Vec<(f64, f64)>,
    pub e_converged: bool,
    pub torus: Option<TorusTable>,
    /// `(label, |continuation − relative iteration|)` of every cross-checked solve.
    pub method_gaps: Vec<(String, f64)>,
    pub flags: Vec<String>,
    pub schedules: SolverSchedules,
    pub cell: CellOptions,
}

impl EffectiveTables {
    pub fn branch(&self, b: Branch) -> Result<&BranchTable> {
        self.branches
            .iter()
            .find(|t| t.branch == b)
            .ok_or_else(|| Error::Scenario(format!("no {b:?} branch in the tables")))
    }

    /// Index of the x-sample nearest to `x1`.
    pub fn x_index(&self, x1: f64) -> usize {
        let mut best = 0;
        for (k, &s) in self.x1_samples.iter().enumerate() {
            if (s - x1).abs() < (self.x1_samples[best] - x1).abs() {
                best = k;
            }
        }
        best
    }

    /// H̄₁,T of a branch at `(x₁, p₁)`, linear in p₁ and in x₁ between samples.
    pub fn tangential(&self, b: Branch, x1: f64, p1: f64) -> Result<f64> {
        let t = self.branch(b)?;
        let (j, fp) = locate(&self.p1_grid, p1).ok_or_else(|| {
            Error::TableRange(format!("p1 = {p1} outside the tabulated window ±{}", self.p1_grid[self.p1_grid.len() - 1]))
        })?;
        let row = |k: usize| t.values[k][j] + fp * (t.values[k][j + 1] - t.values[k][j]);
        if self.x1_samples.len() == 1 {
            return Ok(row(0));
        }
        let xs = &self.x1_samples;
        let x = x1.clamp(xs[0], xs[xs.len() - 1]);
        let (k, fx) = locate(xs, x).expect("clamped");
        Ok(row(k) + fx * (row(k + 1) - row(k)))
    }

    pub fn p1_window(&self) -> f64 {
        self.p1_grid[self.p1_grid.len() - 1]
    }

    /// Convexity defect `max(H(p_j) − ½(H(p_{j−1}) + H(p_{j+1})))` over all
    /// tabulated triples (uniform grids).
    pub fn convexity_defect(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for t in &self.branches {
            for row in &t.values {
                for w in row.windows(3) {
                    worst = worst.max(w[1] - 0.5 * (w[0] + w[2]));
                }
            }
        }
        if let Some(tt) = &self.torus {
            let v = &tt.values;
            let n = v.len();
            for i in 0..n {
                for j in 0..n {
                    if i >= 1 && i + 1 < n {
                        worst = worst.max(v[i][j] - 0.5 * (v[i - 1][j] + v[i + 1][j]));
                    }
                    if j >= 1 && j + 1 < n {
                        worst = worst.max(v[i][j] - 0.5 * (v[i][j - 1] + v[i][j + 1]));
                    }
                    if i >= 1 && i + 1 < n && j >= 1 && j + 1 < n {
                        worst = worst.max(v[i][j] - 0.5 * (v[i - 1][j - 1] + v[i + 1][j + 1]));
                        worst = worst.max(v[i][j] - 0.5 * (v[i - 1][j + 1] + v[i + 1][j - 1]));
                    }
                }
            }
        }
        worst
    }

    /// CSV blocks, one per table, each preceded by `#` provenance lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let sched = serde_json::to_string(&self.schedules)?;
        for t in &self.branches {
            writeln!(w, "# table: tangential")?;
            writeln!(w, "# scenario: {}", self.scenario)?;
            writeln!(w, "# branch: {:?}", t.branch)?;
            writeln!(w, "# rho_list: {:?}", self.rho_list)?;
            writeln!(w, "# schedules: {sched}")?;
            let mut head = String::from("x1,p1,H1T,min_q_H,pi_lower,pi_upper,converged");
            for r in &self.rho_list {
                head.push_str(&format!(",lambda_rho_{r}"));
            }
            writeln!(w, "{head}")?;
            for (k, x1) in self.x1_samples.iter().enumerate() {
                for (j, p1) in self.p1_grid.iter().enumerate() {
                    let (lo, hi) = t.slopes[k][j];
                    write!(w, "{x1},{p1},{},{},{lo},{hi},{}", t.values[k][j], self.min_q[k][j], t.converged[k][j])?;
                    for v in &t.rho_history[k][j] {
                        write!(w, ",{v}")?;
                    }
                    writeln!(w)?;
                }
            }
            writeln!(w)?;
        }
        writeln!(w, "# table: dirichlet")?;
        writeln!(w, "# scenario: {}", self.scenario)?;
        writeln!(w, "# E: {}", self.e)?;
        writeln!(w, "R,E_R")?;
        for (r, e) in &self.e_history {
            writeln!(w, "{r},{e}")?;
        }
        if let Some(tt) = &self.torus {
            writeln!(w)?;
            writeln!(w, "# table: torus")?;
            writeln!(w, "# scenario: {}", self.scenario)?;
            writeln!(w, "p1,p2,H")?;
            for (i, a) in tt.p_grid.iter().enumerate() {
                for (j, b) in tt.p_grid.iter().enumerate() {
                    writeln!(w, "{a},{b},{}", tt.values[i][j])?;
                }
            }
        }
        Ok(())
    }
}

/// Symmetric grid `P·(j − m)/m`, j = 0..2m, exact under p ↦ −p.
pub fn symmetric_grid(points: usize, half_width: f64) -> Vec<f64> {
    let m = (points.max(3) - 1) / 2;
    (0..=2 * m).map(|j| half_width * (j as f64 - m as f64) / m as f64).collect()
}

/// Batch driver: every strip, ball and torus cell problem of a scenario.
pub fn tabulate_effective(scn: &Scenario, p1_grid: &[f64], p_grid: Option<&[f64]>, opts: &CellOptions) -> Result<EffectiveTables> {
    if p1_grid.len() < 2 {
        return Err(Error::Scenario("p1 grid needs at least two points".into()));
    }
    let s = &scn.schedules;
    let mut flags = Vec::new();
    let mut gaps = Vec::new();
    let x1_samples = s.x1_samples.clone();
    let backgrounds: Vec<Box<dyn BackgroundHamiltonian>> =
        x1_samples.iter().map(|&x1| background_hamiltonian(scn, [x1, 0.0], opts)).collect::<Result<_>>()?;
    let min_q: Vec<Vec<f64>> = backgrounds
        .iter()
        .map(|bg| p1_grid.par_iter().map(|&p1| Ok(bg.min_over_q(p1)?.1)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let min_h = backgrounds[x_zero(&x1_samples)].min_over_p()?;

    let mut branches = Vec::new();
    for b in scn.branches() {
        let mut values = Vec::new();
        let mut rho_history = Vec::new();
        let mut slope_rows = Vec::new();
        let mut conv_rows = Vec::new();
        for (k, &x1) in x1_samples.iter().enumerate() {
            let x0 = [x1, 0.0];
            let mut hist = vec![Vec::with_capacity(s.rho_list.len()); p1_grid.len()];
            for (r, &rho) in s.rho_list.iter().enumerate() {
                let last = r + 1 == s.rho_list.len();
                let cell = StripCell::new(scn, b, x0, rho, opts)?;
                let ests = p1_grid
                    .par_iter()
                    .map(|&p1| cell.solve(p1, opts, opts.cross_at(last), None))
                    .collect::<Result<Vec<_>>>()?;
                for (j, e) in ests.iter().enumerate() {
                    if !e.converged {
                        flags.push(format!("{b:?} strip x1={x1} p1={} rho={rho}: relative iteration not converged", p1_grid[j]));
                    }
                    if let Some(g) = e.method_gap() {
                        gaps.push((format!("strip {b:?} x1={x1} p1={} rho={rho}", p1_grid[j]), g));
                    }
                    hist[j].push(e.constant);
                }
            }
            let row: Vec<f64> = hist.iter().map(|h| *h.last().unwrap()).collect();
            let conv: Vec<bool> = hist
                .iter()
                .map(|h| h.len() < 2 || (h[h.len() - 1] - h[h.len() - 2]).abs() < opts.tol_ergodic)
                .collect();
            for (j, c) in conv.iter().enumerate() {
                if !c {
                    flags.push(format!("{b:?} strip x1={x1} p1={}: ρ schedule exhausted", p1_grid[j]));
                }
            }
            let sl: Vec<(f64, f64)> = if scn.case == CaseTag::Case2 {
                vec![(f64::NAN, f64::NAN); p1_grid.len()]
            } else {
                let bg = &backgrounds[k];
                p1_grid
                    .iter()
                    .zip(&row)
                    .map(|(&p1, &level)| slopes(bg.as_ref(), p1, level).unwrap_or((f64::NAN, f64::NAN)))
                    .collect()
            };
            values.push(row);
            rho_history.push(hist);
            slope_rows.push(sl);
            conv_rows.push(conv);
        }
        branches.push(BranchTable { branch: b, values, rho_history, slopes: slope_rows, converged: conv_rows });
    }

    let dd = dirichlet_datum(scn, &s.r_list, opts)?;
    if !dd.converged {
        flags.push("R schedule exhausted for E".into());
    }
    if let Some(g) = dd.method_gap {
        gaps.push(("ball E".into(), g));
    }

    let torus = match (scn.case, p_grid) {
        (CaseTag::Case2, Some(pg)) => {
            let bg = &backgrounds[x_zero(&x1_samples)];
            let values = pg
                .iter()
                .map(|&a| pg.iter().map(|&b| bg.value([a, b])).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            Some(TorusTable { p_grid: pg.to_vec(), values })
        }
        _ => None,
    };

    let tables = EffectiveTables {
        scenario: scn.name.clone(),
        case: scn.case,
        x1_samples,
        p1_grid: p1_grid.to_vec(),
        rho_list: s.rho_list.clone(),
        r_list: s.r_list.clone(),
        min_q,
        min_h,
        branches,
        e: dd.e,
        e_history: dd.history,
        e_converged: dd.converged,
        torus,
        method_gaps: gaps,
        flags,
        schedules: s.clone(),
        cell: opts.clone(),
    };
    Ok(tables)
}

fn x_zero(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, x) in xs.iter().enumerate() {
        if x.abs() < xs[best].abs() {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_symmetric() {
        let g = symmetric_grid(21, 2.25);
        assert_eq!(g.len(), 21);
        for j in 0..21 {
            assert_eq!(g[j], -g[20 - j]);
        }
        assert_eq!(g[10], 0.0);
    }

    #[test]
    fn locate_edges() {
        let g = [0.0, 1.0, 2.0];
        assert_eq!(locate(&g, 2.0), Some((1, 1.0)));
        assert_eq!(locate(&g, 0.0), Some((0, 0.0)));
        assert_eq!(locate(&g, 1.5), Some((1, 0.5)));
        assert!(locate(&g, 2.1).is_none());
    }
}
