//! Sampled estimates of the structural constants and seam checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{CaseTag, FieldPair, Scenario};
use crate::control::Region;
use crate::error::Result;
use crate::geometry::hull_inradius;

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Worst sample `(x, y)` when the check failed.
    pub location: Option<([f64; 2], [f64; 2])>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub m_f: f64,
    pub m_l: f64,
    /// Largest sampled difference quotient of f in (x, y).
    pub l_f: f64,
    /// Same for ℓ, a Lipschitz surrogate for its modulus of continuity.
    pub l_l: f64,
    /// Smallest sampled inradius of the hull of {f(x, y, a)}.
    pub r_f: f64,
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

const SEAM_TOL: f64 = 1e-9;

fn sample_extent(scn: &Scenario) -> f64 {
    let per = scn.strips.iter().map(|s| s.period).fold(0.0, f64::max);
    4.0 * scn.r1 + 2.0 * per
}

/// Largest |ℓ| over a fixed pseudo-random sample (used for default tolerances).
pub(crate) fn cost_bound_estimate(scn: &Scenario) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let l = sample_extent(scn);
    let b = 1.0;
    let mut m: f64 = 0.0;
    for _ in 0..400 {
        let x = [rng.gen_range(-b..=b), rng.gen_range(-b..=b)];
        let y = [rng.gen_range(-l..=l), rng.gen_range(-l..=l)];
        let f = scn.fields_at(y);
        for k in 0..scn.n_controls() {
            m = m.max(f.eval(k, &scn.env(x, y, k))?.1.abs());
        }
    }
    Ok(m)
}

struct Worst {
    value: f64,
    at: Option<([f64; 2], [f64; 2])>,
    error: Option<String>,
}

impl Worst {
    fn new() -> Self {
        Worst { value: 0.0, at: None, error: None }
    }

    fn record(&mut self, v: f64, x: [f64; 2], y: [f64; 2]) {
        if v > self.value {
            self.value = v;
            self.at = Some((x, y));
        }
    }

    fn into_check(self, name: &str, tol: f64) -> AssumptionCheck {
        if let Some(e) = self.error {
            return AssumptionCheck { name: name.into(), passed: false, detail: e, location: self.at };
        }
        let passed = self.value <= tol;
        let detail = format!("max deviation {:.3e} (tolerance {:.1e})", self.value, tol);
        AssumptionCheck { name: name.into(), passed, detail, location: if passed { None } else { self.at } }
    }
}

/// Max over controls of the difference between two fields at one point.
fn field_gap(scn: &Scenario, a: &FieldPair, b: &FieldPair, x: [f64; 2], ya: [f64; 2], yb: [f64; 2]) -> Result<f64> {
    let mut gap: f64 = 0.0;
    for k in 0..scn.n_controls() {
        let (fa, la) = a.eval(k, &scn.env(x, ya, k))?;
        let (fb, lb) = b.eval(k, &scn.env(x, yb, k))?;
        gap = gap.max((fa[0] - fb[0]).abs()).max((fa[1] - fb[1]).abs()).max((la - lb).abs());
    }
    Ok(gap)
}

pub fn validate_assumptions(scn: &Scenario, sample_count: usize) -> ValidationReport {
    validate_assumptions_seeded(scn, sample_count, 0)
}

pub fn validate_assumptions_seeded(scn: &Scenario, sample_count: usize, seed: u64) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = sample_extent(scn);
    let b = scn.schedules.box_half_width;
    let n = sample_count.max(1);
    let mut checks = Vec::new();

    let mut m_f: f64 = 0.0;
    let mut m_l: f64 = 0.0;
    let mut l_f: f64 = 0.0;
    let mut l_l: f64 = 0.0;
    let mut r_f = f64::INFINITY;
    let mut finite = Worst::new();
    let mut drift = Vec::with_capacity(scn.n_controls());
    for _ in 0..n {
        let x = [rng.gen_range(-b..=b), rng.gen_range(-b..=b)];
        let y = [rng.gen_range(-l..=l), rng.gen_range(-l..=l)];
        let dir: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let step = 1e-4 * scn.r0;
        let (dx, dy) = if rng.gen_bool(0.5) {
            ([step * dir.cos(), step * dir.sin()], [0.0, 0.0])
        } else {
            ([0.0, 0.0], [step * dir.cos(), step * dir.sin()])
        };
        let x2 = [x[0] + dx[0], x[1] + dx[1]];
        let y2 = [y[0] + dy[0], y[1] + dy[1]];
        // Difference quotients only within one region; seams are checked separately.
        let same_region = scn.geometry().classify(y) == scn.geometry().classify(y2);
        drift.clear();
        for k in 0..scn.n_controls() {
            let here = scn.fields_at(y).eval(k, &scn.env(x, y, k));
            let there = scn.fields_at(y2).eval(k, &scn.env(x2, y2, k));
            match (here, there) {
                (Ok((f, c)), Ok((g, d))) => {
                    m_f = m_f.max(f[0].hypot(f[1]));
                    m_l = m_l.max(c.abs());
                    if same_region {
                        l_f = l_f.max((f[0] - g[0]).hypot(f[1] - g[1]) / step);
                        l_l = l_l.max((c - d).abs() / step);
                    }
                    drift.push(f);
                }
                (Err(e), _) | (_, Err(e)) => {
                    if finite.error.is_none() {
                        finite.error = Some(e.to_string());
                        finite.at = Some((x, y));
                    }
                }
            }
        }
        if drift.len() == scn.n_controls() {
            r_f = r_f.min(hull_inradius(&drift));
        }
    }
    checks.push(finite.into_check("fields finite", 0.0));
    checks.push(AssumptionCheck {
        name: "controllability".into(),
        passed: r_f > 0.0,
        detail: format!("sampled hull inradius r_f = {r_f:.6}"),
        location: None,
    });

    let geom = scn.geometry();
    for strip in &scn.strips {
        let mut w = Worst::new();
        for _ in 0..n {
            let x = [rng.gen_range(-b..=b), rng.gen_range(-b..=b)];
            let t = rng.gen_range(scn.r0..=scn.r0 + l);
            let y2 = if rng.gen_bool(0.5) { t } else { -t };
            let y = [rng.gen_range(-l..=l), y2];
            match field_gap(scn, &strip.fields, &scn.background, x, y, y) {
                Ok(g) => w.record(g, x, y),
                Err(e) => {
                    w.error.get_or_insert(e.to_string());
                }
            }
        }
        checks.push(w.into_check(&format!("{:?} strip equals background for |y2| >= R0", strip.branch), SEAM_TOL));

        let mut w = Worst::new();
        for _ in 0..n {
            let x = [rng.gen_range(-b..=b), rng.gen_range(-b..=b)];
            let y = [rng.gen_range(-l..=l), rng.gen_range(-scn.r0..=scn.r0)];
            let ys = [y[0] + strip.period, y[1]];
            match field_gap(scn, &strip.fields, &strip.fields, x, y, ys) {
                Ok(g) => w.record(g, x, y),
                Err(e) => {
                    w.error.get_or_insert(e.to_string());
                }
            }
        }
        checks.push(w.into_check(&format!("{:?} strip periodic with T = {}", strip.branch, strip.period), SEAM_TOL));
    }

    if let Some(core) = &scn.core {
        let mut w = Worst::new();
        for _ in 0..n {
            let x = [rng.gen_range(-b..=b), rng.gen_range(-b..=b)];
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let y = [scn.r1 * th.cos(), scn.r1 * th.sin()];
            let outer = geom.strip_region(y);
            let neighbour = match outer {
                Region::Strip(_) => scn.fields_of(outer),
                _ => &scn.background,
            };
            match field_gap(scn, core, neighbour, x, y, y) {
                Ok(g) => w.record(g, x, y),
                Err(e) => {
                    w.error.get_or_insert(e.to_string());
                }
            }
        }
        checks.push(w.into_check("core field matches its surroundings on |y| = R1", SEAM_TOL));
    }

    if let (CaseTag::Case2, Some(per)) = (scn.case, scn.background_periods) {
        let mut w = Worst::new();
        for _ in 0..n {
            let x = [rng.gen_range(-b..=b), rng.gen_range(-b..=b)];
            let y = [rng.gen_range(-l..=l), rng.gen_range(-l..=l)];
            let y_shift = if rng.gen_bool(0.5) { [y[0] + per[0], y[1]] } else { [y[0], y[1] + per[1]] };
            match field_gap(scn, &scn.background, &scn.background, x, y, y_shift) {
                Ok(g) => w.record(g, x, y),
                Err(e) => {
                    w.error.get_or_insert(e.to_string());
                }
            }
        }
        checks.push(w.into_check("background periodic", SEAM_TOL));
    }

    ValidationReport {
        m_f,
        m_l,
        l_f,
        l_l,
        r_f: if r_f.is_finite() { r_f } else { 0.0 },
        samples: n,
        seed,
        checks,
    }
}
