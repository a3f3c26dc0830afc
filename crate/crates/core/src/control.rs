//! Dynamics, costs, the control-form Hamiltonian and its monotone envelopes.

use crate::error::{Error, Result};
use crate::scenario::{Branch, CaseTag, Env, FieldPair, Scenario};

/// Region of the fast variable `y` relative to the defect geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Outside,
    Strip(Branch),
    Core,
}

/// Region predicates of a scenario.
#[derive(Debug, Clone, Copy)]
pub struct DefectGeometry {
    pub case: CaseTag,
    pub r0: f64,
    pub r1: f64,
}

impl DefectGeometry {
    pub fn of(scn: &Scenario) -> Self {
        DefectGeometry { case: scn.case, r0: scn.r0, r1: scn.r1 }
    }

    /// Region ignoring the core ball.
    pub fn strip_region(&self, y: [f64; 2]) -> Region {
        let band = y[1].abs() < self.r0;
        match self.case {
            CaseTag::Case1 | CaseTag::Case2 => {
                if band && y[0] <= 0.0 {
                    Region::Strip(Branch::Single)
                } else {
                    Region::Outside
                }
            }
            CaseTag::Case3 => {
                if band && y[0] >= self.r0 {
                    Region::Strip(Branch::Plus)
                } else if band && y[0] <= -self.r0 {
                    Region::Strip(Branch::Minus)
                } else {
                    Region::Outside
                }
            }
        }
    }

    pub fn classify(&self, y: [f64; 2]) -> Region {
        if y[0] * y[0] + y[1] * y[1] < self.r1 * self.r1 {
            Region::Core
        } else {
            self.strip_region(y)
        }
    }

    /// Strip field used inside the core ball when no core field is given.
    fn fallback_inside_core(&self, y: [f64; 2]) -> Region {
        if y[1].abs() >= self.r0 {
            return Region::Outside;
        }
        match self.case {
            CaseTag::Case1 | CaseTag::Case2 => {
                if y[0] <= 0.0 {
                    Region::Strip(Branch::Single)
                } else {
                    Region::Outside
                }
            }
            CaseTag::Case3 => {
                if y[0] <= 0.0 {
                    Region::Strip(Branch::Minus)
                } else {
                    Region::Strip(Branch::Plus)
                }
            }
        }
    }
}

pub fn classify_point(scn: &Scenario, y: [f64; 2]) -> Region {
    DefectGeometry::of(scn).classify(y)
}

impl Scenario {
    pub fn geometry(&self) -> DefectGeometry {
        DefectGeometry::of(self)
    }

    fn strip_fields(&self, b: Branch) -> &FieldPair {
        &self.strips.iter().find(|s| s.branch == b).expect("branch present").fields
    }

    /// Field pair in force at `y`.
    pub fn fields_at(&self, y: [f64; 2]) -> &FieldPair {
        let g = self.geometry();
        let region = match g.classify(y) {
            Region::Core => match &self.core {
                Some(c) => return c,
                None => g.fallback_inside_core(y),
            },
            r => r,
        };
        match region {
            Region::Strip(b) => self.strip_fields(b),
            _ => &self.background,
        }
    }

    pub fn fields_of(&self, region: Region) -> &FieldPair {
        match region {
            Region::Core => self.core.as_ref().unwrap_or(&self.background),
            Region::Strip(b) => self.strip_fields(b),
            Region::Outside => &self.background,
        }
    }

    #[inline]
    pub fn env(&self, x: [f64; 2], y: [f64; 2], k: usize) -> Env {
        Env::new(x, y, self.controls[k])
    }
}

pub fn eval_dynamics(scn: &Scenario, x: [f64; 2], y: [f64; 2], a: usize) -> Result<[f64; 2]> {
    check_index(scn, a)?;
    Ok(scn.fields_at(y).eval(a, &scn.env(x, y, a))?.0)
}

pub fn eval_cost(scn: &Scenario, x: [f64; 2], y: [f64; 2], a: usize) -> Result<f64> {
    check_index(scn, a)?;
    Ok(scn.fields_at(y).eval(a, &scn.env(x, y, a))?.1)
}

fn check_index(scn: &Scenario, a: usize) -> Result<()> {
    if a < scn.n_controls() {
        Ok(())
    } else {
        Err(Error::Eval(format!("control index {a} out of range ({} controls)", scn.n_controls())))
    }
}

/// All `(f, ℓ)` pairs of a field at one point.
pub fn local_controls(scn: &Scenario, fields: &FieldPair, x: [f64; 2], y: [f64; 2], out: &mut Vec<([f64; 2], f64)>) -> Result<()> {
    out.clear();
    for k in 0..scn.n_controls() {
        out.push(fields.eval(k, &scn.env(x, y, k))?);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianSample {
    pub value: f64,
    pub argmax: usize,
    /// Max over controls with f₂ ≥ 0.
    pub h_down: f64,
    /// Max over controls with f₂ ≤ 0.
    pub h_up: f64,
}

/// `max_a (−p·f_a − ℓ_a)` together with the two half-plane envelopes.
pub fn hamiltonian(controls: &[([f64; 2], f64)], p: [f64; 2]) -> HamiltonianSample {
    let mut s = HamiltonianSample {
        value: f64::NEG_INFINITY,
        argmax: 0,
        h_down: f64::NEG_INFINITY,
        h_up: f64::NEG_INFINITY,
    };
    for (k, &(f, l)) in controls.iter().enumerate() {
        let v = -p[0] * f[0] - p[1] * f[1] - l;
        if v > s.value {
            s.value = v;
            s.argmax = k;
        }
        if f[1] >= 0.0 && v > s.h_down {
            s.h_down = v;
        }
        if f[1] <= 0.0 && v > s.h_up {
            s.h_up = v;
        }
    }
    s
}

pub fn eval_h(scn: &Scenario, x: [f64; 2], y: [f64; 2], p: [f64; 2]) -> Result<HamiltonianSample> {
    let mut buf = Vec::with_capacity(scn.n_controls());
    local_controls(scn, scn.fields_at(y), x, y, &mut buf)?;
    Ok(hamiltonian(&buf, p))
}

/// Background Hamiltonian H̄(x, p) in control form (cases 1 and 3).
pub fn eval_h_bar(scn: &Scenario, x: [f64; 2], p: [f64; 2]) -> Result<HamiltonianSample> {
    let mut buf = Vec::with_capacity(scn.n_controls());
    local_controls(scn, &scn.background, x, [0.0, 0.0], &mut buf)?;
    Ok(hamiltonian(&buf, p))
}

/// `(H↓, H↑)` of the background at `x`.
pub fn eval_h_envelopes(scn: &Scenario, x: [f64; 2], p: [f64; 2]) -> Result<(f64, f64)> {
    let s = eval_h_bar(scn, x, p)?;
    if s.h_down == f64::NEG_INFINITY || s.h_up == f64::NEG_INFINITY {
        return Err(Error::Eval("a half-plane control set is empty".into()));
    }
    Ok((s.h_down, s.h_up))
}

/// A convex piecewise-linear function of `p` given by its control list.
#[derive(Debug, Clone)]
pub struct ControlHamiltonian {
    pub controls: Vec<([f64; 2], f64)>,
}

impl ControlHamiltonian {
    pub fn background(scn: &Scenario, x: [f64; 2]) -> Result<Self> {
        let mut controls = Vec::new();
        local_controls(scn, &scn.background, x, [0.0, 0.0], &mut controls)?;
        Ok(ControlHamiltonian { controls })
    }

    pub fn eval(&self, p: [f64; 2]) -> HamiltonianSample {
        hamiltonian(&self.controls, p)
    }

    pub fn m_f(&self) -> f64 {
        self.controls.iter().map(|(f, _)| f[0].hypot(f[1])).fold(0.0, f64::max)
    }

    pub fn m_l(&self) -> f64 {
        self.controls.iter().map(|(_, l)| l.abs()).fold(0.0, f64::max)
    }

    /// `(argmin q, min_q H(p1 e1 + q e2))` by golden-section search on the
    /// convex function, bracketed using coercivity.
    pub fn min_over_q(&self, p1: f64) -> (f64, f64) {
        let g = |q: f64| self.eval([p1, q]).value;
        let (mut lo, mut hi) = (-1.0, 1.0);
        while g(lo - 1.0) <= g(lo) && lo > -1e8 {
            lo = 2.0 * lo - 1.0;
        }
        while g(hi + 1.0) <= g(hi) && hi < 1e8 {
            hi = 2.0 * hi + 1.0;
        }
        lo -= 1.0;
        hi += 1.0;
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut a = hi - phi * (hi - lo);
        let mut b = lo + phi * (hi - lo);
        let (mut ga, mut gb) = (g(a), g(b));
        for _ in 0..200 {
            if hi - lo < 1e-13 * (1.0 + hi.abs()) {
                break;
            }
            if ga <= gb {
                hi = b;
                b = a;
                gb = ga;
                a = hi - phi * (hi - lo);
                ga = g(a);
            } else {
                lo = a;
                a = b;
                ga = gb;
                b = lo + phi * (hi - lo);
                gb = g(b);
            }
        }
        let q = 0.5 * (lo + hi);
        (q, g(q))
    }

    /// `min_p H(p)` over both components.
    pub fn min_over_p(&self) -> f64 {
        // Convex in p1 after minimizing over q.
        let g = |p1: f64| self.min_over_q(p1).1;
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        while g(lo - 1.0) <= g(lo) && lo > -1e8 {
            lo = 2.0 * lo - 1.0;
        }
        while g(hi + 1.0) <= g(hi) && hi < 1e8 {
            hi = 2.0 * hi + 1.0;
        }
        lo -= 1.0;
        hi += 1.0;
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut a = hi - phi * (hi - lo);
        let mut b = lo + phi * (hi - lo);
        let (mut ga, mut gb) = (g(a), g(b));
        for _ in 0..200 {
            if hi - lo < 1e-12 * (1.0 + hi.abs()) {
                break;
            }
            if ga <= gb {
                hi = b;
                b = a;
                gb = ga;
                a = hi - phi * (hi - lo);
                ga = g(a);
            } else {
                lo = a;
                a = b;
                ga = gb;
                b = lo + phi * (hi - lo);
                gb = g(b);
            }
        }
        g(0.5 * (lo + hi)).min(ga).min(gb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{parse_scenario, ring, ring_with_phase};
    use proptest::prelude::*;

    fn eikonal(n: usize) -> Vec<([f64; 2], f64)> {
        let mut c: Vec<([f64; 2], f64)> = ring(n, 1.0).into_iter().map(|a| (a, 1.0)).collect();
        c.push(([0.0, 0.0], 1.0));
        c
    }

    #[test]
    fn ring64_value() {
        // With e1 among the directions the maximum is attained exactly.
        assert!((hamiltonian(&eikonal(64), [2.0, 0.0]).value - 1.0).abs() < 1e-15);
        // Rotated by half a step, p = (2,0) sits midway between two vertices.
        let mut c: Vec<([f64; 2], f64)> = ring_with_phase(64, 1.0, true).into_iter().map(|a| (a, 1.0)).collect();
        c.push(([0.0, 0.0], 1.0));
        let s = hamiltonian(&c, [2.0, 0.0]);
        let expect = 2.0 * (std::f64::consts::PI / 64.0).cos() - 1.0;
        assert!((s.value - expect).abs() < 1e-12);
        assert!((s.value - 0.99759).abs() < 1e-5);
    }

    #[test]
    fn single_control_is_affine() {
        let s = hamiltonian(&[([0.3, -0.7], 2.0)], [1.5, 0.5]);
        assert!((s.value - (-1.5 * 0.3 + 0.5 * 0.7 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn envelopes_of_dense_eikonal() {
        let s = hamiltonian(&eikonal(64), [0.0, 1.0]);
        assert!((s.h_down - (-1.0)).abs() < 1e-12);
        assert!((s.h_up - 0.0).abs() < 1e-12);
        let z = hamiltonian(&eikonal(64), [0.0, 0.0]);
        assert_eq!(z.h_down, -1.0);
        assert_eq!(z.h_up, -1.0);
        let h = hamiltonian(&eikonal(64), [1.0, 0.0]);
        assert_eq!(h.h_down, h.value);
        assert_eq!(h.h_up, h.value);
    }

    #[test]
    fn min_over_q_eikonal() {
        let h = ControlHamiltonian { controls: eikonal(16) };
        for p1 in [-2.0, -0.5, 0.0, 0.3, 1.7] {
            let (_, v) = h.min_over_q(p1);
            assert!((v - (p1.abs() - 1.0)).abs() < 1e-9, "{p1} {v}");
        }
        assert!((h.min_over_p() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn classification_case1() {
        let s = parse_scenario(crate::scenario::tests_support::EIKONAL).unwrap();
        assert_eq!(classify_point(&s, [-3.0, 0.0]), Region::Strip(Branch::Single));
        assert_eq!(classify_point(&s, [0.25, 0.0]), Region::Core);
        assert_eq!(classify_point(&s, [2.0, 1.0]), Region::Outside);
        assert_eq!(classify_point(&s, [2.0, 0.0]), Region::Outside);
    }

    #[test]
    fn outside_uses_background() {
        let doc = r#"{"case": "case1", "alpha": 1, "R0": 0.5, "controls": {"ring": 8},
            "background": {"cost": "1"},
            "strip_defect": {"cost": "1 - 0.5*smoothstep(R0, R0/2, abs(y2))"},
            "core_defect": {"cost": "0.5"}}"#;
        let s = parse_scenario(doc).unwrap();
        let y = [2.5, 2.5];
        for k in 0..s.n_controls() {
            assert_eq!(eval_cost(&s, [0.0; 2], y, k).unwrap(), 1.0);
            assert_eq!(eval_dynamics(&s, [0.0; 2], y, k).unwrap(), s.controls[k]);
        }
        assert_eq!(eval_cost(&s, [0.0; 2], [0.0, 0.0], 0).unwrap(), 0.5);
        assert_eq!(eval_cost(&s, [0.0; 2], [-3.0, 0.0], 0).unwrap(), 0.5);
        assert_eq!(eval_cost(&s, [0.0; 2], [-3.0, 1.0], 0).unwrap(), 1.0);
        assert!(eval_cost(&s, [0.0; 2], [0.0; 2], 99).is_err());
    }

    fn arb_controls() -> impl Strategy<Value = Vec<([f64; 2], f64)>> {
        prop::collection::vec(((-2.0..2.0f64, -2.0..2.0f64), -1.0..3.0f64), 1..12)
            .prop_map(|v| v.into_iter().map(|((a, b), l)| ([a, b], l)).collect())
    }

    proptest! {
        #[test]
        fn convex_in_p(c in arb_controls(), p in (-5.0..5.0f64, -5.0..5.0f64), q in (-5.0..5.0f64, -5.0..5.0f64), t in 0.0..1.0f64) {
            let p = [p.0, p.1];
            let q = [q.0, q.1];
            let m = [t * p[0] + (1.0 - t) * q[0], t * p[1] + (1.0 - t) * q[1]];
            let hm = hamiltonian(&c, m).value;
            let rhs = t * hamiltonian(&c, p).value + (1.0 - t) * hamiltonian(&c, q).value;
            prop_assert!(hm <= rhs + 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn lipschitz_and_envelopes(c in arb_controls(), p in (-5.0..5.0f64, -5.0..5.0f64), q in (-5.0..5.0f64, -5.0..5.0f64)) {
            let h = ControlHamiltonian { controls: c.clone() };
            let (p, q) = ([p.0, p.1], [q.0, q.1]);
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            let a = h.eval(p);
            let b = h.eval(q);
            prop_assert!((a.value - b.value).abs() <= h.m_f() * d + 1e-12);
            prop_assert_eq!(a.value, a.h_down.max(a.h_up));
        }
    }
}
