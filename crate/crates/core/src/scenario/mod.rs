//! Scenario documents: geometry, controls, field expressions and solver schedules.

pub mod expr;
mod schedules;
mod validate;

use std::sync::Arc;

use serde_json::{Map, Value};

pub use expr::{parse_expression, parse_expression_with, Env, ScalarExpr, Var};
pub use schedules::{CrossCheck, SolverSchedules, StepRule};
pub use validate::{validate_assumptions, validate_assumptions_seeded, AssumptionCheck, ValidationReport};

use crate::error::{Error, Result};
use crate::geometry::{hull_inradius, snap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseTag {
    Case1,
    Case2,
    Case3,
}

/// Which strip a quantity refers to. Cases 1 and 2 have a single strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Single,
    Minus,
    Plus,
}

/// Drift and cost expressions, one entry per control.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub drift: Vec<[Arc<ScalarExpr>; 2]>,
    pub cost: Vec<Arc<ScalarExpr>>,
}

impl FieldPair {
    /// Drift `a` and the supplied cost, shared by every control.
    pub fn uniform(n: usize, drift: [ScalarExpr; 2], cost: ScalarExpr) -> Self {
        let d = [Arc::new(drift[0].clone()), Arc::new(drift[1].clone())];
        let c = Arc::new(cost);
        FieldPair { drift: vec![d; n], cost: vec![c; n] }
    }

    #[inline]
    pub fn eval(&self, k: usize, env: &Env) -> Result<([f64; 2], f64)> {
        let d = &self.drift[k];
        Ok(([d[0].eval(env)?, d[1].eval(env)?], self.cost[k].eval(env)?))
    }

    pub fn uses(&self, v: Var) -> bool {
        self.drift.iter().any(|d| d[0].uses(v) || d[1].uses(v)) || self.cost.iter().any(|c| c.uses(v))
    }

    pub fn uses_y(&self) -> bool {
        self.uses(Var::Y1) || self.uses(Var::Y2)
    }

    pub fn uses_x(&self) -> bool {
        self.uses(Var::X1) || self.uses(Var::X2)
    }

    fn describe(&self) -> Value {
        let drift: Vec<Value> = self
            .drift
            .iter()
            .map(|d| Value::from(vec![d[0].canonical(), d[1].canonical()]))
            .collect();
        let cost: Vec<Value> = self.cost.iter().map(|c| Value::from(c.canonical())).collect();
        serde_json::json!({ "drift": drift, "cost": cost })
    }
}

#[derive(Debug, Clone)]
pub struct StripField {
    pub branch: Branch,
    pub period: f64,
    pub fields: FieldPair,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub case: CaseTag,
    pub alpha: f64,
    pub r0: f64,
    pub r1: f64,
    pub controls: Vec<[f64; 2]>,
    pub background: FieldPair,
    /// Periods of the background in y (case 2 only).
    pub background_periods: Option<[f64; 2]>,
    /// One strip for cases 1/2, `[minus, plus]` for case 3.
    pub strips: Vec<StripField>,
    pub core: Option<FieldPair>,
    pub schedules: SolverSchedules,
    /// Inradius of the hull of the control vectors.
    pub control_inradius: f64,
}

impl Scenario {
    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn strip(&self, branch: Branch) -> Result<&StripField> {
        self.strips
            .iter()
            .find(|s| s.branch == branch)
            .ok_or_else(|| Error::Regime(format!("scenario has no {branch:?} strip")))
    }

    pub fn branches(&self) -> Vec<Branch> {
        self.strips.iter().map(|s| s.branch).collect()
    }

    /// Normalized JSON description of everything that influences results.
    pub fn fingerprint(&self) -> Value {
        let strips: Vec<Value> = self
            .strips
            .iter()
            .map(|s| serde_json::json!({ "branch": s.branch, "period": s.period, "fields": s.fields.describe() }))
            .collect();
        serde_json::json!({
            "name": self.name,
            "case": self.case,
            "alpha": self.alpha,
            "R0": self.r0,
            "R1": self.r1,
            "controls": self.controls,
            "background": self.background.describe(),
            "background_periods": self.background_periods,
            "strips": strips,
            "core": self.core.as_ref().map(|c| c.describe()),
            "schedules": self.schedules,
        })
    }
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::Scenario(format!("missing required field `{key}`")))
}

fn as_f64(v: &Value, what: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::Scenario(format!("`{what}` must be a number")))
}

fn parse_controls(v: &Value) -> Result<Vec<[f64; 2]>> {
    match v {
        Value::Array(items) => items
            .iter()
            .map(|item| {
                let pair = item.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                    Error::Scenario("each control must be a pair [a1, a2]".into())
                })?;
                Ok([as_f64(&pair[0], "controls")?, as_f64(&pair[1], "controls")?])
            })
            .collect(),
        Value::Object(obj) => {
            let n = get(obj, "ring")?
                .as_u64()
                .ok_or_else(|| Error::Scenario("`controls.ring` must be a positive integer".into()))?
                as usize;
            let radius = obj.get("radius").map(|r| as_f64(r, "controls.radius")).transpose()?.unwrap_or(1.0);
            let zero = obj.get("include_zero").and_then(Value::as_bool).unwrap_or(true);
            let half = obj.get("half_step").and_then(Value::as_bool).unwrap_or(false);
            let mut out = ring_with_phase(n, radius, half);
            if zero {
                out.push([0.0, 0.0]);
            }
            Ok(out)
        }
        _ => Err(Error::Scenario("`controls` must be a list of pairs or a ring description".into())),
    }
}

/// `n` equally spaced directions starting at `e1`.
pub fn ring(n: usize, radius: f64) -> Vec<[f64; 2]> {
    ring_with_phase(n, radius, false)
}

/// Like [`ring`]; with `half_step` the directions are rotated by π/n. When
/// `4 | n` the set is assembled from one quadrant so that it is exactly
/// invariant under both axis reflections.
pub fn ring_with_phase(n: usize, radius: f64, half_step: bool) -> Vec<[f64; 2]> {
    let shift = if half_step { 0.5 } else { 0.0 };
    let point = |k: usize| {
        let t = 2.0 * std::f64::consts::PI * (k as f64 + shift) / n as f64;
        let (s, c) = t.sin_cos();
        [snap(radius * c), snap(radius * s)]
    };
    if n == 0 || n % 4 != 0 {
        return (0..n).map(point).collect();
    }
    let q = n / 4;
    // mirror partner of k about the diagonal inside the first quadrant
    let partner = |k: usize| if half_step { Some(q - 1 - k) } else if k == 0 { None } else { Some(q - k) };
    let mut quad: Vec<[f64; 2]> = (0..q).map(point).collect();
    for k in 0..q {
        if let Some(j) = partner(k) {
            if j < k {
                quad[k] = [quad[j][1], quad[j][0]];
            } else if j == k {
                let c = quad[k][0].max(quad[k][1]);
                quad[k] = [c, c];
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    out.extend(quad.iter().map(|&[c, s]| [c, s]));
    out.extend(quad.iter().map(|&[c, s]| [-s, c]));
    out.extend(quad.iter().map(|&[c, s]| [-c, -s]));
    out.extend(quad.iter().map(|&[c, s]| [s, -c]));
    out
}

struct FieldCtx<'a> {
    n: usize,
    constants: &'a [(&'a str, f64)],
}

impl FieldCtx<'_> {
    fn expr(&self, v: &Value, what: &str) -> Result<ScalarExpr> {
        match v {
            Value::String(s) => parse_expression_with(s, self.constants)
                .map_err(|e| Error::Scenario(format!("{what}: {e}"))),
            Value::Number(n) => Ok(ScalarExpr::constant(n.as_f64().unwrap_or(f64::NAN))),
            _ => Err(Error::Scenario(format!("{what} must be an expression string"))),
        }
    }

    fn field_pair(&self, v: &Value, what: &str, default_drift: bool) -> Result<FieldPair> {
        let obj = v.as_object().ok_or_else(|| Error::Scenario(format!("`{what}` must be an object")))?;
        let drift = match obj.get("drift") {
            None if default_drift => {
                let a = [
                    ScalarExpr::from_tree(expr::Expr::Var(Var::A1)),
                    ScalarExpr::from_tree(expr::Expr::Var(Var::A2)),
                ];
                vec![[Arc::new(a[0].clone()), Arc::new(a[1].clone())]; self.n]
            }
            None => return Err(Error::Scenario(format!("missing required field `{what}.drift`"))),
            Some(Value::Array(items)) if items.len() == 2 && items.iter().all(|i| !i.is_array()) => {
                let d = [
                    Arc::new(self.expr(&items[0], &format!("{what}.drift[0]"))?),
                    Arc::new(self.expr(&items[1], &format!("{what}.drift[1]"))?),
                ];
                vec![d; self.n]
            }
            Some(Value::Array(items)) => {
                if items.len() != self.n {
                    return Err(Error::Scenario(format!(
                        "`{what}.drift` lists {} entries for {} controls",
                        items.len(),
                        self.n
                    )));
                }
                items
                    .iter()
                    .enumerate()
                    .map(|(k, item)| {
                        let pair = item.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                            Error::Scenario(format!("`{what}.drift[{k}]` must be a pair of expressions"))
                        })?;
                        Ok([
                            Arc::new(self.expr(&pair[0], &format!("{what}.drift[{k}][0]"))?),
                            Arc::new(self.expr(&pair[1], &format!("{what}.drift[{k}][1]"))?),
                        ])
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            Some(_) => return Err(Error::Scenario(format!("`{what}.drift` must be a list"))),
        };
        let cost = match get(obj, "cost").map_err(|_| Error::Scenario(format!("missing required field `{what}.cost`")))? {
            Value::Array(items) => {
                if items.len() != self.n {
                    return Err(Error::Scenario(format!(
                        "`{what}.cost` lists {} entries for {} controls",
                        items.len(),
                        self.n
                    )));
                }
                items
                    .iter()
                    .enumerate()
                    .map(|(k, c)| Ok(Arc::new(self.expr(c, &format!("{what}.cost[{k}]"))?)))
                    .collect::<Result<Vec<_>>>()?
            }
            other => vec![Arc::new(self.expr(other, &format!("{what}.cost"))?); self.n],
        };
        Ok(FieldPair { drift, cost })
    }
}

fn positive(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Scenario(format!("{what} > 0 required (got {v})")))
    }
}

/// Parses a scenario document (JSON text).
pub fn parse_scenario(doc: &str) -> Result<Scenario> {
    let value: Value = serde_json::from_str(doc).map_err(|e| Error::Scenario(format!("malformed JSON: {e}")))?;
    parse_scenario_value(&value)
}

pub fn parse_scenario_value(value: &Value) -> Result<Scenario> {
    let obj = value.as_object().ok_or_else(|| Error::Scenario("document must be a JSON object".into()))?;
    let case: CaseTag = serde_json::from_value(get(obj, "case")?.clone())
        .map_err(|_| Error::Scenario("`case` must be one of case1, case2, case3".into()))?;
    let alpha = positive(as_f64(get(obj, "alpha")?, "alpha")?, "alpha")?;
    let r0 = positive(as_f64(get(obj, "R0")?, "R0")?, "R0")?;
    let r1 = match (case, obj.get("R1")) {
        (CaseTag::Case3, None) => return Err(Error::Scenario("missing required field `R1`".into())),
        (CaseTag::Case3, Some(v)) => {
            let r1 = as_f64(v, "R1")?;
            if !(r1 > std::f64::consts::SQRT_2 * r0) {
                return Err(Error::Scenario("R1 > √2·R0 required".into()));
            }
            r1
        }
        (_, None) => r0,
        (_, Some(v)) => {
            let r1 = as_f64(v, "R1")?;
            if (r1 - r0).abs() > 1e-12 * r0 {
                return Err(Error::Scenario("R1 = R0 required for case1/case2".into()));
            }
            r0
        }
    };
    let controls = parse_controls(get(obj, "controls")?)?;
    if controls.is_empty() {
        return Err(Error::Scenario("control set must be non-empty".into()));
    }
    if controls.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Scenario("control vectors must be finite".into()));
    }
    let control_inradius = hull_inradius(&controls);
    if !(control_inradius > 0.0) {
        return Err(Error::Scenario(
            "the hull of the control set must contain a disc around the origin (r_f > 0)".into(),
        ));
    }
    let n = controls.len();
    let constants = [("R0", r0), ("R1", r1), ("alpha", alpha)];
    let ctx = FieldCtx { n, constants: &constants };

    let bg_value = get(obj, "background")?;
    let background = ctx.field_pair(bg_value, "background", true)?;
    let background_periods = match case {
        CaseTag::Case2 => {
            let periods = bg_value
                .get("periods")
                .and_then(Value::as_array)
                .filter(|a| a.len() == 2)
                .ok_or_else(|| Error::Scenario("missing required field `background.periods` for case2".into()))?;
            Some([
                positive(as_f64(&periods[0], "background.periods")?, "background period")?,
                positive(as_f64(&periods[1], "background.periods")?, "background period")?,
            ])
        }
        _ => {
            if background.uses_y() {
                return Err(Error::Scenario(
                    "background fields must not depend on y1, y2 outside case2".into(),
                ));
            }
            None
        }
    };

    let default_period = background_periods.map(|p| p[0]).unwrap_or(1.0);
    let strip_of = |v: Option<&Value>, branch: Branch, what: &str| -> Result<StripField> {
        match v {
            None | Some(Value::Null) => {
                Ok(StripField { branch, period: default_period, fields: background.clone() })
            }
            Some(v) => {
                let period = match v.get("period") {
                    Some(p) => positive(as_f64(p, &format!("{what}.period"))?, "strip period")?,
                    None => default_period,
                };
                Ok(StripField { branch, period, fields: ctx.field_pair(v, what, true)? })
            }
        }
    };
    let strip_value = obj.get("strip_defect");
    let strips = match case {
        CaseTag::Case3 => {
            let (minus, plus) = match strip_value {
                None | Some(Value::Null) => (None, None),
                Some(v) => (v.get("minus"), v.get("plus")),
            };
            vec![
                strip_of(minus, Branch::Minus, "strip_defect.minus")?,
                strip_of(plus, Branch::Plus, "strip_defect.plus")?,
            ]
        }
        _ => vec![strip_of(strip_value, Branch::Single, "strip_defect")?],
    };
    let core = match obj.get("core_defect") {
        None | Some(Value::Null) => None,
        Some(v) => Some(ctx.field_pair(v, "core_defect", true)?),
    };
    let name = obj.get("name").and_then(Value::as_str).unwrap_or("unnamed").to_string();

    let mut scn = Scenario {
        name,
        case,
        alpha,
        r0,
        r1,
        controls,
        background,
        background_periods,
        strips,
        core,
        schedules: SolverSchedules::placeholder(),
        control_inradius,
    };
    let m_l = validate::cost_bound_estimate(&scn)?;
    scn.schedules = SolverSchedules::resolve(obj.get("schedules"), &scn, m_l)?;
    Ok(scn)
}

#[cfg(test)]
pub(crate) mod tests_support {
    pub(crate) const EIKONAL: &str = r#"{
        "case": "case1", "alpha": 1.0, "R0": 0.5,
        "controls": {"ring": 16},
        "background": {"cost": "1"}
    }"#;
}
