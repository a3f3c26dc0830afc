use std::f64::consts::PI;

use proptest::prelude::*;
use serde_json::json;

use hj_strata::scenario::expr::{BinOp, Expr, Func};
use hj_strata::scenario::{parse_expression, parse_scenario, validate_assumptions_seeded, CaseTag, Env, Var};

fn at_y(y: [f64; 2]) -> Env {
    Env::new([0.0; 2], y, [0.0; 2])
}

#[test]
fn expression_examples() {
    let one = parse_expression("1").unwrap();
    assert_eq!(one.tree(), &Expr::Num(1.0));
    let bump = parse_expression("1 - 0.5*exp(-(y1^2+y2^2))").unwrap();
    assert_eq!(bump.eval(&at_y([0.0, 0.0])).unwrap(), 0.5);
    let w = parse_expression("wrap(y1, 1)").unwrap();
    assert_eq!(w.eval(&at_y([2.25, 0.0])).unwrap(), 0.25);
}

#[test]
fn power_binds_tighter_than_negation() {
    let e = parse_expression("-y1^2").unwrap();
    assert_eq!(e.eval(&at_y([3.0, 0.0])).unwrap(), -9.0);
    let e = parse_expression("2^3^2").unwrap();
    assert_eq!(e.eval(&at_y([0.0; 2])).unwrap(), 512.0);
}

#[test]
fn unknown_identifier_is_reported() {
    let err = parse_expression("1 + zeta").unwrap_err().to_string();
    assert!(err.contains("zeta"), "{err}");
}

fn eikonal_doc() -> serde_json::Value {
    json!({
        "name": "doc",
        "case": "case1",
        "alpha": 1.0,
        "R0": 0.5,
        "controls": {"ring": 16, "radius": 1.0, "include_zero": true},
        "background": {"cost": "1"}
    })
}

#[test]
fn minimal_eikonal_document() {
    let scn = parse_scenario(&eikonal_doc().to_string()).unwrap();
    assert_eq!(scn.case, CaseTag::Case1);
    assert_eq!(scn.n_controls(), 17);
    // inradius of the regular 16-gon inscribed in the unit circle
    assert!((scn.control_inradius - (PI / 16.0).cos()).abs() < 1e-12);
    assert_eq!(scn.r1, scn.r0);
}

#[test]
fn case3_with_small_core_is_rejected() {
    let mut doc = eikonal_doc();
    doc["case"] = json!("case3");
    doc["R1"] = json!(0.5);
    doc["strip_defect"] = json!({"minus": {"period": 1.0, "cost": "1"}, "plus": {"period": 1.0, "cost": "1"}});
    let err = parse_scenario(&doc.to_string()).unwrap_err().to_string();
    assert!(err.contains("R1 > √2·R0 required"), "{err}");
}

#[test]
fn empty_control_set_is_rejected() {
    let mut doc = eikonal_doc();
    doc["controls"] = json!([]);
    assert!(parse_scenario(&doc.to_string()).is_err());
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0f64..100.0).prop_map(Expr::Num),
        prop::sample::select(vec![Var::X1, Var::X2, Var::Y1, Var::Y2]).prop_map(Expr::Var),
        Just(Expr::Named("pi".into(), PI)),
    ]
}

fn tree() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 3, |inner| {
        let op = prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]);
        let unary = prop::sample::select(vec![Func::Sin, Func::Cos, Func::Exp, Func::Abs, Func::Sqrt]);
        let binary = prop::sample::select(vec![Func::Min, Func::Max, Func::Wrap]);
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, l, r)| Expr::Bin(o, Box::new(l), Box::new(r))),
            (unary, inner.clone()).prop_map(|(f, a)| Expr::Call(f, vec![a])),
            (binary, inner.clone(), inner.clone()).prop_map(|(f, a, b)| Expr::Call(f, vec![a, b])),
            (inner.clone(), inner.clone(), inner).prop_map(|(a, b, c)| Expr::Call(Func::Smoothstep, vec![a, b, c])),
        ]
    })
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(e in tree()) {
        let text = e.to_string();
        let back = parse_expression(&text).unwrap();
        prop_assert_eq!(back.tree(), &e, "printed as {}", text);
    }

    #[test]
    fn evaluation_is_deterministic(e in tree(), y1 in -3.0f64..3.0, y2 in -3.0f64..3.0) {
        let s = hj_strata::scenario::ScalarExpr::from_tree(e);
        let env = at_y([y1, y2]);
        match (s.eval(&env), s.eval(&env)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "evaluation flipped between calls"),
        }
    }

    #[test]
    fn accepted_documents_satisfy_the_invariants(
        case3 in any::<bool>(),
        alpha in -0.5f64..3.0,
        r0 in prop::sample::select(vec![0.25, 0.5, 1.0]),
        r1_tenths in 5u32..40,
        ring in 0usize..24,
        radius in 0.2f64..2.0,
        include_zero in any::<bool>(),
        depth in 0.0f64..0.6,
        with_strip in any::<bool>(),
    ) {
        let bump = format!("1 - {depth}*smoothstep(R0, R0/2, abs(y2))");
        let mut doc = json!({
            "name": "random",
            "case": if case3 { "case3" } else { "case1" },
            "alpha": alpha,
            "R0": r0,
            "controls": {"ring": ring, "radius": radius, "include_zero": include_zero},
            "background": {"cost": "1"},
        });
        if case3 {
            doc["R1"] = json!(r1_tenths as f64 * r0 / 10.0);
            doc["strip_defect"] = json!({"minus": {"period": 1.0, "cost": bump}, "plus": {"period": 1.0, "cost": bump}});
        } else if with_strip {
            doc["strip_defect"] = json!({"period": 1.0, "cost": bump});
        }
        if let Ok(scn) = parse_scenario(&doc.to_string()) {
            prop_assert!(scn.alpha > 0.0);
            prop_assert!(scn.r0 > 0.0);
            if scn.case == CaseTag::Case3 {
                prop_assert!(scn.r1 > 2f64.sqrt() * scn.r0);
                prop_assert_eq!(scn.strips.len(), 2);
            } else {
                prop_assert_eq!(scn.r1, scn.r0);
            }
            prop_assert!(scn.n_controls() > 0);
            prop_assert!(scn.control_inradius > 0.0);
            let s = &scn.schedules;
            prop_assert!(s.rho_list.windows(2).all(|w| w[1] > w[0]));
            prop_assert!(s.r_list.windows(2).all(|w| w[1] > w[0]));
            prop_assert!(s.tol_ergodic > 0.0 && s.tol_iter > 0.0 && s.tol_solve > 0.0);
            prop_assert!(s.lambda_factor > 0.0 && s.lambda_factor < 1.0);
        } else {
            // rejection must trace back to a violated clause
            let inradius_ok = ring >= 3;
            let core_ok = !case3 || r1_tenths as f64 / 10.0 > 2f64.sqrt();
            prop_assert!(alpha <= 0.0 || !inradius_ok || !core_ok);
        }
    }
}

#[test]
fn validation_is_deterministic_for_a_seed() {
    let scn = hj_strata::presets::preset("drift_defect").unwrap();
    let a = validate_assumptions_seeded(&scn, 300, 42);
    let b = validate_assumptions_seeded(&scn, 300, 42);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
