use hj_strata::cell::{
    ball_ergodic, background_hamiltonian, dirichlet_datum, lipschitz, slope_window, slopes, strip_ergodic, symmetric_grid,
    tabulate_effective, tangential_hamiltonian, torus_effective, verify_corrector_slopes, CellOptions,
};
use hj_strata::control::{eval_h_bar, ControlHamiltonian};
use hj_strata::presets::preset;
use hj_strata::scenario::{parse_scenario, Branch, Scenario};

const NO_DEFECT: &str = r#"{"case": "case1", "alpha": 1, "R0": 0.5, "controls": {"ring": 16},
    "background": {"cost": "1"}, "strip_defect": {"period": 1, "cost": "1"}}"#;

fn opts(scn: &Scenario) -> CellOptions {
    CellOptions::from_scenario(scn)
}

#[test]
fn strip_without_defect_gives_min_over_q() {
    let scn = parse_scenario(NO_DEFECT).unwrap();
    let o = opts(&scn);
    let bg = ControlHamiltonian::background(&scn, [0.0; 2]).unwrap();
    for p1 in [-1.0, 0.0, 0.5] {
        let (_, m) = bg.min_over_q(p1);
        for rho in [1.0, 2.0] {
            let est = strip_ergodic(&scn, Branch::Single, [0.0; 2], p1, rho, &o, false).unwrap();
            assert!(est.converged);
            assert!((est.constant - m).abs() <= 2.0 * o.tol_ergodic, "p1 {p1} rho {rho}: {} vs {m}", est.constant);
            assert_eq!(est.corrector.values[est.corrector.grid.anchor], 0.0);
        }
    }
}

#[test]
fn sitting_still_on_unit_cost() {
    let scn = parse_scenario(NO_DEFECT).unwrap();
    let est = strip_ergodic(&scn, Branch::Single, [0.0; 2], 0.0, 1.0, &opts(&scn), true).unwrap();
    assert!((est.constant + 1.0).abs() < 1e-9);
    assert!(est.method_gap().unwrap() < 2.0 * opts(&scn).tol_ergodic);
}

#[test]
fn attractive_strip_at_zero_tangential_slope() {
    let scn = preset("strip_attract").unwrap();
    let o = opts(&scn);
    let t = tangential_hamiltonian(&scn, Branch::Single, [0.0; 2], 0.0, &[1.0, 2.0], &o).unwrap();
    assert!(t.converged);
    assert!((t.value + 0.5).abs() <= o.tol_ergodic, "{}", t.value);
    assert!(t.monotonicity_defect() <= o.tol_ergodic);
}

#[test]
fn tangential_hamiltonian_is_convex_and_above_the_background_minimum() {
    let scn = preset("strip_attract").unwrap();
    let o = opts(&scn);
    let bg = ControlHamiltonian::background(&scn, [0.0; 2]).unwrap();
    let v: Vec<f64> = [-1.0, 0.0, 1.0]
        .iter()
        .map(|&p1| {
            let t = tangential_hamiltonian(&scn, Branch::Single, [0.0; 2], p1, &[1.0, 2.0], &o).unwrap();
            assert!(t.value >= bg.min_over_q(p1).1 - o.tol_ergodic);
            t.value
        })
        .collect();
    assert!(v[1] <= 0.5 * (v[0] + v[2]) + o.tol_ergodic, "{v:?}");
}

#[test]
fn strip_constants_grow_with_the_truncation() {
    let scn = preset("drift_defect").unwrap();
    let o = opts(&scn);
    let mut prev = f64::NEG_INFINITY;
    for rho in [1.0, 2.0, 4.0] {
        let est = strip_ergodic(&scn, Branch::Single, [0.0; 2], 0.4, rho, &o, false).unwrap();
        assert!(est.constant >= prev - o.tol_ergodic, "rho {rho}: {} after {prev}", est.constant);
        prev = est.constant;
    }
}

#[test]
fn ball_constants() {
    let eik = preset("eikonal").unwrap();
    let e = ball_ergodic(&eik, 2.0, &opts(&eik), false).unwrap();
    assert!((e.constant + 1.0).abs() < 1e-9);
    let att = preset("core_attract").unwrap();
    let o = opts(&att);
    let mut prev = f64::NEG_INFINITY;
    for r in [1.0, 2.0] {
        let e = ball_ergodic(&att, r, &o, true).unwrap();
        assert!((e.constant + 0.5).abs() <= o.tol_ergodic, "R {r}: {}", e.constant);
        assert!(e.constant >= prev - o.tol_ergodic);
        assert!(e.method_gap().unwrap() <= 2.0 * o.tol_ergodic);
        // corrector Lipschitz bound does not grow with R
        assert!(lipschitz(&e.corrector) <= 2.0);
        prev = e.constant;
    }
}

#[test]
fn dirichlet_data() {
    let att = preset("core_attract").unwrap();
    let d = dirichlet_datum(&att, &att.schedules.r_list, &opts(&att)).unwrap();
    assert!(d.converged);
    assert!((d.e + 0.5).abs() <= att.schedules.tol_ergodic);
    let rep = preset("core_repulse").unwrap();
    let d = dirichlet_datum(&rep, &rep.schedules.r_list, &opts(&rep)).unwrap();
    assert!((d.e + 1.0).abs() <= rep.schedules.tol_ergodic, "{}", d.e);
    assert!(d.monotonicity_defect() <= rep.schedules.tol_ergodic);
}

#[test]
fn torus_on_y_independent_fields() {
    let scn = parse_scenario(
        r#"{"case": "case2", "alpha": 1, "R0": 0.5, "controls": {"ring": 16},
            "background": {"periods": [1, 1], "cost": "1 + 0.1*x1"},
            "strip_defect": {"period": 1, "cost": "1 + 0.1*x1"}}"#,
    )
    .unwrap();
    let o = opts(&scn);
    for (x0, p) in [([0.0, 0.0], [0.0, 0.0]), ([0.5, 0.0], [0.7, -0.3]), ([-0.25, 0.0], [-1.2, 0.4])] {
        let est = torus_effective(&scn, x0, p, &o).unwrap();
        let exact = eval_h_bar(&scn, x0, p).unwrap().value;
        assert!((est.constant - exact).abs() < 1e-8, "{p:?}: {} vs {exact}", est.constant);
    }
}

#[test]
fn torus_constant_moves_against_a_cost_shift() {
    let doc = |c: f64| {
        format!(
            r#"{{"case": "case2", "alpha": 1, "R0": 0.5, "controls": {{"ring": 16}},
                "background": {{"periods": [1, 1], "cost": "{c} + 0.3*sin(2*pi*y1)*sin(2*pi*y2)"}},
                "strip_defect": {{"period": 1, "cost": "1"}}}}"#
        )
    };
    let a = parse_scenario(&doc(1.0)).unwrap();
    let b = parse_scenario(&doc(1.25)).unwrap();
    let p = [0.4, 0.2];
    let ea = torus_effective(&a, [0.0; 2], p, &opts(&a)).unwrap();
    let eb = torus_effective(&b, [0.0; 2], p, &opts(&b)).unwrap();
    assert!((ea.constant - eb.constant - 0.25).abs() < 1e-7);
}

#[test]
fn eikonal_slopes() {
    let scn = preset("eikonal").unwrap();
    let bg = background_hamiltonian(&scn, [0.0; 2], &opts(&scn)).unwrap();
    let close = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9;
    assert!(close(slopes(bg.as_ref(), 0.0, 0.0).unwrap(), (-1.0, 1.0)));
    assert!(close(slopes(bg.as_ref(), 0.0, 1.0).unwrap(), (-2.0, 2.0)));
    let (q, m) = bg.min_over_q(0.0).unwrap();
    let (lo, hi) = slopes(bg.as_ref(), 0.0, m).unwrap();
    assert!((lo - q).abs() < 1e-6 && (hi - q).abs() < 1e-6, "{lo} {hi} {q}");
    assert!(slopes(bg.as_ref(), 0.0, m - 0.1).is_err());
}

#[test]
fn undisturbed_corrector_is_flat() {
    let scn = parse_scenario(NO_DEFECT).unwrap();
    let o = opts(&scn);
    let est = strip_ergodic(&scn, Branch::Single, [0.0; 2], 0.0, 2.0, &o, false).unwrap();
    assert!(est.corrector.sup_norm() < 1e-9);
    let bg = background_hamiltonian(&scn, [0.0; 2], &o).unwrap();
    let s = slopes(bg.as_ref(), 0.0, est.constant).unwrap();
    let rep = verify_corrector_slopes(&est.corrector, s, slope_window(2.0, est.delta), scn.r0, false, 1e-6).unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn tables_of_a_mirror_symmetric_scenario() {
    let scn = preset("case3_symmetric").unwrap();
    let o = opts(&scn);
    let p1 = symmetric_grid(5, 1.0);
    let t = tabulate_effective(&scn, &p1, None, &o).unwrap();
    let minus = t.branch(Branch::Minus).unwrap();
    let plus = t.branch(Branch::Plus).unwrap();
    for (a, b) in minus.values[0].iter().zip(&plus.values[0]) {
        assert!((a - b).abs() <= o.tol_ergodic, "{a} vs {b}");
    }
    assert!(t.convexity_defect() <= o.tol_ergodic);
}

#[test]
fn table_entry_matches_the_dirichlet_datum() {
    let scn = preset("core_attract").unwrap();
    let o = opts(&scn);
    let t = tabulate_effective(&scn, &symmetric_grid(3, 1.0), None, &o).unwrap();
    let d = dirichlet_datum(&scn, &scn.schedules.r_list, &o).unwrap();
    assert_eq!(t.e, d.e);
    assert_eq!(t.e_history, d.history);
    assert!(t.e >= t.min_h - o.tol_ergodic);
}
