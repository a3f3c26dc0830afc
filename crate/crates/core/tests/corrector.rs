use hj_strata::cell::{symmetric_grid, tabulate_effective, BallCell, CellOptions, EffectiveTables};
use hj_strata::control::eval_h;
use hj_strata::corrector::{
    build_subcorrector, check_min_subsolution, classify_regime, field_residual, subsolution_residual, Construction,
    Correctors, Regime, ResidualReport, SubcorrectorSpec,
};
use hj_strata::presets::preset;
use hj_strata::scenario::{parse_scenario, validate_assumptions, Branch, Scenario};
use hj_strata::sl::{GridSpec, ValueField};
use hj_strata::Error;

fn tabulate(scn: &Scenario) -> EffectiveTables {
    let s = &scn.schedules;
    tabulate_effective(scn, &symmetric_grid(s.p1_points, s.p1_half_width), None, &CellOptions::from_scenario(scn)).unwrap()
}

fn certify(scn: &Scenario, c: &mut Correctors<'_>, spec: &SubcorrectorSpec) -> ResidualReport {
    let m_l = validate_assumptions(scn, 1024).m_l;
    let r = subsolution_residual(scn, spec, spec.level, &c.sample_grid().unwrap()).unwrap();
    assert!(r.residual <= 1e-2 * m_l, "{:?}: residual {}", spec.construction, r.residual);
    assert!(r.above_plane <= 1e-12, "{:?}: χ − p·y up to {}", spec.construction, r.above_plane);
    assert_eq!((r.region_violations, r.uncertified), (0, 0));
    r
}

#[test]
fn lemma_regime_constructions() {
    let scn = preset("lemma_regime").unwrap();
    let t = tabulate(&scn);
    // the region split of this preset reaches past 3/4 of the 4R₁ box
    let mut c = Correctors::with_half(&scn, &t, 8.0 * scn.r1).unwrap();

    let p = [0.0, 0.2];
    assert_eq!(classify_regime(&scn, &t, c.background(), p).unwrap(), Regime::AboveTangential);
    let spec = build_subcorrector(&scn, &t, &mut c, p, Regime::AboveTangential).unwrap();
    let q1 = spec.q1.unwrap();
    assert!(q1 > p[0]);
    assert!((t.tangential(Branch::Single, 0.0, q1).unwrap() - spec.level).abs() < 1e-9);
    certify(&scn, &mut c, &spec);

    // asking for a regime that does not hold is an error, not a silent switch
    let err = build_subcorrector(&scn, &t, &mut c, p, Regime::Tangential).unwrap_err();
    assert!(matches!(err, Error::Regime(_)), "{err}");

    let spec = build_subcorrector(&scn, &t, &mut c, [0.5, 0.2], Regime::Tangential).unwrap();
    assert_eq!(spec.construction, Construction::TangentialLeft);
    assert!(spec.p1_tilde.unwrap() < 0.5);
    certify(&scn, &mut c, &spec);
}

#[test]
fn dirichlet_level_follows_eta() {
    let scn = preset("lemma_regime").unwrap();
    let t = tabulate(&scn);
    let mut c = Correctors::with_half(&scn, &t, 8.0 * scn.r1).unwrap();
    let p = [0.0, 0.1];
    assert!(matches!(classify_regime(&scn, &t, c.background(), p).unwrap(), Regime::Dirichlet { .. }));
    // the split radius grows like 1/η; 0.0125 no longer fits the 8R₁ box
    let mut prev: Option<(f64, f64)> = None;
    let mut radius = 0.0;
    for eta in [0.1, 0.05, 0.025] {
        let spec = build_subcorrector(&scn, &t, &mut c, p, Regime::Dirichlet { eta }).unwrap();
        assert!((spec.level - (t.e + eta)).abs() < 1e-15);
        let (lo, hi) = spec.q2_bounds.unwrap();
        assert!(lo < p[1] && p[1] < hi, "({lo}, {hi})");
        if let Some((a, b)) = prev {
            assert!(a <= lo && hi <= b, "bounds widen: ({lo}, {hi}) after ({a}, {b})");
        }
        prev = Some((lo, hi));
        assert!(spec.radius >= radius);
        radius = spec.radius;
        certify(&scn, &mut c, &spec);
    }
}

#[test]
fn unequal_branches_keep_the_dominant_one() {
    let scn = parse_scenario(
        r#"{"name": "lopsided", "case": "case3", "alpha": 1, "R0": 0.5, "R1": 1.0, "controls": {"ring": 16},
            "background": {"cost": "1"},
            "strip_defect": {
                "minus": {"period": 1, "cost": "1 - 0.3*smoothstep(R0, R0/2, abs(y2))"},
                "plus": {"period": 1, "cost": "1 - 0.2*smoothstep(R0, R0/2, abs(y2))"}}}"#,
    )
    .unwrap();
    let t = tabulate(&scn);
    let mut c = Correctors::new(&scn, &t).unwrap();
    let p = [0.3, 0.1];
    assert_eq!(classify_regime(&scn, &t, c.background(), p).unwrap(), Regime::Tangential);
    let spec = build_subcorrector(&scn, &t, &mut c, p, Regime::Tangential).unwrap();
    assert_eq!(spec.construction, Construction::Unequal { dominant: Branch::Minus });
    assert!((spec.level - t.tangential(Branch::Minus, 0.0, p[0]).unwrap()).abs() < 1e-15);
    let pt = spec.p1_tilde.unwrap();
    assert!((t.tangential(Branch::Plus, 0.0, pt).unwrap() - spec.level).abs() < 1e-9);
    certify(&scn, &mut c, &spec);
}

#[test]
fn min_of_equal_fields_is_idempotent() {
    let scn = preset("core_attract").unwrap();
    let o = CellOptions::from_scenario(&scn);
    let est = BallCell::new(&scn, 2.0, &o).unwrap().solve(&o, false, None).unwrap();
    let m = check_min_subsolution(&scn, &est.corrector, &est.corrector, est.constant, est.delta).unwrap();
    assert_eq!(m.residual_min, m.residual_u1);
    assert_eq!(m.residual_u1, m.residual_u2);
    assert!(m.residual_u1 <= 1e-6);

    // ball corrector against a flat plane, a subsolution at this level
    let flat = ValueField::constant(est.corrector.grid.clone(), 0.1);
    let m = check_min_subsolution(&scn, &est.corrector, &flat, est.constant, est.delta).unwrap();
    assert!(m.residual_u2 <= 1e-9, "{m:?}");
    assert!(m.residual_min <= 1e-6, "{m:?}");

    // a tilted plane fails inside the core; the min is no worse than the worse input
    let aff = ValueField::from_fn(est.corrector.grid.clone(), |y| 0.3 * y[0] - 0.2 * y[1] + 0.1);
    let m = check_min_subsolution(&scn, &est.corrector, &aff, est.constant, est.delta).unwrap();
    assert!(m.residual_u2 > 0.1);
    assert!(m.residual_min <= m.residual_u1.max(m.residual_u2) + 1e-12);
}

#[test]
fn crossing_planes() {
    let scn = preset("eikonal").unwrap();
    let g = GridSpec::square(1.0, 0.05).unwrap();
    let u1 = ValueField::from_fn(g.clone(), |y| 0.8 * y[0] - 0.5 * y[1]);
    let u2 = ValueField::from_fn(g, |y| -0.7 * y[0] + 0.6 * y[1]);
    let m = check_min_subsolution(&scn, &u1, &u2, 0.0, 0.05).unwrap();
    assert!(m.residual_u1 <= 0.0 && m.residual_u2 <= 0.0);
    assert!(m.residual_min <= 1e-12, "{m:?}");
    let other = ValueField::from_fn(GridSpec::square(1.0, 0.1).unwrap(), |_| 0.0);
    assert!(check_min_subsolution(&scn, &u1, &other, 0.0, 0.05).is_err());
}

#[test]
fn steep_plane_reports_its_excess() {
    let scn = preset("eikonal").unwrap();
    let p = [0.0, 2.0];
    let u = ValueField::from_fn(GridSpec::square(1.0, 0.05).unwrap(), |y| p[0] * y[0] + p[1] * y[1]);
    let (r, n) = field_residual(&scn, &u, -0.5, 0.05).unwrap();
    let h = eval_h(&scn, [0.0; 2], [0.0, 0.0], p).unwrap().value;
    assert!(n > 0);
    assert!((r - (h + 0.5)).abs() < 1e-12, "{r} vs {}", h + 0.5);
}
