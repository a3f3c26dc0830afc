use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use hj_strata::cell::{symmetric_grid, tabulate_effective, CellOptions, EffectiveTables};
use hj_strata::presets::preset;
use hj_strata::scenario::{parse_scenario, Scenario};
use hj_strata::sl::GridSpec;
use hj_strata::stratified::{effective_grid, junction_update, solve_effective, solve_unstratified, EffectiveOptions, StratifiedScheme};

fn tables(name: &str) -> (Scenario, EffectiveTables) {
    static CACHE: OnceLock<Mutex<HashMap<String, EffectiveTables>>> = OnceLock::new();
    let scn = preset(name).unwrap();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().unwrap().get(name) {
        return (scn, t.clone());
    }
    let s = &scn.schedules;
    let t = tabulate_effective(&scn, &symmetric_grid(s.p1_points, s.p1_half_width), None, &CellOptions::from_scenario(&scn)).unwrap();
    cache.lock().unwrap().insert(name.to_string(), t.clone());
    (scn, t)
}

/// Radial cost vanishing on the disc of radius 0.2 and rising to 1 over 0.1.
fn disc(extra: f64, alpha: f64) -> Scenario {
    parse_scenario(&format!(
        r#"{{"case": "case1", "alpha": {alpha}, "R0": 0.5, "controls": {{"ring": 16}},
            "background": {{"cost": "{extra} + min(1, max(0, 10*(sqrt(x1^2 + x2^2) - 0.2)))"}}}}"#
    ))
    .unwrap()
}

/// Discounted cost of running straight into the disc at unit speed.
fn radial_oracle(r: f64, alpha: f64) -> f64 {
    let cost = |s: f64| (10.0 * (s - 0.2)).clamp(0.0, 1.0);
    let n = 20_000;
    let t_end = r;
    let dt = t_end / n as f64;
    (0..n).map(|k| {
        let t = (k as f64 + 0.5) * dt;
        (-alpha * t).exp() * cost(r - t) * dt
    }).sum()
}

#[test]
fn unit_cost_gives_the_constant_solution() {
    let scn = parse_scenario(
        r#"{"case": "case1", "alpha": 2, "R0": 0.5, "controls": {"ring": 16}, "background": {"cost": "1"}}"#,
    )
    .unwrap();
    let g = effective_grid(&scn).unwrap();
    let u = solve_unstratified(&scn, None, &g, &EffectiveOptions::from_scenario(&scn)).unwrap();
    assert!(u.field.values.iter().all(|v| (v - 0.5).abs() <= scn.schedules.tol_solve));
}

#[test]
fn zero_cost_disc_matches_the_radial_profile() {
    let alpha = 1.0;
    let scn = disc(0.0, alpha);
    let g = effective_grid(&scn).unwrap();
    let u = solve_unstratified(&scn, None, &g, &EffectiveOptions::from_scenario(&scn)).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..=36 {
        let r = 0.025 * k as f64;
        for x in [[r, 0.0], [-r, 0.0], [0.0, r], [0.0, -r]] {
            let v = u.field.values[g.node_at(x).unwrap()];
            worst = worst.max((v - radial_oracle(r, alpha)).abs());
        }
    }
    assert!(worst <= 2.0 * g.h, "worst {worst}, h {}", g.h);
}

#[test]
fn cost_shift_shifts_the_solution() {
    let alpha = 1.5;
    let (a, b) = (disc(0.0, alpha), disc(0.4, alpha));
    let g = effective_grid(&a).unwrap();
    let ua = solve_unstratified(&a, None, &g, &EffectiveOptions::from_scenario(&a)).unwrap();
    let ub = solve_unstratified(&b, None, &g, &EffectiveOptions::from_scenario(&b)).unwrap();
    let tol = a.schedules.tol_solve + b.schedules.tol_solve;
    for (x, y) in ua.field.values.iter().zip(&ub.field.values) {
        assert!((y - x - 0.4 / alpha).abs() <= 2.0 * tol);
    }
}

#[test]
fn without_a_defect_the_junction_is_inactive() {
    let (scn, t) = tables("eikonal");
    let g = effective_grid(&scn).unwrap();
    let o = EffectiveOptions::from_scenario(&scn);
    let s = solve_effective(&scn, &t, &g, &o).unwrap();
    let b = solve_unstratified(&scn, Some(&t), &g, &o).unwrap();
    let d = s.field.max_abs_diff(&b.field).unwrap();
    assert!(d <= 3.0 * (g.h + s.delta), "{d}");
}

#[test]
fn attractive_strip_lowers_the_line_and_keeps_the_mirror_symmetry() {
    let (scn, t) = tables("strip_attract");
    let g = effective_grid(&scn).unwrap();
    let o = EffectiveOptions::from_scenario(&scn);
    let s = solve_effective(&scn, &t, &g, &o).unwrap();
    let b = solve_unstratified(&scn, Some(&t), &g, &o).unwrap();
    let on_line: Vec<usize> = (0..g.len()).filter(|&n| g.coords(n)[1].abs() < 1e-12 && g.coords(n)[0] <= 0.0).collect();
    assert!(on_line.iter().all(|&n| s.field.values[n] < b.field.values[n] - 0.1));
    for n in 0..g.len() {
        let [x, y] = g.coords(n);
        let m = g.node_at([x, -y]).unwrap();
        assert!((s.field.values[n] - s.field.values[m]).abs() <= 1e-9);
    }
    let sub = s.report.line_subsolution.unwrap();
    assert!(sub <= 1e-6, "{sub}");
}

#[test]
fn junction_update_reproduces_the_fixed_point() {
    let (scn, t) = tables("strip_attract");
    let g = effective_grid(&scn).unwrap();
    let o = EffectiveOptions::from_scenario(&scn);
    let s = solve_effective(&scn, &t, &g, &o).unwrap();
    let scheme = StratifiedScheme::new(&scn, &t, &g, &o, true).unwrap();
    let n = g.node_at([-0.5, 0.0]).unwrap();
    let j = junction_update(&scheme, n, &s.field.values).unwrap();
    assert!((j.value - s.field.values[n]).abs() <= 10.0 * o.tol);
    assert!(j.tangential.is_finite());
    assert_eq!(j.value, j.tangential.min(j.upper).min(j.lower).min(j.origin));
}

#[test]
fn point_defects() {
    let (scn, t) = tables("core_attract");
    let g = effective_grid(&scn).unwrap();
    let o = EffectiveOptions::from_scenario(&scn);
    let s = solve_effective(&scn, &t, &g, &o).unwrap();
    assert!((s.at_origin() - 0.5 / scn.alpha).abs() <= 2.0 * t.schedules.tol_ergodic, "{}", s.at_origin());
    assert!(s.report.origin_clamp.unwrap() <= 1e-6);

    let (scn, t) = tables("core_repulse");
    let s = solve_effective(&scn, &t, &g, &o).unwrap();
    let b = solve_unstratified(&scn, Some(&t), &g, &o).unwrap();
    assert!((s.at_origin() - b.at_origin()).abs() <= 1e-6);
    assert!((b.at_origin() - 1.0).abs() <= 1e-6);
}

#[test]
fn ordered_starts_reach_the_same_fixed_point() {
    let (scn, t) = tables("strip_attract");
    let g = GridSpec::square(0.5, scn.schedules.grid_h).unwrap();
    let o = EffectiveOptions::from_scenario(&scn);
    let scheme = StratifiedScheme::new(&scn, &t, &g, &o, true).unwrap();
    let lo = hj_strata::sl::ValueField::from_fn(g.clone(), |_| -2.0);
    let hi = hj_strata::sl::ValueField::from_fn(g.clone(), |_| 2.0);
    let a = hj_strata::stratified::solve_scheme(&scheme, Some(&t), &o, Some(&lo)).unwrap();
    let b = hj_strata::stratified::solve_scheme(&scheme, Some(&t), &o, Some(&hi)).unwrap();
    assert!(a.field.max_abs_diff(&b.field).unwrap() <= 2.0 * o.tol);
}
