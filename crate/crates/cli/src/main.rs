//! `hj-strata` command line: runs one pipeline stage on a scenario file and
//! writes its artifacts plus a `manifest.json` into the output directory.

mod cache;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use hj_strata::cell::{
    dirichlet_datum, strip_ergodic, symmetric_grid, tabulate_effective, tangential_hamiltonian, torus_effective,
    CellOptions, ContinuationSummary, EffectiveTables,
};
use hj_strata::corrector::{build_subcorrector, classify_regime, subsolution_residual, Correctors, Regime};
use hj_strata::epsilon::{convergence_sweep, export_csv, render_svg, solve_epsilon, sweep_grid, Artifact};
use hj_strata::presets::preset_source;
use hj_strata::scenario::{parse_scenario_value, validate_assumptions, validate_assumptions_seeded, Branch, CaseTag, Scenario};
use hj_strata::sl::ValueField;
use hj_strata::stratified::{effective_grid, solve_effective, solve_unstratified, EffectiveOptions};
use hj_strata::Error;

use run::{Fail, Run};

#[derive(Parser)]
#[command(name = "hj-strata", version, about = "Homogenization lab for HJ equations with line and point defects")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario JSON; a missing file named after a preset (e.g. `eikonal.json`) loads that preset.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Comma-separated ε values, overriding the scenario's `eps_list`.
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed of the assumption sampler.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    tol_ergodic: Option<f64>,
    #[arg(long, global = true)]
    tol_iter: Option<f64>,
    #[arg(long, global = true)]
    tol_solve: Option<f64>,
    #[arg(long, global = true)]
    grid_h: Option<f64>,
    /// Half-width of the computational box.
    #[arg(long = "box", global = true)]
    box_half_width: Option<f64>,
    /// Recompute tables even when a cached copy exists.
    #[arg(long, global = true)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the structural constants and seam checks.
    Validate {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Strip cell problem at slope p₁ (the whole ρ schedule unless --rho is given).
    CellStrip {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        p1: f64,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, value_enum)]
        branch: Option<BranchArg>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x1: f64,
    },
    /// Ball cell problem (the whole R schedule unless --radius is given).
    CellBall {
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Periodic cell problem at covector p.
    CellTorus {
        /// Covector as `p1,p2`.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        p: [f64; 2],
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x1: f64,
    },
    /// Tabulate every cell problem of the scenario.
    Tables,
    /// Stratified effective problem and its unstratified baseline.
    Effective,
    /// ε-problems on the sweep grid.
    Eps,
    /// ε-sweep against the effective solution.
    Converge,
    /// Build and certify a subcorrector at covector p.
    CorrectorCheck {
        /// Covector as `p1,p2`.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        p: [f64; 2],
        #[arg(long, value_enum, default_value = "auto")]
        regime: RegimeArg,
        /// Level raise of the Dirichlet and flat regimes.
        #[arg(long)]
        eta: Option<f64>,
        /// Half-width of the sampling box (default 4R₁).
        #[arg(long)]
        half: Option<f64>,
        /// Residual allowed, as a multiple of M_ℓ.
        #[arg(long, default_value_t = 1e-2)]
        tol_corr: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BranchArg {
    Single,
    Minus,
    Plus,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Auto,
    Above,
    Tangential,
    Dirichlet,
    Flat,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"))).collect::<Result<_, _>>()?;
    match v[..] {
        [a, b] => Ok([a, b]),
        _ => Err(format!("expected two comma-separated numbers, got {}", v.len())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn execute(cli: Cli) -> Result<(), Fail> {
    let c = &cli.common;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Fail::usage(format!("--threads: {e}")))?;
    }
    let path = c.scenario.as_deref().ok_or_else(|| Fail::usage("--scenario is required"))?;
    let (scn, source, bytes) = load_scenario(path, c)?;
    let mut run = Run::start(c.out.clone(), &source, &bytes, &scn)?;
    match &cli.command {
        Command::Validate { samples } => validate(&scn, *samples, c.seed, &mut run)?,
        Command::CellStrip { p1, rho, branch, x1 } => cell_strip(&scn, *p1, *rho, *branch, *x1, &mut run)?,
        Command::CellBall { radius } => cell_ball(&scn, *radius, &mut run)?,
        Command::CellTorus { p, x1 } => cell_torus(&scn, *p, *x1, &mut run)?,
        Command::Tables => {
            let t = tables(&scn, c.no_cache, &mut run)?;
            report_tables(&t, &mut run)?;
        }
        Command::Effective => effective(&scn, c.no_cache, &mut run)?,
        Command::Eps => eps(&scn, &mut run)?,
        Command::Converge => converge(&scn, c.no_cache, &mut run)?,
        Command::CorrectorCheck { p, regime, eta, half, tol_corr } => {
            corrector_check(&scn, *p, *regime, *eta, *half, *tol_corr, c.no_cache, &mut run)?
        }
    }
    run.finish()
}

/// Reads the scenario, merging command-line overrides into `schedules`.
fn load_scenario(path: &Path, c: &Common) -> Result<(Scenario, String, Vec<u8>), Fail> {
    let (source, bytes) = match std::fs::read(path) {
        Ok(b) => (path.display().to_string(), b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            match preset_source(stem).filter(|_| path.parent().map_or(true, |p| p.as_os_str().is_empty())) {
                Some(src) => (format!("preset:{stem}"), src.as_bytes().to_vec()),
                None => return Err(Fail::usage(format!("scenario file `{}` not found", path.display()))),
            }
        }
        Err(e) => return Err(Fail::usage(format!("cannot read `{}`: {e}", path.display()))),
    };
    let mut doc: Value =
        serde_json::from_slice(&bytes).map_err(|e| Fail::usage(format!("{}: malformed JSON: {e}", path.display())))?;
    let overrides = [
        ("tol_ergodic", c.tol_ergodic.map(Value::from)),
        ("tol_iter", c.tol_iter.map(Value::from)),
        ("tol_solve", c.tol_solve.map(Value::from)),
        ("grid_h", c.grid_h.map(Value::from)),
        ("box_half_width", c.box_half_width.map(Value::from)),
        ("eps_list", c.eps.clone().map(Value::from)),
    ];
    if overrides.iter().any(|(_, v)| v.is_some()) {
        let obj = doc.as_object_mut().ok_or_else(|| Fail::usage("scenario must be a JSON object"))?;
        let sched = obj.entry("schedules").or_insert_with(|| json!({}));
        let sched = sched.as_object_mut().ok_or_else(|| Fail::usage("`schedules` must be an object"))?;
        for (k, v) in overrides {
            if let Some(v) = v {
                sched.insert(k.to_string(), v);
            }
        }
    }
    let scn = parse_scenario_value(&doc).map_err(|e| Fail::usage(format!("{}: {e}", path.display())))?;
    Ok((scn, source, bytes))
}

fn m_l(scn: &Scenario) -> f64 {
    validate_assumptions(scn, 4096).m_l
}

/// Significant-digit rounding for console output.
fn g(v: f64) -> String {
    if v.is_finite() && v != 0.0 && !(1e-4..1e9).contains(&v.abs()) {
        format!("{v:.6e}")
    } else if v.is_finite() && v != 0.0 {
        let r: f64 = format!("{v:.9e}").parse().unwrap_or(v);
        format!("{r}")
    } else {
        format!("{v}")
    }
}

fn validate(scn: &Scenario, samples: usize, seed: Option<u64>, run: &mut Run) -> Result<(), Fail> {
    let rep = run.timed("validate", || validate_assumptions_seeded(scn, samples, seed.unwrap_or(0)));
    println!("scenario {} ({:?}), {} samples", scn.name, scn.case, rep.samples);
    println!("M_f = {}", g(rep.m_f));
    println!("M_ℓ = {}", g(rep.m_l));
    println!("r_f = {:.6}", rep.r_f);
    println!("L_f = {}, L_ℓ = {}", g(rep.l_f), g(rep.l_l));
    for c in &rep.checks {
        println!("  [{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    run.json("validation.json", &rep)?;
    if !rep.passed() {
        let names: Vec<&str> = rep.failures().map(|c| c.name.as_str()).collect();
        return Err(Fail::usage(format!("assumptions fail: {}", names.join(", "))));
    }
    Ok(())
}

#[derive(Serialize)]
struct CellSummary {
    kind: &'static str,
    constant: f64,
    history: Vec<(f64, f64)>,
    converged: bool,
    iterations: Option<usize>,
    delta: Option<f64>,
    method_gap: Option<f64>,
    continuation: Option<ContinuationSummary>,
}

fn write_corrector(run: &mut Run, stem: &str, w: &ValueField, case: CaseTag) -> Result<(), Fail> {
    run.artifact(&format!("{stem}.csv"), |p| export_csv(Artifact::Field(w, None), p))?;
    run.artifact(&format!("{stem}.svg"), |p| render_svg(Artifact::Field(w, Some(case)), p))
}

fn cell_strip(
    scn: &Scenario,
    p1: f64,
    rho: Option<f64>,
    branch: Option<BranchArg>,
    x1: f64,
    run: &mut Run,
) -> Result<(), Fail> {
    let opts = CellOptions::from_scenario(scn);
    let branch = match branch {
        Some(BranchArg::Single) => Branch::Single,
        Some(BranchArg::Minus) => Branch::Minus,
        Some(BranchArg::Plus) => Branch::Plus,
        None => scn.branches()[0],
    };
    let x0 = [x1, 0.0];
    let summary = match rho {
        Some(rho) => {
            let est = run.timed("strip", || strip_ergodic(scn, branch, x0, p1, rho, &opts, opts.cross_at(true)))?;
            write_corrector(run, "strip_corrector", &est.corrector, scn.case)?;
            CellSummary {
                kind: "strip",
                constant: est.constant,
                history: vec![(rho, est.constant)],
                converged: est.converged,
                iterations: Some(est.iterations),
                delta: Some(est.delta),
                method_gap: est.method_gap(),
                continuation: est.continuation.clone(),
            }
        }
        None => {
            let t = run.timed("strip", || tangential_hamiltonian(scn, branch, x0, p1, &scn.schedules.rho_list, &opts))?;
            let last = t.last.as_ref().expect("non-empty schedule");
            write_corrector(run, "strip_corrector", &last.corrector, scn.case)?;
            CellSummary {
                kind: "strip",
                constant: t.value,
                history: t.history.clone(),
                converged: t.converged,
                iterations: Some(last.iterations),
                delta: Some(last.delta),
                method_gap: last.method_gap(),
                continuation: last.continuation.clone(),
            }
        }
    };
    print_cell(&format!("strip {branch:?}, p1 = {p1}"), &summary);
    finish_cell(run, "cell_strip.json", &summary)
}

fn cell_ball(scn: &Scenario, radius: Option<f64>, run: &mut Run) -> Result<(), Fail> {
    let opts = CellOptions::from_scenario(scn);
    let radii = radius.map_or_else(|| scn.schedules.r_list.clone(), |r| vec![r]);
    let d = run.timed("ball", || dirichlet_datum(scn, &radii, &opts))?;
    if let Some(w) = &d.w {
        write_corrector(run, "ball_corrector", w, scn.case)?;
    }
    let summary = CellSummary {
        kind: "ball",
        constant: d.e,
        history: d.history.clone(),
        converged: d.converged || radius.is_some(),
        iterations: None,
        delta: None,
        method_gap: d.method_gap,
        continuation: None,
    };
    print_cell("ball", &summary);
    finish_cell(run, "cell_ball.json", &summary)
}

fn cell_torus(scn: &Scenario, p: [f64; 2], x1: f64, run: &mut Run) -> Result<(), Fail> {
    let opts = CellOptions::from_scenario(scn);
    let est = run.timed("torus", || torus_effective(scn, [x1, 0.0], p, &opts))?;
    write_corrector(run, "torus_corrector", &est.corrector, scn.case)?;
    let summary = CellSummary {
        kind: "torus",
        constant: est.constant,
        history: vec![(est.truncation, est.constant)],
        converged: est.converged,
        iterations: Some(est.iterations),
        delta: Some(est.delta),
        method_gap: est.method_gap(),
        continuation: est.continuation.clone(),
    };
    print_cell(&format!("torus, p = ({}, {})", p[0], p[1]), &summary);
    finish_cell(run, "cell_torus.json", &summary)
}

fn print_cell(label: &str, s: &CellSummary) {
    println!("{label}: constant {}", g(s.constant));
    for (t, v) in &s.history {
        println!("  truncation {t}: {}", g(*v));
    }
    if let Some(gap) = s.method_gap {
        println!("  continuation gap {}", g(gap));
    }
}

fn finish_cell(run: &mut Run, name: &str, s: &CellSummary) -> Result<(), Fail> {
    run.json(name, s)?;
    if s.converged {
        Ok(())
    } else {
        Err(Fail::solver("cell constants did not settle along the truncation schedule"))
    }
}

/// Tables from the cache, or freshly tabulated and stored.
fn tables(scn: &Scenario, no_cache: bool, run: &mut Run) -> Result<EffectiveTables, Fail> {
    let opts = CellOptions::from_scenario(scn);
    let s = &scn.schedules;
    let p1 = symmetric_grid(s.p1_points, s.p1_half_width);
    let pg = (scn.case == CaseTag::Case2).then(|| symmetric_grid(s.p_points, s.p_half_width));
    let key = cache::key(scn, &p1, pg.as_deref(), &opts);
    if !no_cache {
        if let Some(t) = cache::load(&key) {
            run.note_cache(&key, true);
            return Ok(t);
        }
    }
    let t = run.timed("tables", || tabulate_effective(scn, &p1, pg.as_deref(), &opts))?;
    if let Err(e) = cache::store(&key, &t) {
        eprintln!("warning: table cache not written: {e}");
    }
    run.note_cache(&key, false);
    Ok(t)
}

fn report_tables(t: &EffectiveTables, run: &mut Run) -> Result<(), Fail> {
    run.artifact("tables.csv", |p| export_csv(Artifact::Tables(t), p))?;
    run.artifact("tables.svg", |p| render_svg(Artifact::Tables(t), p))?;
    println!("E = {} (min H̄ = {})", g(t.e), g(t.min_h));
    println!("convexity defect {}", g(t.convexity_defect()));
    if let Some((label, gap)) = t.method_gaps.iter().max_by(|a, b| a.1.total_cmp(&b.1)) {
        println!("largest continuation gap {} ({label})", g(*gap));
    }
    for f in &t.flags {
        println!("  flag: {f}");
    }
    Ok(())
}

fn effective(scn: &Scenario, no_cache: bool, run: &mut Run) -> Result<(), Fail> {
    let t = tables(scn, no_cache, run)?;
    let grid = effective_grid(scn)?;
    let opts = EffectiveOptions::from_scenario(scn);
    let s = run.timed("effective", || solve_effective(scn, &t, &grid, &opts))?;
    let b = run.timed("baseline", || solve_unstratified(scn, Some(&t), &grid, &opts))?;
    run.artifact("effective.csv", |p| export_csv(Artifact::Field(&s.field, None), p))?;
    run.artifact("effective.svg", |p| render_svg(Artifact::Field(&s.field, Some(scn.case)), p))?;
    run.artifact("baseline.csv", |p| export_csv(Artifact::Field(&b.field, None), p))?;
    let diff = s.field.max_abs_diff(&b.field)?;
    println!("u(0) = {} (baseline {}), sup |u − baseline| = {}", g(s.at_origin()), g(b.at_origin()), g(diff));
    println!("{} iterations, residual {}", s.iterations, g(s.residual));
    run.json(
        "effective.json",
        &json!({
            "u_origin": s.at_origin(),
            "baseline_origin": b.at_origin(),
            "sup_baseline_diff": diff,
            "iterations": s.iterations,
            "residual": s.residual,
            "delta": s.delta,
            "report": s.report,
        }),
    )
}

fn eps(scn: &Scenario, run: &mut Run) -> Result<(), Fail> {
    let s = &scn.schedules;
    let grid = sweep_grid(s.box_half_width, &s.eps_list)?;
    let opts = EffectiveOptions::from_scenario(scn);
    let mut rows = Vec::new();
    for &e in &s.eps_list {
        let u = run.timed(&format!("eps {e}"), || solve_epsilon(scn, e, &grid, &opts))?;
        run.artifact(&format!("u_eps_{e}.csv"), |p| export_csv(Artifact::Field(&u.field, None), p))?;
        run.artifact(&format!("u_eps_{e}.svg"), |p| render_svg(Artifact::Field(&u.field, Some(scn.case)), p))?;
        let origin = u.field.values[grid.nearest([0.0, 0.0])];
        println!("ε = {e}: u(0) = {}, {} iterations, Lipschitz {}", g(origin), u.iterations, g(u.lipschitz));
        rows.push(json!({
            "epsilon": e, "u_origin": origin, "iterations": u.iterations,
            "residual": u.residual, "lipschitz": u.lipschitz, "delta": u.delta,
        }));
    }
    run.json("eps.json", &rows)
}

fn converge(scn: &Scenario, no_cache: bool, run: &mut Run) -> Result<(), Fail> {
    let t = tables(scn, no_cache, run)?;
    let s = &scn.schedules;
    let grid = sweep_grid(s.box_half_width, &s.eps_list)?;
    let opts = EffectiveOptions::from_scenario(scn);
    let (rep, eff) = run.timed("sweep", || convergence_sweep(scn, &s.eps_list, &grid, &t, &opts))?;
    run.artifact("report.csv", |p| export_csv(Artifact::Report(&rep), p))?;
    run.artifact("report.svg", |p| render_svg(Artifact::Report(&rep), p))?;
    run.artifact("effective.csv", |p| export_csv(Artifact::Field(&eff.field, None), p))?;
    run.artifact("effective.svg", |p| render_svg(Artifact::Field(&eff.field, Some(scn.case)), p))?;
    run.json("report.json", &rep)?;
    println!("effective u(0) = {}", g(rep.effective_origin));
    for r in &rep.rows {
        println!(
            "ε = {}: sup_K {}, origin {}, M₁ {}, generic {}",
            r.epsilon,
            g(r.sup_err_k),
            g(r.err_origin),
            g(r.err_m1),
            g(r.err_generic)
        );
    }
    if !rep.failures.is_empty() {
        let msgs: Vec<String> = rep.failures.iter().map(|(e, m)| format!("ε = {e}: {m}")).collect();
        return Err(Fail::solver(msgs.join("; ")));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn corrector_check(
    scn: &Scenario,
    p: [f64; 2],
    regime: RegimeArg,
    eta: Option<f64>,
    half: Option<f64>,
    tol_corr: f64,
    no_cache: bool,
    run: &mut Run,
) -> Result<(), Fail> {
    let t = tables(scn, no_cache, run)?;
    let eta = eta.unwrap_or(scn.schedules.eta);
    let mut c = match half {
        Some(h) => Correctors::with_half(scn, &t, h)?,
        None => Correctors::new(scn, &t)?,
    };
    let regime = match regime {
        RegimeArg::Auto => match classify_regime(scn, &t, c.background(), p)? {
            Regime::Dirichlet { .. } => Regime::Dirichlet { eta },
            Regime::Flat { .. } => Regime::Flat { eta },
            r => r,
        },
        RegimeArg::Above => Regime::AboveTangential,
        RegimeArg::Tangential => Regime::Tangential,
        RegimeArg::Dirichlet => Regime::Dirichlet { eta },
        RegimeArg::Flat => Regime::Flat { eta },
    };
    let spec = run.timed("build", || build_subcorrector(scn, &t, &mut c, p, regime)).map_err(|e| {
        let hint = matches!(e, Error::Grid(_)) && half.is_none();
        let mut f = Fail::from(e);
        if hint {
            f.message.push_str(" (a larger sampling box can be set with --half)");
        }
        f
    })?;
    let sample = c.sample_grid()?;
    let r = run.timed("residual", || subsolution_residual(scn, &spec, spec.level, &sample))?;
    run.artifact("subcorrector.csv", |path| write_with(path, |w| spec.write_csv(w)))?;
    run.artifact("residual.csv", |path| write_with(path, |w| r.write_csv(w)))?;
    run.json("corrector.json", &json!({ "spec": spec, "residual": r }))?;
    let allowed = tol_corr * m_l(scn);
    println!("{regime:?} via {:?}, level {}", spec.construction, g(spec.level));
    println!(
        "residual {} (allowed {}), χ − p·y ≤ {}, {} region violations, {} uncertified of {} nodes",
        g(r.residual),
        g(allowed),
        g(r.above_plane),
        r.region_violations,
        r.uncertified,
        r.nodes
    );
    if r.residual <= allowed && r.above_plane <= 1e-12 && r.region_violations == 0 && r.uncertified == 0 {
        Ok(())
    } else {
        Err(Fail::solver("subcorrector failed certification"))
    }
}

fn write_with(path: &Path, f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> hj_strata::Result<()>) -> hj_strata::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    f(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Syntax { .. }
            | Error::UnknownIdent { .. }
            | Error::Eval(_)
            | Error::Scenario(_)
            | Error::Grid(_)
            | Error::Regime(_)
            | Error::Io(_) => 2,
            _ => 1,
        };
        Fail { code, message: e.to_string() }
    }
}
