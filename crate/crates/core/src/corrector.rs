//! Subcorrectors: min-composites of sampled correctors and affine pieces
//! that are subsolutions of `H(0, y, Dχ) ≤ level` with `χ ≤ p·y`, built for
//! each regime of the relative order of E, H̄(0,p) and H̄₁,T(0,p₁).
//!
//! Residuals use forward differences along the dynamics, `max_a −(φ(y +
//! s f_a) − φ(y))/s − ℓ_a`, with `s` the time step of the piece's own cell
//! problem. At a node of the cell grid this is exactly the inequality the
//! semi-Lagrangian fixed point satisfies, so a corrector is certified up to
//! its solver tolerance. A composite is evaluated on its active piece.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{
    background_hamiltonian, lipschitz, slopes, BackgroundHamiltonian, BallCell, CellOptions, EffectiveTables, StripCell,
    TorusCell,
};
use crate::control::local_controls;
use crate::error::{Error, Result};
use crate::scenario::{Branch, CaseTag, FieldPair, Scenario};
use crate::sl::{GridSpec, ValueField};

/// Relations among E, H̄ and H̄₁,T closer than this count as equalities.
pub const REGIME_TOL: f64 = 1e-8;
/// Tabulated slopes of H̄₁,T smaller than this are flat spots.
pub const FLAT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// `max(E, H̄₁,T(p₁)) < H̄(p)` (both branches in case 3).
    AboveTangential,
    /// `max(E, H̄(p)) < H̄₁,T(p₁)`, or `E < H̄(p) = H̄₁,T(p₁)`.
    Tangential,
    /// `E ≥ max(H̄₁,T(p₁), H̄(p))`; the level is raised to `E + η`.
    Dirichlet { eta: f64 },
    /// Case 3 equality with both branches locally flat the wrong way; the
    /// level is raised by `η`.
    Flat { eta: f64 },
}

/// Which case split of the constructions was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// Strip piece at `q₁ > p₁` against `p·y`.
    Above,
    /// `p̃₁ < p₁`: strip piece at `p₁` and the `Π̄(p̃₁)` affine piece.
    TangentialLeft,
    /// `p̃₁ > p₁`: strip piece at `p̃₁`.
    TangentialRight,
    /// Strip piece at `E + η` with the `q̲`, `q̄` affine pieces.
    Dirichlet,
    /// Case 3: minus strip at `q₋ > p₁`, plus strip at `q₊ < p₁`.
    AboveTwoSided,
    /// Case 3, `H̄₁,₋ ≠ H̄₁,₊` at `p₁`; the larger branch is kept at `p₁`.
    Unequal { dominant: Branch },
    /// Case 3, equal branches above `H̄(p)`: each strip piece on its own half-plane.
    Split,
    /// Case 3 equality; `rising` is the branch moved to `p̃₁`.
    Monotone { rising: Branch },
    /// Case 3 flat equality, plus branch moved to level `+η`.
    FlatLifted,
    /// Case 3 analogue of [`Construction::Dirichlet`].
    DirichletTwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `y₁ ≤ 0`
    Left,
    /// `y₁ ≥ 0`
    Right,
}

impl Side {
    fn contains(self, y: [f64; 2]) -> bool {
        match self {
            Side::Left => y[0] <= 0.0,
            Side::Right => y[0] >= 0.0,
        }
    }
}

/// Where a piece is known to be a subsolution at the spec's level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    /// The ball corrector.
    Everywhere,
    /// Where the fields are those of the strip (its half-band, or outside the band).
    Strip(Branch),
    /// Where the fields are those of the background.
    Background,
}

/// A cell-problem corrector with the time step of its scheme.
#[derive(Debug, Clone)]
pub struct Sampled {
    pub field: ValueField,
    pub step: f64,
    /// Ergodic constant of the cell problem.
    pub constant: f64,
}

/// `tilt·y + sampled(y) − offset`, restricted to `side` when given.
#[derive(Debug, Clone)]
pub struct Piece {
    pub label: String,
    pub tilt: [f64; 2],
    pub offset: f64,
    pub validity: Validity,
    pub side: Option<Side>,
    pub sampled: Option<Arc<Sampled>>,
}

impl Piece {
    fn affine(label: impl Into<String>, tilt: [f64; 2], sampled: Option<Arc<Sampled>>) -> Self {
        Piece { label: label.into(), tilt, offset: 0.0, validity: Validity::Background, side: None, sampled }
    }

    /// Value ignoring the side restriction; `None` off the sampled domain.
    pub fn raw(&self, y: [f64; 2]) -> Option<f64> {
        let lin = self.tilt[0] * y[0] + self.tilt[1] * y[1] - self.offset;
        match &self.sampled {
            Some(s) => s.field.interpolate(y).ok().map(|v| v + lin),
            None => Some(lin),
        }
    }

    pub fn value(&self, y: [f64; 2]) -> Option<f64> {
        match self.side {
            Some(s) if !s.contains(y) => Some(f64::INFINITY),
            _ => self.raw(y),
        }
    }

    fn lipschitz(&self) -> f64 {
        self.tilt[0].hypot(self.tilt[1]) + self.sampled.as_ref().map_or(0.0, |s| lipschitz(&s.field))
    }

    fn is_strip(&self) -> bool {
        matches!(self.validity, Validity::Strip(_))
    }

    fn is_ball(&self) -> bool {
        self.validity == Validity::Everywhere
    }

    /// Forward-difference residual at `y`; `None` when a foot leaves the
    /// sampled domain.
    fn residual(&self, controls: &[([f64; 2], f64)], y: [f64; 2], fallback_step: f64) -> Option<f64> {
        let s = self.sampled.as_ref().map_or(fallback_step, |s| s.step);
        let here = self.raw(y)?;
        let mut worst = f64::NEG_INFINITY;
        for &(f, l) in controls {
            let there = self.raw([y[0] + s * f[0], y[1] + s * f[1]])?;
            worst = worst.max(-(there - here) / s - l);
        }
        Some(worst)
    }
}

/// Pieces of χ = min over pieces, with the constants of the construction.
#[derive(Debug, Clone, Serialize)]
pub struct SubcorrectorSpec {
    pub p: [f64; 2],
    pub regime: Regime,
    pub construction: Construction,
    pub level: f64,
    pub q1: Option<f64>,
    pub q1_minus: Option<f64>,
    pub q1_plus: Option<f64>,
    pub p1_tilde: Option<f64>,
    /// `(q̲₂, q̄₂)` of the Dirichlet constructions.
    pub q2_bounds: Option<(f64, f64)>,
    /// Offset of the strip pieces.
    pub c: f64,
    /// Offset of the ball corrector.
    pub big_c: f64,
    /// Radius inside which the ball corrector is active.
    pub radius: f64,
    /// Ordering margin `2h·Lip`.
    pub margin: f64,
    #[serde(skip)]
    pub pieces: Vec<Piece>,
}

impl SubcorrectorSpec {
    /// `(index of the active piece, χ(y))`.
    pub fn eval(&self, y: [f64; 2]) -> Result<(usize, f64)> {
        let mut best = (usize::MAX, f64::INFINITY);
        for (k, piece) in self.pieces.iter().enumerate() {
            let v = piece.value(y).ok_or(Error::OutsideDomain(y[0], y[1]))?;
            if v < best.1 {
                best = (k, v);
            }
        }
        if best.0 == usize::MAX {
            return Err(Error::OutsideDomain(y[0], y[1]));
        }
        Ok(best)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["label", "tilt1", "tilt2", "offset", "validity", "side", "sampled"])?;
        for pc in &self.pieces {
            wr.write_record([
                pc.label.clone(),
                format!("{}", pc.tilt[0]),
                format!("{}", pc.tilt[1]),
                format!("{}", pc.offset),
                format!("{:?}", pc.validity),
                pc.side.map_or("both".into(), |s| format!("{s:?}")),
                pc.sampled.is_some().to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Lazily solved correctors at the truncations needed to cover a sample box.
pub struct Correctors<'a> {
    scn: &'a Scenario,
    pub opts: CellOptions,
    /// Half-width of the sample box.
    pub half: f64,
    pub ball_radius: f64,
    pub rho: f64,
    bg: Box<dyn BackgroundHamiltonian>,
    ball: Option<Arc<Sampled>>,
    cells: HashMap<Branch, StripCell>,
    strips: HashMap<(Branch, u64), Arc<Sampled>>,
    torus: Option<TorusCell>,
    tori: HashMap<[u64; 2], Arc<Sampled>>,
}

fn round_up(v: f64, h: f64) -> f64 {
    (v / h - 1e-9).ceil() * h
}

impl<'a> Correctors<'a> {
    /// Sample box of half-width `4 R₁`.
    pub fn new(scn: &'a Scenario, tables: &EffectiveTables) -> Result<Self> {
        Self::with_half(scn, tables, 4.0 * scn.r1)
    }

    pub fn with_half(scn: &'a Scenario, tables: &EffectiveTables, half: f64) -> Result<Self> {
        let opts = tables.cell.clone();
        let h = opts.h;
        let half = round_up(half, h);
        let reach = 3.0 * opts.step.delta(h, opts.m_f) * opts.m_f;
        let ball_radius = tables.r_list.last().copied().unwrap_or(0.0).max(round_up(2f64.sqrt() * half + reach, h));
        let rho = tables.rho_list.last().copied().unwrap_or(0.0).max(round_up(half + reach, h));
        let torus = match scn.case {
            CaseTag::Case2 => Some(TorusCell::new(scn, [0.0, 0.0], &opts)?),
            _ => None,
        };
        Ok(Correctors {
            scn,
            bg: background_hamiltonian(scn, [0.0, 0.0], &opts)?,
            opts,
            half,
            ball_radius,
            rho,
            ball: None,
            cells: HashMap::new(),
            strips: HashMap::new(),
            torus,
            tori: HashMap::new(),
        })
    }

    pub fn background(&self) -> &dyn BackgroundHamiltonian {
        self.bg.as_ref()
    }

    /// Box of sample nodes, on the lattice of the cell grids.
    pub fn sample_grid(&self) -> Result<GridSpec> {
        GridSpec::square(self.half, self.opts.h)
    }

    /// Ball corrector `w` at the covering radius.
    pub fn ball(&mut self) -> Result<Arc<Sampled>> {
        if let Some(b) = &self.ball {
            return Ok(b.clone());
        }
        let est = BallCell::new(self.scn, self.ball_radius, &self.opts)?.solve(&self.opts, false, None)?;
        if !est.converged {
            return Err(Error::NotConverged(format!("ball corrector at R = {}", self.ball_radius)));
        }
        let s = Arc::new(Sampled { field: est.corrector, step: est.delta, constant: est.constant });
        self.ball = Some(s.clone());
        Ok(s)
    }

    /// Strip corrector `ξ(0, p₁, ·)` of a branch.
    pub fn strip(&mut self, branch: Branch, p1: f64) -> Result<Arc<Sampled>> {
        if let Some(s) = self.strips.get(&(branch, p1.to_bits())) {
            return Ok(s.clone());
        }
        if !self.cells.contains_key(&branch) {
            let cell = StripCell::new(self.scn, branch, [0.0, 0.0], self.rho, &self.opts)?;
            self.cells.insert(branch, cell);
        }
        let est = self.cells[&branch].solve(p1, &self.opts, false, None)?;
        if !est.converged {
            return Err(Error::NotConverged(format!("{branch:?} strip corrector at p₁ = {p1}")));
        }
        let s = Arc::new(Sampled { field: est.corrector, step: est.delta, constant: est.constant });
        self.strips.insert((branch, p1.to_bits()), s.clone());
        Ok(s)
    }

    /// Periodic corrector of the background at `p` (case 2 only).
    pub fn periodic(&mut self, p: [f64; 2]) -> Result<Option<Arc<Sampled>>> {
        let Some(cell) = &self.torus else { return Ok(None) };
        let key = [p[0].to_bits(), p[1].to_bits()];
        if let Some(s) = self.tori.get(&key) {
            return Ok(Some(s.clone()));
        }
        let est = cell.solve(p, &self.opts, false, None)?;
        if !est.converged {
            return Err(Error::NotConverged(format!("torus corrector at p = ({}, {})", p[0], p[1])));
        }
        let s = Arc::new(Sampled { field: est.corrector, step: est.delta, constant: est.constant });
        self.tori.insert(key, s.clone());
        Ok(Some(s))
    }

    fn background_piece(&mut self, label: &str, tilt: [f64; 2]) -> Result<Piece> {
        Ok(Piece::affine(label, tilt, self.periodic(tilt)?))
    }

    fn strip_piece(&mut self, branch: Branch, q: f64, side: Option<Side>) -> Result<Piece> {
        let s = self.strip(branch, q)?;
        let name = match branch {
            Branch::Single => "strip",
            Branch::Minus => "strip-",
            Branch::Plus => "strip+",
        };
        Ok(Piece {
            label: format!("{name}({q:.6})"),
            tilt: [q, 0.0],
            offset: 0.0,
            validity: Validity::Strip(branch),
            side,
            sampled: Some(s),
        })
    }

    fn ball_piece(&mut self) -> Result<Piece> {
        Ok(Piece {
            label: "ball".into(),
            tilt: [0.0, 0.0],
            offset: 0.0,
            validity: Validity::Everywhere,
            side: None,
            sampled: Some(self.ball()?),
        })
    }
}

/// H̄₁,T of a branch at x = 0 as a function of p₁, with its table row.
struct Row<'t> {
    tables: &'t EffectiveTables,
    branch: Branch,
}

impl Row<'_> {
    fn at(&self, p1: f64) -> Result<f64> {
        self.tables.tangential(self.branch, 0.0, p1)
    }

    fn grid(&self) -> &[f64] {
        &self.tables.p1_grid
    }

    fn values(&self) -> Result<&[f64]> {
        Ok(&self.tables.branch(self.branch)?.values[self.tables.x_index(0.0)])
    }

    fn describe(&self) -> String {
        match self.values() {
            Ok(v) => format!("{:?} row {:?}", self.branch, v.iter().map(|x| (x * 1e6).round() / 1e6).collect::<Vec<_>>()),
            Err(_) => format!("{:?} row missing", self.branch),
        }
    }

    /// Tabulated minimizer.
    fn argmin(&self) -> Result<f64> {
        let v = self.values()?;
        let k = (0..v.len()).fold(0, |b, k| if v[k] < v[b] { k } else { b });
        Ok(self.grid()[k])
    }

    /// First crossing of `level` walking from `start` in direction `dir`.
    fn crossing(&self, start: f64, dir: f64, level: f64) -> Result<f64> {
        let g = self.grid();
        let dp = g[1] - g[0];
        let (lo, hi) = (g[0], g[g.len() - 1]);
        let f = |x: f64| -> Result<f64> { Ok(self.at(x)? - level) };
        let s0 = f(start)?;
        if s0 == 0.0 {
            return Err(Error::Bracket(format!("level {level} is attained at the start p₁ = {start}; {}", self.describe())));
        }
        let mut a = start;
        loop {
            let b = (a + dir * dp).clamp(lo, hi);
            if b == a {
                return Err(Error::Bracket(format!(
                    "no p₁ {} {start} with H̄₁,T = {level} inside the table; {}",
                    if dir > 0.0 { ">" } else { "<" },
                    self.describe()
                )));
            }
            if f(b)?.signum() != s0.signum() {
                let (mut x0, mut x1) = (a, b);
                for _ in 0..200 {
                    let m = 0.5 * (x0 + x1);
                    if m == x0 || m == x1 {
                        break;
                    }
                    if f(m)?.signum() == s0.signum() {
                        x0 = m;
                    } else {
                        x1 = m;
                    }
                }
                return Ok(0.5 * (x0 + x1));
            }
            a = b;
        }
    }

    /// Tabulated one-sided slopes around `p1`.
    fn slopes_at(&self, p1: f64) -> Result<(f64, f64)> {
        let g = self.grid();
        let dp = g[1] - g[0];
        let (lo, hi) = (g[0], g[g.len() - 1]);
        let l = (self.at(p1)? - self.at((p1 - dp).max(lo))?) / dp;
        let r = (self.at((p1 + dp).min(hi))? - self.at(p1)?) / dp;
        Ok((l, r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Trend {
    Increasing,
    Decreasing,
    Mixed,
}

fn trend(row: &Row, p1: f64) -> Result<Trend> {
    let (l, r) = row.slopes_at(p1)?;
    if l.abs() <= FLAT_TOL || r.abs() <= FLAT_TOL {
        return Err(Error::Regime(format!(
            "flat spot of H̄₁,T at p₁ = {p1} within table resolution (slopes {l:.3e}, {r:.3e}); {}",
            row.describe()
        )));
    }
    Ok(if l > 0.0 && r > 0.0 {
        Trend::Increasing
    } else if l < 0.0 && r < 0.0 {
        Trend::Decreasing
    } else {
        Trend::Mixed
    })
}

/// The three quantities the regime is read from.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegimeData {
    pub e: f64,
    pub h_bar: f64,
    /// `H̄₁,T(0,p₁)`, or `(H̄₁,₋,T, H̄₁,₊,T)` in case 3.
    pub tangential: (f64, f64),
}

impl RegimeData {
    fn t(&self) -> f64 {
        self.tangential.0.max(self.tangential.1)
    }
}

pub fn regime_data(scn: &Scenario, tables: &EffectiveTables, bg: &dyn BackgroundHamiltonian, p: [f64; 2]) -> Result<RegimeData> {
    let tangential = match scn.case {
        CaseTag::Case3 => (tables.tangential(Branch::Minus, 0.0, p[0])?, tables.tangential(Branch::Plus, 0.0, p[0])?),
        _ => {
            let t = tables.tangential(Branch::Single, 0.0, p[0])?;
            (t, t)
        }
    };
    Ok(RegimeData { e: tables.e, h_bar: bg.value(p)?, tangential })
}

/// Regime of `p`, with `η` taken from the schedules.
pub fn classify_regime(scn: &Scenario, tables: &EffectiveTables, bg: &dyn BackgroundHamiltonian, p: [f64; 2]) -> Result<Regime> {
    let d = regime_data(scn, tables, bg, p)?;
    let eta = scn.schedules.eta;
    let (e, h, t) = (d.e, d.h_bar, d.t());
    Ok(if h > e.max(t) + REGIME_TOL {
        Regime::AboveTangential
    } else if t > e.max(h) + REGIME_TOL {
        Regime::Tangential
    } else if (h - t).abs() <= REGIME_TOL && e < h - REGIME_TOL {
        match scn.case {
            CaseTag::Case3 if (d.tangential.0 - d.tangential.1).abs() <= REGIME_TOL => {
                let minus = trend(&Row { tables, branch: Branch::Minus }, p[0])?;
                let plus = trend(&Row { tables, branch: Branch::Plus }, p[0])?;
                if minus == Trend::Decreasing || plus == Trend::Increasing {
                    Regime::Tangential
                } else {
                    Regime::Flat { eta }
                }
            }
            _ => Regime::Tangential,
        }
    } else {
        Regime::Dirichlet { eta }
    })
}

fn mismatch(regime: Regime, d: &RegimeData) -> Error {
    Error::Regime(format!(
        "{regime:?} does not hold: E = {:.6}, H̄(0,p) = {:.6}, H̄₁,T(0,p₁) = ({:.6}, {:.6})",
        d.e, d.h_bar, d.tangential.0, d.tangential.1
    ))
}

/// Assembles the subcorrector of `regime` at `p`.
pub fn build_subcorrector(
    scn: &Scenario,
    tables: &EffectiveTables,
    correctors: &mut Correctors<'_>,
    p: [f64; 2],
    regime: Regime,
) -> Result<SubcorrectorSpec> {
    if tables.case != scn.case {
        return Err(Error::Scenario("tables belong to a different case".into()));
    }
    let d = regime_data(scn, tables, correctors.background(), p)?;
    let found = classify_regime(scn, tables, correctors.background(), p)?;
    let same = matches!(
        (found, regime),
        (Regime::AboveTangential, Regime::AboveTangential)
            | (Regime::Tangential, Regime::Tangential)
            | (Regime::Dirichlet { .. }, Regime::Dirichlet { .. })
            | (Regime::Flat { .. }, Regime::Flat { .. })
    );
    if !same {
        return Err(mismatch(regime, &d));
    }
    let mut spec = SubcorrectorSpec {
        p,
        regime,
        construction: Construction::Above,
        level: f64::NAN,
        q1: None,
        q1_minus: None,
        q1_plus: None,
        p1_tilde: None,
        q2_bounds: None,
        c: 0.0,
        big_c: 0.0,
        radius: scn.r1,
        margin: 0.0,
        pieces: Vec::new(),
    };
    let mut pieces = vec![correctors.ball_piece()?];
    match scn.case {
        CaseTag::Case1 | CaseTag::Case2 => {
            let row = Row { tables, branch: Branch::Single };
            match regime {
                Regime::AboveTangential => {
                    spec.level = d.h_bar;
                    let q1 = row.crossing(p[0], 1.0, spec.level)?;
                    spec.q1 = Some(q1);
                    pieces.push(correctors.strip_piece(Branch::Single, q1, None)?);
                    pieces.push(correctors.background_piece("p", p)?);
                }
                Regime::Tangential => {
                    spec.level = d.tangential.0;
                    let m = row.argmin()?;
                    if (m - p[0]).abs() < 1e-12 {
                        return Err(Error::Regime(format!("p₁ = {} is the tabulated minimizer of H̄₁,T", p[0])));
                    }
                    let dir = if p[0] > m { -1.0 } else { 1.0 };
                    let pt = row.crossing(m, dir, spec.level)?;
                    spec.p1_tilde = Some(pt);
                    pieces.push(correctors.background_piece("p", p)?);
                    if p[0] > pt {
                        spec.construction = Construction::TangentialLeft;
                        let (_, pi_up) = slopes(correctors.background(), pt, spec.level)?;
                        pieces.push(correctors.strip_piece(Branch::Single, p[0], None)?);
                        pieces.push(correctors.background_piece("pi", [pt, pi_up])?);
                    } else {
                        spec.construction = Construction::TangentialRight;
                        pieces.push(correctors.strip_piece(Branch::Single, pt, None)?);
                    }
                }
                Regime::Dirichlet { eta } => {
                    spec.construction = Construction::Dirichlet;
                    spec.level = d.e + eta;
                    let q1 = row.crossing(p[0], 1.0, spec.level)?;
                    let (lo, hi) = slopes(correctors.background(), p[0], spec.level)?;
                    spec.q1 = Some(q1);
                    spec.q2_bounds = Some((lo, hi));
                    pieces.push(correctors.strip_piece(Branch::Single, q1, None)?);
                    pieces.push(correctors.background_piece("q_lower", [p[0], lo])?);
                    pieces.push(correctors.background_piece("q_upper", [p[0], hi])?);
                }
                Regime::Flat { .. } => return Err(mismatch(regime, &d)),
            }
        }
        CaseTag::Case3 => {
            let minus = Row { tables, branch: Branch::Minus };
            let plus = Row { tables, branch: Branch::Plus };
            let (tm, tp) = d.tangential;
            match regime {
                Regime::AboveTangential => {
                    spec.construction = Construction::AboveTwoSided;
                    spec.level = d.h_bar;
                    let qm = minus.crossing(p[0], 1.0, spec.level)?;
                    let qp = plus.crossing(p[0], -1.0, spec.level)?;
                    spec.q1_minus = Some(qm);
                    spec.q1_plus = Some(qp);
                    pieces.push(correctors.strip_piece(Branch::Minus, qm, None)?);
                    pieces.push(correctors.strip_piece(Branch::Plus, qp, None)?);
                    pieces.push(correctors.background_piece("p", p)?);
                }
                Regime::Tangential if (tm - tp).abs() > REGIME_TOL => {
                    spec.level = tm.max(tp);
                    let (dominant, other, other_row, dir) =
                        if tm > tp { (Branch::Minus, Branch::Plus, &plus, -1.0) } else { (Branch::Plus, Branch::Minus, &minus, 1.0) };
                    spec.construction = Construction::Unequal { dominant };
                    let pt = other_row.crossing(p[0], dir, spec.level)?;
                    spec.p1_tilde = Some(pt);
                    pieces.push(correctors.background_piece("p", p)?);
                    pieces.push(correctors.strip_piece(dominant, p[0], None)?);
                    pieces.push(correctors.strip_piece(other, pt, None)?);
                }
                Regime::Tangential if tm > d.h_bar + REGIME_TOL => {
                    spec.construction = Construction::Split;
                    spec.level = tm.max(tp);
                    pieces.push(correctors.background_piece("p", p)?);
                    pieces.push(correctors.strip_piece(Branch::Minus, p[0], Some(Side::Left))?);
                    pieces.push(correctors.strip_piece(Branch::Plus, p[0], Some(Side::Right))?);
                }
                Regime::Tangential => {
                    spec.level = tm.max(tp);
                    let mid = 0.5 * (d.e + spec.level);
                    let (rising, kept, row, dir) = if trend(&plus, p[0])? == Trend::Increasing {
                        (Branch::Plus, Branch::Minus, &plus, -1.0)
                    } else {
                        (Branch::Minus, Branch::Plus, &minus, 1.0)
                    };
                    spec.construction = Construction::Monotone { rising };
                    let pt = row.crossing(p[0], dir, mid)?;
                    spec.p1_tilde = Some(pt);
                    pieces.push(correctors.strip_piece(rising, pt, None)?);
                    pieces.push(correctors.strip_piece(kept, p[0], None)?);
                    pieces.push(correctors.background_piece("p", p)?);
                }
                Regime::Flat { eta } => {
                    spec.construction = Construction::FlatLifted;
                    spec.level = tm.max(tp) + eta;
                    let pt = plus.crossing(p[0], -1.0, spec.level)?;
                    spec.p1_tilde = Some(pt);
                    pieces.push(correctors.strip_piece(Branch::Plus, pt, None)?);
                    pieces.push(correctors.strip_piece(Branch::Minus, p[0], None)?);
                    pieces.push(correctors.background_piece("p", p)?);
                }
                Regime::Dirichlet { eta } => {
                    spec.construction = Construction::DirichletTwoSided;
                    spec.level = d.e + eta;
                    let qm = minus.crossing(p[0], 1.0, spec.level)?;
                    let qp = plus.crossing(p[0], -1.0, spec.level)?;
                    let (lo, hi) = slopes(correctors.background(), p[0], spec.level)?;
                    spec.q1_minus = Some(qm);
                    spec.q1_plus = Some(qp);
                    spec.q2_bounds = Some((lo, hi));
                    pieces.push(correctors.strip_piece(Branch::Minus, qm, None)?);
                    pieces.push(correctors.strip_piece(Branch::Plus, qp, None)?);
                    pieces.push(correctors.background_piece("q_lower", [p[0], lo])?);
                    pieces.push(correctors.background_piece("q_upper", [p[0], hi])?);
                }
            }
        }
    }
    let grid = correctors.sample_grid()?;
    assemble(scn, &grid, &mut spec, pieces)?;
    Ok(spec)
}

/// Half-band on which a strip's fields are in force.
fn strip_side(b: Branch) -> Side {
    match b {
        Branch::Plus => Side::Right,
        _ => Side::Left,
    }
}

/// Chooses `c`, the radius and `C` by scanning the sample nodes:
/// strip pieces under the background pieces on their half-band, every
/// band node outside the radius won by a piece valid there, and the ball
/// corrector under everything inside the radius.
fn assemble(scn: &Scenario, grid: &GridSpec, spec: &mut SubcorrectorSpec, mut pieces: Vec<Piece>) -> Result<()> {
    let nodes: Vec<[f64; 2]> = (0..grid.len()).map(|n| grid.coords(n)).collect();
    let raw: Vec<Vec<f64>> = pieces
        .iter()
        .map(|pc| {
            nodes
                .iter()
                .map(|&y| pc.value(y).ok_or(Error::OutsideDomain(y[0], y[1])))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let lip = pieces.iter().map(Piece::lipschitz).fold(0.0, f64::max);
    let margin = 2.0 * grid.h * lip;
    let band = |y: [f64; 2]| y[1].abs() <= scn.r0 + 1e-12;
    let min_of = |n: usize, pick: &dyn Fn(&Piece) -> bool, shift: &dyn Fn(&Piece) -> f64| {
        pieces.iter().enumerate().filter(|(_, pc)| pick(pc)).map(|(k, pc)| raw[k][n] - shift(pc)).fold(f64::INFINITY, f64::min)
    };

    let mut c = f64::NEG_INFINITY;
    for (n, &y) in nodes.iter().enumerate() {
        if !band(y) {
            continue;
        }
        let bg = min_of(n, &|pc: &Piece| pc.validity == Validity::Background, &|_| 0.0);
        for (k, pc) in pieces.iter().enumerate() {
            if let Validity::Strip(b) = pc.validity {
                if strip_side(b).contains(y) && raw[k][n].is_finite() {
                    c = c.max(raw[k][n] - bg);
                }
            }
        }
    }
    let c = if c.is_finite() { c + margin } else { 0.0 };
    let shift = |pc: &Piece| if pc.is_strip() { c } else { 0.0 };

    let mut radius = scn.r1;
    for (n, &y) in nodes.iter().enumerate() {
        if !band(y) {
            continue;
        }
        let r = y[0].hypot(y[1]);
        if r < scn.r1 {
            continue;
        }
        let fields = scn.fields_at(y);
        let valid = |pc: &Piece| !pc.is_ball() && valid_at(scn, pc.validity, fields, y);
        let invalid = |pc: &Piece| !pc.is_ball() && !valid_at(scn, pc.validity, fields, y);
        if min_of(n, &valid, &shift) + margin > min_of(n, &invalid, &shift) {
            radius = radius.max(r + grid.h);
        }
    }
    let half = match grid.kind {
        crate::sl::DomainKind::Box { half } => half[0].min(half[1]),
        _ => f64::INFINITY,
    };
    if radius > 0.75 * half {
        return Err(Error::Grid(format!(
            "the region split needs R = {radius:.3}, beyond 3/4 of the sample box half-width {half}"
        )));
    }

    let mut big_c = f64::NEG_INFINITY;
    let ball = pieces.iter().position(Piece::is_ball).expect("ball piece");
    for (n, &y) in nodes.iter().enumerate() {
        if y[0].hypot(y[1]) <= radius + 1e-12 {
            big_c = big_c.max(raw[ball][n] - min_of(n, &|pc: &Piece| !pc.is_ball(), &shift));
        }
    }
    let big_c = big_c + margin;

    for pc in pieces.iter_mut() {
        pc.offset = if pc.is_ball() { big_c } else { shift(pc) };
    }
    spec.c = c;
    spec.big_c = big_c;
    spec.radius = radius;
    spec.margin = margin;
    spec.pieces = pieces;
    Ok(())
}

fn valid_at(scn: &Scenario, v: Validity, fields: &FieldPair, y: [f64; 2]) -> bool {
    let background = std::ptr::eq(fields, &scn.background);
    match v {
        Validity::Everywhere => true,
        Validity::Background => background,
        Validity::Strip(b) => {
            scn.strip(b).map(|s| std::ptr::eq(fields, &s.fields)).unwrap_or(false) || (background && y[1].abs() >= scn.r0)
        }
    }
}

/// Outcome of a residual scan.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub level: f64,
    /// Time step of the forward differences.
    pub step: f64,
    /// Largest positive `H(0, y, Dχ) − level` of the composite χ over
    /// certified nodes.
    pub residual: f64,
    /// Same for the active piece alone at each node.
    pub piece_residual: f64,
    /// `max (χ(y) − p·y)`.
    pub above_plane: f64,
    /// Nodes whose active piece is not a subsolution there by construction.
    pub region_violations: usize,
    /// Nodes whose difference quotient left a sampled domain.
    pub uncertified: usize,
    pub nodes: usize,
    /// `(label, active nodes, largest composite residual)`.
    pub per_piece: Vec<(String, usize, f64)>,
    #[serde(skip)]
    pub samples: Vec<ResidualSample>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualSample {
    pub y: [f64; 2],
    pub chi: f64,
    pub active: usize,
    pub residual: f64,
    pub valid: bool,
}

impl ResidualReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["y1", "y2", "chi", "active", "residual", "valid"])?;
        for s in &self.samples {
            wr.write_record([
                format!("{}", s.y[0]),
                format!("{}", s.y[1]),
                format!("{}", s.chi),
                s.active.to_string(),
                format!("{}", s.residual),
                s.valid.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

impl SubcorrectorSpec {
    /// Common time step of the sampled pieces, or `fallback` for a purely
    /// affine χ.
    pub fn step(&self, fallback: f64) -> f64 {
        self.pieces.iter().filter_map(|pc| pc.sampled.as_ref().map(|s| s.step)).fold(None, |a: Option<f64>, s| Some(a.map_or(s, |a| a.max(s)))).unwrap_or(fallback)
    }

    /// Forward-difference residual of χ itself at `y`; `None` when a foot
    /// leaves a sampled domain.
    fn residual(&self, controls: &[([f64; 2], f64)], y: [f64; 2], here: f64, s: f64) -> Option<f64> {
        let mut worst = f64::NEG_INFINITY;
        for &(f, l) in controls {
            let there = self.eval([y[0] + s * f[0], y[1] + s * f[1]]).ok()?.1;
            worst = worst.max(-(there - here) / s - l);
        }
        Some(worst)
    }
}

/// Residual of χ at `level` on the nodes of `sample_grid`, with the
/// residual of the active piece and the structural checks alongside.
pub fn subsolution_residual(scn: &Scenario, spec: &SubcorrectorSpec, level: f64, sample_grid: &GridSpec) -> Result<ResidualReport> {
    let step = spec.step(sample_grid.h);
    let samples: Vec<Result<(ResidualSample, Option<f64>, bool)>> = (0..sample_grid.len())
        .into_par_iter()
        .map(|n| {
            let y = sample_grid.coords(n);
            let (k, chi) = spec.eval(y)?;
            let fields = scn.fields_at(y);
            let mut controls = Vec::with_capacity(scn.n_controls());
            local_controls(scn, fields, [0.0, 0.0], y, &mut controls)?;
            let pc = &spec.pieces[k];
            let own = pc.residual(&controls, y, sample_grid.h);
            let r = spec.residual(&controls, y, chi, step);
            let s = ResidualSample {
                y,
                chi,
                active: k,
                residual: r.map_or(f64::NAN, |r| r - level),
                valid: valid_at(scn, pc.validity, fields, y),
            };
            Ok((s, own.map(|r| r - level), r.is_some()))
        })
        .collect();
    let mut report = ResidualReport {
        level,
        step,
        residual: 0.0,
        piece_residual: 0.0,
        above_plane: f64::NEG_INFINITY,
        region_violations: 0,
        uncertified: 0,
        nodes: sample_grid.len(),
        per_piece: spec.pieces.iter().map(|pc| (pc.label.clone(), 0, f64::NEG_INFINITY)).collect(),
        samples: Vec::with_capacity(sample_grid.len()),
    };
    for out in samples {
        let (s, own, certified) = out?;
        report.above_plane = report.above_plane.max(s.chi - spec.p[0] * s.y[0] - spec.p[1] * s.y[1]);
        if !s.valid {
            report.region_violations += 1;
        }
        let slot = &mut report.per_piece[s.active];
        slot.1 += 1;
        match (certified, own) {
            (true, Some(own)) => {
                slot.2 = slot.2.max(s.residual);
                report.residual = report.residual.max(s.residual);
                report.piece_residual = report.piece_residual.max(own);
            }
            _ => report.uncertified += 1,
        }
        report.samples.push(s);
    }
    Ok(report)
}

/// Forward-difference residual of a nodal field at `level` with time step
/// `step`; nodes whose feet leave the grid are skipped. Returns
/// `(max residual, certified nodes)`.
pub fn field_residual(scn: &Scenario, u: &ValueField, level: f64, step: f64) -> Result<(f64, usize)> {
    let rs = node_residuals(scn, u, step)?;
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for r in rs.into_iter().flatten() {
        worst = worst.max(r - level);
        count += 1;
    }
    Ok((worst, count))
}

fn node_residuals(scn: &Scenario, u: &ValueField, step: f64) -> Result<Vec<Option<f64>>> {
    let g = &u.grid;
    (0..g.len())
        .into_par_iter()
        .map(|n| {
            if !g.active(n) {
                return Ok(None);
            }
            let y = g.coords(n);
            let mut controls = Vec::with_capacity(scn.n_controls());
            local_controls(scn, scn.fields_at(y), [0.0, 0.0], y, &mut controls)?;
            let mut worst = f64::NEG_INFINITY;
            for &(f, l) in &controls {
                match u.interpolate([y[0] + step * f[0], y[1] + step * f[1]]) {
                    Ok(v) => worst = worst.max(-(v - u.values[n]) / step - l),
                    Err(_) => return Ok(None),
                }
            }
            Ok(Some(worst))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MinCheck {
    pub residual_u1: f64,
    pub residual_u2: f64,
    pub residual_min: f64,
    pub nodes: usize,
}

/// Residual of the composite `m = min(u1, u2)` next to the residuals of the
/// inputs. The feet are evaluated as `min(I u1, I u2)`, so the composite is
/// the pointwise minimum of the two interpolants. Nodes where any foot
/// leaves the grid are skipped.
pub fn check_min_subsolution(scn: &Scenario, u1: &ValueField, u2: &ValueField, level: f64, step: f64) -> Result<MinCheck> {
    if !u1.grid.same_lattice(&u2.grid) {
        return Err(Error::GridMismatch("min-composite inputs live on different grids".into()));
    }
    let r1 = node_residuals(scn, u1, step)?;
    let r2 = node_residuals(scn, u2, step)?;
    let g = &u1.grid;
    let rm: Vec<Option<f64>> = (0..g.len())
        .into_par_iter()
        .map(|n| {
            if r1[n].is_none() || r2[n].is_none() {
                return Ok(None);
            }
            let y = g.coords(n);
            let here = u1.values[n].min(u2.values[n]);
            let mut controls = Vec::with_capacity(scn.n_controls());
            local_controls(scn, scn.fields_at(y), [0.0, 0.0], y, &mut controls)?;
            let mut worst = f64::NEG_INFINITY;
            for &(f, l) in &controls {
                let z = [y[0] + step * f[0], y[1] + step * f[1]];
                let there = u1.interpolate(z)?.min(u2.interpolate(z)?);
                worst = worst.max(-(there - here) / step - l);
            }
            Ok(Some(worst))
        })
        .collect::<Result<_>>()?;
    let mut out = MinCheck {
        residual_u1: f64::NEG_INFINITY,
        residual_u2: f64::NEG_INFINITY,
        residual_min: f64::NEG_INFINITY,
        nodes: 0,
    };
    for n in 0..g.len() {
        let (Some(a), Some(b), Some(m)) = (r1[n], r2[n], rm[n]) else { continue };
        out.nodes += 1;
        out.residual_u1 = out.residual_u1.max(a - level);
        out.residual_u2 = out.residual_u2.max(b - level);
        out.residual_min = out.residual_min.max(m - level);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    #[test]
    fn affine_pair_keeps_the_eikonal_level() {
        let scn = preset("eikonal").unwrap();
        let g = GridSpec::square(1.0, 0.05).unwrap();
        let u1 = ValueField::from_fn(g.clone(), |y| 0.6 * y[0] + 0.3 * y[1]);
        let u2 = ValueField::from_fn(g, |y| -0.5 * y[0] + 0.1 * y[1] + 0.05);
        let m = check_min_subsolution(&scn, &u1, &u2, 0.0, 0.05).unwrap();
        assert!(m.residual_u1 <= 1e-12 && m.residual_u2 <= 1e-12);
        assert!(m.residual_min <= m.residual_u1.max(m.residual_u2) + 1e-12);
    }

    #[test]
    fn steep_plane_reports_its_excess() {
        let scn = preset("eikonal").unwrap();
        let g = GridSpec::square(1.0, 0.05).unwrap();
        let p = [1.5, 0.0];
        let u = ValueField::from_fn(g, |y| p[0] * y[0] + p[1] * y[1]);
        let (r, n) = field_residual(&scn, &u, 0.0, 0.05).unwrap();
        let h = crate::control::eval_h(&scn, [0.0; 2], [3.0, 3.0], p).unwrap().value;
        assert!(n > 0);
        assert!((r - h).abs() < 1e-12, "{r} vs {h}");
    }
}
