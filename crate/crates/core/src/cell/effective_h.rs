use std::collections::HashMap;
use std::sync::Mutex;

use super::torus::TorusCell;
use super::CellOptions;
use crate::control::ControlHamiltonian;
use crate::error::{Error, Result};
use crate::scenario::{CaseTag, Scenario};
use crate::sl::ValueField;

/// The background effective Hamiltonian `H̄(x, ·)` at a frozen `x`: control
/// form in cases 1 and 3, torus cell problems in case 2.
pub trait BackgroundHamiltonian: Sync {
    fn value(&self, p: [f64; 2]) -> Result<f64>;
    /// `(H↓, H↑)`, the nonincreasing and nondecreasing envelopes in p₂.
    fn envelopes(&self, p: [f64; 2]) -> Result<(f64, f64)>;
    /// `(argmin, min)` of `q ↦ H̄(p₁ e₁ + q e₂)`.
    fn min_over_q(&self, p1: f64) -> Result<(f64, f64)>;
    fn min_over_p(&self) -> Result<f64>;
    /// Lipschitz constant in p (the drift bound).
    fn lipschitz(&self) -> f64;
}

impl BackgroundHamiltonian for ControlHamiltonian {
    fn value(&self, p: [f64; 2]) -> Result<f64> {
        Ok(self.eval(p).value)
    }

    fn envelopes(&self, p: [f64; 2]) -> Result<(f64, f64)> {
        let s = self.eval(p);
        if s.h_down == f64::NEG_INFINITY || s.h_up == f64::NEG_INFINITY {
            return Err(Error::Eval("a half-plane control set is empty".into()));
        }
        Ok((s.h_down, s.h_up))
    }

    fn min_over_q(&self, p1: f64) -> Result<(f64, f64)> {
        Ok(ControlHamiltonian::min_over_q(self, p1))
    }

    fn min_over_p(&self) -> Result<f64> {
        Ok(ControlHamiltonian::min_over_p(self))
    }

    fn lipschitz(&self) -> f64 {
        self.m_f()
    }
}

pub(crate) fn golden_min(mut g: impl FnMut(f64) -> Result<f64>, tol: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let (mut glo, mut ghi) = (g(lo)?, g(hi)?);
    let mut guard = 0;
    while g(lo - 1.0)? <= glo && guard < 60 {
        lo = 2.0 * lo - 1.0;
        glo = g(lo)?;
        guard += 1;
    }
    guard = 0;
    while g(hi + 1.0)? <= ghi && guard < 60 {
        hi = 2.0 * hi + 1.0;
        ghi = g(hi)?;
        guard += 1;
    }
    lo -= 1.0;
    hi += 1.0;
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut ga, mut gb) = (g(a)?, g(b)?);
    while hi - lo > tol {
        if ga <= gb {
            hi = b;
            b = a;
            gb = ga;
            a = hi - phi * (hi - lo);
            ga = g(a)?;
        } else {
            lo = a;
            a = b;
            ga = gb;
            b = lo + phi * (hi - lo);
            gb = g(b)?;
        }
    }
    Ok(if ga <= gb { (a, ga) } else { (b, gb) })
}

/// Case 2 background: each evaluation solves a torus cell problem. Values
/// are memoized by the bit pattern of `p`.
pub struct TorusHamiltonian {
    cell: TorusCell,
    opts: CellOptions,
    m_f: f64,
    values: Mutex<HashMap<[u64; 2], f64>>,
    minima: Mutex<HashMap<u64, (f64, f64)>>,
    last: Mutex<Option<ValueField>>,
}

impl TorusHamiltonian {
    pub fn new(scn: &Scenario, x0: [f64; 2], opts: &CellOptions) -> Result<Self> {
        let cell = TorusCell::new(scn, x0, opts)?;
        let m_f = ControlHamiltonian::background(scn, x0)?.m_f();
        Ok(TorusHamiltonian {
            cell,
            opts: opts.clone(),
            m_f,
            values: Mutex::new(HashMap::new()),
            minima: Mutex::new(HashMap::new()),
            last: Mutex::new(None),
        })
    }

    pub fn cell(&self) -> &TorusCell {
        &self.cell
    }
}

impl BackgroundHamiltonian for TorusHamiltonian {
    fn value(&self, p: [f64; 2]) -> Result<f64> {
        let key = [p[0].to_bits(), p[1].to_bits()];
        if let Some(v) = self.values.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let init = self.last.lock().unwrap().clone();
        let est = self.cell.solve(p, &self.opts, false, init.as_ref())?;
        if !est.converged {
            return Err(Error::NotConverged(format!("torus cell problem at p = ({}, {})", p[0], p[1])));
        }
        *self.last.lock().unwrap() = Some(est.corrector);
        self.values.lock().unwrap().insert(key, est.constant);
        Ok(est.constant)
    }

    /// Monotone envelopes of the convex map `q ↦ H̄(p₁, q)`: the function on
    /// one side of its minimizer and its minimum on the other.
    fn envelopes(&self, p: [f64; 2]) -> Result<(f64, f64)> {
        let (q, m) = self.min_over_q(p[0])?;
        let v = self.value(p)?;
        Ok(if p[1] <= q { (v, m) } else { (m, v) })
    }

    fn min_over_q(&self, p1: f64) -> Result<(f64, f64)> {
        if let Some(v) = self.minima.lock().unwrap().get(&p1.to_bits()) {
            return Ok(*v);
        }
        let r = golden_min(|q| self.value([p1, q]), 1e-6)?;
        self.minima.lock().unwrap().insert(p1.to_bits(), r);
        Ok(r)
    }

    fn min_over_p(&self) -> Result<f64> {
        Ok(golden_min(|p1| Ok(self.min_over_q(p1)?.1), 1e-5)?.1)
    }

    fn lipschitz(&self) -> f64 {
        self.m_f
    }
}

/// Background effective Hamiltonian of a scenario at `x`.
pub fn background_hamiltonian(scn: &Scenario, x: [f64; 2], opts: &CellOptions) -> Result<Box<dyn BackgroundHamiltonian>> {
    Ok(match scn.case {
        CaseTag::Case2 => Box::new(TorusHamiltonian::new(scn, x, opts)?),
        _ => Box::new(ControlHamiltonian::background(scn, x)?),
    })
}
