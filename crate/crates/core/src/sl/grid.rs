//! Structured grids, nodal fields and bilinear interpolation.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainKind {
    /// `[-half[0], half[0]] × [-half[1], half[1]]`, state constrained.
    Box { half: [f64; 2] },
    /// Periodic in y1 with `period`, `|y2| <= half_height`.
    Strip { period: f64, half_height: f64 },
    /// Periodic in both directions.
    Torus { periods: [f64; 2] },
    /// Closed disc of `radius` on a box lattice.
    Ball { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: DomainKind,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    /// Coordinates of node (0, 0).
    pub origin: [f64; 2],
    pub anchor: usize,
}

/// Bilinear stencil: corner indices `[00, 10, 01, 11]` and cell fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub idx: [u32; 4],
    pub fx: f64,
    pub fy: f64,
}

impl Stencil {
    #[inline(always)]
    pub fn eval(&self, u: &[f64]) -> f64 {
        let [a, b, c, d] = self.idx;
        let (fx, fy) = (self.fx, self.fy);
        let lo = u[a as usize] + fx * (u[b as usize] - u[a as usize]);
        let hi = u[c as usize] + fx * (u[d as usize] - u[c as usize]);
        lo + fy * (hi - lo)
    }

    pub fn weights(&self) -> [f64; 4] {
        let (fx, fy) = (self.fx, self.fy);
        [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy]
    }

    pub fn single(n: usize) -> Self {
        let n = n as u32;
        Stencil { idx: [n; 4], fx: 0.0, fy: 0.0 }
    }
}

fn count(extent: f64, h: f64, what: &str) -> Result<usize> {
    let k = (extent / h).round();
    if k < 1.0 || (extent - k * h).abs() > 1e-9 * h {
        return Err(Error::Grid(format!("spacing h = {h} must divide {what} = {extent}")));
    }
    Ok(k as usize)
}

const SNAP: f64 = 1e-10;

/// Splits `s` (in cell units) into a base index and a fraction, snapping
/// near-integer positions onto nodes.
#[inline]
fn split(s: f64) -> (i64, f64) {
    let r = s.round();
    if (s - r).abs() < SNAP {
        return (r as i64, 0.0);
    }
    let fl = s.floor();
    (fl as i64, s - fl)
}

impl GridSpec {
    pub fn box_grid(half: [f64; 2], h: f64) -> Result<Self> {
        check_h(h)?;
        let kx = count(half[0], h, "box half-width")?;
        let ky = count(half[1], h, "box half-width")?;
        Ok(Self::finish(DomainKind::Box { half }, h, 2 * kx + 1, 2 * ky + 1, [-(kx as f64) * h, -(ky as f64) * h]))
    }

    pub fn square(half: f64, h: f64) -> Result<Self> {
        Self::box_grid([half, half], h)
    }

    pub fn strip(period: f64, half_height: f64, h: f64) -> Result<Self> {
        check_h(h)?;
        let nx = count(period, h, "strip period")?;
        let ky = count(half_height, h, "strip half-height")?;
        Ok(Self::finish(DomainKind::Strip { period, half_height }, h, nx, 2 * ky + 1, [0.0, -(ky as f64) * h]))
    }

    pub fn torus(periods: [f64; 2], h: f64) -> Result<Self> {
        check_h(h)?;
        let nx = count(periods[0], h, "torus period")?;
        let ny = count(periods[1], h, "torus period")?;
        Ok(Self::finish(DomainKind::Torus { periods }, h, nx, ny, [0.0, 0.0]))
    }

    pub fn ball(radius: f64, h: f64) -> Result<Self> {
        check_h(h)?;
        let k = count(radius, h, "ball radius")?;
        Ok(Self::finish(DomainKind::Ball { radius }, h, 2 * k + 1, 2 * k + 1, [-(k as f64) * h, -(k as f64) * h]))
    }

    fn finish(kind: DomainKind, h: f64, nx: usize, ny: usize, origin: [f64; 2]) -> Self {
        let mut g = GridSpec { kind, h, nx, ny, origin, anchor: 0 };
        g.anchor = g.nearest([0.0, 0.0]);
        g
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, n: usize) -> (usize, usize) {
        (n % self.nx, n / self.nx)
    }

    #[inline]
    pub fn coords(&self, n: usize) -> [f64; 2] {
        let (i, j) = self.ij(n);
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    pub fn periodic(&self) -> [Option<f64>; 2] {
        match self.kind {
            DomainKind::Strip { period, .. } => [Some(period), None],
            DomainKind::Torus { periods } => [Some(periods[0]), Some(periods[1])],
            _ => [None, None],
        }
    }

    #[inline]
    pub fn active(&self, n: usize) -> bool {
        match self.kind {
            DomainKind::Ball { radius } => {
                let [x, y] = self.coords(n);
                x * x + y * y <= radius * radius * (1.0 + 1e-12)
            }
            _ => true,
        }
    }

    /// Indices of active nodes.
    pub fn active_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&n| self.active(n)).collect()
    }

    fn axis(&self, v: f64, d: usize) -> Option<(usize, usize, f64)> {
        let n = if d == 0 { self.nx } else { self.ny };
        match self.periodic()[d] {
            Some(_) => {
                let s = (v - self.origin[d]) / self.h;
                let (i, f) = split(s);
                let i = i.rem_euclid(n as i64) as usize;
                Some((i, (i + 1) % n, f))
            }
            None => {
                let s = (v - self.origin[d]) / self.h;
                let top = (n - 1) as f64;
                if s < -1e-9 || s > top + 1e-9 {
                    return None;
                }
                let (i, f) = split(s.clamp(0.0, top));
                if i < 0 {
                    return Some((0, 0.min(n - 1), 0.0));
                }
                let i = i as usize;
                if i >= n - 1 {
                    return Some((n - 1, n - 1, 0.0));
                }
                Some((i, if f > 0.0 { i + 1 } else { i }, f))
            }
        }
    }

    /// Bilinear stencil at a point, `None` outside the closed domain. On a
    /// ball every corner carrying weight must be an active node.
    pub fn stencil(&self, p: [f64; 2]) -> Option<Stencil> {
        let (i0, i1, fx) = self.axis(p[0], 0)?;
        let (j0, j1, fy) = self.axis(p[1], 1)?;
        let idx = [self.index(i0, j0), self.index(i1, j0), self.index(i0, j1), self.index(i1, j1)];
        let st = Stencil { idx: idx.map(|k| k as u32), fx, fy };
        if matches!(self.kind, DomainKind::Ball { .. }) {
            let w = st.weights();
            for k in 0..4 {
                if w[k] > 0.0 && !self.active(idx[k]) {
                    return None;
                }
            }
        }
        Some(st)
    }

    /// Node nearest to `p` (after wrapping), clamped into the grid.
    pub fn nearest(&self, p: [f64; 2]) -> usize {
        let per = self.periodic();
        let mut ij = [0usize; 2];
        for d in 0..2 {
            let n = if d == 0 { self.nx } else { self.ny } as i64;
            let s = ((p[d] - self.origin[d]) / self.h).round() as i64;
            ij[d] = if per[d].is_some() { s.rem_euclid(n) } else { s.clamp(0, n - 1) } as usize;
        }
        self.index(ij[0], ij[1])
    }

    /// Node located exactly at `p`, if any.
    pub fn node_at(&self, p: [f64; 2]) -> Option<usize> {
        let n = self.nearest(p);
        let c = self.coords(n);
        let close = |a: f64, b: f64, per: Option<f64>| match per {
            Some(t) => {
                let d = (a - b).rem_euclid(t);
                d.min(t - d) < 1e-9 * self.h
            }
            None => (a - b).abs() < 1e-9 * self.h,
        };
        let per = self.periodic();
        (close(c[0], p[0], per[0]) && close(c[1], p[1], per[1]) && self.active(n)).then_some(n)
    }

    pub fn same_lattice(&self, other: &GridSpec) -> bool {
        self == other
    }
}

fn check_h(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Grid(format!("spacing must be positive, got {h}")))
    }
}

/// Nodal values on a grid. Inactive nodes of a ball grid hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ValueField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        Ok(ValueField { grid, values })
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        let mut values = vec![0.0; grid.len()];
        for (n, v) in values.iter_mut().enumerate() {
            if grid.active(n) {
                *v = c;
            }
        }
        ValueField { grid, values }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|n| if grid.active(n) { f(grid.coords(n)) } else { 0.0 }).collect();
        ValueField { grid, values }
    }

    pub fn interpolate(&self, p: [f64; 2]) -> Result<f64> {
        self.grid.stencil(p).map(|s| s.eval(&self.values)).ok_or(Error::OutsideDomain(p[0], p[1]))
    }

    pub fn at_anchor(&self) -> f64 {
        self.values[self.grid.anchor]
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.len()).filter(|&n| self.grid.active(n)).map(|n| self.values[n].abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ValueField) -> Result<f64> {
        if !self.grid.same_lattice(&other.grid) {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        Ok((0..self.grid.len())
            .filter(|&n| self.grid.active(n))
            .map(|n| (self.values[n] - other.values[n]).abs())
            .fold(0.0, f64::max))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["y1", "y2", "value"])?;
        for n in 0..self.grid.len() {
            if !self.grid.active(n) {
                continue;
            }
            let [a, b] = self.grid.coords(n);
            wr.write_record([format!("{a}"), format!("{b}"), format!("{}", self.values[n])])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`ValueField::write_csv`] back onto `grid`.
    pub fn read_csv<R: Read>(grid: GridSpec, r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["y1", "y2", "value"] {
            return Err(Error::GridMismatch("expected header y1,y2,value".into()));
        }
        let mut values = vec![0.0; grid.len()];
        let mut seen = vec![false; grid.len()];
        for rec in rd.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::GridMismatch(format!("malformed row {:?}", rec)))
            };
            let p = [parse(0)?, parse(1)?];
            let n = grid
                .node_at(p)
                .ok_or_else(|| Error::GridMismatch(format!("row at ({}, {}) is not a grid node", p[0], p[1])))?;
            values[n] = parse(2)?;
            seen[n] = true;
        }
        if (0..grid.len()).any(|n| grid.active(n) && !seen[n]) {
            return Err(Error::GridMismatch("CSV does not cover every node".into()));
        }
        Ok(ValueField { grid, values })
    }
}
