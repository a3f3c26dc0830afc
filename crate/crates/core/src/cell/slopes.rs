use serde::Serialize;

use super::effective_h::BackgroundHamiltonian;
use crate::error::{Error, Result};
use crate::sl::{DomainKind, ValueField};

const LEVEL_SLACK: f64 = 1e-12;

/// `(Π̲, Π̄)`: the smallest root of `H↓(p₁, ·) = level` and the largest root
/// of `H↑(p₁, ·) = level`, by bisection on the monotone envelopes.
pub fn slopes(bg: &dyn BackgroundHamiltonian, p1: f64, level: f64) -> Result<(f64, f64)> {
    let (q0, m) = bg.min_over_q(p1)?;
    if level < m - 1e-9 {
        return Err(Error::Bracket(format!("level {level} lies {:.3e} below min_q H̄(p₁ = {p1}, q)", m - level)));
    }
    let level = level.max(m) + LEVEL_SLACK;
    let up = |q: f64| -> Result<f64> { Ok(bg.envelopes([p1, q])?.1) };
    let down = |q: f64| -> Result<f64> { Ok(bg.envelopes([p1, q])?.0) };
    // sup{q : H↑(q) <= level}
    let hi = {
        let (mut a, mut step) = (q0, 1.0);
        let mut b = q0 + step;
        let mut guard = 0;
        while up(b)? <= level {
            a = b;
            step *= 2.0;
            b = q0 + step;
            guard += 1;
            if guard > 60 {
                return Err(Error::Bracket(format!("H↑(p₁ = {p1}, ·) stays below {level}")));
            }
        }
        bisect(a, b, |q| Ok(up(q)? <= level))?
    };
    let lo = {
        let (mut b, mut step) = (q0, 1.0);
        let mut a = q0 - step;
        let mut guard = 0;
        while down(a)? <= level {
            b = a;
            step *= 2.0;
            a = q0 - step;
            guard += 1;
            if guard > 60 {
                return Err(Error::Bracket(format!("H↓(p₁ = {p1}, ·) stays below {level}")));
            }
        }
        // inf{q : H↓(q) <= level}; the predicate holds at b
        let r = bisect(a, b, |q| Ok(down(q)? > level))?;
        r
    };
    Ok((lo.min(hi), hi.max(lo)))
}

/// Boundary between `pred = true` (at `a`) and `pred = false` (at `b`).
fn bisect(mut a: f64, mut b: f64, pred: impl Fn(f64) -> Result<bool>) -> Result<f64> {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if pred(m)? {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeReport {
    pub upper_fit: f64,
    pub lower_fit: f64,
    pub pi_lower: f64,
    pub pi_upper: f64,
    pub upper_deviation: f64,
    pub lower_deviation: f64,
    /// Fit window in |y₂|.
    pub window: (f64, f64),
    /// Strict regime H̄₁,T > min_q H̄: fits must match the slopes; otherwise
    /// they only need to lie in `[Π̲, Π̄]`.
    pub strict: bool,
    pub tol: f64,
    pub passed: bool,
}

/// Fit window in |y₂| for a strip of half-height ρ: the outer quarter,
/// pulled in by `margin` to avoid the state-constraint boundary layer.
pub fn slope_window(rho: f64, margin: f64) -> (f64, f64) {
    let hi = rho - margin;
    (hi - 0.25 * rho, hi)
}

/// Least-squares slopes of the y₁-averaged corrector above and below the
/// band, compared with `(Π̲, Π̄)`.
pub fn verify_corrector_slopes(
    xi: &ValueField,
    slopes: (f64, f64),
    window: (f64, f64),
    r0: f64,
    strict: bool,
    tol: f64,
) -> Result<SlopeReport> {
    let g = &xi.grid;
    if !matches!(g.kind, DomainKind::Strip { .. }) {
        return Err(Error::GridMismatch("slope fits need a strip corrector".into()));
    }
    let (a, b) = window;
    if a <= r0 || b <= a {
        return Err(Error::Grid(format!("slope window [{a}, {b}] does not clear the band |y2| < {r0}")));
    }
    let mut up = Vec::new();
    let mut dn = Vec::new();
    for j in 0..g.ny {
        let y2 = g.coords(g.index(0, j))[1];
        let avg = (0..g.nx).map(|i| xi.values[g.index(i, j)]).sum::<f64>() / g.nx as f64;
        if y2 >= a - 1e-12 && y2 <= b + 1e-12 {
            up.push((y2, avg));
        } else if -y2 >= a - 1e-12 && -y2 <= b + 1e-12 {
            dn.push((y2, avg));
        }
    }
    if up.len() < 3 || dn.len() < 3 {
        return Err(Error::Grid("slope window holds fewer than 3 grid rows".into()));
    }
    let upper_fit = ls_slope(&up);
    let lower_fit = ls_slope(&dn);
    let (pi_lower, pi_upper) = slopes;
    let (upper_deviation, lower_deviation, passed) = if strict {
        let du = (upper_fit - pi_upper).abs();
        let dl = (lower_fit - pi_lower).abs();
        (du, dl, du <= tol && dl <= tol)
    } else {
        let out = |v: f64| (pi_lower - v).max(v - pi_upper).max(0.0);
        let (du, dl) = (out(upper_fit), out(lower_fit));
        (du, dl, du <= tol && dl <= tol)
    };
    Ok(SlopeReport {
        upper_fit,
        lower_fit,
        pi_lower,
        pi_upper,
        upper_deviation,
        lower_deviation,
        window,
        strict,
        tol,
        passed,
    })
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlHamiltonian;
    use crate::scenario::ring;

    fn dense_eikonal() -> ControlHamiltonian {
        let mut controls: Vec<([f64; 2], f64)> = ring(4096, 1.0).into_iter().map(|a| (a, 1.0)).collect();
        controls.push(([0.0, 0.0], 1.0));
        ControlHamiltonian { controls }
    }

    #[test]
    fn eikonal_slopes() {
        let h = dense_eikonal();
        let (lo, hi) = slopes(&h, 0.0, 0.0).unwrap();
        assert!((lo + 1.0).abs() < 1e-9 && (hi - 1.0).abs() < 1e-9, "{lo} {hi}");
        let (lo, hi) = slopes(&h, 0.0, 1.0).unwrap();
        assert!((lo + 2.0).abs() < 1e-9 && (hi - 2.0).abs() < 1e-9, "{lo} {hi}");
    }

    #[test]
    fn degenerate_bracket_at_minimum() {
        let h = dense_eikonal();
        let (_, m) = h.min_over_q(0.0);
        let (lo, hi) = slopes(&h, 0.0, m).unwrap();
        assert!(lo.abs() < 1e-5 && hi.abs() < 1e-5, "{lo} {hi}");
        assert!(slopes(&h, 0.0, m - 0.1).is_err());
    }
}
