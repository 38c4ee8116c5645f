//! Principal branch of the Lambert-W function.
//!
//! [`w0`] solves `w·e^w = x` with Halley iteration. [`w0_of_exp`] evaluates
//! `W(e^u)` without forming `e^u`, which is what the PV operating-point
//! formulas need: their W-argument is routinely far beyond `f64::MAX`.
//!
//! The asymptotic part ([`phi_terms`], [`approximation_error`]) expands the
//! root of `e^{-x} = ν·x` for small `ν` in the six-term sequence
//!
//! ```text
//! φ1 = ln(1/ν)                 φ4 = -φ3/φ1 + φ3²/2
//! φ2 = -ln(φ1)                 φ5 = φ4·φ4 - φ3³/6 - φ4/φ1
//! φ3 = ln(φ1)/φ1               φ6 = (2·φ3·φ5 + φ4²)/2 - φ3²·φ4/2 - φ5/φ1
//! ```
//!
//! The exact root is `W(1/ν)`, since `x·e^x = 1/ν`.

use std::f64::consts::E;
use std::io::Write;

use crate::exec::{self, Mode};
use crate::{Error, Result};

/// `-1/e`, the branch point of W.
pub const BRANCH_POINT: f64 = -0.367_879_441_171_442_33;

const HALLEY_MAX_ITER: usize = 50;
const FIXED_POINT_MAX_ITER: usize = 200;
/// Above this, `e^u` is no longer formed explicitly.
const EXP_CUTOFF: f64 = 700.0;

/// Principal branch `W0(x)` for `x >= -1/e`.
///
/// Initial guess: branch-point series `-1 + p - p²/3 + 11p³/72` with
/// `p = sqrt(2(ex + 1))` for `x < -0.25`, `ln(1 + x)` up to `x = 3`, and
/// `L1 - L2 + L2/L1` (`L1 = ln x`, `L2 = ln L1`) beyond. Halley's method is
/// applied to `f(w) = w - x·e^{-w}`, which has the same root as `w·e^w - x`
/// but never overflows for large `x`.
pub fn w0(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain {
            what: "w0",
            value: x,
            expected: "x >= -1/e",
        });
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x <= BRANCH_POINT {
        // Allow a few ulps of slack around the branch point.
        if x >= BRANCH_POINT - 4.0 * f64::EPSILON {
            return Ok(-1.0);
        }
        return Err(Error::Domain {
            what: "w0",
            value: x,
            expected: "x >= -1/e",
        });
    }

    let mut w = if x < -0.25 {
        let p2 = 2.0 * (E * x + 1.0);
        if p2 <= 0.0 {
            return Ok(-1.0);
        }
        let p = p2.sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x <= 3.0 {
        x.ln_1p()
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..HALLEY_MAX_ITER {
        let xe = x * (-w).exp();
        let f = w - xe;
        if f == 0.0 {
            return Ok(w);
        }
        let f1 = 1.0 + xe;
        let f2 = -xe;
        let denom = 2.0 * f1 * f1 - f * f2;
        if denom == 0.0 {
            // Only reachable exactly at the branch point.
            return Ok(w);
        }
        let step = 2.0 * f * f1 / denom;
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            return Ok(w);
        }
    }
    Err(Error::NoConvergence {
        routine: "w0 (Halley)",
        iterations: HALLEY_MAX_ITER,
    })
}

/// `W0(e^u)` for any finite `u`, without evaluating `e^u` when it would
/// overflow.
///
/// For `u > 700` the fixed point of `x = u - ln(x)` is iterated from
/// `x0 = u - ln(u)` until `|Δx| <= 1e-14·x`; the map contracts with factor
/// `1/x < 1/690` there.
pub fn w0_of_exp(u: f64) -> f64 {
    if u.is_nan() {
        return f64::NAN;
    }
    if u == f64::NEG_INFINITY {
        return 0.0;
    }
    if u == f64::INFINITY {
        return f64::INFINITY;
    }
    if u <= EXP_CUTOFF {
        // e^u > 0 is always inside the principal-branch domain.
        return w0(u.exp()).unwrap_or(f64::NAN);
    }
    let mut x = (u - u.max(2.0).ln()).max(1e-300);
    for _ in 0..FIXED_POINT_MAX_ITER {
        let next = u - x.ln();
        let dx = next - x;
        x = next;
        if dx.abs() <= 1e-14 * x {
            break;
        }
    }
    x
}

/// First `n` terms of the asymptotic sequence at a given `ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticExpansion {
    pub nu: f64,
    pub terms: Vec<f64>,
}

impl AsymptoticExpansion {
    pub fn partial_sum(&self) -> f64 {
        self.terms.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu < 1.0 / E {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "asymptotic expansion",
            value: nu,
            expected: "0 < nu < 1/e",
        })
    }
}

fn check_terms(n: usize) -> Result<()> {
    if (1..=6).contains(&n) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "asymptotic expansion term count",
            value: n as f64,
            expected: "1 <= n <= 6",
        })
    }
}

/// Evaluates `φ1..φn` at `ν`. `φ5` uses `φ4·φ4` exactly as derived from the
/// term balancing, not `φ3·φ4`.
pub fn phi_terms(nu: f64, n: usize) -> Result<AsymptoticExpansion> {
    check_nu(nu)?;
    check_terms(n)?;
    let l = (1.0 / nu).ln();
    let p1 = l;
    let p2 = (1.0 / l).ln();
    let p3 = l.ln() / l;
    let p4 = -p3 / l + 0.5 * p3 * p3;
    let p5 = p4 * p4 - p3 * p3 * p3 / 6.0 - p4 / l;
    let p6 = 0.5 * (2.0 * p3 * p5 + p4 * p4) - 0.5 * p3 * p3 * p4 - p5 / l;
    let all = [p1, p2, p3, p4, p5, p6];
    Ok(AsymptoticExpansion {
        nu,
        terms: all[..n].to_vec(),
    })
}

/// Exact root of `e^{-x} = ν·x`, i.e. `W0(1/ν)`.
pub fn balance_root(nu: f64) -> Result<f64> {
    check_nu(nu)?;
    w0(1.0 / nu)
}

/// Iterates `T(x) = ln(1/ν) - ln(x)` from `x1 = ln(1/ν)`, returning
/// `count` iterates. The second iterate equals `φ1 + φ2`.
pub fn contraction_iterates(nu: f64, count: usize) -> Result<Vec<f64>> {
    check_nu(nu)?;
    let l = (1.0 / nu).ln();
    let mut out = Vec::with_capacity(count);
    let mut x = l;
    for _ in 0..count {
        out.push(x);
        x = l - x.ln();
    }
    Ok(out)
}

/// `|x* - Σ_{i<=n} φi|` with `x*` from [`balance_root`].
pub fn approximation_error(nu: f64, n: usize) -> Result<f64> {
    let expansion = phi_terms(nu, n)?;
    let root = balance_root(nu)?;
    Ok((root - expansion.partial_sum()).abs())
}

/// One row of the series-error table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub nu: f64,
    pub n: usize,
    pub partial_sum: f64,
    pub root: f64,
    pub abs_error: f64,
}

/// Partial sums and errors for every `ν` in `nus` and every `n` in `1..=6`.
pub fn series_table(nus: &[f64], mode: Mode) -> Result<Vec<SeriesRow>> {
    let rows = exec::map_indexed(nus.len() * 6, mode, |idx| {
        let nu = nus[idx / 6];
        let n = idx % 6 + 1;
        let partial_sum = phi_terms(nu, n)?.partial_sum();
        let root = balance_root(nu)?;
        Ok(SeriesRow {
            nu,
            n,
            partial_sum,
            root,
            abs_error: (root - partial_sum).abs(),
        })
    });
    rows.into_iter().collect()
}

pub const SERIES_CSV_HEADER: &str = "nu,n,partial_sum,root,abs_error";

pub fn write_series_csv<W: Write>(rows: &[SeriesRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SERIES_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.nu, r.n, r.partial_sum, r.root, r.abs_error
        )?;
    }
    Ok(())
}
