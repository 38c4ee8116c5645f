//! Photovoltaic I-V models and operating-point solvers.
//!
//! Three models share one parameter record:
//!
//! * ideal: `I = Iph - I01·(e^{V/VT1} - 1)`
//! * one-diode: `I = Iph - I01·(e^{(V+Rs·I)/VT1} - 1) - (V + Rs·I)/Rsh`
//! * two-diode: one-diode plus `-I02·(e^{(V+Rs·I)/VT2} - 1)`
//!
//! where `VTk = nk·Ns·kT/q`. The implicit one-diode equation is solved in
//! closed form through [`w0_of_exp`]; a bracketed Newton solver handles the
//! two-diode model and doubles as an independent check on the closed forms.

use std::fmt;
use std::str::FromStr;

use crate::exec::{self, Mode};
use crate::lambertw::w0_of_exp;
use crate::{Error, Result};

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Standard test conditions, 25 °C.
pub const STC_TEMPERATURE: f64 = 298.15;

/// `kT/q` for a single junction with unit ideality.
pub fn thermal_voltage(temperature: f64) -> f64 {
    BOLTZMANN * temperature / ELEMENTARY_CHARGE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiodeModel {
    Ideal,
    OneDiode,
    TwoDiode,
}

impl FromStr for DiodeModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(DiodeModel::Ideal),
            "one_diode" => Ok(DiodeModel::OneDiode),
            "two_diode" => Ok(DiodeModel::TwoDiode),
            other => Err(Error::validation(
                "model",
                format!("expected ideal | one_diode | two_diode, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for DiodeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiodeModel::Ideal => "ideal",
            DiodeModel::OneDiode => "one_diode",
            DiodeModel::TwoDiode => "two_diode",
        })
    }
}

/// Electrical parameters of a single cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pub i_ph: f64,
    pub i_01: f64,
    /// Recombination-diode saturation current; `None` for the one-diode model.
    pub i_02: Option<f64>,
    pub r_s: f64,
    pub r_sh: f64,
    pub n1: f64,
    pub n2: f64,
    pub temperature: f64,
}

impl CellParams {
    /// Kyocera KC50T-class cell: `Rs = 0.01 Ω`, `Rsh = 150 Ω`,
    /// `I01 = 1.9795e-10 A`, `Iph = 3.31 A` at STC with unit ideality.
    ///
    /// Scaled over 36 series cells this gives `Voc ≈ 21.77 V` and
    /// `Vmpp ≈ 17.9 V`.
    pub fn kyocera() -> Self {
        CellParams {
            i_ph: 3.31,
            i_01: 1.9795e-10,
            i_02: None,
            r_s: 0.01,
            r_sh: 150.0,
            n1: 1.0,
            n2: 1.0,
            temperature: STC_TEMPERATURE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_electrical(
            self.i_ph,
            self.i_01,
            self.i_02,
            self.r_s,
            self.r_sh,
            self.n1,
            self.n2,
            self.temperature,
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn validate_electrical(
    i_ph: f64,
    i_01: f64,
    i_02: Option<f64>,
    r_s: f64,
    r_sh: f64,
    n1: f64,
    n2: f64,
    temperature: f64,
) -> Result<()> {
    let check = |ok: bool, field: &str, msg: &str| {
        if ok {
            Ok(())
        } else {
            Err(Error::validation(field, msg))
        }
    };
    check(i_ph.is_finite() && i_ph >= 0.0, "i_ph", "must be finite and >= 0")?;
    check(i_01.is_finite() && i_01 > 0.0, "i_01", "must be finite and > 0")?;
    if let Some(i_02) = i_02 {
        check(i_02.is_finite() && i_02 >= 0.0, "i_02", "must be finite and >= 0")?;
    }
    check(r_s.is_finite() && r_s >= 0.0, "r_s", "must be finite and >= 0")?;
    check(r_sh > 0.0, "r_sh", "must be > 0")?;
    check(n1.is_finite() && n1 >= 1.0, "n1", "must be >= 1")?;
    check(n2.is_finite() && n2 >= 1.0, "n2", "must be >= 1")?;
    check(
        temperature.is_finite() && temperature > 0.0,
        "temperature",
        "must be > 0 K",
    )
}

/// Parameters of an `Ns × Np` array, as seen at its terminals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PVModuleParams {
    pub i_ph: f64,
    pub i_01: f64,
    pub i_02: Option<f64>,
    pub r_s: f64,
    pub r_sh: f64,
    pub n1: f64,
    pub n2: f64,
    pub temperature: f64,
    pub n_s: u32,
    pub n_p: u32,
    /// Module thermal voltage `Ns·kT/q` (unit ideality).
    pub v_t: f64,
}

impl PVModuleParams {
    /// 36 Kyocera cells in series, one string.
    pub fn kyocera() -> Self {
        scale_to_module(&CellParams::kyocera(), 36, 1)
    }

    /// Builds a module from terminal-level values; `v_t` follows from
    /// `n_s` and `temperature`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_module_values(
        i_ph: f64,
        i_01: f64,
        i_02: Option<f64>,
        r_s: f64,
        r_sh: f64,
        n1: f64,
        n2: f64,
        temperature: f64,
        n_s: u32,
        n_p: u32,
    ) -> Self {
        PVModuleParams {
            i_ph,
            i_01,
            i_02,
            r_s,
            r_sh,
            n1,
            n2,
            temperature,
            n_s,
            n_p,
            v_t: n_s as f64 * thermal_voltage(temperature),
        }
    }

    /// Diffusion-diode thermal voltage `n1·VT`.
    pub fn v_t1(&self) -> f64 {
        self.n1 * self.v_t
    }

    /// Recombination-diode thermal voltage `n2·VT`.
    pub fn v_t2(&self) -> f64 {
        self.n2 * self.v_t
    }

    pub fn with_photocurrent(mut self, i_ph: f64) -> Self {
        self.i_ph = i_ph;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self.v_t = self.n_s as f64 * thermal_voltage(temperature);
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_electrical(
            self.i_ph,
            self.i_01,
            self.i_02,
            self.r_s,
            self.r_sh,
            self.n1,
            self.n2,
            self.temperature,
        )?;
        if self.n_s == 0 {
            return Err(Error::validation("n_s", "must be >= 1"));
        }
        if self.n_p == 0 {
            return Err(Error::validation("n_p", "must be >= 1"));
        }
        if !(self.v_t.is_finite() && self.v_t > 0.0) {
            return Err(Error::validation("v_t", "must be > 0"));
        }
        Ok(())
    }

    fn i_02_or_zero(&self) -> f64 {
        self.i_02.unwrap_or(0.0)
    }
}

/// A point `(V, I)` on an I-V curve with its power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub v: f64,
    pub i: f64,
    pub p: f64,
}

impl OperatingPoint {
    pub fn new(v: f64, i: f64) -> Self {
        OperatingPoint { v, i, p: v * i }
    }
}

/// Series/parallel scaling:
/// `(Np·Iph, Np·I01, Np·I02, (Ns/Np)·Rs, (Ns/Np)·Rsh, Ns·VT)`.
pub fn scale_to_module(cell: &CellParams, n_s: u32, n_p: u32) -> PVModuleParams {
    let ns = n_s as f64;
    let np = n_p as f64;
    let ratio = ns / np;
    PVModuleParams {
        i_ph: np * cell.i_ph,
        i_01: np * cell.i_01,
        i_02: cell.i_02.map(|i| np * i),
        r_s: ratio * cell.r_s,
        r_sh: ratio * cell.r_sh,
        n1: cell.n1,
        n2: cell.n2,
        temperature: cell.temperature,
        n_s,
        n_p,
        v_t: ns * thermal_voltage(cell.temperature),
    }
}

/// Right-hand side of the selected model evaluated at a trial `(V, I)`.
fn model_current(p: &PVModuleParams, v: f64, i: f64, model: DiodeModel) -> f64 {
    match model {
        DiodeModel::Ideal => p.i_ph - p.i_01 * (v / p.v_t1()).exp_m1(),
        DiodeModel::OneDiode => {
            let vd = v + p.r_s * i;
            p.i_ph - p.i_01 * (vd / p.v_t1()).exp_m1() - vd / p.r_sh
        }
        DiodeModel::TwoDiode => {
            let vd = v + p.r_s * i;
            p.i_ph
                - p.i_01 * (vd / p.v_t1()).exp_m1()
                - p.i_02_or_zero() * (vd / p.v_t2()).exp_m1()
                - vd / p.r_sh
        }
    }
}

/// Small-signal diode-plus-shunt conductance `∂(loss current)/∂(V + Rs·I)`.
fn junction_conductance(p: &PVModuleParams, v: f64, i: f64, model: DiodeModel) -> f64 {
    match model {
        DiodeModel::Ideal => p.i_01 / p.v_t1() * (v / p.v_t1()).exp(),
        DiodeModel::OneDiode => {
            let vd = v + p.r_s * i;
            p.i_01 / p.v_t1() * (vd / p.v_t1()).exp() + 1.0 / p.r_sh
        }
        DiodeModel::TwoDiode => {
            let vd = v + p.r_s * i;
            p.i_01 / p.v_t1() * (vd / p.v_t1()).exp()
                + p.i_02_or_zero() / p.v_t2() * (vd / p.v_t2()).exp()
                + 1.0 / p.r_sh
        }
    }
}

/// `model(V, I) - I`: zero on the curve.
pub fn residual(p: &PVModuleParams, v: f64, i: f64, model: DiodeModel) -> f64 {
    model_current(p, v, i, model) - i
}

/// Residual tolerance used by every solver: `1e-9·max(1, Iph)`.
pub fn residual_tolerance(p: &PVModuleParams) -> f64 {
    1e-9 * p.i_ph.max(1.0)
}

/// Terminal current at voltage `v`.
pub fn current_at_voltage(p: &PVModuleParams, v: f64, model: DiodeModel) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::Domain {
            what: "current_at_voltage",
            value: v,
            expected: "finite voltage",
        });
    }
    match model {
        DiodeModel::Ideal => Ok(model_current(p, v, 0.0, model)),
        DiodeModel::OneDiode if p.r_s == 0.0 => Ok(model_current(p, v, 0.0, model)),
        DiodeModel::OneDiode => {
            let i = one_diode_current_lambert(p, v);
            if i.is_finite() && residual(p, v, i, model).abs() <= residual_tolerance(p) {
                Ok(i)
            } else {
                current_at_voltage_newton(p, v, model)
            }
        }
        DiodeModel::TwoDiode => current_at_voltage_newton(p, v, model),
    }
}

/// Explicit one-diode solution (requires `Rs > 0`):
///
/// ```text
/// I = (Rsh(Iph + I01) - V)/(Rs + Rsh)
///     - (VT/Rs)·W( Rs·I01·Rsh/(VT(Rs + Rsh)) · e^{Rsh(Rs(Iph + I01) + V)/(VT(Rs + Rsh))} )
/// ```
fn one_diode_current_lambert(p: &PVModuleParams, v: f64) -> f64 {
    let vt = p.v_t1();
    let rsum = p.r_s + p.r_sh;
    let linear = (p.r_sh * (p.i_ph + p.i_01) - v) / rsum;
    let log_arg = (p.r_s * p.i_01 * p.r_sh / (vt * rsum)).ln()
        + p.r_sh * (p.r_s * (p.i_ph + p.i_01) + v) / (vt * rsum);
    linear - vt / p.r_s * w0_of_exp(log_arg)
}

const NEWTON_MAX_ITER: usize = 200;

/// Bracketed Newton on a strictly decreasing function, falling back to
/// bisection whenever the Newton step leaves the bracket.
fn decreasing_root<F>(routine: &'static str, f: F, mut lo: f64, mut hi: f64, ftol: f64) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let mut x = 0.5 * (lo + hi);
    let mut last_step = hi - lo;
    for _ in 0..NEWTON_MAX_ITER {
        let (fx, dfx) = f(x);
        if fx.abs() <= ftol {
            return Ok(x);
        }
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // Newton is kept only while it stays inside the bracket and at
        // least halves the previous step; otherwise bisect.
        let newton = x - fx / dfx;
        let next = if newton.is_finite() && newton > lo && newton < hi && (newton - x).abs() <= 0.5 * last_step {
            newton
        } else {
            0.5 * (lo + hi)
        };
        last_step = (next - x).abs();
        if next == x || hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NoConvergence {
        routine,
        iterations: NEWTON_MAX_ITER,
    })
}

/// Current at voltage `v` by safeguarded Newton, for any model.
pub fn current_at_voltage_newton(p: &PVModuleParams, v: f64, model: DiodeModel) -> Result<f64> {
    let f = |i: f64| {
        let g = junction_conductance(p, v, i, model);
        let slope = match model {
            DiodeModel::Ideal => -1.0,
            _ => -(1.0 + p.r_s * g),
        };
        (residual(p, v, i, model), slope)
    };
    let hi = p.i_ph + p.i_01 + p.i_02_or_zero() + (-v).max(0.0) / p.r_sh + 1.0;
    let mut lo = -1.0;
    let mut expansions = 0;
    while !(f(lo).0 > 0.0) {
        lo *= 2.0;
        expansions += 1;
        if expansions > 2000 || !lo.is_finite() {
            return Err(Error::Bracket {
                routine: "current_at_voltage",
                detail: format!("no sign change below I = {hi} at V = {v}"),
            });
        }
    }
    decreasing_root("current_at_voltage", f, lo, hi, 1e-13 * p.i_ph.max(1.0))
}

fn bisect_decreasing<F: Fn(f64) -> Result<f64>>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64> {
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Open-circuit voltage. The ideal model uses `VT1·ln(1 + Iph/I01)`; the
/// resistive models bisect `I(V) = 0` on `[0, 2·VT1·ln(1 + Iph/I01)]`.
pub fn open_circuit_voltage(p: &PVModuleParams, model: DiodeModel) -> Result<f64> {
    let closed = p.v_t1() * (p.i_ph / p.i_01).ln_1p();
    if model == DiodeModel::Ideal || p.i_ph == 0.0 {
        return Ok(closed);
    }
    let hi = 2.0 * closed;
    let at_zero = current_at_voltage(p, 0.0, model)?;
    let at_hi = current_at_voltage(p, hi, model)?;
    if at_zero < 0.0 || at_hi > 0.0 {
        return Err(Error::Bracket {
            routine: "open_circuit_voltage",
            detail: format!("I(0) = {at_zero}, I({hi}) = {at_hi}"),
        });
    }
    bisect_decreasing(|v| current_at_voltage(p, v, model), 0.0, hi, 1e-12)
}

pub fn short_circuit_current(p: &PVModuleParams, model: DiodeModel) -> Result<f64> {
    current_at_voltage(p, 0.0, model)
}

/// One-diode slope `∂I/∂V` at a point on the curve:
///
/// ```text
/// ∂I/∂V = -(Rsh·I01·E + VT) / (VT·Rsh + I01·Rs·Rsh·E + VT·Rs),   E = e^{(V + Rs·I)/VT}
/// ```
///
/// For positive exponents numerator and denominator are both divided by `E`
/// so nothing overflows.
pub fn didv(p: &PVModuleParams, op: &OperatingPoint) -> f64 {
    let vt = p.v_t1();
    let z = (op.v + p.r_s * op.i) / vt;
    let (num, den) = if z <= 0.0 {
        let e = z.exp();
        (
            p.r_sh * p.i_01 * e + vt,
            vt * p.r_sh + p.i_01 * p.r_s * p.r_sh * e + vt * p.r_s,
        )
    } else {
        let s = (-z).exp();
        (
            p.r_sh * p.i_01 + vt * s,
            p.i_01 * p.r_s * p.r_sh + (vt * p.r_sh + vt * p.r_s) * s,
        )
    };
    -num / den
}

/// `∂I/∂V` for any model; the one-diode case is [`didv`].
pub fn didv_model(p: &PVModuleParams, op: &OperatingPoint, model: DiodeModel) -> f64 {
    match model {
        DiodeModel::OneDiode => didv(p, op),
        DiodeModel::Ideal => -junction_conductance(p, op.v, op.i, model),
        DiodeModel::TwoDiode => {
            let g = junction_conductance(p, op.v, op.i, model);
            if g.is_finite() {
                -g / (1.0 + p.r_s * g)
            } else {
                -1.0 / p.r_s
            }
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "operating_point_from_beta",
            value: beta,
            expected: "0 < beta < inf",
        })
    }
}

/// One-diode operating point on the load line `V = β·I`, in closed form.
///
/// With `c0 = 1 + (β + Rs)/Rsh`, `d0 = β(Iph + I01)/c0`, `d1 = β·I01/c0`
/// and `α1 = (β + Rs)/(β·VT)`, the voltage solves `V = d0 - d1·e^{α1·V}`,
/// whose solution is `V = d0 - W(α1·d1·e^{α1·d0})/α1`. The W-argument is
/// passed to [`w0_of_exp`] as a logarithm.
pub fn operating_point_from_beta(p: &PVModuleParams, beta: f64) -> Result<OperatingPoint> {
    check_beta(beta)?;
    let vt = p.v_t1();
    let c0 = 1.0 + (beta + p.r_s) / p.r_sh;
    let d0 = beta * (p.i_ph + p.i_01) / c0;
    let d1 = beta * p.i_01 / c0;
    let alpha1 = (beta + p.r_s) / (beta * vt);
    let w = w0_of_exp((alpha1 * d1).ln() + alpha1 * d0);
    let v = d0 - w / alpha1;
    Ok(OperatingPoint::new(v, v / beta))
}

/// Operating point on `V = β·I` by safeguarded Newton in `I`, for any model.
pub fn operating_point_from_beta_newton(
    p: &PVModuleParams,
    beta: f64,
    model: DiodeModel,
) -> Result<OperatingPoint> {
    check_beta(beta)?;
    let f = |i: f64| {
        let v = beta * i;
        let g = junction_conductance(p, v, i, model);
        let slope = match model {
            DiodeModel::Ideal => -(1.0 + beta * g),
            _ => -(1.0 + (beta + p.r_s) * g),
        };
        (residual(p, v, i, model), slope)
    };
    let hi = p.i_ph + p.i_01 + p.i_02_or_zero() + 1.0;
    let i = decreasing_root("operating_point_from_beta", f, 0.0, hi, 1e-13 * p.i_ph.max(1.0))?;
    Ok(OperatingPoint::new(beta * i, i))
}

/// Closed-form operating points for a batch of load-line slopes.
pub fn operating_points_from_betas(
    p: &PVModuleParams,
    betas: &[f64],
    mode: Mode,
) -> Result<Vec<OperatingPoint>> {
    exec::map_slice(betas, mode, |&b| operating_point_from_beta(p, b))
        .into_iter()
        .collect()
}

/// One sample of an I-V/P-V sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub v: f64,
    pub i: f64,
    pub p: f64,
    pub didv: f64,
    /// `V/I`
    pub req: f64,
    /// `I/V`
    pub geq: f64,
}

/// Uniform sweep of `points` voltages over `[0, Voc]`.
pub fn sweep_curve(
    p: &PVModuleParams,
    model: DiodeModel,
    points: usize,
    mode: Mode,
) -> Result<Vec<CurvePoint>> {
    if points < 2 {
        return Err(Error::Domain {
            what: "sweep_curve",
            value: points as f64,
            expected: "at least 2 points",
        });
    }
    let voc = open_circuit_voltage(p, model)?;
    let step = voc / (points - 1) as f64;
    exec::map_indexed(points, mode, |k| {
        let v = step * k as f64;
        let i = current_at_voltage(p, v, model)?;
        let op = OperatingPoint::new(v, i);
        Ok(CurvePoint {
            v,
            i,
            p: op.p,
            didv: didv_model(p, &op, model),
            req: v / i,
            geq: i / v,
        })
    })
    .into_iter()
    .collect()
}

const GOLDEN_TOL: f64 = 1e-7;

/// Brute-force maximum power point: grid over `[0, Voc]` followed by a
/// golden-section refinement of the best cell.
pub fn mpp_sweep(p: &PVModuleParams, model: DiodeModel, grid_points: usize) -> Result<OperatingPoint> {
    mpp_sweep_with(p, model, grid_points, Mode::default())
}

pub fn mpp_sweep_with(
    p: &PVModuleParams,
    model: DiodeModel,
    grid_points: usize,
    mode: Mode,
) -> Result<OperatingPoint> {
    if grid_points < 1000 {
        return Err(Error::Domain {
            what: "mpp_sweep",
            value: grid_points as f64,
            expected: "grid_points >= 1000",
        });
    }
    let voc = open_circuit_voltage(p, model)?;
    let step = voc / (grid_points - 1) as f64;
    let power = |v: f64| current_at_voltage(p, v, model).map(|i| v * i);
    let grid: Vec<f64> = exec::map_indexed(grid_points, mode, |k| power(step * k as f64))
        .into_iter()
        .collect::<Result<_>>()?;
    let best = grid
        .iter()
        .enumerate()
        .fold(0, |b, (k, &pk)| if pk > grid[b] { k } else { b });

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = step * best.saturating_sub(1) as f64;
    let mut b = (step * (best + 1) as f64).min(voc);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (power(c)?, power(d)?);
    while b - a > GOLDEN_TOL {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = power(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = power(d)?;
        }
    }
    let v = 0.5 * (a + b);
    let refined = OperatingPoint::new(v, current_at_voltage(p, v, model)?);
    let grid_best = step * best as f64;
    if refined.p >= grid[best] {
        Ok(refined)
    } else {
        Ok(OperatingPoint::new(grid_best, grid[best] / grid_best))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kyocera() -> PVModuleParams {
        PVModuleParams::kyocera()
    }

    #[test]
    fn identity_scaling() {
        let cell = CellParams::kyocera();
        let m = scale_to_module(&cell, 1, 1);
        assert_eq!(m.i_ph, cell.i_ph);
        assert_eq!(m.i_01, cell.i_01);
        assert_eq!(m.r_s, cell.r_s);
        assert_eq!(m.r_sh, cell.r_sh);
        assert_eq!(m.v_t, thermal_voltage(cell.temperature));
    }

    #[test]
    fn square_array_scaling() {
        let cell = CellParams {
            i_02: Some(1e-6),
            ..CellParams::kyocera()
        };
        let m = scale_to_module(&cell, 2, 2);
        assert_eq!(m.i_ph, 2.0 * cell.i_ph);
        assert_eq!(m.i_02, Some(2e-6));
        assert_eq!(m.r_s, cell.r_s);
        assert_eq!(m.r_sh, cell.r_sh);
        assert_eq!(m.v_t, 2.0 * thermal_voltage(cell.temperature));
    }

    #[test]
    fn module_values_invert_to_cell_values() {
        // A cell scaled down by 36 reproduces the terminal-level numbers.
        let cell = CellParams {
            r_s: 0.01 / 36.0,
            r_sh: 150.0 / 36.0,
            ..CellParams::kyocera()
        };
        let m = scale_to_module(&cell, 36, 1);
        assert!((m.r_s - 0.01).abs() < 1e-15);
        assert!((m.r_sh - 150.0).abs() < 1e-12);
        assert_eq!(m.i_01, 1.9795e-10);
        assert_eq!(m.i_ph, 3.31);
    }

    #[test]
    fn ideal_short_circuit_is_photocurrent() {
        let p = kyocera();
        assert_eq!(current_at_voltage(&p, 0.0, DiodeModel::Ideal).unwrap(), p.i_ph);
        assert_eq!(short_circuit_current(&p, DiodeModel::Ideal).unwrap(), p.i_ph);
    }

    #[test]
    fn one_diode_without_series_resistance() {
        let p = PVModuleParams {
            r_s: 0.0,
            ..kyocera()
        };
        assert_eq!(short_circuit_current(&p, DiodeModel::OneDiode).unwrap(), p.i_ph);
        let op = OperatingPoint::new(0.0, p.i_ph);
        let expected = -p.i_01 / p.v_t - 1.0 / p.r_sh;
        assert!(((didv(&p, &op) - expected) / expected).abs() < 1e-14);
    }

    #[test]
    fn kyocera_short_circuit_close_to_photocurrent() {
        let p = kyocera();
        let isc = short_circuit_current(&p, DiodeModel::OneDiode).unwrap();
        assert!(isc <= p.i_ph);
        assert!(p.i_ph - isc <= p.i_ph * (p.r_s / p.r_sh + 1e-3));
    }

    #[test]
    fn open_circuit_closed_forms() {
        let mut p = kyocera();
        p.i_ph = p.i_01;
        let voc = open_circuit_voltage(&p, DiodeModel::Ideal).unwrap();
        assert!((voc - p.v_t * 2f64.ln()).abs() < 1e-15);
        p.i_ph = 0.0;
        assert_eq!(open_circuit_voltage(&p, DiodeModel::Ideal).unwrap(), 0.0);
    }

    #[test]
    fn kyocera_open_circuit_root() {
        let p = kyocera();
        let voc = open_circuit_voltage(&p, DiodeModel::OneDiode).unwrap();
        let i = current_at_voltage(&p, voc, DiodeModel::OneDiode).unwrap();
        assert!(i.abs() < 1e-9, "I(Voc) = {i}");
        assert!(i.abs() < 1e-8 * p.i_ph);
        assert!((voc - 21.77).abs() < 0.05, "Voc = {voc}");
    }

    #[test]
    fn mpp_near_eighteen_volts() {
        let p = kyocera();
        let mpp = mpp_sweep(&p, DiodeModel::OneDiode, 1000).unwrap();
        assert!((mpp.v - 18.1).abs() <= 0.3, "Vmpp = {}", mpp.v);
        let i = current_at_voltage(&p, 18.1, DiodeModel::OneDiode).unwrap();
        assert!((18.1 * i - mpp.p).abs() <= 0.01 * mpp.p);
    }

    #[test]
    fn ideal_mpp_dominates_grid() {
        let p = kyocera();
        let mpp = mpp_sweep(&p, DiodeModel::Ideal, 2000).unwrap();
        for pt in sweep_curve(&p, DiodeModel::Ideal, 2000, Mode::Sequential).unwrap() {
            assert!(mpp.p >= pt.p);
        }
    }

    #[test]
    fn two_diode_reduces_to_one_diode_mpp() {
        let p1 = kyocera();
        let p2 = PVModuleParams {
            i_02: Some(0.0),
            ..p1
        };
        let a = mpp_sweep(&p1, DiodeModel::OneDiode, 1000).unwrap();
        let b = mpp_sweep(&p2, DiodeModel::TwoDiode, 1000).unwrap();
        assert!((a.v - b.v).abs() < 1e-6, "{} vs {}", a.v, b.v);
    }

    #[test]
    fn mpp_sweep_rejects_coarse_grid() {
        assert!(mpp_sweep(&kyocera(), DiodeModel::OneDiode, 999).is_err());
    }

    #[test]
    fn didv_against_finite_difference() {
        let p = kyocera();
        let h = 1e-4;
        let i = |v| current_at_voltage(&p, v, DiodeModel::OneDiode).unwrap();
        let fd = (i(10.0 + h) - i(10.0 - h)) / (2.0 * h);
        let analytic = didv(&p, &OperatingPoint::new(10.0, i(10.0)));
        assert!(((analytic - fd) / fd).abs() < 1e-6, "{analytic} vs {fd}");
    }

    #[test]
    fn didv_survives_huge_exponent() {
        let p = kyocera();
        let op = OperatingPoint::new(2000.0, -100.0);
        let s = didv(&p, &op);
        assert!(s.is_finite() && s < 0.0);
        assert!((s + 1.0 / (p.r_s + p.r_s * p.r_s / p.r_sh)).abs() / s.abs() < 1e-2);
    }

    #[test]
    fn beta_limits() {
        let p = kyocera();
        let open = operating_point_from_beta(&p, 1e9).unwrap();
        let voc = open_circuit_voltage(&p, DiodeModel::OneDiode).unwrap();
        assert!((open.v - voc).abs() < 1e-3);
        let short = operating_point_from_beta(&p, 1e-6).unwrap();
        let isc = short_circuit_current(&p, DiodeModel::OneDiode).unwrap();
        assert!((short.i - isc).abs() < 1e-3);
        assert!(operating_point_from_beta(&p, 0.0).is_err());
        assert!(operating_point_from_beta(&p, -2.0).is_err());
    }

    #[test]
    fn beta_through_mpp_returns_mpp() {
        let p = kyocera();
        let mpp = mpp_sweep(&p, DiodeModel::OneDiode, 1000).unwrap();
        let op = operating_point_from_beta(&p, mpp.v / mpp.i).unwrap();
        assert!(((op.v - mpp.v) / mpp.v).abs() < 1e-6);
        assert!(((op.i - mpp.i) / mpp.i).abs() < 1e-6);
    }

    #[test]
    fn two_diode_beta_solve_lies_on_curve() {
        let p = PVModuleParams {
            i_02: Some(1e-6),
            n2: 2.0,
            ..kyocera()
        };
        for beta in [0.5, 5.0, 50.0] {
            let op = operating_point_from_beta_newton(&p, beta, DiodeModel::TwoDiode).unwrap();
            assert!(residual(&p, op.v, op.i, DiodeModel::TwoDiode).abs() <= residual_tolerance(&p));
            assert!(((op.v / op.i - beta) / beta).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_current_on_grid() {
        let p = kyocera();
        let curve = sweep_curve(&p, DiodeModel::OneDiode, 1000, Mode::Sequential).unwrap();
        assert!(curve.windows(2).all(|w| w[1].i < w[0].i));
    }

    #[test]
    fn ideal_scaling_laws_exact() {
        let cell = CellParams::kyocera();
        let c = scale_to_module(&cell, 1, 1);
        let m = scale_to_module(&cell, 36, 4);
        let voc_c = open_circuit_voltage(&c, DiodeModel::Ideal).unwrap();
        let voc_m = open_circuit_voltage(&m, DiodeModel::Ideal).unwrap();
        assert!((voc_m - 36.0 * voc_c).abs() <= 4.0 * f64::EPSILON * voc_m);
        let isc_c = short_circuit_current(&c, DiodeModel::Ideal).unwrap();
        let isc_m = short_circuit_current(&m, DiodeModel::Ideal).unwrap();
        assert_eq!(isc_m, 4.0 * isc_c);
    }

    #[test]
    fn validation_names_field() {
        let mut cell = CellParams::kyocera();
        cell.r_sh = 0.0;
        match cell.validate() {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "r_sh"),
            other => panic!("unexpected {other:?}"),
        }
        let mut m = kyocera();
        m.n_s = 0;
        assert!(m.validate().is_err());
    }

    proptest! {
        #[test]
        fn beta_consistency(log_beta in -2.0f64..4.0) {
            let p = kyocera();
            let beta = 10f64.powf(log_beta);
            let op = operating_point_from_beta(&p, beta).unwrap();
            prop_assert!(((op.v / op.i - beta) / beta).abs() < 1e-12);
            prop_assert!(residual(&p, op.v, op.i, DiodeModel::OneDiode).abs() <= residual_tolerance(&p));
        }

        #[test]
        fn lambert_and_newton_currents_agree(v in -5.0f64..25.0) {
            let p = kyocera();
            let a = current_at_voltage(&p, v, DiodeModel::OneDiode).unwrap();
            let b = current_at_voltage_newton(&p, v, DiodeModel::OneDiode).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * p.i_ph);
        }

        #[test]
        fn two_diode_with_no_recombination_matches(v in 0.0f64..21.7) {
            let p1 = kyocera();
            let p2 = PVModuleParams { i_02: Some(0.0), ..p1 };
            let a = current_at_voltage(&p1, v, DiodeModel::OneDiode).unwrap();
            let b = current_at_voltage(&p2, v, DiodeModel::TwoDiode).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
