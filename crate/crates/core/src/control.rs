//! Equivalent-resistance MPPT: the feedback-linearizing duty law, region
//! classification, the outer `R_eq`/`G_eq` update and the P&O and
//! incremental-conductance baselines.

use std::fmt;
use std::str::FromStr;

use crate::converter::{DutyCommand, PlantState};
use crate::pv_model::{current_at_voltage, didv, DiodeModel, OperatingPoint, PVModuleParams};
use crate::{Error, Result};

/// Side of the maximum power point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// `dP/dV > 0`, left of the MPP.
    I,
    /// `dP/dV <= 0`, right of the MPP (and the tie band around it).
    II,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::I => "I",
            Region::II => "II",
        })
    }
}

impl FromStr for Region {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" => Ok(Region::I),
            "II" => Ok(Region::II),
            other => Err(Error::validation("region", format!("expected I | II, got `{other}`"))),
        }
    }
}

/// Target of the inner loop: a resistance in Region I, a conductance in
/// Region II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceSetpoint {
    Resistance { r_eq_ref: f64 },
    Conductance { g_eq_ref: f64 },
}

impl ReferenceSetpoint {
    pub fn region(&self) -> Region {
        match self {
            ReferenceSetpoint::Resistance { .. } => Region::I,
            ReferenceSetpoint::Conductance { .. } => Region::II,
        }
    }

    /// `β`, the resistance the module should see.
    pub fn beta(&self) -> f64 {
        match *self {
            ReferenceSetpoint::Resistance { r_eq_ref } => r_eq_ref,
            ReferenceSetpoint::Conductance { g_eq_ref } => 1.0 / g_eq_ref,
        }
    }

    /// Reference that sits exactly on `op` in the coordinate of `region`.
    pub fn at(op: &OperatingPoint, region: Region) -> Result<Self> {
        Ok(match region {
            Region::I => ReferenceSetpoint::Resistance {
                r_eq_ref: equivalent_resistance(op)?,
            },
            Region::II => ReferenceSetpoint::Conductance {
                g_eq_ref: equivalent_conductance(op)?,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    Constant,
    SlopeProportional,
}

impl FromStr for StepMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(StepMode::Constant),
            "slope_proportional" => Ok(StepMode::SlopeProportional),
            other => Err(Error::validation(
                "step_mode",
                format!("expected constant | slope_proportional, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for StepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepMode::Constant => "constant",
            StepMode::SlopeProportional => "slope_proportional",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterLoopConfig {
    pub step_mode: StepMode,
    /// Constant `ΔR_eq` (Ω).
    pub delta_r: f64,
    /// Constant `ΔG_eq` (S).
    pub delta_g: f64,
    /// Ω per W/V.
    pub kappa_r: f64,
    /// S per W/V.
    pub kappa_g: f64,
    /// Seconds between outer updates.
    pub update_period: f64,
    /// `|dP/dV|` (W/V) below which the point counts as the MPP.
    pub convergence_eps: f64,
}

impl Default for OuterLoopConfig {
    fn default() -> Self {
        OuterLoopConfig {
            step_mode: StepMode::SlopeProportional,
            delta_r: 0.05,
            delta_g: 0.005,
            kappa_r: 0.1,
            kappa_g: 0.005,
            update_period: 1e-3,
            convergence_eps: 1e-3,
        }
    }
}

impl OuterLoopConfig {
    pub fn validate(&self, t_s: f64) -> Result<()> {
        for (name, value) in [
            ("delta_r", self.delta_r),
            ("delta_g", self.delta_g),
            ("kappa_r", self.kappa_r),
            ("kappa_g", self.kappa_g),
            ("convergence_eps", self.convergence_eps),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::validation(name, "must be finite and > 0"));
            }
        }
        if !(self.update_period.is_finite() && self.update_period >= t_s) {
            return Err(Error::validation(
                "update_period",
                format!("must be >= the switching period {t_s}"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    /// Output-error decay rate (1/s).
    pub k: f64,
    /// Below this inductor current the soft-start duty is applied (A).
    pub i_l_min: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub soft_start_duty: f64,
}

impl Default for ControllerGains {
    /// `d_max = 0.999`: with the default converter the averaged plant needs
    /// a duty of about 0.996 to hold the MPP.
    fn default() -> Self {
        ControllerGains {
            k: 500.0,
            i_l_min: 0.05,
            d_min: 0.01,
            d_max: 0.999,
            soft_start_duty: 0.5,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::validation("k", "must be finite and > 0"));
        }
        if !(self.i_l_min.is_finite() && self.i_l_min > 0.0) {
            return Err(Error::validation("i_l_min", "must be finite and > 0"));
        }
        if !(0.0..1.0).contains(&self.d_min) {
            return Err(Error::validation("d_min", "must satisfy 0 <= d_min < 1"));
        }
        if !(self.d_max > self.d_min && self.d_max <= 1.0) {
            return Err(Error::validation("d_max", "must satisfy d_min < d_max <= 1"));
        }
        if !(self.d_min..=self.d_max).contains(&self.soft_start_duty) {
            return Err(Error::validation("soft_start_duty", "must lie in [d_min, d_max]"));
        }
        Ok(())
    }

    fn clamp(&self, d: f64) -> DutyCommand {
        DutyCommand::clamped(d, self.d_min, self.d_max)
    }
}

/// `R_eq = V/I`.
pub fn equivalent_resistance(op: &OperatingPoint) -> Result<f64> {
    if op.i > 0.0 {
        Ok(op.v / op.i)
    } else {
        Err(Error::Domain {
            what: "equivalent resistance",
            value: op.i,
            expected: "current > 0",
        })
    }
}

/// `G_eq = I/V`.
pub fn equivalent_conductance(op: &OperatingPoint) -> Result<f64> {
    if op.v > 0.0 {
        Ok(op.i / op.v)
    } else {
        Err(Error::Domain {
            what: "equivalent conductance",
            value: op.v,
            expected: "voltage > 0",
        })
    }
}

/// `dP/dV = I + V·dI/dV`.
pub fn power_slope(op: &OperatingPoint, didv: f64) -> f64 {
    op.i + op.v * didv
}

/// Region I when `dP/dV >= eps`, otherwise Region II.
pub fn classify_region(op: &OperatingPoint, didv: f64, eps: f64) -> Region {
    let slope = power_slope(op, didv);
    if slope > 0.0 && slope >= eps {
        Region::I
    } else {
        Region::II
    }
}

/// Next reference from the measured operating point.
///
/// Region I raises `R_eq`, Region II raises `G_eq`; both move the operating
/// point toward the MPP. Outside the first quadrant `prev` is returned.
pub fn outer_update(
    op: &OperatingPoint,
    didv: f64,
    cfg: &OuterLoopConfig,
    prev: ReferenceSetpoint,
) -> ReferenceSetpoint {
    if !(op.v > 0.0 && op.i > 0.0) {
        return prev;
    }
    let slope = power_slope(op, didv);
    match classify_region(op, didv, cfg.convergence_eps) {
        Region::I => {
            let step = match cfg.step_mode {
                StepMode::Constant => cfg.delta_r,
                StepMode::SlopeProportional => cfg.kappa_r * slope.abs(),
            };
            ReferenceSetpoint::Resistance {
                r_eq_ref: op.v / op.i + step,
            }
        }
        Region::II => {
            let step = match cfg.step_mode {
                StepMode::Constant => cfg.delta_g,
                StepMode::SlopeProportional => cfg.kappa_g * slope.abs(),
            };
            ReferenceSetpoint::Conductance {
                g_eq_ref: op.i / op.v + step,
            }
        }
    }
}

/// `y = R_eq_ref - V/I` in Region I, `y = G_eq_ref - I/V` in Region II.
pub fn output_error(op: &OperatingPoint, reference: &ReferenceSetpoint) -> Result<f64> {
    match *reference {
        ReferenceSetpoint::Resistance { r_eq_ref } => Ok(r_eq_ref - equivalent_resistance(op)?),
        ReferenceSetpoint::Conductance { g_eq_ref } => Ok(g_eq_ref - equivalent_conductance(op)?),
    }
}

/// `g(v) = I - v·dI/dv`.
pub fn g_of(v_pv: f64, i_pv: f64, didv: f64) -> f64 {
    i_pv - v_pv * didv
}

/// Duty law before clamping, from measured `I_pv` and `dI/dV`.
///
/// Region I: `d = (I - k·y·I²·C_pv/g)/i_L`; Region II:
/// `d = (I + k·y·v²·C_pv/g)/i_L`.
pub fn feedback_linearized_duty_raw(
    x: &PlantState,
    i_pv: f64,
    didv: f64,
    c_pv: f64,
    reference: &ReferenceSetpoint,
    k: f64,
) -> Result<f64> {
    let op = OperatingPoint::new(x.v_pv, i_pv);
    let y = output_error(&op, reference)?;
    let g = g_of(x.v_pv, i_pv, didv);
    if !(g > 0.0) {
        return Err(Error::Domain {
            what: "g(v_pv)",
            value: g,
            expected: "g > 0 on the physical curve",
        });
    }
    let correction = match reference.region() {
        Region::I => -k * y * i_pv * i_pv * c_pv / g,
        Region::II => k * y * x.v_pv * x.v_pv * c_pv / g,
    };
    Ok((i_pv + correction) / x.i_l)
}

/// Clamped duty law from measured `I_pv` and `dI/dV`.
///
/// Applies the soft-start duty while `|i_L| < i_l_min`. Off the first
/// quadrant of the I-V curve the law is undefined and the duty saturates at
/// `d_max`, which draws the PV voltage back down.
pub fn duty_from_measurement(
    x: &PlantState,
    i_pv: f64,
    didv: f64,
    c_pv: f64,
    reference: &ReferenceSetpoint,
    gains: &ControllerGains,
) -> DutyCommand {
    if !(x.i_l.abs() >= gains.i_l_min) {
        return gains.clamp(gains.soft_start_duty);
    }
    match feedback_linearized_duty_raw(x, i_pv, didv, c_pv, reference, gains.k) {
        Ok(d) => gains.clamp(d),
        Err(_) => gains.clamp(gains.d_max),
    }
}

/// Clamped duty law, evaluating `I_pv` and `dI/dV` from the module model.
pub fn feedback_linearized_duty(
    x: &PlantState,
    pv: &PVModuleParams,
    c_pv: f64,
    reference: &ReferenceSetpoint,
    gains: &ControllerGains,
) -> Result<DutyCommand> {
    let i_pv = current_at_voltage(pv, x.v_pv, DiodeModel::OneDiode)?;
    let slope = didv(pv, &OperatingPoint::new(x.v_pv, i_pv));
    Ok(duty_from_measurement(x, i_pv, slope, c_pv, reference, gains))
}

/// Duty that makes the PV voltage approach `v_ref` as `e^{-k t}`.
pub fn voltage_tracking_duty(
    x: &PlantState,
    i_pv: f64,
    v_ref: f64,
    c_pv: f64,
    gains: &ControllerGains,
) -> DutyCommand {
    if !(x.i_l.abs() >= gains.i_l_min) {
        return gains.clamp(gains.soft_start_duty);
    }
    gains.clamp((i_pv - gains.k * (v_ref - x.v_pv) * c_pv) / x.i_l)
}

/// Perturb and observe: step toward increasing power, ties go up.
pub fn po_step(op: &OperatingPoint, prev: &OperatingPoint, dv: f64) -> f64 {
    let dp = op.p - prev.p;
    let dvm = op.v - prev.v;
    let up = if dp == 0.0 || dvm == 0.0 {
        dp >= 0.0
    } else {
        (dp > 0.0) == (dvm > 0.0)
    };
    if up {
        op.v + dv
    } else {
        op.v - dv
    }
}

/// Incremental conductance: step by the sign of `I + V·ΔI/ΔV`, hold inside
/// `threshold`.
pub fn ic_step(op: &OperatingPoint, prev: &OperatingPoint, dv: f64, threshold: f64) -> f64 {
    let d_v = op.v - prev.v;
    let d_i = op.i - prev.i;
    if d_v == 0.0 {
        return if d_i == 0.0 {
            op.v
        } else if d_i > 0.0 {
            op.v + dv
        } else {
            op.v - dv
        };
    }
    let slope = op.i + op.v * d_i / d_v;
    if slope.abs() < threshold {
        op.v
    } else if slope > 0.0 {
        op.v + dv
    } else {
        op.v - dv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// Feedback linearization with the equivalent-resistance outer loop.
    Flc,
    Po,
    Ic,
}

impl FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flc" => Ok(ControllerKind::Flc),
            "po" => Ok(ControllerKind::Po),
            "ic" => Ok(ControllerKind::Ic),
            other => Err(Error::validation(
                "controller",
                format!("expected flc | po | ic, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerKind::Flc => "flc",
            ControllerKind::Po => "po",
            ControllerKind::Ic => "ic",
        })
    }
}

/// Settings for the voltage-reference baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// Voltage perturbation (V).
    pub dv: f64,
    /// IC hold band on `|dP/dV|` (W/V).
    pub ic_threshold: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            dv: 0.1,
            ic_threshold: 0.05,
        }
    }
}

/// What the controller is currently aiming at, for tracing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerStatus {
    pub region: Region,
    pub beta: f64,
    pub y: f64,
}

/// Stateful controller: call [`Controller::outer_tick`] every update period
/// and [`Controller::duty`] every switching period.
#[derive(Debug, Clone)]
pub struct Controller {
    kind: ControllerKind,
    gains: ControllerGains,
    outer: OuterLoopConfig,
    baseline: BaselineConfig,
    c_pv: f64,
    reference: Option<ReferenceSetpoint>,
    v_ref: Option<f64>,
    prev: Option<OperatingPoint>,
}

impl Controller {
    pub fn new(
        kind: ControllerKind,
        gains: ControllerGains,
        outer: OuterLoopConfig,
        baseline: BaselineConfig,
        c_pv: f64,
    ) -> Self {
        Controller {
            kind,
            gains,
            outer,
            baseline,
            c_pv,
            reference: None,
            v_ref: None,
            prev: None,
        }
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn reference(&self) -> Option<ReferenceSetpoint> {
        self.reference
    }

    pub fn voltage_reference(&self) -> Option<f64> {
        self.v_ref
    }

    /// Outer-loop update from the measured operating point and slope.
    pub fn outer_tick(&mut self, op: &OperatingPoint, didv: f64) {
        match self.kind {
            ControllerKind::Flc => {
                let prev = match self.reference {
                    Some(r) => r,
                    None => match ReferenceSetpoint::at(op, classify_region(op, didv, self.outer.convergence_eps)) {
                        Ok(r) => r,
                        Err(_) => return,
                    },
                };
                self.reference = Some(outer_update(op, didv, &self.outer, prev));
            }
            ControllerKind::Po => {
                self.v_ref = Some(match &self.prev {
                    Some(p) => po_step(op, p, self.baseline.dv),
                    None => op.v + self.baseline.dv,
                });
            }
            ControllerKind::Ic => {
                self.v_ref = Some(match &self.prev {
                    Some(p) => ic_step(op, p, self.baseline.dv, self.baseline.ic_threshold),
                    None => op.v + self.baseline.dv,
                });
            }
        }
        self.prev = Some(*op);
    }

    /// Inner-loop duty from the plant state and measured PV current/slope.
    pub fn duty(&self, x: &PlantState, i_pv: f64, didv: f64) -> DutyCommand {
        match self.kind {
            ControllerKind::Flc => match &self.reference {
                Some(r) => duty_from_measurement(x, i_pv, didv, self.c_pv, r, &self.gains),
                None => self.gains.clamp(self.gains.soft_start_duty),
            },
            ControllerKind::Po | ControllerKind::Ic => match self.v_ref {
                Some(v_ref) => voltage_tracking_duty(x, i_pv, v_ref, self.c_pv, &self.gains),
                None => self.gains.clamp(self.gains.soft_start_duty),
            },
        }
    }

    /// Region, `β` and tracking error at the given operating point. For the
    /// baselines `β` is the measured `V/I` and `y` the voltage error.
    pub fn status(&self, op: &OperatingPoint, didv: f64) -> ControllerStatus {
        match (self.kind, &self.reference) {
            (ControllerKind::Flc, Some(r)) => ControllerStatus {
                region: r.region(),
                beta: r.beta(),
                y: output_error(op, r).unwrap_or(f64::NAN),
            },
            _ => ControllerStatus {
                region: classify_region(op, didv, self.outer.convergence_eps),
                beta: if op.i != 0.0 { op.v / op.i } else { f64::INFINITY },
                y: self.v_ref.map_or(0.0, |v| v - op.v),
            },
        }
    }
}

/// One point of a quasi-static outer-loop iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiStaticStep {
    pub op: OperatingPoint,
    pub slope: f64,
    pub reference: ReferenceSetpoint,
}

/// Iterates the outer loop with the algebraic I-V curve as the plant:
/// each reference `β` is realized exactly by the closed-form operating
/// point. Starts from the curve point at `v0` and stops once
/// `|dP/dV| < convergence_eps` or after `max_steps` updates.
pub fn quasi_static_outer_loop(
    pv: &PVModuleParams,
    v0: f64,
    cfg: &OuterLoopConfig,
    max_steps: usize,
) -> Result<Vec<QuasiStaticStep>> {
    use crate::pv_model::operating_point_from_beta;

    let i0 = current_at_voltage(pv, v0, DiodeModel::OneDiode)?;
    let mut op = OperatingPoint::new(v0, i0);
    let mut slope_didv = didv(pv, &op);
    let mut reference = ReferenceSetpoint::at(&op, classify_region(&op, slope_didv, cfg.convergence_eps))?;
    let mut out = Vec::new();
    for _ in 0..=max_steps {
        let slope = power_slope(&op, slope_didv);
        out.push(QuasiStaticStep { op, slope, reference });
        if slope.abs() < cfg.convergence_eps {
            break;
        }
        reference = outer_update(&op, slope_didv, cfg, reference);
        op = operating_point_from_beta(pv, reference.beta())?;
        slope_didv = didv(pv, &op);
    }
    Ok(out)
}

/// P&O against the algebraic curve: each voltage command is realized
/// exactly. Returns the visited voltages.
pub fn quasi_static_po(pv: &PVModuleParams, v0: f64, dv: f64, steps: usize) -> Result<Vec<f64>> {
    let at = |v: f64| -> Result<OperatingPoint> {
        Ok(OperatingPoint::new(v, current_at_voltage(pv, v, DiodeModel::OneDiode)?))
    };
    let mut prev = at(v0)?;
    let mut op = at(v0 + dv)?;
    let mut out = vec![prev.v, op.v];
    for _ in 0..steps {
        let next = at(po_step(&op, &prev, dv))?;
        prev = op;
        op = next;
        out.push(op.v);
    }
    Ok(out)
}
