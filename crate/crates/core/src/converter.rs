//! PV-fed buck-boost converter dynamics.
//!
//! State `x = (v_pv, v_c, i_L)`. Switch on:
//!
//! ```text
//! v̇_pv = (I_pv - i_L)/C_pv
//! v̇_c  = -v_c/(C(R + R_C))
//! i̇_L  = v_pv/L - (R_on + R_L)·i_L/L
//! ```
//!
//! Switch off (inductor discharges through the diode into the load):
//!
//! ```text
//! v̇_pv = I_pv/C_pv
//! v̇_c  = -v_c/(C(R + R_C)) + R·i_L/(C(R + R_C))
//! i̇_L  = -R·v_c/(L(R + R_C)) - (R_L + R_d + R_C∥R)·i_L/L - V_D/L
//! ```
//!
//! The averaged model weights the two by the duty cycle. The diode is
//! assumed to conduct for the whole off interval (no discontinuous mode).

use std::ops::{Add, Mul, Sub};

use crate::pv_model::{current_at_voltage, DiodeModel, PVModuleParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterParams {
    /// Output capacitance (F).
    pub c: f64,
    /// Inductance (H).
    pub l: f64,
    /// PV-side capacitance (F).
    pub c_pv: f64,
    /// Load resistance (Ω).
    pub r: f64,
    /// Capacitor ESR (Ω).
    pub r_c: f64,
    /// Inductor winding resistance (Ω).
    pub r_l: f64,
    /// MOSFET on-resistance (Ω).
    pub r_on: f64,
    /// Diode resistance (Ω).
    pub r_d: f64,
    /// Diode forward drop (V).
    pub v_d: f64,
    /// Switching period (s).
    pub t_s: f64,
}

impl Default for ConverterParams {
    /// `C = 220 µF`, `L = 3 mH`, `R = 10 Ω`, `C_pv = 1 mF`, `Ts = 10 µs`,
    /// parasitics `(R_C, R_L, R_on, R_d) = (1, 1, 1, 1000) Ω` and
    /// `V_D = 0.7 V`.
    ///
    /// `R_d = 1000 Ω` is unusually large for a diode; with it the off-state
    /// inductor current decays in about 3 µs and almost no energy reaches
    /// the load. Holding the PV voltage near its MPP then needs duty cycles
    /// around 0.996.
    fn default() -> Self {
        ConverterParams {
            c: 220e-6,
            l: 3e-3,
            c_pv: 1e-3,
            r: 10.0,
            r_c: 1.0,
            r_l: 1.0,
            r_on: 1.0,
            r_d: 1000.0,
            v_d: 0.7,
            t_s: 1e-5,
        }
    }
}

impl ConverterParams {
    /// Same element values with every parasitic and the diode drop zeroed.
    pub fn without_parasitics(self) -> Self {
        ConverterParams {
            r_c: 0.0,
            r_l: 0.0,
            r_on: 0.0,
            r_d: 0.0,
            v_d: 0.0,
            ..self
        }
    }

    /// `R_C∥R`
    pub fn r_c_parallel_r(&self) -> f64 {
        if self.r_c == 0.0 {
            0.0
        } else {
            self.r_c * self.r / (self.r_c + self.r)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("c", self.c),
            ("l", self.l),
            ("c_pv", self.c_pv),
            ("r", self.r),
            ("t_s", self.t_s),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::validation(name, "must be finite and > 0"));
            }
        }
        for (name, value) in [
            ("r_c", self.r_c),
            ("r_l", self.r_l),
            ("r_on", self.r_on),
            ("r_d", self.r_d),
            ("v_d", self.v_d),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::validation(name, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Converter state, also used for its time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub v_pv: f64,
    pub v_c: f64,
    pub i_l: f64,
}

impl PlantState {
    pub const fn new(v_pv: f64, v_c: f64, i_l: f64) -> Self {
        PlantState { v_pv, v_c, i_l }
    }

    pub fn is_finite(&self) -> bool {
        self.v_pv.is_finite() && self.v_c.is_finite() && self.i_l.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.v_pv * self.v_pv + self.v_c * self.v_c + self.i_l * self.i_l).sqrt()
    }
}

impl Add for PlantState {
    type Output = PlantState;
    fn add(self, o: PlantState) -> PlantState {
        PlantState::new(self.v_pv + o.v_pv, self.v_c + o.v_c, self.i_l + o.i_l)
    }
}

impl Sub for PlantState {
    type Output = PlantState;
    fn sub(self, o: PlantState) -> PlantState {
        PlantState::new(self.v_pv - o.v_pv, self.v_c - o.v_c, self.i_l - o.i_l)
    }
}

impl Mul<f64> for PlantState {
    type Output = PlantState;
    fn mul(self, s: f64) -> PlantState {
        PlantState::new(self.v_pv * s, self.v_c * s, self.i_l * s)
    }
}

/// Duty cycle in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DutyCommand(f64);

impl DutyCommand {
    pub fn new(d: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&d) {
            Ok(DutyCommand(d))
        } else {
            Err(Error::Domain {
                what: "duty cycle",
                value: d,
                expected: "0 <= d <= 1",
            })
        }
    }

    /// Clamps into `[lo, hi] ⊆ [0, 1]`; NaN maps to `lo`.
    pub fn clamped(d: f64, lo: f64, hi: f64) -> Self {
        let lo = lo.clamp(0.0, 1.0);
        let hi = hi.clamp(lo, 1.0);
        if d.is_nan() {
            DutyCommand(lo)
        } else {
            DutyCommand(d.clamp(lo, hi))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Which continuous-time plant the closed loop integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantModel {
    /// Parasitic-free averaged model used for controller design.
    Ideal,
    /// Averaged model with all parasitics.
    Averaged,
}

impl std::str::FromStr for PlantModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(PlantModel::Ideal),
            "averaged" => Ok(PlantModel::Averaged),
            other => Err(Error::validation(
                "model",
                format!("expected averaged | ideal, got `{other}`"),
            )),
        }
    }
}

/// PV current at the state's terminal voltage (one-diode model).
pub fn pv_current(x: &PlantState, pv: &PVModuleParams) -> Result<f64> {
    current_at_voltage(pv, x.v_pv, DiodeModel::OneDiode)
}

pub fn derivative_on(x: &PlantState, cp: &ConverterParams, i_pv: f64) -> PlantState {
    PlantState {
        v_pv: (i_pv - x.i_l) / cp.c_pv,
        v_c: -x.v_c / (cp.c * (cp.r + cp.r_c)),
        i_l: x.v_pv / cp.l - (cp.r_on + cp.r_l) * x.i_l / cp.l,
    }
}

pub fn derivative_off(x: &PlantState, cp: &ConverterParams, i_pv: f64) -> PlantState {
    let rrc = cp.r + cp.r_c;
    PlantState {
        v_pv: i_pv / cp.c_pv,
        v_c: -x.v_c / (cp.c * rrc) + cp.r * x.i_l / (cp.c * rrc),
        i_l: -cp.r * x.v_c / (cp.l * rrc)
            - (cp.r_l + cp.r_d + cp.r_c_parallel_r()) * x.i_l / cp.l
            - cp.v_d / cp.l,
    }
}

/// `A(x, d)·x + d·h1 + (1 - d)·h2` written out row by row, with
/// `a33 = -(d(R_on + R_L) + (1 - d)(R_L + R_d + R_C∥R))/L`.
pub fn averaged_rate(x: &PlantState, d: DutyCommand, cp: &ConverterParams, i_pv: f64) -> PlantState {
    let d = d.value();
    let rrc = cp.r + cp.r_c;
    let a33 = -(d * (cp.r_on + cp.r_l) + (1.0 - d) * (cp.r_l + cp.r_d + cp.r_c_parallel_r())) / cp.l;
    PlantState {
        v_pv: -d * x.i_l / cp.c_pv + i_pv / cp.c_pv,
        v_c: -x.v_c / (cp.c * rrc) + (1.0 - d) * cp.r * x.i_l / (cp.c * rrc),
        i_l: d * x.v_pv / cp.l - (1.0 - d) * cp.r * x.v_c / (cp.l * rrc) + a33 * x.i_l
            - (1.0 - d) * cp.v_d / cp.l,
    }
}

/// Parasitic-free averaged dynamics used for the control design.
pub fn ideal_rate(x: &PlantState, d: DutyCommand, cp: &ConverterParams, i_pv: f64) -> PlantState {
    let d = d.value();
    PlantState {
        v_pv: (i_pv - d * x.i_l) / cp.c_pv,
        v_c: -x.v_c / (cp.c * cp.r) + (1.0 - d) * x.i_l / cp.c,
        i_l: d * x.v_pv / cp.l - (1.0 - d) * x.v_c / cp.l,
    }
}

pub fn derivative_averaged(
    x: &PlantState,
    d: DutyCommand,
    cp: &ConverterParams,
    pv: &PVModuleParams,
) -> Result<PlantState> {
    Ok(averaged_rate(x, d, cp, pv_current(x, pv)?))
}

pub fn derivative_ideal(
    x: &PlantState,
    d: DutyCommand,
    cp: &ConverterParams,
    pv: &PVModuleParams,
) -> Result<PlantState> {
    Ok(ideal_rate(x, d, cp, pv_current(x, pv)?))
}

/// Rate of the selected averaged plant.
pub fn plant_rate(
    model: PlantModel,
    x: &PlantState,
    d: DutyCommand,
    cp: &ConverterParams,
    pv: &PVModuleParams,
) -> Result<PlantState> {
    match model {
        PlantModel::Ideal => derivative_ideal(x, d, cp, pv),
        PlantModel::Averaged => derivative_averaged(x, d, cp, pv),
    }
}

/// One classical fourth-order Runge-Kutta step of an autonomous system.
pub fn step_rk4<F>(mut f: F, x: &PlantState, dt: f64) -> Result<PlantState>
where
    F: FnMut(&PlantState) -> Result<PlantState>,
{
    let k1 = f(x)?;
    let k2 = f(&(*x + k1 * (0.5 * dt)))?;
    let k3 = f(&(*x + k2 * (0.5 * dt)))?;
    let k4 = f(&(*x + k3 * dt))?;
    let next = *x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFiniteStep)
    }
}

fn check_substeps(substeps: usize) -> Result<()> {
    if substeps >= 10 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "substeps per period",
            value: substeps as f64,
            expected: ">= 10",
        })
    }
}

/// Exact PWM simulation at a fixed duty: each period integrates the
/// on-model for `d·Ts` then the off-model for `(1 - d)·Ts`, `substeps`
/// RK4 steps per phase. Returns the states at period boundaries, starting
/// with `x0`.
pub fn simulate_switched(
    x0: PlantState,
    d: DutyCommand,
    cp: &ConverterParams,
    pv: &PVModuleParams,
    n_periods: usize,
    substeps: usize,
) -> Result<Vec<PlantState>> {
    check_substeps(substeps)?;
    let on_dt = d.value() * cp.t_s / substeps as f64;
    let off_dt = (1.0 - d.value()) * cp.t_s / substeps as f64;
    let on = |x: &PlantState| Ok(derivative_on(x, cp, pv_current(x, pv)?));
    let off = |x: &PlantState| Ok(derivative_off(x, cp, pv_current(x, pv)?));

    let mut out = Vec::with_capacity(n_periods + 1);
    let mut x = x0;
    out.push(x);
    for _ in 0..n_periods {
        if on_dt > 0.0 {
            for _ in 0..substeps {
                x = step_rk4(on, &x, on_dt)?;
            }
        }
        if off_dt > 0.0 {
            for _ in 0..substeps {
                x = step_rk4(off, &x, off_dt)?;
            }
        }
        out.push(x);
    }
    Ok(out)
}

/// Averaged-model counterpart of [`simulate_switched`], sampled at the
/// same period boundaries with `substeps` RK4 steps per period.
pub fn simulate_averaged(
    x0: PlantState,
    d: DutyCommand,
    cp: &ConverterParams,
    pv: &PVModuleParams,
    n_periods: usize,
    substeps: usize,
) -> Result<Vec<PlantState>> {
    check_substeps(substeps)?;
    let dt = cp.t_s / substeps as f64;
    let f = |x: &PlantState| derivative_averaged(x, d, cp, pv);
    let mut out = Vec::with_capacity(n_periods + 1);
    let mut x = x0;
    out.push(x);
    for _ in 0..n_periods {
        for _ in 0..substeps {
            x = step_rk4(f, &x, dt)?;
        }
        out.push(x);
    }
    Ok(out)
}

/// Largest state-norm relative gap between two sampled trajectories after
/// skipping the first `skip` samples.
pub fn max_relative_gap(a: &[PlantState], b: &[PlantState], skip: usize) -> f64 {
    a.iter()
        .zip(b)
        .skip(skip)
        .map(|(x, y)| (*x - *y).norm() / y.norm().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &PlantState, b: &PlantState, tol: f64) -> bool {
        (*a - *b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn zero_state_rates() {
        let cp = ConverterParams::default();
        let zero = PlantState::default();
        assert_eq!(derivative_on(&zero, &cp, 0.0), zero);
        assert_eq!(
            derivative_on(&zero, &cp, 3.31),
            PlantState::new(3.31 / cp.c_pv, 0.0, 0.0)
        );
        let no_drop = ConverterParams { v_d: 0.0, ..cp };
        assert_eq!(derivative_off(&zero, &no_drop, 0.0), PlantState::default());
        let r = derivative_off(&zero, &cp, 0.0);
        assert_eq!(r.v_pv, 0.0);
        assert_eq!(r.v_c, 0.0);
        assert!((r.i_l + 0.7 / cp.l).abs() < 1e-12);
    }

    // Hand-evaluated matrix products with the default element values.
    #[test]
    fn on_rates_match_matrix_product() {
        let cp = ConverterParams::default();
        let x = PlantState::new(10.0, 5.0, 1.0);
        let i_pv = 3.2;
        // [0 0 -1/Cpv; 0 -1/(C·11) 0; 1/L 0 -2/L]·x + [Ipv/Cpv; 0; 0]
        let expected = PlantState::new(
            -1.0 / 1e-3 + 3.2 / 1e-3,
            -5.0 / (220e-6 * 11.0),
            10.0 / 3e-3 - 2.0 / 3e-3,
        );
        assert!(close(&derivative_on(&x, &cp, i_pv), &expected, 1e-14));
    }

    #[test]
    fn off_rates_match_matrix_product() {
        let cp = ConverterParams::default();
        let x = PlantState::new(18.0, 12.0, 2.0);
        let i_pv = 3.0;
        let rc_r = 10.0 / 11.0;
        let expected = PlantState::new(
            3.0 / 1e-3,
            -12.0 / (220e-6 * 11.0) + 10.0 * 2.0 / (220e-6 * 11.0),
            -10.0 * 12.0 / (3e-3 * 11.0) - (1.0 + 1000.0 + rc_r) * 2.0 / 3e-3 - 0.7 / 3e-3,
        );
        assert!(close(&derivative_off(&x, &cp, i_pv), &expected, 1e-14));
    }

    #[test]
    fn ideal_rates_match_hand_evaluation() {
        let cp = ConverterParams::default();
        let pv = PVModuleParams::kyocera();
        let x = PlantState::new(10.0, 0.0, 0.1);
        let d = DutyCommand::new(0.4).unwrap();
        let i_pv = pv_current(&x, &pv).unwrap();
        let expected = PlantState::new(
            (i_pv - 0.4 * 0.1) / 1e-3,
            0.6 * 0.1 / 220e-6,
            0.4 * 10.0 / 3e-3,
        );
        assert!(close(&derivative_ideal(&x, d, &cp, &pv).unwrap(), &expected, 1e-14));
    }

    #[test]
    fn ideal_equilibrium_rows() {
        let cp = ConverterParams::default().without_parasitics();
        let d = DutyCommand::new(0.5).unwrap();
        let v_c = 18.0;
        let x = PlantState::new(18.0, v_c, 2.0 * v_c / cp.r);
        let r = ideal_rate(&x, d, &cp, 0.5 * x.i_l);
        assert!(r.v_pv.abs() < 1e-12 && r.v_c.abs() < 1e-9 && r.i_l.abs() < 1e-9);

        let d = DutyCommand::new(0.3).unwrap();
        let v_pv = 15.0;
        let v_c = 0.3 / 0.7 * v_pv;
        let x = PlantState::new(v_pv, v_c, v_c / (cp.r * 0.7));
        let r = ideal_rate(&x, d, &cp, 0.0);
        assert!(r.v_c.abs() < 1e-9 && r.i_l.abs() < 1e-9);
    }

    #[test]
    fn zero_duty_decouples_pv() {
        let cp = ConverterParams::default();
        let x = PlantState::new(12.0, 3.0, 0.7);
        let r = ideal_rate(&x, DutyCommand::new(0.0).unwrap(), &cp, 2.5);
        assert_eq!(r.v_pv, 2.5 / cp.c_pv);
    }

    #[test]
    fn averaged_endpoints() {
        let cp = ConverterParams::default();
        let x = PlantState::new(17.0, 4.0, 1.5);
        let on = derivative_on(&x, &cp, 3.0);
        let off = derivative_off(&x, &cp, 3.0);
        let at = |d| averaged_rate(&x, DutyCommand::new(d).unwrap(), &cp, 3.0);
        assert!(close(&at(1.0), &on, 1e-14));
        assert!(close(&at(0.0), &off, 1e-14));
        assert!(close(&at(0.5), &((on + off) * 0.5), 1e-14));
    }

    #[test]
    fn rk4_trivial_cases() {
        let x = PlantState::new(1.0, 2.0, 3.0);
        let still = step_rk4(|_| Ok(PlantState::default()), &x, 0.1).unwrap();
        assert_eq!(still, x);
        let decayed = step_rk4(|s| Ok(*s * -1.0), &x, 0.01).unwrap();
        let factor = (-0.01f64).exp();
        assert!((decayed.v_pv - factor).abs() < 1e-10);
        assert!((decayed.i_l - 3.0 * factor).abs() < 1e-10);
    }

    #[test]
    fn rk4_rejects_nan() {
        let x = PlantState::new(1.0, 1.0, 1.0);
        let r = step_rk4(|_| Ok(PlantState::new(f64::NAN, 0.0, 0.0)), &x, 0.1);
        assert!(matches!(r, Err(Error::NonFiniteStep)));
    }

    #[test]
    fn rk4_step_halving_on_design_model() {
        let cp = ConverterParams::default();
        let pv = PVModuleParams::kyocera();
        let d = DutyCommand::new(0.6).unwrap();
        let f = |x: &PlantState| derivative_ideal(x, d, &cp, &pv);
        let x0 = PlantState::new(15.0, 5.0, 1.0);
        let dt = 2e-5;
        let full = step_rk4(f, &x0, dt).unwrap();
        let half = step_rk4(f, &step_rk4(f, &x0, dt / 2.0).unwrap(), dt / 2.0).unwrap();
        // Local error estimate: the full step's error is ~16× the halved one's.
        let local = (full - half).norm();
        let reference = step_rk4(
            f,
            &step_rk4(f, &step_rk4(f, &step_rk4(f, &x0, dt / 4.0).unwrap(), dt / 4.0).unwrap(), dt / 4.0).unwrap(),
            dt / 4.0,
        )
        .unwrap();
        let half_err = (half - reference).norm();
        assert!(local <= 16.0 * 1.5 * half_err.max(1e-13), "{local} vs {half_err}");
        assert!(local < 1e-6 * x0.norm());
    }

    #[test]
    fn switched_endpoint_duties() {
        let cp = ConverterParams::default();
        let pv = PVModuleParams::kyocera();
        let x0 = PlantState::new(15.0, 1.0, 0.5);
        let n = 20;
        for (d, on) in [(1.0, true), (0.0, false)] {
            let sw = simulate_switched(x0, DutyCommand::new(d).unwrap(), &cp, &pv, n, 10).unwrap();
            let dt = cp.t_s / 10.0;
            let mut x = x0;
            for _ in 0..n * 10 {
                x = step_rk4(
                    |s| {
                        let i = pv_current(s, &pv)?;
                        Ok(if on { derivative_on(s, &cp, i) } else { derivative_off(s, &cp, i) })
                    },
                    &x,
                    dt,
                )
                .unwrap();
            }
            assert!(close(sw.last().unwrap(), &x, 1e-12), "d = {d}");
        }
    }

    #[test]
    fn switched_rejects_few_substeps() {
        let cp = ConverterParams::default();
        let pv = PVModuleParams::kyocera();
        let d = DutyCommand::new(0.5).unwrap();
        assert!(simulate_switched(PlantState::default(), d, &cp, &pv, 1, 9).is_err());
    }

    #[test]
    fn duty_command_bounds() {
        assert!(DutyCommand::new(1.2).is_err());
        assert!(DutyCommand::new(-0.1).is_err());
        assert_eq!(DutyCommand::clamped(2.0, 0.01, 0.99).value(), 0.99);
        assert_eq!(DutyCommand::clamped(f64::NAN, 0.01, 0.99).value(), 0.01);
    }

    #[test]
    fn validate_reports_field() {
        let cp = ConverterParams { l: 0.0, ..Default::default() };
        assert!(matches!(cp.validate(), Err(Error::Validation { field, .. }) if field == "l"));
    }

    proptest! {
        #[test]
        fn convex_combination_identity(
            v_pv in -5.0f64..25.0, v_c in -5.0f64..40.0, i_l in -1.0f64..10.0,
            d in 0.0f64..=1.0, i_pv in 0.0f64..3.5,
        ) {
            let cp = ConverterParams::default();
            let x = PlantState::new(v_pv, v_c, i_l);
            let avg = averaged_rate(&x, DutyCommand::new(d).unwrap(), &cp, i_pv);
            let mix = derivative_on(&x, &cp, i_pv) * d + derivative_off(&x, &cp, i_pv) * (1.0 - d);
            let scale = derivative_on(&x, &cp, i_pv).norm() + derivative_off(&x, &cp, i_pv).norm();
            prop_assert!((avg - mix).norm() <= 1e-13 * scale.max(1.0));
        }

        #[test]
        fn parasitic_free_average_is_design_model(
            v_pv in 0.0f64..22.0, v_c in 0.0f64..40.0, i_l in 0.0f64..10.0,
            d in 0.0f64..=1.0, i_pv in 0.0f64..3.5,
        ) {
            let cp = ConverterParams::default().without_parasitics();
            let x = PlantState::new(v_pv, v_c, i_l);
            let d = DutyCommand::new(d).unwrap();
            let a = averaged_rate(&x, d, &cp, i_pv);
            let b = ideal_rate(&x, d, &cp, i_pv);
            prop_assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
        }
    }
}
