//! Closed-loop orchestration.

use crate::control::{Controller, ControllerKind};
use crate::converter::{plant_rate, step_rk4, DutyCommand, PlantModel, PlantState};
use crate::exec::{self, Mode};
use crate::pv_model::{current_at_voltage, didv, mpp_sweep, DiodeModel, OperatingPoint, PVModuleParams};
use crate::{Error, Result};

use super::scenario::ScenarioConfig;
use super::trace::TraceRecord;

/// Length of the terminal window used by the summaries (s).
pub const TERMINAL_WINDOW: f64 = 0.05;

/// Runs the scenario's own controller.
pub fn run_closed_loop(cfg: &ScenarioConfig, model: PlantModel) -> Result<Vec<TraceRecord>> {
    run_with_controller(cfg, cfg.controller, model)
}

/// Runs `kind` on the scenario's plant.
///
/// The plant is integrated with RK4 at `Ts/substeps`. The duty is recomputed
/// at the start of every switching period and held over it; the outer loop
/// runs every `update_period`. The trace holds the initial sample, every
/// `output_decimation`-th step and the final step.
pub fn run_with_controller(
    cfg: &ScenarioConfig,
    kind: ControllerKind,
    model: PlantModel,
) -> Result<Vec<TraceRecord>> {
    cfg.validate()?;
    let dt = cfg.dt();
    let n_steps = ((cfg.duration / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let outer_every = ((cfg.outer.update_period / dt).round() as usize).max(1);
    let inner_every = cfg.substeps;
    let cp = cfg.converter;

    let mut controller = Controller::new(kind, cfg.gains, cfg.outer, cfg.baseline, cp.c_pv);
    let mut x = cfg.initial_state;
    let mut segment = 0;
    let mut pv = cfg.pv_at(0.0);
    let mut d = DutyCommand::clamped(cfg.gains.soft_start_duty, 0.0, 1.0);
    let mut trace = Vec::with_capacity(n_steps / cfg.output_decimation + 2);

    for step in 0..n_steps {
        let t = step as f64 * dt;
        while segment + 1 < cfg.environment.len() && cfg.environment[segment + 1].start <= t {
            segment += 1;
            pv = cfg.pv_at(t);
        }
        if step % inner_every == 0 || step % outer_every == 0 {
            let (op, slope) = measure(&pv, &x)?;
            if step % outer_every == 0 {
                controller.outer_tick(&op, slope);
            }
            d = controller.duty(&x, op.i, slope);
        }
        if step == 0 {
            trace.push(record(0.0, &x, &pv, d, &controller)?);
        }

        let next = step_rk4(|s| plant_rate(model, s, d, &cp, &pv), &x, dt);
        let t_next = (step + 1) as f64 * dt;
        x = match next {
            Ok(x) => x,
            Err(e) if is_non_finite(&e) => {
                return Err(Error::NonFinite {
                    t: t_next,
                    last: Box::new(*trace.last().expect("initial record")),
                })
            }
            Err(e) => return Err(e),
        };
        if (step + 1) % cfg.output_decimation == 0 || step + 1 == n_steps {
            trace.push(record(t_next, &x, &pv, d, &controller)?);
        }
    }
    Ok(trace)
}

fn is_non_finite(e: &Error) -> bool {
    match e {
        Error::NonFiniteStep => true,
        Error::Domain { value, .. } => !value.is_finite(),
        _ => false,
    }
}

fn measure(pv: &PVModuleParams, x: &PlantState) -> Result<(OperatingPoint, f64)> {
    let i = current_at_voltage(pv, x.v_pv, DiodeModel::OneDiode)?;
    let op = OperatingPoint::new(x.v_pv, i);
    Ok((op, didv(pv, &op)))
}

fn record(
    t: f64,
    x: &PlantState,
    pv: &PVModuleParams,
    d: DutyCommand,
    controller: &Controller,
) -> Result<TraceRecord> {
    let (op, slope) = measure(pv, x)?;
    let status = controller.status(&op, slope);
    Ok(TraceRecord {
        t,
        v_pv: x.v_pv,
        v_c: x.v_c,
        i_l: x.i_l,
        i_pv: op.i,
        p_pv: op.p,
        d: d.value(),
        region: status.region,
        beta: status.beta,
        y: status.y,
    })
}

/// Terminal statistics of one run, judged against the brute-force MPP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub controller: ControllerKind,
    /// Oracle MPP power of the last environment segment (W).
    pub oracle_power: f64,
    /// First time the power reaches 95 % of the oracle power of the segment
    /// in force at that time.
    pub time_to_95: Option<f64>,
    pub terminal_mean_power: f64,
    pub terminal_mean_v: f64,
    /// Peak-to-peak `v_pv` over the terminal window (V).
    pub terminal_ripple: f64,
}

/// Summarizes a trace produced from `cfg`.
pub fn summarize(cfg: &ScenarioConfig, controller: ControllerKind, trace: &[TraceRecord]) -> Result<RunSummary> {
    let oracles: Vec<f64> = cfg
        .environment
        .iter()
        .map(|s| {
            let pv = cfg.pv_at(s.start);
            mpp_sweep(&pv, DiodeModel::OneDiode, 2000).map(|op| op.p)
        })
        .collect::<Result<_>>()?;
    let oracle_at = |t: f64| {
        let idx = cfg.environment.partition_point(|s| s.start <= t);
        oracles[idx.saturating_sub(1)]
    };
    let time_to_95 = trace.iter().find(|r| r.p_pv >= 0.95 * oracle_at(r.t)).map(|r| r.t);

    let t_end = trace.last().map_or(0.0, |r| r.t);
    let window: Vec<&TraceRecord> = trace.iter().filter(|r| r.t >= t_end - TERMINAL_WINDOW).collect();
    let n = window.len().max(1) as f64;
    let mean_p = window.iter().map(|r| r.p_pv).sum::<f64>() / n;
    let mean_v = window.iter().map(|r| r.v_pv).sum::<f64>() / n;
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.v_pv), hi.max(r.v_pv)));
    Ok(RunSummary {
        controller,
        oracle_power: *oracles.last().expect("at least one segment"),
        time_to_95,
        terminal_mean_power: mean_p,
        terminal_mean_v: mean_v,
        terminal_ripple: if window.is_empty() { 0.0 } else { hi - lo },
    })
}

/// Runs every controller on the same scenario and summarizes each.
pub fn run_comparison(
    cfg: &ScenarioConfig,
    controllers: &[ControllerKind],
    model: PlantModel,
    mode: Mode,
) -> Result<Vec<RunSummary>> {
    if controllers.is_empty() {
        return Err(Error::Usage("at least one controller is required".into()));
    }
    exec::map_slice(controllers, mode, |&kind| {
        let trace = run_with_controller(cfg, kind, model)?;
        summarize(cfg, kind, &trace)
    })
    .into_iter()
    .collect()
}
