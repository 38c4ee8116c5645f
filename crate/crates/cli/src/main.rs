use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mppt_core::control::ControllerKind;
use mppt_core::converter::PlantModel;
use mppt_core::exec::Mode;
use mppt_core::harness::{load_scenario, run_closed_loop, run_comparison, summarize, write_trace_to};
use mppt_core::lambertw::{series_table, write_series_csv};
use mppt_core::pv_model::{sweep_curve, DiodeModel};
use mppt_core::Error;

#[derive(Parser)]
#[command(name = "mppt", version, about = "Equivalent-resistance MPPT simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-loop run; writes the trace as CSV.
    Run {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelArg::Averaged)]
        model: ModelArg,
        /// Trace file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// I-V/P-V sweep of the scenario's module as CSV `v,i,p,didv,req,geq`.
    Sweep {
        scenario: PathBuf,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs several controllers on one scenario and prints a summary table.
    Compare {
        scenario: PathBuf,
        /// Comma-separated list of flc, po, ic.
        #[arg(long, value_delimiter = ',', default_value = "flc,po,ic")]
        controllers: Vec<String>,
        #[arg(long, value_enum, default_value_t = ModelArg::Averaged)]
        model: ModelArg,
    },
    /// Asymptotic-series error table as CSV `nu,n,partial_sum,root,abs_error`.
    Wbench {
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.1,0.01")]
        nu_list: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Averaged,
    Ideal,
}

impl From<ModelArg> for PlantModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Averaged => PlantModel::Averaged,
            ModelArg::Ideal => PlantModel::Ideal,
        }
    }
}

fn open_output(out: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_context(out: Option<&Path>) -> impl Fn(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: out.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf),
        source,
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { scenario, model, out } => {
            let cfg = load_scenario(&scenario)?;
            let trace = run_closed_loop(&cfg, model.into())?;
            let out = out.as_deref();
            write_trace_to(&trace, open_output(out)?).map_err(io_context(out))?;
            let s = summarize(&cfg, cfg.controller, &trace)?;
            eprintln!(
                "{}: terminal mean v_pv {:.4} V, power {:.4} W (oracle {:.4} W), ripple {:.4} V",
                cfg.controller, s.terminal_mean_v, s.terminal_mean_power, s.oracle_power, s.terminal_ripple
            );
        }
        Command::Sweep { scenario, points, out } => {
            let cfg = load_scenario(&scenario)?;
            let curve = sweep_curve(&cfg.pv_at(0.0), DiodeModel::OneDiode, points, Mode::default())?;
            let path = out.as_deref();
            let mut w = open_output(path)?;
            let write = |w: &mut dyn Write| -> io::Result<()> {
                writeln!(w, "v,i,p,didv,req,geq")?;
                for c in &curve {
                    writeln!(w, "{},{},{},{},{},{}", c.v, c.i, c.p, c.didv, c.req, c.geq)?;
                }
                w.flush()
            };
            write(&mut *w).map_err(io_context(path))?;
        }
        Command::Compare {
            scenario,
            controllers,
            model,
        } => {
            let kinds = controllers
                .iter()
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<ControllerKind>())
                .collect::<Result<Vec<_>, _>>()?;
            let cfg = load_scenario(&scenario)?;
            let summaries = run_comparison(&cfg, &kinds, model.into(), Mode::default())?;
            let mut w = open_output(None)?;
            let write = |w: &mut dyn Write| -> io::Result<()> {
                writeln!(
                    w,
                    "controller,oracle_power,time_to_95,terminal_mean_power,terminal_mean_v,terminal_ripple"
                )?;
                for s in &summaries {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        s.controller,
                        s.oracle_power,
                        fmt_opt(s.time_to_95),
                        s.terminal_mean_power,
                        s.terminal_mean_v,
                        s.terminal_ripple
                    )?;
                }
                w.flush()
            };
            write(&mut *w).map_err(io_context(None))?;
        }
        Command::Wbench { nu_list, out } => {
            let rows = series_table(&nu_list, Mode::default())?;
            let path = out.as_deref();
            write_series_csv(&rows, open_output(path)?).map_err(io_context(path))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
