//! Command implementations behind the `pwmcert` binary.
//!
//! Exit codes: 0 certified (or command completed), 2 not certified,
//! 1 usage or input error.

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use pwmcert::lmi::{min_sigma_star, theorem1_sweep, theorem2, Target, ThresholdOptions};
use pwmcert::model::{assemble, LtiSystem, RampParams};
use pwmcert::periodic::{find_modes, select_l1, PeriodicMode};
use pwmcert::simulator::{diagnostics, simulate, SimConfig, SimTrace};
use serde::{Deserialize, Serialize};

use config::ConverterConfig;
use report::*;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NOT_CERTIFIED: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] pwmcert::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(pwmcert::Error::NoBracket { .. }) => EXIT_NOT_CERTIFIED,
            _ => EXIT_INPUT,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pwmcert", version, about = "Periodic modes and stability certificates for PWM buck converters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Existence,
    Stability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParamArg {
    SigmaStar,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Write the machine-readable output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Solver seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full pipeline: modes, slope bound, both LMIs, optional simulation.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        periods: Option<usize>,
        #[arg(long)]
        x0: Option<String>,
    },
    /// Threshold search over a ramp parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "sigma-star")]
        param: ParamArg,
        #[arg(long)]
        min: f64,
        #[arg(long)]
        max: f64,
        #[arg(long, value_enum)]
        target: TargetArg,
    },
    /// Closed-loop trace as CSV plus a diagnostics summary.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        periods: Option<usize>,
        #[arg(long)]
        x0: Option<String>,
    },
    /// List periodic modes.
    Modes {
        #[command(flatten)]
        common: Common,
    },
}

/// Result of a command: text for stdout, optional file payload and exit code.
#[derive(Debug)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

fn load(common: &Common) -> Result<ConverterConfig, CliError> {
    let mut cfg = ConverterConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.options.lmi.solver.seed = seed;
    }
    Ok(cfg)
}

fn system(cfg: &ConverterConfig) -> Result<LtiSystem<f64>, CliError> {
    Ok(assemble(&cfg.power_stage, &cfg.control_config()?)?)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<String, CliError> {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            Ok(String::new())
        }
        None => Ok(text.to_string()),
    }
}

/// Resolves `"mode"`, `"mode*<factor>"` or a comma list to a state in the
/// original coordinates.
pub fn parse_x0(spec: &str, mode: Option<&PeriodicMode<f64>>, dim: usize) -> Result<Vec<f64>, CliError> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("mode") {
        let factor = match rest.trim() {
            "" => 1.0,
            r => r
                .strip_prefix('*')
                .and_then(|f| f.trim().parse::<f64>().ok())
                .filter(|f| f.is_finite())
                .ok_or_else(|| CliError::Usage(format!("bad x0 spec `{spec}`")))?,
        };
        let mode = mode.ok_or_else(|| CliError::Usage("x0 refers to the periodic mode, but none was found".into()))?;
        return Ok(mode.x0(0.0).into_vec().into_iter().map(|v| v * factor).collect());
    }
    let x: Vec<f64> = spec
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad x0 spec `{spec}`")))?;
    if x.len() != dim {
        return Err(CliError::Usage(format!(
            "x0 has {} entries, the system has {dim} states",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Usage("x0 entries must be finite".into()));
    }
    Ok(x)
}

fn mode_row(m: &PeriodicMode<f64>) -> Result<ModeRow, CliError> {
    Ok(ModeRow {
        tau0_s: m.tau0(),
        duty: m.duty(),
        mean_output_v: m.mean_output()?,
        residual_v: m.residual(),
        validity_margin_v: m.margin,
        crossing_slope_v_per_s: m.crossing_slope,
        slope_bound_v_per_s: m.l1_analytic,
        grazing: m.grazing,
    })
}

fn run_simulation(
    sys: &LtiSystem<f64>,
    ramp: &RampParams<f64>,
    mode: &PeriodicMode<f64>,
    cfg: &ConverterConfig,
    t_l1: f64,
) -> Result<(SimTrace<f64>, SimulationSection), CliError> {
    let sim = &cfg.options.simulation;
    let x0 = parse_x0(&sim.x0, Some(mode), sys.dim())?;
    let mut sc = SimConfig::new(x0.clone(), sim.periods);
    sc.samples_per_period = sim.samples_per_period;
    let trace = simulate(sys, ramp, &sc)?;
    let d = diagnostics(&trace, mode, t_l1)?;
    let tau_err = (trace.tau.last().copied().unwrap_or(0.0) - mode.tau0()).abs();
    let tol = sim.convergence_tol;
    let section = SimulationSection {
        periods: sim.periods,
        x0,
        final_deviation: d.final_deviation(),
        final_tau_error_s: tau_err,
        converged: d.final_deviation() < tol && tau_err < tol * ramp.period,
        settled_period: d.settled(tol),
        u_bound_holds: d.u_bound_holds,
        l2_bound_holds: d.l2_bound_holds,
        max_u_ratio: d.max_u_ratio,
        max_l2_ratio: d.max_l2_ratio,
        sector_applicable: d.sector.applicable,
        sector_checked_periods: d.sector.checked_periods,
        sector_failures: d.sector.failures.len(),
        tangential_touches: d.tangential_touches,
    };
    Ok((trace, section))
}

pub fn analyze(cfg: &ConverterConfig) -> Result<AnalysisReport, CliError> {
    let sys = system(cfg)?;
    let ramp = cfg.ramp;
    let opts = &cfg.options;
    let mut warnings = Vec::new();

    let found = find_modes(&sys, &ramp, &opts.modes)?;
    warnings.extend(found.warnings.iter().cloned());
    let modes = found.modes.iter().map(mode_row).collect::<Result<Vec<_>, _>>()?;
    if found.modes.len() > 1 {
        warnings.push(format!(
            "{} periodic modes found; the stability test uses the first (smallest duty)",
            found.modes.len()
        ));
    }

    let sweep = theorem1_sweep(&sys, &ramp, &opts.lmi)?;
    let theorem1 = Theorem1Section {
        feasible: sweep.feasible,
        eps_per_s: sweep.eps,
        eps_max_per_s: sweep.eps_max,
        grid_points: sweep.grid_points,
        certificate: sweep.certificate.clone(),
    };

    let mut l1_section = None;
    let mut t_l1 = None;
    let mut theorem2_section = Theorem2Section {
        feasible: false,
        skipped: None,
        certificate: None,
        audit: None,
    };
    match found.modes.first() {
        None => theorem2_section.skipped = Some("no unsaturated mode found".into()),
        Some(mode) => match select_l1(mode, &opts.l1, None, &opts.modes) {
            Err(e) => {
                warnings.push(format!("slope bound rejected: {e}"));
                theorem2_section.skipped = Some("slope bound below the slope along the mode".into());
            }
            Ok(choice) => {
                warnings.extend(choice.warnings.iter().cloned());
                let tl1 = ramp.period * choice.l1;
                t_l1 = Some(tl1);
                l1_section = Some(L1Section {
                    l1_v_per_s: choice.l1,
                    t_l1_v: tl1,
                    source: format!("{:?}", choice.source),
                    table: choice
                        .table
                        .as_ref()
                        .map(|t| t.rows.iter().map(|&(duty, t_l1_v)| DutyRow { duty, t_l1_v }).collect())
                        .unwrap_or_default(),
                });
                match theorem2(&sys, &ramp, choice.l1, &opts.lmi) {
                    Ok(res) => {
                        theorem2_section.feasible = res.certificate.feasible;
                        theorem2_section.certificate = Some(res.certificate);
                        theorem2_section.audit = Some(res.audit);
                    }
                    Err(pwmcert::Error::SectorViolated { slack }) => {
                        warnings.push(format!("sigma_star - T*L1 = {slack} V is not positive"));
                        theorem2_section.skipped = Some("sector condition violated".into());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        },
    }

    let simulation = match (found.modes.first(), opts.simulation.enabled) {
        (Some(mode), true) => Some(run_simulation(&sys, &ramp, mode, cfg, t_l1.unwrap_or(f64::INFINITY))?.1),
        _ => None,
    };

    Ok(AnalysisReport {
        existence: ExistenceSection {
            sigma1_v: ramp.sigma1,
            psi_v: found.psi,
            upper_bound_v: found.upper_bound,
            window_holds: found.ineq25_holds,
            modes_found: found.modes.len(),
            rejected_roots: found
                .rejected_roots
                .iter()
                .map(|r| RejectedRow {
                    tau_s: r.tau,
                    violation_time_s: r.violation_time,
                    margin_v: r.margin,
                })
                .collect(),
            certified: sweep.existence_certified(),
        },
        modes,
        l1: l1_section,
        theorem1,
        theorem2: theorem2_section,
        simulation,
        warnings,
        options_effective: cfg.options.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRow {
    pub value: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepReport {
    pub param: String,
    pub target: Target,
    pub threshold_v: f64,
    pub last_failure_v: Option<f64>,
    pub monotone: bool,
    pub table: Vec<SweepRow>,
    pub options_effective: config::Options,
}

pub fn sweep(cfg: &ConverterConfig, min: f64, max: f64, target: TargetArg) -> Result<SweepReport, CliError> {
    if !(min.is_finite() && max.is_finite() && min > 0.0 && min <= max) {
        return Err(CliError::Usage(format!("empty or invalid range [{min}, {max}]")));
    }
    let sys = system(cfg)?;
    let target = match target {
        TargetArg::Existence => Target::Existence,
        TargetArg::Stability => Target::Stability,
    };
    let opts = ThresholdOptions {
        resolution: cfg.options.sweep.resolution_v,
        scan_points: cfg.options.sweep.scan_points,
        l1: cfg.options.l1.clone(),
        modes: cfg.options.modes,
        lmi: cfg.options.lmi,
    };
    let r = min_sigma_star(&sys, &cfg.ramp, target, min, max, &opts)?;
    Ok(SweepReport {
        param: "sigma_star".into(),
        target,
        threshold_v: r.threshold,
        last_failure_v: r.last_failure,
        monotone: r.monotone,
        table: r
            .table
            .iter()
            .map(|&(value, certified)| SweepRow { value, certified })
            .collect(),
        options_effective: cfg.options.clone(),
    })
}

pub fn modes(cfg: &ConverterConfig) -> Result<Vec<ModeRow>, CliError> {
    let sys = system(cfg)?;
    let found = find_modes(&sys, &cfg.ramp, &cfg.options.modes)?;
    found.modes.iter().map(mode_row).collect()
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data") + "\n"
}

pub fn execute(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Analyze { common, periods, x0 } => {
            let mut cfg = load(&common)?;
            if let Some(p) = periods {
                cfg.options.simulation.periods = p;
            }
            if let Some(x) = x0 {
                cfg.options.simulation.x0 = x;
            }
            let report = analyze(&cfg)?;
            let stdout = write_out(common.out.as_deref(), &report.to_json())?;
            Ok(Outcome {
                code: if report.certified() { EXIT_OK } else { EXIT_NOT_CERTIFIED },
                stdout,
                stderr: report.render_text(),
            })
        }
        Command::Sweep {
            common,
            param: ParamArg::SigmaStar,
            min,
            max,
            target,
        } => {
            let cfg = load(&common)?;
            let rep = sweep(&cfg, min, max, target)?;
            let mut text = String::new();
            for row in &rep.table {
                text.push_str(&format!(
                    "sigma_star = {:.4} V: {}\n",
                    row.value,
                    if row.certified { "certified" } else { "not certified" }
                ));
            }
            text.push_str(&format!("threshold: {:.4} V\n", rep.threshold_v));
            Ok(Outcome {
                code: EXIT_OK,
                stdout: write_out(common.out.as_deref(), &json(&rep))?,
                stderr: text,
            })
        }
        Command::Simulate { common, periods, x0 } => {
            let mut cfg = load(&common)?;
            if let Some(p) = periods {
                cfg.options.simulation.periods = p;
            }
            if let Some(x) = x0 {
                cfg.options.simulation.x0 = x;
            }
            let sys = system(&cfg)?;
            let found = find_modes(&sys, &cfg.ramp, &cfg.options.modes)?;
            let mode = found
                .modes
                .first()
                .ok_or_else(|| CliError::Usage("no unsaturated periodic mode; nothing to compare against".into()))?;
            let t_l1 = select_l1(mode, &cfg.options.l1, None, &cfg.options.modes)
                .map(|c| c.l1 * cfg.ramp.period)
                .unwrap_or(f64::INFINITY);
            let (trace, section) = run_simulation(&sys, &cfg.ramp, mode, &cfg, t_l1)?;
            let mut csv = Vec::new();
            trace.write_csv(&mut csv).expect("writing to memory");
            let csv = String::from_utf8(csv).expect("ascii");
            let stdout = match &common.out {
                Some(p) => {
                    write_out(Some(p), &csv)?;
                    json(&section)
                }
                None => csv,
            };
            Ok(Outcome {
                code: EXIT_OK,
                stdout,
                stderr: json(&section),
            })
        }
        Command::Modes { common } => {
            let cfg = load(&common)?;
            let rows = modes(&cfg)?;
            let mut text = format!("{} mode(s)\n", rows.len());
            for r in &rows {
                text.push_str(&format!(
                    "tau0 = {:.6e} s  duty = {:.5}  residual = {:.2e} V  margin = {:.4e} V\n",
                    r.tau0_s, r.duty, r.residual_v, r.validity_margin_v
                ));
            }
            Ok(Outcome {
                code: EXIT_OK,
                stdout: write_out(common.out.as_deref(), &json(&rows))?,
                stderr: text,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buck(sigma_star: f64) -> ConverterConfig {
        ConverterConfig::from_json(&format!(
            r#"{{
                "power_stage": {{"R": 22.0, "C0": 4.7e-5, "L": 0.02, "Vs": 20.0}},
                "control": {{"variant": "Proportional", "a": 1.0, "Vref": 13.5}},
                "ramp": {{"sigma1": 4.0, "sigma_star": {sigma_star}, "T": 4e-4}}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn x0_specs() {
        assert_eq!(parse_x0("0.5, 2", None, 2).unwrap(), vec![0.5, 2.0]);
        assert!(parse_x0("0.5", None, 2).is_err());
        assert!(parse_x0("mode", None, 2).is_err());
        assert!(parse_x0("a,b", None, 2).is_err());
        let cfg = buck(18.0);
        let sys = system(&cfg).unwrap();
        let found = find_modes(&sys, &cfg.ramp, &cfg.options.modes).unwrap();
        let m = found.modes.first();
        let base = parse_x0("mode", m, 2).unwrap();
        let scaled = parse_x0("mode*1.5", m, 2).unwrap();
        assert!((scaled[1] - 1.5 * base[1]).abs() < 1e-12);
        assert!(parse_x0("mode*x", m, 2).is_err());
    }

    #[test]
    fn report_round_trip() {
        let report = analyze(&buck(18.0)).unwrap();
        assert!(report.certified());
        assert!(report.simulation.as_ref().unwrap().converged);
        let text = report.to_json();
        let back: AnalysisReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.to_json(), text);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["existence", "modes", "l1", "theorem1", "theorem2", "simulation", "warnings", "options_effective"] {
            assert!(keys.contains(&k), "{k}");
        }
    }

    #[test]
    fn below_threshold_not_certified() {
        let report = analyze(&buck(12.0)).unwrap();
        assert!(!report.certified());
        assert!(!report.existence.certified);
        let back: AnalysisReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn sweep_rejects_empty_range() {
        let err = sweep(&buck(18.0), 20.0, 10.0, TargetArg::Existence).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_INPUT);
    }
}
