//! Analysis report. The JSON form and the text summary are both rendered
//! from [`AnalysisReport`].

use std::fmt::Write as _;

use pwmcert::lmi::{LmiCertificate, Theorem2Audit};
use serde::{Deserialize, Serialize};

use crate::config::Options;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisReport {
    pub existence: ExistenceSection,
    pub modes: Vec<ModeRow>,
    pub l1: Option<L1Section>,
    pub theorem1: Theorem1Section,
    pub theorem2: Theorem2Section,
    pub simulation: Option<SimulationSection>,
    pub warnings: Vec<String>,
    pub options_effective: Options,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RejectedRow {
    pub tau_s: f64,
    pub violation_time_s: f64,
    pub margin_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExistenceSection {
    pub sigma1_v: f64,
    /// Shifted `psi`, volts.
    pub psi_v: f64,
    /// `sigma1 + sigma_star + C A^{-1} B`, volts.
    pub upper_bound_v: f64,
    pub window_holds: bool,
    pub modes_found: usize,
    pub rejected_roots: Vec<RejectedRow>,
    /// Window inequality plus a feasible existence LMI.
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeRow {
    pub tau0_s: f64,
    pub duty: f64,
    pub mean_output_v: Option<f64>,
    pub residual_v: f64,
    /// Smallest `sigma - ramp` before the crossing, volts.
    pub validity_margin_v: f64,
    pub crossing_slope_v_per_s: f64,
    pub slope_bound_v_per_s: f64,
    pub grazing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DutyRow {
    pub duty: f64,
    pub t_l1_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L1Section {
    pub l1_v_per_s: f64,
    pub t_l1_v: f64,
    pub source: String,
    pub table: Vec<DutyRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Section {
    pub feasible: bool,
    pub eps_per_s: Option<f64>,
    pub eps_max_per_s: f64,
    pub grid_points: usize,
    pub certificate: Option<LmiCertificate<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem2Section {
    /// A verified stability certificate exists.
    pub feasible: bool,
    /// Why the test was not run, when it was not.
    pub skipped: Option<String>,
    pub certificate: Option<LmiCertificate<f64>>,
    pub audit: Option<Theorem2Audit<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub periods: usize,
    pub x0: Vec<f64>,
    pub final_deviation: f64,
    pub final_tau_error_s: f64,
    pub converged: bool,
    pub settled_period: Option<usize>,
    pub u_bound_holds: bool,
    pub l2_bound_holds: bool,
    pub max_u_ratio: f64,
    pub max_l2_ratio: f64,
    pub sector_applicable: bool,
    pub sector_checked_periods: usize,
    pub sector_failures: usize,
    pub tangential_touches: usize,
}

impl AnalysisReport {
    pub fn certified(&self) -> bool {
        self.theorem2.feasible
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data") + "\n"
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let e = &self.existence;
        let _ = writeln!(
            s,
            "window: {:.4} V < psi = {:.4} V < {:.4} V: {}",
            e.sigma1_v,
            e.psi_v,
            e.upper_bound_v,
            yes_no(e.window_holds)
        );
        let _ = writeln!(s, "periodic modes: {}", e.modes_found);
        for (k, m) in self.modes.iter().enumerate() {
            let mean = m.mean_output_v.map_or("n/a".to_string(), |v| format!("{v:.4} V"));
            let _ = writeln!(
                s,
                "  [{k}] tau0 = {:.4e} s, duty = {:.4}, mean output = {mean}, margin = {:.3e} V",
                m.tau0_s, m.duty, m.validity_margin_v
            );
        }
        if e.modes_found == 0 {
            let _ = writeln!(s, "  no unsaturated mode found");
        }
        if let Some(l1) = &self.l1 {
            let _ = writeln!(s, "slope bound: T*L1 = {:.4} V ({})", l1.t_l1_v, l1.source);
        }
        let t1 = &self.theorem1;
        let _ = writeln!(
            s,
            "existence LMI: {}{}",
            if t1.feasible { "feasible" } else { "infeasible" },
            t1.eps_per_s.map_or(String::new(), |x| format!(" at eps = {x:.4e} 1/s"))
        );
        let _ = writeln!(s, "existence certified: {}", yes_no(e.certified));
        let t2 = &self.theorem2;
        match &t2.skipped {
            Some(why) => {
                let _ = writeln!(s, "stability LMI: not run ({why})");
            }
            None => {
                let _ = writeln!(s, "stability LMI: {}", if t2.feasible { "feasible" } else { "infeasible" });
            }
        }
        if let Some(sim) = &self.simulation {
            let _ = writeln!(
                s,
                "simulation: {} periods, final deviation {:.3e}, converged {}, u bounds {}, sector failures {}",
                sim.periods,
                sim.final_deviation,
                yes_no(sim.converged),
                yes_no(sim.u_bound_holds && sim.l2_bound_holds),
                sim.sector_failures
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        let _ = writeln!(
            s,
            "verdict: {}",
            if self.certified() {
                "globally stable periodic mode certified"
            } else {
                "not certified"
            }
        );
        s
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}
