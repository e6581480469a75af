//! Per-follower feasibility summary of a scenario.
//!
//! Time-invariant scenarios are checked at `t = 0`; otherwise the plan is
//! re-evaluated once per second over the run and the worst sample is kept.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feasibility::{
    check_saturation, constraint_residual, identity_attitude_feasible, FormationKind, OffsetBound, SaturationReport,
    SYNTH_RESIDUAL_TOL, USER_RESIDUAL_TOL,
};
use crate::sim::plan::{plan_nodes, NodePlan};
use crate::sim::scenario::Scenario;
use crate::topology::NodeId;

/// Outcome of the feasibility checks for one follower.
#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Feasible,
    /// The placement needs zero forward speed at some sample.
    HoverRequired {
        t: f64,
    },
    /// The nonholonomic constraint cannot be met.
    Infeasible {
        t: f64,
        reason: String,
    },
    /// The plan is feasible but violates the configured speed limits.
    Saturated,
}

impl Status {
    pub fn is_feasible(&self) -> bool {
        *self == Status::Feasible
    }

    pub fn label(&self) -> &'static str {
        match self {
            Status::Feasible => "feasible",
            Status::HoverRequired { .. } => "hover-required",
            Status::Infeasible { .. } => "infeasible",
            Status::Saturated => "saturated",
        }
    }

    fn detail(&self) -> String {
        match self {
            Status::HoverRequired { t } => format!("zero forward speed at t = {t} s"),
            Status::Infeasible { t, reason } => format!("t = {t} s: {reason}"),
            _ => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub uav_id: NodeId,
    pub parents: Vec<NodeId>,
    pub kind: FormationKind,
    /// Relative pitch and yaw at `t = 0`, when a plan exists.
    pub pitch: Option<f64>,
    pub yaw: Option<f64>,
    pub roll: f64,
    /// Worst constraint residual over the samples.
    pub residual: Option<f64>,
    /// Identity relative attitude satisfies the constraint at every sample.
    pub identity_admissible: bool,
    /// Saturation check at the sample with the least margin.
    pub saturation: Option<SaturationReport>,
    /// Distance from the leader in the nominal formation.
    pub offset_norm: Option<f64>,
    pub offset_bound: Option<OffsetBound>,
    pub status: Status,
}

impl ReportRow {
    pub fn within_bound(&self) -> Option<bool> {
        Some(self.offset_bound?.admits(self.offset_norm?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub scenario: String,
    pub kind: FormationKind,
    pub samples: Vec<f64>,
    pub rows: Vec<ReportRow>,
}

impl FeasibilityReport {
    pub fn all_feasible(&self) -> bool {
        self.rows.iter().all(|r| r.status.is_feasible())
    }
}

fn sample_times(scenario: &Scenario) -> Vec<f64> {
    if scenario.kind() == FormationKind::Rti {
        return vec![0.0];
    }
    let end = scenario.duration.min(scenario.profile.horizon());
    let mut times: Vec<f64> = (0..).map(f64::from).take_while(|&t| t < end).collect();
    times.push(end);
    times
}

fn margin(s: &SaturationReport) -> f64 {
    (s.angular_cap - s.angular_speed)
        .min(s.forward_speed - s.linear_lower)
        .min(s.linear_upper - s.forward_speed)
}

/// Builds the report; planning failures become row content.
pub fn feasibility_report(scenario: &Scenario) -> Result<FeasibilityReport> {
    let kind = scenario.kind();
    let samples = sample_times(scenario);
    let topo = &scenario.topology;
    let bound = scenario.limits.map(|l| l.max_offset(scenario.profile.turns()));
    let mut rows: Vec<ReportRow> = scenario
        .followers
        .iter()
        .map(|f| ReportRow {
            uav_id: f.id,
            parents: topo.parents(f.id).to_vec(),
            kind,
            pitch: None,
            yaw: None,
            roll: f.roll,
            residual: None,
            identity_admissible: true,
            saturation: None,
            offset_norm: None,
            offset_bound: bound,
            status: Status::Feasible,
        })
        .collect();

    for (k, &t) in samples.iter().enumerate() {
        let leader_twist = scenario.profile.twist_at(t)?;
        let plans = plan_nodes(scenario, &leader_twist);
        for row in rows.iter_mut() {
            let cfg = scenario.follower(row.uav_id);
            let plan: &NodePlan = match &plans[row.uav_id] {
                Ok(p) => p,
                Err(e) => {
                    if row.status.is_feasible() || row.status == Status::Saturated {
                        row.status = match e {
                            Error::HoverRequired => Status::HoverRequired { t },
                            other => Status::Infeasible {
                                t,
                                reason: other.to_string(),
                            },
                        };
                    }
                    continue;
                }
            };
            if k == 0 {
                row.pitch = Some(plan.spec.angles.pitch);
                row.yaw = Some(plan.spec.angles.yaw);
                row.offset_norm = Some(plan.offset.position.norm());
            }
            let residual = constraint_residual(&plan.spec, &plan.parent_twist);
            row.residual = Some(row.residual.map_or(residual, |r| r.max(residual)));
            row.identity_admissible &= identity_attitude_feasible(&plan.parent_twist, &cfg.offset);
            if let Some(limits) = scenario.limits {
                let sat = check_saturation(&plan.spec, &plan.parent_twist, &limits.follower);
                if row.saturation.as_ref().is_none_or(|old| margin(&sat) < margin(old)) {
                    row.saturation = Some(sat);
                }
            }
        }
    }

    for (row, f) in rows.iter_mut().zip(&scenario.followers) {
        if !row.status.is_feasible() {
            continue;
        }
        let tol = if f.attitude.is_some() {
            USER_RESIDUAL_TOL
        } else {
            SYNTH_RESIDUAL_TOL
        };
        if row.residual.is_some_and(|r| r > tol) {
            row.status = Status::Infeasible {
                t: 0.0,
                reason: "constraint residual above tolerance".into(),
            };
        } else if row.saturation.as_ref().is_some_and(|s| !s.passed()) || row.within_bound() == Some(false) {
            row.status = Status::Saturated;
        }
    }

    Ok(FeasibilityReport {
        scenario: scenario.name.clone(),
        kind,
        samples,
        rows,
    })
}

/// Flat record used for the machine-readable report.
#[derive(Debug, Serialize)]
struct CsvRow {
    uav_id: NodeId,
    parents: String,
    kind: &'static str,
    pitch: Option<f64>,
    yaw: Option<f64>,
    roll: f64,
    residual: Option<f64>,
    identity_admissible: bool,
    angular_speed: Option<f64>,
    angular_cap: Option<f64>,
    angular_ok: Option<bool>,
    forward_speed: Option<f64>,
    linear_lower: Option<f64>,
    linear_upper: Option<f64>,
    linear_ok: Option<bool>,
    offset_norm: Option<f64>,
    offset_bound: Option<f64>,
    status: &'static str,
    detail: String,
}

fn join_ids(ids: &[NodeId]) -> String {
    ids.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ")
}

impl FeasibilityReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            let s = r.saturation.as_ref();
            w.serialize(CsvRow {
                uav_id: r.uav_id,
                parents: join_ids(&r.parents),
                kind: r.kind.label(),
                pitch: r.pitch,
                yaw: r.yaw,
                roll: r.roll,
                residual: r.residual,
                identity_admissible: r.identity_admissible,
                angular_speed: s.map(|s| s.angular_speed),
                angular_cap: s.map(|s| s.angular_cap),
                angular_ok: s.map(|s| s.angular_ok),
                forward_speed: s.map(|s| s.forward_speed),
                linear_lower: s.map(|s| s.linear_lower),
                linear_upper: s.map(|s| s.linear_upper),
                linear_ok: s.map(|s| s.linear_ok),
                offset_norm: r.offset_norm,
                offset_bound: r.offset_bound.and_then(|b| b.value()),
                status: r.status.label(),
                detail: r.status.detail(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let opt = |x: Option<f64>, prec: usize| x.map_or("-".to_string(), |v| format!("{:.prec$}", v + 0.0));
        let yes_no = |b: bool| if b { "yes" } else { "no" };
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {}: {} formation, {} follower(s), {} sample(s)",
            self.scenario,
            self.kind.label(),
            self.rows.len(),
            self.samples.len()
        );
        let _ = writeln!(
            s,
            "{:>4} {:>8} {:>9} {:>9} {:>9} {:>9} {:>8} {:>10} {:>10} {:>9} {:>9}  status",
            "uav", "parents", "pitch", "yaw", "roll", "residual", "identity", "|w_F|", "v_F", "|p|", "c2"
        );
        for r in &self.rows {
            let sat = r.saturation.as_ref();
            let flag = |ok: bool| if ok { "" } else { "!" };
            let w = sat.map_or("-".to_string(), |x| {
                format!("{:.4}{}", x.angular_speed, flag(x.angular_ok))
            });
            let v = sat.map_or("-".to_string(), |x| {
                format!("{:.4}{}", x.forward_speed, flag(x.linear_ok))
            });
            let c2 = match r.offset_bound {
                None => "-".to_string(),
                Some(OffsetBound::Unbounded) => "inf".to_string(),
                Some(OffsetBound::Bounded(c)) => format!("{c:.3}"),
            };
            let _ = writeln!(
                s,
                "{:>4} {:>8} {:>9} {:>9} {:>9.4} {:>9} {:>8} {:>10} {:>10} {:>9} {:>9}  {}{}",
                r.uav_id,
                join_ids(&r.parents),
                opt(r.pitch, 4),
                opt(r.yaw, 4),
                r.roll,
                r.residual.map_or("-".to_string(), |x| format!("{x:.1e}")),
                yes_no(r.identity_admissible),
                w,
                v,
                opt(r.offset_norm, 3),
                c2,
                r.status.label(),
                match r.status.detail() {
                    d if d.is_empty() => d,
                    d => format!(" ({d})"),
                }
            );
        }
        s
    }
}
