//! Global solver for the assembled models.
//!
//! Branch and bound on the pairwise disjunction binaries. A node carries a
//! partial binary assignment (and, in certify mode, per-aircraft heading
//! sectors); its relaxation is a strictly convex QP over the control vectors
//! plus the robust protection variables of the fixed pairs. The convex speed
//! cap enters through outer-approximation cuts, the nonconvex speed floor
//! through tangent cuts generated on violation (default) or through heading
//! sector subdivision (certify mode, which never uses a cut that could trim
//! a feasible point).

mod bnb;
pub mod cuts;
pub mod qp;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use qp::{qp_solve, QpProblem, QpResult, QpStatus};

use crate::model::{Control, ModelIr};
use crate::Result;

/// Termination and tolerance knobs for one solve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveParams {
    /// Relative optimality gap at which the search stops.
    pub rel_gap: f64,
    /// Wall-clock limit in seconds.
    pub time_limit: f64,
    /// Tolerance on speed cap/floor violations before a cut is generated.
    pub cut_tol: f64,
    /// Cap on floor-cut generation rounds across the whole solve.
    pub max_cut_rounds: usize,
    /// Cap on processed nodes.
    pub node_limit: u64,
    /// Certify mode: replace floor tangent cuts by heading-sector branching
    /// with chord cuts, so every relaxation is a true lower bound.
    pub certify: bool,
    /// Reserved for randomized tie-breaking; the default search is
    /// deterministic and ignores it.
    pub seed: u64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            rel_gap: 0.01,
            time_limit: 600.0,
            cut_tol: 1e-6,
            max_cut_rounds: 1000,
            node_limit: 50_000_000,
            certify: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    TimeOut,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::Feasible => "Feasible",
            SolveStatus::Infeasible => "Infeasible",
            SolveStatus::TimeOut => "TimeOut",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SolveStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "Optimal" => Ok(SolveStatus::Optimal),
            "Feasible" => Ok(SolveStatus::Feasible),
            "Infeasible" => Ok(SolveStatus::Infeasible),
            "TimeOut" => Ok(SolveStatus::TimeOut),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

/// Best maneuvers found for one instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    /// Per-aircraft control vectors.
    pub deltas: Vec<(f64, f64)>,
    /// Per-aircraft speed ratios and heading changes recovered from `deltas`.
    pub controls: Vec<Control>,
    /// Per-aircraft velocity components at the chosen controls.
    pub velocities: Vec<(f64, f64)>,
    /// Disjunction side per pair, in the model's pair order.
    pub z: Vec<u8>,
    /// Objective the solver minimized (quadratic in the control vectors).
    pub objective_surrogate: f64,
    /// Deviation cost in terms of the recovered speed ratios and headings.
    pub objective_exact: f64,
    pub status: SolveStatus,
}

/// Search statistics of one solve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveReport {
    /// Best objective found (infinite when none).
    pub ub: f64,
    /// Best proven lower bound.
    pub lb: f64,
    /// `(ub - lb) / max(|ub|, 1e-12)`.
    pub gap: f64,
    pub time_sec: f64,
    /// Floor-cut generation rounds.
    pub n_cut_rounds: usize,
    /// Processed relaxations (nodes plus heuristic dives).
    pub nodes: u64,
    pub status: SolveStatus,
}

impl Solution {
    /// Assemble a solution record from plain controls, deriving the control
    /// vectors, velocities and a disjunction side per pair (the side of the
    /// pair axis the relative velocity falls on). Useful for auditing
    /// externally supplied maneuvers.
    pub fn from_controls(ir: &ModelIr, controls: &[Control], status: SolveStatus) -> Self {
        assert_eq!(controls.len(), ir.n_aircraft(), "one control per aircraft");
        let deltas: Vec<(f64, f64)> =
            controls.iter().map(|c| (c.q * c.theta.cos(), c.q * c.theta.sin())).collect();
        let velocities: Vec<(f64, f64)> = deltas
            .iter()
            .enumerate()
            .map(|(i, d)| ir.velocity_maps[i].apply(d.0, d.1))
            .collect();
        let z = ir
            .pairs
            .iter()
            .map(|p| {
                let v = ir.pair_velocity(p, &deltas);
                u8::from(p.groups[1].rows[0].eval(v) <= 0.0)
            })
            .collect();
        let w = ir.control.w;
        let exact: f64 = controls
            .iter()
            .map(|c| (1.0 - w) * (1.0 - c.q) * (1.0 - c.q) + w * c.theta * c.theta)
            .sum();
        Solution {
            objective_surrogate: ir.surrogate_objective(&deltas),
            objective_exact: exact,
            deltas,
            controls: controls.to_vec(),
            velocities,
            z,
            status,
        }
    }
}

/// Solve a model to the requested gap.
pub fn solve(ir: &ModelIr, params: &SolveParams) -> Result<(Option<Solution>, SolveReport)> {
    bnb::run(ir, params, None)
}

/// Solve with a warm-start solution from a related model (for example a
/// lower budget on the same instance). The incumbent is used only if it is
/// feasible for this model; shape mismatches are errors.
pub fn solve_with_warm(
    ir: &ModelIr,
    params: &SolveParams,
    warm: Option<&Solution>,
) -> Result<(Option<Solution>, SolveReport)> {
    bnb::run(ir, params, warm)
}

/// Solution JSON (`deconflict-solution/1`): controls, binaries, objectives.
pub fn solution_to_json(sol: &Solution) -> Value {
    json!({
        "schema": "deconflict-solution/1",
        "status": sol.status,
        "objective": { "surrogate": sol.objective_surrogate, "exact": sol.objective_exact },
        "aircraft": sol
            .deltas
            .iter()
            .zip(&sol.controls)
            .zip(&sol.velocities)
            .map(|((d, c), v)| {
                json!({
                    "delta_x": d.0, "delta_y": d.1,
                    "q": c.q, "theta": c.theta,
                    "vx": v.0, "vy": v.1,
                })
            })
            .collect::<Vec<_>>(),
        "z": sol.z,
    })
}

/// Report JSON (`deconflict-report/1`): bounds, gap, timings, counters.
pub fn report_to_json(rep: &SolveReport) -> Value {
    json!({
        "schema": "deconflict-report/1",
        "status": rep.status,
        "ub": if rep.ub.is_finite() { json!(rep.ub) } else { Value::Null },
        "lb": rep.lb,
        "gap": if rep.gap.is_finite() { json!(rep.gap) } else { Value::Null },
        "time_sec": rep.time_sec,
        "n_cut_rounds": rep.n_cut_rounds,
        "nodes": rep.nodes,
    })
}
