//! Independent solution audits.
//!
//! The audits recompute aircraft velocities from the recovered speed ratios
//! and heading changes (not from the solver's internal control vectors) and
//! test the separation geometry directly, so they share no code path with
//! the optimization model beyond the closest-approach primitives.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Error;
use crate::geometry::{assess_pair, AircraftState, Instance};
use crate::model::{deterministic_separation_constraints, Control, ControlSpec, UncertaintySpec};
use crate::rng::SplitMix64;
use crate::solver::Solution;
use crate::Result;

/// Default audit tolerance in NM.
pub const AUDIT_TOL: f64 = 1e-6;

/// One separation shortfall found by an audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    /// Which perturbation scenario produced it; "nominal" for the plain audit.
    pub scenario: String,
    pub d_min: f64,
}

/// Audit outcome over all pairs (and scenarios, for robust audits).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub worst_pair: Option<(usize, usize)>,
    /// Minimum over pairs/scenarios of `d_min - d` (NM).
    pub worst_margin: f64,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn to_json(&self) -> Value {
        json!({
            "schema": "deconflict-verify/1",
            "passed": self.passed,
            "worst_pair": self.worst_pair,
            "worst_margin": self.worst_margin,
            "violations": self.violations,
        })
    }
}

fn controlled_velocity(a: &AircraftState, c: &Control) -> (f64, f64) {
    let h = a.heading + c.theta;
    (c.q * a.speed * h.cos(), c.q * a.speed * h.sin())
}

/// Audit a solution's nominal separation: every pair's closest approach must
/// stay above `d - tol`.
pub fn verify_deterministic(inst: &Instance, controls: &[Control], tol: f64) -> VerifyReport {
    assert_eq!(controls.len(), inst.aircraft.len(), "one control per aircraft");
    let velocities: Vec<(f64, f64)> =
        inst.aircraft.iter().zip(controls).map(|(a, c)| controlled_velocity(a, c)).collect();
    let mut report = VerifyReport {
        worst_pair: None,
        worst_margin: f64::INFINITY,
        violations: Vec::new(),
        passed: true,
    };
    for (i, j) in inst.pairs() {
        let dx0 = inst.aircraft[i].x0 - inst.aircraft[j].x0;
        let dy0 = inst.aircraft[i].y0 - inst.aircraft[j].y0;
        let v = crate::geometry::RelativeVelocity::new(
            velocities[i].0 - velocities[j].0,
            velocities[i].1 - velocities[j].1,
        );
        let a = match assess_pair(dx0, dy0, v, inst.d) {
            Ok(a) => a,
            Err(_) => {
                report.passed = false;
                report.worst_margin = f64::NEG_INFINITY;
                report.worst_pair = Some((i, j));
                report.violations.push(Violation {
                    i,
                    j,
                    scenario: "initial loss".into(),
                    d_min: 0.0,
                });
                continue;
            }
        };
        let margin = a.d_min - inst.d;
        if margin < report.worst_margin {
            report.worst_margin = margin;
            report.worst_pair = Some((i, j));
        }
        if margin < -tol {
            report.passed = false;
            report.violations.push(Violation { i, j, scenario: "nominal".into(), d_min: a.d_min });
        }
    }
    report
}

/// Budget-constrained perturbation scenarios for one pair: every way to let
/// at most `floor(gamma)` of the four deviation terms move fully, plus (for
/// fractional budgets) one extra term at the fractional fraction. Signs are
/// chosen adversarially for the given constraint row.
fn scenarios(gamma: f64) -> Vec<(Vec<usize>, Option<usize>)> {
    let whole = gamma.floor() as usize;
    let frac = gamma - gamma.floor();
    let mut out = Vec::new();
    for mask in 0..16u32 {
        let set: Vec<usize> = (0..4).filter(|b| mask & (1 << b) != 0).collect();
        if set.len() <= whole.min(4) {
            out.push((set.clone(), None));
        }
        if frac > 0.0 && set.len() == whole {
            for extra in 0..4 {
                if !set.contains(&extra) {
                    out.push((set.clone(), Some(extra)));
                }
            }
        }
    }
    out
}

/// Worst-case audit of a solution under the budgeted uncertainty model.
///
/// For each pair, the rows of the active disjunction side pick the
/// adversarial deviation signs; each budget scenario perturbs the velocity
/// components and the pair is re-assessed geometrically.
pub fn verify_robust(
    inst: &Instance,
    sol: &Solution,
    u: &UncertaintySpec,
    tol: f64,
) -> Result<VerifyReport> {
    if !(0.0..=4.0).contains(&u.gamma) {
        return Err(Error::InvalidGamma(u.gamma));
    }
    let pairs = inst.pairs();
    if sol.z.len() != pairs.len() || sol.controls.len() != inst.aircraft.len() {
        return Err(Error::ShapeMismatch(format!(
            "solution has {} controls / {} sides, instance needs {} / {}",
            sol.controls.len(),
            sol.z.len(),
            inst.aircraft.len(),
            pairs.len()
        )));
    }
    let velocities: Vec<(f64, f64)> = inst
        .aircraft
        .iter()
        .zip(&sol.controls)
        .map(|(a, c)| controlled_velocity(a, c))
        .collect();
    let scen = scenarios(u.gamma);
    let mut report = VerifyReport {
        worst_pair: None,
        worst_margin: f64::INFINITY,
        violations: Vec::new(),
        passed: true,
    };
    for (pi, &(i, j)) in pairs.iter().enumerate() {
        let dx0 = inst.aircraft[i].x0 - inst.aircraft[j].x0;
        let dy0 = inst.aircraft[i].y0 - inst.aircraft[j].y0;
        let geom = crate::geometry::conflict_region(i, j, dx0, dy0, inst.d)?;
        let groups = deterministic_separation_constraints(&geom);
        let group = groups[sol.z[pi] as usize];
        let (vi, vj) = (velocities[i], velocities[j]);
        // term order: (i, x), (j, x), (i, y), (j, y)
        let term_values = [vi.0, vj.0, vi.1, vj.1];
        let term_eps = [u.eps_x, u.eps_x, u.eps_y, u.eps_y];
        for row in &group.rows {
            // adversarial sign: each term's deviation raises the row value
            let coef = [row.cx, -row.cx, row.cy, -row.cy];
            let signs: Vec<f64> = (0..4)
                .map(|t| if coef[t] * term_values[t] >= 0.0 { 1.0 } else { -1.0 })
                .collect();
            for (set, extra) in &scen {
                let mut eps = [0.0f64; 4];
                for &t in set {
                    eps[t] = signs[t] * term_eps[t];
                }
                if let Some(t) = extra {
                    eps[*t] = signs[*t] * term_eps[*t] * (u.gamma - u.gamma.floor());
                }
                let v = crate::geometry::RelativeVelocity::new(
                    (vi.0 * (1.0 + eps[0])) - (vj.0 * (1.0 + eps[1])),
                    (vi.1 * (1.0 + eps[2])) - (vj.1 * (1.0 + eps[3])),
                );
                let a = assess_pair(dx0, dy0, v, inst.d)?;
                let margin = a.d_min - inst.d;
                if margin < report.worst_margin {
                    report.worst_margin = margin;
                    report.worst_pair = Some((i, j));
                }
                if margin < -tol {
                    report.passed = false;
                    report.violations.push(Violation {
                        i,
                        j,
                        scenario: format!("set={set:?} extra={extra:?}"),
                        d_min: a.d_min,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Monte Carlo audit report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub samples: u64,
    pub seed: u64,
    pub violating: u64,
    pub violation_rate: f64,
}

/// Sample perturbations uniformly from the (unbudgeted) uncertainty boxes
/// and report the fraction of draws where any pair loses separation.
pub fn monte_carlo(
    inst: &Instance,
    controls: &[Control],
    eps_x: f64,
    eps_y: f64,
    samples: u64,
    seed: u64,
) -> McReport {
    let velocities: Vec<(f64, f64)> =
        inst.aircraft.iter().zip(controls).map(|(a, c)| controlled_velocity(a, c)).collect();
    let pairs = inst.pairs();
    let mut rng = SplitMix64::new(seed);
    let mut violating = 0u64;
    for _ in 0..samples {
        let draws: Vec<(f64, f64)> = velocities
            .iter()
            .map(|&(vx, vy)| {
                (vx * (1.0 + rng.uniform(-eps_x, eps_x)), vy * (1.0 + rng.uniform(-eps_y, eps_y)))
            })
            .collect();
        let mut bad = false;
        for &(i, j) in &pairs {
            let dx0 = inst.aircraft[i].x0 - inst.aircraft[j].x0;
            let dy0 = inst.aircraft[i].y0 - inst.aircraft[j].y0;
            let v = crate::geometry::RelativeVelocity::new(
                draws[i].0 - draws[j].0,
                draws[i].1 - draws[j].1,
            );
            if let Ok(a) = assess_pair(dx0, dy0, v, inst.d) {
                if a.d_min < inst.d - 1e-9 {
                    bad = true;
                    break;
                }
            }
        }
        if bad {
            violating += 1;
        }
    }
    McReport {
        samples,
        seed,
        violating,
        violation_rate: violating as f64 / samples.max(1) as f64,
    }
}

/// Result of the brute-force control-grid search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleResult {
    /// Best deviation cost over the grid (infinite if no grid point is
    /// conflict-free).
    pub best_objective: f64,
    pub best_controls: Vec<Control>,
    pub grid_q: usize,
    pub grid_theta: usize,
    /// Visited partial assignments.
    pub evaluated: u64,
}

/// Grid containing the nominal value exactly: two half ranges glued at it.
fn centered_grid(lo: f64, center: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && points % 2 == 1, "need an odd point count, got {points}");
    let half = points / 2;
    let mut out = Vec::with_capacity(points);
    for k in 0..=half {
        out.push(lo + (center - lo) * k as f64 / half as f64);
    }
    for k in 1..=half {
        out.push(center + (hi - center) * k as f64 / half as f64);
    }
    out
}

/// Exhaustive search of the control grid, keeping the cheapest combination
/// whose pairs are all separated. Candidates per aircraft are tried in cost
/// order, so partial costs prune exactly.
pub fn grid_oracle(
    inst: &Instance,
    c: &ControlSpec,
    grid_q: usize,
    grid_theta: usize,
    eval_budget: u64,
) -> Result<OracleResult> {
    c.validate()?;
    let w = c.w;
    let qs = centered_grid(c.q_lo, 1.0, c.q_hi, grid_q);
    let ths = centered_grid(c.th_lo, 0.0, c.th_hi, grid_theta);
    struct Cand {
        q: f64,
        theta: f64,
        cost: f64,
        v: (f64, f64),
    }
    let candidates: Vec<Vec<Cand>> = inst
        .aircraft
        .iter()
        .map(|a| {
            let mut list: Vec<Cand> = qs
                .iter()
                .flat_map(|&q| {
                    ths.iter().map(move |&theta| (q, theta)).collect::<Vec<_>>()
                })
                .map(|(q, theta)| {
                    let cost = (1.0 - w) * (1.0 - q) * (1.0 - q) + w * theta * theta;
                    Cand { q, theta, cost, v: controlled_velocity(a, &Control { q, theta }) }
                })
                .collect();
            list.sort_by(|a, b| a.cost.partial_cmp(&b.cost).unwrap());
            list
        })
        .collect();

    let n = inst.n_aircraft();
    let mut chosen = vec![0usize; n];
    let mut best_cost = f64::INFINITY;
    let mut best: Vec<Control> = Vec::new();
    let mut evaluated = 0u64;

    // iterative DFS with cost and pairwise-separation pruning
    fn descend(
        level: usize,
        cost_so_far: f64,
        inst: &Instance,
        candidates: &[Vec<Cand>],
        chosen: &mut [usize],
        best_cost: &mut f64,
        best: &mut Vec<Control>,
        evaluated: &mut u64,
        budget: u64,
    ) -> Result<()> {
        if level == candidates.len() {
            if cost_so_far < *best_cost {
                *best_cost = cost_so_far;
                *best = chosen
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| Control {
                        q: candidates[i][k].q,
                        theta: candidates[i][k].theta,
                    })
                    .collect();
            }
            return Ok(());
        }
        for (k, cand) in candidates[level].iter().enumerate() {
            let cost = cost_so_far + cand.cost;
            if cost >= *best_cost {
                break; // candidates are cost-sorted
            }
            *evaluated += 1;
            if *evaluated > budget {
                return Err(Error::ResourceCap { evaluated: *evaluated, budget });
            }
            let mut ok = true;
            for prev in 0..level {
                let pc = &candidates[prev][chosen[prev]];
                let dx0 = inst.aircraft[level].x0 - inst.aircraft[prev].x0;
                let dy0 = inst.aircraft[level].y0 - inst.aircraft[prev].y0;
                let v = crate::geometry::RelativeVelocity::new(
                    cand.v.0 - pc.v.0,
                    cand.v.1 - pc.v.1,
                );
                let a = assess_pair(dx0, dy0, v, inst.d)?;
                if a.d_min < inst.d - AUDIT_TOL {
                    ok = false;
                    break;
                }
            }
            if ok {
                chosen[level] = k;
                descend(
                    level + 1,
                    cost,
                    inst,
                    candidates,
                    chosen,
                    best_cost,
                    best,
                    evaluated,
                    budget,
                )?;
            }
        }
        Ok(())
    }
    descend(
        0,
        0.0,
        inst,
        &candidates,
        &mut chosen,
        &mut best_cost,
        &mut best,
        &mut evaluated,
        eval_budget,
    )?;

    Ok(OracleResult {
        best_objective: best_cost,
        best_controls: best,
        grid_q,
        grid_theta,
        evaluated,
    })
}
