//! Branch-and-bound search over the pair binaries.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::error::Error;
use crate::geometry::assess_pair;
use crate::model::{
    budget_protection, recover_controls, row_deviation_terms, IndicatorGroup, ModelIr, PairModel,
    SupportForm,
};
use crate::solver::cuts::{cap_cut, floor_cut, sector_chord_cut, Cut};
use crate::solver::qp::{qp_solve, QpProblem, QpStatus};
use crate::solver::{SolveParams, SolveReport, SolveStatus, Solution};
use crate::Result;

/// Curvature floor for the protection variables (they are linear in the true
/// objective); auxiliary columns are scaled to order one first.
const TIKHONOV: f64 = 1e-10;

/// Acceptance tolerance for rows of groups the QP did not enforce, scaled by
/// the relative speed. Kept tight so boundary pairs branch instead of
/// slipping through with a separation shortfall.
const GROUP_TOL: f64 = 1e-9;

const UNFIXED: i8 = -1;

#[derive(Debug, Clone)]
struct Node {
    id: u64,
    bound: f64,
    depth: u32,
    /// Per pair: -1 unfixed, else the fixed binary value.
    fixed: Vec<i8>,
    /// Certify mode: per-aircraft heading sector.
    sectors: Option<Vec<(f64, f64)>>,
}

struct Open(Node);

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.0.bound == other.0.bound && self.0.id == other.0.id
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: pop the smallest bound first; among ties prefer deeper
        // nodes (closer to completion), then insertion order
        other
            .0
            .bound
            .partial_cmp(&self.0.bound)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.0.depth.cmp(&other.0.depth))
            .then_with(|| other.0.id.cmp(&self.0.id))
    }
}

struct RobustCtx {
    gamma: f64,
    eps: Vec<[f64; 2]>,
    support: SupportForm,
    /// Maximal vertices of the budget polytope `{u in [0,1]^4, sum u <= gamma}`:
    /// weight per deviating term. The per-row protection system (budget and
    /// per-term variables plus support rows) projects exactly onto one linear
    /// row per vertex, which keeps node relaxations small.
    budget_vertices: Vec<[f64; 4]>,
}

fn budget_vertices(gamma: f64) -> Vec<[f64; 4]> {
    let whole = gamma.floor() as usize;
    let frac = gamma - gamma.floor();
    let mut out = Vec::new();
    for mask in 0..16u32 {
        let set: Vec<usize> = (0..4).filter(|b| mask & (1 << b) != 0).collect();
        if set.len() != whole.min(4) {
            continue;
        }
        if frac > 0.0 && whole < 4 {
            for extra in 0..4 {
                if set.contains(&extra) {
                    continue;
                }
                let mut v = [0.0; 4];
                for &t in &set {
                    v[t] = 1.0;
                }
                v[extra] = frac;
                out.push(v);
            }
        } else {
            let mut v = [0.0; 4];
            for &t in &set {
                v[t] = 1.0;
            }
            out.push(v);
        }
    }
    out
}

struct Incumbent {
    deltas: Vec<(f64, f64)>,
    z: Vec<u8>,
    objective: f64,
}

enum NodeSolve {
    Infeasible,
    TimedOut,
    CutLimit,
    Point { deltas: Vec<(f64, f64)>, bound: f64, floor_viol: Vec<(usize, f64)> },
}

struct Search<'a> {
    ir: &'a ModelIr,
    params: &'a SolveParams,
    robust: Option<RobustCtx>,
    /// Column scaling that brings the auxiliary variables to order one.
    aux_scale: f64,
    /// Per aircraft and axis, the smallest |velocity component| over the
    /// control box (for protection lower bounds in preprocessing).
    min_abs_v: Vec<[f64; 2]>,
    start: Instant,
    cap_cuts: Vec<Cut>,
    floor_cuts: Vec<Cut>,
    n_cut_rounds: usize,
    nodes: u64,
    next_id: u64,
    incumbent: Option<Incumbent>,
    cut_limit_hit: bool,
    warm_z: Option<Vec<u8>>,
}

pub(super) fn run(
    ir: &ModelIr,
    params: &SolveParams,
    warm: Option<&Solution>,
) -> Result<(Option<Solution>, SolveReport)> {
    if !(params.rel_gap >= 0.0) {
        return Err(Error::InvalidControl(format!("rel_gap must be >= 0, got {}", params.rel_gap)));
    }
    if !(params.time_limit > 0.0) {
        return Err(Error::InvalidControl(format!(
            "time_limit must be positive, got {}",
            params.time_limit
        )));
    }
    let robust = ir.robust.as_ref().and_then(|r| {
        let active = r.gamma > 0.0 && r.eps.iter().any(|e| e[0] > 0.0 || e[1] > 0.0);
        active.then(|| RobustCtx {
            gamma: r.gamma,
            eps: r.eps.clone(),
            support: r.support_form,
            budget_vertices: budget_vertices(r.gamma),
        })
    });
    let aux_scale = ir
        .aircraft
        .iter()
        .map(|a| a.speed * ir.control.q_hi)
        .fold(1.0f64, f64::max);
    let min_abs_v = ir
        .aircraft
        .iter()
        .map(|a| {
            let ((xl, xh), (yl, yh)) = crate::geometry::velocity_component_intervals(a, &ir.control);
            let amin = |lo: f64, hi: f64| if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
            [amin(xl, xh), amin(yl, yh)]
        })
        .collect();

    let mut search = Search {
        ir,
        params,
        robust,
        aux_scale,
        min_abs_v,
        start: Instant::now(),
        cap_cuts: Vec::new(),
        floor_cuts: Vec::new(),
        n_cut_rounds: 0,
        nodes: 0,
        next_id: 0,
        incumbent: None,
        cut_limit_hit: false,
        warm_z: None,
    };
    search.run_main(warm)
}

impl<'a> Search<'a> {
    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn time_up(&self) -> bool {
        self.elapsed() >= self.params.time_limit
    }

    fn ub(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |i| i.objective)
    }

    fn gap_met(&self, lb: f64) -> bool {
        let ub = self.ub();
        ub.is_finite() && (ub - lb) <= self.params.rel_gap * ub.abs().max(1e-12)
    }

    // ---- preprocessing -------------------------------------------------

    /// Per-pair group screening against the reachable velocity box: a group
    /// whose rows cannot all reach nonpositive values forces the opposite
    /// binary; two impossible groups prove infeasibility.
    fn preprocess(&self) -> Option<Vec<i8>> {
        let mut fixed = vec![UNFIXED; self.ir.pairs.len()];
        for (pi, p) in self.ir.pairs.iter().enumerate() {
            let ok0 = self.group_possibly_feasible(p, &p.groups[0]);
            let ok1 = self.group_possibly_feasible(p, &p.groups[1]);
            match (ok0, ok1) {
                (false, false) => return None,
                (true, false) => fixed[pi] = 0,
                (false, true) => fixed[pi] = 1,
                (true, true) => {}
            }
        }
        Some(fixed)
    }

    fn group_possibly_feasible(&self, p: &PairModel, g: &IndicatorGroup) -> bool {
        for row in &g.rows {
            let mut lo = row.cx * if row.cx >= 0.0 { p.vbox.vx_lo } else { p.vbox.vx_hi };
            lo += row.cy * if row.cy >= 0.0 { p.vbox.vy_lo } else { p.vbox.vy_hi };
            if let Some(rb) = &self.robust {
                let vi = (self.min_abs_v[p.i][0], self.min_abs_v[p.i][1]);
                let vj = (self.min_abs_v[p.j][0], self.min_abs_v[p.j][1]);
                lo += budget_protection(
                    rb.gamma,
                    &row_deviation_terms(row, vi, vj, rb.eps[p.i], rb.eps[p.j]),
                );
            }
            if lo > 1e-7 {
                return false;
            }
        }
        true
    }

    // ---- node relaxation -----------------------------------------------

    fn build_qp(&self, node: &Node) -> QpProblem {
        let ir = self.ir;
        let n = ir.n_aircraft();
        let w = ir.control.w;
        let mut n_vars = 2 * n;
        let nu_base = self.robust.as_ref().map(|_| {
            let b = n_vars;
            n_vars += 2 * n;
            b
        });

        let mut h = vec![TIKHONOV; n_vars];
        let mut c = vec![0.0; n_vars];
        for i in 0..n {
            h[2 * i] = 2.0 * (1.0 - w);
            c[2 * i] = -2.0 * (1.0 - w);
            h[2 * i + 1] = 2.0 * w;
        }
        let mut qp = QpProblem::new(h, c);

        // control-vector boxes
        let b = ir.delta;
        for i in 0..n {
            let (x, y) = (2 * i, 2 * i + 1);
            qp.push_row(&[(x, 1.0)], b.x_hi);
            qp.push_row(&[(x, -1.0)], -b.x_lo);
            qp.push_row(&[(y, 1.0)], b.y_hi);
            qp.push_row(&[(y, -1.0)], -b.y_lo);
        }
        // heading cones (full range or node sectors with a chord cut)
        match &node.sectors {
            None => {
                let (tan_lo, tan_hi) = ir.cone;
                for i in 0..n {
                    let (x, y) = (2 * i, 2 * i + 1);
                    qp.push_row(&[(y, 1.0), (x, -tan_hi)], 0.0);
                    qp.push_row(&[(y, -1.0), (x, tan_lo)], 0.0);
                }
            }
            Some(sectors) => {
                for (i, &(lo, hi)) in sectors.iter().enumerate() {
                    let (x, y) = (2 * i, 2 * i + 1);
                    qp.push_row(&[(y, 1.0), (x, -hi.tan())], 0.0);
                    qp.push_row(&[(y, -1.0), (x, lo.tan())], 0.0);
                    let chord =
                        sector_chord_cut(i, 0.5 * (lo + hi), 0.5 * (hi - lo), ir.control.q_lo);
                    qp.push_row(&[(x, chord.a[0]), (y, chord.a[1])], chord.rhs);
                }
            }
        }
        // accumulated cuts
        for cut in self.cap_cuts.iter().chain(&self.floor_cuts) {
            let (x, y) = (2 * cut.aircraft, 2 * cut.aircraft + 1);
            qp.push_row(&[(x, cut.a[0]), (y, cut.a[1])], cut.rhs);
        }
        // velocity magnitude bounds for the robust protection
        if let Some(nu0) = nu_base {
            let s = self.aux_scale;
            for i in 0..n {
                let m = &ir.velocity_maps[i].m;
                for axis in 0..2 {
                    let nu = nu0 + 2 * i + axis;
                    let (x, y) = (2 * i, 2 * i + 1);
                    qp.push_row(&[(x, m[axis][0]), (y, m[axis][1]), (nu, -s)], 0.0);
                    qp.push_row(&[(x, -m[axis][0]), (y, -m[axis][1]), (nu, -s)], 0.0);
                    qp.push_row(&[(nu, -1.0)], 0.0);
                }
            }
        }
        // rows of the fixed pairs' active groups; in robust models each row
        // appears once per budget vertex with the worst-case deviation terms
        // priced against the nu variables
        for (pi, p) in ir.pairs.iter().enumerate() {
            if node.fixed[pi] == UNFIXED {
                continue;
            }
            let group = &p.groups[node.fixed[pi] as usize];
            for row in &group.rows {
                let mi = &ir.velocity_maps[p.i].m;
                let mj = &ir.velocity_maps[p.j].m;
                let expanded = [
                    (2 * p.i, row.cx * mi[0][0] + row.cy * mi[1][0]),
                    (2 * p.i + 1, row.cx * mi[0][1] + row.cy * mi[1][1]),
                    (2 * p.j, -(row.cx * mj[0][0] + row.cy * mj[1][0])),
                    (2 * p.j + 1, -(row.cx * mj[0][1] + row.cy * mj[1][1])),
                ];
                match &self.robust {
                    Some(rb) => {
                        let s = self.aux_scale;
                        let nu0 = nu_base.unwrap();
                        let owners = [p.i, p.j, p.i, p.j];
                        let axes = [0usize, 0, 1, 1];
                        let coefs = [row.cx.abs(), row.cx.abs(), row.cy.abs(), row.cy.abs()];
                        for vertex in &rb.budget_vertices {
                            // accumulate by nu variable: terms may share one
                            let mut nu_coef = [0.0f64; 4]; // (i,x) (j,x) (i,y) (j,y) slots
                            for t in 0..4 {
                                let (owner, k) = match rb.support {
                                    SupportForm::Coefficient => {
                                        (owners[t], coefs[t] * rb.eps[owners[t]][axes[t]])
                                    }
                                    SupportForm::AsPrinted => (p.i, rb.eps[p.i][axes[t]]),
                                };
                                let slot = if owner == p.i { axes[t] * 2 } else { axes[t] * 2 + 1 };
                                nu_coef[slot] += vertex[t] * k;
                            }
                            let mut terms: Vec<(usize, f64)> = expanded.to_vec();
                            let slot_vars = [
                                nu0 + 2 * p.i,
                                nu0 + 2 * p.j,
                                nu0 + 2 * p.i + 1,
                                nu0 + 2 * p.j + 1,
                            ];
                            for (slot, &var) in slot_vars.iter().enumerate() {
                                if nu_coef[slot] != 0.0 {
                                    terms.push((var, nu_coef[slot] * s));
                                }
                            }
                            qp.push_row(&terms, 0.0);
                        }
                    }
                    None => {
                        qp.push_row(&expanded, 0.0);
                    }
                }
            }
        }
        qp
    }

    /// Solve one node's relaxation, generating cap (and in default mode
    /// floor) cuts until the point respects the speed annulus.
    fn solve_node(&mut self, node: &Node) -> Result<NodeSolve> {
        let ir = self.ir;
        let n = ir.n_aircraft();
        let (q_lo, q_hi) = (ir.control.q_lo, ir.control.q_hi);
        let cut_tol = self.params.cut_tol;
        for _round in 0..400 {
            if self.time_up() {
                return Ok(NodeSolve::TimedOut);
            }
            let qp = self.build_qp(node);
            let res = qp_solve(&qp)?;
            if res.status == QpStatus::Infeasible {
                return Ok(NodeSolve::Infeasible);
            }
            let deltas: Vec<(f64, f64)> = (0..n).map(|i| (res.x[2 * i], res.x[2 * i + 1])).collect();

            let mut added_cap = false;
            for (i, &(dx, dy)) in deltas.iter().enumerate() {
                if dx.hypot(dy) > q_hi + cut_tol {
                    self.cap_cuts.push(cap_cut(i, (dx, dy), q_hi));
                    added_cap = true;
                }
            }
            if added_cap {
                self.trim_pools();
                continue;
            }

            let floor_viol: Vec<(usize, f64)> = deltas
                .iter()
                .enumerate()
                .filter_map(|(i, &(dx, dy))| {
                    let depth = q_lo - dx.hypot(dy);
                    (depth > cut_tol).then_some((i, depth))
                })
                .collect();
            if !floor_viol.is_empty() && node.sectors.is_none() {
                if self.n_cut_rounds >= self.params.max_cut_rounds {
                    self.cut_limit_hit = true;
                    return Ok(NodeSolve::CutLimit);
                }
                for &(i, _) in &floor_viol {
                    self.floor_cuts.push(floor_cut(
                        i,
                        deltas[i],
                        q_lo,
                        ir.control.max_abs_heading(),
                    ));
                }
                self.n_cut_rounds += 1;
                self.trim_pools();
                continue;
            }

            // lower-bound slack for the curvature floor on the (order-one
            // scaled) auxiliary columns
            let aux_count = qp.n_vars().saturating_sub(2 * n);
            let bound = res.objective + (1.0 - ir.control.w) * n as f64
                - TIKHONOV * 16.0 * aux_count as f64;
            return Ok(NodeSolve::Point { deltas, bound, floor_viol });
        }
        Err(Error::NumericalFailure("cut loop failed to settle".into()))
    }

    fn trim_pools(&mut self) {
        let cap_max = 64 * self.ir.n_aircraft();
        if self.cap_cuts.len() > cap_max {
            let drop = self.cap_cuts.len() - cap_max;
            self.cap_cuts.drain(..drop);
        }
        // dropping floor cuts only relaxes; keep the pool bounded as well
        let floor_max = 64 * self.ir.n_aircraft();
        if self.floor_cuts.len() > floor_max {
            let drop = self.floor_cuts.len() - floor_max;
            self.floor_cuts.drain(..drop);
        }
    }

    // ---- feasibility checks ---------------------------------------------

    fn group_ok(&self, p: &PairModel, group: &IndicatorGroup, deltas: &[(f64, f64)]) -> bool {
        let vij = self.ir.pair_velocity(p, deltas);
        let tol = GROUP_TOL * (1.0 + vij.norm_sq().sqrt());
        for row in &group.rows {
            let mut lhs = row.eval(vij);
            if let Some(rb) = &self.robust {
                let vi = self.ir.velocity_maps[p.i].apply(deltas[p.i].0, deltas[p.i].1);
                let vj = self.ir.velocity_maps[p.j].apply(deltas[p.j].0, deltas[p.j].1);
                lhs += budget_protection(
                    rb.gamma,
                    &row_deviation_terms(row, vi, vj, rb.eps[p.i], rb.eps[p.j]),
                );
            }
            if lhs > tol {
                return false;
            }
        }
        true
    }

    /// Preferred side for a pair at the given controls (the side of the pair
    /// axis the relative velocity falls on).
    fn preferred_side(&self, p: &PairModel, deltas: &[(f64, f64)]) -> u8 {
        let vij = self.ir.pair_velocity(p, deltas);
        // group 1's side row is (u x v) / |u|
        if p.groups[1].rows[0].eval(vij) <= 0.0 {
            1
        } else {
            0
        }
    }

    /// Which binary value resolves the pair at this point, if any.
    fn pair_choice(&self, p: &PairModel, deltas: &[(f64, f64)]) -> Option<u8> {
        let first = self.preferred_side(p, deltas);
        for zv in [first, 1 - first] {
            if self.group_ok(p, &p.groups[zv as usize], deltas) {
                return Some(zv);
            }
        }
        None
    }

    /// Full incumbent validation: every pair resolved, annulus respected,
    /// nominal geometry separated. Returns the pair sides on success.
    fn validate_point(&self, deltas: &[(f64, f64)], fixed: &[i8]) -> Option<Vec<u8>> {
        let ir = self.ir;
        let slack = self.params.cut_tol;
        for &(dx, dy) in deltas {
            let r = dx.hypot(dy);
            if r > ir.control.q_hi + slack || r < ir.control.q_lo - slack {
                return None;
            }
        }
        let mut z = Vec::with_capacity(ir.pairs.len());
        for (pi, p) in ir.pairs.iter().enumerate() {
            let zv = if fixed[pi] != UNFIXED {
                let zv = fixed[pi] as u8;
                if !self.group_ok(p, &p.groups[zv as usize], deltas) {
                    return None;
                }
                zv
            } else {
                self.pair_choice(p, deltas)?
            };
            // independent nominal-geometry audit of the pair
            let vij = ir.pair_velocity(p, deltas);
            let a = assess_pair(p.geometry.dx0, p.geometry.dy0, vij, ir.d).ok()?;
            if a.d_min < ir.d - 1e-6 {
                return None;
            }
            z.push(zv);
        }
        Some(z)
    }

    fn offer_incumbent(&mut self, deltas: &[(f64, f64)], fixed: &[i8]) -> bool {
        let objective = self.ir.surrogate_objective(deltas);
        if objective >= self.ub() - 1e-15 {
            return false;
        }
        if let Some(z) = self.validate_point(deltas, fixed) {
            self.incumbent = Some(Incumbent { deltas: deltas.to_vec(), z, objective });
            true
        } else {
            false
        }
    }

    // ---- heuristic dive --------------------------------------------------

    /// Depth-first plunge from a node: repeatedly fix the most-violated
    /// unresolved pair to its preferred side and re-solve, until every pair
    /// is resolved (incumbent candidate) or the fixing goes infeasible.
    fn dive(&mut self, node: &Node, deltas: &[(f64, f64)]) -> Result<()> {
        let warm = self.warm_z.take();
        let mut fixed = node.fixed.clone();
        let mut point = deltas.to_vec();
        for _ in 0..=self.ir.pairs.len() {
            let mut worst: Option<(usize, f64)> = None;
            for (pi, p) in self.ir.pairs.iter().enumerate() {
                if fixed[pi] != UNFIXED || self.pair_choice(p, &point).is_some() {
                    continue;
                }
                let vij = self.ir.pair_velocity(p, &point);
                let score = p.groups.iter().map(|g| g.violation(vij)).fold(0.0, f64::max);
                if worst.map_or(true, |(_, s)| score > s) {
                    worst = Some((pi, score));
                }
            }
            let Some((pi, _)) = worst else {
                self.offer_incumbent(&point, &fixed);
                return Ok(());
            };
            let zv = warm
                .as_ref()
                .map(|w| w[pi])
                .unwrap_or_else(|| self.preferred_side(&self.ir.pairs[pi], &point));
            fixed[pi] = zv as i8;
            let probe = Node {
                id: self.next_id,
                bound: node.bound,
                depth: node.depth,
                fixed: fixed.clone(),
                sectors: node.sectors.clone(),
            };
            self.next_id += 1;
            self.nodes += 1;
            match self.solve_node(&probe)? {
                NodeSolve::Point { deltas, floor_viol, bound } => {
                    if !floor_viol.is_empty() || bound >= self.ub() - 1e-15 {
                        return Ok(());
                    }
                    point = deltas;
                }
                _ => return Ok(()),
            }
        }
        Ok(())
    }

    // ---- main loop --------------------------------------------------------

    fn run_main(&mut self, warm: Option<&Solution>) -> Result<(Option<Solution>, SolveReport)> {
        let ir = self.ir;
        let Some(root_fix) = self.preprocess() else {
            let report = SolveReport {
                ub: f64::INFINITY,
                lb: f64::INFINITY,
                gap: f64::INFINITY,
                time_sec: self.elapsed(),
                n_cut_rounds: 0,
                nodes: 0,
                status: SolveStatus::Infeasible,
            };
            return Ok((None, report));
        };
        if let Some(sol) = warm {
            self.seed_warm(sol)?;
        }

        let sectors = self
            .params
            .certify
            .then(|| vec![(ir.control.th_lo, ir.control.th_hi); ir.n_aircraft()]);
        let root = Node { id: 0, bound: 0.0, depth: 0, fixed: root_fix, sectors };
        self.next_id = 1;
        let mut heap = BinaryHeap::new();
        heap.push(Open(root));

        let mut lb = 0.0f64;
        enum Stop {
            GapMet,
            TimeOut,
            NodeLimit,
            Exhausted,
        }
        let mut stop = Stop::Exhausted;

        while let Some(Open(node)) = heap.pop() {
            lb = lb.max(node.bound).min(self.ub());
            if self.time_up() {
                stop = Stop::TimeOut;
                break;
            }
            if self.nodes >= self.params.node_limit {
                stop = Stop::NodeLimit;
                break;
            }
            if self.gap_met(lb) {
                stop = Stop::GapMet;
                break;
            }
            self.nodes += 1;
            let first_node = self.nodes == 1;
            match self.solve_node(&node)? {
                NodeSolve::Infeasible | NodeSolve::CutLimit => continue,
                NodeSolve::TimedOut => {
                    stop = Stop::TimeOut;
                    break;
                }
                NodeSolve::Point { deltas, bound, floor_viol } => {
                    if bound >= self.ub() - 1e-15 {
                        continue;
                    }
                    if !floor_viol.is_empty() {
                        // certify mode: split the deepest-violating aircraft's
                        // heading sector
                        let (who, _) = floor_viol
                            .iter()
                            .copied()
                            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                            .unwrap();
                        let sectors = node.sectors.as_ref().expect("sector branch without sectors");
                        let (lo, hi) = sectors[who];
                        let mid = 0.5 * (lo + hi);
                        for half in [(lo, mid), (mid, hi)] {
                            let mut s = sectors.clone();
                            s[who] = half;
                            heap.push(Open(Node {
                                id: self.next_id,
                                bound,
                                depth: node.depth + 1,
                                fixed: node.fixed.clone(),
                                sectors: Some(s),
                            }));
                            self.next_id += 1;
                        }
                        continue;
                    }

                    let mut branch: Option<(usize, f64)> = None;
                    for (pi, p) in ir.pairs.iter().enumerate() {
                        if node.fixed[pi] != UNFIXED || self.pair_choice(p, &deltas).is_some() {
                            continue;
                        }
                        let vij = ir.pair_velocity(p, &deltas);
                        let score =
                            p.groups.iter().map(|g| g.violation(vij)).fold(0.0, f64::max);
                        if branch.map_or(true, |(_, s)| score > s) {
                            branch = Some((pi, score));
                        }
                    }
                    match branch {
                        None => {
                            self.offer_incumbent(&deltas, &node.fixed);
                        }
                        Some((pi, _)) => {
                            let prefer = self.preferred_side(&ir.pairs[pi], &deltas);
                            for zv in [prefer, 1 - prefer] {
                                let mut fixed = node.fixed.clone();
                                fixed[pi] = zv as i8;
                                heap.push(Open(Node {
                                    id: self.next_id,
                                    bound,
                                    depth: node.depth + 1,
                                    fixed,
                                    sectors: node.sectors.clone(),
                                }));
                                self.next_id += 1;
                            }
                            let want_dive = first_node
                                || (self.incumbent.is_none() && self.nodes % 64 == 0)
                                || self.nodes % 512 == 0;
                            if want_dive {
                                self.dive(&node, &deltas)?;
                            }
                        }
                    }
                }
            }
        }

        let exhausted = matches!(stop, Stop::Exhausted);
        if exhausted && self.incumbent.is_some() {
            lb = self.ub();
        }
        let ub = self.ub();
        let gap = if ub.is_finite() { ((ub - lb) / ub.abs().max(1e-12)).max(0.0) } else { f64::INFINITY };
        let status = match (&stop, &self.incumbent) {
            (Stop::TimeOut, _) => SolveStatus::TimeOut,
            (Stop::NodeLimit, Some(_)) => SolveStatus::Feasible,
            (Stop::NodeLimit, None) => SolveStatus::TimeOut,
            (Stop::GapMet, _) => {
                if self.cut_limit_hit {
                    SolveStatus::Feasible
                } else {
                    SolveStatus::Optimal
                }
            }
            (Stop::Exhausted, Some(_)) => {
                if self.cut_limit_hit {
                    SolveStatus::Feasible
                } else {
                    SolveStatus::Optimal
                }
            }
            (Stop::Exhausted, None) => {
                if self.cut_limit_hit {
                    // some nodes were abandoned without proof
                    SolveStatus::TimeOut
                } else {
                    SolveStatus::Infeasible
                }
            }
        };
        let report = SolveReport {
            ub,
            lb: lb.min(ub),
            gap,
            time_sec: self.elapsed(),
            n_cut_rounds: self.n_cut_rounds,
            nodes: self.nodes,
            status,
        };
        let solution = self.incumbent.as_ref().map(|inc| {
            let (controls, exact) = recover_controls(&inc.deltas, ir.control.w)
                .expect("incumbent passed validation, delta_x > 0");
            Solution {
                deltas: inc.deltas.clone(),
                velocities: inc
                    .deltas
                    .iter()
                    .enumerate()
                    .map(|(i, d)| ir.velocity_maps[i].apply(d.0, d.1))
                    .collect(),
                controls,
                z: inc.z.clone(),
                objective_surrogate: inc.objective,
                objective_exact: exact,
                status,
            }
        });
        Ok((solution, report))
    }

    fn seed_warm(&mut self, sol: &Solution) -> Result<()> {
        let ir = self.ir;
        if sol.deltas.len() != ir.n_aircraft() || sol.z.len() != ir.pairs.len() {
            return Err(Error::ShapeMismatch(format!(
                "warm start has {} aircraft / {} pairs, model has {} / {}",
                sol.deltas.len(),
                sol.z.len(),
                ir.n_aircraft(),
                ir.pairs.len()
            )));
        }
        let fixed: Vec<i8> = sol.z.iter().map(|&z| z as i8).collect();
        // accept only if feasible for this model; otherwise it seeds nothing
        let b = ir.delta;
        let inside_boxes = sol.deltas.iter().all(|&(dx, dy)| {
            dx >= b.x_lo - 1e-9 && dx <= b.x_hi + 1e-9 && dy >= b.y_lo - 1e-9 && dy <= b.y_hi + 1e-9
        });
        let (tan_lo, tan_hi) = ir.cone;
        let inside_cone = sol
            .deltas
            .iter()
            .all(|&(dx, dy)| dy >= dx * tan_lo - 1e-9 && dy <= dx * tan_hi + 1e-9);
        if inside_boxes && inside_cone {
            self.offer_incumbent(&sol.deltas, &fixed);
        }
        self.warm_z = Some(sol.z.clone());
        Ok(())
    }
}
