//! Optimization model assembly.
//!
//! Both the deterministic and the robust model are expressed over per-aircraft
//! control vectors `delta = q (cos th, sin th)`. Velocities are affine in
//! `delta`, the heading range becomes two linear half-planes, the speed range
//! becomes an annulus `q_lo^2 <= |delta|^2 <= q_hi^2` (a convex cap plus a
//! nonconvex floor), and each pair's disjunctive separation condition becomes
//! two indicator-linked groups of linear constraints keyed by one binary.
//!
//! The robust variant protects every group row against bounded perturbations
//! of the aircraft velocity components using a budget-of-uncertainty
//! reformulation with auxiliary variables: per-aircraft magnitude bounds
//! `nu >= |v|`, one `psi` per (pair, row kind) and one `rho` per deviating
//! term, tied together by support rows.

pub mod json;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{
    self, conflict_region, relative_velocity_box, AircraftState, Instance, PairGeometry,
    RelativeVelocity, VelocityBox,
};
use crate::Result;

/// Speed-ratio and heading-change bounds plus the objective trade-off weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub q_lo: f64,
    pub q_hi: f64,
    /// Lower heading change (radians, <= 0).
    pub th_lo: f64,
    /// Upper heading change (radians, >= 0).
    pub th_hi: f64,
    /// Weight of the heading term in the objective, in (0, 1).
    pub w: f64,
}

impl ControlSpec {
    pub fn new(q_lo: f64, q_hi: f64, th_lo: f64, th_hi: f64, w: f64) -> Result<Self> {
        let c = Self { q_lo, q_hi, th_lo, th_hi, w };
        c.validate()?;
        Ok(c)
    }

    /// Subliminal speed range [-6%, +3%] with +/- 30 degrees of heading.
    pub fn default_bounds(w: f64) -> Result<Self> {
        Self::new(0.94, 1.03, -std::f64::consts::FRAC_PI_6, std::f64::consts::FRAC_PI_6, w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_lo > 0.0 && self.q_lo <= 1.0 && self.q_hi >= 1.0) {
            return Err(Error::InvalidControl(format!(
                "need 0 < q_lo <= 1 <= q_hi, got [{}, {}]",
                self.q_lo, self.q_hi
            )));
        }
        if !(self.th_lo <= 0.0 && self.th_hi >= 0.0) {
            return Err(Error::InvalidControl(format!(
                "heading range must contain 0, got [{}, {}]",
                self.th_lo, self.th_hi
            )));
        }
        // tangents in the cone rows and the delta_x lower bound need |th| < pi/2
        if self.th_lo.abs() >= std::f64::consts::FRAC_PI_2
            || self.th_hi.abs() >= std::f64::consts::FRAC_PI_2
        {
            return Err(Error::InvalidControl(format!(
                "heading changes must stay below 90 degrees in magnitude, got [{}, {}]",
                self.th_lo, self.th_hi
            )));
        }
        if !(self.w > 0.0 && self.w < 1.0) {
            return Err(Error::InvalidControl(format!("weight must lie in (0,1), got {}", self.w)));
        }
        Ok(())
    }

    pub fn max_abs_heading(&self) -> f64 {
        self.th_lo.abs().max(self.th_hi.abs())
    }
}

/// Per-axis maximum velocity perturbation fractions and the robustness budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    pub eps_x: f64,
    pub eps_y: f64,
    /// Budget of uncertainty in [0, 4]: how many of a pair constraint's four
    /// deviating terms may move adversarially (fractional allowed).
    pub gamma: f64,
}

impl UncertaintySpec {
    pub fn new(eps_x: f64, eps_y: f64, gamma: f64) -> Result<Self> {
        if !(eps_x >= 0.0 && eps_y >= 0.0) {
            return Err(Error::InvalidUncertainty(format!(
                "perturbation fractions must be nonnegative, got ({eps_x}, {eps_y})"
            )));
        }
        if !(0.0..=4.0).contains(&gamma) {
            return Err(Error::InvalidGamma(gamma));
        }
        Ok(Self { eps_x, eps_y, gamma })
    }

    pub fn uniform(eps: f64, gamma: f64) -> Result<Self> {
        Self::new(eps, eps, gamma)
    }

    pub fn is_trivial(&self) -> bool {
        self.gamma == 0.0 || (self.eps_x == 0.0 && self.eps_y == 0.0)
    }
}

/// Box bounds for one aircraft's control vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaBounds {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

/// Valid box for `delta` implied by the control ranges.
pub fn delta_bounds(c: &ControlSpec) -> DeltaBounds {
    DeltaBounds {
        x_lo: c.q_lo * c.max_abs_heading().cos(),
        x_hi: c.q_hi,
        y_lo: c.q_hi * c.th_lo.sin(),
        y_hi: c.q_hi * c.th_hi.sin(),
    }
}

/// Affine map from an aircraft's control vector to its velocity components:
/// a rotation by the initial heading scaled by the initial speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityMap {
    /// Row-major 2x2 matrix: `v = m * delta`.
    pub m: [[f64; 2]; 2],
}

impl VelocityMap {
    pub fn apply(&self, dx: f64, dy: f64) -> (f64, f64) {
        (
            self.m[0][0] * dx + self.m[0][1] * dy,
            self.m[1][0] * dx + self.m[1][1] * dy,
        )
    }
}

/// Velocity map of one aircraft.
pub fn velocity_affine(a: &AircraftState) -> VelocityMap {
    let (ch, sh) = (a.heading.cos(), a.heading.sin());
    VelocityMap {
        m: [
            [a.speed * ch, -a.speed * sh],
            [a.speed * sh, a.speed * ch],
        ],
    }
}

/// The two half-plane rows `delta_y >= delta_x tan(th_lo)` and
/// `delta_y <= delta_x tan(th_hi)` as tangent slopes.
pub fn heading_cone(c: &ControlSpec) -> (f64, f64) {
    (c.th_lo.tan(), c.th_hi.tan())
}

/// Which of a pair group's two rows this is: the convergence side split or
/// the cone boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    /// Half-plane through the pair axis direction (which side the relative
    /// velocity falls on).
    Side,
    /// Half-plane of one conflict-cone boundary ray.
    Cone,
}

/// One linear row `cx * v_x + cy * v_y <= 0` over a pair's relative velocity,
/// with unit coefficient norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub kind: RowKind,
    pub cx: f64,
    pub cy: f64,
}

impl PairRow {
    pub fn eval(&self, v: RelativeVelocity) -> f64 {
        self.cx * v.vx + self.cy * v.vy
    }
}

/// The two rows active for one value of a pair's binary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorGroup {
    /// Binary value that activates this group.
    pub z: u8,
    pub rows: [PairRow; 2],
}

impl IndicatorGroup {
    /// Largest positive violation across the group's rows (0 if satisfied).
    pub fn violation(&self, v: RelativeVelocity) -> f64 {
        self.rows.iter().map(|r| r.eval(v).max(0.0)).fold(0.0, f64::max)
    }

    pub fn satisfied(&self, v: RelativeVelocity, tol: f64) -> bool {
        self.rows.iter().all(|r| r.eval(v) <= tol)
    }
}

/// The two indicator groups of a pair. Their union over the binary values is
/// exactly the complement of the conflict cone: the side split pairs each
/// half-plane with the cone boundary lying inside it.
pub fn deterministic_separation_constraints(pg: &PairGeometry) -> [IndicatorGroup; 2] {
    let r = (pg.dx0 * pg.dx0 + pg.dy0 * pg.dy0).sqrt();
    // z = 1: relative velocity clockwise of the pair axis, kept outside the
    // upper cone boundary.
    let g1 = IndicatorGroup {
        z: 1,
        rows: [
            PairRow { kind: RowKind::Side, cx: -pg.dy0 / r, cy: pg.dx0 / r },
            PairRow { kind: RowKind::Cone, cx: -pg.gamma_u, cy: pg.phi_u },
        ],
    };
    // z = 0: counterclockwise side, kept outside the lower boundary.
    let g0 = IndicatorGroup {
        z: 0,
        rows: [
            PairRow { kind: RowKind::Side, cx: pg.dy0 / r, cy: -pg.dx0 / r },
            PairRow { kind: RowKind::Cone, cx: pg.gamma_l, cy: -pg.phi_l },
        ],
    };
    [g0, g1]
}

/// How the support rows bound the protection variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupportForm {
    /// `psi + rho >= |coef| * nu_l * eps_l` per deviating term, so the
    /// protection exactly covers the worst case of that term.
    Coefficient,
    /// `psi + rho >= nu_i * eps_i` for both aircraft of the pair, without the
    /// row coefficient; kept selectable for comparison runs only.
    AsPrinted,
}

/// Robust extension data attached to a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSpec {
    /// Per-aircraft `(eps_x, eps_y)` maximum perturbation fractions.
    pub eps: Vec<[f64; 2]>,
    pub gamma: f64,
    pub support_form: SupportForm,
}

/// One pair's block of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub i: usize,
    pub j: usize,
    pub geometry: PairGeometry,
    /// Reachable relative-velocity bounds, attached as redundant valid rows.
    pub vbox: VelocityBox,
    /// Indexed by binary value: `groups[0]` is the `z = 0` group.
    pub groups: [IndicatorGroup; 2],
}

/// Solver-independent model: variables, bounds, indicator groups and the
/// diagonal quadratic objective, all over the control vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIr {
    pub instance_id: String,
    pub d: f64,
    pub aircraft: Vec<AircraftState>,
    pub control: ControlSpec,
    pub delta: DeltaBounds,
    /// Heading cone slopes `(tan th_lo, tan th_hi)`.
    pub cone: (f64, f64),
    pub velocity_maps: Vec<VelocityMap>,
    pub pairs: Vec<PairModel>,
    pub robust: Option<RobustSpec>,
}

impl ModelIr {
    pub fn n_aircraft(&self) -> usize {
        self.aircraft.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Continuous control variables (two per aircraft).
    pub fn n_delta_vars(&self) -> usize {
        2 * self.aircraft.len()
    }

    pub fn n_binaries(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_indicator_groups(&self) -> usize {
        2 * self.pairs.len()
    }

    /// Magnitude-bound variables in the robust model (two per aircraft).
    pub fn n_nu_vars(&self) -> usize {
        if self.robust.is_some() { 2 * self.aircraft.len() } else { 0 }
    }

    /// Budget variables in the robust model (one per pair and row kind and
    /// binary value).
    pub fn n_psi_vars(&self) -> usize {
        if self.robust.is_some() { 4 * self.pairs.len() } else { 0 }
    }

    /// Per-term protection variables in the robust model.
    pub fn n_rho_vars(&self) -> usize {
        if self.robust.is_some() { 16 * self.pairs.len() } else { 0 }
    }

    /// Relative velocity of a pair at the given control vectors.
    pub fn pair_velocity(&self, p: &PairModel, deltas: &[(f64, f64)]) -> RelativeVelocity {
        let (ix, iy) = self.velocity_maps[p.i].apply(deltas[p.i].0, deltas[p.i].1);
        let (jx, jy) = self.velocity_maps[p.j].apply(deltas[p.j].0, deltas[p.j].1);
        RelativeVelocity::new(ix - jx, iy - jy)
    }

    /// Surrogate objective over control vectors.
    pub fn surrogate_objective(&self, deltas: &[(f64, f64)]) -> f64 {
        let w = self.control.w;
        deltas
            .iter()
            .map(|&(dx, dy)| (1.0 - w) * (1.0 - dx) * (1.0 - dx) + w * dy * dy)
            .sum()
    }
}

/// Deterministic model for an instance.
pub fn build_deterministic(inst: &Instance, c: &ControlSpec) -> Result<ModelIr> {
    c.validate()?;
    inst.validate()?;
    let delta = delta_bounds(c);
    let cone = heading_cone(c);
    let velocity_maps = inst.aircraft.iter().map(velocity_affine).collect();
    let mut pairs = Vec::new();
    for (i, j) in inst.pairs() {
        let (dx0, dy0, _) = geometry::relative_state(inst, i, j)?;
        let geometry = conflict_region(i, j, dx0, dy0, inst.d)?;
        let vbox = relative_velocity_box(&inst.aircraft[i], &inst.aircraft[j], c);
        let groups = deterministic_separation_constraints(&geometry);
        pairs.push(PairModel { i, j, geometry, vbox, groups });
    }
    Ok(ModelIr {
        instance_id: inst.id.clone(),
        d: inst.d,
        aircraft: inst.aircraft.clone(),
        control: *c,
        delta,
        cone,
        velocity_maps,
        pairs,
        robust: None,
    })
}

/// Robust model: the deterministic model plus the uncertainty data that the
/// solver expands into protected rows, support rows and magnitude bounds.
pub fn build_robust(inst: &Instance, c: &ControlSpec, u: &UncertaintySpec) -> Result<ModelIr> {
    build_robust_with_form(inst, c, u, SupportForm::Coefficient)
}

pub fn build_robust_with_form(
    inst: &Instance,
    c: &ControlSpec,
    u: &UncertaintySpec,
    support_form: SupportForm,
) -> Result<ModelIr> {
    if !(0.0..=4.0).contains(&u.gamma) {
        return Err(Error::InvalidGamma(u.gamma));
    }
    let mut ir = build_deterministic(inst, c)?;
    ir.robust = Some(RobustSpec {
        eps: vec![[u.eps_x, u.eps_y]; inst.aircraft.len()],
        gamma: u.gamma,
        support_form,
    });
    Ok(ir)
}

/// Inflate a pair's velocity box by the worst-case perturbation of the
/// relative velocity. `mag_i` and `mag_j` bound the per-axis magnitudes of
/// the two aircraft's velocity components. Diagnostic only; the robust model
/// protects rows individually instead of using this box.
pub fn random_velocity_box(
    pair_box: &VelocityBox,
    u: &UncertaintySpec,
    mag_i: (f64, f64),
    mag_j: (f64, f64),
) -> VelocityBox {
    let dx = u.eps_x * (mag_i.0 + mag_j.0);
    let dy = u.eps_y * (mag_i.1 + mag_j.1);
    VelocityBox {
        vx_lo: pair_box.vx_lo - dx,
        vx_hi: pair_box.vx_hi + dx,
        vy_lo: pair_box.vy_lo - dy,
        vy_hi: pair_box.vy_hi + dy,
    }
}

/// Per-axis magnitude bounds of one aircraft's velocity over the control box.
pub fn velocity_magnitude_bounds(a: &AircraftState, c: &ControlSpec) -> (f64, f64) {
    let ((x_lo, x_hi), (y_lo, y_hi)) = geometry::velocity_component_intervals(a, c);
    (x_lo.abs().max(x_hi.abs()), y_lo.abs().max(y_hi.abs()))
}

/// Speed ratio and heading change of one aircraft.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub q: f64,
    pub theta: f64,
}

/// Recover `(q, th)` from one control vector; needs `delta_x > 0`.
pub fn recover_control(dx: f64, dy: f64) -> Result<Control> {
    if dx <= 0.0 {
        return Err(Error::DegenerateDelta(dx));
    }
    Ok(Control { q: dx.hypot(dy), theta: dy.atan2(dx) })
}

/// Recover all controls and the exact (non-surrogate) objective.
pub fn recover_controls(deltas: &[(f64, f64)], w: f64) -> Result<(Vec<Control>, f64)> {
    let mut out = Vec::with_capacity(deltas.len());
    let mut obj = 0.0;
    for &(dx, dy) in deltas {
        let c = recover_control(dx, dy)?;
        obj += (1.0 - w) * (1.0 - c.q) * (1.0 - c.q) + w * c.theta * c.theta;
        out.push(c);
    }
    Ok((out, obj))
}

/// Worst-case total of `terms` when at most `gamma` of them (fractionally)
/// may deviate: the sum of the `floor(gamma)` largest terms plus the
/// fractional remainder times the next largest.
pub fn budget_protection(gamma: f64, terms: &[f64]) -> f64 {
    debug_assert!(terms.iter().all(|t| *t >= 0.0));
    let mut sorted: Vec<f64> = terms.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let whole = gamma.floor() as usize;
    let frac = gamma - gamma.floor();
    let mut total: f64 = sorted.iter().take(whole.min(sorted.len())).sum();
    if whole < sorted.len() && frac > 0.0 {
        total += frac * sorted[whole];
    }
    total
}

/// The four worst-case deviation magnitudes of a pair row at fixed velocities:
/// `|c_axis| * |v_l_axis| * eps_l_axis` for `l` in `{i, j}` and both axes.
pub fn row_deviation_terms(
    row: &PairRow,
    vi: (f64, f64),
    vj: (f64, f64),
    eps_i: [f64; 2],
    eps_j: [f64; 2],
) -> [f64; 4] {
    [
        row.cx.abs() * vi.0.abs() * eps_i[0],
        row.cx.abs() * vj.0.abs() * eps_j[0],
        row.cy.abs() * vi.1.abs() * eps_i[1],
        row.cy.abs() * vj.1.abs() * eps_j[1],
    ]
}
