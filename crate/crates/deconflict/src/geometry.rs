//! Pairwise separation geometry under uniform motion.
//!
//! All positions are in NM, speeds in NM/h, angles in radians. An aircraft at
//! `(x0, y0)` with ground speed `v` and heading `th` moves along
//! `(x0 + v cos(th) t, y0 + v sin(th) t)`. For a pair with initial relative
//! position `u = (dx0, dy0)` and relative velocity `w`, the squared distance
//! is quadratic in `t`; its minimizer and value decide whether the pair ever
//! comes closer than the separation norm `d`.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::ControlSpec;
use crate::Result;

/// Below this squared relative speed ((NM/h)^2) a pair is treated as having
/// constant separation.
pub const EPS_DIV: f64 = 1e-9;

/// Normalize an angle to `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let t = a.rem_euclid(std::f64::consts::TAU);
    if t > std::f64::consts::PI {
        t - std::f64::consts::TAU
    } else {
        t
    }
}

/// Initial state of one aircraft: position, ground speed, heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub x0: f64,
    pub y0: f64,
    pub speed: f64,
    pub heading: f64,
}

impl AircraftState {
    pub fn new(x0: f64, y0: f64, speed: f64, heading: f64) -> Result<Self> {
        if !(speed > 0.0) || !speed.is_finite() {
            return Err(Error::InvalidInstance(format!(
                "aircraft speed must be finite and positive, got {speed}"
            )));
        }
        if !x0.is_finite() || !y0.is_finite() || !heading.is_finite() {
            return Err(Error::InvalidInstance(
                "aircraft state fields must be finite".into(),
            ));
        }
        Ok(Self { x0, y0, speed, heading: normalize_angle(heading) })
    }

    /// Velocity at nominal controls (`q = 1`, `th = 0`).
    pub fn nominal_velocity(&self) -> (f64, f64) {
        (self.speed * self.heading.cos(), self.speed * self.heading.sin())
    }
}

/// A conflict-resolution scenario: aircraft set plus the separation norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    /// Required horizontal separation (NM).
    pub d: f64,
    pub aircraft: Vec<AircraftState>,
}

impl Instance {
    /// Build and validate: at least two aircraft, positive speeds, and every
    /// pair initially separated by at least `d`.
    pub fn new(id: impl Into<String>, d: f64, aircraft: Vec<AircraftState>) -> Result<Self> {
        let inst = Self { id: id.into(), d, aircraft };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0) || !self.d.is_finite() {
            return Err(Error::InvalidInstance(format!(
                "separation norm must be positive, got {}",
                self.d
            )));
        }
        if self.aircraft.len() < 2 {
            return Err(Error::InvalidInstance(format!(
                "need at least 2 aircraft, got {}",
                self.aircraft.len()
            )));
        }
        for (k, a) in self.aircraft.iter().enumerate() {
            if !(a.speed > 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "aircraft {k} has non-positive speed {}",
                    a.speed
                )));
            }
        }
        for i in 0..self.aircraft.len() {
            for j in (i + 1)..self.aircraft.len() {
                let dx = self.aircraft[i].x0 - self.aircraft[j].x0;
                let dy = self.aircraft[i].y0 - self.aircraft[j].y0;
                let dist2 = dx * dx + dy * dy;
                if dist2 < self.d * self.d {
                    return Err(Error::InitialLoss { i, j, dist: dist2.sqrt(), d: self.d });
                }
            }
        }
        Ok(())
    }

    pub fn n_aircraft(&self) -> usize {
        self.aircraft.len()
    }

    /// Ordered pair list `(i, j)` with `i < j`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.aircraft.len();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push((i, j));
            }
        }
        out
    }
}

/// Relative velocity components of a pair (NM/h).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeVelocity {
    pub vx: f64,
    pub vy: f64,
}

impl RelativeVelocity {
    pub fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn norm_sq(&self) -> f64 {
        self.vx * self.vx + self.vy * self.vy
    }
}

/// Conflict-cone description of a pair: initial relative position and the
/// two boundary-line coefficient pairs of the cone in the relative-velocity
/// plane. The cone is `{v : vx*gamma_l - vy*phi_l >= 0 and
/// vx*gamma_u - vy*phi_u <= 0}`; it contains the head-on direction
/// `-(dx0, dy0)` and its boundary rays are where the closest approach equals
/// the separation norm exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub i: usize,
    pub j: usize,
    pub dx0: f64,
    pub dy0: f64,
    pub gamma_l: f64,
    pub phi_l: f64,
    pub gamma_u: f64,
    pub phi_u: f64,
}

impl PairGeometry {
    /// Closed membership test for the conflict cone.
    pub fn contains(&self, v: RelativeVelocity) -> bool {
        v.vx * self.gamma_l - v.vy * self.phi_l >= 0.0
            && v.vx * self.gamma_u - v.vy * self.phi_u <= 0.0
    }

    /// Unit direction of the lower boundary ray.
    pub fn lower_ray(&self) -> (f64, f64) {
        (-self.phi_l, -self.gamma_l)
    }

    /// Unit direction of the upper boundary ray.
    pub fn upper_ray(&self) -> (f64, f64) {
        (-self.phi_u, -self.gamma_u)
    }
}

/// Interval bounds on the relative velocity components reachable under the
/// control ranges (a superset: interval arithmetic ignores the coupling
/// between the speed and heading factors).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityBox {
    pub vx_lo: f64,
    pub vx_hi: f64,
    pub vy_lo: f64,
    pub vy_hi: f64,
}

impl VelocityBox {
    pub fn contains(&self, v: RelativeVelocity, tol: f64) -> bool {
        v.vx >= self.vx_lo - tol
            && v.vx <= self.vx_hi + tol
            && v.vy >= self.vy_lo - tol
            && v.vy <= self.vy_hi + tol
    }
}

/// Outcome of the closest-approach analysis of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairAssessment {
    /// Time of minimal separation (h); 0 when the pair is diverging from the
    /// start or has negligible relative speed.
    pub t_min: f64,
    /// Minimal separation over t >= 0 (NM).
    pub d_min: f64,
    /// Separation discriminant; nonnegative iff the straight-line paths never
    /// come closer than `d`.
    pub g: f64,
    pub in_conflict: bool,
}

/// Closed interval arithmetic helper.
#[derive(Debug, Clone, Copy)]
struct Iv {
    lo: f64,
    hi: f64,
}

impl Iv {
    fn add(self, o: Iv) -> Self {
        Self { lo: self.lo + o.lo, hi: self.hi + o.hi }
    }

    fn sub(self, o: Iv) -> Self {
        Self { lo: self.lo - o.hi, hi: self.hi - o.lo }
    }

    fn scale(self, s: f64) -> Self {
        if s >= 0.0 {
            Self { lo: self.lo * s, hi: self.hi * s }
        } else {
            Self { lo: self.hi * s, hi: self.lo * s }
        }
    }

    fn mul(self, o: Iv) -> Self {
        let cands = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let mut lo = cands[0];
        let mut hi = cands[0];
        for c in cands {
            lo = lo.min(c);
            hi = hi.max(c);
        }
        Self { lo, hi }
    }
}

/// Relative position and nominal relative velocity of a pair.
///
/// `dx0 = x_i - x_j`, `dy0 = y_i - y_j`; the velocity difference is taken at
/// nominal controls.
pub fn relative_state(inst: &Instance, i: usize, j: usize) -> Result<(f64, f64, RelativeVelocity)> {
    let n = inst.aircraft.len();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j, len: n });
    }
    let a = &inst.aircraft[i];
    let b = &inst.aircraft[j];
    let (avx, avy) = a.nominal_velocity();
    let (bvx, bvy) = b.nominal_velocity();
    Ok((
        a.x0 - b.x0,
        a.y0 - b.y0,
        RelativeVelocity::new(avx - bvx, avy - bvy),
    ))
}

/// Time and distance of closest approach over `t >= 0`.
///
/// With negligible relative speed the separation is constant: the time is
/// reported as 0 and the distance is the initial distance.
pub fn closest_approach(dx0: f64, dy0: f64, v: RelativeVelocity) -> (f64, f64) {
    let n2 = v.norm_sq();
    let d0 = (dx0 * dx0 + dy0 * dy0).sqrt();
    if n2 < EPS_DIV {
        return (0.0, d0);
    }
    let t_min = -(dx0 * v.vx + dy0 * v.vy) / n2;
    if t_min <= 0.0 {
        (t_min, d0)
    } else {
        let x = dx0 + v.vx * t_min;
        let y = dy0 + v.vy * t_min;
        (t_min, x.hypot(y))
    }
}

/// Separation discriminant of a pair.
///
/// Equals the minimal value of the squared-distance polynomial scaled by the
/// squared relative speed; nonnegative iff the unconstrained minimal
/// separation is at least `d`.
pub fn g_value(dx0: f64, dy0: f64, v: RelativeVelocity, d: f64) -> f64 {
    v.vy * v.vy * (dx0 * dx0 - d * d) + v.vx * v.vx * (dy0 * dy0 - d * d)
        - 2.0 * dx0 * dy0 * v.vx * v.vy
}

/// Full conflict assessment of one pair.
///
/// The pair is in conflict iff it is converging (`t_min > 0`) and the
/// discriminant is negative; requires initial separation.
pub fn assess_pair(dx0: f64, dy0: f64, v: RelativeVelocity, d: f64) -> Result<PairAssessment> {
    let dist2 = dx0 * dx0 + dy0 * dy0;
    if dist2 < d * d {
        return Err(Error::InitialLoss { i: 0, j: 0, dist: dist2.sqrt(), d });
    }
    let g = g_value(dx0, dy0, v, d);
    let (t_min, d_min) = closest_approach(dx0, dy0, v);
    let degenerate = v.norm_sq() < EPS_DIV;
    let in_conflict = !degenerate && t_min > 0.0 && g < 0.0;
    Ok(PairAssessment { t_min, d_min, g, in_conflict })
}

/// Conflict-cone coefficients of a pair.
///
/// The cone apex is the origin of the relative-velocity plane, its axis is
/// the head-on direction `-(dx0, dy0)` and its half-angle is
/// `asin(d / ||(dx0, dy0)||)`. Boundary rays are labelled lower/upper by
/// signed angle from the axis; both coefficient pairs are unit length.
pub fn conflict_region(i: usize, j: usize, dx0: f64, dy0: f64, d: f64) -> Result<PairGeometry> {
    let r2 = dx0 * dx0 + dy0 * dy0;
    if r2 < d * d {
        return Err(Error::InitialLoss { i, j, dist: r2.sqrt(), d });
    }
    let r = r2.sqrt();
    // cos/sin of the half-angle; e is the tangent-length to the d-circle.
    let e = (r2 - d * d).max(0.0).sqrt();
    let (cb, sb) = (e / r, d / r);
    let (ax, ay) = (-dx0 / r, -dy0 / r);
    // rotate the axis by -beta (lower) and +beta (upper)
    let w_lo = (ax * cb + ay * sb, -ax * sb + ay * cb);
    let w_hi = (ax * cb - ay * sb, ax * sb + ay * cb);
    Ok(PairGeometry {
        i,
        j,
        dx0,
        dy0,
        gamma_l: -w_lo.1,
        phi_l: -w_lo.0,
        gamma_u: -w_hi.1,
        phi_u: -w_hi.0,
    })
}

/// Interval of one aircraft's velocity component pair over the control box.
///
/// Returns `(x interval, y interval)`. Expands `cos(th_hat + th)` and
/// `sin(th_hat + th)` and bounds the products `q cos(th)`, `q sin(th)` by
/// intervals, so the result covers (but may exceed) the reachable set.
pub fn velocity_component_intervals(a: &AircraftState, c: &ControlSpec) -> ((f64, f64), (f64, f64)) {
    let q = Iv { lo: c.q_lo, hi: c.q_hi };
    // cos on [th_lo, th_hi] with |th| < pi/2: max at the point closest to 0.
    let cos_hi = if c.th_lo <= 0.0 && c.th_hi >= 0.0 {
        1.0
    } else {
        c.th_lo.cos().max(c.th_hi.cos())
    };
    let cos_lo = c.th_lo.cos().min(c.th_hi.cos());
    let sin_iv = Iv { lo: c.th_lo.sin(), hi: c.th_hi.sin() };
    let qc = q.mul(Iv { lo: cos_lo, hi: cos_hi });
    let qs = q.mul(sin_iv);
    let (ch, sh) = (a.heading.cos(), a.heading.sin());
    let vx = qc.scale(ch).sub(qs.scale(sh)).scale(a.speed);
    let vy = qs.scale(ch).add(qc.scale(sh)).scale(a.speed);
    ((vx.lo, vx.hi), (vy.lo, vy.hi))
}

/// Reachable relative-velocity box of a pair under the control ranges.
pub fn relative_velocity_box(i: &AircraftState, j: &AircraftState, c: &ControlSpec) -> VelocityBox {
    let ((ix_lo, ix_hi), (iy_lo, iy_hi)) = velocity_component_intervals(i, c);
    let ((jx_lo, jx_hi), (jy_lo, jy_hi)) = velocity_component_intervals(j, c);
    let vx = Iv { lo: ix_lo, hi: ix_hi }.sub(Iv { lo: jx_lo, hi: jx_hi });
    let vy = Iv { lo: iy_lo, hi: iy_hi }.sub(Iv { lo: jy_lo, hi: jy_hi });
    VelocityBox { vx_lo: vx.lo, vx_hi: vx.hi, vy_lo: vy.lo, vy_hi: vy.hi }
}

/// Per-pair assessment of a whole instance at nominal controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConflictReport {
    /// One entry per ordered pair `(i, j)`, `i < j`.
    pub pairs: Vec<(usize, usize, PairAssessment)>,
    /// Number of conflicting pairs.
    pub n_conflicts: usize,
    /// Sum of pairwise minimal distances (NM).
    pub total_min_distance: f64,
}

/// Assess every pair of an instance at nominal controls.
pub fn detect_conflicts(inst: &Instance) -> Result<ConflictReport> {
    let mut pairs = Vec::new();
    let mut n_conflicts = 0;
    let mut total = 0.0;
    for (i, j) in inst.pairs() {
        let (dx0, dy0, v) = relative_state(inst, i, j)?;
        let a = assess_pair(dx0, dy0, v, inst.d).map_err(|e| match e {
            Error::InitialLoss { dist, d, .. } => Error::InitialLoss { i, j, dist, d },
            other => other,
        })?;
        if a.in_conflict {
            n_conflicts += 1;
        }
        total += a.d_min;
        pairs.push((i, j, a));
    }
    Ok(ConflictReport { pairs, n_conflicts, total_min_distance: total })
}
