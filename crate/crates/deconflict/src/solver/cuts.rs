//! Linear cuts for the speed annulus `q_lo <= |delta| <= q_hi`.

/// One cut `a . delta_i <= rhs` on a single aircraft's control vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cut {
    pub aircraft: usize,
    pub a: [f64; 2],
    pub rhs: f64,
}

impl Cut {
    pub fn violation(&self, dx: f64, dy: f64) -> f64 {
        self.a[0] * dx + self.a[1] * dy - self.rhs
    }
}

/// Outer-approximation cut for the convex cap `|delta| <= q_hi`, generated
/// at a point outside the disc: `2 delta* . delta <= |delta*|^2 + q_hi^2`.
/// Never removes a point of the disc and is violated at `delta*`.
pub fn cap_cut(aircraft: usize, delta: (f64, f64), q_hi: f64) -> Cut {
    let norm2 = delta.0 * delta.0 + delta.1 * delta.1;
    debug_assert!(norm2 > q_hi * q_hi);
    Cut { aircraft, a: [2.0 * delta.0, 2.0 * delta.1], rhs: norm2 + q_hi * q_hi }
}

/// Tangent cut for the nonconvex floor `|delta| >= q_lo`, generated at a
/// point inside the disc: `(delta*/|delta*|) . delta >= q_lo`. Separates the
/// point from the annulus at its radial projection; not valid over the whole
/// heading cone, which is why solves can be audited in certify mode.
///
/// At a (numerically) zero point the radial direction is undefined; the
/// fallback `delta_x >= q_lo cos(max |heading change|)` holds everywhere on
/// the feasible annulus sector.
pub fn floor_cut(aircraft: usize, delta: (f64, f64), q_lo: f64, max_abs_theta: f64) -> Cut {
    let norm = (delta.0 * delta.0 + delta.1 * delta.1).sqrt();
    if norm < 1e-12 {
        return Cut { aircraft, a: [-1.0, 0.0], rhs: -q_lo * max_abs_theta.cos() };
    }
    Cut { aircraft, a: [-delta.0 / norm, -delta.1 / norm], rhs: -q_lo }
}

/// Chord cut valid on the annulus sector with headings in
/// `[mid - half, mid + half]`: `delta . (cos mid, sin mid) >= q_lo cos(half)`.
pub fn sector_chord_cut(aircraft: usize, mid: f64, half: f64, q_lo: f64) -> Cut {
    Cut { aircraft, a: [-mid.cos(), -mid.sin()], rhs: -q_lo * half.cos() }
}
