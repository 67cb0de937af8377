//! Dense dual active-set solver for strictly convex QPs with a diagonal
//! Hessian and sparse inequality rows
//!
//! ```text
//!     minimize    1/2 x' H x + c' x      (H diagonal, H_ii > 0)
//!     subject to  a_k' x <= b_k
//! ```
//!
//! Starting from the unconstrained minimum, the method of Goldfarb and
//! Idnani adds the most violated row, keeping dual feasibility and a QR
//! factorization of the active normals in the metric of `H^-1`. Either a
//! KKT-certified optimum is reached or a Farkas combination of rows proves
//! the system empty. Rows are stored sparsely; the factor updates are dense.

use crate::error::Error;
use crate::Result;

/// Scaled row violation below which a row counts as satisfied.
pub const FEAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

/// A QP in `<=` row form. Rows are normalized to unit coefficient norm as
/// they are pushed.
#[derive(Debug, Clone, Default)]
pub struct QpProblem {
    /// Diagonal of the Hessian, all entries strictly positive.
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    idx: Vec<u32>,
    val: Vec<f64>,
    row_ptr: Vec<usize>,
    pub rhs: Vec<f64>,
}

impl QpProblem {
    pub fn new(h: Vec<f64>, c: Vec<f64>) -> Self {
        Self { h, c, idx: Vec::new(), val: Vec::new(), row_ptr: vec![0], rhs: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.h.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    /// Append `sum coef * x_idx <= rhs`, normalized to unit coefficient norm.
    pub fn push_row(&mut self, entries: &[(usize, f64)], rhs: f64) {
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        debug_assert!(norm > 0.0, "empty constraint row");
        let inv = 1.0 / norm;
        for &(i, v) in entries {
            debug_assert!(i < self.n_vars());
            self.idx.push(i as u32);
            self.val.push(v * inv);
        }
        self.row_ptr.push(self.idx.len());
        self.rhs.push(rhs * inv);
    }

    fn row(&self, k: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.row_ptr[k], self.row_ptr[k + 1]);
        (&self.idx[lo..hi], &self.val[lo..hi])
    }

    fn row_dot(&self, k: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(k);
        idx.iter().zip(val).map(|(&i, &v)| v * x[i as usize]).sum()
    }
}

#[derive(Debug, Clone)]
pub struct QpResult {
    pub status: QpStatus,
    /// Optimal point (meaningful for `Optimal`).
    pub x: Vec<f64>,
    /// `1/2 x' H x + c' x` at the returned point.
    pub objective: f64,
    /// Lagrange multipliers per row (nonnegative, complementary).
    pub multipliers: Vec<f64>,
    /// Indices of rows active at the solution.
    pub active: Vec<usize>,
    /// For `Infeasible`: nonnegative row weights with `A' f = 0` and
    /// `rhs' f < 0`, proving emptiness.
    pub farkas: Option<Vec<f64>>,
    pub iterations: usize,
    /// Largest normalized constraint violation at the returned point.
    pub max_violation: f64,
    /// Norm of the stationarity residual `H x + c + A' lambda`.
    pub stationarity: f64,
}

/// Solve the QP. Errors only on malformed input or a numerical breakdown;
/// infeasibility is a normal outcome carrying a certificate.
pub fn qp_solve(p: &QpProblem) -> Result<QpResult> {
    let n = p.n_vars();
    let m = p.n_rows();
    if p.c.len() != n {
        return Err(Error::ShapeMismatch(format!("h has {} entries, c has {}", n, p.c.len())));
    }
    for (i, &hi) in p.h.iter().enumerate() {
        if !(hi > 0.0) || !hi.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "Hessian diagonal entry {i} not positive: {hi}"
            )));
        }
    }

    // Unconstrained minimum; J = H^{-1/2} stored by columns, orthogonally
    // updated so its trailing columns span the null space of the active set.
    let mut x: Vec<f64> = p.c.iter().zip(&p.h).map(|(c, h)| -c / h).collect();
    let mut jmat = vec![0.0; n * n];
    for i in 0..n {
        jmat[i * n + i] = 1.0 / p.h[i].sqrt();
    }
    let rcap = n.min(m);
    let mut rmat = vec![0.0; rcap * (rcap + 1) / 2];
    let mut active: Vec<usize> = Vec::with_capacity(rcap);
    let mut in_active = vec![false; m];
    let mut mult: Vec<f64> = Vec::with_capacity(rcap);

    let mut d = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut iterations = 0usize;
    let max_iterations = 500 + 100 * (n + m);

    'outer: loop {
        // most violated row (rows are unit-norm)
        let mut pick = usize::MAX;
        let mut worst = FEAS_TOL;
        for k in 0..m {
            if in_active[k] {
                continue;
            }
            let viol = p.row_dot(k, &x) - p.rhs[k];
            if viol > worst {
                worst = viol;
                pick = k;
            }
        }
        if pick == usize::MAX {
            break 'outer;
        }

        let (ap_idx, ap_val) = p.row(pick);
        let mut u_new = 0.0f64;
        // slack in >= form for the internal normal np = -a
        let mut slack = -(p.row_dot(pick, &x) - p.rhs[pick]);

        loop {
            iterations += 1;
            if iterations > max_iterations {
                return Err(Error::NumericalFailure(format!(
                    "active-set iteration limit {max_iterations} exceeded"
                )));
            }
            // d = J^T np
            for (di, col) in d.iter_mut().zip(jmat.chunks_exact(n)) {
                *di = -ap_idx.iter().zip(ap_val).map(|(&k, &v)| v * col[k as usize]).sum::<f64>();
            }
            let q = active.len();
            // z = J2 d2: step direction in primal space
            z.fill(0.0);
            for i in q..n {
                let di = d[i];
                if di != 0.0 {
                    let col = &jmat[i * n..i * n + n];
                    for (zj, cj) in z.iter_mut().zip(col) {
                        *zj += di * cj;
                    }
                }
            }
            // r = R^{-1} d1: rate of change of the active multipliers
            let mut r = d[..q].to_vec();
            for i in (0..q).rev() {
                let start = i * (i + 1) / 2;
                r[i] /= rmat[start + i];
                let ri = r[i];
                for jj in 0..i {
                    r[jj] -= ri * rmat[start + jj];
                }
            }

            let mut t1 = f64::INFINITY;
            let mut idel = usize::MAX;
            for (i, (&ui, &ri)) in mult.iter().zip(&r).enumerate() {
                if ri > 0.0 {
                    let t = ui / ri;
                    if t < t1 {
                        t1 = t;
                        idel = i;
                    }
                }
            }
            let znorm2: f64 = z.iter().map(|v| v * v).sum();
            let (_ztn, t2) = if znorm2 <= f64::EPSILON * f64::EPSILON {
                (0.0, f64::INFINITY)
            } else {
                let ztn: f64 = -ap_idx.iter().zip(ap_val).map(|(&k, &v)| v * z[k as usize]).sum::<f64>();
                if ztn <= 0.0 {
                    (ztn, f64::INFINITY)
                } else {
                    (ztn, -slack / ztn)
                }
            };

            if !t1.is_finite() && !t2.is_finite() {
                // np is a nonpositive combination of active normals while the
                // row stays violated: assemble the Farkas weights
                let mut f = vec![0.0; m];
                f[pick] = 1.0;
                for (i, &k) in active.iter().enumerate() {
                    f[k] = (-r[i]).max(0.0);
                }
                return Ok(QpResult {
                    status: QpStatus::Infeasible,
                    x,
                    objective: f64::INFINITY,
                    multipliers: vec![0.0; m],
                    active,
                    farkas: Some(f),
                    iterations,
                    max_violation: worst,
                    stationarity: 0.0,
                });
            }

            let step = t1.min(t2);
            if step.is_finite() && step != 0.0 {
                for (xi, zi) in x.iter_mut().zip(&z) {
                    *xi += step * zi;
                }
            }
            for (ui, ri) in mult.iter_mut().zip(&r) {
                *ui -= step * ri;
            }
            u_new += step;

            if t2 <= t1 {
                // full step: activate the row and extend the factorization
                active.push(pick);
                in_active[pick] = true;
                mult.push(u_new);
                let qn = active.len();
                debug_assert!(qn <= rcap);
                for i in (qn..n).rev() {
                    if d[i] == 0.0 {
                        continue;
                    }
                    let (h, gc, gs) = givens(d[i - 1], d[i]);
                    let nu = gs / (1.0 + gc);
                    d[i - 1] = h;
                    let (lo, hi) = jmat.split_at_mut(i * n);
                    let left = &mut lo[(i - 1) * n..];
                    let right = &mut hi[..n];
                    for (l, rr) in left.iter_mut().zip(right.iter_mut()) {
                        let t = gc * *l + gs * *rr;
                        *rr = nu * (*l + t) - *rr;
                        *l = t;
                    }
                }
                let start = qn * (qn - 1) / 2;
                rmat[start..start + qn].copy_from_slice(&d[..qn]);
                break;
            }

            // partial step: drop the blocking active row and retry
            drop_active(idel, &mut jmat, &mut rmat, n, active.len());
            in_active[active[idel]] = false;
            active.remove(idel);
            mult.remove(idel);
            slack = -(p.row_dot(pick, &x) - p.rhs[pick]);
        }
    }

    let mut multipliers = vec![0.0; m];
    for (&k, &u) in active.iter().zip(&mult) {
        multipliers[k] = u;
    }
    let mut max_violation = 0.0f64;
    for k in 0..m {
        max_violation = max_violation.max(p.row_dot(k, &x) - p.rhs[k]);
    }
    let mut grad: Vec<f64> = (0..n).map(|i| p.h[i] * x[i] + p.c[i]).collect();
    for (k, &lam) in multipliers.iter().enumerate() {
        if lam != 0.0 {
            let (idx, val) = p.row(k);
            for (&i, &v) in idx.iter().zip(val) {
                grad[i as usize] += lam * v;
            }
        }
    }
    let stationarity = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let objective =
        0.5 * x.iter().zip(&p.h).map(|(xi, h)| h * xi * xi).sum::<f64>()
            + p.c.iter().zip(&x).map(|(c, xi)| c * xi).sum::<f64>();
    Ok(QpResult {
        status: QpStatus::Optimal,
        x,
        objective,
        multipliers,
        active,
        farkas: None,
        iterations,
        max_violation,
        stationarity,
    })
}

/// Stable Givens pair zeroing `b` against `a`: returns `(h, c, s)` with
/// `h = +/- hypot(a, b)` carrying the sign of `a`, `c a + s b = h`, `c >= 0`.
fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        return (a, 1.0, 0.0);
    }
    let h = a.hypot(b).copysign(if a != 0.0 { a } else { b });
    (h, a / h, b / h)
}

/// Remove active column `idel`, restoring R to triangular form and applying
/// the same rotations to the columns of J.
fn drop_active(idel: usize, jmat: &mut [f64], rmat: &mut [f64], n: usize, q: usize) {
    for i in (idel + 1)..q {
        // zero R's (i, i) entry against (i-1, i), then shift column i left
        let di = i * (i + 1) / 2;
        let l = di + i;
        if rmat[l] != 0.0 {
            let (_h, gc, gs) = givens(rmat[l - 1], rmat[l]);
            let nu = gs / (1.0 + gc);
            let mut ind = l;
            for j in (i + 1)..=q {
                let t = gc * rmat[ind - 1] + gs * rmat[ind];
                rmat[ind] = nu * (rmat[ind - 1] + t) - rmat[ind];
                rmat[ind - 1] = t;
                ind += j;
            }
            let (lo, hi) = jmat.split_at_mut(i * n);
            let left = &mut lo[(i - 1) * n..];
            let right = &mut hi[..n];
            for (lv, rv) in left.iter_mut().zip(right.iter_mut()) {
                let t = gc * *lv + gs * *rv;
                *rv = nu * (*lv + t) - *rv;
                *lv = t;
            }
        }
        let (pre, post) = rmat.split_at_mut(di);
        post[..i].swap_with_slice(&mut pre[di - i..]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn solve(h: &[f64], c: &[f64], rows: &[&[f64]], rhs: &[f64]) -> QpResult {
        let mut p = QpProblem::new(h.to_vec(), c.to_vec());
        for (row, &b) in rows.iter().zip(rhs) {
            let entries: Vec<(usize, f64)> =
                row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, &v)| (i, v)).collect();
            p.push_row(&entries, b);
        }
        qp_solve(&p).unwrap()
    }

    #[test]
    fn univariate_clamp() {
        // minimize (1 - x)^2 subject to x <= 0.5
        let r = solve(&[2.0], &[-2.0], &[&[1.0]], &[0.5]);
        assert_eq!(r.status, QpStatus::Optimal);
        assert!((r.x[0] - 0.5).abs() < 1e-12);
        assert!(((1.0 - r.x[0]).powi(2) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn projection_onto_heading_half_plane() {
        // minimize (1 - dx)^2 + dy^2 subject to dy >= dx tan(30 deg)
        let t = (std::f64::consts::FRAC_PI_6).tan();
        let r = solve(&[2.0, 2.0], &[-2.0, 0.0], &[&[t, -1.0]], &[0.0]);
        assert_eq!(r.status, QpStatus::Optimal);
        assert!((r.x[0] - 0.75).abs() < 1e-9, "dx = {}", r.x[0]);
        assert!((r.x[1] - 0.433_012_701_892_219_3).abs() < 1e-9, "dy = {}", r.x[1]);
        let obj = (1.0 - r.x[0]).powi(2) + r.x[1].powi(2);
        assert!((obj - 0.25).abs() < 1e-9);
    }

    #[test]
    fn contradictory_bounds_give_certificate() {
        // x >= 1 and x <= 0
        let r = solve(&[1.0], &[0.0], &[&[-1.0], &[1.0]], &[-1.0, 0.0]);
        assert_eq!(r.status, QpStatus::Infeasible);
        let f = r.farkas.unwrap();
        assert!(f.iter().all(|&v| v >= 0.0));
        assert!((f[0] * -1.0 + f[1] * 1.0).abs() < 1e-9);
        assert!(f[0] * -1.0 + f[1] * 0.0 < -1e-9);
    }

    #[test]
    fn unconstrained_minimum_when_interior() {
        let r = solve(&[2.0, 4.0], &[-2.0, -4.0], &[&[1.0, 0.0]], &[100.0]);
        assert_eq!(r.status, QpStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-12);
        assert!((r.x[1] - 1.0).abs() < 1e-12);
        assert!(r.active.is_empty());
    }

    #[test]
    fn equal_bounds_pin_a_variable() {
        // x0 = 0.7 via two opposing rows, free x1
        let r = solve(
            &[2.0, 2.0],
            &[-2.0, -2.0],
            &[&[1.0, 0.0], &[-1.0, 0.0]],
            &[0.7, -0.7],
        );
        assert_eq!(r.status, QpStatus::Optimal);
        assert!((r.x[0] - 0.7).abs() < 1e-10);
        assert!((r.x[1] - 1.0).abs() < 1e-10);
    }

    /// Exhaustive KKT oracle: try every subset of rows as the active set,
    /// solve the equality-constrained problem by elimination, keep the best
    /// feasible point with nonnegative multipliers.
    fn brute_force(h: &[f64], c: &[f64], rows: &[Vec<f64>], rhs: &[f64]) -> Option<(Vec<f64>, f64)> {
        let n = h.len();
        let m = rows.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut best: Option<(Vec<f64>, f64)> = None;
        for mask in 0..(1usize << m) {
            let act: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
            if act.len() > n {
                continue;
            }
            let q = act.len();
            let mut s = vec![0.0; q * q];
            let mut t = vec![0.0; q];
            for (ii, &ki) in act.iter().enumerate() {
                for (jj, &kj) in act.iter().enumerate() {
                    s[ii * q + jj] = (0..n).map(|v| rows[ki][v] * rows[kj][v] / h[v]).sum::<f64>();
                }
                t[ii] = -rhs[ki] - (0..n).map(|v| rows[ki][v] * c[v] / h[v]).sum::<f64>();
            }
            let mut lam = t.clone();
            let mut a = s.clone();
            let mut ok = true;
            for col in 0..q {
                let mut piv = col;
                for rr in col + 1..q {
                    if a[rr * q + col].abs() > a[piv * q + col].abs() {
                        piv = rr;
                    }
                }
                if a[piv * q + col].abs() < 1e-12 {
                    ok = false;
                    break;
                }
                for cc in 0..q {
                    a.swap(col * q + cc, piv * q + cc);
                }
                lam.swap(col, piv);
                let pv = a[col * q + col];
                for rr in 0..q {
                    if rr != col && a[rr * q + col] != 0.0 {
                        let f = a[rr * q + col] / pv;
                        for cc in 0..q {
                            a[rr * q + cc] -= f * a[col * q + cc];
                        }
                        lam[rr] -= f * lam[col];
                    }
                }
            }
            if !ok {
                continue;
            }
            for col in 0..q {
                lam[col] /= a[col * q + col];
            }
            if lam.iter().any(|&l| l < -1e-9) {
                continue;
            }
            let mut x = vec![0.0; n];
            for v in 0..n {
                let mut g = c[v];
                for (ii, &k) in act.iter().enumerate() {
                    g += lam[ii] * rows[k][v];
                }
                x[v] = -g / h[v];
            }
            if (0..m).any(|k| dot(&rows[k], &x) > rhs[k] + 1e-7) {
                continue;
            }
            let obj = 0.5 * (0..n).map(|v| h[v] * x[v] * x[v]).sum::<f64>() + dot(c, &x);
            if best.as_ref().map_or(true, |(_, b)| obj < *b - 1e-12) {
                best = Some((x, obj));
            }
        }
        best
    }

    #[test]
    fn agrees_with_brute_force_on_random_problems() {
        let mut rng = SplitMix64::new(101);
        let mut solved = 0;
        let mut infeasible = 0;
        for _ in 0..400 {
            let n = 2 + (rng.next_u64() % 3) as usize;
            let m = 1 + (rng.next_u64() % 6) as usize;
            let h: Vec<f64> = (0..n).map(|_| rng.uniform(0.1, 4.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let rows: Vec<Vec<f64>> =
                (0..m).map(|_| (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect()).collect();
            let rhs: Vec<f64> = (0..m).map(|_| rng.uniform(-1.5, 2.0)).collect();
            let mut p = QpProblem::new(h.clone(), c.clone());
            for (row, &b) in rows.iter().zip(&rhs) {
                let entries: Vec<(usize, f64)> = row.iter().copied().enumerate().collect();
                p.push_row(&entries, b);
            }
            let got = qp_solve(&p).unwrap();
            // the oracle works on the normalized rows the solver saw
            let norm_rows: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    let nn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                    r.iter().map(|v| v / nn).collect()
                })
                .collect();
            let norm_rhs: Vec<f64> = rows
                .iter()
                .zip(&rhs)
                .map(|(r, b)| b / r.iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect();
            let want = brute_force(&h, &c, &norm_rows, &norm_rhs);
            match (got.status, want) {
                (QpStatus::Optimal, Some((_, wobj))) => {
                    assert!(
                        (got.objective - wobj).abs() < 1e-6 * (1.0 + wobj.abs()),
                        "objective {} vs oracle {wobj}",
                        got.objective
                    );
                    assert!(got.max_violation < 1e-7);
                    assert!(got.stationarity < 1e-5);
                    solved += 1;
                }
                (QpStatus::Infeasible, None) => {
                    let f = got.farkas.as_ref().unwrap();
                    assert!(f.iter().all(|&v| v >= -1e-12));
                    for v in 0..n {
                        let s: f64 = (0..m).map(|k| f[k] * norm_rows[k][v]).sum();
                        assert!(s.abs() < 1e-6, "A'f component {s}");
                    }
                    let b: f64 = (0..m).map(|k| f[k] * norm_rhs[k]).sum();
                    assert!(b < 1e-9);
                    infeasible += 1;
                }
                (QpStatus::Optimal, None) => {
                    assert!(got.max_violation < 1e-7);
                    assert!(got.stationarity < 1e-5);
                }
                (QpStatus::Infeasible, Some((_, wobj))) => {
                    panic!("solver claims infeasible but oracle found objective {wobj}");
                }
            }
        }
        assert!(solved > 100, "too few optimal cases exercised: {solved}");
        assert!(infeasible > 10, "too few infeasible cases exercised: {infeasible}");
    }
}
