//! Flat JSON export of a model for debugging and cross-implementation tests.
//!
//! Schema (`deconflict-model/1`):
//!
//! ```text
//! {
//!   "schema": "deconflict-model/1",
//!   "instance_id": str, "d": num, "gamma": num?, "eps": [[ex, ey], ...]?,
//!   "variables":  [{ "name", "lo", "hi", "binary"? }],
//!   "objective":  { "quadratic_diag": [[name, h]], "linear": [[name, c]], "constant": num },
//!   "linear_constraints":    [{ "name", "terms": [[name, coef]], "sense", "rhs" }],
//!   "indicator_constraints": [{ "pair": [i, j], "z", "name", "terms", "sense", "rhs", "big_m"? }],
//!   "quadratic_constraints": [{ "name", "vars": [name], "sense", "rhs" }]
//! }
//! ```
//!
//! Senses are `"<="` or `">="`. Indicator rows hold when the pair binary
//! equals `z`; with `include_big_m` each such row carries a constant that
//! relaxes it over the pair's velocity box, so the file can be fed to plain
//! big-M MILP/MIQCP tooling.

use serde_json::{json, Map, Value};

use super::{ModelIr, PairRow, RowKind, SupportForm};
use crate::model::{budget_protection, velocity_magnitude_bounds};

fn dx(i: usize) -> String {
    format!("delta_x[{i}]")
}

fn dy(i: usize) -> String {
    format!("delta_y[{i}]")
}

fn kind_tag(k: RowKind) -> &'static str {
    match k {
        RowKind::Side => "side",
        RowKind::Cone => "cone",
    }
}

/// Coefficients of `row` applied to the pair's relative velocity, expanded
/// over the four control-vector variables of the pair.
fn expand_row(ir: &ModelIr, i: usize, j: usize, row: &PairRow) -> Vec<(String, f64)> {
    let mi = &ir.velocity_maps[i].m;
    let mj = &ir.velocity_maps[j].m;
    vec![
        (dx(i), row.cx * mi[0][0] + row.cy * mi[1][0]),
        (dy(i), row.cx * mi[0][1] + row.cy * mi[1][1]),
        (dx(j), -(row.cx * mj[0][0] + row.cy * mj[1][0])),
        (dy(j), -(row.cx * mj[0][1] + row.cy * mj[1][1])),
    ]
}

fn terms_json(terms: &[(String, f64)]) -> Value {
    Value::Array(terms.iter().map(|(n, c)| json!([n, c])).collect())
}

fn row_json(name: String, terms: &[(String, f64)], sense: &str, rhs: f64) -> Value {
    json!({ "name": name, "terms": terms_json(terms), "sense": sense, "rhs": rhs })
}

/// Serialize a model to the documented JSON schema.
pub fn model_to_json(ir: &ModelIr, include_big_m: bool) -> Value {
    let n = ir.n_aircraft();
    let w = ir.control.w;

    let mut variables = Vec::new();
    for i in 0..n {
        variables.push(json!({ "name": dx(i), "lo": ir.delta.x_lo, "hi": ir.delta.x_hi }));
        variables.push(json!({ "name": dy(i), "lo": ir.delta.y_lo, "hi": ir.delta.y_hi }));
    }
    for p in &ir.pairs {
        variables.push(json!({ "name": format!("z[{},{}]", p.i, p.j), "lo": 0.0, "hi": 1.0, "binary": true }));
    }

    let mut quad = Vec::new();
    let mut lin = Vec::new();
    for i in 0..n {
        quad.push(json!([dx(i), 1.0 - w]));
        quad.push(json!([dy(i), w]));
        lin.push(json!([dx(i), -2.0 * (1.0 - w)]));
    }
    let objective = json!({
        "quadratic_diag": quad,
        "linear": lin,
        "constant": (1.0 - w) * n as f64,
    });

    let mut linear_constraints = Vec::new();
    let (tan_lo, tan_hi) = ir.cone;
    for i in 0..n {
        linear_constraints.push(row_json(
            format!("cone_lo[{i}]"),
            &[(dy(i), 1.0), (dx(i), -tan_lo)],
            ">=",
            0.0,
        ));
        linear_constraints.push(row_json(
            format!("cone_hi[{i}]"),
            &[(dy(i), 1.0), (dx(i), -tan_hi)],
            "<=",
            0.0,
        ));
    }
    // redundant valid bounds: the relative-velocity box of each pair
    for p in &ir.pairs {
        let unit_x = PairRow { kind: RowKind::Side, cx: 1.0, cy: 0.0 };
        let unit_y = PairRow { kind: RowKind::Side, cx: 0.0, cy: 1.0 };
        let tx = expand_row(ir, p.i, p.j, &unit_x);
        let ty = expand_row(ir, p.i, p.j, &unit_y);
        let tag = format!("[{},{}]", p.i, p.j);
        linear_constraints.push(row_json(format!("vbox_x_hi{tag}"), &tx, "<=", p.vbox.vx_hi));
        linear_constraints.push(row_json(format!("vbox_x_lo{tag}"), &tx, ">=", p.vbox.vx_lo));
        linear_constraints.push(row_json(format!("vbox_y_hi{tag}"), &ty, "<=", p.vbox.vy_hi));
        linear_constraints.push(row_json(format!("vbox_y_lo{tag}"), &ty, ">=", p.vbox.vy_lo));
    }

    let mut indicator_constraints = Vec::new();
    // worst-case magnitudes used for big-M derivation and nu bounds
    let mags: Vec<(f64, f64)> =
        ir.aircraft.iter().map(|a| velocity_magnitude_bounds(a, &ir.control)).collect();

    for p in &ir.pairs {
        for g in &p.groups {
            for row in &g.rows {
                let mut terms = expand_row(ir, p.i, p.j, row);
                let mut name = format!("{}[{},{}]", kind_tag(row.kind), p.i, p.j);
                if let Some(rb) = &ir.robust {
                    name = format!("protected_{name}");
                    let psi = format!("psi[{},{}][{}][{}]", p.i, p.j, kind_tag(row.kind), g.z);
                    terms.push((psi.clone(), rb.gamma));
                    for l in [p.i, p.j] {
                        for axis in ["x", "y"] {
                            terms.push((
                                format!(
                                    "rho[{},{}][{}][{}][{l}][{axis}]",
                                    p.i, p.j, kind_tag(row.kind), g.z
                                ),
                                1.0,
                            ));
                        }
                    }
                }
                let mut obj = Map::new();
                obj.insert("pair".into(), json!([p.i, p.j]));
                obj.insert("z".into(), json!(g.z));
                obj.insert("name".into(), Value::String(name));
                obj.insert("terms".into(), terms_json(&terms));
                obj.insert("sense".into(), Value::String("<=".into()));
                obj.insert("rhs".into(), json!(0.0));
                if include_big_m {
                    // row value over the velocity box, plus worst protection
                    let hi_x = if row.cx >= 0.0 { p.vbox.vx_hi } else { p.vbox.vx_lo };
                    let hi_y = if row.cy >= 0.0 { p.vbox.vy_hi } else { p.vbox.vy_lo };
                    let mut m = row.cx * hi_x + row.cy * hi_y;
                    if let Some(rb) = &ir.robust {
                        let terms = super::row_deviation_terms(
                            row,
                            mags[p.i],
                            mags[p.j],
                            rb.eps[p.i],
                            rb.eps[p.j],
                        );
                        m += budget_protection(rb.gamma, &terms);
                    }
                    obj.insert("big_m".into(), json!(m.max(0.0)));
                }
                indicator_constraints.push(Value::Object(obj));
            }
        }
    }

    if let Some(rb) = &ir.robust {
        // nu variables, their link rows and the indicator-linked support rows
        for i in 0..n {
            for (axis, mag) in [("x", mags[i].0), ("y", mags[i].1)] {
                variables.push(json!({ "name": format!("nu_{axis}[{i}]"), "lo": 0.0, "hi": mag }));
            }
            let vi_x = [(dx(i), ir.velocity_maps[i].m[0][0]), (dy(i), ir.velocity_maps[i].m[0][1])];
            let vi_y = [(dx(i), ir.velocity_maps[i].m[1][0]), (dy(i), ir.velocity_maps[i].m[1][1])];
            for (axis, vrow) in [("x", vi_x), ("y", vi_y)] {
                let mut up = vrow.to_vec();
                up.push((format!("nu_{axis}[{i}]"), -1.0));
                linear_constraints.push(row_json(format!("nu_{axis}_hi[{i}]"), &up, "<=", 0.0));
                let mut lo: Vec<(String, f64)> = vrow.iter().map(|(v, c)| (v.clone(), -c)).collect();
                lo.push((format!("nu_{axis}[{i}]"), -1.0));
                linear_constraints.push(row_json(format!("nu_{axis}_lo[{i}]"), &lo, "<=", 0.0));
            }
        }
        for p in &ir.pairs {
            for g in &p.groups {
                for row in &g.rows {
                    let k = kind_tag(row.kind);
                    let psi = format!("psi[{},{}][{k}][{}]", p.i, p.j, g.z);
                    variables.push(json!({ "name": psi, "lo": 0.0 }));
                    for l in [p.i, p.j] {
                        for (axis, coef, eps) in [
                            ("x", row.cx.abs(), rb.eps[l][0]),
                            ("y", row.cy.abs(), rb.eps[l][1]),
                        ] {
                            let rho = format!("rho[{},{}][{k}][{}][{l}][{axis}]", p.i, p.j, g.z);
                            variables.push(json!({ "name": rho, "lo": 0.0 }));
                            // psi + rho >= scale * nu
                            let (nu_owner, scale) = match rb.support_form {
                                SupportForm::Coefficient => (l, coef * eps),
                                SupportForm::AsPrinted => {
                                    (p.i, if axis == "x" { rb.eps[p.i][0] } else { rb.eps[p.i][1] })
                                }
                            };
                            let terms = vec![
                                (psi.clone(), 1.0),
                                (rho.clone(), 1.0),
                                (format!("nu_{axis}[{nu_owner}]"), -scale),
                            ];
                            indicator_constraints.push(json!({
                                "pair": [p.i, p.j],
                                "z": g.z,
                                "name": format!("support_{k}[{},{}][{}][{l}][{axis}]", p.i, p.j, g.z),
                                "terms": terms_json(&terms),
                                "sense": ">=",
                                "rhs": 0.0,
                            }));
                        }
                    }
                }
            }
        }
    }

    let mut quadratic_constraints = Vec::new();
    for i in 0..n {
        quadratic_constraints.push(json!({
            "name": format!("speed_cap[{i}]"),
            "vars": [dx(i), dy(i)],
            "sense": "<=",
            "rhs": ir.control.q_hi * ir.control.q_hi,
        }));
        quadratic_constraints.push(json!({
            "name": format!("speed_floor[{i}]"),
            "vars": [dx(i), dy(i)],
            "sense": ">=",
            "rhs": ir.control.q_lo * ir.control.q_lo,
        }));
    }

    let mut root = Map::new();
    root.insert("schema".into(), json!("deconflict-model/1"));
    root.insert("instance_id".into(), json!(ir.instance_id));
    root.insert("d".into(), json!(ir.d));
    if let Some(rb) = &ir.robust {
        root.insert("gamma".into(), json!(rb.gamma));
        root.insert("eps".into(), json!(rb.eps));
    }
    root.insert("variables".into(), Value::Array(variables));
    root.insert("objective".into(), objective);
    root.insert("linear_constraints".into(), Value::Array(linear_constraints));
    root.insert("indicator_constraints".into(), Value::Array(indicator_constraints));
    root.insert("quadratic_constraints".into(), Value::Array(quadratic_constraints));
    Value::Object(root)
}
