//! Fixed-format MPS export for debugging assignment programs.

use std::fmt::Write as _;

use super::{LinearProgram, Sense, VarKind};

fn col_name(j: usize) -> String {
    format!("C{j:07}")
}

fn row_name(r: usize) -> String {
    format!("R{r:07}")
}

fn num(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 12 {
        s
    } else {
        format!("{v:.6e}")
    }
}

/// Renders the program in fixed-column MPS. Names are limited to eight
/// characters, so columns are numbered and a comment block maps them back to
/// their `(kind, i, j)` keys.
pub fn write_mps(lp: &LinearProgram, name: &str) -> String {
    let mut out = String::new();
    let name: String = name.chars().take(8).collect();
    let _ = writeln!(out, "NAME          {name}");
    for (j, v) in lp.vars().iter().enumerate() {
        let kind = match v.key.kind {
            VarKind::Assign => "S",
            VarKind::GammaPlus => "GAMMA+",
            VarKind::GammaMinus => "GAMMA-",
            VarKind::Aux => "AUX",
        };
        let _ = writeln!(out, "* {} = {kind}({}, {})", col_name(j), v.key.i, v.key.j);
    }
    out.push_str("ROWS\n");
    out.push_str(" N  COST\n");
    for (r, row) in lp.rows().iter().enumerate() {
        let t = match row.sense {
            Sense::Eq => 'E',
            Sense::Le => 'L',
            Sense::Ge => 'G',
        };
        let _ = writeln!(out, " {t}  {}", row_name(r));
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.n_vars()];
    for (r, row) in lp.rows().iter().enumerate() {
        for &(v, a) in &row.terms {
            by_col[v].push((r, a));
        }
    }
    out.push_str("COLUMNS\n");
    for (j, v) in lp.vars().iter().enumerate() {
        let mut entries: Vec<(String, f64)> = Vec::new();
        if v.cost != 0.0 {
            entries.push(("COST".to_string(), v.cost));
        }
        entries.extend(by_col[j].iter().map(|&(r, a)| (row_name(r), a)));
        for (rname, a) in entries {
            let _ = writeln!(out, "    {:<8}  {:<8}  {:>12}", col_name(j), rname, num(a));
        }
    }
    out.push_str("RHS\n");
    for (r, row) in lp.rows().iter().enumerate() {
        if row.rhs != 0.0 {
            let _ = writeln!(out, "    {:<8}  {:<8}  {:>12}", "RHS", row_name(r), num(row.rhs));
        }
    }
    out.push_str("BOUNDS\n");
    for (j, v) in lp.vars().iter().enumerate() {
        let c = col_name(j);
        match (v.lower, v.upper) {
            (l, u) if l == u => {
                let _ = writeln!(out, " FX {:<8}  {:<8}  {:>12}", "BND", c, num(l));
            }
            (f64::NEG_INFINITY, f64::INFINITY) => {
                let _ = writeln!(out, " FR {:<8}  {c:<8}", "BND");
            }
            (l, u) => {
                if l == f64::NEG_INFINITY {
                    let _ = writeln!(out, " MI {:<8}  {c:<8}", "BND");
                } else if l != 0.0 {
                    let _ = writeln!(out, " LO {:<8}  {:<8}  {:>12}", "BND", c, num(l));
                }
                if u.is_finite() {
                    let _ = writeln!(out, " UP {:<8}  {:<8}  {:>12}", "BND", c, num(u));
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}
