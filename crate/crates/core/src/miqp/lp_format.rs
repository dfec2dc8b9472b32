//! CPLEX-style LP text for a [`BinaryProgram`], plus a reader for the subset we write.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::miqp::program::{BinaryProgram, Sense};

const LINE_WIDTH: usize = 78;

/// Column order in the file: users sorted by id, phases 1..3, auxiliaries last.
fn column_order(prog: &BinaryProgram) -> Vec<usize> {
    let mut slots: Vec<usize> = (0..prog.n_slots()).collect();
    slots.sort_by(|&a, &b| prog.slot_ids[a].cmp(&prog.slot_ids[b]).then(a.cmp(&b)));
    let mut cols: Vec<usize> = slots.iter().flat_map(|&s| (0..3).map(move |p| 3 * s + p)).collect();
    cols.extend(prog.n_binaries()..prog.n_vars());
    cols
}

fn push_term(out: &mut Vec<String>, coef: f64, body: &str, first: bool) {
    let sign = if coef < 0.0 { "-" } else { "+" };
    let mag = coef.abs();
    let text = if mag == 1.0 && !body.is_empty() {
        format!("{sign} {body}")
    } else if body.is_empty() {
        format!("{sign} {mag}")
    } else {
        format!("{sign} {mag} {body}")
    };
    if first && sign == "+" {
        out.push(text[2..].to_string());
    } else {
        out.push(text);
    }
}

fn wrap(head: &str, terms: &[String], tail: &str) -> String {
    let mut s = String::new();
    let mut line = head.to_string();
    for t in terms.iter().map(String::as_str).chain((!tail.is_empty()).then_some(tail)) {
        if line.len() + 1 + t.len() > LINE_WIDTH && !line.trim().is_empty() {
            s.push_str(&line);
            s.push('\n');
            line = String::from("  ");
        } else if !line.ends_with(' ') && !line.is_empty() {
            line.push(' ');
        }
        line.push_str(t);
    }
    s.push_str(&line);
    s.push('\n');
    s
}

/// Renders the program as LP text.
pub fn lp_string(prog: &BinaryProgram) -> String {
    let order = column_order(prog);
    let names: Vec<String> = (0..prog.n_vars()).map(|j| prog.var_name(j)).collect();
    let mut out = String::new();
    let _ = writeln!(out, "\\ {} over {} users, switching budget {}", prog.metric, prog.n_slots(), prog.delta_max);
    out.push_str("Minimize\n");

    let mut terms = Vec::new();
    for &j in &order {
        let c = prog.objective.linear[j];
        if c != 0.0 {
            let first = terms.is_empty();
            push_term(&mut terms, c, &names[j], first);
        }
    }
    if let Some(q) = &prog.objective.quadratic {
        let mut quad = Vec::new();
        for (a, &i) in order.iter().enumerate() {
            if i >= prog.n_binaries() {
                continue;
            }
            let d = q[(i, i)];
            if d != 0.0 {
                let first = quad.is_empty();
                push_term(&mut quad, 2.0 * d, &format!("{} ^ 2", names[i]), first);
            }
            for &j in order[a + 1..].iter().filter(|&&j| j < prog.n_binaries()) {
                let v = q[(i, j)] + q[(j, i)];
                if v != 0.0 {
                    let first = quad.is_empty();
                    push_term(&mut quad, 2.0 * v, &format!("{} * {}", names[i], names[j]), first);
                }
            }
        }
        if !quad.is_empty() {
            terms.push(if terms.is_empty() { "[".into() } else { "+ [".into() });
            terms.extend(quad);
            terms.push("] / 2".into());
        }
    }
    if prog.objective.constant != 0.0 || terms.is_empty() {
        let first = terms.is_empty();
        push_term(&mut terms, prog.objective.constant, "", first);
    }
    out.push_str(&wrap(" obj:", &terms, ""));

    out.push_str("Subject To\n");
    let rank: BTreeMap<usize, usize> = order.iter().enumerate().map(|(k, &j)| (j, k)).collect();
    for row in &prog.rows {
        let mut coeffs = row.coeffs.clone();
        coeffs.sort_by_key(|&(j, _)| rank[&j]);
        let mut terms = Vec::new();
        for (j, a) in coeffs {
            let first = terms.is_empty();
            push_term(&mut terms, a, &names[j], first);
        }
        if terms.is_empty() {
            if let Some(first) = names.first() {
                terms.push(format!("0 {first}"));
            }
        }
        let tail = format!("{} {}", row.sense.symbol(), row.rhs);
        out.push_str(&wrap(&format!(" {}:", row.name), &terms, &tail));
    }

    out.push_str("Bounds\n");
    for j in prog.n_binaries()..prog.n_vars() {
        let _ = writeln!(out, " {} >= 0", names[j]);
    }
    out.push_str("Binaries\n");
    let bins: Vec<String> = order.iter().filter(|&&j| j < prog.n_binaries()).map(|&j| names[j].clone()).collect();
    if !bins.is_empty() {
        out.push_str(&wrap("", &bins, ""));
    }
    out.push_str("End\n");
    out
}

pub fn write_lp<W: Write>(prog: &BinaryProgram, mut w: W) -> std::io::Result<()> {
    w.write_all(lp_string(prog).as_bytes())?;
    w.flush()
}

pub fn export_lp(prog: &BinaryProgram, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_lp(prog, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpConstraint {
    pub name: String,
    pub coeffs: BTreeMap<String, f64>,
    pub sense: Option<Sense>,
    pub rhs: f64,
}

/// Parsed form of an LP file. Quadratic keys are ordered variable pairs; the
/// objective is `linear·x + Σ quadratic[(a, b)]·a·b + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpModel {
    pub linear: BTreeMap<String, f64>,
    pub quadratic: BTreeMap<(String, String), f64>,
    pub constant: f64,
    pub constraints: Vec<LpConstraint>,
    pub lower_bounds: BTreeMap<String, f64>,
    pub binaries: Vec<String>,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(format!("LP: {}", msg.into()))
}

fn num(tok: &str) -> Option<f64> {
    tok.parse::<f64>().ok()
}

/// Parses `[sign] [coef] var [^ 2 | * var]` runs and `[ ... ] / 2` groups.
fn parse_expr(
    tokens: &[&str],
    model_lin: &mut BTreeMap<String, f64>,
    quad: &mut BTreeMap<(String, String), f64>,
) -> Result<f64> {
    let mut constant = 0.0;
    let mut i = 0;
    let mut in_bracket = false;
    let mut bracket_terms: Vec<((String, String), f64)> = Vec::new();
    while i < tokens.len() {
        let mut sign = 1.0;
        while i < tokens.len() && (tokens[i] == "+" || tokens[i] == "-") {
            if tokens[i] == "-" {
                sign = -sign;
            }
            i += 1;
        }
        if i >= tokens.len() {
            return Err(parse_err("dangling sign"));
        }
        if tokens[i] == "[" {
            in_bracket = true;
            i += 1;
            continue;
        }
        if tokens[i] == "]" {
            if tokens.get(i + 1) != Some(&"/") || tokens.get(i + 2) != Some(&"2") {
                return Err(parse_err("quadratic group must end with `] / 2`"));
            }
            for ((a, b), v) in bracket_terms.drain(..) {
                *quad.entry((a, b)).or_insert(0.0) += v / 2.0;
            }
            in_bracket = false;
            i += 3;
            continue;
        }
        let mut coef = sign;
        if let Some(v) = num(tokens[i]) {
            coef *= v;
            i += 1;
            let next_is_var = tokens.get(i).is_some_and(|t| num(t).is_none() && !matches!(*t, "+" | "-" | "]" | "["));
            if !next_is_var {
                if in_bracket {
                    return Err(parse_err("constant inside quadratic group"));
                }
                constant += coef;
                continue;
            }
        }
        let var = tokens[i].to_string();
        i += 1;
        match tokens.get(i) {
            Some(&"^") => {
                if tokens.get(i + 1) != Some(&"2") || !in_bracket {
                    return Err(parse_err(format!("bad power on {var}")));
                }
                bracket_terms.push(((var.clone(), var), coef));
                i += 2;
            }
            Some(&"*") => {
                let other = tokens.get(i + 1).ok_or_else(|| parse_err("dangling `*`"))?.to_string();
                if !in_bracket {
                    return Err(parse_err("product outside quadratic group"));
                }
                bracket_terms.push(((var, other), coef));
                i += 2;
            }
            _ => {
                if in_bracket {
                    return Err(parse_err("linear term inside quadratic group"));
                }
                *model_lin.entry(var).or_insert(0.0) += coef;
            }
        }
    }
    if in_bracket {
        return Err(parse_err("unterminated quadratic group"));
    }
    Ok(constant)
}

/// Reads the LP subset produced by [`lp_string`].
pub fn parse_lp(text: &str) -> Result<LpModel> {
    #[derive(PartialEq, Clone, Copy)]
    enum Sec {
        None,
        Obj,
        Rows,
        Bounds,
        Bin,
        End,
    }
    // Statements: a line starting with non-space opens one, indented lines continue it.
    let mut statements: Vec<(Sec, String)> = Vec::new();
    let mut sec = Sec::None;
    for raw in text.lines() {
        if raw.trim_start().starts_with('\\') || raw.trim().is_empty() {
            continue;
        }
        let lower = raw.trim().to_ascii_lowercase();
        let header = match lower.as_str() {
            "minimize" | "minimise" | "min" => Some(Sec::Obj),
            "subject to" | "st" | "s.t." => Some(Sec::Rows),
            "bounds" => Some(Sec::Bounds),
            "binaries" | "binary" => Some(Sec::Bin),
            "end" => Some(Sec::End),
            _ => None,
        };
        if let Some(h) = header {
            sec = h;
            continue;
        }
        let continues = raw.starts_with("  ") && !raw.trim_start().contains(':');
        match statements.last_mut() {
            Some((s, line)) if continues && *s == sec => {
                line.push(' ');
                line.push_str(raw.trim());
            }
            _ => statements.push((sec, raw.trim().to_string())),
        }
    }
    if sec != Sec::End {
        return Err(parse_err("missing End"));
    }

    let mut m = LpModel::default();
    for (sec, stmt) in statements {
        match sec {
            Sec::Obj => {
                let body = stmt.split_once(':').map_or(stmt.as_str(), |(_, b)| b);
                let tokens: Vec<&str> = body.split_whitespace().collect();
                m.constant += parse_expr(&tokens, &mut m.linear, &mut m.quadratic)?;
            }
            Sec::Rows => {
                let (name, body) = stmt.split_once(':').ok_or_else(|| parse_err(format!("unnamed row `{stmt}`")))?;
                let tokens: Vec<&str> = body.split_whitespace().collect();
                let k = tokens
                    .iter()
                    .position(|t| matches!(*t, "<=" | ">=" | "="))
                    .ok_or_else(|| parse_err(format!("row {name} has no sense")))?;
                let sense = match tokens[k] {
                    "<=" => Sense::Le,
                    ">=" => Sense::Ge,
                    _ => Sense::Eq,
                };
                let rhs = tokens
                    .get(k + 1)
                    .and_then(|t| num(t))
                    .ok_or_else(|| parse_err(format!("row {name} has no numeric rhs")))?;
                let mut coeffs = BTreeMap::new();
                let mut unused = BTreeMap::new();
                let c = parse_expr(&tokens[..k], &mut coeffs, &mut unused)?;
                if !unused.is_empty() || c != 0.0 {
                    return Err(parse_err(format!("row {name} is not linear")));
                }
                coeffs.retain(|_, v| *v != 0.0);
                m.constraints.push(LpConstraint { name: name.trim().to_string(), coeffs, sense: Some(sense), rhs });
            }
            Sec::Bounds => {
                let t: Vec<&str> = stmt.split_whitespace().collect();
                match t.as_slice() {
                    [v, ">=", b] => {
                        m.lower_bounds.insert(v.to_string(), num(b).ok_or_else(|| parse_err("bad bound"))?);
                    }
                    _ => return Err(parse_err(format!("unsupported bound `{stmt}`"))),
                }
            }
            Sec::Bin => m.binaries.extend(stmt.split_whitespace().map(String::from)),
            Sec::None | Sec::End => return Err(parse_err(format!("text outside a section: `{stmt}`"))),
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Metric;
    use crate::miqp::program::{Objective, Row, RowKind};
    use crate::netmodel::Phase;
    use nalgebra::DMatrix;

    fn tiny(quadratic: bool) -> BinaryProgram {
        let q = quadratic.then(|| {
            let mut q = DMatrix::zeros(3, 3);
            q[(0, 0)] = 1.5;
            q[(0, 1)] = -0.25;
            q[(1, 0)] = -0.25;
            q
        });
        BinaryProgram {
            metric: if quadratic { Metric::PUStar } else { Metric::PvurStar },
            slot_ids: vec!["u1".into()],
            original: vec![Phase::One],
            delta_max: 1,
            n_aux: usize::from(!quadratic),
            objective: Objective {
                linear: if quadratic { vec![0.5, 0.0, -2.0] } else { vec![0.0, 0.0, 0.0, 1.0] },
                quadratic: q,
                constant: 0.125,
            },
            rows: vec![Row {
                name: "onehot_u1".into(),
                kind: RowKind::OneHot,
                coeffs: vec![(0, 1.0), (1, 1.0), (2, 1.0)],
                sense: Sense::Eq,
                rhs: 1.0,
            }],
        }
    }

    #[test]
    fn one_hot_row_text() {
        let text = lp_string(&tiny(false));
        assert!(text.contains("onehot_u1: d_u1_1 + d_u1_2 + d_u1_3 = 1"), "{text}");
        assert!(!text.contains('['));
        assert!(text.contains("m_0 >= 0"));
        assert!(text.contains("Binaries\nd_u1_1 d_u1_2 d_u1_3\n"));
    }

    #[test]
    fn quadratic_section_round_trips() {
        let prog = tiny(true);
        let text = lp_string(&prog);
        assert!(text.contains("[ 3 d_u1_1 ^ 2 - d_u1_1 * d_u1_2 ] / 2"), "{text}");
        let m = parse_lp(&text).unwrap();
        assert_eq!(m.quadratic[&("d_u1_1".into(), "d_u1_1".into())], 1.5);
        assert_eq!(m.quadratic[&("d_u1_1".into(), "d_u1_2".into())], -0.5);
        assert_eq!(m.linear["d_u1_3"], -2.0);
        assert_eq!(m.constant, 0.125);
        assert_eq!(m.binaries.len(), 3);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_lp("Minimize\n obj: x\n").is_err());
        assert!(parse_lp("Minimize\n obj: [ x ^ 2 \nEnd\n").is_err());
        assert!(parse_lp("Subject To\n c1: x + y\nEnd\n").is_err());
    }
}
