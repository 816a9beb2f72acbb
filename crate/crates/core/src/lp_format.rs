//! CPLEX-style LP text format.
//!
//! The writer emits the `Minimize / Subject To / Bounds / Generals / Binaries`
//! layout. Every variable gets an explicit bounds line in id order, which lets
//! [`parse_lp`] recreate variables with their original ids. Coefficients are
//! written in shortest round-trip form, so parsing recovers them exactly.

use std::collections::HashMap;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::model::{LinearExpr, MipModel, Sense, VarId, VarKind};

const TERMS_PER_LINE: usize = 8;

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

fn write_expr(out: &mut String, model: &MipModel, expr: &LinearExpr) {
    if expr.is_empty() {
        // LP files cannot express an empty side; a zero term parses back to nothing.
        if let Some(v) = model.variables.first() {
            let _ = write!(out, " 0 {}", v.name);
        }
        return;
    }
    for (i, (v, c)) in expr.iter().enumerate() {
        if i > 0 && i % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        let mag = c.abs();
        let name = &model.variables[v].name;
        if mag == 1.0 {
            let _ = write!(out, " {sign} {name}");
        } else {
            let _ = write!(out, " {sign} {} {name}", fmt_num(mag));
        }
    }
}

pub fn write_lp(model: &MipModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ Problem: {}", model.name);
    out.push_str("Minimize\n obj:");
    write_expr(&mut out, model, &model.objective);
    out.push_str("\nSubject To\n");
    for c in &model.constraints {
        let _ = write!(out, " {}:", c.tag);
        write_expr(&mut out, model, &c.expr);
        let _ = writeln!(out, " {} {}", c.sense.symbol(), fmt_num(c.rhs));
    }
    out.push_str("Bounds\n");
    for v in &model.variables {
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(out, " {} free", v.name);
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper));
        }
    }
    let section = |out: &mut String, header: &str, kind: VarKind| {
        let names: Vec<&str> = model
            .variables
            .iter()
            .filter(|v| v.kind == kind)
            .map(|v| v.name.as_str())
            .collect();
        if names.is_empty() {
            return;
        }
        let _ = writeln!(out, "{header}");
        for chunk in names.chunks(TERMS_PER_LINE) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    };
    section(&mut out, "Generals", VarKind::Integer);
    section(&mut out, "Binaries", VarKind::Binary);
    out.push_str("End\n");
    out
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Generals,
    Binaries,
    End,
}

fn section_header(line: &str) -> Option<Section> {
    let l = line.trim().to_ascii_lowercase();
    Some(match l.as_str() {
        "minimize" | "minimise" | "minimum" | "min" => Section::Objective,
        "subject to" | "such that" | "st" | "s.t." | "st." => Section::Constraints,
        "bounds" | "bound" => Section::Bounds,
        "generals" | "general" | "gen" | "integers" => Section::Generals,
        "binaries" | "binary" | "bin" => Section::Binaries,
        "end" => Section::End,
        "maximize" | "maximise" | "maximum" | "max" => return None,
        _ => return None,
    })
}

fn is_operator(tok: &str) -> Option<Sense> {
    match tok {
        "<=" | "=<" | "<" => Some(Sense::Le),
        ">=" | "=>" | ">" => Some(Sense::Ge),
        "=" => Some(Sense::Eq),
        _ => None,
    }
}

fn parse_num(tok: &str) -> Option<f64> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        t => {
            let first = t.chars().next()?;
            if first.is_ascii_digit() || first == '.' || first == '-' || first == '+' {
                t.parse().ok()
            } else {
                None
            }
        }
    }
}

fn is_numeric_start(c: char) -> bool {
    c.is_ascii_digit() || c == '.' || c == 'i' || c == 'I'
}

/// Splits `a+b` style glue around operators so tokens are whitespace separated.
fn tokenize(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() + 16);
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '<' | '>' | '=' => {
                spaced.push(' ');
                spaced.push(c);
                if i + 1 < chars.len() && matches!(chars[i + 1], '=' | '<' | '>') {
                    spaced.push(chars[i + 1]);
                    i += 1;
                }
                spaced.push(' ');
            }
            '+' | '-' => {
                // Keep exponent signs such as 1e-5 attached.
                let in_exponent = i > 0
                    && matches!(chars[i - 1], 'e' | 'E')
                    && i > 1
                    && (chars[i - 2].is_ascii_digit() || chars[i - 2] == '.');
                let in_word = i > 0 && !chars[i - 1].is_whitespace() && !in_exponent
                    && !matches!(chars[i - 1], '<' | '>' | '=' | ':');
                if in_exponent {
                    spaced.push(c);
                } else if in_word {
                    spaced.push(' ');
                    spaced.push(c);
                    spaced.push(' ');
                } else {
                    spaced.push(c);
                    // `-2` stays one numeric token, `-x` splits off the sign.
                    if i + 1 < chars.len() && !is_numeric_start(chars[i + 1]) {
                        spaced.push(' ');
                    }
                }
            }
            ':' => spaced.push_str(" : "),
            _ => spaced.push(c),
        }
        i += 1;
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

struct Builder {
    model: MipModel,
    index: HashMap<String, VarId>,
}

impl Builder {
    fn var(&mut self, name: &str) -> VarId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self
            .model
            .add_var(name, 0.0, f64::INFINITY, VarKind::Continuous, name);
        self.index.insert(name.to_string(), id);
        id
    }

    /// Parses `[sign] [coef] name ...` terms until an operator or the end.
    fn parse_terms(&mut self, toks: &[String]) -> Result<(LinearExpr, usize)> {
        let mut terms = Vec::new();
        let mut i = 0;
        let mut sign = 1.0;
        let mut coef: Option<f64> = None;
        while i < toks.len() {
            let t = toks[i].as_str();
            if is_operator(t).is_some() {
                break;
            }
            match t {
                "+" => sign = 1.0,
                "-" => sign = -sign,
                _ => {
                    if let Some(v) = parse_num(t) {
                        if i + 1 >= toks.len() || is_operator(&toks[i + 1]).is_some() {
                            // a bare constant; LP objective offsets are not supported
                            return Err(Error::Parse(format!("unexpected constant term {t}")));
                        }
                        coef = Some(coef.unwrap_or(1.0) * v);
                    } else {
                        let id = self.var(t);
                        terms.push((id, sign * coef.unwrap_or(1.0)));
                        sign = 1.0;
                        coef = None;
                    }
                }
            }
            i += 1;
        }
        Ok((LinearExpr::from_terms(terms), i))
    }
}

/// Splits token stream into `name: body` statements.
fn statements(toks: &[String]) -> Vec<(Option<String>, Vec<String>)> {
    let mut out: Vec<(Option<String>, Vec<String>)> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if i + 1 < toks.len() && toks[i + 1] == ":" {
            out.push((Some(toks[i].clone()), Vec::new()));
            i += 2;
            continue;
        }
        if out.is_empty() {
            out.push((None, Vec::new()));
        }
        out.last_mut().unwrap().1.push(toks[i].clone());
        i += 1;
    }
    out
}

pub fn parse_lp(text: &str) -> Result<MipModel> {
    let mut sections: Vec<(Section, String)> = Vec::new();
    let mut current = Section::Preamble;
    let mut name = String::new();
    for raw in text.lines() {
        let (line, comment) = match raw.find('\\') {
            Some(p) => (&raw[..p], Some(&raw[p + 1..])),
            None => (raw, None),
        };
        if let Some(c) = comment {
            if let Some(n) = c.trim().strip_prefix("Problem:") {
                name = n.trim().to_string();
            }
        }
        if line.trim().is_empty() {
            continue;
        }
        let lower = line.trim().to_ascii_lowercase();
        if matches!(lower.as_str(), "maximize" | "maximise" | "maximum" | "max") {
            return Err(Error::Parse("maximization is not supported".into()));
        }
        if let Some(s) = section_header(line) {
            current = s;
            continue;
        }
        if current == Section::End {
            break;
        }
        if current == Section::Preamble {
            return Err(Error::Parse(format!("content before objective section: {line}")));
        }
        match sections.last_mut() {
            Some((s, body)) if *s == current => {
                body.push('\n');
                body.push_str(line);
            }
            _ => sections.push((current, line.to_string())),
        }
    }

    let mut b = Builder {
        model: MipModel::new(name),
        index: HashMap::new(),
    };

    // Bounds first so that variables are created in their written order.
    let bound_lines: Vec<&str> = sections
        .iter()
        .filter(|(s, _)| *s == Section::Bounds)
        .flat_map(|(_, body)| body.lines())
        .collect();
    for line in &bound_lines {
        let toks = tokenize(line);
        parse_bound(&mut b, &toks)?;
    }

    for (section, body) in &sections {
        match section {
            Section::Objective => {
                let toks = tokenize(body);
                for (_, stmt) in statements(&toks) {
                    let (expr, used) = b.parse_terms(&stmt)?;
                    if used != stmt.len() {
                        return Err(Error::Parse("operator in objective".into()));
                    }
                    b.model.objective = expr;
                }
            }
            Section::Constraints => {
                let toks = tokenize(body);
                for (idx, (label, stmt)) in statements(&toks).into_iter().enumerate() {
                    let (expr, used) = b.parse_terms(&stmt)?;
                    let sense = stmt
                        .get(used)
                        .and_then(|t| is_operator(t))
                        .ok_or_else(|| Error::Parse(format!("row {idx} lacks an operator")))?;
                    let rhs_tok = stmt
                        .get(used + 1..)
                        .map(|r| r.concat())
                        .ok_or_else(|| Error::Parse(format!("row {idx} lacks a right-hand side")))?;
                    let rhs = parse_num(&rhs_tok)
                        .ok_or_else(|| Error::Parse(format!("bad right-hand side {rhs_tok}")))?;
                    let tag = label.unwrap_or_else(|| format!("R{idx}"));
                    b.model.add_constraint(expr, sense, rhs, tag);
                }
            }
            Section::Generals | Section::Binaries => {
                for t in body.split_whitespace() {
                    let id = b.var(t);
                    let v = &mut b.model.variables[id];
                    if *section == Section::Binaries {
                        v.kind = VarKind::Binary;
                        v.lower = v.lower.max(0.0);
                        v.upper = v.upper.min(1.0);
                    } else {
                        v.kind = VarKind::Integer;
                    }
                }
            }
            _ => {}
        }
    }
    Ok(b.model)
}

fn parse_bound(b: &mut Builder, toks: &[String]) -> Result<()> {
    let err = || Error::Parse(format!("bad bound line: {}", toks.join(" ")));
    match toks.len() {
        2 if toks[1].eq_ignore_ascii_case("free") => {
            let id = b.var(&toks[0]);
            b.model.variables[id].lower = f64::NEG_INFINITY;
            b.model.variables[id].upper = f64::INFINITY;
        }
        3 => {
            let op = is_operator(&toks[1]).ok_or_else(err)?;
            // `x <= 5` or `5 <= x`
            let (name, val, sense) = match parse_num(&toks[0]) {
                Some(v) if b.index.contains_key(&toks[2]) || parse_num(&toks[2]).is_none() => {
                    let flipped = match op {
                        Sense::Le => Sense::Ge,
                        Sense::Ge => Sense::Le,
                        Sense::Eq => Sense::Eq,
                    };
                    (&toks[2], v, flipped)
                }
                _ => (&toks[0], parse_num(&toks[2]).ok_or_else(err)?, op),
            };
            let id = b.var(name);
            let v = &mut b.model.variables[id];
            match sense {
                Sense::Le => v.upper = val,
                Sense::Ge => v.lower = val,
                Sense::Eq => {
                    v.lower = val;
                    v.upper = val;
                }
            }
        }
        5 => {
            let lo = parse_num(&toks[0]).ok_or_else(err)?;
            let up = parse_num(&toks[4]).ok_or_else(err)?;
            if is_operator(&toks[1]) != Some(Sense::Le) || is_operator(&toks[3]) != Some(Sense::Le)
            {
                return Err(err());
            }
            let id = b.var(&toks[2]);
            b.model.variables[id].lower = lo;
            b.model.variables[id].upper = up;
        }
        _ => return Err(err()),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MipModel {
        let mut m = MipModel::new("sample");
        let x = m.add_var("x(0,1)", 0.0, 3.0, VarKind::Integer, "x");
        let y = m.add_binary("y(0,1)", "y");
        let v = m.add_var("v", f64::NEG_INFINITY, 2.5, VarKind::Continuous, "v");
        let f = m.add_var("f", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous, "f");
        m.add_constraint(
            LinearExpr::from_terms([(x, 1.0), (y, -3.0), (v, 0.1)]),
            Sense::Le,
            0.0,
            "link_xy(0,1)",
        );
        m.add_constraint(LinearExpr::from_terms([(f, -1e-7), (x, 2.0)]), Sense::Ge, -1.5, "r");
        m.add_constraint(LinearExpr::from_terms([(v, 1.0)]), Sense::Eq, 1.0 / 3.0, "eq");
        m.set_objective(LinearExpr::from_terms([(y, 5.0), (f, 1.0)]));
        m
    }

    #[test]
    fn round_trip_exact() {
        let m = sample();
        let text = write_lp(&m);
        let back = parse_lp(&text).unwrap();
        assert_eq!(back.name, m.name);
        assert_eq!(back.objective, m.objective);
        assert_eq!(back.constraints, m.constraints);
        for (a, b) in back.variables.iter().zip(&m.variables) {
            assert_eq!((a.id, &a.name, a.lower, a.upper, a.kind), (b.id, &b.name, b.lower, b.upper, b.kind));
        }
    }

    #[test]
    fn parses_glued_tokens() {
        let text = "Minimize\n obj: 2 x+3 y\nSubject To\n c1: x+y>=1\n c2: x - 2 y <= 4\nBounds\n x <= 4\n 0 <= y <= 10\nGenerals\n x\nEnd\n";
        let m = parse_lp(text).unwrap();
        assert_eq!(m.num_vars(), 2);
        assert_eq!(m.constraints[0].sense, Sense::Ge);
        assert_eq!(m.constraints[1].expr.terms(), &[(0, 1.0), (1, -2.0)]);
        assert_eq!(m.variables[0].upper, 4.0);
        assert_eq!(m.variables[0].kind, VarKind::Integer);
    }

    #[test]
    fn rejects_maximize() {
        assert!(parse_lp("Maximize\n obj: x\nEnd\n").is_err());
    }
}
