//! DIMACS CNF and `.assign` assignment files.

use std::fmt::Write as _;

use crate::cnf::{Assignment, Clause, CnfFormula, Lit};
use crate::error::{Error, Result};

/// Parses DIMACS CNF. Clauses may span lines; `c` lines are comments and a
/// lone `%` ends the clause section.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<Lit> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(Error::syntax(line_no, "duplicate problem line"));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 || fields[1] != "cnf" {
                return Err(Error::syntax(line_no, "expected `p cnf <vars> <clauses>`"));
            }
            let vars = fields[2]
                .parse()
                .map_err(|_| Error::syntax(line_no, "bad variable count"))?;
            let count = fields[3]
                .parse()
                .map_err(|_| Error::syntax(line_no, "bad clause count"))?;
            header = Some((vars, count));
            continue;
        }
        let Some((num_vars, _)) = header else {
            return Err(Error::syntax(line_no, "clause before problem line"));
        };
        for tok in line.split_whitespace() {
            let value: i64 = tok
                .parse()
                .map_err(|_| Error::syntax(line_no, format!("bad literal `{tok}`")))?;
            if value == 0 {
                clauses.push(Clause::new(current.drain(..)));
                continue;
            }
            if value.unsigned_abs() as usize > num_vars {
                return Err(Error::VarOutOfRange {
                    line: line_no,
                    lit: value,
                    num_vars,
                });
            }
            current.push(Lit::new(value as i32));
        }
    }

    let Some((num_vars, count)) = header else {
        return Err(Error::syntax(last_line.max(1), "missing problem line"));
    };
    if !current.is_empty() {
        return Err(Error::syntax(last_line, "unterminated clause"));
    }
    if clauses.len() != count {
        return Err(Error::syntax(
            last_line.max(1),
            format!("header declares {count} clauses, found {}", clauses.len()),
        ));
    }
    Ok(CnfFormula::new(num_vars, clauses))
}

/// Emits the input clauses of `f` in canonical DIMACS form.
pub fn emit_dimacs(f: &CnfFormula) -> String {
    let mut out = format!("p cnf {} {}\n", f.num_vars(), f.num_input());
    for c in f.input_clauses() {
        push_clause(&mut out, c);
        out.push('\n');
    }
    out
}

pub(crate) fn push_clause(out: &mut String, c: &Clause) {
    for l in c.lits() {
        write!(out, "{l} ").unwrap();
    }
    out.push('0');
}

/// Parses an assignment file with one `v<id> 0|1` line per variable.
pub fn parse_assignment(text: &str, num_vars: usize) -> Result<Assignment> {
    let mut values: Vec<Option<bool>> = vec![None; num_vars];
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(name), Some(val), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::syntax(line_no, "expected `v<id> 0|1`"));
        };
        let var: usize = name
            .strip_prefix('v')
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::syntax(line_no, format!("bad variable `{name}`")))?;
        if var == 0 || var > num_vars {
            return Err(Error::VarOutOfRange {
                line: line_no,
                lit: var as i64,
                num_vars,
            });
        }
        values[var - 1] = Some(match val {
            "0" => false,
            "1" => true,
            _ => return Err(Error::syntax(line_no, format!("bad value `{val}`"))),
        });
    }
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::syntax(0, format!("variable {} unassigned", i + 1))))
        .collect::<Result<Vec<_>>>()
        .map(Assignment::from_values)
}

pub fn emit_assignment(a: &Assignment) -> String {
    let mut out = String::new();
    for (i, &v) in a.values().iter().enumerate() {
        writeln!(out, "v{} {}", i + 1, v as u8).unwrap();
    }
    out
}
