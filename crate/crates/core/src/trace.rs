//! TRACECHECK-style resolution traces.
//!
//! Each line reads `<id> <lit…> 0 <parent_id…> 0`. Lines with an empty
//! parent list are input clauses; lines with two or more parents are
//! resolution chains, expanded here into binary steps by resolving the
//! parents left to right.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::cnf::{Clause, ClauseId, CnfFormula, Lit};
use crate::dimacs::push_clause;
use crate::error::{Error, Result};
use crate::resolution::{orient, resolvable_pivots, resolve, ResolutionProof, ResolutionStep};

/// A parsed trace: the input clauses it declares (numbered `1..=n` in file
/// order) and the binary proof over them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceFile {
    pub inputs: Vec<Clause>,
    pub proof: ResolutionProof,
}

impl TraceFile {
    /// Whether the declared inputs are exactly the input clauses of `f`, in order.
    pub fn matches(&self, f: &CnfFormula) -> bool {
        self.inputs == f.input_clauses()
    }
}

struct Line {
    no: usize,
    id: u64,
    lits: Vec<Lit>,
    parents: Vec<u64>,
}

fn parse_line(no: usize, text: &str) -> Result<Line> {
    let mut toks = text.split_whitespace();
    let id: u64 = toks
        .next()
        .and_then(|t| t.parse().ok())
        .filter(|&id| id > 0)
        .ok_or_else(|| Error::syntax(no, "expected positive clause id"))?;
    let mut lits = Vec::new();
    let mut closed = false;
    for tok in toks.by_ref() {
        let v: i32 = tok
            .parse()
            .map_err(|_| Error::syntax(no, format!("bad literal `{tok}`")))?;
        if v == 0 {
            closed = true;
            break;
        }
        lits.push(Lit::new(v));
    }
    if !closed {
        return Err(Error::syntax(no, "unterminated literal list"));
    }
    let mut parents = Vec::new();
    closed = false;
    for tok in toks.by_ref() {
        let v: u64 = tok
            .parse()
            .map_err(|_| Error::syntax(no, format!("bad parent id `{tok}`")))?;
        if v == 0 {
            closed = true;
            break;
        }
        parents.push(v);
    }
    if !closed {
        return Err(Error::syntax(no, "unterminated parent list"));
    }
    if toks.next().is_some() {
        return Err(Error::syntax(no, "trailing tokens"));
    }
    Ok(Line {
        no,
        id,
        lits,
        parents,
    })
}

pub fn parse_trace(text: &str) -> Result<TraceFile> {
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('c') {
            continue;
        }
        lines.push(parse_line(idx + 1, t)?);
    }

    // file id -> (pool id, clause)
    let mut table: HashMap<u64, (ClauseId, Clause)> = HashMap::new();
    let mut inputs = Vec::new();
    for line in lines.iter().filter(|l| l.parents.is_empty()) {
        let clause = Clause::new(line.lits.iter().copied());
        inputs.push(clause.clone());
        if table.insert(line.id, (inputs.len(), clause)).is_some() {
            return Err(Error::syntax(line.no, format!("duplicate id {}", line.id)));
        }
    }

    let mut steps: Vec<ResolutionStep> = Vec::new();
    let n = inputs.len();
    for line in lines.iter().filter(|l| !l.parents.is_empty()) {
        if line.parents.len() < 2 {
            return Err(Error::syntax(line.no, "derived clause needs at least two parents"));
        }
        let lookup = |p: u64| {
            table.get(&p).cloned().ok_or(Error::DanglingParent {
                line: line.no,
                parent: p,
            })
        };
        let (mut cur_id, mut cur) = lookup(line.parents[0])?;
        for &p in &line.parents[1..] {
            let (pid, pc) = lookup(p)?;
            let pivots = resolvable_pivots(&cur, &pc);
            let [pivot] = pivots[..] else {
                return Err(Error::syntax(
                    line.no,
                    format!("chain link with parent {p} clashes on {} variables", pivots.len()),
                ));
            };
            let resolvent = resolve(&cur, &pc, pivot).expect("pivot clashes");
            let (parent_a, parent_b) = if orient(&cur, &pc, pivot).unwrap().0 == &cur {
                (cur_id, pid)
            } else {
                (pid, cur_id)
            };
            let id = n + steps.len() + 1;
            steps.push(ResolutionStep {
                id,
                parent_a,
                parent_b,
                pivot,
                resolvent: resolvent.clone(),
            });
            cur_id = id;
            cur = resolvent;
        }
        let stated = Clause::new(line.lits.iter().copied());
        if stated != cur {
            return Err(Error::syntax(
                line.no,
                format!("stated clause {stated:?} differs from chain result {cur:?}"),
            ));
        }
        if table.insert(line.id, (cur_id, cur)).is_some() {
            return Err(Error::syntax(line.no, format!("duplicate id {}", line.id)));
        }
    }

    Ok(TraceFile {
        inputs,
        proof: ResolutionProof::new(steps),
    })
}

/// Writes the input clauses of `f` followed by the binary steps of `p`,
/// using pool ids as trace ids.
pub fn emit_trace(p: &ResolutionProof, f: &CnfFormula) -> String {
    let mut out = String::new();
    for (i, c) in f.input_clauses().iter().enumerate() {
        write!(out, "{} ", i + 1).unwrap();
        push_clause(&mut out, c);
        out.push_str(" 0\n");
    }
    for s in &p.steps {
        write!(out, "{} ", s.id).unwrap();
        push_clause(&mut out, &s.resolvent);
        writeln!(out, " {} {} 0", s.parent_a, s.parent_b).unwrap();
    }
    out
}
