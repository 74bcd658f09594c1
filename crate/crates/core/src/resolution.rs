//! The resolution rule, resolution proofs and certificate checking.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cnf::{Assignment, Clause, ClauseId, CnfFormula, Lit, Var};
use crate::error::{Error, Result};

/// Resolves `a` with `b` on `pivot`, which must occur with opposite
/// polarity in the two clauses (either orientation). The result is
/// canonical; it may be a tautology, which the caller can detect with
/// [`Clause::is_tautology`].
pub fn resolve(a: &Clause, b: &Clause, pivot: Var) -> Result<Clause> {
    let pos = Lit::positive(pivot);
    let neg = Lit::negative(pivot);
    let (a_lit, b_lit) = if a.contains(pos) && b.contains(neg) {
        (pos, neg)
    } else if a.contains(neg) && b.contains(pos) {
        (neg, pos)
    } else {
        return Err(Error::PivotAbsent { pivot });
    };
    Ok(a
        .lits()
        .iter()
        .filter(|&&l| l != a_lit)
        .chain(b.lits().iter().filter(|&&l| l != b_lit))
        .copied()
        .collect())
}

/// Orders a resolvable pair so the first clause holds `pivot` positively.
pub fn orient<'c>(a: &'c Clause, b: &'c Clause, pivot: Var) -> Option<(&'c Clause, &'c Clause)> {
    let pos = Lit::positive(pivot);
    let neg = Lit::negative(pivot);
    if a.contains(pos) && b.contains(neg) {
        Some((a, b))
    } else if a.contains(neg) && b.contains(pos) {
        Some((b, a))
    } else {
        None
    }
}

/// Variables occurring with opposite polarity in `a` and `b`, ascending.
pub fn resolvable_pivots(a: &Clause, b: &Clause) -> Vec<Var> {
    let (x, y) = (a.lits(), b.lits());
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < x.len() && j < y.len() {
        let (vx, vy) = (x[i].var(), y[j].var());
        if vx < vy {
            i += 1;
        } else if vy < vx {
            j += 1;
        } else {
            if x[i].is_positive() != y[j].is_positive() {
                out.push(vx);
            }
            i += 1;
            j += 1;
        }
    }
    out.dedup();
    out
}

/// One application of the resolution rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionStep {
    /// Id of the derived clause.
    pub id: ClauseId,
    /// Parent containing `pivot` positively.
    pub parent_a: ClauseId,
    /// Parent containing `pivot` negatively.
    pub parent_b: ClauseId,
    pub pivot: Var,
    pub resolvent: Clause,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionProof {
    pub steps: Vec<ResolutionStep>,
}

impl ResolutionProof {
    pub fn new(steps: Vec<ResolutionStep>) -> Self {
        ResolutionProof { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Whether the last step derives the empty clause.
    pub fn is_complete(&self) -> bool {
        self.steps.last().is_some_and(|s| s.resolvent.is_empty())
    }
}

/// Outcome of a certificate check. Serialized as
/// `{"valid": .., "failed_step": .., "reason": ..}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub valid: bool,
    /// Failing proof step id, or for assignments the first falsified clause.
    pub failed_step: Option<usize>,
    pub reason: Option<String>,
}

impl CheckReport {
    pub fn ok() -> Self {
        CheckReport {
            valid: true,
            failed_step: None,
            reason: None,
        }
    }

    pub fn fail(at: Option<usize>, reason: impl Into<String>) -> Self {
        CheckReport {
            valid: false,
            failed_step: at,
            reason: Some(reason.into()),
        }
    }
}

/// Replays `proof` against the input clauses of `f`.
///
/// Every step must name earlier clauses, carry the next consecutive id,
/// have its pivot positive in `parent_a` and negative in `parent_b`, and
/// state exactly the resolvent of its parents. The last step must derive
/// the empty clause.
pub fn check_proof(f: &CnfFormula, proof: &ResolutionProof) -> CheckReport {
    let n = f.num_input();
    let mut pool: Vec<&Clause> = f.input_clauses().iter().collect();

    if proof.steps.is_empty() {
        return if pool.iter().any(|c| c.is_empty()) {
            CheckReport::ok()
        } else {
            CheckReport::fail(None, "empty proof")
        };
    }

    for (k, step) in proof.steps.iter().enumerate() {
        let expected = n + k + 1;
        if step.id != expected {
            return CheckReport::fail(
                Some(step.id),
                format!("step id {} out of sequence, expected {expected}", step.id),
            );
        }
        let fetch = |id: ClauseId| {
            if id >= 1 && id < step.id {
                Some(pool[id - 1])
            } else {
                None
            }
        };
        let (Some(a), Some(b)) = (fetch(step.parent_a), fetch(step.parent_b)) else {
            return CheckReport::fail(Some(step.id), "parent does not refer to an earlier clause");
        };
        if !a.contains(Lit::positive(step.pivot)) || !b.contains(Lit::negative(step.pivot)) {
            return CheckReport::fail(
                Some(step.id),
                format!("pivot {} not opposite-parity across parents", step.pivot),
            );
        }
        match resolve(a, b, step.pivot) {
            Ok(r) if r == step.resolvent => {}
            Ok(r) => {
                return CheckReport::fail(
                    Some(step.id),
                    format!("stated resolvent {:?} differs from {:?}", step.resolvent, r),
                )
            }
            Err(_) => {
                return CheckReport::fail(
                    Some(step.id),
                    format!("pivot {} not opposite-parity across parents", step.pivot),
                )
            }
        }
        pool.push(&step.resolvent);
    }

    let last = proof.steps.last().unwrap();
    if !last.resolvent.is_empty() {
        return CheckReport::fail(Some(last.id), "final resolvent is not the empty clause");
    }
    CheckReport::ok()
}

/// Checks that `assignment` satisfies every input clause of `f`.
pub fn check_assignment(f: &CnfFormula, assignment: &Assignment) -> CheckReport {
    if assignment.num_vars() < f.num_vars() {
        return CheckReport::fail(
            None,
            format!(
                "assignment covers {} of {} variables",
                assignment.num_vars(),
                f.num_vars()
            ),
        );
    }
    for (i, c) in f.input_clauses().iter().enumerate() {
        if !c.is_satisfied_by(assignment) {
            return CheckReport::fail(Some(i + 1), format!("clause {} is falsified", i + 1));
        }
    }
    CheckReport::ok()
}

/// Keeps only the steps that are ancestors of the first empty-clause step,
/// renumbering ids consecutively from `n + 1`. Linear in the proof length.
pub fn prune_proof_dag(f: &CnfFormula, raw: &ResolutionProof) -> Result<ResolutionProof> {
    let n = f.num_input();
    let end = raw
        .steps
        .iter()
        .position(|s| s.resolvent.is_empty())
        .ok_or(Error::NoEmptyClause)?;
    let steps = &raw.steps[..=end];
    let index: HashMap<ClauseId, usize> = steps.iter().enumerate().map(|(i, s)| (s.id, i)).collect();

    let mut keep = vec![false; steps.len()];
    let mut stack = vec![end];
    keep[end] = true;
    while let Some(i) = stack.pop() {
        for parent in [steps[i].parent_a, steps[i].parent_b] {
            if parent > n {
                if let Some(&j) = index.get(&parent) {
                    if !keep[j] {
                        keep[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }

    let mut renumber: HashMap<ClauseId, ClauseId> = HashMap::new();
    let mut out = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        if !keep[i] {
            continue;
        }
        let id = n + out.len() + 1;
        renumber.insert(s.id, id);
        let map = |p: ClauseId| if p > n { renumber.get(&p).copied().unwrap_or(p) } else { p };
        out.push(ResolutionStep {
            id,
            parent_a: map(s.parent_a),
            parent_b: map(s.parent_b),
            pivot: s.pivot,
            resolvent: s.resolvent.clone(),
        });
    }
    Ok(ResolutionProof::new(out))
}

/// Drops steps whose resolvent already exists in the pool (input or an
/// earlier derivation), redirecting later references to the first copy.
pub fn dedup_proof(f: &CnfFormula, raw: &ResolutionProof) -> ResolutionProof {
    let n = f.num_input();
    let mut first: HashMap<&Clause, ClauseId> = HashMap::new();
    for (i, c) in f.input_clauses().iter().enumerate() {
        first.entry(c).or_insert(i + 1);
    }
    let mut alias: HashMap<ClauseId, ClauseId> = HashMap::new();
    let mut out: Vec<ResolutionStep> = Vec::new();
    for s in &raw.steps {
        let map = |p: ClauseId| alias.get(&p).copied().unwrap_or(p);
        if let Some(&existing) = first.get(&s.resolvent) {
            alias.insert(s.id, existing);
            continue;
        }
        let id = n + out.len() + 1;
        let step = ResolutionStep {
            id,
            parent_a: map(s.parent_a),
            parent_b: map(s.parent_b),
            pivot: s.pivot,
            resolvent: s.resolvent.clone(),
        };
        alias.insert(s.id, id);
        first.insert(&s.resolvent, id);
        out.push(step);
    }
    ResolutionProof::new(out)
}
