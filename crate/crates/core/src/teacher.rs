//! Reference DPLL solver producing certificates.
//!
//! Unsatisfiable formulas yield a resolution proof built by the classic
//! recursive scheme: propagation conflicts are explained by resolving the
//! conflict clause with the antecedents of propagated literals, and the two
//! branch clauses of each decision are resolved on the decision variable.
//! Branching is deterministic: lowest unassigned variable, true first.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cnf::{Assignment, Clause, ClauseId, CnfFormula, Lit, Var};
use crate::error::{Error, Result};
use crate::resolution::{dedup_proof, prune_proof_dag, resolve, ResolutionProof, ResolutionStep};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Sat,
    Unsat,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub decisions: u64,
    pub propagations: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub verdict: Verdict,
    pub assignment: Option<Assignment>,
    pub proof: Option<ResolutionProof>,
    pub stats: SolveStats,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub max_decisions: u64,
    /// Build a resolution proof for UNSAT verdicts.
    pub log_proof: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_decisions: 50_000_000,
            log_proof: true,
        }
    }
}

/// Solves `f` with proof logging; UNSAT proofs come back deduplicated and
/// pruned to the ancestors of the empty clause.
pub fn solve(f: &CnfFormula) -> Result<SolveResult> {
    solve_with(f, SolverConfig::default())
}

/// Satisfiability only, no certificate.
pub fn is_satisfiable(f: &CnfFormula) -> Result<bool> {
    let r = solve_with(
        f,
        SolverConfig {
            log_proof: false,
            ..SolverConfig::default()
        },
    )?;
    Ok(r.verdict == Verdict::Sat)
}

pub fn solve_with(f: &CnfFormula, cfg: SolverConfig) -> Result<SolveResult> {
    let start = Instant::now();
    let mut s = Dpll::new(f, cfg);
    let outcome = if cfg.log_proof {
        s.search_logged()?
    } else if s.search_plain()? {
        Outcome::Sat
    } else {
        Outcome::Conflict(0)
    };
    let mut stats = SolveStats {
        decisions: s.decisions,
        propagations: s.propagations,
        wall_time: Duration::ZERO,
    };
    let result = match outcome {
        Outcome::Sat => SolveResult {
            verdict: Verdict::Sat,
            assignment: Some(s.model.take().expect("model recorded on SAT")),
            proof: None,
            stats: stats.clone(),
        },
        Outcome::Conflict(_) => {
            let proof = if cfg.log_proof {
                let raw = ResolutionProof::new(s.steps);
                let deduped = dedup_proof(f, &raw);
                Some(if deduped.is_empty() {
                    deduped
                } else {
                    prune_proof_dag(f, &deduped)?
                })
            } else {
                None
            };
            SolveResult {
                verdict: Verdict::Unsat,
                assignment: None,
                proof,
                stats: stats.clone(),
            }
        }
    };
    stats.wall_time = start.elapsed();
    Ok(SolveResult { stats, ..result })
}

enum Outcome {
    Sat,
    /// Id of a clause falsified by the decision literals alone.
    Conflict(ClauseId),
}

#[derive(Clone, Copy)]
enum Reason {
    Decision,
    Propagated(ClauseId),
}

struct Dpll<'f> {
    f: &'f CnfFormula,
    cfg: SolverConfig,
    values: Vec<Option<bool>>,
    trail: Vec<(Lit, Reason)>,
    /// Derived clauses, ids continuing after the inputs.
    derived: Vec<Clause>,
    steps: Vec<ResolutionStep>,
    model: Option<Assignment>,
    decisions: u64,
    propagations: u64,
}

impl<'f> Dpll<'f> {
    fn new(f: &'f CnfFormula, cfg: SolverConfig) -> Self {
        Dpll {
            f,
            cfg,
            values: vec![None; f.num_vars() + 1],
            trail: Vec::new(),
            derived: Vec::new(),
            steps: Vec::new(),
            model: None,
            decisions: 0,
            propagations: 0,
        }
    }

    fn clause(&self, id: ClauseId) -> &Clause {
        let n = self.f.num_input();
        if id <= n {
            &self.f.input_clauses()[id - 1]
        } else {
            &self.derived[id - n - 1]
        }
    }

    fn lit_value(&self, l: Lit) -> Option<bool> {
        self.values[l.var() as usize].map(|v| v == l.is_positive())
    }

    fn assign(&mut self, l: Lit, reason: Reason) {
        self.values[l.var() as usize] = Some(l.is_positive());
        self.trail.push((l, reason));
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let (l, _) = self.trail.pop().unwrap();
            self.values[l.var() as usize] = None;
        }
    }

    /// Unit propagation to fixpoint over the input clauses. Returns the id
    /// of a falsified clause on conflict.
    fn propagate(&mut self) -> Option<ClauseId> {
        loop {
            let mut changed = false;
            for (idx, c) in self.f.input_clauses().iter().enumerate() {
                let mut unassigned = None;
                let mut open = 0;
                let mut satisfied = false;
                for &l in c.lits() {
                    match self.lit_value(l) {
                        Some(true) => {
                            satisfied = true;
                            break;
                        }
                        Some(false) => {}
                        None => {
                            open += 1;
                            unassigned = Some(l);
                        }
                    }
                }
                if satisfied {
                    continue;
                }
                match open {
                    0 => return Some(idx + 1),
                    1 => {
                        self.assign(unassigned.unwrap(), Reason::Propagated(idx + 1));
                        self.propagations += 1;
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return None;
            }
        }
    }

    fn lowest_unassigned(&self) -> Option<Var> {
        (1..=self.f.num_vars() as Var).find(|&v| self.values[v as usize].is_none())
    }

    fn record_model(&mut self) {
        let values = (1..=self.f.num_vars())
            .map(|v| self.values[v].unwrap_or(false))
            .collect();
        self.model = Some(Assignment::from_values(values));
    }

    fn bump_decisions(&mut self) -> Result<()> {
        self.decisions += 1;
        if self.decisions > self.cfg.max_decisions {
            return Err(Error::ResourceLimit(self.cfg.max_decisions));
        }
        Ok(())
    }

    fn derive(&mut self, a: ClauseId, b: ClauseId, pivot: Var) -> ClauseId {
        let resolvent = resolve(self.clause(a), self.clause(b), pivot).expect("clash on pivot");
        debug_assert!(!resolvent.is_tautology());
        // orient: parent_a holds the pivot positively
        let (pa, pb) = if self.clause(a).contains(Lit::positive(pivot)) {
            (a, b)
        } else {
            (b, a)
        };
        let id = self.f.num_input() + self.derived.len() + 1;
        self.derived.push(resolvent.clone());
        self.steps.push(ResolutionStep {
            id,
            parent_a: pa,
            parent_b: pb,
            pivot,
            resolvent,
        });
        id
    }

    /// Resolves away every propagated literal of a falsified clause, newest
    /// first, leaving only negated decision literals.
    fn explain(&mut self, mut k: ClauseId) -> ClauseId {
        for i in (0..self.trail.len()).rev() {
            let (l, reason) = self.trail[i];
            if let Reason::Propagated(antecedent) = reason {
                if self.clause(k).contains(!l) {
                    k = self.derive(k, antecedent, l.var());
                }
            }
        }
        k
    }

    fn search_logged(&mut self) -> Result<Outcome> {
        let mark = self.trail.len();
        if let Some(conflict) = self.propagate() {
            let k = self.explain(conflict);
            self.undo_to(mark);
            return Ok(Outcome::Conflict(k));
        }
        let Some(var) = self.lowest_unassigned() else {
            self.record_model();
            self.undo_to(mark);
            return Ok(Outcome::Sat);
        };
        self.bump_decisions()?;

        let mut branch_clauses = [0; 2];
        for (slot, value) in [true, false].into_iter().enumerate() {
            let decision_mark = self.trail.len();
            let lit = Lit::from_var(var, value);
            self.assign(lit, Reason::Decision);
            let outcome = self.search_logged()?;
            self.undo_to(decision_mark);
            match outcome {
                Outcome::Sat => {
                    self.undo_to(mark);
                    return Ok(Outcome::Sat);
                }
                Outcome::Conflict(k) => {
                    if !self.clause(k).contains(!lit) {
                        // conflict independent of this decision
                        self.undo_to(mark);
                        return Ok(Outcome::Conflict(k));
                    }
                    branch_clauses[slot] = k;
                }
            }
        }
        let k = self.derive(branch_clauses[0], branch_clauses[1], var);
        self.undo_to(mark);
        Ok(Outcome::Conflict(k))
    }

    fn search_plain(&mut self) -> Result<bool> {
        let mark = self.trail.len();
        if self.propagate().is_some() {
            self.undo_to(mark);
            return Ok(false);
        }
        let Some(var) = self.lowest_unassigned() else {
            self.record_model();
            self.undo_to(mark);
            return Ok(true);
        };
        self.bump_decisions()?;
        for value in [true, false] {
            let decision_mark = self.trail.len();
            self.assign(Lit::from_var(var, value), Reason::Decision);
            let sat = self.search_plain()?;
            self.undo_to(decision_mark);
            if sat {
                self.undo_to(mark);
                return Ok(true);
            }
        }
        self.undo_to(mark);
        Ok(false)
    }
}
