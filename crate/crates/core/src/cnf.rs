//! Literals, clauses, formulas and assignments.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A propositional variable, numbered from 1.
pub type Var = u32;

/// Identifier of a clause in a proof pool: input clauses are `1..=n` in
/// file order, derived clauses continue from `n + 1`.
pub type ClauseId = usize;

/// A literal in DIMACS convention: `v` is the variable, `-v` its negation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lit(i32);

impl Lit {
    /// # Panics
    /// Panics on zero, which is the DIMACS clause terminator.
    pub fn new(value: i32) -> Self {
        assert!(value != 0, "literal 0 is not a literal");
        Lit(value)
    }

    pub fn positive(var: Var) -> Self {
        Lit::new(var as i32)
    }

    pub fn negative(var: Var) -> Self {
        Lit::new(-(var as i32))
    }

    pub fn from_var(var: Var, positive: bool) -> Self {
        if positive {
            Lit::positive(var)
        } else {
            Lit::negative(var)
        }
    }

    pub fn var(self) -> Var {
        self.0.unsigned_abs()
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn to_dimacs(self) -> i32 {
        self.0
    }

    /// Whether the literal is true under `assignment`.
    pub fn eval(self, assignment: &Assignment) -> bool {
        assignment.value(self.var()) == self.is_positive()
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit(-self.0)
    }
}

impl Ord for Lit {
    /// Ascending by variable, negative before positive.
    fn cmp(&self, other: &Self) -> Ordering {
        (self.var(), self.is_positive()).cmp(&(other.var(), other.is_positive()))
    }
}

impl PartialOrd for Lit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A disjunction of literals kept in canonical order without duplicates.
///
/// A clause may hold a complementary pair; such clauses are tautologies and
/// report it through [`Clause::is_tautology`]. The empty clause is falsum.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Clause {
    lits: Vec<Lit>,
}

impl Clause {
    pub fn new(lits: impl IntoIterator<Item = Lit>) -> Self {
        let mut lits: Vec<Lit> = lits.into_iter().collect();
        lits.sort_unstable();
        lits.dedup();
        Clause { lits }
    }

    pub fn from_dimacs(lits: &[i32]) -> Self {
        Clause::new(lits.iter().map(|&l| Lit::new(l)))
    }

    pub fn empty() -> Self {
        Clause { lits: Vec::new() }
    }

    pub fn lits(&self) -> &[Lit] {
        &self.lits
    }

    pub fn len(&self) -> usize {
        self.lits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn contains(&self, lit: Lit) -> bool {
        self.lits.binary_search(&lit).is_ok()
    }

    pub fn contains_var(&self, var: Var) -> bool {
        self.contains(Lit::positive(var)) || self.contains(Lit::negative(var))
    }

    /// Whether the clause contains some literal together with its complement.
    pub fn is_tautology(&self) -> bool {
        // canonical order places ¬v immediately before v
        self.lits.windows(2).any(|w| w[0] == !w[1])
    }

    pub fn max_var(&self) -> Var {
        self.lits.iter().map(|l| l.var()).max().unwrap_or(0)
    }

    pub fn is_satisfied_by(&self, assignment: &Assignment) -> bool {
        self.lits.iter().any(|l| l.eval(assignment))
    }

    pub fn to_dimacs(&self) -> Vec<i32> {
        self.lits.iter().map(|l| l.to_dimacs()).collect()
    }
}

impl fmt::Debug for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.lits.iter()).finish()
    }
}

impl FromIterator<Lit> for Clause {
    fn from_iter<I: IntoIterator<Item = Lit>>(iter: I) -> Self {
        Clause::new(iter)
    }
}

/// A CNF formula: immutable input clauses plus an append-only pool of
/// derived clauses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: usize,
    input: Vec<Clause>,
    derived: Vec<Clause>,
}

impl CnfFormula {
    /// # Panics
    /// Panics if a clause mentions a variable above `num_vars`.
    pub fn new(num_vars: usize, clauses: Vec<Clause>) -> Self {
        for c in &clauses {
            assert!(
                c.max_var() as usize <= num_vars,
                "clause {c:?} exceeds {num_vars} variables"
            );
        }
        CnfFormula {
            num_vars,
            input: clauses,
            derived: Vec::new(),
        }
    }

    pub fn from_dimacs_clauses(num_vars: usize, clauses: &[&[i32]]) -> Self {
        CnfFormula::new(
            num_vars,
            clauses.iter().map(|c| Clause::from_dimacs(c)).collect(),
        )
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn input_clauses(&self) -> &[Clause] {
        &self.input
    }

    pub fn derived_clauses(&self) -> &[Clause] {
        &self.derived
    }

    pub fn num_input(&self) -> usize {
        self.input.len()
    }

    /// Total clause count, input plus derived.
    pub fn len(&self) -> usize {
        self.input.len() + self.derived.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends a derived clause and returns its id.
    ///
    /// # Panics
    /// Panics if the clause mentions an out-of-range variable.
    pub fn push_derived(&mut self, clause: Clause) -> ClauseId {
        assert!(clause.max_var() as usize <= self.num_vars);
        self.derived.push(clause);
        self.len()
    }

    pub fn clause(&self, id: ClauseId) -> Option<&Clause> {
        if id == 0 {
            return None;
        }
        let idx = id - 1;
        if idx < self.input.len() {
            Some(&self.input[idx])
        } else {
            self.derived.get(idx - self.input.len())
        }
    }

    /// All clauses in id order.
    pub fn clauses(&self) -> impl Iterator<Item = &Clause> {
        self.input.iter().chain(self.derived.iter())
    }

    /// The same formula without derived clauses.
    pub fn inputs_only(&self) -> CnfFormula {
        CnfFormula::new(self.num_vars, self.input.clone())
    }

    /// Returns a copy without exact duplicate input clauses (first
    /// occurrence kept).
    pub fn deduplicated(&self) -> CnfFormula {
        let mut seen = HashSet::new();
        let clauses = self
            .input
            .iter()
            .filter(|c| seen.insert((*c).clone()))
            .cloned()
            .collect();
        CnfFormula::new(self.num_vars, clauses)
    }
}

/// A total truth assignment over variables `1..=num_vars`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    values: Vec<bool>,
}

impl Assignment {
    pub fn all_false(num_vars: usize) -> Self {
        Assignment {
            values: vec![false; num_vars],
        }
    }

    /// Builds an assignment from values indexed by `var - 1`.
    pub fn from_values(values: Vec<bool>) -> Self {
        Assignment { values }
    }

    /// Assignment number `bits` in truth-table order: variable `v` takes bit
    /// `v - 1`.
    pub fn from_bits(num_vars: usize, bits: u64) -> Self {
        Assignment {
            values: (0..num_vars).map(|i| bits >> i & 1 == 1).collect(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.values.len()
    }

    /// # Panics
    /// Panics if `var` is 0 or exceeds the assignment's range.
    pub fn value(&self, var: Var) -> bool {
        self.values[var as usize - 1]
    }

    pub fn set(&mut self, var: Var, value: bool) {
        self.values[var as usize - 1] = value;
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }
}

impl fmt::Debug for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(
                self.values
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| if b { i as i64 + 1 } else { -(i as i64 + 1) }),
            )
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_puts_negative_first() {
        let c = Clause::from_dimacs(&[3, 1, -1, 2, 3]);
        assert_eq!(c.to_dimacs(), vec![-1, 1, 2, 3]);
        assert!(c.is_tautology());
        assert!(!Clause::from_dimacs(&[-1, 3]).is_tautology());
        assert!(!Clause::empty().is_tautology());
    }

    #[test]
    fn clause_lookup_spans_input_and_derived() {
        let mut f = CnfFormula::from_dimacs_clauses(2, &[&[1, 2], &[-1]]);
        assert_eq!(f.push_derived(Clause::from_dimacs(&[2])), 3);
        assert_eq!(f.clause(1).unwrap().to_dimacs(), vec![1, 2]);
        assert_eq!(f.clause(3).unwrap().to_dimacs(), vec![2]);
        assert!(f.clause(0).is_none());
        assert!(f.clause(4).is_none());
        assert_eq!(f.inputs_only().len(), 2);
    }

    #[test]
    #[should_panic]
    fn out_of_range_clause_rejected() {
        CnfFormula::from_dimacs_clauses(1, &[&[2]]);
    }

    #[test]
    fn truth_table_bits() {
        let a = Assignment::from_bits(3, 0b101);
        assert!(a.value(1));
        assert!(!a.value(2));
        assert!(a.value(3));
        assert!(Lit::negative(2).eval(&a));
    }
}
