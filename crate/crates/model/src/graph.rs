//! Literal/clause incidence graph.
//!
//! Literal nodes are numbered `2(v-1)` for `v` and `2(v-1)+1` for `¬v`, so a
//! node's complement is `i ^ 1`. Clause nodes follow clause ids (0-based).

use std::rc::Rc;

use resprover_core::{Clause, CnfFormula, Lit, Var};

pub fn lit_node(l: Lit) -> usize {
    2 * (l.var() as usize - 1) + usize::from(!l.is_positive())
}

pub fn node_lit(i: usize) -> Lit {
    Lit::from_var((i / 2 + 1) as Var, i.is_multiple_of(2))
}

pub fn pos_node(v: Var) -> usize {
    2 * (v as usize - 1)
}

pub fn neg_node(v: Var) -> usize {
    2 * (v as usize - 1) + 1
}

#[derive(Clone, Debug)]
pub struct FormulaGraph {
    num_vars: usize,
    clause_lits: Vec<Vec<usize>>,
    lit_clauses: Vec<Vec<usize>>,
    // shared copies handed to segment sums; rebuilt on append
    clause_lits_rc: Rc<[Vec<usize>]>,
    lit_clauses_rc: Rc<[Vec<usize>]>,
    complement: Rc<[usize]>,
}

impl FormulaGraph {
    pub fn new(f: &CnfFormula) -> Self {
        let n = 2 * f.num_vars();
        let mut g = FormulaGraph {
            num_vars: f.num_vars(),
            clause_lits: Vec::new(),
            lit_clauses: vec![Vec::new(); n],
            clause_lits_rc: Rc::from(Vec::new()),
            lit_clauses_rc: Rc::from(Vec::new()),
            complement: (0..n).map(|i| i ^ 1).collect(),
        };
        for c in f.clauses() {
            g.add(c);
        }
        g.refresh();
        g
    }

    fn add(&mut self, c: &Clause) -> usize {
        let id = self.clause_lits.len();
        let lits: Vec<usize> = c.lits().iter().map(|&l| lit_node(l)).collect();
        for &l in &lits {
            self.lit_clauses[l].push(id);
        }
        self.clause_lits.push(lits);
        id
    }

    fn refresh(&mut self) {
        self.clause_lits_rc = Rc::from(self.clause_lits.clone());
        self.lit_clauses_rc = Rc::from(self.lit_clauses.clone());
    }

    /// Appends a clause node; returns its 0-based index.
    pub fn push_clause(&mut self, c: &Clause) -> usize {
        assert!(c.max_var() as usize <= self.num_vars);
        let id = self.add(c);
        self.refresh();
        id
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_literals(&self) -> usize {
        2 * self.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.clause_lits.len()
    }

    pub fn clause_lits(&self, c: usize) -> &[usize] {
        &self.clause_lits[c]
    }

    pub fn lit_clauses(&self, l: usize) -> &[usize] {
        &self.lit_clauses[l]
    }

    pub fn clause_lits_shared(&self) -> Rc<[Vec<usize>]> {
        self.clause_lits_rc.clone()
    }

    pub fn lit_clauses_shared(&self) -> Rc<[Vec<usize>]> {
        self.lit_clauses_rc.clone()
    }

    pub fn complement_shared(&self) -> Rc<[usize]> {
        self.complement.clone()
    }

    pub fn membership_edges(&self) -> usize {
        self.clause_lits.iter().map(Vec::len).sum()
    }

    pub fn complement_edges(&self) -> usize {
        self.num_vars
    }

    /// Variables (1-based) of clause node `c`.
    pub fn clause_vars(&self, c: usize) -> impl Iterator<Item = Var> + '_ {
        self.clause_lits[c].iter().map(|&l| (l / 2 + 1) as Var)
    }
}

pub fn build_graph(f: &CnfFormula) -> FormulaGraph {
    FormulaGraph::new(f)
}
