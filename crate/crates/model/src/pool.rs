//! Clause pool with an incrementally maintained table of valid resolution
//! pairs.
//!
//! A pair `(i, j)` is valid when `i ≠ j`, the clauses clash on exactly one
//! variable (more clashes make every resolvent a tautology), the resolvent is
//! not a tautology, and the resolvent is not already in the pool.

use std::collections::HashMap;

use resprover_core::{resolvable_pivots, resolve, Clause, Lit, Var};

#[derive(Clone, Debug)]
pub struct ClausePool {
    num_vars: usize,
    clauses: Vec<Clause>,
    present: HashMap<Clause, usize>,
    /// Pivot of each valid pair, 0 when invalid; symmetric.
    pivots: Vec<Vec<Var>>,
    by_resolvent: HashMap<Clause, Vec<(usize, usize)>>,
    partners: Vec<usize>,
    /// Valid pairs per pivot variable, indexed by `v - 1`.
    per_var: Vec<usize>,
    valid: usize,
}

fn pair_resolvent(a: &Clause, b: &Clause) -> Option<(Var, Clause)> {
    let pivots = resolvable_pivots(a, b);
    if pivots.len() != 1 {
        return None;
    }
    let r = resolve(a, b, pivots[0]).ok()?;
    (!r.is_tautology()).then_some((pivots[0], r))
}

impl ClausePool {
    pub fn new(num_vars: usize, clauses: impl IntoIterator<Item = Clause>) -> Self {
        let mut pool = ClausePool {
            num_vars,
            clauses: Vec::new(),
            present: HashMap::new(),
            pivots: Vec::new(),
            by_resolvent: HashMap::new(),
            partners: Vec::new(),
            per_var: vec![0; num_vars],
            valid: 0,
        };
        for c in clauses {
            pool.push(c);
        }
        pool
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn clause(&self, i: usize) -> &Clause {
        &self.clauses[i]
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn contains(&self, c: &Clause) -> bool {
        self.present.contains_key(c)
    }

    pub fn has_empty_clause(&self) -> bool {
        self.contains(&Clause::empty())
    }

    fn set(&mut self, i: usize, j: usize, pivot: Var) {
        let old = self.pivots[i][j];
        if old == pivot {
            return;
        }
        if old != 0 {
            self.partners[i] -= 1;
            self.partners[j] -= 1;
            self.per_var[old as usize - 1] -= 1;
            self.valid -= 1;
        }
        if pivot != 0 {
            self.partners[i] += 1;
            self.partners[j] += 1;
            self.per_var[pivot as usize - 1] += 1;
            self.valid += 1;
        }
        self.pivots[i][j] = pivot;
        self.pivots[j][i] = pivot;
    }

    /// Appends a clause and updates pair validity; returns its index.
    pub fn push(&mut self, c: Clause) -> usize {
        assert!(c.max_var() as usize <= self.num_vars, "clause exceeds variable count");
        let k = self.clauses.len();
        for row in &mut self.pivots {
            row.push(0);
        }
        self.pivots.push(vec![0; k + 1]);
        self.partners.push(0);

        // pairs whose resolvent is this clause stop being useful
        if !self.present.contains_key(&c) {
            if let Some(cells) = self.by_resolvent.remove(&c) {
                for (i, j) in cells {
                    self.set(i, j, 0);
                }
            }
        }
        self.present.entry(c.clone()).or_insert(k);

        for j in 0..k {
            if let Some((pivot, r)) = pair_resolvent(&self.clauses[j], &c) {
                if !self.present.contains_key(&r) {
                    self.set(j, k, pivot);
                    self.by_resolvent.entry(r).or_default().push((j, k));
                }
            }
        }
        self.clauses.push(c);
        k
    }

    /// Pivot of a valid pair.
    pub fn pivot(&self, i: usize, j: usize) -> Option<Var> {
        match self.pivots[i][j] {
            0 => None,
            v => Some(v),
        }
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.pivots[i][j] != 0
    }

    pub fn resolvent(&self, i: usize, j: usize) -> Option<Clause> {
        let p = self.pivot(i, j)?;
        resolve(&self.clauses[i], &self.clauses[j], p).ok()
    }

    /// Number of valid unordered pairs.
    pub fn valid_pairs(&self) -> usize {
        self.valid
    }

    pub fn is_saturated(&self) -> bool {
        self.valid == 0
    }

    /// Row-major `n×n` validity mask.
    pub fn mask(&self) -> Vec<bool> {
        self.pivots.iter().flat_map(|row| row.iter().map(|&p| p != 0)).collect()
    }

    /// Clauses that take part in at least one valid pair.
    pub fn partner_mask(&self) -> Vec<bool> {
        self.partners.iter().map(|&n| n > 0).collect()
    }

    /// Clauses forming a valid pair with clause `i`.
    pub fn row_mask(&self, i: usize) -> Vec<bool> {
        self.pivots[i].iter().map(|&p| p != 0).collect()
    }

    /// Variables (indexed `v - 1`) that pivot at least one valid pair.
    pub fn anchor_mask(&self) -> Vec<bool> {
        self.per_var.iter().map(|&n| n > 0).collect()
    }

    /// Clauses containing `v` (rows), containing `¬v` (columns), and the
    /// row-major validity mask of pairs resolved on `v`.
    pub fn anchored(&self, v: Var) -> (Vec<usize>, Vec<usize>, Vec<bool>) {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| self.clauses[i].contains(Lit::positive(v))).collect();
        let cols: Vec<usize> = (0..self.len()).filter(|&i| self.clauses[i].contains(Lit::negative(v))).collect();
        let mask = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.pivots[i][j] == v)
            .collect();
        (rows, cols, mask)
    }
}

/// Row-major validity mask of every ordered pair in `clauses`.
pub fn valid_pair_mask(num_vars: usize, clauses: &[Clause]) -> Vec<bool> {
    ClausePool::new(num_vars, clauses.iter().cloned()).mask()
}
