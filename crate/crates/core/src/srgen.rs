//! SR(n) paired formula generation.
//!
//! Clauses are sampled until the formula first becomes unsatisfiable. The
//! last clause makes the difference: flipping the sign of one of its
//! literals yields a satisfiable twin that differs in a single literal.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::cnf::{Clause, CnfFormula, Lit};
use crate::error::{Error, Result};
use crate::teacher::is_satisfiable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub p_bernoulli: f64,
    pub p_geometric: f64,
    pub rng_seed: u64,
}

impl Default for SrConfig {
    fn default() -> Self {
        SrConfig {
            n_min: 10,
            n_max: 40,
            p_bernoulli: 0.7,
            p_geometric: 0.4,
            rng_seed: 0,
        }
    }
}

impl SrConfig {
    pub fn new(n_min: usize, n_max: usize, rng_seed: u64) -> Self {
        SrConfig {
            n_min,
            n_max,
            rng_seed,
            ..SrConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 1 <= self.n_min
            && self.n_min <= self.n_max
            && (0.0..=1.0).contains(&self.p_bernoulli)
            && self.p_geometric > 0.0
            && self.p_geometric <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{self:?}")))
        }
    }

    /// Expected clause width before clamping.
    pub fn mean_clause_width(&self) -> f64 {
        1.0 + self.p_bernoulli + (1.0 - self.p_geometric) / self.p_geometric
    }

    /// Deterministic per-pair generator, independent of generation order.
    pub fn pair_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(index);
        rng
    }
}

#[derive(Clone, Debug)]
pub struct SrPair {
    pub sat_formula: CnfFormula,
    pub unsat_formula: CnfFormula,
    /// The literal of the satisfiable twin's last clause that was flipped.
    pub flipped_literal: Lit,
}

/// Samples one clause over `n` variables: width `1 + Bernoulli + Geometric`
/// clamped to `n`, distinct variables, each negated with probability ½.
pub fn sample_clause<R: Rng + ?Sized>(cfg: &SrConfig, n: usize, rng: &mut R) -> Clause {
    assert!(n >= 1, "need at least one variable");
    let bern = Bernoulli::new(cfg.p_bernoulli).expect("p_bernoulli in [0, 1]");
    let geo = Geometric::new(cfg.p_geometric).expect("p_geometric in (0, 1]");
    let k = 1 + bern.sample(rng) as usize + geo.sample(rng) as usize;
    let k = k.min(n);
    sample(rng, n, k)
        .into_iter()
        .map(|i| Lit::from_var(i as u32 + 1, rng.random_bool(0.5)))
        .collect()
}

pub fn generate_sr_pair<R: Rng + ?Sized>(cfg: &SrConfig, rng: &mut R) -> Result<SrPair> {
    cfg.validate()?;
    let n = rng.random_range(cfg.n_min..=cfg.n_max);
    let mut clauses: Vec<Clause> = Vec::new();
    let mut seen: HashSet<Clause> = HashSet::new();
    loop {
        let c = sample_clause(cfg, n, rng);
        if !seen.insert(c.clone()) {
            continue;
        }
        clauses.push(c);
        let f = CnfFormula::new(n, clauses.clone());
        if !is_satisfiable(&f)? {
            break;
        }
    }

    let unsat_formula = CnfFormula::new(n, clauses.clone());
    let last = clauses.pop().unwrap();
    let mut candidates: Vec<Lit> = last.lits().to_vec();
    while !candidates.is_empty() {
        let lit = candidates.swap_remove(rng.random_range(0..candidates.len()));
        let flipped: Clause = last
            .lits()
            .iter()
            .map(|&l| if l == lit { !l } else { l })
            .collect();
        let mut sat_clauses = clauses.clone();
        sat_clauses.push(flipped);
        let sat_formula = CnfFormula::new(n, sat_clauses);
        if is_satisfiable(&sat_formula)? {
            return Ok(SrPair {
                sat_formula,
                unsat_formula,
                flipped_literal: lit,
            });
        }
    }
    Err(Error::GenerationStall)
}
