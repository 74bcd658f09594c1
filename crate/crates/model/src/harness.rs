//! Episode runner and evaluation metrics.
//!
//! An episode grows the clause pool with selected resolution steps while
//! decoding candidate assignments from the literal embeddings. It stops at
//! the empty clause, a checked satisfying assignment, saturation, or its
//! limits. Every SAT or UNSAT verdict carries a certificate that passed the
//! symbolic checker.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use resprover_core::dataset::Record;
use resprover_core::{check_assignment, check_proof, prune_proof_dag, Assignment, Clause, CnfFormula, Lit, ResolutionProof,
    ResolutionStep, Var};

use crate::config::EvalConfig;
use crate::error::Result;
use crate::model::{Model, Session};
use crate::policy::{classify_satisfiability, decode_assignment, top_k_steps, Branch, PairChoice};
use crate::pool::ClausePool;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EpisodeVerdict {
    Sat,
    Unsat,
    Saturated,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_derivations: usize,
    /// Assignment decodes allowed; each branch decode is one trial.
    pub max_trials: usize,
}

/// Derivation budget `ratio·|teacher proof|` (flat cap without one) and
/// `trial_factor·|V|` decode trials.
pub fn apply_limits(teacher_len: Option<usize>, f: &CnfFormula, cfg: &EvalConfig) -> Limits {
    Limits {
        max_derivations: teacher_len.map_or(cfg.flat_cap, |l| cfg.ratio * l),
        max_trials: cfg.trial_factor * f.num_vars(),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EpisodeConfig {
    /// Steps executed per selector call.
    pub k: usize,
    pub limits: Limits,
}

#[derive(Clone, Debug)]
pub struct Episode {
    pub verdict: EpisodeVerdict,
    /// Pruned proof, for UNSAT.
    pub proof: Option<ResolutionProof>,
    /// Checked assignment, for SAT.
    pub assignment: Option<Assignment>,
    /// Branch that produced the assignment; `None` for SAT by saturation.
    pub branch: Option<Branch>,
    /// Derivation index (0 = before any derivation) of a decoded success.
    pub success_iteration: Option<usize>,
    pub choices: Vec<PairChoice>,
    pub derivations: usize,
    pub trials: usize,
    pub model_calls: usize,
    pub wall_time: Duration,
}

impl Episode {
    fn new() -> Self {
        Episode {
            verdict: EpisodeVerdict::Timeout,
            proof: None,
            assignment: None,
            branch: None,
            success_iteration: None,
            choices: Vec::new(),
            derivations: 0,
            trials: 0,
            model_calls: 0,
            wall_time: Duration::ZERO,
        }
    }
}

/// Records derived clauses as proof steps with pivot-positive first parent.
struct Trace {
    num_input: usize,
    steps: Vec<ResolutionStep>,
}

impl Trace {
    fn push(&mut self, pool: &ClausePool, i: usize, j: usize, pivot: Var, resolvent: Clause) {
        let (a, b) = if pool.clause(i).contains(Lit::positive(pivot)) { (i, j) } else { (j, i) };
        self.steps.push(ResolutionStep {
            id: self.num_input + self.steps.len() + 1,
            parent_a: a + 1,
            parent_b: b + 1,
            pivot,
            resolvent,
        });
    }

    fn finish(&self, f: &CnfFormula) -> Option<ResolutionProof> {
        let raw = ResolutionProof::new(self.steps.clone());
        let proof = prune_proof_dag(f, &raw).ok()?;
        check_proof(f, &proof).valid.then_some(proof)
    }
}

/// Assignment read off a resolution-closed clause set: each variable in
/// turn takes `false` unless that falsifies a clause over the variables
/// fixed so far.
pub fn saturation_assignment(num_vars: usize, clauses: &[Clause]) -> Assignment {
    let mut a = Assignment::all_false(num_vars);
    let mut by_max: Vec<Vec<&Clause>> = vec![Vec::new(); num_vars + 1];
    for c in clauses {
        by_max[c.max_var() as usize].push(c);
    }
    for v in 1..=num_vars {
        if by_max[v].iter().any(|c| !c.is_satisfied_by(&a)) {
            a.set(v as Var, true);
        }
    }
    a
}

fn saturate(f: &CnfFormula, pool: &ClausePool, ep: &mut Episode) {
    let a = saturation_assignment(f.num_vars(), pool.clauses());
    if !pool.has_empty_clause() && check_assignment(f, &a).valid {
        ep.verdict = EpisodeVerdict::Sat;
        ep.assignment = Some(a);
    } else {
        ep.verdict = EpisodeVerdict::Saturated;
    }
}

fn empty_input(f: &CnfFormula, ep: &mut Episode) -> bool {
    if f.input_clauses().iter().any(Clause::is_empty) {
        ep.verdict = EpisodeVerdict::Unsat;
        ep.proof = Some(ResolutionProof::default());
        return true;
    }
    false
}

/// Runs the model on `f` until a verdict or the limits.
pub fn run_episode(model: &Model, f: &CnfFormula, cfg: &EpisodeConfig) -> Episode {
    let start = Instant::now();
    let f = f.inputs_only();
    let mut ep = Episode::new();
    if empty_input(&f, &mut ep) {
        return ep;
    }
    let mut s = Session::new(model, &f, Default::default());
    let mut trace = Trace {
        num_input: f.num_input(),
        steps: Vec::new(),
    };
    'outer: loop {
        for branch in [Branch::Positive, Branch::Negative] {
            if ep.trials >= cfg.limits.max_trials {
                break;
            }
            ep.trials += 1;
            let a = decode_assignment(&mut s, branch);
            if check_assignment(&f, &a).valid {
                ep.verdict = EpisodeVerdict::Sat;
                ep.assignment = Some(a);
                ep.branch = Some(branch);
                ep.success_iteration = Some(ep.derivations);
                break 'outer;
            }
        }
        if ep.derivations >= cfg.limits.max_derivations {
            break;
        }
        if s.pool.is_saturated() {
            saturate(&f, &s.pool, &mut ep);
            break;
        }
        let picks = match top_k_steps(&mut s, cfg.k) {
            Ok(p) => p,
            Err(_) => break,
        };
        ep.model_calls += 1;
        for c in picks {
            let (i, j) = c.indices();
            let Some(r) = s.pool.resolvent(i, j) else { continue };
            trace.push(&s.pool, i, j, c.pivot, r.clone());
            ep.choices.push(c);
            s.add_clause(r.clone());
            ep.derivations += 1;
            if r.is_empty() {
                if let Some(p) = trace.finish(&f) {
                    ep.verdict = EpisodeVerdict::Unsat;
                    ep.proof = Some(p);
                }
                break 'outer;
            }
            if ep.derivations >= cfg.limits.max_derivations {
                break;
            }
        }
        s.detach();
    }
    ep.wall_time = start.elapsed();
    ep
}

/// Baseline: resolves a uniformly random valid pair at every step.
pub fn run_random_episode<R: Rng + ?Sized>(f: &CnfFormula, limits: &Limits, rng: &mut R) -> Episode {
    let start = Instant::now();
    let f = f.inputs_only();
    let mut ep = Episode::new();
    if empty_input(&f, &mut ep) {
        return ep;
    }
    let mut pool = ClausePool::new(f.num_vars(), f.clauses().cloned());
    let mut trace = Trace {
        num_input: f.num_input(),
        steps: Vec::new(),
    };
    while ep.derivations < limits.max_derivations {
        if pool.is_saturated() {
            saturate(&f, &pool, &mut ep);
            break;
        }
        let n = pool.len();
        let pick = rng.random_range(0..pool.valid_pairs());
        let (i, j) = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| pool.is_valid(i, j))
            .nth(pick)
            .expect("count matches");
        let pivot = pool.pivot(i, j).unwrap();
        let r = pool.resolvent(i, j).unwrap();
        trace.push(&pool, i, j, pivot, r.clone());
        pool.push(r.clone());
        ep.derivations += 1;
        ep.model_calls += 1;
        if r.is_empty() {
            if let Some(p) = trace.finish(&f) {
                ep.verdict = EpisodeVerdict::Unsat;
                ep.proof = Some(p);
            }
            break;
        }
    }
    ep.wall_time = start.elapsed();
    ep
}

/// Budget for a record: UNSAT records get `ratio·|proof|` derivations; SAT
/// records derive only while decode trials remain.
pub fn record_limits(r: &Record, cfg: &EvalConfig) -> Limits {
    let teacher = r.entry.proof_len.or(r.proof_len());
    let mut l = apply_limits(if r.is_unsat() { teacher } else { None }, &r.formula, cfg);
    if !r.is_unsat() {
        l.max_derivations = l.max_derivations.min(l.max_trials.div_ceil(2));
    }
    l
}

fn teacher_len(r: &Record) -> Option<usize> {
    r.entry.teacher_proof_len.or(r.entry.proof_len).or(r.proof_len())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub id: String,
    pub unsat: bool,
    pub verdict: EpisodeVerdict,
    pub proof_len: Option<usize>,
    pub teacher_len: Option<usize>,
    pub derivations: usize,
    pub trials: usize,
    pub model_calls: usize,
    pub predicted_sat: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: usize,
    pub proven_sat_pct: Option<f64>,
    pub proven_unsat_pct: Option<f64>,
    pub proven_total_pct: f64,
    /// Classifier accuracy, when requested.
    pub predicted_pct: Option<f64>,
    /// Mean model/teacher proof length over solved UNSAT records.
    pub mean_p_len: Option<f64>,
    /// Mean model calls per teacher step over solved UNSAT records.
    pub mean_model_calls: Option<f64>,
    pub episodes: Vec<EpisodeSummary>,
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Aggregates per-record summaries. Timeouts never enter p-Len.
pub fn summarize(episodes: Vec<EpisodeSummary>) -> EvalReport {
    let proven = |e: &EpisodeSummary| {
        if e.unsat {
            e.verdict == EpisodeVerdict::Unsat
        } else {
            e.verdict == EpisodeVerdict::Sat
        }
    };
    let unsat: Vec<&EpisodeSummary> = episodes.iter().filter(|e| e.unsat).collect();
    let sat: Vec<&EpisodeSummary> = episodes.iter().filter(|e| !e.unsat).collect();
    let solved: Vec<&EpisodeSummary> = unsat
        .iter()
        .copied()
        .filter(|e| proven(e) && e.teacher_len.is_some_and(|t| t > 0))
        .collect();
    let p_len: Vec<f64> = solved
        .iter()
        .map(|e| e.proof_len.unwrap_or(0) as f64 / e.teacher_len.unwrap() as f64)
        .collect();
    let calls: Vec<f64> = solved
        .iter()
        .map(|e| e.model_calls as f64 / e.teacher_len.unwrap() as f64)
        .collect();
    let predicted: Vec<bool> = episodes
        .iter()
        .filter_map(|e| e.predicted_sat.map(|p| p == !e.unsat))
        .collect();
    EvalReport {
        records: episodes.len(),
        proven_sat_pct: pct(sat.iter().filter(|e| proven(e)).count(), sat.len()),
        proven_unsat_pct: pct(unsat.iter().filter(|e| proven(e)).count(), unsat.len()),
        proven_total_pct: pct(episodes.iter().filter(|e| proven(e)).count(), episodes.len()).unwrap_or(0.0),
        predicted_pct: pct(predicted.iter().filter(|&&b| b).count(), predicted.len()),
        mean_p_len: mean(&p_len),
        mean_model_calls: mean(&calls),
        episodes,
    }
}

fn summary(r: &Record, ep: &Episode, predicted_sat: Option<bool>) -> EpisodeSummary {
    EpisodeSummary {
        id: r.entry.id.clone(),
        unsat: r.is_unsat(),
        verdict: ep.verdict,
        proof_len: ep.proof.as_ref().map(|p| p.len()),
        teacher_len: teacher_len(r),
        derivations: ep.derivations,
        trials: ep.trials,
        model_calls: ep.model_calls,
        predicted_sat,
    }
}

/// Runs one episode per record in parallel. With `classify`, also records
/// the satisfiability head's prediction.
pub fn evaluate(model: &Model, records: &[Record], cfg: &EvalConfig, classify: bool) -> EvalReport {
    let episodes = records
        .par_iter()
        .map(|r| {
            let ecfg = EpisodeConfig {
                k: cfg.k,
                limits: record_limits(r, cfg),
            };
            let ep = run_episode(model, &r.formula, &ecfg);
            let predicted = classify.then(|| {
                let mut s = Session::new(model, &r.formula.inputs_only(), Default::default());
                classify_satisfiability(&mut s) > 0.5
            });
            summary(r, &ep, predicted)
        })
        .collect();
    summarize(episodes)
}

/// The same accounting for the random-pair baseline. Record `i` draws from
/// a generator seeded by `(seed, i)`.
pub fn evaluate_random(records: &[Record], cfg: &EvalConfig, seed: u64) -> EvalReport {
    use rand::SeedableRng;
    let episodes = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let ep = run_random_episode(&r.formula, &record_limits(r, cfg), &mut rng);
            summary(r, &ep, None)
        })
        .collect();
    summarize(episodes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    /// Derivation budget.
    pub iteration: usize,
    /// Decode trials available at that budget.
    pub trials: usize,
    pub distribution: String,
    /// Formulas solved with a decoded assignment within the budget.
    pub success_pct: f64,
}

/// Cumulative SAT success against the derivation budget, per distribution.
pub fn generalization_curve(
    model: &Model,
    distributions: &[(String, Vec<CnfFormula>)],
    max_iterations: usize,
    k: usize,
) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for (name, formulas) in distributions {
        let firsts: Vec<Option<usize>> = formulas
            .par_iter()
            .map(|f| {
                let cfg = EpisodeConfig {
                    k,
                    limits: Limits {
                        max_derivations: max_iterations,
                        max_trials: 2 * (max_iterations + 1),
                    },
                };
                run_episode(model, f, &cfg).success_iteration
            })
            .collect();
        for it in 0..=max_iterations {
            let hits = firsts.iter().filter(|s| s.is_some_and(|s| s <= it)).count();
            rows.push(CurveRow {
                iteration: it,
                trials: 2 * (it + 1),
                distribution: name.clone(),
                success_pct: pct(hits, formulas.len()).unwrap_or(0.0),
            });
        }
    }
    rows
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
