#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use resprover_core::dataset::{generate_dataset, Dataset, PairKind, Record};
use resprover_core::srgen::SrConfig;
use resprover_core::{Clause, CnfFormula, Lit};
use resprover_model::embedder::InitOverride;
use resprover_model::policy::PairChoice;
use resprover_model::pool::ClausePool;
use resprover_model::{EmbedMode, Model, ModelConfig, Session, SessionOptions, Variant};
use resprover_nn::Mat;

pub const VARIANTS: [Variant; 3] = [Variant::Full, Variant::Cascaded, Variant::Anchored];
pub const MODES: [EmbedMode; 2] = [EmbedMode::Static, EmbedMode::Dynamic];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn model(variant: Variant, mode: EmbedMode, d: usize, rounds: usize, seed: u64) -> Model {
    Model::new(
        ModelConfig {
            d,
            rounds,
            variant,
            mode,
        },
        seed,
    )
    .unwrap()
}

pub fn random_clause<R: Rng>(rng: &mut R, num_vars: usize, width: usize) -> Clause {
    let mut vars: Vec<u32> = (1..=num_vars as u32).collect();
    let mut lits = Vec::new();
    for _ in 0..width.min(num_vars) {
        let v = vars.swap_remove(rng.random_range(0..vars.len()));
        lits.push(Lit::from_var(v, rng.random_bool(0.5)));
    }
    Clause::new(lits)
}

/// `m` clauses of width 1..=3 over `n` variables.
pub fn random_formula<R: Rng>(rng: &mut R, n: usize, m: usize) -> CnfFormula {
    let clauses = (0..m)
        .map(|_| {
            let w = rng.random_range(1..=3);
            random_clause(rng, n, w)
        })
        .collect();
    CnfFormula::new(n, clauses)
}

/// Every variable occurs and the clause/variable graph is connected.
pub fn is_connected(f: &CnfFormula) -> bool {
    let n = f.num_vars();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    let mut seen = vec![false; n];
    for c in f.clauses() {
        let vs: Vec<usize> = c.lits().iter().map(|l| l.var() as usize - 1).collect();
        for &v in &vs {
            seen[v] = true;
        }
        for w in vs.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let root = find(&mut parent, 0);
    seen.iter().all(|&s| s) && (0..n).all(|v| find(&mut parent, v) == root)
}

pub fn sr_dataset(dir: &Path, count: usize, n_min: usize, n_max: usize, kind: PairKind, seed: u64) -> Dataset {
    generate_dataset(&SrConfig::new(n_min, n_max, seed), count, kind, dir).unwrap();
    Dataset::load(dir).unwrap()
}

pub fn unsat_records(dir: &Path, count: usize, seed: u64) -> Vec<Record> {
    sr_dataset(dir, count, 5, 10, PairKind::Unsat, seed).records
}

/// Runs up to `steps` greedy derivations with event recording and counts
/// anchored grids with no member related to all others.
pub fn grid_hub_violations(m: &Model, f: &CnfFormula, steps: usize) -> usize {
    use resprover_model::embedder::message_reachability;
    use resprover_model::policy::select_pair;
    use resprover_model::{Session, SessionOptions};

    let mut s = Session::new(
        m,
        f,
        SessionOptions {
            record_events: true,
            ..Default::default()
        },
    );
    let mut violations = 0;
    for _ in 0..=steps {
        let reach = message_reachability(&s.graph, s.events.as_ref().unwrap());
        for (vi, &on) in s.pool.anchor_mask().iter().enumerate() {
            if !on {
                continue;
            }
            let (rows, cols, _) = s.pool.anchored(vi as u32 + 1);
            let members: Vec<usize> = rows.into_iter().chain(cols).collect();
            if !reach.has_hub(&members) {
                violations += 1;
            }
        }
        let Ok(c) = select_pair(&mut s) else { break };
        let (i, j) = c.indices();
        let r = s.pool.resolvent(i, j).unwrap();
        if r.is_empty() {
            break;
        }
        s.add_clause(r);
    }
    violations
}

pub fn record(id: &str, f: CnfFormula, certificate: resprover_core::dataset::Certificate) -> Record {
    use resprover_core::dataset::{Certificate, ManifestEntry};
    use resprover_core::teacher::Verdict;
    let (verdict, ext, len) = match &certificate {
        Certificate::Proof(p) => (Verdict::Unsat, "trace", Some(p.len())),
        Certificate::Assignment(_) => (Verdict::Sat, "assign", None),
    };
    Record {
        entry: ManifestEntry {
            id: id.to_string(),
            path: format!("{id}.cnf"),
            n: f.num_vars(),
            num_clauses: f.num_input(),
            verdict,
            certificate: format!("{id}.{ext}"),
            proof_len: len,
            teacher_proof_len: len,
            reduction_depth: 0,
            decisions: 0,
            propagations: 0,
        },
        formula: f,
        certificate,
    }
}

pub fn step(id: usize, a: usize, b: usize, pivot: u32, resolvent: &[i32]) -> resprover_core::resolution::ResolutionStep {
    resprover_core::resolution::ResolutionStep {
        id,
        parent_a: a,
        parent_b: b,
        pivot,
        resolvent: Clause::from_dimacs(resolvent),
    }
}

pub fn random_mat<R: Rng>(r: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| r.random_range(-1.0..1.0))
}

pub fn rows_differ(a: &Mat, b: &Mat, i: usize) -> bool {
    a.row(i) != b.row(i)
}

pub fn connected_formula<R: Rng>(r: &mut R, n: usize) -> CnfFormula {
    loop {
        let m = n + r.random_range(0..n);
        let f = random_formula(r, n, m);
        if is_connected(&f) {
            return f;
        }
    }
}

pub fn embed_with(m: &Model, f: &CnfFormula, rounds: usize, init: InitOverride) -> (Mat, Mat) {
    let s = Session::new(
        m,
        f,
        SessionOptions {
            rounds: Some(rounds),
            init: Some(init),
            record_events: false,
        },
    );
    (s.literal_embeddings().clone(), s.clause_embeddings().clone())
}

/// Perturbs every node's initial vector in turn and checks that all nodes
/// change after `rounds` rounds. Returns the number of uncovered pairs.
pub fn uncovered_pairs(m: &Model, f: &CnfFormula, rounds: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let (nl, nc, d) = (2 * f.num_vars(), f.len(), m.cfg.d);
    let base = InitOverride {
        lit_h: random_mat(&mut r, nl, d),
        cls_h: random_mat(&mut r, nc, d),
    };
    let (bl, bc) = embed_with(m, f, rounds, base.clone());
    let mut misses = 0;
    for src in 0..nl + nc {
        let mut p = base.clone();
        let delta = random_mat(&mut r, 1, d);
        let mut row = if src < nl { p.lit_h.row_mut(src) } else { p.cls_h.row_mut(src - nl) };
        row += &delta.row(0);
        let (pl, pc) = embed_with(m, f, rounds, p);
        misses += (0..nl).filter(|&i| !rows_differ(&bl, &pl, i)).count();
        misses += (0..nc).filter(|&i| !rows_differ(&bc, &pc, i)).count();
    }
    misses
}

pub type LitSet = BTreeSet<i32>;

pub fn lits(c: &Clause) -> LitSet {
    c.to_dimacs().into_iter().collect()
}

/// Brute-force validity: exactly one clashing variable, non-tautological
/// resolvent not already present, distinct clauses.
pub fn oracle_valid(clauses: &[LitSet], i: usize, j: usize) -> bool {
    if i == j {
        return false;
    }
    let (a, b) = (&clauses[i], &clauses[j]);
    let clash: Vec<i32> = a.iter().filter(|&&l| b.contains(&-l)).copied().collect();
    if clash.len() != 1 {
        return false;
    }
    let p = clash[0];
    let r: LitSet = a.iter().chain(b.iter()).filter(|&&l| l != p && l != -p).copied().collect();
    if r.iter().any(|&l| r.contains(&-l)) {
        return false;
    }
    !clauses.contains(&r)
}

/// Valid index pair, pivot clashing between the two clauses, finite
/// log-probability.
pub fn choice_is_valid(pool: &ClausePool, c: &PairChoice) -> bool {
    let (i, j) = c.indices();
    let sets: Vec<LitSet> = pool.clauses().iter().map(lits).collect();
    if i >= sets.len() || j >= sets.len() || !oracle_valid(&sets, i, j) {
        return false;
    }
    let v = c.pivot as i32;
    let clash = sets[i].contains(&v) && sets[j].contains(&-v) || sets[i].contains(&-v) && sets[j].contains(&v);
    clash && c.score.is_finite() && c.score <= 1e-12
}

pub fn check_choice(pool: &ClausePool, c: &PairChoice) {
    assert!(choice_is_valid(pool, c), "invalid choice {c:?}");
}
