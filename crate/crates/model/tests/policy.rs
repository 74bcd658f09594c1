mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::Rng;

use resprover_core::{Clause, CnfFormula, Lit};
use resprover_model::model::SelectorParams;
use resprover_model::policy::*;
use resprover_model::pool::ClausePool;
use resprover_model::{EmbedMode, Model, Variant};

use common::*;

fn formula_strategy() -> impl Strategy<Value = CnfFormula> {
    (1usize..=6, 1usize..=10, any::<u64>()).prop_map(|(n, m, seed)| random_formula(&mut rng(seed), n, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mask_matches_brute_force(f in formula_strategy()) {
        let pool = ClausePool::new(f.num_vars(), f.clauses().cloned());
        let sets: Vec<LitSet> = f.clauses().map(lits).collect();
        let n = sets.len();
        let mask = pool.mask();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(mask[i * n + j], oracle_valid(&sets, i, j), "cell ({}, {})", i, j);
            }
        }
        let unordered = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| oracle_valid(&sets, i, j)).count();
        prop_assert_eq!(pool.valid_pairs(), unordered);
    }

    #[test]
    fn incremental_mask_matches_rebuilt(f in formula_strategy(), extra in any::<u64>()) {
        let mut pool = ClausePool::new(f.num_vars(), f.clauses().cloned());
        let mut r = rng(extra);
        for _ in 0..4 {
            if pool.is_saturated() {
                break;
            }
            let valid: Vec<(usize, usize)> = (0..pool.len())
                .flat_map(|i| (0..pool.len()).map(move |j| (i, j)))
                .filter(|&(i, j)| pool.is_valid(i, j))
                .collect();
            let (i, j) = valid[r.random_range(0..valid.len())];
            pool.push(pool.resolvent(i, j).unwrap());
        }
        let sets: Vec<LitSet> = pool.clauses().iter().map(lits).collect();
        let n = sets.len();
        let mask = pool.mask();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(mask[i * n + j], oracle_valid(&sets, i, j));
            }
        }
    }

    #[test]
    fn choices_are_valid_for_every_variant(f in formula_strategy(), seed in any::<u64>()) {
        for variant in VARIANTS {
            let m = model(variant, EmbedMode::Dynamic, 4, 2, seed);
            let mut s = m.session(&f);
            match top_k_steps(&mut s, 3) {
                Ok(picks) => {
                    prop_assert!(!picks.is_empty());
                    for c in &picks {
                        check_choice(&s.pool, c);
                    }
                }
                Err(_) => prop_assert!(s.pool.is_saturated()),
            }
        }
    }
}

#[test]
fn complementary_units_have_one_pair() {
    let f = CnfFormula::from_dimacs_clauses(1, &[&[1], &[-1]]);
    for variant in VARIANTS {
        let m = model(variant, EmbedMode::Static, 8, 2, 3);
        let mut s = m.session(&f);
        let c = select_pair(&mut s).unwrap();
        assert_eq!(c.pivot, 1);
        let (i, j) = c.indices();
        assert!(s.pool.resolvent(i, j).unwrap().is_empty());
        // a single valid unordered pair
        let all = ranked_pairs(&mut s, usize::MAX).unwrap();
        let expected = if variant == Variant::Full || variant == Variant::Cascaded { 2 } else { 1 };
        assert_eq!(all.len(), expected, "{variant:?}");
        let total: f64 = all.iter().map(|c| c.score.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn full_scores_normalize_over_valid_cells() {
    let mut r = rng(11);
    for _ in 0..20 {
        let f = random_formula(&mut r, 5, 8);
        for variant in VARIANTS {
            let m = model(variant, EmbedMode::Static, 8, 2, r.random());
            let mut s = m.session(&f);
            let Ok(all) = ranked_pairs(&mut s, usize::MAX) else { continue };
            let total: f64 = all.iter().map(|c| c.score.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9, "{variant:?}: {total}");
            for w in all.windows(2) {
                if variant == Variant::Full {
                    assert!(w[0].score >= w[1].score);
                }
            }
        }
    }
}

#[test]
fn scaling_query_and_key_keeps_the_argmax() {
    let mut r = rng(5);
    for _ in 0..20 {
        let f = random_formula(&mut r, 6, 10);
        let m = model(Variant::Full, EmbedMode::Dynamic, 8, 2, r.random());
        let Ok(before) = select_pair(&mut m.session(&f)) else { continue };
        let mut scaled = m.clone();
        let SelectorParams::Full { wq, wk } = scaled.selector else { unreachable!() };
        scaled.store.value_mut(wq).mapv_inplace(|x| 3.0 * x);
        scaled.store.value_mut(wk).mapv_inplace(|x| 0.5 * x);
        let after = select_pair(&mut scaled.session(&f)).unwrap();
        assert_eq!((before.c1, before.c2), (after.c1, after.c2));
    }
}

fn zero_scope(m: &mut Model, scope: &str) {
    for id in m.scope_ids(scope) {
        m.store.value_mut(id).fill(0.0);
    }
}

#[test]
fn uniform_cascade_falls_back_to_clause_order() {
    let mut r = rng(17);
    for _ in 0..30 {
        let f = random_formula(&mut r, 5, 8);
        let mut m = model(Variant::Cascaded, EmbedMode::Static, 8, 2, r.random());
        let SelectorParams::Cascaded { u, .. } = m.selector else { unreachable!() };
        m.store.value_mut(u).fill(0.0);
        let mut s = m.session(&f);
        let Ok(c) = select_pair(&mut s) else { continue };
        let pool = &s.pool;
        let n = pool.len();
        let first = (0..n)
            .filter(|&i| (0..n).any(|j| pool.is_valid(i, j)))
            .min_by(|&a, &b| pool.clause(a).cmp(pool.clause(b)).then(a.cmp(&b)))
            .unwrap();
        let second = (0..n)
            .filter(|&j| pool.is_valid(first, j))
            .min_by(|&a, &b| pool.clause(a).cmp(pool.clause(b)).then(a.cmp(&b)))
            .unwrap();
        assert_eq!(c.indices(), (first, second));
        let count = (0..n).filter(|&i| (0..n).any(|j| pool.is_valid(i, j))).count();
        let partners = (0..n).filter(|&j| pool.is_valid(first, j)).count();
        let expected = -((count * partners) as f64).ln();
        assert!((c.score - expected).abs() < 1e-9);
    }
}

#[test]
fn single_pivot_forces_the_anchor() {
    let f = CnfFormula::from_dimacs_clauses(3, &[&[1, 2], &[-1, 3]]);
    let m = model(Variant::Anchored, EmbedMode::Static, 8, 3, 2);
    let mut s = m.session(&f);
    let c = select_pair(&mut s).unwrap();
    assert_eq!(c.anchor, Some(1));
    assert_eq!(c.indices(), (0, 1));
    let (_, a) = anchor_scores(&mut s).unwrap();
    assert_eq!(a.len(), 3);
}

#[test]
fn anchored_grids_partition_the_valid_pairs() {
    let mut r = rng(23);
    for _ in 0..40 {
        let f = random_formula(&mut r, 6, 12);
        let m = model(Variant::Anchored, EmbedMode::Static, 8, 2, r.random());
        let mut s = m.session(&f);
        let mut seen = HashSet::new();
        for v in 1..=6u32 {
            let Ok((_, grid)) = anchored_grid(&mut s, v) else { continue };
            for &i in &grid.rows {
                assert!(s.pool.clause(i).contains(Lit::positive(v)));
            }
            for &j in &grid.cols {
                assert!(s.pool.clause(j).contains(Lit::negative(v)));
            }
            for (i, j, _) in grid.cells() {
                assert_eq!(s.pool.pivot(i, j), Some(v));
                assert!(seen.insert((i.min(j), i.max(j))));
            }
        }
        assert_eq!(seen.len(), s.pool.valid_pairs());
    }
}

#[test]
fn selection_ignores_clause_order() {
    let mut r = rng(29);
    let mut compared = 0;
    for _ in 0..30 {
        let f = random_formula(&mut r, 6, 10);
        let m = model(Variant::Full, EmbedMode::Dynamic, 8, 3, r.random());
        let Ok(a) = select_pair(&mut m.session(&f)) else { continue };
        let mut clauses: Vec<Clause> = f.clauses().cloned().collect();
        clauses.reverse();
        let shift = r.random_range(0..clauses.len());
        clauses.rotate_left(shift);
        let g = CnfFormula::new(f.num_vars(), clauses);
        let b = select_pair(&mut m.session(&g)).unwrap();
        let contents = |f: &CnfFormula, c: &PairChoice| (f.clause(c.c1).unwrap().clone(), f.clause(c.c2).unwrap().clone());
        assert_eq!(contents(&f, &a), contents(&g, &b));
        assert!((a.score - b.score).abs() < 1e-9);
        compared += 1;
    }
    assert!(compared > 10);
}

#[test]
fn top_k_contract() {
    let mut r = rng(31);
    for _ in 0..30 {
        let f = random_formula(&mut r, 5, 9);
        for variant in VARIANTS {
            let m = model(variant, EmbedMode::Static, 8, 2, r.random());
            let mut s = m.session(&f);
            let Ok(best) = select_pair(&mut s) else { continue };
            for k in [1, 3, 5] {
                let picks = top_k_steps(&mut s, k).unwrap();
                assert!(!picks.is_empty() && picks.len() <= k);
                assert_eq!(picks[0], best);
                let mut resolvents = HashSet::new();
                for (t, c) in picks.iter().enumerate() {
                    let (i, j) = c.indices();
                    let res = s.pool.resolvent(i, j).unwrap();
                    if res.is_empty() {
                        assert_eq!(t + 1, picks.len());
                    }
                    assert!(resolvents.insert(res));
                }
            }
        }
    }
}

#[test]
fn parameter_counts_at_d128() {
    let m = model(Variant::Full, EmbedMode::Static, 128, 1, 0);
    assert_eq!(count_parameters(&m.store, "select."), 32_768);
    assert_eq!(count_parameters(&m.store, "decode."), 16_512);
    let m = model(Variant::Full, EmbedMode::Static, 1, 1, 0);
    assert_eq!(count_parameters(&m.store, "select."), 2);
}

#[test]
fn zero_heads_give_neutral_outputs() {
    let f = CnfFormula::from_dimacs_clauses(4, &[&[1, -2], &[2, 3], &[-3, 4]]);
    let mut m = model(Variant::Full, EmbedMode::Static, 8, 2, 9);
    zero_scope(&mut m, "decode.");
    zero_scope(&mut m, "classify.");
    let mut s = m.session(&f);
    assert!(decode_logits(&mut s, Branch::Positive).iter().all(|&z| z == 0.0));
    assert_eq!(decode_assignment(&mut s, Branch::Positive).values(), &[false; 4]);
    assert_eq!(classify_satisfiability(&mut s), 0.5);
}

#[test]
fn negative_branch_reads_complement_literals() {
    let logits = [1.0, -2.0, 0.5];
    let pos = assignment_from_logits(&logits, Branch::Positive);
    let neg = assignment_from_logits(&logits, Branch::Negative);
    assert_eq!(pos.values(), &[true, false, true]);
    assert_eq!(neg.values(), &[false, true, false]);
}
