mod common;

use proptest::prelude::*;
use rand::Rng;

use resprover_core::{check_assignment, check_proof, Assignment, CnfFormula};
use resprover_model::harness::*;
use resprover_model::EmbedMode;

use common::*;

fn satisfiable(f: &CnfFormula) -> bool {
    let n = f.num_vars();
    (0u64..1 << n).any(|bits| check_assignment(f, &Assignment::from_bits(n, bits)).valid)
}

fn cfg(k: usize, derivations: usize, trials: usize) -> EpisodeConfig {
    EpisodeConfig {
        k,
        limits: Limits {
            max_derivations: derivations,
            max_trials: trials,
        },
    }
}

fn assert_sound(f: &CnfFormula, ep: &Episode) {
    match ep.verdict {
        EpisodeVerdict::Unsat => {
            let p = ep.proof.as_ref().expect("UNSAT carries a proof");
            assert!(check_proof(f, p).valid);
            assert!(p.len() <= ep.derivations);
            assert!(!satisfiable(f));
        }
        EpisodeVerdict::Sat => {
            assert!(check_assignment(f, ep.assignment.as_ref().unwrap()).valid);
        }
        // a saturated pool without the empty clause means the input is satisfiable
        EpisodeVerdict::Saturated => assert!(satisfiable(f)),
        EpisodeVerdict::Timeout => {}
    }
}

#[test]
fn complementary_units_are_refuted_in_one_step() {
    let f = CnfFormula::from_dimacs_clauses(1, &[&[1], &[-1]]);
    for variant in VARIANTS {
        for mode in MODES {
            let m = model(variant, mode, 8, 2, 0);
            let ep = run_episode(&m, &f, &cfg(1, 4, 0));
            assert_eq!(ep.verdict, EpisodeVerdict::Unsat);
            assert_eq!(ep.proof.unwrap().len(), 1);
            assert_eq!((ep.derivations, ep.model_calls), (1, 1));
        }
    }
}

#[test]
fn single_unit_is_satisfied() {
    let f = CnfFormula::from_dimacs_clauses(1, &[&[1]]);
    for variant in VARIANTS {
        let m = model(variant, EmbedMode::Static, 8, 2, 0);
        let ep = run_episode(&m, &f, &cfg(1, 4, 2));
        assert_eq!(ep.verdict, EpisodeVerdict::Sat);
        assert_eq!(ep.assignment.unwrap().values(), &[true]);
        // with no decode trials the saturated pool still yields a model
        let ep = run_episode(&m, &f, &cfg(1, 4, 0));
        assert_eq!(ep.verdict, EpisodeVerdict::Sat);
        assert_eq!(ep.success_iteration, None);
    }
}

#[test]
fn saturation_assignment_satisfies_closed_sets() {
    let mut r = rng(3);
    for _ in 0..200 {
        let f = random_formula(&mut r, 5, 7);
        let ep = run_random_episode(&f, &Limits { max_derivations: 10_000, max_trials: 0 }, &mut r);
        assert_ne!(ep.verdict, EpisodeVerdict::Timeout);
        assert_ne!(ep.verdict, EpisodeVerdict::Saturated, "closure must yield a model");
        assert_eq!(ep.verdict == EpisodeVerdict::Sat, satisfiable(&f));
        assert_sound(&f, &ep);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn verdicts_are_certified(seed in any::<u64>(), n in 1usize..=6, m in 1usize..=12) {
        let mut r = rng(seed);
        let f = random_formula(&mut r, n, m);
        for variant in VARIANTS {
            let mode = MODES[r.random_range(0..2)];
            let model = model(variant, mode, 8, 2, r.random());
            for k in [1, 3] {
                let ep = run_episode(&model, &f, &cfg(k, 40, 2 * n));
                assert_sound(&f, &ep);
                prop_assert!(ep.model_calls <= ep.derivations);
                prop_assert!(ep.derivations <= k * ep.model_calls);
                prop_assert!(ep.trials <= 2 * n);
                prop_assert_eq!(ep.choices.len(), ep.derivations);
            }
            let ep = run_random_episode(&f, &Limits { max_derivations: 40, max_trials: 0 }, &mut r);
            assert_sound(&f, &ep);
        }
    }
}

#[test]
fn derivation_limit_is_respected() {
    let dir = tempfile::tempdir().unwrap();
    let data = unsat_records(dir.path(), 5, 4);
    let m = model(resprover_model::Variant::Full, EmbedMode::Dynamic, 8, 2, 1);
    for r in &data {
        for k in [1, 3, 5] {
            let ep = run_episode(&m, &r.formula, &cfg(k, 3, 0));
            assert!(ep.derivations <= 3);
            assert_sound(&r.formula, &ep);
        }
    }
}

#[test]
fn limits_follow_the_teacher_length() {
    let f = CnfFormula::from_dimacs_clauses(3, &[&[1, 2, 3]]);
    let c = resprover_model::EvalConfig::default();
    let l = apply_limits(Some(5), &f, &c);
    assert_eq!((l.max_derivations, l.max_trials), (20, 6));
    let l = apply_limits(None, &f, &c);
    assert_eq!(l.max_derivations, c.flat_cap);
}

#[test]
fn evaluation_reports_consistent_rates() {
    let dir = tempfile::tempdir().unwrap();
    let data = sr_dataset(dir.path(), 6, 5, 8, resprover_core::dataset::PairKind::Both, 8);
    let m = model(resprover_model::Variant::Cascaded, EmbedMode::Static, 8, 2, 2);
    let rep = evaluate(&m, &data.records, &Default::default(), true);
    assert_eq!(rep.records, 12);
    assert_eq!(rep.episodes.len(), 12);
    for (e, r) in rep.episodes.iter().zip(&data.records) {
        assert_eq!(e.id, r.entry.id);
        assert!(e.predicted_sat.is_some());
        if e.unsat {
            assert_ne!(e.verdict, EpisodeVerdict::Sat);
        } else {
            assert_ne!(e.verdict, EpisodeVerdict::Unsat);
        }
    }
    let proven = rep.episodes.iter().filter(|e| matches!(e.verdict, EpisodeVerdict::Sat | EpisodeVerdict::Unsat)).count();
    assert!((rep.proven_total_pct - 100.0 * proven as f64 / 12.0).abs() < 1e-9);

    let random = evaluate_random(&data.records, &Default::default(), 1);
    let again = evaluate_random(&data.records, &Default::default(), 1);
    assert_eq!(random.proven_total_pct, again.proven_total_pct);
}

#[test]
fn success_curve_is_monotone() {
    use resprover_core::srgen::{generate_sr_pair, SrConfig};
    let m = model(resprover_model::Variant::Full, EmbedMode::Static, 8, 2, 3);
    let mut dists = Vec::new();
    for n in [5, 8] {
        let sc = SrConfig::new(n, n, 1);
        let fs = (0..10).map(|i| generate_sr_pair(&sc, &mut sc.pair_rng(i)).unwrap().sat_formula).collect();
        dists.push((format!("SR({n})"), fs));
    }
    let rows = generalization_curve(&m, &dists, 12, 1);
    assert_eq!(rows.len(), 26);
    for w in rows.windows(2) {
        if w[0].distribution == w[1].distribution {
            assert_eq!(w[1].iteration, w[0].iteration + 1);
            assert!(w[1].success_pct >= w[0].success_pct);
        }
    }
}
