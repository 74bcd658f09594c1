//! Losses, teacher-forced training and proof bootstrapping.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use resprover_core::dataset::{Certificate, Dataset, Record};
use resprover_core::{check_proof, Assignment, ResolutionProof};
use resprover_nn::{adam_step, clip_gradients, lr_schedule, Adam, Gradients, Mat, Tape, Var as Node};

use crate::config::{EvalConfig, TrainConfig};
use crate::error::{ModelError, Result};
use crate::harness::{run_episode, EpisodeConfig, EpisodeVerdict, Limits};
use crate::model::{Model, Session};
use crate::policy::{decode_node, select_pair, teacher_log_prob, Branch};

/// Weight `γ^(T−t)` of step `t` (1-based) in an episode of length `T`.
fn discount(gamma: f64, t: usize, big_t: usize) -> f64 {
    gamma.powi((big_t - t) as i32)
}

/// `−(1/T) Σ_t γ^(T−t) log p_t`.
pub fn resolution_loss_value(log_probs: &[f64], gamma: f64) -> f64 {
    let t = log_probs.len();
    assert!(t >= 1, "empty episode");
    -log_probs
        .iter()
        .enumerate()
        .map(|(i, lp)| discount(gamma, i + 1, t) * lp)
        .sum::<f64>()
        / t as f64
}

pub fn resolution_loss(tape: &mut Tape, log_probs: &[Node], gamma: f64) -> Node {
    let t = log_probs.len();
    assert!(t >= 1, "empty episode");
    weighted_sum(tape, log_probs, |i| -discount(gamma, i + 1, t) / t as f64)
}

fn weighted_sum(tape: &mut Tape, terms: &[Node], w: impl Fn(usize) -> f64) -> Node {
    let mut acc = tape.scale(terms[0], w(0));
    for (i, &x) in terms.iter().enumerate().skip(1) {
        let s = tape.scale(x, w(i));
        acc = tape.add(acc, s);
    }
    acc
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn targets(a: &Assignment) -> Vec<f64> {
    a.values().iter().map(|&b| f64::from(u8::from(b))).collect()
}

/// `(1/T) Σ_t γ^(T−t) (1/|V|) Σ_v BCE(Â_t(v), A(v))` over decoder
/// probabilities `outputs[t][v]`.
pub fn sat_loss_value(outputs: &[Vec<f64>], target: &Assignment, gamma: f64) -> f64 {
    let t = outputs.len();
    assert!(t >= 1, "empty episode");
    let y = targets(target);
    outputs
        .iter()
        .enumerate()
        .map(|(i, o)| {
            assert_eq!(o.len(), y.len(), "one output per variable");
            let per: f64 = o.iter().zip(&y).map(|(&p, &y)| bce(p, y)).sum::<f64>() / y.len() as f64;
            discount(gamma, i + 1, t) * per
        })
        .sum::<f64>()
        / t as f64
}

/// Tape form of the SAT loss over per-step `|V|×1` logit nodes.
pub fn sat_loss(tape: &mut Tape, logits: &[Node], target: &Assignment, gamma: f64) -> Node {
    let t = logits.len();
    assert!(t >= 1, "empty episode");
    let y: std::rc::Rc<[f64]> = targets(target).into();
    let terms: Vec<Node> = logits.iter().map(|&z| tape.bce_with_logits(z, y.clone())).collect();
    weighted_sum(tape, &terms, |i| discount(gamma, i + 1, t) / t as f64)
}

#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub loss: f64,
    pub grads: Gradients,
    /// Supervised resolution steps (0 for SAT records).
    pub steps: usize,
    /// Steps where the head's greedy pick matched the teacher.
    pub correct: usize,
}

/// Builds the episode loss on a session tape without differentiating.
fn episode_loss<'m>(model: &'m Model, record: &Record, cfg: &TrainConfig) -> Result<(Session<'m>, Node, usize, usize)> {
    let f = record.formula.inputs_only();
    let mut s = Session::new(model, &f, Default::default());
    match &record.certificate {
        Certificate::Proof(proof) => {
            if proof.is_empty() {
                return Err(ModelError::TeacherStepInvalid {
                    step: 0,
                    reason: "empty proof has nothing to supervise".into(),
                });
            }
            let mut lps = Vec::with_capacity(proof.len());
            let mut correct = 0;
            for (t, step) in proof.steps.iter().enumerate() {
                let invalid = |reason: String| ModelError::TeacherStepInvalid { step: step.id, reason };
                let n = s.pool.len();
                if step.id != n + 1 {
                    return Err(invalid(format!("expected id {}", n + 1)));
                }
                let (a, b) = (step.parent_a.wrapping_sub(1), step.parent_b.wrapping_sub(1));
                if a >= n || b >= n {
                    return Err(invalid("parent out of range".into()));
                }
                if s.pool.pivot(a, b) != Some(step.pivot) {
                    return Err(invalid(format!("pair ({}, {}) is masked", step.parent_a, step.parent_b)));
                }
                if s.pool.resolvent(a, b).as_ref() != Some(&step.resolvent) {
                    return Err(invalid("stated resolvent differs".into()));
                }
                let sc = teacher_log_prob(&mut s, a, b, step.pivot).map_err(|e| match e {
                    ModelError::TeacherStepInvalid { reason, .. } => invalid(reason),
                    other => other,
                })?;
                lps.push(sc.log_prob);
                correct += usize::from(sc.top1);
                if t + 1 < proof.len() {
                    s.add_clause(step.resolvent.clone());
                }
            }
            let loss = resolution_loss(&mut s.tape, &lps, cfg.gamma);
            Ok((s, loss, proof.len(), correct))
        }
        Certificate::Assignment(a) => {
            let cap = f.num_vars().min(cfg.sat_step_cap);
            let mut logits = vec![decode_node(&mut s, Branch::Positive)];
            for _ in 0..cap {
                let Ok(c) = select_pair(&mut s) else { break };
                let (i, j) = c.indices();
                let r = s.pool.resolvent(i, j).expect("selected pairs are valid");
                s.add_clause(r);
                logits.push(decode_node(&mut s, Branch::Positive));
            }
            let loss = sat_loss(&mut s.tape, &logits, a, cfg.gamma);
            Ok((s, loss, 0, 0))
        }
    }
}

/// One teacher-forced episode: UNSAT records replay the teacher proof,
/// SAT records run greedy derivations while supervising the decoder.
pub fn teacher_force_episode(model: &Model, record: &Record, cfg: &TrainConfig) -> Result<EpisodeOutcome> {
    let (s, loss, steps, correct) = episode_loss(model, record, cfg)?;
    Ok(EpisodeOutcome {
        loss: s.tape.scalar(loss),
        grads: s.tape.backward(loss),
        steps,
        correct,
    })
}

/// Episode loss without gradients.
pub fn episode_loss_value(model: &Model, record: &Record, cfg: &TrainConfig) -> Result<f64> {
    let (s, loss, _, _) = episode_loss(model, record, cfg)?;
    Ok(s.tape.scalar(loss))
}

/// Episode loss with the tape's ReLU activation fingerprint, for
/// finite-difference checks that must not straddle a kink.
pub fn episode_loss_probe(model: &Model, record: &Record, cfg: &TrainConfig) -> Result<(f64, u64)> {
    let (s, loss, _, _) = episode_loss(model, record, cfg)?;
    Ok((s.tape.scalar(loss), s.tape.activation_pattern()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub episode: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub updates: usize,
    pub epoch_loss: Vec<f64>,
    /// Running teacher-forced top-1 accuracy per epoch (UNSAT steps).
    pub epoch_accuracy: Vec<f64>,
    pub log: Vec<LogRow>,
}

/// Per-episode Adam updates with gradient clipping and a learning rate that
/// decays linearly to zero at the final update.
pub fn train(model: &mut Model, records: &[Record], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = (cfg.epochs * records.len()) as u64;
    let adam = Adam::default();
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..records.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut steps, mut correct) = (0.0, 0, 0);
        for (k, &idx) in order.iter().enumerate() {
            let mut out = teacher_force_episode(model, &records[idx], cfg)?;
            report.updates += 1;
            let lr = lr_schedule(cfg.lr, report.updates as u64, total);
            let grad_norm = clip_gradients(&mut out.grads, cfg.clip_norm);
            if !out.grads.is_finite() {
                return Err(ModelError::InvariantBreach(format!("non-finite gradient on {}", records[idx].entry.id)));
            }
            adam_step(&mut model.store, &out.grads, lr, &adam);
            loss_sum += out.loss;
            steps += out.steps;
            correct += out.correct;
            report.log.push(LogRow {
                epoch,
                episode: k,
                loss: out.loss,
                lr,
                grad_norm,
            });
        }
        let mean = loss_sum / records.len().max(1) as f64;
        let acc = if steps > 0 { correct as f64 / steps as f64 } else { 0.0 };
        report.epoch_loss.push(mean);
        report.epoch_accuracy.push(acc);
        report.epochs_run = epoch + 1;
        debug!(epoch, loss = mean, accuracy = acc, "epoch");
        if cfg.target_accuracy.is_some_and(|t| steps > 0 && acc >= t) {
            info!(epoch, accuracy = acc, "target accuracy reached");
            break;
        }
    }
    Ok(report)
}

/// Fraction of teacher steps (UNSAT records) where the greedy pick equals
/// the teacher's pair, with the teacher's pairs executed throughout.
pub fn teacher_forced_accuracy(model: &Model, records: &[Record], cfg: &TrainConfig) -> Result<f64> {
    let counts: Vec<(usize, usize)> = records
        .par_iter()
        .filter(|r| r.is_unsat())
        .map(|r| episode_loss(model, r, cfg).map(|(_, _, steps, correct)| (steps, correct)))
        .collect::<Result<_>>()?;
    let (steps, correct) = counts.iter().fold((0, 0), |(s, c), &(a, b)| (s + a, c + b));
    Ok(if steps == 0 { 0.0 } else { correct as f64 / steps as f64 })
}

/// Trains the satisfiability head on frozen literal embeddings; returns
/// the mean BCE per epoch.
pub fn train_classifier(model: &mut Model, records: &[Record], epochs: usize, lr: f64, seed: u64) -> Result<Vec<f64>> {
    let embedded: Vec<(Mat, f64)> = records
        .par_iter()
        .map(|r| {
            let s = Session::new(model, &r.formula.inputs_only(), Default::default());
            (s.literal_embeddings().clone(), if r.is_unsat() { 0.0 } else { 1.0 })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = (epochs * records.len()) as u64;
    let adam = Adam::default();
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    let mut step = 0u64;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for &i in &order {
            let (x, y) = &embedded[i];
            let mut tape = Tape::new();
            let xv = tape.input(x.clone());
            let votes = model.classifier.forward(&mut tape, &model.store, xv)?;
            let z = tape.mean_rows(votes);
            let loss = tape.bce_with_logits(z, vec![*y]);
            sum += tape.scalar(loss);
            let grads = tape.backward(loss);
            step += 1;
            adam_step(&mut model.store, &grads, lr_schedule(lr, step, total), &adam);
        }
        losses.push(sum / records.len().max(1) as f64);
    }
    Ok(losses)
}

/// Reduction accounting over the UNSAT records of a dataset, relative to
/// each record's original teacher proof.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReductionStats {
    pub pass: usize,
    pub proofs: usize,
    pub proofs_reduced: usize,
    pub replaced_this_pass: usize,
    pub max_depth: u32,
    /// Mean depth over reduced proofs.
    pub avg_depth: f64,
    pub max_reduction_pct: f64,
    /// Mean per-proof reduction over reduced proofs.
    pub avg_reduction_pct: f64,
    pub proofs_reduced_pct: f64,
    pub total_reduction_pct: f64,
    pub total_steps: usize,
    pub teacher_steps: usize,
}

pub fn reduction_stats(records: &[Record], pass: usize, replaced: usize) -> ReductionStats {
    let mut st = ReductionStats {
        pass,
        replaced_this_pass: replaced,
        ..Default::default()
    };
    let (mut depth_sum, mut red_sum) = (0.0, 0.0);
    for r in records.iter().filter(|r| r.is_unsat()) {
        let Some(now) = r.proof_len() else { continue };
        let orig = r.entry.teacher_proof_len.unwrap_or(now).max(now);
        st.proofs += 1;
        st.total_steps += now;
        st.teacher_steps += orig;
        if r.entry.reduction_depth > 0 && now < orig {
            let red = 100.0 * (orig - now) as f64 / orig as f64;
            st.proofs_reduced += 1;
            st.max_depth = st.max_depth.max(r.entry.reduction_depth);
            st.max_reduction_pct = st.max_reduction_pct.max(red);
            depth_sum += f64::from(r.entry.reduction_depth);
            red_sum += red;
        }
    }
    if st.proofs_reduced > 0 {
        st.avg_depth = depth_sum / st.proofs_reduced as f64;
        st.avg_reduction_pct = red_sum / st.proofs_reduced as f64;
    }
    if st.proofs > 0 {
        st.proofs_reduced_pct = 100.0 * st.proofs_reduced as f64 / st.proofs as f64;
    }
    if st.teacher_steps > 0 {
        st.total_reduction_pct = 100.0 * (st.teacher_steps - st.total_steps) as f64 / st.teacher_steps as f64;
    }
    st
}

/// Model-only proof attempts for every UNSAT record, each limited to
/// `ratio` times its stored proof length. Runs in parallel.
pub fn roll_proofs(model: &Model, records: &[Record], eval: &EvalConfig) -> Vec<Option<ResolutionProof>> {
    records
        .par_iter()
        .map(|r| {
            let stored = r.proof_len()?;
            if !r.is_unsat() {
                return None;
            }
            let cfg = EpisodeConfig {
                k: 1,
                limits: Limits {
                    max_derivations: eval.ratio * stored,
                    max_trials: 0,
                },
            };
            let ep = run_episode(model, &r.formula, &cfg);
            (ep.verdict == EpisodeVerdict::Unsat).then_some(ep.proof).flatten()
        })
        .collect()
}

/// Installs every candidate strictly shorter than the stored proof. All
/// installable candidates are verified first; one failure aborts the pass
/// with the records untouched. Returns the replaced record indices.
pub fn apply_candidates(records: &mut [Record], candidates: Vec<Option<ResolutionProof>>) -> Result<Vec<usize>> {
    assert_eq!(records.len(), candidates.len(), "one candidate slot per record");
    let mut accepted = Vec::new();
    for (i, (r, cand)) in records.iter().zip(candidates).enumerate() {
        let (Some(cand), Some(stored)) = (cand, r.proof_len()) else { continue };
        if cand.len() >= stored {
            continue;
        }
        let report = check_proof(&r.formula, &cand);
        if !report.valid {
            return Err(ModelError::InvariantBreach(format!(
                "replacement proof for {} fails at step {:?}: {}",
                r.entry.id,
                report.failed_step,
                report.reason.unwrap_or_default()
            )));
        }
        accepted.push((i, cand));
    }
    let mut replaced = Vec::with_capacity(accepted.len());
    for (i, cand) in accepted {
        let r = &mut records[i];
        if r.entry.teacher_proof_len.is_none() {
            r.entry.teacher_proof_len = r.proof_len();
        }
        r.entry.proof_len = Some(cand.len());
        r.entry.reduction_depth += 1;
        r.certificate = Certificate::Proof(cand);
        replaced.push(i);
    }
    Ok(replaced)
}

/// Rolls, verifies and installs shorter model proofs; rewrites replaced
/// certificates and the manifest on disk.
pub fn bootstrap_pass(model: &Model, data: &mut Dataset, eval: &EvalConfig, pass: usize) -> Result<ReductionStats> {
    let before = data.total_proof_steps();
    let candidates = roll_proofs(model, &data.records, eval);
    let replaced = apply_candidates(&mut data.records, candidates)?;
    for &i in &replaced {
        data.save_record(i)?;
    }
    let after = data.total_proof_steps();
    if after > before {
        return Err(ModelError::InvariantBreach(format!("total proof steps grew from {before} to {after}")));
    }
    let stats = reduction_stats(&data.records, pass, replaced.len());
    info!(pass, replaced = replaced.len(), total_steps = after, "bootstrap pass");
    Ok(stats)
}

/// Alternates `epochs_per_pass` training epochs with bootstrap passes.
pub fn bootstrap_train(
    model: &mut Model,
    data: &mut Dataset,
    cfg: &TrainConfig,
    eval: &EvalConfig,
    passes: usize,
) -> Result<Vec<ReductionStats>> {
    let mut series = Vec::with_capacity(passes);
    let mut tc = cfg.clone();
    tc.epochs = cfg.epochs_per_pass;
    for pass in 1..=passes {
        tc.seed = cfg.seed.wrapping_add(pass as u64);
        if tc.epochs > 0 {
            train(model, &data.records, &tc)?;
        }
        series.push(bootstrap_pass(model, data, eval, pass)?);
    }
    Ok(series)
}

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    crate::harness::write_csv(path, rows)
}
