//! Command-line front end. Exit codes: 0 success, 1 verification or
//! runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use resprover_core::dataset::{generate_dataset, solve_batch, Dataset, PairKind};
use resprover_core::dimacs::{parse_assignment, parse_dimacs};
use resprover_core::srgen::{generate_sr_pair, SrConfig};
use resprover_core::trace::parse_trace;
use resprover_core::{check_assignment, check_proof};

use crate::config::Settings;
use crate::harness::{evaluate, generalization_curve, write_csv};
use crate::model::Model;
use crate::policy::count_parameters;
use crate::training::{bootstrap_train, train, train_classifier, write_log};

#[derive(Debug, Parser)]
#[command(name = "resprover", version, about = "Neural resolution prover with certified verdicts")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Settings file: `key = value` lines or a JSON object.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set d=64`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate and certify an SR(U(n_min, n_max)) dataset.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 10)]
        n_min: usize,
        #[arg(long, default_value_t = 40)]
        n_max: usize,
        #[arg(long, value_enum, default_value = "both")]
        kind: Kind,
    },
    /// Re-solve every formula of a dataset and rewrite its certificates.
    Teach {
        #[arg(long)]
        data: PathBuf,
    },
    /// Teacher-forced training.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint instead of a fresh model.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Per-episode CSV log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Alternate training with proof-shortening passes, rewriting the dataset.
    Bootstrap {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        passes: usize,
        /// Per-pass reduction statistics CSV.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Run episodes on a dataset and report proven rates and proof lengths.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Include the satisfiability head's predictions.
        #[arg(long)]
        classify: bool,
        /// Write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// SAT success against the derivation budget for fresh SR(n) samples.
    Curve {
        #[arg(long)]
        model: PathBuf,
        /// Variable counts, one distribution each.
        #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a certificate against a DIMACS formula.
    Check {
        #[arg(long)]
        cnf: PathBuf,
        #[arg(long, conflicts_with = "assign", required_unless_present = "assign")]
        proof: Option<PathBuf>,
        #[arg(long)]
        assign: Option<PathBuf>,
    },
    /// Train the satisfiability head on a dataset and report its accuracy.
    Classify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        epochs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print parameter counts per scope.
    CountParams {
        /// Read the configuration from a checkpoint instead of the settings.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum Kind {
    Unsat,
    Sat,
    Both,
}

impl From<Kind> for PairKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Unsat => PairKind::Unsat,
            Kind::Sat => PairKind::Sat,
            Kind::Both => PairKind::Both,
        }
    }
}

fn settings(c: &Common) -> anyhow::Result<Settings> {
    let base = match &c.config {
        Some(p) => Settings::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => Settings::default(),
    };
    let mut s = base.apply_overrides(c.overrides.iter().map(String::as_str))?;
    if c.seed.is_some() {
        s.seed = c.seed;
    }
    Ok(s)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn load_model(path: &Path) -> anyhow::Result<Model> {
    Model::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let s = settings(&cli.common)?;
    let seed = s.seed.unwrap_or(0);
    match cli.cmd {
        Command::Gen {
            out,
            count,
            n_min,
            n_max,
            kind,
        } => {
            let entries = generate_dataset(&SrConfig::new(n_min, n_max, seed), count, kind.into(), &out)?;
            println!("wrote {} formulas to {}", entries.len(), out.display());
        }
        Command::Teach { data } => {
            let report = solve_batch(&data)?;
            println!("solved {}", report.solved);
            for f in &report.failures {
                eprintln!("failed: {f}");
            }
            if !report.failures.is_empty() {
                bail!("{} formulas failed", report.failures.len());
            }
        }
        Command::Train { data, out, init, log } => {
            let ds = Dataset::load(&data)?;
            let mut model = match init {
                Some(p) => load_model(&p)?,
                None => Model::new(s.model(), seed)?,
            };
            let report = train(&mut model, &ds.records, &s.train())?;
            model.save(&out)?;
            if let Some(p) = log {
                write_log(&p, &report.log)?;
            }
            println!(
                "epochs {} final loss {:.4} accuracy {:.3}",
                report.epochs_run,
                report.epoch_loss.last().copied().unwrap_or(f64::NAN),
                report.epoch_accuracy.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Bootstrap {
            data,
            model,
            out,
            passes,
            stats,
        } => {
            let mut ds = Dataset::load(&data)?;
            let mut m = load_model(&model)?;
            let series = bootstrap_train(&mut m, &mut ds, &s.train(), &s.eval(), passes)?;
            for st in &series {
                println!(
                    "pass {}: replaced {} total steps {} reduction {:.2}%",
                    st.pass, st.replaced_this_pass, st.total_steps, st.total_reduction_pct
                );
            }
            m.save(&out)?;
            if let Some(p) = stats {
                write_csv(&p, &series)?;
            }
        }
        Command::Eval {
            data,
            model,
            classify,
            report,
        } => {
            let ds = Dataset::load(&data)?;
            let m = load_model(&model)?;
            let r = evaluate(&m, &ds.records, &s.eval(), classify);
            let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
            println!(
                "proven sat {} unsat {} total {:.2} predicted {} p-len {} calls {}",
                fmt(r.proven_sat_pct),
                fmt(r.proven_unsat_pct),
                r.proven_total_pct,
                fmt(r.predicted_pct),
                fmt(r.mean_p_len),
                fmt(r.mean_model_calls)
            );
            if let Some(p) = report {
                fs::write(&p, serde_json::to_string_pretty(&r)?)?;
            }
        }
        Command::Curve {
            model,
            sizes,
            count,
            max_iter,
            out,
        } => {
            let m = load_model(&model)?;
            let mut dists = Vec::new();
            for &n in &sizes {
                let cfg = SrConfig::new(n, n, seed);
                let formulas = (0..count as u64)
                    .map(|i| generate_sr_pair(&cfg, &mut cfg.pair_rng(i)).map(|p| p.sat_formula))
                    .collect::<resprover_core::Result<Vec<_>>>()?;
                dists.push((format!("SR({n})"), formulas));
            }
            let rows = generalization_curve(&m, &dists, max_iter, s.eval().k);
            write_csv(&out, &rows)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Check { cnf, proof, assign } => {
            let f = parse_dimacs(&fs::read_to_string(&cnf)?)?;
            let report = match (proof, assign) {
                (Some(p), _) => {
                    let trace = parse_trace(&fs::read_to_string(&p)?).map_err(|e| anyhow!("trace rejected: {e}"))?;
                    if !trace.matches(&f) {
                        bail!("trace inputs differ from the formula");
                    }
                    check_proof(&f, &trace.proof)
                }
                (None, Some(a)) => check_assignment(&f, &parse_assignment(&fs::read_to_string(&a)?, f.num_vars())?),
                (None, None) => unreachable!("clap requires one certificate"),
            };
            if !report.valid {
                let at = report.failed_step.map_or("-".to_string(), |s| s.to_string());
                bail!("verification failed at step {at}: {}", report.reason.unwrap_or_default());
            }
            println!("valid");
        }
        Command::Classify {
            data,
            model,
            epochs,
            out,
        } => {
            let ds = Dataset::load(&data)?;
            let mut m = load_model(&model)?;
            if epochs > 0 {
                let losses = train_classifier(&mut m, &ds.records, epochs, s.train().lr, seed)?;
                println!("final classifier loss {:.4}", losses.last().copied().unwrap_or(f64::NAN));
            }
            let mut ec = s.eval();
            ec.flat_cap = 0;
            ec.trial_factor = 0;
            ec.ratio = 0;
            let r = evaluate(&m, &ds.records, &ec, true);
            println!("predicted {:.2}%", r.predicted_pct.unwrap_or(0.0));
            if let Some(p) = out {
                m.save(&p)?;
            }
        }
        Command::CountParams { model } => {
            let m = match model {
                Some(p) => load_model(&p)?,
                None => Model::new(s.model(), seed)?,
            };
            for scope in ["embed.", "select.", "decode.", "classify."] {
                println!("{scope:<10} {}", count_parameters(&m.store, scope));
            }
            println!("{:<10} {}", "total", m.store.total());
        }
    }
    Ok(())
}

