//! On-disk datasets: DIMACS formulas, certificates and a JSON-lines manifest.
//!
//! Layout: `<dir>/fXXXX.cnf`, `<dir>/fXXXX.trace` (UNSAT) or
//! `<dir>/fXXXX.assign` (SAT), and `<dir>/manifest.jsonl`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::cnf::{Assignment, CnfFormula};
use crate::dimacs::{emit_assignment, emit_dimacs, parse_assignment, parse_dimacs};
use crate::error::{Error, Result};
use crate::resolution::{check_assignment, check_proof, CheckReport, ResolutionProof};
use crate::srgen::{generate_sr_pair, SrConfig};
use crate::teacher::{solve, SolveResult, Verdict};
use crate::trace::{emit_trace, parse_trace};

pub const MANIFEST: &str = "manifest.jsonl";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// DIMACS file, relative to the dataset directory.
    pub path: String,
    /// Variable count.
    pub n: usize,
    pub num_clauses: usize,
    pub verdict: Verdict,
    /// `.trace` or `.assign` file, relative to the dataset directory.
    pub certificate: String,
    /// Length of the stored proof (UNSAT only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof_len: Option<usize>,
    /// Length of the solver's original proof, kept across bootstrap rewrites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_proof_len: Option<usize>,
    #[serde(default)]
    pub reduction_depth: u32,
    #[serde(default)]
    pub decisions: u64,
    #[serde(default)]
    pub propagations: u64,
}

/// Which formulas of each SR pair to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Unsat,
    Sat,
    Both,
}

#[derive(Clone, Debug)]
pub enum Certificate {
    Proof(ResolutionProof),
    Assignment(Assignment),
}

impl Certificate {
    pub fn check(&self, f: &CnfFormula) -> CheckReport {
        match self {
            Certificate::Proof(p) => check_proof(f, p),
            Certificate::Assignment(a) => check_assignment(f, a),
        }
    }

    pub fn proof(&self) -> Option<&ResolutionProof> {
        match self {
            Certificate::Proof(p) => Some(p),
            Certificate::Assignment(_) => None,
        }
    }

    pub fn assignment(&self) -> Option<&Assignment> {
        match self {
            Certificate::Assignment(a) => Some(a),
            Certificate::Proof(_) => None,
        }
    }
}

/// A formula with its certificate, loaded from a dataset.
#[derive(Clone, Debug)]
pub struct Record {
    pub entry: ManifestEntry,
    pub formula: CnfFormula,
    pub certificate: Certificate,
}

impl Record {
    pub fn is_unsat(&self) -> bool {
        self.entry.verdict == Verdict::Unsat
    }

    pub fn proof_len(&self) -> Option<usize> {
        self.certificate.proof().map(|p| p.len())
    }
}

fn certificate_of(result: &SolveResult) -> Certificate {
    match result.verdict {
        Verdict::Unsat => Certificate::Proof(result.proof.clone().expect("UNSAT carries proof")),
        Verdict::Sat => Certificate::Assignment(result.assignment.clone().expect("SAT carries model")),
    }
}

fn entry_for(id: &str, f: &CnfFormula, result: &SolveResult) -> ManifestEntry {
    let ext = match result.verdict {
        Verdict::Unsat => "trace",
        Verdict::Sat => "assign",
    };
    let proof_len = result.proof.as_ref().map(|p| p.len());
    ManifestEntry {
        id: id.to_string(),
        path: format!("{id}.cnf"),
        n: f.num_vars(),
        num_clauses: f.num_input(),
        verdict: result.verdict,
        certificate: format!("{id}.{ext}"),
        proof_len,
        teacher_proof_len: proof_len,
        reduction_depth: 0,
        decisions: result.stats.decisions,
        propagations: result.stats.propagations,
    }
}

/// Solves `f`, checks the certificate, and fails loudly if it does not verify.
pub fn certify(f: &CnfFormula) -> Result<(SolveResult, Certificate)> {
    let result = solve(f)?;
    let cert = certificate_of(&result);
    let report = cert.check(f);
    if !report.valid {
        return Err(Error::Certificate(report.reason.unwrap_or_default()));
    }
    Ok((result, cert))
}

pub fn write_certificate(dir: &Path, entry: &ManifestEntry, f: &CnfFormula, cert: &Certificate) -> Result<()> {
    let text = match cert {
        Certificate::Proof(p) => emit_trace(p, f),
        Certificate::Assignment(a) => emit_assignment(a),
    };
    fs::write(dir.join(&entry.certificate), text)?;
    Ok(())
}

pub fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(dir.join(MANIFEST))?;
    file.write_all(&out)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Generates `count` SR pairs, certifies every kept formula with the
/// teacher solver and writes the dataset. Pair `i` is seeded from
/// `(cfg.rng_seed, i)`, so output is independent of thread scheduling.
pub fn generate_dataset(
    cfg: &SrConfig,
    count: usize,
    kind: PairKind,
    out_dir: &Path,
) -> Result<Vec<ManifestEntry>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;

    let formulas: Vec<Vec<CnfFormula>> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = cfg.pair_rng(i);
            let pair = generate_sr_pair(cfg, &mut rng)?;
            Ok(match kind {
                PairKind::Unsat => vec![pair.unsat_formula],
                PairKind::Sat => vec![pair.sat_formula],
                PairKind::Both => vec![pair.unsat_formula, pair.sat_formula],
            })
        })
        .collect::<Result<_>>()?;
    let formulas: Vec<CnfFormula> = formulas.into_iter().flatten().collect();

    let certified: Vec<(SolveResult, Certificate)> =
        formulas.par_iter().map(certify).collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(formulas.len());
    for (i, (f, (result, cert))) in formulas.iter().zip(&certified).enumerate() {
        let id = format!("f{i:04}");
        let entry = entry_for(&id, f, result);
        fs::write(out_dir.join(&entry.path), emit_dimacs(f))?;
        write_certificate(out_dir, &entry, f, cert)?;
        entries.push(entry);
    }
    write_manifest(out_dir, &entries)?;
    Ok(entries)
}

pub fn load_formula(dir: &Path, entry: &ManifestEntry) -> Result<CnfFormula> {
    parse_dimacs(&fs::read_to_string(dir.join(&entry.path))?)
}

pub fn load_certificate(dir: &Path, entry: &ManifestEntry, f: &CnfFormula) -> Result<Certificate> {
    let text = fs::read_to_string(dir.join(&entry.certificate))?;
    Ok(match entry.verdict {
        Verdict::Unsat => {
            let t = parse_trace(&text)?;
            if !t.matches(f) {
                return Err(Error::Certificate(format!(
                    "{}: trace inputs differ from the formula",
                    entry.id
                )));
            }
            Certificate::Proof(t.proof)
        }
        Verdict::Sat => Certificate::Assignment(parse_assignment(&text, f.num_vars())?),
    })
}

/// An in-memory dataset bound to its directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn load(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let records = read_manifest(&dir)?
            .into_iter()
            .map(|entry| {
                let formula = load_formula(&dir, &entry)?;
                let certificate = load_certificate(&dir, &entry, &formula)?;
                Ok(Record {
                    entry,
                    formula,
                    certificate,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { dir, records })
    }

    pub fn entries(&self) -> Vec<ManifestEntry> {
        self.records.iter().map(|r| r.entry.clone()).collect()
    }

    /// Rewrites the certificate of record `idx` and the manifest.
    pub fn save_record(&self, idx: usize) -> Result<()> {
        let r = &self.records[idx];
        write_certificate(&self.dir, &r.entry, &r.formula, &r.certificate)?;
        write_manifest(&self.dir, &self.entries())
    }

    pub fn save(&self) -> Result<()> {
        for r in &self.records {
            write_certificate(&self.dir, &r.entry, &r.formula, &r.certificate)?;
        }
        write_manifest(&self.dir, &self.entries())
    }

    /// Total stored proof steps over UNSAT records.
    pub fn total_proof_steps(&self) -> usize {
        self.records.iter().filter_map(|r| r.proof_len()).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BatchReport {
    pub solved: usize,
    pub failures: Vec<String>,
}

/// Runs the teacher over every manifest entry, rewriting certificates and
/// solver statistics. Failures are logged and the batch continues.
pub fn solve_batch(dir: &Path) -> Result<BatchReport> {
    let entries = read_manifest(dir)?;
    let outcomes: Vec<std::result::Result<(ManifestEntry, CnfFormula, Certificate), String>> = entries
        .par_iter()
        .map(|e| {
            let f = load_formula(dir, e).map_err(|err| format!("{}: {err}", e.id))?;
            let (result, cert) = certify(&f).map_err(|err| format!("{}: {err}", e.id))?;
            let mut updated = entry_for(&e.id, &f, &result);
            updated.path = e.path.clone();
            Ok((updated, f, cert))
        })
        .collect();

    let mut report = BatchReport::default();
    let mut out = Vec::with_capacity(entries.len());
    for (orig, outcome) in entries.into_iter().zip(outcomes) {
        match outcome {
            Ok((entry, f, cert)) => {
                write_certificate(dir, &entry, &f, &cert)?;
                out.push(entry);
                report.solved += 1;
            }
            Err(msg) => {
                warn!("teacher failed on {msg}");
                report.failures.push(msg);
                out.push(orig);
            }
        }
    }
    write_manifest(dir, &out)?;
    Ok(report)
}
