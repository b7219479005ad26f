//! The `qmf` command line: `tessellate`, `verify` and `converge`.
//!
//! Reports are JSON with `"schema_version": 1`; every floating-point number
//! is written as a string with 17 significant digits so that identical
//! configurations give byte-identical output.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::seq::IteratorRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::algebra::{LocalOperator, ProductOperator};
use crate::config::{ConfigError, RunConfig, RunError};
use crate::field::{ConvergenceReport, FieldError, FieldSpec};
use crate::graph::Region;
use crate::linalg::{self, ONE};
use crate::rng::stream_rng;
use crate::transition::MarkovTriplet;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_CAP: i32 = 3;
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "qmf", version, about = "Forward quantum Markov fields on locally finite graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the tessellation and check the standing conditions.
    Tessellate(CommonArgs),
    /// Run every structural and numerical check of a field configuration.
    Verify(CommonArgs),
    /// Evaluate the state sequence on each observable and report stabilization.
    Converge(CommonArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-level values as CSV (`converge` only).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Overrides the localization, equivalence and stabilization tolerances.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_dim: Option<usize>,
    #[arg(long)]
    pub enum_seed: Option<u64>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Add the runtime to the report under "envelope".
    #[arg(long)]
    pub timing: bool,
}

/// Float as a decimal string with 17 significant digits.
pub fn num(x: f64) -> Value {
    Value::String(format!("{x:.16e}"))
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("report types serialize")
}

fn load(args: &CommonArgs) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::from_file(&args.config)?;
    if let Some(d) = args.depth {
        cfg.depth = d;
    }
    if let Some(m) = args.max_dim {
        cfg.max_dim = Some(m);
    }
    if let Some(s) = args.enum_seed {
        cfg.enum_seed = Some(s);
    }
    if let Some(t) = args.tol {
        cfg.tolerances.localization = t;
        cfg.tolerances.equivalence = t;
        cfg.tolerances.stabilization = t;
    }
    Ok(cfg)
}

fn header(command: &str, cfg: &RunConfig) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    m.insert("command".into(), json!(command));
    m.insert("graph".into(), to_value(&cfg.graph));
    m.insert("root".into(), to_value(&cfg.root));
    m.insert("depth".into(), json!(cfg.depth));
    m.insert("enumeration".into(), to_value(&cfg.enumeration()));
    m
}

/// Result of one subcommand: report, optional CSV and exit code.
pub struct Outcome {
    pub report: Value,
    pub csv: Option<String>,
    pub code: i32,
}

fn input_error(e: impl std::fmt::Display) -> Outcome {
    Outcome { report: json!({"schema_version": SCHEMA_VERSION, "error": e.to_string()}), csv: None, code: EXIT_INPUT }
}

fn field_error_code(e: &FieldError) -> i32 {
    match e {
        FieldError::Cap { .. } => EXIT_CAP,
        FieldError::ConditionsFailed(_) => EXIT_FAIL,
        _ => EXIT_INPUT,
    }
}

pub fn tessellate(cfg: &RunConfig) -> Outcome {
    let tess = match cfg.tessellation() {
        Ok(t) => t,
        Err(e) => return input_error(e),
    };
    let conditions = tess.check_conditions();
    let invariants = tess.invariant_violations();
    let partitions: Vec<Value> = (1..tess.depth())
        .map(|n| to_value(&tess.verify_partition(n).expect("level in range")))
        .collect();
    let exhaustive = tess.verify_exhaustive(tess.v_infty_prefix());
    let pass = conditions.all_pass()
        && invariants.is_empty()
        && partitions.iter().all(|p| p["successors_hold"] == json!(true) && p["previous_hold"] == json!(true))
        && exhaustive.pass;
    let mut m = header("tessellate", cfg);
    m.insert("tessellation".into(), to_value(&tess.dump()));
    m.insert(
        "sizes".into(),
        Value::Array(
            tess.levels()
                .iter()
                .map(|l| {
                    json!({"n": l.n, "v": l.v.len(), "in_boundary": l.in_boundary.len(),
                           "out_boundary": l.out_boundary.len(), "interior": l.interior.len()})
                })
                .collect(),
        ),
    );
    m.insert("conditions".into(), to_value(&conditions));
    m.insert("invariant_violations".into(), to_value(&invariants));
    m.insert("partitions".into(), Value::Array(partitions));
    m.insert("exhaustive".into(), to_value(&exhaustive));
    m.insert("pass".into(), json!(pass));
    Outcome { report: Value::Object(m), csv: None, code: if pass { EXIT_PASS } else { EXIT_FAIL } }
}

struct Check {
    name: &'static str,
    subject: Value,
    result: Result<(bool, Option<f64>, Value), FieldError>,
}

impl Check {
    fn to_json(&self) -> Value {
        match &self.result {
            Ok((pass, residual, detail)) => json!({
                "name": self.name,
                "subject": self.subject,
                "pass": pass,
                "residual": residual.map(num),
                "detail": detail,
            }),
            Err(e) => json!({
                "name": self.name,
                "subject": self.subject,
                "pass": false,
                "cap_exceeded": e.is_cap(),
                "error": e.to_string(),
            }),
        }
    }
}

/// Unit-norm random operator on a random non-empty subset (at most 3 sites)
/// of `pool`.
fn random_local(field: &FieldSpec, pool: &Region, rng: &mut impl Rng) -> Result<LocalOperator, FieldError> {
    let size = rng.random_range(1..=pool.len().min(3));
    let sites: Region = pool.iter().cloned().choose_multiple(rng, size).into_iter().collect();
    let d = field.dims().region_dim(&sites)?;
    Ok(LocalOperator::new(sites, field.dims(), linalg::random_unit(rng, d, d))?)
}

fn level_markov_check(field: &FieldSpec, n: usize, samples: usize, seed: u64) -> Result<(bool, Option<f64>, Value), FieldError> {
    let tess = field.tessellation();
    let next = tess.level(n + 1).unwrap();
    let pool = if n == 0 { next.v.clone() } else { next.v.difference(&tess.level(n).unwrap().interior) };
    let mut rng = stream_rng(seed, 1000 + n as u64);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let a = random_local(field, &pool, &mut rng)?;
        worst = worst.max(field.level_localization(n, &ProductOperator::from_local(a))?);
    }
    Ok((worst <= field.tolerances().localization, Some(worst), json!({"samples": samples, "target": to_value(&next.in_boundary)})))
}

fn projectivity_check(field: &FieldSpec, n: usize, samples: usize, seed: u64) -> Result<(bool, Option<f64>, Value), FieldError> {
    let boundary = field.tessellation().level(n).unwrap().in_boundary.clone();
    let mut rng = stream_rng(seed, 2000 + n as u64);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let b: Vec<LocalOperator> = boundary
            .iter()
            .map(|x| {
                let d = field.dims().dim(x)?;
                LocalOperator::single_site(x.clone(), linalg::random_unit(&mut rng, d, d))
            })
            .collect::<Result<_, _>>()?;
        worst = worst.max(field.verify_projectivity(n, &b)?.residual);
    }
    Ok((worst <= field.tolerances().equivalence, Some(worst), json!({"samples": samples})))
}

pub fn verify(cfg: &RunConfig) -> Outcome {
    let field = match cfg.field() {
        Ok(f) => f,
        Err(RunError::Config(e)) => return input_error(e),
        Err(RunError::Field(e)) => return field_failure("verify", cfg, e),
    };
    let observables = match cfg.observables() {
        Ok(o) => o,
        Err(e) => return input_error(e),
    };
    let tol = *field.tolerances();
    let tess = field.tessellation();
    let mut checks: Vec<Check> = Vec::new();

    let invariants = tess.invariant_violations();
    checks.push(Check {
        name: "tessellation_invariants",
        subject: Value::Null,
        result: Ok((invariants.is_empty(), None, to_value(&invariants))),
    });
    for n in 1..tess.depth() {
        let p = tess.verify_partition(n).expect("level in range");
        checks.push(Check { name: "partition", subject: json!({"level": n}), result: Ok((p.pass(), None, to_value(&p))) });
    }

    let per_map: Vec<Vec<Check>> = field
        .maps()
        .par_iter()
        .map(|te| {
            let subject = json!({"site": to_value(te.site())});
            let cp = te.is_cp_unital(tol.psd, tol.unital);
            let markov = te.is_markov_te(&MarkovTriplet::plaquette(te), tol.localization).map_err(FieldError::from);
            let comp = te.check_compatibility(field.phi0(), tol.compatibility).map_err(FieldError::from);
            vec![
                Check {
                    name: "cp_unital",
                    subject: subject.clone(),
                    result: Ok((
                        cp.pass(),
                        Some((-cp.min_choi_eigenvalue).max(0.0).max(cp.unital_residual)),
                        json!({"cp": cp.cp, "min_choi_eigenvalue": num(cp.min_choi_eigenvalue),
                               "choi_hermitian_residual": num(cp.choi_hermitian_residual),
                               "unital": cp.unital, "unital_residual": num(cp.unital_residual)}),
                    )),
                },
                Check {
                    name: "markov",
                    subject: subject.clone(),
                    result: markov.map(|r| (r.pass, Some(r.worst_residual), json!({"basis_size": r.basis_size}))),
                },
                Check {
                    name: "compatibility",
                    subject,
                    result: comp.map(|r| (r.pass, Some(r.max_deviation), json!({"functional_norm": num(r.functional_norm)}))),
                },
            ]
        })
        .collect();
    checks.extend(per_map.into_iter().flatten());

    let levels: Vec<usize> = (0..=field.max_level()).collect();
    let level_checks: Vec<Vec<Check>> = levels
        .par_iter()
        .map(|&n| {
            let mut out = vec![Check {
                name: "level_markov",
                subject: json!({"level": n}),
                result: level_markov_check(&field, n, cfg.verify_samples, cfg.verify_seed),
            }];
            if n >= 1 {
                out.push(Check {
                    name: "projectivity",
                    subject: json!({"level": n}),
                    result: projectivity_check(&field, n, cfg.verify_samples, cfg.verify_seed),
                });
            }
            let unit = field.phi_n(n, &LocalOperator::scalar(ONE)).map(|z| {
                let r = (z - ONE).norm();
                (r <= tol.equivalence, Some(r), Value::Null)
            });
            out.push(Check { name: "unit", subject: json!({"level": n}), result: unit });
            out
        })
        .collect();
    checks.extend(level_checks.into_iter().flatten());

    let field_ref = &field;
    let oracle_checks: Vec<Check> = observables
        .par_iter()
        .flat_map_iter(|(name, a)| {
            let field = field_ref;
            levels.iter().filter_map(move |&n| {
                let dim = field.oracle_dim(n, a)?;
                (dim <= field.max_dim()).then(|| {
                    let result = field.phi_n(n, a).and_then(|p| {
                        let o = field.oracle_eval(n, a)?;
                        let r = (p - o).norm();
                        Ok((r <= tol.equivalence, Some(r), json!({"phi_n": num(p.re), "oracle": num(o.re), "dimension": dim})))
                    });
                    Check { name: "oracle_equivalence", subject: json!({"observable": name, "level": n}), result }
                })
            })
        })
        .collect();
    checks.extend(oracle_checks);

    let cap = checks.iter().any(|c| matches!(&c.result, Err(e) if e.is_cap()));
    let other_error = checks.iter().any(|c| matches!(&c.result, Err(e) if !e.is_cap()));
    let pass = checks.iter().all(|c| matches!(c.result, Ok((true, _, _))));
    for c in checks.iter().filter(|c| c.result.is_err()) {
        eprintln!("check {} {}: {}", c.name, c.subject, c.result.as_ref().err().unwrap());
    }
    let mut m = header("verify", cfg);
    m.insert("checks".into(), Value::Array(checks.iter().map(Check::to_json).collect()));
    m.insert("pass".into(), json!(pass));
    let code = if cap {
        EXIT_CAP
    } else if other_error {
        EXIT_INPUT
    } else if pass {
        EXIT_PASS
    } else {
        EXIT_FAIL
    };
    Outcome { report: Value::Object(m), csv: None, code }
}

fn field_failure(command: &str, cfg: &RunConfig, e: FieldError) -> Outcome {
    let mut m = header(command, cfg);
    if let FieldError::ConditionsFailed(_) = e {
        if let Ok(t) = cfg.tessellation() {
            m.insert("conditions".into(), to_value(&t.check_conditions()));
        }
    }
    m.insert("error".into(), json!(e.to_string()));
    m.insert("pass".into(), json!(false));
    Outcome { report: Value::Object(m), csv: None, code: field_error_code(&e) }
}

fn convergence_json(r: &ConvergenceReport) -> Value {
    json!({
        "observable": r.observable,
        "support": to_value(&r.support),
        "covering_level": r.covering_level,
        "levels": r.levels,
        "values": r.values.iter().copied().map(num).collect::<Vec<_>>(),
        "max_imaginary": num(r.max_imaginary),
        "successive_deviations": r.successive_deviations.iter().copied().map(num).collect::<Vec<_>>(),
        "max_successive_deviation": num(r.max_successive_deviation),
        "stabilization_index": r.stabilization_index,
        "tail_stabilization_index": r.tail_stabilization_index,
        "clusters": r.clusters,
        "all_compatible": r.all_compatible,
        "verdict": r.verdict.as_str(),
        "intermediate_localization": r.intermediate_localization.map(num),
    })
}

pub fn converge(cfg: &RunConfig) -> Outcome {
    let field = match cfg.field() {
        Ok(f) => f,
        Err(RunError::Config(e)) => return input_error(e),
        Err(RunError::Field(e)) => return field_failure("converge", cfg, e),
    };
    let observables = match cfg.observables() {
        Ok(o) => o,
        Err(e) => return input_error(e),
    };
    let tol = field.tolerances().stabilization;
    let results: Vec<Result<ConvergenceReport, FieldError>> =
        observables.par_iter().map(|(name, a)| field.convergence_report(name, a, tol)).collect();
    let mut code = EXIT_PASS;
    let mut reports = Vec::new();
    let mut csv = String::from("observable,n,value\n");
    for r in &results {
        match r {
            Ok(rep) => {
                if rep.verdict != crate::field::Verdict::Stabilized {
                    code = code.max(EXIT_FAIL);
                }
                for (n, v) in rep.levels.iter().zip(&rep.values) {
                    csv.push_str(&format!("{},{},{:.16e}\n", rep.observable, n, v));
                }
                reports.push(convergence_json(rep));
            }
            Err(e) => {
                let c = if e.is_cap() { EXIT_CAP } else { EXIT_INPUT };
                code = if code == EXIT_CAP || c == EXIT_CAP { EXIT_CAP } else { c.max(code) };
                reports.push(json!({"error": e.to_string(), "cap_exceeded": e.is_cap()}));
            }
        }
    }
    let mut m = header("converge", cfg);
    m.insert("tolerance".into(), num(tol));
    m.insert("reports".into(), Value::Array(reports));
    m.insert("pass".into(), json!(code == EXIT_PASS));
    Outcome { report: Value::Object(m), csv: Some(csv), code }
}

fn configure_threads() {
    if let Some(n) = std::env::var("QMF_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        // a second initialization in the same process is harmless to ignore
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    configure_threads();
    let start = Instant::now();
    let (name, args) = match &cli.command {
        Command::Tessellate(a) => ("tessellate", a),
        Command::Verify(a) => ("verify", a),
        Command::Converge(a) => ("converge", a),
    };
    let mut outcome = match load(args) {
        Err(e) => input_error(e),
        Ok(cfg) => match name {
            "tessellate" => tessellate(&cfg),
            "verify" => verify(&cfg),
            _ => converge(&cfg),
        },
    };
    let elapsed = start.elapsed().as_secs_f64();
    if args.timing {
        if let Value::Object(m) = &mut outcome.report {
            m.insert("envelope".into(), json!({"runtime_seconds": num(elapsed)}));
        }
    }
    if let Some(err) = outcome.report.get("error") {
        eprintln!("error: {}", err.as_str().unwrap_or_default());
    }
    let text = serde_json::to_string_pretty(&outcome.report).expect("json") + "\n";
    let written = match &args.out {
        Some(path) => std::fs::write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return EXIT_INPUT;
    }
    if let (Some(path), Some(csv)) = (&args.csv, &outcome.csv) {
        if let Err(e) = std::fs::write(path, csv) {
            eprintln!("error: cannot write csv: {e}");
            return EXIT_INPUT;
        }
    }
    eprintln!("{name}: exit {} in {elapsed:.3} s", outcome.code);
    outcome.code
}
