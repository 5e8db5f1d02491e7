//! The `qsdlab` command line: argument parsing, subcommand dispatch and
//! artifact emission.

pub mod args;
pub mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use qsdlab::discrete::{dsbp_classify, dsbp_qsd_pmf, dsbp_qsd_pmf_for_rate, DiscreteBranching, DsbpFlow};
use qsdlab::flow::{Flow, FlowConfig};
use qsdlab::mechanism::BranchingMechanism;
use qsdlab::montecarlo::{simulate_csbp, simulate_dsbp, simulate_feller, PathFlag, SimConfig};
use qsdlab::qsd::{evaluate_limit, LimitQuery, QsdSpec, Regime};
use qsdlab::{classify, fixtures, verify};

use args::{Cli, Command, DsbpAction, DsbpModelArgs, Format, RegimeArg};
use output::{render, Artifact, Cell, RunManifest, Table};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONTRACT: u8 = 1;
pub const EXIT_NUMERIC: u8 = 2;
pub const EXIT_VERIFY_FAILED: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qsdlab::Error),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Core(_) | CliError::Read { .. } | CliError::Write { .. } => EXIT_CONTRACT,
            CliError::Usage(_) => EXIT_USAGE,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse `argv` (program name first), run the subcommand and return the
/// process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> CliResult<u8> {
    if cli.threads > 0 {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let flow_cfg = {
        let mut cfg = FlowConfig::default();
        if let Some(tol) = cli.tol {
            cfg.rel_tol = tol;
        }
        cfg.validate()?;
        cfg
    };
    let (artifact, manifest, code) = match &cli.command {
        Command::Classify(a) => {
            if let Some(m) = &a.mech {
                let mech = load_mechanism(m)?;
                let class = classify(&mech)?;
                let doc = serde_json::to_value(&class).expect("classification serialises");
                let manifest = RunManifest::new("classify", mech_value(&mech), json!({}), None);
                (Artifact::Document(doc), manifest, EXIT_OK)
            } else {
                let d = load_dsbp(a.dsbp.as_deref().expect("clap enforces one model"))?;
                let class = dsbp_classify(&d)?;
                let doc = serde_json::to_value(class).expect("classification serialises");
                let manifest = RunManifest::new("classify", dsbp_value(&d), json!({}), None);
                (Artifact::Document(doc), manifest, EXIT_OK)
            }
        }
        Command::Flow(a) => {
            let mech = load_mechanism(&a.mech)?;
            let flow = Flow::new(&mech)?;
            let cfg = FlowConfig {
                backend: a.backend,
                ..flow_cfg
            };
            let grid: Vec<(f64, f64)> = a.t.iter().flat_map(|&t| a.lambda.iter().map(move |&l| (t, l))).collect();
            let results = grid
                .par_iter()
                .map(|&(t, l)| flow.u(t, l, &cfg))
                .collect::<qsdlab::Result<Vec<_>>>()?;
            let mut table = Table::new(&["t", "lambda", "u", "err_estimate", "gap"]);
            for ((t, l), r) in grid.iter().zip(results) {
                table.rows.push(vec![
                    Cell::Num(*t),
                    Cell::Num(*l),
                    Cell::Num(r.value),
                    Cell::Num(r.achieved_error_estimate),
                    r.agreement_gap.map(Cell::Num).unwrap_or(Cell::Empty),
                ]);
            }
            let params = json!({"t": a.t, "lambda": a.lambda, "flow": cfg});
            (Artifact::Table(table), RunManifest::new("flow", mech_value(&mech), params, None), EXIT_OK)
        }
        Command::Phi(a) => {
            let mech = load_mechanism(&a.mech)?;
            let flow = Flow::new(&mech)?;
            let explosive = flow.classification().almost_sure_explosion;
            let values = a
                .lambda
                .par_iter()
                .map(|&l| if explosive { flow.phi_explosive(l) } else { flow.phi_extinction(l) })
                .collect::<qsdlab::Result<Vec<_>>>()?;
            let mut table = Table::new(&["lambda", "phi"]);
            table
                .notes
                .insert("form".into(), json!(if explosive { "explosive" } else { "extinction" }));
            for (l, v) in a.lambda.iter().zip(values) {
                table.rows.push(vec![Cell::Num(*l), Cell::Num(v)]);
            }
            let params = json!({"lambda": a.lambda});
            (Artifact::Table(table), RunManifest::new("phi", mech_value(&mech), params, None), EXIT_OK)
        }
        Command::Qsd(a) => {
            let mech = load_mechanism(&a.mech)?;
            if let Some(which) = a.limit {
                if a.t.is_empty() {
                    return Err(CliError::Usage("--limit needs at least one --t".into()));
                }
                let flow = Flow::new(&mech)?;
                let mut table = Table::new(&["t", "lambda", "transform", "limit", "gap"]);
                for &t in &a.t {
                    let q = LimitQuery {
                        x: a.x,
                        t,
                        lambdas: a.lambda.clone(),
                        which,
                        s: a.s,
                    };
                    for row in evaluate_limit(&flow, &q)? {
                        table.rows.push(vec![
                            Cell::Num(t),
                            Cell::Num(row.lambda),
                            Cell::Num(row.transform),
                            Cell::Num(row.limit),
                            Cell::Num(row.gap),
                        ]);
                    }
                }
                let params = json!({"limit": which, "t": a.t, "lambda": a.lambda, "x": a.x, "s": a.s});
                (Artifact::Table(table), RunManifest::new("qsd", mech_value(&mech), params, None), EXIT_OK)
            } else {
                let beta = a.beta.expect("clap requires --beta without --limit");
                let regime = match a.regime {
                    RegimeArg::Explosive => Regime::Explosive,
                    RegimeArg::Extinction => Regime::Extinction,
                };
                let spec = QsdSpec::new(&mech, beta, regime)?;
                let mut table = Table::new(&["lambda", "laplace"]);
                for &l in &a.lambda {
                    table.rows.push(vec![Cell::Num(l), Cell::Num(spec.laplace(l)?)]);
                }
                let params = json!({"beta": beta, "regime": regime, "lambda": a.lambda});
                (Artifact::Table(table), RunManifest::new("qsd", mech_value(&mech), params, None), EXIT_OK)
            }
        }
        Command::Dsbp(a) => match &a.action {
            DsbpAction::Qsd { model, n, beta, k } => {
                let d = dsbp_model(model)?;
                let q = match beta {
                    Some(b) => dsbp_qsd_pmf_for_rate(&d, *b, *k)?,
                    None => dsbp_qsd_pmf(&d, *n, *k)?,
                };
                let mut table = Table::new(&["k", "probability"]);
                table.notes.insert("n".into(), json!(q.n));
                table.notes.insert("truncation_residual".into(), json!(q.truncation_residual));
                for (i, p) in q.pmf.iter().enumerate() {
                    table.rows.push(vec![Cell::Int(i as u64 + 1), Cell::Num(*p)]);
                }
                eprintln!("mass beyond K = {k}: {:.3e}", q.truncation_residual);
                let params = json!({"n": n, "beta": beta, "K": k});
                (Artifact::Table(table), RunManifest::new("dsbp qsd", dsbp_value(&d), params, None), EXIT_OK)
            }
            DsbpAction::Flow { model, t, r } => {
                let d = dsbp_model(model)?;
                let flow = DsbpFlow::new(&d)?;
                let mut table = Table::new(&["t", "r", "F"]);
                for &ti in t {
                    for &ri in r {
                        table.rows.push(vec![Cell::Num(ti), Cell::Num(ri), Cell::Num(flow.f(ti, ri)?)]);
                    }
                }
                let params = json!({"t": t, "r": r});
                (Artifact::Table(table), RunManifest::new("dsbp flow", dsbp_value(&d), params, None), EXIT_OK)
            }
        },
        Command::Simulate(a) => simulate(cli, a)?,
        Command::Verify(a) => {
            let report = verify::run(
                &a.suite,
                &verify::VerifyOptions {
                    seed: cli.seed,
                    threads: 0,
                },
            )?;
            for (suite, c) in report.failed_checks() {
                eprintln!("FAILED {suite}: {} (value {:e}, tolerance {:e})", c.name, c.value, c.tolerance);
            }
            let code = if report.passed { EXIT_OK } else { EXIT_VERIFY_FAILED };
            let doc = serde_json::to_value(&report).expect("report serialises");
            let params = json!({"suite": a.suite});
            let manifest = RunManifest::new("verify", Value::Null, params, Some(cli.seed));
            let artifact = Artifact::Document(doc);
            let format = a.report.or(cli.out).unwrap_or(Format::Json);
            emit(cli, &artifact, &manifest, format)?;
            return Ok(code);
        }
    };
    emit(cli, &artifact, &manifest, cli.out.unwrap_or(Format::Csv))?;
    Ok(code)
}

fn simulate(cli: &Cli, a: &args::SimulateArgs) -> CliResult<(Artifact, RunManifest, u8)> {
    let horizon = a.times.last().copied().unwrap_or(0.0);
    let cfg = SimConfig::new(cli.seed, a.paths, horizon)
        .with_threshold(a.threshold)
        .with_cutoff(a.cutoff)
        .with_max_events(a.max_events);
    let mut table = Table::new(&["path_id", "time", "state", "flag"]);
    let (model, ensemble) = if let Some(m) = &a.mech {
        let mech = load_mechanism(m)?;
        if let BranchingMechanism::StablePlus { c, alpha } = mech {
            if alpha == 1.0 {
                // Feller diffusion: exact transition, one time only
                if a.times.len() != 1 {
                    return Err(qsdlab::Error::Unsupported("Feller paths are sampled at a single time".into()).into());
                }
                let z = simulate_feller(c, a.x, a.times[0], &cfg)?;
                for (i, v) in z.iter().enumerate() {
                    table.rows.push(vec![Cell::Int(i as u64), Cell::Num(a.times[0]), Cell::Num(*v), Cell::Text(state_flag(*v).into())]);
                }
                let params = json!({"x": a.x, "times": a.times, "config": cfg});
                return Ok((Artifact::Table(table), RunManifest::new("simulate", mech_value(&mech), params, Some(cli.seed)), EXIT_OK));
            }
        }
        let ens = simulate_csbp(&mech, a.x, &a.times, &cfg)?;
        (mech_value(&mech), ens)
    } else {
        let d = load_dsbp(a.dsbp.as_deref().expect("clap enforces one model"))?;
        let ens = simulate_dsbp(&d, a.n0, &a.times, &cfg)?;
        (dsbp_value(&d), ens)
    };
    for (i, p) in ensemble.paths.iter().enumerate() {
        for (t, z) in ensemble.times.iter().zip(&p.states) {
            table.rows.push(vec![Cell::Int(i as u64), Cell::Num(*t), Cell::Num(*z), Cell::Text(state_flag(*z).into())]);
        }
    }
    for flag in [PathFlag::Alive, PathFlag::Extinct, PathFlag::Exploded, PathFlag::Inconclusive] {
        table.notes.insert(format!("paths_{}", flag.as_str()), json!(ensemble.count(flag)));
    }
    eprintln!(
        "{} paths: {} alive, {} extinct, {} exploded, {} inconclusive",
        ensemble.n_paths(),
        ensemble.count(PathFlag::Alive),
        ensemble.count(PathFlag::Extinct),
        ensemble.count(PathFlag::Exploded),
        ensemble.count(PathFlag::Inconclusive)
    );
    let initial = if a.mech.is_some() { json!({"x": a.x}) } else { json!({"n0": a.n0}) };
    let params = json!({"initial": initial, "times": a.times, "config": cfg});
    Ok((Artifact::Table(table), RunManifest::new("simulate", model, params, Some(cli.seed)), EXIT_OK))
}

/// Status of a sampled state: `+∞` marks explosion and NaN an exhausted
/// event budget.
fn state_flag(z: f64) -> &'static str {
    if z.is_nan() {
        PathFlag::Inconclusive.as_str()
    } else if z == f64::INFINITY {
        PathFlag::Exploded.as_str()
    } else if z == 0.0 {
        PathFlag::Extinct.as_str()
    } else {
        PathFlag::Alive.as_str()
    }
}

fn emit(cli: &Cli, artifact: &Artifact, manifest: &RunManifest, format: Format) -> CliResult<()> {
    let text = render(artifact, manifest, format);
    match &cli.output {
        Some(path) => {
            write_file(path, &text)?;
            let sidecar = PathBuf::from(format!("{}.manifest.json", path.display()));
            let stamped = serde_json::to_string_pretty(&manifest.stamped()).expect("manifest serialises") + "\n";
            write_file(&sidecar, &stamped)
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Write {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Read a file, or fall back to a shipped fixture of the same name
/// (with or without `.json`).
fn read_model(spec: &str, known: &[&str]) -> CliResult<Option<String>> {
    let path = Path::new(spec);
    if path.exists() {
        return std::fs::read_to_string(path).map(Some).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        });
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec);
    if known.contains(&stem) {
        return Ok(None);
    }
    Err(CliError::Read {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or fixture"),
    })
}

fn fixture_stem(spec: &str) -> &str {
    Path::new(spec).file_stem().and_then(|s| s.to_str()).unwrap_or(spec)
}

pub fn load_mechanism(spec: &str) -> CliResult<BranchingMechanism> {
    Ok(match read_model(spec, &fixtures::CONTINUOUS)? {
        Some(text) => BranchingMechanism::from_json(&text)?,
        None => fixtures::continuous(fixture_stem(spec))?,
    })
}

pub fn load_dsbp(spec: &str) -> CliResult<DiscreteBranching> {
    Ok(match read_model(spec, &fixtures::DISCRETE)? {
        Some(text) => DiscreteBranching::from_json(&text)?,
        None => fixtures::discrete(fixture_stem(spec))?,
    })
}

fn dsbp_model(m: &DsbpModelArgs) -> CliResult<DiscreteBranching> {
    match (&m.model, m.alpha) {
        (Some(spec), _) => load_dsbp(spec),
        (None, Some(alpha)) => {
            let d = DiscreteBranching::sibuya(m.c, alpha);
            d.validate()?;
            Ok(d)
        }
        (None, None) => Err(CliError::Usage("give --model, or --alpha (and --c) for a Sibuya model".into())),
    }
}

fn mech_value(m: &BranchingMechanism) -> Value {
    serde_json::to_value(m).expect("mechanism serialises")
}

fn dsbp_value(d: &DiscreteBranching) -> Value {
    serde_json::to_value(d).expect("model serialises")
}
