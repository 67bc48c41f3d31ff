use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use resid_core::chunker::{
    classify_chunks, identify_chunks, instrument, parse_rules, ChunkDb, SourceFile, LOG_CALL,
};
use resid_core::estimator::{
    chunk_unreliability, estimate_session, session_log_likelihood, EstimateStatus, SolverConfig,
};
use resid_core::model::{ModelParams, Variant};
use resid_core::records::{Outcome, RunRecord, SessionState};
use resid_core::simulator::{
    experiment_grid, log_likelihood_curve, render_grid, run_session_on_stream, session_stream,
    ExperimentConfig, GridSpec, ProgramGraph, BUILTIN_GRAPHS, CURVE_HEADER,
};

use crate::args::{
    ChunkArgs, EstimateArgs, IngestArgs, ReportArgs, ReportFormat, SessionNewArgs, SimulateArgs,
    SolverArgs,
};
use crate::error::CliError;
use crate::report::{
    fmt_decimal, observed_edges, render_dot, render_html, ChunkScore, ClassStats, EstimateFile,
    ESTIMATE_FORMAT,
};
use crate::store::{
    read_to_string, write_atomic, SessionLock, SessionStore, CHUNK_DB_FILE, ESTIMATE_FILE,
    RECORDS_FORMAT,
};

pub const CURVE_POINTS: usize = 999;
const LOG_HEADER_FILE: &str = "resid_log.h";

type Out<'a> = &'a mut dyn Write;

fn emit(out: Out<'_>, text: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    out.write_fmt(text).map_err(|e| CliError::io("<stdout>", e))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        emit($out, format_args!("{}\n", format_args!($($arg)*)))
    };
}

fn solver_config(base: SolverConfig, args: &SolverArgs) -> Result<SolverConfig, CliError> {
    let config = SolverConfig {
        epsilon: args.epsilon.unwrap_or(base.epsilon),
        tolerance: args.tol.unwrap_or(base.tolerance),
        ..base
    };
    config.validate()?;
    Ok(config)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn chunk(args: &ChunkArgs, out: Out<'_>) -> Result<(), CliError> {
    if args.sources.is_empty() {
        return Err(CliError::Usage("no sources".into()));
    }
    let sources = args
        .sources
        .iter()
        .map(|p| Ok(SourceFile::new(p, read_to_string(p)?)))
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut db = match &args.chunk_db {
        Some(path) => ChunkDb::from_text(&read_to_string(path)?)?,
        None => identify_chunks(&sources)?,
    };
    if let Some(rules) = &args.rules {
        db = classify_chunks(&db, &sources, &parse_rules(&read_to_string(rules)?)?)?;
    }
    let instrumented = instrument(&sources, &db)?;

    create_dir(&args.out)?;
    for src in &instrumented {
        let name = src
            .path
            .file_name()
            .ok_or_else(|| CliError::Usage(format!("{} is not a file", src.path.display())))?;
        let target = args.out.join(name);
        if same_file(&target, &src.path) {
            return Err(CliError::Usage(format!(
                "refusing to overwrite source {} with its instrumented copy",
                src.path.display()
            )));
        }
        write_file(&target, &src.text)?;
    }
    write_atomic(&args.out.join(CHUNK_DB_FILE), db.to_text().as_bytes())?;
    write_file(
        &args.out.join(LOG_HEADER_FILE),
        &format!("#include <stdio.h>\n#define {LOG_CALL}(id) fprintf(stderr, \"%s\\n\", id)\n"),
    )?;
    say!(out, "{} chunks", db.len())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

pub fn session_new(args: &SessionNewArgs, out: Out<'_>) -> Result<(), CliError> {
    let class_alphas: BTreeMap<String, f64> = args.class_alpha.iter().cloned().collect();
    let params = ModelParams::with_variant(args.alpha, args.variant, class_alphas)?;
    let chunk_db = match &args.chunk_db {
        Some(path) => Some(ChunkDb::from_text(&read_to_string(path)?)?),
        None if args.variant != Variant::Homogeneous => {
            return Err(CliError::Usage(format!(
                "the {} variant needs --chunk-db",
                args.variant
            )))
        }
        None => None,
    };
    let solver = solver_config(SolverConfig::default(), &args.solver)?;
    let dir = &args.dir.session;
    create_dir(dir)?;
    let _lock = SessionLock::acquire(dir)?;
    SessionStore::create(dir, params, solver, chunk_db)?;
    say!(
        out,
        "created session {} ({}, alpha = {})",
        dir.display(),
        args.variant,
        args.alpha
    )
}

fn read_input(path: &Path) -> Result<String, CliError> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::io("<stdin>", e))?;
        Ok(s)
    } else {
        read_to_string(path)
    }
}

fn trace_record(args: &IngestArgs, trace: &Path, seq: u64) -> Result<RunRecord, CliError> {
    let visits: Vec<String> = read_input(trace)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    let outcome = if args.bug.is_empty() {
        Outcome::Success
    } else {
        Outcome::BugFound {
            buggy_chunks: args.bug.iter().cloned().collect(),
            removed: !args.not_removed,
        }
    };
    let mut record = RunRecord::new(
        args.run_id.clone().unwrap_or_else(|| format!("run-{seq}")),
        visits,
        outcome,
    );
    record.seq = Some(seq);
    record.validate()?;
    Ok(record)
}

pub fn stats_line(state: &SessionState) -> String {
    format!(
        "m={} k={} sum_n={} runs={}",
        state.stats.m,
        state.stats.k(),
        state.stats.total_successes(),
        state.processed_runs
    )
}

pub fn ingest(args: &IngestArgs, out: Out<'_>) -> Result<(), CliError> {
    let dir = &args.dir.session;
    let _lock = SessionLock::acquire_existing(dir)?;
    let mut store = SessionStore::open(dir)?;
    let batch = match (&args.records, &args.trace) {
        (_, Some(trace)) => vec![trace_record(args, trace, store.next_seq())?],
        (Some(path), None) => crate::store::parse_records(path, &read_input(path)?, false)?,
        (None, None) => {
            return Err(CliError::Usage(
                "give a records file, '-' for stdin, or --trace".into(),
            ))
        }
    };
    let state = store.ingest(batch)?;
    say!(out, "{}", stats_line(state))
}

/// Estimates from an open session; the CLI's `estimate` writes and prints this.
pub fn build_estimate(
    store: &SessionStore,
    solver: &SolverConfig,
) -> Result<EstimateFile, CliError> {
    let state = store.state();
    let params = store.params();
    let est = estimate_session(state, params, solver)?;
    let p_hat = match (est.status, est.p_hat) {
        (EstimateStatus::Undefined, _) | (_, None) => return Err(CliError::UndefinedMle),
        (_, Some(p)) => p,
    };
    let log_likelihood = session_log_likelihood(state, params, p_hat)?;

    let db = store.chunk_db();
    let mut counts = state.debug_counts.clone();
    if let Some(db) = db {
        for c in db.chunks() {
            counts.entry(c.id.clone()).or_insert(0);
        }
    }
    let classes = db.map(ChunkDb::class_map);
    let scores = chunk_unreliability(p_hat, &counts, params, classes.as_ref());
    let score_of = |id: &str, d: u32| ChunkScore {
        id: id.to_string(),
        debug_count: d,
        score: scores[id],
        file: db
            .and_then(|db| db.get(id))
            .map(|c| c.file.display().to_string()),
        lines: db
            .and_then(|db| db.get(id))
            .map(|c| [c.first_line, c.last_line]),
        class: db
            .and_then(|db| db.get(id))
            .and_then(|c| c.class_label.clone()),
    };
    let chunks = match db {
        Some(db) => db
            .chunks()
            .iter()
            .map(|c| score_of(&c.id, counts[&c.id]))
            .collect(),
        None => counts.iter().map(|(id, &d)| score_of(id, d)).collect(),
    };

    let stats = &state.stats;
    Ok(EstimateFile {
        format: ESTIMATE_FORMAT.to_string(),
        variant: params.variant(),
        alpha: params.alpha(),
        p_hat,
        status: est.status,
        log_likelihood,
        iterations: est.iterations,
        bracket_width: est.bracket_width,
        m: stats.m,
        k: stats.k(),
        n: stats.n.clone(),
        per_class: match params.variant() {
            Variant::PerClass => state
                .per_class_stats
                .iter()
                .map(|(c, s)| {
                    (
                        c.clone(),
                        ClassStats {
                            m: s.m,
                            n: s.n.clone(),
                        },
                    )
                })
                .collect(),
            _ => BTreeMap::new(),
        },
        processed_runs: state.processed_runs,
        chunks,
    })
}

pub fn estimate(args: &EstimateArgs, out: Out<'_>) -> Result<(), CliError> {
    let dir = &args.dir.session;
    let _lock = SessionLock::acquire_existing(dir)?;
    let store = SessionStore::open(dir)?;
    let solver = solver_config(store.config().solver, &args.solver)?;
    let result = build_estimate(&store, &solver)?;

    let path = args.out.clone().unwrap_or_else(|| dir.join(ESTIMATE_FILE));
    let json = serde_json::to_string_pretty(&result).expect("estimate serializes");
    write_atomic(&path, format!("{json}\n").as_bytes())?;

    say!(out, "variant: {}", result.variant)?;
    say!(out, "alpha: {}", result.alpha)?;
    say!(out, "p_hat: {}", fmt_decimal(result.p_hat))?;
    say!(out, "status: {}", result.status)?;
    say!(
        out,
        "log_likelihood: {}",
        fmt_decimal(result.log_likelihood)
    )?;
    say!(out, "m: {}", result.m)?;
    say!(out, "k: {}", result.k)?;
    for (i, n) in &result.n {
        say!(out, "n_{i}: {n}")?;
    }
    for (class, s) in &result.per_class {
        let n: Vec<String> = s.n.iter().map(|(i, c)| format!("n_{i}={c}")).collect();
        say!(out, "class {class}: m={} {}", s.m, n.join(" "))?;
    }
    if result.status != EstimateStatus::Interior {
        say!(
            out,
            "warning: the likelihood peaks at the edge of the search interval"
        )?;
    }
    say!(out, "wrote {}", path.display())
}

pub fn report(args: &ReportArgs, out: Out<'_>) -> Result<(), CliError> {
    let dir = &args.dir.session;
    let _lock = SessionLock::acquire_existing(dir)?;
    let store = SessionStore::open(dir)?;
    let est_path = dir.join(ESTIMATE_FILE);
    if !est_path.exists() {
        return Err(CliError::Usage(
            "no estimate yet: run `resid estimate` first".into(),
        ));
    }
    let est: EstimateFile =
        serde_json::from_str(&read_to_string(&est_path)?).map_err(|e| CliError::Parse {
            path: est_path.clone(),
            message: e.to_string(),
        })?;
    if est.format != ESTIMATE_FORMAT {
        return Err(CliError::Parse {
            path: est_path,
            message: format!("unsupported format {:?}", est.format),
        });
    }
    if est.processed_runs != store.state().processed_runs {
        return Err(CliError::Usage(
            "estimate is older than the run log: run `resid estimate` again".into(),
        ));
    }

    let (text, default_name) = match args.format {
        ReportFormat::Dot => (
            render_dot(&est, &observed_edges(store.records())),
            "report.dot",
        ),
        ReportFormat::Html => (render_html(&est), "report.html"),
    };
    let path = args.out.clone().unwrap_or_else(|| dir.join(default_name));
    write_atomic(&path, text.as_bytes())?;
    for c in &est.chunks {
        say!(out, "{}\t{}\t{}", c.id, c.debug_count, fmt_decimal(c.score))?;
    }
    say!(out, "wrote {}", path.display())
}

pub fn resolve_graph(name: &str) -> Result<ProgramGraph, CliError> {
    if BUILTIN_GRAPHS.contains(&name) {
        return Ok(ProgramGraph::builtin(name)?);
    }
    let path = PathBuf::from(name);
    if path.exists() {
        return ProgramGraph::from_toml(&read_to_string(&path)?).map_err(|e| CliError::Parse {
            path,
            message: e.to_string(),
        });
    }
    Ok(ProgramGraph::builtin(name)?)
}

pub fn simulate(args: &SimulateArgs, out: Out<'_>) -> Result<(), CliError> {
    let graph = resolve_graph(&args.graph)?;
    let solver = solver_config(SolverConfig::default(), &args.solver)?;
    if args.p.is_empty() || args.alpha.is_empty() {
        return Err(CliError::Usage(
            "--p and --alpha need at least one value".into(),
        ));
    }
    let spec = GridSpec {
        p_values: args.p.clone(),
        alpha_values: args.alpha.clone(),
        runs_per_session: args.runs,
        replications: args.reps,
        seed: args.seed,
        trigger_probability: args.trigger,
    };
    let cells = experiment_grid(&graph, &spec, &solver)?;
    let table = render_grid(&cells);

    create_dir(&args.out)?;
    write_atomic(&args.out.join("grid.tsv"), table.as_bytes())?;
    emit(out, format_args!("{table}"))?;

    if args.curve {
        for (c, cell) in cells.iter().enumerate() {
            let mut config =
                ExperimentConfig::new(cell.p_true, cell.alpha, args.runs, 1, args.seed);
            config.trigger_probability = args.trigger;
            let session = run_session_on_stream(&graph, &config, session_stream(c, 0))?;
            let stem = format!("p{}-a{}", cell.p_true, cell.alpha);

            let mut curve = format!("{CURVE_HEADER}\np\tloglik\n");
            for (p, l) in log_likelihood_curve(&session.state.stats, cell.alpha, CURVE_POINTS) {
                curve.push_str(&format!("{p}\t{l}\n"));
            }
            write_atomic(
                &args.out.join(format!("curve-{stem}.tsv")),
                curve.as_bytes(),
            )?;

            let mut log = format!("{{\"format\":\"{RECORDS_FORMAT}\"}}\n");
            for r in &session.records {
                log.push_str(&serde_json::to_string(r).expect("record serializes"));
                log.push('\n');
            }
            write_atomic(
                &args.out.join(format!("session-{stem}.jsonl")),
                log.as_bytes(),
            )?;
        }
    }
    say!(out, "wrote {}", args.out.display())
}
