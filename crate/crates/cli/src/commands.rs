use std::io::Write;
use std::path::Path;

use schemamem_core::{
    synthesis_hook, ConceptId, Engine, Error, IngestReport, PropagationMode, TurnRecord,
};

use crate::config::EngineConfig;
use crate::error::CliError;
use crate::{GraphFormat, Mode, QueryArgs};

fn write_err(e: std::io::Error) -> CliError {
    CliError::Other(format!("writing output: {e}"))
}

/// Current state: the configured snapshot, or a fresh engine if none exists.
fn load_state(cfg: &EngineConfig) -> Result<Engine, CliError> {
    let path = cfg.snapshot_path();
    if !path.exists() {
        return Ok(Engine::new());
    }
    Engine::load_snapshot(&path).map_err(|e| match e {
        Error::Io { .. } => e.into(),
        other => CliError::State(format!("{}: {other}", path.display())),
    })
}

/// Parses every line before anything is ingested, so a bad line leaves the
/// state untouched.
pub fn read_transcript(path: &Path) -> Result<Vec<(usize, TurnRecord)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TurnRecord = serde_json::from_str(line)
            .map_err(|e| CliError::Parse(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        records.push((i + 1, rec));
    }
    Ok(records)
}

fn names(engine: &Engine, ids: &[ConceptId]) -> String {
    let v: Vec<String> = ids
        .iter()
        .map(|&c| engine.concept_text(c).unwrap_or_default())
        .collect();
    format!("[{}]", v.join(", "))
}

fn report_line(engine: &Engine, r: &IngestReport) -> String {
    let ppl = r.perplexity.map_or("-".to_owned(), |p| format!("{p:.6}"));
    format!(
        "turn {}: assimilated={} accommodated={} triggered={} unknown={} perplexity={} rejected={} schema={}",
        r.turn_id,
        names(engine, &r.assimilated),
        names(engine, &r.accommodated),
        r.triggered_accommodation,
        r.unknown_selected,
        ppl,
        r.rejected_candidates,
        engine.schema().len(),
    )
}

pub fn ingest(cfg: &EngineConfig, transcript: &Path, out: &mut impl Write) -> Result<(), CliError> {
    let records = read_transcript(transcript)?;
    let lm = cfg.language_model()?;
    let mut engine = load_state(cfg)?;
    let mut triggered = 0usize;
    for (line, rec) in &records {
        let report = engine
            .process_turn(rec.clone(), &lm, &cfg.evolution)
            .map_err(|e| match e {
                Error::EmptyText | Error::InvalidArgument(_) => {
                    CliError::Parse(format!("{}: line {line}: {e}", transcript.display()))
                }
                other => other.into(),
            })?;
        triggered += usize::from(report.triggered_accommodation);
        writeln!(out, "{}", report_line(&engine, &report)).map_err(write_err)?;
    }
    engine.save_snapshot(cfg.snapshot_path())?;
    let rate = if records.is_empty() {
        0.0
    } else {
        triggered as f64 / records.len() as f64
    };
    writeln!(
        out,
        "summary: turns={} schema={} edges={} accommodation_rate={rate:.3}",
        records.len(),
        engine.schema().len(),
        engine.graph().edge_count(),
    )
    .map_err(write_err)
}

pub fn query(cfg: &EngineConfig, args: &QueryArgs, out: &mut impl Write) -> Result<(), CliError> {
    let mut rc = cfg.recall.clone();
    if let Some(k) = args.k {
        rc.k_max = k;
    }
    if let Some(h) = args.hops {
        rc.hops = h;
    }
    if let Some(b) = args.beam {
        rc.beam = b;
    }
    if let Some(t) = args.temperature {
        rc.temperature = t;
    }
    let mode = args.mode.unwrap_or(match rc.mode {
        PropagationMode::TopK { .. } => Mode::Topk,
        PropagationMode::Sample { .. } => Mode::Sample,
    });
    rc.mode = match (mode, rc.mode) {
        (Mode::Topk, PropagationMode::TopK { m }) => PropagationMode::TopK {
            m: args.m.unwrap_or(m),
        },
        (Mode::Topk, _) => PropagationMode::TopK {
            m: args.m.unwrap_or(3),
        },
        (Mode::Sample, current) => {
            let (count, seed) = match current {
                PropagationMode::Sample { count, seed } => (count, args.seed.unwrap_or(seed)),
                PropagationMode::TopK { .. } => (
                    3,
                    args.seed
                        .ok_or_else(|| CliError::Usage("--mode sample needs --seed".into()))?,
                ),
            };
            PropagationMode::Sample {
                count: args.samples.unwrap_or(count),
                seed,
            }
        }
    };
    if mode == Mode::Topk && (args.seed.is_some() || args.samples.is_some()) {
        return Err(CliError::Usage(
            "--seed and --samples only apply to --mode sample".into(),
        ));
    }
    rc.validate()?;
    let engine = load_state(cfg)?;
    let lm = cfg.language_model()?;
    let result = engine.recall(&args.query, &lm, &rc)?;
    write!(out, "{}", result.to_record()).map_err(write_err)?;
    if args.answer {
        writeln!(
            out,
            "answer:\n{}",
            synthesis_hook(&result.context_text, &args.query, &lm)
        )
        .map_err(write_err)?;
    }
    Ok(())
}

pub fn stats(cfg: &EngineConfig, top: usize, out: &mut impl Write) -> Result<(), CliError> {
    let engine = load_state(cfg)?;
    write!(out, "{}", engine.stats(top)).map_err(write_err)
}

pub fn export_graph(
    cfg: &EngineConfig,
    format: GraphFormat,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let engine = load_state(cfg)?;
    let doc = match format {
        GraphFormat::Dot => engine.export_dot(),
        GraphFormat::Json => engine.export_json(),
    };
    write!(out, "{doc}").map_err(write_err)
}

pub fn snapshot_save(
    cfg: &EngineConfig,
    path: &Path,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let engine = load_state(cfg)?;
    engine.save_snapshot(path)?;
    writeln!(
        out,
        "saved {} turns, {} concepts to {}",
        engine.store().len(),
        engine.schema().len(),
        path.display()
    )
    .map_err(write_err)
}

pub fn snapshot_load(
    cfg: &EngineConfig,
    path: &Path,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let engine = Engine::load_snapshot(path).map_err(|e| match e {
        Error::Io { .. } => CliError::from(e),
        other => CliError::State(format!("{}: {other}", path.display())),
    })?;
    let target = cfg.snapshot_path();
    engine.save_snapshot(&target)?;
    writeln!(
        out,
        "loaded {} turns, {} concepts into {}",
        engine.store().len(),
        engine.schema().len(),
        target.display()
    )
    .map_err(write_err)
}
