use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use polysim::dataset::{parse_dataset, write_canonical, DatasetFormat, Instance, ParseMode, TsvDialect};
use polysim::embedstore::{compile_binary, load_text_vectors, open_binary, VectorStore};
use polysim::encoder::{BackendConfig, EncoderBackend};
use polysim::experiments::{
    compare_engines, default_grid, greedy_language_addition, run_official, sweep_alpha_beta, EngineChannels,
    ExperimentError, OfficialRow, ALL_LANGUAGES,
};
use polysim::metrics::{evaluate, Pooling, Subtask};
use polysim::scoring::{read_predictions, score_with_table, write_predictions, ChannelTable, ScoreRun, VectorStores};
use polysim::translation::{
    build_views, EngineId, FixtureEngine, GoogleTranslateClient, LiveClientConfig, MicrosoftTranslatorClient,
    Sentinels, TranslationCache, TranslationEngine, ViewError, ViewsOutcome,
};
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::Manifest;
use crate::settings::Resolved;

pub struct Ctx {
    pub out: PathBuf,
    pub mode: ParseMode,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path, CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::data(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(&self.out)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.out_dir()?.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let f = File::create(&path).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        Ok(BufWriter::new(f))
    }
}

fn write_jsonl<T: Serialize>(mut w: impl Write, items: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(CliError::data)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn load_dataset(path: &Path, format: &DatasetFormat, mode: ParseMode) -> Result<Vec<Instance>, CliError> {
    let parsed = parse_dataset(path, format, mode).map_err(CliError::data)?;
    for skipped in &parsed.skipped {
        eprintln!("skipped: {skipped}");
    }
    if parsed.instances.is_empty() {
        return Err(CliError::data(format!("{}: no instances", path.display())));
    }
    Ok(parsed.instances)
}

fn run_dataset(run: &Resolved, ctx: &Ctx) -> Result<Vec<Instance>, CliError> {
    load_dataset(&run.dataset_path()?, &DatasetFormat::Canonical, ctx.mode)
}

/// Live client for the well-known engine names; any other name only reads
/// its cache.
fn make_engine(id: &EngineId) -> Result<Box<dyn TranslationEngine>, CliError> {
    Ok(match id.as_str() {
        "google" => Box::new(GoogleTranslateClient::new(id.clone(), &LiveClientConfig::google()).map_err(CliError::external)?),
        "microsoft" | "bing" => Box::new(
            MicrosoftTranslatorClient::new(id.clone(), &LiveClientConfig::microsoft()).map_err(CliError::external)?,
        ),
        _ => Box::new(FixtureEngine::with_id(id.clone())),
    })
}

fn is_live(id: &EngineId) -> bool {
    matches!(id.as_str(), "google" | "microsoft" | "bing")
}

fn open_cache(path: &Path, writable: bool) -> Result<TranslationCache, CliError> {
    let cache = if writable {
        TranslationCache::open(path)
    } else if path.exists() {
        TranslationCache::load(path)
    } else {
        Ok(TranslationCache::in_memory())
    };
    cache.map_err(CliError::data)
}

fn views_for(
    run: &Resolved,
    instances: &[Instance],
    languages: &[String],
    engine_id: &EngineId,
) -> Result<ViewsOutcome, CliError> {
    let engine = make_engine(engine_id)?;
    let cache = open_cache(&run.cache_path()?, is_live(engine_id))?;
    let sentinels = run.settings.marker.then(Sentinels::default);
    Ok(build_views(instances, languages, engine.as_ref(), &cache, sentinels.as_ref()))
}

fn report_ledger(ledger: &[ViewError]) {
    for e in ledger {
        eprintln!("translation: {e}");
    }
}

fn ledger_error(ledger: &[ViewError], what: &str) -> CliError {
    report_ledger(ledger);
    let msg = format!(
        "{} translation(s) unavailable for {what}; prime the cache with `polysim translate` or provide engine credentials",
        ledger.len()
    );
    if ledger.iter().any(|e| e.error.is_external()) {
        CliError::external(msg)
    } else {
        CliError::data(msg)
    }
}

fn load_store(lang: &str, path: &Path, limit: Option<usize>, casing: polysim::embedstore::Casing) -> Result<VectorStore, CliError> {
    if path.extension().is_some_and(|e| e == "bin") {
        return open_binary(path).map_err(CliError::data);
    }
    let (store, report) = load_text_vectors(path, lang, limit, casing).map_err(CliError::data)?;
    log::info!(
        "{}: {} vectors, {} malformed, {} duplicates",
        path.display(),
        store.len(),
        report.malformed,
        report.duplicates
    );
    Ok(store)
}

fn load_stores(run: &Resolved, manifest: &mut Manifest) -> Result<VectorStores, CliError> {
    let mut stores = VectorStores::new();
    for (lang, src) in &run.settings.vectors {
        let path = run.resolve(src.path());
        manifest.hash_file(&format!("vectors.{lang}"), &path);
        stores.insert(lang.clone(), load_store(lang, &path, src.limit(), src.casing())?);
    }
    Ok(stores)
}

fn build_backend(run: &Resolved, manifest: &mut Manifest) -> Result<Box<dyn EncoderBackend>, CliError> {
    let backend = run.backend();
    if let BackendConfig::FixtureFile { path } = &backend {
        manifest.hash_file("encoder_fixture", path);
    }
    let built = backend.build()?;
    manifest.set("encoder_backend", built.id());
    Ok(built)
}

/// Everything needed to score a dataset under one engine.
struct Prepared {
    instances: Vec<Instance>,
    table: ChannelTable,
    ledger: Vec<ViewError>,
    manifest: Manifest,
}

fn prepare(run: &Resolved, ctx: &Ctx, command: &str, extras: &[String], engine: &EngineId) -> Result<Prepared, CliError> {
    let mut manifest = Manifest::new(command);
    let instances = run_dataset(run, ctx)?;
    manifest.hash_file("dataset", &run.dataset_path()?);
    manifest.hash_file("cache", &run.cache_path()?);
    let outcome = views_for(run, &instances, extras, engine)?;
    let stores = load_stores(run, &mut manifest)?;
    let backend = build_backend(run, &mut manifest)?;
    let table = ChannelTable::build(&instances, &outcome.views, extras, &stores, backend.as_ref())?;
    manifest.set("engine", engine);
    Ok(Prepared {
        instances,
        table,
        ledger: outcome.ledger,
        manifest,
    })
}

fn write_run(ctx: &Ctx, dir: &str, run: &ScoreRun) -> Result<(), CliError> {
    let prefix = |name: &str| if dir.is_empty() { name.to_string() } else { format!("{dir}/{name}") };
    for (subtask, name) in [(Subtask::Change, "subtask1.tsv"), (Subtask::Similarity, "subtask2.tsv")] {
        let mut w = ctx.create(&prefix(name))?;
        write_predictions(&run.sheets, subtask, &mut w).map_err(CliError::data)?;
        w.flush()?;
    }
    write_jsonl(ctx.create(&prefix("sheets.jsonl"))?, &run.sheets)?;
    write_jsonl(ctx.create(&prefix("failures.jsonl"))?, &run.failures)?;
    for f in &run.failures {
        eprintln!("no signal: instance {} context {}: {}", f.instance_id, f.context_index, f.reasons.join(" | "));
    }
    Ok(())
}

pub struct IngestArgs {
    pub input: PathBuf,
    pub tsv: bool,
    pub open: String,
    pub close: String,
    pub lang: String,
    pub output: Option<PathBuf>,
}

pub fn ingest(ctx: &Ctx, args: IngestArgs) -> Result<(), CliError> {
    let format = if args.tsv {
        DatasetFormat::TaskTsv(TsvDialect {
            open: args.open,
            close: args.close,
            lang: args.lang,
        })
    } else {
        DatasetFormat::Canonical
    };
    let instances = load_dataset(&args.input, &format, ctx.mode)?;
    let out = match args.output {
        Some(p) => p,
        None => ctx.out_dir()?.join("dataset.jsonl"),
    };
    write_canonical(&instances, &out).map_err(CliError::data)?;
    eprintln!("{} instances -> {}", instances.len(), out.display());
    Ok(())
}

pub fn translate(run: &Resolved, ctx: &Ctx, langs: Option<Vec<String>>) -> Result<(), CliError> {
    let instances = run_dataset(run, ctx)?;
    let langs = langs.unwrap_or_else(|| run.experiment.languages.clone());
    let outcome = views_for(run, &instances, &langs, &run.experiment.engine)?;
    write_jsonl(ctx.create("views.jsonl")?, &outcome.views)?;
    eprintln!("{} views, {} failures", outcome.views.len(), outcome.ledger.len());
    if !outcome.ledger.is_empty() {
        return Err(ledger_error(&outcome.ledger, "the dataset"));
    }
    Ok(())
}

pub struct EmbedArgs {
    pub lang: Option<String>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub limit: Option<usize>,
    pub preserve_case: bool,
}

pub fn embed(run: Option<&Resolved>, ctx: &Ctx, args: EmbedArgs) -> Result<(), CliError> {
    let casing = if args.preserve_case {
        polysim::embedstore::Casing::Preserve
    } else {
        polysim::embedstore::Casing::Lower
    };
    let jobs: Vec<(String, PathBuf, Option<usize>, polysim::embedstore::Casing)> = match (args.lang, args.input) {
        (Some(lang), Some(input)) => vec![(lang, input, args.limit, casing)],
        (None, None) => {
            let run = run.ok_or_else(|| CliError::usage("embed needs --lang and --input, or --config with [vectors]"))?;
            run.settings
                .vectors
                .iter()
                .map(|(l, s)| (l.clone(), run.resolve(s.path()), args.limit.or(s.limit()), s.casing()))
                .collect()
        }
        _ => return Err(CliError::usage("--lang and --input go together")),
    };
    if jobs.is_empty() {
        return Err(CliError::usage("no vector files configured"));
    }
    let single = jobs.len() == 1;
    for (lang, input, limit, casing) in jobs {
        let store = load_store(&lang, &input, limit, casing)?;
        let out = match (&args.output, single) {
            (Some(p), true) => p.clone(),
            _ => {
                let dir = ctx.out_dir()?.join("vectors");
                fs::create_dir_all(&dir)?;
                dir.join(format!("{lang}.bin"))
            }
        };
        compile_binary(&store, &out).map_err(CliError::data)?;
        eprintln!("{lang}: {} words x {} -> {}", store.len(), store.dim(), out.display());
    }
    Ok(())
}

pub fn score(run: &Resolved, ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &run.experiment;
    let mut p = prepare(run, ctx, "score", &cfg.languages, &cfg.engine)?;
    report_ledger(&p.ledger);
    let result = score_with_table(&p.instances, &p.table, cfg)?;
    write_run(ctx, "", &result)?;
    write_jsonl(ctx.create("channels.jsonl")?, p.table.rows())?;
    p.manifest.set("config_fingerprint", cfg.fingerprint());
    p.manifest.set("pooling", run.settings.pooling);
    p.manifest.set("scored", result.sheets.len());
    p.manifest.set("no_signal", result.failures.len());
    p.manifest.set("translation_failures", p.ledger.len());
    p.manifest.write(ctx.out_dir()?)?;
    eprintln!(
        "scored {} of {} instances -> {}",
        result.sheets.len(),
        p.instances.len(),
        ctx.out.display()
    );
    Ok(())
}

pub struct EvaluateArgs {
    pub subtask: Subtask,
    pub pred: PathBuf,
    pub gold: Option<PathBuf>,
    pub pooling: Pooling,
    pub json: bool,
}

pub fn evaluate_cmd(run: Option<&Resolved>, ctx: &Ctx, args: EvaluateArgs) -> Result<(), CliError> {
    let gold_path = match (args.gold, run) {
        (Some(g), _) => g,
        (None, Some(r)) => r.dataset_path()?,
        (None, None) => return Err(CliError::usage("evaluate needs --gold or --config")),
    };
    let gold = load_dataset(&gold_path, &DatasetFormat::Canonical, ctx.mode)?;
    let file = File::open(&args.pred).map_err(|e| CliError::data(format!("{}: {e}", args.pred.display())))?;
    let preds = read_predictions(file, args.subtask).map_err(CliError::data)?;
    let report = evaluate(&preds, &gold, args.pooling).map_err(CliError::data)?;
    let mut stdout = io::stdout().lock();
    if args.json {
        writeln!(stdout, "{}", report.to_json_line())?;
    } else {
        write!(stdout, "{}", report.to_table())?;
    }
    Ok(())
}

fn parse_grid(points: &str) -> Result<Vec<(f64, f64)>, CliError> {
    points.split(',')
        .map(|pair| {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| CliError::usage(format!("grid point {pair:?} is not alpha:beta")))?;
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| CliError::usage(format!("{s:?}: {e}")));
            Ok((num(a)?, num(b)?))
        })
        .collect()
}

fn experiment_error(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::EmptyGrid => CliError::usage(e.to_string()),
        ExperimentError::MissingLanguages { .. } => CliError::external(e),
        _ => CliError::data(e),
    }
}

pub fn sweep(run: &Resolved, ctx: &Ctx, grid: Option<String>, subtasks: Vec<Subtask>) -> Result<(), CliError> {
    let cfg = &run.experiment;
    let grid = match grid {
        Some(g) => parse_grid(&g)?,
        None => default_grid(),
    };
    let mut p = prepare(run, ctx, "sweep", &cfg.languages, &cfg.engine)?;
    report_ledger(&p.ledger);
    let table = sweep_alpha_beta(&p.instances, &p.table, cfg, &grid, &subtasks, run.settings.pooling)
        .map_err(experiment_error)?;
    table.write_csv(ctx.create("sweep.csv")?)?;
    table.write_series(ctx.create("sweep_series.csv")?)?;
    p.manifest.set("config_fingerprint", cfg.fingerprint());
    p.manifest.write(ctx.out_dir()?)?;
    for s in &subtasks {
        if let Some(best) = table.best(*s) {
            println!(
                "subtask {s}: best alpha={} beta={} score={}",
                best.alpha,
                best.beta,
                best.value.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}

pub fn greedy(run: &Resolved, ctx: &Ctx, candidates: Option<Vec<String>>, subtask: Subtask) -> Result<(), CliError> {
    let cfg = &run.experiment;
    let candidates = candidates
        .or_else(|| (!cfg.languages.is_empty()).then(|| cfg.languages.clone()))
        .unwrap_or_else(|| ALL_LANGUAGES.iter().map(|s| s.to_string()).collect());
    let mut p = prepare(run, ctx, "greedy-langs", &candidates, &cfg.engine)?;
    report_ledger(&p.ledger);
    let trace = greedy_language_addition(&p.instances, &p.table, cfg, &candidates, subtask, run.settings.pooling)
        .map_err(experiment_error)?;
    trace.write_csv(ctx.create("greedy.csv")?)?;
    trace.write_series(ctx.create("greedy_series.csv")?)?;
    p.manifest.set("candidates", candidates.join(","));
    p.manifest.set("subtask", subtask);
    p.manifest.write(ctx.out_dir()?)?;
    println!(
        "selected: {} (score {})",
        if trace.selected.is_empty() { "-".to_string() } else { trace.selected.join(",") },
        trace.path.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn compare(run: &Resolved, ctx: &Ctx, engines: Vec<String>, subtasks: Vec<Subtask>) -> Result<(), CliError> {
    let cfg = &run.experiment;
    let mut channels = Vec::new();
    let mut manifest = Manifest::new("compare-engines");
    for name in &engines {
        let id = EngineId::new(name.clone()).map_err(|e| CliError::usage(e.to_string()))?;
        let p = prepare(run, ctx, "compare-engines", &cfg.languages, &id)?;
        report_ledger(&p.ledger);
        manifest.set(&format!("translation_failures.{name}"), p.ledger.len());
        channels.push((p.instances, EngineChannels { engine: id, table: p.table }));
    }
    let Some((instances, _)) = channels.first() else {
        return Err(CliError::usage("at least one --engine is required"));
    };
    let instances = instances.clone();
    let engine_channels: Vec<EngineChannels> = channels.into_iter().map(|(_, e)| e).collect();
    let table = compare_engines(&instances, &engine_channels, cfg, &subtasks, run.settings.pooling);
    table.write_csv(ctx.create("engines.csv")?)?;
    table.write_series(ctx.create("engines_series.csv")?)?;
    manifest.set("engines", engines.join(","));
    manifest.set("config_fingerprint", cfg.fingerprint());
    manifest.hash_file("dataset", &run.dataset_path()?);
    manifest.hash_file("cache", &run.cache_path()?);
    manifest.write(ctx.out_dir()?)?;
    for r in &table.rows {
        println!("{}\t{}\tsubtask {}\t{}", r.engine, r.languages, r.subtask, r.value.map_or("failed".into(), |v| v.to_string()));
    }
    Ok(())
}

pub fn official(run: &Resolved, ctx: &Ctx, row: OfficialRow) -> Result<(), CliError> {
    let cfg = row.config(&run.experiment);
    let mut p = prepare(run, ctx, "official", &cfg.languages, &cfg.engine)?;
    if !p.ledger.is_empty() {
        return Err(ledger_error(&p.ledger, &format!("row {row}")));
    }
    let result = run_official(&p.instances, &p.table, &run.experiment, row, run.settings.pooling)
        .map_err(experiment_error)?;
    let dir = format!("official-{row}");
    write_run(ctx, &dir, &result.run)?;
    let mut lines = Vec::new();
    for (subtask, report) in &result.reports {
        match report {
            Ok(r) => {
                println!("row {row} subtask {subtask}: {}", r.score);
                lines.push(r.to_json_line());
            }
            Err(e) => {
                eprintln!("row {row} subtask {subtask}: {e}");
                lines.push(format!("{{\"subtask\":{},\"error\":{}}}", subtask.number(), serde_json::Value::from(e.as_str())));
            }
        }
    }
    let mut w = ctx.create(&format!("{dir}/report.jsonl"))?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    p.manifest.set("row", row);
    p.manifest.set("config_fingerprint", result.config.fingerprint());
    p.manifest.write(&ctx.out_dir()?.join(&dir))?;
    if result.reports.iter().any(|(_, r)| r.is_err()) {
        return Err(CliError::data("evaluation failed for at least one subtask"));
    }
    Ok(())
}
