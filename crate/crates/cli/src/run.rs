use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use ug_core::backend::{BackendConfig, BackendPair, RemoteBackend};
use ug_core::eval::{
    load_manifest, run_items, summarize, write_run, ManifestError, ManifestItem, RunRecord,
    Summary, Task,
};
use ug_core::synth::{OracleBackend, World};

use crate::config::{BackendKind, RunConfig};
use crate::error::{io_err, CliError};

pub const RUN_FILE: &str = "run.jsonl";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const CONFIG_FILE: &str = "config.json";
pub const WORLDS_DIR: &str = "worlds";

/// Items per batch between failure-budget checks, per item in flight.
const BATCH_PER_SLOT: usize = 4;

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let config = |e: String| CliError::Config(e);
    if cfg.io.items_in_flight == 0 {
        return Err(config("items_in_flight must be >= 1".into()));
    }
    cfg.pipelines
        .sample
        .validate()
        .map_err(|e| config(e.to_string()))?;
    cfg.pipelines
        .ground
        .aliases()
        .map_err(|e| config(e.to_string()))?;
    let g = &cfg.pipelines.ground;
    if g.window_len == 0 || g.stride == 0 {
        return Err(config("ground window_len and stride must be >= 1".into()));
    }
    let s = &cfg.pipelines.search;
    for (name, v) in [
        ("crop_fraction", s.crop_fraction),
        ("stride_fraction", s.stride_fraction),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(config(format!("search {name} must be in (0, 1]")));
        }
    }
    if s.top_k_crops == 0 {
        return Err(config("search top_k_crops must be >= 1".into()));
    }
    match cfg.backend {
        BackendKind::Remote => {
            cfg.scorer.validate().map_err(|e| config(e.to_string()))?;
            if let Some(a) = &cfg.answerer {
                a.validate().map_err(|e| config(e.to_string()))?;
            }
        }
        BackendKind::Oracle => cfg.oracle.validate().map_err(|e| config(e.to_string()))?,
    }
    Ok(())
}

fn remote_pair(
    scorer: &BackendConfig,
    answerer: Option<&BackendConfig>,
) -> Result<BackendPair, CliError> {
    let make = |c: &BackendConfig| {
        RemoteBackend::new(c.clone())
            .map(|b| Arc::new(b) as Arc<dyn ug_core::backend::Backend>)
            .map_err(|e| CliError::Config(e.to_string()))
    };
    let s = make(scorer)?;
    Ok(match answerer {
        Some(a) if a != scorer => BackendPair::new(s, make(a)?),
        _ => BackendPair::shared(s),
    })
}

fn oracle_pair(worlds: &Path, cfg: &RunConfig, item: &ManifestItem) -> Result<BackendPair, String> {
    let path = worlds.join(format!("{}.json", item.id));
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("oracle world {}: {e}", path.display()))?;
    let world: World =
        serde_json::from_str(&text).map_err(|e| format!("oracle world {}: {e}", path.display()))?;
    let oracle = OracleBackend::new(world, cfg.oracle.clone()).map_err(|e| e.to_string())?;
    Ok(BackendPair::shared(Arc::new(oracle)))
}

fn clear_outputs(out: &Path, force: bool) -> Result<(), CliError> {
    let existing: Vec<PathBuf> = [RUN_FILE, SUMMARY_JSON, SUMMARY_TXT, CONFIG_FILE]
        .iter()
        .map(|f| out.join(f))
        .filter(|p| p.exists())
        .collect();
    if existing.is_empty() {
        return Ok(());
    }
    if !force {
        return Err(CliError::Config(format!(
            "{} already holds run output; pass --force to replace it",
            out.display()
        )));
    }
    for p in existing {
        std::fs::remove_file(&p).map_err(io_err(&p))?;
    }
    Ok(())
}

/// Run every manifest item of `task` and write records and summaries to the
/// output directory.
pub fn cmd_run(task: Task, cfg: &RunConfig, force: bool) -> Result<Summary, CliError> {
    let manifest = cfg
        .io
        .manifest
        .as_deref()
        .ok_or_else(|| CliError::Config("no manifest given (--manifest)".into()))?;
    let out = cfg
        .io
        .out
        .clone()
        .ok_or_else(|| CliError::Config("no output directory given (--out)".into()))?;
    if !manifest.is_file() {
        return Err(CliError::Config(format!(
            "manifest {} does not exist",
            manifest.display()
        )));
    }
    validate(cfg)?;
    let items = load_manifest(manifest).map_err(|e| match e {
        ManifestError::Io { .. } => CliError::Io(e.to_string()),
        ManifestError::Invalid { .. } => CliError::Validation(e.to_string()),
    })?;
    let base = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let total = items.len();
    let items: Vec<ManifestItem> = items.into_iter().filter(|i| i.task == task).collect();
    if items.len() < total {
        info!(
            "running {} {} items, skipping {} of other tasks",
            items.len(),
            task.as_str(),
            total - items.len()
        );
    }

    let pair = match cfg.backend {
        BackendKind::Remote => Some(remote_pair(&cfg.scorer, cfg.answerer.as_ref())?),
        BackendKind::Oracle => None,
    };
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    clear_outputs(&out, force)?;
    let hash = cfg.fingerprint();
    let cfg_path = out.join(CONFIG_FILE);
    let cfg_json = serde_json::to_string_pretty(cfg).expect("config serializes");
    std::fs::write(&cfg_path, cfg_json + "\n").map_err(io_err(&cfg_path))?;

    let worlds = base.join(WORLDS_DIR);
    let backends_for = |item: &ManifestItem| match &pair {
        Some(p) => Ok(p.clone()),
        None => oracle_pair(&worlds, cfg, item),
    };
    let run_path = out.join(RUN_FILE);
    let batch = cfg.io.items_in_flight * BATCH_PER_SLOT;
    let mut records: Vec<RunRecord> = Vec::with_capacity(items.len());
    let (mut backend_failures, mut item_errors) = (0usize, 0usize);
    let mut abandoned = None;
    for chunk in items.chunks(batch.max(1)) {
        let outcomes = run_items(
            chunk,
            &base,
            backends_for,
            &cfg.pipelines,
            &hash,
            cfg.io.items_in_flight,
        );
        let chunk_records: Vec<RunRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
        write_run(&chunk_records, &run_path).map_err(io_err(&run_path))?;
        for o in &outcomes {
            if o.backend_failure {
                backend_failures += 1;
            } else if o.record.has_flag("error") {
                item_errors += 1;
            }
        }
        records.extend(chunk_records);
        if backend_failures > cfg.io.max_backend_failures {
            abandoned = Some(format!(
                "{backend_failures} items failed at the backend (allowed {}); stopped after {} of {} items",
                cfg.io.max_backend_failures,
                records.len(),
                items.len()
            ));
            break;
        }
    }
    if items.is_empty() {
        // an empty run still leaves a record file behind
        write_run(&[], &run_path).map_err(io_err(&run_path))?;
    }

    let summary = summarize(&records, &hash);
    let json_path = out.join(SUMMARY_JSON);
    let json = serde_json::to_string_pretty(&summary.to_json()).expect("summary serializes");
    std::fs::write(&json_path, json + "\n").map_err(io_err(&json_path))?;
    let txt_path = out.join(SUMMARY_TXT);
    std::fs::write(&txt_path, summary.to_table()).map_err(io_err(&txt_path))?;
    print!("{}", summary.to_table());

    if let Some(msg) = abandoned {
        return Err(CliError::Transport(msg));
    }
    if backend_failures > 0 {
        warn!("{backend_failures} items failed at the backend (within budget)");
    }
    if item_errors > 0 {
        return Err(CliError::Validation(format!(
            "{item_errors} of {} items could not be run; see the error flags in {}",
            records.len(),
            run_path.display()
        )));
    }
    Ok(summary)
}
