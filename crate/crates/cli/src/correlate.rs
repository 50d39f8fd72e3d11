use std::path::Path;

use log::warn;
use serde::Serialize;
use serde_json::json;
use ug_core::eval::pearson;
use ug_core::synth::{zoom_sweep, ZoomPoint};

use crate::config::RunConfig;
use crate::error::{io_err, CliError};

pub const CSV_FILE: &str = "correlate.csv";
pub const JSON_FILE: &str = "correlate.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub ratio: f64,
    pub zoom: f64,
    pub mean_entropy: f64,
    pub accuracy: f64,
}

/// Average the sweep per ratio, in the order the ratios were given. `zoom`
/// is the mean realized magnification.
pub fn ratio_rows(points: &[ZoomPoint], ratios: &[f64]) -> Vec<RatioRow> {
    ratios
        .iter()
        .enumerate()
        .map(|(i, &ratio)| {
            let at: Vec<&ZoomPoint> = points.iter().skip(i).step_by(ratios.len()).collect();
            let n = at.len().max(1) as f64;
            RatioRow {
                ratio,
                zoom: at.iter().map(|p| p.zoom).sum::<f64>() / n,
                mean_entropy: at.iter().map(|p| p.entropy).sum::<f64>() / n,
                accuracy: at.iter().filter(|p| p.correct).count() as f64 / n,
            }
        })
        .collect()
}

fn write_csv(rows: &[RatioRow], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

/// Sweep zoom ratios over seeded scenes and report how oracle entropy tracks
/// zoom and accuracy.
pub fn cmd_correlate(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    let seed = cfg
        .io
        .seed
        .ok_or_else(|| CliError::Config("correlate needs a seed (--seed)".into()))?;
    let out = cfg
        .io
        .out
        .clone()
        .ok_or_else(|| CliError::Config("no output directory given (--out)".into()))?;
    let ratios = &cfg.correlate.ratios;
    if ratios.len() < 2 {
        return Err(CliError::Config(format!(
            "need at least 2 zoom ratios, got {}",
            ratios.len()
        )));
    }
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(CliError::Config(format!("zoom ratio {r} is not in (0, 1]")));
    }
    if cfg.correlate.seeds == 0 {
        return Err(CliError::Config("correlate needs at least one seed".into()));
    }
    cfg.oracle
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let csv_path = out.join(CSV_FILE);
    let json_path = out.join(JSON_FILE);
    if !force && (csv_path.exists() || json_path.exists()) {
        return Err(CliError::Config(format!(
            "{} already holds a correlation report; pass --force to replace it",
            out.display()
        )));
    }

    let points = zoom_sweep(
        seed..seed + cfg.correlate.seeds,
        ratios,
        &cfg.synth.scene,
        &cfg.oracle,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let rows = ratio_rows(&points, ratios);
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    write_csv(&rows, &csv_path)?;

    let zooms: Vec<f64> = rows.iter().map(|r| r.zoom).collect();
    let entropies: Vec<f64> = rows.iter().map(|r| r.mean_entropy).collect();
    let accuracies: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let entropy_zoom = pearson(&entropies, &zooms);
    let entropy_accuracy = pearson(&entropies, &accuracies);
    let point_zoom = pearson(
        &points.iter().map(|p| p.entropy).collect::<Vec<_>>(),
        &points.iter().map(|p| p.zoom).collect::<Vec<_>>(),
    );
    let as_json = |r: &Result<f64, _>| match r {
        Ok(v) => json!(v),
        Err(_) => json!(null),
    };
    let mut notes = Vec::new();
    for (name, r) in [
        ("entropy_zoom", &entropy_zoom),
        ("entropy_accuracy", &entropy_accuracy),
        ("entropy_zoom_points", &point_zoom),
    ] {
        if let Err(e) = r {
            warn!("{name} correlation undefined: {e}");
            notes.push(format!("{name}: {e}"));
        }
    }
    let report = json!({
        "seed": seed,
        "seeds": cfg.correlate.seeds,
        "ratios": ratios,
        "oracle": cfg.oracle,
        "pearson_entropy_zoom": as_json(&entropy_zoom),
        "pearson_entropy_accuracy": as_json(&entropy_accuracy),
        "pearson_entropy_zoom_points": as_json(&point_zoom),
        "undefined": notes,
        "rows": rows,
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&json_path, text + "\n").map_err(io_err(&json_path))?;

    println!(
        "{:>8} {:>8} {:>12} {:>9}",
        "ratio", "zoom", "entropy", "accuracy"
    );
    for r in &rows {
        println!(
            "{:>8.4} {:>8.3} {:>12.6} {:>9.3}",
            r.ratio, r.zoom, r.mean_entropy, r.accuracy
        );
    }
    match entropy_zoom {
        Ok(v) => {
            println!("pearson(entropy, zoom) = {v:.6}");
            Ok(())
        }
        Err(e) => Err(CliError::Validation(format!(
            "entropy-zoom correlation undefined: {e}"
        ))),
    }
}
