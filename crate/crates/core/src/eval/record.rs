use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::metrics::{mcq_accuracy, mean_iou, recall_at};
use crate::candidates::SpatialCrop;

pub const RECALL_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

/// What a pipeline chose for an item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Selection {
    Crops {
        crops: Vec<SpatialCrop>,
    },
    Frames {
        frames: Vec<usize>,
    },
    /// Inclusive window ordinals; the predicted interval is half-open.
    Windows {
        window_indices: (usize, usize),
        interval: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prediction {
    Answer(String),
    Interval([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metric {
    Correct { correct: bool },
    Iou { iou: f64 },
}

/// One evaluated item. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub item_id: String,
    pub config_hash: String,
    /// Per-candidate scores in candidate order; `null` where scoring failed.
    pub scores: Vec<Option<f64>>,
    pub selection: Option<Selection>,
    pub prediction: Option<Prediction>,
    pub metric: Metric,
    pub elapsed_ms: u64,
    pub flags: Vec<String>,
}

impl RunRecord {
    pub fn has_flag(&self, prefix: &str) -> bool {
        self.flags.iter().any(|f| f.starts_with(prefix))
    }
}

/// Hex SHA-256 of the value's JSON with object keys sorted.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let canonical = serde_json::to_value(config)
        .map(|v| v.to_string())
        .unwrap_or_default();
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn write_run(records: &[RunRecord], path: &Path) -> std::io::Result<()> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut out = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_run(path: &Path) -> std::io::Result<Vec<RunRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: {e}", i + 1),
            )
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SplitSummary {
    NoItems {
        status: &'static str,
    },
    Mcq {
        items: usize,
        accuracy: f64,
    },
    Grounding {
        items: usize,
        miou: f64,
        #[serde(rename = "r@0.3")]
        r03: f64,
        #[serde(rename = "r@0.5")]
        r05: f64,
        #[serde(rename = "r@0.7")]
        r07: f64,
    },
}

const NO_ITEMS: SplitSummary = SplitSummary::NoItems { status: "no_items" };

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub config_hash: String,
    pub items: usize,
    pub errored: usize,
    pub degraded: usize,
    pub mcq: SplitSummary,
    pub grounding: SplitSummary,
}

/// Errored items count against their split (incorrect, or IoU 0).
pub fn summarize(records: &[RunRecord], config_hash: &str) -> Summary {
    let mut correct = Vec::new();
    let mut ious = Vec::new();
    for r in records {
        match r.metric {
            Metric::Correct { correct: c } => correct.push(c),
            Metric::Iou { iou } => ious.push(iou),
        }
    }
    let mcq = match mcq_accuracy(&correct) {
        Ok(accuracy) => SplitSummary::Mcq {
            items: correct.len(),
            accuracy,
        },
        Err(_) => NO_ITEMS,
    };
    let grounding = match mean_iou(&ious) {
        Ok(miou) => {
            let r = |t| recall_at(&ious, t).unwrap_or(0.0);
            SplitSummary::Grounding {
                items: ious.len(),
                miou,
                r03: r(RECALL_THRESHOLDS[0]),
                r05: r(RECALL_THRESHOLDS[1]),
                r07: r(RECALL_THRESHOLDS[2]),
            }
        }
        Err(_) => NO_ITEMS,
    };
    Summary {
        config_hash: config_hash.to_string(),
        items: records.len(),
        errored: records.iter().filter(|r| r.has_flag("error")).count(),
        degraded: records.iter().filter(|r| r.has_flag("degraded")).count(),
        mcq,
        grounding,
    }
}

impl Summary {
    pub fn to_json(&self) -> Value {
        json!(self)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config  {}", self.config_hash);
        let _ = writeln!(
            s,
            "items   {}  (errored {}, degraded {})",
            self.items, self.errored, self.degraded
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>9} {:>7} {:>7} {:>7}",
            "split", "items", "acc/mIoU", "R@0.3", "R@0.5", "R@0.7"
        );
        for (name, split) in [("mcq", &self.mcq), ("grounding", &self.grounding)] {
            let _ = match split {
                SplitSummary::NoItems { .. } => writeln!(s, "{name:<10} no items"),
                SplitSummary::Mcq { items, accuracy } => {
                    writeln!(
                        s,
                        "{name:<10} {items:>6} {:>9.4} {:>7} {:>7} {:>7}",
                        accuracy, "-", "-", "-"
                    )
                }
                SplitSummary::Grounding {
                    items,
                    miou,
                    r03,
                    r05,
                    r07,
                } => writeln!(
                    s,
                    "{name:<10} {items:>6} {miou:>9.4} {r03:>7.4} {r05:>7.4} {r07:>7.4}"
                ),
            };
        }
        s
    }
}
