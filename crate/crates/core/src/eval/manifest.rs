use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::backend::SourceImage;
use crate::candidates::FrameSequence;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Invalid {
        line: usize,
        field: String,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    McqImage,
    McqVideo,
    Grounding,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::McqImage => "mcq-image",
            Task::McqVideo => "mcq-video",
            Task::Grounding => "grounding",
        }
    }
}

/// Paths are relative to the manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Media {
    Image { image: PathBuf },
    FramesDir { frames_dir: PathBuf, fps: f64 },
    FrameList { frame_list: Vec<PathBuf>, fps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    Letter(String),
    Interval([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub id: String,
    pub task: Task,
    pub media: Media,
    /// Question text, or the event description for grounding items.
    pub question: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    pub gold: Gold,
}

/// Decoded media ready for a pipeline.
#[derive(Debug, Clone)]
pub enum LoadedMedia {
    Image(Arc<SourceImage>),
    Frames(FrameSequence),
}

impl ManifestItem {
    pub fn gold_letter(&self) -> Option<char> {
        match &self.gold {
            Gold::Letter(s) => s.chars().next(),
            Gold::Interval(_) => None,
        }
    }

    pub fn gold_interval(&self) -> Option<(f64, f64)> {
        match self.gold {
            Gold::Interval([s, e]) => Some((s, e)),
            Gold::Letter(_) => None,
        }
    }

    pub fn load_media(&self, base: &Path) -> Result<LoadedMedia, String> {
        let resolve = |p: &Path| base.join(p);
        match &self.media {
            Media::Image { image } => {
                let path = resolve(image);
                SourceImage::open(&path)
                    .map(LoadedMedia::Image)
                    .map_err(|e| format!("{}: {e}", path.display()))
            }
            Media::FramesDir { frames_dir, fps } => {
                FrameSequence::from_dir(&resolve(frames_dir), *fps)
                    .map(LoadedMedia::Frames)
                    .map_err(|e| e.to_string())
            }
            Media::FrameList { frame_list, fps } => {
                FrameSequence::new(frame_list.iter().map(|p| resolve(p)).collect(), *fps)
                    .map(LoadedMedia::Frames)
                    .map_err(|e| e.to_string())
            }
        }
    }
}

struct LineCtx(usize);

impl LineCtx {
    fn err(&self, field: &str, message: impl Into<String>) -> ManifestError {
        ManifestError::Invalid {
            line: self.0,
            field: field.into(),
            message: message.into(),
        }
    }

    fn string(&self, obj: &Map<String, Value>, field: &str) -> Result<String, ManifestError> {
        match obj.get(field) {
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
            Some(Value::String(_)) => Err(self.err(field, "must not be empty")),
            Some(_) => Err(self.err(field, "expected a string")),
            None => Err(self.err(field, "missing")),
        }
    }

    fn fps(&self, media: &Map<String, Value>) -> Result<f64, ManifestError> {
        match media.get("fps").and_then(Value::as_f64) {
            Some(f) if f.is_finite() && f > 0.0 => Ok(f),
            Some(_) => Err(self.err("media.fps", "must be > 0")),
            None => Err(self.err("media.fps", "missing or not a number")),
        }
    }

    fn media(&self, obj: &Map<String, Value>) -> Result<Media, ManifestError> {
        let media = obj
            .get("media")
            .and_then(Value::as_object)
            .ok_or_else(|| self.err("media", "missing or not an object"))?;
        let kinds: Vec<&str> = ["image", "frames_dir", "frame_list"]
            .into_iter()
            .filter(|k| media.contains_key(*k))
            .collect();
        match kinds.as_slice() {
            ["image"] => Ok(Media::Image {
                image: self
                    .string(media, "image")
                    .map_err(|_| self.err("media.image", "expected a non-empty path string"))?
                    .into(),
            }),
            ["frames_dir"] => Ok(Media::FramesDir {
                frames_dir: self
                    .string(media, "frames_dir")
                    .map_err(|_| self.err("media.frames_dir", "expected a non-empty path string"))?
                    .into(),
                fps: self.fps(media)?,
            }),
            ["frame_list"] => {
                let list = media
                    .get("frame_list")
                    .and_then(Value::as_array)
                    .filter(|l| !l.is_empty())
                    .ok_or_else(|| self.err("media.frame_list", "expected a non-empty array"))?;
                let paths = list
                    .iter()
                    .map(|v| v.as_str().map(PathBuf::from))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| self.err("media.frame_list", "entries must be strings"))?;
                Ok(Media::FrameList {
                    frame_list: paths,
                    fps: self.fps(media)?,
                })
            }
            _ => Err(self.err(
                "media",
                "needs exactly one of `image`, `frames_dir`, `frame_list`",
            )),
        }
    }

    fn item(&self, raw: &str) -> Result<ManifestItem, ManifestError> {
        let value: Value =
            serde_json::from_str(raw).map_err(|e| self.err("<line>", format!("not JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| self.err("<line>", "expected a JSON object"))?;
        let id = self.string(obj, "id")?;
        let task = match self.string(obj, "task")?.as_str() {
            "mcq-image" => Task::McqImage,
            "mcq-video" => Task::McqVideo,
            "grounding" => Task::Grounding,
            other => return Err(self.err("task", format!("unknown task {other:?}"))),
        };
        let media = self.media(obj)?;
        match (task, &media) {
            (Task::McqImage, Media::Image { .. }) => {}
            (Task::McqImage, _) => return Err(self.err("media", "mcq-image needs `image`")),
            (_, Media::Image { .. }) => {
                return Err(self.err("media", "video tasks need `frames_dir` or `frame_list`"))
            }
            _ => {}
        }
        let question = self.string(obj, "question")?;

        let (options, gold) = if task == Task::Grounding {
            let pair = obj
                .get("gold")
                .and_then(Value::as_array)
                .filter(|a| a.len() == 2)
                .and_then(|a| Some([a[0].as_f64()?, a[1].as_f64()?]))
                .ok_or_else(|| self.err("gold", "expected [start_s, end_s]"))?;
            if !(pair[0].is_finite() && pair[1].is_finite() && pair[1] > pair[0]) {
                return Err(self.err("gold", "end must be greater than start"));
            }
            (Vec::new(), Gold::Interval(pair))
        } else {
            let options: Vec<String> = obj
                .get("options")
                .and_then(Value::as_array)
                .and_then(|a| a.iter().map(|v| v.as_str().map(String::from)).collect())
                .ok_or_else(|| self.err("options", "expected an array of strings"))?;
            if !(2..=26).contains(&options.len()) {
                return Err(self.err("options", "needs between 2 and 26 options"));
            }
            let gold = self.string(obj, "gold")?;
            let letter = gold.trim().to_ascii_uppercase();
            let valid = letter.len() == 1
                && letter
                    .bytes()
                    .all(|b| b.is_ascii_uppercase() && ((b - b'A') as usize) < options.len());
            if !valid {
                return Err(self.err("gold", format!("{gold:?} is not an option letter")));
            }
            (options, Gold::Letter(letter))
        };
        Ok(ManifestItem {
            id,
            task,
            media,
            question,
            options,
            gold,
        })
    }
}

pub fn parse_manifest(reader: impl BufRead) -> Result<Vec<ManifestItem>, ManifestError> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let ctx = LineCtx(i + 1);
        let line = line.map_err(|e| ctx.err("<line>", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = ctx.item(&line)?;
        if !seen.insert(item.id.clone()) {
            return Err(ctx.err("id", format!("duplicate id {:?}", item.id)));
        }
        items.push(item);
    }
    Ok(items)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestItem>, ManifestError> {
    let file = std::fs::File::open(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(BufReader::new(file))
}

pub fn write_manifest(items: &[ManifestItem], path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
