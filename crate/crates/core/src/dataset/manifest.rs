//! CSV manifest plus one JSON descriptor document per clip.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{majority_vote, Behavior, ChannelKind, ClipRecord, Dataset, DescriptorChannel, Emotion, EmotionVector};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 5] = ["clip_id", "sequence_id", "behavior", "emotions", "descriptor_path"];

/// On-disk layout of a clip's descriptor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorFile {
    pub channels: Vec<ChannelEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub name: String,
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    clip_id: String,
    sequence_id: String,
    behavior: String,
    emotions: String,
    descriptor_path: String,
}

fn row_err(row: usize, field: &'static str, message: impl Into<String>) -> Error {
    Error::Manifest {
        row,
        field,
        message: message.into(),
    }
}

/// Loads a manifest and every descriptor file it references. Descriptor
/// paths are resolved relative to the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_to_error(path, e))?;

    let headers = reader.headers().map_err(|e| csv_to_error(path, e))?.clone();
    if headers.iter().map(str::trim).ne(MANIFEST_HEADER.iter().copied()) {
        return Err(row_err(
            1,
            "header",
            format!("expected `{}`", MANIFEST_HEADER.join(",")),
        ));
    }

    let mut clips = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, record) in reader.deserialize::<ManifestRow>().enumerate() {
        // Data rows are numbered from 1, not counting the header.
        let row = i + 1;
        let record = record.map_err(|e| row_err(row, "row", e.to_string()))?;
        let clip = parse_row(base, row, record)?;
        if !seen.insert(clip.clip_id.clone()) {
            return Err(row_err(row, "clip_id", format!("duplicate clip id `{}`", clip.clip_id)));
        }
        clips.push(clip);
    }
    Ok(Dataset::new(clips))
}

fn parse_row(base: &Path, row: usize, r: ManifestRow) -> Result<ClipRecord> {
    let clip_id = r.clip_id.trim().to_string();
    if clip_id.is_empty() {
        return Err(row_err(row, "clip_id", "empty clip id"));
    }
    let sequence_id = r.sequence_id.trim().to_string();
    if sequence_id.is_empty() {
        return Err(row_err(row, "sequence_id", "empty sequence id"));
    }
    let behavior: Behavior = r
        .behavior
        .trim()
        .parse()
        .map_err(|e: Error| row_err(row, "behavior", e.to_string()))?;

    let emotion_annotations = r
        .emotions
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Emotion>())
        .collect::<Result<Vec<_>>>()
        .map_err(|e| row_err(row, "emotions", e.to_string()))?;
    let aggregated =
        majority_vote(&emotion_annotations).map_err(|_| row_err(row, "emotions", "no annotator labels"))?;

    let rel = r.descriptor_path.trim();
    if rel.is_empty() {
        return Err(row_err(row, "descriptor_path", "empty path"));
    }
    let desc_path = base.join(rel);
    let text = fs::read_to_string(&desc_path)
        .map_err(|e| row_err(row, "descriptor_path", format!("{}: {e}", desc_path.display())))?;
    let file: DescriptorFile = serde_json::from_str(&text)
        .map_err(|e| row_err(row, "descriptor_path", format!("{}: {e}", desc_path.display())))?;

    let mut channels = Vec::with_capacity(file.channels.len());
    for entry in file.channels {
        let kind: ChannelKind = entry
            .name
            .parse()
            .map_err(|e: Error| row_err(row, "descriptor_path", e.to_string()))?;
        if let Some(bad) = entry.vectors.iter().position(|v| v.len() != entry.dim) {
            return Err(row_err(
                row,
                "descriptor_path",
                format!(
                    "channel `{kind}` vector {bad} has length {}, declared dim {}",
                    entry.vectors[bad].len(),
                    entry.dim
                ),
            ));
        }
        channels.push(DescriptorChannel::new(kind, entry.dim, entry.vectors));
    }
    if channels.is_empty() && file.feature.is_none() {
        return Err(row_err(
            row,
            "descriptor_path",
            "neither descriptors nor an encoded feature",
        ));
    }

    Ok(ClipRecord {
        clip_id,
        sequence_id,
        behavior,
        emotion_annotations,
        emotion: EmotionVector::one_hot(aggregated),
        channels,
        feature: file.feature,
    })
}

fn csv_to_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `dir/manifest.csv` and `dir/descriptors/<clip_id>.json`.
/// Returns the manifest path.
pub fn save_manifest(ds: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let desc_dir = dir.join("descriptors");
    fs::create_dir_all(&desc_dir).map_err(|e| Error::io(&desc_dir, e))?;

    let manifest_path = dir.join("manifest.csv");
    let mut writer = csv::Writer::from_path(&manifest_path).map_err(|e| csv_to_error(&manifest_path, e))?;
    writer
        .write_record(MANIFEST_HEADER)
        .map_err(|e| csv_to_error(&manifest_path, e))?;

    for clip in &ds.clips {
        if clip.clip_id.contains(['/', '\\']) || clip.clip_id.starts_with('.') {
            return Err(Error::InvalidInput(format!(
                "clip id `{}` cannot be used as a file name",
                clip.clip_id
            )));
        }
        let rel = format!("descriptors/{}.json", clip.clip_id);
        let file = DescriptorFile {
            channels: clip
                .channels
                .iter()
                .map(|c| ChannelEntry {
                    name: c.kind.name().to_string(),
                    dim: c.dim,
                    vectors: c.descriptors.clone(),
                })
                .collect(),
            feature: clip.feature.clone(),
        };
        let path = dir.join(&rel);
        let out = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer(BufWriter::new(out), &file).map_err(|e| Error::json(&path, e))?;

        let emotions = clip
            .emotion_annotations
            .iter()
            .map(|e| e.name())
            .collect::<Vec<_>>()
            .join(";");
        writer
            .write_record([
                clip.clip_id.as_str(),
                clip.sequence_id.as_str(),
                clip.behavior.name(),
                emotions.as_str(),
                rel.as_str(),
            ])
            .map_err(|e| csv_to_error(&manifest_path, e))?;
    }
    writer.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}
