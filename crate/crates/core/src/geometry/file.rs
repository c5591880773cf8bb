//! JSON track files: `{name, half_width, closed, segments: [{kind, length, curvature}]}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GeometryError, SegmentKind, Track, TrackSegment};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TrackFileError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: GeometryError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TrackFileError {
    pub fn line(&self) -> Option<usize> {
        match self {
            TrackFileError::Syntax { line, .. } | TrackFileError::Invalid { line, .. } => Some(*line),
            TrackFileError::Io(_) => None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackDoc {
    name: String,
    half_width: f64,
    closed: bool,
    segments: Vec<SegmentDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentDoc {
    kind: SegmentKind,
    length: f64,
    #[serde(default)]
    curvature: f64,
}

/// 1-based line of the `nth` occurrence of `needle`, or of the end of input.
fn line_of_nth(text: &str, needle: &str, nth: usize) -> usize {
    let offset = text.match_indices(needle).nth(nth).map_or(text.len(), |(i, _)| i);
    text[..offset].matches('\n').count() + 1
}

impl<T: Scalar> Track<T> {
    pub fn from_json_str(text: &str) -> Result<Self, TrackFileError> {
        let doc: TrackDoc = serde_json::from_str(text).map_err(|e| TrackFileError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let segments = doc
            .segments
            .iter()
            .map(|s| TrackSegment { kind: s.kind, length: T::lit(s.length), curvature: T::lit(s.curvature) })
            .collect();
        Track::new(doc.name, T::lit(doc.half_width), doc.closed, segments).map_err(|source| {
            let line = match &source {
                GeometryError::InvalidSegment { index, .. } => line_of_nth(text, "\"kind\"", *index),
                GeometryError::InvalidHalfWidth(_) => line_of_nth(text, "\"half_width\"", 0),
                GeometryError::NotClosed { .. } => line_of_nth(text, "\"closed\"", 0),
                _ => line_of_nth(text, "\"segments\"", 0),
            };
            TrackFileError::Invalid { line, source }
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, TrackFileError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        let doc = TrackDoc {
            name: self.name.clone(),
            half_width: self.half_width.to_f64_lossy(),
            closed: self.closed,
            segments: self
                .segments
                .iter()
                .map(|s| SegmentDoc { kind: s.kind, length: s.length.to_f64_lossy(), curvature: s.curvature.to_f64_lossy() })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("track serializes")
    }
}
