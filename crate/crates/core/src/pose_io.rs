//! Recorded pose streams: CSV and JSON-lines codecs.
//!
//! CSV files carry a header `t_ms,mode,<Joint>_x,<Joint>_y,<Joint>_z,...`
//! over all 25 joints in canonical order; absent joints leave their three
//! columns empty. JSONL files hold one
//! `{"t_ms":..,"mode":..,"joints":{"Head":[x,y,z],..}}` object per line.
//! Both formats accept leading `#` comment lines, which are preserved.
//!
//! Frames read from a stream are tagged as sensor-frame data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::geometry::Vec3;
use crate::skeleton::{FrameTag, JointId, PoseFrame, SkeletonError, TrackingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseFormat {
    Csv,
    Jsonl,
}

impl PoseFormat {
    /// Picks the format from a file extension (`.csv`, `.jsonl`/`.ndjson`).
    pub fn from_path(path: &Path) -> Option<PoseFormat> {
        match path.extension()?.to_str()? {
            "csv" => Some(PoseFormat::Csv),
            "jsonl" | "ndjson" => Some(PoseFormat::Jsonl),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseStream {
    /// Leading comment lines, including the `#`.
    pub comments: Vec<String>,
    pub frames: Vec<PoseFrame>,
}

impl PoseStream {
    pub fn to_bytes(&self, format: PoseFormat) -> Vec<u8> {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str(c);
            out.push('\n');
        }
        match format {
            PoseFormat::Csv => {
                out.push_str(&csv_header());
                out.push('\n');
                for f in &self.frames {
                    write_csv_row(&mut out, f);
                }
            }
            PoseFormat::Jsonl => {
                for f in &self.frames {
                    write_jsonl_row(&mut out, f);
                }
            }
        }
        out.into_bytes()
    }
}

pub fn csv_header() -> String {
    let mut h = String::from("t_ms,mode");
    for j in JointId::ALL {
        let _ = write!(h, ",{j}_x,{j}_y,{j}_z");
    }
    h
}

fn write_csv_row(out: &mut String, f: &PoseFrame) {
    let _ = write!(out, "{},{}", f.timestamp_ms(), f.mode().as_str());
    for j in JointId::ALL {
        match f.joints().get(&j) {
            Some(p) => {
                let _ = write!(out, ",{},{},{}", p.x, p.y, p.z);
            }
            None => out.push_str(",,,"),
        }
    }
    out.push('\n');
}

fn json_number(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| "null".into())
}

fn write_jsonl_row(out: &mut String, f: &PoseFrame) {
    let _ = write!(
        out,
        "{{\"t_ms\":{},\"mode\":\"{}\",\"joints\":{{",
        f.timestamp_ms(),
        f.mode().as_str()
    );
    for (i, (j, p)) in f.joints().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "\"{j}\":[{},{},{}]",
            json_number(p.x),
            json_number(p.y),
            json_number(p.z)
        );
    }
    out.push_str("}}\n");
}

/// Parses a whole stream, validating each frame against its mode and
/// requiring strictly increasing timestamps.
pub fn parse_pose_stream(bytes: &[u8], format: PoseFormat) -> Result<PoseStream, SkeletonError> {
    let text = std::str::from_utf8(bytes).map_err(|e| SkeletonError::Parse {
        line: 1,
        message: format!("invalid UTF-8: {e}"),
    })?;
    let mut stream = PoseStream::default();
    let mut in_preamble = true;
    let mut header_seen = false;
    let mut last_t: Option<u64> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if in_preamble {
                stream.comments.push(line.to_string());
            }
            continue;
        }
        in_preamble = false;

        let frame = match format {
            PoseFormat::Csv => {
                if !header_seen {
                    check_csv_header(line, line_no)?;
                    header_seen = true;
                    continue;
                }
                parse_csv_row(line, line_no)?
            }
            PoseFormat::Jsonl => parse_jsonl_row(line, line_no)?,
        };
        if let Some(prev) = last_t {
            if frame.timestamp_ms() <= prev {
                return Err(SkeletonError::TimestampOrder { line: line_no });
            }
        }
        last_t = Some(frame.timestamp_ms());
        stream.frames.push(frame);
    }
    Ok(stream)
}

fn check_csv_header(line: &str, line_no: usize) -> Result<(), SkeletonError> {
    if line != csv_header() {
        return Err(SkeletonError::Parse {
            line: line_no,
            message: "header does not list t_ms, mode and the 25 joints in canonical order".into(),
        });
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> SkeletonError {
    SkeletonError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_number(s: &str, line: usize) -> Result<f64, SkeletonError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("malformed number `{s}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite number `{s}`")));
    }
    Ok(v)
}

fn with_line(e: SkeletonError, line: usize) -> SkeletonError {
    match e {
        SkeletonError::MissingJoint { joint, .. } => SkeletonError::MissingJoint {
            joint,
            line: Some(line),
        },
        SkeletonError::NonFinite(j) => parse_err(line, format!("non-finite position for {j}")),
        other => other,
    }
}

fn parse_csv_row(line: &str, line_no: usize) -> Result<PoseFrame, SkeletonError> {
    let cols: Vec<&str> = line.split(',').collect();
    let expected = 2 + 3 * JointId::ALL.len();
    if cols.len() != expected {
        return Err(parse_err(
            line_no,
            format!("expected {expected} columns, found {}", cols.len()),
        ));
    }
    let t: u64 = cols[0]
        .trim()
        .parse()
        .map_err(|_| parse_err(line_no, format!("malformed timestamp `{}`", cols[0])))?;
    let mode: TrackingMode = cols[1].trim().parse().map_err(|e: String| parse_err(line_no, e))?;

    let mut joints = BTreeMap::new();
    for (i, j) in JointId::ALL.iter().enumerate() {
        let c = &cols[2 + 3 * i..5 + 3 * i];
        let empty = c.iter().filter(|s| s.trim().is_empty()).count();
        match empty {
            3 => continue,
            0 => {
                let p = Vec3::new(
                    parse_number(c[0], line_no)?,
                    parse_number(c[1], line_no)?,
                    parse_number(c[2], line_no)?,
                );
                joints.insert(*j, p);
            }
            _ => return Err(parse_err(line_no, format!("partially empty columns for {j}"))),
        }
    }
    PoseFrame::new(t, mode, FrameTag::Sensor, joints).map_err(|e| with_line(e, line_no))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlRow {
    t_ms: u64,
    mode: TrackingMode,
    joints: BTreeMap<String, [f64; 3]>,
}

fn parse_jsonl_row(line: &str, line_no: usize) -> Result<PoseFrame, SkeletonError> {
    let row: JsonlRow = serde_json::from_str(line).map_err(|e| parse_err(line_no, e.to_string()))?;
    let mut joints = BTreeMap::new();
    for (name, p) in row.joints {
        let j: JointId = name.parse().map_err(|e: String| parse_err(line_no, e))?;
        joints.insert(j, Vec3::from(p));
    }
    PoseFrame::new(row.t_ms, row.mode, FrameTag::Sensor, joints).map_err(|e| with_line(e, line_no))
}
