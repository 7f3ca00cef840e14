//! The EVT text format.
//!
//! ```text
//! EVT1 <width> <height>
//! <t_us> <x> <y> <p>
//! ...
//! ```
//!
//! One record per line, `p` is `1` or `-1`, lines end with `\n`.

use std::fmt::Write as _;

use crate::event::{Event, EventStream, Polarity, SensorGeometry};

use super::IngestError;

pub const MAGIC: &str = "EVT1";

/// Parses an EVT document. Timestamps are re-based so the first event is at `t = 0`.
pub fn parse_event_file(bytes: &[u8]) -> Result<EventStream, IngestError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| IngestError::MalformedHeader(format!("not valid UTF-8: {e}")))?;
    let mut lines = text.split('\n');
    let header = lines
        .next()
        .ok_or_else(|| IngestError::MalformedHeader("empty input".into()))?;
    let geometry = parse_header(header.trim_end_matches('\r'))?;

    let mut events = Vec::new();
    let mut prev_t: Option<u64> = None;
    let mut offset = header.len() + 1;
    let mut lines = lines.enumerate().peekable();
    while let Some((i, raw)) = lines.next() {
        let line_no = i + 2;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() && lines.peek().is_none() {
            break;
        }
        let record_err = |reason: &str| IngestError::MalformedRecord {
            line: line_no,
            offset,
            reason: reason.to_string(),
        };
        let mut fields = line.split_ascii_whitespace();
        let mut next_int = |name: &str| -> Result<i64, IngestError> {
            fields
                .next()
                .ok_or_else(|| record_err(&format!("missing field `{name}`")))?
                .parse::<i64>()
                .map_err(|_| record_err(&format!("field `{name}` is not an integer")))
        };
        let t = next_int("t")?;
        let x = next_int("x")?;
        let y = next_int("y")?;
        let p = next_int("p")?;
        if fields.next().is_some() {
            return Err(record_err("trailing fields"));
        }
        if t < 0 || x < 0 || y < 0 {
            return Err(record_err("negative value"));
        }
        let p = Polarity::from_sign(p).ok_or_else(|| record_err("polarity must be 1 or -1"))?;
        let (t, x, y) = (t as u64, x as u64, y as u64);
        if x >= geometry.width as u64 || y >= geometry.height as u64 {
            return Err(IngestError::OutOfBoundsEvent {
                line: line_no,
                x,
                y,
            });
        }
        if let Some(pt) = prev_t {
            if t < pt {
                return Err(IngestError::NonMonotonicTimestamp {
                    line: line_no,
                    t,
                    previous: pt,
                });
            }
        }
        prev_t = Some(t);
        events.push(Event::new(x as u32, y as u32, t, p));
        offset += raw.len() + 1;
    }
    Ok(EventStream::new_unchecked(geometry, events).rebased())
}

fn parse_header(line: &str) -> Result<SensorGeometry, IngestError> {
    let fields: Vec<&str> = line.split_ascii_whitespace().collect();
    match fields.as_slice() {
        [magic, w, h] if *magic == MAGIC => {
            let w: u32 = w
                .parse()
                .map_err(|_| IngestError::MalformedHeader(format!("bad width `{w}`")))?;
            let h: u32 = h
                .parse()
                .map_err(|_| IngestError::MalformedHeader(format!("bad height `{h}`")))?;
            SensorGeometry::new(w, h).map_err(|e| IngestError::MalformedHeader(e.to_string()))
        }
        _ => Err(IngestError::MalformedHeader(format!(
            "expected `{MAGIC} <width> <height>`, got `{line}`"
        ))),
    }
}

/// Canonical EVT serialization of a stream.
pub fn write_event_file(stream: &EventStream) -> Vec<u8> {
    let g = stream.geometry();
    let mut out = String::with_capacity(16 + stream.len() * 16);
    let _ = writeln!(out, "{MAGIC} {} {}", g.width, g.height);
    for e in stream.events() {
        let _ = writeln!(out, "{} {} {} {}", e.t, e.x, e.y, e.p.sign());
    }
    out.into_bytes()
}
