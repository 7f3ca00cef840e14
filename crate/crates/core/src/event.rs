//! Event data model, validation, time windows and bin partitioning.
//!
//! Timestamps are integer microseconds on the stream's own clock. All time
//! intervals are half-open `[start, end)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EventError {
    #[error("invalid range: start {start} is after end {end}")]
    InvalidRange { start: u64, end: u64 },
    #[error("invalid sensor geometry {width}x{height}")]
    InvalidGeometry { width: u32, height: u32 },
    #[error("invalid bin spec: {0}")]
    InvalidBinSpec(String),
    #[error("invalid event stream: {0}")]
    InvalidStream(Violation),
}

/// Brightness change direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::On => Polarity::Off,
            Polarity::Off => Polarity::On,
        }
    }
}

/// A single brightness-change event at pixel `(x, y)` and time `t` (µs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u32,
    pub y: u32,
    pub t: u64,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: u32, y: u32, t: u64, p: Polarity) -> Self {
        Self { x, y, t, p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub width: u32,
    pub height: u32,
}

impl SensorGeometry {
    pub fn new(width: u32, height: u32) -> Result<Self, EventError> {
        if width == 0 || height == 0 {
            return Err(EventError::InvalidGeometry { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Row-major index of `(x, y)`.
    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

/// Which stream invariant an event breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    OutOfBounds,
    NonMonotonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            Rule::OutOfBounds => write!(f, "event {} lies outside the sensor", self.index),
            Rule::NonMonotonic => write!(f, "event {} has a decreasing timestamp", self.index),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Time-ordered events from one sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream, rejecting the first invariant violation.
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self, EventError> {
        let stream = Self { geometry, events };
        match stream.validate().violations.first() {
            Some(v) => Err(EventError::InvalidStream(*v)),
            None => Ok(stream),
        }
    }

    /// Builds a stream without checking invariants; see [`validate_stream`].
    pub fn new_unchecked(geometry: SensorGeometry, events: Vec<Event>) -> Self {
        Self { geometry, events }
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        Self {
            geometry,
            events: Vec::new(),
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_time(&self) -> Option<u64> {
        self.events.first().map(|e| e.t)
    }

    pub fn last_time(&self) -> Option<u64> {
        self.events.last().map(|e| e.t)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_stream(self)
    }

    /// Shifts all timestamps so the first event is at `t = 0`.
    pub fn rebased(mut self) -> Self {
        if let Some(t0) = self.first_time() {
            for e in &mut self.events {
                e.t -= t0;
            }
        }
        self
    }

    /// Same events with every polarity inverted.
    pub fn with_flipped_polarity(&self) -> Self {
        Self {
            geometry: self.geometry,
            events: self
                .events
                .iter()
                .map(|e| Event { p: e.p.flipped(), ..*e })
                .collect(),
        }
    }

    pub fn window(&self, t_start: u64, t_end: u64) -> Result<Self, EventError> {
        window(self, t_start, t_end)
    }
}

/// Checks every stream invariant and lists each violation.
pub fn validate_stream(stream: &EventStream) -> ValidationReport {
    let mut violations = Vec::new();
    let mut prev_t = None;
    for (index, e) in stream.events.iter().enumerate() {
        if !stream.geometry.contains(e.x, e.y) {
            violations.push(Violation {
                index,
                rule: Rule::OutOfBounds,
            });
        }
        if let Some(pt) = prev_t {
            if e.t < pt {
                violations.push(Violation {
                    index,
                    rule: Rule::NonMonotonic,
                });
            }
        }
        prev_t = Some(e.t);
    }
    ValidationReport { violations }
}

/// Events with `t_start <= t < t_end`, order preserved.
pub fn window(stream: &EventStream, t_start: u64, t_end: u64) -> Result<EventStream, EventError> {
    if t_start > t_end {
        return Err(EventError::InvalidRange {
            start: t_start,
            end: t_end,
        });
    }
    let lo = stream.events.partition_point(|e| e.t < t_start);
    let hi = stream.events.partition_point(|e| e.t < t_end).max(lo);
    Ok(EventStream {
        geometry: stream.geometry,
        events: stream.events[lo..hi].to_vec(),
    })
}

/// Bin length and number of temporal sub-bins per bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinSpec {
    pub bin_duration: u64,
    pub sub_bins: usize,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            bin_duration: 90_000,
            sub_bins: 3,
        }
    }
}

impl BinSpec {
    pub fn new(bin_duration: u64, sub_bins: usize) -> Result<Self, EventError> {
        let spec = Self {
            bin_duration,
            sub_bins,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<(), EventError> {
        if self.bin_duration == 0 {
            return Err(EventError::InvalidBinSpec("bin_duration must be positive".into()));
        }
        if self.sub_bins == 0 {
            return Err(EventError::InvalidBinSpec("sub_bins must be at least 1".into()));
        }
        if self.bin_duration % self.sub_bins as u64 != 0 {
            return Err(EventError::InvalidBinSpec(format!(
                "bin_duration {} is not divisible by sub_bins {}",
                self.bin_duration, self.sub_bins
            )));
        }
        Ok(())
    }

    pub fn sub_bin_duration(&self) -> u64 {
        self.bin_duration / self.sub_bins as u64
    }

    /// Number of complete bins covered by a stream whose last event is at `last_t`.
    pub fn full_bins(&self, last_t: Option<u64>) -> usize {
        match last_t {
            Some(t) => ((t + 1) / self.bin_duration) as usize,
            None => 0,
        }
    }
}

/// One temporal slice of a bin, with the window it was cut from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubBin {
    pub start: u64,
    pub end: u64,
    pub events: EventStream,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bin {
    pub index: usize,
    pub start: u64,
    pub end: u64,
    pub sub_bins: Vec<SubBin>,
}

impl Bin {
    /// All events of the bin as one stream.
    pub fn merged(&self) -> EventStream {
        let geometry = self
            .sub_bins
            .first()
            .map(|s| s.events.geometry())
            .expect("bin has at least one sub-bin");
        let events = self
            .sub_bins
            .iter()
            .flat_map(|s| s.events.events().iter().copied())
            .collect();
        EventStream::new_unchecked(geometry, events)
    }
}

/// Splits a stream into complete bins starting at `t = 0`, each cut into
/// equal consecutive sub-bins. A trailing partial bin is dropped.
pub fn partition_bins(stream: &EventStream, spec: BinSpec) -> Vec<Bin> {
    let n = spec.full_bins(stream.last_time());
    let sub = spec.sub_bin_duration();
    (0..n)
        .map(|k| {
            let start = k as u64 * spec.bin_duration;
            let sub_bins = (0..spec.sub_bins)
                .map(|j| {
                    let s = start + j as u64 * sub;
                    let e = s + sub;
                    SubBin {
                        start: s,
                        end: e,
                        events: window(stream, s, e).expect("ordered sub-bin bounds"),
                    }
                })
                .collect();
            Bin {
                index: k,
                start,
                end: start + spec.bin_duration,
                sub_bins,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom() -> SensorGeometry {
        SensorGeometry::new(32, 32).unwrap()
    }

    fn at(ts: &[u64]) -> EventStream {
        let events = ts
            .iter()
            .enumerate()
            .map(|(i, &t)| Event::new(i as u32 % 32, 0, t, Polarity::On))
            .collect();
        EventStream::new_unchecked(geom(), events)
    }

    #[test]
    fn validate_empty_is_ok() {
        assert!(validate_stream(&EventStream::empty(geom())).is_ok());
    }

    #[test]
    fn validate_reports_non_monotonic() {
        let r = validate_stream(&at(&[5, 3]));
        assert_eq!(
            r.violations,
            vec![Violation {
                index: 1,
                rule: Rule::NonMonotonic
            }]
        );
    }

    #[test]
    fn validate_reports_out_of_bounds() {
        let s = EventStream::new_unchecked(geom(), vec![Event::new(32, 0, 0, Polarity::Off)]);
        let r = validate_stream(&s);
        assert_eq!(r.violations[0].rule, Rule::OutOfBounds);
        assert!(EventStream::new(geom(), s.into_events()).is_err());
    }

    #[test]
    fn window_boundaries() {
        let s = at(&[10, 20, 30]);
        assert!(window(&s, 0, 0).unwrap().is_empty());
        let w = window(&s, 10, 30).unwrap();
        let ts: Vec<u64> = w.events().iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![10, 20]);
        assert_eq!(window(&s, 0, 31).unwrap(), s);
        assert!(matches!(
            window(&s, 5, 4),
            Err(EventError::InvalidRange { .. })
        ));
    }

    #[test]
    fn bin_spec_checks() {
        assert!(BinSpec::new(90_000, 3).is_ok());
        assert!(BinSpec::new(0, 3).is_err());
        assert!(BinSpec::new(90_000, 0).is_err());
        assert!(BinSpec::new(100, 3).is_err());
    }

    #[test]
    fn partition_one_bin_of_90ms() {
        let ts: Vec<u64> = (0..90).map(|ms| ms * 1000 + 999).collect();
        let bins = partition_bins(&at(&ts), BinSpec::default());
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].sub_bins.len(), 3);
        for (j, sb) in bins[0].sub_bins.iter().enumerate() {
            assert_eq!(sb.start, j as u64 * 30_000);
            assert_eq!(sb.end - sb.start, 30_000);
            assert_eq!(sb.events.len(), 30);
        }
    }

    #[test]
    fn partition_drops_trailing_partial_bin() {
        assert!(partition_bins(&EventStream::empty(geom()), BinSpec::default()).is_empty());
        let ts: Vec<u64> = (0..200).map(|ms| ms * 1000).collect();
        let bins = partition_bins(&at(&ts), BinSpec::default());
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[1].end, 180_000);
    }

    fn stream_strategy() -> impl Strategy<Value = EventStream> {
        prop::collection::vec((0u32..32, 0u32..32, 0u64..500, any::<bool>()), 0..300).prop_map(
            |raw| {
                let mut t = 0;
                let events = raw
                    .into_iter()
                    .map(|(x, y, dt, on)| {
                        t += dt;
                        Event::new(x, y, t, if on { Polarity::On } else { Polarity::Off })
                    })
                    .collect();
                EventStream::new(SensorGeometry::new(32, 32).unwrap(), events).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn partition_covers_span_exactly_once(s in stream_strategy(), dur in 1u64..40, subs in 1usize..5) {
            let spec = BinSpec::new(dur * subs as u64 * 100, subs).unwrap();
            let bins = partition_bins(&s, spec);
            let covered_end = bins.last().map(|b| b.end).unwrap_or(0);
            let expected: Vec<Event> = s.events().iter().copied().filter(|e| e.t < covered_end).collect();
            let got: Vec<Event> = bins
                .iter()
                .flat_map(|b| b.sub_bins.iter().flat_map(|sb| sb.events.events().iter().copied()))
                .collect();
            // ordered concatenation equals the covered prefix, so multiset equality also holds
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn window_is_idempotent(s in stream_strategy(), a in 0u64..60_000, len in 0u64..60_000) {
            let w = window(&s, a, a + len).unwrap();
            prop_assert_eq!(window(&w, a, a + len).unwrap(), w.clone());
            prop_assert!(w.validate().is_ok());
        }
    }
}
