//! Event-to-tensor encoders and event-image assembly.
//!
//! Three per-pixel encodings of a sub-stream are supported, all ignoring
//! polarity:
//!
//! * **ES** (event stacking): event count per pixel.
//! * **TS** (time surface): `exp((A(x) - t_ref) / tau_e)` where `A(x)` is the
//!   latest event time at `x`; `0` where no event occurred.
//! * **EF** (event frequency): `1 - 2 / (exp(n) + 1)` for `n` events at `x`.
//!
//! An event image holds one encoded channel per temporal sub-bin, normalized
//! to `[0, 1]` and resized to `output_size x output_size`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{partition_bins, Bin, BinSpec, EventStream, SensorGeometry, SubBin};
use crate::par::Exec;
use crate::raster;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("reference time {t_ref} precedes an event at {t}")]
    InvalidReference { t_ref: u64, t: u64 },
    #[error("expected {expected} sub-bins, got {got}")]
    ChannelCountMismatch { expected: usize, got: usize },
    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed event image: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ES")]
    Stacking,
    #[serde(rename = "TS")]
    TimeSurface,
    #[serde(rename = "EF")]
    Frequency,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Stacking, Method::TimeSurface, Method::Frequency];

    pub fn code(self) -> &'static str {
        match self {
            Method::Stacking => "ES",
            Method::TimeSurface => "TS",
            Method::Frequency => "EF",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Method {
    type Err = EncodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ES" => Ok(Method::Stacking),
            "TS" => Ok(Method::TimeSurface),
            "EF" => Ok(Method::Frequency),
            other => Err(EncodeError::InvalidConfig(format!(
                "unknown method `{other}`, expected ES, TS or EF"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub method: Method,
    /// Time-surface decay constant in µs.
    pub tau_e: f64,
    /// Event count mapped to 1.0 by ES normalization.
    pub saturation_cap: u32,
    pub output_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            method: Method::Frequency,
            tau_e: 30_000.0,
            saturation_cap: 8,
            output_size: 224,
        }
    }
}

impl EncoderConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<(), EncodeError> {
        if !(self.tau_e.is_finite() && self.tau_e > 0.0) {
            return Err(EncodeError::InvalidConfig("tau_e must be positive".into()));
        }
        if self.saturation_cap < 1 {
            return Err(EncodeError::InvalidConfig(
                "saturation_cap must be at least 1".into(),
            ));
        }
        if self.output_size == 0 {
            return Err(EncodeError::InvalidConfig(
                "output_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A single encoded plane at sensor resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub geometry: SensorGeometry,
    pub values: Vec<f64>,
}

impl Channel {
    pub fn zeros(geometry: SensorGeometry) -> Self {
        Self {
            geometry,
            values: vec![0.0; geometry.pixel_count()],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[self.geometry.index(x, y)]
    }
}

fn counts(sub: &EventStream) -> Vec<u32> {
    let g = sub.geometry();
    let mut n = vec![0u32; g.pixel_count()];
    for e in sub.events() {
        n[g.index(e.x, e.y)] += 1;
    }
    n
}

/// Per-pixel event count, polarity ignored.
pub fn encode_stacking(sub: &EventStream) -> Channel {
    Channel {
        geometry: sub.geometry(),
        values: counts(sub).into_iter().map(f64::from).collect(),
    }
}

/// Decayed surface of active events at `t_ref`.
pub fn encode_time_surface(sub: &EventStream, tau_e: f64, t_ref: u64) -> Result<Channel, EncodeError> {
    if let Some(t) = sub.last_time() {
        if t > t_ref {
            return Err(EncodeError::InvalidReference { t_ref, t });
        }
    }
    let g = sub.geometry();
    let mut latest: Vec<Option<u64>> = vec![None; g.pixel_count()];
    for e in sub.events() {
        let slot = &mut latest[g.index(e.x, e.y)];
        *slot = Some(slot.map_or(e.t, |t| t.max(e.t)));
    }
    let values = latest
        .into_iter()
        .map(|a| match a {
            Some(t) => time_surface_value(t, t_ref, tau_e),
            None => 0.0,
        })
        .collect();
    Ok(Channel { geometry: g, values })
}

#[inline]
pub fn time_surface_value(last: u64, t_ref: u64, tau_e: f64) -> f64 {
    (-((t_ref - last) as f64) / tau_e).exp()
}

#[inline]
pub fn frequency_value(n: u32) -> f64 {
    1.0 - 2.0 / ((n as f64).exp() + 1.0)
}

/// Saturating event-frequency activation per pixel.
pub fn encode_frequency(sub: &EventStream) -> Channel {
    Channel {
        geometry: sub.geometry(),
        values: counts(sub).into_iter().map(frequency_value).collect(),
    }
}

/// Encodes one window with `cfg.method` and maps the result into `[0, 1]`.
/// `t_ref` is the window end, used by the time surface.
pub fn encode_normalized(
    sub: &EventStream,
    t_ref: u64,
    cfg: &EncoderConfig,
) -> Result<Channel, EncodeError> {
    Ok(match cfg.method {
        Method::Stacking => {
            let mut c = encode_stacking(sub);
            let cap = cfg.saturation_cap as f64;
            c.values.iter_mut().for_each(|v| *v = v.min(cap) / cap);
            c
        }
        Method::TimeSurface => encode_time_surface(sub, cfg.tau_e, t_ref)?,
        Method::Frequency => encode_frequency(sub),
    })
}

/// Fixed-size multi-channel tensor for one bin, channel-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub method: Method,
    pub data: Vec<f64>,
}

impl EventImage {
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    fn from_channels(planes: Vec<Channel>, cfg: &EncoderConfig) -> Self {
        let size = cfg.output_size;
        let channels = planes.len();
        let mut data = Vec::with_capacity(channels * size * size);
        for p in planes {
            let (w, h) = (p.geometry.width as usize, p.geometry.height as usize);
            data.extend(raster::resize(&p.values, w, h, size, size));
        }
        Self {
            width: size,
            height: size,
            channels,
            method: cfg.method,
            data,
        }
    }
}

/// Encodes each sub-bin into one channel, in temporal order.
pub fn assemble_event_image(
    sub_bins: &[SubBin],
    expected_channels: usize,
    cfg: &EncoderConfig,
) -> Result<EventImage, EncodeError> {
    cfg.check()?;
    if sub_bins.len() != expected_channels {
        return Err(EncodeError::ChannelCountMismatch {
            expected: expected_channels,
            got: sub_bins.len(),
        });
    }
    let planes = sub_bins
        .iter()
        .map(|sb| encode_normalized(&sb.events, sb.end, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EventImage::from_channels(planes, cfg))
}

/// Encodes the whole bin as one plane and replicates it across `channels`
/// (the no-temporal-channels variant).
pub fn assemble_whole_bin(
    bin: &Bin,
    channels: usize,
    cfg: &EncoderConfig,
) -> Result<EventImage, EncodeError> {
    cfg.check()?;
    let plane = encode_normalized(&bin.merged(), bin.end, cfg)?;
    Ok(EventImage::from_channels(vec![plane; channels], cfg))
}

/// Encodes every complete bin of a stream.
pub fn encode_stream(
    stream: &EventStream,
    spec: BinSpec,
    cfg: &EncoderConfig,
    temporal_channels: bool,
    exec: Exec,
) -> Result<Vec<EventImage>, EncodeError> {
    let bins = partition_bins(stream, spec);
    exec.map(&bins, |b| {
        if temporal_channels {
            assemble_event_image(&b.sub_bins, spec.sub_bins, cfg)
        } else {
            assemble_whole_bin(b, spec.sub_bins, cfg)
        }
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventImageHeader {
    pub w: usize,
    pub h: usize,
    pub c: usize,
    pub method: Method,
}

/// Raw little-endian f32 blob (channel-major) plus its JSON sidecar.
pub fn write_event_image(img: &EventImage) -> (Vec<u8>, String) {
    let blob = img
        .data
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    let header = EventImageHeader {
        w: img.width,
        h: img.height,
        c: img.channels,
        method: img.method,
    };
    (blob, serde_json::to_string(&header).expect("header serializes"))
}

pub fn read_event_image(blob: &[u8], sidecar: &str) -> Result<EventImage, EncodeError> {
    let h: EventImageHeader =
        serde_json::from_str(sidecar).map_err(|e| EncodeError::Format(e.to_string()))?;
    let n = h.w * h.h * h.c;
    if blob.len() != n * 4 {
        return Err(EncodeError::Format(format!(
            "blob has {} bytes, header implies {}",
            blob.len(),
            n * 4
        )));
    }
    let data = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Ok(EventImage {
        width: h.w,
        height: h.h,
        channels: h.c,
        method: h.method,
        data,
    })
}
